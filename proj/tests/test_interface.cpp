#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <fstream>
#include <future>
#include <thread>

#include "helpers.hpp"
#include "oracles/rule_oracle.hpp"
#include "persono/backend.hpp"
#include "persono/evaluation.hpp"
#include "persono/service.hpp"

using namespace persono;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Specs for population users 01..n plus a mock backend config pointing at them.
fs::path write_mock_setup(const testing::TempDir& dir, std::size_t n, std::uint64_t seed) {
  const auto specs = dir / "specs";
  fs::create_directories(specs);
  for (const auto& u : preset_population(n, seed)) save_spec(u, specs / (u.user_id + ".json"));
  const auto cfg = dir / "mock.json";
  testing::spit(cfg, json{{"kind", "mock_rule"}, {"model_id", "mock-rule"}, {"user_spec_dir", "specs"}}.dump());
  return cfg;
}

struct ServiceFixture {
  testing::TempDir dir{"svc"};
  std::vector<SyntheticUserSpec> users = preset_population(3, 21);
  ServiceConfig config;
  std::unique_ptr<ClassificationService> service;
  std::atomic<int> backend_calls{0};
  bool backend_down = false;

  ServiceFixture() {
    fs::create_directories(dir / "store");
    config.profile_store = dir / "store";
    config.backend_config = dir / "unused.json";
    config.request_log = dir / "requests.jsonl";
    auto map = std::make_shared<std::map<std::string, std::shared_ptr<ChatBackend>>>();
    for (const auto& u : users) (*map)[u.user_id] = std::make_shared<MockRuleBackend>(u);
    BackendFactory factory = [this, map](const std::string& pid) -> std::shared_ptr<ChatBackend> {
      ++backend_calls;
      if (backend_down) throw BackendError("connection refused", 3);
      auto it = map->find(pid);
      if (it == map->end()) throw ConfigError("no backend for " + pid);
      return it->second;
    };
    service = std::make_unique<ClassificationService>(config, factory,
                                                      [] { return std::string("2026-05-01T00:00:00Z"); });
  }

  void seed_profile(const std::string& pid, const std::string& text = "Answers the supervisor at once.") {
    const auto r = service->handle("PUT", "/v1/profiles/" + pid,
                                   json{{"profile_text", text}, {"reported_pattern", "pattern for " + pid}}.dump());
    REQUIRE(r.status == 200);
  }
};

json request(const std::string& pid, const Notification& n, bool with_activity = true) {
  json j{{"participant_id", pid},
         {"sender_name", n.sender_name},
         {"sender_role", std::string(to_string(n.sender_role))},
         {"is_group", n.is_group},
         {"content", n.content}};
  if (with_activity && n.activity) j["activity"] = std::string(to_string(*n.activity));
  return j;
}

// Minimal chat-completion stand-in on a free port.
class FakeChatServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;
  explicit FakeChatServer(Handler h) {
    server_.Post("/v1/chat/completions", [this, h](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mutex_);
        bodies_.push_back(json::parse(req.body));
        auth_.push_back(req.get_header_value("Authorization"));
      }
      h(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeChatServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::vector<json> bodies() {
    std::lock_guard lock(mutex_);
    return bodies_;
  }
  std::vector<std::string> auth() {
    std::lock_guard lock(mutex_);
    return auth_;
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mutex_;
  std::vector<json> bodies_;
  std::vector<std::string> auth_;
};

std::string completion(const std::string& content) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

ModelBackendConfig remote_config(const std::string& url) {
  ModelBackendConfig c;
  c.kind = ModelBackendConfig::Kind::remote_chat;
  c.endpoint_url = url;
  c.model_id = "test-model";
  c.timeout_s = 5.0;
  c.max_retries = 3;
  c.retry_backoff_s = 0.0;
  return c;
}

}  // namespace

TEST_CASE("cli build-dataset prints the bundle summary and is reproducible") {
  testing::TempDir dir("cli");
  std::string out;
  const std::string args = "build-dataset --corpus " + q(testing::corpus_path()) + " --roster " +
                           q(testing::roster_path()) + " --participant 01 --seed 42 --out ";
  REQUIRE(testing::run_cli(args + q(dir / "a.json"), &out) == 0);
  CHECK(out.find("messages=198") != std::string::npos);
  CHECK(out.find("self_label=90") != std::string::npos);
  CHECK(out.find("interaction=108") != std::string::npos);
  CHECK(out.find("group=40") != std::string::npos);
  REQUIRE(testing::run_cli(args + q(dir / "b.json")) == 0);
  CHECK(testing::slurp(dir / "a.json") == testing::slurp(dir / "b.json"));
  CHECK(load_bundle(dir / "a.json") == load_bundle(dir / "b.json"));
}

TEST_CASE("cli simulate labels train and test") {
  testing::TempDir dir("cli");
  write_mock_setup(dir, 1, 4);
  REQUIRE(testing::run_cli("build-dataset --corpus " + q(testing::corpus_path()) + " --roster " +
                           q(testing::roster_path()) + " --participant 01 --seed 9 --out " + q(dir / "b.json")) == 0);
  std::string out;
  REQUIRE(testing::run_cli("simulate --bundle " + q(dir / "b.json") + " --user-spec " + q(dir / "specs/01.json") +
                               " --out " + q(dir / "l.json"),
                           &out) == 0);
  const auto b = load_bundle(dir / "l.json");
  CHECK(b.sr.size() == 90);
  CHECK(b.train.size() == 90);
  CHECK(b.test.size() == 18);
  CHECK(out.find("train=90 test=18") != std::string::npos);

  CHECK(testing::run_cli("simulate --bundle " + q(dir / "b.json") + " --user-spec " + q(dir / "missing.json") +
                         " --out " + q(dir / "x.json")) != 0);
  CHECK_FALSE(fs::exists(dir / "x.json"));
}

TEST_CASE("cli label sheet export/import round-trips 90 labels") {
  testing::TempDir dir("cli");
  write_mock_setup(dir, 1, 4);
  const auto spec = load_spec(dir / "specs/01.json");
  auto labelled = simulate_participant(testing::fresh_bundle("01", 12), spec, {});
  save_bundle(labelled, dir / "l.json");

  REQUIRE(testing::run_cli("export-labels --bundle " + q(dir / "l.json") + " --csv " + q(dir / "sheet.csv")) == 0);
  const auto sheet = testing::slurp(dir / "sheet.csv");
  CHECK(sheet.rfind("id,sender,content,urgent", 0) == 0);

  // Fill the sheet from the stored labels, then import into a label-free copy.
  std::vector<LabeledNotification> filled = labelled.sr;
  export_label_sheet(labelled.self_label_pool, dir / "filled.csv", filled);
  auto blank = labelled;
  blank.sr.clear();
  save_bundle(blank, dir / "blank.json");
  std::string out;
  REQUIRE(testing::run_cli("import-labels --bundle " + q(dir / "blank.json") + " --csv " + q(dir / "filled.csv") +
                               " --out " + q(dir / "back.json"),
                           &out) == 0);
  CHECK(out.find("imported 90 labels") != std::string::npos);
  const auto back = load_bundle(dir / "back.json");
  REQUIRE(back.sr.size() == 90);
  for (std::size_t i = 0; i < 90; ++i) {
    CHECK(back.sr[i].notification.id == labelled.sr[i].notification.id);
    CHECK(back.sr[i].label == labelled.sr[i].label);
  }
}

TEST_CASE("cli profile with the mock backend is deterministic") {
  testing::TempDir dir("cli");
  const auto cfg = write_mock_setup(dir, 1, 4);
  const auto spec = load_spec(dir / "specs/01.json");
  save_bundle(simulate_participant(testing::fresh_bundle("01", 12), spec, {}), dir / "l.json");
  const std::string args = "profile --bundle " + q(dir / "l.json") + " --dataset D2 --backend " + q(cfg);
  REQUIRE(testing::run_cli(args + " --out " + q(dir / "p1.json")) == 0);
  REQUIRE(testing::run_cli(args + " --out " + q(dir / "p2.json") + " --store " + q(dir.path())) == 0);
  const auto a = profile_from_json(json::parse(testing::slurp(dir / "p1.json")));
  const auto b = profile_from_json(json::parse(testing::slurp(dir / "p2.json")));
  CHECK(a.profile_text == b.profile_text);
  CHECK(a.profile_id == b.profile_id);
  CHECK(a.source_dataset == DatasetView::D2);
  CHECK(a.profile_text.find(spec.reported_pattern) != std::string::npos);
  const auto entry = ProfileStore(dir.path()).get("01");
  REQUIRE(entry);
  CHECK(entry->active_profile_id == a.profile_id);

  std::string out;
  CHECK(testing::run_cli("profile --bundle " + q(dir / "l.json") + " --dataset D3 --backend " + q(cfg) +
                             " --out " + q(dir / "p3.json"),
                         &out) != 0);
  CHECK(out.find("D3") != std::string::npos);
}

TEST_CASE("cli evaluate renders the 7-column table over mock backends") {
  testing::TempDir dir("cli");
  const auto cfg = write_mock_setup(dir, 3, 6);
  fs::create_directories(dir / "bundles");
  for (const auto& u : preset_population(3, 6)) {
    save_bundle(simulate_participant(testing::fresh_bundle(u.user_id, derive_seed(6, {u.user_id})), u, {}),
                dir / "bundles" / (u.user_id + ".json"));
  }
  std::string out;
  REQUIRE(testing::run_cli("evaluate --bundles " + q(dir / "bundles") + " --backend " + q(cfg) + " --report " +
                               q(dir / "report.json") + " --threads 2",
                           &out) == 0);
  const auto report = json::parse(testing::slurp(dir / "report.json"));
  CHECK(report["configurations"].size() == 7);
  CHECK(report["participants"].size() == 3);
  CHECK(report["cells"].size() == 21);
  const auto table = testing::slurp(dir / "report.json.txt");
  CHECK(table == out);
  for (const char* col : {"Base", "M1", "M2", "SR", "D1", "D2"}) CHECK(table.find(col) != std::string::npos);

  CHECK(testing::run_cli("evaluate --bundles " + q(dir / "bundles") + " --backend " + q(cfg) + " --report " +
                             q(dir / "r2.json") + " --configs M2-D3",
                         &out) == 2);
  CHECK(out.find("M2-D3") != std::string::npos);
  CHECK(out.find(allowed_configuration_tokens()) != std::string::npos);
}

TEST_CASE("cli reference prints the published table") {
  std::string out;
  REQUIRE(testing::run_cli("reference", &out) == 0);
  CHECK(out == render_reference_table());
}

TEST_CASE("service health is up before any profile exists") {
  ServiceFixture f;
  const auto r = f.service->handle("GET", "/healthz", "");
  CHECK(r.status == 200);
  CHECK(r.body["status"] == "ok");
  CHECK(f.service->handle("POST", "/healthz", "").status == 405);
  CHECK(f.service->handle("GET", "/nope", "").status == 404);
}

TEST_CASE("service classify agrees with the synthetic user's rule") {
  ServiceFixture f;
  for (const auto& u : f.users) f.seed_profile(u.user_id);
  const auto b = testing::fresh_bundle("01", 5);
  for (std::size_t i = 0; i < f.users.size(); ++i) {
    const auto& u = f.users[i];
    const auto spec_json = spec_to_json(u);
    for (std::size_t j = 0; j < 36; ++j) {
      const auto& n = b.interaction_pool[j];
      const auto r = f.service->classify(request(u.user_id, n).dump());
      REQUIRE(r.status == 200);
      const auto want = oracle::expected_label(spec_json, n);
      CHECK(r.body["final"] == std::string(to_string(want)));
      CHECK(r.body["votes"].size() == 5);
      CHECK(r.body["urgent_votes"] == (want == UrgencyLabel::urgent ? 5 : 0));
      CHECK(r.body["score"] == (want == UrgencyLabel::urgent ? 1.0 : 0.0));
      CHECK(r.body["method"] == "M2");
      CHECK(r.body["variant"] == "P2");
      CHECK(r.body["activity_fallback"] == false);
      CHECK(r.body["parse_failures"] == 0);
      CHECK(r.body["profile_id"].is_string());
      CHECK(r.body["latency_ms"].get<double>() >= 0.0);
    }
  }
}

TEST_CASE("service falls back to P1 when activity is absent") {
  ServiceFixture f;
  f.seed_profile("01");
  const auto b = testing::fresh_bundle("01", 5);
  for (std::size_t j = 0; j < 20; ++j) {
    auto n = b.interaction_pool[j];
    const auto r = f.service->classify(request("01", n, false).dump());
    REQUIRE(r.status == 200);
    CHECK(r.body["variant"] == "P1");
    CHECK(r.body["activity_fallback"] == true);
    n.activity.reset();
    n.session_index.reset();
    n.offset_s.reset();
    CHECK(r.body["final"] == std::string(to_string(oracle::expected_label(spec_to_json(f.users[0]), n))));
  }
  auto explicit_p2 = request("01", b.interaction_pool[0], false);
  explicit_p2["variant"] = "P2";
  const auto r = f.service->classify(explicit_p2.dump());
  CHECK(r.status == 400);
  CHECK(r.body["field"] == "activity");
}

TEST_CASE("service M1 and Base methods") {
  ServiceFixture f;
  f.seed_profile("02");
  const auto n = testing::fresh_bundle("02", 5).interaction_pool[3];
  auto req = request("02", n);
  req["method"] = "M1";
  auto r = f.service->classify(req.dump());
  REQUIRE(r.status == 200);
  CHECK(r.body["method"] == "M1");
  CHECK(r.body["profile_id"].is_null());
  req["method"] = "Base";
  req["variant"] = "P1";
  r = f.service->classify(req.dump());
  REQUIRE(r.status == 200);
  CHECK(r.body["variant"] == "P1");
}

TEST_CASE("service rejects malformed requests with the offending field") {
  ServiceFixture f;
  f.seed_profile("01");
  const auto n = testing::fresh_bundle("01", 5).interaction_pool[0];
  const auto good = request("01", n);
  struct Case {
    std::function<void(json&)> edit;
    std::string field;
  };
  const std::vector<Case> cases{
      {[](json& j) { j.erase("participant_id"); }, "participant_id"},
      {[](json& j) { j["participant_id"] = "../etc"; }, "participant_id"},
      {[](json& j) { j.erase("sender_name"); }, "sender_name"},
      {[](json& j) { j["sender_name"] = ""; }, "sender_name"},
      {[](json& j) { j["sender_role"] = "boss"; }, "sender_role"},
      {[](json& j) { j["is_group"] = "no"; }, "is_group"},
      {[](json& j) { j["is_group"] = !j["is_group"].get<bool>(); }, "is_group"},
      {[](json& j) { j.erase("content"); }, "content"},
      {[](json& j) { j["content"] = 7; }, "content"},
      {[](json& j) { j["activity"] = "juggling"; }, "activity"},
      {[](json& j) { j["method"] = "M3"; }, "method"},
      {[](json& j) { j["variant"] = "P9"; }, "variant"},
  };
  for (const auto& c : cases) {
    auto body = good;
    c.edit(body);
    const auto r = f.service->classify(body.dump());
    CHECK(r.status == 400);
    CHECK(r.body["field"] == c.field);
    CHECK(r.body["error"].is_string());
  }
  for (const char* raw : {"{", "[]", "", "null"}) {
    const auto r = f.service->classify(raw);
    CHECK(r.status == 400);
    CHECK(r.body["field"] == "body");
  }
  CHECK(f.backend_calls == 0);
}

TEST_CASE("service 404s and 502s") {
  ServiceFixture f;
  const auto n = testing::fresh_bundle("01", 5).interaction_pool[0];
  auto r = f.service->classify(request("01", n).dump());
  CHECK(r.status == 404);
  CHECK(f.service->get_profiles("01").status == 404);

  // Pattern only: M1 works, M2 has no active profile.
  REQUIRE(f.service->put_profile("01", json{{"reported_pattern", "I reply to my supervisor."}}.dump()).status == 200);
  CHECK(f.service->classify(request("01", n).dump()).status == 404);
  auto m1 = request("01", n);
  m1["method"] = "M1";
  CHECK(f.service->classify(m1.dump()).status == 200);

  f.seed_profile("01");
  f.backend_down = true;
  r = f.service->classify(request("01", n).dump());
  CHECK(r.status == 502);
  CHECK(r.body["attempts"] == 3);
}

TEST_CASE("service profile PUT/GET round-trips text exactly") {
  ServiceFixture f;
  const std::string text = "Line one, with \"quotes\" and ünïcode.\n\tIndented line two.\n";
  auto r = f.service->handle("PUT", "/v1/profiles/07",
                             json{{"profile_text", text}, {"source_dataset", "D1"}}.dump());
  REQUIRE(r.status == 200);
  r = f.service->handle("GET", "/v1/profiles/07", "");
  REQUIRE(r.status == 200);
  CHECK(r.body["participant_id"] == "07");
  REQUIRE(r.body["profiles"].size() == 1);
  CHECK(r.body["profiles"][0]["profile_text"] == text);
  CHECK(r.body["profiles"][0]["source_dataset"] == "D1");
  CHECK(r.body["active_profile_id"] == r.body["profiles"][0]["profile_id"]);

  // A second, non-activated profile leaves the first one active.
  r = f.service->put_profile("07", json{{"profile_text", "other"}, {"activate", false}}.dump());
  REQUIRE(r.status == 200);
  CHECK(r.body["profiles"].size() == 2);
  CHECK(r.body["active_profile_id"] == r.body["profiles"][0]["profile_id"]);

  CHECK(f.service->put_profile("07", json{{"profile_text", "  "}}.dump()).body["field"] == "profile_text");
  CHECK(f.service->put_profile("07", json::object().dump()).status == 400);
  CHECK(f.service->put_profile("07", json{{"profile_text", "x"}, {"source_dataset", "D7"}}.dump()).body["field"] ==
        "source_dataset");
  CHECK(f.service->put_profile("a/b", json{{"profile_text", "x"}}.dump()).status == 400);

  const auto entry = ProfileStore(f.config.profile_store).get("07");
  REQUIRE(entry);
  CHECK(entry->profiles[0].profile_text == text);
}

TEST_CASE("service writes one JSON line per request") {
  ServiceFixture f;
  f.service->health();
  f.service->handle("GET", "/v1/profiles/01", "");
  f.service->handle("POST", "/v1/classify", "{");
  std::ifstream in(*f.config.request_log);
  std::vector<json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(json::parse(line));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0]["status"] == 404);
  CHECK(lines[1]["status"] == 400);
  CHECK(lines[1]["path"] == "/v1/classify");
  CHECK(lines[0]["seq"].get<int>() < lines[1]["seq"].get<int>());
}

TEST_CASE("service config validation") {
  testing::TempDir dir("cfg");
  CHECK_THROWS_AS(service_config_from_json(json{{"profile_store", "s"}}, dir.path()), ConfigError);
  fs::create_directories(dir / "store");
  const auto c = service_config_from_json(
      json{{"backend_config", "b.json"}, {"profile_store", "store"}, {"port", 0}, {"default_variant", "P1"}}, dir.path());
  CHECK(c.profile_store == dir / "store");
  CHECK(c.default_variant == PromptVariant::P1);
  CHECK_NOTHROW(validate(c));
  auto bad = c;
  bad.profile_store = dir / "missing";
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.ensemble_size = 4;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("service answers over a real socket") {
  ServiceFixture f;
  f.seed_profile("01");
  auto cfg = f.service->config();
  cfg.port = 0;
  ClassificationService svc(cfg, [&](const std::string&) -> std::shared_ptr<ChatBackend> {
    return std::make_shared<MockRuleBackend>(f.users[0]);
  });
  std::atomic<bool> stop{false};
  std::promise<int> ready;
  std::thread server([&] { serve(svc, [&](int port) { ready.set_value(port); }, &stop); });
  const int port = ready.get_future().get();

  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/healthz");
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto n = testing::fresh_bundle("01", 5).interaction_pool[1];
  res = client.Post("/v1/classify", request("01", n).dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto body = json::parse(res->body);
  CHECK(body["final"] == std::string(to_string(oracle::expected_label(spec_to_json(f.users[0]), n))));
  res = client.Put("/v1/profiles/02", json{{"profile_text", "abc"}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  res = client.Post("/v1/classify", "{", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  stop = true;
  server.join();
}

TEST_CASE("remote backend sends the chat request and passes temperature through") {
  FakeChatServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(completion("reasoning\nVERDICT: URGENT"), "application/json");
  });
  auto cfg = remote_config(server.url());
  cfg.api_key_env = "PERSONO_TEST_KEY";
  ::setenv("PERSONO_TEST_KEY", "sekrit", 1);
  RemoteChatBackend backend(cfg);
  CHECK(backend.complete("hello", 0.0) == "reasoning\nVERDICT: URGENT");
  CHECK(backend.complete("again", 1.0).find("URGENT") != std::string::npos);
  ::unsetenv("PERSONO_TEST_KEY");
  const auto bodies = server.bodies();
  REQUIRE(bodies.size() == 2);
  CHECK(bodies[0]["model"] == "test-model");
  CHECK(bodies[0]["temperature"] == 0.0);
  CHECK(bodies[1]["temperature"] == 1.0);
  CHECK(bodies[0]["messages"].size() == 1);
  CHECK(bodies[0]["messages"][0]["role"] == "user");
  CHECK(bodies[0]["messages"][0]["content"] == "hello");
  CHECK(server.auth()[0] == "Bearer sekrit");
}

TEST_CASE("remote backend retries server errors and gives up on client errors") {
  std::atomic<int> hits{0};
  FakeChatServer server([&](const httplib::Request&, httplib::Response& res) {
    if (++hits < 3) {
      res.status = 500;
      res.set_content("boom", "text/plain");
    } else {
      res.set_content(completion("VERDICT: NON-URGENT"), "application/json");
    }
  });
  RemoteChatBackend backend(remote_config(server.url()));
  CHECK(backend.complete("x", 1.0) == "VERDICT: NON-URGENT");
  CHECK(hits == 3);

  FakeChatServer refusing([](const httplib::Request&, httplib::Response& res) {
    res.status = 401;
    res.set_content("no", "text/plain");
  });
  RemoteChatBackend b2(remote_config(refusing.url()));
  try {
    b2.complete("x", 1.0);
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(e.attempts() == 1);
  }
  CHECK(refusing.bodies().size() == 1);

  FakeChatServer garbled([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices":[]})", "application/json");
  });
  RemoteChatBackend b3(remote_config(garbled.url()));
  CHECK_THROWS_AS(b3.complete("x", 1.0), ProtocolError);
}

TEST_CASE("remote backend reports an unreachable endpoint after max_retries") {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto cfg = remote_config("http://127.0.0.1:" + std::to_string(port) + "/v1");
  cfg.timeout_s = 1.0;
  RemoteChatBackend backend(cfg);
  try {
    backend.complete("x", 1.0);
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    CHECK(e.attempts() == 3);
  }
}

TEST_CASE("backend config parsing") {
  testing::TempDir dir("cfg");
  const auto c = backend_config_from_json(json{{"kind", "mock_rule"}, {"user_spec_dir", "specs"}}, dir.path());
  CHECK(c.user_spec_dir == dir / "specs");
  CHECK_THROWS_AS(backend_config_from_json(json{{"kind", "mock_rule"}}), ConfigError);
  CHECK_THROWS_AS(backend_config_from_json(json{{"kind", "remote_chat"}, {"model_id", "m"}}), ConfigError);
  CHECK_THROWS_AS(backend_config_from_json(json{{"kind", "telepathy"}}), ConfigError);
  CHECK_THROWS_AS(RemoteChatBackend(remote_config("ftp://x")), ConfigError);
  const auto r = backend_config_from_json(
      json{{"kind", "remote_chat"}, {"model_id", "m"}, {"endpoint_url", "http://h/v1"}, {"max_retries", 2}});
  CHECK(r.max_retries == 2);
  CHECK(r.temperature == 1.0);
}
