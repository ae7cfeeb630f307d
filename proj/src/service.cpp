#include "persono/service.hpp"

#include <httplib.h>

#include <chrono>
#include <fstream>
#include <thread>

#include "persono/dataset.hpp"
#include "persono/random.hpp"

namespace persono {

using nlohmann::json;
namespace fs = std::filesystem;

void validate(const ServiceConfig& c) {
  if (c.host.empty()) throw ConfigError("service: host must be set");
  if (c.port < 0 || c.port > 65535) throw ConfigError("service: port out of range: " + std::to_string(c.port));
  if (c.ensemble_size < 1 || c.ensemble_size % 2 == 0) {
    throw ConfigError("service: ensemble_size must be odd and positive");
  }
  if (c.threads == 0) throw ConfigError("service: threads must be positive");
  if (c.profile_store.empty()) throw ConfigError("service: profile_store must be set");
  std::error_code ec;
  if (!fs::is_directory(c.profile_store, ec)) {
    throw ConfigError("service: profile store " + c.profile_store.string() + " is not a directory");
  }
  const auto probe = c.profile_store / ".write-probe";
  {
    std::ofstream out(probe);
    if (!out) throw ConfigError("service: profile store " + c.profile_store.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

ServiceConfig service_config_from_json(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("service config must be a JSON object");
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  ServiceConfig c;
  try {
    c.host = doc.value("host", c.host);
    c.port = doc.value("port", c.port);
    if (!doc.contains("backend_config")) throw ConfigError("service config: backend_config is required");
    c.backend_config = resolve(doc.at("backend_config").get<std::string>());
    if (!doc.contains("profile_store")) throw ConfigError("service config: profile_store is required");
    c.profile_store = resolve(doc.at("profile_store").get<std::string>());
    if (doc.contains("default_method")) c.default_method = parse_method(doc.at("default_method").get<std::string>());
    if (doc.contains("default_variant")) {
      c.default_variant = parse_variant(doc.at("default_variant").get<std::string>());
    }
    if (doc.contains("request_log") && !doc.at("request_log").is_null()) {
      c.request_log = resolve(doc.at("request_log").get<std::string>());
    }
    c.ensemble_size = doc.value("ensemble_size", c.ensemble_size);
    c.threads = doc.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("service config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("service config: ") + e.what());
  }
  return c;
}

ServiceConfig load_service_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const DatasetError& e) {
    throw ConfigError(e.what());
  }
  return service_config_from_json(doc, path.parent_path());
}

const UserProfile* StoreEntry::active() const {
  if (!active_profile_id) return nullptr;
  for (const auto& p : profiles) {
    if (p.profile_id == *active_profile_id) return &p;
  }
  return nullptr;
}

json entry_to_json(const StoreEntry& e) {
  json profiles = json::array();
  for (const auto& p : e.profiles) profiles.push_back(profile_to_json(p));
  return {{"participant_id", e.participant_id},
          {"reported_pattern", e.reported_pattern ? json(*e.reported_pattern) : json(nullptr)},
          {"active_profile_id", e.active_profile_id ? json(*e.active_profile_id) : json(nullptr)},
          {"profiles", profiles}};
}

StoreEntry entry_from_json(const json& doc) {
  StoreEntry e;
  try {
    e.participant_id = doc.at("participant_id").get<std::string>();
    if (doc.contains("reported_pattern") && !doc.at("reported_pattern").is_null()) {
      e.reported_pattern = doc.at("reported_pattern").get<std::string>();
    }
    if (doc.contains("active_profile_id") && !doc.at("active_profile_id").is_null()) {
      e.active_profile_id = doc.at("active_profile_id").get<std::string>();
    }
    for (const auto& p : doc.at("profiles")) e.profiles.push_back(profile_from_json(p));
  } catch (const json::exception& ex) {
    throw DatasetError(std::string("profile store entry: ") + ex.what());
  }
  if (e.active_profile_id && !e.active()) {
    throw DatasetError("profile store entry: active profile " + *e.active_profile_id + " not stored");
  }
  return e;
}

bool valid_participant_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

ProfileStore::ProfileStore(fs::path dir) : dir_(std::move(dir)) {}

fs::path ProfileStore::path_for(const std::string& participant_id) const {
  if (!valid_participant_id(participant_id)) {
    throw ConfigError("invalid participant id '" + participant_id + "'");
  }
  return dir_ / (participant_id + ".json");
}

std::optional<StoreEntry> ProfileStore::get(const std::string& participant_id) const {
  const auto path = path_for(participant_id);
  std::lock_guard lock(mutex_);
  if (!fs::exists(path)) return std::nullopt;
  try {
    return entry_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
}

StoreEntry ProfileStore::load_or_new(const std::string& participant_id) const {
  const auto path = path_for(participant_id);
  if (!fs::exists(path)) {
    StoreEntry e;
    e.participant_id = participant_id;
    return e;
  }
  try {
    return entry_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
}

void ProfileStore::write(const StoreEntry& entry) const {
  write_file_atomic(path_for(entry.participant_id), entry_to_json(entry).dump(2) + "\n");
}

StoreEntry ProfileStore::add_profile(const UserProfile& profile, bool activate) {
  validate(profile);
  std::lock_guard lock(mutex_);
  auto entry = load_or_new(profile.participant_id);
  bool replaced = false;
  for (auto& p : entry.profiles) {
    if (p.profile_id == profile.profile_id) {
      p = profile;
      replaced = true;
    }
  }
  if (!replaced) entry.profiles.push_back(profile);
  if (activate) entry.active_profile_id = profile.profile_id;
  write(entry);
  return entry;
}

StoreEntry ProfileStore::set_reported_pattern(const std::string& participant_id, const std::string& pattern) {
  std::lock_guard lock(mutex_);
  auto entry = load_or_new(participant_id);
  entry.reported_pattern = pattern;
  write(entry);
  return entry;
}

namespace {

HttpReply error_reply(int status, const std::string& message, std::optional<std::string> field = {}) {
  json body = {{"error", message}};
  if (field) body["field"] = *field;
  return {status, body};
}

// Schema violations carry the offending field name.
struct FieldError {
  std::string field;
  std::string message;
};

const json& require(const json& body, const char* field, json::value_t type, const char* type_name) {
  if (!body.contains(field)) throw FieldError{field, std::string("missing required field '") + field + "'"};
  const auto& v = body.at(field);
  if (v.type() != type) {
    throw FieldError{field, std::string("field '") + field + "' must be a " + type_name};
  }
  return v;
}

std::optional<std::string> optional_string(const json& body, const char* field) {
  if (!body.contains(field) || body.at(field).is_null()) return std::nullopt;
  if (!body.at(field).is_string()) throw FieldError{field, std::string("field '") + field + "' must be a string"};
  return body.at(field).get<std::string>();
}

template <class T, class Parse>
T parse_field(const std::string& field, const std::string& value, Parse parse) {
  try {
    return parse(value);
  } catch (const std::invalid_argument& e) {
    throw FieldError{field, "field '" + field + "': " + e.what()};
  }
}

json parse_body(const std::string& body) {
  try {
    auto doc = json::parse(body);
    if (!doc.is_object()) throw FieldError{"body", "request body must be a JSON object"};
    return doc;
  } catch (const json::parse_error& e) {
    throw FieldError{"body", std::string("malformed JSON: ") + e.what()};
  }
}

}  // namespace

ClassificationService::ClassificationService(ServiceConfig config, BackendFactory backends,
                                             std::function<std::string()> clock)
    : config_(std::move(config)), backends_(std::move(backends)), clock_(std::move(clock)),
      store_(config_.profile_store) {
  validate(config_);
}

HttpReply ClassificationService::health() const { return {200, {{"status", "ok"}}}; }

HttpReply ClassificationService::classify(const std::string& raw) {
  const auto started = std::chrono::steady_clock::now();
  json body;
  Notification n;
  std::string participant;
  Method method = config_.default_method;
  PromptVariant variant = config_.default_variant;
  bool activity_fallback = false;
  try {
    body = parse_body(raw);
    participant = require(body, "participant_id", json::value_t::string, "string").get<std::string>();
    if (!valid_participant_id(participant)) {
      throw FieldError{"participant_id", "field 'participant_id' must match [A-Za-z0-9_-]{1,64}"};
    }
    n.sender_name = require(body, "sender_name", json::value_t::string, "string").get<std::string>();
    n.sender_role = parse_field<SenderRole>(
        "sender_role", require(body, "sender_role", json::value_t::string, "string").get<std::string>(),
        [](const std::string& s) { return parse_sender_role(s); });
    n.is_group = require(body, "is_group", json::value_t::boolean, "boolean").get<bool>();
    n.content = require(body, "content", json::value_t::string, "string").get<std::string>();
    if (auto a = optional_string(body, "activity")) {
      n.activity = parse_field<Activity>("activity", *a, [](const std::string& s) { return parse_activity(s); });
    }
    if (auto m = optional_string(body, "method")) {
      method = parse_field<Method>("method", *m, [](const std::string& s) { return parse_method(s); });
    }
    const auto explicit_variant = optional_string(body, "variant");
    if (explicit_variant) {
      variant = parse_field<PromptVariant>("variant", *explicit_variant,
                                           [](const std::string& s) { return parse_variant(s); });
    }
    if (variant == PromptVariant::P2 && !n.activity) {
      if (explicit_variant) throw FieldError{"activity", "variant P2 requires field 'activity'"};
      variant = PromptVariant::P1;
      activity_fallback = true;
    }
    if (n.is_group != (n.sender_role == SenderRole::group)) {
      throw FieldError{"is_group", "field 'is_group' must be true exactly when sender_role is group"};
    }
    if (n.sender_name.empty()) throw FieldError{"sender_name", "field 'sender_name' must not be empty"};
  } catch (const FieldError& e) {
    auto reply = error_reply(400, e.message, e.field);
    log_request("POST", "/v1/classify", reply.status, participant, 0.0);
    return reply;
  }
  n.id = "req-" + hex64(fnv1a64(raw)).substr(0, 12);

  auto finish = [&](HttpReply reply) {
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    if (reply.status == 200) reply.body["latency_ms"] = ms;
    log_request("POST", "/v1/classify", reply.status, participant, ms);
    return reply;
  };

  std::optional<StoreEntry> entry;
  try {
    entry = store_.get(participant);
  } catch (const Error& e) {
    return finish(error_reply(500, e.what()));
  }
  if (!entry) return finish(error_reply(404, "unknown participant '" + participant + "'", "participant_id"));

  ClassifyContext context;
  if (method == Method::M1) {
    if (!entry->reported_pattern) {
      return finish(error_reply(404, "participant '" + participant + "' has no reported pattern"));
    }
    context.user_pattern = entry->reported_pattern;
  }
  if (method == Method::M2) {
    context.profile = entry->active();
    if (!context.profile) {
      return finish(error_reply(404, "participant '" + participant + "' has no active profile"));
    }
    context.dataset = context.profile->source_dataset;
  }

  ClassifyOptions options;
  options.ensemble_size = config_.ensemble_size;
  ClassificationResult result;
  try {
    auto backend = backends_(participant);
    result = persono::classify(method, *backend, variant, n, context, options);
  } catch (const ConfigError& e) {
    return finish(error_reply(404, e.what(), "participant_id"));
  } catch (const BackendError& e) {
    auto reply = error_reply(502, e.what());
    reply.body["attempts"] = e.attempts();
    return finish(reply);
  }

  json votes = json::array();
  int parse_failures = 0;
  for (const auto& v : result.verdicts) {
    votes.push_back(std::string(to_string(v.label)));
    if (!v.parse_ok) ++parse_failures;
  }
  HttpReply reply;
  reply.body = {{"participant_id", participant},
                {"final", std::string(to_string(result.final_label))},
                {"score", result.score},
                {"votes", votes},
                {"urgent_votes", result.urgent_votes},
                {"method", std::string(to_string(method))},
                {"variant", std::string(to_string(variant))},
                {"activity_fallback", activity_fallback},
                {"parse_failures", parse_failures},
                {"profile_id", result.profile_id ? json(*result.profile_id) : json(nullptr)}};
  return finish(reply);
}

HttpReply ClassificationService::get_profiles(const std::string& participant_id) {
  HttpReply reply;
  if (!valid_participant_id(participant_id)) {
    reply = error_reply(400, "invalid participant id", "participant_id");
  } else {
    try {
      auto entry = store_.get(participant_id);
      reply = entry ? HttpReply{200, entry_to_json(*entry)}
                    : error_reply(404, "unknown participant '" + participant_id + "'", "participant_id");
    } catch (const Error& e) {
      reply = error_reply(500, e.what());
    }
  }
  log_request("GET", "/v1/profiles/" + participant_id, reply.status, participant_id, 0.0);
  return reply;
}

HttpReply ClassificationService::put_profile(const std::string& participant_id, const std::string& raw) {
  HttpReply reply;
  try {
    if (!valid_participant_id(participant_id)) throw FieldError{"participant_id", "invalid participant id"};
    const auto body = parse_body(raw);
    const auto text = optional_string(body, "profile_text");
    const auto pattern = optional_string(body, "reported_pattern");
    if (!text && !pattern) {
      throw FieldError{"profile_text", "missing required field 'profile_text'"};
    }
    if (text && text->find_first_not_of(" \t\r\n") == std::string::npos) {
      throw FieldError{"profile_text", "field 'profile_text' must not be blank"};
    }
    DatasetView dataset = DatasetView::D2;
    if (auto d = optional_string(body, "source_dataset")) {
      dataset = parse_field<DatasetView>("source_dataset", *d,
                                         [](const std::string& s) { return parse_dataset_view(s); });
      if (dataset == DatasetView::none) {
        throw FieldError{"source_dataset", "field 'source_dataset' must be SR, D1 or D2"};
      }
    }
    bool activate = true;
    if (body.contains("activate")) activate = require(body, "activate", json::value_t::boolean, "boolean").get<bool>();

    std::optional<StoreEntry> entry;
    if (pattern) entry = store_.set_reported_pattern(participant_id, *pattern);
    if (text) {
      UserProfile p;
      p.participant_id = participant_id;
      p.profile_text = *text;
      p.method = UserProfile::Kind::M2_analysed;
      p.source_dataset = dataset;
      p.model_id = "operator";
      p.created_at = clock_();
      p.template_version = "operator";
      p.profile_id = participant_id + "-M2-" + std::string(to_string(dataset)) + "-op-" +
                     hex64(derive_seed(fnv1a64(*text), {participant_id, p.created_at})).substr(0, 12);
      entry = store_.add_profile(p, activate);
    }
    reply = {200, entry_to_json(*entry)};
  } catch (const FieldError& e) {
    reply = error_reply(400, e.message, e.field);
  } catch (const Error& e) {
    reply = error_reply(500, e.what());
  }
  log_request("PUT", "/v1/profiles/" + participant_id, reply.status, participant_id, 0.0);
  return reply;
}

HttpReply ClassificationService::handle(const std::string& method, const std::string& path,
                                        const std::string& body) {
  static constexpr std::string_view kProfiles = "/v1/profiles/";
  if (path == "/healthz") {
    if (method == "GET") return health();
    return error_reply(405, "method not allowed");
  }
  if (path == "/v1/classify") {
    if (method == "POST") return classify(body);
    return error_reply(405, "method not allowed");
  }
  if (path.rfind(kProfiles, 0) == 0) {
    const auto pid = path.substr(kProfiles.size());
    if (method == "GET") return get_profiles(pid);
    if (method == "PUT") return put_profile(pid, body);
    return error_reply(405, "method not allowed");
  }
  return error_reply(404, "no route for " + path);
}

void ClassificationService::log_request(const std::string& method, const std::string& path, int status,
                                        const std::string& participant_id, double latency_ms) {
  const auto seq = ++requests_;
  if (!config_.request_log) return;
  const json line = {{"seq", seq},
                     {"ts", clock_()},
                     {"method", method},
                     {"path", path},
                     {"status", status},
                     {"participant_id", participant_id},
                     {"latency_ms", latency_ms}};
  std::lock_guard lock(log_mutex_);
  std::ofstream out(*config_.request_log, std::ios::app);
  out << line.dump() << "\n";
}

void serve(ClassificationService& service, const std::function<void(int)>& on_ready,
           const std::atomic<bool>* stop) {
  const auto& cfg = service.config();
  httplib::Server server;
  const unsigned threads = cfg.threads;
  server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  auto route = [&service](const httplib::Request& req, httplib::Response& res) {
    const auto reply = service.handle(req.method, req.path, req.body);
    res.status = reply.status;
    res.set_content(reply.body.dump(), "application/json");
  };
  server.Get("/healthz", route);
  server.Post("/v1/classify", route);
  server.Get(R"(/v1/profiles/.*)", route);
  server.Put(R"(/v1/profiles/.*)", route);

  int port = cfg.port;
  if (port == 0) {
    port = server.bind_to_any_port(cfg.host);
  } else if (!server.bind_to_port(cfg.host, port)) {
    port = -1;
  }
  if (port < 0) throw ConfigError("service: cannot bind " + cfg.host + ":" + std::to_string(cfg.port));

  std::thread watcher;
  std::atomic<bool> done{false};
  if (stop) {
    watcher = std::thread([&] {
      while (!done && !*stop) std::this_thread::sleep_for(std::chrono::milliseconds(20));
      server.stop();
    });
  }
  // The socket is already listening, so clients may connect from here on.
  if (on_ready) on_ready(port);
  server.listen_after_bind();
  done = true;
  if (watcher.joinable()) watcher.join();
}

}  // namespace persono
