#include <doctest.h>

#include <map>
#include <set>

#include "helpers.hpp"
#include "oracles/rule_oracle.hpp"
#include "persono/error.hpp"
#include "persono/random.hpp"
#include "persono/synthetic_user.hpp"

using namespace persono;

namespace {

Notification make(std::string content, SenderRole role = SenderRole::friend_,
                  std::optional<Activity> activity = std::nullopt, std::string id = "P01-N001") {
  Notification n;
  n.id = std::move(id);
  n.sender_role = role;
  n.is_group = role == SenderRole::group;
  n.sender_name = role == SenderRole::group ? "Group 1" : role == SenderRole::supervisor ? "Supervisor" : "Friend 1";
  n.content = std::move(content);
  n.activity = activity;
  return n;
}

Rule urgent_rule(int priority, Predicate p) {
  return {priority, std::move(p), UrgencyLabel::urgent, LatencyRange{2.0, 10.0}};
}

Rule quiet_rule(int priority, Predicate p) { return {priority, std::move(p), UrgencyLabel::non_urgent, {}}; }

SyntheticUserSpec base_spec() {
  SyntheticUserSpec s;
  s.user_id = "01";
  s.seed = 9;
  s.reported_pattern = "I reply to my supervisor.";
  return s;
}

// Random predicates over the fields the generator knows about.
Predicate random_predicate(Rng& rng) {
  Predicate p;
  const std::vector<std::string> words{"please", "now", "?", "can you", "urgent", "the", "tonight", "call me"};
  while (p.clause_count() == 0) {
    if (rng.unit() < 0.35) p.sender_role = static_cast<SenderRole>(rng.below(3));
    if (rng.unit() < 0.2) p.is_group = rng.unit() < 0.5;
    if (rng.unit() < 0.3) p.activity = kActivities[rng.below(3)];
    if (rng.unit() < 0.3) {
      p.content_length = LengthClause{rng.unit() < 0.5 ? LengthComparison::less_than : LengthComparison::at_least,
                                      static_cast<std::size_t>(10 + rng.below(60))};
    }
    if (rng.unit() < 0.35) {
      const auto k = 1 + rng.below(3);
      for (std::size_t i = 0; i < k; ++i) p.content_keywords.push_back(words[rng.below(words.size())]);
    }
    if (rng.unit() < 0.1) p.content_regex = ContentPattern("(meeting|deadline|report)");
  }
  return p;
}

SyntheticUserSpec random_spec(std::uint64_t seed) {
  Rng rng(seed);
  auto s = base_spec();
  s.user_id = "R" + std::to_string(seed);
  s.seed = seed;
  s.default_label = rng.unit() < 0.5 ? UrgencyLabel::urgent : UrgencyLabel::non_urgent;
  const auto n = rng.below(7);
  for (std::size_t i = 0; i < n; ++i) {
    const int priority = static_cast<int>(rng.below(5)) * 10;
    s.rules.push_back(rng.unit() < 0.5 ? urgent_rule(priority, random_predicate(rng))
                                       : quiet_rule(priority, random_predicate(rng)));
  }
  return s;
}

}  // namespace

TEST_CASE("matches: keyword any-of with word boundaries") {
  Predicate p;
  p.content_keywords = {"now", "?"};
  CHECK(matches(p, make("come over NOW")));
  CHECK(matches(p, make("free tonight?")));
  CHECK_FALSE(matches(p, make("I know the answer")));
  CHECK_FALSE(matches(p, make("nowhere to be")));
}

TEST_CASE("matches: length clause counts code points") {
  Predicate p;
  p.content_length = LengthClause{LengthComparison::less_than, 5};
  CHECK(matches(p, make("hé")));
  CHECK_FALSE(matches(p, make("héllo")));  // five code points, six bytes
  p.content_length->comparison = LengthComparison::at_least;
  CHECK(matches(p, make("héllo")));
}

TEST_CASE("matches: activity clause needs an activity") {
  Predicate p;
  p.activity = Activity::reading;
  CHECK(matches(p, make("x", SenderRole::friend_, Activity::reading)));
  CHECK_FALSE(matches(p, make("x", SenderRole::friend_, Activity::doodling)));
  CHECK_FALSE(matches(p, make("x")));
}

TEST_CASE("first_match honours priority then list order") {
  auto s = base_spec();
  Predicate sup;
  sup.sender_role = SenderRole::supervisor;
  Predicate q;
  q.content_keywords = {"?"};
  s.rules = {quiet_rule(50, q), urgent_rule(10, sup), quiet_rule(10, q)};
  CHECK(rule_label(s, make("ok?", SenderRole::supervisor)) == UrgencyLabel::urgent);
  CHECK(rule_label(s, make("ok?")) == UrgencyLabel::non_urgent);
  CHECK(first_match(s, make("ok?")) == &s.rules[2]);
  CHECK(first_match(s, make("ok")) == nullptr);
}

TEST_CASE("validate rejects malformed specs") {
  auto s = base_spec();
  CHECK_NOTHROW(validate(s));
  auto bad = s;
  bad.noise_rate = 1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = s;
  bad.rules.push_back({0, Predicate{}, UrgencyLabel::non_urgent, {}});
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = s;
  Predicate p;
  p.is_group = true;
  bad.rules.push_back({0, p, UrgencyLabel::urgent, LatencyRange{5.0, 45.0}});
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = s;
  bad.rules.push_back({0, p, UrgencyLabel::urgent, std::nullopt});
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("decide at noise 0 equals the rule label and draws latency inside the window") {
  const auto users = preset_population(18, 3);
  const auto bundle = testing::fresh_bundle("01", 21);
  for (const auto& u : users) {
    for (const auto& n : bundle.interaction_pool) {
      const auto d = decide(u, n);
      CHECK(d.label == rule_label(u, n));
      CHECK_FALSE(d.noise_flipped);
      CHECK(d.latency_s.has_value() == (d.label == UrgencyLabel::urgent));
      if (d.latency_s) {
        CHECK(*d.latency_s > 0.0);
        CHECK(*d.latency_s <= 30.0);
      }
      CHECK(d == decide(u, n));
    }
  }
}

TEST_CASE("noise flips about noise_rate of labels, reproducibly") {
  auto s = base_spec();
  s.noise_rate = 0.1;
  std::size_t flipped = 0;
  const std::size_t n = 4000;
  for (std::size_t i = 0; i < n; ++i) {
    const auto note = make("hello", SenderRole::friend_, std::nullopt, "P01-N" + std::to_string(i));
    const auto d = decide(s, note);
    flipped += d.noise_flipped;
    CHECK(d.label == (d.noise_flipped ? UrgencyLabel::urgent : UrgencyLabel::non_urgent));
  }
  const double rate = static_cast<double>(flipped) / n;
  CHECK(rate > 0.085);
  CHECK(rate < 0.115);
}

TEST_CASE("rule evaluation agrees with the reference interpreter") {
  const auto bundle = testing::fresh_bundle("01", 5);
  std::vector<Notification> notes(bundle.interaction_pool.begin(), bundle.interaction_pool.end());
  for (auto n : bundle.self_label_pool) notes.push_back(n);

  for (const auto& u : preset_population(18, 77)) {
    const auto doc = spec_to_json(u);
    for (const auto& n : notes) CHECK(rule_label(u, n) == oracle::expected_label(doc, n));
  }
  for (std::uint64_t seed = 1; seed <= 150; ++seed) {
    const auto s = random_spec(seed);
    const auto doc = spec_to_json(s);
    for (const auto& n : notes) {
      REQUIRE_MESSAGE(rule_label(s, n) == oracle::expected_label(doc, n), doc.dump() << " on " << n.content);
    }
  }
}

TEST_CASE("run_session events relabel to the decisions") {
  const auto bundle = testing::fresh_bundle("02", 4);
  auto u = preset_population(18, 1)[1];
  u.user_id = "02";
  u.noise_rate = 0.2;
  std::map<std::string, const Notification*> by_id;
  for (const auto& n : bundle.interaction_pool) by_id[n.id] = &n;
  std::set<InteractionAction> actions;
  for (const auto& plan : session_plans(bundle.interaction_pool)) {
    const auto events = run_session(u, plan, bundle.interaction_pool);
    REQUIRE(events.size() == plan.entries.size());
    for (const auto& e : events) {
      const auto d = decide(u, *by_id.at(e.notification_id));
      actions.insert(e.action);
      CHECK(label_from_interaction(*by_id.at(e.notification_id), e).label == d.label);
      CHECK((e.action == InteractionAction::replied) == (d.label == UrgencyLabel::urgent));
      if (e.action == InteractionAction::replied) CHECK(e.reopened_from_panel == (*e.latency_s > 20.0));
    }
  }
  CHECK(actions.size() == 3);
}

TEST_CASE("preset population mirrors codebook frequencies") {
  const auto users = preset_population(18, 2024);
  REQUIRE(users.size() == 18);
  std::map<RuleKind, int> users_with;
  for (const auto& u : users) {
    CHECK_NOTHROW(validate(u));
    CHECK_FALSE(u.reported_pattern.empty());
    std::set<RuleKind> kinds;
    for (const auto& r : u.rules) kinds.insert(classify_rule(r));
    for (auto k : kinds) ++users_with[k];
  }
  CHECK(users_with[RuleKind::activity_specific] == 14);
  CHECK(users_with[RuleKind::action_request] == 12);
  CHECK(users_with[RuleKind::group_ignorance] == 8);
  CHECK(users_with[RuleKind::authority] == 8);
  CHECK(users_with[RuleKind::content_length] == 5);
  CHECK(users_with[RuleKind::cognitive_load] == 4);
  CHECK(users_with[RuleKind::social] == 3);
  CHECK(users.front().user_id == "01");
  CHECK(users.back().user_id == "18");
  CHECK(preset_population(18, 2024) == users);
}

TEST_CASE("reported pattern describes rules in first person") {
  auto s = base_spec();
  Predicate sup;
  sup.sender_role = SenderRole::supervisor;
  Predicate grp;
  grp.is_group = true;
  s.rules = {urgent_rule(10, sup), quiet_rule(20, grp)};
  const auto text = render_reported_pattern(s);
  CHECK(text.find("I always reply to my supervisor immediately.") != std::string::npos);
  CHECK(text.find("I ignore group messages.") != std::string::npos);
  CHECK(text.find("Otherwise, I rarely reply within 30 seconds.") != std::string::npos);
}

TEST_CASE("simulate_participant labels and splits the bundle") {
  for (double noise : {0.0, 0.2}) {
    auto u = preset_population(18, 8)[4];
    u.noise_rate = noise;
    const auto base = testing::fresh_bundle(u.user_id, 31);
    const auto out = simulate_participant(base, u);
    CHECK_NOTHROW(validate(out));
    REQUIRE(out.sr.size() == 90);
    REQUIRE(out.train.size() == 90);
    REQUIRE(out.test.size() == 18);
    CHECK(out.reported_pattern == u.reported_pattern);
    std::size_t disagreements = 0;
    for (const auto* list : {&out.sr, &out.train, &out.test}) {
      for (const auto& l : *list) {
        CHECK(l.label == decide(u, l.notification).label);
        disagreements += l.label != rule_label(u, l.notification);
      }
    }
    if (noise == 0.0) CHECK(disagreements == 0);
    if (noise > 0.0) CHECK(disagreements > 0);
  }
}

TEST_CASE("simulate with clean test set keeps test labels noise-free") {
  auto u = preset_population(18, 8)[6];
  u.noise_rate = 0.3;
  const auto out = simulate_participant(testing::fresh_bundle(u.user_id, 31), u, {.noise_on_test = false});
  for (const auto& l : out.test) CHECK(l.label == rule_label(u, l.notification));
  std::size_t noisy_train = 0;
  for (const auto& l : out.train) noisy_train += l.label != rule_label(u, l.notification);
  CHECK(noisy_train > 0);
}

TEST_CASE("simulate rejects a mismatched user") {
  auto u = preset_population(18, 8)[0];
  CHECK_THROWS_AS(simulate_participant(testing::fresh_bundle("09", 1), u), ConfigError);
}

TEST_CASE("spec JSON round-trips") {
  testing::TempDir tmp;
  for (const auto& u : preset_population(18, 5)) {
    save_spec(u, tmp / "u.json");
    CHECK(load_spec(tmp / "u.json") == u);
  }
  const auto r = random_spec(12);
  CHECK(spec_from_json(spec_to_json(r)) == r);
  testing::spit(tmp / "bad.json", R"({"user_id":"01","seed":1,"noise_rate":0,"default":"maybe","reported_pattern":"x","rules":[]})");
  CHECK_THROWS_AS(load_spec(tmp / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_spec(tmp / "missing.json"), ConfigError);
}
