#include "persono/synthetic_user.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "persono/error.hpp"
#include "persono/random.hpp"

namespace persono {
namespace {

using nlohmann::json;

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool contains_keyword(const std::string& haystack_lower, const std::string& keyword) {
  const std::string needle = lower_ascii(keyword);
  if (needle.empty()) return false;
  const bool bound_left = is_word_char(needle.front());
  const bool bound_right = is_word_char(needle.back());
  for (std::size_t pos = haystack_lower.find(needle); pos != std::string::npos;
       pos = haystack_lower.find(needle, pos + 1)) {
    const bool left_ok = !bound_left || pos == 0 || !is_word_char(haystack_lower[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool right_ok =
        !bound_right || end == haystack_lower.size() || !is_word_char(haystack_lower[end]);
    if (left_ok && right_ok) return true;
  }
  return false;
}

std::size_t code_points(std::string_view s) {
  return std::size_t(std::count_if(s.begin(), s.end(), [](char c) {
    return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
  }));
}

std::vector<const Rule*> by_priority(const SyntheticUserSpec& spec) {
  std::vector<const Rule*> ordered;
  for (const auto& r : spec.rules) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Rule* a, const Rule* b) { return a->priority < b->priority; });
  return ordered;
}

double hashed_unit(const SyntheticUserSpec& spec, std::string_view id, std::string_view purpose) {
  return unit_from_hash(derive_seed(spec.seed, {spec.user_id, id, purpose}));
}

double draw_latency(const SyntheticUserSpec& spec, std::string_view id, const LatencyRange& range) {
  const double u = hashed_unit(spec, id, "latency");
  // (lo, hi]: draw from the upper-closed interval so lo = 0 still yields positive latency.
  return range.hi - (range.hi - range.lo) * u;
}

}  // namespace

ContentPattern::ContentPattern(std::string source) : source_(std::move(source)) {
  try {
    compiled_ = std::make_shared<const std::regex>(
        source_, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
  } catch (const std::regex_error& e) {
    throw ConfigError("invalid content regex '" + source_ + "': " + e.what());
  }
}

bool ContentPattern::search(const std::string& text) const {
  return std::regex_search(text, *compiled_);
}

std::size_t Predicate::clause_count() const {
  return std::size_t(sender_role.has_value()) + std::size_t(is_group.has_value()) +
         std::size_t(!content_keywords.empty()) + std::size_t(content_regex.has_value()) +
         std::size_t(content_length.has_value()) + std::size_t(activity.has_value());
}

void validate(const SyntheticUserSpec& spec) {
  if (spec.user_id.empty()) throw ConfigError("user spec without user_id");
  if (!(spec.noise_rate >= 0.0 && spec.noise_rate < 1.0)) {
    throw ConfigError(spec.user_id + ": noise_rate must be in [0, 1)");
  }
  if (spec.reported_pattern.empty()) throw ConfigError(spec.user_id + ": empty reported_pattern");
  for (std::size_t i = 0; i < spec.rules.size(); ++i) {
    const auto& rule = spec.rules[i];
    const std::string where = spec.user_id + " rule " + std::to_string(i);
    if (rule.predicate.clause_count() == 0) throw ConfigError(where + ": predicate has no clause");
    if (rule.outcome == UrgencyLabel::urgent) {
      if (!rule.latency_range_s) throw ConfigError(where + ": urgent rule needs latency_range_s");
    }
    if (rule.latency_range_s) {
      const auto& r = *rule.latency_range_s;
      if (!(r.lo >= 0.0 && r.lo <= r.hi && r.hi > 0.0 && r.hi <= kUrgentReplyWindowS)) {
        throw ConfigError(where + ": latency range must lie within (0, 30]");
      }
    }
  }
}

bool matches(const Predicate& p, const Notification& n) {
  if (p.sender_role && n.sender_role != *p.sender_role) return false;
  if (p.is_group && n.is_group != *p.is_group) return false;
  if (p.activity && (!n.activity || *n.activity != *p.activity)) return false;
  if (p.content_length) {
    const auto len = code_points(n.content);
    const bool below = len < p.content_length->threshold;
    if (below != (p.content_length->comparison == LengthComparison::less_than)) return false;
  }
  if (!p.content_keywords.empty()) {
    const auto text = lower_ascii(n.content);
    if (std::none_of(p.content_keywords.begin(), p.content_keywords.end(),
                     [&](const std::string& k) { return contains_keyword(text, k); })) {
      return false;
    }
  }
  if (p.content_regex && !p.content_regex->search(n.content)) return false;
  return true;
}

const Rule* first_match(const SyntheticUserSpec& spec, const Notification& notification) {
  for (const Rule* rule : by_priority(spec)) {
    if (matches(rule->predicate, notification)) return rule;
  }
  return nullptr;
}

UrgencyLabel rule_label(const SyntheticUserSpec& spec, const Notification& notification) {
  const Rule* rule = first_match(spec, notification);
  return rule ? rule->outcome : spec.default_label;
}

Decision decide(const SyntheticUserSpec& spec, const Notification& notification) {
  const Rule* rule = first_match(spec, notification);
  Decision d;
  d.label = rule ? rule->outcome : spec.default_label;
  if (spec.noise_rate > 0.0 && hashed_unit(spec, notification.id, "noise") < spec.noise_rate) {
    d.label = flip(d.label);
    d.noise_flipped = true;
  }
  if (d.label == UrgencyLabel::urgent) {
    const LatencyRange range = (rule && rule->outcome == UrgencyLabel::urgent && rule->latency_range_s)
                                   ? *rule->latency_range_s
                                   : kDefaultUrgentLatency;
    d.latency_s = draw_latency(spec, notification.id, range);
  }
  return d;
}

std::vector<InteractionEvent> run_session(const SyntheticUserSpec& spec, const SessionPlan& plan,
                                          std::span<const Notification> notifications) {
  std::unordered_map<std::string, const Notification*> by_id;
  for (const auto& n : notifications) by_id.emplace(n.id, &n);
  std::vector<InteractionEvent> events;
  events.reserve(plan.entries.size());
  for (const auto& [id, offset] : plan.entries) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw DatasetError("session plan references unknown notification " + id);
    const Decision d = decide(spec, *it->second);
    InteractionEvent e;
    e.notification_id = id;
    if (d.label == UrgencyLabel::urgent) {
      e.action = InteractionAction::replied;
      e.latency_s = d.latency_s;
      e.reopened_from_panel = *d.latency_s > kAutoDismissS;
    } else {
      e.action = hashed_unit(spec, id, "dismiss") < 0.5 ? InteractionAction::dismissed
                                                         : InteractionAction::ignored;
    }
    events.push_back(std::move(e));
  }
  return events;
}

namespace {

std::string quoted_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += i + 1 == items.size() ? " or " : ", ";
    out += "\"" + items[i] + "\"";
  }
  return out;
}

std::string role_phrase(SenderRole role) {
  switch (role) {
    case SenderRole::supervisor: return "my supervisor";
    case SenderRole::friend_: return "a friend";
    case SenderRole::group: return "a group chat";
  }
  return "someone";
}

std::vector<std::string> conditions(const Predicate& p) {
  std::vector<std::string> out;
  if (p.sender_role) out.push_back("the sender is " + role_phrase(*p.sender_role));
  if (p.is_group) out.push_back(*p.is_group ? "it is a group message" : "it is a direct message");
  if (!p.content_keywords.empty()) {
    out.push_back("the message contains " + quoted_list(p.content_keywords));
  }
  if (p.content_regex) out.push_back("the message matches /" + p.content_regex->source() + "/");
  if (p.content_length) {
    const auto t = std::to_string(p.content_length->threshold);
    out.push_back(p.content_length->comparison == LengthComparison::less_than
                      ? "the message is shorter than " + t + " characters"
                      : "the message is at least " + t + " characters long");
  }
  return out;
}

std::string join_and(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += " and ";
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string describe_rule(const Rule& rule) {
  const auto& p = rule.predicate;
  const bool urgent = rule.outcome == UrgencyLabel::urgent;
  const auto kind = classify_rule(rule);
  if (p.clause_count() == 1) {
    switch (kind) {
      case RuleKind::authority:
        return urgent ? "I always reply to my supervisor immediately."
                      : "Messages from my supervisor can wait.";
      case RuleKind::social:
        return urgent ? "I reply quickly to messages from my friends."
                      : "Messages from friends can wait.";
      case RuleKind::group_ignorance:
        return urgent ? "I reply to group messages quickly." : "I ignore group messages.";
      case RuleKind::action_request:
        return urgent ? "I reply when a message asks me something or requests an action, for "
                        "example when it contains " +
                            quoted_list(p.content_keywords) + "."
                      : "I do not reply to messages that contain " + quoted_list(p.content_keywords) +
                            ".";
      case RuleKind::content_length: {
        const auto t = std::to_string(p.content_length->threshold);
        const bool shorter = p.content_length->comparison == LengthComparison::less_than;
        if (shorter) {
          return urgent ? "I reply right away to short messages (under " + t + " characters)."
                        : "I do not reply to short messages (under " + t + " characters).";
        }
        return urgent ? "I reply to long messages (" + t + " characters or more) quickly."
                      : "I skip long messages (" + t + " characters or more).";
      }
      case RuleKind::activity_specific:
        return "While " + std::string(to_string(*p.activity)) +
               (urgent ? " I reply to messages quickly." : " I do not reply.");
      default:
        break;
    }
  }
  const std::string verb = urgent ? "I reply within 30 seconds." : "I do not reply within 30 seconds.";
  const auto conds = conditions(p);
  std::string out;
  if (p.activity) {
    out = "While " + std::string(to_string(*p.activity));
    out += conds.empty() ? " " + verb : ", when " + join_and(conds) + ", " + verb;
  } else {
    out = "When " + join_and(conds) + ", " + verb;
  }
  return out;
}

std::string render_reported_pattern(const SyntheticUserSpec& spec) {
  std::string out;
  for (const Rule* rule : by_priority(spec)) {
    if (!out.empty()) out += ' ';
    out += describe_rule(*rule);
  }
  const bool urgent_default = spec.default_label == UrgencyLabel::urgent;
  if (out.empty()) {
    return urgent_default ? "I usually reply within 30 seconds." : "I rarely reply within 30 seconds.";
  }
  out += urgent_default ? " Otherwise, I usually reply within 30 seconds."
                        : " Otherwise, I rarely reply within 30 seconds.";
  return out;
}

std::string_view to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::authority: return "authority";
    case RuleKind::social: return "social";
    case RuleKind::group_ignorance: return "group_ignorance";
    case RuleKind::action_request: return "action_request";
    case RuleKind::content_length: return "content_length";
    case RuleKind::cognitive_load: return "cognitive_load";
    case RuleKind::activity_specific: return "activity_specific";
    case RuleKind::other: return "other";
  }
  return "?";
}

RuleKind classify_rule(const Rule& rule) {
  const auto& p = rule.predicate;
  if (p.activity) {
    if (p.content_length && p.clause_count() == 2) return RuleKind::cognitive_load;
    return p.clause_count() == 1 ? RuleKind::activity_specific : RuleKind::other;
  }
  if (p.clause_count() != 1) return RuleKind::other;
  if (p.sender_role == SenderRole::supervisor) return RuleKind::authority;
  if (p.sender_role == SenderRole::friend_) return RuleKind::social;
  if (p.is_group) return RuleKind::group_ignorance;
  if (!p.content_keywords.empty()) return RuleKind::action_request;
  if (p.content_length) return RuleKind::content_length;
  return RuleKind::other;
}

std::vector<SyntheticUserSpec> preset_population(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("population size must be at least 1");
  // Coded-mention counts over 18 participants, read as per-user prevalence.
  const std::vector<std::pair<RuleKind, int>> frequencies = {
      {RuleKind::activity_specific, 14}, {RuleKind::action_request, 12},
      {RuleKind::group_ignorance, 8},    {RuleKind::authority, 8},
      {RuleKind::content_length, 5},     {RuleKind::cognitive_load, 4},
      {RuleKind::social, 3},
  };
  std::vector<std::set<RuleKind>> kinds(n);
  for (const auto& [kind, freq] : frequencies) {
    const auto count = std::size_t(std::lround(double(freq) * double(n) / 18.0));
    std::vector<std::size_t> users(n);
    for (std::size_t i = 0; i < n; ++i) users[i] = i;
    Rng rng(derive_seed(seed, {"census", to_string(kind)}));
    rng.shuffle(users);
    for (std::size_t i = 0; i < std::min(count, n); ++i) kinds[users[i]].insert(kind);
  }

  std::vector<SyntheticUserSpec> population;
  for (std::size_t u = 0; u < n; ++u) {
    SyntheticUserSpec spec;
    spec.user_id = (u + 1 < 10 ? "0" : "") + std::to_string(u + 1);
    spec.seed = derive_seed(seed, {"user", spec.user_id});
    Rng rng(spec.seed);
    const auto random_activity = [&rng] { return kActivities[rng.below(3)]; };
    const auto has = [&](RuleKind k) { return kinds[u].count(k) > 0; };

    if (has(RuleKind::group_ignorance)) {
      Rule r{10, {}, UrgencyLabel::non_urgent, std::nullopt};
      r.predicate.is_group = true;
      spec.rules.push_back(std::move(r));
    }
    if (has(RuleKind::authority)) {
      Rule r{20, {}, UrgencyLabel::urgent, LatencyRange{2.0, 15.0}};
      r.predicate.sender_role = SenderRole::supervisor;
      spec.rules.push_back(std::move(r));
    }
    if (has(RuleKind::activity_specific)) {
      Rule r;
      r.predicate.activity = random_activity();
      // Mostly "do not reply during X"; sometimes a dull task raises the reply rate.
      if (rng.unit() < 0.75) {
        r.outcome = UrgencyLabel::non_urgent;
      } else {
        r.outcome = UrgencyLabel::urgent;
        r.latency_range_s = LatencyRange{4.0, 24.0};
      }
      r.priority = rng.unit() < 0.5 ? 15 : 25;
      spec.rules.push_back(std::move(r));
    }
    if (has(RuleKind::cognitive_load)) {
      Rule r{30, {}, UrgencyLabel::non_urgent, std::nullopt};
      r.predicate.activity = random_activity();
      r.predicate.content_length = LengthClause{LengthComparison::at_least, 60};
      spec.rules.push_back(std::move(r));
    }
    if (has(RuleKind::action_request)) {
      Rule r{40, {}, UrgencyLabel::urgent, LatencyRange{5.0, 28.0}};
      r.predicate.content_keywords = kActionRequestKeywords;
      spec.rules.push_back(std::move(r));
    }
    if (has(RuleKind::content_length)) {
      Rule r{50, {}, UrgencyLabel::urgent, LatencyRange{3.0, 12.0}};
      r.predicate.content_length =
          LengthClause{LengthComparison::less_than, std::size_t(20 + 5 * rng.below(3))};
      spec.rules.push_back(std::move(r));
    }
    if (has(RuleKind::social)) {
      Rule r{60, {}, UrgencyLabel::urgent, LatencyRange{4.0, 20.0}};
      r.predicate.sender_role = SenderRole::friend_;
      spec.rules.push_back(std::move(r));
    }
    const bool any_urgent = std::any_of(spec.rules.begin(), spec.rules.end(), [](const Rule& r) {
      return r.outcome == UrgencyLabel::urgent;
    });
    spec.default_label = any_urgent ? UrgencyLabel::non_urgent : UrgencyLabel::urgent;
    spec.reported_pattern = render_reported_pattern(spec);
    validate(spec);
    population.push_back(std::move(spec));
  }
  return population;
}

DatasetBundle simulate_participant(const DatasetBundle& bundle, const SyntheticUserSpec& spec,
                                   const SimulationOptions& options) {
  validate(spec);
  if (spec.user_id != bundle.participant_id) {
    throw ConfigError("user spec '" + spec.user_id + "' does not match participant '" +
                      bundle.participant_id + "'");
  }
  DatasetBundle out = bundle;
  out.sr.clear();
  for (const auto& n : out.self_label_pool) {
    out.sr.push_back({n, decide(spec, n).label, LabelSource::self_report, std::nullopt});
  }

  // Test membership depends only on the schedule, so it is known before labelling.
  std::unordered_set<std::string> test_ids;
  for (const auto& plan : session_plans(out.interaction_pool)) {
    if (plan.session_index != int(kSessionsPerActivity)) continue;
    for (std::size_t i = plan.entries.size() - kTestPerActivity; i < plan.entries.size(); ++i) {
      test_ids.insert(plan.entries[i].first);
    }
  }
  SyntheticUserSpec clean = spec;
  clean.noise_rate = 0.0;

  std::unordered_map<std::string, const Notification*> pool;
  for (const auto& n : out.interaction_pool) pool.emplace(n.id, &n);
  std::vector<LabeledNotification> labelled;
  for (const auto& plan : session_plans(out.interaction_pool)) {
    const auto noisy = run_session(spec, plan, out.interaction_pool);
    const auto quiet = options.noise_on_test ? noisy : run_session(clean, plan, out.interaction_pool);
    for (std::size_t i = 0; i < plan.entries.size(); ++i) {
      const auto& id = plan.entries[i].first;
      const auto& event = test_ids.count(id) ? quiet[i] : noisy[i];
      labelled.push_back(label_from_interaction(*pool.at(id), event));
    }
  }
  attach_interaction_labels(out, labelled);
  out.reported_pattern = spec.reported_pattern;
  validate(out);
  return out;
}

namespace {

json predicate_to_json(const Predicate& p) {
  json j = json::object();
  if (p.sender_role) j["sender_role"] = to_string(*p.sender_role);
  if (p.is_group) j["is_group"] = *p.is_group;
  if (!p.content_keywords.empty()) j["content_keywords"] = p.content_keywords;
  if (p.content_regex) j["content_regex"] = p.content_regex->source();
  if (p.content_length) {
    j["content_length"] = {
        {"op", p.content_length->comparison == LengthComparison::less_than ? "<" : ">="},
        {"threshold", p.content_length->threshold}};
  }
  if (p.activity) j["activity"] = to_string(*p.activity);
  return j;
}

Predicate predicate_from_json(const json& j) {
  static const std::set<std::string> known = {"sender_role",    "is_group",       "content_keywords",
                                              "content_regex",  "content_length", "activity"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown predicate clause '" + key + "'");
  }
  Predicate p;
  if (j.contains("sender_role")) p.sender_role = parse_sender_role(j["sender_role"].get<std::string>());
  if (j.contains("is_group")) p.is_group = j["is_group"].get<bool>();
  if (j.contains("content_keywords")) {
    p.content_keywords = j["content_keywords"].get<std::vector<std::string>>();
  }
  if (j.contains("content_regex")) p.content_regex.emplace(j["content_regex"].get<std::string>());
  if (j.contains("content_length")) {
    const auto& c = j["content_length"];
    const auto op = c.at("op").get<std::string>();
    if (op != "<" && op != ">=") throw ConfigError("content_length op must be '<' or '>='");
    p.content_length = LengthClause{op == "<" ? LengthComparison::less_than : LengthComparison::at_least,
                                    c.at("threshold").get<std::size_t>()};
  }
  if (j.contains("activity")) p.activity = parse_activity(j["activity"].get<std::string>());
  return p;
}

}  // namespace

json spec_to_json(const SyntheticUserSpec& spec) {
  json rules = json::array();
  for (const auto& r : spec.rules) {
    rules.push_back({{"priority", r.priority},
                     {"predicate", predicate_to_json(r.predicate)},
                     {"outcome", to_string(r.outcome)},
                     {"latency_range_s", r.latency_range_s
                                             ? json::array({r.latency_range_s->lo, r.latency_range_s->hi})
                                             : json(nullptr)}});
  }
  return {{"user_id", spec.user_id},
          {"seed", spec.seed},
          {"noise_rate", spec.noise_rate},
          {"default", to_string(spec.default_label)},
          {"reported_pattern", spec.reported_pattern},
          {"rules", std::move(rules)}};
}

SyntheticUserSpec spec_from_json(const json& doc) {
  SyntheticUserSpec spec;
  try {
    spec.user_id = doc.at("user_id").get<std::string>();
    spec.seed = doc.at("seed").get<std::uint64_t>();
    spec.noise_rate = doc.at("noise_rate").get<double>();
    spec.default_label = parse_urgency(doc.at("default").get<std::string>());
    spec.reported_pattern = doc.at("reported_pattern").get<std::string>();
    for (const auto& r : doc.at("rules")) {
      Rule rule;
      rule.priority = r.at("priority").get<int>();
      rule.predicate = predicate_from_json(r.at("predicate"));
      rule.outcome = parse_urgency(r.at("outcome").get<std::string>());
      if (r.contains("latency_range_s") && !r["latency_range_s"].is_null()) {
        const auto range = r["latency_range_s"].get<std::vector<double>>();
        if (range.size() != 2) throw ConfigError("latency_range_s must be [lo, hi]");
        rule.latency_range_s = LatencyRange{range[0], range[1]};
      }
      spec.rules.push_back(std::move(rule));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed user spec: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("malformed user spec: ") + e.what());
  }
  validate(spec);
  return spec;
}

void save_spec(const SyntheticUserSpec& spec, const std::filesystem::path& path) {
  validate(spec);
  write_file_atomic(path, spec_to_json(spec).dump(2) + "\n");
}

SyntheticUserSpec load_spec(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  } catch (const DatasetError& e) {
    throw ConfigError(e.what());
  }
  return spec_from_json(doc);
}

}  // namespace persono
