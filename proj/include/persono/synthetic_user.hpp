#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "persono/dataset.hpp"
#include "persono/types.hpp"

namespace persono {

// Default detector for the "action request" behaviour.
inline const std::vector<std::string> kActionRequestKeywords = {"?",        "can you", "please",
                                                                "call me",  "urgent",  "now"};

enum class LengthComparison { less_than, at_least };

struct LengthClause {
  LengthComparison comparison = LengthComparison::less_than;
  std::size_t threshold = 0;  // Unicode code points
  bool operator==(const LengthClause&) const = default;
};

// Case-insensitive ECMAScript regex, compiled once.
class ContentPattern {
 public:
  explicit ContentPattern(std::string source);
  const std::string& source() const { return source_; }
  bool search(const std::string& text) const;
  bool operator==(const ContentPattern& other) const { return source_ == other.source_; }

 private:
  std::string source_;
  std::shared_ptr<const std::regex> compiled_;
};

// Conjunction of the clauses that are set.
struct Predicate {
  std::optional<SenderRole> sender_role;
  std::optional<bool> is_group;
  // Any-of, case-insensitive; alphanumeric keyword edges match on word boundaries.
  std::vector<std::string> content_keywords;
  std::optional<ContentPattern> content_regex;
  std::optional<LengthClause> content_length;
  std::optional<Activity> activity;

  std::size_t clause_count() const;
  bool operator==(const Predicate&) const = default;
};

struct LatencyRange {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const LatencyRange&) const = default;
};

inline constexpr LatencyRange kDefaultUrgentLatency{3.0, 18.0};

struct Rule {
  int priority = 0;  // lower fires first; ties keep list order
  Predicate predicate;
  UrgencyLabel outcome = UrgencyLabel::non_urgent;
  std::optional<LatencyRange> latency_range_s;  // required for urgent outcomes, within (0, 30]
  bool operator==(const Rule&) const = default;
};

struct SyntheticUserSpec {
  std::string user_id;
  std::uint64_t seed = 0;
  double noise_rate = 0.0;
  UrgencyLabel default_label = UrgencyLabel::non_urgent;
  std::string reported_pattern;
  std::vector<Rule> rules;
  bool operator==(const SyntheticUserSpec&) const = default;
};

void validate(const SyntheticUserSpec& spec);

struct Decision {
  UrgencyLabel label = UrgencyLabel::non_urgent;
  std::optional<double> latency_s;  // set iff urgent
  bool noise_flipped = false;
  bool operator==(const Decision&) const = default;
};

// Clauses that need a field the notification lacks (activity) do not match.
bool matches(const Predicate& predicate, const Notification& notification);

// First matching rule in priority order, or nullptr for the default.
const Rule* first_match(const SyntheticUserSpec& spec, const Notification& notification);

// Label the rules alone produce, before noise. Field-only: the id is not consulted.
UrgencyLabel rule_label(const SyntheticUserSpec& spec, const Notification& notification);

// Reproducible per (seed, user, notification id); independent of evaluation order.
Decision decide(const SyntheticUserSpec& spec, const Notification& notification);

std::vector<InteractionEvent> run_session(const SyntheticUserSpec& spec, const SessionPlan& plan,
                                          std::span<const Notification> notifications);

std::string render_reported_pattern(const SyntheticUserSpec& spec);

// One first-person sentence for a rule, as used in the reported pattern.
std::string describe_rule(const Rule& rule);

enum class RuleKind {
  authority,
  social,
  group_ignorance,
  action_request,
  content_length,
  cognitive_load,
  activity_specific,
  other,
};
std::string_view to_string(RuleKind kind);
RuleKind classify_rule(const Rule& rule);

// Users whose rule kinds mirror the codebook frequencies scaled to n users.
std::vector<SyntheticUserSpec> preset_population(std::size_t n, std::uint64_t seed);

struct SimulationOptions {
  // When false the held-out test notifications are labelled without noise.
  bool noise_on_test = true;
};

// Fills SR labels by self-report, replays the six sessions, labels and splits.
DatasetBundle simulate_participant(const DatasetBundle& bundle, const SyntheticUserSpec& spec,
                                   const SimulationOptions& options = {});

nlohmann::json spec_to_json(const SyntheticUserSpec& spec);
SyntheticUserSpec spec_from_json(const nlohmann::json& doc);
void save_spec(const SyntheticUserSpec& spec, const std::filesystem::path& path);
SyntheticUserSpec load_spec(const std::filesystem::path& path);

}  // namespace persono
