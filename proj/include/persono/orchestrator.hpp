#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "persono/backend.hpp"
#include "persono/dataset.hpp"
#include "persono/error.hpp"
#include "persono/prompting.hpp"

namespace persono {

inline constexpr int kDefaultEnsembleSize = 5;
inline constexpr double kRaterTemperature = 1.0;
inline constexpr double kAnalyserTemperature = 0.0;

// One cell of the method x dataset grid.
struct Configuration {
  Method method = Method::Base;
  PromptVariant variant = PromptVariant::P1;
  DatasetView dataset = DatasetView::none;  // training view, M2 only

  // "Base-P1", "M1-P2", "M2-D2", ...
  std::string token() const;
  bool operator==(const Configuration&) const = default;
};

// Base-P1, Base-P2, M1-P1, M1-P2, M2-SR, M2-D1, M2-D2 in report order.
std::span<const Configuration> all_configurations();
std::string allowed_configuration_tokens();
// Throws ConfigError listing the allowed tokens.
Configuration parse_configuration(std::string_view token);
// Comma-separated tokens, or "all".
std::vector<Configuration> parse_configuration_list(std::string_view list);

struct VoteOutcome {
  UrgencyLabel final_label = UrgencyLabel::non_urgent;
  int urgent_votes = 0;
};

// Strict majority; rejects even or empty ensembles.
VoteOutcome majority_vote(std::span<const UrgencyLabel> votes);

struct RaterVerdict {
  int rater_index = 0;
  std::string reasoning;
  UrgencyLabel label = UrgencyLabel::non_urgent;
  bool parse_ok = false;
  std::string raw;
  int attempts = 1;  // 2 when the first completion had no verdict line
};

struct ClassificationResult {
  std::string notification_id;
  Method method = Method::Base;
  PromptVariant variant = PromptVariant::P1;
  DatasetView dataset = DatasetView::none;
  std::vector<RaterVerdict> verdicts;  // sorted by rater_index
  int urgent_votes = 0;
  double score = 0.0;  // urgent_votes / k
  UrgencyLabel final_label = UrgencyLabel::non_urgent;
  std::optional<std::string> profile_id;
};

nlohmann::json result_to_json(const ClassificationResult& result, bool include_raw = false);

// A notification whose ensemble could not complete.
class ClassificationError : public BackendError {
 public:
  ClassificationError(const std::string& what, int attempts, std::string notification_id,
                      int completed_verdicts)
      : BackendError(what, attempts),
        notification_id_(std::move(notification_id)),
        completed_verdicts_(completed_verdicts) {}
  const std::string& notification_id() const { return notification_id_; }
  int completed_verdicts() const { return completed_verdicts_; }

 private:
  std::string notification_id_;
  int completed_verdicts_;
};

struct ClassifyContext {
  std::optional<std::string> user_pattern;  // M1
  const UserProfile* profile = nullptr;     // M2
  DatasetView dataset = DatasetView::none;  // recorded on the result
};

struct ClassifyOptions {
  int ensemble_size = kDefaultEnsembleSize;
  double temperature = kRaterTemperature;
  bool parallel = true;
  const TemplateSet* templates = nullptr;  // default_templates() when null
};

// Renders one prompt, asks `ensemble_size` raters, retries an unparseable answer once and
// then falls back to non-urgent, and votes. Preconditions are checked before any call.
ClassificationResult classify(Method method, ChatBackend& backend, PromptVariant variant,
                              const Notification& notification, const ClassifyContext& context,
                              const ClassifyOptions& options = {});

// ISO 8601 UTC; SOURCE_DATE_EPOCH pins the clock for reproducible artefacts.
std::string timestamp_now();

struct ProfileRequest {
  std::string participant_id;
  DatasetView dataset = DatasetView::D2;
  const TemplateSet* templates = nullptr;
  std::function<std::string()> clock = timestamp_now;
};

// Analyser step: one completion at temperature 0 over the whole training view.
UserProfile build_profile(ChatBackend& backend, PromptVariant variant,
                          std::span<const LabeledNotification> training,
                          const ProfileRequest& request);

// Training examples for a view: SR -> self-report labels, D1/D2 -> interaction train set.
std::vector<LabeledNotification> training_view(const DatasetBundle& bundle, DatasetView view);

struct ProfileKey {
  std::string participant_id;
  DatasetView dataset = DatasetView::D2;
  std::string model_id;
  std::string template_version;
  std::string training_digest;

  std::string hash() const;
  // <participant>-M2-<dataset>-<hash>.json
  std::string file_name() const;
};

ProfileKey profile_key(const DatasetBundle& bundle, DatasetView dataset, const ChatBackend& backend,
                       const TemplateSet& templates);

// One JSON file per profile; writes replace atomically, reads never see partial files.
class ProfileCache {
 public:
  explicit ProfileCache(std::filesystem::path dir);
  std::optional<UserProfile> find(const ProfileKey& key) const;
  void store(const ProfileKey& key, const UserProfile& profile) const;
  std::filesystem::path path_for(const ProfileKey& key) const { return dir_ / key.file_name(); }

 private:
  std::filesystem::path dir_;
};

struct RunOptions {
  ClassifyOptions classify;
  const ProfileCache* cache = nullptr;
  std::function<std::string()> clock = timestamp_now;
};

struct ItemFailure {
  std::string notification_id;
  std::string message;
  int attempts = 0;
  int completed_verdicts = 0;
};

struct ConfigurationRun {
  Configuration config;
  std::string participant_id;
  std::vector<ClassificationResult> results;  // test-set order
  std::optional<UserProfile> profile;
  std::vector<ItemFailure> failures;
  std::optional<std::string> error;  // the whole cell failed (e.g. profile step)

  bool complete() const { return !error && failures.empty(); }
};

// Throws ConfigError for an invalid pair or a bundle without the needed data.
void check_runnable(const Configuration& config, const DatasetBundle& bundle);

ConfigurationRun run_configuration(const Configuration& config, const DatasetBundle& bundle,
                                   ChatBackend& backend, const RunOptions& options = {});

}  // namespace persono
