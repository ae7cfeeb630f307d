#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "persono/types.hpp"

namespace persono {

inline constexpr std::size_t kCorpusSampleSize = 198;
inline constexpr std::size_t kSelfLabelCount = 90;
inline constexpr std::size_t kInteractionCount = 108;
inline constexpr std::size_t kGroupMessageCount = 40;
inline constexpr std::size_t kSessionsPerActivity = 2;
inline constexpr std::size_t kNotificationsPerSession = 18;
inline constexpr std::size_t kTestPerActivity = 6;
inline constexpr std::size_t kTrainCount = kInteractionCount - 3 * kTestPerActivity;
inline constexpr std::size_t kTestCount = 3 * kTestPerActivity;
inline constexpr double kMinGapS = 20.0;
inline constexpr double kMaxGapS = 32.0;
inline constexpr double kSessionLengthS = 600.0;

struct RosterEntry {
  std::string name;
  SenderRole role = SenderRole::friend_;
};

// Roster CSV: header `name,role`, role in {friend, supervisor}.
std::vector<RosterEntry> load_roster(const std::filesystem::path& path);

// Draws n distinct non-empty (trimmed) lines; order and selection follow the seed.
std::vector<std::string> sample_corpus(const std::filesystem::path& corpus_path, std::size_t n,
                                       std::uint64_t seed);

struct SenderOptions {
  std::size_t group_count = kGroupMessageCount;
  std::vector<std::string> group_names = {"Group 1", "Group 2", "Group 3", "Group 4"};
};

// Ids are "P<participant>-N<index>" with a zero-padded three-digit index.
std::string notification_id(std::string_view participant_id, std::size_t index);

std::vector<Notification> assign_senders(std::span<const std::string> contents,
                                         std::span<const RosterEntry> roster,
                                         std::string_view participant_id, std::uint64_t seed,
                                         const SenderOptions& options = {});

struct PhaseSplit {
  std::vector<Notification> self_label_pool;   // 90, id order
  std::vector<Notification> interaction_pool;  // 108, id order
};

PhaseSplit split_phases(std::span<const Notification> notifications, std::uint64_t seed);

struct SessionPlan {
  Activity activity = Activity::doodling;
  int session_index = 1;
  std::vector<std::pair<std::string, double>> entries;  // (notification id, offset_s)
};

struct SessionSchedule {
  std::vector<SessionPlan> plans;     // activity-major, then session
  std::vector<Notification> pool;     // id order, scheduling fields set
};

SessionSchedule plan_sessions(std::span<const Notification> interaction_pool, std::uint64_t seed);

// Rebuilds the plans from scheduled notifications.
std::vector<SessionPlan> session_plans(std::span<const Notification> scheduled_pool);

// Throws DatasetError naming the first violated plan invariant.
void validate(const SessionPlan& plan);

enum class InteractionAction { replied, dismissed, ignored };
std::string_view to_string(InteractionAction action);

struct InteractionEvent {
  std::string notification_id;
  InteractionAction action = InteractionAction::ignored;
  std::optional<double> latency_s;
  // Reply after the auto-dismiss window, i.e. opened from the notification panel.
  bool reopened_from_panel = false;

  bool operator==(const InteractionEvent&) const = default;
};

// A missing event means the notification was never acted on (ignored).
LabeledNotification label_from_interaction(const Notification& notification,
                                           const std::optional<InteractionEvent>& response);

// Chronological key used by the train/test split and by test-set ordering.
bool chronological_less(const Notification& a, const Notification& b);

struct TrainTestSplit {
  std::vector<LabeledNotification> train;  // 90, chronological
  std::vector<LabeledNotification> test;   // 18, chronological
};

TrainTestSplit split_train_test(std::span<const LabeledNotification> labelled_interaction);

// Self-label sheet: header `id,sender,content,urgent`, RFC 4180 quoting.
void export_label_sheet(std::span<const Notification> self_label_pool,
                        const std::filesystem::path& csv_path,
                        std::span<const LabeledNotification> filled = {});

std::vector<LabeledNotification> import_self_labels(const std::filesystem::path& csv_path,
                                                    std::span<const Notification> self_label_pool);

struct DatasetBundle {
  std::string participant_id;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> anonymisation_map;  // original name -> placeholder
  std::vector<Notification> self_label_pool;
  std::vector<Notification> interaction_pool;
  std::vector<LabeledNotification> sr;     // empty until self labels attached
  std::vector<LabeledNotification> train;  // empty until interaction labelled
  std::vector<LabeledNotification> test;
  // Self-described response pattern (experience sampling), used by the M1 method.
  std::optional<std::string> reported_pattern;

  bool has_self_labels() const { return !sr.empty(); }
  bool has_interaction_labels() const { return !train.empty(); }
  bool operator==(const DatasetBundle&) const = default;
};

// sample -> assign -> split -> plan -> anonymise, each stage on a seed derived from `seed`.
DatasetBundle build_bundle(const std::filesystem::path& corpus_path,
                           std::span<const RosterEntry> roster, std::string_view participant_id,
                           std::uint64_t seed, const SenderOptions& options = {});

// Replaces individual sender names with "Friend n" / "Supervisor" placeholders. Idempotent.
void anonymise(DatasetBundle& bundle);

void attach_interaction_labels(DatasetBundle& bundle,
                               std::span<const LabeledNotification> labelled_interaction);

// Throws DatasetError naming the specific failed invariant.
void validate(const DatasetBundle& bundle);

nlohmann::json bundle_to_json(const DatasetBundle& bundle);
DatasetBundle bundle_from_json(const nlohmann::json& doc);

// Anonymises before writing; load validates every invariant.
void save_bundle(DatasetBundle bundle, const std::filesystem::path& path);
DatasetBundle load_bundle(const std::filesystem::path& path);

// Write to a sibling temp file and rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace persono
