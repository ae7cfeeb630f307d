#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace persono {

enum class SenderRole { friend_, supervisor, group };
enum class Activity { doodling, brainstorming, reading };
enum class UrgencyLabel : int { non_urgent = 0, urgent = 1 };
enum class LabelSource { self_report, interaction };

// P1 exposes sender and content; P2 adds the activity.
enum class PromptVariant { P1, P2 };
// Base: no user information. M1: self-reported pattern. M2: analyser-built profile.
enum class Method { Base, M1, M2 };
// Training view: self-report labels, interaction labels, interaction labels with activity.
enum class DatasetView { SR, D1, D2, none };

inline constexpr Activity kActivities[] = {Activity::doodling, Activity::brainstorming,
                                           Activity::reading};

// Reply latency (seconds from delivery) at or below which a reply counts as urgent.
inline constexpr double kUrgentReplyWindowS = 30.0;
// Unanswered notifications leave the field of view after this many seconds.
inline constexpr double kAutoDismissS = 20.0;

std::string_view to_string(SenderRole role);
std::string_view to_string(Activity activity);
std::string_view to_string(UrgencyLabel label);
std::string_view to_string(LabelSource source);
std::string_view to_string(PromptVariant variant);
std::string_view to_string(Method method);
std::string_view to_string(DatasetView view);

// Parsers throw std::invalid_argument naming the rejected token.
SenderRole parse_sender_role(std::string_view text);
Activity parse_activity(std::string_view text);
UrgencyLabel parse_urgency(std::string_view text);
LabelSource parse_label_source(std::string_view text);
PromptVariant parse_variant(std::string_view text);
Method parse_method(std::string_view text);
DatasetView parse_dataset_view(std::string_view text);

inline int to_int(UrgencyLabel label) { return static_cast<int>(label); }
inline UrgencyLabel flip(UrgencyLabel label) {
  return label == UrgencyLabel::urgent ? UrgencyLabel::non_urgent : UrgencyLabel::urgent;
}

struct Notification {
  std::string id;
  std::string sender_name;
  SenderRole sender_role = SenderRole::friend_;
  bool is_group = false;
  std::string content;
  // Scheduling fields are set together, only for interaction-phase notifications.
  std::optional<Activity> activity;
  std::optional<int> session_index;
  std::optional<double> offset_s;

  bool scheduled() const { return activity && session_index && offset_s; }
  bool operator==(const Notification&) const = default;
};

struct LabeledNotification {
  Notification notification;
  UrgencyLabel label = UrgencyLabel::non_urgent;
  LabelSource source = LabelSource::interaction;
  std::optional<double> response_latency_s;

  bool operator==(const LabeledNotification&) const = default;
};

// Throws DatasetError when the record-level invariants do not hold.
void validate(const Notification& n);
void validate(const LabeledNotification& item);

}  // namespace persono
