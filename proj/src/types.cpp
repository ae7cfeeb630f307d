#include "persono/types.hpp"

#include <stdexcept>

#include "persono/error.hpp"

namespace persono {

std::string_view to_string(SenderRole role) {
  switch (role) {
    case SenderRole::friend_: return "friend";
    case SenderRole::supervisor: return "supervisor";
    case SenderRole::group: return "group";
  }
  return "?";
}

std::string_view to_string(Activity activity) {
  switch (activity) {
    case Activity::doodling: return "doodling";
    case Activity::brainstorming: return "brainstorming";
    case Activity::reading: return "reading";
  }
  return "?";
}

std::string_view to_string(UrgencyLabel label) {
  return label == UrgencyLabel::urgent ? "urgent" : "non_urgent";
}

std::string_view to_string(LabelSource source) {
  return source == LabelSource::self_report ? "self_report" : "interaction";
}

std::string_view to_string(PromptVariant variant) {
  return variant == PromptVariant::P1 ? "P1" : "P2";
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Base: return "Base";
    case Method::M1: return "M1";
    case Method::M2: return "M2";
  }
  return "?";
}

std::string_view to_string(DatasetView view) {
  switch (view) {
    case DatasetView::SR: return "SR";
    case DatasetView::D1: return "D1";
    case DatasetView::D2: return "D2";
    case DatasetView::none: return "none";
  }
  return "?";
}

PromptVariant parse_variant(std::string_view text) {
  if (text == "P1") return PromptVariant::P1;
  if (text == "P2") return PromptVariant::P2;
  throw std::invalid_argument("unknown prompt variant '" + std::string(text) + "' (allowed: P1, P2)");
}

Method parse_method(std::string_view text) {
  if (text == "Base") return Method::Base;
  if (text == "M1") return Method::M1;
  if (text == "M2") return Method::M2;
  throw std::invalid_argument("unknown method '" + std::string(text) + "' (allowed: Base, M1, M2)");
}

DatasetView parse_dataset_view(std::string_view text) {
  if (text == "SR") return DatasetView::SR;
  if (text == "D1") return DatasetView::D1;
  if (text == "D2") return DatasetView::D2;
  if (text == "none") return DatasetView::none;
  throw std::invalid_argument("unknown dataset '" + std::string(text) + "' (allowed: SR, D1, D2)");
}

SenderRole parse_sender_role(std::string_view text) {
  if (text == "friend") return SenderRole::friend_;
  if (text == "supervisor") return SenderRole::supervisor;
  if (text == "group") return SenderRole::group;
  throw std::invalid_argument("unknown sender role '" + std::string(text) + "'");
}

Activity parse_activity(std::string_view text) {
  for (Activity a : kActivities) {
    if (to_string(a) == text) return a;
  }
  throw std::invalid_argument("unknown activity '" + std::string(text) + "'");
}

UrgencyLabel parse_urgency(std::string_view text) {
  if (text == "urgent" || text == "1") return UrgencyLabel::urgent;
  if (text == "non_urgent" || text == "0") return UrgencyLabel::non_urgent;
  throw std::invalid_argument("unknown urgency label '" + std::string(text) + "'");
}

LabelSource parse_label_source(std::string_view text) {
  if (text == "self_report") return LabelSource::self_report;
  if (text == "interaction") return LabelSource::interaction;
  throw std::invalid_argument("unknown label source '" + std::string(text) + "'");
}

void validate(const Notification& n) {
  if (n.id.empty()) throw DatasetError("notification with empty id");
  if (n.is_group != (n.sender_role == SenderRole::group)) {
    throw DatasetError(n.id + ": is_group must equal (sender_role == group)");
  }
  const int present = int(n.activity.has_value()) + int(n.session_index.has_value()) +
                      int(n.offset_s.has_value());
  if (present != 0 && present != 3) {
    throw DatasetError(n.id + ": activity, session_index and offset_s must be set together");
  }
  if (n.session_index && (*n.session_index < 1 || *n.session_index > 2)) {
    throw DatasetError(n.id + ": session_index must be 1 or 2");
  }
  if (n.offset_s && *n.offset_s < 0.0) throw DatasetError(n.id + ": negative offset_s");
}

void validate(const LabeledNotification& item) {
  validate(item.notification);
  const auto& id = item.notification.id;
  if (item.response_latency_s && *item.response_latency_s < 0.0) {
    throw DatasetError(id + ": negative response latency");
  }
  if (item.source == LabelSource::interaction) {
    if (!item.notification.activity) {
      throw DatasetError(id + ": interaction label without activity");
    }
    if (item.label == UrgencyLabel::urgent &&
        (!item.response_latency_s || *item.response_latency_s > kUrgentReplyWindowS)) {
      throw DatasetError(id + ": urgent interaction label requires a reply latency <= 30 s");
    }
  } else if (item.response_latency_s) {
    throw DatasetError(id + ": self-report label must not carry a response latency");
  }
}

}  // namespace persono
