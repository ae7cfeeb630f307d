#include "persono/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "persono/csv.hpp"
#include "persono/error.hpp"
#include "persono/random.hpp"

namespace persono {
namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\v\f");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\v\f");
  return s.substr(first, last - first + 1);
}

void require_unique_ids(std::span<const Notification> items) {
  std::unordered_set<std::string> seen;
  for (const auto& n : items) {
    if (!seen.insert(n.id).second) throw DatasetError("duplicate id " + n.id);
  }
}

void sort_by_id(std::vector<Notification>& items) {
  std::sort(items.begin(), items.end(),
            [](const Notification& a, const Notification& b) { return a.id < b.id; });
}

constexpr double kGapTolerance = 1e-9;

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  static std::atomic<unsigned> counter{0};
  const auto tag = std::hash<std::thread::id>{}(std::this_thread::get_id()) ^ counter++;
  auto tmp = path;
  tmp += ".tmp-" + hex64(tag).substr(8);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DatasetError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DatasetError("cannot replace " + path.string() + ": " + ec.message());
  }
}

std::vector<RosterEntry> load_roster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read roster " + path.string());
  const auto rows = csv::read(in);
  if (rows.empty() || rows.front().fields != std::vector<std::string>{"name", "role"}) {
    throw DatasetError("roster " + path.string() + ": header must be 'name,role'");
  }
  std::vector<RosterEntry> roster;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() != 2) throw DatasetError("roster row " + std::to_string(r) + ": expected 2 fields");
    RosterEntry entry{std::string(trim(f[0])), SenderRole::friend_};
    const auto role = trim(f[1]);
    if (role == "friend") {
      entry.role = SenderRole::friend_;
    } else if (role == "supervisor") {
      entry.role = SenderRole::supervisor;
    } else {
      throw DatasetError("roster row " + std::to_string(r) + ": role must be friend or supervisor");
    }
    if (entry.name.empty()) throw DatasetError("roster row " + std::to_string(r) + ": empty name");
    roster.push_back(std::move(entry));
  }
  return roster;
}

std::vector<std::string> sample_corpus(const std::filesystem::path& corpus_path, std::size_t n,
                                       std::uint64_t seed) {
  std::ifstream in(corpus_path, std::ios::binary);
  if (!in) throw DatasetError("cannot read corpus " + corpus_path.string());
  std::vector<std::string> usable;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (!t.empty()) usable.emplace_back(t);
  }
  if (usable.size() < n) {
    throw DatasetError("insufficient corpus: need " + std::to_string(n) + " non-empty lines, found " +
                       std::to_string(usable.size()));
  }
  std::vector<std::size_t> index(usable.size());
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
  Rng rng(seed);
  rng.shuffle(index);
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(usable[index[i]]);
  return out;
}

std::string notification_id(std::string_view participant_id, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", index);
  return "P" + std::string(participant_id) + "-N" + buf;
}

std::vector<Notification> assign_senders(std::span<const std::string> contents,
                                         std::span<const RosterEntry> roster,
                                         std::string_view participant_id, std::uint64_t seed,
                                         const SenderOptions& options) {
  if (roster.empty()) throw DatasetError("empty roster");
  const bool has_friend = std::any_of(roster.begin(), roster.end(),
                                      [](const auto& e) { return e.role == SenderRole::friend_; });
  const bool has_supervisor = std::any_of(
      roster.begin(), roster.end(), [](const auto& e) { return e.role == SenderRole::supervisor; });
  if (!has_friend || !has_supervisor) {
    throw DatasetError("roster needs at least one friend and one supervisor");
  }
  if (std::any_of(roster.begin(), roster.end(),
                  [](const auto& e) { return e.role == SenderRole::group; })) {
    throw DatasetError("roster entries must be individuals; group names come from the group list");
  }
  if (options.group_count > contents.size()) {
    throw DatasetError("group count " + std::to_string(options.group_count) + " exceeds " +
                       std::to_string(contents.size()) + " notifications");
  }
  if (options.group_count > 0 && options.group_names.empty()) {
    throw DatasetError("group messages requested but the group-name list is empty");
  }

  Rng rng(seed);
  std::vector<std::size_t> order(contents.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<bool> is_group(contents.size(), false);
  for (std::size_t i = 0; i < options.group_count; ++i) is_group[order[i]] = true;

  std::vector<RosterEntry> shuffled(roster.begin(), roster.end());
  rng.shuffle(shuffled);

  std::vector<Notification> out;
  out.reserve(contents.size());
  std::size_t next_group = 0;
  std::size_t next_person = 0;
  for (std::size_t i = 0; i < contents.size(); ++i) {
    Notification n;
    n.id = notification_id(participant_id, i + 1);
    n.content = contents[i];
    if (is_group[i]) {
      n.sender_name = options.group_names[next_group++ % options.group_names.size()];
      n.sender_role = SenderRole::group;
      n.is_group = true;
    } else {
      const auto& who = shuffled[next_person++ % shuffled.size()];
      n.sender_name = who.name;
      n.sender_role = who.role;
    }
    out.push_back(std::move(n));
  }
  return out;
}

PhaseSplit split_phases(std::span<const Notification> notifications, std::uint64_t seed) {
  if (notifications.size() != kCorpusSampleSize) {
    throw DatasetError("expected 198 notifications, got " + std::to_string(notifications.size()));
  }
  require_unique_ids(notifications);
  std::vector<Notification> all(notifications.begin(), notifications.end());
  sort_by_id(all);
  Rng rng(seed);
  rng.shuffle(all);
  PhaseSplit split;
  split.self_label_pool.assign(all.begin(), all.begin() + kSelfLabelCount);
  split.interaction_pool.assign(all.begin() + kSelfLabelCount, all.end());
  sort_by_id(split.self_label_pool);
  sort_by_id(split.interaction_pool);
  return split;
}

SessionSchedule plan_sessions(std::span<const Notification> interaction_pool, std::uint64_t seed) {
  if (interaction_pool.size() != kInteractionCount) {
    throw DatasetError("expected 108 interaction notifications, got " +
                       std::to_string(interaction_pool.size()));
  }
  require_unique_ids(interaction_pool);
  std::vector<Notification> pool(interaction_pool.begin(), interaction_pool.end());
  sort_by_id(pool);
  Rng assign(seed);
  assign.shuffle(pool);

  SessionSchedule schedule;
  std::size_t next = 0;
  for (Activity activity : kActivities) {
    for (int session = 1; session <= int(kSessionsPerActivity); ++session) {
      SessionPlan plan{activity, session, {}};
      std::vector<double> offsets;
      for (int attempt = 0;; ++attempt) {
        Rng rng(derive_seed(seed, {to_string(activity), std::to_string(session),
                                   std::to_string(attempt)}));
        offsets.clear();
        double t = rng.uniform(kMinGapS, kMaxGapS);
        offsets.push_back(t);
        for (std::size_t k = 1; k < kNotificationsPerSession; ++k) {
          t += rng.uniform(kMinGapS, kMaxGapS);
          offsets.push_back(t);
        }
        if (offsets.back() <= kSessionLengthS) break;
      }
      for (std::size_t k = 0; k < kNotificationsPerSession; ++k) {
        Notification& n = pool[next++];
        n.activity = activity;
        n.session_index = session;
        n.offset_s = offsets[k];
        plan.entries.emplace_back(n.id, offsets[k]);
      }
      schedule.plans.push_back(std::move(plan));
    }
  }
  sort_by_id(pool);
  schedule.pool = std::move(pool);
  return schedule;
}

std::vector<SessionPlan> session_plans(std::span<const Notification> scheduled_pool) {
  std::vector<SessionPlan> plans;
  for (Activity activity : kActivities) {
    for (int session = 1; session <= int(kSessionsPerActivity); ++session) {
      std::vector<const Notification*> members;
      for (const auto& n : scheduled_pool) {
        if (!n.scheduled()) throw DatasetError(n.id + ": interaction notification without schedule");
        if (*n.activity == activity && *n.session_index == session) members.push_back(&n);
      }
      std::sort(members.begin(), members.end(),
                [](const Notification* a, const Notification* b) { return chronological_less(*a, *b); });
      SessionPlan plan{activity, session, {}};
      for (const auto* n : members) plan.entries.emplace_back(n->id, *n->offset_s);
      plans.push_back(std::move(plan));
    }
  }
  return plans;
}

void validate(const SessionPlan& plan) {
  const std::string where =
      std::string(to_string(plan.activity)) + " session " + std::to_string(plan.session_index);
  if (plan.entries.size() != kNotificationsPerSession) {
    throw DatasetError(where + ": " + std::to_string(plan.entries.size()) +
                       " notifications, expected 18");
  }
  if (plan.entries.front().second < 0.0) throw DatasetError(where + ": negative first offset");
  for (std::size_t i = 1; i < plan.entries.size(); ++i) {
    const double gap = plan.entries[i].second - plan.entries[i - 1].second;
    if (gap < kMinGapS - kGapTolerance || gap > kMaxGapS + kGapTolerance) {
      throw DatasetError(where + ": gap " + std::to_string(gap) + " s outside [20, 32] before " +
                         plan.entries[i].first);
    }
  }
  if (plan.entries.back().second > kSessionLengthS) {
    throw DatasetError(where + ": last offset exceeds the 600 s session");
  }
}

std::string_view to_string(InteractionAction action) {
  switch (action) {
    case InteractionAction::replied: return "replied";
    case InteractionAction::dismissed: return "dismissed";
    case InteractionAction::ignored: return "ignored";
  }
  return "?";
}

LabeledNotification label_from_interaction(const Notification& notification,
                                           const std::optional<InteractionEvent>& response) {
  LabeledNotification out{notification, UrgencyLabel::non_urgent, LabelSource::interaction, {}};
  if (response) {
    if (response->notification_id != notification.id) {
      throw DatasetError("event for " + response->notification_id + " applied to " + notification.id);
    }
    if (response->latency_s && *response->latency_s < 0.0) {
      throw DatasetError(notification.id + ": negative response latency");
    }
    if (response->action == InteractionAction::replied) {
      if (!response->latency_s) throw DatasetError(notification.id + ": reply without latency");
      out.response_latency_s = response->latency_s;
      if (*response->latency_s <= kUrgentReplyWindowS) out.label = UrgencyLabel::urgent;
    }
  }
  validate(out);
  return out;
}

bool chronological_less(const Notification& a, const Notification& b) {
  const auto key = [](const Notification& n) {
    return std::make_tuple(n.activity ? int(*n.activity) : -1, n.session_index.value_or(0),
                           n.offset_s.value_or(0.0));
  };
  const auto ka = key(a);
  const auto kb = key(b);
  if (ka != kb) return ka < kb;
  return a.id < b.id;
}

TrainTestSplit split_train_test(std::span<const LabeledNotification> labelled_interaction) {
  if (labelled_interaction.size() != kInteractionCount) {
    throw DatasetError("expected 108 labelled interaction notifications, got " +
                       std::to_string(labelled_interaction.size()));
  }
  std::vector<LabeledNotification> items(labelled_interaction.begin(), labelled_interaction.end());
  for (const auto& item : items) {
    if (!item.notification.scheduled()) {
      throw DatasetError(item.notification.id + ": missing activity/session/offset");
    }
    if (item.source != LabelSource::interaction) {
      throw DatasetError(item.notification.id + ": not an interaction label");
    }
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return chronological_less(a.notification, b.notification);
  });
  for (std::size_t i = 1; i < items.size(); ++i) {
    if (items[i].notification.id == items[i - 1].notification.id) {
      throw DatasetError("duplicate id " + items[i].notification.id);
    }
  }
  TrainTestSplit split;
  for (Activity activity : kActivities) {
    std::vector<const LabeledNotification*> group;
    for (const auto& item : items) {
      if (*item.notification.activity == activity) group.push_back(&item);
    }
    if (group.size() != kInteractionCount / 3) {
      throw DatasetError(std::string(to_string(activity)) + ": " + std::to_string(group.size()) +
                         " notifications, expected 36");
    }
    const std::size_t cut = group.size() - kTestPerActivity;
    for (std::size_t i = 0; i < group.size(); ++i) {
      (i < cut ? split.train : split.test).push_back(*group[i]);
    }
  }
  return split;
}

void export_label_sheet(std::span<const Notification> self_label_pool,
                        const std::filesystem::path& csv_path,
                        std::span<const LabeledNotification> filled) {
  std::unordered_map<std::string, UrgencyLabel> known;
  for (const auto& item : filled) known.emplace(item.notification.id, item.label);
  std::ostringstream out;
  const std::vector<std::string> header{"id", "sender", "content", "urgent"};
  csv::write_row(out, header);
  for (const auto& n : self_label_pool) {
    std::string urgent;
    if (auto it = known.find(n.id); it != known.end()) urgent = std::to_string(to_int(it->second));
    const std::vector<std::string> row{n.id, n.sender_name, n.content, urgent};
    csv::write_row(out, row);
  }
  write_file_atomic(csv_path, out.str());
}

std::vector<LabeledNotification> import_self_labels(const std::filesystem::path& csv_path,
                                                    std::span<const Notification> self_label_pool) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw DatasetError("cannot read " + csv_path.string());
  std::vector<csv::Row> rows;
  try {
    rows = csv::read(in);
  } catch (const ParseError& e) {
    throw DatasetError(csv_path.string() + ": " + e.what());
  }
  if (rows.empty() ||
      rows.front().fields != std::vector<std::string>{"id", "sender", "content", "urgent"}) {
    throw DatasetError(csv_path.string() + ": header must be 'id,sender,content,urgent'");
  }
  std::unordered_map<std::string, const Notification*> pool;
  for (const auto& n : self_label_pool) pool.emplace(n.id, &n);

  std::vector<LabeledNotification> out;
  std::unordered_set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    const std::string where = "row " + std::to_string(r);
    if (f.size() != 4) {
      throw DatasetError(where + ": expected 4 fields, got " + std::to_string(f.size()));
    }
    const std::string id(trim(f[0]));
    const auto it = pool.find(id);
    if (it == pool.end()) throw DatasetError(where + ": unknown id '" + id + "'");
    if (!seen.insert(id).second) throw DatasetError(where + ": duplicate id '" + id + "'");
    const auto value = trim(f[3]);
    if (value != "0" && value != "1") {
      throw DatasetError(where + ": urgent must be 0 or 1, got '" + std::string(value) + "'");
    }
    out.push_back({*it->second, value == "1" ? UrgencyLabel::urgent : UrgencyLabel::non_urgent,
                   LabelSource::self_report, std::nullopt});
  }
  if (out.size() != kSelfLabelCount) {
    throw DatasetError("expected 90, got " + std::to_string(out.size()));
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.notification.id < b.notification.id; });
  return out;
}

void anonymise(DatasetBundle& bundle) {
  std::vector<Notification*> all;
  for (auto& n : bundle.self_label_pool) all.push_back(&n);
  for (auto& n : bundle.interaction_pool) all.push_back(&n);
  std::sort(all.begin(), all.end(), [](auto* a, auto* b) { return a->id < b->id; });

  auto& map = bundle.anonymisation_map;
  std::set<std::string> placeholders;
  std::size_t friends = 0;
  std::size_t supervisors = 0;
  for (const auto& [name, placeholder] : map) {
    placeholders.insert(placeholder);
    (placeholder.rfind("Friend", 0) == 0 ? friends : supervisors)++;
  }

  std::vector<std::string> new_supervisors;
  std::vector<std::string> new_friends;
  for (const auto* n : all) {
    if (n->is_group || map.count(n->sender_name) || placeholders.count(n->sender_name)) continue;
    auto& list = n->sender_role == SenderRole::supervisor ? new_supervisors : new_friends;
    if (std::find(list.begin(), list.end(), n->sender_name) == list.end()) {
      list.push_back(n->sender_name);
    }
  }
  for (const auto& name : new_friends) {
    map[name] = "Friend " + std::to_string(++friends);
  }
  if (supervisors == 0 && new_supervisors.size() == 1) {
    map[new_supervisors.front()] = "Supervisor";
  } else {
    for (const auto& name : new_supervisors) map[name] = "Supervisor " + std::to_string(++supervisors);
  }

  const auto rename = [&map](Notification& n) {
    if (n.is_group) return;
    if (auto it = map.find(n.sender_name); it != map.end()) n.sender_name = it->second;
  };
  for (auto* n : all) rename(*n);
  for (auto* list : {&bundle.sr, &bundle.train, &bundle.test}) {
    for (auto& item : *list) rename(item.notification);
  }
}

void attach_interaction_labels(DatasetBundle& bundle,
                               std::span<const LabeledNotification> labelled_interaction) {
  std::unordered_map<std::string, const Notification*> pool;
  for (const auto& n : bundle.interaction_pool) pool.emplace(n.id, &n);
  for (const auto& item : labelled_interaction) {
    const auto it = pool.find(item.notification.id);
    if (it == pool.end() || !(*it->second == item.notification)) {
      throw DatasetError(item.notification.id + ": label does not match the interaction pool");
    }
  }
  auto split = split_train_test(labelled_interaction);
  bundle.train = std::move(split.train);
  bundle.test = std::move(split.test);
}

DatasetBundle build_bundle(const std::filesystem::path& corpus_path,
                           std::span<const RosterEntry> roster, std::string_view participant_id,
                           std::uint64_t seed, const SenderOptions& options) {
  if (participant_id.empty()) throw DatasetError("empty participant id");
  const auto contents = sample_corpus(corpus_path, kCorpusSampleSize, derive_seed(seed, {"sample"}));
  const auto notifications =
      assign_senders(contents, roster, participant_id, derive_seed(seed, {"senders"}), options);
  auto phases = split_phases(notifications, derive_seed(seed, {"phases"}));
  auto schedule = plan_sessions(phases.interaction_pool, derive_seed(seed, {"sessions"}));

  DatasetBundle bundle;
  bundle.participant_id = std::string(participant_id);
  bundle.seed = seed;
  bundle.self_label_pool = std::move(phases.self_label_pool);
  bundle.interaction_pool = std::move(schedule.pool);
  anonymise(bundle);
  validate(bundle);
  return bundle;
}

void validate(const DatasetBundle& bundle) {
  if (bundle.participant_id.empty()) throw DatasetError("empty participant_id");
  if (bundle.self_label_pool.size() != kSelfLabelCount) {
    throw DatasetError("self-label pool count " + std::to_string(bundle.self_label_pool.size()) +
                       " ≠ 90");
  }
  if (bundle.interaction_pool.size() != kInteractionCount) {
    throw DatasetError("interaction pool count " + std::to_string(bundle.interaction_pool.size()) +
                       " ≠ 108");
  }
  std::vector<Notification> all(bundle.self_label_pool);
  all.insert(all.end(), bundle.interaction_pool.begin(), bundle.interaction_pool.end());
  require_unique_ids(all);
  const auto groups =
      std::count_if(all.begin(), all.end(), [](const Notification& n) { return n.is_group; });
  if (std::size_t(groups) != kGroupMessageCount) {
    throw DatasetError("group count " + std::to_string(groups) + " ≠ 40");
  }
  for (const auto& n : all) validate(n);
  for (const auto& n : bundle.self_label_pool) {
    if (n.activity) throw DatasetError(n.id + ": self-label notification carries a schedule");
  }
  for (const auto& plan : session_plans(bundle.interaction_pool)) validate(plan);

  std::unordered_map<std::string, const Notification*> self_pool;
  for (const auto& n : bundle.self_label_pool) self_pool.emplace(n.id, &n);
  if (!bundle.sr.empty()) {
    if (bundle.sr.size() != kSelfLabelCount) {
      throw DatasetError("self-report labels: expected 90, got " + std::to_string(bundle.sr.size()));
    }
    std::unordered_set<std::string> seen;
    for (const auto& item : bundle.sr) {
      validate(item);
      const auto& id = item.notification.id;
      if (item.source != LabelSource::self_report) throw DatasetError(id + ": SR label source");
      const auto it = self_pool.find(id);
      if (it == self_pool.end() || !(*it->second == item.notification)) {
        throw DatasetError(id + ": self-report label outside the self-label pool");
      }
      if (!seen.insert(id).second) throw DatasetError("duplicate self-report label " + id);
    }
  }

  if (bundle.train.empty() != bundle.test.empty()) {
    throw DatasetError("train and test sets must be present together");
  }
  if (!bundle.train.empty()) {
    if (bundle.train.size() != kTrainCount || bundle.test.size() != kTestCount) {
      throw DatasetError("train/test sizes " + std::to_string(bundle.train.size()) + "/" +
                         std::to_string(bundle.test.size()) + " ≠ 90/18");
    }
    std::unordered_map<std::string, const Notification*> pool;
    for (const auto& n : bundle.interaction_pool) pool.emplace(n.id, &n);
    std::vector<LabeledNotification> labelled(bundle.train);
    labelled.insert(labelled.end(), bundle.test.begin(), bundle.test.end());
    for (const auto& item : labelled) {
      validate(item);
      const auto it = pool.find(item.notification.id);
      if (it == pool.end() || !(*it->second == item.notification)) {
        throw DatasetError(item.notification.id + ": labelled item outside the interaction pool");
      }
    }
    const auto expected = split_train_test(labelled);
    const auto ids = [](const std::vector<LabeledNotification>& v) {
      std::set<std::string> s;
      for (const auto& item : v) s.insert(item.notification.id);
      return s;
    };
    if (ids(expected.test) != ids(bundle.test)) {
      throw DatasetError("test set is not the last 6 notifications of each activity");
    }
  }
}

namespace {

json optional_json(const auto& value) {
  if (!value) return nullptr;
  return json(*value);
}

json record_json(const Notification& n, std::string_view phase, const LabeledNotification* label) {
  json r;
  r["id"] = n.id;
  r["sender_name"] = n.sender_name;
  r["sender_role"] = to_string(n.sender_role);
  r["is_group"] = n.is_group;
  r["content"] = n.content;
  r["activity"] = n.activity ? json(to_string(*n.activity)) : json(nullptr);
  r["session_index"] = optional_json(n.session_index);
  r["offset_s"] = optional_json(n.offset_s);
  r["phase"] = phase;
  r["label"] = label ? json(to_int(label->label)) : json(nullptr);
  r["label_source"] = label ? json(to_string(label->source)) : json(nullptr);
  r["response_latency_s"] = label ? optional_json(label->response_latency_s) : json(nullptr);
  return r;
}

}  // namespace

json bundle_to_json(const DatasetBundle& bundle) {
  std::unordered_map<std::string, std::pair<std::string_view, const LabeledNotification*>> status;
  for (const auto& n : bundle.self_label_pool) status[n.id] = {"self_label", nullptr};
  for (const auto& n : bundle.interaction_pool) status[n.id] = {"interaction", nullptr};
  for (const auto& item : bundle.sr) status[item.notification.id].second = &item;
  for (const auto& item : bundle.train) status[item.notification.id] = {"train", &item};
  for (const auto& item : bundle.test) status[item.notification.id] = {"test", &item};

  std::vector<const Notification*> all;
  for (const auto& n : bundle.self_label_pool) all.push_back(&n);
  for (const auto& n : bundle.interaction_pool) all.push_back(&n);
  std::sort(all.begin(), all.end(), [](auto* a, auto* b) { return a->id < b->id; });

  json doc;
  doc["participant_id"] = bundle.participant_id;
  doc["seed"] = bundle.seed;
  doc["anonymisation_map"] = bundle.anonymisation_map;
  doc["reported_pattern"] = optional_json(bundle.reported_pattern);
  json records = json::array();
  for (const auto* n : all) {
    const auto& [phase, label] = status.at(n->id);
    records.push_back(record_json(*n, phase, label));
  }
  doc["notifications"] = std::move(records);
  return doc;
}

DatasetBundle bundle_from_json(const json& doc) {
  DatasetBundle bundle;
  std::string current = "<top level>";
  try {
    bundle.participant_id = doc.at("participant_id").get<std::string>();
    bundle.seed = doc.at("seed").get<std::uint64_t>();
    bundle.anonymisation_map = doc.at("anonymisation_map").get<std::map<std::string, std::string>>();
    if (doc.contains("reported_pattern") && !doc["reported_pattern"].is_null()) {
      bundle.reported_pattern = doc["reported_pattern"].get<std::string>();
    }
    std::size_t sr_labels = 0;
    std::vector<LabeledNotification> labelled;
    for (const auto& r : doc.at("notifications")) {
      current = r.value("id", std::string("<no id>"));
      Notification n;
      n.id = r.at("id").get<std::string>();
      n.sender_name = r.at("sender_name").get<std::string>();
      n.sender_role = parse_sender_role(r.at("sender_role").get<std::string>());
      n.is_group = r.at("is_group").get<bool>();
      n.content = r.at("content").get<std::string>();
      if (!r.at("activity").is_null()) n.activity = parse_activity(r["activity"].get<std::string>());
      if (!r.at("session_index").is_null()) n.session_index = r["session_index"].get<int>();
      if (!r.at("offset_s").is_null()) n.offset_s = r["offset_s"].get<double>();

      std::optional<LabeledNotification> label;
      if (!r.at("label").is_null()) {
        const int value = r["label"].get<int>();
        if (value != 0 && value != 1) throw DatasetError("label must be 0 or 1");
        LabeledNotification item{n, value == 1 ? UrgencyLabel::urgent : UrgencyLabel::non_urgent,
                                 parse_label_source(r.at("label_source").get<std::string>()), {}};
        if (!r.at("response_latency_s").is_null()) {
          item.response_latency_s = r["response_latency_s"].get<double>();
        }
        label = std::move(item);
      }

      const auto phase = r.at("phase").get<std::string>();
      if (phase == "self_label") {
        bundle.self_label_pool.push_back(n);
        if (label) {
          bundle.sr.push_back(std::move(*label));
          ++sr_labels;
        }
      } else if (phase == "interaction") {
        if (label) throw DatasetError("phase 'interaction' must not carry a label");
        bundle.interaction_pool.push_back(n);
      } else if (phase == "train" || phase == "test") {
        if (!label) throw DatasetError("phase '" + phase + "' requires a label");
        bundle.interaction_pool.push_back(n);
        labelled.push_back(std::move(*label));
      } else {
        throw DatasetError("unknown phase '" + phase + "'");
      }
    }
    current = "<top level>";
    if (sr_labels != 0 && sr_labels != bundle.self_label_pool.size()) {
      throw DatasetError("self-report labels: expected 90, got " + std::to_string(sr_labels));
    }
    if (!labelled.empty()) {
      auto split = split_train_test(labelled);
      bundle.train = std::move(split.train);
      bundle.test = std::move(split.test);
      const auto stored_test = std::count_if(
          doc["notifications"].begin(), doc["notifications"].end(),
          [](const json& r) { return r["phase"] == "test"; });
      std::set<std::string> marked;
      for (const auto& r : doc["notifications"]) {
        if (r["phase"] == "test") marked.insert(r["id"].get<std::string>());
      }
      std::set<std::string> derived;
      for (const auto& item : bundle.test) derived.insert(item.notification.id);
      if (std::size_t(stored_test) != kTestCount || marked != derived) {
        throw DatasetError("test set is not the last 6 notifications of each activity");
      }
    }
  } catch (const json::exception& e) {
    throw DatasetError("malformed bundle at " + current + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DatasetError("malformed bundle at " + current + ": " + e.what());
  } catch (const DatasetError& e) {
    if (current == "<top level>") throw;
    throw DatasetError(current + ": " + e.what());
  }
  sort_by_id(bundle.self_label_pool);
  sort_by_id(bundle.interaction_pool);
  std::sort(bundle.sr.begin(), bundle.sr.end(),
            [](const auto& a, const auto& b) { return a.notification.id < b.notification.id; });
  validate(bundle);
  return bundle;
}

void save_bundle(DatasetBundle bundle, const std::filesystem::path& path) {
  anonymise(bundle);
  validate(bundle);
  write_file_atomic(path, bundle_to_json(bundle).dump(2) + "\n");
}

DatasetBundle load_bundle(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": invalid JSON: " + e.what());
  }
  return bundle_from_json(doc);
}

}  // namespace persono
