#include "persono/orchestrator.hpp"

#include <algorithm>
#include <array>
#include <ctime>
#include <future>

#include "persono/random.hpp"

namespace persono {
namespace {

using nlohmann::json;

constexpr std::array<Configuration, 7> kConfigurations{{
    {Method::Base, PromptVariant::P1, DatasetView::none},
    {Method::Base, PromptVariant::P2, DatasetView::none},
    {Method::M1, PromptVariant::P1, DatasetView::none},
    {Method::M1, PromptVariant::P2, DatasetView::none},
    {Method::M2, PromptVariant::P1, DatasetView::SR},
    {Method::M2, PromptVariant::P1, DatasetView::D1},
    {Method::M2, PromptVariant::P2, DatasetView::D2},
}};

const TemplateSet& templates_or_default(const TemplateSet* t) { return t ? *t : default_templates(); }

std::string training_digest(std::span<const LabeledNotification> training, PromptVariant variant) {
  std::uint64_t h = fnv1a64(to_string(variant));
  for (const auto& item : training) {
    h = fnv1a64(item.notification.id + '\x1f' + format_example(item, variant) + '\x1e', h);
  }
  return hex64(h);
}

}  // namespace

std::string Configuration::token() const {
  std::string out(to_string(method));
  out += '-';
  out += method == Method::M2 ? to_string(dataset) : to_string(variant);
  return out;
}

std::span<const Configuration> all_configurations() { return kConfigurations; }

std::string allowed_configuration_tokens() {
  std::string out;
  for (const auto& c : kConfigurations) {
    if (!out.empty()) out += ", ";
    out += c.token();
  }
  return out;
}

Configuration parse_configuration(std::string_view token) {
  for (const auto& c : kConfigurations) {
    if (c.token() == token) return c;
  }
  throw ConfigError("unknown configuration '" + std::string(token) +
                    "' (allowed: " + allowed_configuration_tokens() + ")");
}

std::vector<Configuration> parse_configuration_list(std::string_view list) {
  if (list == "all") return {kConfigurations.begin(), kConfigurations.end()};
  std::vector<Configuration> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    std::size_t end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    auto token = list.substr(start, end - start);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    const auto c = parse_configuration(token);
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    if (end == list.size()) break;
    start = end + 1;
  }
  return out;
}

VoteOutcome majority_vote(std::span<const UrgencyLabel> votes) {
  if (votes.empty() || votes.size() % 2 == 0) throw ConfigError("ensemble size must be odd");
  VoteOutcome out;
  out.urgent_votes = int(std::count(votes.begin(), votes.end(), UrgencyLabel::urgent));
  out.final_label = 2 * std::size_t(out.urgent_votes) > votes.size() ? UrgencyLabel::urgent
                                                                     : UrgencyLabel::non_urgent;
  return out;
}

json result_to_json(const ClassificationResult& r, bool include_raw) {
  json verdicts = json::array();
  for (const auto& v : r.verdicts) {
    json j = {{"rater_index", v.rater_index},
              {"label", to_int(v.label)},
              {"parse_ok", v.parse_ok},
              {"attempts", v.attempts},
              {"reasoning", v.reasoning}};
    if (include_raw) j["raw"] = v.raw;
    verdicts.push_back(std::move(j));
  }
  return {{"notification_id", r.notification_id},
          {"method", to_string(r.method)},
          {"variant", to_string(r.variant)},
          {"dataset", to_string(r.dataset)},
          {"urgent_votes", r.urgent_votes},
          {"score", r.score},
          {"final", to_int(r.final_label)},
          {"profile_id", r.profile_id ? json(*r.profile_id) : json(nullptr)},
          {"verdicts", std::move(verdicts)}};
}

ClassificationResult classify(Method method, ChatBackend& backend, PromptVariant variant,
                              const Notification& notification, const ClassifyContext& context,
                              const ClassifyOptions& options) {
  const int k = options.ensemble_size;
  if (k < 1 || k % 2 == 0) throw ConfigError("ensemble size must be odd");
  switch (method) {
    case Method::Base:
      if (context.user_pattern || context.profile) {
        throw ConfigError("Base takes no user pattern or profile");
      }
      break;
    case Method::M1:
      if (!context.user_pattern || context.profile) throw ConfigError("M1 requires a user pattern");
      break;
    case Method::M2:
      if (!context.profile || context.user_pattern) throw ConfigError("M2 requires a profile");
      break;
  }
  const auto& templates = templates_or_default(options.templates);
  const std::string prompt =
      render_rater_prompt(templates, variant, notification, context.user_pattern, context.profile);

  const auto ask = [&backend, &prompt, &options](int index) {
    RaterVerdict v;
    v.rater_index = index;
    v.raw = backend.complete(prompt, options.temperature);
    auto parsed = parse_verdict(v.raw);
    if (!parsed.parse_ok) {
      v.raw = backend.complete(prompt, options.temperature);
      parsed = parse_verdict(v.raw);
      v.attempts = 2;
    }
    v.label = parsed.parse_ok ? parsed.label : UrgencyLabel::non_urgent;
    v.parse_ok = parsed.parse_ok;
    v.reasoning = std::move(parsed.reasoning);
    return v;
  };

  std::vector<RaterVerdict> verdicts;
  std::optional<std::string> failure;
  int failure_attempts = 0;
  const auto record = [&](const std::exception& e) {
    if (!failure) {
      failure = e.what();
      if (const auto* be = dynamic_cast<const BackendError*>(&e)) failure_attempts = be->attempts();
    }
  };
  if (options.parallel && k > 1) {
    std::vector<std::future<RaterVerdict>> pending;
    for (int i = 0; i < k; ++i) pending.push_back(std::async(std::launch::async, ask, i));
    for (auto& f : pending) {
      try {
        verdicts.push_back(f.get());
      } catch (const std::exception& e) {
        record(e);
      }
    }
  } else {
    for (int i = 0; i < k && !failure; ++i) {
      try {
        verdicts.push_back(ask(i));
      } catch (const std::exception& e) {
        record(e);
      }
    }
  }
  if (failure) {
    throw ClassificationError(notification.id + ": " + *failure, failure_attempts, notification.id,
                              int(verdicts.size()));
  }
  std::sort(verdicts.begin(), verdicts.end(),
            [](const auto& a, const auto& b) { return a.rater_index < b.rater_index; });

  std::vector<UrgencyLabel> labels;
  for (const auto& v : verdicts) labels.push_back(v.label);
  const auto vote = majority_vote(labels);

  ClassificationResult result;
  result.notification_id = notification.id;
  result.method = method;
  result.variant = variant;
  result.dataset = context.dataset;
  result.verdicts = std::move(verdicts);
  result.urgent_votes = vote.urgent_votes;
  result.score = double(vote.urgent_votes) / double(k);
  result.final_label = vote.final_label;
  if (context.profile) result.profile_id = context.profile->profile_id;
  return result;
}

std::string timestamp_now() {
  std::time_t t = std::time(nullptr);
  if (const char* pinned = std::getenv("SOURCE_DATE_EPOCH"); pinned && *pinned) {
    t = static_cast<std::time_t>(std::strtoll(pinned, nullptr, 10));
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

UserProfile build_profile(ChatBackend& backend, PromptVariant variant,
                          std::span<const LabeledNotification> training,
                          const ProfileRequest& request) {
  if (training.empty()) throw ConfigError("cannot build a profile from an empty training set");
  if (request.dataset == DatasetView::none) throw ConfigError("profile needs a source dataset");
  const auto& templates = templates_or_default(request.templates);
  const std::string prompt = render_analyser_prompt(templates, variant, training);
  const std::string completion = backend.complete(prompt, kAnalyserTemperature);

  UserProfile p;
  p.participant_id = request.participant_id;
  p.profile_text = parse_profile(completion);
  p.method = UserProfile::Kind::M2_analysed;
  p.source_dataset = request.dataset;
  p.model_id = backend.model_id();
  p.created_at = request.clock ? request.clock() : timestamp_now();
  p.template_version = templates.version;
  const std::string digest = training_digest(training, variant);
  p.profile_id = request.participant_id + "-M2-" + std::string(to_string(request.dataset)) + "-" +
                 hex64(fnv1a64(p.model_id + '\x1f' + p.template_version + '\x1f' + digest + '\x1f' +
                               p.profile_text))
                     .substr(0, 12);
  validate(p);
  return p;
}

std::vector<LabeledNotification> training_view(const DatasetBundle& bundle, DatasetView view) {
  switch (view) {
    case DatasetView::SR:
      if (bundle.sr.empty()) throw ConfigError(bundle.participant_id + ": no self-report labels");
      return bundle.sr;
    case DatasetView::D1:
    case DatasetView::D2:
      if (bundle.train.empty()) throw ConfigError(bundle.participant_id + ": no interaction labels");
      return bundle.train;
    case DatasetView::none:
      break;
  }
  throw ConfigError("M2 needs a training dataset (SR, D1 or D2)");
}

std::string ProfileKey::hash() const {
  const std::string material = participant_id + '\x1f' + std::string(to_string(dataset)) + '\x1f' +
                               model_id + '\x1f' + template_version + '\x1f' + training_digest;
  return hex64(fnv1a64(material));
}

std::string ProfileKey::file_name() const {
  return participant_id + "-M2-" + std::string(to_string(dataset)) + "-" + hash() + ".json";
}

ProfileKey profile_key(const DatasetBundle& bundle, DatasetView dataset, const ChatBackend& backend,
                       const TemplateSet& templates) {
  const auto training = training_view(bundle, dataset);
  return {bundle.participant_id, dataset, backend.model_id(), templates.version,
          training_digest(training, variant_for(dataset))};
}

ProfileCache::ProfileCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::optional<UserProfile> ProfileCache::find(const ProfileKey& key) const {
  const auto path = path_for(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    const auto doc = json::parse(read_file(path));
    return profile_from_json(doc.at("profile"));
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable entries are rebuilt
  }
}

void ProfileCache::store(const ProfileKey& key, const UserProfile& profile) const {
  const json doc = {{"key",
                     {{"participant_id", key.participant_id},
                      {"method", "M2"},
                      {"dataset", to_string(key.dataset)},
                      {"model_id", key.model_id},
                      {"template_version", key.template_version},
                      {"training_digest", key.training_digest}}},
                    {"profile", profile_to_json(profile)}};
  write_file_atomic(path_for(key), doc.dump(2) + "\n");
}

void check_runnable(const Configuration& config, const DatasetBundle& bundle) {
  if (std::find(kConfigurations.begin(), kConfigurations.end(), config) == kConfigurations.end()) {
    throw ConfigError("invalid method/dataset pair " + std::string(to_string(config.method)) + "/" +
                      std::string(to_string(config.variant)) + "/" +
                      std::string(to_string(config.dataset)) +
                      " (allowed: " + allowed_configuration_tokens() + ")");
  }
  if (bundle.test.empty()) throw ConfigError(bundle.participant_id + ": bundle has no labelled test set");
  if (config.method == Method::M1 && !bundle.reported_pattern) {
    throw ConfigError(bundle.participant_id + ": M1 needs the participant's reported pattern");
  }
  if (config.method == Method::M2) training_view(bundle, config.dataset);
}

ConfigurationRun run_configuration(const Configuration& config, const DatasetBundle& bundle,
                                   ChatBackend& backend, const RunOptions& options) {
  check_runnable(config, bundle);
  ConfigurationRun run;
  run.config = config;
  run.participant_id = bundle.participant_id;
  const auto& templates = templates_or_default(options.classify.templates);

  ClassifyContext context;
  context.dataset = config.dataset;
  if (config.method == Method::M1) context.user_pattern = bundle.reported_pattern;
  if (config.method == Method::M2) {
    try {
      const auto key = profile_key(bundle, config.dataset, backend, templates);
      if (options.cache) run.profile = options.cache->find(key);
      if (!run.profile) {
        ProfileRequest request{bundle.participant_id, config.dataset, &templates, options.clock};
        run.profile = build_profile(backend, variant_for(config.dataset),
                                    training_view(bundle, config.dataset), request);
        if (options.cache) options.cache->store(key, *run.profile);
      }
    } catch (const Error& e) {
      run.error = std::string("profile: ") + e.what();
      return run;
    }
    context.profile = &*run.profile;
  }

  for (const auto& item : bundle.test) {
    try {
      run.results.push_back(
          classify(config.method, backend, config.variant, item.notification, context, options.classify));
    } catch (const ClassificationError& e) {
      run.failures.push_back({e.notification_id(), e.what(), e.attempts(), e.completed_verdicts()});
    }
  }
  return run;
}

}  // namespace persono
