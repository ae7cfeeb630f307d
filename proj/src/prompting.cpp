#include "persono/prompting.hpp"

#include <cctype>
#include <regex>

#include "default_templates.hpp"
#include "persono/dataset.hpp"
#include "persono/error.hpp"
#include "persono/random.hpp"

namespace persono {
namespace {

using nlohmann::json;

constexpr Placeholder kAllPlaceholders[] = {Placeholder::user_pattern, Placeholder::profile,
                                            Placeholder::sender,       Placeholder::content,
                                            Placeholder::activity,     Placeholder::examples,
                                            Placeholder::subthemes};

std::optional<Placeholder> placeholder_named(std::string_view name) {
  for (Placeholder p : kAllPlaceholders) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Notification fields are rendered on one line each.
std::string single_line(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out.push_back(c == '\n' || c == '\r' || c == '\t' ? ' ' : c);
  return out;
}

void require_slots(const PromptTemplate& t, std::initializer_list<Placeholder> required,
                   std::initializer_list<Placeholder> allowed) {
  for (Placeholder p : required) {
    if (!t.uses(p)) {
      throw TemplateError(t.name() + ": missing required placeholder {" + std::string(to_string(p)) +
                          "}");
    }
  }
  for (Placeholder p : kAllPlaceholders) {
    if (t.uses(p) && std::find(allowed.begin(), allowed.end(), p) == allowed.end()) {
      throw TemplateError(t.name() + ": placeholder {" + std::string(to_string(p)) +
                          "} is not available in this template");
    }
  }
}

}  // namespace

std::string_view to_string(Placeholder p) {
  switch (p) {
    case Placeholder::user_pattern: return "user_pattern";
    case Placeholder::profile: return "profile";
    case Placeholder::sender: return "sender";
    case Placeholder::content: return "content";
    case Placeholder::activity: return "activity";
    case Placeholder::examples: return "examples";
    case Placeholder::subthemes: return "subthemes";
  }
  return "?";
}

PromptTemplate::PromptTemplate(std::string name, std::string text)
    : name_(std::move(name)), text_(std::move(text)) {
  std::string literal;
  std::size_t i = 0;
  while (i < text_.size()) {
    const char c = text_[i];
    if ((c == '{' || c == '}') && i + 1 < text_.size() && text_[i + 1] == c) {
      literal.push_back(c);
      i += 2;
      continue;
    }
    if (c == '{') {
      std::size_t j = i + 1;
      while (j < text_.size() && is_ident_char(text_[j])) ++j;
      if (j > i + 1 && j < text_.size() && text_[j] == '}') {
        const std::string_view ident(text_.data() + i + 1, j - i - 1);
        const auto slot = placeholder_named(ident);
        if (!slot) {
          throw TemplateError(name_ + ": unknown placeholder {" + std::string(ident) + "}");
        }
        segments_.push_back({std::move(literal), slot});
        literal.clear();
        i = j + 1;
        continue;
      }
    }
    literal.push_back(c);
    ++i;
  }
  if (!literal.empty()) segments_.push_back({std::move(literal), std::nullopt});
}

bool PromptTemplate::uses(Placeholder p) const {
  return std::any_of(segments_.begin(), segments_.end(),
                     [p](const Segment& s) { return s.slot == p; });
}

std::string PromptTemplate::render(const std::map<Placeholder, std::string>& values) const {
  std::string out;
  for (const auto& segment : segments_) {
    out += segment.literal;
    if (segment.slot) {
      if (auto it = values.find(*segment.slot); it != values.end()) out += it->second;
    }
  }
  return out;
}

TemplateSet make_templates(std::string rater_p1, std::string rater_p2, std::string analyser) {
  TemplateSet set;
  const std::string digest = rater_p1 + '\0' + rater_p2 + '\0' + analyser;
  set.version = "tpl-" + hex64(fnv1a64(digest)).substr(0, 12);
  set.rater_p1 = PromptTemplate("rater_p1.txt", std::move(rater_p1));
  set.rater_p2 = PromptTemplate("rater_p2.txt", std::move(rater_p2));
  set.analyser = PromptTemplate("analyser.txt", std::move(analyser));
  using P = Placeholder;
  require_slots(set.rater_p1, {P::user_pattern, P::sender, P::content},
                {P::user_pattern, P::profile, P::sender, P::content});
  require_slots(set.rater_p2, {P::user_pattern, P::sender, P::content, P::activity},
                {P::user_pattern, P::profile, P::sender, P::content, P::activity});
  require_slots(set.analyser, {P::examples, P::subthemes}, {P::examples, P::subthemes});
  return set;
}

const TemplateSet& default_templates() {
  static const TemplateSet set =
      make_templates(generated::kRaterP1, generated::kRaterP2, generated::kAnalyser);
  return set;
}

TemplateSet load_templates(const std::filesystem::path& dir) {
  const auto read = [&dir](const char* file) {
    try {
      return read_file(dir / file);
    } catch (const DatasetError& e) {
      throw TemplateError(e.what());
    }
  };
  return make_templates(read("rater_p1.txt"), read("rater_p2.txt"), read("analyser.txt"));
}

std::string_view to_string(UserProfile::Kind kind) {
  return kind == UserProfile::Kind::M1_pattern ? "M1_pattern" : "M2_analysed";
}

void validate(const UserProfile& profile) {
  if (profile.profile_text.empty()) throw ConfigError("profile " + profile.profile_id + ": empty text");
  if (profile.method == UserProfile::Kind::M2_analysed &&
      profile.source_dataset == DatasetView::none) {
    throw ConfigError("profile " + profile.profile_id + ": analysed profile needs a source dataset");
  }
}

json profile_to_json(const UserProfile& p) {
  return {{"profile_id", p.profile_id},
          {"participant_id", p.participant_id},
          {"profile_text", p.profile_text},
          {"method", to_string(p.method)},
          {"source_dataset", to_string(p.source_dataset)},
          {"model_id", p.model_id},
          {"created_at", p.created_at},
          {"template_version", p.template_version}};
}

UserProfile profile_from_json(const json& doc) {
  UserProfile p;
  try {
    p.profile_id = doc.at("profile_id").get<std::string>();
    p.participant_id = doc.at("participant_id").get<std::string>();
    p.profile_text = doc.at("profile_text").get<std::string>();
    const auto method = doc.at("method").get<std::string>();
    if (method == "M1_pattern") {
      p.method = UserProfile::Kind::M1_pattern;
    } else if (method == "M2_analysed") {
      p.method = UserProfile::Kind::M2_analysed;
    } else {
      throw ConfigError("unknown profile method '" + method + "'");
    }
    p.source_dataset = parse_dataset_view(doc.at("source_dataset").get<std::string>());
    p.model_id = doc.at("model_id").get<std::string>();
    p.created_at = doc.at("created_at").get<std::string>();
    p.template_version = doc.value("template_version", std::string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed profile: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("malformed profile: ") + e.what());
  }
  validate(p);
  return p;
}

PromptVariant variant_for(DatasetView view) {
  return view == DatasetView::D2 ? PromptVariant::P2 : PromptVariant::P1;
}

std::string format_sender(const Notification& n) {
  const std::string_view role = n.sender_role == SenderRole::group ? "group chat" : to_string(n.sender_role);
  return single_line(n.sender_name) + " (" + std::string(role) + ")";
}

std::string render_rater_prompt(const TemplateSet& templates, PromptVariant variant,
                                const Notification& notification,
                                const std::optional<std::string>& user_pattern,
                                const UserProfile* profile) {
  if (user_pattern && profile) {
    throw ConfigError("a rater prompt takes a user pattern or a profile, not both");
  }
  if (variant == PromptVariant::P2 && !notification.activity) {
    throw ConfigError(notification.id + ": P2 prompt requires an activity");
  }
  std::map<Placeholder, std::string> values;
  values[Placeholder::user_pattern] =
      user_pattern ? *user_pattern : profile ? profile->profile_text : std::string(kNoUserPattern);
  values[Placeholder::profile] = profile ? profile->profile_text : std::string();
  values[Placeholder::sender] = format_sender(notification);
  values[Placeholder::content] = single_line(notification.content);
  if (variant == PromptVariant::P2) {
    values[Placeholder::activity] = std::string(to_string(*notification.activity));
  }
  return templates.rater(variant).render(values);
}

std::string format_example(const LabeledNotification& item, PromptVariant variant) {
  const auto& n = item.notification;
  std::string line = format_sender(n) + " / ";
  if (variant == PromptVariant::P2) line += std::string(to_string(*n.activity)) + " / ";
  line += single_line(n.content);
  line += item.label == UrgencyLabel::urgent ? " -> urgent" : " -> non-urgent";
  return line;
}

std::string render_analyser_prompt(const TemplateSet& templates, PromptVariant variant,
                                   std::span<const LabeledNotification> training,
                                   std::span<const SubTheme> subthemes) {
  if (training.empty()) throw ConfigError("analyser prompt needs at least one training example");
  std::string examples;
  for (std::size_t i = 0; i < training.size(); ++i) {
    if (variant == PromptVariant::P2 && !training[i].notification.activity) {
      throw ConfigError(training[i].notification.id + ": P2 analyser example requires an activity");
    }
    examples += std::to_string(i + 1) + ". " + format_example(training[i], variant);
    if (i + 1 < training.size()) examples += '\n';
  }
  std::string themes;
  for (std::size_t i = 0; i < subthemes.size(); ++i) {
    themes += "- " + std::string(subthemes[i].name) + " (" + std::string(subthemes[i].theme) +
              "): " + std::string(subthemes[i].definition);
    if (i + 1 < subthemes.size()) themes += '\n';
  }
  return templates.analyser.render({{Placeholder::examples, examples}, {Placeholder::subthemes, themes}});
}

std::string_view verdict_line(UrgencyLabel label) {
  return label == UrgencyLabel::urgent ? "VERDICT: URGENT" : "VERDICT: NON-URGENT";
}

VerdictParse parse_verdict(std::string_view completion) {
  static const std::regex verdict(R"(^VERDICT\s*:\s*(URGENT|NON[- _]?URGENT)$)", std::regex::icase);
  VerdictParse result;
  std::size_t line_start = 0;
  std::optional<std::size_t> match_start;
  while (line_start <= completion.size()) {
    std::size_t line_end = completion.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = completion.size();
    std::string_view line = trim(completion.substr(line_start, line_end - line_start));
    while (!line.empty() && (line.front() == '*' || line.front() == '`' || line.front() == '_')) {
      line.remove_prefix(1);
    }
    while (!line.empty() &&
           (line.back() == '*' || line.back() == '`' || line.back() == '_' || line.back() == '.')) {
      line.remove_suffix(1);
    }
    std::cmatch m;
    const std::string owned(trim(line));
    if (std::regex_match(owned.c_str(), m, verdict)) {
      result.label = std::toupper(static_cast<unsigned char>(m[1].str().front())) == 'U'
                         ? UrgencyLabel::urgent
                         : UrgencyLabel::non_urgent;
      result.parse_ok = true;
      match_start = line_start;
    }
    if (line_end == completion.size()) break;
    line_start = line_end + 1;
  }
  if (match_start) {
    result.reasoning = std::string(trim(completion.substr(0, *match_start)));
  } else {
    result.label = UrgencyLabel::non_urgent;
    result.reasoning = std::string(trim(completion));
  }
  return result;
}

std::string parse_profile(std::string_view completion) {
  std::string_view text = trim(completion);
  if (text.substr(0, 3) == "```") {
    const auto newline = text.find('\n');
    text = newline == std::string_view::npos ? std::string_view{} : text.substr(newline + 1);
    text = trim(text);
    if (text.size() >= 3 && text.substr(text.size() - 3) == "```") {
      text.remove_suffix(3);
    }
    text = trim(text);
  }
  if (text.empty()) throw ParseError("empty profile");
  return std::string(text);
}

}  // namespace persono
