#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "persono/codebook.hpp"
#include "persono/types.hpp"

namespace persono {

enum class Placeholder { user_pattern, profile, sender, content, activity, examples, subthemes };
std::string_view to_string(Placeholder p);

// Text with `{name}` placeholders. `{{` and `}}` render literal braces; any other
// `{identifier}` must be a known placeholder or construction throws TemplateError.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  PromptTemplate(std::string name, std::string text);

  const std::string& name() const { return name_; }
  const std::string& text() const { return text_; }
  bool uses(Placeholder p) const;
  std::string render(const std::map<Placeholder, std::string>& values) const;

 private:
  struct Segment {
    std::string literal;
    std::optional<Placeholder> slot;
  };
  std::string name_;
  std::string text_;
  std::vector<Segment> segments_;
};

struct TemplateSet {
  PromptTemplate rater_p1;
  PromptTemplate rater_p2;
  PromptTemplate analyser;
  std::string version;  // content hash, part of the profile cache key

  const PromptTemplate& rater(PromptVariant variant) const {
    return variant == PromptVariant::P1 ? rater_p1 : rater_p2;
  }
};

// Templates shipped in templates/, compiled in.
const TemplateSet& default_templates();

// Reads rater_p1.txt, rater_p2.txt and analyser.txt and checks the slot contract.
TemplateSet load_templates(const std::filesystem::path& dir);
TemplateSet make_templates(std::string rater_p1, std::string rater_p2, std::string analyser);

struct UserProfile {
  enum class Kind { M1_pattern, M2_analysed };

  std::string profile_id;
  std::string participant_id;
  std::string profile_text;
  Kind method = Kind::M2_analysed;
  DatasetView source_dataset = DatasetView::none;
  std::string model_id;
  std::string created_at;  // ISO 8601 UTC
  std::string template_version;

  bool operator==(const UserProfile&) const = default;
};

std::string_view to_string(UserProfile::Kind kind);
void validate(const UserProfile& profile);
nlohmann::json profile_to_json(const UserProfile& profile);
UserProfile profile_from_json(const nlohmann::json& doc);

// Variant an analyser or rater uses for a training view: D2 -> P2, SR/D1 -> P1.
PromptVariant variant_for(DatasetView view);

// "Friend 1 (friend)", "Group 2 (group chat)".
std::string format_sender(const Notification& n);

// {user_pattern} text for the Base method, which knows nothing about the user.
inline constexpr std::string_view kNoUserPattern = "not available; no information about this user is given.";

// Throws ConfigError for P2 without an activity or when both pattern and profile are given.
std::string render_rater_prompt(const TemplateSet& templates, PromptVariant variant,
                                const Notification& notification,
                                const std::optional<std::string>& user_pattern,
                                const UserProfile* profile);

std::string render_analyser_prompt(const TemplateSet& templates, PromptVariant variant,
                                   std::span<const LabeledNotification> training,
                                   std::span<const SubTheme> subthemes = codebook());

// One example line as it appears in the analyser prompt.
std::string format_example(const LabeledNotification& item, PromptVariant variant);

std::string_view verdict_line(UrgencyLabel label);

struct VerdictParse {
  UrgencyLabel label = UrgencyLabel::non_urgent;
  bool parse_ok = false;
  std::string reasoning;
};

// The last line reading `VERDICT: URGENT` / `VERDICT: NON-URGENT` wins (case-insensitive,
// whitespace and markdown emphasis ignored). No such line: parse_ok = false, non_urgent.
VerdictParse parse_verdict(std::string_view completion);

// Trims and strips one surrounding code fence. Throws ParseError("empty profile").
std::string parse_profile(std::string_view completion);

}  // namespace persono
