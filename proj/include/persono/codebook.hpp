#pragma once

#include <span>
#include <string_view>

namespace persono {

// Response-pattern codebook from the thematic analysis of experience-sampling answers.
struct SubTheme {
  std::string_view theme;  // Sender, Content or Activity
  std::string_view name;
  std::string_view definition;
  int frequency;  // number of coded mentions
};

std::span<const SubTheme> codebook();

}  // namespace persono
