#include "persono/codebook.hpp"

#include <array>

namespace persono {
namespace {

constexpr std::array<SubTheme, 11> kCodebook{{
    {"Sender", "Authority-Based Prioritisation",
     "Preferential response to notifications from supervisors", 8},
    {"Sender", "Social Relationship Prioritisation",
     "Preferential response to notifications from friends", 3},
    {"Sender", "Group Message Ignorance", "Tendency to ignore group messages", 8},
    {"Content", "Action Request Response",
     "Tendency to respond to notifications requiring action or questions", 12},
    {"Content", "Content Length Sensitivity", "Response patterns influenced by notification length",
     5},
    {"Content", "Information Density Evaluation", "Response based on perceived information value",
     3},
    {"Content", "Implicit Content Cues", "Response influenced by implicit cues of notification", 3},
    {"Activity", "Cognitive Load Management",
     "Response patterns based on cognitive demands of current activity", 4},
    {"Activity", "Activity Engagement Level",
     "Response patterns influenced by engagement with current activity", 2},
    {"Activity", "Activity-Specific Response Strategies",
     "Different response strategies for different MR activities", 14},
    {"Activity", "Task Disinterest Displacement",
     "Higher response rate due to disinterest in primary task", 3},
}};

}  // namespace

std::span<const SubTheme> codebook() { return kCodebook; }

}  // namespace persono
