#pragma once

#include "corpusforge/corpus.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace corpusforge
{

inline constexpr std::string_view kShortAnswerSuffix = " Provide a short answer.";
inline constexpr std::string_view kYesNoSuffix = " Please answer yes or no.";

struct FormatPolicy
{
    std::vector<std::pair<std::string, std::string>> strip_patterns = {
        {"\\begin{align*}", "\\end{align*}"},
        {"\\begin{align}", "\\end{align}"},
        {"\\begin{equation*}", "\\end{equation*}"},
        {"\\begin{equation}", "\\end{equation}"},
        {"\\[", "\\]"},
        {"$$", "$$"},
    };
    std::size_t short_answer_token_max = 5;
    double append_rate = 0.5;
    double yes_no_append_rate = 0.3;
    std::uint64_t seed = 0;
    std::optional<std::size_t> decimal_places;
};

void validate(const FormatPolicy &policy);
FormatPolicy format_policy_from_json(const nlohmann::json &j);

// Removes a configured wrapper only when it encloses the whole text.
std::string strip_decorations(std::string_view text, const FormatPolicy &policy);

// Adds at most one instruction suffix to the final question. The draw is
// keyed on (policy.seed, sample.id).
Sample append_instruction(const Sample &sample, const FormatPolicy &policy);

// Rounds decimal literals with more than `places` fraction digits,
// half-to-even, on the decimal string itself.
std::string normalize_numeric(std::string_view text, std::size_t places);

// User and assistant turns of a multiple-choice question built from a
// classification label.
std::vector<ConversationTurn> classification_to_mcq(const std::string &label, const std::vector<std::string> &label_set,
                                                    const std::string &question_stem, std::size_t n_choices,
                                                    std::uint64_t seed);

// strip_decorations (+ normalize_numeric when decimal_places is set) on
// assistant turns, then append_instruction.
Sample format_sample(const Sample &sample, const FormatPolicy &policy);
Pool format_pool(const Pool &pool, const FormatPolicy &policy);

} // namespace corpusforge
