#pragma once

#include "corpusforge/corpus.hpp"
#include "corpusforge/embeddings.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace corpusforge
{

enum class FilterRule
{
    Repetition,
    Precision,
    Refusal,
    Mismatch,
};

std::string_view to_string(FilterRule r);
FilterRule parse_filter_rule(std::string_view s);

struct RepetitionConfig
{
    bool enabled = true;
    std::size_t ngram_min = 4;
    std::size_t min_repeats = 3;
    double tail_fraction = 0.3;
};

struct PrecisionConfig
{
    bool enabled = true;
    std::size_t max_decimals = 2;
};

struct RefusalConfig
{
    bool enabled = true;
    std::vector<std::string> keywords = {
        "sorry, i cannot",
        "sorry, i can't",
        "i cannot answer",
        "i can't answer",
        "i am unable to",
        "i'm unable to",
        "i cannot help with",
        "as an ai language model",
    };
};

struct MismatchConfig
{
    bool enabled = false;
    double min_cross_sim = 0.05;
};

struct FilterConfig
{
    RepetitionConfig repetition;
    PrecisionConfig precision;
    RefusalConfig refusal;
    MismatchConfig mismatch;
    // Rules listed here are reported but never drop a sample.
    std::set<FilterRule> advisory;
};

// Throws ValidationError on out-of-range values.
void validate(const FilterConfig &cfg);
FilterConfig filter_config_from_json(const nlohmann::json &j);
nlohmann::json filter_config_to_json(const FilterConfig &cfg);

struct RuleHit
{
    FilterRule rule = FilterRule::Repetition;
    std::string detail;
    std::size_t turn = 0;
};

struct RepetitionHit
{
    std::string block;
    std::size_t repeats = 0;
    bool tail = false;
};

std::optional<RepetitionHit> detect_repetition(std::string_view text, const RepetitionConfig &cfg);

struct PrecisionHit
{
    std::string number;
    std::size_t decimals = 0;
    std::size_t turn = 0;
};

std::optional<PrecisionHit> detect_numeric_precision(const Sample &sample, const PrecisionConfig &cfg);

// Matched keyword, if `text` is a short refusal.
std::optional<std::string> detect_refusal(std::string_view text, const RefusalConfig &cfg);

struct MismatchCheck
{
    bool applicable = false;
    std::string note;
    std::optional<double> cross_sim;
    bool hit = false;
};

// Inapplicable (with a note) when disabled or when either vector is missing.
MismatchCheck detect_mismatch(const Sample &sample, const std::optional<EmbeddingRecord> &embeddings,
                              const MismatchConfig &cfg);

enum class Decision
{
    Keep,
    Drop,
};

struct FilterVerdict
{
    std::string sample_id;
    std::vector<RuleHit> hits;
    std::vector<std::string> notes;
    Decision decision = Decision::Keep;
};

FilterVerdict evaluate_sample(const Sample &sample, const EmbeddingSet *embeddings, const FilterConfig &cfg);

struct FilterResult
{
    Pool kept;
    std::vector<FilterVerdict> verdicts;
    // Samples with at least one hit of the rule, advisory hits included.
    std::map<FilterRule, std::size_t> hits_per_rule;
    std::size_t dropped = 0;
    std::size_t mismatch_skipped = 0;
};

FilterResult run_filters(const Pool &pool, const EmbeddingSet *embeddings, const FilterConfig &cfg);

nlohmann::json filter_report_to_json(const FilterResult &result);

} // namespace corpusforge
