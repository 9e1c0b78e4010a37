#pragma once

#include "corpusforge/corpus.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace corpusforge
{

enum class AugmentKind
{
    CoT,
    Judge,
    Expand,
};

std::string_view to_string(AugmentKind k);
AugmentKind parse_augment_kind(std::string_view s);

std::string render_cot_prompt(std::string_view question, std::string_view answer);
std::string render_judge_prompt(std::string_view question, std::string_view original_answer,
                                std::string_view new_answer);
std::string render_expand_prompt(std::string_view question, std::string_view answer);

enum class JudgeVerdict
{
    Accept,
    Reject,
    Unparseable,
};

JudgeVerdict parse_judge(std::string_view text);

struct AugmentationRequest
{
    std::string request_id;
    std::string sample_id;
    AugmentKind kind = AugmentKind::CoT;
    std::string prompt;
    std::string question;
    std::string answer;
    // Judge requests only: the generated answer under review.
    std::string new_answer;
};

struct AugmentationResponse
{
    std::string request_id;
    std::string text;
};

std::string make_request_id(AugmentKind kind, std::string_view sample_id);

using SamplePredicate = std::function<bool(const Sample &)>;

// One request per selected sample, for the final question/answer pair.
// Kind must be CoT or Expand.
std::vector<AugmentationRequest> emit_requests(const Pool &pool, AugmentKind kind, const SamplePredicate &select);

// Judge requests comparing each CoT response against the original answer.
std::vector<AugmentationRequest> emit_judge_requests(const Pool &pool,
                                                     const std::vector<AugmentationResponse> &cot_responses);

struct ApplyStats
{
    std::size_t responses = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t unparseable = 0;
    std::size_t pending = 0;
};

struct ApplyOptions
{
    AugmentKind kind = AugmentKind::CoT;
    // CoT defaults to judge-gated; Expand has no judge step.
    std::optional<bool> require_judge;
};

struct ApplyResult
{
    Pool pool;
    ApplyStats stats;
};

// Replaces the final answer of samples whose response passed the gate; the
// original answer is kept in provenance["original_answer"].
ApplyResult apply_responses(const Pool &pool, const std::vector<AugmentationResponse> &responses,
                            const std::vector<AugmentationResponse> &judge_verdicts, const ApplyOptions &opts = {});

nlohmann::json request_to_json(const AugmentationRequest &r);
AugmentationRequest request_from_json(const nlohmann::json &j);
nlohmann::json response_to_json(const AugmentationResponse &r);
AugmentationResponse response_from_json(const nlohmann::json &j);

std::string serialize_requests(const std::vector<AugmentationRequest> &requests);
std::vector<AugmentationRequest> parse_requests(std::string_view text);
std::string serialize_responses(const std::vector<AugmentationResponse> &responses);
std::vector<AugmentationResponse> parse_responses(std::string_view text);

struct BoundingBox
{
    double x0 = 0;
    double y0 = 0;
    double x1 = 0;
    double y1 = 0;

    double center_x() const { return (x0 + x1) / 2.0; }
    double center_y() const { return (y0 + y1) / 2.0; }
};

struct WordRecord
{
    std::string text;
    BoundingBox bbox;
};

struct OcrQaOptions
{
    std::string id_prefix = "ocrqa";
    std::string source = "rule_ocr_qa";
    Category category = Category::NaiveOCR;
    // Words proposed as "absent" distractors.
    std::vector<std::string> lexicon = {"EXIT", "HOTEL", "PARK", "OPEN", "SALE", "CAFE", "BANK", "TAXI",
                                        "SCHOOL", "MARKET", "STATION", "POLICE", "PHARMACY", "BAKERY"};
    std::size_t max_negatives = 2;
    std::size_t max_position_pairs = 4;
};

// Relation of word a to word b by bbox centers, along the dominant axis
// ("left of", "right of", "above", "below"). Empty if the centers coincide.
std::string relative_position(const BoundingBox &a, const BoundingBox &b);

// Existence and relative-position QA samples for one OCR image.
std::vector<Sample> rule_based_ocr_qa(const std::vector<WordRecord> &words, const ImageRef &image, std::uint64_t seed,
                                      const OcrQaOptions &opts = {});

} // namespace corpusforge
