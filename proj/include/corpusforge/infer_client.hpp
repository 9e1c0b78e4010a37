#pragma once

#include "corpusforge/augment.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace corpusforge
{

struct InferenceConfig
{
    // Full endpoint URL, e.g. http://host:8000/v1/chat/completions.
    std::string url;
    std::string api_key;
    std::string model = "default";
    int attempts = 3;
    std::chrono::milliseconds backoff_base{200};
    std::chrono::seconds timeout{60};
    std::size_t max_parallel = 4;
};

// Reads CORPUSFORGE_INFER_URL and CORPUSFORGE_INFER_KEY. Nullopt when the URL
// is unset.
std::optional<InferenceConfig> inference_config_from_env();

// One chat-completion call; the prompt is the single user message.
AugmentationResponse inference_call(const AugmentationRequest &request, const InferenceConfig &cfg);

// Calls run with at most cfg.max_parallel in flight; output order follows input.
std::vector<AugmentationResponse> inference_batch(const std::vector<AugmentationRequest> &requests,
                                                  const InferenceConfig &cfg);

} // namespace corpusforge
