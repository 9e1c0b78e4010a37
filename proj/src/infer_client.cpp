#include "corpusforge/infer_client.hpp"

#include "corpusforge/errors.hpp"

#include "httplib.h"
#include "json.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace corpusforge
{

namespace
{
struct Endpoint
{
    std::string origin;
    std::string path;
};

Endpoint split_url(const std::string &url)
{
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
    {
        throw ValidationError("inference url must include a scheme: " + url);
    }
    if (url.compare(0, scheme_end, "http") != 0)
    {
        throw ValidationError("only http endpoints are supported: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos)
    {
        return {url, "/v1/chat/completions"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable_status(int status)
{
    return status == 429 || status >= 500;
}
} // namespace

std::optional<InferenceConfig> inference_config_from_env()
{
    const char *url = std::getenv("CORPUSFORGE_INFER_URL");
    if (url == nullptr || *url == '\0')
    {
        return std::nullopt;
    }
    InferenceConfig cfg;
    cfg.url = url;
    if (const char *key = std::getenv("CORPUSFORGE_INFER_KEY"))
    {
        cfg.api_key = key;
    }
    return cfg;
}

AugmentationResponse inference_call(const AugmentationRequest &request, const InferenceConfig &cfg)
{
    if (cfg.attempts < 1)
    {
        throw ValidationError("inference attempts must be >= 1");
    }
    const Endpoint ep = split_url(cfg.url);
    httplib::Client client(ep.origin);
    client.set_connection_timeout(cfg.timeout);
    client.set_read_timeout(cfg.timeout);
    httplib::Headers headers;
    if (!cfg.api_key.empty())
    {
        headers.emplace("Authorization", "Bearer " + cfg.api_key);
    }
    const nlohmann::json body = {{"model", cfg.model},
                                 {"messages", {{{"role", "user"}, {"content", request.prompt}}}}};
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt < cfg.attempts; ++attempt)
    {
        if (attempt > 0)
        {
            std::this_thread::sleep_for(cfg.backoff_base * (1 << (attempt - 1)));
        }
        auto res = client.Post(ep.path, headers, payload, "application/json");
        if (!res)
        {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300)
        {
            last_error = "HTTP " + std::to_string(res->status);
            if (retryable_status(res->status))
            {
                continue;
            }
            break;
        }
        try
        {
            const auto j = nlohmann::json::parse(res->body);
            const auto &content = j.at("choices").at(0).at("message").at("content");
            return {request.request_id, content.get<std::string>()};
        }
        catch (const nlohmann::json::exception &e)
        {
            throw Error("malformed inference response for " + request.request_id + ": " + e.what());
        }
    }
    throw Error("inference failed for " + request.request_id + " after " + std::to_string(cfg.attempts) +
                " attempts: " + last_error);
}

std::vector<AugmentationResponse> inference_batch(const std::vector<AugmentationRequest> &requests,
                                                  const InferenceConfig &cfg)
{
    std::vector<AugmentationResponse> out(requests.size());
    std::vector<std::exception_ptr> errors(requests.size());
    std::atomic<std::size_t> next{0};
    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.max_parallel, requests.size()));
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
    {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < requests.size(); i = next++)
            {
                try
                {
                    out[i] = inference_call(requests[i], cfg);
                }
                catch (...)
                {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto &t : pool)
    {
        t.join();
    }
    for (const auto &e : errors)
    {
        if (e)
        {
            std::rethrow_exception(e);
        }
    }
    return out;
}

} // namespace corpusforge
