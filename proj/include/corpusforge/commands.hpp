#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace corpusforge
{

struct CommandContext
{
    std::uint64_t seed = 0;
    bool strict = false;
    std::filesystem::path workspace = ".";
    // Human-readable summaries; null silences them.
    std::ostream *log = nullptr;
};

enum class ParamKind
{
    Input,  // file read by the step
    Output, // file written by the step
    Config, // inline JSON object or path to a JSON file
    Value,  // plain JSON value
};

struct ParamSpec
{
    std::string key;
    ParamKind kind = ParamKind::Value;
    bool required = false;
    // Output file name used when the caller gives none.
    std::string default_file;
};

struct OpSpec
{
    std::string name;
    std::vector<ParamSpec> params;
};

const std::vector<OpSpec> &all_ops();
// Throws ValidationError for an unknown op.
const OpSpec &find_op(std::string_view name);

using Action = std::function<void()>;

// Checks and parses params (paths already resolved) and returns the deferred
// work. Only Config files are read here; Input files are read when the action
// runs, so they may be produced by earlier pipeline steps.
Action prepare_op(const OpSpec &op, const nlohmann::json &params, const CommandContext &ctx);

// Single command: missing outputs default to <workspace>/<op>/<default_file>.
void run_command(std::string_view op, nlohmann::json params, const CommandContext &ctx);

struct PipelineOverrides
{
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> workspace;
    bool strict = false;
};

// Exit status: 0 ok, 2 invalid config, 3 a step failed. Errors go to `err`.
int run_pipeline(const std::filesystem::path &config_path, const PipelineOverrides &overrides, std::ostream &err,
                 std::ostream *log = nullptr);

} // namespace corpusforge
