#include "corpusforge/corpus.hpp"

#include "corpusforge/errors.hpp"
#include "corpusforge/util.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <unordered_set>

namespace corpusforge
{

namespace
{
using json = nlohmann::json;

struct CategoryName
{
    Category category;
    std::string_view name;
};

constexpr std::array<CategoryName, kCategoryCount> kCategoryNames{{
    {Category::CaptioningKnowledge, "captioning_knowledge"},
    {Category::Mathematics, "mathematics"},
    {Category::Science, "science"},
    {Category::ChartTable, "chart_table"},
    {Category::NaiveOCR, "naive_ocr"},
    {Category::OcrQA, "ocr_qa"},
    {Category::GroundingCounting, "grounding_counting"},
    {Category::GeneralVQA, "general_vqa"},
    {Category::TextOnly, "text_only"},
}};

std::string require_string(const json &j, const char *key)
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null())
    {
        throw ValidationError(std::string("missing ") + key);
    }
    if (!it->is_string())
    {
        throw ValidationError(std::string(key) + " must be a string");
    }
    return it->get<std::string>();
}

std::optional<std::int64_t> optional_int(const json &j, const char *key)
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null())
    {
        return std::nullopt;
    }
    if (!it->is_number_integer())
    {
        throw ValidationError(std::string(key) + " must be an integer");
    }
    return it->get<std::int64_t>();
}
} // namespace

std::string_view to_string(Category c)
{
    for (const auto &entry : kCategoryNames)
    {
        if (entry.category == c)
        {
            return entry.name;
        }
    }
    return "unknown";
}

std::string_view to_string(Modality m)
{
    return m == Modality::TextOnly ? "text" : "image_text";
}

std::string_view to_string(Stage s)
{
    switch (s)
    {
    case Stage::Stage1:
        return "stage1";
    case Stage::Stage1_5:
        return "stage1_5";
    case Stage::Stage2:
        return "stage2";
    }
    return "unknown";
}

Category parse_category(std::string_view s)
{
    for (const auto &entry : kCategoryNames)
    {
        if (entry.name == s)
        {
            return entry.category;
        }
    }
    throw ValidationError("unknown category '" + std::string(s) + "'");
}

Modality parse_modality(std::string_view s)
{
    if (s == "text")
    {
        return Modality::TextOnly;
    }
    if (s == "image_text")
    {
        return Modality::ImageText;
    }
    throw ValidationError("unknown modality '" + std::string(s) + "'");
}

Stage parse_stage(std::string_view s)
{
    if (s == "stage1")
    {
        return Stage::Stage1;
    }
    if (s == "stage1_5")
    {
        return Stage::Stage1_5;
    }
    if (s == "stage2")
    {
        return Stage::Stage2;
    }
    throw ValidationError("unknown stage '" + std::string(s) + "'");
}

const std::vector<Category> &all_categories()
{
    static const std::vector<Category> cats = [] {
        std::vector<Category> out;
        for (const auto &entry : kCategoryNames)
        {
            out.push_back(entry.category);
        }
        return out;
    }();
    return cats;
}

std::size_t Sample::last_assistant_index() const
{
    for (std::size_t i = turns.size(); i > 0; --i)
    {
        if (turns[i - 1].role == Role::Assistant)
        {
            return i - 1;
        }
    }
    return std::string::npos;
}

std::size_t Sample::last_question_index() const
{
    const std::size_t a = last_assistant_index();
    if (a == std::string::npos)
    {
        return std::string::npos;
    }
    for (std::size_t i = a; i > 0; --i)
    {
        if (turns[i - 1].role == Role::User)
        {
            return i - 1;
        }
    }
    return std::string::npos;
}

void validate_sample(const Sample &s)
{
    if (s.id.empty())
    {
        throw ValidationError("missing id");
    }
    if (s.turns.size() < 2)
    {
        throw ValidationError("sample " + s.id + ": needs at least 2 turns");
    }
    for (std::size_t i = 0; i < s.turns.size(); ++i)
    {
        const Role expected = (i % 2 == 0) ? Role::User : Role::Assistant;
        if (s.turns[i].role != expected)
        {
            throw ValidationError("sample " + s.id + ": turn " + std::to_string(i) +
                                  " breaks user/assistant alternation");
        }
        if (expected == Role::User && s.turns[i].text.empty())
        {
            throw ValidationError("sample " + s.id + ": empty user turn " + std::to_string(i));
        }
    }
    if ((s.modality == Modality::TextOnly) != s.images.empty())
    {
        throw ValidationError("sample " + s.id + ": modality '" + std::string(to_string(s.modality)) +
                              "' inconsistent with " + std::to_string(s.images.size()) + " images");
    }
    if (s.category == Category::TextOnly && s.modality != Modality::TextOnly)
    {
        throw ValidationError("sample " + s.id + ": text_only category requires text modality");
    }
    for (const auto &img : s.images)
    {
        if (img.path.empty())
        {
            throw ValidationError("sample " + s.id + ": image with empty path");
        }
        if ((img.width && *img.width <= 0) || (img.height && *img.height <= 0))
        {
            throw ValidationError("sample " + s.id + ": image dimensions must be positive");
        }
    }
    if (s.token_length && *s.token_length < 0)
    {
        throw ValidationError("sample " + s.id + ": negative token_length");
    }
    if (s.repeat_factor < 1)
    {
        throw ValidationError("sample " + s.id + ": repeat_factor must be >= 1");
    }
}

Sample sample_from_json(const json &j)
{
    if (!j.is_object())
    {
        throw ValidationError("record is not a JSON object");
    }
    Sample s;
    s.id = require_string(j, "id");
    if (s.id.empty())
    {
        throw ValidationError("missing id");
    }
    s.source = require_string(j, "source");
    s.category = parse_category(require_string(j, "category"));
    s.modality = parse_modality(require_string(j, "modality"));

    auto conv = j.find("conversations");
    if (conv == j.end() || !conv->is_array())
    {
        throw ValidationError("missing conversations");
    }
    for (const auto &t : *conv)
    {
        const std::string from = require_string(t, "from");
        ConversationTurn turn;
        if (from == "human")
        {
            turn.role = Role::User;
        }
        else if (from == "gpt")
        {
            turn.role = Role::Assistant;
        }
        else
        {
            throw ValidationError("unknown turn role '" + from + "'");
        }
        turn.text = require_string(t, "value");
        s.turns.push_back(std::move(turn));
    }

    if (auto imgs = j.find("images"); imgs != j.end() && !imgs->is_null())
    {
        if (!imgs->is_array())
        {
            throw ValidationError("images must be an array");
        }
        for (const auto &im : *imgs)
        {
            ImageRef ref;
            ref.path = require_string(im, "path");
            ref.width = optional_int(im, "width");
            ref.height = optional_int(im, "height");
            s.images.push_back(std::move(ref));
        }
    }
    s.token_length = optional_int(j, "token_length");
    s.repeat_factor = optional_int(j, "repeat_factor").value_or(1);
    if (auto prov = j.find("provenance"); prov != j.end() && !prov->is_null())
    {
        if (!prov->is_object())
        {
            throw ValidationError("provenance must be an object");
        }
        for (const auto &[k, v] : prov->items())
        {
            if (!v.is_string())
            {
                throw ValidationError("provenance values must be strings");
            }
            s.provenance[k] = v.get<std::string>();
        }
    }
    validate_sample(s);
    return s;
}

json sample_to_json(const Sample &s)
{
    json j = json::object();
    j["id"] = s.id;
    j["source"] = s.source;
    j["category"] = std::string(to_string(s.category));
    j["modality"] = std::string(to_string(s.modality));
    json conv = json::array();
    for (const auto &t : s.turns)
    {
        conv.push_back({{"from", t.role == Role::User ? "human" : "gpt"}, {"value", t.text}});
    }
    j["conversations"] = std::move(conv);
    json imgs = json::array();
    for (const auto &im : s.images)
    {
        json o = {{"path", im.path}};
        if (im.width)
        {
            o["width"] = *im.width;
        }
        if (im.height)
        {
            o["height"] = *im.height;
        }
        imgs.push_back(std::move(o));
    }
    j["images"] = std::move(imgs);
    if (s.token_length)
    {
        j["token_length"] = *s.token_length;
    }
    if (s.repeat_factor != 1)
    {
        j["repeat_factor"] = s.repeat_factor;
    }
    if (!s.provenance.empty())
    {
        j["provenance"] = s.provenance;
    }
    return j;
}

std::string serialize_sample(const Sample &s)
{
    return sample_to_json(s).dump();
}

Pool parse_corpus(std::string_view text)
{
    Pool pool;
    std::unordered_set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size())
    {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos)
        {
            end = text.size();
        }
        ++line_no;
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        if (!line.empty() && line.back() == '\r')
        {
            line.remove_suffix(1);
        }
        if (trim(line).empty())
        {
            continue;
        }
        Sample s;
        try
        {
            s = sample_from_json(json::parse(line));
        }
        catch (const json::exception &e)
        {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        }
        catch (const ValidationError &e)
        {
            throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.insert(s.id).second)
        {
            throw ValidationError("line " + std::to_string(line_no) + ": duplicate id '" + s.id + "'");
        }
        pool.push_back(std::move(s));
    }
    return pool;
}

Pool load_corpus(const std::filesystem::path &path)
{
    return parse_corpus(read_file(path));
}

std::string serialize_corpus(const Pool &pool)
{
    std::string out;
    for (const auto &s : pool)
    {
        out += serialize_sample(s);
        out += '\n';
    }
    return out;
}

void write_corpus(const Pool &pool, const std::filesystem::path &path)
{
    for (const auto &s : pool)
    {
        validate_sample(s);
    }
    check_unique_ids(pool);
    write_file(path, serialize_corpus(pool));
}

void check_unique_ids(const Pool &pool)
{
    std::unordered_set<std::string_view> seen;
    for (const auto &s : pool)
    {
        if (!seen.insert(s.id).second)
        {
            throw ValidationError("duplicate id '" + s.id + "'");
        }
    }
}

std::vector<DataSourceManifest> parse_manifests(const json &j, const std::filesystem::path &base_dir)
{
    if (!j.is_array())
    {
        throw ValidationError("manifest must be a JSON array");
    }
    auto resolve = [&](const std::string &p) {
        std::filesystem::path path(p);
        if (path.is_relative())
        {
            path = base_dir / path;
        }
        if (!std::filesystem::exists(path))
        {
            throw ValidationError("manifest path does not exist: " + path.string());
        }
        return path;
    };

    std::vector<DataSourceManifest> out;
    std::unordered_set<std::string> names;
    for (const auto &entry : j)
    {
        if (!entry.is_object())
        {
            throw ValidationError("manifest entries must be objects");
        }
        DataSourceManifest m;
        m.name = require_string(entry, "name");
        if (!names.insert(m.name).second)
        {
            throw ValidationError("duplicate manifest source '" + m.name + "'");
        }
        m.category = parse_category(require_string(entry, "category"));
        m.corpus_path = resolve(require_string(entry, "corpus_path"));
        if (entry.contains("image_embeddings"))
        {
            m.image_embeddings = resolve(require_string(entry, "image_embeddings"));
        }
        if (entry.contains("text_embeddings"))
        {
            m.text_embeddings = resolve(require_string(entry, "text_embeddings"));
        }
        m.quota_override = optional_int(entry, "quota_override");
        if (m.quota_override && *m.quota_override <= 0)
        {
            throw ValidationError("source " + m.name + ": quota_override must be positive");
        }
        m.repeat_factor = optional_int(entry, "repeat_factor").value_or(1);
        if (m.repeat_factor < 1)
        {
            throw ValidationError("source " + m.name + ": repeat_factor must be >= 1");
        }
        m.stage = parse_stage(require_string(entry, "stage"));
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<DataSourceManifest> load_manifests(const std::filesystem::path &path)
{
    json j;
    try
    {
        j = json::parse(read_file(path));
    }
    catch (const json::exception &e)
    {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return parse_manifests(j, path.parent_path());
}

PoolStats pool_stats(const Pool &pool)
{
    PoolStats st;
    st.total = pool.size();
    for (const auto &s : pool)
    {
        st.total_effective += s.repeat_factor;
        st.per_category[s.category] += 1;
        st.per_category_effective[s.category] += s.repeat_factor;
        st.per_source[s.source] += 1;
        st.per_source_effective[s.source] += s.repeat_factor;
        if (s.modality == Modality::TextOnly)
        {
            ++st.text_only;
        }
        else
        {
            ++st.image_text;
        }
        if (s.token_length)
        {
            const auto len = static_cast<std::uint64_t>(*s.token_length);
            const auto upper = static_cast<std::int64_t>(std::bit_ceil(len + 1));
            st.token_length_histogram[upper] += 1;
        }
        else
        {
            ++st.unknown_length;
        }
    }
    if (st.total > 0)
    {
        st.fraction_defined = true;
        st.text_only_fraction = static_cast<double>(st.text_only) / static_cast<double>(st.total);
    }
    return st;
}

json pool_stats_to_json(const PoolStats &st)
{
    json j;
    j["total"] = st.total;
    j["total_effective"] = st.total_effective;
    json cats = json::object();
    for (const auto &[c, n] : st.per_category)
    {
        cats[std::string(to_string(c))] = {{"count", n}, {"effective", st.per_category_effective.at(c)}};
    }
    j["per_category"] = std::move(cats);
    json sources = json::object();
    for (const auto &[name, n] : st.per_source)
    {
        sources[name] = {{"count", n}, {"effective", st.per_source_effective.at(name)}};
    }
    j["per_source"] = std::move(sources);
    j["modality"] = {{"text", st.text_only}, {"image_text", st.image_text}};
    j["text_only_fraction"] = st.text_only_fraction;
    j["fraction_defined"] = st.fraction_defined;
    json hist = json::array();
    for (const auto &[upper, n] : st.token_length_histogram)
    {
        hist.push_back({{"below", upper}, {"count", n}});
    }
    j["token_length_histogram"] = std::move(hist);
    j["unknown_length"] = st.unknown_length;
    return j;
}

} // namespace corpusforge
