#include "corpusforge/similarity.hpp"

#include "corpusforge/errors.hpp"
#include "corpusforge/util.hpp"

#include <algorithm>
#include <cmath>

namespace corpusforge
{

namespace
{
double clamp_unit(double x)
{
    return std::clamp(x, 0.0, 1.0);
}

// Row-major matrix of L2-normalized vectors.
struct UnitMatrix
{
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<double> data;

    const double *row(std::size_t i) const { return data.data() + i * dim; }
};

UnitMatrix normalize_rows(std::span<const EmbeddedSample> samples, bool image)
{
    UnitMatrix m;
    m.rows = samples.size();
    m.dim = image ? samples.front().image.size() : samples.front().text.size();
    m.data.resize(m.rows * m.dim);
    for (std::size_t i = 0; i < samples.size(); ++i)
    {
        const auto &v = image ? samples[i].image : samples[i].text;
        if (v.size() != m.dim)
        {
            throw ValidationError(std::string(image ? "image" : "text") + " vector of '" + samples[i].id +
                                  "' has length " + std::to_string(v.size()) + ", expected " +
                                  std::to_string(m.dim));
        }
        double norm = 0.0;
        for (float x : v)
        {
            norm += static_cast<double>(x) * static_cast<double>(x);
        }
        norm = std::sqrt(norm);
        if (norm == 0.0)
        {
            throw ValidationError(std::string("zero-norm ") + (image ? "image" : "text") + " vector for '" +
                                  samples[i].id + "'");
        }
        for (std::size_t d = 0; d < m.dim; ++d)
        {
            m.data[i * m.dim + d] = static_cast<double>(v[d]) / norm;
        }
    }
    return m;
}

double dot(const double *a, const double *b, std::size_t n)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
        s += a[i] * b[i];
    }
    return s;
}

double pairwise_sum(std::span<const double> xs)
{
    if (xs.size() <= 8)
    {
        double s = 0.0;
        for (double x : xs)
        {
            s += x;
        }
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

void require_vectors(std::span<const EmbeddedSample> samples, const char *side)
{
    std::string missing;
    std::size_t n_missing = 0;
    for (const auto &s : samples)
    {
        if (s.image.empty() || s.text.empty())
        {
            if (n_missing < 20)
            {
                missing += (missing.empty() ? "" : ", ") + s.id;
            }
            ++n_missing;
        }
    }
    if (n_missing > 0)
    {
        throw ValidationError(std::to_string(n_missing) + " " + side + " sample(s) missing an image or text vector: " +
                              missing + (n_missing > 20 ? ", ..." : ""));
    }
}
} // namespace

double cosine_sim(std::span<const float> u, std::span<const float> v)
{
    if (u.empty() || u.size() != v.size())
    {
        throw ValidationError("cosine_sim: vectors must have equal nonzero length");
    }
    double uv = 0.0;
    double uu = 0.0;
    double vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
    {
        uv += static_cast<double>(u[i]) * v[i];
        uu += static_cast<double>(u[i]) * u[i];
        vv += static_cast<double>(v[i]) * v[i];
    }
    if (uu == 0.0 || vv == 0.0)
    {
        throw ValidationError("cosine_sim: zero-norm vector");
    }
    return clamp_unit(uv / (std::sqrt(uu) * std::sqrt(vv)));
}

SimilarityReport similarity_score(std::span<const EmbeddedSample> new_source, std::span<const EmbeddedSample> pool,
                                  Category category, const SimilarityOptions &opts)
{
    if (new_source.empty())
    {
        throw ValidationError("similarity_score: new source is empty");
    }
    if (pool.empty())
    {
        throw ValidationError("similarity_score: pool is empty");
    }
    require_vectors(new_source, "new-source");
    require_vectors(pool, "pool");

    const UnitMatrix pool_img = normalize_rows(pool, true);
    const UnitMatrix pool_txt = normalize_rows(pool, false);
    const UnitMatrix new_img = normalize_rows(new_source, true);
    const UnitMatrix new_txt = normalize_rows(new_source, false);
    if (new_img.dim != pool_img.dim || new_txt.dim != pool_txt.dim)
    {
        throw ValidationError("similarity_score: new source and pool embedding dimensions differ");
    }

    const std::size_t n = new_source.size();
    const std::size_t m = pool.size();
    const std::size_t block = std::max<std::size_t>(1, opts.block_size);
    constexpr std::size_t kRowTile = 16;

    struct Best
    {
        std::size_t index = 0;
        double image = 0.0;
        double text = 0.0;
        double product = -1.0;
    };
    std::vector<Best> best(n);

    const std::size_t row_tiles = (n + kRowTile - 1) / kRowTile;
    parallel_for(
        row_tiles,
        [&](std::size_t tile) {
            const std::size_t r0 = tile * kRowTile;
            const std::size_t r1 = std::min(n, r0 + kRowTile);
            for (std::size_t j0 = 0; j0 < m; j0 += block)
            {
                const std::size_t j1 = std::min(m, j0 + block);
                for (std::size_t i = r0; i < r1; ++i)
                {
                    Best &b = best[i];
                    for (std::size_t j = j0; j < j1; ++j)
                    {
                        const double si = clamp_unit(dot(new_img.row(i), pool_img.row(j), new_img.dim));
                        const double st = clamp_unit(dot(new_txt.row(i), pool_txt.row(j), new_txt.dim));
                        const double p = si * st;
                        // Strict comparison keeps the lowest index on ties.
                        if (p > b.product)
                        {
                            b = {j, si, st, p};
                        }
                    }
                }
            }
        },
        1);

    SimilarityReport report;
    report.source_name = opts.source_name;
    report.category = category;
    report.dedup_threshold = opts.dedup_threshold;
    report.per_sample.reserve(n);
    std::vector<double> products(n);
    for (std::size_t i = 0; i < n; ++i)
    {
        const Best &b = best[i];
        products[i] = b.product;
        report.max_term = std::max(report.max_term, b.product);
        report.per_sample.push_back({new_source[i].id, pool[b.index].id, b.image, b.text, b.product});
        if (b.product >= opts.dedup_threshold)
        {
            report.duplicates.push_back(new_source[i].id);
        }
    }
    report.score = pairwise_sum(products) / static_cast<double>(n);
    return report;
}

DedupResult dedup(std::span<const EmbeddedSample> new_source, std::span<const EmbeddedSample> pool, double threshold,
                  Category category, std::string source_name)
{
    if (!(threshold > 0.0 && threshold <= 1.0))
    {
        throw ValidationError("dedup threshold must be in (0, 1], got " + std::to_string(threshold));
    }
    SimilarityOptions opts;
    opts.source_name = std::move(source_name);
    opts.dedup_threshold = threshold;
    DedupResult out;
    out.report = similarity_score(new_source, pool, category, opts);
    for (const auto &match : out.report.per_sample)
    {
        (match.product >= threshold ? out.removed : out.kept).push_back(match.sample_id);
    }
    return out;
}

std::string_view to_string(Admission a)
{
    return a == Admission::Distinct ? "distinct" : "review";
}

Admission source_admission(const SimilarityReport &report, double source_threshold)
{
    return report.score < source_threshold ? Admission::Distinct : Admission::Review;
}

nlohmann::json report_to_json(const SimilarityReport &report)
{
    nlohmann::json per_sample = nlohmann::json::array();
    for (const auto &m : report.per_sample)
    {
        per_sample.push_back({{"sample_id", m.sample_id},
                              {"best_pool_id", m.best_pool_id},
                              {"image_sim", m.image_sim},
                              {"text_sim", m.text_sim},
                              {"product", m.product}});
    }
    return {
        {"similarity", "cosine clamped at 0; sample score = image_sim * text_sim"},
        {"source_name", report.source_name},
        {"category", std::string(to_string(report.category))},
        {"score", report.score},
        {"max_term", report.max_term},
        {"dedup_threshold", report.dedup_threshold},
        {"duplicates", report.duplicates},
        {"per_sample", std::move(per_sample)},
    };
}

std::vector<EmbeddedSample> gather_embedded(const Pool &pool, const EmbeddingSet &embeddings, Category category)
{
    std::vector<EmbeddedSample> out;
    for (const auto &s : pool)
    {
        if (s.category != category)
        {
            continue;
        }
        EmbeddedSample e;
        e.id = s.id;
        if (auto rec = embeddings.record(s.id))
        {
            if (rec->image_vec)
            {
                e.image = std::move(*rec->image_vec);
            }
            if (rec->text_vec)
            {
                e.text = std::move(*rec->text_vec);
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace corpusforge
