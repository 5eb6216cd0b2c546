#include "mrf/matcher.hpp"

#include "mrf/parallel.hpp"
#include "mrf/simd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mrf::match {

namespace {

constexpr std::size_t kBlock = 4096;
// Bound on the single-precision scoring error for unit-norm operands; atoms
// within this margin of the best float score are re-scored in double.
constexpr double kScreenMargin = 1e-5;

std::size_t padded(std::size_t n) { return (n + 7) / 8 * 8; }

double score_double(const CompressedDictionary& cd, std::size_t j, const double* q) {
    double s = 0.0;
    for (std::size_t c = 0; c < 2 * cd.rank; ++c) s += static_cast<double>(cd.plane(c)[j]) * q[c];
    return s;
}

// Exact argmax of the double-precision score, screened in single precision.
class Searcher {
public:
    explicit Searcher(const CompressedDictionary& cd) : cd_(cd), scores_(kBlock) {}

    std::size_t best(const double* query) {
        const std::size_t k = 2 * cd_.rank;
        qf_.resize(k);
        for (std::size_t c = 0; c < k; ++c) qf_[c] = static_cast<float>(query[c]);
        float best_f = -std::numeric_limits<float>::infinity();
        candidates_.clear();
        const auto& kern = simd::kernels();
        for (std::size_t j0 = 0; j0 < cd_.count; j0 += kBlock) {
            const std::size_t n = std::min(kBlock, cd_.count - j0);
            kern.score_planes(cd_.planes.data() + j0, cd_.stride, n, k, qf_.data(), scores_.data());
            float block_max = scores_[0];
            for (std::size_t i = 1; i < n; ++i) block_max = std::max(block_max, scores_[i]);
            if (block_max < best_f - kScreenMargin) continue;
            if (block_max > best_f) {
                best_f = block_max;
                std::erase_if(candidates_, [&](const auto& c) { return c.second < best_f - kScreenMargin; });
            }
            const double cut = best_f - kScreenMargin;
            for (std::size_t i = 0; i < n; ++i)
                if (scores_[i] >= cut) candidates_.emplace_back(j0 + i, scores_[i]);
        }
        if (candidates_.empty()) throw DegenerateSignal("nns_match: non-finite scores");
        std::size_t winner = candidates_.front().first;
        double best_d = -std::numeric_limits<double>::infinity();
        for (const auto& c : candidates_) {
            const double s = score_double(cd_, c.first, query);
            if (s > best_d) {
                best_d = s;
                winner = c.first;
            }
        }
        return winner;
    }

private:
    const CompressedDictionary& cd_;
    std::vector<float> scores_;
    std::vector<float> qf_;
    std::vector<std::pair<std::size_t, float>> candidates_;
};

}  // namespace

CVector CompressedDictionary::atom(std::size_t j) const {
    CVector v(rank);
    for (std::size_t c = 0; c < rank; ++c) v[c] = {plane(c)[j], plane(rank + c)[j]};
    return v;
}

CompressedDictionary from_rows(std::span<const CVector> rows, std::span<const double> t1_ms,
                               std::span<const double> t2_ms) {
    if (rows.empty()) throw InvalidArgument("compressed dictionary: no atoms");
    if (t1_ms.size() != rows.size() || t2_ms.size() != rows.size())
        throw DimensionMismatch("compressed dictionary: parameter count mismatch");
    CompressedDictionary cd;
    cd.count = rows.size();
    cd.rank = rows.front().size();
    cd.stride = padded(cd.count);
    cd.planes.assign(2 * cd.rank * cd.stride, 0.0f);
    for (std::size_t j = 0; j < cd.count; ++j) {
        if (rows[j].size() != cd.rank) throw DimensionMismatch("compressed dictionary: ragged rows");
        for (std::size_t c = 0; c < cd.rank; ++c) {
            cd.planes[c * cd.stride + j] = static_cast<float>(rows[j][c].real());
            cd.planes[(cd.rank + c) * cd.stride + j] = static_cast<float>(rows[j][c].imag());
        }
    }
    cd.t1_ms.assign(t1_ms.begin(), t1_ms.end());
    cd.t2_ms.assign(t2_ms.begin(), t2_ms.end());
    return cd;
}

CompressedDictionary compress(const dict::Dictionary& dict, const subspace::Subspace& sub) {
    if (sub.length != dict.length) throw DimensionMismatch("compress: subspace length mismatch");
    CompressedDictionary cd;
    cd.count = dict.size();
    cd.rank = sub.rank;
    cd.stride = padded(cd.count);
    cd.planes.assign(2 * cd.rank * cd.stride, 0.0f);
    cd.t1_ms.resize(cd.count);
    cd.t2_ms.resize(cd.count);
    const std::size_t L = dict.length;
    parallel_for(cd.count, [&](std::size_t begin, std::size_t end) {
        std::vector<double> xr(L), xi(L);
        CVector y(sub.rank);
        for (std::size_t j = begin; j < end; ++j) {
            const auto a = dict.atom(j);
            for (std::size_t t = 0; t < L; ++t) {
                xr[t] = a[t].real();
                xi[t] = a[t].imag();
            }
            subspace::project_planar(sub, xr.data(), xi.data(), y.data());
            for (std::size_t c = 0; c < cd.rank; ++c) {
                cd.planes[c * cd.stride + j] = static_cast<float>(y[c].real());
                cd.planes[(cd.rank + c) * cd.stride + j] = static_cast<float>(y[c].imag());
            }
            std::tie(cd.t1_ms[j], cd.t2_ms[j]) = dict.grid.params_of(j);
        }
    });
    return cd;
}

MatchResult nns_match(const CompressedDictionary& cd, std::span<const cdouble> voxel) {
    if (voxel.size() != cd.rank)
        throw DimensionMismatch("nns_match: voxel has " + std::to_string(voxel.size()) +
                                " coefficients, dictionary rank is " + std::to_string(cd.rank));
    const double norm = l2_norm(voxel);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw DegenerateSignal("nns_match: zero voxel");
    std::vector<double> q(2 * cd.rank);
    for (std::size_t c = 0; c < cd.rank; ++c) {
        q[c] = voxel[c].real() / norm;
        q[cd.rank + c] = voxel[c].imag() / norm;
    }
    Searcher searcher(cd);
    const std::size_t j = searcher.best(q.data());
    MatchResult r;
    r.atom_index = j;
    r.t1_ms = cd.t1_ms[j];
    r.t2_ms = cd.t2_ms[j];
    double atom_norm = 0.0;
    for (std::size_t c = 0; c < 2 * cd.rank; ++c) atom_norm += static_cast<double>(cd.plane(c)[j]) * cd.plane(c)[j];
    atom_norm = std::sqrt(atom_norm);
    r.correlation = atom_norm > 0.0 ? score_double(cd, j, q.data()) / atom_norm : 0.0;
    cdouble inner = 0.0;
    for (std::size_t c = 0; c < cd.rank; ++c)
        inner += cdouble(cd.plane(c)[j], -cd.plane(cd.rank + c)[j]) * voxel[c];
    r.scale = inner;
    return r;
}

std::vector<std::size_t> nns_batch(const CompressedDictionary& cd, std::span<const double> queries,
                                   std::size_t query_count) {
    if (queries.size() != query_count * cd.rank)
        throw DimensionMismatch("nns_batch: query buffer size mismatch");
    std::vector<std::size_t> out(query_count);
    parallel_for(query_count, [&](std::size_t begin, std::size_t end) {
        Searcher searcher(cd);
        std::vector<double> q(2 * cd.rank, 0.0);
        for (std::size_t i = begin; i < end; ++i) {
            const double* x = queries.data() + i * cd.rank;
            double norm = 0.0;
            for (std::size_t c = 0; c < cd.rank; ++c) norm += x[c] * x[c];
            norm = std::sqrt(norm);
            if (!(norm > 0.0)) throw DegenerateSignal("nns_batch: zero query");
            for (std::size_t c = 0; c < cd.rank; ++c) q[c] = x[c] / norm;
            out[i] = searcher.best(q.data());
        }
    });
    return out;
}

ClusterIndex::ClusterIndex(const CompressedDictionary& cd,
                           std::vector<std::vector<std::size_t>> clusters)
    : cd_(cd), clusters_(std::move(clusters)) {
    const std::size_t s = cd.rank;
    std::size_t total = 0;
    for (const auto& c : clusters_) {
        if (c.empty()) throw InvalidArgument("cluster index: empty cluster");
        total += c.size();
    }
    if (total != cd.count) throw InvalidArgument("cluster index: clusters must cover every atom once");
    centres_.assign(clusters_.size() * s, 0.0);
    radii_.assign(clusters_.size(), 0.0);
    rows_.resize(total * s);
    offsets_.resize(clusters_.size() + 1, 0);
    std::vector<char> seen(cd.count, 0);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < clusters_.size(); ++k) {
        offsets_[k] = pos;
        double* centre = centres_.data() + k * s;
        for (std::size_t j : clusters_[k]) {
            if (j >= cd.count || seen[j]) throw InvalidArgument("cluster index: bad atom index");
            seen[j] = 1;
            for (std::size_t c = 0; c < s; ++c) {
                rows_[pos * s + c] = cd.plane(c)[j];
                centre[c] += cd.plane(c)[j];
            }
            ++pos;
        }
        for (std::size_t c = 0; c < s; ++c) centre[c] /= static_cast<double>(clusters_[k].size());
        double r2 = 0.0;
        for (std::size_t i = offsets_[k]; i < pos; ++i) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < s; ++c) {
                const double d = rows_[i * s + c] - centre[c];
                d2 += d * d;
            }
            r2 = std::max(r2, d2);
        }
        radii_[k] = std::sqrt(r2);
    }
    offsets_.back() = pos;
}

std::size_t ClusterIndex::nearest(std::span<const double> x) const {
    const std::size_t s = cd_.rank;
    if (x.size() != s) throw DimensionMismatch("cluster index: query length mismatch");
    double norm = 0.0;
    for (std::size_t c = 0; c < s; ++c) norm += x[c] * x[c];
    norm = std::sqrt(norm);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw DegenerateSignal("cluster index: zero query");
    double q[64];
    std::vector<double> qbig;
    double* qp = q;
    if (s > 64) {
        qbig.resize(s);
        qp = qbig.data();
    }
    for (std::size_t c = 0; c < s; ++c) qp[c] = x[c] / norm;

    const std::size_t nc = clusters_.size();
    std::vector<std::pair<double, std::size_t>> order(nc);
    for (std::size_t k = 0; k < nc; ++k) {
        const double* centre = centres_.data() + k * s;
        double dot = 0.0;
        for (std::size_t c = 0; c < s; ++c) dot += centre[c] * qp[c];
        order[k] = {dot + radii_[k], k};
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    // Slack absorbs rounding in the bound itself.
    constexpr double kSlack = 1e-9;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t winner = std::numeric_limits<std::size_t>::max();
    for (const auto& [bound, k] : order) {
        if (bound + kSlack < best) break;
        for (std::size_t i = offsets_[k]; i < offsets_[k + 1]; ++i) {
            const double* row = rows_.data() + i * s;
            double score = 0.0;
            for (std::size_t c = 0; c < s; ++c) score += row[c] * qp[c];
            const std::size_t j = clusters_[k][i - offsets_[k]];
            if (score > best || (score == best && j < winner)) {
                best = score;
                winner = j;
            }
        }
    }
    return winner;
}

std::vector<std::vector<std::size_t>> grid_tiles(const dict::ParamGrid& grid, std::size_t tile) {
    if (tile == 0) throw InvalidArgument("grid_tiles: tile size must be positive");
    std::vector<std::vector<std::size_t>> tiles;
    const std::size_t n1 = grid.t1_count(), n2 = grid.t2_count();
    for (std::size_t a = 0; a < n1; a += tile)
        for (std::size_t b = 0; b < n2; b += tile) {
            auto& t = tiles.emplace_back();
            for (std::size_t i = a; i < std::min(n1, a + tile); ++i)
                for (std::size_t k = b; k < std::min(n2, b + tile); ++k) t.push_back(i * n2 + k);
        }
    return tiles;
}

MatchResult match_voxel(const CompressedDictionary& cd, const subspace::Subspace& sub,
                        std::span<const cdouble> voxel) {
    const CVector aligned = dict::phase_align(voxel);
    return nns_match(cd, subspace::project(sub, aligned));
}

QMaps match_image(const CompressedDictionary& cd, const subspace::Subspace& sub,
                  const TimeSeriesImage& image, const MatchOptions& options) {
    if (image.frames != sub.length) throw DimensionMismatch("match_image: frame count mismatch");
    QMaps maps = QMaps::blank(image.height, image.width, Engine::DM);
    const std::size_t n = image.voxels();
    std::vector<double> norms(n);
    for (std::size_t v = 0; v < n; ++v) norms[v] = l2_norm(image.voxel(v));
    const double max_norm = n ? *std::max_element(norms.begin(), norms.end()) : 0.0;
    const double threshold = options.degenerate_fraction * max_norm;
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t v = begin; v < end; ++v) {
            if (max_norm == 0.0 || norms[v] < threshold) {
                maps.flags[v] = 1;
                continue;
            }
            try {
                const MatchResult r = match_voxel(cd, sub, image.voxel(v));
                maps.t1_ms[v] = static_cast<float>(r.t1_ms);
                maps.t2_ms[v] = static_cast<float>(r.t2_ms);
                maps.scale[v] = static_cast<float>(std::abs(r.scale));
            } catch (const DegenerateSignal&) {
                maps.flags[v] = 1;
            }
        }
    });
    return maps;
}

CostReport cost_report(std::size_t length, std::size_t rank, std::size_t atoms,
                       std::span<const std::size_t> net_layout) {
    if (net_layout.size() < 2 || net_layout.front() != rank)
        throw InvalidArgument("cost_report: layout must start at the subspace rank");
    std::uint64_t weights = 0, biases = 0;
    for (std::size_t i = 1; i < net_layout.size(); ++i) {
        weights += static_cast<std::uint64_t>(net_layout[i]) * net_layout[i - 1];
        biases += net_layout[i];
    }
    const std::uint64_t projection = static_cast<std::uint64_t>(rank) * length;
    CostReport r;
    r.dm_flops_per_voxel = projection + static_cast<std::uint64_t>(rank) * atoms;
    r.net_flops_per_voxel = projection + weights;
    r.dm_bytes = 8 * (static_cast<std::uint64_t>(rank) * atoms + projection);
    r.net_bytes = 8 * projection + 4 * (weights + biases);
    r.ratio_flops = static_cast<double>(r.dm_flops_per_voxel) / static_cast<double>(r.net_flops_per_voxel);
    r.ratio_bytes = static_cast<double>(r.dm_bytes) / static_cast<double>(r.net_bytes);
    return r;
}

}  // namespace mrf::match
