#pragma once

// Dictionary matching baseline: brute-force nearest-neighbour search over the
// subspace-compressed dictionary, and the cost accounting for it.

#include "mrf/common.hpp"
#include "mrf/dictionary.hpp"
#include "mrf/qmaps.hpp"
#include "mrf/subspace.hpp"

namespace mrf::match {

// Compressed atoms V^H D_j stored as 2s single-precision planes (real parts
// then imaginary parts), each of `stride` entries.
struct CompressedDictionary {
    std::size_t count = 0;
    std::size_t rank = 0;
    std::size_t stride = 0;
    std::vector<float> planes;
    std::vector<double> t1_ms;
    std::vector<double> t2_ms;

    const float* plane(std::size_t c) const { return planes.data() + c * stride; }
    CVector atom(std::size_t j) const;
};

CompressedDictionary compress(const dict::Dictionary& dict, const subspace::Subspace& sub);
// From explicit s-dimensional rows (used by tests and toy problems).
CompressedDictionary from_rows(std::span<const CVector> rows, std::span<const double> t1_ms,
                               std::span<const double> t2_ms);

struct MatchResult {
    std::size_t atom_index = 0;
    double t1_ms = 0.0;
    double t2_ms = 0.0;
    double correlation = 0.0;  // cosine between the normalized voxel and the compressed atom
    cdouble scale = 0.0;
};

// Normalizes the voxel and returns the atom maximizing Re<D_j, x>. Ties go to
// the lowest index. Throws DegenerateSignal for a zero voxel.
MatchResult nns_match(const CompressedDictionary& cd, std::span<const cdouble> voxel);

// Batched search for real-valued queries (rows of `queries`, each `rank`
// long); returns the best atom index per query. Same result as nns_match.
std::vector<std::size_t> nns_batch(const CompressedDictionary& cd, std::span<const double> queries,
                                   std::size_t query_count);

// Exact search for real-valued queries with cluster pruning: each cluster
// keeps a centre and a radius, and a cluster is skipped when
// <centre, q> + radius cannot reach the best score found so far. Returns the
// same index as nns_batch.
class ClusterIndex {
public:
    ClusterIndex(const CompressedDictionary& cd, std::vector<std::vector<std::size_t>> clusters);
    std::size_t nearest(std::span<const double> query) const;
    std::size_t cluster_count() const { return clusters_.size(); }

private:
    const CompressedDictionary& cd_;
    std::vector<std::vector<std::size_t>> clusters_;
    std::vector<double> centres_;  // cluster-major, rank entries each
    std::vector<double> radii_;
    std::vector<double> rows_;     // atoms in cluster order, rank entries each
    std::vector<std::size_t> offsets_;
};

// Rectangular tiles of at most tile x tile grid points.
std::vector<std::vector<std::size_t>> grid_tiles(const dict::ParamGrid& grid, std::size_t tile);

// Full-length voxel: phase-align, project, match.
MatchResult match_voxel(const CompressedDictionary& cd, const subspace::Subspace& sub,
                        std::span<const cdouble> voxel);

struct MatchOptions {
    // Voxels with norm below this fraction of the image's largest voxel norm
    // are flagged and left at zero.
    double degenerate_fraction = 1e-9;
};

QMaps match_image(const CompressedDictionary& cd, const subspace::Subspace& sub,
                  const TimeSeriesImage& image, const MatchOptions& options = {});

struct CostReport {
    std::uint64_t dm_flops_per_voxel = 0;
    std::uint64_t net_flops_per_voxel = 0;
    std::uint64_t dm_bytes = 0;
    std::uint64_t net_bytes = 0;
    double ratio_flops = 0.0;
    double ratio_bytes = 0.0;
};

// Multiply-accumulate counts per voxel and model storage. `net_layout` lists
// the trained widths starting from s, e.g. {10, 200, 30, 2}. Complex values
// are counted as 8 bytes (two f32), real parameters as 4 bytes.
CostReport cost_report(std::size_t length, std::size_t rank, std::size_t atoms,
                       std::span<const std::size_t> net_layout);

}  // namespace mrf::match
