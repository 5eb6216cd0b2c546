#pragma once

// Affine-spline view of a trained network: per-input slopes A[x] and offsets
// b[x] with weighted_output(x) = A[x] x + b[x], activation patterns, and
// clustering of slopes into segments.

#include "mrf/dictionary.hpp"
#include "mrf/kmeans.hpp"
#include "mrf/mrfnet.hpp"

#include <filesystem>

namespace mrf::spline {

// Gradient of output p of weighted_output with respect to the s-dimensional
// layer-2 input.
RVector compressed_gradient(const net::MlpModel& model, std::span<const double> h1, std::size_t p);

// Gradient of output p with respect to the real part of the length-L signal.
RVector input_gradient(const net::MlpModel& model, std::span<const cdouble> x, std::size_t p);

struct MatchedFilterSet {
    std::vector<RVector> slopes;     // P rows of length L, acting on Re x
    std::vector<RVector> slopes_im;  // P rows acting on Im x (zero for a real basis)
    RVector offsets;
    CVector at_input;

    // slopes . Re x + slopes_im . Im x + offsets
    RVector apply(std::span<const cdouble> x) const;
};

MatchedFilterSet matched_filters(const net::MlpModel& model, std::span<const cdouble> x);

// One byte per ReLU unit of layers 2..N in layer-then-unit order, 1 when the
// pre-activation is positive.
struct ActivationPattern {
    std::vector<std::uint8_t> bits;
    bool operator==(const ActivationPattern&) const = default;
};

ActivationPattern activation_pattern_compressed(const net::MlpModel& model, std::span<const double> h1);
ActivationPattern activation_pattern(const net::MlpModel& model, std::span<const cdouble> x);

// Smallest |pre-activation| over all ReLU units; used to keep probes away
// from kinks.
double min_abs_preactivation(const net::MlpModel& model, std::span<const double> h1);

struct SegmentMap {
    std::vector<std::size_t> labels;
    std::size_t k = 0;
    std::size_t feature_dim = 0;
    std::vector<double> centroids;  // k x feature_dim
    double inertia = 0.0;
    std::vector<double> t1_ms;
    std::vector<double> t2_ms;
    std::vector<std::array<double, 3>> coords;  // first three compressed coordinates
};

SegmentMap cluster_segments(std::span<const double> features, std::size_t rows, std::size_t dim,
                            std::size_t k, std::uint64_t seed, std::size_t max_iter = 300);

// Probes every dictionary atom. The feature of an atom is both slope rows in
// the s-dimensional domain, each scaled by the model's target scale so T1 and
// T2 contribute comparably.
SegmentMap segment_report(const net::MlpModel& model, const dict::Dictionary& dict, std::size_t k,
                          std::uint64_t seed, std::size_t max_iter = 300);
void write_segments_csv(const SegmentMap& map, const std::filesystem::path& path);

// Fraction of grid points with at least one 4-neighbour carrying the same
// label.
double segment_contiguity(const SegmentMap& map, const dict::ParamGrid& grid);

struct FilterReport {
    std::vector<std::size_t> atoms;  // region atoms, grid order
    std::size_t centre_atom = 0;
    std::vector<RVector> fingerprints;  // real parts of the region atoms
    MatchedFilterSet filters;           // evaluated at the centre atom
};

// Region bounds are inclusive; throws InvalidArgument for an empty region.
FilterReport filter_report(const net::MlpModel& model, const dict::Dictionary& dict,
                           std::pair<double, double> t1_range, std::pair<double, double> t2_range);
// frame, fingerprint_re (centre atom), filter_t1, filter_t2
void write_filter_csv(const FilterReport& report, const std::filesystem::path& path);
// frame, then one column per region atom named t1_t2
void write_region_fingerprints_csv(const FilterReport& report, const dict::Dictionary& dict,
                                   const std::filesystem::path& path);

struct FilterCsv {
    std::vector<double> fingerprint_re;
    std::vector<double> filter_t1;
    std::vector<double> filter_t2;
};
FilterCsv read_filter_csv(const std::filesystem::path& path);

// Share of the squared L2 mass of `filter` within its first `frames` entries.
double leading_energy_fraction(std::span<const double> filter, std::size_t frames);

}  // namespace mrf::spline
