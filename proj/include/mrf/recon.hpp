#pragma once

// Numerical phantom, single-coil Cartesian acquisition with per-frame random
// masks, back-projection, and per-voxel map reconstruction with either engine.

#include "mrf/dictionary.hpp"
#include "mrf/epg.hpp"
#include "mrf/matcher.hpp"
#include "mrf/mrfnet.hpp"
#include "mrf/qmaps.hpp"

#include <optional>

namespace mrf::recon {

// Pixel units: column cx, row cy; the angle rotates the rx axis towards +y.
struct Ellipse {
    double cx = 0.0;
    double cy = 0.0;
    double rx = 0.0;
    double ry = 0.0;
    double angle_deg = 0.0;
    double t1_ms = 0.0;
    double t2_ms = 0.0;
    double scale = 1.0;
};

struct PhantomSpec {
    std::size_t height = 64;
    std::size_t width = 64;
    std::vector<Ellipse> regions;
};

// 64 x 64 with WM-, GM-, CSF- and fat-like regions.
PhantomSpec default_phantom_spec();
// Either a JSON list of ellipses (64 x 64 image) or an object
// {"height", "width", "regions": [...]}.
PhantomSpec parse_phantom_spec(const std::string& json_text);
std::string phantom_spec_json(const PhantomSpec& spec);

struct Phantom {
    std::size_t height = 0;
    std::size_t width = 0;
    RVector t1_ms;
    RVector t2_ms;
    RVector scale;
    std::vector<int> labels;  // 0 background, i + 1 for region i
    std::vector<Ellipse> regions;

    std::size_t voxels() const { return height * width; }
};

// Later regions overwrite earlier ones. Region parameters outside the given
// ranges are rejected.
Phantom make_phantom(const PhantomSpec& spec, const dict::Range& t1_range = dict::default_t1_range(),
                     const dict::Range& t2_range = dict::default_t2_range());

// Each non-zero voxel is scale * fingerprint(t1, t2) (not normalized).
TimeSeriesImage synthesize_image(const Phantom& phantom, const epg::SequenceParams& seq);

struct KSpaceData {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::vector<std::uint32_t>> masks;  // ascending, per frame
    std::vector<CVector> samples;                    // per frame, aligned with masks

    std::size_t frames() const { return masks.size(); }
};

// Per frame: the ceil(m/4) lowest spatial frequencies plus a seeded uniform
// draw from the rest; indices are row-major over the height x width k-grid.
std::vector<std::vector<std::uint32_t>> sampling_masks(std::size_t height, std::size_t width,
                                                       std::size_t frames, std::size_t m,
                                                       std::uint64_t seed);

// Unitary 2-D DFT of each frame, sampled at the mask.
KSpaceData forward_acquire(const TimeSeriesImage& image,
                           const std::vector<std::vector<std::uint32_t>>& masks);
// Zero-filled inverse unitary DFT.
TimeSeriesImage back_project(const KSpaceData& kspace);
// Adds circular complex Gaussian noise of total variance sigma^2 per sample.
void add_noise(KSpaceData& kspace, double sigma, std::uint64_t seed);

struct EngineResources {
    const match::CompressedDictionary* compressed = nullptr;
    const subspace::Subspace* subspace = nullptr;
    const net::MlpModel* model = nullptr;
    // For the NET scale estimate: fingerprints are re-simulated at the grid
    // point nearest to the prediction.
    const epg::SequenceParams* sequence = nullptr;
    const dict::ParamGrid* grid = nullptr;
    double degenerate_fraction = 1e-9;
};

QMaps reconstruct_maps(const TimeSeriesImage& image, Engine engine, const EngineResources& res);

struct RegionMetrics {
    int label = 0;
    std::size_t voxels = 0;  // non-flagged voxels
    double t1_true_ms = 0.0;
    double t2_true_ms = 0.0;
    // NaN when the region has no non-flagged voxel.
    double t1_median_ms = 0.0;
    double t2_median_ms = 0.0;
    double t1_median_rel_error = 0.0;
    double t2_median_rel_error = 0.0;
    double t1_mae_rel = 0.0;
    double t2_mae_rel = 0.0;
};

struct MapMetrics {
    Engine engine = Engine::DM;
    std::vector<RegionMetrics> regions;
    double flagged_fraction = 0.0;
};

// Per-region statistics over the phantom's labelled regions.
MapMetrics map_error(const QMaps& maps, const Phantom& phantom);
// JSON object; NaN values are written as null.
std::string metrics_json(const std::vector<MapMetrics>& metrics);

}  // namespace mrf::recon
