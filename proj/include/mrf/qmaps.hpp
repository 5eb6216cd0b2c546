#pragma once

#include "mrf/common.hpp"

#include <filesystem>

namespace mrf {

// Voxel-major complex image series: data[v * frames + t].
struct TimeSeriesImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t frames = 0;
    CVector data;

    std::size_t voxels() const { return height * width; }
    std::span<const cdouble> voxel(std::size_t v) const { return {data.data() + v * frames, frames}; }
    std::span<cdouble> voxel(std::size_t v) { return {data.data() + v * frames, frames}; }
};

enum class Engine { DM, NET };
std::string_view engine_name(Engine e);

// Per-voxel parameter maps. Values are single precision, matching the
// on-disk layout.
struct QMaps {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> t1_ms;
    std::vector<float> t2_ms;
    std::vector<float> scale;  // magnitude of the fitted scale
    std::vector<std::uint8_t> flags;  // 1 = degenerate voxel
    Engine engine = Engine::DM;

    static QMaps blank(std::size_t height, std::size_t width, Engine engine);
    std::size_t voxels() const { return height * width; }
    double flagged_fraction() const;
};

// "MRFQ" v1: u32 version, u32 height, u32 width, then T1, T2 and scale as f32
// planes and one flag byte per voxel.
void save_qmaps(const QMaps& maps, const std::filesystem::path& path);
QMaps load_qmaps(const std::filesystem::path& path);

// CSV with header x,y,t1,t2,scale,flag; x is the column index.
void save_qmaps_csv(const QMaps& maps, const std::filesystem::path& path);
QMaps load_qmaps_csv(const std::filesystem::path& path);

}  // namespace mrf
