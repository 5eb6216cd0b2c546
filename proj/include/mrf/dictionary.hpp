#pragma once

#include "mrf/common.hpp"
#include "mrf/epg.hpp"
#include "mrf/io.hpp"

#include <filesystem>
#include <functional>

namespace mrf::dict {

// Inclusive arithmetic progression start, start+step, ..., <= stop.
struct Range {
    double start = 0.0;
    double step = 1.0;
    double stop = 0.0;

    // Throws InvalidArgument naming `field` when step <= 0 or start > stop.
    void validate(std::string_view field) const;
    std::size_t count() const;
    double value(std::size_t i) const { return start + static_cast<double>(i) * step; }
};

Range default_t1_range();  // 100:10:4000
Range default_t2_range();  // 20:2:600

// Rectangular (T1, T2) grid, entries in t1-major order:
// index = t1_index * t2_count + t2_index.
struct ParamGrid {
    Range t1_range;
    Range t2_range;
    std::vector<double> t1_values_ms;
    std::vector<double> t2_values_ms;

    std::size_t size() const { return t1_values_ms.size() * t2_values_ms.size(); }
    std::size_t t1_count() const { return t1_values_ms.size(); }
    std::size_t t2_count() const { return t2_values_ms.size(); }

    std::pair<double, double> params_of(std::size_t index) const;
    // Index of an exact grid point; throws InvalidArgument when off-grid.
    std::size_t index_of(double t1_ms, double t2_ms) const;
    // Grid point closest to (t1, t2) along each axis independently.
    std::size_t nearest_index(double t1_ms, double t2_ms) const;
    bool contains(double t1_ms, double t2_ms) const;
};

ParamGrid build_grid(const Range& t1, const Range& t2);

// Unit-norm, phase-aligned atoms stored as single-precision complex, row-major
// d x L. Rows follow grid order.
struct Dictionary {
    ParamGrid grid;
    std::size_t length = 0;
    std::vector<cfloat> atoms;
    io::Digest seq_digest{};

    std::size_t size() const { return grid.size(); }
    std::span<const cfloat> atom(std::size_t j) const {
        return {atoms.data() + j * length, length};
    }
    CVector atom_as_double(std::size_t j) const;
    // SHA-256 of the serialized file image.
    std::string content_digest() const;
};

// Multiplies by conj(c)/|c| with c the temporal sum, so the sum becomes real
// and non-negative. Throws DegenerateSignal when c == 0.
CVector phase_align(std::span<const cdouble> signal);

// Rounds a unit-norm double vector to single precision and then nudges a few
// entries by one ulp so the stored row keeps unit norm to ~1e-12.
void store_normalized(std::span<const cdouble> unit, std::span<cfloat> out);

using Progress = std::function<void(std::size_t done, std::size_t total)>;

Dictionary simulate_dictionary(const ParamGrid& grid, const epg::SequenceParams& seq,
                               const Progress& progress = {});

// Little-endian "MRFD" v1 file. Distinct exceptions: FormatError (magic or
// corrupt header), VersionError, ChecksumError (mismatch or truncation).
void save_dictionary(const Dictionary& dict, const std::filesystem::path& path);
Dictionary load_dictionary(const std::filesystem::path& path);

}  // namespace mrf::dict
