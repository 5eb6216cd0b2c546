#pragma once

#include "mrf/dictionary.hpp"
#include "mrf/epg.hpp"
#include "mrf/io.hpp"
#include "mrf/parallel.hpp"
#include "mrf/subspace.hpp"

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <string>

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("mrf_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline mrf::epg::SequenceParams small_sequence() { return mrf::epg::default_sequence(200); }

// 20 x 15 grid over the physiological range, L = 200.
inline const mrf::dict::Dictionary& small_dictionary() {
    static const mrf::dict::Dictionary d = mrf::dict::simulate_dictionary(
        mrf::dict::build_grid({100.0, 100.0, 2000.0}, {20.0, 20.0, 300.0}), small_sequence());
    return d;
}

inline const mrf::subspace::Subspace& small_subspace() {
    static const mrf::subspace::Subspace s = mrf::subspace::compute_subspace(small_dictionary(), 10);
    return s;
}

inline mrf::CVector random_complex(std::size_t n, std::uint64_t seed) {
    mrf::SplitMix64 g(seed);
    mrf::CVector v(n);
    for (auto& x : v) x = {2.0 * g.uniform() - 1.0, 2.0 * g.uniform() - 1.0};
    return v;
}

inline mrf::RVector random_real(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    mrf::SplitMix64 g(seed);
    mrf::RVector v(n);
    for (auto& x : v) x = lo + (hi - lo) * g.uniform();
    return v;
}

// Standard normal draw by Box-Muller.
inline double gaussian(mrf::SplitMix64& g) {
    double u = g.uniform();
    while (u <= 0.0) u = g.uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * 3.14159265358979323846 * g.uniform());
}

}  // namespace testing
