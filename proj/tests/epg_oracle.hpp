#pragma once

#include "mrf/epg.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace testing {

using mrf::cdouble;
using mrf::CVector;

// Independent Bloch simulator: Rodrigues rotation of each spin vector,
// exponential relaxation, and a linear phase ramp across the ensemble.
inline CVector bloch_oracle(double t1, double t2, const mrf::epg::SequenceParams& seq, std::size_t spins) {
    using Vec = std::array<double, 3>;
    std::vector<Vec> m(spins, Vec{0.0, 0.0, 1.0});
    const double phi = seq.rf_phase_deg * std::numbers::pi / 180.0;
    const Vec axis{std::cos(phi), std::sin(phi), 0.0};
    auto rotate = [&](double alpha_deg) {
        const double a = alpha_deg * std::numbers::pi / 180.0, c = std::cos(a), s = std::sin(a);
        for (Vec& v : m) {
            const Vec kxv{axis[1] * v[2] - axis[2] * v[1], axis[2] * v[0] - axis[0] * v[2],
                          axis[0] * v[1] - axis[1] * v[0]};
            const double kv = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
            for (int i = 0; i < 3; ++i) v[i] = v[i] * c + kxv[i] * s + axis[i] * kv * (1.0 - c);
        }
    };
    auto relax = [&](double dt) {
        const double e1 = std::exp(-dt / t1), e2 = std::exp(-dt / t2);
        for (Vec& v : m) {
            v[0] *= e2;
            v[1] *= e2;
            v[2] = 1.0 + (v[2] - 1.0) * e1;
        }
    };
    auto dephase = [&] {
        for (std::size_t j = 0; j < spins; ++j) {
            const cdouble w = std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(j) /
                                                  static_cast<double>(spins));
            const cdouble t = cdouble(m[j][0], m[j][1]) * w;
            m[j][0] = t.real();
            m[j][1] = t.imag();
        }
    };
    rotate(180.0);
    relax(seq.inversion_time_ms);
    dephase();
    CVector out(seq.length());
    for (std::size_t t = 0; t < seq.length(); ++t) {
        rotate(seq.flip_angles_deg[t]);
        relax(seq.echo_time_ms);
        cdouble sum = 0.0;
        for (const Vec& v : m) sum += cdouble(v[0], v[1]);
        out[t] = sum / static_cast<double>(spins);
        relax(seq.repetition_times_ms[t] - seq.echo_time_ms);
        dephase();
    }
    return out;
}

}  // namespace testing
