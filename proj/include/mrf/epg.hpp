#pragma once

// Extended Phase Graph simulation of an inversion-prepared FISP sequence,
// plus an isochromat-ensemble Bloch simulator used as an independent check.
// All times are in milliseconds, all angles in degrees.

#include "mrf/common.hpp"
#include "mrf/io.hpp"
#include "mrf/simd.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>

namespace mrf::epg {

struct SequenceParams {
    std::vector<double> flip_angles_deg;
    std::vector<double> repetition_times_ms;
    double echo_time_ms = 2.0;
    double inversion_time_ms = 18.0;
    double rf_phase_deg = 90.0;
    int epg_max_order = 250;

    std::size_t length() const { return flip_angles_deg.size(); }
    // Throws InvalidArgument describing the first violated constraint.
    void validate() const;
    // SHA-256 over a canonical little-endian serialization of every field.
    io::Digest digest() const;
};

// alpha_t = 10 + 50 |sin(pi t / 200)| for t = 1..length.
std::vector<double> default_flip_schedule(std::size_t length = 1000);
// Default schedule, constant TR = 12 ms, TE = 2 ms, TI = 18 ms, phase 90.
SequenceParams default_sequence(std::size_t length = 1000);

// One decimal value per line. When expected_length is set the file must
// contain exactly that many values. Errors carry the 1-based line number.
std::vector<double> parse_schedule(std::istream& in,
                                   std::optional<std::size_t> expected_length = std::nullopt);
std::vector<double> read_schedule(const std::filesystem::path& path,
                                  std::optional<std::size_t> expected_length = std::nullopt);
void write_schedule(const std::filesystem::path& path, std::span<const double> values);

struct Fingerprint {
    CVector samples;
};

// Configuration state over dephasing orders 0..K.
struct EpgState {
    CVector f_plus;
    CVector f_minus;
    CVector z;

    static EpgState equilibrium(int max_order);
    int max_order() const { return static_cast<int>(z.size()) - 1; }
};

// cos/sin of an angle in degrees, exact at multiples of 90.
std::pair<double, double> cos_sin_deg(double deg);

// The 3x3 mixing matrix acting on (F+_k, F-_k, Z_k) for a pulse of flip
// alpha about the transverse axis at angle phase.
simd::RfMatrix rf_matrix(double alpha_deg, double phase_deg);

EpgState rf_rotation(const EpgState& state, double alpha_deg, double phase_deg);
// Relaxation without the gradient shift.
EpgState relax(const EpgState& state, double dt_ms, double t1_ms, double t2_ms);
// Unbalanced-gradient dephasing by one order; content above the max order is
// discarded.
EpgState shift(const EpgState& state);
EpgState relax_and_shift(const EpgState& state, double dt_ms, double t1_ms, double t2_ms);

// Reference simulator built from the state operations above.
Fingerprint simulate_fingerprint_reference(double t1_ms, double t2_ms, const SequenceParams& seq);

// Production simulator: planar state, active-order tracking and SIMD kernels.
// Matches simulate_fingerprint_reference to rounding.
Fingerprint simulate_fingerprint(double t1_ms, double t2_ms, const SequenceParams& seq);

Fingerprint isochromat_ensemble(double t1_ms, double t2_ms, const SequenceParams& seq,
                                int n_spins);

}  // namespace mrf::epg
