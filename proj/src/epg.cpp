#include "mrf/epg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mrf::epg {

void SequenceParams::validate() const {
    if (flip_angles_deg.empty()) throw InvalidArgument("sequence: empty flip-angle schedule");
    if (flip_angles_deg.size() != repetition_times_ms.size())
        throw InvalidArgument("sequence: flip-angle and TR schedules differ in length (" +
                              std::to_string(flip_angles_deg.size()) + " vs " +
                              std::to_string(repetition_times_ms.size()) + ")");
    if (!(echo_time_ms > 0.0)) throw InvalidArgument("sequence: echo time must be positive");
    if (!(inversion_time_ms >= 0.0))
        throw InvalidArgument("sequence: inversion time must be non-negative");
    if (!std::isfinite(rf_phase_deg)) throw InvalidArgument("sequence: RF phase must be finite");
    if (epg_max_order < 1) throw InvalidArgument("sequence: epg_max_order must be positive");
    for (std::size_t t = 0; t < flip_angles_deg.size(); ++t) {
        const double a = flip_angles_deg[t];
        if (!(a >= 0.0 && a <= 180.0))
            throw InvalidArgument("sequence: flip angle " + std::to_string(a) + " at frame " +
                                  std::to_string(t) + " outside [0, 180]");
        if (!(repetition_times_ms[t] > echo_time_ms))
            throw InvalidArgument("sequence: TR at frame " + std::to_string(t) +
                                  " must exceed the echo time");
    }
}

io::Digest SequenceParams::digest() const {
    io::Writer w;
    w.put(static_cast<std::uint64_t>(flip_angles_deg.size()));
    w.put_array(std::span<const double>(flip_angles_deg));
    w.put(static_cast<std::uint64_t>(repetition_times_ms.size()));
    w.put_array(std::span<const double>(repetition_times_ms));
    w.put(echo_time_ms);
    w.put(inversion_time_ms);
    w.put(rf_phase_deg);
    w.put(static_cast<std::int64_t>(epg_max_order));
    return io::sha256(w.bytes());
}

std::vector<double> default_flip_schedule(std::size_t length) {
    std::vector<double> fa(length);
    for (std::size_t t = 0; t < length; ++t) {
        const double frame = static_cast<double>(t + 1);
        fa[t] = 10.0 + 50.0 * std::abs(std::sin(std::numbers::pi * frame / 200.0));
    }
    return fa;
}

SequenceParams default_sequence(std::size_t length) {
    SequenceParams seq;
    seq.flip_angles_deg = default_flip_schedule(length);
    seq.repetition_times_ms.assign(length, 12.0);
    return seq;
}

std::vector<double> parse_schedule(std::istream& in, std::optional<std::size_t> expected_length) {
    std::vector<double> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto first = line.find_first_not_of(" \t\r");
        auto last = line.find_last_not_of(" \t\r");
        if (first == std::string::npos)
            throw ParseError("schedule line " + std::to_string(line_no) + ": empty line", line_no);
        const char* b = line.data() + first;
        const char* e = line.data() + last + 1;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(b, e, v);
        if (ec != std::errc() || ptr != e || !std::isfinite(v))
            throw ParseError("schedule line " + std::to_string(line_no) + ": not a number: '" +
                                 std::string(b, e) + "'",
                             line_no);
        values.push_back(v);
    }
    if (expected_length && values.size() != *expected_length)
        throw ParseError("schedule has " + std::to_string(values.size()) + " lines, expected " +
                             std::to_string(*expected_length),
                         line_no + 1);
    return values;
}

std::vector<double> read_schedule(const std::filesystem::path& path,
                                  std::optional<std::size_t> expected_length) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open schedule " + path.string());
    try {
        return parse_schedule(in, expected_length);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

void write_schedule(const std::filesystem::path& path, std::span<const double> values) {
    std::ofstream out(path);
    if (!out) throw Error("cannot create " + path.string());
    out.precision(17);
    for (double v : values) out << v << '\n';
}

EpgState EpgState::equilibrium(int max_order) {
    if (max_order < 0) throw InvalidArgument("EpgState: negative max order");
    const auto n = static_cast<std::size_t>(max_order) + 1;
    EpgState s{CVector(n), CVector(n), CVector(n)};
    s.z[0] = 1.0;
    return s;
}

std::pair<double, double> cos_sin_deg(double deg) {
    const double r = std::fmod(deg, 360.0);
    if (std::fmod(r, 90.0) == 0.0) {
        const int quarter = static_cast<int>(((r < 0 ? r + 360.0 : r) / 90.0)) % 4;
        static constexpr double kCos[4] = {1.0, 0.0, -1.0, 0.0};
        static constexpr double kSin[4] = {0.0, 1.0, 0.0, -1.0};
        return {kCos[quarter], kSin[quarter]};
    }
    const double rad = deg * std::numbers::pi / 180.0;
    return {std::cos(rad), std::sin(rad)};
}

simd::RfMatrix rf_matrix(double alpha_deg, double phase_deg) {
    const auto [ch, sh] = cos_sin_deg(alpha_deg / 2.0);
    const auto [ca, sa] = cos_sin_deg(alpha_deg);
    const auto [cp, sp] = cos_sin_deg(phase_deg);
    const double c2 = ch * ch;
    const double s2 = sh * sh;
    const double cos2p = cp * cp - sp * sp;
    const double sin2p = 2.0 * cp * sp;
    simd::RfMatrix t{};
    // Row 0: F+ update.
    t.re[0] = c2;
    t.re[1] = cos2p * s2;
    t.im[1] = sin2p * s2;
    t.re[2] = sp * sa;
    t.im[2] = -cp * sa;
    // Row 1: F- update.
    t.re[3] = cos2p * s2;
    t.im[3] = -sin2p * s2;
    t.re[4] = c2;
    t.re[5] = sp * sa;
    t.im[5] = cp * sa;
    // Row 2: Z update.
    t.re[6] = -0.5 * sp * sa;
    t.im[6] = -0.5 * cp * sa;
    t.re[7] = -0.5 * sp * sa;
    t.im[7] = 0.5 * cp * sa;
    t.re[8] = ca;
    return t;
}

namespace {

void check_relaxation(double t1_ms, double t2_ms, double dt_ms) {
    if (!(t1_ms > 0.0) || !(t2_ms > 0.0))
        throw InvalidArgument("relaxation times must be positive (T1=" + std::to_string(t1_ms) +
                              ", T2=" + std::to_string(t2_ms) + ")");
    if (!(dt_ms >= 0.0)) throw InvalidArgument("relaxation interval must be non-negative");
}

cdouble apply_row(const simd::RfMatrix& t, int row, cdouble a, cdouble b, cdouble c) {
    const double* rr = t.re + 3 * row;
    const double* ri = t.im + 3 * row;
    const double re = ((rr[0] * a.real() - ri[0] * a.imag()) + (rr[1] * b.real() - ri[1] * b.imag())) +
                      (rr[2] * c.real() - ri[2] * c.imag());
    const double im = ((rr[0] * a.imag() + ri[0] * a.real()) + (rr[1] * b.imag() + ri[1] * b.real())) +
                      (rr[2] * c.imag() + ri[2] * c.real());
    return {re, im};
}

}  // namespace

EpgState rf_rotation(const EpgState& state, double alpha_deg, double phase_deg) {
    if (!(alpha_deg >= 0.0 && alpha_deg <= 180.0))
        throw InvalidArgument("flip angle outside [0, 180]");
    const simd::RfMatrix t = rf_matrix(alpha_deg, phase_deg);
    EpgState out = state;
    for (std::size_t k = 0; k < state.z.size(); ++k) {
        const cdouble a = state.f_plus[k], b = state.f_minus[k], c = state.z[k];
        out.f_plus[k] = apply_row(t, 0, a, b, c);
        out.f_minus[k] = apply_row(t, 1, a, b, c);
        out.z[k] = apply_row(t, 2, a, b, c);
    }
    return out;
}

EpgState relax(const EpgState& state, double dt_ms, double t1_ms, double t2_ms) {
    check_relaxation(t1_ms, t2_ms, dt_ms);
    const double e1 = std::exp(-dt_ms / t1_ms);
    const double e2 = std::exp(-dt_ms / t2_ms);
    EpgState out = state;
    for (std::size_t k = 0; k < out.z.size(); ++k) {
        out.f_plus[k] = {out.f_plus[k].real() * e2, out.f_plus[k].imag() * e2};
        out.f_minus[k] = {out.f_minus[k].real() * e2, out.f_minus[k].imag() * e2};
        out.z[k] = {out.z[k].real() * e1, out.z[k].imag() * e1};
    }
    out.z[0] = {out.z[0].real() + (1.0 - e1), out.z[0].imag()};
    return out;
}

EpgState shift(const EpgState& state) {
    const std::size_t n = state.z.size();
    EpgState out = state;
    for (std::size_t k = n - 1; k >= 1; --k) out.f_plus[k] = state.f_plus[k - 1];
    for (std::size_t k = 0; k + 1 < n; ++k) out.f_minus[k] = state.f_minus[k + 1];
    out.f_minus[n - 1] = 0.0;
    out.f_plus[0] = std::conj(out.f_minus[0]);
    return out;
}

EpgState relax_and_shift(const EpgState& state, double dt_ms, double t1_ms, double t2_ms) {
    return shift(relax(state, dt_ms, t1_ms, t2_ms));
}

Fingerprint simulate_fingerprint_reference(double t1_ms, double t2_ms, const SequenceParams& seq) {
    seq.validate();
    check_relaxation(t1_ms, t2_ms, 0.0);
    EpgState st = EpgState::equilibrium(seq.epg_max_order);
    st = rf_rotation(st, 180.0, seq.rf_phase_deg);
    st = relax_and_shift(st, seq.inversion_time_ms, t1_ms, t2_ms);
    Fingerprint fp{CVector(seq.length())};
    for (std::size_t t = 0; t < seq.length(); ++t) {
        st = rf_rotation(st, seq.flip_angles_deg[t], seq.rf_phase_deg);
        st = relax(st, seq.echo_time_ms, t1_ms, t2_ms);
        fp.samples[t] = st.f_plus[0];
        st = relax_and_shift(st, seq.repetition_times_ms[t] - seq.echo_time_ms, t1_ms, t2_ms);
    }
    return fp;
}

namespace {

// Planar state over orders 0..K with the number of populated orders tracked;
// orders at or beyond `active` are exactly zero.
class PlanarState {
public:
    explicit PlanarState(int max_order)
        : n_(static_cast<std::size_t>(max_order) + 1), storage_(6 * n_, 0.0) {
        storage_[4 * n_] = 1.0;  // Z_0 = 1
    }

    simd::EpgPlanes planes() {
        double* p = storage_.data();
        return {p, p + n_, p + 2 * n_, p + 3 * n_, p + 4 * n_, p + 5 * n_};
    }

    std::size_t active() const { return active_; }

    void relax(double e1, double e2) {
        simd::kernels().epg_relax(planes(), active_, e1, e2);
        storage_[4 * n_] += 1.0 - e1;
    }

    void rotate(const simd::RfMatrix& t, bool real_mode) {
        if (real_mode)
            simd::kernels().epg_rotate_real(planes(), active_, t);
        else
            simd::kernels().epg_rotate(planes(), active_, t);
    }

    void shift() {
        auto p = planes();
        const std::size_t grown = std::min(active_ + 1, n_);
        // F+ moves up one order; the top order falls off when saturated.
        std::move_backward(p.fp_re, p.fp_re + grown - 1, p.fp_re + grown);
        std::move_backward(p.fp_im, p.fp_im + grown - 1, p.fp_im + grown);
        // F- moves down one order.
        std::move(p.fm_re + 1, p.fm_re + grown, p.fm_re);
        std::move(p.fm_im + 1, p.fm_im + grown, p.fm_im);
        p.fm_re[grown - 1] = 0.0;
        p.fm_im[grown - 1] = 0.0;
        p.fp_re[0] = p.fm_re[0];
        p.fp_im[0] = -p.fm_im[0];
        active_ = grown;
    }

    cdouble f_plus0() const { return {storage_[0], storage_[n_]}; }

private:
    std::size_t n_;
    std::vector<double> storage_;
    std::size_t active_ = 1;
};

}  // namespace

Fingerprint simulate_fingerprint(double t1_ms, double t2_ms, const SequenceParams& seq) {
    seq.validate();
    check_relaxation(t1_ms, t2_ms, 0.0);
    const auto decay = [&](double dt) {
        return std::pair{std::exp(-dt / t1_ms), std::exp(-dt / t2_ms)};
    };

    // Real arithmetic suffices while every pulse matrix is real: the state
    // starts real and stays real.
    std::vector<simd::RfMatrix> pulses(seq.length());
    bool real_mode = true;
    const simd::RfMatrix inversion = rf_matrix(180.0, seq.rf_phase_deg);
    real_mode = real_mode && inversion.is_real();
    for (std::size_t t = 0; t < seq.length(); ++t) {
        pulses[t] = rf_matrix(seq.flip_angles_deg[t], seq.rf_phase_deg);
        real_mode = real_mode && pulses[t].is_real();
    }

    PlanarState st(seq.epg_max_order);
    st.rotate(inversion, real_mode);
    {
        const auto [e1, e2] = decay(seq.inversion_time_ms);
        st.relax(e1, e2);
        st.shift();
    }
    const auto [e1_te, e2_te] = decay(seq.echo_time_ms);
    double last_tr = -1.0;
    double e1_rest = 1.0, e2_rest = 1.0;
    Fingerprint fp{CVector(seq.length())};
    for (std::size_t t = 0; t < seq.length(); ++t) {
        st.rotate(pulses[t], real_mode);
        st.relax(e1_te, e2_te);
        fp.samples[t] = st.f_plus0();
        const double tr = seq.repetition_times_ms[t];
        if (tr != last_tr) {
            std::tie(e1_rest, e2_rest) = decay(tr - seq.echo_time_ms);
            last_tr = tr;
        }
        st.relax(e1_rest, e2_rest);
        st.shift();
    }
    return fp;
}

Fingerprint isochromat_ensemble(double t1_ms, double t2_ms, const SequenceParams& seq,
                                int n_spins) {
    if (n_spins < 100) throw InvalidArgument("isochromat_ensemble: n_spins must be >= 100");
    seq.validate();
    check_relaxation(t1_ms, t2_ms, 0.0);
    const auto n = static_cast<std::size_t>(n_spins);

    std::vector<double> mx(n, 0.0), my(n, 0.0), mz(n, 1.0);
    std::vector<double> prec_c(n), prec_s(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double theta = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
        prec_c[j] = std::cos(theta);
        prec_s[j] = std::sin(theta);
    }

    const auto [cp, sp] = cos_sin_deg(seq.rf_phase_deg);
    // Right-handed rotation by alpha about the axis (cos phase, sin phase, 0).
    const auto rotate = [&](double alpha_deg) {
        const auto [ca, sa] = cos_sin_deg(alpha_deg);
        const double u = 1.0 - ca;
        const double r00 = ca + cp * cp * u, r01 = cp * sp * u, r02 = sp * sa;
        const double r10 = cp * sp * u, r11 = ca + sp * sp * u, r12 = -cp * sa;
        const double r20 = -sp * sa, r21 = cp * sa, r22 = ca;
        for (std::size_t j = 0; j < n; ++j) {
            const double x = mx[j], y = my[j], z = mz[j];
            mx[j] = r00 * x + r01 * y + r02 * z;
            my[j] = r10 * x + r11 * y + r12 * z;
            mz[j] = r20 * x + r21 * y + r22 * z;
        }
    };
    const auto relax_spins = [&](double dt) {
        const double e1 = std::exp(-dt / t1_ms), e2 = std::exp(-dt / t2_ms);
        for (std::size_t j = 0; j < n; ++j) {
            mx[j] *= e2;
            my[j] *= e2;
            mz[j] = mz[j] * e1 + (1.0 - e1);
        }
    };
    // One full cycle of gradient dephasing across the ensemble.
    const auto dephase = [&] {
        for (std::size_t j = 0; j < n; ++j) {
            const double x = mx[j], y = my[j];
            mx[j] = x * prec_c[j] - y * prec_s[j];
            my[j] = x * prec_s[j] + y * prec_c[j];
        }
    };

    rotate(180.0);
    relax_spins(seq.inversion_time_ms);
    dephase();
    Fingerprint fp{CVector(seq.length())};
    for (std::size_t t = 0; t < seq.length(); ++t) {
        rotate(seq.flip_angles_deg[t]);
        relax_spins(seq.echo_time_ms);
        double sx = 0.0, sy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            sx += mx[j];
            sy += my[j];
        }
        fp.samples[t] = {sx / static_cast<double>(n), sy / static_cast<double>(n)};
        relax_spins(seq.repetition_times_ms[t] - seq.echo_time_ms);
        dephase();
    }
    return fp;
}

}  // namespace mrf::epg
