#include "mrf/mrfnet.hpp"

#include "mrf/io.hpp"
#include "mrf/parallel.hpp"
#include "mrf/simd.hpp"

#include <Eigen/Dense>
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mrf::net {

using Json = nlohmann::json;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mat = Eigen::MatrixXd;

namespace {

constexpr char kMagic[] = "MRFN";
constexpr std::uint32_t kVersion = 1;

void check_finite(std::span<const double> x, const char* what) {
    for (double v : x)
        if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + ": non-finite input");
}

}  // namespace

std::vector<std::size_t> MlpModel::layout() const {
    std::vector<std::size_t> l{layer1.length, layer1.rank};
    for (const auto& layer : layers) l.push_back(layer.out);
    return l;
}

MlpModel init_model(const subspace::Subspace& sub, std::span<const std::size_t> layout,
                    std::uint64_t seed) {
    if (layout.size() < 3) throw InvalidArgument("init_model: layout needs at least [L, s, P]");
    if (layout[0] != sub.length || layout[1] != sub.rank)
        throw DimensionMismatch("init_model: layout [" + std::to_string(layout[0]) + ", " +
                                std::to_string(layout[1]) + ", ...] does not match subspace " +
                                std::to_string(sub.length) + " x " + std::to_string(sub.rank));
    MlpModel m;
    m.layer1 = sub;
    SplitMix64 rng(seed);
    for (std::size_t i = 2; i < layout.size(); ++i) {
        if (layout[i] == 0) throw InvalidArgument("init_model: zero-width layer");
        DenseLayer layer;
        layer.in = layout[i - 1];
        layer.out = layout[i];
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.in));
        layer.weights.resize(layer.in * layer.out);
        for (double& w : layer.weights) w = (2.0 * rng.uniform() - 1.0) * limit;
        layer.biases.assign(layer.out, 0.0);
        m.layers.push_back(std::move(layer));
    }
    m.target_scale.assign(layout.back(), 1.0);
    return m;
}

RVector compress_input(const MlpModel& model, std::span<const cdouble> x) {
    if (x.size() != model.input_length())
        throw DimensionMismatch("mrfnet: input length " + std::to_string(x.size()) + ", expected " +
                                std::to_string(model.input_length()));
    const CVector y = subspace::project(model.layer1, x);
    RVector h(y.size());
    for (std::size_t c = 0; c < y.size(); ++c) h[c] = y[c].real();
    return h;
}

RVector weighted_output_compressed(const MlpModel& model, std::span<const double> h1) {
    if (h1.size() != model.rank()) throw DimensionMismatch("mrfnet: compressed input length mismatch");
    check_finite(h1, "mrfnet");
    const auto& k = simd::kernels();
    RVector h(h1.begin(), h1.end()), z;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const DenseLayer& layer = model.layers[l];
        z.assign(layer.out, 0.0);
        for (std::size_t o = 0; o < layer.out; ++o)
            z[o] = k.dot(layer.weights.data() + o * layer.in, h.data(), layer.in) + layer.biases[o];
        if (l + 1 < model.layers.size())
            for (double& v : z) v = std::max(v, 0.0);
        h.swap(z);
    }
    for (std::size_t p = 0; p < h.size(); ++p) h[p] /= model.target_scale[p];
    return h;
}

RVector forward_compressed(const MlpModel& model, std::span<const double> h1) {
    RVector z = weighted_output_compressed(model, h1);
    for (double& v : z) v = std::max(v, 0.0);
    return z;
}

RVector weighted_output(const MlpModel& model, std::span<const cdouble> x) {
    return weighted_output_compressed(model, compress_input(model, x));
}

RVector forward(const MlpModel& model, std::span<const cdouble> x) {
    return forward_compressed(model, compress_input(model, x));
}

RVector predict_voxel(const MlpModel& model, std::span<const cdouble> x) {
    const std::size_t n = model.input_length();
    if (x.size() != n)
        throw DimensionMismatch("mrfnet: input length " + std::to_string(x.size()) + ", expected " +
                                std::to_string(n));
    // Phase alignment and normalization are applied after the projection,
    // with which they commute.
    std::vector<double> xr(n), xi(n);
    cdouble sum = 0.0;
    double norm2 = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        xr[t] = x[t].real();
        xi[t] = x[t].imag();
        sum += x[t];
        norm2 += xr[t] * xr[t] + xi[t] * xi[t];
    }
    const double mag = std::abs(sum);
    if (mag == 0.0 || !std::isfinite(mag)) throw DegenerateSignal("phase alignment undefined: temporal sum is zero");
    const double norm = std::sqrt(norm2);
    if (!(norm > 0.0)) throw DegenerateSignal("predict_voxel: zero signal");
    const cdouble rot = std::conj(sum) / mag;
    CVector y(model.rank());
    subspace::project_planar(model.layer1, xr.data(), xi.data(), y.data());
    RVector h(model.rank());
    for (std::size_t c = 0; c < h.size(); ++c) h[c] = (rot * y[c]).real() / norm;
    return forward_compressed(model, h);
}

void rescale_targets(MlpModel& model, std::span<const double> target_scale) {
    if (target_scale.size() != model.outputs())
        throw DimensionMismatch("rescale_targets: one scale per output required");
    DenseLayer& last = model.layers.back();
    for (std::size_t p = 0; p < last.out; ++p) {
        if (!(target_scale[p] > 0.0)) throw InvalidArgument("rescale_targets: scales must be positive");
        const double f = target_scale[p] / model.target_scale[p];
        for (std::size_t i = 0; i < last.in; ++i) last.weights[p * last.in + i] *= f;
        last.biases[p] *= f;
        model.target_scale[p] = target_scale[p];
    }
}

std::string layer1_digest(const MlpModel& model) {
    io::Sha256 h;
    const auto& s = model.layer1;
    const std::uint64_t dims[2] = {s.length, s.rank};
    h.update(std::as_bytes(std::span(dims)));
    h.update(std::as_bytes(std::span(s.basis_re)));
    h.update(std::as_bytes(std::span(s.basis_im)));
    h.update(std::as_bytes(std::span(s.eigenvalues)));
    const auto d = h.finish();
    return io::to_hex(d);
}

// ---- training configuration ----

void TrainConfig::validate() const {
    if (batch_size < 1) throw InvalidArgument("train.batch_size: must be >= 1");
    if (epochs < 1) throw InvalidArgument("train.epochs: must be >= 1");
    if (!(step_size > 0.0)) throw InvalidArgument("train.step_size: must be positive");
    if (!(decay > 0.0 && decay <= 1.0)) throw InvalidArgument("train.decay: must be in (0, 1]");
    if (!(snr_db_min <= snr_db_max)) throw InvalidArgument("train.snr_db: range must be ordered");
    if (augmentation_factor < 1) throw InvalidArgument("train.augmentation_factor: must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw InvalidArgument("train.adam_beta: must be in [0, 1)");
    if (!(adam_eps > 0.0)) throw InvalidArgument("train.adam_eps: must be positive");
    for (double c : target_scale)
        if (!(c > 0.0)) throw InvalidArgument("train.target_scale: must be positive");
}

std::string TrainConfig::to_json() const {
    Json j;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["step_size"] = step_size;
    j["decay"] = decay;
    j["snr_db"] = {snr_db_min, snr_db_max};
    j["noise_enabled"] = noise_enabled;
    j["augmentation_factor"] = augmentation_factor;
    j["seed"] = rng_seed;
    j["adam_beta1"] = adam_beta1;
    j["adam_beta2"] = adam_beta2;
    j["adam_eps"] = adam_eps;
    j["noise_domain"] = noise_domain == NoiseDomain::Compressed ? "compressed" : "full";
    j["target_scale"] = target_scale;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    Json j = Json::parse(text);
    TrainConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.step_size = j.value("step_size", c.step_size);
    c.decay = j.value("decay", c.decay);
    if (j.contains("snr_db")) {
        c.snr_db_min = j["snr_db"].at(0).get<double>();
        c.snr_db_max = j["snr_db"].at(1).get<double>();
    }
    c.noise_enabled = j.value("noise_enabled", c.noise_enabled);
    c.augmentation_factor = j.value("augmentation_factor", c.augmentation_factor);
    c.rng_seed = j.value("seed", c.rng_seed);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    const std::string domain = j.value("noise_domain", std::string("compressed"));
    if (domain == "compressed")
        c.noise_domain = NoiseDomain::Compressed;
    else if (domain == "full")
        c.noise_domain = NoiseDomain::Full;
    else
        throw InvalidArgument("train.noise_domain: expected \"compressed\" or \"full\"");
    if (j.contains("target_scale")) c.target_scale = j["target_scale"].get<std::vector<double>>();
    c.validate();
    return c;
}

// ---- training pairs ----

PairList::PairList(std::vector<TrainingPair> pairs) : pairs_(std::move(pairs)) {
    if (pairs_.empty()) throw InvalidArgument("training pairs: empty list");
    dim_ = pairs_.front().input.size();
    for (const auto& p : pairs_)
        if (p.input.size() != dim_) throw DimensionMismatch("training pairs: ragged inputs");
}

void PairList::fill(std::size_t i, double* input, double* label) const {
    const auto& p = pairs_[i];
    std::copy(p.input.begin(), p.input.end(), input);
    label[0] = p.t1_ms;
    label[1] = p.t2_ms;
}

TrainingSet::TrainingSet(const dict::Dictionary& dict, const subspace::Subspace& sub,
                         const TrainConfig& cfg, const Progress& progress)
    : dict_(dict), sub_(sub), cfg_(cfg), cd_(match::compress(dict, sub)) {
    cfg_.validate();
    aug_ = cfg_.augmentation_factor;
    count_ = dict.size() * aug_;
    if (dict.size() > std::numeric_limits<std::uint32_t>::max())
        throw InvalidArgument("training set: dictionary too large for 32-bit labels");
    labels_.resize(count_);
    const match::ClusterIndex index(cd_, match::grid_tiles(dict.grid, 8));
    const std::size_t chunk = 1 << 16;
    std::size_t done = 0;
    for (std::size_t c0 = 0; c0 < count_; c0 += chunk) {
        const std::size_t c1 = std::min(count_, c0 + chunk);
        parallel_for(c1 - c0, [&](std::size_t begin, std::size_t end) {
            RVector x(sub_.rank);
            for (std::size_t i = c0 + begin; i < c0 + end; ++i) {
                noisy_input(i, x.data());
                labels_[i] = static_cast<std::uint32_t>(index.nearest(x));
            }
        });
        done = c1;
        if (progress) progress(done, count_);
    }
}

void TrainingSet::noisy_input(std::size_t i, double* out) const {
    const std::size_t atom = i / aug_;
    const std::size_t rep = i % aug_;
    const std::size_t s = sub_.rank;
    SplitMix64 rng(mix_seed(cfg_.rng_seed, atom, rep));
    const double snr_db = cfg_.snr_db_min + (cfg_.snr_db_max - cfg_.snr_db_min) * rng.uniform();
    std::normal_distribution<double> gauss(0.0, 1.0);
    if (cfg_.noise_domain == NoiseDomain::Compressed) {
        double energy = 0.0;
        for (std::size_t c = 0; c < s; ++c) {
            out[c] = cd_.plane(c)[atom];
            energy += out[c] * out[c];
        }
        if (!cfg_.noise_enabled) return;
        const double sigma = std::sqrt(energy / (static_cast<double>(s) * std::pow(10.0, snr_db / 10.0)));
        for (std::size_t c = 0; c < s; ++c) out[c] += sigma * gauss(rng);
        return;
    }
    CVector x = dict_.atom_as_double(atom);
    if (cfg_.noise_enabled) {
        const double energy = l2_norm(x) * l2_norm(x);
        const double sigma = std::sqrt(energy / (static_cast<double>(x.size()) *
                                                 std::pow(10.0, snr_db / 10.0) * 2.0));
        for (auto& v : x) v += cdouble(sigma * gauss(rng), sigma * gauss(rng));
    }
    const CVector y = subspace::project(sub_, x);
    for (std::size_t c = 0; c < s; ++c) out[c] = y[c].real();
}

void TrainingSet::fill(std::size_t i, double* input, double* label) const {
    noisy_input(i, input);
    const auto [t1, t2] = dict_.grid.params_of(labels_[i]);
    label[0] = t1;
    label[1] = t2;
}

TrainingPair TrainingSet::pair(std::size_t i) const {
    TrainingPair p;
    p.input.resize(sub_.rank);
    double label[2];
    fill(i, p.input.data(), label);
    p.t1_ms = label[0];
    p.t2_ms = label[1];
    return p;
}

TrainingSet make_training_set(const dict::Dictionary& dict, const subspace::Subspace& sub,
                              const TrainConfig& cfg, const TrainingSet::Progress& progress) {
    return TrainingSet(dict, sub, cfg, progress);
}

// ---- back-propagation ----

Gradients Gradients::zeros_like(const MlpModel& model) {
    Gradients g;
    for (const auto& layer : model.layers) {
        g.weights.emplace_back(layer.weights.size(), 0.0);
        g.biases.emplace_back(layer.biases.size(), 0.0);
    }
    return g;
}

double loss_and_gradients(const MlpModel& model, std::span<const double> inputs,
                          std::span<const double> labels, std::size_t batch, Gradients& grad) {
    const std::size_t nl = model.layers.size();
    const std::size_t P = model.outputs();
    if (inputs.size() != batch * model.rank() || labels.size() != batch * P)
        throw DimensionMismatch("loss_and_gradients: batch buffer size mismatch");
    const auto B = static_cast<Eigen::Index>(batch);
    // Column per sample.
    std::vector<Mat> h(nl + 1), z(nl);
    h[0] = Eigen::Map<const Mat>(inputs.data(), static_cast<Eigen::Index>(model.rank()), B);
    for (std::size_t l = 0; l < nl; ++l) {
        const DenseLayer& layer = model.layers[l];
        Eigen::Map<const RowMat> W(layer.weights.data(), static_cast<Eigen::Index>(layer.out),
                                   static_cast<Eigen::Index>(layer.in));
        Eigen::Map<const Eigen::VectorXd> b(layer.biases.data(), static_cast<Eigen::Index>(layer.out));
        z[l] = W * h[l];
        z[l].colwise() += b;
        h[l + 1] = z[l].cwiseMax(0.0);
    }
    Mat target = Eigen::Map<const Mat>(labels.data(), static_cast<Eigen::Index>(P), B);
    for (std::size_t p = 0; p < P; ++p) target.row(static_cast<Eigen::Index>(p)) *= model.target_scale[p];
    const Mat diff = h[nl] - target;
    const double denom = static_cast<double>(batch * P);
    const double loss = diff.squaredNorm() / denom;

    Mat delta = (2.0 / denom) * diff;
    for (std::size_t l = nl; l-- > 0;) {
        delta = delta.cwiseProduct((z[l].array() > 0.0).cast<double>().matrix());
        const DenseLayer& layer = model.layers[l];
        Eigen::Map<RowMat> gW(grad.weights[l].data(), static_cast<Eigen::Index>(layer.out),
                              static_cast<Eigen::Index>(layer.in));
        Eigen::Map<Eigen::VectorXd> gb(grad.biases[l].data(), static_cast<Eigen::Index>(layer.out));
        gW.noalias() += delta * h[l].transpose();
        gb += delta.rowwise().sum();
        if (l > 0) {
            Eigen::Map<const RowMat> W(layer.weights.data(), static_cast<Eigen::Index>(layer.out),
                                       static_cast<Eigen::Index>(layer.in));
            delta = W.transpose() * delta;
        }
    }
    return loss;
}

namespace {

// Shifts the output biases so the mean pre-activation over an even sample of
// the pairs equals the mean scaled target. A zero-bias output whose weighted
// sum is negative on every input would otherwise never leave the ReLU floor.
void center_output_biases(MlpModel& model, const PairSource& pairs) {
    const std::size_t P = model.outputs();
    const std::size_t samples = std::min<std::size_t>(pairs.size(), 4096);
    const std::size_t stride = pairs.size() / samples;
    std::vector<double> input(model.rank()), label(P), shift(P, 0.0);
    std::size_t used = 0;
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    for (std::size_t k = 0; k < samples; ++k) {
        pairs.fill(k * stride, input.data(), label.data());
        if (!finite(input) || !finite(label)) continue;
        const RVector z = weighted_output_compressed(model, input);
        for (std::size_t p = 0; p < P; ++p) shift[p] += (label[p] - z[p]) * model.target_scale[p];
        ++used;
    }
    if (used == 0) return;
    for (std::size_t p = 0; p < P; ++p) model.layers.back().biases[p] += shift[p] / static_cast<double>(used);
}

}  // namespace

TrainResult train(MlpModel model, const PairSource& pairs, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    if (model.layers.empty()) throw InvalidArgument("train: model has no trainable layers");
    if (pairs.input_dim() != model.rank()) throw DimensionMismatch("train: pair input dimension mismatch");
    if (model.outputs() != 2) throw DimensionMismatch("train: labels are (T1, T2); model must have 2 outputs");
    if (cfg.target_scale.size() != model.outputs())
        throw DimensionMismatch("train: target_scale needs one entry per output");
    if (pairs.size() == 0) throw InvalidArgument("train: no training pairs");
    if (model.config_json.empty()) {
        model.target_scale = cfg.target_scale;
        center_output_biases(model, pairs);
    } else {
        rescale_targets(model, cfg.target_scale);
    }
    model.config_json = cfg.to_json();

    const std::size_t n = pairs.size();
    const std::size_t s = model.rank();
    const std::size_t P = model.outputs();
    Gradients grad = Gradients::zeros_like(model);
    Gradients m1 = Gradients::zeros_like(model), m2 = Gradients::zeros_like(model);
    std::vector<std::size_t> order(n);
    std::vector<double> inputs(cfg.batch_size * s), labels(cfg.batch_size * P);
    std::vector<double> history;
    double beta1_t = 1.0, beta2_t = 1.0;
    double lr = cfg.step_size;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        SplitMix64 shuffle_rng(mix_seed(cfg.rng_seed, 0x5u, epoch));
        for (std::size_t i = n; i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                (static_cast<unsigned __int128>(shuffle_rng()) * i) >> 64);
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch_size, ++batches) {
            const std::size_t bs = std::min(cfg.batch_size, n - b0);
            for (std::size_t k = 0; k < bs; ++k)
                pairs.fill(order[b0 + k], inputs.data() + k * s, labels.data() + k * P);
            for (auto& g : grad.weights) std::fill(g.begin(), g.end(), 0.0);
            for (auto& g : grad.biases) std::fill(g.begin(), g.end(), 0.0);
            const double loss = loss_and_gradients(model, std::span(inputs).first(bs * s),
                                                   std::span(labels).first(bs * P), bs, grad);
            if (!std::isfinite(loss))
                throw NonFiniteLoss("train: non-finite loss at epoch " + std::to_string(epoch) +
                                        ", batch " + std::to_string(batches),
                                    epoch, batches);
            epoch_loss += loss;
            beta1_t *= cfg.adam_beta1;
            beta2_t *= cfg.adam_beta2;
            const double c1 = 1.0 / (1.0 - beta1_t);
            const double c2 = 1.0 / (1.0 - beta2_t);
            auto adam = [&](std::vector<double>& param, std::vector<double>& g, std::vector<double>& m,
                            std::vector<double>& v) {
                for (std::size_t k = 0; k < param.size(); ++k) {
                    m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * g[k];
                    v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * g[k] * g[k];
                    param[k] -= lr * (m[k] * c1) / (std::sqrt(v[k] * c2) + cfg.adam_eps);
                }
            };
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                adam(model.layers[l].weights, grad.weights[l], m1.weights[l], m2.weights[l]);
                adam(model.layers[l].biases, grad.biases[l], m1.biases[l], m2.biases[l]);
            }
        }
        history.push_back(epoch_loss / static_cast<double>(batches));
        if (on_epoch) on_epoch(epoch, history.back());
        lr *= cfg.decay;
    }
    return {std::move(model), std::move(history)};
}

// ---- checkpoint ----

io::Bytes serialize_model(const MlpModel& model) {
    io::Writer w;
    w.put_magic(kMagic);
    w.put(kVersion);
    const auto layout = model.layout();
    w.put(static_cast<std::uint32_t>(layout.size()));
    for (std::size_t v : layout) w.put(static_cast<std::uint32_t>(v));
    w.put(std::uint8_t{1});
    const auto& sub = model.layer1;
    w.put(static_cast<std::uint32_t>(sub.length));
    w.put(static_cast<std::uint32_t>(sub.rank));
    w.put_array(std::span<const double>(sub.eigenvalues));
    for (std::size_t c = 0; c < sub.rank; ++c)
        for (std::size_t t = 0; t < sub.length; ++t) {
            w.put(sub.column_re(c)[t]);
            w.put(sub.column_im(c)[t]);
        }
    for (const auto& layer : model.layers) {
        w.put(static_cast<std::uint32_t>(layer.out));
        w.put(static_cast<std::uint32_t>(layer.in));
        w.put_array(std::span<const double>(layer.weights));
        w.put_array(std::span<const double>(layer.biases));
    }
    Json echo;
    echo["target_scale"] = model.target_scale;
    echo["source_digest"] = sub.source_digest;
    echo["train"] = model.config_json.empty() ? Json() : Json::parse(model.config_json);
    w.put_string(echo.dump());
    w.put_checksum();
    return w.take();
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
    io::write_file(path, serialize_model(model));
}

MlpModel load_model(const std::filesystem::path& path) {
    const io::Bytes data = io::read_file(path);
    const std::string name = "checkpoint " + path.string();
    io::Reader r = io::open_checked(data, kMagic, kVersion, name);
    const auto nlayout = r.get<std::uint32_t>();
    if (nlayout < 3 || nlayout > 64) throw FormatError(name + ": implausible layer count");
    std::vector<std::size_t> layout(nlayout);
    for (auto& v : layout) v = r.get<std::uint32_t>();
    if (r.get<std::uint8_t>() != 1) throw FormatError(name + ": layer 1 must be fixed");
    MlpModel m;
    auto& sub = m.layer1;
    sub.length = r.get<std::uint32_t>();
    sub.rank = r.get<std::uint32_t>();
    if (sub.length != layout[0] || sub.rank != layout[1] || sub.rank > sub.length)
        throw FormatError(name + ": subspace block does not match layout");
    if (r.remaining() < sub.rank * (2 * sub.length + 1) * sizeof(double))
        throw FormatError(name + ": truncated subspace block");
    sub.eigenvalues.resize(sub.rank);
    r.get_array(std::span<double>(sub.eigenvalues));
    sub.basis_re.resize(sub.length * sub.rank);
    sub.basis_im.resize(sub.length * sub.rank);
    for (std::size_t k = 0; k < sub.length * sub.rank; ++k) {
        sub.basis_re[k] = r.get<double>();
        sub.basis_im[k] = r.get<double>();
    }
    for (std::size_t i = 2; i < layout.size(); ++i) {
        DenseLayer layer;
        layer.out = r.get<std::uint32_t>();
        layer.in = r.get<std::uint32_t>();
        if (layer.out != layout[i] || layer.in != layout[i - 1])
            throw FormatError(name + ": layer " + std::to_string(i) + " dimensions do not match layout");
        if (r.remaining() < (layer.in + 1) * layer.out * sizeof(double))
            throw FormatError(name + ": truncated layer " + std::to_string(i));
        layer.weights.resize(layer.in * layer.out);
        layer.biases.resize(layer.out);
        r.get_array(std::span<double>(layer.weights));
        r.get_array(std::span<double>(layer.biases));
        m.layers.push_back(std::move(layer));
    }
    Json echo;
    try {
        echo = Json::parse(r.get_string());
    } catch (const Json::exception& e) {
        throw FormatError(name + ": bad config echo: " + e.what());
    }
    if (r.remaining() != 0) throw FormatError(name + ": trailing bytes");
    m.target_scale = echo.value("target_scale", std::vector<double>(layout.back(), 1.0));
    if (m.target_scale.size() != layout.back()) throw FormatError(name + ": target_scale size mismatch");
    sub.source_digest = echo.value("source_digest", std::string());
    if (echo.contains("train") && !echo["train"].is_null()) m.config_json = echo["train"].dump();
    return m;
}

}  // namespace mrf::net
