#pragma once

// MRF-Net: fixed projection layer Re(V^H x) followed by fully connected ReLU
// layers regressing (T1, T2).

#include "mrf/common.hpp"
#include "mrf/dictionary.hpp"
#include "mrf/matcher.hpp"
#include "mrf/subspace.hpp"

#include <filesystem>
#include <functional>

namespace mrf::net {

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // out x in, row-major
    std::vector<double> biases;
};

struct MlpModel {
    subspace::Subspace layer1;
    std::vector<DenseLayer> layers;
    // The last layer predicts physical * target_scale; outputs are divided by
    // it, so every public output is in physical units (ms).
    std::vector<double> target_scale;
    // Training configuration echo (JSON); empty for an untrained model.
    std::string config_json;

    // [L, s, h2, ..., P]
    std::vector<std::size_t> layout() const;
    std::size_t input_length() const { return layer1.length; }
    std::size_t rank() const { return layer1.rank; }
    std::size_t outputs() const { return layers.empty() ? rank() : layers.back().out; }
};

// layout = [L, s, h2, ..., P]; layout[0] and layout[1] must match the
// subspace. Weights are uniform in +-sqrt(6 / fan_in), biases zero.
MlpModel init_model(const subspace::Subspace& sub, std::span<const std::size_t> layout,
                    std::uint64_t seed);

// Re(V^H x) for a length-L signal.
RVector compress_input(const MlpModel& model, std::span<const cdouble> x);

// Outputs from the s-dimensional real input of layer 2.
RVector weighted_output_compressed(const MlpModel& model, std::span<const double> h1);
RVector forward_compressed(const MlpModel& model, std::span<const double> h1);

// Full-length signal, already phase-aligned and normalized.
RVector weighted_output(const MlpModel& model, std::span<const cdouble> x);
RVector forward(const MlpModel& model, std::span<const cdouble> x);
// Phase-aligns and normalizes first. Throws DegenerateSignal for zero input.
RVector predict_voxel(const MlpModel& model, std::span<const cdouble> x);

// Changes the internal output scaling without changing any public output.
void rescale_targets(MlpModel& model, std::span<const double> target_scale);

// SHA-256 over layer-1 parameters, for the frozen-layer check.
std::string layer1_digest(const MlpModel& model);

enum class NoiseDomain { Compressed, Full };

struct TrainConfig {
    std::size_t batch_size = 50;
    std::size_t epochs = 30;
    double step_size = 1e-2;
    double decay = 0.8;
    double snr_db_min = 40.0;
    double snr_db_max = 60.0;
    bool noise_enabled = true;
    std::size_t augmentation_factor = 100;
    std::uint64_t rng_seed = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    NoiseDomain noise_domain = NoiseDomain::Compressed;
    std::vector<double> target_scale{1e-3, 1e-2};

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

struct TrainingPair {
    RVector input;  // length s
    double t1_ms = 0.0;
    double t2_ms = 0.0;
};

// Random-access source of training pairs.
class PairSource {
public:
    virtual ~PairSource() = default;
    virtual std::size_t size() const = 0;
    virtual std::size_t input_dim() const = 0;
    // Writes input_dim() inputs and the physical (t1, t2) label.
    virtual void fill(std::size_t i, double* input, double* label) const = 0;
};

class PairList final : public PairSource {
public:
    explicit PairList(std::vector<TrainingPair> pairs);
    std::size_t size() const override { return pairs_.size(); }
    std::size_t input_dim() const override { return dim_; }
    void fill(std::size_t i, double* input, double* label) const override;

private:
    std::vector<TrainingPair> pairs_;
    std::size_t dim_ = 0;
};

// Noisy compressed atoms relabelled by exact nearest-neighbour search over the
// clean compressed dictionary. Pair i = atom (i / augmentation) with
// repetition (i % augmentation); its noise is drawn from a generator seeded
// by (seed, atom, repetition), so any pair can be regenerated on demand. Only
// the label indices are stored.
class TrainingSet final : public PairSource {
public:
    using Progress = std::function<void(std::size_t done, std::size_t total)>;

    TrainingSet(const dict::Dictionary& dict, const subspace::Subspace& sub, const TrainConfig& cfg,
                const Progress& progress = {});

    std::size_t size() const override { return count_; }
    std::size_t input_dim() const override { return sub_.rank; }
    void fill(std::size_t i, double* input, double* label) const override;

    TrainingPair pair(std::size_t i) const;
    std::size_t label_index(std::size_t i) const { return labels_[i]; }
    std::size_t atom_of(std::size_t i) const { return i / aug_; }
    const match::CompressedDictionary& compressed() const { return cd_; }

private:
    void noisy_input(std::size_t i, double* out) const;

    const dict::Dictionary& dict_;
    const subspace::Subspace& sub_;
    TrainConfig cfg_;
    match::CompressedDictionary cd_;
    std::size_t aug_ = 1;
    std::size_t count_ = 0;
    std::vector<std::uint32_t> labels_;
};

TrainingSet make_training_set(const dict::Dictionary& dict, const subspace::Subspace& sub,
                              const TrainConfig& cfg, const TrainingSet::Progress& progress = {});

// Mean-squared error over batch and outputs, in scaled target units, of the
// final (ReLU) outputs. Gradients are accumulated into the per-layer buffers.
struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    static Gradients zeros_like(const MlpModel& model);
};
double loss_and_gradients(const MlpModel& model, std::span<const double> inputs,
                          std::span<const double> labels, std::size_t batch, Gradients& grad);

struct TrainResult {
    MlpModel model;
    std::vector<double> loss_history;  // per-epoch mean batch loss
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

// Mini-batch Adam over a seeded shuffle of the pairs; the step size is
// multiplied by `decay` after every epoch. Layer 1 is never modified. Throws
// NonFiniteLoss naming the epoch and batch. An untrained model adopts
// cfg.target_scale as is and has its output biases centred on the mean scaled
// target; a trained one is rescaled first so its outputs are unchanged.
TrainResult train(MlpModel model, const PairSource& pairs, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// "MRFN" v1, FNV-1a checksummed.
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);
io::Bytes serialize_model(const MlpModel& model);

}  // namespace mrf::net
