#pragma once

// Auto-decoder training (decoder weights and per-shape latents jointly),
// contrastive co-training, checkpoints and test-time latent fitting.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "salfield/adam.hpp"
#include "salfield/config.hpp"
#include "salfield/dataset.hpp"
#include "salfield/decoder.hpp"
#include "salfield/pointnet.hpp"
#include "salfield/rng.hpp"

namespace salfield {

enum class TrainMode { Issn, Csl };

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 8;  // shapes per step
    std::size_t points_per_shape = 2048;
    double lr_decoder = 5e-4;
    double lr_latent = 1e-3;
    double lr_classifier = 1e-3;
    std::size_t lr_period = 200;  // halving period in epochs
    double gamma = 0.0;
    double latent_init_std = 0.01;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::Issn;
    std::string interest;  // category of interest for CSL
    bool balanced = false;  // balanced batches; always on for CSL
    DecoderConfig decoder;
    PointNetConfig pointnet;

    void validate() const;
    bool uses_balanced_batches() const noexcept { return balanced || mode == TrainMode::Csl; }

    KeyValueConfig to_kv() const;
    /// Overlays the keys present in `kv` on `base`; unknown keys are rejected.
    static TrainConfig from_kv(const KeyValueConfig& kv, TrainConfig base);
    static TrainConfig from_kv(const KeyValueConfig& kv);
    static std::vector<std::string> keys();
};

double lr_at(std::size_t epoch, double lr0, std::size_t period);

struct TrainShape {
    std::string id;
    std::string category;
    SdfSampleSet samples;
};

struct TrainLogRow {
    std::size_t epoch = 0;
    double lr_decoder = 0, lr_latent = 0;
    double loss_total = 0, loss_sdf = 0, loss_sal_reg = 0, loss_cls = 0, cls_acc = 0;
    bool operator==(const TrainLogRow&) const = default;
};

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& rows, bool append = false);
std::string train_log_csv(const std::vector<TrainLogRow>& rows, bool header = true);

// ---------------------------------------------------------------------------
// Checkpoint container

struct NamedTensor {
    std::string name;
    Tensor<float> value;
};

struct NamedOptimizer {
    std::string name;
    AdamState<float> state;
};

struct Checkpoint {
    std::string kind = "issn";  // "issn" or "classifier"
    KeyValueConfig config;
    std::vector<NamedTensor> tensors;
    std::vector<std::string> shape_ids;
    std::vector<std::vector<float>> latents;
    std::vector<NamedOptimizer> optimizers;
    std::uint64_t epoch = 0;
    std::string rng_state;

    const Tensor<float>& tensor(const std::string& name) const;
    bool operator==(const Checkpoint& o) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training

struct TrainState {
    TrainConfig config;
    DecoderParams<float> decoder;
    std::optional<PointNetParams<float>> pointnet;
    std::vector<std::string> shape_ids;
    std::vector<std::vector<float>> latents;
    AdamState<float> decoder_opt;
    AdamState<float> pointnet_opt;
    std::vector<AdamState<float>> latent_opt;  // untouched latents keep step 0
    std::uint64_t epoch = 0;
    Rng rng;

    Checkpoint to_checkpoint() const;
    static TrainState from_checkpoint(const Checkpoint& ckpt);

    /// Latent of a training shape by id.
    const std::vector<float>& latent(const std::string& shape_id) const;
};

TrainState init_train_state(const std::vector<TrainShape>& dataset, const TrainConfig& config);

/// Called after every epoch with the new log row; return false to stop early.
using EpochCallback = std::function<bool(const TrainLogRow&, const TrainState&)>;

/// Runs epochs state.epoch .. until_epoch - 1 in place.
std::vector<TrainLogRow> train_epochs(TrainState& state, const std::vector<TrainShape>& dataset,
                                      std::size_t until_epoch, const EpochCallback& on_epoch = {});

struct TrainResult {
    TrainState state;
    std::vector<TrainLogRow> log;
};

TrainResult train_issn(const std::vector<TrainShape>& dataset, const TrainConfig& config);
TrainResult train_csl(const std::vector<TrainShape>& dataset, const TrainConfig& config);

/// Forward pass of one latent at many points, evaluated in chunks.
FieldPrediction<float> evaluate_field(const DecoderParams<float>& decoder, std::span<const float> z,
                                      std::span<const std::array<float, 3>> points, std::size_t chunk = 8192);

/// Mean clamped L1 of the decoder against a sample set.
double mean_clamped_l1(const DecoderParams<float>& decoder, std::span<const float> z, const SdfSampleSet& samples);

struct LatentFitConfig {
    std::size_t steps = 200;
    double lr = 1e-3;
    std::size_t points = 4096;  // fixed subset used for every step
    double init_std = 0.01;
    std::uint64_t seed = 0;
};

struct LatentFit {
    std::vector<float> z;
    double initial_loss = 0;  // objective on the fitting subset before the first step
    double final_loss = 0;    // same objective after the last step
    std::vector<double> history;
};

/// Fits a latent for new samples with the decoder frozen.
LatentFit optimize_latent(const DecoderParams<float>& decoder, const SdfSampleSet& samples,
                          const LatentFitConfig& cfg);

}  // namespace salfield
