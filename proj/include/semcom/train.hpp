#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "semcom/pipeline.hpp"

namespace semcom {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

enum class LossKind { Charbonnier, MaskedCharbonnier, HybridMaskedCharbonnier, MeanSquaredError };

struct LossSpec {
    LossKind kind = LossKind::Charbonnier;
    float epsilon = 1e-3f;
    float lambda = 0.5f;
    bool per_pixel = false;  // per-pixel-mean Charbonnier variant

    void validate() const {
        if (epsilon <= 0.0f) throw ConfigError("LossSpec: epsilon must be > 0");
        if (lambda < 0.0f) throw ConfigError("LossSpec: lambda must be >= 0");
    }
};

// Plain-tensor loss evaluation (no graph).
double charbonnierLoss(const Tensor& i, const Tensor& i_hat, float epsilon, bool per_pixel = false);
double maskedCharbonnierLoss(const Tensor& s, const Tensor& s_hat, const Tensor& mask, float epsilon,
                             bool per_pixel = false);
double hybridMaskedCharbonnierLoss(const Tensor& i, const Tensor& i_hat, const Tensor& mask, float epsilon,
                                   float lambda, bool per_pixel = false);
double mseLossT(const Tensor& x, const Tensor& x_hat);

// Differentiable composition over a prediction node. mask may be null for
// the unmasked kinds.
nn::NodeP lossNode(const LossSpec& spec, const nn::NodeP& pred, const Tensor& target, const Tensor* mask);

// ---------------------------------------------------------------------------
// Staged schedule
// ---------------------------------------------------------------------------

struct GroupLr {
    float key_tx = 0, key_rx = 0, global_tx = 0, global_rx = 0, flow = 0, fusion = 0, channel = 0;
};

struct StageSchedule {
    int stage_id = 1;  // 1..5
    GroupLr lr;
    int epochs_a = 0;  // stage 1: frozen-flow; stage 5: channel-codec-only
    int epochs_b = 0;  // stage 1: unfrozen; stage 5: joint; 0 for single-phase stages
    float epsilon = 1e-3f;
    float lambda = 0.5f;
    bool per_pixel = false;
    float hybrid_fraction = 0.7f;  // stage 4: leading share of epochs on the hybrid loss
    double snr_lo_db = 6.0, snr_hi_db = 18.0;  // stage 5 per-step SNR draw
    FlowMode flow_mode = FlowMode::Pyramid;
    float confidence_floor = 0.3f;

    int totalEpochs() const { return epochs_a + epochs_b; }
    void validate() const;

    // Published learning rates and epoch counts; epochs_per_phase overrides
    // every sub-phase length when > 0 (desk-scale runs).
    static StageSchedule defaults(int stage_id, int epochs_per_phase = 0);
};

// ---------------------------------------------------------------------------
// Training state + checkpoints
// ---------------------------------------------------------------------------

struct LossRecord {
    int stage = 0;
    int epoch = 0;
    double loss = 0.0;
    double wall_seconds = 0.0;
};

struct TrainState {
    SemanticCodec* codec = nullptr;
    ChannelCodec* chan = nullptr;  // may stay null until stage 5
    nn::Adam opt;
    Rng rng;
    int completed_stage = 0;
    std::vector<LossRecord> history;

    TrainState(SemanticCodec& c, uint64_t seed, ChannelCodec* ch = nullptr)
        : codec(&c), chan(ch), rng(seed) {}
};

// Runs one stage of the five-step strategy. Requires
// state.completed_stage >= stage_id - 1; throws StateError otherwise and
// DataError on a non-finite loss (with stage/epoch/frame diagnostics).
void runStage(const StageSchedule& stage, TrainState& state, const std::vector<StereoPair>& data,
              const ChannelConfig& channel);

// Versioned binary container: parameter groups (name-checked), optimizer
// moments and step count, norm running stats, RNG state, stage counter,
// loss history. Loading into a mismatched architecture reports the first
// differing parameter name/size.
void saveCheckpoint(const std::filesystem::path& path, const TrainState& state);
void loadCheckpoint(const std::filesystem::path& path, TrainState& state);

// CSV columns: stage, epoch, loss, wall_seconds.
void writeLossCsv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

}  // namespace semcom
