#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "semcom/train.hpp"

namespace semcom {

struct DatasetSpec {
    enum class Kind { Synthetic, Kitti } kind = Kind::Synthetic;
    // synthetic
    SyntheticSpec synth;
    int frames = 16;
    uint64_t seed = 1;
    // kitti
    std::filesystem::path root;
    std::string split = "training";
};

struct ChannelRun {
    ChannelKind kind = ChannelKind::Noiseless;
    std::vector<double> snr_grid;  // ignored for noiseless
    Coherence coherence = Coherence::PerSymbol;
};

struct TrainSpec {
    int epochs_per_phase = 0;  // 0 = published epoch counts
    float epsilon = 1e-3f;
    float lambda = 0.5f;
    bool per_pixel = false;
    float hybrid_fraction = 0.7f;
    double snr_lo_db = 6.0, snr_hi_db = 18.0;
    ChannelKind channel_kind = ChannelKind::AWGN;  // stage-5 training channel
    Coherence coherence = Coherence::PerSymbol;
};

struct ExperimentConfig {
    int schema_version = 1;
    uint64_t seed = 1234;
    std::filesystem::path out_dir = "runs/default";
    DatasetSpec dataset;
    CodecConfig codec;
    ChannelCodecConfig channel_codec;
    std::vector<ChannelRun> channels;
    QuantSpec quant;
    bool quantize_payload = false;
    TrainSpec train;
    FlowMode flow_mode = FlowMode::Pyramid;
    float confidence_floor = 0.3f;

    void validate() const;
    // Builds the per-stage schedule with this config's training knobs.
    StageSchedule stageSchedule(int stage_id) const;
};

// Strict JSON: schema_version required, unknown keys are errors.
ExperimentConfig loadConfig(const std::filesystem::path& path);
ExperimentConfig parseConfigText(const std::string& text);

// Canonical serialization (sorted keys, parsed values only) and its FNV-1a
// hash: whitespace/comment-free, so the hash changes iff a field changes.
std::string canonicalConfig(const ExperimentConfig& cfg);
uint64_t configHash(const ExperimentConfig& cfg);

// data_root_override (CLI flag or SEMCOM_DATA_ROOT) replaces the KITTI root.
std::vector<StereoPair> loadDataset(const DatasetSpec& spec,
                                    const std::optional<std::filesystem::path>& data_root_override = std::nullopt);

const char* channelKindName(ChannelKind k);

}  // namespace semcom
