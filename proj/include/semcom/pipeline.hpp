#pragma once

#include "semcom/channel.hpp"
#include "semcom/codec.hpp"

namespace semcom {

// ---------------------------------------------------------------------------
// Semantic payload: box-cropped key streams + full global streams + box
// side-band (assumed error-free).
// ---------------------------------------------------------------------------

struct SemanticPayload {
    uint32_t orig_w = 0, orig_h = 0;  // pre-padding dims
    uint32_t pad_w = 0, pad_h = 0;
    uint16_t n = 1, m = 1;
    DetectionSet boxes_l, boxes_r;  // grid-aligned
    std::vector<float> key_l, key_r;      // raster order inside the union of grid boxes / n
    std::vector<float> global_l, global_r;

    int64_t payloadElements() const {
        return static_cast<int64_t>(key_l.size() + key_r.size() + global_l.size() + global_r.size());
    }
    int64_t originalElements() const { return 2LL * 3 * orig_w * orig_h; }
    int64_t sideBandFloats() const { return 5LL * static_cast<int64_t>(boxes_l.boxes.size() + boxes_r.boxes.size()); }
};

// K tensors are (pad_w/n, pad_h/n, 3); G tensors (pad_w/m, pad_h/m, 3).
// Boxes must already be aligned to the n-grid.
SemanticPayload packPayload(const Tensor& k_l, const Tensor& k_r, const Tensor& g_l, const Tensor& g_r,
                            const DetectionSet& aligned_l, const DetectionSet& aligned_r, int n, int m, int orig_w,
                            int orig_h, int pad_w, int pad_h);

struct UnpackedPayload {
    Tensor k_l, k_r, g_l, g_r;  // key planes zero-filled outside boxes
};
UnpackedPayload unpackPayload(const SemanticPayload& p);

// Little-endian binary container (magic, version, dims, factors, box
// records as 5 float32, then float32 streams).
void savePayload(const std::filesystem::path& path, const SemanticPayload& p);
SemanticPayload loadPayload(const std::filesystem::path& path);

double effectiveCompressionRatio(const SemanticPayload& p);

// ---------------------------------------------------------------------------
// End-to-end pipeline
// ---------------------------------------------------------------------------

enum class FlowMode { ZeroStub, Pyramid };

struct EncodeResult {
    nn::NodeP k_l, k_r, g_l, g_r;
    nn::NodeP masked_l, masked_r;  // S_l, S_r nodes (padded dims)
    Tensor mask_l, mask_r;         // raw box-union masks, padded dims
    Tensor aligned_mask_l, aligned_mask_r;
    DetectionSet boxes_l, boxes_r;    // clamped detections (original dims)
    DetectionSet aligned_l, aligned_r;  // grid-aligned (padded dims)
    int orig_w = 0, orig_h = 0, pad_w = 0, pad_h = 0;
};

EncodeResult encodePair(SemanticCodec& codec, const StereoPair& pair, Detector& detector,
                        float confidence_floor = 0.3f);

struct DecodeResult {
    nn::NodeP s_hat_l, s_hat_r;
    nn::NodeP f_hat_l, f_hat_r;
    nn::NodeP out_l, out_r;  // fused, unclamped, padded dims
    nn::NodeP flow_lr, flow_rl;
    ImagePlane image_l, image_r;  // clamped + cropped
};

DecodeResult decodePair(SemanticCodec& codec, const nn::NodeP& k_hat_l, const nn::NodeP& k_hat_r,
                        const nn::NodeP& g_hat_l, const nn::NodeP& g_hat_r, const EncodeResult& enc,
                        FlowMode flow_mode);

struct TransmitOptions {
    ChannelConfig channel;
    QuantSpec quant;
    bool quantize_payload = false;  // classical-comparison mode (noiseless path only)
    FlowMode flow_mode = FlowMode::Pyramid;
    float confidence_floor = 0.3f;
};

struct TransmitResult {
    ImagePlane image_l, image_r;
    Tensor mask_l, mask_r;  // original dims, for masked metrics
    SemanticPayload payload;
    ChannelUseBudget budget;
    int64_t channel_uses = 0;  // actual symbols sent in learned-codec mode
};

// Noiseless: payload path (optionally quantized). AWGN/Rayleigh: learned
// channel codec over full compressed planes.
TransmitResult transmitPair(SemanticCodec& codec, ChannelCodec* chan, const StereoPair& pair, Detector& detector,
                            const TransmitOptions& opts);

}  // namespace semcom
