#pragma once

#include <memory>
#include <numeric>
#include <optional>

#include "semcom/data.hpp"
#include "semcom/nn.hpp"

namespace semcom {

struct CodecConfig {
    // Downsampling factors: key path n = n1*n2, global path m.
    int n = 2, n1 = 2, n2 = 1, m = 6;
    int f = 64;           // global feature channels
    int enc_depth = 3;    // encoder residual blocks
    int dec_depth = 4;    // decoder residual blocks per half-trunk
    int fusion_width = 64;
    float leaky_slope = 0.01f;
    int flow_levels = 3;
    int flow_width = 16;

    void validate() const {
        if (n < 1 || m < 1 || n1 < 1 || n2 < 1) throw ConfigError("CodecConfig: factors must be >= 1");
        if (n1 * n2 != n) throw ConfigError("CodecConfig: n1*n2 != n");
        if (f < 1) throw ConfigError("CodecConfig: f must be >= 1");
    }
    // Padded frame dims must divide by this.
    int padMultiple() const { return std::lcm(n, m * (1 << (flow_levels - 1))); }
};

// ---------------------------------------------------------------------------
// Box masking and grid alignment
// ---------------------------------------------------------------------------

// Binary union mask of box interiors (pixel (x,y) inside when
// u1 <= x < u2 and v1 <= y < v2 after flooring/ceiling to pixels).
Tensor buildMask(const DetectionSet& boxes, int w, int h);

// Expand each box outward to the n-grid and clamp to the (padded) frame.
DetectionSet alignBoxesToGrid(const DetectionSet& boxes, int n, int w, int h);

// Reflect-pad right/bottom to (W, H).
Tensor reflectPad(const Tensor& t, int W, int H);
Tensor cropTo(const Tensor& t, int w, int h);

// ---------------------------------------------------------------------------
// Detector interface
// ---------------------------------------------------------------------------

class Detector {
public:
    virtual ~Detector() = default;
    virtual DetectionSet detect(const ImagePlane& image, const std::optional<DetectionSet>& gt) = 0;
};

// Ground-truth passthrough with confidence forced to 1.0.
class OracleDetector : public Detector {
public:
    DetectionSet detect(const ImagePlane& image, const std::optional<DetectionSet>& gt) override;
};

// Reads KITTI-format detection files <dir>/<frame_id>.txt.
class FileDetector : public Detector {
public:
    FileDetector(std::filesystem::path dir, std::string frame_id) : dir_(std::move(dir)), frame_id_(std::move(frame_id)) {}
    DetectionSet detect(const ImagePlane& image, const std::optional<DetectionSet>& gt) override;

private:
    std::filesystem::path dir_;
    std::string frame_id_;
};

// Clamps to bounds and applies the confidence floor.
DetectionSet detect2d(const ImagePlane& image, Detector& detector, const std::optional<DetectionSet>& gt,
                      float confidence_floor = 0.3f);

// ---------------------------------------------------------------------------
// Network modules
// ---------------------------------------------------------------------------

class ResidualBlock {
public:
    ResidualBlock() = default;
    ResidualBlock(int channels, const std::string& name);
    nn::NodeP forward(const nn::NodeP& x);
    std::vector<nn::Param*> params();

private:
    nn::Conv2d c1_, c2_;
};

// Key-area compression: sub-pixel backbone + bilinear n-down residual.
class KeyAreaEncoder {
public:
    KeyAreaEncoder() = default;
    KeyAreaEncoder(const CodecConfig& cfg, const std::string& name);
    // s: masked plane (w x h x 3). Output (w/n, h/n, 3).
    nn::NodeP forward(const nn::NodeP& s);
    std::vector<nn::Param*> params();

private:
    int n_ = 1;
    float slope_ = 0.01f;
    nn::Conv2d c1_, c2_;
};

// Key-area recovery: two cascaded sub-pixel upsampling stages (factors n1,
// n2) + bilinear n-up residual.
class KeyAreaDecoder {
public:
    KeyAreaDecoder() = default;
    KeyAreaDecoder(const CodecConfig& cfg, const std::string& name);
    nn::NodeP forward(const nn::NodeP& k_hat);
    std::vector<nn::Param*> params();

private:
    struct Stage {
        int factor = 1;
        nn::Conv2d expand, refine;
    };
    int n_ = 1;
    float slope_ = 0.01f;
    std::vector<std::unique_ptr<Stage>> stages_;
};

// Joint extraction (shared trunk, concat fusion, per-view heads) plus
// per-view sub-pixel compression with bilinear image residual.
class GlobalEncoder {
public:
    GlobalEncoder() = default;
    GlobalEncoder(const CodecConfig& cfg, const std::string& name);

    // Returns (F_l, F_r), each w x h x f.
    std::pair<nn::NodeP, nn::NodeP> extract(const nn::NodeP& left, const nn::NodeP& right);
    // view: 0 = left head, 1 = right head. Output (w/m, h/m, 3).
    nn::NodeP compress(const nn::NodeP& features, const nn::NodeP& source_image, int view);

    std::vector<nn::Param*> params();

private:
    struct CompressHead {
        nn::Conv2d c1, c2, post;
    };
    int m_ = 1, f_ = 1;
    float slope_ = 0.01f;
    nn::Conv2d trunk_in_;
    std::vector<std::unique_ptr<ResidualBlock>> trunk_;
    nn::Conv2d fuse_, head_l_, head_r_;
    CompressHead comp_[2];
};

// Coarse-to-fine residual flow pyramid on 3-channel compressed planes.
// estimate(target, source) returns flow d with source(p + d(p)) ~ target(p).
class FlowPyramid {
public:
    FlowPyramid() = default;
    FlowPyramid(const CodecConfig& cfg, const std::string& name);
    nn::NodeP estimate(const nn::NodeP& target, const nn::NodeP& source);
    std::vector<nn::Param*> params();
    int levels() const { return levels_; }

private:
    struct Level {
        nn::Conv2d c1, c2, c3;
    };
    int levels_ = 3;
    float slope_ = 0.01f;
    std::vector<std::unique_ptr<Level>> lv_;
};

// Zero-flow stub fallback for estimate_flow.
nn::NodeP zeroFlow(int w, int h);

// Per-view optical-flow-driven recovery (Fig. 6 path): residual trunk ->
// warp exchange -> concat with received G -> trunk -> fuse {F1,F3} ->
// sub-pixel m-up + bilinear m-up residual.
class GlobalDecoderView {
public:
    GlobalDecoderView() = default;
    GlobalDecoderView(const CodecConfig& cfg, const std::string& name);

    nn::NodeP firstStage(const nn::NodeP& g_hat);  // F1
    // f2 = warped opposite-view F1.
    nn::NodeP recover(const nn::NodeP& f1, const nn::NodeP& f2, const nn::NodeP& g_hat);
    std::vector<nn::Param*> params();

private:
    struct UpStage {
        int factor = 1;
        nn::Conv2d expand;
    };
    int m_ = 1, f_ = 1;
    float slope_ = 0.01f;
    nn::Conv2d trunk1_in_;
    std::vector<std::unique_ptr<ResidualBlock>> trunk1_;
    nn::Conv2d trunk2_in_;
    std::vector<std::unique_ptr<ResidualBlock>> trunk2_;
    nn::Conv2d fuse_;
    std::vector<std::unique_ptr<UpStage>> up_;
    nn::Conv2d post1_, post2_;
};

// Fusion: concat(S_hat, F_hat) -> convs -> + (S_hat + F_hat) residual.
class FusionNet {
public:
    FusionNet() = default;
    FusionNet(const CodecConfig& cfg, const std::string& name);
    nn::NodeP forward(const nn::NodeP& s_hat, const nn::NodeP& f_hat);
    std::vector<nn::Param*> params();

private:
    float slope_ = 0.01f;
    nn::Conv2d c1_, c2_, c3_;
};

// ---------------------------------------------------------------------------
// Whole semantic codec with named parameter groups
// ---------------------------------------------------------------------------

struct SemanticCodec {
    CodecConfig cfg;
    KeyAreaEncoder key_enc_l, key_enc_r;
    KeyAreaDecoder key_dec_l, key_dec_r;
    GlobalEncoder global_enc;
    FlowPyramid flow;
    GlobalDecoderView global_dec_l, global_dec_r;
    FusionNet fusion_l, fusion_r;

    explicit SemanticCodec(const CodecConfig& c);
    void initWeights(Rng& rng);
    void zeroWeights();

    std::vector<nn::Param*> keyTx();
    std::vector<nn::Param*> keyRx();
    std::vector<nn::Param*> globalTx();
    std::vector<nn::Param*> globalRx();  // excludes flow
    std::vector<nn::Param*> flowParams();
    std::vector<nn::Param*> fusionParams();
    std::vector<nn::Param*> allParams();
};

}  // namespace semcom
