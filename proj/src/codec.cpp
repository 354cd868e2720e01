#include "semcom/codec.hpp"

#include <cmath>
#include <numeric>

namespace semcom {

using nn::NodeP;

// ---------------------------------------------------------------------------
// Masks, alignment, padding
// ---------------------------------------------------------------------------

Tensor buildMask(const DetectionSet& boxes, int w, int h) {
    Tensor mask(w, h, 1);
    for (const auto& b : boxes.boxes) {
        const int x0 = std::max(0, static_cast<int>(std::floor(b.u1)));
        const int x1 = std::min(w, static_cast<int>(std::ceil(b.u2)));
        const int y0 = std::max(0, static_cast<int>(std::floor(b.v1)));
        const int y1 = std::min(h, static_cast<int>(std::ceil(b.v2)));
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) mask(x, y, 0) = 1.0f;
    }
    return mask;
}

DetectionSet alignBoxesToGrid(const DetectionSet& boxes, int n, int w, int h) {
    DetectionSet out;
    out.image_w = w;
    out.image_h = h;
    for (BBox2D b : boxes.boxes) {
        b.u1 = static_cast<float>(n * static_cast<int>(std::floor(b.u1 / n)));
        b.v1 = static_cast<float>(n * static_cast<int>(std::floor(b.v1 / n)));
        b.u2 = static_cast<float>(n * static_cast<int>(std::ceil(b.u2 / n)));
        b.v2 = static_cast<float>(n * static_cast<int>(std::ceil(b.v2 / n)));
        if (clampBox(b, w, h)) out.boxes.push_back(b);
    }
    return out;
}

Tensor reflectPad(const Tensor& t, int W, int H) {
    if (W < t.w() || H < t.h()) throw ShapeError("reflectPad: target smaller than source");
    if (W == t.w() && H == t.h()) return t;
    Tensor out(W, H, t.c());
    auto reflect = [](int i, int n) {
        if (i < n) return i;
        const int r = 2 * n - 2 - i;
        return std::max(0, r);
    };
    for (int z = 0; z < t.c(); ++z)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) out(x, y, z) = t(reflect(x, t.w()), reflect(y, t.h()), z);
    return out;
}

Tensor cropTo(const Tensor& t, int w, int h) {
    if (w == t.w() && h == t.h()) return t;
    Tensor out(w, h, t.c());
    for (int z = 0; z < t.c(); ++z)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out(x, y, z) = t(x, y, z);
    return out;
}

// ---------------------------------------------------------------------------
// Detectors
// ---------------------------------------------------------------------------

DetectionSet OracleDetector::detect(const ImagePlane& image, const std::optional<DetectionSet>& gt) {
    if (!gt.has_value()) throw StateError("OracleDetector: ground truth unavailable");
    DetectionSet out = *gt;
    for (auto& b : out.boxes) b.confidence = 1.0f;
    return out;
}

DetectionSet FileDetector::detect(const ImagePlane& image, const std::optional<DetectionSet>&) {
    const auto path = dir_ / (frame_id_ + ".txt");
    if (!std::filesystem::exists(path)) throw DataError("FileDetector: missing " + path.string());
    return parseKittiLabels(path, image.w(), image.h());
}

DetectionSet detect2d(const ImagePlane& image, Detector& detector, const std::optional<DetectionSet>& gt,
                      float confidence_floor) {
    DetectionSet raw = detector.detect(image, gt);
    DetectionSet out;
    out.image_w = image.w();
    out.image_h = image.h();
    for (BBox2D b : raw.boxes) {
        if (b.confidence < confidence_floor) continue;
        if (clampBox(b, image.w(), image.h())) out.boxes.push_back(b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// ResidualBlock
// ---------------------------------------------------------------------------

ResidualBlock::ResidualBlock(int channels, const std::string& name)
    : c1_(channels, channels, 3, name + ".c1"), c2_(channels, channels, 3, name + ".c2") {}

NodeP ResidualBlock::forward(const NodeP& x) { return nn::add(x, c2_.forward(nn::relu(c1_.forward(x)))); }

std::vector<nn::Param*> ResidualBlock::params() { return {&c1_.weight(), &c1_.bias(), &c2_.weight(), &c2_.bias()}; }

namespace {
void append(std::vector<nn::Param*>& dst, std::vector<nn::Param*> src) {
    dst.insert(dst.end(), src.begin(), src.end());
}
}  // namespace

// ---------------------------------------------------------------------------
// KeyAreaEncoder / KeyAreaDecoder
// ---------------------------------------------------------------------------

KeyAreaEncoder::KeyAreaEncoder(const CodecConfig& cfg, const std::string& name)
    : n_(cfg.n), slope_(cfg.leaky_slope), c1_(3, 6, 5, name + ".c1"), c2_(6 * cfg.n * cfg.n, 3, 3, name + ".c2") {}

NodeP KeyAreaEncoder::forward(const NodeP& s) {
    NodeP y = nn::leakyRelu(c1_.forward(s), slope_);
    y = nn::pixelUnshuffle(y, n_);
    y = c2_.forward(y);
    return nn::add(y, nn::downsampleBlock(s, n_));
}

std::vector<nn::Param*> KeyAreaEncoder::params() { return {&c1_.weight(), &c1_.bias(), &c2_.weight(), &c2_.bias()}; }

KeyAreaDecoder::KeyAreaDecoder(const CodecConfig& cfg, const std::string& name) : n_(cfg.n), slope_(cfg.leaky_slope) {
    int idx = 0;
    for (int factor : {cfg.n1, cfg.n2}) {
        auto st = std::make_unique<Stage>();
        st->factor = factor;
        const std::string sn = name + ".stage" + std::to_string(idx++);
        st->expand = nn::Conv2d(3, 6 * factor * factor, 3, sn + ".expand");
        st->refine = nn::Conv2d(6, 3, 3, sn + ".refine");
        stages_.push_back(std::move(st));
    }
}

NodeP KeyAreaDecoder::forward(const NodeP& k_hat) {
    NodeP y = k_hat;
    for (auto& st : stages_) {
        NodeP t = st->expand.forward(y);
        t = nn::pixelShuffle(t, st->factor);
        t = nn::leakyRelu(t, slope_);
        t = st->refine.forward(t);
        y = nn::add(t, nn::upsampleBilinear(y, st->factor));
    }
    return y;
}

std::vector<nn::Param*> KeyAreaDecoder::params() {
    std::vector<nn::Param*> p;
    for (auto& st : stages_) {
        append(p, {&st->expand.weight(), &st->expand.bias(), &st->refine.weight(), &st->refine.bias()});
    }
    return p;
}

// ---------------------------------------------------------------------------
// GlobalEncoder
// ---------------------------------------------------------------------------

GlobalEncoder::GlobalEncoder(const CodecConfig& cfg, const std::string& name)
    : m_(cfg.m),
      f_(cfg.f),
      slope_(cfg.leaky_slope),
      trunk_in_(3, cfg.f, 3, name + ".trunk_in"),
      fuse_(2 * cfg.f, cfg.f, 1, name + ".fuse"),
      head_l_(cfg.f, cfg.f, 3, name + ".head_l"),
      head_r_(cfg.f, cfg.f, 3, name + ".head_r") {
    for (int i = 0; i < cfg.enc_depth; ++i)
        trunk_.push_back(std::make_unique<ResidualBlock>(cfg.f, name + ".trunk" + std::to_string(i)));
    for (int v = 0; v < 2; ++v) {
        const std::string vn = name + (v == 0 ? ".comp_l" : ".comp_r");
        comp_[v].c1 = nn::Conv2d(cfg.f, cfg.f, 5, vn + ".c1");
        comp_[v].c2 = nn::Conv2d(cfg.f, 4, 5, vn + ".c2");
        comp_[v].post = nn::Conv2d(4 * cfg.m * cfg.m, 3, 3, vn + ".post");
    }
}

std::pair<NodeP, NodeP> GlobalEncoder::extract(const NodeP& left, const NodeP& right) {
    requireSameShape(left->value, right->value, "GlobalEncoder::extract");
    auto trunkOf = [&](const NodeP& x) {
        NodeP y = nn::leakyRelu(trunk_in_.forward(x), slope_);
        for (auto& b : trunk_) y = b->forward(y);
        return y;
    };
    NodeP el = trunkOf(left);
    NodeP er = trunkOf(right);
    NodeP fused = nn::leakyRelu(fuse_.forward(nn::concatChannels(el, er)), slope_);
    return {head_l_.forward(fused), head_r_.forward(fused)};
}

NodeP GlobalEncoder::compress(const NodeP& features, const NodeP& source_image, int view) {
    CompressHead& hd = comp_[view];
    NodeP y = nn::leakyRelu(hd.c1.forward(features), slope_);
    y = nn::leakyRelu(hd.c2.forward(y), slope_);
    y = nn::pixelUnshuffle(y, m_);
    y = hd.post.forward(y);
    return nn::add(y, nn::downsampleBlock(source_image, m_));
}

std::vector<nn::Param*> GlobalEncoder::params() {
    std::vector<nn::Param*> p{&trunk_in_.weight(), &trunk_in_.bias(), &fuse_.weight(), &fuse_.bias(),
                              &head_l_.weight(),   &head_l_.bias(),   &head_r_.weight(), &head_r_.bias()};
    for (auto& b : trunk_) append(p, b->params());
    for (auto& hd : comp_)
        append(p, {&hd.c1.weight(), &hd.c1.bias(), &hd.c2.weight(), &hd.c2.bias(), &hd.post.weight(), &hd.post.bias()});
    return p;
}

// ---------------------------------------------------------------------------
// FlowPyramid
// ---------------------------------------------------------------------------

FlowPyramid::FlowPyramid(const CodecConfig& cfg, const std::string& name)
    : levels_(cfg.flow_levels), slope_(cfg.leaky_slope) {
    for (int i = 0; i < levels_; ++i) {
        auto lv = std::make_unique<Level>();
        const std::string ln = name + ".level" + std::to_string(i);
        lv->c1 = nn::Conv2d(8, cfg.flow_width, 5, ln + ".c1");
        lv->c2 = nn::Conv2d(cfg.flow_width, cfg.flow_width, 3, ln + ".c2");
        lv->c3 = nn::Conv2d(cfg.flow_width, 2, 3, ln + ".c3");
        lv_.push_back(std::move(lv));
    }
}

NodeP zeroFlow(int w, int h) { return nn::constant(Tensor(w, h, 2)); }

NodeP FlowPyramid::estimate(const NodeP& target, const NodeP& source) {
    requireSameShape(target->value, source->value, "FlowPyramid::estimate");
    const int down = 1 << (levels_ - 1);
    if (target->value.w() % down != 0 || target->value.h() % down != 0)
        throw ShapeError("FlowPyramid: dims not divisible by 2^(levels-1)");
    // Coarse-to-fine residual refinement.
    std::vector<NodeP> tgt{target}, src{source};
    for (int i = 1; i < levels_; ++i) {
        tgt.push_back(nn::downsampleBlock(tgt.back(), 2));
        src.push_back(nn::downsampleBlock(src.back(), 2));
    }
    NodeP flow = zeroFlow(tgt.back()->value.w(), tgt.back()->value.h());
    for (int i = levels_ - 1; i >= 0; --i) {
        if (i != levels_ - 1) flow = nn::scale(nn::upsampleBilinear(flow, 2), 2.0f);
        NodeP warped = nn::warp(src[i], flow);
        NodeP in = nn::concatChannels(nn::concatChannels(tgt[i], warped), flow);
        Level& lv = *lv_[static_cast<size_t>(i)];
        NodeP y = nn::leakyRelu(lv.c1.forward(in), slope_);
        y = nn::leakyRelu(lv.c2.forward(y), slope_);
        flow = nn::add(flow, lv.c3.forward(y));
    }
    return flow;
}

std::vector<nn::Param*> FlowPyramid::params() {
    std::vector<nn::Param*> p;
    for (auto& lv : lv_)
        append(p, {&lv->c1.weight(), &lv->c1.bias(), &lv->c2.weight(), &lv->c2.bias(), &lv->c3.weight(), &lv->c3.bias()});
    return p;
}

// ---------------------------------------------------------------------------
// GlobalDecoderView
// ---------------------------------------------------------------------------

namespace {
// Decompose m into two near-balanced shuffle factors (m1 >= 1, m1*m2 = m).
std::pair<int, int> splitFactor(int m) {
    int best = 1;
    for (int a = 1; a * a <= m; ++a)
        if (m % a == 0) best = a;
    return {m / best, best};
}
}  // namespace

GlobalDecoderView::GlobalDecoderView(const CodecConfig& cfg, const std::string& name)
    : m_(cfg.m),
      f_(cfg.f),
      slope_(cfg.leaky_slope),
      trunk1_in_(3, cfg.f, 3, name + ".trunk1_in"),
      trunk2_in_(cfg.f + 3, cfg.f, 3, name + ".trunk2_in"),
      fuse_(2 * cfg.f, cfg.f, 1, name + ".fuse"),
      post1_(cfg.f, cfg.f, 3, name + ".post1"),
      post2_(cfg.f, 3, 3, name + ".post2") {
    for (int i = 0; i < cfg.dec_depth; ++i)
        trunk1_.push_back(std::make_unique<ResidualBlock>(cfg.f, name + ".trunk1_" + std::to_string(i)));
    for (int i = 0; i < cfg.dec_depth; ++i)
        trunk2_.push_back(std::make_unique<ResidualBlock>(cfg.f, name + ".trunk2_" + std::to_string(i)));
    auto [m1, m2] = splitFactor(cfg.m);
    int idx = 0;
    for (int factor : {m1, m2}) {
        if (factor == 1) continue;
        auto st = std::make_unique<UpStage>();
        st->factor = factor;
        st->expand = nn::Conv2d(cfg.f, cfg.f * factor * factor, 3, name + ".up" + std::to_string(idx++));
        up_.push_back(std::move(st));
    }
}

NodeP GlobalDecoderView::firstStage(const NodeP& g_hat) {
    NodeP y = nn::leakyRelu(trunk1_in_.forward(g_hat), slope_);
    for (auto& b : trunk1_) y = b->forward(y);
    return y;
}

NodeP GlobalDecoderView::recover(const NodeP& f1, const NodeP& f2, const NodeP& g_hat) {
    NodeP y = nn::leakyRelu(trunk2_in_.forward(nn::concatChannels(f2, g_hat)), slope_);
    for (auto& b : trunk2_) y = b->forward(y);  // F3
    y = nn::leakyRelu(fuse_.forward(nn::concatChannels(f1, y)), slope_);
    for (auto& st : up_) {
        y = st->expand.forward(y);
        y = nn::leakyRelu(nn::pixelShuffle(y, st->factor), slope_);
    }
    y = nn::leakyRelu(post1_.forward(y), slope_);
    y = post2_.forward(y);
    return nn::add(y, nn::upsampleBilinear(g_hat, m_));
}

std::vector<nn::Param*> GlobalDecoderView::params() {
    std::vector<nn::Param*> p{&trunk1_in_.weight(), &trunk1_in_.bias(), &trunk2_in_.weight(), &trunk2_in_.bias(),
                              &fuse_.weight(),      &fuse_.bias(),      &post1_.weight(),     &post1_.bias(),
                              &post2_.weight(),     &post2_.bias()};
    for (auto& b : trunk1_) append(p, b->params());
    for (auto& b : trunk2_) append(p, b->params());
    for (auto& st : up_) append(p, {&st->expand.weight(), &st->expand.bias()});
    return p;
}

// ---------------------------------------------------------------------------
// FusionNet
// ---------------------------------------------------------------------------

FusionNet::FusionNet(const CodecConfig& cfg, const std::string& name)
    : slope_(cfg.leaky_slope),
      c1_(6, cfg.fusion_width, 5, name + ".c1"),
      c2_(cfg.fusion_width, cfg.fusion_width, 5, name + ".c2"),
      c3_(cfg.fusion_width, 3, 3, name + ".c3") {}

NodeP FusionNet::forward(const NodeP& s_hat, const NodeP& f_hat) {
    requireSameShape(s_hat->value, f_hat->value, "FusionNet");
    NodeP y = nn::leakyRelu(c1_.forward(nn::concatChannels(s_hat, f_hat)), slope_);
    y = nn::leakyRelu(c2_.forward(y), slope_);
    y = c3_.forward(y);
    return nn::add(y, nn::add(s_hat, f_hat));
}

std::vector<nn::Param*> FusionNet::params() {
    return {&c1_.weight(), &c1_.bias(), &c2_.weight(), &c2_.bias(), &c3_.weight(), &c3_.bias()};
}

// ---------------------------------------------------------------------------
// SemanticCodec
// ---------------------------------------------------------------------------

SemanticCodec::SemanticCodec(const CodecConfig& c)
    : cfg(c),
      key_enc_l(c, "key_enc_l"),
      key_enc_r(c, "key_enc_r"),
      key_dec_l(c, "key_dec_l"),
      key_dec_r(c, "key_dec_r"),
      global_enc(c, "global_enc"),
      flow(c, "flow"),
      global_dec_l(c, "global_dec_l"),
      global_dec_r(c, "global_dec_r"),
      fusion_l(c, "fusion_l"),
      fusion_r(c, "fusion_r") {
    cfg.validate();
}

namespace {
void heInitGroup(std::vector<nn::Param*> params, Rng& rng) {
    // Conv params come in (weight, bias) pairs; infer fan-in from sizes.
    for (size_t i = 0; i + 1 < params.size(); i += 2) {
        nn::Param* w = params[i];
        nn::Param* b = params[i + 1];
        const Eigen::Index fan_in = w->value.size() / std::max<Eigen::Index>(1, b->value.size());
        const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (Eigen::Index j = 0; j < w->value.size(); ++j) w->value[j] = static_cast<float>(rng.normal() * std);
        b->value.setZero();
    }
}
}  // namespace

void SemanticCodec::initWeights(Rng& rng) {
    heInitGroup(keyTx(), rng);
    heInitGroup(keyRx(), rng);
    heInitGroup(globalTx(), rng);
    heInitGroup(globalRx(), rng);
    heInitGroup(flowParams(), rng);
    heInitGroup(fusionParams(), rng);
    // Zero the convs whose outputs are added to analytic residuals (and the
    // flow refinement heads), so a fresh model starts at the plain
    // down/up-sampling baseline and training can only move away from it.
    auto endsWith = [](const std::string& s, const std::string& suffix) {
        return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    struct Head {
        const char* prefix;
        const char* suffix;
    };
    constexpr Head heads[] = {{"key_enc", ".c2.weight"},         {"key_dec", ".refine.weight"},
                              {"global_enc.comp", ".post.weight"}, {"global_dec", ".post2.weight"},
                              {"fusion", ".c3.weight"},          {"flow", ".c3.weight"}};
    for (nn::Param* p : allParams())
        for (const Head& h : heads)
            if (p->name.rfind(h.prefix, 0) == 0 && endsWith(p->name, h.suffix)) p->value.setZero();
}

void SemanticCodec::zeroWeights() {
    for (nn::Param* p : allParams()) p->value.setZero();
}

std::vector<nn::Param*> SemanticCodec::keyTx() {
    std::vector<nn::Param*> p;
    append(p, key_enc_l.params());
    append(p, key_enc_r.params());
    return p;
}
std::vector<nn::Param*> SemanticCodec::keyRx() {
    std::vector<nn::Param*> p;
    append(p, key_dec_l.params());
    append(p, key_dec_r.params());
    return p;
}
std::vector<nn::Param*> SemanticCodec::globalTx() { return global_enc.params(); }
std::vector<nn::Param*> SemanticCodec::globalRx() {
    std::vector<nn::Param*> p;
    append(p, global_dec_l.params());
    append(p, global_dec_r.params());
    return p;
}
std::vector<nn::Param*> SemanticCodec::flowParams() { return flow.params(); }
std::vector<nn::Param*> SemanticCodec::fusionParams() {
    std::vector<nn::Param*> p;
    append(p, fusion_l.params());
    append(p, fusion_r.params());
    return p;
}
std::vector<nn::Param*> SemanticCodec::allParams() {
    std::vector<nn::Param*> p;
    append(p, keyTx());
    append(p, keyRx());
    append(p, globalTx());
    append(p, globalRx());
    append(p, flowParams());
    append(p, fusionParams());
    return p;
}

}  // namespace semcom
