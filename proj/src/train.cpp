#include "semcom/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

namespace semcom {

using nn::NodeP;

// ---------------------------------------------------------------------------
// Tensor-level losses
// ---------------------------------------------------------------------------

double charbonnierLoss(const Tensor& i, const Tensor& i_hat, float epsilon, bool per_pixel) {
    requireSameShape(i, i_hat, "charbonnierLoss");
    if (epsilon <= 0.0f) throw ConfigError("charbonnierLoss: epsilon must be > 0");
    const double e2 = static_cast<double>(epsilon) * epsilon;
    if (per_pixel) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k < i.size(); ++k) {
            const double d = static_cast<double>(i.flat()[k]) - i_hat.flat()[k];
            acc += std::sqrt(d * d + e2);
        }
        return acc / static_cast<double>(i.size());
    }
    const double sq = static_cast<double>((i.flat() - i_hat.flat()).square().sum());
    return std::sqrt(sq + e2);
}

double maskedCharbonnierLoss(const Tensor& s, const Tensor& s_hat, const Tensor& mask, float epsilon,
                             bool per_pixel) {
    requireSameShape(s, s_hat, "maskedCharbonnierLoss");
    if (mask.w() != s.w() || mask.h() != s.h()) throw ShapeError("maskedCharbonnierLoss: mask dims");
    Tensor ms(s.w(), s.h(), s.c()), msh(s.w(), s.h(), s.c());
    for (int z = 0; z < s.c(); ++z)
        for (int y = 0; y < s.h(); ++y)
            for (int x = 0; x < s.w(); ++x) {
                const float m = mask(x, y, 0);
                ms(x, y, z) = m * s(x, y, z);
                msh(x, y, z) = m * s_hat(x, y, z);
            }
    return charbonnierLoss(ms, msh, epsilon, per_pixel);
}

double hybridMaskedCharbonnierLoss(const Tensor& i, const Tensor& i_hat, const Tensor& mask, float epsilon,
                                   float lambda, bool per_pixel) {
    if (lambda < 0.0f) throw ConfigError("hybridMaskedCharbonnierLoss: lambda must be >= 0");
    return maskedCharbonnierLoss(i, i_hat, mask, epsilon, per_pixel) +
           lambda * charbonnierLoss(i, i_hat, epsilon, per_pixel);
}

double mseLossT(const Tensor& x, const Tensor& x_hat) {
    requireSameShape(x, x_hat, "mseLossT");
    return static_cast<double>((x.flat() - x_hat.flat()).square().mean());
}

NodeP lossNode(const LossSpec& spec, const NodeP& pred, const Tensor& target, const Tensor* mask) {
    spec.validate();
    switch (spec.kind) {
        case LossKind::Charbonnier:
            return nn::charbonnier(pred, target, spec.epsilon, spec.per_pixel);
        case LossKind::MeanSquaredError:
            return nn::mseLoss(pred, target);
        case LossKind::MaskedCharbonnier: {
            if (!mask) throw ConfigError("lossNode: masked loss needs a mask");
            Tensor mt = target;
            for (int z = 0; z < mt.c(); ++z)
                for (int y = 0; y < mt.h(); ++y)
                    for (int x = 0; x < mt.w(); ++x) mt(x, y, z) *= (*mask)(x, y, 0);
            return nn::charbonnier(nn::mulMask(pred, *mask), mt, spec.epsilon, spec.per_pixel);
        }
        case LossKind::HybridMaskedCharbonnier: {
            LossSpec masked = spec;
            masked.kind = LossKind::MaskedCharbonnier;
            NodeP a = lossNode(masked, pred, target, mask);
            NodeP b = nn::charbonnier(pred, target, spec.epsilon, spec.per_pixel);
            return nn::addScaled(a, b, spec.lambda);
        }
    }
    throw ConfigError("lossNode: unknown loss kind");
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

void StageSchedule::validate() const {
    if (stage_id < 1 || stage_id > 5) throw ConfigError("StageSchedule: stage_id must be in 1..5");
    if (epochs_a < 1) throw ConfigError("StageSchedule: epochs_a must be >= 1");
    const bool two_phase = (stage_id == 1 || stage_id == 5);
    if (two_phase && epochs_b < 1) throw ConfigError("StageSchedule: two-phase stage needs epochs_b >= 1");
    if (epsilon <= 0.0f) throw ConfigError("StageSchedule: epsilon must be > 0");
    if (lambda < 0.0f) throw ConfigError("StageSchedule: lambda must be >= 0");
    if (hybrid_fraction < 0.0f || hybrid_fraction > 1.0f) throw ConfigError("StageSchedule: hybrid_fraction in [0,1]");
    if (snr_hi_db < snr_lo_db) throw ConfigError("StageSchedule: snr range inverted");
    auto pos = [](float v) { return v > 0.0f; };
    switch (stage_id) {
        case 1:
            if (!pos(lr.global_tx) || !pos(lr.global_rx) || !pos(lr.fusion) || !pos(lr.flow))
                throw ConfigError("StageSchedule: stage 1 learning rates must be > 0");
            break;
        case 2:
            if (!pos(lr.key_tx) || !pos(lr.key_rx)) throw ConfigError("StageSchedule: stage 2 learning rates");
            break;
        case 3:
            if (!pos(lr.fusion)) throw ConfigError("StageSchedule: stage 3 learning rate");
            break;
        case 4:
            if (!pos(lr.global_tx) || !pos(lr.global_rx) || !pos(lr.key_tx) || !pos(lr.key_rx) || !pos(lr.flow) ||
                !pos(lr.fusion))
                throw ConfigError("StageSchedule: stage 4 learning rates");
            break;
        case 5:
            if (!pos(lr.channel)) throw ConfigError("StageSchedule: stage 5 channel learning rate");
            break;
    }
}

StageSchedule StageSchedule::defaults(int stage_id, int epochs_per_phase) {
    StageSchedule s;
    s.stage_id = stage_id;
    switch (stage_id) {
        case 1:
            s.lr.global_tx = 2e-4f;
            s.lr.global_rx = 2e-4f;
            s.lr.flow = 2.5e-5f;
            s.lr.fusion = 1e-4f;
            s.epochs_a = 2;
            s.epochs_b = 10;
            break;
        case 2:
            s.lr.key_tx = 1e-4f;
            s.lr.key_rx = 2e-4f;
            s.epochs_a = 10;
            break;
        case 3:
            s.lr.fusion = 1e-4f;
            s.epochs_a = 6;
            break;
        case 4:
            s.lr.global_tx = 1e-4f;
            s.lr.global_rx = 1e-4f;
            s.lr.key_tx = 2e-5f;
            s.lr.key_rx = 2e-5f;
            s.lr.flow = 1.25e-5f;
            s.lr.fusion = 2e-5f;
            s.epochs_a = 10;
            break;
        case 5:
            s.lr.channel = 1e-4f;
            s.lr.global_tx = 1e-4f;
            s.lr.global_rx = 1e-4f;
            s.lr.key_tx = 2e-5f;
            s.lr.key_rx = 2e-5f;
            s.lr.flow = 1.25e-5f;
            s.lr.fusion = 2e-5f;
            s.epochs_a = 25;
            s.epochs_b = 20;
            break;
        default:
            throw ConfigError("StageSchedule::defaults: stage_id must be in 1..5");
    }
    if (epochs_per_phase > 0) {
        s.epochs_a = epochs_per_phase;
        if (stage_id == 1 || stage_id == 5) s.epochs_b = epochs_per_phase;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Stage runner
// ---------------------------------------------------------------------------

namespace {

struct StepContext {
    SemanticCodec& codec;
    ChannelCodec* chan;
    const StageSchedule& stage;
    Rng& rng;
    const ChannelConfig& channel;
    bool joint_phase = false;  // stage 1/5 sub-phase b
};

Tensor padTarget(const ImagePlane& img, int pad_w, int pad_h) { return reflectPad(img, pad_w, pad_h); }

// Per-real additive noise after zero-forcing: AWGN as-is, Rayleigh scales
// each symbol's noise by 1/|h| (|h| floored at 1e-3 for training stability).
Tensor trainingNoise(const Tensor& shape, const ChannelConfig& cc, double snr_db, Rng& rng) {
    Tensor noise = awgnNoiseLike(shape, snr_db, rng);
    if (cc.kind == ChannelKind::Rayleigh) {
        Eigen::ArrayXf& n = noise.flat();
        for (Eigen::Index i = 0; i < n.size(); i += 2) {
            const double hr = rng.normal() * std::sqrt(0.5);
            const double hi = rng.normal() * std::sqrt(0.5);
            const float inv = 1.0f / std::max(1e-3f, static_cast<float>(std::hypot(hr, hi)));
            n[i] *= inv;
            if (i + 1 < n.size()) n[i + 1] *= inv;
        }
    }
    return noise;
}

NodeP throughChannel(ChannelCodec& chan, const NodeP& x, const ChannelConfig& cc, double snr_db, Rng& rng) {
    NodeP y = powerNormalize(chan.encode(x, true));
    NodeP yr = addNoise(y, trainingNoise(y->value, cc, snr_db, rng));
    return chan.decode(yr, true);
}

double stepLoss(StepContext& ctx, const StereoPair& pair) {
    const StageSchedule& st = ctx.stage;
    OracleDetector det;
    EncodeResult enc = encodePair(ctx.codec, pair, det, st.confidence_floor);
    const Tensor tgt_l = padTarget(pair.left, enc.pad_w, enc.pad_h);
    const Tensor tgt_r = padTarget(pair.right, enc.pad_w, enc.pad_h);

    LossSpec spec;
    spec.epsilon = st.epsilon;
    spec.lambda = st.lambda;
    spec.per_pixel = st.per_pixel;

    NodeP loss;
    switch (st.stage_id) {
        case 1: {
            // Global network with the fusion key input replaced by zero.
            NodeP flow_lr, flow_rl;
            if (st.flow_mode == FlowMode::ZeroStub) {
                flow_lr = zeroFlow(enc.g_l->value.w(), enc.g_l->value.h());
                flow_rl = zeroFlow(enc.g_l->value.w(), enc.g_l->value.h());
            } else {
                flow_lr = ctx.codec.flow.estimate(enc.g_r, enc.g_l);
                flow_rl = ctx.codec.flow.estimate(enc.g_l, enc.g_r);
            }
            NodeP f1_l = ctx.codec.global_dec_l.firstStage(enc.g_l);
            NodeP f1_r = ctx.codec.global_dec_r.firstStage(enc.g_r);
            NodeP f_hat_l = ctx.codec.global_dec_l.recover(f1_l, nn::warp(f1_r, flow_rl), enc.g_l);
            NodeP f_hat_r = ctx.codec.global_dec_r.recover(f1_r, nn::warp(f1_l, flow_lr), enc.g_r);
            NodeP zero = nn::constant(Tensor(enc.pad_w, enc.pad_h, 3));
            NodeP out_l = ctx.codec.fusion_l.forward(zero, f_hat_l);
            NodeP out_r = ctx.codec.fusion_r.forward(zero, f_hat_r);
            spec.kind = LossKind::Charbonnier;
            loss = nn::add(lossNode(spec, out_l, tgt_l, nullptr), lossNode(spec, out_r, tgt_r, nullptr));
            break;
        }
        case 2: {
            // Key-area network alone on the masked planes.
            NodeP s_hat_l = nn::mulMask(ctx.codec.key_dec_l.forward(enc.k_l), enc.aligned_mask_l);
            NodeP s_hat_r = nn::mulMask(ctx.codec.key_dec_r.forward(enc.k_r), enc.aligned_mask_r);
            spec.kind = LossKind::MaskedCharbonnier;
            loss = nn::add(lossNode(spec, s_hat_l, tgt_l, &enc.mask_l), lossNode(spec, s_hat_r, tgt_r, &enc.mask_r));
            break;
        }
        case 3:
        case 4: {
            DecodeResult dec = decodePair(ctx.codec, enc.k_l, enc.k_r, enc.g_l, enc.g_r, enc, st.flow_mode);
            spec.kind = ctx.joint_phase ? LossKind::Charbonnier : LossKind::HybridMaskedCharbonnier;
            loss = nn::add(lossNode(spec, dec.out_l, tgt_l, &enc.mask_l), lossNode(spec, dec.out_r, tgt_r, &enc.mask_r));
            break;
        }
        case 5: {
            if (!ctx.chan) throw StateError("runStage: stage 5 requires a channel codec");
            const double snr = ctx.rng.uniform(st.snr_lo_db, st.snr_hi_db);
            if (!ctx.joint_phase) {
                // Channel codec alone: MSE round trip per compressed plane.
                loss = nullptr;
                for (const NodeP& plane : {enc.k_l, enc.k_r, enc.g_l, enc.g_r}) {
                    NodeP x = nn::constant(plane->value);  // detached from the semantic codec
                    NodeP xh = throughChannel(*ctx.chan, x, ctx.channel, snr, ctx.rng);
                    NodeP term = nn::mseLoss(xh, plane->value);
                    loss = loss ? nn::add(loss, term) : term;
                }
            } else {
                NodeP k_hat_l = throughChannel(*ctx.chan, enc.k_l, ctx.channel, snr, ctx.rng);
                NodeP k_hat_r = throughChannel(*ctx.chan, enc.k_r, ctx.channel, snr, ctx.rng);
                NodeP g_hat_l = throughChannel(*ctx.chan, enc.g_l, ctx.channel, snr, ctx.rng);
                NodeP g_hat_r = throughChannel(*ctx.chan, enc.g_r, ctx.channel, snr, ctx.rng);
                DecodeResult dec = decodePair(ctx.codec, k_hat_l, k_hat_r, g_hat_l, g_hat_r, enc, st.flow_mode);
                spec.kind = LossKind::Charbonnier;
                loss = nn::add(lossNode(spec, dec.out_l, tgt_l, nullptr), lossNode(spec, dec.out_r, tgt_r, nullptr));
            }
            break;
        }
        default:
            throw ConfigError("runStage: stage_id out of range");
    }

    const double value = static_cast<double>(loss->value(0, 0, 0));
    nn::backward(loss);
    return value;
}

std::vector<std::pair<std::vector<nn::Param*>, float>> activeGroups(SemanticCodec& codec, ChannelCodec* chan,
                                                                    const StageSchedule& st, bool joint_phase) {
    std::vector<std::pair<std::vector<nn::Param*>, float>> g;
    auto put = [&g](std::vector<nn::Param*> p, float lr) {
        if (lr > 0.0f && !p.empty()) g.emplace_back(std::move(p), lr);
    };
    switch (st.stage_id) {
        case 1:
            put(codec.globalTx(), st.lr.global_tx);
            put(codec.globalRx(), st.lr.global_rx);
            put(codec.fusionParams(), st.lr.fusion);
            if (joint_phase) put(codec.flowParams(), st.lr.flow);
            break;
        case 2:
            put(codec.keyTx(), st.lr.key_tx);
            put(codec.keyRx(), st.lr.key_rx);
            break;
        case 3:
            put(codec.fusionParams(), st.lr.fusion);
            break;
        case 4:
            put(codec.globalTx(), st.lr.global_tx);
            put(codec.globalRx(), st.lr.global_rx);
            put(codec.keyTx(), st.lr.key_tx);
            put(codec.keyRx(), st.lr.key_rx);
            put(codec.flowParams(), st.lr.flow);
            put(codec.fusionParams(), st.lr.fusion);
            break;
        case 5:
            if (chan) put(chan->params(), st.lr.channel);
            if (joint_phase) {
                put(codec.globalTx(), st.lr.global_tx);
                put(codec.globalRx(), st.lr.global_rx);
                put(codec.keyTx(), st.lr.key_tx);
                put(codec.keyRx(), st.lr.key_rx);
                put(codec.flowParams(), st.lr.flow);
                put(codec.fusionParams(), st.lr.fusion);
            }
            break;
    }
    return g;
}

}  // namespace

void runStage(const StageSchedule& stage, TrainState& state, const std::vector<StereoPair>& data,
              const ChannelConfig& channel) {
    stage.validate();
    if (!state.codec) throw StateError("runStage: no codec attached");
    if (data.empty()) throw ConfigError("runStage: empty dataset");
    if (state.completed_stage < stage.stage_id - 1)
        throw StateError("runStage: stage " + std::to_string(stage.stage_id) + " requires completed stage " +
                         std::to_string(stage.stage_id - 1));
    if (stage.stage_id == 5 && channel.kind == ChannelKind::Noiseless)
        throw ConfigError("runStage: stage 5 needs a noisy channel");

    std::vector<nn::Param*> all = state.codec->allParams();
    if (state.chan)
        for (auto* p : state.chan->params()) all.push_back(p);

    const auto t0 = std::chrono::steady_clock::now();
    int epoch_index = 0;
    const int total = stage.totalEpochs();
    for (int epoch = 0; epoch < total; ++epoch, ++epoch_index) {
        bool joint = false;
        if (stage.stage_id == 1 || stage.stage_id == 5) {
            joint = epoch >= stage.epochs_a;
        } else if (stage.stage_id == 4) {
            // Leading hybrid_fraction share of epochs uses the hybrid loss.
            joint = epoch >= static_cast<int>(std::ceil(stage.hybrid_fraction * total));
        }
        auto groups = activeGroups(*state.codec, state.chan, stage, joint);
        StepContext ctx{*state.codec, state.chan, stage, state.rng, channel, joint};
        double acc = 0.0;
        for (size_t i = 0; i < data.size(); ++i) {
            const double v = stepLoss(ctx, data[i]);
            if (!std::isfinite(v))
                throw DataError("runStage: non-finite loss (stage " + std::to_string(stage.stage_id) + ", epoch " +
                                std::to_string(epoch) + ", frame " + std::to_string(i) + ")");
            state.opt.step(groups);
            state.opt.zeroGrad(all);
            acc += v;
        }
        const double mean = acc / static_cast<double>(data.size());
        if (!std::isfinite(mean))
            throw DataError("runStage: non-finite epoch loss (stage " + std::to_string(stage.stage_id) + ", epoch " +
                            std::to_string(epoch) + ")");
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        state.history.push_back({stage.stage_id, epoch, mean, wall});
    }
    state.completed_stage = std::max(state.completed_stage, stage.stage_id);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr uint32_t kCkptMagic = 0x504b4353;  // "SCKP" LE
constexpr uint32_t kCkptVersion = 1;

template <typename T>
void writeRaw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void readRaw(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("loadCheckpoint: truncated file");
}

void writeArray(std::ostream& out, const Eigen::ArrayXf& a) {
    writeRaw(out, static_cast<uint64_t>(a.size()));
    out.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(float)));
}
Eigen::ArrayXf readArray(std::istream& in) {
    uint64_t n = 0;
    readRaw(in, n);
    Eigen::ArrayXf a(static_cast<Eigen::Index>(n));
    in.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw DataError("loadCheckpoint: truncated array");
    return a;
}

void writeString(std::ostream& out, const std::string& s) {
    writeRaw(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string readString(std::istream& in) {
    uint32_t n = 0;
    readRaw(in, n);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw DataError("loadCheckpoint: truncated string");
    return s;
}

}  // namespace

void saveCheckpoint(const std::filesystem::path& path, const TrainState& state) {
    if (!state.codec) throw StateError("saveCheckpoint: no codec attached");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("saveCheckpoint: cannot open " + path.string());
    writeRaw(out, kCkptMagic);
    writeRaw(out, kCkptVersion);
    writeRaw(out, static_cast<uint8_t>(state.chan != nullptr));
    writeRaw(out, static_cast<int32_t>(state.completed_stage));
    writeRaw(out, state.opt.t());
    const Rng::Snapshot snap = state.rng.snapshot();
    writeRaw(out, snap.state);
    writeRaw(out, snap.cached);
    writeRaw(out, static_cast<uint8_t>(snap.have_cached));

    std::vector<nn::Param*> params = state.codec->allParams();
    if (state.chan)
        for (auto* p : state.chan->params()) params.push_back(p);
    writeRaw(out, static_cast<uint32_t>(params.size()));
    for (const nn::Param* p : params) {
        writeString(out, p->name);
        writeArray(out, p->value);
        writeArray(out, p->m);
        writeArray(out, p->v);
    }

    std::vector<std::pair<Eigen::ArrayXf*, Eigen::ArrayXf*>> norms;
    if (state.chan) norms = state.chan->normState();
    writeRaw(out, static_cast<uint32_t>(norms.size()));
    for (auto& [mean, var] : norms) {
        writeArray(out, *mean);
        writeArray(out, *var);
    }

    writeRaw(out, static_cast<uint32_t>(state.history.size()));
    for (const auto& r : state.history) {
        writeRaw(out, static_cast<int32_t>(r.stage));
        writeRaw(out, static_cast<int32_t>(r.epoch));
        writeRaw(out, r.loss);
        writeRaw(out, r.wall_seconds);
    }
    if (!out) throw DataError("saveCheckpoint: write failure");
}

void loadCheckpoint(const std::filesystem::path& path, TrainState& state) {
    if (!state.codec) throw StateError("loadCheckpoint: no codec attached");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("loadCheckpoint: cannot open " + path.string());
    uint32_t magic = 0, version = 0;
    readRaw(in, magic);
    readRaw(in, version);
    if (magic != kCkptMagic) throw DataError("loadCheckpoint: bad magic");
    if (version != kCkptVersion) throw DataError("loadCheckpoint: unsupported version");
    uint8_t has_chan = 0;
    readRaw(in, has_chan);
    if (static_cast<bool>(has_chan) != (state.chan != nullptr))
        throw ConfigError("loadCheckpoint: channel-codec presence mismatch");
    int32_t completed = 0;
    readRaw(in, completed);
    int64_t t = 0;
    readRaw(in, t);
    Rng::Snapshot snap;
    readRaw(in, snap.state);
    readRaw(in, snap.cached);
    uint8_t have_cached = 0;
    readRaw(in, have_cached);
    snap.have_cached = (have_cached != 0);

    std::vector<nn::Param*> params = state.codec->allParams();
    if (state.chan)
        for (auto* p : state.chan->params()) params.push_back(p);
    uint32_t count = 0;
    readRaw(in, count);
    if (count != params.size())
        throw ConfigError("loadCheckpoint: parameter count mismatch (file " + std::to_string(count) + ", model " +
                          std::to_string(params.size()) + ")");
    for (nn::Param* p : params) {
        const std::string name = readString(in);
        Eigen::ArrayXf value = readArray(in);
        Eigen::ArrayXf m = readArray(in);
        Eigen::ArrayXf v = readArray(in);
        if (name != p->name || value.size() != p->value.size())
            throw ConfigError("loadCheckpoint: parameter mismatch at '" + p->name + "' (file has '" + name + "' of " +
                              std::to_string(value.size()) + " values, model expects " +
                              std::to_string(p->value.size()) + ")");
        p->value = std::move(value);
        p->m = std::move(m);
        p->v = std::move(v);
        p->grad.setZero();
    }

    std::vector<std::pair<Eigen::ArrayXf*, Eigen::ArrayXf*>> norms;
    if (state.chan) norms = state.chan->normState();
    uint32_t norm_count = 0;
    readRaw(in, norm_count);
    if (norm_count != norms.size()) throw ConfigError("loadCheckpoint: norm-layer count mismatch");
    for (auto& [mean, var] : norms) {
        Eigen::ArrayXf fm = readArray(in);
        Eigen::ArrayXf fv = readArray(in);
        if (fm.size() != mean->size() || fv.size() != var->size())
            throw ConfigError("loadCheckpoint: norm state size mismatch");
        *mean = std::move(fm);
        *var = std::move(fv);
    }

    uint32_t hist = 0;
    readRaw(in, hist);
    state.history.clear();
    state.history.reserve(hist);
    for (uint32_t i = 0; i < hist; ++i) {
        LossRecord r;
        int32_t stage = 0, epoch = 0;
        readRaw(in, stage);
        readRaw(in, epoch);
        readRaw(in, r.loss);
        readRaw(in, r.wall_seconds);
        r.stage = stage;
        r.epoch = epoch;
        state.history.push_back(r);
    }

    state.completed_stage = completed;
    state.opt.setT(t);
    state.rng.restore(snap);
}

void writeLossCsv(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
    std::ofstream out(path);
    if (!out) throw ConfigError("writeLossCsv: cannot open " + path.string());
    out << "stage,epoch,loss,wall_seconds\n";
    char buf[128];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.9g,%.3f\n", r.stage, r.epoch, r.loss, r.wall_seconds);
        out << buf;
    }
}

}  // namespace semcom
