#include "semcom/pipeline.hpp"

#include <cstring>
#include <fstream>

namespace semcom {

using nn::NodeP;

// ---------------------------------------------------------------------------
// Payload packing
// ---------------------------------------------------------------------------

namespace {

std::vector<float> cropKeyStream(const Tensor& k, const DetectionSet& aligned, int n) {
    // Union support at compressed resolution, raster order (z, y, x).
    Tensor mask = buildMask(aligned, k.w() * n, k.h() * n);
    std::vector<float> out;
    for (int z = 0; z < k.c(); ++z)
        for (int y = 0; y < k.h(); ++y)
            for (int x = 0; x < k.w(); ++x)
                if (mask(x * n, y * n, 0) > 0.5f) out.push_back(k(x, y, z));
    return out;
}

void fillKeyPlane(Tensor& k, const std::vector<float>& stream, const DetectionSet& aligned, int n) {
    Tensor mask = buildMask(aligned, k.w() * n, k.h() * n);
    size_t i = 0;
    for (int z = 0; z < k.c(); ++z)
        for (int y = 0; y < k.h(); ++y)
            for (int x = 0; x < k.w(); ++x)
                if (mask(x * n, y * n, 0) > 0.5f) {
                    if (i >= stream.size()) throw DataError("unpackPayload: key stream too short");
                    k(x, y, z) = stream[i++];
                }
    if (i != stream.size()) throw DataError("unpackPayload: key stream length mismatch");
}

std::vector<float> flatten(const Tensor& t) {
    return {t.flat().data(), t.flat().data() + t.size()};
}

void checkAligned(const DetectionSet& boxes, int n) {
    for (const auto& b : boxes.boxes) {
        const auto isAligned = [n](float v) { return std::fmod(v, static_cast<float>(n)) == 0.0f; };
        if (!isAligned(b.u1) || !isAligned(b.v1) || !isAligned(b.u2) || !isAligned(b.v2))
            throw std::logic_error("packPayload: box not aligned to the n-grid");
    }
}

}  // namespace

SemanticPayload packPayload(const Tensor& k_l, const Tensor& k_r, const Tensor& g_l, const Tensor& g_r,
                            const DetectionSet& aligned_l, const DetectionSet& aligned_r, int n, int m, int orig_w,
                            int orig_h, int pad_w, int pad_h) {
    checkAligned(aligned_l, n);
    checkAligned(aligned_r, n);
    SemanticPayload p;
    p.orig_w = static_cast<uint32_t>(orig_w);
    p.orig_h = static_cast<uint32_t>(orig_h);
    p.pad_w = static_cast<uint32_t>(pad_w);
    p.pad_h = static_cast<uint32_t>(pad_h);
    p.n = static_cast<uint16_t>(n);
    p.m = static_cast<uint16_t>(m);
    p.boxes_l = aligned_l;
    p.boxes_r = aligned_r;
    p.key_l = cropKeyStream(k_l, aligned_l, n);
    p.key_r = cropKeyStream(k_r, aligned_r, n);
    p.global_l = flatten(g_l);
    p.global_r = flatten(g_r);
    return p;
}

UnpackedPayload unpackPayload(const SemanticPayload& p) {
    UnpackedPayload u;
    const int kw = static_cast<int>(p.pad_w) / p.n, kh = static_cast<int>(p.pad_h) / p.n;
    const int gw = static_cast<int>(p.pad_w) / p.m, gh = static_cast<int>(p.pad_h) / p.m;
    u.k_l = Tensor(kw, kh, 3);
    u.k_r = Tensor(kw, kh, 3);
    fillKeyPlane(u.k_l, p.key_l, p.boxes_l, p.n);
    fillKeyPlane(u.k_r, p.key_r, p.boxes_r, p.n);
    u.g_l = Tensor(gw, gh, 3);
    u.g_r = Tensor(gw, gh, 3);
    if (static_cast<Eigen::Index>(p.global_l.size()) != u.g_l.size() ||
        static_cast<Eigen::Index>(p.global_r.size()) != u.g_r.size())
        throw DataError("unpackPayload: global stream length mismatch");
    std::memcpy(u.g_l.flat().data(), p.global_l.data(), p.global_l.size() * sizeof(float));
    std::memcpy(u.g_r.flat().data(), p.global_r.data(), p.global_r.size() * sizeof(float));
    return u;
}

// ---------------------------------------------------------------------------
// Payload serialization
// ---------------------------------------------------------------------------

namespace {
constexpr uint32_t kPayloadMagic = 0x53435059;  // "YPCS" LE
constexpr uint32_t kPayloadVersion = 1;

template <typename T>
void writeRaw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void readRaw(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("loadPayload: truncated file");
}

void writeBoxes(std::ostream& out, const DetectionSet& det) {
    writeRaw(out, static_cast<uint32_t>(det.boxes.size()));
    for (const auto& b : det.boxes) {
        for (float v : {b.u1, b.v1, b.u2, b.v2, b.confidence}) writeRaw(out, v);
    }
}
DetectionSet readBoxes(std::istream& in, int w, int h) {
    uint32_t count = 0;
    readRaw(in, count);
    DetectionSet det;
    det.image_w = w;
    det.image_h = h;
    for (uint32_t i = 0; i < count; ++i) {
        BBox2D b;
        readRaw(in, b.u1);
        readRaw(in, b.v1);
        readRaw(in, b.u2);
        readRaw(in, b.v2);
        readRaw(in, b.confidence);
        det.boxes.push_back(b);
    }
    return det;
}

void writeStream(std::ostream& out, const std::vector<float>& s) {
    writeRaw(out, static_cast<uint64_t>(s.size()));
    out.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size() * sizeof(float)));
}
std::vector<float> readStream(std::istream& in) {
    uint64_t count = 0;
    readRaw(in, count);
    std::vector<float> s(count);
    in.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw DataError("loadPayload: truncated stream");
    return s;
}
}  // namespace

void savePayload(const std::filesystem::path& path, const SemanticPayload& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("savePayload: cannot open " + path.string());
    writeRaw(out, kPayloadMagic);
    writeRaw(out, kPayloadVersion);
    writeRaw(out, p.orig_w);
    writeRaw(out, p.orig_h);
    writeRaw(out, p.pad_w);
    writeRaw(out, p.pad_h);
    writeRaw(out, p.n);
    writeRaw(out, p.m);
    writeBoxes(out, p.boxes_l);
    writeBoxes(out, p.boxes_r);
    writeStream(out, p.key_l);
    writeStream(out, p.key_r);
    writeStream(out, p.global_l);
    writeStream(out, p.global_r);
}

SemanticPayload loadPayload(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("loadPayload: cannot open " + path.string());
    uint32_t magic = 0, version = 0;
    readRaw(in, magic);
    readRaw(in, version);
    if (magic != kPayloadMagic) throw DataError("loadPayload: bad magic");
    if (version != kPayloadVersion) throw DataError("loadPayload: unsupported version");
    SemanticPayload p;
    readRaw(in, p.orig_w);
    readRaw(in, p.orig_h);
    readRaw(in, p.pad_w);
    readRaw(in, p.pad_h);
    readRaw(in, p.n);
    readRaw(in, p.m);
    p.boxes_l = readBoxes(in, static_cast<int>(p.pad_w), static_cast<int>(p.pad_h));
    p.boxes_r = readBoxes(in, static_cast<int>(p.pad_w), static_cast<int>(p.pad_h));
    p.key_l = readStream(in);
    p.key_r = readStream(in);
    p.global_l = readStream(in);
    p.global_r = readStream(in);
    return p;
}

double effectiveCompressionRatio(const SemanticPayload& p) {
    const int64_t sent = p.payloadElements();
    if (sent == 0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(p.originalElements()) / static_cast<double>(sent);
}

// ---------------------------------------------------------------------------
// Encode / decode
// ---------------------------------------------------------------------------

EncodeResult encodePair(SemanticCodec& codec, const StereoPair& pair, Detector& detector, float confidence_floor) {
    requireSameShape(pair.left, pair.right, "encodePair");
    const CodecConfig& cfg = codec.cfg;
    EncodeResult r;
    r.orig_w = pair.left.w();
    r.orig_h = pair.left.h();
    const int mult = cfg.padMultiple();
    r.pad_w = ((r.orig_w + mult - 1) / mult) * mult;
    r.pad_h = ((r.orig_h + mult - 1) / mult) * mult;

    r.boxes_l = detect2d(pair.left, detector, pair.gt_left, confidence_floor);
    r.boxes_r = detect2d(pair.right, detector, pair.gt_right, confidence_floor);
    r.aligned_l = alignBoxesToGrid(r.boxes_l, cfg.n, r.pad_w, r.pad_h);
    r.aligned_r = alignBoxesToGrid(r.boxes_r, cfg.n, r.pad_w, r.pad_h);

    Tensor left_p = reflectPad(pair.left, r.pad_w, r.pad_h);
    Tensor right_p = reflectPad(pair.right, r.pad_w, r.pad_h);
    r.mask_l = buildMask(r.boxes_l, r.pad_w, r.pad_h);
    r.mask_r = buildMask(r.boxes_r, r.pad_w, r.pad_h);
    r.aligned_mask_l = buildMask(r.aligned_l, r.pad_w, r.pad_h);
    r.aligned_mask_r = buildMask(r.aligned_r, r.pad_w, r.pad_h);

    NodeP left = nn::constant(left_p);
    NodeP right = nn::constant(right_p);
    r.masked_l = nn::mulMask(left, r.mask_l);
    r.masked_r = nn::mulMask(right, r.mask_r);
    r.k_l = codec.key_enc_l.forward(r.masked_l);
    r.k_r = codec.key_enc_r.forward(r.masked_r);
    auto [f_l, f_r] = codec.global_enc.extract(left, right);
    r.g_l = codec.global_enc.compress(f_l, left, 0);
    r.g_r = codec.global_enc.compress(f_r, right, 1);
    return r;
}

DecodeResult decodePair(SemanticCodec& codec, const NodeP& k_hat_l, const NodeP& k_hat_r, const NodeP& g_hat_l,
                        const NodeP& g_hat_r, const EncodeResult& enc, FlowMode flow_mode) {
    DecodeResult d;
    d.s_hat_l = nn::mulMask(codec.key_dec_l.forward(k_hat_l), enc.aligned_mask_l);
    d.s_hat_r = nn::mulMask(codec.key_dec_r.forward(k_hat_r), enc.aligned_mask_r);

    if (flow_mode == FlowMode::ZeroStub) {
        d.flow_lr = zeroFlow(g_hat_l->value.w(), g_hat_l->value.h());
        d.flow_rl = zeroFlow(g_hat_l->value.w(), g_hat_l->value.h());
    } else {
        // flow_lr warps left features onto the right view; flow_rl the reverse.
        d.flow_lr = codec.flow.estimate(g_hat_r, g_hat_l);
        d.flow_rl = codec.flow.estimate(g_hat_l, g_hat_r);
    }
    NodeP f1_l = codec.global_dec_l.firstStage(g_hat_l);
    NodeP f1_r = codec.global_dec_r.firstStage(g_hat_r);
    NodeP f2_l = nn::warp(f1_r, d.flow_rl);
    NodeP f2_r = nn::warp(f1_l, d.flow_lr);
    d.f_hat_l = codec.global_dec_l.recover(f1_l, f2_l, g_hat_l);
    d.f_hat_r = codec.global_dec_r.recover(f1_r, f2_r, g_hat_r);

    d.out_l = codec.fusion_l.forward(d.s_hat_l, d.f_hat_l);
    d.out_r = codec.fusion_r.forward(d.s_hat_r, d.f_hat_r);

    auto finalize = [&](const NodeP& out) {
        Tensor img = cropTo(out->value, enc.orig_w, enc.orig_h);
        img.flat() = img.flat().min(1.0f).max(0.0f);
        return img;
    };
    d.image_l = finalize(d.out_l);
    d.image_r = finalize(d.out_r);
    return d;
}

// ---------------------------------------------------------------------------
// Transmit
// ---------------------------------------------------------------------------

TransmitResult transmitPair(SemanticCodec& codec, ChannelCodec* chan, const StereoPair& pair, Detector& detector,
                            const TransmitOptions& opts) {
    EncodeResult enc = encodePair(codec, pair, detector, opts.confidence_floor);
    const CodecConfig& cfg = codec.cfg;

    TransmitResult res;
    res.payload = packPayload(enc.k_l->value, enc.k_r->value, enc.g_l->value, enc.g_r->value, enc.aligned_l,
                              enc.aligned_r, cfg.n, cfg.m, enc.orig_w, enc.orig_h, enc.pad_w, enc.pad_h);
    const int rate = chan ? chan->config().rate_channels : 3;
    res.budget = channelUseBudget(res.payload.payloadElements(), opts.quant, rate);

    NodeP k_hat_l, k_hat_r, g_hat_l, g_hat_r;
    if (opts.channel.kind == ChannelKind::Noiseless) {
        // Perfect-communication path: payload as-is (optionally quantized).
        SemanticPayload p = res.payload;
        if (opts.quantize_payload) {
            auto roundTrip = [&](std::vector<float>& s) {
                if (s.empty()) return;
                Eigen::Map<Eigen::ArrayXf> m(s.data(), static_cast<Eigen::Index>(s.size()));
                QuantSideBand side;
                auto codes = quantize(m, opts.quant, side);
                m = dequantize(codes, opts.quant, side);
            };
            roundTrip(p.key_l);
            roundTrip(p.key_r);
            roundTrip(p.global_l);
            roundTrip(p.global_r);
        }
        UnpackedPayload u = unpackPayload(p);
        k_hat_l = nn::constant(u.k_l);
        k_hat_r = nn::constant(u.k_r);
        g_hat_l = nn::constant(u.g_l);
        g_hat_r = nn::constant(u.g_r);
    } else {
        if (!chan) throw StateError("transmitPair: channel codec required for noisy channels");
        auto sendStream = [&](const NodeP& a, const NodeP& b, uint64_t stream_tag) {
            NodeP xa = chan->encode(a, false);
            NodeP xb = chan->encode(b, false);
            Eigen::ArrayXf reals(xa->value.size() + xb->value.size());
            reals << xa->value.flat(), xb->value.flat();
            SymbolBlock blk = packSymbols(reals);
            ChannelConfig cc = opts.channel;
            cc.seed = opts.channel.seed ^ (0x9e3779b97f4a7c15ULL * (stream_tag + 1));
            SymbolBlock rx = applyChannel(blk, cc);
            res.channel_uses += static_cast<int64_t>(rx.symbols.size());
            Eigen::ArrayXf got = unpackSymbols(rx, reals.size());
            Tensor ta(a->value.w(), a->value.h(), xa->value.c());
            Tensor tb(b->value.w(), b->value.h(), xb->value.c());
            ta.flat() = got.head(xa->value.size());
            tb.flat() = got.tail(xb->value.size());
            return std::pair{chan->decode(nn::constant(ta), false), chan->decode(nn::constant(tb), false)};
        };
        std::tie(k_hat_l, k_hat_r) = sendStream(enc.k_l, enc.k_r, 0);
        std::tie(g_hat_l, g_hat_r) = sendStream(enc.g_l, enc.g_r, 1);
    }

    DecodeResult dec = decodePair(codec, k_hat_l, k_hat_r, g_hat_l, g_hat_r, enc, opts.flow_mode);
    res.image_l = dec.image_l;
    res.image_r = dec.image_r;
    res.mask_l = cropTo(enc.mask_l, enc.orig_w, enc.orig_h);
    res.mask_r = cropTo(enc.mask_r, enc.orig_w, enc.orig_h);
    return res;
}

}  // namespace semcom
