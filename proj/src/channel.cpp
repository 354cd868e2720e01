#include "semcom/channel.hpp"

#include <cmath>

namespace semcom {

using nn::NodeP;

SymbolBlock packSymbols(const Eigen::ArrayXf& reals) {
    SymbolBlock b;
    const Eigen::Index n = reals.size();
    const Eigen::Index n_sym = (n + 1) / 2;
    b.symbols.resize(static_cast<size_t>(n_sym));
    for (Eigen::Index i = 0; i < n_sym; ++i) {
        const float re = reals[2 * i];
        const float im = (2 * i + 1 < n) ? reals[2 * i + 1] : 0.0f;
        b.symbols[static_cast<size_t>(i)] = {re, im};
    }
    double power = 0.0;
    for (const auto& s : b.symbols) power += std::norm(s);
    power /= static_cast<double>(n_sym);
    b.avg_power = static_cast<float>(power);
    if (power <= 0.0) {
        b.degenerate = true;  // all-zero stream goes out unnormalized
        return b;
    }
    const float scale = static_cast<float>(1.0 / std::sqrt(power));
    for (auto& s : b.symbols) s *= scale;
    return b;
}

Eigen::ArrayXf unpackSymbols(const SymbolBlock& block, Eigen::Index real_count) {
    if (real_count > static_cast<Eigen::Index>(block.symbols.size()) * 2)
        throw DataError("unpackSymbols: truncated block (framing error)");
    if ((real_count + 1) / 2 != static_cast<Eigen::Index>(block.symbols.size()))
        throw DataError("unpackSymbols: length mismatch vs side-band (framing error)");
    Eigen::ArrayXf out(real_count);
    const float scale = block.degenerate ? 1.0f : std::sqrt(block.avg_power);
    for (Eigen::Index i = 0; i < real_count; ++i) {
        const auto& s = block.symbols[static_cast<size_t>(i / 2)];
        out[i] = ((i % 2 == 0) ? s.real() : s.imag()) * scale;
    }
    return out;
}

SymbolBlock applyChannel(const SymbolBlock& x, const ChannelConfig& cfg) {
    if (cfg.kind == ChannelKind::Noiseless) return x;
    SymbolBlock y = x;
    Rng rng(cfg.seed);
    const double sigma2 = std::pow(10.0, -cfg.snr_db / 10.0);  // per complex symbol
    const double comp_std = std::sqrt(sigma2 / 2.0);
    if (cfg.kind == ChannelKind::AWGN) {
        for (auto& s : y.symbols)
            s += std::complex<float>(static_cast<float>(rng.normal() * comp_std),
                                     static_cast<float>(rng.normal() * comp_std));
        return y;
    }
    // Rayleigh flat fading with perfect CSI + zero-forcing.
    constexpr double kFadeFloor = 1e-12;
    auto drawH = [&rng]() {
        return std::complex<double>(rng.normal() * std::sqrt(0.5), rng.normal() * std::sqrt(0.5));
    };
    // ZF output (hs + w)/h written as s + w/h: identical algebra, exact
    // recovery as the noise vanishes.
    if (cfg.coherence == Coherence::PerBlock) {
        std::complex<double> h = drawH();
        while (std::abs(h) < kFadeFloor) h = drawH();  // re-draw counted as one event
        for (auto& s : y.symbols) {
            std::complex<double> w(rng.normal() * comp_std, rng.normal() * comp_std);
            s += static_cast<std::complex<float>>(w / h);
        }
        return y;
    }
    for (auto& s : y.symbols) {
        std::complex<double> h = drawH();
        std::complex<double> w(rng.normal() * comp_std, rng.normal() * comp_std);
        if (std::abs(h) < kFadeFloor) {
            s = {0.0f, 0.0f};  // erasure
            ++y.erasures;
            continue;
        }
        s += static_cast<std::complex<float>>(w / h);
    }
    return y;
}

// ---------------------------------------------------------------------------
// ChannelCodec
// ---------------------------------------------------------------------------

ChannelCodec::ChannelCodec(const ChannelCodecConfig& cfg)
    : cfg_(cfg),
      enc_in_(3, cfg.width, 3, "chan.enc_in"),
      enc_out_(cfg.width, cfg.rate_channels, 3, "chan.enc_out"),
      dec_in_(cfg.rate_channels, cfg.width, 3, "chan.dec_in"),
      dec_out_(cfg.width, 3, 3, "chan.dec_out") {
    if (cfg.rate_channels < 1) throw ConfigError("ChannelCodec: rate_channels must be >= 1");
    for (int i = 0; i < cfg.enc_depth; ++i) {
        enc_mid_.push_back(std::make_unique<nn::Conv2d>(cfg.width, cfg.width, 3, "chan.enc_mid" + std::to_string(i)));
        if (cfg.use_norm) enc_norm_.push_back(std::make_unique<nn::SpatialNorm>(cfg.width, "chan.enc_norm" + std::to_string(i)));
    }
    for (int i = 0; i < cfg.dec_depth; ++i) {
        dec_mid_.push_back(std::make_unique<nn::Conv2d>(cfg.width, cfg.width, 3, "chan.dec_mid" + std::to_string(i)));
        if (cfg.use_norm) dec_norm_.push_back(std::make_unique<nn::SpatialNorm>(cfg.width, "chan.dec_norm" + std::to_string(i)));
    }
}

NodeP ChannelCodec::encode(const NodeP& x, bool training) {
    NodeP y = nn::relu(enc_in_.forward(x));
    for (size_t i = 0; i < enc_mid_.size(); ++i) {
        y = enc_mid_[i]->forward(y);
        if (cfg_.use_norm) y = enc_norm_[i]->forward(y, training);
        y = nn::relu(y);
    }
    return enc_out_.forward(y);
}

NodeP ChannelCodec::decode(const NodeP& y, bool training) {
    NodeP z = nn::relu(dec_in_.forward(y));
    for (size_t i = 0; i < dec_mid_.size(); ++i) {
        z = dec_mid_[i]->forward(z);
        if (cfg_.use_norm) z = dec_norm_[i]->forward(z, training);
        z = nn::relu(z);
    }
    return dec_out_.forward(z);
}

std::vector<nn::Param*> ChannelCodec::params() {
    std::vector<nn::Param*> p{&enc_in_.weight(),  &enc_in_.bias(),  &enc_out_.weight(), &enc_out_.bias(),
                              &dec_in_.weight(),  &dec_in_.bias(),  &dec_out_.weight(), &dec_out_.bias()};
    for (auto& c : enc_mid_) {
        p.push_back(&c->weight());
        p.push_back(&c->bias());
    }
    for (auto& c : dec_mid_) {
        p.push_back(&c->weight());
        p.push_back(&c->bias());
    }
    for (auto& nrm : enc_norm_)
        for (auto* q : nrm->params()) p.push_back(q);
    for (auto& nrm : dec_norm_)
        for (auto* q : nrm->params()) p.push_back(q);
    return p;
}

std::vector<std::pair<Eigen::ArrayXf*, Eigen::ArrayXf*>> ChannelCodec::normState() {
    std::vector<std::pair<Eigen::ArrayXf*, Eigen::ArrayXf*>> s;
    for (auto& nrm : enc_norm_) s.emplace_back(&nrm->runningMean(), &nrm->runningVar());
    for (auto& nrm : dec_norm_) s.emplace_back(&nrm->runningMean(), &nrm->runningVar());
    return s;
}

void ChannelCodec::initWeights(Rng& rng) {
    auto initConv = [&rng](nn::Conv2d& c) { c.initHe(rng); };
    initConv(enc_in_);
    initConv(enc_out_);
    initConv(dec_in_);
    initConv(dec_out_);
    for (auto& c : enc_mid_) initConv(*c);
    for (auto& c : dec_mid_) initConv(*c);
}

// ---------------------------------------------------------------------------
// Differentiable channel ops
// ---------------------------------------------------------------------------

NodeP powerNormalize(const NodeP& x) {
    const Eigen::Index n = x->value.size();
    const Eigen::Index n_sym = (n + 1) / 2;
    const float power = x->value.flat().square().sum() / static_cast<float>(n_sym);
    if (power <= 0.0f) return x;  // degenerate block passes through
    const float inv_s = 1.0f / std::sqrt(power);
    Tensor out = x->value;
    out.flat() *= inv_s;
    auto node = nn::makeNode(std::move(out), true);
    node->parents = {x};
    node->backprop = [x, inv_s, n_sym](nn::Node& nd) {
        // y = x/s with s^2 = sum(x^2)/n_sym: dL/dx = g/s - (g.x) x / (s^3 n_sym)
        const Eigen::ArrayXf& xv = x->value.flat();
        const Eigen::ArrayXf& g = nd.grad.flat();
        const float dot = (g * xv).sum();
        x->ensureGrad().flat() += inv_s * g - (inv_s * inv_s * inv_s / static_cast<float>(n_sym)) * dot * xv;
    };
    return node;
}

NodeP addNoise(const NodeP& x, const Tensor& noise) {
    requireSameShape(x->value, noise, "addNoise");
    Tensor out = x->value;
    out.flat() += noise.flat();
    auto node = nn::makeNode(std::move(out), true);
    node->parents = {x};
    node->backprop = [x](nn::Node& nd) { x->ensureGrad().flat() += nd.grad.flat(); };
    return node;
}

Tensor awgnNoiseLike(const Tensor& shape, double snr_db, Rng& rng) {
    Tensor noise(shape.w(), shape.h(), shape.c());
    const double comp_std = std::sqrt(std::pow(10.0, -snr_db / 10.0) / 2.0);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.flat()[i] = static_cast<float>(rng.normal() * comp_std);
    return noise;
}

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

std::vector<uint16_t> quantize(const Eigen::ArrayXf& t, const QuantSpec& q, QuantSideBand& side) {
    if (q.bits < 1 || q.bits > 16) throw ConfigError("quantize: bits must be in [1,16]");
    if (!t.isFinite().all()) throw DataError("quantize: non-finite values");
    side.min = t.minCoeff();
    side.max = t.maxCoeff();
    const int levels = (1 << q.bits) - 1;
    const float range = side.max - side.min;
    std::vector<uint16_t> codes(static_cast<size_t>(t.size()));
    if (range <= 0.0f) return codes;  // constant tensor: all zeros, exact round trip
    const float scale = static_cast<float>(levels) / range;
    for (Eigen::Index i = 0; i < t.size(); ++i)
        codes[static_cast<size_t>(i)] = static_cast<uint16_t>(std::lround((t[i] - side.min) * scale));
    return codes;
}

Eigen::ArrayXf dequantize(const std::vector<uint16_t>& codes, const QuantSpec& q, const QuantSideBand& side) {
    const int levels = (1 << q.bits) - 1;
    Eigen::ArrayXf out(static_cast<Eigen::Index>(codes.size()));
    const float range = side.max - side.min;
    if (range <= 0.0f) {
        out.setConstant(side.min);
        return out;
    }
    const float step = range / static_cast<float>(levels);
    for (size_t i = 0; i < codes.size(); ++i) out[static_cast<Eigen::Index>(i)] = side.min + step * codes[i];
    return out;
}

ChannelUseBudget channelUseBudget(int64_t payload_elements, const QuantSpec& q, int rate_channels) {
    ChannelUseBudget b;
    b.payload_elements = payload_elements;
    b.source_bits = payload_elements * q.bits;
    b.learned_channel_uses =
        (payload_elements * rate_channels + 3 * 2 - 1) / (3 * 2);  // ceil(elements * r/3 / 2)
    return b;
}

}  // namespace semcom
