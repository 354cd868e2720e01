#pragma once

#include <complex>
#include <vector>

#include "semcom/nn.hpp"
#include "semcom/rng.hpp"
#include "semcom/tensor.hpp"

namespace semcom {

enum class ChannelKind { Noiseless, AWGN, Rayleigh };
enum class Coherence { PerSymbol, PerBlock };

struct ChannelConfig {
    ChannelKind kind = ChannelKind::Noiseless;
    double snr_db = 10.0;
    Coherence coherence = Coherence::PerSymbol;
    uint64_t seed = 0;
};

struct SymbolBlock {
    std::vector<std::complex<float>> symbols;
    float avg_power = 0.0f;   // pre-normalization mean |s|^2
    bool degenerate = false;  // all-zero block, sent unnormalized
    int erasures = 0;         // PerSymbol Rayleigh fades below threshold
};

// Pair consecutive reals into (I, Q); odd counts pad one zero real.
// Normalizes to unit mean symbol power unless the block is all-zero.
SymbolBlock packSymbols(const Eigen::ArrayXf& reals);
Eigen::ArrayXf unpackSymbols(const SymbolBlock& block, Eigen::Index real_count);

// Physical channel per config. Noiseless is the exact identity. AWGN adds
// circular complex Gaussian noise of variance 10^(-snr/10) per symbol.
// Rayleigh applies h ~ CN(0,1) then zero-forcing with perfect CSI.
SymbolBlock applyChannel(const SymbolBlock& x, const ChannelConfig& cfg);

// ---------------------------------------------------------------------------
// Learned channel codec (shared weights for the K and G streams)
// ---------------------------------------------------------------------------

struct ChannelCodecConfig {
    int rate_channels = 9;  // r
    int width = 64;
    int enc_depth = 3;  // normalized middle convs, encoder
    int dec_depth = 5;  // normalized middle convs, decoder
    bool use_norm = true;
};

class ChannelCodec {
public:
    explicit ChannelCodec(const ChannelCodecConfig& cfg);

    // 3 -> r channels, same spatial dims.
    nn::NodeP encode(const nn::NodeP& x, bool training);
    // r -> 3 channels.
    nn::NodeP decode(const nn::NodeP& y, bool training);

    std::vector<nn::Param*> params();
    std::vector<std::pair<Eigen::ArrayXf*, Eigen::ArrayXf*>> normState();  // (mean, var) per norm layer
    void initWeights(Rng& rng);
    const ChannelCodecConfig& config() const { return cfg_; }

private:
    ChannelCodecConfig cfg_;
    nn::Conv2d enc_in_, enc_out_, dec_in_, dec_out_;
    std::vector<std::unique_ptr<nn::Conv2d>> enc_mid_, dec_mid_;
    std::vector<std::unique_ptr<nn::SpatialNorm>> enc_norm_, dec_norm_;
};

// Differentiable ops used when training over the channel.
nn::NodeP powerNormalize(const nn::NodeP& x);           // unit mean pair-power over the flat tensor
nn::NodeP addNoise(const nn::NodeP& x, const Tensor& noise);

// Per-real-component Gaussian noise tensor at the variance implied by
// snr_db for unit-power complex symbols.
Tensor awgnNoiseLike(const Tensor& shape, double snr_db, Rng& rng);

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

struct QuantSpec {
    int bits = 6;
};

struct QuantSideBand {
    float min = 0.0f, max = 0.0f;
};

std::vector<uint16_t> quantize(const Eigen::ArrayXf& t, const QuantSpec& q, QuantSideBand& side);
Eigen::ArrayXf dequantize(const std::vector<uint16_t>& codes, const QuantSpec& q, const QuantSideBand& side);

// ---------------------------------------------------------------------------
// Channel-use accounting
// ---------------------------------------------------------------------------

struct ChannelUseBudget {
    int64_t payload_elements = 0;
    int64_t source_bits = 0;         // elements * bits
    int64_t learned_channel_uses = 0;  // ceil(elements * r/3 / 2)
    // Equivalent classical stacks at the given information bits per symbol.
    int64_t classical_symbols(double info_bits_per_symbol) const {
        return static_cast<int64_t>(std::ceil(static_cast<double>(source_bits) / info_bits_per_symbol));
    }
};

ChannelUseBudget channelUseBudget(int64_t payload_elements, const QuantSpec& q, int rate_channels);

}  // namespace semcom
