// Acceptance suite: one pass/fail line per criterion. Usage: acceptance <cli-binary>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "semcom/config.hpp"
#include "semcom/metrics.hpp"
#include "semcom/train.hpp"

using namespace semcom;
namespace fs = std::filesystem;

namespace {

double nowSeconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

Tensor randomTensor(int w, int h, int c, Rng& rng, float lo = 0.0f, float hi = 1.0f) {
    Tensor t(w, h, c);
    for (Eigen::Index i = 0; i < t.size(); ++i)
        t.flat()[i] = lo + (hi - lo) * static_cast<float>(rng.uniform());
    return t;
}

// ---------------------------------------------------------------------------
// 1. Shuffle bijectivity
// ---------------------------------------------------------------------------

bool criterion1() {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        for (int n = 1; n <= 4; ++n) {
            const int w = n * rng.uniformInt(1, 6);
            const int h = n * rng.uniformInt(1, 6);
            const int c = rng.uniformInt(1, 4);
            Tensor t = randomTensor(w, h, c, rng, -1.0f, 1.0f);
            Tensor down = nn::pixelUnshuffleT(t, n);
            Tensor back = nn::pixelShuffleT(down, n);
            if ((back.flat() - t.flat()).abs().maxCoeff() != 0.0f) return false;
            // converse direction on the compressed layout
            Tensor up = nn::pixelShuffleT(down, n);
            if ((nn::pixelUnshuffleT(up, n).flat() - down.flat()).abs().maxCoeff() != 0.0f) return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 2. Warp identities
// ---------------------------------------------------------------------------

bool criterion2() {
    Rng rng(202);
    for (int trial = 0; trial < 20; ++trial) {
        const int w = rng.uniformInt(8, 24), h = rng.uniformInt(8, 24), c = rng.uniformInt(1, 3);
        Tensor src = randomTensor(w, h, c, rng);

        // zero flow: exact identity
        Tensor zero(w, h, 2);
        Tensor warped = nn::warpT(src, zero);
        if ((warped.flat() - src.flat()).abs().maxCoeff() != 0.0f) return false;

        // integer shift matches a hand-shift oracle on the interior
        const int dx = rng.uniformInt(-3, 3), dy = rng.uniformInt(-3, 3);
        Tensor flow(w, h, 2);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                flow(x, y, 0) = static_cast<float>(dx);
                flow(x, y, 1) = static_cast<float>(dy);
            }
        Tensor shifted = nn::warpT(src, flow);
        for (int z = 0; z < c; ++z)
            for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y)
                for (int x = std::max(0, -dx); x < std::min(w, w - dx); ++x)
                    if (std::abs(shifted(x, y, z) - src(x + dx, y + dy, z)) > 1e-6f) return false;

        // linearity in the sampled values
        Tensor a = randomTensor(w, h, c, rng), b = randomTensor(w, h, c, rng);
        Tensor fr = randomTensor(w, h, 2, rng, -2.0f, 2.0f);
        Tensor sum(w, h, c);
        sum.flat() = 2.0f * a.flat() + 3.0f * b.flat();
        Tensor lhs = nn::warpT(sum, fr);
        Tensor rhs(w, h, c);
        rhs.flat() = 2.0f * nn::warpT(a, fr).flat() + 3.0f * nn::warpT(b, fr).flat();
        if ((lhs.flat() - rhs.flat()).abs().maxCoeff() > 1e-6f) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// 3. Channel calibration
// ---------------------------------------------------------------------------

bool criterion3() {
    const Eigen::Index n_reals = 2'000'000;  // 1e6 complex symbols
    Rng rng(303);
    Eigen::ArrayXf reals(n_reals);
    for (Eigen::Index i = 0; i < n_reals; ++i) reals[i] = static_cast<float>(rng.normal());
    SymbolBlock x = packSymbols(reals);

    for (double target : {6.0, 10.0, 14.0, 18.0}) {
        ChannelConfig cfg;
        cfg.kind = ChannelKind::AWGN;
        cfg.snr_db = target;
        cfg.seed = 303 + static_cast<uint64_t>(target);
        SymbolBlock y = applyChannel(x, cfg);
        double sig = 0.0, noise = 0.0;
        for (size_t i = 0; i < x.symbols.size(); ++i) {
            sig += std::norm(x.symbols[i]);
            noise += std::norm(y.symbols[i] - x.symbols[i]);
        }
        const double snr_emp = 10.0 * std::log10(sig / noise);
        if (std::abs(snr_emp - target) > 0.1) {
            std::fprintf(stderr, "  awgn target %.0f dB measured %.4f dB\n", target, snr_emp);
            return false;
        }
    }

    ChannelConfig ray;
    ray.kind = ChannelKind::Rayleigh;
    ray.snr_db = 300.0;
    ray.seed = 777;
    for (Coherence coh : {Coherence::PerBlock, Coherence::PerSymbol}) {
        ray.coherence = coh;
        SymbolBlock y = applyChannel(x, ray);
        for (size_t i = 0; i < x.symbols.size(); ++i)
            if (std::abs(y.symbols[i] - x.symbols[i]) > 1e-9f) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// 4. Loss/gradient suite
// ---------------------------------------------------------------------------

bool criterion4() {
    Rng rng(404);
    for (int trial = 0; trial < 50; ++trial) {
        const int w = rng.uniformInt(3, 6), h = rng.uniformInt(3, 6);
        Tensor pred = randomTensor(w, h, 3, rng);
        Tensor target = randomTensor(w, h, 3, rng);
        Tensor mask(w, h, 1);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) mask(x, y, 0) = rng.uniform() < 0.5 ? 1.0f : 0.0f;

        for (LossKind kind : {LossKind::Charbonnier, LossKind::MaskedCharbonnier,
                              LossKind::HybridMaskedCharbonnier, LossKind::MeanSquaredError}) {
            LossSpec spec;
            spec.kind = kind;
            spec.epsilon = 1e-2f;
            const bool uses_mask =
                kind == LossKind::MaskedCharbonnier || kind == LossKind::HybridMaskedCharbonnier;
            const Tensor* m = uses_mask ? &mask : nullptr;

            nn::NodeP in = nn::makeNode(pred, true);
            nn::backward(lossNode(spec, in, target, m));

            // independent double-precision oracle of all four loss formulas
            std::vector<double> pv(pred.flat().data(), pred.flat().data() + pred.size());
            auto evalAt = [&](const std::vector<double>& p) -> double {
                const double e2 = static_cast<double>(spec.epsilon) * spec.epsilon;
                double sq = 0.0, msq = 0.0;
                const Eigen::Index plane = static_cast<Eigen::Index>(w) * h;
                for (Eigen::Index k = 0; k < pred.size(); ++k) {
                    const double d = static_cast<double>(target.flat()[k]) - p[static_cast<size_t>(k)];
                    sq += d * d;
                    const double mm = mask.flat()[k % plane];
                    msq += (mm * d) * (mm * d);
                }
                switch (kind) {
                    case LossKind::Charbonnier: return std::sqrt(sq + e2);
                    case LossKind::MaskedCharbonnier: return std::sqrt(msq + e2);
                    case LossKind::HybridMaskedCharbonnier:
                        return std::sqrt(msq + e2) + static_cast<double>(spec.lambda) * std::sqrt(sq + e2);
                    default: return sq / static_cast<double>(pred.size());
                }
            };
            for (Eigen::Index i = 0; i < pred.size(); i += std::max<Eigen::Index>(1, pred.size() / 8)) {
                const double h_step = 1e-4;
                std::vector<double> pp = pv, pm = pv;
                pp[static_cast<size_t>(i)] += h_step;
                pm[static_cast<size_t>(i)] -= h_step;
                const double fd = (evalAt(pp) - evalAt(pm)) / (2.0 * h_step);
                const double g = in->grad.flat()[i];
                const double denom = std::max({std::abs(fd), std::abs(g), 1e-3});
                if (std::abs(fd - g) / denom > 1e-4) {
                    std::fprintf(stderr, "  loss kind %d idx %ld: fd %.8g grad %.8g\n",
                                 static_cast<int>(kind), static_cast<long>(i), fd, g);
                    return false;
                }
            }
        }

        // exact identities: floor is epsilon on identical inputs, hybrid is
        // masked + lambda * plain
        if (std::abs(charbonnierLoss(pred, pred, 1e-3f) - static_cast<double>(1e-3f)) > 1e-12) return false;
        const double hyb = hybridMaskedCharbonnierLoss(pred, target, mask, 1e-3f, 0.5f);
        const double parts =
            maskedCharbonnierLoss(pred, target, mask, 1e-3f) + 0.5 * charbonnierLoss(pred, target, 1e-3f);
        if (hyb != parts) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// 5. Metric oracles
// ---------------------------------------------------------------------------

std::optional<double> apBruteForce(const std::vector<FrameDetections>& frames, double thr, DifficultyRegime regime) {
    const int want = static_cast<int>(regime);
    auto rank = [](const BBox2D& b) { return static_cast<int>(classifyDifficulty(b)); };
    struct D {
        float conf;
        int f, i;
    };
    std::vector<D> all;
    int gt_total = 0;
    for (size_t f = 0; f < frames.size(); ++f) {
        for (size_t i = 0; i < frames[f].detections.boxes.size(); ++i)
            all.push_back({frames[f].detections.boxes[i].confidence, static_cast<int>(f), static_cast<int>(i)});
        for (const auto& g : frames[f].ground_truth.boxes)
            if (rank(g) <= want) ++gt_total;
    }
    if (gt_total == 0) return std::nullopt;
    std::stable_sort(all.begin(), all.end(), [](const D& a, const D& b) { return a.conf > b.conf; });
    std::vector<std::vector<bool>> used(frames.size());
    for (size_t f = 0; f < frames.size(); ++f) used[f].assign(frames[f].ground_truth.boxes.size(), false);
    std::vector<double> rec, prec;
    int tp = 0, fp = 0;
    for (const D& d : all) {
        const auto& gts = frames[d.f].ground_truth.boxes;
        const BBox2D& db = frames[d.f].detections.boxes[d.i];
        int best = -1;
        double best_iou = 0.0;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (used[d.f][g]) continue;
            const double v = iou(db, gts[g]);
            if (v > best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0 && best_iou >= thr) {
            used[d.f][static_cast<size_t>(best)] = true;
            if (rank(gts[static_cast<size_t>(best)]) <= want)
                ++tp;
            else
                continue;
        } else {
            ++fp;
        }
        rec.push_back(static_cast<double>(tp) / gt_total);
        prec.push_back(static_cast<double>(tp) / (tp + fp));
    }
    auto envelope = [&](double r) {
        double b = 0.0;
        for (size_t i = 0; i < rec.size(); ++i)
            if (rec[i] >= r) b = std::max(b, prec[i]);
        return b;
    };
    double sum = 0.0;
    for (int i = 1; i <= 40; ++i) sum += envelope(i / 40.0);
    return 100.0 * sum / 40.0;
}

bool criterion5() {
    // PSNR exactly 20.0 dB: mse = 1/64 (one unit error over 64 px), max = 1.25
    // -> max^2/mse = 100 exactly.
    Tensor a(8, 8, 1), b(8, 8, 1);
    b(3, 4, 0) = 1.0f;
    const auto p = psnr(a, b, 1.25);
    if (!p || std::abs(*p - 20.0) > 1e-9) return false;
    if (psnr(a, a).has_value()) return false;

    // IoU hand cases
    BBox2D x{0, 0, 2, 2, 1}, y{1, 0, 3, 2, 1}, z{5, 5, 6, 6, 1};
    if (std::abs(iou(x, y) - 1.0 / 3.0) > 1e-12) return false;
    if (iou(x, x) != 1.0 || iou(x, z) != 0.0) return false;

    // SSIM(i, i) = 1
    Rng srng(55);
    Tensor img = randomTensor(24, 24, 3, srng);
    if (std::abs(ssim(img, img) - 1.0) > 1e-12) return false;

    // ap2d vs brute force on 100 random instances (<= 20 boxes each)
    Rng rng(505);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<FrameDetections> frames(static_cast<size_t>(rng.uniformInt(1, 4)));
        int budget = 20;
        for (auto& f : frames) {
            const int ng = std::min(budget, rng.uniformInt(0, 5));
            budget -= ng;
            const int nd = std::min(budget, rng.uniformInt(0, 6));
            budget -= nd;
            auto mkBox = [&rng](bool gt) {
                BBox2D b;
                b.u1 = static_cast<float>(rng.uniformInt(0, 150));
                b.v1 = static_cast<float>(rng.uniformInt(0, 80));
                b.u2 = b.u1 + static_cast<float>(rng.uniformInt(10, 50));
                b.v2 = b.v1 + static_cast<float>(rng.uniformInt(15, 60));
                if (gt) {
                    b.occlusion = rng.uniformInt(0, 2);
                    b.truncation = static_cast<float>(rng.uniform()) * 0.5f;
                    b.confidence = 1.0f;
                } else {
                    b.confidence = static_cast<float>(rng.uniform());
                }
                return b;
            };
            for (int i = 0; i < ng; ++i) f.ground_truth.boxes.push_back(mkBox(true));
            for (int i = 0; i < nd; ++i) f.detections.boxes.push_back(mkBox(false));
        }
        for (DifficultyRegime reg : {DifficultyRegime::Easy, DifficultyRegime::Moderate, DifficultyRegime::Hard}) {
            APResult r = ap2d(frames, 0.5, reg);
            auto oracle = apBruteForce(frames, 0.5, reg);
            if (r.ap.has_value() != oracle.has_value()) return false;
            if (oracle && std::abs(*r.ap - *oracle) > 1e-9) return false;
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 6. Compression accounting
// ---------------------------------------------------------------------------

bool criterion6() {
    struct Config {
        int n, n1, n2, m;
    };
    for (const Config c : {Config{1, 1, 1, 6}, Config{2, 2, 1, 6}, Config{4, 2, 2, 8}}) {
        CodecConfig cfg;
        cfg.n = c.n;
        cfg.n1 = c.n1;
        cfg.n2 = c.n2;
        cfg.m = c.m;
        cfg.f = 4;
        cfg.enc_depth = 1;
        cfg.dec_depth = 1;
        cfg.fusion_width = 4;
        cfg.flow_width = 4;
        SemanticCodec codec(cfg);
        codec.zeroWeights();
        OracleDetector det;

        SyntheticSpec sspec;
        sspec.width = 96;
        sspec.height = 96;
        sspec.objects = 2;
        for (int frame = 0; frame < 50; ++frame) {
            StereoPair pair = synthStereo(static_cast<uint64_t>(6000 + frame), sspec);
            EncodeResult enc = encodePair(codec, pair, det);
            SemanticPayload payload =
                packPayload(enc.k_l->value, enc.k_r->value, enc.g_l->value, enc.g_r->value, enc.aligned_l,
                            enc.aligned_r, cfg.n, cfg.m, enc.orig_w, enc.orig_h, enc.pad_w, enc.pad_h);
            const double actual = effectiveCompressionRatio(payload);

            // independent rho: rasterize the grid-aligned union of gt boxes
            auto unionArea = [&](const DetectionSet& gt) {
                std::vector<uint8_t> grid(96 * 96, 0);
                for (BBox2D b : gt.boxes) {
                    b.u1 = std::max(0.0f, b.u1);
                    b.v1 = std::max(0.0f, b.v1);
                    b.u2 = std::min(96.0f, b.u2);
                    b.v2 = std::min(96.0f, b.v2);
                    if (b.u1 >= b.u2 || b.v1 >= b.v2) continue;
                    const int x0 = c.n * static_cast<int>(std::floor(b.u1 / c.n));
                    const int y0 = c.n * static_cast<int>(std::floor(b.v1 / c.n));
                    const int x1 = std::min(96, c.n * static_cast<int>(std::ceil(b.u2 / c.n)));
                    const int y1 = std::min(96, c.n * static_cast<int>(std::ceil(b.v2 / c.n)));
                    for (int yy = y0; yy < y1; ++yy)
                        for (int xx = x0; xx < x1; ++xx) grid[static_cast<size_t>(yy * 96 + xx)] = 1;
                }
                int64_t area = 0;
                for (uint8_t v : grid) area += v;
                return area;
            };
            const double rho = static_cast<double>(unionArea(*pair.gt_left) + unionArea(*pair.gt_right)) /
                               (2.0 * 96 * 96);
            const double expect = 1.0 / (rho / (c.n * c.n) + 1.0 / (c.m * c.m));
            if (std::abs(actual - expect) / expect > 0.02) {
                std::fprintf(stderr, "  n=%d m=%d frame %d: actual %.4f expected %.4f\n", c.n, c.m, frame, actual,
                             expect);
                return false;
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 7. Zero-weight pipeline oracle
// ---------------------------------------------------------------------------

Tensor refReflectPad(const Tensor& t, int W, int H) {
    Tensor out(W, H, t.c());
    auto mirror = [](int i, int n) { return i < n ? i : std::max(0, 2 * n - 2 - i); };
    for (int z = 0; z < t.c(); ++z)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) out(x, y, z) = t(mirror(x, t.w()), mirror(y, t.h()), z);
    return out;
}

Tensor refBlockDown(const Tensor& t, int n) {
    Tensor out(t.w() / n, t.h() / n, t.c());
    for (int z = 0; z < t.c(); ++z)
        for (int y = 0; y < out.h(); ++y)
            for (int x = 0; x < out.w(); ++x) {
                float acc = 0.0f;
                for (int dy = 0; dy < n; ++dy)
                    for (int dx = 0; dx < n; ++dx) acc += t(x * n + dx, y * n + dy, z);
                out(x, y, z) = acc / static_cast<float>(n * n);
            }
    return out;
}

Tensor refBilinUp(const Tensor& t, int n) {
    if (n == 1) return t;
    Tensor out(t.w() * n, t.h() * n, t.c());
    for (int z = 0; z < t.c(); ++z)
        for (int y = 0; y < out.h(); ++y)
            for (int x = 0; x < out.w(); ++x) {
                float sx = (x + 0.5f) / n - 0.5f, sy = (y + 0.5f) / n - 0.5f;
                sx = std::clamp(sx, 0.0f, static_cast<float>(t.w() - 1));
                sy = std::clamp(sy, 0.0f, static_cast<float>(t.h() - 1));
                const int x0 = std::min(static_cast<int>(sx), t.w() - 2 >= 0 ? t.w() - 2 : 0);
                const int y0 = std::min(static_cast<int>(sy), t.h() - 2 >= 0 ? t.h() - 2 : 0);
                const float wx = sx - x0, wy = sy - y0;
                const int x1 = std::min(x0 + 1, t.w() - 1), y1 = std::min(y0 + 1, t.h() - 1);
                out(x, y, z) = (1 - wx) * (1 - wy) * t(x0, y0, z) + wx * (1 - wy) * t(x1, y0, z) +
                               (1 - wx) * wy * t(x0, y1, z) + wx * wy * t(x1, y1, z);
            }
    return out;
}

bool criterion7() {
    CodecConfig cfg;
    cfg.n = 2;
    cfg.n1 = 2;
    cfg.n2 = 1;
    cfg.m = 6;
    cfg.f = 4;
    cfg.enc_depth = 1;
    cfg.dec_depth = 1;
    cfg.fusion_width = 4;
    cfg.flow_width = 4;
    SemanticCodec codec(cfg);
    codec.zeroWeights();
    OracleDetector det;

    SyntheticSpec sspec;
    sspec.width = 50;  // forces reflect padding to 72 x 48
    sspec.height = 40;
    sspec.objects = 2;
    for (int frame = 0; frame < 10; ++frame) {
        StereoPair pair = synthStereo(static_cast<uint64_t>(7000 + frame), sspec);
        TransmitOptions opts;
        opts.channel.kind = ChannelKind::Noiseless;
        opts.flow_mode = FlowMode::Pyramid;
        TransmitResult res = transmitPair(codec, nullptr, pair, det, opts);

        const int pad_w = 72, pad_h = 48;
        for (int view = 0; view < 2; ++view) {
            const Tensor& src = view == 0 ? pair.left : pair.right;
            const DetectionSet& gt = view == 0 ? *pair.gt_left : *pair.gt_right;
            const Tensor& got = view == 0 ? res.image_l : res.image_r;

            // reference masks: raw box union and its n-grid expansion
            Tensor mask(pad_w, pad_h, 1), amask(pad_w, pad_h, 1);
            for (BBox2D b : gt.boxes) {
                b.u1 = std::max(0.0f, b.u1);
                b.v1 = std::max(0.0f, b.v1);
                b.u2 = std::min(50.0f, b.u2);
                b.v2 = std::min(40.0f, b.v2);
                if (b.u1 >= b.u2 || b.v1 >= b.v2) continue;
                for (int y = static_cast<int>(std::floor(b.v1)); y < static_cast<int>(std::ceil(b.v2)); ++y)
                    for (int x = static_cast<int>(std::floor(b.u1)); x < static_cast<int>(std::ceil(b.u2)); ++x)
                        mask(x, y, 0) = 1.0f;
                const int x0 = 2 * static_cast<int>(std::floor(b.u1 / 2));
                const int y0 = 2 * static_cast<int>(std::floor(b.v1 / 2));
                const int x1 = 2 * static_cast<int>(std::ceil(b.u2 / 2));
                const int y1 = 2 * static_cast<int>(std::ceil(b.v2 / 2));
                for (int y = y0; y < y1; ++y)
                    for (int x = x0; x < x1; ++x) amask(x, y, 0) = 1.0f;
            }

            Tensor padded = refReflectPad(src, pad_w, pad_h);
            Tensor masked = padded;
            for (int z = 0; z < 3; ++z)
                for (int y = 0; y < pad_h; ++y)
                    for (int x = 0; x < pad_w; ++x) masked(x, y, z) *= mask(x, y, 0);

            // key path: block down by n, bilinear up through the (n1, n2) stages,
            // clipped to the aligned union; global path: block down / bilinear up by m
            Tensor key = refBilinUp(refBilinUp(refBlockDown(masked, 2), 2), 1);
            for (int z = 0; z < 3; ++z)
                for (int y = 0; y < pad_h; ++y)
                    for (int x = 0; x < pad_w; ++x) key(x, y, z) *= amask(x, y, 0);
            Tensor global = refBilinUp(refBlockDown(padded, 6), 6);

            for (int z = 0; z < 3; ++z)
                for (int y = 0; y < 40; ++y)
                    for (int x = 0; x < 50; ++x) {
                        const float expect = std::clamp(key(x, y, z) + global(x, y, z), 0.0f, 1.0f);
                        if (std::abs(expect - got(x, y, z)) > 1e-6f) {
                            std::fprintf(stderr, "  frame %d view %d px (%d,%d,%d): got %.7f expected %.7f\n",
                                         frame, view, x, y, z, got(x, y, z), expect);
                            return false;
                        }
                    }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// 8 + 9. Training smoke / trend and SNR monotonicity
// ---------------------------------------------------------------------------

struct SmokeResult {
    bool ok = false;
    CodecConfig cfg;
    std::shared_ptr<SemanticCodec> codec;
    std::shared_ptr<ChannelCodec> chan;
    std::vector<StereoPair> data;
};

double meanPsnr(SemanticCodec& codec, ChannelCodec* chan, const std::vector<StereoPair>& frames,
                const TransmitOptions& opts) {
    OracleDetector det;
    double acc = 0.0;
    int count = 0;
    for (const StereoPair& pair : frames) {
        TransmitResult res = transmitPair(codec, chan, pair, det, opts);
        acc += psnr(pair.left, res.image_l).value_or(99.0);  // identical counts as excellent
        acc += psnr(pair.right, res.image_r).value_or(99.0);
        count += 2;
    }
    return acc / count;
}

SmokeResult criterion8() {
    SmokeResult out;
    CodecConfig cfg;
    cfg.n = 2;
    cfg.n1 = 2;
    cfg.n2 = 1;
    cfg.m = 6;
    cfg.f = 8;
    cfg.enc_depth = 4;
    cfg.dec_depth = 4;
    cfg.fusion_width = 8;
    cfg.flow_width = 8;
    out.cfg = cfg;

    SyntheticSpec sspec;
    sspec.width = 64;
    sspec.height = 64;
    sspec.objects = 2;
    for (int i = 0; i < 32; ++i) out.data.push_back(synthStereo(static_cast<uint64_t>(8000 + i), sspec));

    out.codec = std::make_shared<SemanticCodec>(cfg);
    Rng init(81);
    out.codec->initWeights(init);
    ChannelCodecConfig ccfg;
    ccfg.width = 8;
    ccfg.rate_channels = 4;
    ccfg.enc_depth = 1;
    ccfg.dec_depth = 1;
    out.chan = std::make_shared<ChannelCodec>(ccfg);
    Rng cinit(82);
    out.chan->initWeights(cinit);

    // baseline: untouched residual paths (fresh init == analytic down/up composite)
    std::vector<StereoPair> eval_frames(out.data.begin(), out.data.begin() + 8);
    TransmitOptions noiseless;
    noiseless.channel.kind = ChannelKind::Noiseless;
    SemanticCodec baseline_codec(cfg);
    baseline_codec.zeroWeights();
    const double baseline = meanPsnr(baseline_codec, nullptr, eval_frames, noiseless);

    TrainState state(*out.codec, 83, out.chan.get());
    ChannelConfig train_chan;
    train_chan.kind = ChannelKind::AWGN;
    for (int stage = 1; stage <= 5; ++stage) {
        runStage(StageSchedule::defaults(stage, 2), state, out.data, train_chan);
        if (stage == 4) {
            const double trained = meanPsnr(*out.codec, nullptr, eval_frames, noiseless);
            std::fprintf(stderr, "  stage-4 psnr %.3f dB vs baseline %.3f dB\n", trained, baseline);
            if (trained < baseline + 1.0) return out;
        }
    }
    for (const LossRecord& rec : state.history)
        if (!std::isfinite(rec.loss)) return out;

    // flow trend: the pyramid trained on uniform-shift pairs recovers the shift
    {
        CodecConfig fcfg = cfg;
        SemanticCodec fcodec(fcfg);
        Rng frng(84);
        fcodec.initWeights(frng);
        std::vector<StereoPair> shifts;
        for (int i = 0; i < 4; ++i) shifts.push_back(synthShiftPair(static_cast<uint64_t>(90 + i), 32, 32, 2.0f, -1.0f));
        nn::Adam opt;
        const std::vector<std::pair<std::vector<nn::Param*>, float>> groups{{fcodec.flowParams(), 2e-3f}};
        for (int step = 0; step < 240; ++step) {
            const StereoPair& p = shifts[static_cast<size_t>(step) % shifts.size()];
            nn::NodeP left = nn::constant(p.left);
            nn::NodeP flow = fcodec.flow.estimate(nn::constant(p.right), left);
            nn::NodeP warped = nn::warp(left, flow);
            nn::NodeP loss = nn::charbonnier(warped, p.right, 1e-3f);
            nn::backward(loss);
            opt.step(groups);
            opt.zeroGrad(fcodec.flowParams());
        }
        const StereoPair& p = shifts[0];
        nn::NodeP flow = fcodec.flow.estimate(nn::constant(p.right), nn::constant(p.left));
        double err = 0.0;
        int count = 0;
        for (int y = 6; y < 26; ++y)
            for (int x = 6; x < 26; ++x) {
                err += std::abs(flow->value(x, y, 0) - (-2.0f));
                err += std::abs(flow->value(x, y, 1) - 1.0f);
                count += 2;
            }
        err /= count;
        std::fprintf(stderr, "  flow mean interior error %.3f px\n", err);
        if (err > 0.5) return out;
    }

    out.ok = true;
    return out;
}

bool criterion9(SmokeResult& smoke) {
    if (!smoke.ok) return false;
    std::vector<StereoPair> eval_frames(smoke.data.begin(), smoke.data.begin() + 8);
    auto run = [&](ChannelKind kind, double snr) {
        TransmitOptions opts;
        opts.channel.kind = kind;
        opts.channel.snr_db = snr;
        opts.channel.seed = 9100 + static_cast<uint64_t>(snr);
        return meanPsnr(*smoke.codec, smoke.chan.get(), eval_frames, opts);
    };
    const double clean = run(ChannelKind::Noiseless, 0.0);
    const double awgn6 = run(ChannelKind::AWGN, 6.0);
    const double awgn18 = run(ChannelKind::AWGN, 18.0);
    const double ray6 = run(ChannelKind::Rayleigh, 6.0);
    const double ray18 = run(ChannelKind::Rayleigh, 18.0);
    std::fprintf(stderr, "  psnr: clean %.2f | awgn 6/18: %.2f/%.2f | rayleigh 6/18: %.2f/%.2f\n", clean, awgn6,
                 awgn18, ray6, ray18);
    return awgn18 >= awgn6 && ray18 >= ray6 && clean >= awgn18 && clean >= ray18;
}

// ---------------------------------------------------------------------------
// 10. CLI determinism
// ---------------------------------------------------------------------------

std::string readFileBytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool criterion10(const std::string& cli) {
    if (cli.empty()) {
        std::fprintf(stderr, "  cli binary path not supplied\n");
        return false;
    }
    const fs::path root = fs::temp_directory_path() / "semcom_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg_path = root / "cfg.json";
    {
        std::ofstream f(cfg_path);
        f << R"({
  "schema_version": 1,
  "seed": 4242,
  "out_dir": ")" << (root / "default").generic_string() << R"(",
  "dataset": {"kind": "synthetic", "frames": 3, "seed": 5, "width": 48, "height": 48, "objects": 1},
  "codec": {"n": 2, "n1": 2, "n2": 1, "m": 6, "f": 4, "enc_depth": 1, "dec_depth": 1, "fusion_width": 4, "flow_width": 4},
  "channel_codec": {"rate_channels": 4, "width": 4, "enc_depth": 1, "dec_depth": 1},
  "channels": [{"kind": "noiseless"}, {"kind": "awgn", "snr_db": [6, 18]}],
  "quant": {"bits": 8},
  "train": {"epochs_per_phase": 1, "channel_kind": "awgn"},
  "flow_mode": "pyramid",
  "confidence_floor": 0.3
})";
    }

    auto runAll = [&](const fs::path& out) {
        for (const char* verb : {"prepare", "train --stages 1-5", "transmit", "evaluate", "ablate"}) {
            std::ostringstream cmd;
            cmd << cli << ' ' << verb << " --config " << cfg_path << " --out " << out << " >/dev/null 2>&1";
            if (std::system(cmd.str().c_str()) != 0) {
                std::fprintf(stderr, "  command failed: %s\n", cmd.str().c_str());
                return false;
            }
        }
        return true;
    };
    if (!runAll(root / "a") || !runAll(root / "b")) return false;

    int compared = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), root / "a");
        const std::string ext = entry.path().extension().string();
        if (ext != ".csv" && ext != ".png") continue;
        const fs::path other = root / "b" / rel;
        if (!fs::exists(other) || readFileBytes(entry.path()) != readFileBytes(other)) {
            std::fprintf(stderr, "  mismatch: %s\n", rel.generic_string().c_str());
            return false;
        }
        ++compared;
    }
    if (compared == 0) {
        std::fprintf(stderr, "  no csv outputs found to compare\n");
        return false;
    }
    std::fprintf(stderr, "  %d deterministic output files\n", compared);
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";
    bool all_ok = true;
    SmokeResult smoke;
    auto report = [&](int id, const char* name, const std::function<bool()>& fn) {
        const double t0 = nowSeconds();
        const bool ok = fn();
        std::printf("criterion %2d (%s): %s (%.1fs)\n", id, name, ok ? "pass" : "FAIL", nowSeconds() - t0);
        std::fflush(stdout);
        all_ok = all_ok && ok;
    };
    report(1, "pixel shuffle bijectivity", criterion1);
    report(2, "warp identities", criterion2);
    report(3, "channel calibration", criterion3);
    report(4, "loss gradients", criterion4);
    report(5, "metric oracles", criterion5);
    report(6, "compression accounting", criterion6);
    report(7, "zero-weight pipeline oracle", criterion7);
    report(8, "training smoke and trend", [&] {
        smoke = criterion8();
        return smoke.ok;
    });
    report(9, "snr monotonicity", [&] { return criterion9(smoke); });
    report(10, "cli determinism", [&] { return criterion10(cli); });
    return all_ok ? 0 : 1;
}
