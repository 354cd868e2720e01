#include "semcom/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace semcom {

std::optional<double> psnr(const Tensor& i, const Tensor& i_hat, double max_val, bool printed_form) {
    requireSameShape(i, i_hat, "psnr");
    const double mse = static_cast<double>((i.flat() - i_hat.flat()).square().mean());
    if (mse <= 0.0) return std::nullopt;  // infinite sentinel
    if (printed_form) return 20.0 * std::log10(max_val / mse);
    return 10.0 * std::log10(max_val * max_val / mse);
}

std::optional<double> psnrMasked(const Tensor& i, const Tensor& i_hat, const Tensor& mask, double max_val) {
    requireSameShape(i, i_hat, "psnrMasked");
    if (mask.w() != i.w() || mask.h() != i.h()) throw ShapeError("psnrMasked: mask dims");
    double se = 0.0;
    int64_t count = 0;
    for (int z = 0; z < i.c(); ++z)
        for (int y = 0; y < i.h(); ++y)
            for (int x = 0; x < i.w(); ++x)
                if (mask(x, y, 0) > 0.5f) {
                    const double d = static_cast<double>(i(x, y, z)) - i_hat(x, y, z);
                    se += d * d;
                    ++count;
                }
    if (count == 0) return std::nullopt;  // undefined-metric flag
    const double mse = se / static_cast<double>(count);
    if (mse <= 0.0) return std::nullopt;
    return 10.0 * std::log10(max_val * max_val / mse);
}

namespace {

struct BlockStats {
    double mu_x = 0, mu_y = 0, var_x = 0, var_y = 0, cov = 0;
};

double blockScore(const BlockStats& s, double L) {
    const double c1 = (0.01 * L) * (0.01 * L);
    const double c2 = (0.03 * L) * (0.03 * L);
    const double c3 = c2 / 2.0;
    const double sx = std::sqrt(std::max(0.0, s.var_x));
    const double sy = std::sqrt(std::max(0.0, s.var_y));
    const double lum = (2 * s.mu_x * s.mu_y + c1) / (s.mu_x * s.mu_x + s.mu_y * s.mu_y + c1);
    const double con = (2 * sx * sy + c2) / (s.var_x + s.var_y + c2);
    const double str = (s.cov + c3) / (sx * sy + c3);
    return lum * con * str;
}

}  // namespace

double ssim(const Tensor& i, const Tensor& i_hat, int block, double max_val) {
    requireSameShape(i, i_hat, "ssim");
    if (block > std::min(i.w(), i.h())) throw ShapeError("ssim: block larger than image");
    double total = 0.0;
    int64_t blocks = 0;
    for (int z = 0; z < i.c(); ++z)
        for (int by = 0; by + block <= i.h(); by += block)
            for (int bx = 0; bx + block <= i.w(); bx += block) {
                BlockStats s;
                const double n = static_cast<double>(block) * block;
                for (int y = by; y < by + block; ++y)
                    for (int x = bx; x < bx + block; ++x) {
                        s.mu_x += i(x, y, z);
                        s.mu_y += i_hat(x, y, z);
                    }
                s.mu_x /= n;
                s.mu_y /= n;
                for (int y = by; y < by + block; ++y)
                    for (int x = bx; x < bx + block; ++x) {
                        const double dx = i(x, y, z) - s.mu_x;
                        const double dy = i_hat(x, y, z) - s.mu_y;
                        s.var_x += dx * dx;
                        s.var_y += dy * dy;
                        s.cov += dx * dy;
                    }
                s.var_x /= n;
                s.var_y /= n;
                s.cov /= n;
                total += blockScore(s, max_val);
                ++blocks;
            }
    if (blocks == 0) return 0.0;
    return std::clamp(total / static_cast<double>(blocks), 0.0, 1.0);
}

double ssimMasked(const Tensor& i, const Tensor& i_hat, const Tensor& mask, int block, double max_val) {
    requireSameShape(i, i_hat, "ssimMasked");
    double total = 0.0;
    int64_t blocks = 0;
    for (int z = 0; z < i.c(); ++z)
        for (int by = 0; by + block <= i.h(); by += block)
            for (int bx = 0; bx + block <= i.w(); bx += block) {
                int covered = 0;
                for (int y = by; y < by + block; ++y)
                    for (int x = bx; x < bx + block; ++x)
                        if (mask(x, y, 0) > 0.5f) ++covered;
                if (covered * 2 < block * block) continue;  // majority-covered blocks only
                BlockStats s;
                const double n = static_cast<double>(block) * block;
                for (int y = by; y < by + block; ++y)
                    for (int x = bx; x < bx + block; ++x) {
                        s.mu_x += i(x, y, z);
                        s.mu_y += i_hat(x, y, z);
                    }
                s.mu_x /= n;
                s.mu_y /= n;
                for (int y = by; y < by + block; ++y)
                    for (int x = bx; x < bx + block; ++x) {
                        const double dx = i(x, y, z) - s.mu_x;
                        const double dy = i_hat(x, y, z) - s.mu_y;
                        s.var_x += dx * dx;
                        s.var_y += dy * dy;
                        s.cov += dx * dy;
                    }
                s.var_x /= n;
                s.var_y /= n;
                s.cov /= n;
                total += blockScore(s, max_val);
                ++blocks;
            }
    if (blocks == 0) return 0.0;
    return std::clamp(total / static_cast<double>(blocks), 0.0, 1.0);
}

double iou(const BBox2D& a, const BBox2D& b) {
    const double iw = std::min(a.u2, b.u2) - std::max(a.u1, b.u1);
    const double ih = std::min(a.v2, b.v2) - std::max(a.v1, b.v1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = static_cast<double>(a.area()) + b.area() - inter;
    return inter / uni;
}

namespace {
int regimeRank(DifficultyRegime r) {
    switch (r) {
        case DifficultyRegime::Easy: return 0;
        case DifficultyRegime::Moderate: return 1;
        case DifficultyRegime::Hard: return 2;
        default: return 3;
    }
}
}  // namespace

APResult ap2d(const std::vector<FrameDetections>& frames, double iou_threshold, DifficultyRegime regime,
              int interp_points) {
    APResult res;
    struct Det {
        float conf;
        size_t frame;
        size_t index;  // input order within frame, for deterministic ties
    };
    std::vector<Det> dets;
    const int want = regimeRank(regime);
    std::vector<std::vector<int>> gt_state(frames.size());  // 0 unmatched, 1 matched
    std::vector<std::vector<bool>> gt_counted(frames.size());
    for (size_t f = 0; f < frames.size(); ++f) {
        const auto& gts = frames[f].ground_truth.boxes;
        gt_state[f].assign(gts.size(), 0);
        gt_counted[f].resize(gts.size());
        for (size_t g = 0; g < gts.size(); ++g) {
            const bool counted = regimeRank(classifyDifficulty(gts[g])) <= want;
            gt_counted[f][g] = counted;
            if (counted) ++res.gt_count;
        }
        for (size_t d = 0; d < frames[f].detections.boxes.size(); ++d)
            dets.push_back({frames[f].detections.boxes[d].confidence, f, d});
    }
    if (res.gt_count == 0) return res;  // undefined-metric flag

    std::stable_sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) { return a.conf > b.conf; });

    int tp = 0, fp = 0;
    std::vector<PRPoint> curve;
    for (const Det& d : dets) {
        const auto& gts = frames[d.frame].ground_truth.boxes;
        const BBox2D& box = frames[d.frame].detections.boxes[d.index];
        double best_iou = 0.0;
        int best_g = -1;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (gt_state[d.frame][g]) continue;
            const double v = iou(box, gts[g]);
            if (v > best_iou) {
                best_iou = v;
                best_g = static_cast<int>(g);
            }
        }
        if (best_g >= 0 && best_iou >= iou_threshold) {
            gt_state[d.frame][static_cast<size_t>(best_g)] = 1;
            if (gt_counted[d.frame][static_cast<size_t>(best_g)]) {
                ++tp;
            } else {
                continue;  // overlap with an out-of-regime box: ignored
            }
        } else {
            ++fp;
        }
        curve.push_back({static_cast<double>(tp) / res.gt_count, static_cast<double>(tp) / (tp + fp)});
    }
    res.curve = curve;

    // Interpolated precision envelope sampled at interp_points recalls.
    auto interp = [&curve](double r) {
        double best = 0.0;
        for (const auto& p : curve)
            if (p.recall >= r) best = std::max(best, p.precision);
        return best;
    };
    double sum = 0.0;
    if (interp_points == 11) {
        for (int i = 0; i <= 10; ++i) sum += interp(i / 10.0);
        res.ap = 100.0 * sum / 11.0;
    } else {
        for (int i = 1; i <= interp_points; ++i) sum += interp(static_cast<double>(i) / interp_points);
        res.ap = 100.0 * sum / interp_points;
    }
    return res;
}

}  // namespace semcom
