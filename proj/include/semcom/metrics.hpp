#pragma once

#include <optional>
#include <vector>

#include "semcom/data.hpp"

namespace semcom {

// PSNR in dB. Identical images yield an empty optional (infinite sentinel,
// excluded from means with count noted by the caller). printed_form uses
// 20*log10(max/MSE) instead of the standard 10*log10(max^2/MSE).
std::optional<double> psnr(const Tensor& i, const Tensor& i_hat, double max_val = 1.0, bool printed_form = false);

// PSNR over masked pixels only; empty mask yields nullopt (undefined).
std::optional<double> psnrMasked(const Tensor& i, const Tensor& i_hat, const Tensor& mask, double max_val = 1.0);

// Block SSIM per the luminance/contrast/structure decomposition, 8x8
// non-overlapping blocks, stabilizing constants (0.01 L)^2 / (0.03 L)^2,
// per-channel then channel-averaged; reported value clamped to [0,1].
double ssim(const Tensor& i, const Tensor& i_hat, int block = 8, double max_val = 1.0);
double ssimMasked(const Tensor& i, const Tensor& i_hat, const Tensor& mask, int block = 8, double max_val = 1.0);

double iou(const BBox2D& a, const BBox2D& b);

struct PRPoint {
    double recall = 0.0, precision = 0.0;
};

struct APResult {
    std::optional<double> ap;  // [0,100]; nullopt when no ground truth in regime
    std::vector<PRPoint> curve;
    int gt_count = 0;
};

struct FrameDetections {
    DetectionSet detections;
    DetectionSet ground_truth;
};

// Greedy confidence-ordered max-IoU matching, each ground truth used once.
// Ground truths harder than the requested regime are ignored (neither TP
// nor FN); easier ones count. interp_points: 40 (default) or 11.
APResult ap2d(const std::vector<FrameDetections>& frames, double iou_threshold, DifficultyRegime regime,
              int interp_points = 40);

}  // namespace semcom
