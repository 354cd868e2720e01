#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "semcom/rng.hpp"
#include "semcom/tensor.hpp"

namespace semcom {

// RGB image, values in [0,1]. 3-channel Tensor alias with invariants
// enforced at load time.
using ImagePlane = Tensor;

struct BBox2D {
    float u1 = 0, v1 = 0, u2 = 0, v2 = 0;
    float confidence = 1.0f;
    std::optional<int> occlusion;
    std::optional<float> truncation;

    float width() const { return u2 - u1; }
    float height() const { return v2 - v1; }
    float area() const { return width() * height(); }
    bool valid() const { return u1 < u2 && v1 < v2 && confidence >= 0.0f && confidence <= 1.0f; }
};

struct DetectionSet {
    std::vector<BBox2D> boxes;
    int image_w = 0, image_h = 0;
};

struct StereoPair {
    ImagePlane left, right;
    std::optional<DetectionSet> gt_left, gt_right;
    std::string frame_id;
};

enum class DifficultyRegime { Easy, Moderate, Hard, Ignored };

// KITTI difficulty rules: Easy h>=40/occ 0/trunc<=0.15, Moderate h>=25/
// occ<=1/trunc<=0.30, Hard h>=25/occ<=2/trunc<=0.50, else Ignored.
DifficultyRegime classifyDifficulty(const BBox2D& box);
const char* regimeName(DifficultyRegime r);

// Clamp to image bounds; returns false if the clamped box has zero area.
bool clampBox(BBox2D& box, int w, int h);

// PNG I/O. Images are 8-bit RGB; load normalizes to [0,1], save rounds to
// nearest level.
ImagePlane loadPng(const std::filesystem::path& path);
void savePng(const std::filesystem::path& path, const ImagePlane& img);

// KITTI label text format: type trunc occ alpha u1 v1 u2 v2 (3D fields
// ignored, optional trailing score).
DetectionSet parseKittiLabels(const std::filesystem::path& path, int image_w, int image_h, int* dropped = nullptr);
void writeKittiLabels(const std::filesystem::path& path, const DetectionSet& det);

struct KittiLoadStats {
    int frames = 0;
    int dropped_boxes = 0;
};

// Expects root/image_2 (left), root/image_3 (right), root/label_2 under
// root/<split>/. Deterministic frame-id ordering.
std::vector<StereoPair> loadKittiStereo(const std::filesystem::path& root, const std::string& split,
                                        KittiLoadStats* stats = nullptr);

struct SyntheticSpec {
    int width = 64, height = 64;
    int objects = 2;
    int min_disparity = 2, max_disparity = 6;
};

// Textured rectangles over a nonuniform background; the right view shifts
// each rectangle left by its integer disparity. Deterministic in seed.
StereoPair synthStereo(uint64_t seed, const SyntheticSpec& spec);

// Uniform-shift pair for flow training: right = left shifted by (dx, dy)
// with wraparound texture.
StereoPair synthShiftPair(uint64_t seed, int width, int height, float dx, float dy);

}  // namespace semcom
