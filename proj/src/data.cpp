#include "semcom/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace semcom {

namespace fs = std::filesystem;

DifficultyRegime classifyDifficulty(const BBox2D& box) {
    if (!box.occlusion.has_value() || !box.truncation.has_value()) return DifficultyRegime::Ignored;
    const float h = box.height();
    const int occ = *box.occlusion;
    const float trunc = *box.truncation;
    if (h >= 40.0f && occ == 0 && trunc <= 0.15f) return DifficultyRegime::Easy;
    if (h >= 25.0f && occ <= 1 && trunc <= 0.30f) return DifficultyRegime::Moderate;
    if (h >= 25.0f && occ <= 2 && trunc <= 0.50f) return DifficultyRegime::Hard;
    return DifficultyRegime::Ignored;
}

const char* regimeName(DifficultyRegime r) {
    switch (r) {
        case DifficultyRegime::Easy: return "easy";
        case DifficultyRegime::Moderate: return "moderate";
        case DifficultyRegime::Hard: return "hard";
        default: return "ignored";
    }
}

bool clampBox(BBox2D& box, int w, int h) {
    box.u1 = std::max(0.0f, std::min(box.u1, static_cast<float>(w)));
    box.u2 = std::max(0.0f, std::min(box.u2, static_cast<float>(w)));
    box.v1 = std::max(0.0f, std::min(box.v1, static_cast<float>(h)));
    box.v2 = std::max(0.0f, std::min(box.v2, static_cast<float>(h)));
    return box.u1 < box.u2 && box.v1 < box.v2;
}

// ---------------------------------------------------------------------------
// PNG I/O
// ---------------------------------------------------------------------------

ImagePlane loadPng(const fs::path& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw ConfigError("loadPng: cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw DataError("loadPng: decode failure in " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(w) * 3);
    ImagePlane img(w, h, 3);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int z = 0; z < 3; ++z) img(x, y, z) = static_cast<float>(row[x * 3 + z]) / 255.0f;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

void savePng(const fs::path& path, const ImagePlane& img) {
    if (img.c() != 3) throw ShapeError("savePng: expected 3 channels");
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw ConfigError("savePng: cannot open " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw DataError("savePng: encode failure for " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, img.w(), img.h(), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(img.w()) * 3);
    for (int y = 0; y < img.h(); ++y) {
        for (int x = 0; x < img.w(); ++x)
            for (int z = 0; z < 3; ++z) {
                const float v = std::min(1.0f, std::max(0.0f, img(x, y, z)));
                row[x * 3 + z] = static_cast<png_byte>(std::lround(v * 255.0f));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

// ---------------------------------------------------------------------------
// KITTI labels
// ---------------------------------------------------------------------------

DetectionSet parseKittiLabels(const fs::path& path, int image_w, int image_h, int* dropped) {
    std::ifstream in(path);
    if (!in) throw ConfigError("parseKittiLabels: cannot open " + path.string());
    DetectionSet det;
    det.image_w = image_w;
    det.image_h = image_h;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string type;
        float trunc, alpha, u1, v1, u2, v2;
        int occ;
        if (!(ss >> type >> trunc >> occ >> alpha >> u1 >> v1 >> u2 >> v2))
            throw DataError("parseKittiLabels: unparsable line " + std::to_string(lineno) + " in " + path.string());
        if (type == "DontCare") continue;
        if (u2 <= u1 || v2 <= v1)
            throw DataError("parseKittiLabels: degenerate box at line " + std::to_string(lineno) + " in " +
                            path.string());
        // Skip 3D fields; a trailing score is optional.
        float score = 1.0f;
        std::vector<float> rest;
        float v;
        while (ss >> v) rest.push_back(v);
        if (rest.size() >= 8) score = rest.back();
        BBox2D box{u1, v1, u2, v2, std::min(1.0f, std::max(0.0f, score)), occ, trunc};
        if (!clampBox(box, image_w, image_h)) {
            if (dropped) ++(*dropped);
            continue;
        }
        det.boxes.push_back(box);
    }
    return det;
}

void writeKittiLabels(const fs::path& path, const DetectionSet& det) {
    std::ofstream out(path);
    if (!out) throw ConfigError("writeKittiLabels: cannot open " + path.string());
    for (const auto& b : det.boxes) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "Car %.2f %d -10 %.2f %.2f %.2f %.2f 0 0 0 0 0 0 0 %.4f\n",
                      b.truncation.value_or(0.0f), b.occlusion.value_or(0), b.u1, b.v1, b.u2, b.v2, b.confidence);
        out << buf;
    }
}

std::vector<StereoPair> loadKittiStereo(const fs::path& root, const std::string& split, KittiLoadStats* stats) {
    const fs::path base = split.empty() ? root : root / split;
    const fs::path left_dir = base / "image_2";
    const fs::path right_dir = base / "image_3";
    const fs::path label_dir = base / "label_2";
    for (const auto& d : {left_dir, right_dir}) {
        if (!fs::is_directory(d)) throw ConfigError("loadKittiStereo: missing directory " + d.string());
    }
    std::map<std::string, fs::path> left_files, right_files;
    for (const auto& e : fs::directory_iterator(left_dir))
        if (e.path().extension() == ".png") left_files[e.path().stem().string()] = e.path();
    for (const auto& e : fs::directory_iterator(right_dir))
        if (e.path().extension() == ".png") right_files[e.path().stem().string()] = e.path();
    if (left_files.size() != right_files.size())
        throw DataError("loadKittiStereo: left/right frame counts differ (" + std::to_string(left_files.size()) +
                        " vs " + std::to_string(right_files.size()) + ")");
    std::vector<StereoPair> pairs;
    for (const auto& [id, lp] : left_files) {
        auto rit = right_files.find(id);
        if (rit == right_files.end()) throw DataError("loadKittiStereo: no right image for frame " + id);
        StereoPair p;
        p.frame_id = id;
        p.left = loadPng(lp);
        p.right = loadPng(rit->second);
        if (p.left.w() != p.right.w() || p.left.h() != p.right.h())
            throw DataError("loadKittiStereo: dimension mismatch for frame " + id);
        const fs::path label = label_dir / (id + ".txt");
        if (fs::exists(label)) {
            int dropped = 0;
            DetectionSet det = parseKittiLabels(label, p.left.w(), p.left.h(), &dropped);
            if (stats) stats->dropped_boxes += dropped;
            // KITTI carries left-view labels; the right view reuses them as an
            // approximation when no dedicated right labels exist.
            p.gt_left = det;
            p.gt_right = det;
        }
        pairs.push_back(std::move(p));
        if (stats) ++stats->frames;
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Synthetic scenes
// ---------------------------------------------------------------------------

namespace {

void fillBackground(ImagePlane& img, Rng& rng) {
    // Smooth low-frequency gradient plus per-pixel texture.
    const float fx = static_cast<float>(rng.uniform(0.5, 2.0));
    const float fy = static_cast<float>(rng.uniform(0.5, 2.0));
    const float ph = static_cast<float>(rng.uniform(0.0, 6.28));
    for (int z = 0; z < 3; ++z) {
        const float base = 0.25f + 0.1f * z;
        for (int y = 0; y < img.h(); ++y)
            for (int x = 0; x < img.w(); ++x) {
                const float s = std::sin(fx * x * 0.2f + ph) * std::cos(fy * y * 0.2f);
                img(x, y, z) = base + 0.15f * s;
            }
    }
    for (Eigen::Index i = 0; i < img.size(); ++i)
        img.flat()[i] = std::min(1.0f, std::max(0.0f, img.flat()[i] + static_cast<float>(rng.uniform(-0.05, 0.05))));
}

void paintRect(ImagePlane& img, int u1, int v1, int u2, int v2, Rng& texture_rng) {
    Rng local = texture_rng;  // identical texture for both views
    for (int y = v1; y < v2; ++y)
        for (int x = u1; x < u2; ++x) {
            const float t = 0.5f + 0.45f * std::sin(0.7f * (x - u1)) * std::sin(0.9f * (y - v1));
            for (int z = 0; z < 3; ++z) {
                const float jitter = static_cast<float>(local.uniform(-0.08, 0.08));
                float v = t * (0.4f + 0.2f * z) + 0.3f + jitter;
                img(x, y, z) = std::min(1.0f, std::max(0.0f, v));
            }
        }
}

}  // namespace

StereoPair synthStereo(uint64_t seed, const SyntheticSpec& spec) {
    if (spec.max_disparity >= spec.width) throw ConfigError("synthStereo: disparity exceeds image width");
    if (spec.min_disparity > spec.max_disparity) throw ConfigError("synthStereo: empty disparity range");
    Rng rng(seed * 0x9e3779b97f4a7c15ULL + 0x1234567ULL);
    StereoPair p;
    p.frame_id = "synth_" + std::to_string(seed);
    p.left = ImagePlane(spec.width, spec.height, 3);
    Rng bg = rng.fork(1);
    fillBackground(p.left, bg);
    p.right = p.left;  // background at zero disparity

    DetectionSet gl, gr;
    gl.image_w = gr.image_w = spec.width;
    gl.image_h = gr.image_h = spec.height;
    Rng obj = rng.fork(2);
    for (int i = 0; i < spec.objects; ++i) {
        const int d = obj.uniformInt(spec.min_disparity, spec.max_disparity);
        const int bw = obj.uniformInt(std::max(6, spec.width / 8), std::max(8, spec.width / 3));
        const int bh = obj.uniformInt(std::max(6, spec.height / 8), std::max(8, spec.height / 3));
        const int u1 = obj.uniformInt(d, std::max(d, spec.width - bw - 1));
        const int v1 = obj.uniformInt(0, std::max(0, spec.height - bh - 1));
        Rng tex = obj.fork(100 + i);
        paintRect(p.left, u1, v1, u1 + bw, v1 + bh, tex);
        paintRect(p.right, u1 - d, v1, u1 - d + bw, v1 + bh, tex);
        BBox2D bl{static_cast<float>(u1), static_cast<float>(v1), static_cast<float>(u1 + bw),
                  static_cast<float>(v1 + bh), 1.0f, 0, 0.0f};
        BBox2D br = bl;
        br.u1 -= static_cast<float>(d);
        br.u2 -= static_cast<float>(d);
        gl.boxes.push_back(bl);
        gr.boxes.push_back(br);
    }
    p.gt_left = gl;
    p.gt_right = gr;
    return p;
}

StereoPair synthShiftPair(uint64_t seed, int width, int height, float dx, float dy) {
    Rng rng(seed * 0x2545f4914f6cdd1dULL + 77ULL);
    StereoPair p;
    p.frame_id = "shift_" + std::to_string(seed);
    // Band-limited texture so sub-pixel shifts are well posed.
    const int K = 6;
    std::vector<float> ax(K), bx(K), by(K), phase(K);
    for (int k = 0; k < K; ++k) {
        ax[k] = static_cast<float>(rng.uniform(0.3, 1.0));
        bx[k] = static_cast<float>(rng.uniform(0.05, 0.45));
        by[k] = static_cast<float>(rng.uniform(0.05, 0.45));
        phase[k] = static_cast<float>(rng.uniform(0.0, 6.28));
    }
    auto val = [&](float x, float y, int z) {
        float s = 0.0f;
        for (int k = 0; k < K; ++k) s += ax[k] * std::sin(bx[k] * x + by[k] * y + phase[k] + 0.5f * z);
        return 0.5f + 0.5f * std::tanh(s * 0.5f);
    };
    p.left = ImagePlane(width, height, 3);
    p.right = ImagePlane(width, height, 3);
    for (int z = 0; z < 3; ++z)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                p.left(x, y, z) = val(static_cast<float>(x), static_cast<float>(y), z);
                p.right(x, y, z) = val(static_cast<float>(x) - dx, static_cast<float>(y) - dy, z);
            }
    return p;
}

}  // namespace semcom
