#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace semcom {

// Dense w*h*c tensor of floats. Index convention follows (x, y, z) with
// x in [0,w), y in [0,h), z in [0,c); planes are stored channel-major,
// each plane laid out with x fastest.
class Tensor {
public:
    Tensor() = default;
    Tensor(int w, int h, int c) : w_(w), h_(h), c_(c), data_(Eigen::ArrayXf::Zero(static_cast<Eigen::Index>(w) * h * c)) {
        if (w < 0 || h < 0 || c < 0) throw std::invalid_argument("Tensor: negative dims");
    }

    int w() const { return w_; }
    int h() const { return h_; }
    int c() const { return c_; }
    Eigen::Index size() const { return data_.size(); }

    float& operator()(int x, int y, int z) { return data_[idx(x, y, z)]; }
    float operator()(int x, int y, int z) const { return data_[idx(x, y, z)]; }

    Eigen::ArrayXf& flat() { return data_; }
    const Eigen::ArrayXf& flat() const { return data_; }

    // Channel plane as an h x w matrix view (rows = y).
    Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> plane(int z) {
        return {data_.data() + static_cast<Eigen::Index>(z) * w_ * h_, h_, w_};
    }
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> plane(int z) const {
        return {data_.data() + static_cast<Eigen::Index>(z) * w_ * h_, h_, w_};
    }

    void setZero() { data_.setZero(); }
    bool sameShape(const Tensor& o) const { return w_ == o.w_ && h_ == o.h_ && c_ == o.c_; }
    bool allFinite() const { return data_.isFinite().all(); }

    std::string shapeStr() const {
        return std::to_string(w_) + "x" + std::to_string(h_) + "x" + std::to_string(c_);
    }

private:
    Eigen::Index idx(int x, int y, int z) const {
        return (static_cast<Eigen::Index>(z) * h_ + y) * w_ + x;
    }

    int w_ = 0, h_ = 0, c_ = 0;
    Eigen::ArrayXf data_;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void requireSameShape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.sameShape(b))
        throw ShapeError(std::string(where) + ": shape mismatch " + a.shapeStr() + " vs " + b.shapeStr());
}

}  // namespace semcom
