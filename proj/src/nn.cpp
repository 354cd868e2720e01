#include "semcom/nn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace semcom::nn {

namespace {
std::atomic<uint64_t> g_order{1};

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
}  // namespace

NodeP makeNode(Tensor v, bool needs_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->needs_grad = needs_grad;
    n->order = g_order.fetch_add(1);
    return n;
}

NodeP constant(Tensor v) { return makeNode(std::move(v), false); }

void backward(const NodeP& out) {
    if (out->grad.size() == 0) {
        out->ensureGrad();
        out->grad.flat().setOnes();
    }
    // Collect reachable nodes, run closures in reverse creation order.
    std::vector<Node*> nodes;
    std::unordered_set<Node*> seen;
    std::vector<NodeP> stack{out};
    while (!stack.empty()) {
        NodeP n = stack.back();
        stack.pop_back();
        if (!seen.insert(n.get()).second) continue;
        nodes.push_back(n.get());
        for (auto& p : n->parents) stack.push_back(p);
    }
    std::sort(nodes.begin(), nodes.end(), [](Node* a, Node* b) { return a->order > b->order; });
    for (Node* n : nodes) {
        if (n->backprop && n->grad.size() != 0) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d::Conv2d(int cin, int cout, int k, const std::string& name) : cin_(cin), cout_(cout), k_(k) {
    if (k % 2 == 0) throw ConfigError("Conv2d: even kernel size");
    w_.name = name + ".weight";
    b_.name = name + ".bias";
    w_.resize(static_cast<Eigen::Index>(cout) * cin * k * k);
    b_.resize(cout);
}

void Conv2d::initHe(Rng& rng) {
    const double std = std::sqrt(2.0 / (static_cast<double>(cin_) * k_ * k_));
    for (Eigen::Index i = 0; i < w_.value.size(); ++i) w_.value[i] = static_cast<float>(rng.normal() * std);
    b_.value.setZero();
}

namespace {

// col matrix: rows = cin*k*k (r = (ci*k + ky)*k + kx), cols = w*h (y*w + x).
void im2col(const Tensor& x, int k, Eigen::MatrixXf& col) {
    const int w = x.w(), h = x.h(), cin = x.c(), p = k / 2;
    col.setZero(static_cast<Eigen::Index>(cin) * k * k, static_cast<Eigen::Index>(w) * h);
    for (int ci = 0; ci < cin; ++ci) {
        const float* plane = x.flat().data() + static_cast<Eigen::Index>(ci) * w * h;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Eigen::Index r = (static_cast<Eigen::Index>(ci) * k + ky) * k + kx;
                const int dy = ky - p, dx = kx - p;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                    if (x0 >= x1) continue;
                    for (int xx = x0; xx < x1; ++xx)
                        col(r, static_cast<Eigen::Index>(y) * w + xx) = plane[static_cast<Eigen::Index>(sy) * w + xx + dx];
                }
            }
        }
    }
}

void col2imAdd(const Eigen::MatrixXf& col, int k, Tensor& dx) {
    const int w = dx.w(), h = dx.h(), cin = dx.c(), p = k / 2;
    for (int ci = 0; ci < cin; ++ci) {
        float* plane = dx.flat().data() + static_cast<Eigen::Index>(ci) * w * h;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Eigen::Index r = (static_cast<Eigen::Index>(ci) * k + ky) * k + kx;
                const int dy = ky - p, dx0 = kx - p;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const int x0 = std::max(0, -dx0), x1 = std::min(w, w - dx0);
                    for (int xx = x0; xx < x1; ++xx)
                        plane[static_cast<Eigen::Index>(sy) * w + xx + dx0] += col(r, static_cast<Eigen::Index>(y) * w + xx);
                }
            }
        }
    }
}

}  // namespace

NodeP Conv2d::forward(const NodeP& x) {
    if (x->value.c() != cin_)
        throw ShapeError("Conv2d " + w_.name + ": expected " + std::to_string(cin_) + " input channels, got " +
                         std::to_string(x->value.c()));
    const int w = x->value.w(), h = x->value.h();
    auto col = std::make_shared<Eigen::MatrixXf>();
    im2col(x->value, k_, *col);

    Eigen::Map<const RowMat> W(w_.value.data(), cout_, static_cast<Eigen::Index>(cin_) * k_ * k_);
    Tensor out(w, h, cout_);
    Eigen::Map<RowMat> Y(out.flat().data(), cout_, static_cast<Eigen::Index>(w) * h);
    Y.noalias() = W * (*col);
    for (int co = 0; co < cout_; ++co) Y.row(co).array() += b_.value[co];

    auto node = makeNode(std::move(out), true);
    node->parents = {x};
    Conv2d* self = this;
    node->backprop = [self, x, col, w, h](Node& n) {
        const int cout = self->cout_, cin = self->cin_, k = self->k_;
        Eigen::Map<const RowMat> dY(n.grad.flat().data(), cout, static_cast<Eigen::Index>(w) * h);
        Eigen::Map<RowMat> dW(self->w_.grad.data(), cout, static_cast<Eigen::Index>(cin) * k * k);
        dW.noalias() += dY * col->transpose();
        for (int co = 0; co < cout; ++co) self->b_.grad[co] += dY.row(co).sum();
        if (x->needs_grad || !x->parents.empty()) {
            Eigen::Map<const RowMat> W(self->w_.value.data(), cout, static_cast<Eigen::Index>(cin) * k * k);
            Eigen::MatrixXf dcol = W.transpose() * dY;
            col2imAdd(dcol, k, x->ensureGrad());
        }
    };
    return node;
}

// ---------------------------------------------------------------------------
// SpatialNorm
// ---------------------------------------------------------------------------

SpatialNorm::SpatialNorm(int channels, const std::string& name) : channels_(channels) {
    gamma_.name = name + ".gamma";
    beta_.name = name + ".beta";
    gamma_.resize(channels);
    gamma_.value.setOnes();
    beta_.resize(channels);
    run_mean_ = Eigen::ArrayXf::Zero(channels);
    run_var_ = Eigen::ArrayXf::Ones(channels);
}

NodeP SpatialNorm::forward(const NodeP& x, bool training) {
    if (x->value.c() != channels_) throw ShapeError("SpatialNorm: channel mismatch");
    const int w = x->value.w(), h = x->value.h();
    const Eigen::Index n = static_cast<Eigen::Index>(w) * h;

    auto mean = std::make_shared<Eigen::ArrayXf>(channels_);
    auto istd = std::make_shared<Eigen::ArrayXf>(channels_);
    Tensor out(w, h, channels_);
    for (int z = 0; z < channels_; ++z) {
        auto xin = Eigen::Map<const Eigen::ArrayXf>(x->value.flat().data() + z * n, n);
        float mu, var;
        if (training) {
            mu = xin.mean();
            var = (xin - mu).square().mean();
            run_mean_[z] = (1 - momentum_) * run_mean_[z] + momentum_ * mu;
            run_var_[z] = (1 - momentum_) * run_var_[z] + momentum_ * var;
        } else {
            mu = run_mean_[z];
            var = run_var_[z];
        }
        (*mean)[z] = mu;
        (*istd)[z] = 1.0f / std::sqrt(var + eps_);
        auto yout = Eigen::Map<Eigen::ArrayXf>(out.flat().data() + z * n, n);
        yout = (xin - mu) * (*istd)[z] * gamma_.value[z] + beta_.value[z];
    }

    auto node = makeNode(std::move(out), true);
    node->parents = {x};
    SpatialNorm* self = this;
    node->backprop = [self, x, mean, istd, n, training](Node& nd) {
        Tensor& dx = x->ensureGrad();
        for (int z = 0; z < self->channels_; ++z) {
            auto xin = Eigen::Map<const Eigen::ArrayXf>(x->value.flat().data() + z * n, n);
            auto dy = Eigen::Map<const Eigen::ArrayXf>(nd.grad.flat().data() + z * n, n);
            auto dxi = Eigen::Map<Eigen::ArrayXf>(dx.flat().data() + z * n, n);
            const float is = (*istd)[z], mu = (*mean)[z], g = self->gamma_.value[z];
            Eigen::ArrayXf xhat = (xin - mu) * is;
            self->gamma_.grad[z] += (dy * xhat).sum();
            self->beta_.grad[z] += dy.sum();
            if (training) {
                const float inv_n = 1.0f / static_cast<float>(n);
                Eigen::ArrayXf dxh = dy * g;
                const float s1 = dxh.sum();
                const float s2 = (dxh * xhat).sum();
                dxi += is * (dxh - inv_n * s1 - xhat * (inv_n * s2));
            } else {
                dxi += dy * g * is;
            }
        }
    };
    return node;
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

namespace {
NodeP unaryOp(const NodeP& x, Tensor out, std::function<void(Node&, const NodeP&)> bp) {
    auto node = makeNode(std::move(out), true);
    node->parents = {x};
    node->backprop = [x, bp = std::move(bp)](Node& n) { bp(n, x); };
    return node;
}
}  // namespace

NodeP relu(const NodeP& x) {
    Tensor out = x->value;
    out.flat() = out.flat().max(0.0f);
    return unaryOp(x, std::move(out), [](Node& n, const NodeP& x) {
        x->ensureGrad().flat() += n.grad.flat() * (x->value.flat() > 0.0f).cast<float>();
    });
}

NodeP leakyRelu(const NodeP& x, float slope) {
    Tensor out = x->value;
    out.flat() = out.flat().max(out.flat() * slope);
    return unaryOp(x, std::move(out), [slope](Node& n, const NodeP& x) {
        x->ensureGrad().flat() +=
            n.grad.flat() * (x->value.flat() > 0.0f).select(Eigen::ArrayXf::Ones(x->value.size()),
                                                           Eigen::ArrayXf::Constant(x->value.size(), slope));
    });
}

NodeP add(const NodeP& a, const NodeP& b) { return addScaled(a, b, 1.0f); }

NodeP addScaled(const NodeP& a, const NodeP& b, float s) {
    requireSameShape(a->value, b->value, "add");
    Tensor out = a->value;
    out.flat() += s * b->value.flat();
    auto node = makeNode(std::move(out), true);
    node->parents = {a, b};
    node->backprop = [a, b, s](Node& n) {
        a->ensureGrad().flat() += n.grad.flat();
        b->ensureGrad().flat() += s * n.grad.flat();
    };
    return node;
}

NodeP scale(const NodeP& a, float s) {
    Tensor out = a->value;
    out.flat() *= s;
    return unaryOp(a, std::move(out), [s](Node& n, const NodeP& a) { a->ensureGrad().flat() += s * n.grad.flat(); });
}

NodeP concatChannels(const NodeP& a, const NodeP& b) {
    if (a->value.w() != b->value.w() || a->value.h() != b->value.h())
        throw ShapeError("concatChannels: spatial mismatch");
    const Eigen::Index na = a->value.size();
    Tensor out(a->value.w(), a->value.h(), a->value.c() + b->value.c());
    out.flat().head(na) = a->value.flat();
    out.flat().tail(b->value.size()) = b->value.flat();
    auto node = makeNode(std::move(out), true);
    node->parents = {a, b};
    node->backprop = [a, b, na](Node& n) {
        a->ensureGrad().flat() += n.grad.flat().head(na);
        b->ensureGrad().flat() += n.grad.flat().tail(b->value.size());
    };
    return node;
}

NodeP sliceChannels(const NodeP& x, int z0, int count) {
    const Eigen::Index plane = static_cast<Eigen::Index>(x->value.w()) * x->value.h();
    Tensor out(x->value.w(), x->value.h(), count);
    out.flat() = x->value.flat().segment(z0 * plane, count * plane);
    return unaryOp(x, std::move(out), [z0, count, plane](Node& n, const NodeP& x) {
        x->ensureGrad().flat().segment(z0 * plane, count * plane) += n.grad.flat();
    });
}

NodeP mulMask(const NodeP& x, const Tensor& mask) {
    const bool broadcast = mask.c() == 1 && x->value.c() != 1;
    if (!broadcast) requireSameShape(x->value, mask, "mulMask");
    Tensor out = x->value;
    const Eigen::Index plane = static_cast<Eigen::Index>(mask.w()) * mask.h();
    for (int z = 0; z < out.c(); ++z)
        out.flat().segment(z * plane, plane) *= mask.flat().segment(broadcast ? 0 : z * plane, plane);
    Tensor m = mask;
    return unaryOp(x, std::move(out), [m = std::move(m), broadcast, plane](Node& n, const NodeP& x) {
        Tensor& dx = x->ensureGrad();
        for (int z = 0; z < dx.c(); ++z)
            dx.flat().segment(z * plane, plane) +=
                n.grad.flat().segment(z * plane, plane) * m.flat().segment(broadcast ? 0 : z * plane, plane);
    });
}

// ---------------------------------------------------------------------------
// Pixel shuffle
// ---------------------------------------------------------------------------

Tensor pixelShuffleT(const Tensor& t, int n) {
    if (n < 1) throw ShapeError("pixelShuffle: n < 1");
    if (t.c() % (n * n) != 0) throw ShapeError("pixelShuffle: channels not divisible by n^2");
    const int w = t.w() * n, h = t.h() * n, c = t.c() / (n * n);
    Tensor out(w, h, c);
    for (int z = 0; z < c; ++z)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out(x, y, z) = t(x / n, y / n, (x % n) * n + (y % n) + z * n * n);
    return out;
}

Tensor pixelUnshuffleT(const Tensor& t, int n) {
    if (n < 1) throw ShapeError("pixelUnshuffle: n < 1");
    if (t.w() % n != 0 || t.h() % n != 0) throw ShapeError("pixelUnshuffle: dims not divisible by n");
    const int w = t.w() / n, h = t.h() / n, c = t.c() * n * n;
    Tensor out(w, h, c);
    for (int z = 0; z < t.c(); ++z)
        for (int y = 0; y < t.h(); ++y)
            for (int x = 0; x < t.w(); ++x)
                out(x / n, y / n, (x % n) * n + (y % n) + z * n * n) = t(x, y, z);
    return out;
}

NodeP pixelShuffle(const NodeP& x, int n) {
    return unaryOp(x, pixelShuffleT(x->value, n), [n](Node& nd, const NodeP& x) {
        x->ensureGrad().flat() += pixelUnshuffleT(nd.grad, n).flat();
    });
}

NodeP pixelUnshuffle(const NodeP& x, int n) {
    return unaryOp(x, pixelUnshuffleT(x->value, n), [n](Node& nd, const NodeP& x) {
        x->ensureGrad().flat() += pixelShuffleT(nd.grad, n).flat();
    });
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

Tensor downsampleBlockT(const Tensor& t, int n) {
    if (n == 1) return t;
    if (t.w() % n != 0 || t.h() % n != 0) throw ShapeError("downsampleBlock: dims not divisible");
    Tensor out(t.w() / n, t.h() / n, t.c());
    const float inv = 1.0f / static_cast<float>(n * n);
    for (int z = 0; z < t.c(); ++z)
        for (int y = 0; y < out.h(); ++y)
            for (int x = 0; x < out.w(); ++x) {
                float s = 0.0f;
                for (int dy = 0; dy < n; ++dy)
                    for (int dx = 0; dx < n; ++dx) s += t(x * n + dx, y * n + dy, z);
                out(x, y, z) = s * inv;
            }
    return out;
}

NodeP downsampleBlock(const NodeP& x, int n) {
    if (n == 1) return x;
    return unaryOp(x, downsampleBlockT(x->value, n), [n](Node& nd, const NodeP& x) {
        Tensor& dx = x->ensureGrad();
        const float inv = 1.0f / static_cast<float>(n * n);
        for (int z = 0; z < nd.grad.c(); ++z)
            for (int y = 0; y < nd.grad.h(); ++y)
                for (int xx = 0; xx < nd.grad.w(); ++xx) {
                    const float g = nd.grad(xx, y, z) * inv;
                    for (int dy = 0; dy < n; ++dy)
                        for (int dx0 = 0; dx0 < n; ++dx0) dx(xx * n + dx0, y * n + dy, z) += g;
                }
    });
}

namespace {
struct BilinearTap {
    int x0, y0;
    float wx, wy;  // weight toward (x0+1, y0+1)
};

inline BilinearTap upsampleTap(int x, int y, int n, int w_in, int h_in) {
    float sx = (static_cast<float>(x) + 0.5f) / static_cast<float>(n) - 0.5f;
    float sy = (static_cast<float>(y) + 0.5f) / static_cast<float>(n) - 0.5f;
    sx = std::min(std::max(sx, 0.0f), static_cast<float>(w_in - 1));
    sy = std::min(std::max(sy, 0.0f), static_cast<float>(h_in - 1));
    BilinearTap t;
    t.x0 = std::min(static_cast<int>(sx), w_in - 2 >= 0 ? w_in - 2 : 0);
    t.y0 = std::min(static_cast<int>(sy), h_in - 2 >= 0 ? h_in - 2 : 0);
    t.wx = sx - static_cast<float>(t.x0);
    t.wy = sy - static_cast<float>(t.y0);
    return t;
}
}  // namespace

Tensor upsampleBilinearT(const Tensor& t, int n) {
    if (n == 1) return t;
    const int w = t.w() * n, h = t.h() * n;
    Tensor out(w, h, t.c());
    for (int z = 0; z < t.c(); ++z)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                BilinearTap tp = upsampleTap(x, y, n, t.w(), t.h());
                const int x1 = std::min(tp.x0 + 1, t.w() - 1), y1 = std::min(tp.y0 + 1, t.h() - 1);
                out(x, y, z) = (1 - tp.wx) * (1 - tp.wy) * t(tp.x0, tp.y0, z) + tp.wx * (1 - tp.wy) * t(x1, tp.y0, z) +
                               (1 - tp.wx) * tp.wy * t(tp.x0, y1, z) + tp.wx * tp.wy * t(x1, y1, z);
            }
    return out;
}

NodeP upsampleBilinear(const NodeP& x, int n) {
    if (n == 1) return x;
    return unaryOp(x, upsampleBilinearT(x->value, n), [n](Node& nd, const NodeP& x) {
        Tensor& dx = x->ensureGrad();
        const int wi = x->value.w(), hi = x->value.h();
        for (int z = 0; z < nd.grad.c(); ++z)
            for (int y = 0; y < nd.grad.h(); ++y)
                for (int xx = 0; xx < nd.grad.w(); ++xx) {
                    BilinearTap tp = upsampleTap(xx, y, n, wi, hi);
                    const int x1 = std::min(tp.x0 + 1, wi - 1), y1 = std::min(tp.y0 + 1, hi - 1);
                    const float g = nd.grad(xx, y, z);
                    dx(tp.x0, tp.y0, z) += (1 - tp.wx) * (1 - tp.wy) * g;
                    dx(x1, tp.y0, z) += tp.wx * (1 - tp.wy) * g;
                    dx(tp.x0, y1, z) += (1 - tp.wx) * tp.wy * g;
                    dx(x1, y1, z) += tp.wx * tp.wy * g;
                }
    });
}

// ---------------------------------------------------------------------------
// Warp
// ---------------------------------------------------------------------------

namespace {
inline float sampleZero(const Tensor& f, int x, int y, int z) {
    if (x < 0 || x >= f.w() || y < 0 || y >= f.h()) return 0.0f;
    return f(x, y, z);
}
}  // namespace

Tensor warpT(const Tensor& features, const Tensor& flow) {
    if (flow.c() != 2 || flow.w() != features.w() || flow.h() != features.h())
        throw ShapeError("warp: flow must be w x h x 2 matching features");
    Tensor out(features.w(), features.h(), features.c());
    for (int y = 0; y < features.h(); ++y)
        for (int x = 0; x < features.w(); ++x) {
            const float sx = static_cast<float>(x) + flow(x, y, 0);
            const float sy = static_cast<float>(y) + flow(x, y, 1);
            const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
            const float wx = sx - static_cast<float>(x0), wy = sy - static_cast<float>(y0);
            for (int z = 0; z < features.c(); ++z) {
                const float v00 = sampleZero(features, x0, y0, z), v10 = sampleZero(features, x0 + 1, y0, z);
                const float v01 = sampleZero(features, x0, y0 + 1, z), v11 = sampleZero(features, x0 + 1, y0 + 1, z);
                out(x, y, z) = (1 - wx) * (1 - wy) * v00 + wx * (1 - wy) * v10 + (1 - wx) * wy * v01 + wx * wy * v11;
            }
        }
    return out;
}

NodeP warp(const NodeP& features, const NodeP& flow) {
    Tensor out = warpT(features->value, flow->value);
    auto node = makeNode(std::move(out), true);
    node->parents = {features, flow};
    node->backprop = [features, flow](Node& n) {
        const Tensor& f = features->value;
        const Tensor& fl = flow->value;
        Tensor& df = features->ensureGrad();
        Tensor& dfl = flow->ensureGrad();
        for (int y = 0; y < f.h(); ++y)
            for (int x = 0; x < f.w(); ++x) {
                const float sx = static_cast<float>(x) + fl(x, y, 0);
                const float sy = static_cast<float>(y) + fl(x, y, 1);
                const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
                const float wx = sx - static_cast<float>(x0), wy = sy - static_cast<float>(y0);
                float gx = 0.0f, gy = 0.0f;
                for (int z = 0; z < f.c(); ++z) {
                    const float g = n.grad(x, y, z);
                    if (g == 0.0f) continue;
                    const float v00 = sampleZero(f, x0, y0, z), v10 = sampleZero(f, x0 + 1, y0, z);
                    const float v01 = sampleZero(f, x0, y0 + 1, z), v11 = sampleZero(f, x0 + 1, y0 + 1, z);
                    auto scatter = [&](int xx, int yy, float wgt) {
                        if (xx >= 0 && xx < f.w() && yy >= 0 && yy < f.h()) df(xx, yy, z) += wgt * g;
                    };
                    scatter(x0, y0, (1 - wx) * (1 - wy));
                    scatter(x0 + 1, y0, wx * (1 - wy));
                    scatter(x0, y0 + 1, (1 - wx) * wy);
                    scatter(x0 + 1, y0 + 1, wx * wy);
                    gx += g * ((v10 - v00) * (1 - wy) + (v11 - v01) * wy);
                    gy += g * ((v01 - v00) * (1 - wx) + (v11 - v10) * wx);
                }
                dfl(x, y, 0) += gx;
                dfl(x, y, 1) += gy;
            }
    };
    return node;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

NodeP charbonnier(const NodeP& pred, const Tensor& target, float eps, bool per_pixel_mean) {
    requireSameShape(pred->value, target, "charbonnier");
    if (eps <= 0.0f) throw ConfigError("charbonnier: epsilon must be positive");
    Tensor diff = pred->value;
    diff.flat() -= target.flat();
    Tensor out(1, 1, 1);
    if (per_pixel_mean) {
        Eigen::ArrayXf per = (diff.flat().square() + eps * eps).sqrt();
        out(0, 0, 0) = per.mean();
        auto d = std::make_shared<Tensor>(std::move(diff));
        auto node = makeNode(std::move(out), true);
        node->parents = {pred};
        node->backprop = [pred, d, eps](Node& n) {
            const float g = n.grad(0, 0, 0) / static_cast<float>(d->size());
            pred->ensureGrad().flat() += g * d->flat() / (d->flat().square() + eps * eps).sqrt();
        };
        return node;
    }
    const float L = std::sqrt(diff.flat().square().sum() + eps * eps);
    out(0, 0, 0) = L;
    auto d = std::make_shared<Tensor>(std::move(diff));
    auto node = makeNode(std::move(out), true);
    node->parents = {pred};
    node->backprop = [pred, d, L](Node& n) {
        pred->ensureGrad().flat() += (n.grad(0, 0, 0) / L) * d->flat();
    };
    return node;
}

NodeP mseLoss(const NodeP& pred, const Tensor& target) {
    requireSameShape(pred->value, target, "mseLoss");
    Tensor diff = pred->value;
    diff.flat() -= target.flat();
    Tensor out(1, 1, 1);
    out(0, 0, 0) = diff.flat().square().mean();
    auto d = std::make_shared<Tensor>(std::move(diff));
    auto node = makeNode(std::move(out), true);
    node->parents = {pred};
    node->backprop = [pred, d](Node& n) {
        pred->ensureGrad().flat() += (2.0f * n.grad(0, 0, 0) / static_cast<float>(d->size())) * d->flat();
    };
    return node;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void Adam::zeroGrad(const std::vector<Param*>& params) {
    for (Param* p : params) p->grad.setZero();
}

void Adam::step(const std::vector<std::pair<std::vector<Param*>, float>>& groups) {
    ++t_;
    float clip_scale = 1.0f;
    if (cfg_.clip_norm > 0) {
        double sq = 0.0;
        for (const auto& [params, lr] : groups)
            for (Param* p : params) sq += static_cast<double>(p->grad.square().sum());
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) clip_scale = static_cast<float>(cfg_.clip_norm / norm);
    }
    const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
    for (const auto& [params, lr] : groups) {
        for (Param* p : params) {
            Eigen::ArrayXf g = p->grad * clip_scale;
            p->m = cfg_.beta1 * p->m + (1.0f - cfg_.beta1) * g;
            p->v = cfg_.beta2 * p->v + (1.0f - cfg_.beta2) * g.square();
            p->value -= lr * (p->m / bc1) / ((p->v / bc2).sqrt() + cfg_.eps);
        }
    }
}

void initHeParams(std::vector<Param*> params, Rng& rng) {
    for (Param* p : params) {
        const double std = std::sqrt(2.0 / static_cast<double>(p->value.size()));
        for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<float>(rng.normal() * std);
    }
}

}  // namespace semcom::nn
