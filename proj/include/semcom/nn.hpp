#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "semcom/rng.hpp"
#include "semcom/tensor.hpp"

namespace semcom::nn {

// ---------------------------------------------------------------------------
// Reverse-mode autograd over Tensor-valued nodes. Graphs are built per
// forward pass; backward() runs closures in reverse creation order.
// ---------------------------------------------------------------------------

struct Node;
using NodeP = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    uint64_t order = 0;
    std::vector<NodeP> parents;
    std::function<void(Node&)> backprop;  // consumes this->grad

    Tensor& ensureGrad() {
        if (grad.size() == 0) grad = Tensor(value.w(), value.h(), value.c());
        return grad;
    }
};

NodeP makeNode(Tensor v, bool needs_grad = false);
NodeP constant(Tensor v);

// Seeds out->grad with ones (scalar outputs) unless already set, then
// propagates to every reachable node with needs_grad.
void backward(const NodeP& out);

// ---------------------------------------------------------------------------
// Parameters and layers
// ---------------------------------------------------------------------------

struct Param {
    std::string name;
    Eigen::ArrayXf value, grad, m, v;

    void resize(Eigen::Index n) {
        value = Eigen::ArrayXf::Zero(n);
        grad = Eigen::ArrayXf::Zero(n);
        m = Eigen::ArrayXf::Zero(n);
        v = Eigen::ArrayXf::Zero(n);
    }
};

// Same-padding stride-1 2D convolution, odd kernel.
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int cin, int cout, int k, const std::string& name);

    void initHe(Rng& rng);
    NodeP forward(const NodeP& x);

    int cin() const { return cin_; }
    int cout() const { return cout_; }
    int kernel() const { return k_; }
    Param& weight() { return w_; }
    Param& bias() { return b_; }
    std::vector<Param*> params() { return {&w_, &b_}; }

private:
    int cin_ = 0, cout_ = 0, k_ = 0;
    Param w_, b_;  // w: cout x (cin*k*k), row-major; b: cout
};

// Per-channel normalization over the spatial extent with learnable scale
// and shift; tracks running statistics for eval mode.
class SpatialNorm {
public:
    SpatialNorm() = default;
    SpatialNorm(int channels, const std::string& name);

    NodeP forward(const NodeP& x, bool training);
    std::vector<Param*> params() { return {&gamma_, &beta_}; }
    Eigen::ArrayXf& runningMean() { return run_mean_; }
    Eigen::ArrayXf& runningVar() { return run_var_; }

private:
    int channels_ = 0;
    Param gamma_, beta_;
    Eigen::ArrayXf run_mean_, run_var_;
    float momentum_ = 0.1f;
    float eps_ = 1e-5f;
};

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

NodeP relu(const NodeP& x);
NodeP leakyRelu(const NodeP& x, float slope = 0.01f);
NodeP add(const NodeP& a, const NodeP& b);
NodeP addScaled(const NodeP& a, const NodeP& b, float s);  // a + s*b
NodeP scale(const NodeP& a, float s);
NodeP concatChannels(const NodeP& a, const NodeP& b);
NodeP sliceChannels(const NodeP& x, int z0, int count);
NodeP mulMask(const NodeP& x, const Tensor& mask);  // mask broadcast over channels when mask.c()==1

// Channel/space rearrangement per the periodic-shuffle index map:
// shuffle(T)(x,y,z) = T(x/n, y/n, (x%n)*n + (y%n) + z*n^2).
NodeP pixelShuffle(const NodeP& x, int n);
NodeP pixelUnshuffle(const NodeP& x, int n);
Tensor pixelShuffleT(const Tensor& t, int n);
Tensor pixelUnshuffleT(const Tensor& t, int n);

// Integer-factor resampling. Down: n x n block mean. Up: bilinear with
// half-pixel alignment and edge clamping.
NodeP downsampleBlock(const NodeP& x, int n);
NodeP upsampleBilinear(const NodeP& x, int n);
Tensor downsampleBlockT(const Tensor& t, int n);
Tensor upsampleBilinearT(const Tensor& t, int n);

// Backward bilinear warp: out(p) = sample(features, p + flow(p)); samples
// falling outside the grid are zero. flow has 2 channels (dx, dy).
// Differentiable in both arguments.
NodeP warp(const NodeP& features, const NodeP& flow);
Tensor warpT(const Tensor& features, const Tensor& flow);

// ---------------------------------------------------------------------------
// Losses (scalar 1x1x1 nodes)
// ---------------------------------------------------------------------------

NodeP charbonnier(const NodeP& pred, const Tensor& target, float eps, bool per_pixel_mean = false);
NodeP mseLoss(const NodeP& pred, const Tensor& target);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float clip_norm = 10.0f;  // global-norm clip; <=0 disables
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // groups: (params, lr); frozen groups are simply omitted by the caller.
    void step(const std::vector<std::pair<std::vector<Param*>, float>>& groups);
    void zeroGrad(const std::vector<Param*>& params);
    int64_t t() const { return t_; }
    void setT(int64_t t) { t_ = t; }

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
};

void initHeParams(std::vector<Param*> params, Rng& rng);

}  // namespace semcom::nn
