#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ucl/tensor.hpp"

namespace ucl::ag {

// Reverse-mode autodiff over Tensor. Ops build a DAG of Nodes; backward()
// walks it in reverse topological order. A graph is consumed by a single
// backward() call; parameters are long-lived leaves whose grads accumulate
// until zeroed by the optimizer.
struct Node;
using Value = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;  // allocated on first use
    bool requires_grad = false;
    std::vector<Value> parents;
    std::function<void(Node&)> backprop;
    std::string tag;

    Tensor& ensure_grad() {
        if (grad.empty()) grad = Tensor(val.shape());
        return grad;
    }
    void zero_grad() {
        if (!grad.empty()) grad.fill(0.0);
    }
};

bool grad_enabled();

// RAII switch that disables graph construction (inference / oracle passes).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool saved_;
};

Value constant(Tensor v, std::string tag = {});
Value parameter(Tensor v, std::string tag = {});
Value detach(const Value& x);

// Seeds root->grad with ones and propagates. Root must be a scalar (size 1).
void backward(const Value& root);

// ---- elementwise / scalar ----
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value divide(const Value& a, const Value& b);
Value add_scalar(const Value& a, double s);
Value mul_scalar(const Value& a, double s);
Value relu(const Value& a);
Value lrelu(const Value& a, double slope);
Value tanh(const Value& a);
Value sigmoid(const Value& a);
Value abs(const Value& a);

// ---- reductions / broadcasting ----
Value sum_all(const Value& a);
Value mean_all(const Value& a);
// per-channel mean over H,W: (C,H,W) -> (C)
Value channel_mean(const Value& a);
// (C) -> (C,H,W)
Value broadcast_chw(const Value& v, int h, int w);
// (C) -> 1/sqrt(v + eps), elementwise
Value rsqrt_eps(const Value& v, double eps);

// ---- shape ----
Value reshape(const Value& a, std::vector<int> shape);
Value concat_channels(const Value& a, const Value& b);
Value slice_channels(const Value& a, int c0, int c1);
Value concat_rows(const Value& a, const Value& b);
Value reflect_pad2d(const Value& a, int pad);
Value crop2d(const Value& a, int top, int left, int h, int w);

// ---- conv / pooling / resampling ----
// x:(Cin,H,W) w:(Cout,Cin,kh,kw) b:(Cout) or empty Value
Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad);
// x:(Cin,H,W) w:(Cin,Cout,kh,kw); Ho=(H-1)*stride-2*pad+kh+out_pad
Value conv_transpose2d(const Value& x, const Value& w, const Value& b, int stride, int pad, int out_pad);
// Partial windows at the borders average over the in-bounds cells only.
Value avg_pool2d(const Value& x, int kernel, int stride, bool ceil_mode);
Value max_pool2d(const Value& x, int kernel, int stride, bool ceil_mode);
Value upsample_bilinear2d(const Value& x, int out_h, int out_w);

// ---- linear algebra / sampling ----
// x:(N,Ci) w:(Co,Ci) b:(Co) or empty
Value linear(const Value& x, const Value& w, const Value& b);
Value l2_normalize_rows(const Value& x, double eps = 1e-12);
// a:(N,K) b:(M,K) -> (N,M) = a b^T
Value matmul_nt(const Value& a, const Value& b);
// x:(C,H,W), flat spatial indices -> (S,C)
Value gather_spatial(const Value& x, std::vector<int> indices);
// logits:(N,M), per-row target class; sum of per-row cross entropies
Value cross_entropy_rows(const Value& logits, std::vector<int> targets);
// w / sigma with sigma = u^T W_mat v (u,v fixed); W_mat = w reshaped (rows, -1)
Value spectral_scale(const Value& w, const Tensor& u, const Tensor& v);

// mean |a-b| over all elements
Value mean_abs_diff(const Value& a, const Value& b);

}  // namespace ucl::ag
