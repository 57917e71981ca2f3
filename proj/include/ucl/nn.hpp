#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ucl/errors.hpp"
#include "ucl/graph.hpp"
#include "ucl/rng.hpp"
#include "ucl/tensor.hpp"

namespace ucl::nn {

struct ParamRef {
    std::string name;
    ag::Value node;
};

struct BufferRef {
    std::string name;
    Tensor* tensor;
};

enum class NormKind { Instance, None };

// ---- spectral normalization --------------------------------------------

struct SpectralState {
    Tensor u, v;
    bool initialized = false;
};

// Divides w by its largest singular value, estimated with `iterations` power
// iterations on the (rows, rest) matricization. All-zero weights are returned
// unchanged. Persisted u/v in `state` carry across calls.
Tensor spectral_normalize(const Tensor& w, SpectralState& state, int iterations, Rng* rng = nullptr);

// One power-iteration sweep updating state.u / state.v in place.
void power_iterate(const Tensor& w, SpectralState& state, int iterations, Rng* rng);

// ---- layers --------------------------------------------------------------

class Conv2d {
public:
    Conv2d(int cin, int cout, int kernel, int stride, int pad, bool bias, bool spectral, Rng& rng,
           std::string name);

    ag::Value forward(const ag::Value& x);

    void collect_params(std::vector<ParamRef>& out) const;
    void collect_buffers(std::vector<BufferRef>& out);
    void set_training(bool t) { training_ = t; }
    ag::Value weight() const { return weight_; }
    // Normalized weight as used by the next forward pass (identity when
    // spectral norm is off).
    Tensor effective_weight() const;
    bool spectral() const { return spectral_; }

private:
    std::string name_;
    int stride_, pad_;
    bool spectral_;
    bool training_ = true;
    ag::Value weight_, bias_;
    SpectralState sn_;
};

class ConvTranspose2d {
public:
    ConvTranspose2d(int cin, int cout, int kernel, int stride, int pad, int out_pad, bool bias,
                    Rng& rng, std::string name);
    ag::Value forward(const ag::Value& x);
    void collect_params(std::vector<ParamRef>& out) const;

private:
    std::string name_;
    int stride_, pad_, out_pad_;
    ag::Value weight_, bias_;
};

class Linear {
public:
    Linear(int cin, int cout, Rng& rng, std::string name);
    ag::Value forward(const ag::Value& x);
    void collect_params(std::vector<ParamRef>& out) const;

private:
    std::string name_;
    ag::Value weight_, bias_;
};

class InstanceNorm2d {
public:
    InstanceNorm2d(int channels, NormKind kind, std::string name, double eps = 1e-5);
    ag::Value forward(const ag::Value& x);
    void collect_params(std::vector<ParamRef>& out) const;

private:
    std::string name_;
    NormKind kind_;
    double eps_;
    ag::Value gamma_, beta_;
};

// ---- optimizer -------------------------------------------------------------

class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Idempotent by parameter name; supports lazily built modules.
    void register_params(const std::vector<ParamRef>& params);
    void step(double lr, double max_grad_norm = 0.0);
    void zero_grad();
    std::int64_t step_count() const { return t_; }

    struct Slot {
        std::string name;
        ag::Value param;
        Tensor m, v;
    };
    const std::vector<Slot>& slots() const { return slots_; }
    std::vector<Slot>& slots() { return slots_; }
    void set_step_count(std::int64_t t) { t_ = t; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }

private:
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<Slot> slots_;
};

// Grad-mode helpers shared by module owners.
void set_requires_grad(const std::vector<ParamRef>& params, bool on);
void zero_grads(const std::vector<ParamRef>& params);

// init helpers
Tensor normal_init(std::vector<int> shape, double stddev, Rng& rng);
Tensor kaiming_init(std::vector<int> shape, int fan_in, Rng& rng);

}  // namespace ucl::nn
