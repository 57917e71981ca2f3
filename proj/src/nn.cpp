#include "ucl/nn.hpp"

#include <cmath>

namespace ucl::nn {

namespace {

void normalize_inplace(Tensor& x) {
    double s = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) s += x[i] * x[i];
    const double n = std::sqrt(s);
    if (n < 1e-300) return;
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] /= n;
}

}  // namespace

Tensor normal_init(std::vector<int> shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
    return t;
}

Tensor kaiming_init(std::vector<int> shape, int fan_in, Rng& rng) {
    return normal_init(std::move(shape), std::sqrt(2.0 / fan_in), rng);
}

void power_iterate(const Tensor& w, SpectralState& state, int iterations, Rng* rng) {
    const int rows = w.dim(0);
    const int cols = static_cast<int>(w.size() / rows);
    if (!state.initialized) {
        Rng local(0x5eedULL);
        Rng& r = rng ? *rng : local;
        state.u = Tensor({rows});
        state.v = Tensor({cols});
        for (int i = 0; i < rows; ++i) state.u[i] = r.normal();
        normalize_inplace(state.u);
        state.initialized = true;
    }
    for (int it = 0; it < iterations; ++it) {
        // v = normalize(W^T u)
        for (int c = 0; c < cols; ++c) {
            double s = 0.0;
            for (int r = 0; r < rows; ++r) s += w[static_cast<std::int64_t>(r) * cols + c] * state.u[r];
            state.v[c] = s;
        }
        normalize_inplace(state.v);
        // u = normalize(W v)
        for (int r = 0; r < rows; ++r) {
            double s = 0.0;
            const double* wr = w.data() + static_cast<std::int64_t>(r) * cols;
            for (int c = 0; c < cols; ++c) s += wr[c] * state.v[c];
            state.u[r] = s;
        }
        normalize_inplace(state.u);
    }
}

Tensor spectral_normalize(const Tensor& w, SpectralState& state, int iterations, Rng* rng) {
    if (!w.all_finite()) throw InputError("spectral_normalize: non-finite weight");
    if (w.abs_max() == 0.0) return w;  // sigma undefined, pass through
    power_iterate(w, state, iterations, rng);
    const int rows = w.dim(0);
    const int cols = static_cast<int>(w.size() / rows);
    double sigma = 0.0;
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        const double* wr = w.data() + static_cast<std::int64_t>(r) * cols;
        for (int c = 0; c < cols; ++c) s += wr[c] * state.v[c];
        sigma += state.u[r] * s;
    }
    Tensor out(w.shape());
    for (std::int64_t i = 0; i < w.size(); ++i) out[i] = w[i] / sigma;
    return out;
}

// ------------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int cin, int cout, int kernel, int stride, int pad, bool bias, bool spectral,
               Rng& rng, std::string name)
    : name_(std::move(name)), stride_(stride), pad_(pad), spectral_(spectral) {
    weight_ = ag::parameter(normal_init({cout, cin, kernel, kernel}, 0.02, rng), name_ + ".weight");
    if (bias) bias_ = ag::parameter(Tensor({cout}), name_ + ".bias");
    if (spectral_) {
        power_iterate(weight_->val, sn_, 1, &rng);
    }
}

ag::Value Conv2d::forward(const ag::Value& x) {
    ag::Value w = weight_;
    if (spectral_ && weight_->val.abs_max() != 0.0) {
        if (training_) power_iterate(weight_->val, sn_, 1, nullptr);
        w = ag::spectral_scale(weight_, sn_.u, sn_.v);
    }
    return ag::conv2d(x, w, bias_, stride_, pad_);
}

Tensor Conv2d::effective_weight() const {
    if (!spectral_ || weight_->val.abs_max() == 0.0) return weight_->val;
    SpectralState st = sn_;
    Tensor out(weight_->val.shape());
    const Tensor& w = weight_->val;
    const int rows = w.dim(0);
    const int cols = static_cast<int>(w.size() / rows);
    double sigma = 0.0;
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        const double* wr = w.data() + static_cast<std::int64_t>(r) * cols;
        for (int c = 0; c < cols; ++c) s += wr[c] * st.v[c];
        sigma += st.u[r] * s;
    }
    for (std::int64_t i = 0; i < w.size(); ++i) out[i] = w[i] / sigma;
    return out;
}

void Conv2d::collect_params(std::vector<ParamRef>& out) const {
    out.push_back({name_ + ".weight", weight_});
    if (bias_) out.push_back({name_ + ".bias", bias_});
}

void Conv2d::collect_buffers(std::vector<BufferRef>& out) {
    if (spectral_) {
        out.push_back({name_ + ".sn_u", &sn_.u});
        out.push_back({name_ + ".sn_v", &sn_.v});
    }
}

// ---------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(int cin, int cout, int kernel, int stride, int pad, int out_pad,
                                 bool bias, Rng& rng, std::string name)
    : name_(std::move(name)), stride_(stride), pad_(pad), out_pad_(out_pad) {
    weight_ = ag::parameter(normal_init({cin, cout, kernel, kernel}, 0.02, rng), name_ + ".weight");
    if (bias) bias_ = ag::parameter(Tensor({cout}), name_ + ".bias");
}

ag::Value ConvTranspose2d::forward(const ag::Value& x) {
    return ag::conv_transpose2d(x, weight_, bias_, stride_, pad_, out_pad_);
}

void ConvTranspose2d::collect_params(std::vector<ParamRef>& out) const {
    out.push_back({name_ + ".weight", weight_});
    if (bias_) out.push_back({name_ + ".bias", bias_});
}

// -------------------------------------------------------------------- Linear

Linear::Linear(int cin, int cout, Rng& rng, std::string name) : name_(std::move(name)) {
    // Kaiming keeps projected feature scale independent of tap width.
    weight_ = ag::parameter(kaiming_init({cout, cin}, cin, rng), name_ + ".weight");
    bias_ = ag::parameter(Tensor({cout}), name_ + ".bias");
}

ag::Value Linear::forward(const ag::Value& x) { return ag::linear(x, weight_, bias_); }

void Linear::collect_params(std::vector<ParamRef>& out) const {
    out.push_back({name_ + ".weight", weight_});
    out.push_back({name_ + ".bias", bias_});
}

// ------------------------------------------------------------ InstanceNorm2d

InstanceNorm2d::InstanceNorm2d(int channels, NormKind kind, std::string name, double eps)
    : name_(std::move(name)), kind_(kind), eps_(eps) {
    if (kind_ == NormKind::Instance) {
        gamma_ = ag::parameter(Tensor({channels}, 1.0), name_ + ".gamma");
        beta_ = ag::parameter(Tensor({channels}), name_ + ".beta");
    }
}

ag::Value InstanceNorm2d::forward(const ag::Value& x) {
    if (kind_ == NormKind::None) return x;
    const int h = x->val.dim(1), w = x->val.dim(2);
    auto mu = ag::channel_mean(x);
    auto centered = ag::sub(x, ag::broadcast_chw(mu, h, w));
    auto var = ag::channel_mean(ag::mul(centered, centered));
    auto inv = ag::rsqrt_eps(var, eps_);
    auto normed = ag::mul(centered, ag::broadcast_chw(inv, h, w));
    return ag::add(ag::mul(normed, ag::broadcast_chw(gamma_, h, w)), ag::broadcast_chw(beta_, h, w));
}

void InstanceNorm2d::collect_params(std::vector<ParamRef>& out) const {
    if (kind_ == NormKind::Instance) {
        out.push_back({name_ + ".gamma", gamma_});
        out.push_back({name_ + ".beta", beta_});
    }
}

// ---------------------------------------------------------------------- Adam

void Adam::register_params(const std::vector<ParamRef>& params) {
    for (const auto& p : params) {
        bool known = false;
        for (const auto& s : slots_)
            if (s.name == p.name) {
                known = true;
                break;
            }
        if (!known) slots_.push_back({p.name, p.node, Tensor(p.node->val.shape()), Tensor(p.node->val.shape())});
    }
}

void Adam::step(double lr, double max_grad_norm) {
    ++t_;
    double clip_scale = 1.0;
    if (max_grad_norm > 0.0) {
        double sq = 0.0;
        for (auto& s : slots_) {
            if (s.param->grad.empty()) continue;
            for (std::int64_t i = 0; i < s.param->grad.size(); ++i)
                sq += s.param->grad[i] * s.param->grad[i];
        }
        const double norm = std::sqrt(sq);
        if (norm > max_grad_norm) clip_scale = max_grad_norm / norm;
    }
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& s : slots_) {
        if (s.param->grad.empty()) continue;
        Tensor& w = s.param->val;
        const Tensor& g = s.param->grad;
        for (std::int64_t i = 0; i < w.size(); ++i) {
            const double gi = g[i] * clip_scale;
            s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * gi;
            s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (auto& s : slots_) s.param->zero_grad();
}

void set_requires_grad(const std::vector<ParamRef>& params, bool on) {
    for (const auto& p : params) p.node->requires_grad = on;
}

void zero_grads(const std::vector<ParamRef>& params) {
    for (const auto& p : params) p.node->zero_grad();
}

}  // namespace ucl::nn
