#include "ucl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace ucl::ag {

namespace {

thread_local bool g_grad_enabled = true;

Value make_node(Tensor val, std::vector<Value> parents, std::function<void(Node&)> backprop,
                std::string tag = {}) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    n->tag = std::move(tag);
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents)
            if (p && p->requires_grad) needs = true;
    }
    if (needs) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

void check_same_shape(const Value& a, const Value& b, const char* op) {
    if (!a->val.same_shape(b->val))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    Tensor::shape_str(a->val.shape()) + " vs " +
                                    Tensor::shape_str(b->val.shape()));
}

void check_chw(const Value& x, const char* op) {
    if (x->val.rank() != 3)
        throw std::invalid_argument(std::string(op) + ": expected (C,H,W), got " +
                                    Tensor::shape_str(x->val.shape()));
}

int conv_out_size(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

// x:(C,H,W) -> cols:(C*kh*kw, Ho*Wo), zero padding
void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int ho, int wo, Tensor& cols) {
    const int c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::int64_t span = static_cast<std::int64_t>(ho) * wo;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < c_in; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                double* row = cols.data() + ((static_cast<std::int64_t>(c) * kh + ki) * kw + kj) * span;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= h) {
                        std::fill(row + static_cast<std::int64_t>(oh) * wo,
                                  row + static_cast<std::int64_t>(oh + 1) * wo, 0.0);
                        continue;
                    }
                    const double* src = x.data() + (static_cast<std::int64_t>(c) * h + ih) * w;
                    double* dst = row + static_cast<std::int64_t>(oh) * wo;
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        dst[ow] = (iw >= 0 && iw < w) ? src[iw] : 0.0;
                    }
                }
            }
        }
    }
}

// scatter-add of cols:(C*kh*kw, Ho*Wo) back into dx:(C,H,W)
void col2im_accum(const Tensor& cols, int kh, int kw, int stride, int pad, int ho, int wo, Tensor& dx) {
    const int c_in = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
    const std::int64_t span = static_cast<std::int64_t>(ho) * wo;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < c_in; ++c) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const double* row = cols.data() + ((static_cast<std::int64_t>(c) * kh + ki) * kw + kj) * span;
                for (int oh = 0; oh < ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= h) continue;
                    double* dst = dx.data() + (static_cast<std::int64_t>(c) * h + ih) * w;
                    const double* src = row + static_cast<std::int64_t>(oh) * wo;
                    for (int ow = 0; ow < wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < w) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

struct BilinearTap {
    int i0, i1;
    double w0, w1;
};

BilinearTap bilinear_tap(int dst, int out_size, int in_size) {
    const double scale = static_cast<double>(in_size) / out_size;
    double src = (dst + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    if (src > in_size - 1) src = in_size - 1;
    BilinearTap t;
    t.i0 = static_cast<int>(std::floor(src));
    t.i1 = std::min(t.i0 + 1, in_size - 1);
    t.w1 = src - t.i0;
    t.w0 = 1.0 - t.w1;
    return t;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

Value constant(Tensor v, std::string tag) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->tag = std::move(tag);
    return n;
}

Value parameter(Tensor v, std::string tag) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = true;
    n->tag = std::move(tag);
    return n;
}

Value detach(const Value& x) { return constant(x->val, x->tag); }

void backward(const Value& root) {
    if (root->val.size() != 1) throw std::logic_error("backward: root must be scalar");
    if (!root->requires_grad) return;

    // iterative post-order DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> done;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    std::unordered_set<Node*> on_stack{root.get()};
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !done.count(p) && !on_stack.count(p)) {
                stack.emplace_back(p, 0);
                on_stack.insert(p);
            }
        } else {
            done.insert(node);
            order.push_back(node);
            on_stack.erase(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

// ---------------------------------------------------------------- elementwise

Value add(const Value& a, const Value& b) {
    check_same_shape(a, b, "add");
    Tensor out(a->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->val[i] + b->val[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = n.parents[k];
            if (!p->requires_grad) continue;
            Tensor& g = p->ensure_grad();
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Value sub(const Value& a, const Value& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->val[i] - b->val[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Value mul(const Value& a, const Value& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->val[i] * b->val[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->val;
        const Tensor& bv = n.parents[1]->val;
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
        }
    });
}

Value divide(const Value& a, const Value& b) {
    check_same_shape(a, b, "divide");
    Tensor out(a->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->val[i] / b->val[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = n.parents[0]->val;
        const Tensor& bv = n.parents[1]->val;
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / bv[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

Value add_scalar(const Value& a, double s) {
    Tensor out(a->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->val[i] + s;
    return make_node(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Value mul_scalar(const Value& a, double s) {
    Tensor out(a->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->val[i] * s;
    return make_node(std::move(out), {a}, [s](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
    });
}

Value relu(const Value& a) {
    Tensor out(a->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a->val[i] > 0 ? a->val[i] : 0.0;
    return make_node(std::move(out), {a}, [](Node& n) {
        const Tensor& x = n.parents[0]->val;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.size(); ++i)
            if (x[i] > 0) g[i] += n.grad[i];
    });
}

Value lrelu(const Value& a, double slope) {
    Tensor out(a->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = a->val[i] > 0 ? a->val[i] : slope * a->val[i];
    return make_node(std::move(out), {a}, [slope](Node& n) {
        const Tensor& x = n.parents[0]->val;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (x[i] > 0 ? 1.0 : slope);
    });
}

Value tanh(const Value& a) {
    Tensor out(a->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a->val[i]);
    return make_node(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (1.0 - n.val[i] * n.val[i]);
    });
}

Value sigmoid(const Value& a) {
    Tensor out(a->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a->val[i]));
    return make_node(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.val[i] * (1.0 - n.val[i]);
    });
}

Value abs(const Value& a) {
    Tensor out(a->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::abs(a->val[i]);
    return make_node(std::move(out), {a}, [](Node& n) {
        const Tensor& x = n.parents[0]->val;
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.size(); ++i)
            g[i] += n.grad[i] * (x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0));
    });
}

// ---------------------------------------------------------------- reductions

Value sum_all(const Value& a) {
    Tensor out({1});
    out[0] = a->val.sum();
    return make_node(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        const double gv = n.grad[0];
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] += gv;
    });
}

Value mean_all(const Value& a) {
    if (a->val.size() == 0) throw std::invalid_argument("mean_all: empty tensor");
    Tensor out({1});
    out[0] = a->val.sum() / static_cast<double>(a->val.size());
    return make_node(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        const double gv = n.grad[0] / static_cast<double>(g.size());
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] += gv;
    });
}

Value channel_mean(const Value& a) {
    check_chw(a, "channel_mean");
    const int c = a->val.dim(0), h = a->val.dim(1), w = a->val.dim(2);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor out({c});
    for (int ci = 0; ci < c; ++ci) {
        double s = 0.0;
        const double* p = a->val.data() + ci * hw;
        for (std::int64_t i = 0; i < hw; ++i) s += p[i];
        out[ci] = s / static_cast<double>(hw);
    }
    return make_node(std::move(out), {a}, [c, hw](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int ci = 0; ci < c; ++ci) {
            const double gv = n.grad[ci] / static_cast<double>(hw);
            double* p = g.data() + ci * hw;
            for (std::int64_t i = 0; i < hw; ++i) p[i] += gv;
        }
    });
}

Value broadcast_chw(const Value& v, int h, int w) {
    if (v->val.rank() != 1) throw std::invalid_argument("broadcast_chw: expected (C)");
    const int c = v->val.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor out({c, h, w});
    for (int ci = 0; ci < c; ++ci) {
        double* p = out.data() + ci * hw;
        std::fill(p, p + hw, v->val[ci]);
    }
    return make_node(std::move(out), {v}, [c, hw](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int ci = 0; ci < c; ++ci) {
            const double* p = n.grad.data() + ci * hw;
            double s = 0.0;
            for (std::int64_t i = 0; i < hw; ++i) s += p[i];
            g[ci] += s;
        }
    });
}

Value rsqrt_eps(const Value& v, double eps) {
    Tensor out(v->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / std::sqrt(v->val[i] + eps);
    return make_node(std::move(out), {v}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.size(); ++i)
            g[i] += n.grad[i] * (-0.5) * n.val[i] * n.val[i] * n.val[i];
    });
}

// --------------------------------------------------------------------- shape

Value reshape(const Value& a, std::vector<int> shape) {
    if (Tensor::count(shape) != a->val.size())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out(shape);
    std::copy(a->val.data(), a->val.data() + a->val.size(), out.data());
    return make_node(std::move(out), {a}, [](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Value concat_channels(const Value& a, const Value& b) {
    check_chw(a, "concat_channels");
    check_chw(b, "concat_channels");
    if (a->val.dim(1) != b->val.dim(1) || a->val.dim(2) != b->val.dim(2))
        throw std::invalid_argument("concat_channels: spatial mismatch");
    const int ca = a->val.dim(0), cb = b->val.dim(0), h = a->val.dim(1), w = a->val.dim(2);
    Tensor out({ca + cb, h, w});
    std::copy(a->val.data(), a->val.data() + a->val.size(), out.data());
    std::copy(b->val.data(), b->val.data() + b->val.size(), out.data() + a->val.size());
    const std::int64_t na = a->val.size();
    return make_node(std::move(out), {a, b}, [na](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (std::int64_t i = 0; i < na; ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[na + i];
        }
    });
}

Value slice_channels(const Value& a, int c0, int c1) {
    check_chw(a, "slice_channels");
    if (c0 < 0 || c1 > a->val.dim(0) || c0 >= c1)
        throw std::invalid_argument("slice_channels: bad range");
    const int h = a->val.dim(1), w = a->val.dim(2);
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    Tensor out({c1 - c0, h, w});
    std::copy(a->val.data() + c0 * hw, a->val.data() + c1 * hw, out.data());
    return make_node(std::move(out), {a}, [c0, hw](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        double* dst = g.data() + c0 * hw;
        for (std::int64_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
    });
}

Value concat_rows(const Value& a, const Value& b) {
    if (a->val.rank() != 2 || b->val.rank() != 2 || a->val.dim(1) != b->val.dim(1))
        throw std::invalid_argument("concat_rows: need (N,K) with equal K");
    Tensor out({a->val.dim(0) + b->val.dim(0), a->val.dim(1)});
    std::copy(a->val.data(), a->val.data() + a->val.size(), out.data());
    std::copy(b->val.data(), b->val.data() + b->val.size(), out.data() + a->val.size());
    const std::int64_t na = a->val.size();
    return make_node(std::move(out), {a, b}, [na](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& g = n.parents[0]->ensure_grad();
            for (std::int64_t i = 0; i < na; ++i) g[i] += n.grad[i];
        }
        if (n.parents[1]->requires_grad) {
            Tensor& g = n.parents[1]->ensure_grad();
            for (std::int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[na + i];
        }
    });
}

Value reflect_pad2d(const Value& a, int pad) {
    check_chw(a, "reflect_pad2d");
    const int c = a->val.dim(0), h = a->val.dim(1), w = a->val.dim(2);
    if (h < pad + 1 || w < pad + 1)
        throw std::invalid_argument("reflect_pad2d: input too small for pad");
    const int ho = h + 2 * pad, wo = w + 2 * pad;
    Tensor out({c, ho, wo});
    for (int ci = 0; ci < c; ++ci)
        for (int oh = 0; oh < ho; ++oh) {
            const int ih = reflect_index(oh - pad, h);
            for (int ow = 0; ow < wo; ++ow)
                out.at3(ci, oh, ow) = a->val.at3(ci, ih, reflect_index(ow - pad, w));
        }
    return make_node(std::move(out), {a}, [c, h, w, pad, ho, wo](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int ci = 0; ci < c; ++ci)
            for (int oh = 0; oh < ho; ++oh) {
                const int ih = reflect_index(oh - pad, h);
                for (int ow = 0; ow < wo; ++ow)
                    g.at3(ci, ih, reflect_index(ow - pad, w)) += n.grad.at3(ci, oh, ow);
            }
    });
}

Value crop2d(const Value& a, int top, int left, int h, int w) {
    check_chw(a, "crop2d");
    const int c = a->val.dim(0);
    if (top < 0 || left < 0 || top + h > a->val.dim(1) || left + w > a->val.dim(2))
        throw std::invalid_argument("crop2d: window out of range");
    Tensor out({c, h, w});
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) out.at3(ci, i, j) = a->val.at3(ci, top + i, left + j);
    return make_node(std::move(out), {a}, [c, top, left, h, w](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) g.at3(ci, top + i, left + j) += n.grad.at3(ci, i, j);
    });
}

// ---------------------------------------------------------------------- conv

Value conv2d(const Value& x, const Value& w, const Value& b, int stride, int pad) {
    check_chw(x, "conv2d");
    if (w->val.rank() != 4) throw std::invalid_argument("conv2d: weight must be (Cout,Cin,kh,kw)");
    const int cin = x->val.dim(0), h = x->val.dim(1), win = x->val.dim(2);
    const int cout = w->val.dim(0), kh = w->val.dim(2), kw = w->val.dim(3);
    if (w->val.dim(1) != cin) throw std::invalid_argument("conv2d: channel mismatch");
    const int ho = conv_out_size(h, kh, stride, pad);
    const int wo = conv_out_size(win, kw, stride, pad);
    if (ho < 1 || wo < 1)
        throw std::invalid_argument("conv2d: input smaller than kernel footprint");

    const int kdim = cin * kh * kw;
    const std::int64_t span = static_cast<std::int64_t>(ho) * wo;
    Tensor cols({kdim, ho * wo});
    im2col(x->val, kh, kw, stride, pad, ho, wo, cols);

    Tensor out({cout, ho, wo});
    gemm(w->val.data(), cols.data(), out.data(), cout, kdim, static_cast<int>(span));
    const bool has_bias = b && b->val.size() > 0;
    if (has_bias) {
        for (int co = 0; co < cout; ++co) {
            double* p = out.data() + co * span;
            const double bias = b->val[co];
            for (std::int64_t i = 0; i < span; ++i) p[i] += bias;
        }
    }

    std::vector<Value> parents = {x, w};
    if (has_bias) parents.push_back(b);
    return make_node(std::move(out), std::move(parents),
                     [stride, pad, kh, kw, kdim, cout, ho, wo, span, has_bias](Node& n) {
                         const Value& xp = n.parents[0];
                         const Value& wp = n.parents[1];
                         if (has_bias && n.parents[2]->requires_grad) {
                             Tensor& gb = n.parents[2]->ensure_grad();
                             for (int co = 0; co < cout; ++co) {
                                 const double* p = n.grad.data() + co * span;
                                 double s = 0.0;
                                 for (std::int64_t i = 0; i < span; ++i) s += p[i];
                                 gb[co] += s;
                             }
                         }
                         if (wp->requires_grad) {
                             Tensor cols({kdim, static_cast<int>(span)});
                             im2col(xp->val, kh, kw, stride, pad, ho, wo, cols);
                             Tensor& gw = wp->ensure_grad();
                             gemm_nt(n.grad.data(), cols.data(), gw.data(), cout,
                                     static_cast<int>(span), kdim, /*accumulate=*/true);
                         }
                         if (xp->requires_grad) {
                             Tensor dcols({kdim, static_cast<int>(span)});
                             gemm_tn(wp->val.data(), n.grad.data(), dcols.data(), kdim, cout,
                                     static_cast<int>(span));
                             Tensor& gx = xp->ensure_grad();
                             col2im_accum(dcols, kh, kw, stride, pad, ho, wo, gx);
                         }
                     });
}

Value conv_transpose2d(const Value& x, const Value& w, const Value& b, int stride, int pad,
                       int out_pad) {
    check_chw(x, "conv_transpose2d");
    if (w->val.rank() != 4)
        throw std::invalid_argument("conv_transpose2d: weight must be (Cin,Cout,kh,kw)");
    if (out_pad < 0 || out_pad >= stride)
        throw std::invalid_argument("conv_transpose2d: out_pad must be in [0, stride)");
    const int cin = x->val.dim(0), h = x->val.dim(1), win = x->val.dim(2);
    if (w->val.dim(0) != cin) throw std::invalid_argument("conv_transpose2d: channel mismatch");
    const int cout = w->val.dim(1), kh = w->val.dim(2), kw = w->val.dim(3);
    const int ho = (h - 1) * stride - 2 * pad + kh + out_pad;
    const int wo = (win - 1) * stride - 2 * pad + kw + out_pad;
    if (ho < 1 || wo < 1) throw std::invalid_argument("conv_transpose2d: empty output");

    const int kdim = cout * kh * kw;
    const std::int64_t hw = static_cast<std::int64_t>(h) * win;
    Tensor cols({kdim, static_cast<int>(hw)});
    // cols = W^T (Cin x kdim)^T * X (Cin x hw)
    gemm_tn(w->val.data(), x->val.data(), cols.data(), kdim, cin, static_cast<int>(hw));

    Tensor out({cout, ho, wo});
    col2im_accum(cols, kh, kw, stride, pad, h, win, out);
    const bool has_bias = b && b->val.size() > 0;
    if (has_bias) {
        const std::int64_t span = static_cast<std::int64_t>(ho) * wo;
        for (int co = 0; co < cout; ++co) {
            double* p = out.data() + co * span;
            const double bias = b->val[co];
            for (std::int64_t i = 0; i < span; ++i) p[i] += bias;
        }
    }

    std::vector<Value> parents = {x, w};
    if (has_bias) parents.push_back(b);
    return make_node(
        std::move(out), std::move(parents),
        [stride, pad, kh, kw, kdim, cin, cout, h, win, ho, wo, hw, has_bias](Node& n) {
            const Value& xp = n.parents[0];
            const Value& wp = n.parents[1];
            if (has_bias && n.parents[2]->requires_grad) {
                const std::int64_t span = static_cast<std::int64_t>(ho) * wo;
                Tensor& gb = n.parents[2]->ensure_grad();
                for (int co = 0; co < cout; ++co) {
                    const double* p = n.grad.data() + co * span;
                    double s = 0.0;
                    for (std::int64_t i = 0; i < span; ++i) s += p[i];
                    gb[co] += s;
                }
            }
            Tensor dcols({kdim, static_cast<int>(hw)});
            im2col(n.grad, kh, kw, stride, pad, h, win, dcols);
            if (xp->requires_grad) {
                Tensor& gx = xp->ensure_grad();
                gemm(wp->val.data(), dcols.data(), gx.data(), cin, kdim, static_cast<int>(hw),
                     /*accumulate=*/true);
            }
            if (wp->requires_grad) {
                Tensor& gw = wp->ensure_grad();
                gemm_nt(xp->val.data(), dcols.data(), gw.data(), cin, static_cast<int>(hw), kdim,
                        /*accumulate=*/true);
            }
        });
}

// ------------------------------------------------------------------- pooling

namespace {
int pool_out_size(int in, int kernel, int stride, bool ceil_mode) {
    if (in < 1) return 0;
    int num = in - kernel;
    int o;
    if (ceil_mode)
        o = (num + stride - 1) / stride + 1;  // num >= 0 path; handled below otherwise
    else
        o = num / stride + 1;
    if (num < 0) o = ceil_mode ? 1 : 0;
    // last window must start inside the input
    while (o > 1 && (o - 1) * stride >= in) --o;
    return o;
}
}  // namespace

Value avg_pool2d(const Value& x, int kernel, int stride, bool ceil_mode) {
    check_chw(x, "avg_pool2d");
    const int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
    const int ho = pool_out_size(h, kernel, stride, ceil_mode);
    const int wo = pool_out_size(w, kernel, stride, ceil_mode);
    if (ho < 1 || wo < 1) throw std::invalid_argument("avg_pool2d: empty output");
    Tensor out({c, ho, wo});
    for (int ci = 0; ci < c; ++ci)
        for (int oh = 0; oh < ho; ++oh)
            for (int ow = 0; ow < wo; ++ow) {
                const int h0 = oh * stride, w0 = ow * stride;
                const int h1 = std::min(h0 + kernel, h), w1 = std::min(w0 + kernel, w);
                double s = 0.0;
                for (int i = h0; i < h1; ++i)
                    for (int j = w0; j < w1; ++j) s += x->val.at3(ci, i, j);
                out.at3(ci, oh, ow) = s / ((h1 - h0) * (w1 - w0));
            }
    return make_node(std::move(out), {x}, [c, h, w, ho, wo, kernel, stride](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int ci = 0; ci < c; ++ci)
            for (int oh = 0; oh < ho; ++oh)
                for (int ow = 0; ow < wo; ++ow) {
                    const int h0 = oh * stride, w0 = ow * stride;
                    const int h1 = std::min(h0 + kernel, h), w1 = std::min(w0 + kernel, w);
                    const double gv = n.grad.at3(ci, oh, ow) / ((h1 - h0) * (w1 - w0));
                    for (int i = h0; i < h1; ++i)
                        for (int j = w0; j < w1; ++j) g.at3(ci, i, j) += gv;
                }
    });
}

Value max_pool2d(const Value& x, int kernel, int stride, bool ceil_mode) {
    check_chw(x, "max_pool2d");
    const int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
    const int ho = pool_out_size(h, kernel, stride, ceil_mode);
    const int wo = pool_out_size(w, kernel, stride, ceil_mode);
    if (ho < 1 || wo < 1) throw std::invalid_argument("max_pool2d: empty output");
    Tensor out({c, ho, wo});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<size_t>(out.size()));
    std::int64_t k = 0;
    for (int ci = 0; ci < c; ++ci)
        for (int oh = 0; oh < ho; ++oh)
            for (int ow = 0; ow < wo; ++ow, ++k) {
                const int h0 = oh * stride, w0 = ow * stride;
                const int h1 = std::min(h0 + kernel, h), w1 = std::min(w0 + kernel, w);
                double best = -1e300;
                std::int64_t best_idx = 0;
                for (int i = h0; i < h1; ++i)
                    for (int j = w0; j < w1; ++j) {
                        const double v = x->val.at3(ci, i, j);
                        if (v > best) {
                            best = v;
                            best_idx = (static_cast<std::int64_t>(ci) * h + i) * w + j;
                        }
                    }
                out.at3(ci, oh, ow) = best;
                (*argmax)[static_cast<size_t>(k)] = best_idx;
            }
    return make_node(std::move(out), {x}, [argmax](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (std::int64_t i = 0; i < n.grad.size(); ++i) g[(*argmax)[static_cast<size_t>(i)]] += n.grad[i];
    });
}

Value upsample_bilinear2d(const Value& x, int out_h, int out_w) {
    check_chw(x, "upsample_bilinear2d");
    const int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
    Tensor out({c, out_h, out_w});
    std::vector<BilinearTap> th(static_cast<size_t>(out_h)), tw(static_cast<size_t>(out_w));
    for (int i = 0; i < out_h; ++i) th[static_cast<size_t>(i)] = bilinear_tap(i, out_h, h);
    for (int j = 0; j < out_w; ++j) tw[static_cast<size_t>(j)] = bilinear_tap(j, out_w, w);
    for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < out_h; ++i)
            for (int j = 0; j < out_w; ++j) {
                const auto& a = th[static_cast<size_t>(i)];
                const auto& bt = tw[static_cast<size_t>(j)];
                out.at3(ci, i, j) = a.w0 * (bt.w0 * x->val.at3(ci, a.i0, bt.i0) +
                                            bt.w1 * x->val.at3(ci, a.i0, bt.i1)) +
                                    a.w1 * (bt.w0 * x->val.at3(ci, a.i1, bt.i0) +
                                            bt.w1 * x->val.at3(ci, a.i1, bt.i1));
            }
    return make_node(std::move(out), {x}, [c, out_h, out_w, th, tw](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < out_h; ++i)
                for (int j = 0; j < out_w; ++j) {
                    const auto& a = th[static_cast<size_t>(i)];
                    const auto& bt = tw[static_cast<size_t>(j)];
                    const double gv = n.grad.at3(ci, i, j);
                    g.at3(ci, a.i0, bt.i0) += gv * a.w0 * bt.w0;
                    g.at3(ci, a.i0, bt.i1) += gv * a.w0 * bt.w1;
                    g.at3(ci, a.i1, bt.i0) += gv * a.w1 * bt.w0;
                    g.at3(ci, a.i1, bt.i1) += gv * a.w1 * bt.w1;
                }
    });
}

// ------------------------------------------------------------ linear algebra

Value linear(const Value& x, const Value& w, const Value& b) {
    if (x->val.rank() != 2 || w->val.rank() != 2 || x->val.dim(1) != w->val.dim(1))
        throw std::invalid_argument("linear: x (N,Ci), w (Co,Ci) required");
    const int n_rows = x->val.dim(0), ci = x->val.dim(1), co = w->val.dim(0);
    Tensor out({n_rows, co});
    gemm_nt(x->val.data(), w->val.data(), out.data(), n_rows, ci, co);
    const bool has_bias = b && b->val.size() > 0;
    if (has_bias)
        for (int r = 0; r < n_rows; ++r)
            for (int c = 0; c < co; ++c) out.at2(r, c) += b->val[c];
    std::vector<Value> parents = {x, w};
    if (has_bias) parents.push_back(b);
    return make_node(std::move(out), std::move(parents), [n_rows, ci, co, has_bias](Node& n) {
        const Value& xp = n.parents[0];
        const Value& wp = n.parents[1];
        if (has_bias && n.parents[2]->requires_grad) {
            Tensor& gb = n.parents[2]->ensure_grad();
            for (int r = 0; r < n_rows; ++r)
                for (int c = 0; c < co; ++c) gb[c] += n.grad.at2(r, c);
        }
        if (xp->requires_grad) {
            Tensor& gx = xp->ensure_grad();
            gemm(n.grad.data(), wp->val.data(), gx.data(), n_rows, co, ci, /*accumulate=*/true);
        }
        if (wp->requires_grad) {
            Tensor& gw = wp->ensure_grad();
            gemm_tn(n.grad.data(), xp->val.data(), gw.data(), co, n_rows, ci, /*accumulate=*/true);
        }
    });
}

Value l2_normalize_rows(const Value& x, double eps) {
    if (x->val.rank() != 2) throw std::invalid_argument("l2_normalize_rows: expected (N,K)");
    const int n_rows = x->val.dim(0), k = x->val.dim(1);
    Tensor out({n_rows, k});
    std::vector<double> norms(static_cast<size_t>(n_rows));
    for (int r = 0; r < n_rows; ++r) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += x->val.at2(r, j) * x->val.at2(r, j);
        const double norm = std::sqrt(s) + eps;
        norms[static_cast<size_t>(r)] = norm;
        for (int j = 0; j < k; ++j) out.at2(r, j) = x->val.at2(r, j) / norm;
    }
    return make_node(std::move(out), {x}, [n_rows, k, norms](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        for (int r = 0; r < n_rows; ++r) {
            double dot = 0.0;
            for (int j = 0; j < k; ++j) dot += n.grad.at2(r, j) * n.val.at2(r, j);
            const double inv = 1.0 / norms[static_cast<size_t>(r)];
            for (int j = 0; j < k; ++j)
                g.at2(r, j) += (n.grad.at2(r, j) - n.val.at2(r, j) * dot) * inv;
        }
    });
}

Value matmul_nt(const Value& a, const Value& b) {
    if (a->val.rank() != 2 || b->val.rank() != 2 || a->val.dim(1) != b->val.dim(1))
        throw std::invalid_argument("matmul_nt: a (N,K), b (M,K) required");
    const int n_rows = a->val.dim(0), k = a->val.dim(1), m = b->val.dim(0);
    Tensor out({n_rows, m});
    gemm_nt(a->val.data(), b->val.data(), out.data(), n_rows, k, m);
    return make_node(std::move(out), {a, b}, [n_rows, k, m](Node& n) {
        if (n.parents[0]->requires_grad) {
            Tensor& ga = n.parents[0]->ensure_grad();
            gemm(n.grad.data(), n.parents[1]->val.data(), ga.data(), n_rows, m, k, true);
        }
        if (n.parents[1]->requires_grad) {
            Tensor& gb = n.parents[1]->ensure_grad();
            gemm_tn(n.grad.data(), n.parents[0]->val.data(), gb.data(), m, n_rows, k, true);
        }
    });
}

Value gather_spatial(const Value& x, std::vector<int> indices) {
    check_chw(x, "gather_spatial");
    const int c = x->val.dim(0);
    const std::int64_t hw = static_cast<std::int64_t>(x->val.dim(1)) * x->val.dim(2);
    for (int idx : indices)
        if (idx < 0 || idx >= hw) throw std::out_of_range("gather_spatial: index out of range");
    const int s = static_cast<int>(indices.size());
    Tensor out({s, c});
    for (int r = 0; r < s; ++r)
        for (int ci = 0; ci < c; ++ci) out.at2(r, ci) = x->val[ci * hw + indices[static_cast<size_t>(r)]];
    return make_node(std::move(out), {x}, [c, hw, indices](Node& n) {
        Tensor& g = n.parents[0]->ensure_grad();
        const int s = static_cast<int>(indices.size());
        for (int r = 0; r < s; ++r)
            for (int ci = 0; ci < c; ++ci)
                g[ci * hw + indices[static_cast<size_t>(r)]] += n.grad.at2(r, ci);
    });
}

Value cross_entropy_rows(const Value& logits, std::vector<int> targets) {
    if (logits->val.rank() != 2) throw std::invalid_argument("cross_entropy_rows: expected (N,M)");
    const int n_rows = logits->val.dim(0), m = logits->val.dim(1);
    if (static_cast<int>(targets.size()) != n_rows)
        throw std::invalid_argument("cross_entropy_rows: one target per row required");
    for (int t : targets)
        if (t < 0 || t >= m) throw std::out_of_range("cross_entropy_rows: target out of range");
    double total = 0.0;
    for (int r = 0; r < n_rows; ++r) {
        double zmax = -1e300;
        for (int j = 0; j < m; ++j) zmax = std::max(zmax, logits->val.at2(r, j));
        double lse = 0.0;
        for (int j = 0; j < m; ++j) lse += std::exp(logits->val.at2(r, j) - zmax);
        total += std::log(lse) + zmax - logits->val.at2(r, targets[static_cast<size_t>(r)]);
    }
    Tensor out({1});
    out[0] = total;
    return make_node(std::move(out), {logits}, [n_rows, m, targets](Node& n) {
        const Tensor& z = n.parents[0]->val;
        Tensor& g = n.parents[0]->ensure_grad();
        const double gv = n.grad[0];
        for (int r = 0; r < n_rows; ++r) {
            double zmax = -1e300;
            for (int j = 0; j < m; ++j) zmax = std::max(zmax, z.at2(r, j));
            double lse = 0.0;
            for (int j = 0; j < m; ++j) lse += std::exp(z.at2(r, j) - zmax);
            for (int j = 0; j < m; ++j) {
                double p = std::exp(z.at2(r, j) - zmax) / lse;
                if (j == targets[static_cast<size_t>(r)]) p -= 1.0;
                g.at2(r, j) += gv * p;
            }
        }
    });
}

Value spectral_scale(const Value& w, const Tensor& u, const Tensor& v) {
    const int rows = w->val.dim(0);
    const int cols = static_cast<int>(w->val.size() / rows);
    if (u.size() != rows || v.size() != cols)
        throw std::invalid_argument("spectral_scale: u/v size mismatch");
    // sigma = u^T W v
    double sigma = 0.0;
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        const double* wr = w->val.data() + static_cast<std::int64_t>(r) * cols;
        for (int c = 0; c < cols; ++c) s += wr[c] * v[c];
        sigma += u[r] * s;
    }
    Tensor out(w->val.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = w->val[i] / sigma;
    Tensor uc = u, vc = v;
    return make_node(std::move(out), {w}, [rows, cols, sigma, uc, vc](Node& n) {
        const Tensor& wv = n.parents[0]->val;
        Tensor& g = n.parents[0]->ensure_grad();
        double dot = 0.0;  // sum g_up .* w
        for (std::int64_t i = 0; i < n.grad.size(); ++i) dot += n.grad[i] * wv[i];
        const double k = dot / (sigma * sigma);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const std::int64_t i = static_cast<std::int64_t>(r) * cols + c;
                g[i] += n.grad[i] / sigma - k * uc[r] * vc[c];
            }
    });
}

Value mean_abs_diff(const Value& a, const Value& b) { return mean_all(abs(sub(a, b))); }

}  // namespace ucl::ag
