#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "ucl/graph.hpp"
#include "ucl/nn.hpp"

using namespace ucl;
using ag::Value;

namespace {

Rng& test_rng() {
    static Rng rng(0xabcdef12);
    return rng;
}

Value leaf(std::vector<int> shape) {
    return ag::parameter(oracle::random_tensor(std::move(shape), test_rng()));
}

}  // namespace

TEST_CASE("elementwise forward values") {
    auto a = ag::constant(Tensor({2, 2}, {1.0, -2.0, 3.0, -4.0}));
    auto b = ag::constant(Tensor({2, 2}, {0.5, 0.5, -0.5, 2.0}));
    CHECK(ag::add(a, b)->val[0] == doctest::Approx(1.5));
    CHECK(ag::sub(a, b)->val[1] == doctest::Approx(-2.5));
    CHECK(ag::mul(a, b)->val[2] == doctest::Approx(-1.5));
    CHECK(ag::divide(a, b)->val[3] == doctest::Approx(-2.0));
    CHECK(ag::relu(a)->val[1] == 0.0);
    CHECK(ag::lrelu(a, 0.2)->val[1] == doctest::Approx(-0.4));
    CHECK(ag::tanh(a)->val[0] == doctest::Approx(std::tanh(1.0)));
    CHECK(ag::sigmoid(a)->val[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    CHECK(ag::abs(a)->val[3] == doctest::Approx(4.0));
    CHECK(ag::mean_all(a)->val[0] == doctest::Approx(-0.5));
    CHECK(ag::sum_all(a)->val[0] == doctest::Approx(-2.0));
}

TEST_CASE("elementwise and reduction gradients") {
    auto x = leaf({2, 3, 3});
    auto other = ag::constant(oracle::random_tensor({2, 3, 3}, test_rng(), 0.5, 1.5));

    CHECK(oracle::grad_check(x, [&] { return ag::mean_all(ag::mul(x, x)); }) < 1e-6);
    CHECK(oracle::grad_check(x, [&] { return ag::sum_all(ag::divide(x, other)); }) < 1e-6);
    CHECK(oracle::grad_check(x, [&] { return ag::mean_all(ag::tanh(x)); }) < 1e-6);
    CHECK(oracle::grad_check(x, [&] { return ag::mean_all(ag::sigmoid(x)); }) < 1e-6);
    CHECK(oracle::grad_check(x, [&] {
              return ag::sum_all(ag::mul(ag::lrelu(x, 0.2), other));
          }) < 1e-4);
    CHECK(oracle::grad_check(x, [&] {
              return ag::mean_all(ag::add(ag::mul_scalar(x, 3.0), ag::add_scalar(x, 1.0)));
          }) < 1e-6);
}

TEST_CASE("shared subgraph accumulates gradients") {
    auto x = ag::parameter(Tensor({2}, {0.3, -0.7}));
    // f(x) = sum(x*x) + 2*sum(x)  => df/dx = 2x + 2
    auto loss = ag::add(ag::sum_all(ag::mul(x, x)), ag::mul_scalar(ag::sum_all(x), 2.0));
    ag::backward(loss);
    CHECK(x->grad[0] == doctest::Approx(2 * 0.3 + 2));
    CHECK(x->grad[1] == doctest::Approx(2 * -0.7 + 2));
}

TEST_CASE("instance-norm style composition gradient") {
    auto x = leaf({3, 4, 4});
    auto gamma = leaf({3});
    auto beta = leaf({3});
    auto build = [&] {
        auto mu = ag::channel_mean(x);
        auto centered = ag::sub(x, ag::broadcast_chw(mu, 4, 4));
        auto var = ag::channel_mean(ag::mul(centered, centered));
        auto inv = ag::rsqrt_eps(var, 1e-5);
        auto normed = ag::mul(centered, ag::broadcast_chw(inv, 4, 4));
        auto out = ag::add(ag::mul(normed, ag::broadcast_chw(gamma, 4, 4)),
                           ag::broadcast_chw(beta, 4, 4));
        return ag::mean_all(ag::mul(out, out));
    };
    CHECK(oracle::grad_check(x, build, 1e-6) < 1e-3);
    CHECK(oracle::grad_check(gamma, build) < 1e-5);
    CHECK(oracle::grad_check(beta, build) < 1e-5);
}

TEST_CASE("conv2d forward matches direct loops") {
    Rng rng(7);
    auto x = ag::constant(oracle::random_tensor({2, 5, 5}, rng));
    auto w = ag::constant(oracle::random_tensor({3, 2, 3, 3}, rng));
    auto b = ag::constant(oracle::random_tensor({3}, rng));
    auto y = ag::conv2d(x, w, b, 2, 1);
    CHECK(y->val.shape() == std::vector<int>{3, 3, 3});
    // direct evaluation at a couple of positions
    for (auto [co, oh, ow] : {std::array<int, 3>{0, 0, 0}, {2, 1, 2}, {1, 2, 1}}) {
        double acc = b->val[co];
        for (int ci = 0; ci < 2; ++ci)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    const int ih = oh * 2 - 1 + i, iw = ow * 2 - 1 + j;
                    if (ih < 0 || ih >= 5 || iw < 0 || iw >= 5) continue;
                    acc += x->val.at3(ci, ih, iw) * w->val[((co * 2 + ci) * 3 + i) * 3 + j];
                }
        CHECK(y->val.at3(co, oh, ow) == doctest::Approx(acc));
    }
}

TEST_CASE("conv2d gradients (input, weight, bias)") {
    auto x = leaf({2, 6, 5});
    auto w = leaf({3, 2, 3, 3});
    auto b = leaf({3});
    auto scale = ag::constant(oracle::random_tensor({3, 3, 3}, test_rng()));
    auto build = [&] { return ag::sum_all(ag::mul(ag::conv2d(x, w, b, 2, 1), scale)); };
    CHECK(oracle::grad_check(x, build) < 1e-5);
    CHECK(oracle::grad_check(w, build) < 1e-5);
    CHECK(oracle::grad_check(b, build) < 1e-5);
}

TEST_CASE("conv_transpose2d shape and gradients") {
    auto x = leaf({3, 4, 4});
    auto w = leaf({3, 2, 3, 3});
    auto b = leaf({2});
    auto y = ag::conv_transpose2d(x, w, b, 2, 1, 1);
    CHECK(y->val.shape() == std::vector<int>{2, 8, 8});
    auto scale = ag::constant(oracle::random_tensor({2, 8, 8}, test_rng()));
    auto build = [&] {
        return ag::sum_all(ag::mul(ag::conv_transpose2d(x, w, b, 2, 1, 1), scale));
    };
    CHECK(oracle::grad_check(x, build) < 1e-5);
    CHECK(oracle::grad_check(w, build) < 1e-5);
    CHECK(oracle::grad_check(b, build) < 1e-5);
}

TEST_CASE("pooling and resampling gradients") {
    auto x = leaf({2, 6, 6});
    auto scale7 = ag::constant(oracle::random_tensor({2, 2, 2}, test_rng()));
    CHECK(oracle::grad_check(x, [&] {
              return ag::sum_all(ag::mul(ag::avg_pool2d(x, 4, 4, true), scale7));
          }) < 1e-5);
    auto scale8 = ag::constant(oracle::random_tensor({2, 3, 3}, test_rng()));
    CHECK(oracle::grad_check(x, [&] {
              return ag::sum_all(ag::mul(ag::max_pool2d(x, 2, 2, true), scale8));
          }) < 1e-4);
    auto scale9 = ag::constant(oracle::random_tensor({2, 9, 11}, test_rng()));
    CHECK(oracle::grad_check(x, [&] {
              return ag::sum_all(ag::mul(ag::upsample_bilinear2d(x, 9, 11), scale9));
          }) < 1e-5);
}

TEST_CASE("avg_pool2d partial windows average over in-bounds cells") {
    Tensor t({1, 3, 3});
    for (int i = 0; i < 9; ++i) t[i] = i + 1.0;
    auto y = ag::avg_pool2d(ag::constant(t), 2, 2, true);
    CHECK(y->val.shape() == std::vector<int>{1, 2, 2});
    CHECK(y->val.at3(0, 0, 0) == doctest::Approx((1 + 2 + 4 + 5) / 4.0));
    CHECK(y->val.at3(0, 0, 1) == doctest::Approx((3 + 6) / 2.0));
    CHECK(y->val.at3(0, 1, 1) == doctest::Approx(9.0));
}

TEST_CASE("padding, cropping, concat, slice gradients") {
    auto x = leaf({2, 5, 6});
    auto scale = ag::constant(oracle::random_tensor({2, 9, 10}, test_rng()));
    CHECK(oracle::grad_check(x, [&] {
              return ag::sum_all(ag::mul(ag::reflect_pad2d(x, 2), scale));
          }) < 1e-5);
    auto crop_scale = ag::constant(oracle::random_tensor({2, 3, 3}, test_rng()));
    CHECK(oracle::grad_check(x, [&] {
              return ag::sum_all(ag::mul(ag::crop2d(x, 1, 2, 3, 3), crop_scale));
          }) < 1e-5);
    auto other = ag::constant(oracle::random_tensor({3, 5, 6}, test_rng()));
    auto cat_scale = ag::constant(oracle::random_tensor({5, 5, 6}, test_rng()));
    CHECK(oracle::grad_check(x, [&] {
              return ag::sum_all(ag::mul(ag::concat_channels(x, other), cat_scale));
          }) < 1e-5);
    auto slice_scale = ag::constant(oracle::random_tensor({1, 5, 6}, test_rng()));
    CHECK(oracle::grad_check(x, [&] {
              return ag::sum_all(ag::mul(ag::slice_channels(x, 1, 2), slice_scale));
          }) < 1e-5);
}

TEST_CASE("reflect padding mirrors without repeating the edge") {
    Tensor t({1, 1, 4}, {1.0, 2.0, 3.0, 4.0});
    auto y = ag::reflect_pad2d(ag::constant(t), 0);  // no-op pad
    CHECK(y->val.size() == 4);
    Tensor t2({1, 3, 3});
    for (int i = 0; i < 9; ++i) t2[i] = i;
    auto p = ag::reflect_pad2d(ag::constant(t2), 1);
    // row -1 reflects to row 1, col -1 to col 1
    CHECK(p->val.at3(0, 0, 0) == doctest::Approx(t2.at3(0, 1, 1)));
    CHECK(p->val.at3(0, 4, 4) == doctest::Approx(t2.at3(0, 1, 1)));
}

TEST_CASE("linear, normalize, matmul, gather, cross-entropy gradients") {
    auto x = leaf({4, 5});
    auto w = leaf({3, 5});
    auto b = leaf({3});
    auto lin_scale = ag::constant(oracle::random_tensor({4, 3}, test_rng()));
    auto lin = [&] { return ag::sum_all(ag::mul(ag::linear(x, w, b), lin_scale)); };
    CHECK(oracle::grad_check(x, lin) < 1e-5);
    CHECK(oracle::grad_check(w, lin) < 1e-5);
    CHECK(oracle::grad_check(b, lin) < 1e-5);

    auto norm_scale = ag::constant(oracle::random_tensor({4, 5}, test_rng()));
    CHECK(oracle::grad_check(x, [&] {
              return ag::sum_all(ag::mul(ag::l2_normalize_rows(x), norm_scale));
          }) < 1e-4);

    auto m = leaf({3, 5});
    auto mm_scale = ag::constant(oracle::random_tensor({4, 3}, test_rng()));
    auto mm = [&] { return ag::sum_all(ag::mul(ag::matmul_nt(x, m), mm_scale)); };
    CHECK(oracle::grad_check(x, mm) < 1e-5);
    CHECK(oracle::grad_check(m, mm) < 1e-5);

    auto img = leaf({3, 4, 4});
    auto g_scale = ag::constant(oracle::random_tensor({3, 3}, test_rng()));
    CHECK(oracle::grad_check(img, [&] {
              return ag::sum_all(ag::mul(ag::gather_spatial(img, {0, 7, 15}), g_scale));
          }) < 1e-5);

    auto logits = leaf({3, 4});
    CHECK(oracle::grad_check(logits, [&] {
              return ag::cross_entropy_rows(logits, {1, 0, 3});
          }) < 1e-5);
}

TEST_CASE("cross_entropy_rows equals -log softmax target") {
    Tensor z({1, 3}, {1.0, 2.0, 0.5});
    auto loss = ag::cross_entropy_rows(ag::constant(z), {1});
    const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(0.5));
    CHECK(loss->val[0] == doctest::Approx(lse - 2.0));
}

TEST_CASE("spectral_scale divides by u^T W v and backpropagates") {
    auto w = leaf({3, 2, 2, 2});
    nn::SpectralState st;
    nn::power_iterate(w->val, st, 20, nullptr);
    auto scale = ag::constant(oracle::random_tensor({3, 2, 2, 2}, test_rng()));
    auto build = [&] { return ag::sum_all(ag::mul(ag::spectral_scale(w, st.u, st.v), scale)); };
    CHECK(oracle::grad_check(w, build) < 1e-4);
}

TEST_CASE("no-grad mode builds constants") {
    auto x = ag::parameter(Tensor({2}, {1.0, 2.0}));
    ag::NoGradGuard ng;
    auto y = ag::mul(x, x);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
}

TEST_CASE("detach blocks gradient flow") {
    auto x = ag::parameter(Tensor({2}, {1.0, 2.0}));
    auto loss = ag::sum_all(ag::mul(ag::detach(x), x));
    ag::backward(loss);
    // d/dx sum(c * x) = c (no second-order path through the detached copy)
    CHECK(x->grad[0] == doctest::Approx(1.0));
    CHECK(x->grad[1] == doctest::Approx(2.0));
}
