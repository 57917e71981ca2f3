#include <doctest.h>

#include <algorithm>

#include "oracles.hpp"
#include "ucl/discriminator.hpp"

using namespace ucl;

namespace {

// the chosen stack: three stride-2 4x4 convs, two stride-1, all pad 1
const std::vector<std::array<int, 3>> kStack = {{4, 2, 1}, {4, 2, 1}, {4, 2, 1}, {4, 1, 1}, {4, 1, 1}};

ImageTensor random_net_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({3, h, w});
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return ImageTensor(std::move(t), {-1.0, 1.0});
}

Discriminator make_disc(int base = 8, std::uint64_t seed = 5) {
    DiscriminatorConfig cfg;
    cfg.base_channels = base;
    Rng rng(seed);
    return Discriminator(cfg, rng);
}

}  // namespace

TEST_CASE("score map sizes follow the stride arithmetic oracle") {
    auto disc = make_disc();
    disc.set_training(false);
    CHECK(disc.receptive_field() == oracle::conv_stack_receptive_field(kStack));
    CHECK(disc.receptive_field() == 70);

    for (int input : {256, 128, 70, 64, 32}) {
        const int expected = oracle::conv_stack_output(input, kStack);
        REQUIRE(expected >= 1);
        CHECK(disc.score_map_size(input) == expected);
        auto map = disc.discriminate(random_net_image(input, input, static_cast<std::uint64_t>(input)));
        CHECK(map.scores.dim(0) == expected);
        CHECK(map.scores.dim(1) == expected);
        CHECK(map.receptive_field == 70);
    }
    CHECK(disc.score_map_size(256) == 30);
    CHECK(disc.score_map_size(70) >= 1);
}

TEST_CASE("inputs below the patch stack minimum are rejected") {
    auto disc = make_disc();
    // oracle: find the smallest side that still yields one patch
    int min_ok = 1;
    while (oracle::conv_stack_output(min_ok, kStack) < 1) ++min_ok;
    CHECK_THROWS_AS(disc.score_map_size(min_ok - 1), DimensionError);
    CHECK(disc.score_map_size(min_ok) >= 1);
}

TEST_CASE("evaluation-mode scoring is deterministic") {
    auto disc = make_disc();
    disc.set_training(false);
    const ImageTensor img = random_net_image(64, 64, 77);
    auto a = disc.discriminate(img);
    auto b = disc.discriminate(img);
    for (std::int64_t i = 0; i < a.scores.size(); ++i) CHECK(a.scores[i] == b.scores[i]);
}

TEST_CASE("lsgan losses: analytic values") {
    PatchScoreMap ones{Tensor({3, 3}, 1.0), 70};
    PatchScoreMap zeros{Tensor({3, 3}, 0.0), 70};
    PatchScoreMap halves{Tensor({3, 3}, 0.5), 70};

    CHECK(lsgan_generator_loss(ones) == doctest::Approx(0.0));
    CHECK(lsgan_generator_loss(zeros) == doctest::Approx(1.0));
    CHECK(lsgan_generator_loss(halves) == doctest::Approx(0.25));

    CHECK(lsgan_discriminator_loss(ones, zeros) == doctest::Approx(0.0));
    CHECK(lsgan_discriminator_loss(zeros, ones) == doctest::Approx(2.0));
    CHECK(lsgan_discriminator_loss(halves, halves) == doctest::Approx(0.5));
}

TEST_CASE("lsgan losses reject empty maps") {
    PatchScoreMap empty{Tensor(), 70};
    PatchScoreMap ok{Tensor({2, 2}, 0.5), 70};
    CHECK_THROWS_AS(lsgan_generator_loss(empty), DimensionError);
    CHECK_THROWS_AS(lsgan_discriminator_loss(empty, ok), DimensionError);
    CHECK_THROWS_AS(lsgan_discriminator_loss(ok, empty), DimensionError);
}

TEST_CASE("lsgan losses: non-negative, zero exactly at target") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        PatchScoreMap real{oracle::random_tensor({4, 4}, rng, -2.0, 2.0), 70};
        PatchScoreMap fake{oracle::random_tensor({4, 4}, rng, -2.0, 2.0), 70};
        CHECK(lsgan_generator_loss(fake) >= 0.0);
        CHECK(lsgan_discriminator_loss(real, fake) >= 0.0);
    }
    PatchScoreMap at_target{Tensor({2, 3}, 1.0), 70};
    CHECK(lsgan_generator_loss(at_target) == 0.0);
}

TEST_CASE("lsgan discriminator loss is permutation invariant within maps") {
    Rng rng(32);
    Tensor real = oracle::random_tensor({3, 3}, rng);
    Tensor fake = oracle::random_tensor({3, 3}, rng);
    const double base = lsgan_discriminator_loss({real, 70}, {fake, 70});
    // shuffle patch positions in both maps independently
    for (int trial = 0; trial < 5; ++trial) {
        Tensor r2 = real, f2 = fake;
        auto perm_r = rng.sample_without_replacement(9, 9);
        auto perm_f = rng.sample_without_replacement(9, 9);
        for (int i = 0; i < 9; ++i) {
            r2[i] = real[perm_r[static_cast<size_t>(i)]];
            f2[i] = fake[perm_f[static_cast<size_t>(i)]];
        }
        CHECK(lsgan_discriminator_loss({r2, 70}, {f2, 70}) == doctest::Approx(base));
    }
}

TEST_CASE("lsgan loss gradients match finite differences (1e-4)") {
    Rng rng(33);
    auto fake = ag::parameter(oracle::random_tensor({3, 3}, rng, -1.5, 1.5));
    auto real = ag::parameter(oracle::random_tensor({3, 3}, rng, -1.5, 1.5));
    CHECK(oracle::grad_check(fake, [&] { return lsgan_generator_loss(fake); }) < 1e-4);
    CHECK(oracle::grad_check(fake, [&] { return lsgan_discriminator_loss(real, fake); }) < 1e-4);
    CHECK(oracle::grad_check(real, [&] { return lsgan_discriminator_loss(real, fake); }) < 1e-4);
}
