// Acceptance suite: one pass/fail line per criterion. Exit code is the number
// of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "oracles.hpp"
#include "ucl/checkpoint.hpp"
#include "ucl/cli.hpp"
#include "ucl/config.hpp"
#include "ucl/data.hpp"
#include "ucl/losses.hpp"
#include "ucl/metrics.hpp"
#include "ucl/trainer.hpp"

using namespace ucl;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    std::string name;
    double time_limit_s;  // 0 = unbounded
    std::function<bool(std::string&)> run;
};

// ---------------------------------------------------------------- toy images

// smooth color field with rectangles: enough structure for edges and patches
ImageTensor toy_clean(int hw, Rng& rng) {
    Tensor t({3, hw, hw});
    const double ax = rng.uniform(0.5, 2.0), ay = rng.uniform(0.5, 2.0);
    const double phase[3] = {rng.uniform(0, 6.28), rng.uniform(0, 6.28), rng.uniform(0, 6.28)};
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < hw; ++y)
            for (int x = 0; x < hw; ++x)
                t.at3(c, y, x) =
                    0.45 + 0.25 * std::sin(6.2831853 * (ax * x + ay * y) / hw + phase[c]);
    for (int r = 0; r < 4; ++r) {
        const int w = 3 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(hw / 3)));
        const int h = 3 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(hw / 3)));
        const int x0 = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(hw - w)));
        const int y0 = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(hw - h)));
        const double col[3] = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
        for (int c = 0; c < 3; ++c)
            for (int y = y0; y < y0 + h; ++y)
                for (int x = x0; x < x0 + w; ++x) t.at3(c, y, x) = col[c];
    }
    return ImageTensor(std::move(t), {0.0, 1.0});
}

// alpha-blend a smooth smoke field over a clean image (airlight ~0.92)
ImageTensor smoke_overlay(const ImageTensor& clean, Rng& rng) {
    const int hw = clean.height();
    Tensor t = clean.chw();
    const double bx = rng.uniform(0.3, 1.2), by = rng.uniform(0.3, 1.2);
    const double phase = rng.uniform(0, 6.28);
    const double base = rng.uniform(0.45, 0.6);
    for (int y = 0; y < hw; ++y)
        for (int x = 0; x < hw; ++x) {
            double alpha =
                base + 0.25 * std::sin(6.2831853 * (bx * x + by * y) / hw + phase);
            alpha = std::min(0.9, std::max(0.25, alpha));
            for (int c = 0; c < 3; ++c)
                t.at3(c, y, x) = (1.0 - alpha) * t.at3(c, y, x) + alpha * 0.92;
        }
    return ImageTensor(std::move(t), {0.0, 1.0});
}

TrainConfig toy_train_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 8;         // large enough for any toy run below
    cfg.decay_start = 8;
    cfg.crop_size = 64;
    cfg.generator_base_channels = 32;
    cfg.n_residual_blocks = 9;
    cfg.discriminator_base_channels = 64;
    cfg.num_patches = 256;
    cfg.nce_dim = 256;
    cfg.vgg_width_mult = 0.5;
    return cfg;
}

// ------------------------------------------------------------- the criteria

bool crit_nce_identity(std::string& detail) {
    Rng rng(201);
    double worst = 0.0;
    for (int n : {1, 15, 255})
        for (double tau : {0.07, 1.0}) {
            Tensor u = oracle::random_tensor({16}, rng);
            Tensor v = oracle::random_tensor({16}, rng);
            Tensor negs({n, 16});
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < 16; ++j) negs.at2(i, j) = u[j];
            auto loss = nce_single(ag::constant(v), ag::constant(u), ag::constant(negs), tau);
            worst = std::max(worst, std::abs(loss->val[0] - std::log(n + 1.0)));
        }
    std::ostringstream os;
    os << "max |nce - log(N+1)| = " << worst;
    detail = os.str();
    return worst < 1e-6;
}

bool crit_gradients(std::string& detail) {
    Rng rng(202);
    double worst = 0.0;
    auto track = [&](double err) { worst = std::max(worst, err); };

    {  // lsgan losses on a 3x3 score map
        auto fake = ag::parameter(oracle::random_tensor({3, 3}, rng, -1.5, 1.5));
        auto real = ag::parameter(oracle::random_tensor({3, 3}, rng, -1.5, 1.5));
        track(oracle::grad_check(fake, [&] { return lsgan_generator_loss(fake); }));
        track(oracle::grad_check(fake, [&] { return lsgan_discriminator_loss(real, fake); }));
        track(oracle::grad_check(real, [&] { return lsgan_discriminator_loss(real, fake); }));
    }
    {  // nce_single
        auto v = ag::parameter(oracle::random_tensor({6}, rng));
        auto pos = ag::parameter(oracle::random_tensor({6}, rng));
        auto negs = ag::parameter(oracle::random_tensor({5, 6}, rng));
        auto build = [&] { return nce_single(v, pos, negs, 0.07); };
        track(oracle::grad_check(v, build));
        track(oracle::grad_check(pos, build));
        track(oracle::grad_check(negs, build));
    }
    {  // scp_loss with the fixed-seed extractor, 3x8x8
        auto vgg = VggExtractor::random(404, 0.125);
        LossWeights w;
        Tensor clean = oracle::random_tensor({3, 8, 8}, rng, -0.8, 0.8);
        Tensor hazy = oracle::random_tensor({3, 8, 8}, rng, -0.8, 0.8);
        auto restored = ag::parameter(oracle::random_tensor({3, 8, 8}, rng, -0.8, 0.8));
        track(oracle::grad_check(restored, [&] { return scp_loss(restored, clean, hazy, vgg, w); }));
    }
    {  // identity loss, 3x8x8
        Tensor y = oracle::random_tensor({3, 8, 8}, rng, -0.9, 0.9);
        auto out = ag::parameter(oracle::random_tensor({3, 8, 8}, rng, -0.9, 0.9));
        track(oracle::grad_check(out, [&] { return identity_loss(out, y); }));
    }
    std::ostringstream os;
    os << "max relative gradient error = " << worst;
    detail = os.str();
    return worst < 1e-3;
}

bool crit_scp_contract(std::string& detail) {
    Rng rng(203);
    auto vgg = VggExtractor::random(405, 0.125);
    LossWeights w;
    Tensor a = oracle::random_tensor({3, 16, 16}, rng, -0.9, 0.9);
    Tensor b = oracle::random_tensor({3, 16, 16}, rng, -0.9, 0.9);
    const double at_positive = scp_loss(ag::constant(a), a, b, vgg, w)->val[0];
    const double combined = scp_combine({{0.7, 0.7}, {0.4, 0.4}, {1.3, 1.3}}, w.omega, w.scp_delta);
    std::ostringstream os;
    os << "scp(a,a,b) = " << at_positive << ", unit-ratio sum = " << combined;
    detail = os.str();
    return at_positive == 0.0 && std::abs(combined - 2.0) < 1e-6;
}

bool crit_toy_convergence(std::string& detail) {
    TrainConfig cfg = toy_train_config(7001);
    TrainState state(cfg);

    Rng data_rng(7002);
    std::vector<ImageTensor> hazy, clean;
    for (int i = 0; i < 8; ++i) {
        ImageTensor c = toy_clean(64, data_rng);
        clean.push_back(c);
        hazy.push_back(smoke_overlay(toy_clean(64, data_rng), data_rng));
    }

    std::vector<double> totals;
    for (int step = 0; step < 30; ++step) {
        const int hi = static_cast<int>(state.rng().next_below(8));
        const int ci = static_cast<int>(state.rng().next_below(8));
        const LossBundle b = train_step(hazy[static_cast<size_t>(hi)].to_range({-1.0, 1.0}),
                                        clean[static_cast<size_t>(ci)].to_range({-1.0, 1.0}), state);
        totals.push_back(b.total);
    }
    double lead = 0.0, trail = 0.0;
    for (int i = 0; i < 5; ++i) {
        lead += totals[static_cast<size_t>(i)];
        trail += totals[totals.size() - 5 + static_cast<size_t>(i)];
    }
    lead /= 5;
    trail /= 5;
    std::ostringstream os;
    os << "leading-5 mean total = " << lead << ", trailing-5 mean = " << trail;
    detail = os.str();
    return trail < lead;
}

bool crit_ablation_ordering(std::string& detail) {
    int wins = 0;
    std::ostringstream os;
    for (std::uint64_t seed : {31ULL, 32ULL, 33ULL}) {
        TrainConfig cfg;
        cfg.seed = seed;
        cfg.epochs = 8;
        cfg.decay_start = 8;
        cfg.crop_size = 32;
        cfg.generator_base_channels = 16;
        cfg.n_residual_blocks = 4;
        cfg.discriminator_base_channels = 32;
        cfg.num_patches = 64;
        cfg.nce_dim = 64;
        cfg.vgg_width_mult = 0.25;
        // the stock lambda3 is sized for full-scale training; the toy run
        // needs the SCP term visible within 200 steps
        cfg.weights.lambda3 = 1.0;

        Rng data_rng(9000 + seed);
        std::vector<ImageTensor> hazy, clean;
        for (int i = 0; i < 32; ++i) {
            clean.push_back(toy_clean(32, data_rng));
            hazy.push_back(smoke_overlay(toy_clean(32, data_rng), data_rng));
        }
        const ImageTensor held_clean = toy_clean(32, data_rng);
        const ImageTensor held_hazy = smoke_overlay(held_clean, data_rng);

        double psnr_by_variant[2] = {0, 0};
        int vi = 0;
        for (const char* variant : {"v2", "v3"}) {
            TrainConfig vcfg = cfg;
            vcfg.variant = variant_flags(variant);
            TrainState state(vcfg);
            for (int step = 0; step < 200; ++step) {
                const int hi = static_cast<int>(state.rng().next_below(32));
                const int ci = static_cast<int>(state.rng().next_below(32));
                train_step(hazy[static_cast<size_t>(hi)].to_range({-1.0, 1.0}),
                           clean[static_cast<size_t>(ci)].to_range({-1.0, 1.0}), state);
            }
            state.generator().set_training(false);
            const ImageTensor restored = state.generator().forward(held_hazy);
            psnr_by_variant[vi++] = psnr(restored, held_clean);
        }
        os << "seed " << seed << ": v2 " << psnr_by_variant[0] << " dB, v3 "
           << psnr_by_variant[1] << " dB; ";
        if (psnr_by_variant[1] >= psnr_by_variant[0]) ++wins;
    }
    os << wins << "/3 seeds with V3 >= V2";
    detail = os.str();
    return wins >= 2;
}

bool crit_spectral_bound(std::string& detail) {
    TrainConfig cfg;
    cfg.seed = 77;
    cfg.epochs = 4;
    cfg.decay_start = 4;
    cfg.crop_size = 32;
    cfg.generator_base_channels = 8;
    cfg.n_residual_blocks = 2;
    cfg.discriminator_base_channels = 8;
    cfg.num_patches = 16;
    cfg.nce_dim = 16;
    cfg.vgg_width_mult = 0.125;
    TrainState state(cfg);

    Rng data_rng(7100);
    for (int step = 0; step < 12; ++step)
        train_step(smoke_overlay(toy_clean(32, data_rng), data_rng).to_range({-1.0, 1.0}),
                   toy_clean(32, data_rng).to_range({-1.0, 1.0}), state);

    // SVD oracle over every spectrally-normalized weight (the residual-block
    // convolutions, incl. the SC-Conv kernels)
    double lo = 1e300, hi = 0.0;
    int checked = 0;
    std::vector<nn::BufferRef> buffers = state.generator().buffers();
    // buffers come in (u,v) pairs per normalized conv; recover the owning
    // weights by name
    auto params = state.generator().params();
    for (const auto& b : buffers) {
        if (b.name.find(".sn_u") == std::string::npos) continue;
        const std::string weight_name = b.name.substr(0, b.name.size() - 5) + ".weight";
        for (const auto& p : params) {
            if (p.name != weight_name) continue;
            nn::SpectralState st;
            // the persisted u/v live in the conv; recompute sigma the way the
            // next forward pass would, then take the true SVD of the result
            for (const auto& v : buffers)
                if (v.name == b.name.substr(0, b.name.size() - 5) + ".sn_v") st.v = *v.tensor;
            st.u = *b.tensor;
            st.initialized = true;
            const Tensor& w = p.node->val;
            const int rows = w.dim(0);
            const int cols = static_cast<int>(w.size() / rows);
            double sigma_hat = 0.0;
            for (int r = 0; r < rows; ++r) {
                double s = 0.0;
                for (int c = 0; c < cols; ++c) s += w[static_cast<std::int64_t>(r) * cols + c] * st.v[c];
                sigma_hat += st.u[r] * s;
            }
            Eigen::MatrixXd m(rows, cols);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    m(r, c) = w[static_cast<std::int64_t>(r) * cols + c] / sigma_hat;
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
            const double sigma = svd.singularValues()(0);
            lo = std::min(lo, sigma);
            hi = std::max(hi, sigma);
            ++checked;
        }
    }
    std::ostringstream os;
    os << checked << " normalized weights, sigma_max in [" << lo << ", " << hi << "]";
    detail = os.str();
    return checked > 0 && lo >= 0.95 && hi <= 1.05;
}

bool crit_metric_oracles(std::string& detail) {
    // published CIEDE2000 pairs
    struct LabCase {
        double l1, a1, b1, l2, a2, b2, expected;
    };
    const LabCase lab_cases[] = {
        {50.0000, 2.6772, -79.7751, 50.0000, 0.0000, -82.7485, 2.0425},
        {50.0000, 3.1571, -77.2803, 50.0000, 0.0000, -82.7485, 2.8615},
        {50.0000, 0.0000, 0.0000, 50.0000, -1.0000, 2.0000, 2.3669},
        {50.0000, 2.4900, -0.0010, 50.0000, -2.4900, 0.0009, 7.1792},
        {50.0000, -0.0010, 2.4900, 50.0000, 0.0009, -2.4900, 4.8045},
        {50.0000, 2.5000, 0.0000, 50.0000, 0.0000, -2.5000, 4.3065},
        {50.0000, 2.5000, 0.0000, 73.0000, 25.0000, -18.0000, 27.1492},
        {50.0000, 2.5000, 0.0000, 50.0000, 3.1736, 0.5854, 1.0000},
        {60.2574, -34.0099, 36.2677, 60.4626, -34.1751, 39.4387, 1.2644},
        {2.0776, 0.0795, -1.1350, 0.9033, -0.0636, -0.5514, 0.9082},
    };
    double worst_lab = 0.0;
    for (const auto& c : lab_cases)
        worst_lab = std::max(worst_lab,
                             std::abs(ciede2000_lab(c.l1, c.a1, c.b1, c.l2, c.a2, c.b2) - c.expected));
    if (worst_lab >= 1e-4) {
        detail = "CIEDE2000 reference mismatch " + std::to_string(worst_lab);
        return false;
    }

    // brute-force equivalence on random small images
    Rng rng(204);
    double worst = 0.0;
    for (int trial = 0; trial < 6; ++trial) {
        const int h = 9 + static_cast<int>(rng.next_below(8));   // <= 16
        const int w = 9 + static_cast<int>(rng.next_below(8));
        auto a = oracle::random_image(h, w, rng);
        auto b = oracle::random_image(h, w, rng);
        worst = std::max(worst, std::abs(psnr(a, b) - oracle::psnr_naive(a, b)));
        worst = std::max(worst, std::abs(contrast_gain(a, b, 3) -
                                         oracle::contrast_gain_naive(a, b, 3)));
        const auto got = visible_edge_metrics(a, b);
        const auto want = oracle::visible_edges_naive(a, b);
        if (got.e_defined != want.e_defined) worst = 1.0;
        if (want.e_defined) worst = std::max(worst, std::abs(got.e - want.e));
        worst = std::max(worst, std::abs(got.r_bar - want.r_bar));
        worst = std::max(worst, std::abs(got.sigma - want.sigma));
        if (h >= 11 && w >= 11)
            worst = std::max(worst, std::abs(ssim(a, b) - oracle::ssim_naive(a, b)));
    }
    if (worst >= 1e-8) {
        detail = "brute-force mismatch " + std::to_string(worst);
        return false;
    }

    // identical-image fixed points, exact
    Rng rng2(205);
    ImageTensor img = oracle::random_image(16, 16, rng2, 0.1, 0.9);  // edges, no saturation
    const double p = psnr(img, img);
    const double s = ssim(img, img);
    const double de = ciede2000(img, img);
    const double cg = contrast_gain(img, img);
    const auto vem = visible_edge_metrics(img, img);
    std::ostringstream os;
    os << "lab err " << worst_lab << ", naive err " << worst << ", fixed point (" << p << ", " << s
       << ", " << de << ", " << cg << ", " << vem.e << ", " << vem.r_bar << ", " << vem.sigma
       << ")";
    detail = os.str();
    return p == 100.0 && s == 1.0 && de == 0.0 && cg == 0.0 && vem.e_defined && vem.e == 0.0 &&
           vem.r_bar == 1.0 && vem.sigma == 0.0;
}

bool crit_schedule(std::string& detail) {
    TrainConfig cfg;  // defaults
    const double a = lr_schedule(25, cfg);
    const double b = lr_schedule(50, cfg);
    const double c = lr_schedule(75, cfg);
    const double d = lr_schedule(100, cfg);
    std::ostringstream os;
    os << "lr(25)=" << a << " lr(50)=" << b << " lr(75)=" << c << " lr(100)=" << d;
    detail = os.str();
    return a == 2e-4 && b == 2e-4 && c == 1e-4 && d == 0.0;
}

bool crit_determinism(std::string& detail) {
    const fs::path root = fs::temp_directory_path() / "ucl_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root / "hazy");
    fs::create_directories(root / "clean");
    Rng rng(206);
    for (int i = 0; i < 3; ++i) {
        save_image_png(smoke_overlay(toy_clean(32, rng), rng),
                       (root / "hazy" / ("h" + std::to_string(i) + ".png")).string());
        save_image_png(toy_clean(32, rng),
                       (root / "clean" / ("c" + std::to_string(i) + ".png")).string());
    }
    auto data = scan_unpaired((root / "hazy").string(), (root / "clean").string());

    TrainConfig cfg;
    cfg.seed = 99;
    cfg.epochs = 4;
    cfg.decay_start = 2;
    cfg.crop_size = 24;
    cfg.generator_base_channels = 4;
    cfg.n_residual_blocks = 1;
    cfg.discriminator_base_channels = 4;
    cfg.num_patches = 8;
    cfg.nce_dim = 8;
    cfg.vgg_width_mult = 0.0625;
    cfg.save_every = 2;
    data.crop_size = cfg.crop_size;

    TrainState full(cfg);
    fit(full, data, (root / "full").string());
    auto resumed = load_checkpoint((root / "full" / "checkpoint_epoch0002.uclck").string());
    fit(*resumed, data, (root / "resumed").string());

    auto read_lines = [](const fs::path& p) {
        std::ifstream in(p);
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) lines.push_back(line);
        return lines;
    };
    const auto full_rows = read_lines(root / "full" / "loss_log.csv");
    const auto tail_rows = read_lines(root / "resumed" / "loss_log.csv");
    bool trace_ok = full_rows.size() == 13 && tail_rows.size() == 6;  // header+12 vs 6
    if (trace_ok)
        for (size_t i = 0; i < 6; ++i)
            if (tail_rows[i] != full_rows[7 + i]) trace_ok = false;

    // byte-stable seeded inference
    fs::create_directories(root / "in");
    save_image_png(smoke_overlay(toy_clean(40, rng), rng), (root / "in" / "x.png").string());
    const std::string ckpt = (root / "full" / "checkpoint_epoch0004.uclck").string();
    bool infer_ok = cmd_infer(ckpt, (root / "in").string(), (root / "o1").string(), {}) == 0 &&
                    cmd_infer(ckpt, (root / "in").string(), (root / "o2").string(), {}) == 0;
    if (infer_ok) {
        std::ifstream f1(root / "o1" / "x.png", std::ios::binary);
        std::ifstream f2(root / "o2" / "x.png", std::ios::binary);
        std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        infer_ok = !s1.empty() && s1 == s2;
    }
    detail = std::string("resume trace ") + (trace_ok ? "bit-exact" : "MISMATCH") +
             ", inference " + (infer_ok ? "byte-stable" : "UNSTABLE");
    fs::remove_all(root);
    return trace_ok && infer_ok;
}

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {"nce-analytic-identity", 1.0, crit_nce_identity},
        {"gradient-correctness", 120.0, crit_gradients},
        {"scp-contract", 0.0, crit_scp_contract},
        {"schedule", 0.0, crit_schedule},
        {"metric-oracles", 0.0, crit_metric_oracles},
        {"spectral-normalization", 0.0, crit_spectral_bound},
        {"determinism", 0.0, crit_determinism},
        {"toy-convergence", 300.0, crit_toy_convergence},
        {"ablation-ordering", 0.0, crit_ablation_ordering},
    };

    int failures = 0;
    for (auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& ex) {
            detail = std::string("exception: ") + ex.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.time_limit_s > 0 && secs > c.time_limit_s) {
            ok = false;
            detail += " [exceeded " + std::to_string(c.time_limit_s) + "s budget]";
        }
        std::printf("[%s] %-24s (%6.2fs) %s\n", ok ? "PASS" : "FAIL", c.name.c_str(), secs,
                    detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures;
}
