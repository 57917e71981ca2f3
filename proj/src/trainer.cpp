#include "ucl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ucl/checkpoint.hpp"

namespace ucl {

VariantFlags variant_flags(const std::string& name) {
    VariantFlags f{false, false, false, false, false};
    if (name == "base") return f;
    if (name == "v1" || name == "v2" || name == "v3" || name == "v4" || name == "v5" ||
        name == "full") {
        const int level = name == "full" ? 5 : name[1] - '0';
        f.use_ide = level >= 1;
        f.use_dual_pc = level >= 2;
        f.use_scp = level >= 3;
        f.use_sp_norm = level >= 4;
        f.use_sc_conv = level >= 5;
        return f;
    }
    throw ConfigError("unknown variant '" + name + "' (expected base, v1..v5 or full)");
}

std::string variant_name(const VariantFlags& f) {
    if (f.use_sc_conv && f.use_sp_norm && f.use_scp && f.use_dual_pc && f.use_ide) return "v5";
    if (!f.use_sc_conv && f.use_sp_norm && f.use_scp && f.use_dual_pc && f.use_ide) return "v4";
    if (!f.use_sc_conv && !f.use_sp_norm && f.use_scp && f.use_dual_pc && f.use_ide) return "v3";
    if (!f.use_sc_conv && !f.use_sp_norm && !f.use_scp && f.use_dual_pc && f.use_ide) return "v2";
    if (!f.use_sc_conv && !f.use_sp_norm && !f.use_scp && !f.use_dual_pc && f.use_ide) return "v1";
    if (!f.use_sc_conv && !f.use_sp_norm && !f.use_scp && !f.use_dual_pc && !f.use_ide)
        return "base";
    return "custom";
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (decay_start < 1 || decay_start > epochs)
        throw ConfigError("train: decay_start must satisfy 0 < decay_start <= epochs");
    if (lr <= 0) throw ConfigError("train: lr must be positive");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (num_patches < 1) throw ConfigError("train: num_patches must be >= 1");
    if (nce_dim < 1) throw ConfigError("train: nce_dim must be >= 1");
    if (save_every < 1) throw ConfigError("train: save_every must be >= 1");
    weights.validate();
    generator_config().validate();
}

GeneratorConfig TrainConfig::generator_config() const {
    GeneratorConfig g;
    g.n_residual_blocks = n_residual_blocks;
    g.base_channels = generator_base_channels;
    g.use_spectral_norm = variant.use_sp_norm;
    g.use_sc_conv = variant.use_sc_conv;
    g.norm_kind = norm_kind;
    g.spectral_norm_everywhere = spectral_norm_everywhere;
    return g;
}

DiscriminatorConfig TrainConfig::discriminator_config() const {
    DiscriminatorConfig d;
    d.base_channels = discriminator_base_channels;
    d.norm_kind = norm_kind;
    return d;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 1 || epoch > cfg.epochs)
        throw ConfigError("lr_schedule: epoch " + std::to_string(epoch) + " out of range [1," +
                          std::to_string(cfg.epochs) + "]");
    if (epoch <= cfg.decay_start) return cfg.lr;
    return cfg.lr * static_cast<double>(cfg.epochs - epoch) /
           static_cast<double>(cfg.epochs - cfg.decay_start);
}

std::vector<int> effective_tap_ids(int n_residual_blocks) {
    std::vector<int> taps = {0, 1, 2};
    if (n_residual_blocks >= 1) taps.push_back(3);
    const int fifth = 2 + std::min(5, n_residual_blocks);
    if (fifth > 3) taps.push_back(fifth);
    return taps;
}

TrainState::TrainState(const TrainConfig& cfg)
    : cfg_(cfg),
      g_opt_(cfg.adam_beta1, cfg.adam_beta2),
      d_opt_(cfg.adam_beta1, cfg.adam_beta2),
      rng_(cfg.seed, 0x2015ULL),
      heads_init_rng_(cfg.seed, 0x3017ULL) {
    cfg_.validate();
    Rng init_rng(cfg.seed, 0x1013ULL);
    generator_ = std::make_unique<Generator>(cfg_.generator_config(), init_rng);
    discriminator_ = std::make_unique<Discriminator>(cfg_.discriminator_config(), init_rng);
    heads_ = std::make_unique<ProjectionHeads>(cfg_.nce_dim);
    if (cfg_.vgg_weights_path.empty())
        extractor_ = std::make_unique<VggExtractor>(
            VggExtractor::random(cfg_.seed ^ 0x5caff01dULL, cfg_.vgg_width_mult));
    else
        extractor_ = std::make_unique<VggExtractor>(VggExtractor::load(cfg_.vgg_weights_path));
    g_opt_.register_params(generator_->params());
    d_opt_.register_params(discriminator_->params());
}

namespace {

// Rolls the discriminator back if the generator half of the step fails.
struct DiscSnapshot {
    std::vector<Tensor> params, m, v;
    std::int64_t t = 0;

    static DiscSnapshot take(nn::Adam& opt) {
        DiscSnapshot s;
        s.t = opt.step_count();
        for (auto& slot : opt.slots()) {
            s.params.push_back(slot.param->val);
            s.m.push_back(slot.m);
            s.v.push_back(slot.v);
        }
        return s;
    }
    void restore(nn::Adam& opt) const {
        auto& slots = opt.slots();
        for (size_t i = 0; i < slots.size(); ++i) {
            slots[i].param->val = params[i];
            slots[i].m = m[i];
            slots[i].v = v[i];
        }
        opt.set_step_count(t);
    }
};

}  // namespace

LossBundle train_step(const std::vector<TrainPair>& batch, TrainState& state) {
    if (batch.empty()) throw InputError("train_step: empty batch");
    const TrainConfig& cfg = state.config();
    const VariantFlags& flags = cfg.variant;
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    std::vector<Tensor> xs, ys;
    for (const auto& pair : batch) {
        pair.hazy.validate();
        pair.clean.validate();
        xs.push_back(pair.hazy.to_range({-1.0, 1.0}).chw());
        ys.push_back(pair.clean.to_range({-1.0, 1.0}).chw());
    }

    Generator& gen = state.generator();
    Discriminator& disc = state.discriminator();
    gen.set_training(true);
    disc.set_training(true);
    const double lr = lr_schedule(std::min(state.epoch(), cfg.epochs), cfg);
    const auto tap_ids = effective_tap_ids(cfg.n_residual_blocks);

    nn::zero_grads(gen.params());
    nn::zero_grads(disc.params());
    if (state.heads().built()) nn::zero_grads(state.heads().params());

    // buffers (spectral u/v) are restored too if the step aborts
    auto gen_buffers = gen.buffers();
    std::vector<Tensor> buffer_snapshot;
    buffer_snapshot.reserve(gen_buffers.size());
    for (const auto& b : gen_buffers) buffer_snapshot.push_back(*b.tensor);

    // generator forwards on the hazy inputs (kept for both halves of the step)
    std::vector<GeneratorRun> runs_x;
    for (const auto& x : xs) runs_x.push_back(gen.run(ag::constant(x, "x"), tap_ids));

    if (!state.heads().built()) {
        std::vector<std::pair<int, int>> tap_channels;
        for (const auto& [id, v] : runs_x[0].taps) tap_channels.emplace_back(id, v->val.dim(0));
        state.heads().build(tap_channels, state.heads_init_rng());
    }

    auto restore_buffers = [&]() {
        for (size_t i = 0; i < gen_buffers.size(); ++i) *gen_buffers[i].tensor = buffer_snapshot[i];
    };

    // ---- discriminator update (real y vs detached fakes) ----
    ag::Value adv_d;
    for (size_t i = 0; i < batch.size(); ++i) {
        auto term = lsgan_discriminator_loss(disc.run(ag::constant(ys[i], "y")),
                                             disc.run(ag::detach(runs_x[i].image)));
        adv_d = adv_d ? ag::add(adv_d, term) : term;
    }
    adv_d = ag::mul_scalar(adv_d, inv_b);
    if (!std::isfinite(adv_d->val[0])) {
        restore_buffers();
        throw NonFiniteLossError("non-finite loss component: adv_d");
    }
    const DiscSnapshot disc_snapshot = DiscSnapshot::take(state.d_opt());
    ag::backward(adv_d);
    state.d_opt().step(lr, cfg.max_grad_norm);
    state.d_opt().zero_grad();

    try {
        // ---- generator + heads update (discriminator frozen) ----
        nn::set_requires_grad(disc.params(), false);
        LossParts parts;
        auto accumulate = [](std::optional<ag::Value>& slot, const ag::Value& term) {
            slot = slot ? ag::add(*slot, term) : term;
        };
        auto nce_between = [&](const GeneratorRun& run) {
            auto refs = sample_and_project(run.taps, state.heads(), cfg.num_patches, state.rng());
            auto anchor_stack = gen.encode(run.image, tap_ids);
            auto anchors = sample_and_project(anchor_stack, state.heads(), cfg.num_patches,
                                              state.rng(), &refs.indices);
            return patch_nce_loss(anchors, refs, cfg.weights.tau);
        };

        for (size_t i = 0; i < batch.size(); ++i) {
            accumulate(parts.adv_g, lsgan_generator_loss(disc.run(runs_x[i].image)));
            accumulate(parts.pc_x, nce_between(runs_x[i]));

            GeneratorRun run_y;
            if (flags.use_ide || flags.use_dual_pc)
                run_y = gen.run(ag::constant(ys[i], "y"),
                                flags.use_dual_pc ? tap_ids : std::vector<int>{});
            if (flags.use_dual_pc) accumulate(parts.pc_y, nce_between(run_y));
            if (flags.use_ide) accumulate(parts.ide, identity_loss(run_y.image, ys[i]));
            if (flags.use_scp) {
                const Tensor neg = batch[i].scp_negative
                                       ? batch[i].scp_negative->to_range({-1.0, 1.0}).chw()
                                       : xs[i];
                accumulate(parts.scp,
                           scp_loss(runs_x[i].image, ys[i], neg, state.extractor(), cfg.weights));
            }
        }
        for (auto* slot : {&parts.adv_g, &parts.pc_x, &parts.pc_y, &parts.scp, &parts.ide})
            if (*slot) *slot = ag::mul_scalar(**slot, inv_b);

        auto [total, bundle] = total_generator_loss(parts, cfg.weights);
        bundle.adv_d = adv_d->val[0];

        if (total->requires_grad) ag::backward(total);
        state.g_opt().register_params(gen.params());
        if (state.heads().built()) state.g_opt().register_params(state.heads().params());
        state.g_opt().step(lr, cfg.max_grad_norm);
        state.g_opt().zero_grad();
        nn::set_requires_grad(disc.params(), true);
        nn::zero_grads(disc.params());

        state.set_step(state.step() + 1);
        return bundle;
    } catch (...) {
        // undo the discriminator half so the aborted step leaves no trace
        disc_snapshot.restore(state.d_opt());
        restore_buffers();
        nn::set_requires_grad(disc.params(), true);
        nn::zero_grads(disc.params());
        nn::zero_grads(gen.params());
        if (state.heads().built()) nn::zero_grads(state.heads().params());
        throw;
    }
}

LossBundle train_step(const ImageTensor& x, const ImageTensor& y, TrainState& state,
                      const ImageTensor* scp_negative) {
    TrainPair pair;
    pair.hazy = x;
    pair.clean = y;
    if (scp_negative) pair.scp_negative = *scp_negative;
    std::vector<TrainPair> batch;
    batch.push_back(std::move(pair));
    return train_step(batch, state);
}

FitResult fit(TrainState& state, const UnpairedDataset& data, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const TrainConfig& cfg = state.config();
    if (data.hazy_paths.empty() || data.clean_paths.empty())
        throw InputError("fit: both domains must be non-empty");
    fs::create_directories(out_dir);

    const std::string csv_path = (fs::path(out_dir) / "loss_log.csv").string();
    const bool resuming = state.epoch() > 1;
    std::ofstream csv(csv_path, resuming ? std::ios::app : std::ios::trunc);
    if (!csv) throw std::runtime_error("fit: cannot open " + csv_path);
    if (!resuming) csv << "step,epoch,adv_g,adv_d,pc_x,pc_y,scp,ide,total,lr\n";

    const int n_hazy = static_cast<int>(data.hazy_paths.size());
    const int n_clean = static_cast<int>(data.clean_paths.size());
    const int pairs_per_epoch = std::min(n_hazy, n_clean);
    const bool hazy_is_smaller = n_hazy <= n_clean;

    FitResult result;
    result.loss_csv = csv_path;
    char line[512];

    for (int epoch = state.epoch(); epoch <= cfg.epochs; ++epoch) {
        state.set_epoch(epoch);
        const double lr = lr_schedule(epoch, cfg);

        // one pass over the smaller domain, shuffled
        std::vector<int> order(static_cast<size_t>(pairs_per_epoch));
        for (int i = 0; i < pairs_per_epoch; ++i) order[static_cast<size_t>(i)] = i;
        for (int i = pairs_per_epoch - 1; i > 0; --i) {
            const int j = static_cast<int>(state.rng().next_below(static_cast<std::uint32_t>(i + 1)));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }

        for (int i = 0; i < pairs_per_epoch; i += cfg.batch_size) {
            std::vector<TrainPair> batch;
            for (int k = i; k < std::min(i + cfg.batch_size, pairs_per_epoch); ++k) {
                int hazy_idx, clean_idx;
                if (hazy_is_smaller) {
                    hazy_idx = order[static_cast<size_t>(k)];
                    clean_idx =
                        static_cast<int>(state.rng().next_below(static_cast<std::uint32_t>(n_clean)));
                } else {
                    clean_idx = order[static_cast<size_t>(k)];
                    hazy_idx =
                        static_cast<int>(state.rng().next_below(static_cast<std::uint32_t>(n_hazy)));
                }
                TrainPair pair;
                pair.hazy = load_and_preprocess(data.hazy_paths[static_cast<size_t>(hazy_idx)],
                                                cfg.crop_size, data.augment, state.rng());
                pair.clean = load_and_preprocess(data.clean_paths[static_cast<size_t>(clean_idx)],
                                                 cfg.crop_size, data.augment, state.rng());
                if (cfg.variant.use_scp && cfg.scp_negative_random) {
                    const int neg_idx = static_cast<int>(
                        state.rng().next_below(static_cast<std::uint32_t>(n_hazy)));
                    pair.scp_negative =
                        load_and_preprocess(data.hazy_paths[static_cast<size_t>(neg_idx)],
                                            cfg.crop_size, data.augment, state.rng());
                }
                batch.push_back(std::move(pair));
            }
            const LossBundle b = train_step(batch, state);
            std::snprintf(line, sizeof(line),
                          "%lld,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          static_cast<long long>(state.step()), epoch, b.adv_g, b.adv_d, b.pc_x,
                          b.pc_y, b.scp, b.ide, b.total, lr);
            csv << line;
            csv.flush();
            result.last_bundle = b;
            ++result.steps_run;
        }

        // checkpoints record the next epoch to run so resume picks up cleanly
        state.set_epoch(epoch + 1);
        if (epoch % cfg.save_every == 0 || epoch == cfg.epochs) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_epoch%04d.uclck", epoch);
            const std::string path = (fs::path(out_dir) / name).string();
            save_checkpoint(state, path);
            result.final_checkpoint = path;
        }
    }
    if (result.final_checkpoint.empty()) {
        const std::string path = (fs::path(out_dir) / "checkpoint_final.uclck").string();
        save_checkpoint(state, path);
        result.final_checkpoint = path;
    }
    return result;
}

}  // namespace ucl
