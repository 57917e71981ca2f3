#pragma once

#include <memory>
#include <optional>
#include <string>

#include "ucl/data.hpp"
#include "ucl/discriminator.hpp"
#include "ucl/generator.hpp"
#include "ucl/losses.hpp"

namespace ucl {

// Table-4 component ladder. Base = LSGAN + one-directional patch loss.
struct VariantFlags {
    bool use_ide = true;
    bool use_dual_pc = true;
    bool use_scp = true;
    bool use_sp_norm = true;
    bool use_sc_conv = true;
};

// "base", "v1".."v5" ("v5" == all on == "full")
VariantFlags variant_flags(const std::string& name);
std::string variant_name(const VariantFlags& flags);

struct TrainConfig {
    int epochs = 100;
    int decay_start = 50;
    double lr = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    int batch_size = 1;
    LossWeights weights;
    VariantFlags variant;

    int crop_size = 256;
    int num_patches = 256;
    int nce_dim = 256;
    int generator_base_channels = 64;
    int n_residual_blocks = 9;
    int discriminator_base_channels = 64;
    nn::NormKind norm_kind = nn::NormKind::Instance;
    bool spectral_norm_everywhere = false;

    double vgg_width_mult = 1.0;
    std::string vgg_weights_path;  // empty: fixed-seed random fallback
    std::uint64_t seed = 1;
    int save_every = 25;           // epochs between periodic checkpoints
    bool scp_negative_random = false;  // sample a random unpaired hazy negative
    double max_grad_norm = 0.0;        // 0 disables clipping

    void validate() const;
    GeneratorConfig generator_config() const;
    DiscriminatorConfig discriminator_config() const;
};

// Piecewise schedule: constant until decay_start, then linear to zero at
// `epochs`. Epochs are 1-based.
double lr_schedule(int epoch, const TrainConfig& cfg);

// Encoder taps used for the patch loss, adjusted for shallow test networks.
std::vector<int> effective_tap_ids(int n_residual_blocks);

class TrainState {
public:
    explicit TrainState(const TrainConfig& cfg);

    const TrainConfig& config() const { return cfg_; }
    Generator& generator() { return *generator_; }
    Discriminator& discriminator() { return *discriminator_; }
    ProjectionHeads& heads() { return *heads_; }
    const VggExtractor& extractor() const { return *extractor_; }
    nn::Adam& g_opt() { return g_opt_; }
    nn::Adam& d_opt() { return d_opt_; }
    Rng& rng() { return rng_; }

    int epoch() const { return epoch_; }
    void set_epoch(int e) { epoch_ = e; }
    std::int64_t step() const { return step_; }
    void set_step(std::int64_t s) { step_ = s; }

    Rng& heads_init_rng() { return heads_init_rng_; }

private:
    TrainConfig cfg_;
    std::unique_ptr<Generator> generator_;
    std::unique_ptr<Discriminator> discriminator_;
    std::unique_ptr<ProjectionHeads> heads_;
    std::unique_ptr<VggExtractor> extractor_;
    nn::Adam g_opt_, d_opt_;
    Rng rng_;             // all training-time draws (data order, crops, patches)
    Rng heads_init_rng_;  // lazy head construction
    int epoch_ = 1;
    std::int64_t step_ = 0;
};

struct TrainPair {
    ImageTensor hazy, clean;
    std::optional<ImageTensor> scp_negative;  // defaults to the hazy input itself
};

// One optimization step: discriminator first (its loss on y and detached
// G(x)), then generator+heads on the total objective. Losses are averaged
// over the batch. Returns pre-update loss values. A non-finite loss aborts
// the step with parameters, moments and counters unchanged.
LossBundle train_step(const std::vector<TrainPair>& batch, TrainState& state);
LossBundle train_step(const ImageTensor& x, const ImageTensor& y, TrainState& state,
                      const ImageTensor* scp_negative = nullptr);

struct FitResult {
    std::string final_checkpoint;
    std::string loss_csv;
    std::int64_t steps_run = 0;
    LossBundle last_bundle;
};

// Epoch loop over the smaller domain (the other domain is sampled uniformly
// with replacement). Writes per-step loss rows to out_dir/loss_log.csv and
// periodic checkpoints; resumes from state.epoch() when it is > 1.
FitResult fit(TrainState& state, const UnpairedDataset& data, const std::string& out_dir);

}  // namespace ucl
