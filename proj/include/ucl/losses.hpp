#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "ucl/image.hpp"
#include "ucl/nn.hpp"
#include "ucl/vgg.hpp"

namespace ucl {

struct LossWeights {
    double lambda1 = 1.0;    // adversarial
    double lambda2 = 1.0;    // patch-wise contrastive (both directions)
    double lambda3 = 0.0002; // self-contrastive perceptual
    double lambda4 = 5.0;    // identity
    std::vector<double> omega = {0.4, 0.6, 1.0};
    double tau = 0.07;
    double scp_delta = 1e-7;

    void validate() const {
        if (tau <= 0) throw ConfigError("loss weights: tau must be positive");
        for (double l : {lambda1, lambda2, lambda3, lambda4})
            if (l < 0) throw ConfigError("loss weights: lambdas must be non-negative");
        for (double w : omega)
            if (w < 0) throw ConfigError("loss weights: omegas must be non-negative");
    }
};

// Projected, L2-normalized K-dim vectors at sampled spatial locations, one
// entry per encoder tap.
struct PatchSampleSet {
    std::vector<int> layer_ids;
    std::vector<ag::Value> vectors;          // each (S_l, K), unit rows
    std::vector<std::vector<int>> indices;   // sampled flat spatial locations
};

// One two-layer MLP per encoder tap (C_l -> dim -> dim), built lazily once
// the tap channel counts are known.
class ProjectionHeads {
public:
    explicit ProjectionHeads(int dim = 256) : dim_(dim) {}

    bool built() const { return !heads_.empty(); }
    void build(const std::vector<std::pair<int, int>>& tap_channels, Rng& rng);
    ag::Value project(int layer_id, const ag::Value& feats) const;

    std::vector<nn::ParamRef> params() const;
    int dim() const { return dim_; }
    const std::vector<std::pair<int, int>>& tap_channels() const { return tap_channels_; }

private:
    int dim_;
    std::vector<std::pair<int, int>> tap_channels_;
    struct Head {
        std::unique_ptr<nn::Linear> fc1, fc2;
    };
    std::vector<Head> heads_;
};

// Samples min(num, S_l) distinct locations per layer (or reuses the given
// ones so that two stacks correspond spatially), projects them and
// L2-normalizes. Builds the heads on first use.
PatchSampleSet sample_and_project(const std::vector<std::pair<int, ag::Value>>& stack,
                                  ProjectionHeads& heads, int num, Rng& rng,
                                  const std::vector<std::vector<int>>* reuse_indices = nullptr);

// (N+1)-way cross entropy of cosine similarities at temperature tau.
ag::Value nce_single(const ag::Value& v, const ag::Value& v_pos, const ag::Value& v_negs, double tau);

// Multi-layer patch-wise loss: positives are same-index reference patches,
// negatives the other sampled patches of the same layer; summed over layers
// and locations.
ag::Value patch_nce_loss(const PatchSampleSet& anchors, const PatchSampleSet& references, double tau);

// Pixel-wise self-contrastive perceptual loss (ratio of feature-space L1
// distances to the clean positive and the hazy negative). `per_layer`, when
// given, receives the unweighted (numerator, denominator) pairs.
ag::Value scp_loss(const ag::Value& restored, const Tensor& clean_pos, const Tensor& hazy_neg,
                   const VggExtractor& extractor, const LossWeights& weights,
                   std::vector<std::pair<double, double>>* per_layer = nullptr);

// Ratio combination behind scp_loss, exposed for direct contract checks.
double scp_combine(const std::vector<std::pair<double, double>>& layer_dists,
                   const std::vector<double>& omega, double delta);

ag::Value identity_loss(const ag::Value& gen_y, const Tensor& y);
// Mapping-level form: mean absolute deviation in the images' declared range.
double identity_loss(const std::function<ImageTensor(const ImageTensor&)>& g, const ImageTensor& y);

struct LossParts {
    std::optional<ag::Value> adv_g, pc_x, pc_y, scp, ide;
};

struct LossBundle {
    double adv_g = 0, pc_x = 0, pc_y = 0, scp = 0, ide = 0, total = 0;
    double adv_d = 0;  // discriminator objective, logged separately
};

// Weighted sum per the total objective; throws NonFiniteLossError naming the
// first non-finite component. Components with zero weight are logged but not
// added to the graph.
std::pair<ag::Value, LossBundle> total_generator_loss(const LossParts& parts,
                                                      const LossWeights& weights);

}  // namespace ucl
