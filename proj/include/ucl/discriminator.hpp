#pragma once

#include <memory>
#include <vector>

#include "ucl/image.hpp"
#include "ucl/nn.hpp"

namespace ucl {

struct DiscriminatorConfig {
    int base_channels = 64;
    nn::NormKind norm_kind = nn::NormKind::Instance;
};

// 70x70 PatchGAN: three stride-2 convolutions, one stride-1, then a 1-channel
// head. Scores are raw (LSGAN, no sigmoid).
class Discriminator {
public:
    Discriminator(const DiscriminatorConfig& cfg, Rng& rng);

    ag::Value run(const ag::Value& img);
    PatchScoreMap discriminate(const ImageTensor& img);

    int receptive_field() const;
    // Score-map side length for a given input side; throws DimensionError if
    // any layer would produce an empty map.
    int score_map_size(int input) const;

    std::vector<nn::ParamRef> params() const;
    void set_training(bool t);

private:
    DiscriminatorConfig cfg_;
    std::vector<std::unique_ptr<nn::Conv2d>> convs_;
    std::vector<std::unique_ptr<nn::InstanceNorm2d>> norms_;  // for convs_[1], convs_[2], convs_[3]
};

// LSGAN objectives. Graph versions for training, plain versions for the
// score-map interface.
ag::Value lsgan_generator_loss(const ag::Value& fake_scores);
ag::Value lsgan_discriminator_loss(const ag::Value& real_scores, const ag::Value& fake_scores);
double lsgan_generator_loss(const PatchScoreMap& fake);
double lsgan_discriminator_loss(const PatchScoreMap& real, const PatchScoreMap& fake);

}  // namespace ucl
