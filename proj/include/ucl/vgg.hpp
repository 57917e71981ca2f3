#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ucl/image.hpp"
#include "ucl/nn.hpp"

namespace ucl {

// VGG-16-topology feature extractor used by the perceptual loss. Weights are
// frozen; gradients flow through the features into the image only. Taps are
// taken after selected max-pooling stages (1-based pool index).
//
// Weights load from a TensorArchive ("vgg.blockB.convI.weight/.bias"); when no
// pretrained file is available a fixed-seed random (Kaiming) initialization is
// the documented fallback — every loss contract holds for any frozen
// extractor.
class VggExtractor {
public:
    static VggExtractor random(std::uint64_t seed, double width_mult = 1.0,
                               std::vector<int> tap_pools = {2, 3, 5});
    static VggExtractor load(const std::string& path);
    void save(const std::string& path) const;

    // img: (3,H,W) graph value in `range`. Conditioning: map to [0,1], then
    // standardize per channel with the extractor's training statistics.
    std::vector<ag::Value> features(const ag::Value& img, ValueRange range) const;

    int n_taps() const { return static_cast<int>(tap_pools_.size()); }
    const std::vector<int>& tap_pools() const { return tap_pools_; }

private:
    VggExtractor() = default;
    void build(double width_mult, Rng& rng);

    std::vector<int> tap_pools_;
    double width_mult_ = 1.0;
    // blocks_[b][i]: conv i of block b (weights are non-trainable leaves)
    std::vector<std::vector<std::unique_ptr<nn::Conv2d>>> blocks_;
};

}  // namespace ucl
