#pragma once

#include <memory>
#include <vector>

#include "ucl/image.hpp"
#include "ucl/nn.hpp"

namespace ucl {

struct GeneratorConfig {
    int n_residual_blocks = 9;
    int base_channels = 64;
    bool use_spectral_norm = true;
    bool use_sc_conv = true;
    nn::NormKind norm_kind = nn::NormKind::Instance;
    // Default scope for spectral norm is the residual blocks; this extends it
    // to every convolution in the network.
    bool spectral_norm_everywhere = false;

    void validate() const {
        if (n_residual_blocks < 1) throw ConfigError("generator: n_residual_blocks must be >= 1");
        if (base_channels < 2 || base_channels % 2 != 0)
            throw ConfigError("generator: base_channels must be even and >= 2");
    }
};

// Split-branch convolution block: channels halved into a calibration branch
// (down-sampled context gating) and a plain branch, then re-concatenated.
// Channel count and spatial size are preserved.
class SCConv {
public:
    SCConv(int channels, bool spectral, Rng& rng, const std::string& name);
    ag::Value forward(const ag::Value& x);
    void collect_params(std::vector<nn::ParamRef>& out) const;
    void collect_buffers(std::vector<nn::BufferRef>& out);
    void set_training(bool t);

    static constexpr int kPoolRate = 4;

private:
    int channels_;
    std::unique_ptr<nn::Conv2d> k1_, k2_, k3_, k4_;
};

class ResBlock {
public:
    ResBlock(int channels, const GeneratorConfig& cfg, Rng& rng, const std::string& name);
    ag::Value forward(const ag::Value& x);
    void collect_params(std::vector<nn::ParamRef>& out) const;
    void collect_buffers(std::vector<nn::BufferRef>& out);
    void set_training(bool t);

private:
    std::unique_ptr<nn::Conv2d> conv1_, conv2_;
    std::unique_ptr<nn::InstanceNorm2d> norm1_, norm2_;
    std::unique_ptr<SCConv> sc_;
};

// Encoder tap ids: 0 = input RGB, 1/2 = first/second down-sampling conv
// (after activation), 2+k = k-th residual block output.
std::vector<int> default_tap_ids();

struct GeneratorRun {
    ag::Value image;                                // (3,H,W) in [-1,1]
    std::vector<std::pair<int, ag::Value>> taps;    // (layer_id, feature map)
};

class Generator {
public:
    Generator(const GeneratorConfig& cfg, Rng& rng);

    // Graph mode: full forward plus requested encoder taps. H and W must be
    // divisible by 4.
    GeneratorRun run(const ag::Value& x, const std::vector<int>& tap_ids = {});
    // Graph mode: encoder only, up to the deepest requested tap.
    std::vector<std::pair<int, ag::Value>> encode(const ag::Value& x,
                                                  const std::vector<int>& tap_ids);

    // Eval-mode image mapping. Requires H, W divisible by 4 unless
    // `reflect_pad` is set, in which case inputs are padded up to the next
    // multiple of 4 and cropped back.
    ImageTensor forward(const ImageTensor& x, bool reflect_pad = true);
    FeatureStack encode_features(const ImageTensor& x,
                                 const std::vector<int>& tap_ids = default_tap_ids());

    int tap_channels(int layer_id) const;
    int max_tap_id() const { return 2 + cfg_.n_residual_blocks; }

    std::vector<nn::ParamRef> params() const;
    std::vector<nn::BufferRef> buffers();
    void set_training(bool t);
    const GeneratorConfig& config() const { return cfg_; }

private:
    ag::Value check_input(const ag::Value& x) const;

    GeneratorConfig cfg_;
    std::unique_ptr<nn::Conv2d> stem_, down1_, down2_, exit_;
    std::unique_ptr<nn::InstanceNorm2d> stem_norm_, down1_norm_, down2_norm_, up1_norm_, up2_norm_;
    std::vector<std::unique_ptr<ResBlock>> blocks_;
    std::unique_ptr<nn::ConvTranspose2d> up1_, up2_;
};

}  // namespace ucl
