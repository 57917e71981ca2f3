#include "ucl/generator.hpp"

#include <algorithm>
#include <cmath>

namespace ucl {

using ag::Value;

// ------------------------------------------------------------------- SCConv

SCConv::SCConv(int channels, bool spectral, Rng& rng, const std::string& name)
    : channels_(channels) {
    if (channels < 2 || channels % 2 != 0)
        throw ConfigError("sc_conv: channel count must be even, got " + std::to_string(channels));
    const int half = channels / 2;
    k1_ = std::make_unique<nn::Conv2d>(half, half, 3, 1, 1, true, spectral, rng, name + ".k1");
    k2_ = std::make_unique<nn::Conv2d>(half, half, 3, 1, 1, true, spectral, rng, name + ".k2");
    k3_ = std::make_unique<nn::Conv2d>(half, half, 3, 1, 1, true, spectral, rng, name + ".k3");
    k4_ = std::make_unique<nn::Conv2d>(half, half, 3, 1, 1, true, spectral, rng, name + ".k4");
}

ag::Value SCConv::forward(const ag::Value& x) {
    if (x->val.dim(0) != channels_)
        throw ConfigError("sc_conv: expected " + std::to_string(channels_) + " channels, got " +
                          std::to_string(x->val.dim(0)));
    const int half = channels_ / 2;
    const int h = x->val.dim(1), w = x->val.dim(2);
    auto x1 = ag::slice_channels(x, 0, half);
    auto x2 = ag::slice_channels(x, half, channels_);

    // calibration branch: gate X1 with context pooled at 1/4 resolution
    auto pooled = ag::avg_pool2d(x1, kPoolRate, kPoolRate, /*ceil_mode=*/true);
    auto context = ag::upsample_bilinear2d(k2_->forward(pooled), h, w);
    auto gate = ag::sigmoid(ag::add(x1, context));
    auto y1 = k4_->forward(ag::mul(k3_->forward(x1), gate));

    auto y2 = k1_->forward(x2);
    return ag::concat_channels(y1, y2);
}

void SCConv::collect_params(std::vector<nn::ParamRef>& out) const {
    k1_->collect_params(out);
    k2_->collect_params(out);
    k3_->collect_params(out);
    k4_->collect_params(out);
}

void SCConv::collect_buffers(std::vector<nn::BufferRef>& out) {
    k1_->collect_buffers(out);
    k2_->collect_buffers(out);
    k3_->collect_buffers(out);
    k4_->collect_buffers(out);
}

void SCConv::set_training(bool t) {
    k1_->set_training(t);
    k2_->set_training(t);
    k3_->set_training(t);
    k4_->set_training(t);
}

// ----------------------------------------------------------------- ResBlock

ResBlock::ResBlock(int channels, const GeneratorConfig& cfg, Rng& rng, const std::string& name) {
    const bool sn = cfg.use_spectral_norm;
    conv1_ = std::make_unique<nn::Conv2d>(channels, channels, 3, 1, 0, true, sn, rng, name + ".conv1");
    norm1_ = std::make_unique<nn::InstanceNorm2d>(channels, cfg.norm_kind, name + ".norm1");
    if (cfg.use_sc_conv) sc_ = std::make_unique<SCConv>(channels, sn, rng, name + ".sc");
    conv2_ = std::make_unique<nn::Conv2d>(channels, channels, 3, 1, 0, true, sn, rng, name + ".conv2");
    norm2_ = std::make_unique<nn::InstanceNorm2d>(channels, cfg.norm_kind, name + ".norm2");
}

ag::Value ResBlock::forward(const ag::Value& x) {
    auto h = ag::relu(norm1_->forward(conv1_->forward(ag::reflect_pad2d(x, 1))));
    if (sc_) h = sc_->forward(h);
    h = norm2_->forward(conv2_->forward(ag::reflect_pad2d(h, 1)));
    return ag::add(x, h);
}

void ResBlock::collect_params(std::vector<nn::ParamRef>& out) const {
    conv1_->collect_params(out);
    norm1_->collect_params(out);
    if (sc_) sc_->collect_params(out);
    conv2_->collect_params(out);
    norm2_->collect_params(out);
}

void ResBlock::collect_buffers(std::vector<nn::BufferRef>& out) {
    conv1_->collect_buffers(out);
    if (sc_) sc_->collect_buffers(out);
    conv2_->collect_buffers(out);
}

void ResBlock::set_training(bool t) {
    conv1_->set_training(t);
    conv2_->set_training(t);
    if (sc_) sc_->set_training(t);
}

// ---------------------------------------------------------------- Generator

std::vector<int> default_tap_ids() { return {0, 1, 2, 3, 7}; }

Generator::Generator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int c = cfg_.base_channels;
    const bool sn_all = cfg_.use_spectral_norm && cfg_.spectral_norm_everywhere;
    stem_ = std::make_unique<nn::Conv2d>(3, c, 7, 1, 0, true, sn_all, rng, "gen.stem");
    stem_norm_ = std::make_unique<nn::InstanceNorm2d>(c, cfg_.norm_kind, "gen.stem_norm");
    down1_ = std::make_unique<nn::Conv2d>(c, 2 * c, 3, 2, 1, true, sn_all, rng, "gen.down1");
    down1_norm_ = std::make_unique<nn::InstanceNorm2d>(2 * c, cfg_.norm_kind, "gen.down1_norm");
    down2_ = std::make_unique<nn::Conv2d>(2 * c, 4 * c, 3, 2, 1, true, sn_all, rng, "gen.down2");
    down2_norm_ = std::make_unique<nn::InstanceNorm2d>(4 * c, cfg_.norm_kind, "gen.down2_norm");
    for (int i = 0; i < cfg_.n_residual_blocks; ++i)
        blocks_.push_back(std::make_unique<ResBlock>(4 * c, cfg_, rng,
                                                     "gen.block" + std::to_string(i + 1)));
    up1_ = std::make_unique<nn::ConvTranspose2d>(4 * c, 2 * c, 3, 2, 1, 1, true, rng, "gen.up1");
    up1_norm_ = std::make_unique<nn::InstanceNorm2d>(2 * c, cfg_.norm_kind, "gen.up1_norm");
    up2_ = std::make_unique<nn::ConvTranspose2d>(2 * c, c, 3, 2, 1, 1, true, rng, "gen.up2");
    up2_norm_ = std::make_unique<nn::InstanceNorm2d>(c, cfg_.norm_kind, "gen.up2_norm");
    exit_ = std::make_unique<nn::Conv2d>(c, 3, 7, 1, 0, true, sn_all, rng, "gen.exit");
}

ag::Value Generator::check_input(const ag::Value& x) const {
    if (x->val.rank() != 3 || x->val.dim(0) != 3)
        throw DimensionError("generator: expected (3,H,W) input");
    if (x->val.dim(1) % 4 != 0 || x->val.dim(2) % 4 != 0)
        throw DimensionError("generator: H and W must be divisible by 4 (got " +
                             std::to_string(x->val.dim(1)) + "x" + std::to_string(x->val.dim(2)) +
                             "); enable reflect padding for arbitrary sizes");
    if (!x->val.all_finite()) throw InputError("generator: non-finite input");
    return x;
}

int Generator::tap_channels(int layer_id) const {
    if (layer_id == 0) return 3;
    if (layer_id == 1) return 2 * cfg_.base_channels;
    if (layer_id >= 2 && layer_id <= max_tap_id()) return 4 * cfg_.base_channels;
    throw ConfigError("generator: unknown encoder tap " + std::to_string(layer_id));
}

GeneratorRun Generator::run(const ag::Value& x, const std::vector<int>& tap_ids) {
    check_input(x);
    for (size_t i = 0; i < tap_ids.size(); ++i) {
        if (tap_ids[i] < 0 || tap_ids[i] > max_tap_id())
            throw ConfigError("generator: unknown encoder tap " + std::to_string(tap_ids[i]));
        if (i > 0 && tap_ids[i] <= tap_ids[i - 1])
            throw ConfigError("generator: tap ids must be strictly increasing");
    }
    auto want = [&](int id) {
        return std::find(tap_ids.begin(), tap_ids.end(), id) != tap_ids.end();
    };

    GeneratorRun out;
    if (want(0)) out.taps.emplace_back(0, x);
    auto h = ag::relu(stem_norm_->forward(stem_->forward(ag::reflect_pad2d(x, 3))));
    h = ag::relu(down1_norm_->forward(down1_->forward(h)));
    if (want(1)) out.taps.emplace_back(1, h);
    h = ag::relu(down2_norm_->forward(down2_->forward(h)));
    if (want(2)) out.taps.emplace_back(2, h);
    for (int i = 0; i < cfg_.n_residual_blocks; ++i) {
        h = blocks_[static_cast<size_t>(i)]->forward(h);
        if (want(3 + i)) out.taps.emplace_back(3 + i, h);
    }
    h = ag::relu(up1_norm_->forward(up1_->forward(h)));
    h = ag::relu(up2_norm_->forward(up2_->forward(h)));
    out.image = ag::tanh(exit_->forward(ag::reflect_pad2d(h, 3)));
    return out;
}

std::vector<std::pair<int, ag::Value>> Generator::encode(const ag::Value& x,
                                                         const std::vector<int>& tap_ids) {
    check_input(x);
    if (tap_ids.empty()) throw ConfigError("generator: encode requires at least one tap");
    std::vector<std::pair<int, ag::Value>> taps;
    int deepest = 0;
    for (size_t i = 0; i < tap_ids.size(); ++i) {
        if (tap_ids[i] < 0 || tap_ids[i] > max_tap_id())
            throw ConfigError("generator: unknown encoder tap " + std::to_string(tap_ids[i]));
        if (i > 0 && tap_ids[i] <= tap_ids[i - 1])
            throw ConfigError("generator: tap ids must be strictly increasing");
        deepest = std::max(deepest, tap_ids[i]);
    }
    auto want = [&](int id) {
        return std::find(tap_ids.begin(), tap_ids.end(), id) != tap_ids.end();
    };
    if (want(0)) taps.emplace_back(0, x);
    if (deepest == 0) return taps;
    auto h = ag::relu(stem_norm_->forward(stem_->forward(ag::reflect_pad2d(x, 3))));
    h = ag::relu(down1_norm_->forward(down1_->forward(h)));
    if (want(1)) taps.emplace_back(1, h);
    if (deepest == 1) return taps;
    h = ag::relu(down2_norm_->forward(down2_->forward(h)));
    if (want(2)) taps.emplace_back(2, h);
    for (int i = 0; i < cfg_.n_residual_blocks && 3 + i <= deepest; ++i) {
        h = blocks_[static_cast<size_t>(i)]->forward(h);
        if (want(3 + i)) taps.emplace_back(3 + i, h);
    }
    return taps;
}

ImageTensor Generator::forward(const ImageTensor& input, bool reflect_pad) {
    input.validate();
    const ImageTensor x = input.to_range({-1.0, 1.0});
    const int h = x.height(), w = x.width();
    const int ph = (4 - h % 4) % 4, pw = (4 - w % 4) % 4;
    ag::NoGradGuard ng;
    if (ph == 0 && pw == 0) {
        auto out = run(ag::constant(x.chw()));
        return ImageTensor(out.image->val, {-1.0, 1.0}).to_range(input.range());
    }
    if (!reflect_pad)
        throw DimensionError("generator: input " + std::to_string(h) + "x" + std::to_string(w) +
                             " not divisible by 4 and padding disabled");
    // reflect-pad up to the next multiple of 4, forward, crop back
    auto padded = ag::constant(x.chw());
    const int top = ph / 2, bottom = ph - ph / 2, left = pw / 2, right = pw - pw / 2;
    {
        const int pad = std::max({top, bottom, left, right});
        auto wide = ag::reflect_pad2d(padded, pad);
        padded = ag::crop2d(wide, pad - top, pad - left, h + ph, w + pw);
    }
    auto out = run(padded);
    auto cropped = ag::crop2d(out.image, top, left, h, w);
    return ImageTensor(cropped->val, {-1.0, 1.0}).to_range(input.range());
}

FeatureStack Generator::encode_features(const ImageTensor& input, const std::vector<int>& tap_ids) {
    input.validate();
    const ImageTensor x = input.to_range({-1.0, 1.0});
    if (x.height() % 4 != 0 || x.width() % 4 != 0)
        throw DimensionError("generator: encode_features requires H,W divisible by 4");
    ag::NoGradGuard ng;
    auto taps = encode(ag::constant(x.chw()), tap_ids);
    FeatureStack stack;
    stack.source = FeatureSource::input_x;
    for (auto& [id, v] : taps) stack.layers.push_back({id, v->val});
    return stack;
}

std::vector<nn::ParamRef> Generator::params() const {
    std::vector<nn::ParamRef> out;
    stem_->collect_params(out);
    stem_norm_->collect_params(out);
    down1_->collect_params(out);
    down1_norm_->collect_params(out);
    down2_->collect_params(out);
    down2_norm_->collect_params(out);
    for (const auto& b : blocks_) b->collect_params(out);
    up1_->collect_params(out);
    up1_norm_->collect_params(out);
    up2_->collect_params(out);
    up2_norm_->collect_params(out);
    exit_->collect_params(out);
    return out;
}

std::vector<nn::BufferRef> Generator::buffers() {
    std::vector<nn::BufferRef> out;
    stem_->collect_buffers(out);
    down1_->collect_buffers(out);
    down2_->collect_buffers(out);
    for (const auto& b : blocks_) b->collect_buffers(out);
    exit_->collect_buffers(out);
    return out;
}

void Generator::set_training(bool t) {
    stem_->set_training(t);
    down1_->set_training(t);
    down2_->set_training(t);
    for (const auto& b : blocks_) b->set_training(t);
    exit_->set_training(t);
}

}  // namespace ucl
