#include "ucl/vgg.hpp"

#include <cmath>
#include <sstream>

#include "ucl/serialize.hpp"

namespace ucl {

namespace {
constexpr int kBlockWidths[5] = {64, 128, 256, 512, 512};
constexpr int kBlockConvs[5] = {2, 2, 3, 3, 3};
// ImageNet channel statistics used for input conditioning.
constexpr double kMean[3] = {0.485, 0.456, 0.406};
constexpr double kStd[3] = {0.229, 0.224, 0.225};
}  // namespace

void VggExtractor::build(double width_mult, Rng& rng) {
    width_mult_ = width_mult;
    int cin = 3;
    for (int b = 0; b < 5; ++b) {
        const int width = std::max(1, static_cast<int>(std::lround(kBlockWidths[b] * width_mult)));
        std::vector<std::unique_ptr<nn::Conv2d>> block;
        for (int i = 0; i < kBlockConvs[b]; ++i) {
            std::ostringstream name;
            name << "vgg.block" << (b + 1) << ".conv" << (i + 1);
            auto conv = std::make_unique<nn::Conv2d>(cin, width, 3, 1, 1, true, false, rng, name.str());
            block.push_back(std::move(conv));
            cin = width;
        }
        blocks_.push_back(std::move(block));
    }
    // frozen: no gradients into the extractor itself
    std::vector<nn::ParamRef> params;
    for (auto& b : blocks_)
        for (auto& c : b) c->collect_params(params);
    nn::set_requires_grad(params, false);
}

VggExtractor VggExtractor::random(std::uint64_t seed, double width_mult, std::vector<int> tap_pools) {
    for (int t : tap_pools)
        if (t < 1 || t > 5) throw ConfigError("vgg: tap pool index must be in [1,5]");
    VggExtractor e;
    e.tap_pools_ = std::move(tap_pools);
    Rng rng(seed, 0x7f6a21ULL);
    // Kaiming keeps activation variance roughly constant through the stack,
    // so random fallback features are still informative at block 5.
    e.width_mult_ = width_mult;
    int cin = 3;
    e.build(width_mult, rng);
    std::vector<nn::ParamRef> params;
    for (auto& b : e.blocks_)
        for (auto& c : b) c->collect_params(params);
    for (auto& p : params) {
        if (p.name.ends_with(".weight")) {
            const auto& s = p.node->val.shape();
            cin = s[1] * s[2] * s[3];
            p.node->val = nn::kaiming_init(s, cin, rng);
        }
    }
    return e;
}

VggExtractor VggExtractor::load(const std::string& path) {
    TensorArchive a = TensorArchive::load(path);
    auto kind = a.strings.find("container_kind");
    if (kind == a.strings.end() || kind->second != "vgg_weights")
        throw VersionError("vgg: " + path + " is not an extractor weights file");
    VggExtractor e;
    e.width_mult_ = std::stod(a.strings.at("width_mult"));
    std::istringstream taps(a.strings.at("tap_pools"));
    int t;
    while (taps >> t) e.tap_pools_.push_back(t);
    Rng rng(1);
    e.build(e.width_mult_, rng);
    std::vector<nn::ParamRef> params;
    for (auto& b : e.blocks_)
        for (auto& c : b) c->collect_params(params);
    for (auto& p : params) {
        auto it = a.tensors.find(p.name);
        if (it == a.tensors.end()) throw IntegrityError("vgg: missing tensor " + p.name);
        if (!(it->second.shape() == p.node->val.shape()))
            throw IntegrityError("vgg: shape mismatch for " + p.name);
        p.node->val = it->second;
    }
    return e;
}

void VggExtractor::save(const std::string& path) const {
    TensorArchive a;
    a.strings["container_kind"] = "vgg_weights";
    a.strings["width_mult"] = std::to_string(width_mult_);
    std::ostringstream taps;
    for (size_t i = 0; i < tap_pools_.size(); ++i) taps << (i ? " " : "") << tap_pools_[i];
    a.strings["tap_pools"] = taps.str();
    std::vector<nn::ParamRef> params;
    for (const auto& b : blocks_)
        for (const auto& c : b) c->collect_params(params);
    for (const auto& p : params) a.tensors[p.name] = p.node->val;
    a.save(path);
}

std::vector<ag::Value> VggExtractor::features(const ag::Value& img, ValueRange range) const {
    if (img->val.rank() != 3 || img->val.dim(0) != 3)
        throw DimensionError("vgg: expected (3,H,W) input");
    const int h = img->val.dim(1), w = img->val.dim(2);

    // range -> [0,1] -> standardized
    auto x = ag::mul_scalar(ag::add_scalar(img, -range.lo), 1.0 / (range.hi - range.lo));
    Tensor mean({3}), inv_std({3});
    for (int c = 0; c < 3; ++c) {
        mean[c] = kMean[c];
        inv_std[c] = 1.0 / kStd[c];
    }
    x = ag::mul(ag::sub(x, ag::broadcast_chw(ag::constant(mean), h, w)),
                ag::broadcast_chw(ag::constant(inv_std), h, w));

    std::vector<ag::Value> taps;
    int pool_index = 0;
    for (size_t b = 0; b < blocks_.size(); ++b) {
        for (const auto& conv : blocks_[b]) x = ag::relu(conv->forward(x));
        x = ag::max_pool2d(x, 2, 2, /*ceil_mode=*/true);
        ++pool_index;
        for (int t : tap_pools_)
            if (t == pool_index) taps.push_back(x);
        if (taps.size() == tap_pools_.size() && pool_index >= tap_pools_.back()) break;
    }
    return taps;
}

}  // namespace ucl
