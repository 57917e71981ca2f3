#include "ucl/discriminator.hpp"

namespace ucl {

namespace {
struct LayerSpec {
    int kernel, stride;
};
// conv stack shared by score_map_size / receptive_field / construction
constexpr LayerSpec kLayers[] = {{4, 2}, {4, 2}, {4, 2}, {4, 1}, {4, 1}};
constexpr int kPad = 1;
}  // namespace

Discriminator::Discriminator(const DiscriminatorConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int c = cfg.base_channels;
    const int widths[] = {c, 2 * c, 4 * c, 8 * c};
    convs_.push_back(std::make_unique<nn::Conv2d>(3, widths[0], 4, 2, kPad, true, false, rng, "disc.conv1"));
    for (int i = 1; i < 4; ++i) {
        convs_.push_back(std::make_unique<nn::Conv2d>(widths[i - 1], widths[i], 4,
                                                      kLayers[i].stride, kPad, true, false, rng,
                                                      "disc.conv" + std::to_string(i + 1)));
        norms_.push_back(std::make_unique<nn::InstanceNorm2d>(widths[i], cfg.norm_kind,
                                                              "disc.norm" + std::to_string(i + 1)));
    }
    convs_.push_back(std::make_unique<nn::Conv2d>(widths[3], 1, 4, 1, kPad, true, false, rng, "disc.head"));
}

int Discriminator::receptive_field() const {
    int rf = 1, jump = 1;
    for (const auto& l : kLayers) {
        rf += (l.kernel - 1) * jump;
        jump *= l.stride;
    }
    return rf;
}

int Discriminator::score_map_size(int input) const {
    int s = input;
    for (const auto& l : kLayers) {
        s = (s + 2 * kPad - l.kernel) / l.stride + 1;
        if (s < 1)
            throw DimensionError("discriminator: input of size " + std::to_string(input) +
                                 " is too small for the patch stack");
    }
    return s;
}

ag::Value Discriminator::run(const ag::Value& img) {
    if (img->val.rank() != 3 || img->val.dim(0) != 3)
        throw DimensionError("discriminator: expected (3,H,W) input");
    score_map_size(img->val.dim(1));
    score_map_size(img->val.dim(2));
    auto h = ag::lrelu(convs_[0]->forward(img), 0.2);
    for (size_t i = 1; i < 4; ++i)
        h = ag::lrelu(norms_[i - 1]->forward(convs_[i]->forward(h)), 0.2);
    return convs_[4]->forward(h);
}

PatchScoreMap Discriminator::discriminate(const ImageTensor& img) {
    img.validate();
    const ImageTensor x = img.to_range({-1.0, 1.0});
    ag::NoGradGuard ng;
    auto scores = run(ag::constant(x.chw()));
    PatchScoreMap map;
    map.scores = Tensor({scores->val.dim(1), scores->val.dim(2)});
    std::copy(scores->val.data(), scores->val.data() + scores->val.size(), map.scores.data());
    map.receptive_field = receptive_field();
    return map;
}

std::vector<nn::ParamRef> Discriminator::params() const {
    std::vector<nn::ParamRef> out;
    for (const auto& c : convs_) c->collect_params(out);
    for (const auto& n : norms_) n->collect_params(out);
    return out;
}

void Discriminator::set_training(bool t) {
    for (const auto& c : convs_) c->set_training(t);
}

ag::Value lsgan_generator_loss(const ag::Value& fake_scores) {
    if (fake_scores->val.size() == 0) throw DimensionError("lsgan_generator_loss: empty score map");
    auto d = ag::add_scalar(fake_scores, -1.0);
    return ag::mean_all(ag::mul(d, d));
}

ag::Value lsgan_discriminator_loss(const ag::Value& real_scores, const ag::Value& fake_scores) {
    if (real_scores->val.size() == 0 || fake_scores->val.size() == 0)
        throw DimensionError("lsgan_discriminator_loss: empty score map");
    auto dr = ag::add_scalar(real_scores, -1.0);
    auto real_term = ag::mean_all(ag::mul(dr, dr));
    auto fake_term = ag::mean_all(ag::mul(fake_scores, fake_scores));
    return ag::add(real_term, fake_term);
}

double lsgan_generator_loss(const PatchScoreMap& fake) {
    if (fake.scores.size() == 0) throw DimensionError("lsgan_generator_loss: empty score map");
    if (!fake.scores.all_finite()) throw InputError("lsgan_generator_loss: non-finite scores");
    double s = 0.0;
    for (std::int64_t i = 0; i < fake.scores.size(); ++i) {
        const double d = fake.scores[i] - 1.0;
        s += d * d;
    }
    return s / static_cast<double>(fake.scores.size());
}

double lsgan_discriminator_loss(const PatchScoreMap& real, const PatchScoreMap& fake) {
    if (real.scores.size() == 0 || fake.scores.size() == 0)
        throw DimensionError("lsgan_discriminator_loss: empty score map");
    if (!real.scores.all_finite() || !fake.scores.all_finite())
        throw InputError("lsgan_discriminator_loss: non-finite scores");
    double sr = 0.0, sf = 0.0;
    for (std::int64_t i = 0; i < real.scores.size(); ++i) {
        const double d = real.scores[i] - 1.0;
        sr += d * d;
    }
    for (std::int64_t i = 0; i < fake.scores.size(); ++i) sf += fake.scores[i] * fake.scores[i];
    return sr / static_cast<double>(real.scores.size()) +
           sf / static_cast<double>(fake.scores.size());
}

}  // namespace ucl
