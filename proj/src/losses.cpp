#include "ucl/losses.hpp"

#include <cmath>

namespace ucl {

// ----------------------------------------------------------- ProjectionHeads

void ProjectionHeads::build(const std::vector<std::pair<int, int>>& tap_channels, Rng& rng) {
    if (built()) throw ConfigError("projection heads: already built");
    tap_channels_ = tap_channels;
    for (const auto& [layer_id, channels] : tap_channels_) {
        Head h;
        const std::string base = "heads.tap" + std::to_string(layer_id);
        h.fc1 = std::make_unique<nn::Linear>(channels, dim_, rng, base + ".fc1");
        h.fc2 = std::make_unique<nn::Linear>(dim_, dim_, rng, base + ".fc2");
        heads_.push_back(std::move(h));
    }
}

ag::Value ProjectionHeads::project(int layer_id, const ag::Value& feats) const {
    for (size_t i = 0; i < tap_channels_.size(); ++i) {
        if (tap_channels_[i].first != layer_id) continue;
        if (feats->val.dim(1) != tap_channels_[i].second)
            throw ConfigError("projection heads: channel mismatch for tap " +
                              std::to_string(layer_id));
        const Head& h = heads_[i];
        return h.fc2->forward(ag::relu(h.fc1->forward(feats)));
    }
    throw ConfigError("projection heads: no head for tap " + std::to_string(layer_id));
}

std::vector<nn::ParamRef> ProjectionHeads::params() const {
    std::vector<nn::ParamRef> out;
    for (const auto& h : heads_) {
        h.fc1->collect_params(out);
        h.fc2->collect_params(out);
    }
    return out;
}

// --------------------------------------------------------- sample_and_project

PatchSampleSet sample_and_project(const std::vector<std::pair<int, ag::Value>>& stack,
                                  ProjectionHeads& heads, int num, Rng& rng,
                                  const std::vector<std::vector<int>>* reuse_indices) {
    if (stack.empty()) throw ConfigError("sample_and_project: empty feature stack");
    if (num < 1) throw ConfigError("sample_and_project: num must be >= 1");
    if (!heads.built()) {
        std::vector<std::pair<int, int>> tap_channels;
        for (const auto& [id, v] : stack) tap_channels.emplace_back(id, v->val.dim(0));
        heads.build(tap_channels, rng);
    }
    if (reuse_indices && reuse_indices->size() != stack.size())
        throw InputError("sample_and_project: reuse_indices layer count mismatch");

    PatchSampleSet out;
    for (size_t l = 0; l < stack.size(); ++l) {
        const auto& [layer_id, feat] = stack[l];
        const int locations = feat->val.dim(1) * feat->val.dim(2);
        std::vector<int> idx;
        if (reuse_indices) {
            idx = (*reuse_indices)[l];
            for (int i : idx)
                if (i < 0 || i >= locations)
                    throw InputError("sample_and_project: reuse index out of range for layer " +
                                     std::to_string(layer_id));
        } else {
            idx = rng.sample_without_replacement(locations, std::min(num, locations));
        }
        auto gathered = ag::gather_spatial(feat, idx);
        auto projected = heads.project(layer_id, gathered);
        out.layer_ids.push_back(layer_id);
        out.vectors.push_back(ag::l2_normalize_rows(projected));
        out.indices.push_back(std::move(idx));
    }
    return out;
}

// ------------------------------------------------------------------ NCE loss

ag::Value nce_single(const ag::Value& v, const ag::Value& v_pos, const ag::Value& v_negs,
                     double tau) {
    if (tau <= 0) throw ConfigError("nce_single: tau must be positive");
    if (v->val.rank() != 1 || v_pos->val.rank() != 1)
        throw DimensionError("nce_single: v and v_pos must be vectors");
    if (v_negs->val.rank() != 2)
        throw DimensionError("nce_single: v_negs must be (N,K)");
    const int k = v->val.dim(0);
    if (v_pos->val.dim(0) != k || v_negs->val.dim(1) != k)
        throw DimensionError("nce_single: dimension mismatch");

    auto norm_of = [](const Tensor& t, int row, int cols) {
        double s = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double x = t[static_cast<std::int64_t>(row) * cols + j];
            s += x * x;
        }
        return std::sqrt(s);
    };
    if (norm_of(v->val, 0, k) == 0.0 || norm_of(v_pos->val, 0, k) == 0.0)
        throw InputError("nce_single: zero-norm vector, cosine undefined");
    for (int n = 0; n < v_negs->val.dim(0); ++n)
        if (norm_of(v_negs->val, n, k) == 0.0)
            throw InputError("nce_single: zero-norm negative, cosine undefined");

    auto anchor = ag::l2_normalize_rows(ag::reshape(v, {1, k}));
    auto refs = ag::l2_normalize_rows(ag::concat_rows(ag::reshape(v_pos, {1, k}), v_negs));
    auto logits = ag::mul_scalar(ag::matmul_nt(anchor, refs), 1.0 / tau);
    return ag::cross_entropy_rows(logits, {0});
}

ag::Value patch_nce_loss(const PatchSampleSet& anchors, const PatchSampleSet& references,
                         double tau) {
    if (tau <= 0) throw ConfigError("patch_nce_loss: tau must be positive");
    if (anchors.layer_ids != references.layer_ids)
        throw InputError("patch_nce_loss: layer taps differ between anchor and reference sets");
    if (anchors.indices != references.indices)
        throw InputError("patch_nce_loss: sampled indices differ between sets");

    ag::Value total;
    for (size_t l = 0; l < anchors.vectors.size(); ++l) {
        const auto& a = anchors.vectors[l];
        const auto& r = references.vectors[l];
        if (!a->val.same_shape(r->val))
            throw InputError("patch_nce_loss: per-layer sample shapes differ");
        const int s = a->val.dim(0);
        auto logits = ag::mul_scalar(ag::matmul_nt(a, r), 1.0 / tau);
        std::vector<int> targets(static_cast<size_t>(s));
        for (int i = 0; i < s; ++i) targets[static_cast<size_t>(i)] = i;
        auto layer_loss = ag::cross_entropy_rows(logits, targets);
        total = total ? ag::add(total, layer_loss) : layer_loss;
    }
    return total;
}

// ------------------------------------------------------------------ SCP loss

double scp_combine(const std::vector<std::pair<double, double>>& layer_dists,
                   const std::vector<double>& omega, double delta) {
    if (layer_dists.size() != omega.size())
        throw ConfigError("scp: omega count must match tap count");
    double total = 0.0;
    for (size_t i = 0; i < layer_dists.size(); ++i)
        total += omega[i] * layer_dists[i].first / (layer_dists[i].second + delta);
    return total;
}

ag::Value scp_loss(const ag::Value& restored, const Tensor& clean_pos, const Tensor& hazy_neg,
                   const VggExtractor& extractor, const LossWeights& weights,
                   std::vector<std::pair<double, double>>* per_layer) {
    if (!restored->val.same_shape(clean_pos) || !restored->val.same_shape(hazy_neg))
        throw DimensionError("scp_loss: the three images must have identical shapes");
    if (static_cast<int>(weights.omega.size()) != extractor.n_taps())
        throw ConfigError("scp_loss: omega count must match extractor tap count");

    const ValueRange net{-1.0, 1.0};
    std::vector<Tensor> clean_feats, hazy_feats;
    {
        ag::NoGradGuard ng;
        for (auto& f : extractor.features(ag::constant(clean_pos), net))
            clean_feats.push_back(f->val);
        for (auto& f : extractor.features(ag::constant(hazy_neg), net))
            hazy_feats.push_back(f->val);
    }
    auto restored_feats = extractor.features(restored, net);

    ag::Value total;
    for (size_t i = 0; i < restored_feats.size(); ++i) {
        auto num = ag::mean_abs_diff(ag::constant(clean_feats[i]), restored_feats[i]);
        auto den = ag::add_scalar(ag::mean_abs_diff(ag::constant(hazy_feats[i]), restored_feats[i]),
                                  weights.scp_delta);
        if (per_layer) per_layer->emplace_back(num->val[0], den->val[0] - weights.scp_delta);
        auto term = ag::mul_scalar(ag::divide(num, den), weights.omega[i]);
        total = total ? ag::add(total, term) : term;
    }
    return total;
}

// ------------------------------------------------------------- identity loss

ag::Value identity_loss(const ag::Value& gen_y, const Tensor& y) {
    if (!gen_y->val.same_shape(y)) throw DimensionError("identity_loss: shape mismatch");
    return ag::mean_abs_diff(gen_y, ag::constant(y));
}

double identity_loss(const std::function<ImageTensor(const ImageTensor&)>& g,
                     const ImageTensor& y) {
    ImageTensor out = g(y);
    if (out.height() != y.height() || out.width() != y.width())
        throw DimensionError("identity_loss: mapping changed image shape");
    const ImageTensor aligned = out.to_range(y.range());
    double s = 0.0;
    for (std::int64_t i = 0; i < y.chw().size(); ++i) s += std::abs(aligned.chw()[i] - y.chw()[i]);
    return s / static_cast<double>(y.chw().size());
}

// ----------------------------------------------------------------- total loss

std::pair<ag::Value, LossBundle> total_generator_loss(const LossParts& parts,
                                                      const LossWeights& weights) {
    weights.validate();
    LossBundle bundle;
    auto read = [](const std::optional<ag::Value>& v, const char* name) {
        if (!v) return 0.0;
        const double x = (*v)->val[0];
        if (!std::isfinite(x))
            throw NonFiniteLossError(std::string("non-finite loss component: ") + name);
        return x;
    };
    bundle.adv_g = read(parts.adv_g, "adv_g");
    bundle.pc_x = read(parts.pc_x, "pc_x");
    bundle.pc_y = read(parts.pc_y, "pc_y");
    bundle.scp = read(parts.scp, "scp");
    bundle.ide = read(parts.ide, "ide");

    ag::Value total;
    auto accumulate = [&total](const std::optional<ag::Value>& v, double w) {
        if (!v || w == 0.0) return;
        auto term = ag::mul_scalar(*v, w);
        total = total ? ag::add(total, term) : term;
    };
    accumulate(parts.adv_g, weights.lambda1);
    accumulate(parts.pc_x, weights.lambda2);
    accumulate(parts.pc_y, weights.lambda2);
    accumulate(parts.scp, weights.lambda3);
    accumulate(parts.ide, weights.lambda4);
    if (!total) total = ag::constant(Tensor::scalar(0.0));

    bundle.total = weights.lambda1 * bundle.adv_g + weights.lambda2 * (bundle.pc_x + bundle.pc_y) +
                   weights.lambda3 * bundle.scp + weights.lambda4 * bundle.ide;
    if (!std::isfinite(bundle.total)) throw NonFiniteLossError("non-finite loss component: total");
    return {total, bundle};
}

}  // namespace ucl
