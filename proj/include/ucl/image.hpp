#pragma once

#include <string>
#include <vector>

#include "ucl/errors.hpp"
#include "ucl/tensor.hpp"

namespace ucl {

struct ValueRange {
    double lo = 0.0;
    double hi = 1.0;
    bool operator==(const ValueRange&) const = default;
};

inline constexpr double kUnitLo = 0.0;

// H x W x 3 image stored channel-first as (3,H,W) with a declared value range.
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(Tensor chw, ValueRange range);

    static ImageTensor zeros(int h, int w, ValueRange range) {
        return ImageTensor(Tensor({3, h, w}, range.lo), range);
    }

    const Tensor& chw() const { return chw_; }
    Tensor& chw() { return chw_; }
    ValueRange range() const { return range_; }
    int height() const { return chw_.dim(1); }
    int width() const { return chw_.dim(2); }

    double at(int c, int h, int w) const { return chw_.at3(c, h, w); }
    double& at(int c, int h, int w) { return chw_.at3(c, h, w); }

    // Affine remap into a different declared range.
    ImageTensor to_range(ValueRange target) const;
    // Remap and clamp (for writing out images that may slightly overshoot).
    ImageTensor to_range_clamped(ValueRange target) const;

    void validate() const;  // finite, within range, H,W >= 8

private:
    Tensor chw_;
    ValueRange range_{0.0, 1.0};
};

enum class FeatureSource { input_x, output_y, clean_y };

struct FeatureLayer {
    int layer_id = 0;
    Tensor map;  // (C_l, H_l, W_l)
};

struct FeatureStack {
    std::vector<FeatureLayer> layers;
    FeatureSource source = FeatureSource::input_x;
};

struct PatchScoreMap {
    Tensor scores;  // (H_d, W_d)
    int receptive_field = 0;
};

}  // namespace ucl
