#include "ucl/image.hpp"

#include <algorithm>
#include <cmath>

namespace ucl {

ImageTensor::ImageTensor(Tensor chw, ValueRange range) : chw_(std::move(chw)), range_(range) {
    if (chw_.rank() != 3 || chw_.dim(0) != 3)
        throw DimensionError("ImageTensor: expected (3,H,W), got " +
                             Tensor::shape_str(chw_.shape()));
}

ImageTensor ImageTensor::to_range(ValueRange target) const {
    if (target == range_) return *this;
    const double scale = (target.hi - target.lo) / (range_.hi - range_.lo);
    Tensor out(chw_.shape());
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = (chw_[i] - range_.lo) * scale + target.lo;
    return ImageTensor(std::move(out), target);
}

ImageTensor ImageTensor::to_range_clamped(ValueRange target) const {
    ImageTensor mapped = to_range(target);
    for (std::int64_t i = 0; i < mapped.chw().size(); ++i)
        mapped.chw()[i] = std::clamp(mapped.chw()[i], target.lo, target.hi);
    return mapped;
}

void ImageTensor::validate() const {
    if (height() < 8 || width() < 8)
        throw DimensionError("ImageTensor: dimensions must be at least 8x8");
    for (std::int64_t i = 0; i < chw_.size(); ++i) {
        const double v = chw_[i];
        if (!std::isfinite(v)) throw InputError("ImageTensor: non-finite pixel value");
        // tiny slack for accumulated round-off at the range edges
        if (v < range_.lo - 1e-9 || v > range_.hi + 1e-9)
            throw InputError("ImageTensor: pixel value outside declared range");
    }
}

}  // namespace ucl
