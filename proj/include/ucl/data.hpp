#pragma once

#include <string>
#include <vector>

#include "ucl/image.hpp"
#include "ucl/rng.hpp"

namespace ucl {

struct AugmentFlags {
    bool random_crop = true;
    bool horizontal_flip = true;
};

struct UnpairedDataset {
    std::vector<std::string> hazy_paths;
    std::vector<std::string> clean_paths;
    int crop_size = 256;
    AugmentFlags augment;
};

// Sorted list of decodable-looking image files (by extension); non-image
// files are skipped with a warning on stderr.
std::vector<std::string> list_image_files(const std::string& dir);

// Deterministic (sorted) scan of both domains; throws InputError if either
// directory contains no images.
UnpairedDataset scan_unpaired(const std::string& hazy_dir, const std::string& clean_dir);

// Decode an 8- or 16-bit PNG/JPEG as RGB in [0,1]. Throws InputError naming
// the file when it cannot be decoded.
ImageTensor load_image(const std::string& path);
// Write as 8-bit PNG (values clamped to the declared range first).
void save_image_png(const ImageTensor& img, const std::string& path);

// Crop/flip/range-map pipeline. Images smaller than crop_size are bilinearly
// upscaled first (with a warning). Eval mode takes a deterministic center
// crop and no flip. Output is (3,crop,crop) in [-1,1].
ImageTensor preprocess(const ImageTensor& decoded, int crop_size, const AugmentFlags& augment,
                       Rng& rng, bool eval_mode = false);

ImageTensor load_and_preprocess(const std::string& path, int crop_size, const AugmentFlags& augment,
                                Rng& rng, bool eval_mode = false);

}  // namespace ucl
