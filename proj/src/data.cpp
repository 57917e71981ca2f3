#include "ucl/data.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace ucl {

namespace fs = std::filesystem;

namespace {

bool has_image_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

std::vector<std::string> list_image_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw InputError("data: not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (!has_image_extension(entry.path())) {
            std::cerr << "warning: skipping non-image file " << entry.path().string() << "\n";
            continue;
        }
        out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

UnpairedDataset scan_unpaired(const std::string& hazy_dir, const std::string& clean_dir) {
    UnpairedDataset ds;
    ds.hazy_paths = list_image_files(hazy_dir);
    ds.clean_paths = list_image_files(clean_dir);
    if (ds.hazy_paths.empty()) throw InputError("data: no images in hazy directory " + hazy_dir);
    if (ds.clean_paths.empty()) throw InputError("data: no images in clean directory " + clean_dir);
    return ds;
}

ImageTensor load_image(const std::string& path) {
    cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw InputError("data: cannot decode image " + path);
    if (raw.channels() != 3) {
        cv::Mat tmp;
        cv::cvtColor(raw, tmp, raw.channels() == 1 ? cv::COLOR_GRAY2BGR : cv::COLOR_BGRA2BGR);
        raw = tmp;
    }
    double scale;
    if (raw.depth() == CV_8U)
        scale = 1.0 / 255.0;
    else if (raw.depth() == CV_16U)
        scale = 1.0 / 65535.0;
    else
        throw InputError("data: unsupported bit depth in " + path);

    const int h = raw.rows, w = raw.cols;
    Tensor chw({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double b, g, r;
            if (raw.depth() == CV_8U) {
                const auto& px = raw.at<cv::Vec3b>(y, x);
                b = px[0];
                g = px[1];
                r = px[2];
            } else {
                const auto& px = raw.at<cv::Vec3w>(y, x);
                b = px[0];
                g = px[1];
                r = px[2];
            }
            chw.at3(0, y, x) = r * scale;
            chw.at3(1, y, x) = g * scale;
            chw.at3(2, y, x) = b * scale;
        }
    return ImageTensor(std::move(chw), {0.0, 1.0});
}

void save_image_png(const ImageTensor& img, const std::string& path) {
    const ImageTensor u = img.to_range_clamped({0.0, 1.0});
    const int h = u.height(), w = u.width();
    cv::Mat out(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            auto& px = out.at<cv::Vec3b>(y, x);
            px[0] = static_cast<unsigned char>(std::lround(u.at(2, y, x) * 255.0));
            px[1] = static_cast<unsigned char>(std::lround(u.at(1, y, x) * 255.0));
            px[2] = static_cast<unsigned char>(std::lround(u.at(0, y, x) * 255.0));
        }
    if (!cv::imwrite(path, out)) throw std::runtime_error("data: cannot write " + path);
}

ImageTensor preprocess(const ImageTensor& decoded, int crop_size, const AugmentFlags& augment,
                       Rng& rng, bool eval_mode) {
    if (crop_size < 8) throw ConfigError("preprocess: crop_size must be >= 8");
    ImageTensor img = decoded.to_range({0.0, 1.0});

    if (img.height() < crop_size || img.width() < crop_size) {
        std::cerr << "warning: upscaling " << img.width() << "x" << img.height()
                  << " image to fit crop size " << crop_size << "\n";
        const int h = img.height(), w = img.width();
        const int nh = std::max(crop_size, h), nw = std::max(crop_size, w);
        cv::Mat m(h, w, CV_64FC3);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                m.at<cv::Vec3d>(y, x) = {img.at(0, y, x), img.at(1, y, x), img.at(2, y, x)};
        cv::Mat resized;
        cv::resize(m, resized, cv::Size(nw, nh), 0, 0, cv::INTER_LINEAR);
        Tensor chw({3, nh, nw});
        for (int y = 0; y < nh; ++y)
            for (int x = 0; x < nw; ++x) {
                const auto& px = resized.at<cv::Vec3d>(y, x);
                chw.at3(0, y, x) = std::clamp(px[0], 0.0, 1.0);
                chw.at3(1, y, x) = std::clamp(px[1], 0.0, 1.0);
                chw.at3(2, y, x) = std::clamp(px[2], 0.0, 1.0);
            }
        img = ImageTensor(std::move(chw), {0.0, 1.0});
    }

    const int max_y = img.height() - crop_size, max_x = img.width() - crop_size;
    int y0, x0;
    if (eval_mode || !augment.random_crop) {
        y0 = max_y / 2;
        x0 = max_x / 2;
    } else {
        y0 = max_y > 0 ? static_cast<int>(rng.next_below(static_cast<std::uint32_t>(max_y + 1))) : 0;
        x0 = max_x > 0 ? static_cast<int>(rng.next_below(static_cast<std::uint32_t>(max_x + 1))) : 0;
    }
    const bool flip = !eval_mode && augment.horizontal_flip && rng.coin();

    Tensor out({3, crop_size, crop_size});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < crop_size; ++y)
            for (int x = 0; x < crop_size; ++x) {
                const int sx = flip ? x0 + crop_size - 1 - x : x0 + x;
                // [0,1] -> [-1,1]
                out.at3(c, y, x) = img.at(c, y0 + y, sx) * 2.0 - 1.0;
            }
    return ImageTensor(std::move(out), {-1.0, 1.0});
}

ImageTensor load_and_preprocess(const std::string& path, int crop_size, const AugmentFlags& augment,
                                Rng& rng, bool eval_mode) {
    return preprocess(load_image(path), crop_size, augment, rng, eval_mode);
}

}  // namespace ucl
