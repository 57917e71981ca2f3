#include "ucl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ucl/data.hpp"

namespace ucl {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kPsnrCap = 100.0;

Tensor to_gray01(const ImageTensor& img) {
    const ImageTensor u = img.to_range({0.0, 1.0});
    const int h = u.height(), w = u.width();
    Tensor g({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            g.at2(i, j) = 0.299 * u.at(0, i, j) + 0.587 * u.at(1, i, j) + 0.114 * u.at(2, i, j);
    return g;
}

void check_same_size(const ImageTensor& a, const ImageTensor& b, const char* op) {
    if (a.height() != b.height() || a.width() != b.width())
        throw DimensionError(std::string(op) + ": image sizes differ");
}

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

// ---- CIEDE2000 helpers ----

struct Lab {
    double l, a, b;
};

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

Lab rgb_to_lab(double r, double g, double b) {
    const double rl = srgb_to_linear(clampd(r, 0.0, 1.0));
    const double gl = srgb_to_linear(clampd(g, 0.0, 1.0));
    const double bl = srgb_to_linear(clampd(b, 0.0, 1.0));
    const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    const double xn = 0.95047, yn = 1.0, zn = 1.08883;
    auto f = [](double t) {
        const double d = 6.0 / 29.0;
        return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
    };
    const double fx = f(x / xn), fy = f(y / yn), fz = f(z / zn);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

}  // namespace

double psnr(const ImageTensor& a, const ImageTensor& b, double peak) {
    check_same_size(a, b, "psnr");
    if (peak <= 0) throw ConfigError("psnr: peak must be positive");
    const ImageTensor ua = a.to_range({0.0, 1.0});
    const ImageTensor ub = b.to_range({0.0, 1.0});
    double mse = 0.0;
    for (std::int64_t i = 0; i < ua.chw().size(); ++i) {
        const double d = ua.chw()[i] - ub.chw()[i];
        mse += d * d;
    }
    mse /= static_cast<double>(ua.chw().size());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const ImageTensor& a, const ImageTensor& b) {
    check_same_size(a, b, "ssim");
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    if (a.height() < kWin || a.width() < kWin)
        throw DimensionError("ssim: image smaller than the 11x11 window");
    const Tensor ga = to_gray01(a), gb = to_gray01(b);
    const int h = a.height(), w = a.width();

    double kernel[kWin][kWin];
    double ksum = 0.0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            const double dy = i - (kWin - 1) / 2.0, dx = j - (kWin - 1) / 2.0;
            kernel[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
            ksum += kernel[i][j];
        }
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) kernel[i][j] /= ksum;

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // peak = 1 after conversion
    double total = 0.0;
    std::int64_t count = 0;
    for (int y = 0; y + kWin <= h; ++y)
        for (int x = 0; x + kWin <= w; ++x) {
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double k = kernel[i][j];
                    const double va = ga.at2(y + i, x + j), vb = gb.at2(y + i, x + j);
                    mu_a += k * va;
                    mu_b += k * vb;
                    aa += k * va * va;
                    bb += k * vb * vb;
                    ab += k * va * vb;
                }
            const double var_a = aa - mu_a * mu_a;
            const double var_b = bb - mu_b * mu_b;
            const double cov = ab - mu_a * mu_b;
            const double num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            ++count;
        }
    return total / static_cast<double>(count);
}

double ciede2000_lab(double l1, double a1, double b1, double l2, double a2, double b2) {
    auto deg2rad = [](double d) { return d * kPi / 180.0; };
    auto rad2deg = [](double r) { return r * 180.0 / kPi; };

    const double c1 = std::sqrt(a1 * a1 + b1 * b1);
    const double c2 = std::sqrt(a2 * a2 + b2 * b2);
    const double cbar = (c1 + c2) / 2.0;
    const double cbar7 = std::pow(cbar, 7.0);
    const double g = 0.5 * (1.0 - std::sqrt(cbar7 / (cbar7 + std::pow(25.0, 7.0))));
    const double a1p = (1.0 + g) * a1;
    const double a2p = (1.0 + g) * a2;
    const double c1p = std::sqrt(a1p * a1p + b1 * b1);
    const double c2p = std::sqrt(a2p * a2p + b2 * b2);
    auto hue = [&](double ap, double b) {
        if (ap == 0.0 && b == 0.0) return 0.0;
        double h = rad2deg(std::atan2(b, ap));
        return h < 0 ? h + 360.0 : h;
    };
    const double h1p = hue(a1p, b1);
    const double h2p = hue(a2p, b2);

    const double dlp = l2 - l1;
    const double dcp = c2p - c1p;
    double dhp;
    if (c1p * c2p == 0.0)
        dhp = 0.0;
    else if (std::abs(h2p - h1p) <= 180.0)
        dhp = h2p - h1p;
    else if (h2p - h1p > 180.0)
        dhp = h2p - h1p - 360.0;
    else
        dhp = h2p - h1p + 360.0;
    const double dhp_big = 2.0 * std::sqrt(c1p * c2p) * std::sin(deg2rad(dhp) / 2.0);

    const double lbar = (l1 + l2) / 2.0;
    const double cbarp = (c1p + c2p) / 2.0;
    double hbar;
    if (c1p * c2p == 0.0)
        hbar = h1p + h2p;
    else if (std::abs(h1p - h2p) <= 180.0)
        hbar = (h1p + h2p) / 2.0;
    else if (h1p + h2p < 360.0)
        hbar = (h1p + h2p) / 2.0 + 180.0;
    else
        hbar = (h1p + h2p) / 2.0 - 180.0;

    const double t = 1.0 - 0.17 * std::cos(deg2rad(hbar - 30.0)) + 0.24 * std::cos(deg2rad(2.0 * hbar)) +
                     0.32 * std::cos(deg2rad(3.0 * hbar + 6.0)) - 0.20 * std::cos(deg2rad(4.0 * hbar - 63.0));
    const double dtheta = 30.0 * std::exp(-((hbar - 275.0) / 25.0) * ((hbar - 275.0) / 25.0));
    const double cbarp7 = std::pow(cbarp, 7.0);
    const double rc = 2.0 * std::sqrt(cbarp7 / (cbarp7 + std::pow(25.0, 7.0)));
    const double lterm = (lbar - 50.0) * (lbar - 50.0);
    const double sl = 1.0 + 0.015 * lterm / std::sqrt(20.0 + lterm);
    const double sc = 1.0 + 0.045 * cbarp;
    const double sh = 1.0 + 0.015 * cbarp * t;
    const double rt = -std::sin(deg2rad(2.0 * dtheta)) * rc;

    const double x = dlp / sl, y = dcp / sc, z = dhp_big / sh;
    return std::sqrt(x * x + y * y + z * z + rt * y * z);
}

double ciede2000(const ImageTensor& a, const ImageTensor& b) {
    check_same_size(a, b, "ciede2000");
    const ImageTensor ua = a.to_range({0.0, 1.0});
    const ImageTensor ub = b.to_range({0.0, 1.0});
    const int h = a.height(), w = a.width();
    double total = 0.0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const Lab la = rgb_to_lab(ua.at(0, i, j), ua.at(1, i, j), ua.at(2, i, j));
            const Lab lb = rgb_to_lab(ub.at(0, i, j), ub.at(1, i, j), ub.at(2, i, j));
            total += ciede2000_lab(la.l, la.a, la.b, lb.l, lb.a, lb.b);
        }
    return total / (static_cast<double>(h) * w);
}

namespace {

double mean_local_contrast(const Tensor& gray, int radius, double mean_floor) {
    const int h = gray.dim(0), w = gray.dim(1);
    double total = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
            const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
            const int count = (y1 - y0 + 1) * (x1 - x0 + 1);
            double m = 0.0;
            for (int i = y0; i <= y1; ++i)
                for (int j = x0; j <= x1; ++j) m += gray.at2(i, j);
            m /= count;
            double s = 0.0;
            for (int i = y0; i <= y1; ++i)
                for (int j = x0; j <= x1; ++j) {
                    const double d = gray.at2(i, j) - m;
                    s += d * d;
                }
            s /= count;
            total += s / std::max(m, mean_floor);
        }
    return total / (static_cast<double>(h) * w);
}

}  // namespace

double contrast_gain(const ImageTensor& restored, const ImageTensor& hazy, int radius,
                     double mean_floor) {
    check_same_size(restored, hazy, "contrast_gain");
    if (radius < 1) throw ConfigError("contrast_gain: radius must be >= 1");
    if (restored.height() < 2 * radius + 1 || restored.width() < 2 * radius + 1)
        throw DimensionError("contrast_gain: image smaller than the contrast window");
    const Tensor gr = to_gray01(restored), gh = to_gray01(hazy);
    return mean_local_contrast(gr, radius, mean_floor) - mean_local_contrast(gh, radius, mean_floor);
}

namespace {

// Michelson-style local contrast over a clipped 5x5 window.
std::vector<bool> visible_edge_mask(const Tensor& gray, double threshold) {
    const int h = gray.dim(0), w = gray.dim(1);
    std::vector<bool> mask(static_cast<size_t>(h) * w, false);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int y0 = std::max(0, y - 2), y1 = std::min(h - 1, y + 2);
            const int x0 = std::max(0, x - 2), x1 = std::min(w - 1, x + 2);
            double lo = 1e300, hi = -1e300;
            for (int i = y0; i <= y1; ++i)
                for (int j = x0; j <= x1; ++j) {
                    lo = std::min(lo, gray.at2(i, j));
                    hi = std::max(hi, gray.at2(i, j));
                }
            const double denom = hi + lo;
            const double contrast = denom > 0.0 ? (hi - lo) / denom : 0.0;
            mask[static_cast<size_t>(y) * w + x] = contrast > threshold;
        }
    return mask;
}

// Sobel magnitude with replicated borders.
Tensor sobel_magnitude(const Tensor& gray) {
    const int h = gray.dim(0), w = gray.dim(1);
    Tensor out({h, w});
    auto px = [&](int y, int x) {
        return gray.at2(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1));
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx = px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1) -
                              px(y - 1, x - 1) - 2 * px(y, x - 1) - px(y + 1, x - 1);
            const double gy = px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1) -
                              px(y - 1, x - 1) - 2 * px(y - 1, x) - px(y - 1, x + 1);
            out.at2(y, x) = std::sqrt(gx * gx + gy * gy);
        }
    return out;
}

bool pixel_saturated(const ImageTensor& img01, int y, int x) {
    for (int c = 0; c < 3; ++c) {
        const double v = img01.at(c, y, x);
        if (v <= 0.0 || v >= 1.0) return true;
    }
    return false;
}

}  // namespace

VisibleEdgeMetrics visible_edge_metrics(const ImageTensor& restored, const ImageTensor& hazy,
                                        double threshold) {
    check_same_size(restored, hazy, "visible_edge_metrics");
    const ImageTensor r01 = restored.to_range({0.0, 1.0});
    const ImageTensor h01 = hazy.to_range({0.0, 1.0});
    const Tensor gr = to_gray01(restored), gh = to_gray01(hazy);
    const int h = restored.height(), w = restored.width();

    const auto mask_r = visible_edge_mask(gr, threshold);
    const auto mask_h = visible_edge_mask(gh, threshold);

    VisibleEdgeMetrics out;
    int n_r = 0, n_o = 0;
    for (bool b : mask_r) n_r += b ? 1 : 0;
    for (bool b : mask_h) n_o += b ? 1 : 0;
    out.edges_restored = n_r;
    out.edges_original = n_o;
    if (n_o == 0) {
        out.e_defined = false;
        out.e = 0.0;
    } else {
        out.e = static_cast<double>(n_r - n_o) / n_o;
    }

    const Tensor grad_r = sobel_magnitude(gr);
    const Tensor grad_h = sobel_magnitude(gh);
    double log_sum = 0.0;
    int included = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask_r[static_cast<size_t>(y) * w + x]) continue;
            const double num = grad_r.at2(y, x), den = grad_h.at2(y, x);
            if (den <= 0.0 || num <= 0.0) {
                ++out.excluded_ratios;
                continue;
            }
            log_sum += std::log(num / den);
            ++included;
        }
    out.r_bar = included > 0 ? std::exp(log_sum / included) : 1.0;

    int newly_saturated = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (pixel_saturated(r01, y, x) && !pixel_saturated(h01, y, x)) ++newly_saturated;
    out.sigma = static_cast<double>(newly_saturated) / (static_cast<double>(h) * w);
    return out;
}

// --------------------------------------------------------------- batch report

namespace {

void add_metric(MetricReport& rep, const std::string& key, double v) {
    rep.means[key] += v;
    rep.counts[key] += 1;
}

}  // namespace

MetricReport evaluate_directories(const std::string& restored_dir, const std::string& reference_dir,
                                  const std::string& hazy_dir, int window_radius,
                                  double edge_threshold) {
    namespace fs = std::filesystem;
    MetricReport rep;
    rep.window_radius = window_radius;
    rep.edge_threshold = edge_threshold;
    if (reference_dir.empty() && hazy_dir.empty())
        throw ConfigError("evaluate: need a reference dir or a hazy dir");

    auto files = list_image_files(restored_dir);
    if (files.empty()) throw InputError("evaluate: no images in " + restored_dir);

    for (const auto& path : files) {
        const std::string name = fs::path(path).filename().string();
        ImageMetricsRow row;
        row.name = name;
        try {
            const ImageTensor restored = load_image(path);
            bool any = false;
            if (!reference_dir.empty()) {
                const fs::path ref = fs::path(reference_dir) / name;
                if (fs::exists(ref)) {
                    const ImageTensor reference = load_image(ref.string());
                    row.psnr = psnr(restored, reference);
                    row.ssim = ssim(restored, reference);
                    row.ciede2000 = ciede2000(restored, reference);
                    any = true;
                } else {
                    row.note += "no reference; ";
                }
            }
            if (!hazy_dir.empty()) {
                const fs::path hz = fs::path(hazy_dir) / name;
                if (fs::exists(hz)) {
                    const ImageTensor hazy = load_image(hz.string());
                    row.contrast_gain = contrast_gain(restored, hazy, window_radius);
                    const auto vem = visible_edge_metrics(restored, hazy, edge_threshold);
                    if (vem.e_defined)
                        row.e = vem.e;
                    else
                        row.note += "e undefined (no visible edges in hazy); ";
                    row.r_bar = vem.r_bar;
                    row.sigma = vem.sigma;
                    any = true;
                } else {
                    row.note += "no hazy counterpart; ";
                }
            }
            row.skipped = !any;
        } catch (const std::exception& ex) {
            row.skipped = true;
            row.note = ex.what();
        }
        if (row.skipped) ++rep.skipped_images;
        if (row.psnr) add_metric(rep, "psnr", *row.psnr);
        if (row.ssim) add_metric(rep, "ssim", *row.ssim);
        if (row.ciede2000) add_metric(rep, "ciede2000", *row.ciede2000);
        if (row.contrast_gain) add_metric(rep, "contrast_gain", *row.contrast_gain);
        if (row.e) add_metric(rep, "e", *row.e);
        if (row.r_bar) add_metric(rep, "r_bar", *row.r_bar);
        if (row.sigma) add_metric(rep, "sigma", *row.sigma);
        rep.rows.push_back(std::move(row));
    }
    for (auto& [key, sum] : rep.means) sum /= rep.counts[key];
    return rep;
}

namespace {

std::string cell(const std::optional<double>& v) {
    if (!v) return "";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", *v);
    return buf;
}

}  // namespace

void write_report_csv(const MetricReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("report: cannot write " + path);
    out << "name,psnr,ssim,ciede2000,contrast_gain,e,r_bar,sigma,skipped,note\n";
    for (const auto& r : report.rows) {
        out << r.name << ',' << cell(r.psnr) << ',' << cell(r.ssim) << ',' << cell(r.ciede2000)
            << ',' << cell(r.contrast_gain) << ',' << cell(r.e) << ',' << cell(r.r_bar) << ','
            << cell(r.sigma) << ',' << (r.skipped ? 1 : 0) << ",\"" << r.note << "\"\n";
    }
    auto mean_cell = [&](const char* k) {
        auto it = report.means.find(k);
        return it == report.means.end() ? std::string() : cell(it->second);
    };
    out << "mean," << mean_cell("psnr") << ',' << mean_cell("ssim") << ',' << mean_cell("ciede2000")
        << ',' << mean_cell("contrast_gain") << ',' << mean_cell("e") << ',' << mean_cell("r_bar")
        << ',' << mean_cell("sigma") << ",,\"" << report.skipped_images << " skipped\"\n";
}

void write_report_json(const MetricReport& report, const std::string& path) {
    nlohmann::json j;
    j["window_radius"] = report.window_radius;
    j["edge_threshold"] = report.edge_threshold;
    j["skipped_images"] = report.skipped_images;
    j["means"] = report.means;
    j["counts"] = report.counts;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json row;
        row["name"] = r.name;
        auto set = [&row](const char* k, const std::optional<double>& v) {
            if (v) row[k] = *v;
        };
        set("psnr", r.psnr);
        set("ssim", r.ssim);
        set("ciede2000", r.ciede2000);
        set("contrast_gain", r.contrast_gain);
        set("e", r.e);
        set("r_bar", r.r_bar);
        set("sigma", r.sigma);
        row["skipped"] = r.skipped;
        if (!r.note.empty()) row["note"] = r.note;
        j["rows"].push_back(row);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("report: cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace ucl
