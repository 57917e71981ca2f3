#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ucl/image.hpp"

namespace ucl {

// All metrics convert their inputs to the [0,1] range first. Grayscale
// conversion uses BT.601 luma.

// 10*log10(peak^2 / MSE), capped at 100 dB (identical images hit the cap).
double psnr(const ImageTensor& a, const ImageTensor& b, double peak = 1.0);

// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5), valid region
// only, stabilizers C1=(0.01*peak)^2, C2=(0.03*peak)^2.
double ssim(const ImageTensor& a, const ImageTensor& b);

// Mean per-pixel CIEDE2000 color difference (sRGB, D65 white point).
double ciede2000(const ImageTensor& a, const ImageTensor& b);
// Single Lab pair (reference-dataset checks).
double ciede2000_lab(double l1, double a1, double b1, double l2, double a2, double b2);

// Mean local contrast difference. Per-pixel contrast is S/max(m, floor) over
// a (2r+1)^2 window clipped to the image, S the biased variance and m the
// mean of the window.
double contrast_gain(const ImageTensor& restored, const ImageTensor& hazy, int radius = 3,
                     double mean_floor = 1e-6);

struct VisibleEdgeMetrics {
    double e = 0.0;       // (n_r - n_o) / n_o
    double r_bar = 1.0;   // geometric mean gradient ratio on restored visible edges
    double sigma = 0.0;   // newly saturated pixel rate
    bool e_defined = true;       // false when the hazy image has no visible edges
    int edges_restored = 0;      // n_r
    int edges_original = 0;      // n_o
    int excluded_ratios = 0;     // visible edges dropped from r_bar (zero gradient)
};

// Visible edge: local Michelson contrast over a 5x5 clipped window exceeds
// `threshold`. Gradients are Sobel magnitudes with replicated borders.
// Saturated: any channel at or beyond a range endpoint.
VisibleEdgeMetrics visible_edge_metrics(const ImageTensor& restored, const ImageTensor& hazy,
                                        double threshold = 0.05);

// ---- batch evaluation -------------------------------------------------------

struct ImageMetricsRow {
    std::string name;
    std::optional<double> psnr, ssim, ciede2000;                  // full-reference
    std::optional<double> contrast_gain, e, r_bar, sigma;         // reduced-reference
    bool skipped = false;
    std::string note;
};

struct MetricReport {
    std::vector<ImageMetricsRow> rows;
    std::map<std::string, double> means;   // over successfully evaluated images
    std::map<std::string, int> counts;
    int skipped_images = 0;
    int window_radius = 3;
    double edge_threshold = 0.05;
};

// Filename-matched evaluation; reference_dir enables the full-reference
// metrics, hazy_dir the reduced-reference ones (either may be empty).
MetricReport evaluate_directories(const std::string& restored_dir, const std::string& reference_dir,
                                  const std::string& hazy_dir, int window_radius = 3,
                                  double edge_threshold = 0.05);

void write_report_csv(const MetricReport& report, const std::string& path);
void write_report_json(const MetricReport& report, const std::string& path);

}  // namespace ucl
