#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "ucl/cli.hpp"

namespace {

void add_common_flags(CLI::App* app, ucl::CommonOverrides& o) {
    app->add_option("--seed", o.seed, "Override the training seed");
    app->add_option("--crop-size", o.crop_size, "Override the training crop size");
    app->add_option("--epochs", o.epochs, "Override the epoch count");
    app->add_option("--device", o.device, "Compute device (default from UCL_DEVICE; only 'cpu')");
    app->add_option("--scp-negative", o.scp_negative,
                    "SCP negative source: 'self' (input hazy image) or 'random'")
        ->check(CLI::IsMember({"self", "random"}));
    app->add_option("--variant", o.variant, "Component variant: base, v1..v5 or full")
        ->check(CLI::IsMember({"base", "v1", "v2", "v3", "v4", "v5", "full"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"UCL-Dehaze: unsupervised dehazing on unpaired images"};
    app.require_subcommand(1);

    ucl::CommonOverrides overrides;
    if (const char* dev = std::getenv("UCL_DEVICE")) overrides.device = dev;

    std::string config_path, hazy_dir, clean_dir, out_dir, checkpoint, input_dir;
    std::string restored_dir, reference_dir, eval_hazy_dir, report_path;
    std::string eval_hazy_img, eval_clean_img;
    int window_radius = 3;
    double edge_threshold = 0.05;

    auto* train = app.add_subcommand("train", "Train on unpaired hazy/clean directories");
    train->add_option("--config", config_path, "Key-value config file");
    train->add_option("--hazy", hazy_dir, "Directory of hazy training images")->required();
    train->add_option("--clean", clean_dir, "Directory of clean training images")->required();
    train->add_option("--out", out_dir, "Output directory")->required();
    add_common_flags(train, overrides);

    auto* infer = app.add_subcommand("infer", "Restore every image in a directory");
    infer->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
    infer->add_option("--input", input_dir, "Directory of hazy images")->required();
    infer->add_option("--out", out_dir, "Output directory (8-bit PNG)")->required();
    add_common_flags(infer, overrides);

    auto* eval = app.add_subcommand("eval", "Quality metrics over filename-matched directories");
    eval->add_option("--restored", restored_dir, "Directory of restored images")->required();
    eval->add_option("--reference", reference_dir, "Clean references (PSNR/SSIM/CIEDE2000)");
    eval->add_option("--hazy", eval_hazy_dir, "Hazy originals (contrast gain, e, r_bar, sigma)");
    eval->add_option("--report", report_path, "Report CSV path (JSON written alongside)")->required();
    eval->add_option("--window-radius", window_radius, "Contrast window radius (default 3)");
    eval->add_option("--edge-threshold", edge_threshold, "Visible-edge contrast threshold");

    auto* ablate = app.add_subcommand("ablate", "Run the Base,V1..V5 component ladder");
    ablate->add_option("--config", config_path, "Key-value config file");
    ablate->add_option("--hazy", hazy_dir, "Directory of hazy training images")->required();
    ablate->add_option("--clean", clean_dir, "Directory of clean training images")->required();
    ablate->add_option("--out", out_dir, "Output directory")->required();
    ablate->add_option("--eval-hazy", eval_hazy_img, "Held-out hazy image for per-variant PSNR");
    ablate->add_option("--eval-clean", eval_clean_img, "Held-out clean counterpart");
    add_common_flags(ablate, overrides);

    CLI11_PARSE(app, argc, argv);

    if (train->parsed())
        return ucl::cmd_train(config_path, hazy_dir, clean_dir, out_dir, overrides);
    if (infer->parsed()) return ucl::cmd_infer(checkpoint, input_dir, out_dir, overrides);
    if (eval->parsed())
        return ucl::cmd_eval(restored_dir, reference_dir, eval_hazy_dir, report_path, window_radius,
                             edge_threshold);
    if (ablate->parsed())
        return ucl::cmd_ablate(config_path, hazy_dir, clean_dir, out_dir, overrides, eval_hazy_img,
                               eval_clean_img);
    return 1;
}
