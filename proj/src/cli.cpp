#include "ucl/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "ucl/checkpoint.hpp"
#include "ucl/config.hpp"
#include "ucl/data.hpp"
#include "ucl/metrics.hpp"

namespace ucl {

namespace fs = std::filesystem;

namespace {

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

int report_error(const char* command, const std::exception& ex) {
    std::cerr << command << ": error: " << ex.what() << "\n";
    return 1;
}

}  // namespace

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const std::string& config_text,
                        const std::vector<std::pair<std::string, std::string>>& paths,
                        std::uint64_t seed) {
    fs::create_directories(out_dir);
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config_text;
    j["seed"] = seed;
    j["version"] = kVersion;
    j["started_at"] = now_iso8601();
    for (const auto& [k, v] : paths) j["paths"][k] = v;
    std::ofstream out(fs::path(out_dir) / "run_manifest.json", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write run manifest in " + out_dir);
    out << j.dump(2) << "\n";
}

TrainConfig resolve_config(const std::string& config_path, const CommonOverrides& o) {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
    if (o.variant) cfg.variant = variant_flags(*o.variant);
    if (o.seed) cfg.seed = *o.seed;
    if (o.crop_size) cfg.crop_size = *o.crop_size;
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.scp_negative) {
        if (*o.scp_negative == "self")
            cfg.scp_negative_random = false;
        else if (*o.scp_negative == "random")
            cfg.scp_negative_random = true;
        else
            throw ConfigError("--scp-negative must be 'self' or 'random'");
    }
    if (cfg.decay_start > cfg.epochs) cfg.decay_start = std::max(1, cfg.epochs / 2);
    if (o.device && *o.device != "cpu")
        throw ConfigError("unsupported device '" + *o.device + "' (only 'cpu' is available)");
    cfg.validate();
    return cfg;
}

int cmd_train(const std::string& config_path, const std::string& hazy_dir,
              const std::string& clean_dir, const std::string& out_dir,
              const CommonOverrides& overrides) {
    try {
        TrainConfig cfg = resolve_config(config_path, overrides);
        UnpairedDataset data = scan_unpaired(hazy_dir, clean_dir);
        data.crop_size = cfg.crop_size;
        write_run_manifest(out_dir, "train", serialize_train_config(cfg),
                           {{"hazy_dir", hazy_dir}, {"clean_dir", clean_dir}, {"out_dir", out_dir}},
                           cfg.seed);
        TrainState state(cfg);
        const FitResult r = fit(state, data, out_dir);
        std::cout << "train: " << r.steps_run << " steps, final checkpoint " << r.final_checkpoint
                  << "\n";
        return 0;
    } catch (const std::exception& ex) {
        return report_error("train", ex);
    }
}

int cmd_infer(const std::string& checkpoint_path, const std::string& input_dir,
              const std::string& out_dir, const CommonOverrides& overrides) {
    try {
        if (overrides.device && *overrides.device != "cpu")
            throw ConfigError("unsupported device '" + *overrides.device + "'");
        auto state = load_checkpoint(checkpoint_path);
        auto files = list_image_files(input_dir);
        if (files.empty()) throw InputError("infer: no images in " + input_dir);
        write_run_manifest(out_dir, "infer", serialize_train_config(state->config()),
                           {{"checkpoint", checkpoint_path},
                            {"input_dir", input_dir},
                            {"out_dir", out_dir}},
                           state->config().seed);
        state->generator().set_training(false);
        int failures = 0;
        for (const auto& path : files) {
            const std::string name = fs::path(path).filename().string();
            try {
                const ImageTensor input = load_image(path);
                const ImageTensor restored = state->generator().forward(input, /*reflect_pad=*/true);
                const fs::path out_path = fs::path(out_dir) / (fs::path(name).stem().string() + ".png");
                save_image_png(restored, out_path.string());
            } catch (const std::exception& ex) {
                std::cerr << "infer: failed on " << name << ": " << ex.what() << "\n";
                ++failures;
            }
        }
        if (failures > 0) {
            std::cerr << "infer: " << failures << " of " << files.size() << " images failed\n";
            return 1;
        }
        std::cout << "infer: wrote " << files.size() << " images to " << out_dir << "\n";
        return 0;
    } catch (const std::exception& ex) {
        return report_error("infer", ex);
    }
}

int cmd_eval(const std::string& restored_dir, const std::string& reference_dir,
             const std::string& hazy_dir, const std::string& report_path, int window_radius,
             double edge_threshold) {
    try {
        const fs::path report(report_path);
        const std::string out_dir = report.has_parent_path() ? report.parent_path().string() : ".";
        write_run_manifest(out_dir, "eval", "",
                           {{"restored_dir", restored_dir},
                            {"reference_dir", reference_dir},
                            {"hazy_dir", hazy_dir},
                            {"report", report_path}},
                           0);
        const MetricReport rep =
            evaluate_directories(restored_dir, reference_dir, hazy_dir, window_radius, edge_threshold);
        write_report_csv(rep, report_path);
        const std::string json_path = (report.parent_path() / (report.stem().string() + ".json")).string();
        write_report_json(rep, json_path);
        std::cout << "eval: " << rep.rows.size() << " images, " << rep.skipped_images
                  << " skipped\n";
        for (const auto& [k, v] : rep.means)
            std::cout << "  mean " << k << " = " << v << " (" << rep.counts.at(k) << " images)\n";
        return 0;
    } catch (const std::exception& ex) {
        return report_error("eval", ex);
    }
}

namespace {

// Table-4-style row: variant name, component flags, then summary numbers.
void write_ablation_table(const std::string& out_dir,
                          const std::vector<std::array<std::string, 9>>& rows) {
    const fs::path csv_path = fs::path(out_dir) / "ablation_results.csv";
    const fs::path txt_path = fs::path(out_dir) / "ablation_table.txt";
    {
        std::ofstream csv(csv_path.string() + ".tmp", std::ios::trunc);
        csv << "variant,ide,dual_pc,scp,sp_norm,sc_conv,final_total,psnr,ssim\n";
        for (const auto& r : rows) {
            for (size_t i = 0; i < r.size(); ++i) csv << (i ? "," : "") << r[i];
            csv << "\n";
        }
    }
    fs::rename(csv_path.string() + ".tmp", csv_path);
    {
        std::ofstream txt(txt_path.string() + ".tmp", std::ios::trunc);
        txt << "variant  L_ide  Dual-L_PC  L_SCP  Sp-Norm  SC-Conv  final_total  psnr  ssim\n";
        for (const auto& r : rows) {
            txt << r[0];
            for (size_t i = 1; i <= 5; ++i) txt << "  " << (r[i] == "on" ? "✓" : "w/o");
            txt << "  " << r[6] << "  " << r[7] << "  " << r[8] << "\n";
        }
    }
    fs::rename(txt_path.string() + ".tmp", txt_path);
}

}  // namespace

int cmd_ablate(const std::string& config_path, const std::string& hazy_dir,
               const std::string& clean_dir, const std::string& out_dir,
               const CommonOverrides& overrides, const std::string& eval_hazy,
               const std::string& eval_clean) {
    try {
        const TrainConfig base_cfg = resolve_config(config_path, overrides);
        UnpairedDataset data = scan_unpaired(hazy_dir, clean_dir);
        data.crop_size = base_cfg.crop_size;
        write_run_manifest(out_dir, "ablate", serialize_train_config(base_cfg),
                           {{"hazy_dir", hazy_dir}, {"clean_dir", clean_dir}, {"out_dir", out_dir}},
                           base_cfg.seed);

        const char* variants[] = {"base", "v1", "v2", "v3", "v4", "v5"};
        std::vector<std::array<std::string, 9>> rows;
        for (const char* v : variants) {
            TrainConfig cfg = base_cfg;
            cfg.variant = variant_flags(v);
            const std::string run_dir = (fs::path(out_dir) / v).string();
            TrainState state(cfg);
            const FitResult r = fit(state, data, run_dir);

            std::array<std::string, 9> row;
            row[0] = v;
            const VariantFlags& f = cfg.variant;
            row[1] = f.use_ide ? "on" : "w/o";
            row[2] = f.use_dual_pc ? "on" : "w/o";
            row[3] = f.use_scp ? "on" : "w/o";
            row[4] = f.use_sp_norm ? "on" : "w/o";
            row[5] = f.use_sc_conv ? "on" : "w/o";
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6g", r.last_bundle.total);
            row[6] = buf;
            row[7] = row[8] = "";
            if (!eval_hazy.empty() && !eval_clean.empty()) {
                state.generator().set_training(false);
                const ImageTensor hazy = load_image(eval_hazy);
                const ImageTensor clean = load_image(eval_clean);
                const ImageTensor restored = state.generator().forward(hazy);
                std::snprintf(buf, sizeof(buf), "%.4f", psnr(restored, clean));
                row[7] = buf;
                std::snprintf(buf, sizeof(buf), "%.4f", ssim(restored, clean));
                row[8] = buf;
            }
            rows.push_back(row);
            write_ablation_table(out_dir, rows);  // persisted after every variant
            std::cout << "ablate: finished " << v << " (final total " << row[6] << ")\n";
        }
        return 0;
    } catch (const std::exception& ex) {
        return report_error("ablate", ex);
    }
}

}  // namespace ucl
