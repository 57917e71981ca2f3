#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ucl/trainer.hpp"

namespace ucl {

inline constexpr const char* kVersion = "0.1.0";

// CLI-level overrides (precedence: CLI > config file > defaults).
struct CommonOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> crop_size;
    std::optional<int> epochs;
    std::optional<std::string> device;        // "cpu" is the only supported device
    std::optional<std::string> scp_negative;  // "self" | "random"
    std::optional<std::string> variant;       // base|v1..v5|full
};

// Written to <out_dir>/run_manifest.json before any other output.
void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const std::string& config_text,
                        const std::vector<std::pair<std::string, std::string>>& paths,
                        std::uint64_t seed);

TrainConfig resolve_config(const std::string& config_path, const CommonOverrides& overrides);

int cmd_train(const std::string& config_path, const std::string& hazy_dir,
              const std::string& clean_dir, const std::string& out_dir,
              const CommonOverrides& overrides);

int cmd_infer(const std::string& checkpoint_path, const std::string& input_dir,
              const std::string& out_dir, const CommonOverrides& overrides);

int cmd_eval(const std::string& restored_dir, const std::string& reference_dir,
             const std::string& hazy_dir, const std::string& report_path, int window_radius = 3,
             double edge_threshold = 0.05);

int cmd_ablate(const std::string& config_path, const std::string& hazy_dir,
               const std::string& clean_dir, const std::string& out_dir,
               const CommonOverrides& overrides, const std::string& eval_hazy = "",
               const std::string& eval_clean = "");

}  // namespace ucl
