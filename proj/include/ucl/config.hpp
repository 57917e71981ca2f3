#pragma once

#include <string>

#include "ucl/trainer.hpp"

namespace ucl {

// Key-value training configuration ("key = value" lines, '#' comments).
// Unknown keys raise ConfigError naming the key. `variant` expands to the
// five component flags; explicit use_* keys override it regardless of order.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);
std::string serialize_train_config(const TrainConfig& cfg);

// Documented key list (one per line) for --help and error messages.
std::string train_config_keys();

}  // namespace ucl
