#pragma once

#include <memory>
#include <string>

#include "ucl/trainer.hpp"

namespace ucl {

// Versioned binary checkpoint: config snapshot, epoch/step counters, RNG
// state, every trainable parameter and buffer by name, and both optimizers'
// moments. Save->load round-trips bit-exactly; files are written atomically
// and integrity-checked by content hash on load.
void save_checkpoint(TrainState& state, const std::string& path);
std::unique_ptr<TrainState> load_checkpoint(const std::string& path);

// Hash of the serialized config snapshot (stored in the checkpoint).
std::uint64_t config_hash(const TrainConfig& cfg);

}  // namespace ucl
