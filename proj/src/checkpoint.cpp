#include "ucl/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "ucl/config.hpp"
#include "ucl/serialize.hpp"

namespace ucl {

namespace {

constexpr const char* kKind = "ucl_dehaze_checkpoint";

void store_optimizer(TensorArchive& a, nn::Adam& opt, const std::string& prefix) {
    a.ints[prefix + ".t"] = opt.step_count();
    for (const auto& slot : opt.slots()) {
        a.tensors[prefix + "." + slot.name + ".m"] = slot.m;
        a.tensors[prefix + "." + slot.name + ".v"] = slot.v;
    }
}

void restore_optimizer(const TensorArchive& a, nn::Adam& opt, const std::string& prefix) {
    opt.set_step_count(a.ints.at(prefix + ".t"));
    for (auto& slot : opt.slots()) {
        slot.m = a.tensors.at(prefix + "." + slot.name + ".m");
        slot.v = a.tensors.at(prefix + "." + slot.name + ".v");
    }
}

}  // namespace

std::uint64_t config_hash(const TrainConfig& cfg) {
    const std::string s = serialize_train_config(cfg);
    return fnv1a64(s.data(), s.size());
}

void save_checkpoint(TrainState& state, const std::string& path) {
    TensorArchive a;
    a.strings["container_kind"] = kKind;
    const std::string cfg_text = serialize_train_config(state.config());
    a.strings["config"] = cfg_text;
    a.ints["config_hash"] = static_cast<std::int64_t>(fnv1a64(cfg_text.data(), cfg_text.size()));
    a.ints["epoch"] = state.epoch();
    a.ints["step"] = state.step();
    a.ints["rng_state"] = static_cast<std::int64_t>(state.rng().state());
    a.ints["rng_inc"] = static_cast<std::int64_t>(state.rng().inc());
    a.ints["heads_init_rng_state"] = static_cast<std::int64_t>(state.heads_init_rng().state());
    a.ints["heads_init_rng_inc"] = static_cast<std::int64_t>(state.heads_init_rng().inc());

    for (const auto& p : state.generator().params()) a.tensors[p.name] = p.node->val;
    for (const auto& b : state.generator().buffers()) a.tensors[b.name] = *b.tensor;
    for (const auto& p : state.discriminator().params()) a.tensors[p.name] = p.node->val;

    a.ints["heads_built"] = state.heads().built() ? 1 : 0;
    if (state.heads().built()) {
        std::string dims;
        for (const auto& [id, c] : state.heads().tap_channels())
            dims += std::to_string(id) + ":" + std::to_string(c) + " ";
        a.strings["heads_tap_channels"] = dims;
        for (const auto& p : state.heads().params()) a.tensors[p.name] = p.node->val;
    }

    store_optimizer(a, state.g_opt(), "adam_g");
    store_optimizer(a, state.d_opt(), "adam_d");
    a.save(path);

    // human-readable sidecar with the config snapshot
    std::ofstream sidecar(path + ".config", std::ios::trunc);
    sidecar << "# epoch " << state.epoch() << ", step " << state.step() << "\n" << cfg_text;
}

std::unique_ptr<TrainState> load_checkpoint(const std::string& path) {
    TensorArchive a = TensorArchive::load(path);
    auto kind = a.strings.find("container_kind");
    if (kind == a.strings.end() || kind->second != kKind)
        throw VersionError("checkpoint: " + path + " is not a training checkpoint");

    const std::string cfg_text = a.strings.at("config");
    if (a.ints.at("config_hash") !=
        static_cast<std::int64_t>(fnv1a64(cfg_text.data(), cfg_text.size())))
        throw IntegrityError("checkpoint: config snapshot hash mismatch");
    const TrainConfig cfg = parse_train_config(cfg_text);

    auto state = std::make_unique<TrainState>(cfg);
    state->set_epoch(static_cast<int>(a.ints.at("epoch")));
    state->set_step(a.ints.at("step"));
    state->rng().restore(static_cast<std::uint64_t>(a.ints.at("rng_state")),
                         static_cast<std::uint64_t>(a.ints.at("rng_inc")));
    state->heads_init_rng().restore(static_cast<std::uint64_t>(a.ints.at("heads_init_rng_state")),
                                    static_cast<std::uint64_t>(a.ints.at("heads_init_rng_inc")));

    auto load_params = [&a](const std::vector<nn::ParamRef>& params) {
        for (const auto& p : params) {
            auto it = a.tensors.find(p.name);
            if (it == a.tensors.end())
                throw IntegrityError("checkpoint: missing parameter " + p.name);
            if (!(it->second.shape() == p.node->val.shape()))
                throw IntegrityError("checkpoint: shape mismatch for " + p.name);
            p.node->val = it->second;
        }
    };
    load_params(state->generator().params());
    load_params(state->discriminator().params());
    for (const auto& b : state->generator().buffers()) {
        auto it = a.tensors.find(b.name);
        if (it == a.tensors.end()) throw IntegrityError("checkpoint: missing buffer " + b.name);
        *b.tensor = it->second;
    }

    if (a.ints.at("heads_built") == 1) {
        std::vector<std::pair<int, int>> tap_channels;
        std::istringstream dims(a.strings.at("heads_tap_channels"));
        std::string item;
        while (dims >> item) {
            const auto colon = item.find(':');
            tap_channels.emplace_back(std::stoi(item.substr(0, colon)),
                                      std::stoi(item.substr(colon + 1)));
        }
        Rng throwaway(0);
        state->heads().build(tap_channels, throwaway);
        load_params(state->heads().params());
        state->g_opt().register_params(state->heads().params());
    }

    restore_optimizer(a, state->g_opt(), "adam_g");
    restore_optimizer(a, state->d_opt(), "adam_d");
    return state;
}

}  // namespace ucl
