#include "ucl/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace ucl {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos;
        const long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<int>(d);
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

}  // namespace

std::string train_config_keys() {
    return "epochs decay_start lr adam_beta1 adam_beta2 batch_size crop_size num_patches nce_dim "
           "generator_base_channels n_residual_blocks discriminator_base_channels norm_kind "
           "spectral_norm_everywhere vgg_width_mult vgg_weights_path seed save_every scp_negative "
           "max_grad_norm lambda1 lambda2 lambda3 lambda4 omega1 omega2 omega3 tau scp_delta "
           "variant use_ide use_dual_pc use_scp use_sp_norm use_sc_conv";
}

TrainConfig parse_train_config(const std::string& text) {
    TrainConfig cfg;
    std::map<std::string, std::string> kv;
    std::vector<std::string> order;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        kv[key] = value;
        order.push_back(key);
    }

    // variant first so explicit flags win regardless of file order
    if (auto it = kv.find("variant"); it != kv.end()) cfg.variant = variant_flags(it->second);

    for (const auto& key : order) {
        const std::string& v = kv[key];
        if (key == "variant")
            continue;  // handled above
        else if (key == "epochs")
            cfg.epochs = parse_int(key, v);
        else if (key == "decay_start")
            cfg.decay_start = parse_int(key, v);
        else if (key == "lr")
            cfg.lr = parse_double(key, v);
        else if (key == "adam_beta1")
            cfg.adam_beta1 = parse_double(key, v);
        else if (key == "adam_beta2")
            cfg.adam_beta2 = parse_double(key, v);
        else if (key == "batch_size")
            cfg.batch_size = parse_int(key, v);
        else if (key == "crop_size")
            cfg.crop_size = parse_int(key, v);
        else if (key == "num_patches")
            cfg.num_patches = parse_int(key, v);
        else if (key == "nce_dim")
            cfg.nce_dim = parse_int(key, v);
        else if (key == "generator_base_channels")
            cfg.generator_base_channels = parse_int(key, v);
        else if (key == "n_residual_blocks")
            cfg.n_residual_blocks = parse_int(key, v);
        else if (key == "discriminator_base_channels")
            cfg.discriminator_base_channels = parse_int(key, v);
        else if (key == "norm_kind") {
            if (v == "instance")
                cfg.norm_kind = nn::NormKind::Instance;
            else if (v == "none")
                cfg.norm_kind = nn::NormKind::None;
            else
                throw ConfigError("config: norm_kind must be 'instance' or 'none', got '" + v + "'");
        } else if (key == "spectral_norm_everywhere")
            cfg.spectral_norm_everywhere = parse_bool(key, v);
        else if (key == "vgg_width_mult")
            cfg.vgg_width_mult = parse_double(key, v);
        else if (key == "vgg_weights_path")
            cfg.vgg_weights_path = v;
        else if (key == "seed")
            cfg.seed = static_cast<std::uint64_t>(std::stoull(v));
        else if (key == "save_every")
            cfg.save_every = parse_int(key, v);
        else if (key == "scp_negative") {
            if (v == "self")
                cfg.scp_negative_random = false;
            else if (v == "random")
                cfg.scp_negative_random = true;
            else
                throw ConfigError("config: scp_negative must be 'self' or 'random', got '" + v + "'");
        } else if (key == "max_grad_norm")
            cfg.max_grad_norm = parse_double(key, v);
        else if (key == "lambda1")
            cfg.weights.lambda1 = parse_double(key, v);
        else if (key == "lambda2")
            cfg.weights.lambda2 = parse_double(key, v);
        else if (key == "lambda3")
            cfg.weights.lambda3 = parse_double(key, v);
        else if (key == "lambda4")
            cfg.weights.lambda4 = parse_double(key, v);
        else if (key == "omega1")
            cfg.weights.omega[0] = parse_double(key, v);
        else if (key == "omega2")
            cfg.weights.omega[1] = parse_double(key, v);
        else if (key == "omega3")
            cfg.weights.omega[2] = parse_double(key, v);
        else if (key == "tau")
            cfg.weights.tau = parse_double(key, v);
        else if (key == "scp_delta")
            cfg.weights.scp_delta = parse_double(key, v);
        else if (key == "use_ide")
            cfg.variant.use_ide = parse_bool(key, v);
        else if (key == "use_dual_pc")
            cfg.variant.use_dual_pc = parse_bool(key, v);
        else if (key == "use_scp")
            cfg.variant.use_scp = parse_bool(key, v);
        else if (key == "use_sp_norm")
            cfg.variant.use_sp_norm = parse_bool(key, v);
        else if (key == "use_sc_conv")
            cfg.variant.use_sc_conv = parse_bool(key, v);
        else
            throw ConfigError("config: unknown key '" + key + "' (known keys: " +
                              train_config_keys() + ")");
    }
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_train_config(ss.str());
}

std::string serialize_train_config(const TrainConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "epochs = " << cfg.epochs << "\n";
    out << "decay_start = " << cfg.decay_start << "\n";
    out << "lr = " << cfg.lr << "\n";
    out << "adam_beta1 = " << cfg.adam_beta1 << "\n";
    out << "adam_beta2 = " << cfg.adam_beta2 << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "crop_size = " << cfg.crop_size << "\n";
    out << "num_patches = " << cfg.num_patches << "\n";
    out << "nce_dim = " << cfg.nce_dim << "\n";
    out << "generator_base_channels = " << cfg.generator_base_channels << "\n";
    out << "n_residual_blocks = " << cfg.n_residual_blocks << "\n";
    out << "discriminator_base_channels = " << cfg.discriminator_base_channels << "\n";
    out << "norm_kind = " << (cfg.norm_kind == nn::NormKind::Instance ? "instance" : "none") << "\n";
    out << "spectral_norm_everywhere = " << (cfg.spectral_norm_everywhere ? "true" : "false") << "\n";
    out << "vgg_width_mult = " << cfg.vgg_width_mult << "\n";
    out << "vgg_weights_path = " << cfg.vgg_weights_path << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "save_every = " << cfg.save_every << "\n";
    out << "scp_negative = " << (cfg.scp_negative_random ? "random" : "self") << "\n";
    out << "max_grad_norm = " << cfg.max_grad_norm << "\n";
    out << "lambda1 = " << cfg.weights.lambda1 << "\n";
    out << "lambda2 = " << cfg.weights.lambda2 << "\n";
    out << "lambda3 = " << cfg.weights.lambda3 << "\n";
    out << "lambda4 = " << cfg.weights.lambda4 << "\n";
    out << "omega1 = " << cfg.weights.omega[0] << "\n";
    out << "omega2 = " << cfg.weights.omega[1] << "\n";
    out << "omega3 = " << cfg.weights.omega[2] << "\n";
    out << "tau = " << cfg.weights.tau << "\n";
    out << "scp_delta = " << cfg.weights.scp_delta << "\n";
    out << "use_ide = " << (cfg.variant.use_ide ? "true" : "false") << "\n";
    out << "use_dual_pc = " << (cfg.variant.use_dual_pc ? "true" : "false") << "\n";
    out << "use_scp = " << (cfg.variant.use_scp ? "true" : "false") << "\n";
    out << "use_sp_norm = " << (cfg.variant.use_sp_norm ? "true" : "false") << "\n";
    out << "use_sc_conv = " << (cfg.variant.use_sc_conv ? "true" : "false") << "\n";
    return out.str();
}

}  // namespace ucl
