// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/config.hpp"

#include "splatswap/errors.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace splatswap {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string format(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string format_list(const double *v, std::size_t n) {
    std::string out = "[";
    for (std::size_t i = 0; i < n; ++i) out += (i ? ", " : "") + format(v[i]);
    return out + "]";
}

double parse_double(const std::string &key, const std::string &text) {
    double v = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size())
        throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
    return v;
}

template <class I> I parse_int(const std::string &key, const std::string &text) {
    I v = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size())
        throw ConfigError("config key '" + key + "': expected an integer, got '" + text + "'");
    return v;
}

bool parse_bool(const std::string &key, const std::string &text) {
    if (text == "true") return true;
    if (text == "false") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::vector<double> parse_list(const std::string &key, const std::string &text) {
    if (text.size() < 2 || text.front() != '[' || text.back() != ']')
        throw ConfigError("config key '" + key + "': expected a [list]");
    std::vector<double> out;
    std::stringstream in(text.substr(1, text.size() - 2));
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError("config key '" + key + "': empty list entry");
        out.push_back(parse_double(key, item));
    }
    return out;
}

using Setter = std::function<void(TrainConfig &, const std::string &key, const std::string &value)>;
using Getter = std::function<std::string(const TrainConfig &)>;

struct Key {
    Setter set;
    Getter get;
};

template <class M> Key int_key(M TrainConfig::*m) {
    return {[m](TrainConfig &c, const std::string &k, const std::string &v) {
                c.*m = parse_int<std::remove_reference_t<decltype(c.*m)>>(k, v);
            },
            [m](const TrainConfig &c) { return std::to_string(c.*m); }};
}

template <class F> Key double_key(F ref) {
    return {[ref](TrainConfig &c, const std::string &k, const std::string &v) { ref(c) = parse_double(k, v); },
            [ref](const TrainConfig &c) { return format(ref(const_cast<TrainConfig &>(c))); }};
}

// Section-qualified keys in serialization order.
const std::vector<std::pair<std::string, Key>> &keys() {
    static const std::vector<std::pair<std::string, Key>> table = {
        {"stage_a_iters", int_key(&TrainConfig::stage_a_iters)},
        {"stage_b_iters", int_key(&TrainConfig::stage_b_iters)},
        {"lr_mu", double_key([](TrainConfig &c) -> double & { return c.lr.mu; })},
        {"lr_rot", double_key([](TrainConfig &c) -> double & { return c.lr.rot; })},
        {"lr_scale", double_key([](TrainConfig &c) -> double & { return c.lr.scale; })},
        {"lr_opacity", double_key([](TrainConfig &c) -> double & { return c.lr.opacity; })},
        {"lr_sh", double_key([](TrainConfig &c) -> double & { return c.lr.sh; })},
        {"beta1", double_key([](TrainConfig &c) -> double & { return c.beta1; })},
        {"beta2", double_key([](TrainConfig &c) -> double & { return c.beta2; })},
        {"epsilon", double_key([](TrainConfig &c) -> double & { return c.epsilon; })},
        {"densify_interval", int_key(&TrainConfig::densify_interval)},
        {"densify_from", int_key(&TrainConfig::densify_from)},
        {"densify_until", int_key(&TrainConfig::densify_until)},
        {"densify_from_b", int_key(&TrainConfig::densify_from_b)},
        {"densify_until_b", int_key(&TrainConfig::densify_until_b)},
        {"densify_in_stage_b",
         {[](TrainConfig &c, const std::string &k, const std::string &v) { c.densify_in_stage_b = parse_bool(k, v); },
          [](const TrainConfig &c) { return std::string(c.densify_in_stage_b ? "true" : "false"); }}},
        {"densify_grad_threshold", double_key([](TrainConfig &c) -> double & { return c.densify_grad_threshold; })},
        {"split_scale_threshold", double_key([](TrainConfig &c) -> double & { return c.split_scale_threshold; })},
        {"opacity_prune_threshold", double_key([](TrainConfig &c) -> double & { return c.opacity_prune_threshold; })},
        {"max_splats", int_key(&TrainConfig::max_splats)},
        {"seed", int_key(&TrainConfig::seed)},
        {"background",
         {[](TrainConfig &c, const std::string &k, const std::string &v) {
              const auto l = parse_list(k, v);
              if (l.size() != 3) throw ConfigError("config key 'background' needs 3 values");
              c.background = Vec3<double>(l[0], l[1], l[2]);
          },
          [](const TrainConfig &c) { return format_list(c.background.data(), 3); }}},
        {"weights.lambda_ssim", double_key([](TrainConfig &c) -> double & { return c.weights.lambda_ssim; })},
        {"weights.lambda_scale", double_key([](TrainConfig &c) -> double & { return c.weights.lambda_scale; })},
        {"weights.lambda_pos", double_key([](TrainConfig &c) -> double & { return c.weights.lambda_pos; })},
        {"weights.phi_scale", double_key([](TrainConfig &c) -> double & { return c.weights.phi_scale; })},
        {"weights.phi_pos", double_key([](TrainConfig &c) -> double & { return c.weights.phi_pos; })},
        {"weights.lambda_id", double_key([](TrainConfig &c) -> double & { return c.weights.lambda_id; })},
        {"weights.lambda_k",
         {[](TrainConfig &c, const std::string &k, const std::string &v) { c.weights.lambda_k = parse_list(k, v); },
          [](const TrainConfig &c) { return format_list(c.weights.lambda_k.data(), c.weights.lambda_k.size()); }}},
    };
    return table;
}

} // namespace

void TrainConfig::validate() const {
    if (stage_a_iters < 0 || stage_b_iters < 0) throw ConfigError("iteration counts must be nonnegative");
    for (double r : {lr.mu, lr.rot, lr.scale, lr.opacity, lr.sh, epsilon})
        if (!(r > 0)) throw ConfigError("learning rates and epsilon must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0, 1)");
    if (densify_interval <= 0) throw ConfigError("densify_interval must be positive");
    if (!(densify_grad_threshold >= 0 && split_scale_threshold >= 0 && opacity_prune_threshold >= 0))
        throw ConfigError("density control thresholds must be nonnegative");
    if (max_splats <= 0) throw ConfigError("max_splats must be positive");
    weights.validate();
}

TrainConfig parse_config(const std::string &text) {
    TrainConfig cfg;
    std::map<std::string, const Key *> lookup;
    for (const auto &[name, key] : keys()) lookup[name] = &key;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            if (section != "weights") throw ConfigError("unknown config section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string name = trim(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        const std::string full = section.empty() ? name : section + "." + name;
        auto it = lookup.find(full);
        if (it == lookup.end()) throw ConfigError("unknown config key '" + full + "'");
        it->second->set(cfg, full, value);
    }
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const TrainConfig &config) {
    std::string out, section;
    for (const auto &[name, key] : keys()) {
        const auto dot = name.find('.');
        const std::string sec = dot == std::string::npos ? "" : name.substr(0, dot);
        if (sec != section) {
            out += "\n[" + sec + "]\n";
            section = sec;
        }
        out += name.substr(dot == std::string::npos ? 0 : dot + 1) + " = " + key.get(config) + "\n";
    }
    return out;
}

std::uint64_t config_hash(const TrainConfig &config) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : serialize_config(config)) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace splatswap
