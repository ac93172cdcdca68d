#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "egnn/error.hpp"
#include "egnn/tensor.hpp"
#include "egnn/training.hpp"

namespace egnn {

using ConfigMap = std::map<std::string, std::string>;

/// Reads a flat `key = value` file. Blank lines and `#` comments are skipped.
inline ConfigMap read_config_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    ConfigMap out;
    std::string line;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string{};
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        }
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

namespace config_detail {

inline bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw UsageError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        if (!v.empty() && v.front() == '-') throw std::invalid_argument(v);
        const auto r = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
}

inline double parse_real(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

} // namespace config_detail

/// Applies recognized keys on top of cfg; unknown keys are an error.
/// Keys consumed elsewhere (out, csv, timing) are ignored here.
inline void apply_config(TrainConfig& cfg, const ConfigMap& values)
{
    using namespace config_detail;
    for (const auto& [key, v] : values) {
        if (key == "arch") cfg.architecture = v;
        else if (key == "optimizer") cfg.optimizer.kind = parse_optimizer(v);
        else if (key == "lr") cfg.optimizer.learning_rate = parse_real(key, v);
        else if (key == "beta1") cfg.optimizer.beta1 = parse_real(key, v);
        else if (key == "beta2") cfg.optimizer.beta2 = parse_real(key, v);
        else if (key == "epsilon") cfg.optimizer.epsilon = parse_real(key, v);
        else if (key == "epochs") cfg.epochs = parse_uint(key, v);
        else if (key == "batch_size") cfg.batch_size = parse_uint(key, v);
        else if (key == "seed") cfg.seed = parse_uint(key, v);
        else if (key == "folds") cfg.folds = parse_uint(key, v);
        else if (key == "patience") cfg.patience = parse_uint(key, v);
        else if (key == "limit") cfg.limit = parse_uint(key, v);
        else if (key == "dataset_dir") cfg.dataset_dir = v;
        else if (key == "dataset") cfg.dataset_name = v;
        else if (key == "normalize_edges") cfg.normalize_edges = parse_bool(key, v);
        else if (key == "edge_bias") cfg.model.edge.bias = parse_bool(key, v);
        else if (key == "edges_only") cfg.model.edge.existing_edges_only = parse_bool(key, v);
        else if (key == "out" || key == "csv" || key == "timing") continue;
        else throw UsageError("unknown config key '" + key + "'");
    }
}

} // namespace egnn
