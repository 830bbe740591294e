#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rrw/train_config.hpp"

namespace rrw {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace cfgdetail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace cfgdetail

// INI-style file: [section] headers prefix subsequent keys with "section.".
// A bare key before any section (or inside [general]) is used verbatim, so
// both `preset = toy` and `training.lr = 0.001` work at top level.
inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::map<std::string, std::string> entries;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = cfgdetail::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = cfgdetail::trim(t.substr(1, t.size() - 2));
            if (section == "general") section.clear();
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + path + ":" + std::to_string(lineno) +
                              ": expected key = value");
        std::string key = cfgdetail::trim(t.substr(0, eq));
        std::string value = cfgdetail::trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config: " + path + ":" + std::to_string(lineno) + ": empty key");
        if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
        entries[key] = value;
    }
    return entries;
}

// Applies entries onto `cfg`. "preset" is applied first so that explicit keys
// in the same file override the preset they start from. Unknown keys are
// collected and reported together.
inline void apply_config_entries(TrainConfig& cfg,
                                 const std::map<std::string, std::string>& entries) {
    std::vector<std::string> unknown;
    auto preset = entries.find("preset");
    if (preset != entries.end()) apply_config_entry(cfg, "preset", preset->second);
    for (const auto& [key, value] : entries) {
        if (key == "preset") continue;
        try {
            apply_config_entry(cfg, key, value);
        } catch (const std::invalid_argument& e) {
            std::string msg = e.what();
            if (msg.find("unknown key") != std::string::npos)
                unknown.push_back(key);
            else
                throw ConfigError(msg);
        }
    }
    if (!unknown.empty()) {
        std::string msg = "config: unknown keys:";
        for (const auto& k : unknown) msg += " " + k;
        throw ConfigError(msg);
    }
}

inline TrainConfig load_config_file(const std::string& path) {
    TrainConfig cfg;
    apply_config_entries(cfg, parse_config_file(path));
    return cfg;
}

// Environment overrides: RRW_TRAINING_LR=0.001 maps to training.lr, applied
// after the config file so they win. Only keys the config schema knows are
// scanned; other RRW_* variables are ignored.
inline void apply_env_overrides(TrainConfig& cfg) {
    for (const auto& [key, _] : config_to_map(cfg)) {
        std::string env = "RRW_";
        for (char ch : key) env += ch == '.' ? '_' : static_cast<char>(std::toupper(ch));
        if (const char* v = std::getenv(env.c_str())) apply_config_entry(cfg, key, v);
    }
}

}  // namespace rrw
