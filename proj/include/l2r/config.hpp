#pragma once

// Flat key=value config files with dotted namespaces (router.r=2). Parsing
// is strict: unknown keys, duplicate keys and malformed lines are rejected.
// The canonical serialization (sorted keys) feeds the config hash stamped
// into every data file.

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "l2r/core.hpp"
#include "l2r/harness.hpp"
#include "l2r/routing.hpp"

namespace l2r {

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse_text(const std::string& text) {
        KeyValueConfig cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": expected key=value, got '" + t + "'");
            const std::string key = trim(t.substr(0, eq));
            const std::string val = trim(t.substr(eq + 1));
            if (key.empty())
                throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
            if (cfg.values_.count(key))
                throw std::invalid_argument("config: duplicate key '" + key + "'");
            cfg.values_[key] = val;
        }
        return cfg;
    }

    static KeyValueConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse_text(ss.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& dflt) const {
        mark(key);
        auto it = values_.find(key);
        return it == values_.end() ? dflt : it->second;
    }

    double get_double(const std::string& key, double dflt) const {
        mark(key);
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        std::size_t pos = 0;
        double v = 0.0;
        try {
            v = std::stod(it->second, &pos);
        } catch (const std::exception&) {
            throw std::invalid_argument("config: key '" + key + "' is not a number: '" +
                                        it->second + "'");
        }
        if (pos != it->second.size())
            throw std::invalid_argument("config: trailing junk in '" + key + "=" + it->second + "'");
        return v;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const {
        mark(key);
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(it->second, &pos);
        } catch (const std::exception&) {
            throw std::invalid_argument("config: key '" + key + "' is not an integer: '" +
                                        it->second + "'");
        }
        if (pos != it->second.size())
            throw std::invalid_argument("config: trailing junk in '" + key + "=" + it->second + "'");
        return v;
    }

    bool get_bool(const std::string& key, bool dflt) const {
        mark(key);
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" +
                                    it->second + "'");
    }

    /// Comma-separated list of unsigned integers.
    std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                            std::vector<std::uint64_t> dflt) const {
        mark(key);
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        std::vector<std::uint64_t> out;
        std::istringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            out.push_back(std::stoull(item));
        }
        if (out.empty())
            throw std::invalid_argument("config: key '" + key + "' has an empty list");
        return out;
    }

    std::vector<std::string> get_string_list(const std::string& key,
                                             std::vector<std::string> dflt) const {
        mark(key);
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        std::vector<std::string> out;
        std::istringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// Throws if the file carried keys nothing ever read (typo guard).
    void reject_unknown_keys() const {
        for (const auto& [k, v] : values_)
            if (!touched_.count(k))
                throw std::invalid_argument("config: unknown key '" + k + "'");
    }

    /// Sorted key=value lines; the canonical form that gets hashed.
    std::string canonical() const {
        std::ostringstream out;
        for (const auto& [k, v] : values_) out << k << "=" << v << "\n";
        return out.str();
    }

    std::string hash_hex() const {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(canonical())));
        return buf;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }
    void mark(const std::string& key) const { touched_.insert(key); }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> touched_;
};

/// router.* keys -> RouterConfig
inline RouterConfig router_config_from(const KeyValueConfig& kv) {
    RouterConfig c;
    c.d = kv.get_u64("router.d", c.d);
    c.r = kv.get_u64("router.r", c.r);
    c.n_experts = kv.get_u64("router.n_experts", c.n_experts);
    c.n_anchors = kv.get_u64("router.n_anchors", c.n_anchors);
    c.top_k = kv.get_u64("router.top_k", c.top_k);
    c.gamma = kv.get_double("sips.gamma", c.gamma);
    c.beta = kv.get_double("sips.beta", c.beta);
    c.p = kv.get_double("sips.p", c.p);
    c.tau = kv.get_double("router.tau", c.tau);
    c.eps_q = kv.get_double("router.eps_q", c.eps_q);
    c.eps_k = kv.get_double("router.eps_k", c.eps_k);
    c.mode = score_mode_from_string(kv.get_string("router.mode", to_string(c.mode)));
    c.norm_style = norm_style_from_string(kv.get_string("router.norm_style", to_string(c.norm_style)));
    c.validate();
    return c;
}

inline void router_config_to(const RouterConfig& c, KeyValueConfig& kv) {
    kv.set("router.d", std::to_string(c.d));
    kv.set("router.r", std::to_string(c.r));
    kv.set("router.n_experts", std::to_string(c.n_experts));
    kv.set("router.n_anchors", std::to_string(c.n_anchors));
    kv.set("router.top_k", std::to_string(c.top_k));
    char buf[32];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    kv.set("sips.gamma", fmt(c.gamma));
    kv.set("sips.beta", fmt(c.beta));
    kv.set("sips.p", fmt(c.p));
    kv.set("router.tau", fmt(c.tau));
    kv.set("router.eps_q", fmt(c.eps_q));
    kv.set("router.eps_k", fmt(c.eps_k));
    kv.set("router.mode", to_string(c.mode));
    kv.set("router.norm_style", to_string(c.norm_style));
}

inline TrainConfig train_config_from(const KeyValueConfig& kv) {
    TrainConfig t;
    t.steps = kv.get_u64("train.steps", t.steps);
    t.batch_size = kv.get_u64("train.batch_size", t.batch_size);
    t.lr = kv.get_double("train.lr", t.lr);
    t.lambda_bal = kv.get_double("train.lambda_bal", t.lambda_bal);
    t.lambda_z = kv.get_double("train.lambda_z", t.lambda_z);
    t.snapshot_interval = kv.get_u64("train.snapshot_interval", t.snapshot_interval);
    t.seed = kv.get_u64("seed", t.seed);
    t.router_lr_scale = kv.get_double("train.router_lr_scale", t.router_lr_scale);
    t.anchor_lr_scale = kv.get_double("train.anchor_lr_scale", t.anchor_lr_scale);
    t.expert_lr_scale = kv.get_double("train.expert_lr_scale", t.expert_lr_scale);
    if (t.lambda_bal < 0.0 || t.lambda_z < 0.0)
        throw std::invalid_argument("config: loss weights must be >= 0");
    return t;
}

}  // namespace l2r
