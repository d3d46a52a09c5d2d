#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"
#include "podt/engine.hpp"

namespace podt {

/// Raised for a config file that cannot be read at all.
struct MissingFileError : ConfigError {
  using ConfigError::ConfigError;
};

/// Raised for a config document that breaks the schema (bad JSON, unknown
/// keys, wrong types, out-of-range values).
struct SchemaError : ConfigError {
  using ConfigError::ConfigError;
};

inline std::string_view to_string(FeedbackMode m) {
  return m == FeedbackMode::Latest ? "latest" : "window_mean";
}

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw SchemaError(std::string("'") + key + "' must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) {
        throw SchemaError(std::string("'") + key + "' must be a non-negative integer");
      }
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw SchemaError(std::string("'") + key + "' must be a number");
      out = v.get<T>();
    } else {
      out = v.get<T>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("'") + key + "': " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                           const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw SchemaError("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

/// Applies the keys present in `j` on top of `cfg`.
inline void apply_json(SimConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("config document must be a JSON object");
  detail::reject_unknown(
      j,
      {"n_users", "n_chains", "theta", "xi1", "xi2", "cycles", "kill_chain_count", "attackers",
       "k_gen", "k_val", "rounds_per_cycle", "leader_term", "seed", "scheme",
       "calibration_cycles", "retrain_interval", "soft_margin_penalty", "strict_rule4",
       "active_window", "activity", "feedback_mode", "feedback_window", "max_training_samples",
       "block_capacity_bytes"},
      "config");
  detail::read_field(j, "n_users", cfg.n_users);
  detail::read_field(j, "n_chains", cfg.n_chains);
  detail::read_field(j, "theta", cfg.theta);
  detail::read_field(j, "xi1", cfg.xi1);
  detail::read_field(j, "xi2", cfg.xi2);
  detail::read_field(j, "cycles", cfg.cycles);
  detail::read_field(j, "kill_chain_count", cfg.kill_chain_count);
  detail::read_field(j, "k_gen", cfg.k_gen);
  detail::read_field(j, "k_val", cfg.k_val);
  detail::read_field(j, "rounds_per_cycle", cfg.rounds_per_cycle);
  detail::read_field(j, "leader_term", cfg.leader_term);
  detail::read_field(j, "seed", cfg.seed);
  detail::read_field(j, "calibration_cycles", cfg.calibration_cycles);
  detail::read_field(j, "retrain_interval", cfg.retrain_interval);
  detail::read_field(j, "soft_margin_penalty", cfg.soft_margin_penalty);
  detail::read_field(j, "strict_rule4", cfg.strict_rule4);
  detail::read_field(j, "active_window", cfg.active_window);
  detail::read_field(j, "activity", cfg.activity);
  detail::read_field(j, "feedback_window", cfg.feedback_window);
  detail::read_field(j, "max_training_samples", cfg.max_training_samples);
  detail::read_field(j, "block_capacity_bytes", cfg.block_capacity_bytes);
  if (j.contains("scheme")) {
    if (!j["scheme"].is_string()) throw SchemaError("'scheme' must be a string");
    cfg.scheme = parse_scheme(j["scheme"].get<std::string>());
  }
  if (j.contains("feedback_mode")) {
    const auto& v = j["feedback_mode"];
    if (!v.is_string()) throw SchemaError("'feedback_mode' must be a string");
    const std::string m = v.get<std::string>();
    if (m == "latest") cfg.feedback_mode = FeedbackMode::Latest;
    else if (m == "window_mean") cfg.feedback_mode = FeedbackMode::WindowMean;
    else throw SchemaError("'feedback_mode' must be 'latest' or 'window_mean'");
  }
  if (j.contains("attackers")) {
    const auto& a = j["attackers"];
    if (!a.is_object()) throw SchemaError("'attackers' must be an object");
    detail::reject_unknown(a, {"ordinary", "normal_dmb", "intensive_dmb"}, "attackers");
    detail::read_field(a, "ordinary", cfg.attackers.ordinary);
    detail::read_field(a, "normal_dmb", cfg.attackers.normal_dmb);
    detail::read_field(a, "intensive_dmb", cfg.attackers.intensive_dmb);
  }
  if (!(cfg.theta > 0.0 && cfg.theta < 1.0)) {
    throw SchemaError("'theta' must lie in (0, 1), got " + std::to_string(cfg.theta));
  }
}

inline SimConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("config is not valid JSON: ") + e.what());
  }
  SimConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

inline SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline nlohmann::ordered_json to_json(const SimConfig& c) {
  nlohmann::ordered_json j;
  j["n_users"] = c.n_users;
  j["n_chains"] = c.n_chains;
  j["theta"] = c.theta;
  j["xi1"] = c.xi1;
  j["xi2"] = c.xi2;
  j["cycles"] = c.cycles;
  j["kill_chain_count"] = c.kill_chain_count;
  j["attackers"] = {{"ordinary", c.attackers.ordinary},
                    {"normal_dmb", c.attackers.normal_dmb},
                    {"intensive_dmb", c.attackers.intensive_dmb}};
  j["k_gen"] = c.k_gen;
  j["k_val"] = c.k_val;
  j["rounds_per_cycle"] = c.rounds_per_cycle;
  j["leader_term"] = c.leader_term;
  j["seed"] = c.seed;
  j["scheme"] = std::string(to_string(c.scheme));
  j["calibration_cycles"] = c.calibration_cycles;
  j["retrain_interval"] = c.retrain_interval;
  j["soft_margin_penalty"] = c.soft_margin_penalty;
  j["strict_rule4"] = c.strict_rule4;
  j["active_window"] = c.active_window;
  j["activity"] = c.activity;
  j["feedback_mode"] = std::string(to_string(c.feedback_mode));
  j["feedback_window"] = c.feedback_window;
  j["max_training_samples"] = c.max_training_samples;
  j["block_capacity_bytes"] = c.block_capacity_bytes;
  return j;
}

}  // namespace podt
