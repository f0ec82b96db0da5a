#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmvge/training.hpp"

namespace pmvge {

// Flat key=value config text; '#' comments and blank lines ignored.
inline std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config line without '=': " + line);
    auto trim = [](std::string s) {
      const char* ws = " \t";
      s.erase(0, s.find_first_not_of(ws));
      s.erase(s.find_last_not_of(ws) + 1);
      return s;
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline TrainConfig train_config_from_map(
    const std::map<std::string, std::string>& kv) {
  TrainConfig cfg;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("m")) cfg.m = static_cast<int>(detail::parse_int(*v, "m"));
  if (auto* v = get("r")) cfg.r = detail::parse_real(*v, "r");
  if (auto* v = get("tau")) cfg.tau = detail::parse_real(*v, "tau");
  if (auto* v = get("tau_unbiased")) cfg.tau_unbiased = (*v == "1" || *v == "true");
  if (auto* v = get("optimizer")) {
    if (*v == "sgd")
      cfg.optimizer = Optimizer::Sgd;
    else if (*v == "adam")
      cfg.optimizer = Optimizer::Adam;
    else
      throw UsageError("unknown optimizer: " + *v);
  }
  if (auto* v = get("lr")) cfg.lr = detail::parse_real(*v, "lr");
  if (auto* v = get("adam_beta1")) cfg.adam_beta1 = detail::parse_real(*v, "adam_beta1");
  if (auto* v = get("adam_beta2")) cfg.adam_beta2 = detail::parse_real(*v, "adam_beta2");
  if (auto* v = get("adam_eps")) cfg.adam_eps = detail::parse_real(*v, "adam_eps");
  if (auto* v = get("lr_decay")) cfg.lr_decay = detail::parse_real(*v, "lr_decay");
  if (auto* v = get("lr_decay_period"))
    cfg.lr_decay_period = static_cast<int>(detail::parse_int(*v, "lr_decay_period"));
  if (auto* v = get("iterations"))
    cfg.iterations = static_cast<int>(detail::parse_int(*v, "iterations"));
  if (auto* v = get("alpha_update_period"))
    cfg.alpha_update_period =
        static_cast<int>(detail::parse_int(*v, "alpha_update_period"));
  if (auto* v = get("seed"))
    cfg.seed = static_cast<std::uint64_t>(detail::parse_int(*v, "seed"));
  if (auto* v = get("clamp")) cfg.clamp = detail::parse_real(*v, "clamp");
  cfg.validate();
  return cfg;
}

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{
      {"m", cfg.m},
      {"r", cfg.r},
      {"tau", cfg.tau},
      {"tau_unbiased", cfg.tau_unbiased},
      {"optimizer", cfg.optimizer == Optimizer::Adam ? "adam" : "sgd"},
      {"lr", cfg.lr},
      {"adam_beta1", cfg.adam_beta1},
      {"adam_beta2", cfg.adam_beta2},
      {"adam_eps", cfg.adam_eps},
      {"lr_decay", cfg.lr_decay},
      {"lr_decay_period", cfg.lr_decay_period},
      {"iterations", cfg.iterations},
      {"alpha_update_period", cfg.alpha_update_period},
      {"seed", cfg.seed},
      {"clamp", cfg.clamp}};
}

// 64-bit FNV-1a of a file's bytes, hex-encoded. Used for re-run detection.
inline std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot hash missing file: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[8192];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  std::ostringstream ss;
  ss << std::hex << h;
  return ss.str();
}

// Run manifest, written before heavy work begins.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_hashes;  // path -> hash
  std::vector<std::string> outputs;

  void write(const std::string& path) const {
    nlohmann::json j{{"command", command},
                     {"config", config},
                     {"seed", seed},
                     {"input_hashes", input_hashes},
                     {"outputs", outputs},
                     {"artifact_version", 1}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path);
    out << j.dump(2) << '\n';
  }
};

}  // namespace pmvge
