#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rdc/codec.hpp"

namespace rdc {

using KvMap = std::map<std::string, std::string>;

inline KvMap kv_parse(const std::string& text) {
  KvMap out;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(lineno) +
                         ": expected key=value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

inline std::string kv_serialize(const KvMap& kv) {
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
  return out.str();
}

inline KvMap kv_load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return kv_parse(ss.str());
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ','))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::ostringstream out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out << ",";
    out << v[i];
  }
  return out.str();
}

// --------------------------------------------------------------------------
// Codec config <-> key=value echo.
// --------------------------------------------------------------------------

inline KvMap codec_config_to_map(const CodecConfig& c) {
  KvMap m;
  m["cy"] = std::to_string(c.cy);
  m["cz"] = std::to_string(c.cz);
  m["cs"] = std::to_string(c.cs);
  m["hidden"] = std::to_string(c.hidden);
  m["anchors"] = std::to_string(c.anchors);
  m["sigma_min"] = std::to_string(c.sigma_min);
  m["stage1_lambdas"] = join_doubles(c.stage1_lambdas);
  m["stage2_lambdas"] = join_doubles(c.stage2_lambdas);
  m["init_seed"] = std::to_string(c.init_seed);
  m["aux_mode"] = aux_mode_name(c.aux_mode);
  m["lmax_y"] = std::to_string(c.lmax_y);
  m["lmax_z"] = std::to_string(c.lmax_z);
  m["lmax_s"] = std::to_string(c.lmax_s);
  return m;
}

inline CodecConfig codec_config_from_map(const KvMap& m) {
  CodecConfig c;
  auto get = [&m](const char* k) -> const std::string& {
    auto it = m.find(k);
    if (it == m.end())
      throw version_error(std::string("checkpoint config missing key: ") + k);
    return it->second;
  };
  c.cy = std::stoll(get("cy"));
  c.cz = std::stoll(get("cz"));
  c.cs = std::stoll(get("cs"));
  c.hidden = std::stoll(get("hidden"));
  c.anchors = std::stoi(get("anchors"));
  c.sigma_min = std::stod(get("sigma_min"));
  c.stage1_lambdas = parse_double_list(get("stage1_lambdas"));
  c.stage2_lambdas = parse_double_list(get("stage2_lambdas"));
  c.init_seed = std::stoull(get("init_seed"));
  c.aux_mode = aux_mode_from(get("aux_mode"));
  c.lmax_y = std::stoi(get("lmax_y"));
  c.lmax_z = std::stoi(get("lmax_z"));
  c.lmax_s = std::stoi(get("lmax_s"));
  return c;
}

// --------------------------------------------------------------------------
// Run configuration for the CLI: every field has a default, unknown keys
// are rejected, and the effective config is echoed into output directories.
// --------------------------------------------------------------------------

struct RunConfig {
  // paths
  std::string dataset = "data";
  std::string out = "out";
  std::string model;  // codec checkpoint
  std::string proxy;  // proxy checkpoint
  uint64_t seed = 1;
  // dataset generation
  int n_train = 480, n_val = 96, n_test = 200;
  // proxy pretraining
  int64_t proxy_steps = 500, proxy_batch = 16;
  double proxy_lr = 1e-3;
  int64_t probe_steps = 400;
  double probe_lr = 0.05;
  double tau = 0.07;
  int64_t queue = 4096;
  double ema = 0.99;
  int64_t embed_dim = 128;
  // stage I
  int64_t s1_steps = 700, s1_batch = 4;
  double s1_lr = 1e-4;
  double lambda_local = 1e-5;
  double contrast_scale = 1.0;
  // stage II
  int64_t s2_steps = 500, s2_batch = 4;
  double s2_lr = 1e-4;
  std::string aux_mode = "scalable";
  // sweep grids
  std::string alphas = "0,0.5,1";
  std::string betas = "0,0.5,1";
  double alpha_s = 1.0;
  int jobs = 1;

  static const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "dataset",      "out",         "model",       "proxy",
        "seed",         "n_train",     "n_val",       "n_test",
        "proxy_steps",  "proxy_batch", "proxy_lr",    "probe_steps",
        "probe_lr",     "tau",         "queue",       "ema",
        "embed_dim",    "s1_steps",    "s1_batch",    "s1_lr",
        "lambda_local", "contrast_scale", "s2_steps", "s2_batch",
        "s2_lr",        "aux_mode",    "alphas",      "betas",
        "alpha_s",      "jobs"};
    return keys;
  }

  void apply(const KvMap& kv) {
    for (const auto& [k, v] : kv) {
      const auto& keys = known_keys();
      if (std::find(keys.begin(), keys.end(), k) == keys.end())
        throw config_error("unknown config key: " + k);
      if (k == "dataset") dataset = v;
      else if (k == "out") out = v;
      else if (k == "model") model = v;
      else if (k == "proxy") proxy = v;
      else if (k == "seed") seed = std::stoull(v);
      else if (k == "n_train") n_train = std::stoi(v);
      else if (k == "n_val") n_val = std::stoi(v);
      else if (k == "n_test") n_test = std::stoi(v);
      else if (k == "proxy_steps") proxy_steps = std::stoll(v);
      else if (k == "proxy_batch") proxy_batch = std::stoll(v);
      else if (k == "proxy_lr") proxy_lr = std::stod(v);
      else if (k == "probe_steps") probe_steps = std::stoll(v);
      else if (k == "probe_lr") probe_lr = std::stod(v);
      else if (k == "tau") tau = std::stod(v);
      else if (k == "queue") queue = std::stoll(v);
      else if (k == "ema") ema = std::stod(v);
      else if (k == "embed_dim") embed_dim = std::stoll(v);
      else if (k == "s1_steps") s1_steps = std::stoll(v);
      else if (k == "s1_batch") s1_batch = std::stoll(v);
      else if (k == "s1_lr") s1_lr = std::stod(v);
      else if (k == "lambda_local") lambda_local = std::stod(v);
      else if (k == "contrast_scale") contrast_scale = std::stod(v);
      else if (k == "s2_steps") s2_steps = std::stoll(v);
      else if (k == "s2_batch") s2_batch = std::stoll(v);
      else if (k == "s2_lr") s2_lr = std::stod(v);
      else if (k == "aux_mode") aux_mode = v;
      else if (k == "alphas") alphas = v;
      else if (k == "betas") betas = v;
      else if (k == "alpha_s") alpha_s = std::stod(v);
      else if (k == "jobs") jobs = std::stoi(v);
    }
    if (const char* env = std::getenv("RDC_SEED")) seed = std::stoull(env);
  }

  KvMap to_map() const {
    KvMap m;
    m["dataset"] = dataset;
    m["out"] = out;
    m["model"] = model;
    m["proxy"] = proxy;
    m["seed"] = std::to_string(seed);
    m["n_train"] = std::to_string(n_train);
    m["n_val"] = std::to_string(n_val);
    m["n_test"] = std::to_string(n_test);
    m["proxy_steps"] = std::to_string(proxy_steps);
    m["proxy_batch"] = std::to_string(proxy_batch);
    m["proxy_lr"] = std::to_string(proxy_lr);
    m["probe_steps"] = std::to_string(probe_steps);
    m["probe_lr"] = std::to_string(probe_lr);
    m["tau"] = std::to_string(tau);
    m["queue"] = std::to_string(queue);
    m["ema"] = std::to_string(ema);
    m["embed_dim"] = std::to_string(embed_dim);
    m["s1_steps"] = std::to_string(s1_steps);
    m["s1_batch"] = std::to_string(s1_batch);
    m["s1_lr"] = std::to_string(s1_lr);
    m["lambda_local"] = std::to_string(lambda_local);
    m["contrast_scale"] = std::to_string(contrast_scale);
    m["s2_steps"] = std::to_string(s2_steps);
    m["s2_batch"] = std::to_string(s2_batch);
    m["s2_lr"] = std::to_string(s2_lr);
    m["aux_mode"] = aux_mode;
    m["alphas"] = alphas;
    m["betas"] = betas;
    m["alpha_s"] = std::to_string(alpha_s);
    m["jobs"] = std::to_string(jobs);
    return m;
  }

  // Echo the effective config into an output directory.
  void echo_into(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream f(std::filesystem::path(dir) / "config.txt");
    f << kv_serialize(to_map());
  }
};

}  // namespace rdc
