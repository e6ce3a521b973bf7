#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flda/energy.hpp"
#include "flda/model.hpp"
#include "flda/phy.hpp"

namespace flda {

enum class Mode { FL, FD, FLDA };
enum class ActivityRule { Causal, Oracle };
enum class DataSource { Synth, Mnist };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Full experiment description. Field defaults are the reference operating
// point; an empty config file yields exactly these values.
struct SimConfig {
  Mode mode = Mode::FLDA;

  // schedule / training
  double alpha = 0.5;
  int gamma = 100;
  double beta = 1.0;
  double mu = 0.01;
  int batch = 0;  // 0 = full local dataset

  // network
  int num_users = 20;       // K
  int channels = 4;         // M
  double access_prob = 0.2; // p
  double code_rate = 0.5;   // q
  double lambda = 0.0;
  int payload_bits = 2008;  // Ns
  int64_t n_fl_bits = 223488;  // 0 = derive from arch (32 bits/param)
  int64_t n_fd_bits = 3200;    // 0 = derive from C (32*C^2)
  int f_fl_override = 0;       // 0 = computed ceil(ceil(N/Ns)/q)
  int f_fd_override = 0;
  AccessMode access_mode = AccessMode::Frame;

  // energy
  double b_max = 0.1;
  double battery_init = -1.0;  // -1 = start full
  double psi = 1e-30;
  double f_clk = 2e9;
  double theta = 8;
  double eta = 0.5;
  double p_tx = 2.14e-3;  // W (3.3 dBm)
  double p_circ = 1.33e-3;
  double p_rx = 1.9e-3;
  double r_tx = 1e6;
  double r_rx = 1e6;
  int64_t flops_override = 256896;  // W; 0 = derive from arch
  double eh_rate = 0.02;            // r
  double eh_mean = 0.4;             // mean harvested units per slot
  ActivityRule activity_rule = ActivityRule::Causal;

  // data
  DataSource dataset = DataSource::Synth;
  int num_classes = 10;
  int synth_dim = 16;
  int synth_pool_per_class = 200;
  int synth_test_per_class = 50;
  double synth_sigma = 0.13;
  std::string mnist_images, mnist_labels, mnist_test_images, mnist_test_labels;
  int minority_labels = 2;
  int minority_count = 2;
  int majority_count = 62;
  bool replace_across_users = true;

  // model
  std::vector<int> hidden = {64};

  // run
  uint64_t seed = 1;
  double duration_s = 0.0;  // simulated seconds; 0 = use `iterations`
  int64_t iterations = 0;
  int64_t eval_every = 1;
  std::string event_log;     // per-slot channel events CSV, empty = off
  std::string energy_trace;  // per-slot energy CSV, empty = off
  std::string checkpoint;    // parameter dump path prefix, empty = off

  bool operator==(const SimConfig&) const = default;

  double slot_seconds() const { return payload_bits / r_tx; }

  FrameConfig frame_config() const {
    return {channels, access_prob, payload_bits, code_rate, slot_seconds(), access_mode};
  }

  int64_t fl_bits(const Arch& arch) const { return n_fl_bits > 0 ? n_fl_bits : update_bits(arch); }
  int64_t fd_bits() const {
    return n_fd_bits > 0 ? n_fd_bits : 32ll * num_classes * num_classes;
  }

  SubpacketPlan fl_plan(const Arch& arch) const {
    auto p = subpacket_plan(fl_bits(arch), frame_config());
    if (f_fl_override > 0) p.total_subpackets = f_fl_override;
    return p;
  }
  SubpacketPlan fd_plan() const {
    auto p = subpacket_plan(fd_bits(), frame_config());
    if (f_fd_override > 0) p.total_subpackets = f_fd_override;
    return p;
  }

  EnergyParams energy_params(const Arch& arch, int effective_batch) const {
    EnergyParams e;
    e.psi = psi;
    e.f_clk = f_clk;
    e.theta = theta;
    e.flops_per_sample = flops_override > 0 ? flops_override : ::flda::flops_per_sample(arch);
    e.batch = effective_batch;
    e.eta = eta;
    e.p_tx = p_tx;
    e.p_circ = p_circ;
    e.p_rx = p_rx;
    e.r_tx = r_tx;
    e.r_rx = r_rx;
    return e;
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct KeyCtx {
  std::string key, value;
  int line;

  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("line " + std::to_string(line) + ": key '" + key + "': " + why);
  }

  double as_double() const {
    try {
      size_t pos;
      double v = std::stod(value, &pos);
      if (pos != value.size()) fail("trailing characters in number '" + value + "'");
      return v;
    } catch (const ConfigError&) {
      throw;
    } catch (...) {
      fail("expected a number, got '" + value + "'");
    }
  }
  int64_t as_int() const {
    try {
      size_t pos;
      long long v = std::stoll(value, &pos);
      if (pos != value.size()) fail("trailing characters in integer '" + value + "'");
      return v;
    } catch (const ConfigError&) {
      throw;
    } catch (...) {
      fail("expected an integer, got '" + value + "'");
    }
  }
  uint64_t as_uint() const {
    int64_t v = as_int();
    if (v < 0) fail("expected a non-negative integer");
    return static_cast<uint64_t>(v);
  }
  bool as_bool() const {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    fail("expected true/false");
  }
  std::vector<int> as_int_list() const {
    std::vector<int> out;
    if (trim(value).empty()) return out;
    std::stringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      try {
        out.push_back(std::stoi(tok));
      } catch (...) {
        fail("expected comma-separated integers, got '" + tok + "'");
      }
    }
    return out;
  }
};

inline bool apply_key(SimConfig& c, const KeyCtx& k) {
  const std::string& key = k.key;
  if (key == "mode") {
    if (k.value == "FL") c.mode = Mode::FL;
    else if (k.value == "FD") c.mode = Mode::FD;
    else if (k.value == "FLDA") c.mode = Mode::FLDA;
    else k.fail("expected FL, FD or FLDA");
  } else if (key == "alpha") c.alpha = k.as_double();
  else if (key == "gamma") c.gamma = static_cast<int>(k.as_int());
  else if (key == "beta") c.beta = k.as_double();
  else if (key == "mu") c.mu = k.as_double();
  else if (key == "batch") c.batch = static_cast<int>(k.as_int());
  else if (key == "K") c.num_users = static_cast<int>(k.as_int());
  else if (key == "M") c.channels = static_cast<int>(k.as_int());
  else if (key == "p") c.access_prob = k.as_double();
  else if (key == "q") c.code_rate = k.as_double();
  else if (key == "lambda") c.lambda = k.as_double();
  else if (key == "Ns") c.payload_bits = static_cast<int>(k.as_int());
  else if (key == "N_FL") c.n_fl_bits = k.as_int();
  else if (key == "N_FD") c.n_fd_bits = k.as_int();
  else if (key == "F_FL") c.f_fl_override = static_cast<int>(k.as_int());
  else if (key == "F_FD") c.f_fd_override = static_cast<int>(k.as_int());
  else if (key == "access_mode") {
    if (k.value == "frame") c.access_mode = AccessMode::Frame;
    else if (k.value == "subpacket") c.access_mode = AccessMode::Subpacket;
    else k.fail("expected frame or subpacket");
  } else if (key == "B_max") c.b_max = k.as_double();
  else if (key == "battery_init") c.battery_init = k.as_double();
  else if (key == "psi") c.psi = k.as_double();
  else if (key == "f_clk") c.f_clk = k.as_double();
  else if (key == "Theta") c.theta = k.as_double();
  else if (key == "eta") c.eta = k.as_double();
  else if (key == "P_tx") c.p_tx = k.as_double();
  else if (key == "P_circ") c.p_circ = k.as_double();
  else if (key == "P_rx") c.p_rx = k.as_double();
  else if (key == "R_tx") c.r_tx = k.as_double();
  else if (key == "R_rx") c.r_rx = k.as_double();
  else if (key == "W") c.flops_override = k.as_int();
  else if (key == "r") c.eh_rate = k.as_double();
  else if (key == "varrho") c.eh_mean = k.as_double();
  else if (key == "activity_rule") {
    if (k.value == "causal") c.activity_rule = ActivityRule::Causal;
    else if (k.value == "oracle") c.activity_rule = ActivityRule::Oracle;
    else k.fail("expected causal or oracle");
  } else if (key == "dataset") {
    if (k.value == "synth") c.dataset = DataSource::Synth;
    else if (k.value == "mnist") c.dataset = DataSource::Mnist;
    else k.fail("expected synth or mnist");
  } else if (key == "C") c.num_classes = static_cast<int>(k.as_int());
  else if (key == "synth_dim") c.synth_dim = static_cast<int>(k.as_int());
  else if (key == "synth_pool_per_class") c.synth_pool_per_class = static_cast<int>(k.as_int());
  else if (key == "synth_test_per_class") c.synth_test_per_class = static_cast<int>(k.as_int());
  else if (key == "synth_sigma") c.synth_sigma = k.as_double();
  else if (key == "mnist_images") c.mnist_images = k.value;
  else if (key == "mnist_labels") c.mnist_labels = k.value;
  else if (key == "mnist_test_images") c.mnist_test_images = k.value;
  else if (key == "mnist_test_labels") c.mnist_test_labels = k.value;
  else if (key == "minority_labels") c.minority_labels = static_cast<int>(k.as_int());
  else if (key == "minority_count") c.minority_count = static_cast<int>(k.as_int());
  else if (key == "majority_count") c.majority_count = static_cast<int>(k.as_int());
  else if (key == "replace_across_users") c.replace_across_users = k.as_bool();
  else if (key == "hidden") c.hidden = k.as_int_list();
  else if (key == "seed") c.seed = k.as_uint();
  else if (key == "duration_s") c.duration_s = k.as_double();
  else if (key == "iterations") c.iterations = k.as_int();
  else if (key == "eval_every") c.eval_every = k.as_int();
  else if (key == "event_log") c.event_log = k.value;
  else if (key == "energy_trace") c.energy_trace = k.value;
  else if (key == "checkpoint") c.checkpoint = k.value;
  else return false;
  return true;
}

}  // namespace detail

// Validates every cross-field constraint; throws ConfigError naming the
// offending key.
inline void validate_config(const SimConfig& c) {
  auto bad = [](const std::string& key, const std::string& why) {
    throw ConfigError("key '" + key + "': " + why);
  };
  if (c.alpha < 0.0 || c.alpha > 1.0) bad("alpha", "must be in [0, 1]");
  if (c.gamma < 1) bad("gamma", "must be >= 1");
  if (c.beta < 0.0) bad("beta", "must be >= 0");
  if (c.mu <= 0.0) bad("mu", "must be > 0");
  if (c.batch < 0) bad("batch", "must be >= 0 (0 = full dataset)");
  if (c.num_users < 1) bad("K", "must be >= 1");
  if (c.channels < 1) bad("M", "must be >= 1");
  if (c.access_prob <= 0.0 || c.access_prob > 1.0) bad("p", "must be in (0, 1]");
  if (c.code_rate <= 0.0 || c.code_rate > 1.0) bad("q", "must be in (0, 1]");
  if (c.lambda < 0.0) bad("lambda", "must be >= 0");
  if (c.payload_bits < 1) bad("Ns", "must be >= 1");
  if (c.n_fl_bits < 0) bad("N_FL", "must be >= 0 (0 = derived)");
  if (c.n_fd_bits < 0) bad("N_FD", "must be >= 0 (0 = derived)");
  if (c.f_fl_override < 0) bad("F_FL", "must be >= 0 (0 = computed)");
  if (c.f_fd_override < 0) bad("F_FD", "must be >= 0 (0 = computed)");
  if (c.b_max <= 0.0) bad("B_max", "must be > 0");
  if (c.battery_init > c.b_max) bad("battery_init", "must be <= B_max");
  if (c.psi <= 0.0) bad("psi", "must be > 0");
  if (c.f_clk <= 0.0) bad("f_clk", "must be > 0");
  if (c.theta <= 0.0) bad("Theta", "must be > 0");
  if (c.eta <= 0.0 || c.eta > 1.0) bad("eta", "must be in (0, 1]");
  if (c.p_tx <= 0.0) bad("P_tx", "must be > 0");
  if (c.p_circ < 0.0) bad("P_circ", "must be >= 0");
  if (c.p_rx <= 0.0) bad("P_rx", "must be > 0");
  if (c.r_tx <= 0.0) bad("R_tx", "must be > 0");
  if (c.r_rx <= 0.0) bad("R_rx", "must be > 0");
  if (c.flops_override < 0) bad("W", "must be >= 0 (0 = derived)");
  if (c.eh_rate <= 0.0) bad("r", "must be > 0");
  if (c.eh_mean < 0.0 || c.eh_mean > 1.0) bad("varrho", "must be in [0, 1]");
  if (c.num_classes < 2) bad("C", "must be >= 2");
  if (c.synth_dim < 1) bad("synth_dim", "must be >= 1");
  if (c.synth_pool_per_class < 1) bad("synth_pool_per_class", "must be >= 1");
  if (c.synth_test_per_class < 1) bad("synth_test_per_class", "must be >= 1");
  if (c.synth_sigma <= 0.0) bad("synth_sigma", "must be > 0");
  if (c.minority_labels < 0 || c.minority_labels > c.num_classes)
    bad("minority_labels", "must be in [0, C]");
  if (c.minority_count < 0) bad("minority_count", "must be >= 0");
  if (c.majority_count < 0) bad("majority_count", "must be >= 0");
  for (int h : c.hidden)
    if (h < 1) bad("hidden", "widths must be >= 1");
  if (c.duration_s < 0.0) bad("duration_s", "must be >= 0");
  if (c.iterations < 0) bad("iterations", "must be >= 0");
  if (c.duration_s > 0.0 && c.iterations > 0)
    bad("duration_s", "duration_s and iterations are mutually exclusive");
  if (c.eval_every < 1) bad("eval_every", "must be >= 1");
  if (c.dataset == DataSource::Mnist &&
      (c.mnist_images.empty() || c.mnist_labels.empty() || c.mnist_test_images.empty() ||
       c.mnist_test_labels.empty()))
    bad("mnist_images", "all four mnist_* paths are required when dataset = mnist");
}

inline SimConfig parse_config_text(const std::string& text) {
  SimConfig c;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  std::vector<std::string> seen;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    if (size_t h = s.find_first_of("#;"); h != std::string::npos) s = s.substr(0, h);
    s = detail::trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw ConfigError("line " + std::to_string(line) + ": unterminated section header");
      continue;  // sections are organizational only
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line) + ": expected key = value");
    detail::KeyCtx k{detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)), line};
    if (k.key.empty()) throw ConfigError("line " + std::to_string(line) + ": empty key");
    for (const auto& prev : seen)
      if (prev == k.key)
        throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + k.key + "'");
    seen.push_back(k.key);
    if (!detail::apply_key(c, k))
      throw ConfigError("line " + std::to_string(line) + ": unknown key '" + k.key + "'");
  }
  validate_config(c);
  return c;
}

inline SimConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

// Single key=value override, same key table and validation as the file parser.
inline void apply_override(SimConfig& c, const std::string& key, const std::string& value) {
  detail::KeyCtx k{key, value, 0};
  if (!detail::apply_key(c, k)) throw ConfigError("unknown key '" + key + "'");
}

inline std::string write_config(const SimConfig& c) {
  std::ostringstream o;
  auto d = detail::fmt_double;
  o << "[protocol]\n";
  o << "mode = " << (c.mode == Mode::FL ? "FL" : c.mode == Mode::FD ? "FD" : "FLDA") << "\n";
  o << "alpha = " << d(c.alpha) << "\n";
  o << "gamma = " << c.gamma << "\n";
  o << "beta = " << d(c.beta) << "\n";
  o << "mu = " << d(c.mu) << "\n";
  o << "batch = " << c.batch << "\n";
  o << "\n[network]\n";
  o << "K = " << c.num_users << "\n";
  o << "M = " << c.channels << "\n";
  o << "p = " << d(c.access_prob) << "\n";
  o << "q = " << d(c.code_rate) << "\n";
  o << "lambda = " << d(c.lambda) << "\n";
  o << "Ns = " << c.payload_bits << "\n";
  o << "N_FL = " << c.n_fl_bits << "\n";
  o << "N_FD = " << c.n_fd_bits << "\n";
  o << "F_FL = " << c.f_fl_override << "\n";
  o << "F_FD = " << c.f_fd_override << "\n";
  o << "access_mode = " << (c.access_mode == AccessMode::Frame ? "frame" : "subpacket") << "\n";
  o << "\n[energy]\n";
  o << "B_max = " << d(c.b_max) << "\n";
  o << "battery_init = " << d(c.battery_init) << "\n";
  o << "psi = " << d(c.psi) << "\n";
  o << "f_clk = " << d(c.f_clk) << "\n";
  o << "Theta = " << d(c.theta) << "\n";
  o << "eta = " << d(c.eta) << "\n";
  o << "P_tx = " << d(c.p_tx) << "\n";
  o << "P_circ = " << d(c.p_circ) << "\n";
  o << "P_rx = " << d(c.p_rx) << "\n";
  o << "R_tx = " << d(c.r_tx) << "\n";
  o << "R_rx = " << d(c.r_rx) << "\n";
  o << "W = " << c.flops_override << "\n";
  o << "r = " << d(c.eh_rate) << "\n";
  o << "varrho = " << d(c.eh_mean) << "\n";
  o << "activity_rule = " << (c.activity_rule == ActivityRule::Causal ? "causal" : "oracle")
    << "\n";
  o << "\n[data]\n";
  o << "dataset = " << (c.dataset == DataSource::Synth ? "synth" : "mnist") << "\n";
  o << "C = " << c.num_classes << "\n";
  o << "synth_dim = " << c.synth_dim << "\n";
  o << "synth_pool_per_class = " << c.synth_pool_per_class << "\n";
  o << "synth_test_per_class = " << c.synth_test_per_class << "\n";
  o << "synth_sigma = " << d(c.synth_sigma) << "\n";
  if (!c.mnist_images.empty()) o << "mnist_images = " << c.mnist_images << "\n";
  if (!c.mnist_labels.empty()) o << "mnist_labels = " << c.mnist_labels << "\n";
  if (!c.mnist_test_images.empty()) o << "mnist_test_images = " << c.mnist_test_images << "\n";
  if (!c.mnist_test_labels.empty()) o << "mnist_test_labels = " << c.mnist_test_labels << "\n";
  o << "minority_labels = " << c.minority_labels << "\n";
  o << "minority_count = " << c.minority_count << "\n";
  o << "majority_count = " << c.majority_count << "\n";
  o << "replace_across_users = " << (c.replace_across_users ? "true" : "false") << "\n";
  o << "\n[model]\n";
  o << "hidden = ";
  for (size_t i = 0; i < c.hidden.size(); ++i) o << (i ? "," : "") << c.hidden[i];
  o << "\n";
  o << "\n[run]\n";
  o << "seed = " << c.seed << "\n";
  o << "duration_s = " << d(c.duration_s) << "\n";
  o << "iterations = " << c.iterations << "\n";
  o << "eval_every = " << c.eval_every << "\n";
  if (!c.event_log.empty()) o << "event_log = " << c.event_log << "\n";
  if (!c.energy_trace.empty()) o << "energy_trace = " << c.energy_trace << "\n";
  if (!c.checkpoint.empty()) o << "checkpoint = " << c.checkpoint << "\n";
  return o.str();
}

}  // namespace flda
