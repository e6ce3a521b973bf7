// Command-line front end: run simulations, evaluate the closed-form
// throughput expressions, sweep parameter grids, and run the validation
// suite. All outputs are CSV; see README for the format.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "flda/analytic.hpp"
#include "flda/config.hpp"
#include "flda/csv.hpp"
#include "flda/orchestrator.hpp"
#include "flda/validate.hpp"

namespace fs = std::filesystem;
using namespace flda;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAcceptance = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOpts {
  std::string config;
  std::string out = "out";
  std::string seeds;
  std::string mode;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "config file (key = value); defaults when omitted");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seeds", o.seeds, "comma-separated master seeds (default: config seed)");
  cmd->add_option("--mode", o.mode, "override mode: FL, FD or FLDA");
  cmd->add_option("--set", o.sets, "override a config key, key=value (repeatable)");
}

std::pair<std::string, std::string> split_kv(const std::string& s, const char* what) {
  size_t eq = s.find('=');
  if (eq == std::string::npos || eq == 0)
    throw UsageError(std::string(what) + " expects key=value, got '" + s + "'");
  return {s.substr(0, eq), s.substr(eq + 1)};
}

SimConfig load_config(const CommonOpts& o) {
  SimConfig cfg = o.config.empty() ? SimConfig{} : parse_config(o.config);
  if (!o.mode.empty()) apply_override(cfg, "mode", o.mode);
  for (const auto& s : o.sets) {
    auto [k, v] = split_kv(s, "--set");
    apply_override(cfg, k, v);
  }
  validate_config(cfg);
  return cfg;
}

std::vector<uint64_t> parse_seeds(const std::string& s, uint64_t fallback) {
  if (s.empty()) return {fallback};
  std::vector<uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoull(tok));
    } catch (...) {
      throw UsageError("--seeds expects comma-separated integers, got '" + tok + "'");
    }
  }
  if (out.empty()) throw UsageError("--seeds list is empty");
  return out;
}

// values for one sweep key: "a,b,c" or numeric range "start:stop:step"
std::vector<std::string> parse_sweep_values(const std::string& spec) {
  std::vector<std::string> vals;
  if (spec.find(':') != std::string::npos) {
    double start, stop, step;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%lf", &start, &stop, &step) != 3 || step <= 0)
      throw UsageError("range must be start:stop:step with step > 0, got '" + spec + "'");
    for (double v = start; v <= stop + 1e-9; v += step) vals.push_back(fmt9(v));
  } else {
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) vals.push_back(tok);
    }
  }
  if (vals.empty()) throw UsageError("sweep value list is empty in '" + spec + "'");
  return vals;
}

void write_mean_trace(const std::vector<MetricsTrace>& traces, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "time_s,iteration,mean_accuracy,mean_battery_norm,mean_cum_energy_j,updates_received\n";
  size_t rows = traces.front().rows.size();
  for (const auto& t : traces)
    if (t.rows.size() != rows)
      throw std::runtime_error("seed traces disagree on evaluation grid; cannot average");
  const double n = static_cast<double>(traces.size());
  for (size_t i = 0; i < rows; ++i) {
    double acc = 0, bat = 0, energy = 0, upd = 0;
    for (const auto& t : traces) {
      acc += t.rows[i].mean_accuracy;
      bat += t.rows[i].mean_battery_norm;
      energy += t.rows[i].mean_cum_energy_j;
      upd += t.rows[i].updates_received;
    }
    out << fmt9(traces.front().rows[i].time_s) << ',' << traces.front().rows[i].iteration << ','
        << fmt9(acc / n) << ',' << fmt9(bat / n) << ',' << fmt9(energy / n) << ','
        << fmt9(upd / n) << "\n";
  }
}

std::string seed_suffixed(const std::string& path, uint64_t seed) {
  if (path.empty()) return path;
  const std::string tag = "_seed" + std::to_string(seed);
  size_t dot = path.find_last_of('.');
  if (dot == std::string::npos || dot < path.find_last_of('/') + 1) return path + tag;
  return path.substr(0, dot) + tag + path.substr(dot);
}

// Seed runs share nothing mutable, so they execute in parallel; per-seed CSVs
// are written by their own worker and the mean is folded after the join.
std::vector<MetricsTrace> run_seeds(const SimConfig& base, const std::vector<uint64_t>& seeds,
                                    const std::string& dir, const std::string& stem) {
  std::vector<MetricsTrace> traces(seeds.size());
  std::vector<std::string> errors(seeds.size());
  const unsigned workers =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()), seeds.size());
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (size_t i = next.fetch_add(1); i < seeds.size(); i = next.fetch_add(1)) {
      try {
        SimConfig cfg = base;
        cfg.seed = seeds[i];
        if (seeds.size() > 1) {
          cfg.event_log = seed_suffixed(cfg.event_log, cfg.seed);
          cfg.energy_trace = seed_suffixed(cfg.energy_trace, cfg.seed);
          if (!cfg.checkpoint.empty()) cfg.checkpoint += "_seed" + std::to_string(cfg.seed);
        }
        traces[i] = run_experiment(cfg);
        write_trace_csv(traces[i], dir + "/" + stem + "_seed" + std::to_string(seeds[i]) + ".csv");
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error(e);
  write_mean_trace(traces, dir + "/" + stem + "_mean.csv");
  return traces;
}

int cmd_simulate(const CommonOpts& o) {
  SimConfig cfg = load_config(o);
  fs::create_directories(o.out);
  auto seeds = parse_seeds(o.seeds, cfg.seed);
  auto traces = run_seeds(cfg, seeds, o.out, "trace");
  std::cout << "simulate: " << seeds.size() << " run(s), " << traces.front().iterations_run
            << " iterations each, traces in " << o.out << "\n";
  return 0;
}

int cmd_analytic(const CommonOpts& o) {
  SimConfig cfg = load_config(o);
  fs::create_directories(o.out);
  Arch arch{cfg.synth_dim, cfg.hidden, cfg.num_classes};
  auto plan_fd = cfg.fd_plan();
  auto plan_fl = cfg.fl_plan(arch);
  const std::string path = o.out + "/analytic.csv";
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "lambda,p_a,p_s,p_ma_fd,p_ma_fl,rho_fd,rho_fl,rho_flda\n";
  for (double lambda = 0.0; lambda <= 5.0 + 1e-9; lambda += 0.25) {
    ThroughputQuery fd{cfg.access_prob, cfg.channels, double(cfg.num_users), lambda,
                       plan_fd.info_subpackets, cfg.code_rate};
    ThroughputQuery fl = fd;
    fl.info_subpackets = plan_fl.info_subpackets;
    const double rho_fd = uplink_throughput(fd);
    const double rho_fl = uplink_throughput(fl);
    out << fmt9(lambda) << ',' << fmt9(contention_success_prob(fd)) << ','
        << fmt9(background_clear_prob(lambda, cfg.channels)) << ','
        << fmt9(packet_success_prob(fd)) << ',' << fmt9(packet_success_prob(fl)) << ','
        << fmt9(rho_fd) << ',' << fmt9(rho_fl) << ','
        << fmt9(alternating_throughput(cfg.alpha, rho_fd, rho_fl)) << "\n";
  }
  std::cout << "analytic: table written to " << path << "\n";
  return 0;
}

int cmd_sweep(const CommonOpts& o, const std::vector<std::string>& sweep_specs,
              const std::string& targets_spec) {
  if (sweep_specs.empty()) throw UsageError("sweep requires at least one --sweep key=values");
  SimConfig base = load_config(o);
  fs::create_directories(o.out);

  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& spec : sweep_specs) {
    auto [key, vals] = split_kv(spec, "--sweep");
    axes.emplace_back(key, parse_sweep_values(vals));
  }
  std::vector<double> targets;
  for (const auto& t : parse_sweep_values(targets_spec)) targets.push_back(std::stod(t));

  auto seeds = parse_seeds(o.seeds, base.seed);
  std::ofstream summary(o.out + "/sweep_summary.csv");
  if (!summary) throw IoError("cannot open sweep summary for writing");
  summary << "point,overrides,target,reached_seeds,mean_energy_j\n";

  std::vector<size_t> idx(axes.size(), 0);
  int point = 0;
  while (true) {
    SimConfig cfg = base;
    std::string label;
    for (size_t a = 0; a < axes.size(); ++a) {
      apply_override(cfg, axes[a].first, axes[a].second[idx[a]]);
      label += (a ? ";" : "") + axes[a].first + "=" + axes[a].second[idx[a]];
    }
    validate_config(cfg);
    auto traces = run_seeds(cfg, seeds, o.out, "pt" + std::to_string(point));
    for (double target : targets) {
      int reached = 0;
      double energy = 0;
      for (const auto& t : traces)
        if (auto e = energy_to_target(t, target)) {
          reached++;
          energy += *e;
        }
      summary << point << ',' << label << ',' << fmt9(target) << ',' << reached << ','
              << (reached ? fmt9(energy / reached) : "unreached") << "\n";
    }
    std::cout << "sweep point " << point << " (" << label << ") done\n";
    ++point;

    size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].second.size()) break;
      idx[a] = 0;
    }
    if (a == axes.size()) break;
  }
  std::cout << "sweep: " << point << " point(s), summary in " << o.out << "/sweep_summary.csv\n";
  return 0;
}

int cmd_validate(int only) {
  bool ok = run_acceptance(stdout, only);
  return ok ? 0 : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slot-accurate simulator for federated learning over multichannel "
               "slotted-ALOHA energy-harvesting networks"};
  app.require_subcommand(1);

  CommonOpts sim_o, ana_o, swp_o;
  std::vector<std::string> sweep_specs;
  std::string targets = "0.6,0.7,0.8";
  int only = 0;

  auto* sim = app.add_subcommand("simulate", "run one configuration over one or more seeds");
  add_common(sim, sim_o);
  auto* ana = app.add_subcommand("analytic", "closed-form throughput table over a lambda grid");
  add_common(ana, ana_o);
  auto* swp = app.add_subcommand("sweep", "cartesian sweep over config overrides");
  add_common(swp, swp_o);
  swp->add_option("--sweep", sweep_specs,
                  "key=v1,v2,... or key=start:stop:step (repeatable)");
  swp->add_option("--targets", targets, "accuracy targets for the energy summary");
  auto* val = app.add_subcommand("validate", "run the acceptance suite");
  val->add_option("--only", only, "run a single criterion (1-9)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_o);
    if (ana->parsed()) return cmd_analytic(ana_o);
    if (swp->parsed()) return cmd_sweep(swp_o, sweep_specs, targets);
    if (val->parsed()) return cmd_validate(only);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
