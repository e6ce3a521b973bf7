#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flda/analytic.hpp"
#include "flda/orchestrator.hpp"

namespace flda {

struct CriterionResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace validate_detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ---- V1: simulated success rate vs closed form over the full grid ----

inline CriterionResult check_throughput_grid() {
  CriterionResult r{"throughput matches closed form on (lambda,q,D) grid", true, ""};
  const int frames = 100000, devices = 20;
  std::ostringstream detail;
  int points = 0;
  double worst_sigmas = 0.0;
  for (double lambda : {0.0, 1.5, 3.0}) {
    for (double q : {0.5, 1.0}) {
      for (int D : {1, 2, 5}) {
        FrameConfig cfg;  // M=4, p=0.2
        cfg.code_rate = q;
        SubpacketPlan plan{int64_t(D) * cfg.payload_bits, D,
                           static_cast<int>(std::ceil(D / q))};
        Rng rng(derive_seed(2024, Stream::General, points));
        std::vector<int> att(devices);
        for (int i = 0; i < devices; ++i) att[i] = i;
        double sum = 0, sum2 = 0;
        for (int f = 0; f < frames; ++f) {
          auto out = simulate_frame(devices, att, plan, cfg, lambda, rng);
          int succ = 0;
          for (const auto& d : out.devices) succ += d.packet_success ? 1 : 0;
          double x = static_cast<double>(succ) / devices;
          sum += x;
          sum2 += x * x;
        }
        const double mean = sum / frames;
        const double se = std::sqrt(std::max(sum2 / frames - mean * mean, 0.0) / frames);
        ThroughputQuery query{cfg.access_prob, cfg.channels, double(devices), lambda, D, q};
        const double expect = packet_success_prob(query);
        const double sigmas = se > 0 ? std::abs(mean - expect) / se : 0.0;
        worst_sigmas = std::max(worst_sigmas, sigmas);
        if (std::abs(mean - expect) > 3 * se) {
          r.pass = false;
          detail << " FAIL(lambda=" << lambda << ",q=" << q << ",D=" << D << ": " << fmt(mean)
                 << " vs " << fmt(expect) << ", " << fmt(sigmas) << " sigma)";
        }
        ++points;
      }
    }
  }
  r.detail = std::to_string(points) + " grid points x " + std::to_string(frames) +
             " frames, worst deviation " + fmt(worst_sigmas) + " sigma" + detail.str();
  return r;
}

// ---- V2: degenerate closed-form identities, exact ----

inline CriterionResult check_degenerate_identities() {
  CriterionResult r{"degenerate closed-form identities are exact", true, ""};
  Rng rng(77);
  int checks = 0;
  for (int trial = 0; trial < 300; ++trial) {
    ThroughputQuery q;
    q.access_prob = 0.05 + 0.9 * rng.uniform();
    q.channels = 1 + static_cast<int>(rng.uniform_int(8));
    q.active_users = 1 + rng.uniform_int(40);
    q.info_subpackets = 1 + static_cast<int>(rng.uniform_int(10));
    q.code_rate = 0.25 + 0.75 * rng.uniform();
    q.lambda = 0.0;
    if (packet_success_prob(q) != contention_success_prob(q)) r.pass = false;

    q.lambda = 4.0 * rng.uniform();
    q.code_rate = 1.0;
    const double ps = background_clear_prob(q.lambda, q.channels);
    if (packet_success_prob(q) !=
        contention_success_prob(q) * std::pow(ps, q.info_subpackets))
      r.pass = false;

    const double fd = 5 * rng.uniform(), fl = 5 * rng.uniform();
    if (alternating_throughput(0.0, fd, fl) != fl) r.pass = false;
    if (alternating_throughput(1.0, fd, fl) != fd) r.pass = false;
    checks += 4;
  }
  r.detail = std::to_string(checks) + " identity checks, all bit-exact";
  return r;
}

// ---- V3: access probability maximizer ----

inline CriterionResult check_access_maximizer() {
  CriterionResult r{"contention success maximized at p = M/K", true, ""};
  std::ostringstream detail;
  for (auto [M, K] : {std::pair{4, 20}, std::pair{2, 10}, std::pair{1, 5}}) {
    double best_p = 0, best = -1;
    for (int i = 1; i <= 1000; ++i) {
      const double p = i * 1e-3;
      ThroughputQuery q{p, M, double(K), 0.0, 1, 1.0};
      const double v = contention_success_prob(q);
      if (v > best) {
        best = v;
        best_p = p;
      }
    }
    const double expect = double(M) / K;
    detail << " (M=" << M << ",K=" << K << ": argmax " << fmt(best_p) << ")";
    if (std::abs(best_p - expect) > 1e-3 + 1e-12) r.pass = false;
  }
  r.detail = "grid step 1e-3" + detail.str();
  return r;
}

// ---- V4: gradients vs 64-bit central finite differences ----

inline double fd_loss(const ModelParams<double>& m, const MiniBatch& batch, const Dataset& data,
                      const LogitTable<double>& g, double beta) {
  double total = 0.0;
  for (int idx : batch) {
    auto sv = data.sample(idx);
    auto p = forward(m, sv.features);
    total += -std::log(std::max(p[sv.label], 1e-300));
    if (beta > 0.0) {
      const auto& target = *g.entries[sv.label];
      for (size_t c = 0; c < p.size(); ++c)
        total += beta * -target[c] * std::log(std::max(p[c], 1e-300));
    }
  }
  return total / batch.size();
}

inline CriterionResult check_gradients() {
  CriterionResult r{"gradients match central finite differences", true, ""};
  double worst = 0.0;
  int nets = 0;
  for (uint64_t s = 0; s < 24; ++s) {
    Rng rng(derive_seed(4242, Stream::General, s));
    const int C = 3 + int(s % 2);
    Arch arch{3 + int(s % 3), {4 + int(s % 3)}, C};
    auto m = init_params<double>(arch, rng);
    Dataset data;
    data.dim = arch.input_dim;
    data.num_classes = C;
    const int n = 4 + int(s % 4);
    MiniBatch batch;
    for (int i = 0; i < n; ++i) {
      std::vector<float> x(arch.input_dim);
      for (auto& v : x) v = static_cast<float>(rng.uniform());
      data.push_back(x, static_cast<int>(rng.uniform_int(C)));
      batch.push_back(i);
    }
    LogitTable<double> table;
    table.entries.resize(C);
    table.counts.assign(C, 1);
    for (int lab = 0; lab < C; ++lab) {
      std::vector<double> v(C);
      double sum = 0;
      for (auto& x : v) {
        x = 0.05 + rng.uniform();
        sum += x;
      }
      for (auto& x : v) x /= sum;
      table.entries[lab] = v;
    }

    for (double beta : {0.0, 1.0}) {
      auto g = beta == 0.0 ? grad_fl(m, batch, data) : grad_fd(m, batch, data, table, beta);
      for (size_t i = 0; i < m.values.size(); ++i) {
        auto probe = m;
        const double h = 1e-6 * std::max(1.0, std::abs(m.values[i]));
        probe.values[i] = m.values[i] + h;
        const double lp = fd_loss(probe, batch, data, table, beta);
        probe.values[i] = m.values[i] - h;
        const double lm = fd_loss(probe, batch, data, table, beta);
        const double fd = (lp - lm) / (2 * h);
        const double rel =
            std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1e-5});
        worst = std::max(worst, rel);
        if (rel >= 1e-4) r.pass = false;
      }
    }
    ++nets;
  }
  r.detail = std::to_string(nets) + " random nets, beta in {0,1}, worst rel err " + fmt(worst);
  return r;
}

// ---- V5: subpacket arithmetic and the F_FL override path ----

inline CriterionResult check_subpacket_arithmetic() {
  CriterionResult r{"subpacket arithmetic and F_FL override", true, ""};
  SimConfig cfg;  // reference defaults
  Arch arch{16, {64}, 10};
  auto fd = cfg.fd_plan();
  auto fl = cfg.fl_plan(arch);
  if (fd.info_subpackets != 2 || fd.total_subpackets != 4) r.pass = false;
  if (fl.info_subpackets != 112 || fl.total_subpackets != 224) r.pass = false;
  SimConfig with_override = cfg;
  with_override.f_fl_override = 220;
  if (with_override.fl_plan(arch).total_subpackets != 220) r.pass = false;
  r.detail =
      "FD: D=2 F=4; FL: computed F=224 from ceil(ceil(223488/2008)/0.5), which deviates from "
      "the published default table value 220 (documented; reproduce it via F_FL=220, override "
      "path verified)";
  return r;
}

// ---- V6: energy reference value, exact conservation, battery bounds ----

inline CriterionResult check_energy_accounting() {
  CriterionResult r{"energy accounting and battery bounds", true, ""};
  EnergyParams p;
  p.flops_per_sample = 256896;
  p.batch = 500;
  const double expect = 6.4224e-5;
  if (std::abs(e_cmp(p) - expect) > 1e-12) r.pass = false;

  // 1e6 randomized steps: level stays in [0, B_max], ledger replay bit-exact
  Battery b{0.05, 0.1};
  double ledger = b.level;
  Rng rng(909);
  bool bounds_ok = true, ledger_ok = true;
  for (int i = 0; i < 1000000; ++i) {
    const double harvested = rng.uniform() < 0.3 ? rng.uniform() * 0.01 : 0.0;
    SpendRequest req;
    req.tx = rng.uniform() < 0.5;
    req.rx = rng.uniform() < 0.2;
    req.cmp = rng.uniform() < 0.2;
    req.tx_cost = rng.uniform() * 0.02;
    req.rx_cost = rng.uniform() * 0.02;
    req.cmp_cost = rng.uniform() * 0.02;
    auto d = battery_step(b, harvested, req);
    if (b.level < 0.0 || b.level > b.capacity) bounds_ok = false;
    ledger += d.stored;
    if (d.did_tx) ledger -= d.spent_tx;
    if (d.did_rx) ledger -= d.spent_rx;
    if (d.did_cmp) ledger -= d.spent_cmp;
    if (ledger != b.level) ledger_ok = false;
  }
  if (!bounds_ok || !ledger_ok) r.pass = false;

  // full simulation run conserves energy in its own shadow ledger
  SimConfig sc;
  sc.num_users = 6;
  sc.num_classes = 4;
  sc.synth_dim = 6;
  sc.synth_pool_per_class = 30;
  sc.synth_test_per_class = 5;
  sc.minority_labels = 1;
  sc.minority_count = 1;
  sc.majority_count = 4;
  sc.hidden = {8};
  sc.n_fl_bits = 0;
  sc.n_fd_bits = 0;
  sc.flops_override = 0;
  sc.mode = Mode::FLDA;
  sc.gamma = 4;
  sc.b_max = 3e-4;
  sc.eh_mean = 0.5;
  sc.iterations = 120;
  sc.eval_every = 120;
  auto trace = run_experiment(sc);
  if (!trace.energy_conserved) r.pass = false;

  r.detail = std::string("E_cmp = ") + fmt(e_cmp(p)) + " J; 1e6 randomized steps " +
             (bounds_ok ? "bounded" : "OUT OF BOUNDS") + ", ledger " +
             (ledger_ok ? "bit-exact" : "MISMATCH") + "; simulation ledger " +
             (trace.energy_conserved ? "bit-exact" : "MISMATCH");
  return r;
}

// ---- V7/V8: desk-scale learning runs (shared across both criteria) ----

struct LearnRun {
  MetricsTrace trace;
};

struct LearnMatrix {
  // [seed][mode] for lambda=3 and lambda=0
  std::vector<std::map<std::string, MetricsTrace>> noisy, quiet;
  int seeds = 0;
};

inline SimConfig learning_config(Mode mode, double lambda, uint64_t seed) {
  SimConfig c;
  c.mode = mode;
  c.alpha = 0.5;
  c.gamma = 100;
  c.beta = 1.0;
  c.mu = 0.08;
  c.lambda = lambda;
  c.num_users = 20;
  c.num_classes = 10;
  c.synth_dim = 16;
  c.synth_sigma = 0.3;  // enough class overlap that 26 local samples can't cut it alone
  c.synth_pool_per_class = 200;
  c.synth_test_per_class = 40;
  c.minority_labels = 2;
  c.minority_count = 1;
  c.majority_count = 3;  // |D_k| = 2 + 24 = 26
  c.hidden = {16};
  c.n_fl_bits = 0;  // derived from the model: communication scales with it
  c.n_fd_bits = 0;
  c.flops_override = 0;
  c.duration_s = 20.0;
  c.eval_every = 20;
  c.seed = seed;
  return c;
}

inline const LearnMatrix& learning_matrix() {
  static LearnMatrix m = [] {
    LearnMatrix out;
    out.seeds = 10;
    out.noisy.resize(out.seeds);
    out.quiet.resize(out.seeds);
    for (int s = 0; s < out.seeds; ++s) {
      const uint64_t seed = 1000 + s;
      for (Mode mode : {Mode::FL, Mode::FD, Mode::FLDA}) {
        const char* name = mode == Mode::FL ? "FL" : mode == Mode::FD ? "FD" : "FLDA";
        out.noisy[s][name] = run_experiment(learning_config(mode, 3.0, seed));
        if (mode != Mode::FD) out.quiet[s][name] = run_experiment(learning_config(mode, 0.0, seed));
      }
    }
    return out;
  }();
  return m;
}

inline CriterionResult check_learning_ordering() {
  CriterionResult r{"alternation beats both baselines at matched budget", true, ""};
  const auto& m = learning_matrix();
  int flda_wins = 0;
  double fl_final = 0, fd_final = 0, flda_final = 0;
  for (int s = 0; s < m.seeds; ++s) {
    const double fl = m.noisy[s].at("FL").final_row().mean_accuracy;
    const double fd = m.noisy[s].at("FD").final_row().mean_accuracy;
    const double flda = m.noisy[s].at("FLDA").final_row().mean_accuracy;
    if (flda >= fl && flda >= fd) flda_wins++;
    fl_final += fl;
    fd_final += fd;
    flda_final += flda;
  }
  fl_final /= m.seeds;
  fd_final /= m.seeds;
  flda_final /= m.seeds;
  bool fd_plateaus = fd_final < fl_final && fd_final < flda_final;
  for (int s = 0; s < m.seeds; ++s)  // distillation alone never reaches the high target
    if (energy_to_target(m.noisy[s].at("FD"), 0.8).has_value()) fd_plateaus = false;

  // energy to the lowest common target on a 0.05 grid above the 1/C baseline
  double target = -1;
  for (double cand = 0.15; cand < 1.0; cand += 0.05) {
    bool all_reach = true;
    for (int s = 0; s < m.seeds; ++s)
      all_reach = all_reach && energy_to_target(m.noisy[s].at("FL"), cand).has_value() &&
                  energy_to_target(m.noisy[s].at("FLDA"), cand).has_value();
    if (all_reach) {
      target = cand;
      break;
    }
  }
  int energy_wins = 0;
  double mean_ratio = 0;
  if (target > 0) {
    for (int s = 0; s < m.seeds; ++s) {
      const double e_fl = *energy_to_target(m.noisy[s].at("FL"), target);
      const double e_flda = *energy_to_target(m.noisy[s].at("FLDA"), target);
      if (e_flda <= 0.5 * e_fl) energy_wins++;
      mean_ratio += e_fl > 0 ? e_flda / e_fl : 1.0;
    }
    mean_ratio /= m.seeds;
  }

  r.pass = flda_wins >= 8 && fd_plateaus && target > 0 && energy_wins >= 8;
  std::ostringstream d;
  d << "final acc FL " << fmt(fl_final) << " / FD " << fmt(fd_final) << " / FLDA "
    << fmt(flda_final) << "; FLDA top in " << flda_wins << "/10 seeds; common target "
    << fmt(target) << ", FLDA<=50% FL energy in " << energy_wins << "/10 (mean ratio "
    << fmt(mean_ratio) << ")";
  r.detail = d.str();
  return r;
}

inline CriterionResult check_interference_robustness() {
  CriterionResult r{"smaller accuracy drop under interference than full-model updates", true, ""};
  const auto& m = learning_matrix();
  int wins = 0;
  double drop_fl_mean = 0, drop_flda_mean = 0;
  for (int s = 0; s < m.seeds; ++s) {
    const double drop_fl = m.quiet[s].at("FL").final_row().mean_accuracy -
                           m.noisy[s].at("FL").final_row().mean_accuracy;
    const double drop_flda = m.quiet[s].at("FLDA").final_row().mean_accuracy -
                             m.noisy[s].at("FLDA").final_row().mean_accuracy;
    if (drop_flda < drop_fl) wins++;
    drop_fl_mean += drop_fl;
    drop_flda_mean += drop_flda;
  }
  drop_fl_mean /= m.seeds;
  drop_flda_mean /= m.seeds;
  r.pass = wins >= 8;
  r.detail = "drop(FL) " + fmt(drop_fl_mean) + " vs drop(FLDA) " + fmt(drop_flda_mean) +
             "; FLDA smaller in " + std::to_string(wins) + "/10 seeds";
  return r;
}

// ---- V9: compound-Poisson harvest mean ----

inline CriterionResult check_harvest_mean() {
  CriterionResult r{"harvest mean matches income rate within 1%", true, ""};
  std::ostringstream d;
  const int slots = 1000000;
  int idx = 0;
  for (double mean_units : {0.2, 0.4, 0.8}) {
    EhParams eh{1.0 / 50.0, mean_units, 1e-6};
    Rng rng(derive_seed(31337, Stream::General, idx++));
    double total = 0;
    for (int i = 0; i < slots; ++i) total += harvest_slot(eh, rng);
    const double got = total / slots;
    const double expect = mean_units * eh.unit_joules;
    const double rel = std::abs(got - expect) / expect;
    d << " (rho=" << fmt(mean_units) << ": rel err " << fmt(rel) << ")";
    if (rel > 0.01) r.pass = false;
  }
  r.detail = std::to_string(slots) + " slots per point" + d.str();
  return r;
}

}  // namespace validate_detail

inline std::vector<std::function<CriterionResult()>> acceptance_criteria() {
  using namespace validate_detail;
  return {
      check_throughput_grid,        check_degenerate_identities, check_access_maximizer,
      check_gradients,              check_subpacket_arithmetic,  check_energy_accounting,
      check_learning_ordering,      check_interference_robustness, check_harvest_mean,
  };
}

// Runs the full suite (or one criterion), printing one line per criterion.
// Returns true iff everything passed.
inline bool run_acceptance(std::FILE* out, int only = 0) {
  auto criteria = acceptance_criteria();
  bool all_pass = true;
  for (size_t i = 0; i < criteria.size(); ++i) {
    if (only > 0 && static_cast<size_t>(only) != i + 1) continue;
    CriterionResult r = criteria[i]();
    all_pass = all_pass && r.pass;
    std::fprintf(out, "[%s] %zu. %s — %s\n", r.pass ? "PASS" : "FAIL", i + 1, r.name.c_str(),
                 r.detail.c_str());
    std::fflush(out);
  }
  return all_pass;
}

}  // namespace flda
