#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flda/config.hpp"
#include "flda/csv.hpp"
#include "flda/data.hpp"
#include "flda/energy.hpp"
#include "flda/fed.hpp"
#include "flda/model.hpp"
#include "flda/phy.hpp"
#include "flda/rng.hpp"

namespace flda {

struct MetricsRow {
  double time_s = 0.0;
  int64_t iteration = 0;
  double mean_accuracy = 0.0;
  double mean_battery_norm = 0.0;
  double mean_cum_energy_j = 0.0;
  int updates_received = 0;
};

struct MetricsTrace {
  std::vector<MetricsRow> rows;

  // per-iteration counters, for throughput checks
  std::vector<int> committed_per_iter;
  std::vector<int> successes_per_iter;

  int64_t iterations_run = 0;
  double sim_seconds = 0.0;
  bool energy_conserved = true;  // shadow-ledger replay matches final levels bit for bit

  const MetricsRow& final_row() const { return rows.back(); }
};

inline void write_trace_csv(const MetricsTrace& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "time_s,iteration,mean_accuracy,mean_battery_norm,mean_cum_energy_j,updates_received\n";
  for (const auto& r : t.rows)
    out << fmt9(r.time_s) << ',' << r.iteration << ',' << fmt9(r.mean_accuracy) << ','
        << fmt9(r.mean_battery_norm) << ',' << fmt9(r.mean_cum_energy_j) << ','
        << r.updates_received << "\n";
}

// Cumulative spent energy at the first evaluation whose mean accuracy reaches
// the target; nullopt if the trace never gets there.
inline std::optional<double> energy_to_target(const MetricsTrace& t, double target) {
  for (const auto& r : t.rows)
    if (r.mean_accuracy >= target) return r.mean_cum_energy_j;
  return std::nullopt;
}

struct DeviceState {
  ModelParams<float> model;
  Battery battery;
  Dataset data;
  double cum_energy_j = 0.0;
  double audit_level = 0.0;  // replays every battery delta; must track level exactly

  // scratch, valid within one iteration
  MiniBatch batch;
  LogitTable<float> local_logits;
  bool committed = false;
  bool accessed = false;
  bool aborted = false;
  bool received = false;
  int channel = -1;
  int clean = 0;
};

// Owns all device and server state and advances the protocol one frame window
// (= one iteration) at a time: per-slot harvesting, computation at the first
// slot, random channel access across the frame, aggregation and broadcast at
// the frame close, then reinitialization.
class Simulation {
 public:
  explicit Simulation(const SimConfig& cfg) : cfg_(cfg) {
    validate_config(cfg);
    build_data();
    build_model();
    build_energy();
    if (!cfg_.event_log.empty()) {
      event_log_.open(cfg_.event_log);
      if (!event_log_) throw IoError("cannot open " + cfg_.event_log);
      event_log_ << "t,z,channel,device,background_count,clean\n";
    }
    if (!cfg_.energy_trace.empty()) {
      energy_trace_.open(cfg_.energy_trace);
      if (!energy_trace_) throw IoError("cannot open " + cfg_.energy_trace);
      energy_trace_ << "t,z,device,harvested_j,spent_tx_j,spent_rx_j,spent_cmp_j,level_j\n";
    }
  }

  const SimConfig& config() const { return cfg_; }
  const Arch& arch() const { return arch_; }
  const std::vector<DeviceState>& devices() const { return devices_; }
  const ModelParams<float>& global_model() const { return global_model_; }
  const Dataset& test_set() const { return test_; }
  double sim_time() const { return sim_time_; }
  const SubpacketPlan& fl_plan() const { return plan_fl_; }
  const SubpacketPlan& fd_plan() const { return plan_fd_; }
  const EnergyParams& energy_params() const { return eparams_; }
  double harvest_unit() const { return eh_.unit_joules; }

  Phase phase_at(int64_t t) const {
    if (cfg_.mode == Mode::FL) return Phase::FL;
    if (cfg_.mode == Mode::FD) return Phase::FD;
    return phase_of(t, PhaseSchedule{cfg_.alpha, cfg_.gamma});
  }

  // One full iteration: returns the number of updates the server received.
  int run_iteration(int64_t t) {
    const Phase phase = phase_at(t);
    const SubpacketPlan& plan = phase == Phase::FD ? plan_fd_ : plan_fl_;
    const int F = plan.total_subpackets;
    const double slot_tx_cost = cfg_.slot_seconds() * p_total(eparams_);
    const double cmp_cost = e_cmp(eparams_);
    const double rx_cost = e_rx(eparams_, plan.bits);
    const int K = cfg_.num_users;

    for (auto& d : devices_) {
      d.committed = d.accessed = d.aborted = d.received = false;
      d.channel = -1;
      d.clean = 0;
    }

    std::vector<int> tx_channels;
    std::vector<int> tx_devices;
    std::vector<uint8_t> clean;
    for (int z = 1; z <= F; ++z) {
      const int64_t abs_slot = total_slots_ + (z - 1);
      tx_channels.clear();
      tx_devices.clear();
      for (int k = 0; k < K; ++k) {
        auto& d = devices_[k];
        Rng hrng = make_stream(cfg_.seed, Stream::Harvest, k, abs_slot);
        const double harvested = harvest_slot(eh_, hrng);

        if (z == 1) prepare_device(k, t, plan, harvested, slot_tx_cost, cmp_cost);

        bool wants_tx = d.committed && !d.aborted;
        if (wants_tx) {
          if (cfg_.access_mode == AccessMode::Frame) {
            wants_tx = d.accessed;
          } else {
            // per-subpacket access: fresh decision and channel draw each slot
            Rng arng = make_stream(cfg_.seed, Stream::ChannelAccess, k, t * 4096 + z);
            wants_tx = arng.bernoulli(cfg_.access_prob);
            if (wants_tx) d.channel = static_cast<int>(arng.uniform_int(cfg_.channels));
            d.accessed = d.accessed || wants_tx;
          }
        }

        SpendRequest req;
        req.tx = wants_tx;
        req.tx_cost = slot_tx_cost;
        req.cmp = z == 1 && d.committed;
        req.cmp_cost = cmp_cost;
        BatteryDelta delta = battery_step(d.battery, harvested, req);
        record_delta(k, t, z, harvested, delta);
        if (wants_tx && !delta.did_tx) {
          d.aborted = true;  // mid-frame depletion: remaining subpackets are lost
          wants_tx = false;
        }
        if (req.cmp && !delta.did_cmp) d.committed = false;  // oracle rule can over-promise
        if (wants_tx) {
          tx_devices.push_back(k);
          tx_channels.push_back(d.channel);
        }
      }

      Rng bg_rng = make_stream(cfg_.seed, Stream::Background, abs_slot);
      auto bg = draw_background(cfg_.channels, cfg_.lambda, bg_rng);
      clean.assign(tx_devices.size(), 0);
      resolve_slot(tx_channels, bg, clean);
      for (size_t i = 0; i < tx_devices.size(); ++i)
        if (clean[i]) devices_[tx_devices[i]].clean++;
      if (event_log_.is_open()) {
        int bg_total = 0;
        for (int c : bg) bg_total += c;
        for (size_t i = 0; i < tx_devices.size(); ++i)
          event_log_ << t << ',' << z << ',' << tx_channels[i] << ',' << tx_devices[i] << ','
                     << bg_total << ',' << (clean[i] ? 1 : 0) << "\n";
      }
    }
    total_slots_ += F;
    sim_time_ += F * cfg_.slot_seconds();

    // aggregation over whatever made it through
    int updates = 0;
    std::optional<LogitTable<float>> global_logits;
    if (phase == Phase::FL) {
      std::vector<FlUpdate<float>> received;
      for (auto& d : devices_)
        if (d.committed && d.accessed && d.clean >= plan.info_subpackets) {
          received.push_back({d.model, static_cast<int>(d.batch.size())});
        }
      updates = static_cast<int>(received.size());
      if (auto agg = aggregate_fl(std::span<const FlUpdate<float>>(received))) global_model_ = *agg;
    } else {
      std::vector<LogitTable<float>> received;
      for (auto& d : devices_)
        if (d.committed && d.accessed && d.clean >= plan.info_subpackets)
          received.push_back(d.local_logits);
      updates = static_cast<int>(received.size());
      global_logits = aggregate_fd(std::span<const LogitTable<float>>(received));
    }

    // broadcast: error-free, gated only by reception energy
    for (int k = 0; k < K; ++k) {
      auto& d = devices_[k];
      SpendRequest req;
      req.rx = true;
      req.rx_cost = rx_cost;
      BatteryDelta delta = battery_step(d.battery, 0.0, req);
      record_delta(k, t, F, 0.0, delta);
      d.received = delta.did_rx;
    }

    // reinitialization
    if (phase == Phase::FL) {
      for (auto& d : devices_) reinit_fl(d.model, global_model_, d.received);
    } else {
      for (auto& d : devices_) {
        if (!d.committed) continue;
        float beta = 0.0f;
        const LogitTable<float>* table = nullptr;
        if (d.received && global_logits && covers_batch(*global_logits, d)) {
          beta = static_cast<float>(cfg_.beta);
          table = &*global_logits;
        }
        static const LogitTable<float> empty_table;
        auto g = grad_fd(d.model, d.batch, d.data, table ? *table : empty_table, beta);
        reinit_fd(d.model, g, static_cast<float>(cfg_.mu));
      }
    }
    return updates;
  }

  MetricsTrace run() {
    MetricsTrace trace;
    int last_updates = 0;
    auto evaluate = [&](int64_t iter_done) {
      MetricsRow r;
      r.time_s = sim_time_;
      r.iteration = iter_done;
      double acc = 0, bat = 0, energy = 0;
      for (auto& d : devices_) {
        acc += accuracy(d.model, test_);
        bat += d.battery.level / d.battery.capacity;
        energy += d.cum_energy_j;
      }
      const int K = cfg_.num_users;
      r.mean_accuracy = acc / K;
      r.mean_battery_norm = bat / K;
      r.mean_cum_energy_j = energy / K;
      r.updates_received = last_updates;
      trace.rows.push_back(r);
    };

    evaluate(0);
    int64_t t = 0;
    while (true) {
      if (cfg_.duration_s > 0.0) {
        const int F = (phase_at(t) == Phase::FD ? plan_fd_ : plan_fl_).total_subpackets;
        if (sim_time_ + F * cfg_.slot_seconds() > cfg_.duration_s * (1 + 1e-12)) break;
      } else if (t >= cfg_.iterations) {
        break;
      }
      last_updates = run_iteration(t);
      trace.committed_per_iter.push_back(committed_count());
      trace.successes_per_iter.push_back(last_updates);
      ++t;
      if (t % cfg_.eval_every == 0) evaluate(t);
    }
    if (trace.rows.empty() || trace.rows.back().iteration != t) evaluate(t);
    trace.iterations_run = t;
    trace.sim_seconds = sim_time_;
    trace.energy_conserved = true;
    for (auto& d : devices_)
      if (d.audit_level != d.battery.level) trace.energy_conserved = false;

    if (!cfg_.checkpoint.empty()) {
      save_params(global_model_, cfg_.checkpoint + "_global.bin");
      for (size_t k = 0; k < devices_.size(); ++k)
        save_params(devices_[k].model, cfg_.checkpoint + "_dev" + std::to_string(k) + ".bin");
    }
    return trace;
  }

 private:
  int committed_count() const {
    int n = 0;
    for (const auto& d : devices_) n += d.committed ? 1 : 0;
    return n;
  }

  static bool covers_batch(const LogitTable<float>& table, const DeviceState& d) {
    for (int idx : d.batch) {
      int label = d.data.labels[idx];
      if (label >= table.num_labels() || !table.entries[label]) return false;
    }
    return true;
  }

  // Commitment decision, access draw, batch selection and local computation.
  // The z = 1 battery spends themselves happen in the caller's slot loop,
  // after this returns.
  void prepare_device(int k, int64_t t, const SubpacketPlan& plan, double harvested,
                      double slot_tx_cost, double cmp_cost) {
    auto& d = devices_[k];

    double post_harvest = d.battery.level + harvested;
    if (post_harvest > d.battery.capacity) post_harvest = d.battery.capacity;
    if (cfg_.activity_rule == ActivityRule::Oracle) {
      // activity condition over the whole frame: current level plus everything
      // the frame will harvest must cover comms plus computation
      double future = 0.0;
      for (int z = 2; z <= plan.total_subpackets; ++z) {
        Rng hrng = make_stream(cfg_.seed, Stream::Harvest, k, total_slots_ + (z - 1));
        future += harvest_slot(eh_, hrng);
      }
      const double need = e_tx(eparams_, plan.bits) + e_rx(eparams_, plan.bits) + cmp_cost;
      d.committed = post_harvest + future >= need;
    } else {
      // causal rule: enough for the computation and the first transmission slot
      d.committed = post_harvest >= cmp_cost + slot_tx_cost;
    }
    if (!d.committed) return;

    // frame-level channel access: one draw and one channel for the frame
    if (cfg_.access_mode == AccessMode::Frame) {
      Rng arng = make_stream(cfg_.seed, Stream::ChannelAccess, k, t);
      d.accessed = arng.bernoulli(cfg_.access_prob);
      if (d.accessed) d.channel = static_cast<int>(arng.uniform_int(cfg_.channels));
    }

    d.batch = draw_batch(k, t);
    if (phase_at(t) == Phase::FL) {
      auto g = grad_fl(d.model, d.batch, d.data);
      sgd_step_inplace(d.model, g, static_cast<float>(cfg_.mu));
    } else {
      d.local_logits = avg_logits_per_label(d.model, d.batch, d.data);
    }
  }

  MiniBatch draw_batch(int k, int64_t t) {
    auto& d = devices_[k];
    const int n = static_cast<int>(d.data.size());
    const int want = cfg_.batch == 0 ? n : std::min(cfg_.batch, n);
    MiniBatch b(n);
    std::iota(b.begin(), b.end(), 0);
    if (want == n) return b;
    Rng rng = make_stream(cfg_.seed, Stream::BatchSampling, k, t);
    for (int i = 0; i < want; ++i) {
      int j = i + static_cast<int>(rng.uniform_int(static_cast<uint32_t>(n - i)));
      std::swap(b[i], b[j]);
    }
    b.resize(want);
    return b;
  }

  void record_delta(int k, int64_t t, int z, double harvested, const BatteryDelta& delta) {
    auto& d = devices_[k];
    // identical operations in identical order as battery_step applied them
    d.audit_level += delta.stored;
    if (delta.did_tx) d.audit_level -= delta.spent_tx;
    if (delta.did_rx) d.audit_level -= delta.spent_rx;
    if (delta.did_cmp) d.audit_level -= delta.spent_cmp;
    d.cum_energy_j += delta.spent_total();
    if (energy_trace_.is_open())
      energy_trace_ << t << ',' << z << ',' << k << ',' << fmt9(harvested) << ','
                    << fmt9(delta.spent_tx) << ',' << fmt9(delta.spent_rx) << ','
                    << fmt9(delta.spent_cmp) << ',' << fmt9(d.battery.level) << "\n";
  }

  void build_data() {
    Dataset pool;
    if (cfg_.dataset == DataSource::Synth) {
      pool = synth_dataset(cfg_.seed, cfg_.num_classes, cfg_.synth_dim, cfg_.synth_pool_per_class,
                           /*variant=*/0, cfg_.synth_sigma);
      test_ = synth_dataset(cfg_.seed, cfg_.num_classes, cfg_.synth_dim, cfg_.synth_test_per_class,
                            /*variant=*/1, cfg_.synth_sigma);
    } else {
      pool = load_idx(cfg_.mnist_images, cfg_.mnist_labels);
      test_ = load_idx(cfg_.mnist_test_images, cfg_.mnist_test_labels);
      if (pool.num_classes > cfg_.num_classes || test_.num_classes > cfg_.num_classes)
        throw ConfigError("dataset has more classes than C");
      pool.num_classes = test_.num_classes = cfg_.num_classes;
    }
    PartitionSpec spec;
    spec.num_users = cfg_.num_users;
    spec.minority_labels_per_user = cfg_.minority_labels;
    spec.minority_count = cfg_.minority_count;
    spec.majority_count = cfg_.majority_count;
    spec.seed = cfg_.seed;
    spec.replace_across_users = cfg_.replace_across_users;
    auto parts = partition_non_iid(pool, spec);
    devices_.resize(cfg_.num_users);
    for (int k = 0; k < cfg_.num_users; ++k) devices_[k].data = std::move(parts[k]);
  }

  void build_model() {
    arch_.input_dim = devices_.front().data.dim;
    arch_.hidden = cfg_.hidden;
    arch_.num_classes = cfg_.num_classes;
    Rng rng = make_stream(cfg_.seed, Stream::ModelInit);
    global_model_ = init_params<float>(arch_, rng);
    for (auto& d : devices_) d.model = global_model_;  // common broadcast initialization
  }

  void build_energy() {
    const int batch_eff =
        cfg_.batch == 0 ? static_cast<int>(devices_.front().data.size()) : cfg_.batch;
    eparams_ = cfg_.energy_params(arch_, batch_eff);
    plan_fl_ = cfg_.fl_plan(arch_);
    plan_fd_ = cfg_.fd_plan();
    eh_.rate = cfg_.eh_rate;
    eh_.mean_units = cfg_.eh_mean;
    eh_.unit_joules = energy_unit(eparams_, plan_fl_);
    const double init = cfg_.battery_init < 0.0 ? cfg_.b_max : cfg_.battery_init;
    for (auto& d : devices_) {
      d.battery = {init, cfg_.b_max};
      d.audit_level = init;
    }
  }

  SimConfig cfg_;
  Arch arch_;
  Dataset test_;
  std::vector<DeviceState> devices_;
  ModelParams<float> global_model_;
  EnergyParams eparams_;
  SubpacketPlan plan_fl_, plan_fd_;
  EhParams eh_;
  double sim_time_ = 0.0;
  int64_t total_slots_ = 0;
  std::ofstream event_log_;
  std::ofstream energy_trace_;
};

inline MetricsTrace run_experiment(const SimConfig& cfg) { return Simulation(cfg).run(); }

}  // namespace flda
