#pragma once

#include <cstdint>
#include <stdexcept>

#include "flda/phy.hpp"
#include "flda/rng.hpp"

namespace flda {

struct EnergyParams {
  double psi = 1e-30;            // effective capacitance of the CMOS chip
  double f_clk = 2e9;            // processor clock, Hz
  double theta = 8;              // FLOPs per cycle
  int64_t flops_per_sample = 0;  // W
  int batch = 0;                 // |B_k|
  double eta = 0.5;              // PA drain efficiency
  double p_tx = 2.14e-3;         // radiated power, W
  double p_circ = 1.33e-3;       // transceiver circuit power, W
  double p_rx = 1.9e-3;          // reception power, W
  double r_tx = 1e6;             // uplink bit rate
  double r_rx = 1e6;             // downlink bit rate
};

// Dynamic CPU power model: one local update costs psi * (W*|B|/Theta) * f^2.
inline double e_cmp(const EnergyParams& p) {
  return p.psi * (static_cast<double>(p.flops_per_sample) * p.batch / p.theta) * p.f_clk * p.f_clk;
}

inline double p_total(const EnergyParams& p) { return p.p_tx / p.eta + p.p_circ; }

inline double e_tx(const EnergyParams& p, int64_t bits) {
  if (bits < 0) throw std::invalid_argument("e_tx: bits must be >= 0");
  return p_total(p) * static_cast<double>(bits) / p.r_tx;
}

inline double e_rx(const EnergyParams& p, int64_t bits) {
  if (bits < 0) throw std::invalid_argument("e_rx: bits must be >= 0");
  return p.p_rx * static_cast<double>(bits) / p.r_rx;
}

// One energy unit is pinned to the per-slot cost of a full-model iteration:
// (uplink + downlink + computation energy) / F for the full-model plan. A
// device then harvests `mean_units` units per slot on average, independent of
// which scheme it runs.
inline double energy_unit(const EnergyParams& p, const SubpacketPlan& fl_plan) {
  if (fl_plan.total_subpackets < 1) throw std::invalid_argument("energy_unit: invalid plan");
  const double comms = e_tx(p, fl_plan.bits) + e_rx(p, fl_plan.bits);  // sleep neglected
  return (comms + e_cmp(p)) / fl_plan.total_subpackets;
}

struct EhParams {
  double rate = 1.0 / 50.0;  // r: arrivals per slot
  double mean_units = 0.4;   // mean harvested units per slot
  double unit_joules = 0.0;
};

// Compound Poisson income: Poisson(rate) arrivals per slot, each carrying a
// Poisson(mean_units/rate) number of discrete energy units.
inline double harvest_slot(const EhParams& eh, Rng& rng) {
  if (eh.rate <= 0.0 || eh.unit_joules <= 0.0)
    throw std::invalid_argument("harvest_slot: rate and unit_joules must be > 0");
  if (eh.mean_units <= 0.0) return 0.0;
  int arrivals = rng.poisson(eh.rate);
  int64_t units = 0;
  for (int a = 0; a < arrivals; ++a) units += rng.poisson(eh.mean_units / eh.rate);
  return static_cast<double>(units) * eh.unit_joules;
}

struct Battery {
  double level = 0.0;
  double capacity = 0.0;
};

struct SpendRequest {
  bool tx = false;
  bool rx = false;
  bool cmp = false;
  double tx_cost = 0.0;
  double rx_cost = 0.0;
  double cmp_cost = 0.0;
};

// What actually happened in one step; callers replaying these deltas in order
// reproduce the battery level bit for bit, which is the conservation audit.
struct BatteryDelta {
  double stored = 0.0;  // harvested energy actually stored (post capacity clamp)
  bool did_tx = false, did_rx = false, did_cmp = false;
  double spent_tx = 0.0, spent_rx = 0.0, spent_cmp = 0.0;

  double spent_total() const { return spent_tx + spent_rx + spent_cmp; }
};

// Harvest first (clamped at capacity), then spends in tx, rx, cmp order.
// A spend whose cost exceeds the remaining level is skipped, so the level
// can never go negative.
inline BatteryDelta battery_step(Battery& b, double harvested, const SpendRequest& req) {
  if (harvested < 0.0) throw std::invalid_argument("battery_step: harvested must be >= 0");
  BatteryDelta d;
  d.stored = harvested < b.capacity - b.level ? harvested : b.capacity - b.level;
  b.level += d.stored;
  if (req.tx && b.level >= req.tx_cost) {
    b.level -= req.tx_cost;
    d.did_tx = true;
    d.spent_tx = req.tx_cost;
  }
  if (req.rx && b.level >= req.rx_cost) {
    b.level -= req.rx_cost;
    d.did_rx = true;
    d.spent_rx = req.rx_cost;
  }
  if (req.cmp && b.level >= req.cmp_cost) {
    b.level -= req.cmp_cost;
    d.did_cmp = true;
    d.spent_cmp = req.cmp_cost;
  }
  return d;
}

}  // namespace flda
