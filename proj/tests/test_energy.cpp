#include <gtest/gtest.h>

#include <cmath>

#include "flda/energy.hpp"

using namespace flda;

namespace {

EnergyParams reference_params() {
  EnergyParams p;  // defaults are the reference operating point
  p.flops_per_sample = 256896;
  p.batch = 500;
  return p;
}

}  // namespace

TEST(ComputeEnergy, ReferenceValue) {
  auto p = reference_params();
  // psi * (W*|B|/Theta) * f^2 evaluated independently
  EXPECT_DOUBLE_EQ(e_cmp(p), 1e-30 * (256896.0 * 500 / 8) * 2e9 * 2e9);
  EXPECT_NEAR(e_cmp(p), 6.4224e-5, 1e-12);
}

TEST(ComputeEnergy, ZeroBatchAndFrequencyScaling) {
  auto p = reference_params();
  p.batch = 0;
  EXPECT_EQ(e_cmp(p), 0.0);
  p.batch = 500;
  double base = e_cmp(p);
  p.f_clk *= 2;
  EXPECT_NEAR(e_cmp(p), 4 * base, 1e-12 * base);
}

TEST(TransceiverEnergy, ReferenceValues) {
  auto p = reference_params();
  EXPECT_DOUBLE_EQ(p_total(p), 2.14e-3 / 0.5 + 1.33e-3);
  EXPECT_EQ(e_tx(p, 0), 0.0);
  EXPECT_EQ(e_rx(p, 0), 0.0);
  EXPECT_NEAR(e_tx(p, 2000) * 2, e_tx(p, 4000), 1e-18);
  EXPECT_NEAR(e_rx(p, 3200), 6.08e-6, 1e-18);
}

TEST(EnergyUnit, DefinitionHolds) {
  auto p = reference_params();
  SubpacketPlan plan{223488, 112, 224};
  double unit = energy_unit(p, plan);
  double comms = e_tx(p, plan.bits) + e_rx(p, plan.bits);
  EXPECT_NEAR(unit * plan.total_subpackets, comms + e_cmp(p), 1e-15);
}

TEST(Harvest, ZeroIncomeAlwaysZero) {
  EhParams eh{0.02, 0.0, 1e-6};
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(harvest_slot(eh, rng), 0.0);
}

TEST(Harvest, MeanAndDiscreteness) {
  EhParams eh{1.0 / 50.0, 0.4, 2.5e-6};
  Rng rng(2);
  double total = 0;
  const int slots = 400000;
  for (int i = 0; i < slots; ++i) {
    double h = harvest_slot(eh, rng);
    total += h;
    double units = h / eh.unit_joules;
    EXPECT_NEAR(units, std::round(units), 1e-9);  // integer multiples of the unit
  }
  EXPECT_NEAR(total / slots, eh.mean_units * eh.unit_joules, 0.03 * eh.mean_units * eh.unit_joules);
}

TEST(Harvest, FrameScaleMeans) {
  // over a frame of F slots the expected income is mean_units * unit * F
  EhParams eh{0.02, 0.4, 7.8e-6};
  Rng rng(3);
  const int frames = 60000, F = 4;
  double total = 0;
  for (int i = 0; i < frames * F; ++i) total += harvest_slot(eh, rng);
  EXPECT_NEAR(total / frames, eh.mean_units * eh.unit_joules * F,
              0.05 * eh.mean_units * eh.unit_joules * F);
}

TEST(BatteryStep, CapacityClampAndBoundary) {
  Battery b{1.0, 1.0};
  auto d = battery_step(b, 0.5, {});
  EXPECT_EQ(b.level, 1.0);  // full battery: harvest has nowhere to go
  EXPECT_EQ(d.stored, 0.0);

  b = {0.25, 1.0};
  SpendRequest req;
  req.tx = true;
  req.tx_cost = 0.25;
  d = battery_step(b, 0.0, req);
  EXPECT_TRUE(d.did_tx);  // level == cost still fires the event
  EXPECT_EQ(b.level, 0.0);

  d = battery_step(b, 0.0, req);
  EXPECT_FALSE(d.did_tx);  // insufficient: the indicator drops to zero
  EXPECT_EQ(b.level, 0.0);
}

TEST(BatteryStep, SpendOrderTxRxCmp) {
  Battery b{0.75, 1.0};  // dyadic values keep the arithmetic exact
  SpendRequest req;
  req.tx = req.rx = req.cmp = true;
  req.tx_cost = 0.5;
  req.rx_cost = 0.5;
  req.cmp_cost = 0.25;
  auto d = battery_step(b, 0.0, req);
  EXPECT_TRUE(d.did_tx);
  EXPECT_FALSE(d.did_rx);  // tx drains first, rx can no longer fit
  EXPECT_TRUE(d.did_cmp);
  EXPECT_EQ(b.level, 0.0);
}

TEST(BatteryStep, RandomizedBoundsAndExactLedger) {
  Battery b{0.05, 0.1};
  double ledger = b.level;
  Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    double harvested = rng.uniform() < 0.3 ? rng.uniform() * 0.01 : 0.0;
    SpendRequest req;
    req.tx = rng.uniform() < 0.5;
    req.rx = rng.uniform() < 0.2;
    req.cmp = rng.uniform() < 0.2;
    req.tx_cost = rng.uniform() * 0.02;
    req.rx_cost = rng.uniform() * 0.02;
    req.cmp_cost = rng.uniform() * 0.02;
    auto d = battery_step(b, harvested, req);
    ASSERT_GE(b.level, 0.0);
    ASSERT_LE(b.level, b.capacity);
    // replay the recorded deltas with the same operations, same order
    ledger += d.stored;
    if (d.did_tx) ledger -= d.spent_tx;
    if (d.did_rx) ledger -= d.spent_rx;
    if (d.did_cmp) ledger -= d.spent_cmp;
    ASSERT_EQ(ledger, b.level);  // bit-exact conservation
  }
}
