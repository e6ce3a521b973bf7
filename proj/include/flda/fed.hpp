#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "flda/model.hpp"

namespace flda {

enum class Phase { FD, FL };

// Alternation schedule: each cycle of `gamma` iterations starts with
// round(alpha * gamma) distillation iterations, then full-model iterations.
struct PhaseSchedule {
  double alpha = 0.5;
  int gamma = 100;

  int fd_iterations() const { return static_cast<int>(std::lround(alpha * gamma)); }
};

inline Phase phase_of(int64_t t, const PhaseSchedule& s) {
  if (t < 0) throw std::invalid_argument("phase_of: t must be >= 0");
  return (t % s.gamma) < s.fd_iterations() ? Phase::FD : Phase::FL;
}

template <class Real>
struct FlUpdate {
  ModelParams<Real> params;
  int batch_size = 0;
};

// Batch-size-weighted model average over whichever updates actually arrived;
// weights are renormalized over that subset. Empty input means no update.
template <class Real>
std::optional<ModelParams<Real>> aggregate_fl(std::span<const FlUpdate<Real>> received) {
  if (received.empty()) return std::nullopt;
  int64_t total = 0;
  for (const auto& u : received) {
    if (u.batch_size <= 0) throw std::invalid_argument("aggregate_fl: batch_size must be > 0");
    total += u.batch_size;
  }
  ModelParams<Real> out;
  out.arch = received.front().params.arch;
  out.values.assign(received.front().params.values.size(), Real(0));
  for (const auto& u : received) {
    if (u.params.values.size() != out.values.size())
      throw std::invalid_argument("aggregate_fl: parameter size mismatch");
    const Real w = Real(u.batch_size) / Real(total);
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += w * u.params.values[i];
  }
  return out;
}

// Per-label unweighted mean over the users whose table has that label.
// A label missing from every received table stays missing globally.
template <class Real>
std::optional<LogitTable<Real>> aggregate_fd(std::span<const LogitTable<Real>> received) {
  if (received.empty()) return std::nullopt;
  const int C = received.front().num_labels();
  LogitTable<Real> out;
  out.entries.resize(C);
  out.counts.assign(C, 0);
  for (const auto& t : received) {
    if (t.num_labels() != C) throw std::invalid_argument("aggregate_fd: label count mismatch");
    for (int n = 0; n < C; ++n) {
      if (!t.entries[n]) continue;
      if (!out.entries[n]) out.entries[n] = std::vector<Real>(C, Real(0));
      for (int c = 0; c < C; ++c) (*out.entries[n])[c] += (*t.entries[n])[c];
      out.counts[n]++;
    }
  }
  for (int n = 0; n < C; ++n) {
    if (out.counts[n] == 0) continue;
    const Real inv = Real(1) / Real(out.counts[n]);
    for (auto& v : *out.entries[n]) v *= inv;
  }
  return out;
}

// Full-model reinitialization: only devices that heard the broadcast sync;
// the rest continue from their stale local model.
template <class Real>
void reinit_fl(ModelParams<Real>& device_model, const ModelParams<Real>& global, bool received) {
  if (received) device_model = global;
}

// Distillation-phase reinitialization is a plain local step with the
// (possibly regularized) gradient.
template <class Real>
void reinit_fd(ModelParams<Real>& device_model, const std::vector<Real>& grad, Real mu) {
  sgd_step_inplace(device_model, grad, mu);
}

}  // namespace flda
