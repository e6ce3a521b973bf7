#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flda/data.hpp"
#include "flda/rng.hpp"

namespace flda {

// Fully-connected feed-forward classifier: input -> hidden (ReLU) ... -> softmax.
struct Arch {
  int input_dim = 0;
  std::vector<int> hidden;
  int num_classes = 0;

  std::vector<int> layer_sizes() const {
    std::vector<int> s;
    s.push_back(input_dim);
    for (int h : hidden) s.push_back(h);
    s.push_back(num_classes);
    return s;
  }

  int64_t param_count() const {
    auto s = layer_sizes();
    int64_t n = 0;
    for (size_t i = 0; i + 1 < s.size(); ++i) n += int64_t(s[i + 1]) * (s[i] + 1);
    return n;
  }

  bool operator==(const Arch&) const = default;
};

// Parameters as one flat vector; weights row-major by output unit, biases
// after each layer's weight block. Updates are accounted at 32 bits per
// element regardless of the compute type.
template <class Real>
struct ModelParams {
  Arch arch;
  std::vector<Real> values;
};

using MiniBatch = std::vector<int>;

inline int64_t flops_per_sample(const Arch& arch) {
  // forward: 2 flops per MAC; backward charged at twice the forward cost
  auto s = arch.layer_sizes();
  int64_t macs = 0;
  for (size_t i = 0; i + 1 < s.size(); ++i) macs += int64_t(s[i + 1]) * s[i];
  return 3 * 2 * macs;
}

inline int64_t update_bits(const Arch& arch) { return 32 * arch.param_count(); }

template <class Real>
ModelParams<Real> init_params(const Arch& arch, Rng& rng) {
  ModelParams<Real> m;
  m.arch = arch;
  m.values.resize(static_cast<size_t>(arch.param_count()));
  auto s = arch.layer_sizes();
  size_t off = 0;
  for (size_t i = 0; i + 1 < s.size(); ++i) {
    const int fan_in = s[i], fan_out = s[i + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (int j = 0; j < fan_out * fan_in; ++j)
      m.values[off++] = static_cast<Real>((2.0 * rng.uniform() - 1.0) * limit);
    for (int j = 0; j < fan_out; ++j) m.values[off++] = Real(0);  // biases
  }
  return m;
}

namespace detail {

template <class Real>
void softmax_inplace(std::vector<Real>& z) {
  Real mx = *std::max_element(z.begin(), z.end());
  Real sum = 0;
  for (auto& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

// Forward pass keeping per-layer activations for backprop.
// acts[0] is the input; acts.back() holds softmax probabilities.
template <class Real>
void forward_trace(const ModelParams<Real>& m, std::span<const float> x,
                   std::vector<std::vector<Real>>& acts) {
  auto s = m.arch.layer_sizes();
  acts.resize(s.size());
  acts[0].assign(x.begin(), x.end());
  size_t off = 0;
  for (size_t i = 0; i + 1 < s.size(); ++i) {
    const int in = s[i], out = s[i + 1];
    auto& a = acts[i];
    auto& z = acts[i + 1];
    z.assign(out, Real(0));
    for (int o = 0; o < out; ++o) {
      Real acc = 0;
      const Real* w = m.values.data() + off + size_t(o) * in;
      for (int j = 0; j < in; ++j) acc += w[j] * a[j];
      z[o] = acc + m.values[off + size_t(out) * in + o];
    }
    off += size_t(out) * (in + 1);
    if (i + 2 < s.size()) {
      for (auto& v : z) v = v > Real(0) ? v : Real(0);  // ReLU
    } else {
      softmax_inplace(z);
    }
  }
}

// Accumulates dLoss/dparams into grad given the output-layer delta
// (dLoss/dlogits of the final layer; with softmax cross-entropy this is
// probs minus target).
template <class Real>
void backprop_accumulate(const ModelParams<Real>& m, const std::vector<std::vector<Real>>& acts,
                         std::vector<Real> delta, std::vector<Real>& grad) {
  auto s = m.arch.layer_sizes();
  // layer offsets
  std::vector<size_t> off(s.size() - 1);
  size_t o = 0;
  for (size_t i = 0; i + 1 < s.size(); ++i) {
    off[i] = o;
    o += size_t(s[i + 1]) * (s[i] + 1);
  }
  for (size_t i = s.size() - 2;; --i) {
    const int in = s[i], out = s[i + 1];
    const auto& a = acts[i];
    for (int u = 0; u < out; ++u) {
      Real* gw = grad.data() + off[i] + size_t(u) * in;
      const Real d = delta[u];
      for (int j = 0; j < in; ++j) gw[j] += d * a[j];
      grad[off[i] + size_t(out) * in + u] += d;
    }
    if (i == 0) break;
    std::vector<Real> prev(in, Real(0));
    for (int u = 0; u < out; ++u) {
      const Real* w = m.values.data() + off[i] + size_t(u) * in;
      const Real d = delta[u];
      for (int j = 0; j < in; ++j) prev[j] += w[j] * d;
    }
    // ReLU gate: acts[i] holds post-activation values of the hidden layer
    for (int j = 0; j < in; ++j)
      if (a[j] <= Real(0)) prev[j] = Real(0);
    delta = std::move(prev);
  }
}

}  // namespace detail

template <class Real>
std::vector<Real> forward(const ModelParams<Real>& m, std::span<const float> x) {
  if (static_cast<int>(x.size()) != m.arch.input_dim)
    throw std::invalid_argument("forward: input dimension mismatch");
  std::vector<std::vector<Real>> acts;
  detail::forward_trace(m, x, acts);
  return acts.back();
}

// Mean cross-entropy gradient over the batch.
template <class Real>
std::vector<Real> grad_fl(const ModelParams<Real>& m, const MiniBatch& batch, const Dataset& data) {
  if (batch.empty()) throw std::invalid_argument("grad_fl: empty batch");
  std::vector<Real> grad(m.values.size(), Real(0));
  std::vector<std::vector<Real>> acts;
  for (int idx : batch) {
    auto sv = data.sample(idx);
    detail::forward_trace(m, sv.features, acts);
    std::vector<Real> delta = acts.back();  // probs
    delta[sv.label] -= Real(1);
    detail::backprop_accumulate(m, acts, std::move(delta), grad);
  }
  const Real inv = Real(1) / Real(batch.size());
  for (auto& g : grad) g *= inv;
  return grad;
}

// Per-label averaged softmax outputs over a batch; distilled updates and the
// distillation targets both take this shape. Labels absent from the batch are
// left unset rather than zero-filled.
template <class Real>
struct LogitTable {
  std::vector<std::optional<std::vector<Real>>> entries;
  std::vector<int> counts;

  int num_labels() const { return static_cast<int>(entries.size()); }
  bool complete() const {
    return std::all_of(entries.begin(), entries.end(), [](auto& e) { return e.has_value(); });
  }
};

template <class Real>
LogitTable<Real> avg_logits_per_label(const ModelParams<Real>& m, const MiniBatch& batch,
                                      const Dataset& data) {
  if (batch.empty()) throw std::invalid_argument("avg_logits_per_label: empty batch");
  const int C = m.arch.num_classes;
  LogitTable<Real> t;
  t.entries.resize(C);
  t.counts.assign(C, 0);
  std::vector<std::vector<Real>> acc(C);
  std::vector<std::vector<Real>> acts;
  for (int idx : batch) {
    auto sv = data.sample(idx);
    detail::forward_trace(m, sv.features, acts);
    if (acc[sv.label].empty()) acc[sv.label].assign(C, Real(0));
    for (int c = 0; c < C; ++c) acc[sv.label][c] += acts.back()[c];
    t.counts[sv.label]++;
  }
  for (int n = 0; n < C; ++n) {
    if (t.counts[n] == 0) continue;
    auto& v = acc[n];
    const Real inv = Real(1) / Real(t.counts[n]);
    for (auto& p : v) p *= inv;
    t.entries[n] = std::move(v);
  }
  return t;
}

// Distillation-regularized gradient: per sample, cross-entropy against the
// one-hot label plus beta times cross-entropy against the global averaged
// output vector for that sample's ground-truth label. With beta == 0 this is
// exactly grad_fl.
template <class Real>
std::vector<Real> grad_fd(const ModelParams<Real>& m, const MiniBatch& batch, const Dataset& data,
                          const LogitTable<Real>& globals, Real beta) {
  if (batch.empty()) throw std::invalid_argument("grad_fd: empty batch");
  if (beta < Real(0)) throw std::invalid_argument("grad_fd: beta must be >= 0");
  std::vector<Real> grad(m.values.size(), Real(0));
  std::vector<std::vector<Real>> acts;
  for (int idx : batch) {
    auto sv = data.sample(idx);
    detail::forward_trace(m, sv.features, acts);
    std::vector<Real> delta = acts.back();
    delta[sv.label] -= Real(1);
    if (beta > Real(0)) {
      if (sv.label >= globals.num_labels() || !globals.entries[sv.label])
        throw std::invalid_argument("grad_fd: no global output vector for label " +
                                    std::to_string(sv.label));
      const auto& g = *globals.entries[sv.label];
      const auto& probs = acts.back();
      for (size_t c = 0; c < g.size(); ++c) delta[c] += beta * (probs[c] - g[c]);
    }
    detail::backprop_accumulate(m, acts, std::move(delta), grad);
  }
  const Real inv = Real(1) / Real(batch.size());
  for (auto& g : grad) g *= inv;
  return grad;
}

template <class Real>
ModelParams<Real> sgd_step(const ModelParams<Real>& m, const std::vector<Real>& g, Real mu) {
  if (g.size() != m.values.size()) throw std::invalid_argument("sgd_step: gradient size mismatch");
  ModelParams<Real> out = m;
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] -= mu * g[i];
  return out;
}

template <class Real>
void sgd_step_inplace(ModelParams<Real>& m, const std::vector<Real>& g, Real mu) {
  if (g.size() != m.values.size()) throw std::invalid_argument("sgd_step: gradient size mismatch");
  for (size_t i = 0; i < m.values.size(); ++i) m.values[i] -= mu * g[i];
}

template <class Real>
double accuracy(const ModelParams<Real>& m, const Dataset& data) {
  if (data.empty()) return 0.0;
  size_t correct = 0;
  std::vector<std::vector<Real>> acts;
  for (size_t i = 0; i < data.size(); ++i) {
    auto sv = data.sample(i);
    detail::forward_trace(m, sv.features, acts);
    const auto& p = acts.back();
    int best = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    if (best == sv.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// --- checkpoint serialization: arch descriptor then float32 little-endian ---

inline constexpr uint32_t kParamsMagic = 0x414c4446;  // "FDLA" little-endian tag

namespace detail {
inline void write_le_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
inline uint32_t read_le_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("truncated parameter file");
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}
}  // namespace detail

template <class Real>
void save_params(const ModelParams<Real>& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  auto s = m.arch.layer_sizes();
  detail::write_le_u32(out, kParamsMagic);
  detail::write_le_u32(out, static_cast<uint32_t>(s.size()));
  for (int v : s) detail::write_le_u32(out, static_cast<uint32_t>(v));
  for (Real v : m.values) {
    float f = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::write_le_u32(out, bits);
  }
}

template <class Real>
ModelParams<Real> load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  if (detail::read_le_u32(in) != kParamsMagic) throw FormatError(path + ": not a parameter file");
  uint32_t n_sizes = detail::read_le_u32(in);
  if (n_sizes < 2) throw FormatError(path + ": arch descriptor too short");
  std::vector<int> s(n_sizes);
  for (auto& v : s) v = static_cast<int>(detail::read_le_u32(in));
  ModelParams<Real> m;
  m.arch.input_dim = s.front();
  m.arch.num_classes = s.back();
  m.arch.hidden.assign(s.begin() + 1, s.end() - 1);
  m.values.resize(static_cast<size_t>(m.arch.param_count()));
  for (auto& v : m.values) {
    uint32_t bits = detail::read_le_u32(in);
    float f;
    std::memcpy(&f, &bits, 4);
    v = static_cast<Real>(f);
  }
  return m;
}

}  // namespace flda
