#pragma once

#include <cmath>
#include <stdexcept>

#include "flda/energy.hpp"
#include "flda/rng.hpp"

namespace flda {

// Inputs for the closed-form uplink success expressions. active_users is a
// real number: the expected count K * P_active, not an integer head count.
struct ThroughputQuery {
  double access_prob = 0.2;   // p
  int channels = 4;           // M
  double active_users = 20;   // K-hat
  double lambda = 0.0;        // mean background subpackets per slot
  int info_subpackets = 1;    // D
  double code_rate = 1.0;     // q
};

namespace detail {
inline void check_query(const ThroughputQuery& q) {
  if (q.access_prob <= 0.0 || q.access_prob > 1.0 || q.channels < 1 || q.active_users < 1.0 ||
      q.lambda < 0.0 || q.info_subpackets < 1 || q.code_rate <= 0.0 || q.code_rate > 1.0)
    throw std::invalid_argument("invalid throughput query");
}
inline double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}
}  // namespace detail

// Probability that a user transmits and no other active user lands on its
// channel: p * (1 - p/M)^(K-1).
inline double contention_success_prob(const ThroughputQuery& q) {
  detail::check_query(q);
  return q.access_prob *
         std::pow(1.0 - q.access_prob / q.channels, q.active_users - 1.0);
}

// Probability a given channel-slot is free of background traffic: e^(-lambda/M).
inline double background_clear_prob(double lambda, int channels) {
  if (lambda < 0.0 || channels < 1) throw std::invalid_argument("invalid background query");
  return std::exp(-lambda / channels);
}

// Packet success with coding: contention success times the probability that
// at least D of the F = ceil(D/q) transmitted subpackets dodge background
// traffic. The binomial tail is summed in log space; F can exceed 200.
inline double packet_success_prob(const ThroughputQuery& q) {
  detail::check_query(q);
  const double pa = contention_success_prob(q);
  const double ps = background_clear_prob(q.lambda, q.channels);
  const int D = q.info_subpackets;
  const int F = static_cast<int>(std::ceil(D / q.code_rate));
  if (ps >= 1.0) return pa;
  if (ps <= 0.0) return 0.0;
  if (F == D) return pa * std::pow(ps, D);  // no redundancy: single tail term
  const double log_ps = std::log(ps), log_1mps = std::log1p(-ps);
  double tail = 0.0;
  for (int z = D; z <= F; ++z)
    tail += std::exp(detail::log_choose(F, z) + z * log_ps + (F - z) * log_1mps);
  if (tail > 1.0) tail = 1.0;
  return pa * tail;
}

// Expected number of local updates the server receives per iteration.
inline double uplink_throughput(const ThroughputQuery& q) {
  return q.active_users * packet_success_prob(q);
}

// Iteration-averaged throughput of the alternating scheme.
inline double alternating_throughput(double alpha, double throughput_fd, double throughput_fl) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0, 1]");
  return alpha * throughput_fd + (1.0 - alpha) * throughput_fl;
}

// Monte-Carlo estimate of Pr(battery + total harvest over `slots` slots >= cost),
// the activity probability that scales the active user count.
inline double active_probability_mc(double battery0, const EhParams& eh, double cost, int slots,
                                    int trials, Rng& rng) {
  if (trials < 1) throw std::invalid_argument("active_probability_mc: trials must be >= 1");
  if (battery0 >= cost) return 1.0;
  int hits = 0;
  for (int i = 0; i < trials; ++i) {
    double total = battery0;
    for (int z = 0; z < slots && total < cost; ++z) total += harvest_slot(eh, rng);
    if (total >= cost) ++hits;
  }
  return static_cast<double>(hits) / trials;
}

}  // namespace flda
