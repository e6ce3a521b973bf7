#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "flda/rng.hpp"

namespace flda {

enum class AccessMode { Frame, Subpacket };

struct FrameConfig {
  int channels = 4;            // M
  double access_prob = 0.2;    // p
  int payload_bits = 2008;     // Ns
  double code_rate = 0.5;      // q
  double slot_seconds = 2.008e-3;
  AccessMode access_mode = AccessMode::Frame;
};

// An N-bit update splits into D information subpackets, coded up to F
// transmitted subpackets; any D clean ones decode the packet.
struct SubpacketPlan {
  int64_t bits = 0;        // N
  int info_subpackets = 0;  // D
  int total_subpackets = 0; // F
};

inline SubpacketPlan subpacket_plan(int64_t bits, const FrameConfig& cfg) {
  if (bits < 1) throw std::invalid_argument("subpacket_plan: bits must be >= 1");
  if (cfg.payload_bits < 1 || cfg.code_rate <= 0.0 || cfg.code_rate > 1.0)
    throw std::invalid_argument("subpacket_plan: invalid frame config");
  SubpacketPlan p;
  p.bits = bits;
  p.info_subpackets = static_cast<int>((bits + cfg.payload_bits - 1) / cfg.payload_bits);
  p.total_subpackets =
      static_cast<int>(std::ceil(static_cast<double>(p.info_subpackets) / cfg.code_rate));
  return p;
}

struct DeviceFrameResult {
  bool attempted = false;
  int channel = -1;          // frame-access mode only; -1 when not attempting
  int clean_subpackets = 0;
  bool packet_success = false;
};

struct FrameOutcome {
  std::vector<DeviceFrameResult> devices;
  std::vector<int> background_per_slot;  // total background subpackets, per slot
};

// Background subpackets landing this slot, counted per channel. Each slot
// draws from its own substream so that raising lambda only ever adds hits on
// top of the lower-lambda realization.
inline std::vector<int> draw_background(int channels, double lambda, Rng& slot_rng) {
  std::vector<int> per_channel(channels, 0);
  int n = slot_rng.poisson(lambda);
  for (int i = 0; i < n; ++i) per_channel[slot_rng.uniform_int(channels)]++;
  return per_channel;
}

// Hard collision rule for one slot: a transmission is clean iff its channel
// carries no other user transmission and no background subpacket.
inline void resolve_slot(std::span<const int> tx_channels, std::span<const int> bg_per_channel,
                         std::span<uint8_t> clean_out) {
  std::vector<int> occupancy(bg_per_channel.size(), 0);
  for (int ch : tx_channels) occupancy[ch]++;
  for (size_t i = 0; i < tx_channels.size(); ++i) {
    int ch = tx_channels[i];
    clean_out[i] = occupancy[ch] == 1 && bg_per_channel[ch] == 0 ? 1 : 0;
  }
}

// One frame window of F slots with ideal energy (every attempting device can
// transmit in every slot). Frame-access mode draws one access decision and
// one channel per device for the whole frame; subpacket mode redraws both
// every slot.
inline FrameOutcome simulate_frame(int num_devices, std::span<const int> attempting,
                                   const SubpacketPlan& plan, const FrameConfig& cfg,
                                   double lambda, Rng& rng) {
  if (lambda < 0.0) throw std::invalid_argument("simulate_frame: lambda must be >= 0");
  FrameOutcome out;
  out.devices.resize(num_devices);
  out.background_per_slot.resize(plan.total_subpackets, 0);

  std::vector<int> accessors;     // device ids transmitting (frame mode)
  std::vector<int> channels;      // their channels
  if (cfg.access_mode == AccessMode::Frame) {
    for (int dev : attempting) {
      if (!rng.bernoulli(cfg.access_prob)) continue;
      int ch = static_cast<int>(rng.uniform_int(cfg.channels));
      out.devices[dev].attempted = true;
      out.devices[dev].channel = ch;
      accessors.push_back(dev);
      channels.push_back(ch);
    }
  }

  std::vector<uint8_t> clean;
  for (int z = 0; z < plan.total_subpackets; ++z) {
    Rng bg_rng(mix64(rng.next_u64()));
    auto bg = draw_background(cfg.channels, lambda, bg_rng);
    int total_bg = 0;
    for (int c : bg) total_bg += c;
    out.background_per_slot[z] = total_bg;

    if (cfg.access_mode == AccessMode::Subpacket) {
      accessors.clear();
      channels.clear();
      for (int dev : attempting) {
        if (!rng.bernoulli(cfg.access_prob)) continue;
        accessors.push_back(dev);
        channels.push_back(static_cast<int>(rng.uniform_int(cfg.channels)));
        out.devices[dev].attempted = true;
      }
    }
    clean.assign(accessors.size(), 0);
    resolve_slot(channels, bg, clean);
    for (size_t i = 0; i < accessors.size(); ++i)
      if (clean[i]) out.devices[accessors[i]].clean_subpackets++;
  }

  for (int dev : attempting) {
    auto& r = out.devices[dev];
    r.packet_success = r.attempted && r.clean_subpackets >= plan.info_subpackets;
  }
  return out;
}

// Downlink is modeled error-free; delivery is gated only by each device
// having the energy to receive.
inline std::vector<int> broadcast(std::span<const int> devices,
                                  const std::function<bool(int)>& has_rx_energy) {
  std::vector<int> receivers;
  for (int dev : devices)
    if (has_rx_energy(dev)) receivers.push_back(dev);
  return receivers;
}

}  // namespace flda
