#pragma once

#include <cstdint>
#include <vector>

#include "franson/config.hpp"
#include "franson/rng.hpp"
#include "franson/timetag.hpp"

namespace franson {

enum class Basis : std::uint8_t { toa = 0, tsup = 1 };

enum class Provenance : std::uint8_t { signal = 0, background = 1, dark = 2 };

// One generated pair, before and after the lossy channel. Channels encode
// the measured outcome (polarization for arrival-time, output port for
// superposition). detected_* is false if the photon was lost, pushed below
// t = 0 by the clock transform, or swallowed by the 1 ps dead-time rule.
struct PairRecord {
  std::int64_t creation_ps = 0;
  Basis basis_a = Basis::toa;
  Basis basis_b = Basis::toa;
  Channel channel_a = Channel::toa_h;
  Channel channel_b = Channel::toa_h;
  bool detected_a = false;
  bool detected_b = false;
};

// Bob's clock relative to Alice's: deterministic offset plus linear drift
// plus one random-walk realization sampled on a regular grid and linearly
// interpolated. The sampled walk IS the ground truth, not an approximation
// of some finer process.
struct ClockRealization {
  double offset_ps = 0.0;
  double drift_ps_per_s = 0.0;
  double rw_step_s = 1.0;
  std::vector<double> rw_ps;  // rw_ps[k] = walk at t = k * rw_step_s; [0] = 0

  double eval(std::int64_t t_ps) const;
  std::int64_t apply(std::int64_t t_ps) const;
};

ClockRealization make_clock_realization(const ChannelConfig& channel,
                                        double duration_s, Rng& rng);

struct GroundTruth {
  std::vector<PairRecord> pairs;  // empty when record_pairs was off
  ClockRealization clock;
  // Aligned with the returned streams: prov_alice[i] explains alice.ts[i].
  std::vector<std::uint8_t> prov_alice;
  std::vector<std::uint8_t> prov_bob;
};

// Joint measurement outcome of one pair. Both emission slots sit at the
// pair's creation time: a superposition click is always reported in the
// early slot, which fixes which projector the click stands for without
// changing any observable statistic.
struct PairOutcome {
  Channel channel_a = Channel::toa_h;
  Channel channel_b = Channel::toa_h;
  std::int64_t time_a_ps = 0;
  std::int64_t time_b_ps = 0;
};

// Joint outcome statistics, given the measurement bases:
//   TOA/TOA   polarizations match with probability toa_visibility,
//             mismatches split evenly between (H,V) and (V,H)
//   TSUP/TSUP output ports match with probability (1 + V cos phi)/2,
//             i.e. P(++) = P(--) = (1 + V cos phi)/4
//   mixed     independent fair coin on each side
PairOutcome sample_pair_outcome(Basis basis_a, Basis basis_b,
                                const SourceConfig& source,
                                std::int64_t creation_ps, Rng& rng);

// Inhomogeneous Poisson stream over all four detectors of one party via
// thinning: total rate 4 * per_detector_hz(t), uniform channel assignment.
TagStream generate_background(const RateProfile& per_detector_hz, Party party,
                              double duration_s, Rng& rng);

// Applies a clock realization to every timestamp, re-sorts, and resolves
// rounding-induced (timestamp, channel) collisions by keeping the earlier
// tag (1 ps detector dead time). Tags pushed below t = 0 are dropped.
void transform_timestamps(TagStream& stream, const ClockRealization& clock);

// The same, deriving a fresh realization from the channel config; rng is
// consumed for the random-walk component.
TagStream apply_clock(const TagStream& stream, const ChannelConfig& channel,
                      Rng& rng);

struct SimResult {
  TagStream alice;
  TagStream bob;
  GroundTruth truth;
};

// Full two-party session: pairs from a homogeneous Poisson process, basis
// choice by independent fair coin per photon, channel losses, background
// and dark counts, per-detection jitter, and Bob's clock transform. The
// result is a pure function of (configs, duration, seed); every random
// decision pulls from a named substream derived from the seed, generation
// block by generation block, so block-parallel execution cannot change it.
SimResult simulate_session(const SourceConfig& source,
                           const ChannelConfig& channel, double duration_s,
                           std::uint64_t seed, bool record_pairs = true);

}  // namespace franson
