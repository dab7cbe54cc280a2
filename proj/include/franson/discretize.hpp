#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "franson/rng.hpp"
#include "franson/timetag.hpp"

namespace franson {

// Time-bin grid for one analysis dimension. The axis is tiled into frames
// of frame_len_ps starting at block_start + grid_phase_ps, each frame cut
// into d bins of bin_len_ps. A superposition click in bin i is the
// projection onto (|i> +- |i+k>)/sqrt(2); it only names a valid qudit
// outcome when i + k fits inside the frame, so usable superposition bins
// run 0..d-k-1. With the default frame of two interferometer delays,
// k = d/2 and the (d-k)*2 signed superposition outcomes again form a
// d-element basis.
struct DiscretizationConfig {
  std::int64_t tau_mzi_ps = 2700;
  std::int64_t frame_len_ps = 5400;
  std::int64_t bin_len_ps = 1350;
  int d = 4;
  int k = 2;
  std::int64_t grid_phase_ps = 0;

  // Grid for dimension d with frame_len = 2 * tau: requires d even (so k
  // = d/2 is an integer) and 2 * tau divisible by d. Throws config_error
  // otherwise.
  static DiscretizationConfig for_dimension(int d, std::int64_t tau_mzi_ps,
                                            std::int64_t grid_phase_ps = 0);

  // Internal consistency: frame = d * bin exactly, k * bin = tau, k in
  // [1, d-1], grid_phase in [0, frame). Throws config_error.
  void validate() const;
};

enum class FrameKind : std::uint8_t { empty, single_toa, single_tsup, multi };

struct RawClick {
  std::int64_t t_ps = 0;
  Channel ch = Channel::toa_h;
};

// One party's view of one frame. single_toa carries the time bin 0..d-1;
// single_tsup carries the superposition bin 0..d-k-1 and the +/- port
// sign. A single superposition click in bin >= d-k projects outside the
// qudit space, and any such click voids the party's whole frame: that is
// the empty kind even when other clicks landed, because keeping the
// survivors would bias the sample toward them. Genuine multi-click frames
// keep their raw clicks for later fair-sampling resolution.
struct PartyFrame {
  FrameKind kind = FrameKind::empty;
  int bin = 0;
  int sign = 1;
  std::vector<RawClick> clicks;
};

struct FrameOutcome {
  std::int64_t frame_index = 0;
  PartyFrame alice;
  PartyFrame bob;
};

// Per-block frame census. Every frame lands in exactly one bucket:
// empty (neither party), single_sided (exactly one party), valid (both
// single, same basis), mixed_basis (both single, different basis), or
// multi_resolved (both present, at least one side multi-click). The five
// buckets sum to total.
struct FrameStats {
  std::int64_t total = 0;
  std::int64_t empty = 0;
  std::int64_t single_sided = 0;
  std::int64_t valid = 0;
  std::int64_t mixed_basis = 0;
  std::int64_t multi_resolved = 0;
};

// Square count matrix, Alice's outcome indexes rows, Bob's columns.
struct CountMatrix {
  int d = 0;
  std::vector<std::int64_t> v;

  explicit CountMatrix(int dim = 0)
      : d(dim), v(std::size_t(dim) * std::size_t(dim), 0) {}
  std::int64_t& at(int i, int j) {
    return v[std::size_t(i) * std::size_t(d) + std::size_t(j)];
  }
  std::int64_t at(int i, int j) const {
    return v[std::size_t(i) * std::size_t(d) + std::size_t(j)];
  }
  std::int64_t total() const;
  bool operator==(const CountMatrix&) const = default;
};

// Coincidence tallies for one block: the d x d time-bin matrix plus one
// d x d matrix per superposition sign pairing (Alice port x Bob port).
// Superposition mass can only occupy the top-left (d-k) x (d-k) corner.
// Total mass across all five equals the number of accepted matched-basis
// coincidences, i.e. valid frames plus multi-resolved frames whose drawn
// bases agreed.
struct CorrelationMatrices {
  DiscretizationConfig cfg;
  CountMatrix m_toa;
  CountMatrix m_tsup_pp;
  CountMatrix m_tsup_pm;
  CountMatrix m_tsup_mp;
  CountMatrix m_tsup_mm;
  FrameStats frame_stats;
  double integration_s = 0;

  std::int64_t matrix_mass() const;
};

// Classify every frame of the block [t0, t1) for both parties, empties
// included, so the result has ceil((t1 - t0) / frame_len) entries. Tags
// outside the block, or in the sub-frame gap before the first frame when
// grid_phase > 0, are ignored. This materializes one entry per frame and
// is meant for short diagnostic blocks; production-size blocks go through
// discretize_block, which skips empty frames arithmetically.
std::vector<FrameOutcome> classify_frames(const TagStream& a,
                                          const TagStream& b,
                                          const DiscretizationConfig& cfg,
                                          std::int64_t t0_ps,
                                          std::int64_t t1_ps);

// Resolve a multi-click party frame into a uniformly random single
// outcome, crediting no basis or bin over another: first a fair coin for
// the basis, then a uniform time bin (d options) or a uniform valid
// superposition bin (d-k options) with a fair sign coin. The draw order
// is fixed so seeded runs reproduce.
PartyFrame fair_sampling_assign(const PartyFrame& frame,
                                const DiscretizationConfig& cfg, Rng& rng);

// Tally classified frames into matrices. Frames with either side empty
// are discarded; multi-click sides are resolved via fair_sampling_assign
// (Alice drawn before Bob); a coincidence enters a matrix only when both
// bases agree. integration_s is recorded verbatim.
CorrelationMatrices accumulate(const std::vector<FrameOutcome>& frames,
                               const DiscretizationConfig& cfg,
                               double integration_s, Rng& rng);

// Fused classify + accumulate over [t0, t1) that never materializes the
// frame list. Identical matrices and stats to the staged path, including
// the order of fair-sampling draws.
CorrelationMatrices discretize_block(const TagStream& a, const TagStream& b,
                                     const DiscretizationConfig& cfg,
                                     std::int64_t t0_ps, std::int64_t t1_ps,
                                     Rng& rng);

// The counts feeding one two-level subspace {i, i+d/2}, 0 <= i < d/2.
// toa holds the time-bin quadruple (i,i), (i,i+d/2), (i+d/2,i),
// (i+d/2,i+d/2); tsup holds the (i,i) diagonal of the four sign matrices
// in pp, pm, mp, mm order. Requires k == d/2 (the default grid) so that
// the superposition projectors pair the same two bins; throws
// config_error otherwise or when i is out of range.
struct SubspaceCounts {
  std::array<std::int64_t, 4> toa{};
  std::array<std::int64_t, 4> tsup{};
};

SubspaceCounts subspace_counts(const CorrelationMatrices& m, int i);

// Pick the grid offset by scanning n_phases candidates j * (frame_len /
// n_phases), j = 0..n_phases-1, over the calibration block [t0, t1) and
// scoring each by the number of valid frames whose two outcomes agree in
// bin index. Multi-click frames are left unresolved (no rng, fully
// deterministic); ties keep the first maximum in scan order.
std::int64_t calibrate_grid_phase(const TagStream& a, const TagStream& b,
                                  const DiscretizationConfig& cfg,
                                  std::int64_t t0_ps, std::int64_t t1_ps,
                                  int n_phases);

}  // namespace franson
