#pragma once

#include <cstdint>
#include <vector>

#include "franson/config.hpp"
#include "franson/timetag.hpp"

namespace franson {

// Histogram of pairwise delays t_bob - t_alice over a delay window,
// counts[i] covering [lo_ps + i*w, lo_ps + (i+1)*w).
struct CorrelationHistogram {
  std::int64_t lo_ps = 0;
  std::int64_t bin_width_ps = 1;
  std::vector<std::uint64_t> counts;
};

// Counts every (a, b) tag pair whose delay t_b - t_a falls in [lo_ps,
// hi_ps). Two-pointer sweep over the sorted streams: linear in the stream
// sizes plus the number of in-window pairs, so callers should slice the
// streams to the region of interest before correlating long sessions.
CorrelationHistogram cross_correlate(const TagStream& a, const TagStream& b,
                                     std::int64_t bin_width_ps,
                                     std::int64_t lo_ps, std::int64_t hi_ps);

struct PeakEstimate {
  double delay_ps = 0.0;       // centroid of the 3 bins around the maximum
  double significance = 0.0;   // (max - mean) / sd of the off-peak bins
  std::uint64_t peak_count = 0;
  std::size_t peak_bin = 0;
};

// Locates the histogram maximum and refines it with a 3-bin centroid. The
// significance compares the peak against all bins more than 3 bins away
// from it; a flat histogram scores 0, an empty one is a sync error.
PeakEstimate find_peak(const CorrelationHistogram& h);

struct ClockKnot {
  double center_s = 0.0;      // block center on Bob's clock
  double offset_ps = 0.0;     // estimated t_bob - t_alice at the center
  double significance = 0.0;
  bool measured = true;       // false: interpolated over a weak block
};

// Piecewise-linear offset model: linear between knot centers, constant
// beyond the first and last knot.
struct ClockModel {
  std::vector<ClockKnot> knots;  // ordered by center_s

  double eval_at_s(double t_s) const;
  double eval(std::int64_t t_ps) const;
};

// Recovers Bob's clock offset as a function of time. One acquisition scan
// over +/- acq_window_ps (first acq_slice_s of data) and one coarse pass
// locate the initial offset; each block of block_s seconds is then
// correlated within +/- window_ps of the previous block's offset. A lock
// needs both a significant peak and a handful of raw counts in the peak
// bin (sparse histograms score lone accidentals absurdly high). Blocks
// that miss either bar keep a flagged, interpolated knot. Fails with
// sync_error when acquisition finds no peak or fewer than 2 blocks
// produce a significant one.
ClockModel track_drift(const TagStream& alice, const TagStream& bob,
                       const SyncConfig& cfg = {});

// Maps Bob's stream onto Alice's clock: t -> t - model(t). Output is
// re-sorted; tags pushed below t = 0 are dropped.
TagStream apply_model(const TagStream& bob, const ClockModel& m);

}  // namespace franson
