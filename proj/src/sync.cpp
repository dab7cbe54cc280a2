#include "franson/sync.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "franson/errors.hpp"

namespace franson {

namespace {

// Core two-pointer sweep over index ranges of the sorted timestamp arrays.
CorrelationHistogram correlate_ranges(const std::vector<std::int64_t>& a,
                                      std::size_t a_lo, std::size_t a_hi,
                                      const std::vector<std::int64_t>& b,
                                      std::size_t b_lo, std::size_t b_hi,
                                      std::int64_t bin, std::int64_t lo,
                                      std::int64_t hi) {
  if (bin <= 0) throw config_error("cross_correlate: bin width must be > 0");
  if (hi <= lo) throw config_error("cross_correlate: empty delay window");
  CorrelationHistogram h;
  h.lo_ps = lo;
  h.bin_width_ps = bin;
  h.counts.assign(static_cast<std::size_t>((hi - lo + bin - 1) / bin), 0);

  // Delay t_b - t_a in [lo, hi) means t_a in (t_b - hi, t_b - lo]; both
  // cursors only ever move forward as t_b grows.
  std::size_t i0 = a_lo, i1 = a_lo;
  for (std::size_t j = b_lo; j < b_hi; ++j) {
    std::int64_t tb = b[j];
    while (i0 < a_hi && a[i0] <= tb - hi) ++i0;
    if (i1 < i0) i1 = i0;
    while (i1 < a_hi && a[i1] <= tb - lo) ++i1;
    for (std::size_t i = i0; i < i1; ++i)
      h.counts[static_cast<std::size_t>((tb - a[i] - lo) / bin)]++;
  }
  return h;
}

// A lock needs raw statistics on top of the significance score: in a very
// sparse histogram a single accidental count already sits many standard
// deviations above an almost-zero baseline.
constexpr std::uint64_t kMinLockCounts = 10;

CorrelationHistogram correlate_window(const TagStream& a, const TagStream& b,
                                      TagRange br, std::int64_t bin,
                                      std::int64_t lo, std::int64_t hi) {
  if (br.size() == 0)
    return correlate_ranges(a.ts, 0, 0, b.ts, 0, 0, bin, lo, hi);
  TagRange ar = slice(a, b.ts[br.first] - hi + 1, b.ts[br.last - 1] - lo + 1);
  return correlate_ranges(a.ts, ar.first, ar.last, b.ts, br.first, br.last,
                          bin, lo, hi);
}

// The 3-bin centroid contracts a sub-bin misalignment by only ~0.45 per
// pass, so a peak sitting a quarter bin off the grid reads ~20 ps wrong at
// 150 ps bins. Re-centering the histogram on the last estimate puts the
// peak on a bin center, where the centroid is unbiased; a few rounds push
// the alignment error below a picosecond.
double recentered_centroid(const TagStream& a, const TagStream& b, TagRange br,
                           std::int64_t bin, double first_est) {
  constexpr int kSpanBins = 8;
  constexpr int kMaxRounds = 6;
  double est = first_est;
  for (int r = 0; r < kMaxRounds; ++r) {
    std::int64_t c = std::int64_t(std::llround(est));
    std::int64_t lo = c - bin / 2 - kSpanBins * bin;
    std::int64_t hi = lo + (2 * kSpanBins + 1) * bin;
    double next;
    try {
      next = find_peak(correlate_window(a, b, br, bin, lo, hi)).delay_ps;
    } catch (const sync_error&) {
      break;  // narrow window lost the peak, keep the last estimate
    }
    bool converged = std::abs(next - est) < double(bin) / 150.0;
    est = next;
    if (converged) break;
  }
  return est;
}

}  // namespace

CorrelationHistogram cross_correlate(const TagStream& a, const TagStream& b,
                                     std::int64_t bin_width_ps,
                                     std::int64_t lo_ps, std::int64_t hi_ps) {
  return correlate_ranges(a.ts, 0, a.ts.size(), b.ts, 0, b.ts.size(),
                          bin_width_ps, lo_ps, hi_ps);
}

PeakEstimate find_peak(const CorrelationHistogram& h) {
  if (h.counts.empty())
    throw sync_error("find_peak: empty correlation histogram");
  std::size_t imax = static_cast<std::size_t>(
      std::max_element(h.counts.begin(), h.counts.end()) - h.counts.begin());
  if (h.counts[imax] == 0)
    throw sync_error("find_peak: correlation histogram has no counts");

  PeakEstimate p;
  p.peak_bin = imax;
  p.peak_count = h.counts[imax];

  auto center = [&](std::size_t i) {
    return double(h.lo_ps) + (double(i) + 0.5) * double(h.bin_width_ps);
  };
  std::size_t c0 = imax > 0 ? imax - 1 : imax;
  std::size_t c1 = std::min(imax + 1, h.counts.size() - 1);
  double wsum = 0, msum = 0;
  for (std::size_t i = c0; i <= c1; ++i) {
    wsum += double(h.counts[i]);
    msum += double(h.counts[i]) * center(i);
  }
  p.delay_ps = msum / wsum;

  // Baseline statistics over everything more than 3 bins from the peak.
  double n = 0, s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    if (i + 3 >= imax && i <= imax + 3) continue;
    double c = double(h.counts[i]);
    n += 1;
    s1 += c;
    s2 += c * c;
  }
  if (n < 2) {
    p.significance = std::numeric_limits<double>::infinity();
    return p;
  }
  double mean = s1 / n;
  double var = s2 / n - mean * mean;
  double sd = var > 0 ? std::sqrt(var) : 0.0;
  double excess = double(p.peak_count) - mean;
  if (sd == 0)
    p.significance = excess > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  else
    p.significance = excess / sd;
  return p;
}

double ClockModel::eval_at_s(double t_s) const {
  if (knots.empty()) return 0.0;
  if (t_s <= knots.front().center_s) return knots.front().offset_ps;
  if (t_s >= knots.back().center_s) return knots.back().offset_ps;
  auto it = std::upper_bound(
      knots.begin(), knots.end(), t_s,
      [](double t, const ClockKnot& k) { return t < k.center_s; });
  const ClockKnot& hi = *it;
  const ClockKnot& lo = *(it - 1);
  double f = (t_s - lo.center_s) / (hi.center_s - lo.center_s);
  return lo.offset_ps + f * (hi.offset_ps - lo.offset_ps);
}

double ClockModel::eval(std::int64_t t_ps) const {
  return eval_at_s(double(t_ps) * 1e-12);
}

ClockModel track_drift(const TagStream& alice, const TagStream& bob,
                       const SyncConfig& cfg) {
  if (alice.empty() || bob.empty())
    throw sync_error("track_drift: empty tag stream");

  const auto slice_ps = std::int64_t(cfg.acq_slice_s * 1e12);

  // Acquisition: wide scan on the leading slice of each stream.
  TagRange b_acq = slice(bob, bob.ts.front(), bob.ts.front() + slice_ps);
  TagRange a_acq = slice(alice, alice.ts.front(), alice.ts.front() + slice_ps);
  auto acq_hist =
      correlate_ranges(alice.ts, a_acq.first, a_acq.last, bob.ts, b_acq.first,
                       b_acq.last, cfg.acq_bin_ps, -cfg.acq_window_ps,
                       cfg.acq_window_ps);
  PeakEstimate acq;
  try {
    acq = find_peak(acq_hist);
  } catch (const sync_error&) {
    throw sync_error("track_drift: acquisition scan found no correlations");
  }
  if (acq.significance < cfg.significance_threshold ||
      acq.peak_count < kMinLockCounts)
    throw sync_error(
        "track_drift: acquisition scan found no significant peak "
        "(significance " +
        std::to_string(acq.significance) + ", " +
        std::to_string(acq.peak_count) + " counts)");

  // Coarse pass around the acquisition estimate, same data slice.
  auto seed_ps = std::int64_t(std::llround(acq.delay_ps));
  auto coarse_hist = correlate_window(alice, bob, b_acq, cfg.coarse_bin_ps,
                                      seed_ps - cfg.coarse_window_ps,
                                      seed_ps + cfg.coarse_window_ps);
  PeakEstimate coarse;
  try {
    coarse = find_peak(coarse_hist);
  } catch (const sync_error&) {
    throw sync_error("track_drift: coarse search lost the peak");
  }
  if (coarse.significance < cfg.significance_threshold ||
      coarse.peak_count < kMinLockCounts)
    throw sync_error("track_drift: coarse search found no significant peak");

  // Fine tracking, block by block, each window seeded by the last lock.
  ClockModel m;
  std::int64_t span_lo = bob.ts.front();
  std::int64_t span_hi = bob.ts.back() + 1;
  auto block_ps = std::int64_t(cfg.block_s * 1e12);
  auto n_blocks =
      static_cast<std::size_t>((span_hi - span_lo + block_ps - 1) / block_ps);
  double seed = coarse.delay_ps;
  int measured = 0;
  for (std::size_t k = 0; k < n_blocks; ++k) {
    std::int64_t t0 = span_lo + std::int64_t(k) * block_ps;
    std::int64_t t1 = std::min(span_hi, t0 + block_ps);
    ClockKnot knot;
    knot.center_s = double(t0 + t1) / 2.0 * 1e-12;
    knot.measured = false;
    knot.significance = 0.0;
    TagRange br = slice(bob, t0, t1);
    if (br.size() > 0) {
      auto center = std::int64_t(std::llround(seed));
      auto hist = correlate_window(alice, bob, br, cfg.bin_ps,
                                   center - cfg.window_ps,
                                   center + cfg.window_ps);
      try {
        PeakEstimate p = find_peak(hist);
        knot.significance = p.significance;
        if (p.significance >= cfg.significance_threshold &&
            p.peak_count >= kMinLockCounts) {
          knot.offset_ps =
              recentered_centroid(alice, bob, br, cfg.bin_ps, p.delay_ps);
          knot.measured = true;
          seed = knot.offset_ps;
          ++measured;
        }
      } catch (const sync_error&) {
        // Empty block histogram: leave the knot unmeasured.
      }
    }
    m.knots.push_back(knot);
  }

  if (measured < 2)
    throw sync_error("track_drift: fewer than 2 blocks produced a "
                     "significant correlation peak");

  // Bridge unmeasured knots from their measured neighbors.
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  std::size_t first_meas = 0, last_meas = 0;
  bool seen = false;
  for (std::size_t k = 0; k < m.knots.size(); ++k) {
    if (!m.knots[k].measured) continue;
    if (!seen) first_meas = k, seen = true;
    last_meas = k;
    if (prev != std::numeric_limits<std::size_t>::max() && k > prev + 1) {
      const ClockKnot& a = m.knots[prev];
      const ClockKnot& b = m.knots[k];
      for (std::size_t j = prev + 1; j < k; ++j) {
        double f = (m.knots[j].center_s - a.center_s) /
                   (b.center_s - a.center_s);
        m.knots[j].offset_ps = a.offset_ps + f * (b.offset_ps - a.offset_ps);
      }
    }
    prev = k;
  }
  for (std::size_t k = 0; k < first_meas; ++k)
    m.knots[k].offset_ps = m.knots[first_meas].offset_ps;
  for (std::size_t k = last_meas + 1; k < m.knots.size(); ++k)
    m.knots[k].offset_ps = m.knots[last_meas].offset_ps;

  return m;
}

TagStream apply_model(const TagStream& bob, const ClockModel& m) {
  TagStream out = bob;
  for (auto& t : out.ts) t -= std::int64_t(std::llround(m.eval(t)));
  restore_stream_order(out);
  return out;
}

}  // namespace franson
