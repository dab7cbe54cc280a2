#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "franson/errors.hpp"
#include "franson/rng.hpp"
#include "franson/simulator.hpp"
#include "franson/sync.hpp"

using namespace franson;

namespace {

// Sorted uniform tags over [t0, t0 + span), duplicates collapsed.
TagStream uniform_stream(std::size_t n, std::int64_t t0, std::int64_t span,
                         Party party, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::int64_t> ts(n);
  for (auto& t : ts) t = t0 + std::int64_t(rng.below(std::uint64_t(span)));
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  TagStream s;
  s.party = party;
  for (auto t : ts) s.push_back(t, Channel::toa_h);
  return s;
}

TagStream shifted(const TagStream& s, std::int64_t delta, Party party) {
  TagStream out = s;
  out.party = party;
  for (auto& t : out.ts) t += delta;
  return out;
}

// Brute-force delay histogram, the independent check for cross_correlate.
std::vector<std::uint64_t> brute_histogram(const TagStream& a,
                                           const TagStream& b,
                                           std::int64_t bin, std::int64_t lo,
                                           std::int64_t hi) {
  std::size_t nbins = std::size_t((hi - lo + bin - 1) / bin);
  std::vector<std::uint64_t> counts(nbins, 0);
  for (auto tb : b.ts)
    for (auto ta : a.ts) {
      std::int64_t d = tb - ta;
      if (d >= lo && d < hi) counts[std::size_t((d - lo) / bin)]++;
    }
  return counts;
}

ChannelConfig quiet_channel() {
  ChannelConfig c;
  c.loss_bob_db = 0;
  c.jitter_sigma_ps = 0;
  c.dark_rate_hz = 0;
  c.clock_offset_ps = 0;
  c.clock_drift_ps_per_s = 0;
  c.drift_noise_ps_per_sqrt_s = 0;
  return c;
}

SourceConfig source_at(double rate) {
  SourceConfig s;
  s.pair_rate_hz = rate;
  return s;
}

// RMS of (model - truth) sampled on a uniform grid, evaluating the model at
// the timestamp Bob actually recorded for each grid instant.
double model_rms_vs_truth(const ClockModel& m, const ClockRealization& clk,
                          double duration_s, int n_grid) {
  double sumsq = 0;
  for (int i = 0; i < n_grid; ++i) {
    double t_s = duration_s * (i + 0.5) / n_grid;
    auto t_ps = std::int64_t(t_s * 1e12);
    double truth = clk.eval(t_ps);
    double est = m.eval(t_ps + std::int64_t(std::llround(truth)));
    sumsq += (est - truth) * (est - truth);
  }
  return std::sqrt(sumsq / n_grid);
}

}  // namespace

TEST_CASE("cross_correlate puts a pure translation in the right bin") {
  auto a = uniform_stream(2000, 0, std::int64_t(1e12), Party::alice, 42);
  auto b = shifted(a, 5000, Party::bob);
  auto h = cross_correlate(a, b, 100, 0, 10000);
  REQUIRE(h.counts.size() == 100);
  auto imax = std::size_t(
      std::max_element(h.counts.begin(), h.counts.end()) - h.counts.begin());
  CHECK(imax == 50);  // bin [5000, 5100)
  CHECK(h.counts[imax] == a.size());
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    if (i != imax) CHECK(h.counts[i] < h.counts[imax]);
}

TEST_CASE("cross_correlate matches a brute-force pair count bin by bin") {
  auto a = uniform_stream(300, 0, 2000000, Party::alice, 7);
  auto b = uniform_stream(280, 0, 2000000, Party::bob, 8);
  const std::int64_t bin = 157, lo = -40000, hi = 35000;
  auto h = cross_correlate(a, b, bin, lo, hi);
  auto want = brute_histogram(a, b, bin, lo, hi);
  REQUIRE(h.counts.size() == want.size());
  CHECK(h.lo_ps == lo);
  CHECK(h.bin_width_ps == bin);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(h.counts[i] == want[i]);
}

TEST_CASE("cross_correlate is invariant under joint translation") {
  auto a = uniform_stream(1500, 0, std::int64_t(5e11), Party::alice, 99);
  auto b = uniform_stream(1500, 0, std::int64_t(5e11), Party::bob, 100);
  auto h1 = cross_correlate(a, b, 250, -100000, 100000);
  auto h2 = cross_correlate(shifted(a, 777777, Party::alice),
                            shifted(b, 777777, Party::bob), 250, -100000,
                            100000);
  CHECK(h1.counts == h2.counts);
}

TEST_CASE("find_peak refines with a three-bin centroid") {
  CorrelationHistogram h;
  h.lo_ps = 1000;
  h.bin_width_ps = 10;
  h.counts = {4, 6, 4, 6, 20, 30, 10, 6, 4, 6, 4, 6};
  auto p = find_peak(h);
  // Bin centers: bin i sits at 1000 + 10 i + 5. Max at bin 5.
  double want = (20.0 * 1045 + 30.0 * 1055 + 10.0 * 1065) / 60.0;
  CHECK(p.delay_ps == doctest::Approx(want));
  CHECK(p.peak_bin == 5);
  // Off-peak bins (all but 2..8): {4, 6, 6, 4, 6} -> mean 5.2.
  double mean = 5.2;
  double sd = std::sqrt((2 * (4 - mean) * (4 - mean) +
                         3 * (6 - mean) * (6 - mean)) /
                        5.0);
  CHECK(p.significance == doctest::Approx((30 - mean) / sd));
}

TEST_CASE("find_peak handles maxima at the histogram edge") {
  CorrelationHistogram h;
  h.lo_ps = 0;
  h.bin_width_ps = 100;
  h.counts = {50, 10, 1, 1, 1, 1, 1, 1};
  auto p = find_peak(h);
  double want = (50.0 * 50 + 10.0 * 150) / 60.0;
  CHECK(p.delay_ps == doctest::Approx(want));
}

TEST_CASE("find_peak rejects an empty histogram") {
  CorrelationHistogram h;
  h.lo_ps = 0;
  h.bin_width_ps = 10;
  h.counts.assign(64, 0);
  CHECK_THROWS_AS(find_peak(h), sync_error);
  h.counts.clear();
  CHECK_THROWS_AS(find_peak(h), sync_error);
}

TEST_CASE("wide-window correlation finds a 1e8 ps offset in simulated data") {
  ChannelConfig ch = quiet_channel();
  ch.clock_offset_ps = 100000000;
  ch.jitter_sigma_ps = 100;
  auto res = simulate_session(source_at(5e4), ch, 10.0, 314, false);
  auto h = cross_correlate(res.alice, res.bob, 10000, -200000000, 200000000);
  auto p = find_peak(h);
  CHECK(std::abs(p.delay_ps - 1e8) < 10000);
  CHECK(p.significance > 5.0);
}

TEST_CASE("track_drift on a constant offset returns a flat model") {
  ChannelConfig ch = quiet_channel();
  ch.clock_offset_ps = 4321;
  ch.jitter_sigma_ps = 100;
  auto res = simulate_session(source_at(2e4), ch, 60.0, 21, false);
  auto m = track_drift(res.alice, res.bob);
  REQUIRE(m.knots.size() == 12);
  for (const auto& k : m.knots) {
    CHECK(k.measured);
    CHECK(std::abs(k.offset_ps - 4321.0) < 10.0);
  }
  CHECK(std::abs(m.eval(std::int64_t(30e12)) - 4321.0) < 10.0);
}

TEST_CASE("track_drift recovers a linear drift rate by least squares") {
  ChannelConfig ch = quiet_channel();
  ch.clock_drift_ps_per_s = 30;
  ch.jitter_sigma_ps = 100;
  auto res = simulate_session(source_at(2e4), ch, 100.0, 33, false);
  SyncConfig cfg;
  cfg.block_s = 10.0;
  auto m = track_drift(res.alice, res.bob, cfg);
  REQUIRE(m.knots.size() == 10);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& k : m.knots) {
    sx += k.center_s;
    sy += k.offset_ps;
    sxx += k.center_s * k.center_s;
    sxy += k.center_s * k.offset_ps;
  }
  double n = double(m.knots.size());
  double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(std::abs(slope - 30.0) < 2.0);
}

TEST_CASE("drift plus random walk is tracked to better than 20 ps RMS") {
  ChannelConfig ch = quiet_channel();
  ch.clock_offset_ps = 100000000;
  ch.clock_drift_ps_per_s = 30;
  ch.drift_noise_ps_per_sqrt_s = 5;
  ch.jitter_sigma_ps = 100;
  auto res = simulate_session(source_at(5e4), ch, 120.0, 55, false);
  auto m = track_drift(res.alice, res.bob);
  CHECK(model_rms_vs_truth(m, res.truth.clock, 120.0, 4000) < 20.0);
}

TEST_CASE("drift-free knots scatter within the centroid standard error") {
  ChannelConfig ch = quiet_channel();
  ch.jitter_sigma_ps = 100;
  auto res = simulate_session(source_at(2e4), ch, 60.0, 77, false);
  auto m = track_drift(res.alice, res.bob);
  // ~1e5 coincidences per 5 s block, peak sigma = 100 sqrt(2): the centroid
  // standard error is sigma/sqrt(N); allow a small sub-bin bias on top.
  double se = 100.0 * std::sqrt(2.0) / std::sqrt(1e5);
  for (const auto& k : m.knots) CHECK(std::abs(k.offset_ps) < 3 * se + 5.0);
}

TEST_CASE("apply_model inverts apply_clock on a shared tag list") {
  auto s = uniform_stream(6000, std::int64_t(1e9), std::int64_t(60e12),
                          Party::alice, 5);
  ChannelConfig ch = quiet_channel();
  ch.clock_offset_ps = 5000000;
  ch.clock_drift_ps_per_s = 30;
  Rng rng(1);
  auto bob = apply_clock(s, ch, rng);
  bob.party = Party::bob;
  auto m = track_drift(s, bob);
  auto corrected = apply_model(bob, m);
  corrected.validate();
  REQUIRE(corrected.size() == s.size());
  double sumsq = 0;
  std::int64_t worst = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::int64_t d = corrected.ts[i] - s.ts[i];
    worst = std::max(worst, std::abs(d));
    sumsq += double(d) * double(d);
  }
  // Zero jitter leaves the centroid resolution bin-limited; the inverse is
  // accurate to the fine bin scale, not below it.
  CHECK(worst <= 300);
  CHECK(std::sqrt(sumsq / double(s.size())) < 150.0);
}

TEST_CASE("uncorrelated streams fail synchronization") {
  auto a = uniform_stream(20000, 0, std::int64_t(60e12), Party::alice, 11);
  auto b = uniform_stream(20000, 0, std::int64_t(60e12), Party::bob, 12);
  CHECK_THROWS_AS(track_drift(a, b), sync_error);
}

TEST_CASE("a session shorter than two blocks fails synchronization") {
  ChannelConfig ch = quiet_channel();
  ch.jitter_sigma_ps = 100;
  auto res = simulate_session(source_at(2e4), ch, 3.0, 13, false);
  CHECK_THROWS_AS(track_drift(res.alice, res.bob), sync_error);
}

TEST_CASE("signal dropouts are flagged and bridged by interpolation") {
  ChannelConfig ch = quiet_channel();
  ch.clock_offset_ps = 1000;
  ch.jitter_sigma_ps = 100;
  auto res = simulate_session(source_at(2e4), ch, 50.0, 17, false);
  // Wipe the correlation in [20 s, 30 s): replace Bob's tags there with
  // uniform junk at the same rate, keeping the stream well formed.
  TagStream mangled;
  mangled.party = Party::bob;
  const std::int64_t lo = std::int64_t(20e12), hi = std::int64_t(30e12);
  std::size_t wiped = 0;
  for (std::size_t i = 0; i < res.bob.size(); ++i)
    if (res.bob.ts[i] >= lo && res.bob.ts[i] < hi) wiped++;
  Rng rng(404);
  std::vector<std::int64_t> junk(wiped);
  for (auto& t : junk) t = lo + std::int64_t(rng.below(std::uint64_t(hi - lo)));
  std::sort(junk.begin(), junk.end());
  junk.erase(std::unique(junk.begin(), junk.end()), junk.end());
  std::size_t j = 0;
  for (std::size_t i = 0; i < res.bob.size(); ++i) {
    if (res.bob.ts[i] >= lo && res.bob.ts[i] < hi) {
      if (j < junk.size()) mangled.push_back(junk[j++], Channel::toa_h);
    } else {
      mangled.push_back(res.bob.ts[i], static_cast<Channel>(res.bob.ch[i]));
    }
  }
  auto m = track_drift(res.alice, mangled);
  REQUIRE(m.knots.size() == 10);
  int flagged = 0;
  for (const auto& k : m.knots) {
    if (!k.measured) {
      flagged++;
      CHECK(k.center_s > 19.0);
      CHECK(k.center_s < 31.0);
    }
    // Interpolated knots must still carry the surrounding offset.
    CHECK(std::abs(k.offset_ps - 1000.0) < 50.0);
  }
  CHECK(flagged == 2);
}

TEST_CASE("corrected coincidence peak keeps the two-detector jitter width") {
  ChannelConfig ch = quiet_channel();
  ch.clock_offset_ps = 70000000;
  ch.clock_drift_ps_per_s = 30;
  ch.drift_noise_ps_per_sqrt_s = 3;
  ch.jitter_sigma_ps = 100;
  auto res = simulate_session(source_at(5e4), ch, 60.0, 88, false);
  auto m = track_drift(res.alice, res.bob);
  auto corrected = apply_model(res.bob, m);
  auto h = cross_correlate(res.alice, corrected, 25, -2000, 2000);
  // Accidental floor from the far wings (the peak sits within +/- 600 ps),
  // subtracted before taking moments: the invariant is about peak shape.
  double floor_sum = 0;
  int floor_n = 0;
  double n = 0, s1 = 0, s2 = 0;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    double x = double(h.lo_ps) + (double(i) + 0.5) * double(h.bin_width_ps);
    if (std::abs(x) > 1000) {
      floor_sum += double(h.counts[i]);
      floor_n++;
    }
  }
  double floor = floor_sum / floor_n;
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    double c = std::max(0.0, double(h.counts[i]) - floor);
    double x = double(h.lo_ps) + (double(i) + 0.5) * double(h.bin_width_ps);
    n += c;
    s1 += c * x;
    s2 += c * x * x;
  }
  double mean = s1 / n;
  double sd = std::sqrt(s2 / n - mean * mean);
  CHECK(std::abs(mean) < 20.0);
  CHECK(sd < std::sqrt(100.0 * 100 + 100 * 100 + 20 * 20) + 5.0);
}
