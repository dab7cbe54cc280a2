#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "franson/rng.hpp"
#include "franson/simulator.hpp"

using namespace franson;

namespace {

// Quiet channel: no loss, no noise, no jitter, ideal clock.
ChannelConfig clean_channel() {
  ChannelConfig c;
  c.loss_alice_db = 0;
  c.loss_bob_db = 0;
  c.jitter_sigma_ps = 0;
  c.dark_rate_hz = 0;
  c.clock_offset_ps = 0;
  c.clock_drift_ps_per_s = 0;
  c.drift_noise_ps_per_sqrt_s = 0;
  return c;
}

SourceConfig perfect_source(double rate) {
  SourceConfig s;
  s.pair_rate_hz = rate;
  s.tsup_visibility = 1.0;
  s.toa_visibility = 1.0;
  s.phase_rad = 0.0;
  return s;
}

}  // namespace

TEST_CASE("simulation is deterministic and independent of pair recording") {
  SourceConfig src = perfect_source(5000);
  src.tsup_visibility = 0.9;
  ChannelConfig ch = clean_channel();
  ch.loss_bob_db = 3;
  ch.jitter_sigma_ps = 120;
  ch.dark_rate_hz = 500;
  ch.background_bob_hz = RateProfile::constant(2e4);
  ch.clock_offset_ps = 12345;
  ch.clock_drift_ps_per_s = 30;
  ch.drift_noise_ps_per_sqrt_s = 5;

  auto r1 = simulate_session(src, ch, 5.0, 77);
  auto r2 = simulate_session(src, ch, 5.0, 77);
  CHECK(r1.alice == r2.alice);
  CHECK(r1.bob == r2.bob);
  CHECK(r1.truth.pairs.size() == r2.truth.pairs.size());

  auto r3 = simulate_session(src, ch, 5.0, 77, /*record_pairs=*/false);
  CHECK(r3.alice == r1.alice);
  CHECK(r3.bob == r1.bob);
  CHECK(r3.truth.pairs.empty());

  auto r4 = simulate_session(src, ch, 5.0, 78);
  CHECK(r4.alice.ts != r1.alice.ts);

  r1.alice.validate();
  r1.bob.validate();
  CHECK(r1.truth.prov_alice.size() == r1.alice.size());
  CHECK(r1.truth.prov_bob.size() == r1.bob.size());
}

TEST_CASE("pair count follows the Poisson law of the configured rate") {
  auto res = simulate_session(perfect_source(2000), clean_channel(), 50.0, 11);
  double lambda = 2000 * 50.0;
  CHECK(std::abs(double(res.truth.pairs.size()) - lambda) <
        3.0 * std::sqrt(lambda));
  // Clean channel: every pair shows up exactly once on each side.
  CHECK(res.alice.size() == res.truth.pairs.size());
  CHECK(res.bob.size() == res.truth.pairs.size());
}

TEST_CASE("near-zero pair rate leaves only configured noise") {
  SourceConfig src = perfect_source(1e-9);
  ChannelConfig ch = clean_channel();
  ch.dark_rate_hz = 1000;
  auto res = simulate_session(src, ch, 10.0, 5);
  CHECK(res.truth.pairs.empty());
  // 4 detectors * 1 kHz * 10 s per party, Poisson 3 sigma.
  double lambda = 4 * 1000 * 10.0;
  CHECK(std::abs(double(res.alice.size()) - lambda) < 3 * std::sqrt(lambda));
  CHECK(std::abs(double(res.bob.size()) - lambda) < 3 * std::sqrt(lambda));
  for (auto p : res.truth.prov_alice)
    CHECK(p == static_cast<std::uint8_t>(Provenance::dark));
}

TEST_CASE("perfect chain gives matched outcomes for every matched-basis pair") {
  auto res = simulate_session(perfect_source(1000), clean_channel(), 100.0, 23);
  REQUIRE(!res.truth.pairs.empty());
  for (const auto& p : res.truth.pairs) {
    CHECK(p.detected_a);
    CHECK(p.detected_b);
    if (p.basis_a == p.basis_b) CHECK(p.channel_a == p.channel_b);
    if (p.basis_a == Basis::toa) CHECK(is_toa(p.channel_a));
    if (p.basis_a == Basis::tsup) CHECK(is_tsup(p.channel_a));
    if (p.basis_b == Basis::toa) CHECK(is_toa(p.channel_b));
    if (p.basis_b == Basis::tsup) CHECK(is_tsup(p.channel_b));
  }
}

TEST_CASE("sample_pair_outcome reproduces the joint port statistics") {
  SourceConfig src;
  const int n = 40000;
  for (double v : {0.0, 0.5, 0.9, 1.0}) {
    for (double phi : {0.0, 1.5707963267948966, 3.141592653589793}) {
      src.tsup_visibility = v;
      src.phase_rad = phi;
      Rng rng(derive_seed(99, "grid", std::uint64_t(v * 10),
                          std::uint64_t(phi * 2)));
      int match = 0, pp = 0;
      for (int i = 0; i < n; ++i) {
        auto out = sample_pair_outcome(Basis::tsup, Basis::tsup, src, 0, rng);
        bool a_plus = out.channel_a == Channel::tsup_plus;
        bool b_plus = out.channel_b == Channel::tsup_plus;
        match += (a_plus == b_plus);
        pp += (a_plus && b_plus);
      }
      double want = 0.5 * (1.0 + v * std::cos(phi));
      double se = std::sqrt(want * (1 - want) / n + 1e-12);
      CHECK(std::abs(double(match) / n - want) < 3 * se + 1e-9);
      // P(++) is half the match probability.
      double se_pp = std::sqrt(want / 2 * (1 - want / 2) / n + 1e-12);
      CHECK(std::abs(double(pp) / n - want / 2) < 3 * se_pp + 1e-9);
    }
  }
}

TEST_CASE("sample_pair_outcome polarization match tracks toa_visibility") {
  SourceConfig src;
  src.toa_visibility = 0.7;
  Rng rng(4242);
  const int n = 40000;
  int match = 0;
  for (int i = 0; i < n; ++i) {
    auto out = sample_pair_outcome(Basis::toa, Basis::toa, src, 17, rng);
    CHECK(out.time_a_ps == 17);
    CHECK(out.time_b_ps == 17);
    match += (out.channel_a == out.channel_b);
  }
  double se = std::sqrt(0.7 * 0.3 / n);
  CHECK(std::abs(double(match) / n - 0.7) < 3 * se);
}

TEST_CASE("mixed bases give independent fair outcomes") {
  SourceConfig src;
  Rng rng(31);
  const int n = 40000;
  int toa_h = 0, plus = 0;
  for (int i = 0; i < n; ++i) {
    auto out = sample_pair_outcome(Basis::toa, Basis::tsup, src, 0, rng);
    CHECK(is_toa(out.channel_a));
    CHECK(is_tsup(out.channel_b));
    toa_h += (out.channel_a == Channel::toa_h);
    plus += (out.channel_b == Channel::tsup_plus);
  }
  double se = std::sqrt(0.25 / n);
  CHECK(std::abs(double(toa_h) / n - 0.5) < 3 * se);
  CHECK(std::abs(double(plus) / n - 0.5) < 3 * se);
}

TEST_CASE("coincidence probability scales as the summed dB loss") {
  const double rate = 10000, dur = 30;
  for (auto [la, lb] : std::vector<std::pair<double, double>>{
           {0.0, 0.0}, {3.0, 7.0}, {10.0, 10.0}}) {
    ChannelConfig ch = clean_channel();
    ch.loss_alice_db = la;
    ch.loss_bob_db = lb;
    auto res = simulate_session(perfect_source(rate), ch, dur, 301);
    std::int64_t both = 0;
    for (const auto& p : res.truth.pairs) both += (p.detected_a && p.detected_b);
    double want = std::pow(10.0, -(la + lb) / 10.0);
    double got = double(both) / double(res.truth.pairs.size());
    CHECK(got == doctest::Approx(want).epsilon(0.05));
  }
}

TEST_CASE("25 dB on one arm leaves the advertised coincidence fraction") {
  ChannelConfig ch = clean_channel();
  ch.loss_bob_db = 25;
  auto res = simulate_session(perfect_source(20000), ch, 30.0, 57);
  std::int64_t both = 0;
  for (const auto& p : res.truth.pairs) both += (p.detected_a && p.detected_b);
  double n = double(res.truth.pairs.size());
  double want = std::pow(10.0, -2.5);
  double se = std::sqrt(want * (1 - want) / n);
  CHECK(std::abs(double(both) / n - want) < 3 * se);
}

TEST_CASE("background generator: constant profile, Poisson count, flat channels") {
  Rng rng(8080);
  auto s = generate_background(RateProfile::constant(1e4), Party::bob, 1.0, rng);
  s.validate();
  double lambda = 4 * 1e4 * 1.0;
  CHECK(std::abs(double(s.size()) - lambda) < 3 * std::sqrt(lambda));
  std::int64_t per_ch[4] = {0, 0, 0, 0};
  for (auto c : s.ch) per_ch[c]++;
  for (int c = 0; c < 4; ++c) {
    double expect = double(s.size()) / 4;
    CHECK(std::abs(double(per_ch[c]) - expect) <
          3 * std::sqrt(expect * 0.75) + 1);
  }
}

TEST_CASE("background generator follows a linear ramp (1:3 half split)") {
  Rng rng(909);
  const double dur = 20.0;
  auto s = generate_background(RateProfile{{{0.0, 0.0}, {dur, 5e4}}},
                               Party::bob, dur, rng);
  double n = double(s.size());
  // Integral of the ramp: 4ch * 5e4 * 20 / 2 = 2e6 expected tags.
  CHECK(std::abs(n - 2e6) < 3 * std::sqrt(2e6));
  auto half = std::lower_bound(s.ts.begin(), s.ts.end(),
                               std::int64_t(dur / 2 * 1e12)) -
              s.ts.begin();
  // First half carries 1/4 of the mass of the full triangle.
  double p = 0.25;
  double se = std::sqrt(n * p * (1 - p));
  CHECK(std::abs(double(half) - n * p) < 3 * se);
}

TEST_CASE("empty and zero profiles generate nothing") {
  Rng rng(1);
  CHECK(generate_background(RateProfile{}, Party::alice, 5.0, rng).empty());
  CHECK(generate_background(RateProfile::constant(0), Party::alice, 5.0, rng)
            .empty());
}

TEST_CASE("clock transform applies offset plus drift exactly") {
  ClockRealization clk;
  clk.offset_ps = 1000;
  clk.drift_ps_per_s = 1e6;  // 1 us per s: easy to verify by hand
  TagStream s;
  s.push_back(0, Channel::toa_h);
  s.push_back(500000000000LL, Channel::toa_h);  // 0.5 s
  s.push_back(1000000000000LL, Channel::toa_v); // 1 s
  transform_timestamps(s, clk);
  REQUIRE(s.size() == 3);
  CHECK(s.ts[0] == 1000);
  CHECK(s.ts[1] == 500000000000LL + 1000 + 500000);
  CHECK(s.ts[2] == 1000000000000LL + 1000 + 1000000);

  ClockRealization neg;
  neg.offset_ps = -100;
  TagStream t;
  t.push_back(40, Channel::toa_h);   // pushed below zero: dropped
  t.push_back(200, Channel::toa_h);
  transform_timestamps(t, neg);
  REQUIRE(t.size() == 1);
  CHECK(t.ts[0] == 100);
}

TEST_CASE("clock random walk realization has sqrt-t scale increments") {
  ChannelConfig ch = clean_channel();
  ch.drift_noise_ps_per_sqrt_s = 5;
  Rng rng(606);
  auto clk = make_clock_realization(ch, 2000.0, rng);
  REQUIRE(clk.rw_ps.size() >= 2000);
  CHECK(clk.rw_ps[0] == 0.0);
  double sumsq = 0;
  std::size_t n = 2000;
  for (std::size_t i = 1; i <= n; ++i) {
    double d = clk.rw_ps[i] - clk.rw_ps[i - 1];
    sumsq += d * d;
  }
  double var = sumsq / double(n);  // want rw^2 * step = 25
  CHECK(std::abs(var - 25.0) < 3.0 * 25.0 * std::sqrt(2.0 / double(n)));

  // Interpolation between grid samples is linear.
  double mid = clk.eval(std::int64_t(0.5 * clk.rw_step_s * 1e12));
  CHECK(mid == doctest::Approx(0.5 * (clk.rw_ps[0] + clk.rw_ps[1])));
}

TEST_CASE("two-photon time spread matches the configured jitter") {
  SourceConfig src = perfect_source(2000);
  ChannelConfig ch = clean_channel();
  ch.jitter_sigma_ps = 100;
  auto res = simulate_session(src, ch, 10.0, 99);
  // Pair creations are ~5e8 ps apart, jitter is 100 ps: nearest-neighbor
  // matching across streams recovers the per-pair time differences.
  REQUIRE(res.alice.size() == res.bob.size());
  double sum = 0, sumsq = 0;
  std::size_t n = res.alice.size();
  for (std::size_t i = 0; i < n; ++i) {
    double d = double(res.bob.ts[i] - res.alice.ts[i]);
    sum += d;
    sumsq += d * d;
  }
  double mean = sum / double(n);
  double sd = std::sqrt(sumsq / double(n) - mean * mean);
  double want = 100 * std::sqrt(2.0);
  CHECK(std::abs(mean) < 3 * want / std::sqrt(double(n)));
  CHECK(sd == doctest::Approx(want).epsilon(0.05));
}

TEST_CASE("bob-heavy background shows up only on bob with right provenance") {
  SourceConfig src = perfect_source(100);
  ChannelConfig ch = clean_channel();
  ch.background_bob_hz = RateProfile::constant(5000);
  ch.dark_rate_hz = 50;
  auto res = simulate_session(src, ch, 10.0, 12);
  std::int64_t bg_a = 0, bg_b = 0, dark_b = 0, sig_b = 0;
  for (auto p : res.truth.prov_alice)
    bg_a += (p == static_cast<std::uint8_t>(Provenance::background));
  for (auto p : res.truth.prov_bob) {
    bg_b += (p == static_cast<std::uint8_t>(Provenance::background));
    dark_b += (p == static_cast<std::uint8_t>(Provenance::dark));
    sig_b += (p == static_cast<std::uint8_t>(Provenance::signal));
  }
  CHECK(bg_a == 0);
  double lam_bg = 4 * 5000 * 10.0, lam_dark = 4 * 50 * 10.0;
  CHECK(std::abs(double(bg_b) - lam_bg) < 3 * std::sqrt(lam_bg));
  CHECK(std::abs(double(dark_b) - lam_dark) < 3 * std::sqrt(lam_dark) + 3);
  CHECK(std::abs(double(sig_b) - 1000) < 3 * std::sqrt(1000.0));
}

TEST_CASE("time-varying bob loss thins the late part of the session") {
  SourceConfig src = perfect_source(20000);
  ChannelConfig ch = clean_channel();
  // 0 dB for the first 10 s, 20 dB for the last 10 s, sharp step.
  ch.loss_bob_profile_db = RateProfile{{{9.999, 0.0}, {10.0, 20.0}}};
  auto res = simulate_session(src, ch, 20.0, 404);
  std::int64_t early = 0, late = 0, early_det = 0, late_det = 0;
  for (const auto& p : res.truth.pairs) {
    bool is_late = p.creation_ps >= std::int64_t(10e12);
    (is_late ? late : early)++;
    if (p.detected_b) (is_late ? late_det : early_det)++;
  }
  double p_early = double(early_det) / double(early);
  double p_late = double(late_det) / double(late);
  CHECK(p_early == doctest::Approx(1.0).epsilon(0.01));
  CHECK(p_late == doctest::Approx(0.01).epsilon(0.15));
}
