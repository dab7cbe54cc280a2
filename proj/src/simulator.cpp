#include "franson/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "franson/errors.hpp"

namespace franson {

namespace {

constexpr double kGenBlockS = 10.0;
constexpr std::uint32_t kNoPair = std::numeric_limits<std::uint32_t>::max();

std::int64_t to_ps(double t_s) {
  return static_cast<std::int64_t>(std::llround(t_s * 1e12));
}

// Signal event awaiting assembly; pair indexes back into GroundTruth.
struct SigEv {
  std::int64_t ts;
  std::uint32_t pair;
  std::uint8_t ch;
};

// Noise events live in parallel arrays, already time-sorted by construction.
struct NoiseBuf {
  std::vector<std::int64_t> ts;
  std::vector<std::uint8_t> ch;
  std::vector<std::uint8_t> prov;
};

// Poisson noise over all four detectors: background profile plus constant
// dark rate, thinned against the block maximum.
void generate_noise(const RateProfile& bg_hz, double dark_hz, double t0_s,
                    double t1_s, Rng& rng, NoiseBuf& out) {
  double bg_max = bg_hz.defined() ? bg_hz.max_over(t0_s, t1_s) : 0.0;
  double rate_max = 4.0 * (bg_max + dark_hz);
  if (rate_max <= 0) return;
  double t = t0_s;
  while (true) {
    t += rng.exponential(rate_max);
    if (t >= t1_s) return;
    double bg = bg_hz.defined() ? bg_hz.eval(t) : 0.0;
    double rate = 4.0 * (bg + dark_hz);
    if (!rng.bernoulli(rate / rate_max)) continue;
    bool is_bg = rng.bernoulli(bg / (bg + dark_hz));
    out.ts.push_back(to_ps(t));
    out.ch.push_back(static_cast<std::uint8_t>(rng.below(4)));
    out.prov.push_back(static_cast<std::uint8_t>(is_bg ? Provenance::background
                                                       : Provenance::dark));
  }
}

// Within equal-timestamp runs the channel order is arbitrary after random
// generation; restore (timestamp, channel) order and drop exact duplicates
// (1 ps dead time). Runs are almost always length 1, so this is O(n).
void fix_ties(NoiseBuf& b) {
  std::size_t n = b.ts.size();
  std::size_t w = 0;
  std::size_t i = 0;
  std::vector<std::pair<std::uint8_t, std::uint8_t>> run;  // (ch, prov)
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && b.ts[j] == b.ts[i]) ++j;
    if (j == i + 1) {
      b.ts[w] = b.ts[i];
      b.ch[w] = b.ch[i];
      b.prov[w] = b.prov[i];
      ++w;
    } else {
      run.clear();
      for (std::size_t k = i; k < j; ++k) run.emplace_back(b.ch[k], b.prov[k]);
      std::stable_sort(run.begin(), run.end(),
                       [](auto& x, auto& y) { return x.first < y.first; });
      for (std::size_t k = 0; k < run.size(); ++k) {
        if (k > 0 && run[k].first == run[k - 1].first) continue;  // dead time
        b.ts[w] = b.ts[i];
        b.ch[w] = run[k].first;
        b.prov[w] = run[k].second;
        ++w;
      }
    }
    i = j;
  }
  b.ts.resize(w);
  b.ch.resize(w);
  b.prov.resize(w);
}

// Merge sorted signal events with sorted noise into the final stream,
// dropping negative timestamps and resolving (ts, ch) duplicates by keeping
// the earlier-generated tag. Clears the detected flag of signal tags that
// were dropped.
void assemble(Party party, std::vector<SigEv>& sig, NoiseBuf& noise,
              std::vector<PairRecord>* pairs, bool bob_side, TagStream& out,
              std::vector<std::uint8_t>& prov_out) {
  out.party = party;
  std::size_t total = sig.size() + noise.ts.size();
  out.reserve(total);
  prov_out.reserve(total);

  auto drop_sig = [&](const SigEv& e) {
    if (!pairs) return;
    auto& p = (*pairs)[e.pair];
    (bob_side ? p.detected_b : p.detected_a) = false;
  };
  auto push = [&](std::int64_t ts, std::uint8_t ch, std::uint8_t prov,
                  const SigEv* se) {
    if (ts < 0) {
      if (se) drop_sig(*se);
      return;
    }
    if (!out.ts.empty() && out.ts.back() == ts && out.ch.back() == ch) {
      if (se) drop_sig(*se);
      return;
    }
    out.ts.push_back(ts);
    out.ch.push_back(ch);
    prov_out.push_back(prov);
  };

  const auto sig_prov = static_cast<std::uint8_t>(Provenance::signal);
  std::size_t i = 0, j = 0;
  while (i < sig.size() || j < noise.ts.size()) {
    bool take_sig;
    if (i >= sig.size()) take_sig = false;
    else if (j >= noise.ts.size()) take_sig = true;
    else {
      auto st = sig[i].ts, nt = noise.ts[j];
      take_sig = st < nt || (st == nt && sig[i].ch <= noise.ch[j]);
    }
    if (take_sig) {
      push(sig[i].ts, sig[i].ch, sig_prov, &sig[i]);
      ++i;
    } else {
      push(noise.ts[j], noise.ch[j], noise.prov[j], nullptr);
      ++j;
    }
  }
}

}  // namespace

double ClockRealization::eval(std::int64_t t_ps) const {
  double t_s = static_cast<double>(t_ps) * 1e-12;
  double v = offset_ps + drift_ps_per_s * t_s;
  if (rw_ps.size() > 1) {
    double x = t_s / rw_step_s;
    if (x <= 0) {
      v += rw_ps.front();
    } else if (x >= static_cast<double>(rw_ps.size() - 1)) {
      v += rw_ps.back();
    } else {
      auto k = static_cast<std::size_t>(x);
      double f = x - static_cast<double>(k);
      v += rw_ps[k] + f * (rw_ps[k + 1] - rw_ps[k]);
    }
  }
  return v;
}

std::int64_t ClockRealization::apply(std::int64_t t_ps) const {
  return t_ps + static_cast<std::int64_t>(std::llround(eval(t_ps)));
}

ClockRealization make_clock_realization(const ChannelConfig& channel,
                                        double duration_s, Rng& rng) {
  ClockRealization clk;
  clk.offset_ps = channel.clock_offset_ps;
  clk.drift_ps_per_s = channel.clock_drift_ps_per_s;
  clk.rw_step_s = 1.0;
  clk.rw_ps = {0.0};
  double noise = channel.drift_noise_ps_per_sqrt_s;
  if (noise > 0) {
    auto steps = static_cast<std::size_t>(std::ceil(duration_s / clk.rw_step_s)) + 2;
    clk.rw_ps.reserve(steps + 1);
    double sigma = noise * std::sqrt(clk.rw_step_s);
    for (std::size_t k = 0; k < steps; ++k)
      clk.rw_ps.push_back(clk.rw_ps.back() + rng.gaussian(0.0, sigma));
  }
  return clk;
}

PairOutcome sample_pair_outcome(Basis basis_a, Basis basis_b,
                                const SourceConfig& source,
                                std::int64_t creation_ps, Rng& rng) {
  PairOutcome out;
  out.time_a_ps = creation_ps;
  out.time_b_ps = creation_ps;
  if (basis_a == Basis::toa && basis_b == Basis::toa) {
    bool match = rng.bernoulli(source.toa_visibility);
    bool a_h = rng.below(2) == 0;
    out.channel_a = a_h ? Channel::toa_h : Channel::toa_v;
    bool b_h = match ? a_h : !a_h;
    out.channel_b = b_h ? Channel::toa_h : Channel::toa_v;
  } else if (basis_a == Basis::tsup && basis_b == Basis::tsup) {
    double p_match =
        0.5 * (1.0 + source.tsup_visibility * std::cos(source.phase_rad));
    bool match = rng.bernoulli(p_match);
    bool a_plus = rng.below(2) == 0;
    bool b_plus = match ? a_plus : !a_plus;
    out.channel_a = a_plus ? Channel::tsup_plus : Channel::tsup_minus;
    out.channel_b = b_plus ? Channel::tsup_plus : Channel::tsup_minus;
  } else {
    auto draw = [&rng](Basis basis) {
      if (basis == Basis::toa)
        return rng.below(2) == 0 ? Channel::toa_h : Channel::toa_v;
      return rng.below(2) == 0 ? Channel::tsup_plus : Channel::tsup_minus;
    };
    out.channel_a = draw(basis_a);
    out.channel_b = draw(basis_b);
  }
  return out;
}

TagStream generate_background(const RateProfile& per_detector_hz, Party party,
                              double duration_s, Rng& rng) {
  NoiseBuf buf;
  double t0 = 0;
  while (t0 < duration_s) {
    double t1 = std::min(duration_s, t0 + kGenBlockS);
    generate_noise(per_detector_hz, 0.0, t0, t1, rng, buf);
    t0 = t1;
  }
  fix_ties(buf);
  TagStream s;
  s.party = party;
  s.ts = std::move(buf.ts);
  s.ch = std::move(buf.ch);
  return s;
}

void transform_timestamps(TagStream& stream, const ClockRealization& clock) {
  std::size_t n = stream.size();
  for (std::size_t i = 0; i < n; ++i) stream.ts[i] = clock.apply(stream.ts[i]);
  // The transform is monotone (clock rates are parts in 1e11), so order can
  // only break inside integer rounding ties.
  restore_stream_order(stream);
}

TagStream apply_clock(const TagStream& stream, const ChannelConfig& channel,
                      Rng& rng) {
  double dur_s =
      stream.empty() ? 1.0 : static_cast<double>(stream.ts.back()) * 1e-12 + 1.0;
  ClockRealization clk = make_clock_realization(channel, dur_s, rng);
  TagStream out = stream;
  transform_timestamps(out, clk);
  return out;
}

SimResult simulate_session(const SourceConfig& source,
                           const ChannelConfig& channel, double duration_s,
                           std::uint64_t seed, bool record_pairs) {
  if (!(duration_s > 0)) throw config_error("simulate_session: duration must be > 0");

  SimResult res;
  auto n_blocks = static_cast<std::uint64_t>(std::ceil(duration_s / kGenBlockS));

  Rng clock_rng(derive_seed(seed, "clock"));
  res.truth.clock = make_clock_realization(channel, duration_s, clock_rng);

  const double eta_a = std::pow(10.0, -channel.loss_alice_db / 10.0);
  const double sigma = channel.jitter_sigma_ps;

  std::vector<SigEv> sig_a, sig_b;
  std::vector<PairRecord> pairs;
  std::uint32_t pair_idx = 0;
  for (std::uint64_t b = 0; b < n_blocks; ++b) {
    double t0 = static_cast<double>(b) * kGenBlockS;
    double t1 = std::min(duration_s, t0 + kGenBlockS);
    Rng rng(derive_seed(seed, "pairs", b));
    double t = t0;
    while (true) {
      t += rng.exponential(source.pair_rate_hz);
      if (t >= t1) break;
      std::int64_t creation = to_ps(t);
      Basis ba = rng.bernoulli(0.5) ? Basis::tsup : Basis::toa;
      Basis bb = rng.bernoulli(0.5) ? Basis::tsup : Basis::toa;
      PairOutcome outcome = sample_pair_outcome(ba, bb, source, creation, rng);
      bool det_a = rng.bernoulli(eta_a);
      double eta_b = std::pow(10.0, -channel.loss_bob_db_at(t) / 10.0);
      bool det_b = rng.bernoulli(eta_b);
      std::int64_t ts_a = outcome.time_a_ps;
      std::int64_t ts_b = outcome.time_b_ps;
      if (det_a && sigma > 0)
        ts_a += static_cast<std::int64_t>(std::llround(rng.gaussian(0.0, sigma)));
      if (det_b && sigma > 0)
        ts_b += static_cast<std::int64_t>(std::llround(rng.gaussian(0.0, sigma)));
      if (det_a)
        sig_a.push_back({ts_a, pair_idx, static_cast<std::uint8_t>(outcome.channel_a)});
      if (det_b)
        sig_b.push_back({ts_b, pair_idx, static_cast<std::uint8_t>(outcome.channel_b)});
      if (record_pairs)
        pairs.push_back({creation, ba, bb, outcome.channel_a, outcome.channel_b,
                         det_a, det_b});
      ++pair_idx;
    }
  }

  // Bob's tagger stamps everything with his clock, noise included.
  for (auto& e : sig_b) e.ts = res.truth.clock.apply(e.ts);

  NoiseBuf noise_a, noise_b;
  for (std::uint64_t b = 0; b < n_blocks; ++b) {
    double t0 = static_cast<double>(b) * kGenBlockS;
    double t1 = std::min(duration_s, t0 + kGenBlockS);
    Rng rng(derive_seed(seed, "noise.alice", b));
    generate_noise(channel.background_alice_hz, channel.dark_rate_hz, t0, t1,
                   rng, noise_a);
  }
  for (std::uint64_t b = 0; b < n_blocks; ++b) {
    double t0 = static_cast<double>(b) * kGenBlockS;
    double t1 = std::min(duration_s, t0 + kGenBlockS);
    Rng rng(derive_seed(seed, "noise.bob", b));
    std::size_t first = noise_b.ts.size();
    generate_noise(channel.background_bob_hz, channel.dark_rate_hz, t0, t1,
                   rng, noise_b);
    for (std::size_t k = first; k < noise_b.ts.size(); ++k)
      noise_b.ts[k] = res.truth.clock.apply(noise_b.ts[k]);
  }
  fix_ties(noise_a);
  fix_ties(noise_b);

  // Jitter can locally reorder signal events; noise is sorted already.
  auto by_ts_ch = [](const SigEv& x, const SigEv& y) {
    if (x.ts != y.ts) return x.ts < y.ts;
    if (x.ch != y.ch) return x.ch < y.ch;
    return x.pair < y.pair;
  };
  std::sort(sig_a.begin(), sig_a.end(), by_ts_ch);
  std::sort(sig_b.begin(), sig_b.end(), by_ts_ch);

  std::vector<PairRecord>* precs = record_pairs ? &pairs : nullptr;
  assemble(Party::alice, sig_a, noise_a, precs, false, res.alice,
           res.truth.prov_alice);
  assemble(Party::bob, sig_b, noise_b, precs, true, res.bob,
           res.truth.prov_bob);
  res.truth.pairs = std::move(pairs);
  return res;
}

}  // namespace franson
