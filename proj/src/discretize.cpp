#include "franson/discretize.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "franson/errors.hpp"

namespace franson {

namespace {

std::size_t lower_index(const TagStream& s, std::int64_t t) {
  return std::size_t(std::lower_bound(s.ts.begin(), s.ts.end(), t) -
                     s.ts.begin());
}

// One party's clicks inside one frame. Any superposition click whose bin
// lacks room for its +k partner voids the frame for that party, other
// clicks included; see the header for why the survivors cannot be kept.
PartyFrame classify_party(const TagStream& s, std::size_t first,
                          std::size_t last, std::int64_t frame_start,
                          const DiscretizationConfig& cfg, bool keep_clicks) {
  PartyFrame out;
  for (std::size_t i = first; i < last; ++i) {
    auto ch = static_cast<Channel>(s.ch[i]);
    if (is_tsup(ch) &&
        (s.ts[i] - frame_start) / cfg.bin_len_ps >= cfg.d - cfg.k)
      return out;
  }
  const std::size_t n = last - first;
  if (n == 0) return out;
  if (n == 1) {
    auto ch = static_cast<Channel>(s.ch[first]);
    out.bin = int((s.ts[first] - frame_start) / cfg.bin_len_ps);
    if (is_toa(ch)) {
      out.kind = FrameKind::single_toa;
    } else {
      out.kind = FrameKind::single_tsup;
      out.sign = tsup_sign(ch);
    }
    return out;
  }
  out.kind = FrameKind::multi;
  if (keep_clicks) {
    out.clicks.reserve(n);
    for (std::size_t i = first; i < last; ++i)
      out.clicks.push_back({s.ts[i], static_cast<Channel>(s.ch[i])});
  }
  return out;
}

// Walk the frames of [t0, t1) that contain at least one tag, in order,
// handing each frame's click ranges to fn(frame_start, a_first, a_last,
// b_first, b_last). Returns the number of frames visited; the grid holds
// ceil((t1 - t0) / frame_len) frames and the remainder are empty.
template <class Fn>
std::int64_t walk_active_frames(const TagStream& a, const TagStream& b,
                                const DiscretizationConfig& cfg,
                                std::int64_t t0, std::int64_t t1, Fn&& fn) {
  const std::int64_t F = cfg.frame_len_ps;
  const std::int64_t g0 = t0 + cfg.grid_phase_ps;
  std::size_t ia = lower_index(a, g0), a_end = lower_index(a, t1);
  std::size_t ib = lower_index(b, g0), b_end = lower_index(b, t1);
  std::int64_t visited = 0;
  while (ia < a_end || ib < b_end) {
    const std::int64_t na = ia < a_end
                                ? (a.ts[ia] - g0) / F
                                : std::numeric_limits<std::int64_t>::max();
    const std::int64_t nb = ib < b_end
                                ? (b.ts[ib] - g0) / F
                                : std::numeric_limits<std::int64_t>::max();
    const std::int64_t n = std::min(na, nb);
    const std::int64_t fs = g0 + n * F;
    const std::int64_t fe = fs + F;
    const std::size_t a_first = ia;
    while (ia < a_end && a.ts[ia] < fe) ++ia;
    const std::size_t b_first = ib;
    while (ib < b_end && b.ts[ib] < fe) ++ib;
    fn(fs, a_first, ia, b_first, ib);
    ++visited;
  }
  return visited;
}

void init_matrices(CorrelationMatrices& m, const DiscretizationConfig& cfg) {
  m.cfg = cfg;
  m.m_toa = CountMatrix(cfg.d);
  m.m_tsup_pp = CountMatrix(cfg.d);
  m.m_tsup_pm = CountMatrix(cfg.d);
  m.m_tsup_mp = CountMatrix(cfg.d);
  m.m_tsup_mm = CountMatrix(cfg.d);
}

// Census one frame and, for matched bases, credit the coincidence. Multi
// sides are resolved here, Alice's draw strictly before Bob's, so the rng
// consumption order is identical however the frames were produced.
void tally(CorrelationMatrices& m, const PartyFrame& fa, const PartyFrame& fb,
           const DiscretizationConfig& cfg, Rng& rng) {
  auto& st = m.frame_stats;
  const bool a_has = fa.kind != FrameKind::empty;
  const bool b_has = fb.kind != FrameKind::empty;
  if (!a_has && !b_has) {
    st.empty++;
    return;
  }
  if (a_has != b_has) {
    st.single_sided++;
    return;
  }
  const bool any_multi =
      fa.kind == FrameKind::multi || fb.kind == FrameKind::multi;
  FrameKind ka = fa.kind;
  int bin_a = fa.bin, sign_a = fa.sign;
  if (ka == FrameKind::multi) {
    auto r = fair_sampling_assign(fa, cfg, rng);
    ka = r.kind;
    bin_a = r.bin;
    sign_a = r.sign;
  }
  FrameKind kb = fb.kind;
  int bin_b = fb.bin, sign_b = fb.sign;
  if (kb == FrameKind::multi) {
    auto r = fair_sampling_assign(fb, cfg, rng);
    kb = r.kind;
    bin_b = r.bin;
    sign_b = r.sign;
  }
  if (any_multi)
    st.multi_resolved++;
  else if (ka == kb)
    st.valid++;
  else
    st.mixed_basis++;
  if (ka != kb) return;
  if (ka == FrameKind::single_toa) {
    m.m_toa.at(bin_a, bin_b)++;
  } else {
    auto& mat = sign_a > 0 ? (sign_b > 0 ? m.m_tsup_pp : m.m_tsup_pm)
                           : (sign_b > 0 ? m.m_tsup_mp : m.m_tsup_mm);
    mat.at(bin_a, bin_b)++;
  }
}

void check_block(std::int64_t t0, std::int64_t t1) {
  if (t1 < t0)
    throw config_error("block end " + std::to_string(t1) +
                       " ps precedes block start " + std::to_string(t0) +
                       " ps");
}

}  // namespace

DiscretizationConfig DiscretizationConfig::for_dimension(
    int d, std::int64_t tau_mzi_ps, std::int64_t grid_phase_ps) {
  if (d < 2)
    throw config_error("dimension must be at least 2, got " +
                       std::to_string(d));
  if (d % 2 != 0)
    throw config_error(
        "dimension must be even so the interferometer delay spans a whole "
        "number of bins, got " +
        std::to_string(d));
  if (tau_mzi_ps < 1)
    throw config_error("interferometer delay must be positive, got " +
                       std::to_string(tau_mzi_ps) + " ps");
  const std::int64_t frame = 2 * tau_mzi_ps;
  if (frame % d != 0)
    throw config_error("frame of " + std::to_string(frame) +
                       " ps does not split into " + std::to_string(d) +
                       " equal picosecond bins");
  DiscretizationConfig cfg;
  cfg.tau_mzi_ps = tau_mzi_ps;
  cfg.frame_len_ps = frame;
  cfg.bin_len_ps = frame / d;
  cfg.d = d;
  cfg.k = d / 2;
  cfg.grid_phase_ps = grid_phase_ps;
  cfg.validate();
  return cfg;
}

void DiscretizationConfig::validate() const {
  if (d < 2)
    throw config_error("dimension must be at least 2, got " +
                       std::to_string(d));
  if (bin_len_ps < 1)
    throw config_error("bin length must be positive, got " +
                       std::to_string(bin_len_ps) + " ps");
  if (frame_len_ps != std::int64_t(d) * bin_len_ps)
    throw config_error("frame length " + std::to_string(frame_len_ps) +
                       " ps must equal d * bin length = " +
                       std::to_string(std::int64_t(d) * bin_len_ps) + " ps");
  if (k < 1 || k > d - 1)
    throw config_error("interferometer delay of " + std::to_string(k) +
                       " bins must lie in [1, d-1]");
  if (std::int64_t(k) * bin_len_ps != tau_mzi_ps)
    throw config_error("interferometer delay " + std::to_string(tau_mzi_ps) +
                       " ps is not k = " + std::to_string(k) +
                       " bins of " + std::to_string(bin_len_ps) + " ps");
  if (grid_phase_ps < 0 || grid_phase_ps >= frame_len_ps)
    throw config_error("grid phase " + std::to_string(grid_phase_ps) +
                       " ps must lie in [0, frame)");
}

std::int64_t CountMatrix::total() const {
  return std::accumulate(v.begin(), v.end(), std::int64_t(0));
}

std::int64_t CorrelationMatrices::matrix_mass() const {
  return m_toa.total() + m_tsup_pp.total() + m_tsup_pm.total() +
         m_tsup_mp.total() + m_tsup_mm.total();
}

std::vector<FrameOutcome> classify_frames(const TagStream& a,
                                          const TagStream& b,
                                          const DiscretizationConfig& cfg,
                                          std::int64_t t0_ps,
                                          std::int64_t t1_ps) {
  cfg.validate();
  check_block(t0_ps, t1_ps);
  const std::int64_t F = cfg.frame_len_ps;
  const std::int64_t n_frames = (t1_ps - t0_ps + F - 1) / F;
  std::vector<FrameOutcome> out;
  out.reserve(std::size_t(n_frames));
  for (std::int64_t n = 0; n < n_frames; ++n) {
    out.emplace_back();
    out.back().frame_index = n;
  }
  walk_active_frames(a, b, cfg, t0_ps, t1_ps,
                     [&](std::int64_t fs, std::size_t a0, std::size_t a1,
                         std::size_t b0, std::size_t b1) {
                       const std::int64_t n =
                           (fs - t0_ps - cfg.grid_phase_ps) / F;
                       auto& f = out[std::size_t(n)];
                       f.alice = classify_party(a, a0, a1, fs, cfg, true);
                       f.bob = classify_party(b, b0, b1, fs, cfg, true);
                     });
  return out;
}

PartyFrame fair_sampling_assign(const PartyFrame&,
                                const DiscretizationConfig& cfg, Rng& rng) {
  PartyFrame out;
  if (rng.below(2) == 0) {
    out.kind = FrameKind::single_toa;
    out.bin = int(rng.below(std::uint64_t(cfg.d)));
  } else {
    out.kind = FrameKind::single_tsup;
    out.bin = int(rng.below(std::uint64_t(cfg.d - cfg.k)));
    out.sign = rng.below(2) == 0 ? +1 : -1;
  }
  return out;
}

CorrelationMatrices accumulate(const std::vector<FrameOutcome>& frames,
                               const DiscretizationConfig& cfg,
                               double integration_s, Rng& rng) {
  cfg.validate();
  CorrelationMatrices m;
  init_matrices(m, cfg);
  m.integration_s = integration_s;
  m.frame_stats.total = std::int64_t(frames.size());
  for (const auto& f : frames) tally(m, f.alice, f.bob, cfg, rng);
  return m;
}

CorrelationMatrices discretize_block(const TagStream& a, const TagStream& b,
                                     const DiscretizationConfig& cfg,
                                     std::int64_t t0_ps, std::int64_t t1_ps,
                                     Rng& rng) {
  cfg.validate();
  check_block(t0_ps, t1_ps);
  CorrelationMatrices m;
  init_matrices(m, cfg);
  m.integration_s = double(t1_ps - t0_ps) * 1e-12;
  const std::int64_t F = cfg.frame_len_ps;
  const std::int64_t n_frames = (t1_ps - t0_ps + F - 1) / F;
  m.frame_stats.total = n_frames;
  const std::int64_t visited = walk_active_frames(
      a, b, cfg, t0_ps, t1_ps,
      [&](std::int64_t fs, std::size_t a0, std::size_t a1, std::size_t b0,
          std::size_t b1) {
        tally(m, classify_party(a, a0, a1, fs, cfg, false),
              classify_party(b, b0, b1, fs, cfg, false), cfg, rng);
      });
  m.frame_stats.empty += n_frames - visited;
  return m;
}

SubspaceCounts subspace_counts(const CorrelationMatrices& m, int i) {
  const auto& cfg = m.cfg;
  if (cfg.d % 2 != 0 || cfg.k != cfg.d / 2)
    throw config_error(
        "subspace pairing {i, i+d/2} requires the default grid with k = "
        "d/2");
  const int h = cfg.d / 2;
  if (i < 0 || i >= h)
    throw config_error("subspace index " + std::to_string(i) +
                       " outside [0, " + std::to_string(h) + ")");
  SubspaceCounts s;
  s.toa = {m.m_toa.at(i, i), m.m_toa.at(i, i + h), m.m_toa.at(i + h, i),
           m.m_toa.at(i + h, i + h)};
  s.tsup = {m.m_tsup_pp.at(i, i), m.m_tsup_pm.at(i, i), m.m_tsup_mp.at(i, i),
            m.m_tsup_mm.at(i, i)};
  return s;
}

std::int64_t calibrate_grid_phase(const TagStream& a, const TagStream& b,
                                  const DiscretizationConfig& cfg,
                                  std::int64_t t0_ps, std::int64_t t1_ps,
                                  int n_phases) {
  cfg.validate();
  check_block(t0_ps, t1_ps);
  if (n_phases < 1)
    throw config_error("phase scan needs at least one candidate, got " +
                       std::to_string(n_phases));
  const std::int64_t step = cfg.frame_len_ps / n_phases;
  if (step < 1)
    throw config_error("phase scan of " + std::to_string(n_phases) +
                       " steps is finer than the picosecond grid");
  std::int64_t best_phase = 0, best_score = -1;
  for (int j = 0; j < n_phases; ++j) {
    DiscretizationConfig c = cfg;
    c.grid_phase_ps = j * step;
    std::int64_t score = 0;
    walk_active_frames(a, b, c, t0_ps, t1_ps,
                       [&](std::int64_t fs, std::size_t a0, std::size_t a1,
                           std::size_t b0, std::size_t b1) {
                         auto fa = classify_party(a, a0, a1, fs, c, false);
                         auto fb = classify_party(b, b0, b1, fs, c, false);
                         if (fa.kind == fb.kind && fa.bin == fb.bin &&
                             (fa.kind == FrameKind::single_toa ||
                              fa.kind == FrameKind::single_tsup))
                           ++score;
                       });
    if (score > best_score) {
      best_score = score;
      best_phase = j * step;
    }
  }
  return best_phase;
}

}  // namespace franson
