#include "franson/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "franson/errors.hpp"

namespace franson {

double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::domain_error("binary entropy needs p in [0, 1], got " +
                            std::to_string(p));
  if (p == 0.0 || p == 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

SubspaceStats subspace_stats(const CorrelationMatrices& m, int i) {
  const auto q = subspace_counts(m, i);
  SubspaceStats s;
  s.subspace = i;
  s.n_toa = q.toa[0] + q.toa[1] + q.toa[2] + q.toa[3];
  s.n_tsup = q.tsup[0] + q.tsup[1] + q.tsup[2] + q.tsup[3];
  if (s.n_toa > 0) {
    s.toa_defined = true;
    s.p_toa = double(q.toa[0] + q.toa[3]) / double(s.n_toa);
    s.se_toa = std::sqrt(s.p_toa * (1.0 - s.p_toa) / double(s.n_toa));
  }
  if (s.n_tsup > 0) {
    s.tsup_defined = true;
    s.p_tsup = double(q.tsup[0] + q.tsup[3]) / double(s.n_tsup);
    s.se_tsup = std::sqrt(s.p_tsup * (1.0 - s.p_tsup) / double(s.n_tsup));
  }
  return s;
}

KeyFraction key_fraction(const SubspaceStats& s) {
  if (!s.defined())
    throw data_error("key fraction of subspace " + std::to_string(s.subspace) +
                     " needs coincidences in both bases");
  KeyFraction k;
  k.raw = 1.0 - binary_entropy(s.p_toa) - binary_entropy(s.p_tsup);
  k.usable = std::max(0.0, k.raw);
  return k;
}

AnalysisResult analyze_block(const CorrelationMatrices& m,
                             bool weighted_subspaces) {
  AnalysisResult r;
  r.d = m.cfg.d;
  double w_sum = 0, wit_sum = 0, raw_sum = 0, use_sum = 0;
  for (int i = 0; i < m.cfg.d / 2; ++i) {
    auto s = subspace_stats(m, i);
    r.per_subspace.push_back(s);
    if (!s.defined()) continue;
    const auto kf = key_fraction(s);
    const double w =
        weighted_subspaces ? double(s.n_toa + s.n_tsup) : 1.0;
    w_sum += w;
    wit_sum += w * s.witness();
    raw_sum += w * kf.raw;
    use_sum += w * kf.usable;
    r.subspace_coincidences += s.n_toa + s.n_tsup;
  }
  if (w_sum > 0) {
    r.witness_defined = true;
    r.witness_avg = wit_sum / w_sum;
    r.key_fraction_avg = use_sum / w_sum;
    r.key_fraction_raw_avg = raw_sum / w_sum;
    if (m.integration_s > 0)
      r.key_rate_bps = r.key_fraction_avg *
                       double(r.subspace_coincidences) / m.integration_s;
  }
  r.witness_certified = r.witness_defined && r.witness_avg > 1.5;
  r.key_positive = r.key_rate_bps > 0;
  return r;
}

DimensionChoice optimize_dimension(
    const std::vector<AnalysisResult>& results) {
  DimensionChoice c;
  for (const auto& r : results) {
    if (r.key_rate_bps <= 0) continue;
    if (!c.found || r.key_rate_bps > c.best_rate_bps ||
        (r.key_rate_bps == c.best_rate_bps && r.d < c.best_d)) {
      c.found = true;
      c.best_d = r.d;
      c.best_rate_bps = r.key_rate_bps;
    }
  }
  return c;
}

}  // namespace franson
