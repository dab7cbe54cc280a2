#pragma once

#include <cstdint>
#include <vector>

#include "franson/discretize.hpp"

namespace franson {

// Shannon entropy of a coin with bias p, in bits. H(0) = H(1) = 0 by the
// usual 0 log 0 = 0 convention; p outside [0, 1] (NaN included) throws
// std::domain_error.
double binary_entropy(double p);

// Measured match statistics of one two-level subspace {i, i+d/2}. p_toa
// is the fraction of the subspace's time-bin quadruple sitting on the
// correlated diagonal; p_tsup is the fraction of its superposition
// coincidences with equal port signs. Each probability exists only when
// its denominator is nonzero: an unmeasured basis stays undefined rather
// than impersonating a perfect or a random one. se_* carry the binomial
// standard errors sqrt(p (1-p) / n), reported for context, never used as
// a threshold.
struct SubspaceStats {
  int subspace = 0;
  bool toa_defined = false;
  bool tsup_defined = false;
  double p_toa = 0;
  double p_tsup = 0;
  std::int64_t n_toa = 0;
  std::int64_t n_tsup = 0;
  double se_toa = 0;
  double se_tsup = 0;

  bool defined() const { return toa_defined && tsup_defined; }
  // Two-basis witness p_toa + p_tsup; above 3/2 certifies entanglement
  // in this subspace. Meaningful only when defined().
  double witness() const { return p_toa + p_tsup; }
};

SubspaceStats subspace_stats(const CorrelationMatrices& m, int i);

// Secret fraction 1 - H(p_toa) - H(p_tsup) per accepted coincidence.
// raw may go negative; usable clamps at zero, since a negative fraction
// only means no extractable key. Requires s.defined(), else data_error.
struct KeyFraction {
  double raw = 0;
  double usable = 0;
};

KeyFraction key_fraction(const SubspaceStats& s);

struct AnalysisResult {
  std::int64_t block_id = 0;
  double block_start_s = 0;
  int d = 0;
  std::vector<SubspaceStats> per_subspace;
  bool witness_defined = false;
  double witness_avg = 0;
  double key_fraction_avg = 0;  // usable, averaged like the witness
  double key_fraction_raw_avg = 0;
  double key_rate_bps = 0;
  std::int64_t subspace_coincidences = 0;
  bool witness_certified = false;  // witness_avg > 3/2
  bool key_positive = false;       // key_rate_bps > 0
};

// Witness and key figures for one block's matrices. Undefined subspaces
// are excluded from every average; when none is defined the result keeps
// witness_defined false and a zero rate. Averages run uniform across the
// defined subspaces by default, or coincidence-weighted when
// weighted_subspaces is set. The key rate is the average usable fraction
// times the defined-subspace coincidence total over the integration
// time, in bits per second.
AnalysisResult analyze_block(const CorrelationMatrices& m,
                             bool weighted_subspaces);

// Best dimension by key rate across per-dimension results of the same
// block. Exact rate ties go to the smaller d; if no dimension achieves a
// positive rate, found stays false.
struct DimensionChoice {
  bool found = false;
  int best_d = 0;
  double best_rate_bps = 0;
};

DimensionChoice optimize_dimension(const std::vector<AnalysisResult>& results);

}  // namespace franson
