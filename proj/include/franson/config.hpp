#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace franson {

// Piecewise-linear time profile: (time_s, value) knots sorted by time,
// linear interpolation between knots, constant extrapolation outside.
// A single knot therefore means a constant value.
struct RateProfile {
  std::vector<std::pair<double, double>> knots;

  static RateProfile constant(double v) { return RateProfile{{{0.0, v}}}; }

  bool defined() const { return !knots.empty(); }
  bool zero() const;
  double eval(double t_s) const;
  double max_over(double t0_s, double t1_s) const;

  bool operator==(const RateProfile&) const = default;
};

// Entangled pair source. Defaults are the nominal nighttime operating point:
// 65 cps/mW of detected pairs at 28.5 mW pump, a locked interferometer
// phase sum, and a two-photon fringe visibility of 0.9 so that the
// superposition-basis match probability (1+V)/2 comes out at the 95% the
// local interferometers reach.
struct SourceConfig {
  double pair_rate_hz = 1852.5;
  double tsup_visibility = 0.9;
  double toa_visibility = 0.99;
  double phase_rad = 0.0;
};

// Everything between the source and the two time taggers. Losses are total
// per-arm transmission plus detection loss in dB. The background profiles
// are per-detector rates; Bob's side faces the sky, Alice's defaults to
// dark counts only. Clock terms perturb Bob's timestamps:
//   t -> t + offset + drift * (t / 1e12) + random_walk(t)
// where the random walk has standard deviation drift_noise * sqrt(t_s).
struct ChannelConfig {
  double loss_alice_db = 0.0;
  double loss_bob_db = 25.0;
  RateProfile loss_bob_profile_db;  // optional time-varying override (dB)
  double jitter_sigma_ps = 150.0;   // gaussian 1-sigma per detection
  RateProfile background_bob_hz;    // per-detector; empty means zero
  RateProfile background_alice_hz;  // per-detector; empty means zero
  double dark_rate_hz = 100.0;      // per-detector, both parties
  double clock_offset_ps = 0.0;
  double clock_drift_ps_per_s = 30.0;
  double drift_noise_ps_per_sqrt_s = 0.0;

  double loss_bob_db_at(double t_s) const {
    return loss_bob_profile_db.defined() ? loss_bob_profile_db.eval(t_s)
                                         : loss_bob_db;
  }
};

struct SessionConfig {
  double duration_s = 600.0;
  std::int64_t epoch_ps = 0;
};

// Post-processing defaults shared by the analyze/report/pipeline commands.
// grid_phase_ps < 0 means "calibrate by scanning phase_scan offsets".
struct AnalysisConfig {
  std::int64_t tau_mzi_ps = 2700;
  std::vector<int> dims = {4, 6, 12, 18, 36};
  double block_s = 200.0;
  std::int64_t grid_phase_ps = -1;
  int phase_scan = 16;
  bool weighted_subspaces = false;
};

// Clock-recovery tuning. The search ladder runs once per session: an
// acquisition scan over +/- acq_window_ps on the first acq_slice_s of data,
// a coarse pass around the acquisition peak, then per-block tracking within
// +/- window_ps of the previous block's offset. bin_ps should sit near the
// coincidence peak width (sqrt 2 times the per-detector jitter): the 3-bin
// centroid loses sub-bin precision on much narrower or much wider bins.
struct SyncConfig {
  double block_s = 5.0;
  std::int64_t bin_ps = 150;
  std::int64_t window_ps = 10000;
  std::int64_t coarse_bin_ps = 1000;
  std::int64_t coarse_window_ps = 1000000;
  std::int64_t acq_bin_ps = 10000;
  std::int64_t acq_window_ps = 200000000;
  double acq_slice_s = 5.0;
  double significance_threshold = 5.0;
};

struct Scenario {
  SourceConfig source;
  ChannelConfig channel;
  SessionConfig session;
  SyncConfig sync;
  AnalysisConfig analysis;
};

// Flat key-value scenario file with [source] / [channel] / [session] /
// [sync] / [analysis] sections. Unknown sections or keys are config errors,
// as are out-of-range values. Omitted keys keep the defaults above.
Scenario parse_scenario_file(const std::string& path);
Scenario parse_scenario_text(const std::string& text, const std::string& name);

// Canonical key-value dump of every setting; parses back to an equal
// scenario and is embedded verbatim in run manifests.
std::string serialize_scenario(const Scenario& s);

void validate_scenario(const Scenario& s);

}  // namespace franson
