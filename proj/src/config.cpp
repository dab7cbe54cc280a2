#include "franson/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "franson/errors.hpp"

namespace franson {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view v, const std::string& where) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    throw config_error(where + ": bad number \"" + std::string(v) + "\"");
  return out;
}

std::int64_t parse_int(std::string_view v, const std::string& where) {
  // Accept scientific/decimal spellings of whole numbers (1e8, 2700.0).
  double d = parse_double(v, where);
  double r = std::nearbyint(d);
  if (std::abs(d - r) > 1e-6 || std::abs(r) > 9.2e18)
    throw config_error(where + ": expected an integer, got \"" +
                       std::string(v) + "\"");
  return static_cast<std::int64_t>(r);
}

bool parse_bool(std::string_view v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error(where + ": expected true/false");
}

std::vector<std::string_view> split(std::string_view v, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = v.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(v.substr(start)));
      return out;
    }
    out.push_back(trim(v.substr(start, pos - start)));
    start = pos + 1;
  }
}

// "1234" for a constant, or "t0:v0, t1:v1, ..." knots in seconds.
RateProfile parse_profile(std::string_view v, const std::string& where) {
  RateProfile p;
  auto entries = split(v, ',');
  if (entries.size() == 1 && entries[0].find(':') == std::string_view::npos)
    return RateProfile::constant(parse_double(entries[0], where));
  for (auto e : entries) {
    auto colon = e.find(':');
    if (colon == std::string_view::npos ||
        e.find(':', colon + 1) != std::string_view::npos)
      throw config_error(where + ": expected time:value knots");
    p.knots.emplace_back(parse_double(trim(e.substr(0, colon)), where),
                         parse_double(trim(e.substr(colon + 1)), where));
  }
  return p;
}

std::vector<int> parse_dims(std::string_view v, const std::string& where) {
  std::vector<int> dims;
  for (auto e : split(v, ','))
    dims.push_back(static_cast<int>(parse_int(e, where)));
  return dims;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_profile(const RateProfile& p) {
  std::string out;
  for (std::size_t i = 0; i < p.knots.size(); ++i) {
    if (i) out += ", ";
    out += fmt(p.knots[i].first) + ":" + fmt(p.knots[i].second);
  }
  return out;
}

void check_profile(const RateProfile& p, const std::string& what,
                   bool nonnegative) {
  for (std::size_t i = 0; i < p.knots.size(); ++i) {
    if (!std::isfinite(p.knots[i].first) || !std::isfinite(p.knots[i].second))
      throw config_error(what + ": non-finite knot");
    if (nonnegative && p.knots[i].second < 0)
      throw config_error(what + ": negative value");
    if (i > 0 && p.knots[i].first <= p.knots[i - 1].first)
      throw config_error(what + ": knot times must strictly increase");
  }
}

}  // namespace

bool RateProfile::zero() const {
  for (auto& [t, v] : knots)
    if (v != 0.0) return false;
  return true;
}

double RateProfile::eval(double t_s) const {
  if (knots.empty()) return 0.0;
  if (t_s <= knots.front().first) return knots.front().second;
  if (t_s >= knots.back().first) return knots.back().second;
  auto it = std::upper_bound(
      knots.begin(), knots.end(), t_s,
      [](double t, const std::pair<double, double>& k) { return t < k.first; });
  auto [t1, v1] = *it;
  auto [t0, v0] = *(it - 1);
  return v0 + (v1 - v0) * (t_s - t0) / (t1 - t0);
}

double RateProfile::max_over(double t0_s, double t1_s) const {
  if (knots.empty()) return 0.0;
  double m = std::max(eval(t0_s), eval(t1_s));
  for (auto& [t, v] : knots)
    if (t > t0_s && t < t1_s) m = std::max(m, v);
  return m;
}

Scenario parse_scenario_text(const std::string& text, const std::string& name) {
  Scenario s;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    std::string where = name + " line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw config_error(where + ": bad section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "source" && section != "channel" && section != "session" &&
          section != "sync" && section != "analysis")
        throw config_error(where + ": unknown section [" + section + "]");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw config_error(where + ": expected key = value");
    std::string key(trim(line.substr(0, eq)));
    std::string_view val = trim(line.substr(eq + 1));
    if (section.empty())
      throw config_error(where + ": key \"" + key + "\" before any section");
    where += " (" + section + "." + key + ")";

    if (section == "source") {
      if (key == "pair_rate_hz") s.source.pair_rate_hz = parse_double(val, where);
      else if (key == "tsup_visibility") s.source.tsup_visibility = parse_double(val, where);
      else if (key == "toa_visibility") s.source.toa_visibility = parse_double(val, where);
      else if (key == "phase_rad") s.source.phase_rad = parse_double(val, where);
      else throw config_error(where + ": unknown key");
    } else if (section == "channel") {
      if (key == "loss_alice_db") s.channel.loss_alice_db = parse_double(val, where);
      else if (key == "loss_bob_db") s.channel.loss_bob_db = parse_double(val, where);
      else if (key == "loss_bob_profile_db") s.channel.loss_bob_profile_db = parse_profile(val, where);
      else if (key == "jitter_sigma_ps") s.channel.jitter_sigma_ps = parse_double(val, where);
      else if (key == "background_bob_hz") s.channel.background_bob_hz = parse_profile(val, where);
      else if (key == "background_alice_hz") s.channel.background_alice_hz = parse_profile(val, where);
      else if (key == "dark_rate_hz") s.channel.dark_rate_hz = parse_double(val, where);
      else if (key == "clock_offset_ps") s.channel.clock_offset_ps = parse_double(val, where);
      else if (key == "clock_drift_ps_per_s") s.channel.clock_drift_ps_per_s = parse_double(val, where);
      else if (key == "drift_noise_ps_per_sqrt_s") s.channel.drift_noise_ps_per_sqrt_s = parse_double(val, where);
      else throw config_error(where + ": unknown key");
    } else if (section == "session") {
      if (key == "duration_s") s.session.duration_s = parse_double(val, where);
      else if (key == "epoch_ps") s.session.epoch_ps = parse_int(val, where);
      else throw config_error(where + ": unknown key");
    } else if (section == "sync") {
      if (key == "block_s") s.sync.block_s = parse_double(val, where);
      else if (key == "bin_ps") s.sync.bin_ps = parse_int(val, where);
      else if (key == "window_ps") s.sync.window_ps = parse_int(val, where);
      else if (key == "coarse_bin_ps") s.sync.coarse_bin_ps = parse_int(val, where);
      else if (key == "coarse_window_ps") s.sync.coarse_window_ps = parse_int(val, where);
      else if (key == "acq_bin_ps") s.sync.acq_bin_ps = parse_int(val, where);
      else if (key == "acq_window_ps") s.sync.acq_window_ps = parse_int(val, where);
      else if (key == "acq_slice_s") s.sync.acq_slice_s = parse_double(val, where);
      else if (key == "significance_threshold") s.sync.significance_threshold = parse_double(val, where);
      else throw config_error(where + ": unknown key");
    } else {  // analysis
      if (key == "tau_mzi_ps") s.analysis.tau_mzi_ps = parse_int(val, where);
      else if (key == "dims") s.analysis.dims = parse_dims(val, where);
      else if (key == "block_s") s.analysis.block_s = parse_double(val, where);
      else if (key == "grid_phase_ps") {
        if (val == "auto") s.analysis.grid_phase_ps = -1;
        else s.analysis.grid_phase_ps = parse_int(val, where);
      }
      else if (key == "phase_scan") s.analysis.phase_scan = static_cast<int>(parse_int(val, where));
      else if (key == "weighted_subspaces") s.analysis.weighted_subspaces = parse_bool(val, where);
      else throw config_error(where + ": unknown key");
    }
  }
  validate_scenario(s);
  return s;
}

Scenario parse_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error(path + ": cannot open scenario file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str(), path);
}

void validate_scenario(const Scenario& s) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw config_error("scenario: " + msg);
  };
  need(std::isfinite(s.source.pair_rate_hz) && s.source.pair_rate_hz > 0,
       "pair_rate_hz must be > 0");
  need(s.source.tsup_visibility >= 0 && s.source.tsup_visibility <= 1,
       "tsup_visibility must be in [0,1]");
  need(s.source.toa_visibility >= 0 && s.source.toa_visibility <= 1,
       "toa_visibility must be in [0,1]");
  need(s.source.phase_rad >= 0 && s.source.phase_rad < 2 * std::numbers::pi,
       "phase_rad must be in [0, 2pi)");
  need(s.channel.loss_alice_db >= 0, "loss_alice_db must be >= 0");
  need(s.channel.loss_bob_db >= 0, "loss_bob_db must be >= 0");
  need(s.channel.jitter_sigma_ps >= 0, "jitter_sigma_ps must be >= 0");
  need(s.channel.dark_rate_hz >= 0, "dark_rate_hz must be >= 0");
  check_profile(s.channel.loss_bob_profile_db, "loss_bob_profile_db", true);
  check_profile(s.channel.background_bob_hz, "background_bob_hz", true);
  check_profile(s.channel.background_alice_hz, "background_alice_hz", true);
  need(s.session.duration_s > 0, "duration_s must be > 0");
  need(s.session.epoch_ps >= 0, "epoch_ps must be >= 0");
  need(s.sync.block_s > 0, "sync block_s must be > 0");
  need(s.sync.bin_ps > 0, "sync bin_ps must be > 0");
  need(s.sync.window_ps >= s.sync.bin_ps, "sync window_ps must be >= bin_ps");
  need(s.sync.coarse_bin_ps > 0, "sync coarse_bin_ps must be > 0");
  need(s.sync.coarse_window_ps >= s.sync.coarse_bin_ps,
       "sync coarse_window_ps must be >= coarse_bin_ps");
  need(s.sync.acq_bin_ps > 0, "sync acq_bin_ps must be > 0");
  need(s.sync.acq_window_ps >= s.sync.acq_bin_ps,
       "sync acq_window_ps must be >= acq_bin_ps");
  need(s.sync.acq_slice_s > 0, "sync acq_slice_s must be > 0");
  need(s.sync.significance_threshold > 0,
       "sync significance_threshold must be > 0");
  need(s.analysis.tau_mzi_ps > 0, "tau_mzi_ps must be > 0");
  need(!s.analysis.dims.empty(), "dims must not be empty");
  for (int d : s.analysis.dims) need(d > 0, "dims entries must be > 0");
  need(s.analysis.block_s > 0, "block_s must be > 0");
  need(s.analysis.grid_phase_ps >= -1, "grid_phase_ps must be >= 0 or auto");
  need(s.analysis.phase_scan >= 1, "phase_scan must be >= 1");
}

std::string serialize_scenario(const Scenario& s) {
  std::string out;
  out += "[source]\n";
  out += "pair_rate_hz = " + fmt(s.source.pair_rate_hz) + "\n";
  out += "tsup_visibility = " + fmt(s.source.tsup_visibility) + "\n";
  out += "toa_visibility = " + fmt(s.source.toa_visibility) + "\n";
  out += "phase_rad = " + fmt(s.source.phase_rad) + "\n";
  out += "\n[channel]\n";
  out += "loss_alice_db = " + fmt(s.channel.loss_alice_db) + "\n";
  out += "loss_bob_db = " + fmt(s.channel.loss_bob_db) + "\n";
  if (s.channel.loss_bob_profile_db.defined())
    out += "loss_bob_profile_db = " + fmt_profile(s.channel.loss_bob_profile_db) + "\n";
  out += "jitter_sigma_ps = " + fmt(s.channel.jitter_sigma_ps) + "\n";
  if (s.channel.background_bob_hz.defined())
    out += "background_bob_hz = " + fmt_profile(s.channel.background_bob_hz) + "\n";
  if (s.channel.background_alice_hz.defined())
    out += "background_alice_hz = " + fmt_profile(s.channel.background_alice_hz) + "\n";
  out += "dark_rate_hz = " + fmt(s.channel.dark_rate_hz) + "\n";
  out += "clock_offset_ps = " + fmt(s.channel.clock_offset_ps) + "\n";
  out += "clock_drift_ps_per_s = " + fmt(s.channel.clock_drift_ps_per_s) + "\n";
  out += "drift_noise_ps_per_sqrt_s = " + fmt(s.channel.drift_noise_ps_per_sqrt_s) + "\n";
  out += "\n[session]\n";
  out += "duration_s = " + fmt(s.session.duration_s) + "\n";
  out += "epoch_ps = " + std::to_string(s.session.epoch_ps) + "\n";
  out += "\n[sync]\n";
  out += "block_s = " + fmt(s.sync.block_s) + "\n";
  out += "bin_ps = " + std::to_string(s.sync.bin_ps) + "\n";
  out += "window_ps = " + std::to_string(s.sync.window_ps) + "\n";
  out += "coarse_bin_ps = " + std::to_string(s.sync.coarse_bin_ps) + "\n";
  out += "coarse_window_ps = " + std::to_string(s.sync.coarse_window_ps) + "\n";
  out += "acq_bin_ps = " + std::to_string(s.sync.acq_bin_ps) + "\n";
  out += "acq_window_ps = " + std::to_string(s.sync.acq_window_ps) + "\n";
  out += "acq_slice_s = " + fmt(s.sync.acq_slice_s) + "\n";
  out += "significance_threshold = " + fmt(s.sync.significance_threshold) + "\n";

  out += "\n[analysis]\n";
  out += "tau_mzi_ps = " + std::to_string(s.analysis.tau_mzi_ps) + "\n";
  out += "dims = ";
  for (std::size_t i = 0; i < s.analysis.dims.size(); ++i)
    out += (i ? ", " : "") + std::to_string(s.analysis.dims[i]);
  out += "\n";
  out += "block_s = " + fmt(s.analysis.block_s) + "\n";
  out += "grid_phase_ps = " + (s.analysis.grid_phase_ps < 0
                                   ? std::string("auto")
                                   : std::to_string(s.analysis.grid_phase_ps)) + "\n";
  out += "phase_scan = " + std::to_string(s.analysis.phase_scan) + "\n";
  out += std::string("weighted_subspaces = ") +
         (s.analysis.weighted_subspaces ? "true" : "false") + "\n";
  return out;
}

}  // namespace franson
