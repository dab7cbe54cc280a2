// franson: simulate, synchronize, discretize, and analyze two-party
// energy-time entanglement sessions from the command line.
//
// Every run lives in its own directory with a manifest.json recording the
// scenario snapshot, the seed, and a digest of every file each stage read
// or wrote. Commands that create a run directory refuse one that already
// holds a manifest; commands that extend a run refuse to repeat a stage.
// Exit codes: 0 success, 1 usage or configuration, 2 data, 3 sync.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "franson/analysis.hpp"
#include "franson/config.hpp"
#include "franson/discretize.hpp"
#include "franson/errors.hpp"
#include "franson/manifest.hpp"
#include "franson/rng.hpp"
#include "franson/simulator.hpp"
#include "franson/sync.hpp"
#include "franson/tagio.hpp"

namespace fs = std::filesystem;
using namespace franson;

namespace {

double wall_ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

// Fixed-format float for CSV cells: locale-free, stable across reruns.
std::string fmt_g(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write file: " + path);
  out << text;
  if (!out) throw data_error("short write on file: " + path);
}

struct RunPaths {
  fs::path dir;
  fs::path manifest() const { return dir / "manifest.json"; }
  fs::path tags(Party p, TagFormat f) const {
    const char* who = p == Party::alice ? "alice" : "bob";
    return dir / (std::string(who) + (f == TagFormat::binary ? ".ftag" : ".csv"));
  }
  fs::path bob_synced() const { return dir / "bob_synced.ftag"; }
  fs::path ground_truth() const { return dir / "ground_truth.json"; }
  fs::path clock_model() const { return dir / "clock_model.csv"; }
  fs::path block_results() const { return dir / "block_results.json"; }
  fs::path report() const { return dir / "report.csv"; }
  fs::path sweep() const { return dir / "sweep.csv"; }
};

// A run directory is created exactly once, by the command that writes the
// first stage; anything already holding a manifest is somebody's results.
void ensure_fresh_run_dir(const RunPaths& rp) {
  std::error_code ec;
  fs::create_directories(rp.dir, ec);
  if (ec)
    throw config_error("cannot create run directory " + rp.dir.string() +
                       ": " + ec.message());
  if (fs::exists(rp.manifest()))
    throw config_error("run directory " + rp.dir.string() +
                       " already holds a manifest; use a fresh directory");
}

RunManifest open_run(const RunPaths& rp) {
  if (!fs::exists(rp.manifest()))
    throw data_error("no manifest.json in " + rp.dir.string() +
                     "; run simulate first");
  return load_manifest(rp.manifest().string());
}

void refuse_repeat(const RunManifest& m, const std::string& stage,
                   const RunPaths& rp) {
  if (m.has_stage(stage))
    throw config_error("stage '" + stage + "' already recorded in " +
                       rp.manifest().string() +
                       "; rerun into a fresh directory");
}

FileRecord rec(const RunPaths& rp, const fs::path& p) {
  return {fs::relative(p, rp.dir).string(), digest_file(p.string())};
}

// Locates whichever tag file the run holds for a party, preferring the
// clock-corrected stream for Bob when present.
fs::path find_tags(const RunPaths& rp, Party p, bool prefer_synced) {
  if (p == Party::bob && prefer_synced && fs::exists(rp.bob_synced()))
    return rp.bob_synced();
  for (TagFormat f : {TagFormat::binary, TagFormat::csv}) {
    auto path = rp.tags(p, f);
    if (fs::exists(path)) return path;
  }
  throw data_error("no tag file for " +
                   std::string(p == Party::alice ? "alice" : "bob") + " in " +
                   rp.dir.string());
}

TagStream load_tags_at(const fs::path& path, Party p) {
  const TagFormat f =
      path.extension() == ".csv" ? TagFormat::csv : TagFormat::binary;
  return read_tags(path.string(), f, p);
}

bool clock_enabled(const Scenario& sc) {
  return sc.channel.clock_offset_ps != 0 ||
         sc.channel.clock_drift_ps_per_s != 0 ||
         sc.channel.drift_noise_ps_per_sqrt_s != 0;
}

void write_ground_truth(const fs::path& path, const GroundTruth& truth) {
  auto count = [](const std::vector<std::uint8_t>& prov, Provenance p) {
    std::int64_t n = 0;
    for (auto v : prov) n += v == std::uint8_t(p);
    return n;
  };
  nlohmann::json j;
  j["clock"]["offset_ps"] = truth.clock.offset_ps;
  j["clock"]["drift_ps_per_s"] = truth.clock.drift_ps_per_s;
  j["clock"]["rw_step_s"] = truth.clock.rw_step_s;
  j["clock"]["rw_ps"] = truth.clock.rw_ps;
  for (auto [name, prov] : {std::pair{"alice", &truth.prov_alice},
                            std::pair{"bob", &truth.prov_bob}}) {
    j[name]["signal"] = count(*prov, Provenance::signal);
    j[name]["background"] = count(*prov, Provenance::background);
    j[name]["dark"] = count(*prov, Provenance::dark);
  }
  write_text_file(path.string(), j.dump(2) + "\n");
}

// ---------------------------------------------------------------- simulate

void cmd_simulate(const std::string& config_path, const RunPaths& rp,
                  std::uint64_t seed, TagFormat format) {
  Scenario sc = parse_scenario_file(config_path);
  ensure_fresh_run_dir(rp);
  const auto t0 = std::chrono::steady_clock::now();
  auto res = simulate_session(sc.source, sc.channel, sc.session.duration_s,
                              seed, false);
  const auto pa = rp.tags(Party::alice, format);
  const auto pb = rp.tags(Party::bob, format);
  write_tags(res.alice, pa.string(), format);
  write_tags(res.bob, pb.string(), format);
  write_ground_truth(rp.ground_truth(), res.truth);

  RunManifest m;
  m.seed = seed;
  m.scenario = serialize_scenario(sc);
  StageRecord st;
  st.name = "simulate";
  st.inputs.push_back({config_path, digest_file(config_path)});
  st.outputs.push_back(rec(rp, pa));
  st.outputs.push_back(rec(rp, pb));
  st.outputs.push_back(rec(rp, rp.ground_truth()));
  st.wall_ms = wall_ms_since(t0);
  m.stages.push_back(std::move(st));
  save_manifest(rp.manifest().string(), m);
  std::printf("simulate: %zu + %zu tags over %.6g s -> %s\n",
              res.alice.size(), res.bob.size(), sc.session.duration_s,
              rp.dir.string().c_str());
}

// -------------------------------------------------------------------- sync

void cmd_sync(const RunPaths& rp) {
  auto m = open_run(rp);
  refuse_repeat(m, "sync", rp);
  Scenario sc = parse_scenario_text(m.scenario, "manifest scenario");
  const auto t0 = std::chrono::steady_clock::now();
  const auto path_a = find_tags(rp, Party::alice, false);
  const auto path_b = find_tags(rp, Party::bob, false);
  auto alice = load_tags_at(path_a, Party::alice);
  auto bob = load_tags_at(path_b, Party::bob);
  auto model = track_drift(alice, bob, sc.sync);

  std::string csv = "block_center_s,offset_ps,significance,measured\n";
  for (const auto& k : model.knots)
    csv += fmt_g(k.center_s) + "," + fmt_g(k.offset_ps) + "," +
           fmt_g(k.significance) + "," + (k.measured ? "1" : "0") + "\n";
  write_text_file(rp.clock_model().string(), csv);

  auto synced = apply_model(bob, model);
  write_tags(synced, rp.bob_synced().string(), TagFormat::binary);

  StageRecord st;
  st.name = "sync";
  st.inputs.push_back(rec(rp, path_a));
  st.inputs.push_back(rec(rp, path_b));
  st.outputs.push_back(rec(rp, rp.clock_model()));
  st.outputs.push_back(rec(rp, rp.bob_synced()));
  st.wall_ms = wall_ms_since(t0);
  m.stages.push_back(std::move(st));
  save_manifest(rp.manifest().string(), m);

  std::size_t measured = 0;
  for (const auto& k : model.knots) measured += k.measured;
  std::printf("sync: %zu/%zu blocks locked -> %s\n", measured,
              model.knots.size(), rp.clock_model().string().c_str());
}

// ----------------------------------------------------------------- analyze

struct BlockAnalysis {
  std::int64_t block_id = 0;
  double start_s = 0;
  double integration_s = 0;
  double singles_rate_bob = 0;
  std::vector<AnalysisResult> per_d;
};

nlohmann::json result_json(const AnalysisResult& r) {
  nlohmann::json j;
  j["d"] = r.d;
  j["witness_defined"] = r.witness_defined;
  j["witness_avg"] = r.witness_avg;
  j["key_fraction_avg"] = r.key_fraction_avg;
  j["key_fraction_raw_avg"] = r.key_fraction_raw_avg;
  j["key_rate_bps"] = r.key_rate_bps;
  j["subspace_coincidences"] = r.subspace_coincidences;
  j["witness_certified"] = r.witness_certified;
  j["key_positive"] = r.key_positive;
  j["per_subspace"] = nlohmann::json::array();
  for (const auto& s : r.per_subspace) {
    nlohmann::json js;
    js["subspace"] = s.subspace;
    js["toa_defined"] = s.toa_defined;
    js["tsup_defined"] = s.tsup_defined;
    js["p_toa"] = s.p_toa;
    js["p_tsup"] = s.p_tsup;
    js["n_toa"] = s.n_toa;
    js["n_tsup"] = s.n_tsup;
    js["se_toa"] = s.se_toa;
    js["se_tsup"] = s.se_tsup;
    j["per_subspace"].push_back(std::move(js));
  }
  return j;
}

void export_matrices(const RunPaths& rp, const CorrelationMatrices& m,
                     std::int64_t block, StageRecord& st) {
  const auto dir = rp.dir / "matrices";
  fs::create_directories(dir);
  const std::pair<const char*, const CountMatrix*> mats[] = {
      {"toa", &m.m_toa},         {"tsup_pp", &m.m_tsup_pp},
      {"tsup_pm", &m.m_tsup_pm}, {"tsup_mp", &m.m_tsup_mp},
      {"tsup_mm", &m.m_tsup_mm}};
  for (auto [name, mat] : mats) {
    char fname[64];
    std::snprintf(fname, sizeof fname, "block%04lld_d%d_%s.csv",
                  (long long)block, m.cfg.d, name);
    std::string csv;
    for (int i = 0; i < mat->d; ++i) {
      for (int j = 0; j < mat->d; ++j) {
        csv += std::to_string(mat->at(i, j));
        csv += j + 1 < mat->d ? ',' : '\n';
      }
    }
    const auto path = dir / fname;
    write_text_file(path.string(), csv);
    st.outputs.push_back(rec(rp, path));
  }
}

// Analysis blocks over [0, duration): per block and per dimension, build
// the grid (calibrating the phase on the block's first seconds when the
// scenario asks for auto), discretize, and compute witness + key figures.
std::vector<BlockAnalysis> analyze_blocks(const TagStream& alice,
                                          const TagStream& bob,
                                          const Scenario& sc,
                                          std::uint64_t seed,
                                          const RunPaths* rp,
                                          StageRecord* st,
                                          bool export_mats) {
  const auto& an = sc.analysis;
  const double dur = sc.session.duration_s;
  const std::int64_t block_ps = std::int64_t(an.block_s * 1e12);
  const std::int64_t dur_ps = std::int64_t(dur * 1e12);
  const std::int64_t n_blocks = (dur_ps + block_ps - 1) / block_ps;
  std::vector<BlockAnalysis> out;
  for (std::int64_t b = 0; b < n_blocks; ++b) {
    const std::int64_t t0 = b * block_ps;
    const std::int64_t t1 = std::min(dur_ps, t0 + block_ps);
    BlockAnalysis ba;
    ba.block_id = b;
    ba.start_s = double(t0) * 1e-12;
    ba.integration_s = double(t1 - t0) * 1e-12;
    const auto bob_slice = slice(bob, t0, t1);
    ba.singles_rate_bob = double(bob_slice.size()) / ba.integration_s;
    for (std::size_t di = 0; di < an.dims.size(); ++di) {
      const int d = an.dims[di];
      auto cfg = DiscretizationConfig::for_dimension(d, an.tau_mzi_ps);
      if (an.grid_phase_ps >= 0) {
        cfg.grid_phase_ps = an.grid_phase_ps % cfg.frame_len_ps;
      } else {
        const std::int64_t cal_end =
            std::min(t1, t0 + std::int64_t(10e12));
        cfg.grid_phase_ps = calibrate_grid_phase(alice, bob, cfg, t0,
                                                 cal_end, an.phase_scan);
      }
      Rng rng(derive_seed(seed, "discretize", std::uint64_t(d),
                          std::uint64_t(b)));
      auto mats = discretize_block(alice, bob, cfg, t0, t1, rng);
      auto r = analyze_block(mats, an.weighted_subspaces);
      r.block_id = b;
      r.block_start_s = ba.start_s;
      ba.per_d.push_back(std::move(r));
      if (export_mats && rp && st) export_matrices(*rp, mats, b, *st);
    }
    out.push_back(std::move(ba));
  }
  return out;
}

void write_block_results(const fs::path& path,
                         const std::vector<BlockAnalysis>& blocks) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& ba : blocks) {
    nlohmann::json jb;
    jb["block_id"] = ba.block_id;
    jb["block_start_s"] = ba.start_s;
    jb["integration_s"] = ba.integration_s;
    jb["singles_rate_bob"] = ba.singles_rate_bob;
    jb["results"] = nlohmann::json::array();
    for (const auto& r : ba.per_d) jb["results"].push_back(result_json(r));
    j.push_back(std::move(jb));
  }
  write_text_file(path.string(), j.dump(2) + "\n");
}

void cmd_analyze(const RunPaths& rp, bool export_mats) {
  auto m = open_run(rp);
  refuse_repeat(m, "analyze", rp);
  Scenario sc = parse_scenario_text(m.scenario, "manifest scenario");
  const auto t0 = std::chrono::steady_clock::now();
  const auto path_a = find_tags(rp, Party::alice, false);
  const auto path_b = find_tags(rp, Party::bob, true);
  auto alice = load_tags_at(path_a, Party::alice);
  auto bob = load_tags_at(path_b, Party::bob);

  StageRecord st;
  st.name = "analyze";
  st.inputs.push_back(rec(rp, path_a));
  st.inputs.push_back(rec(rp, path_b));
  auto blocks =
      analyze_blocks(alice, bob, sc, m.seed, &rp, &st, export_mats);
  write_block_results(rp.block_results(), blocks);
  st.outputs.push_back(rec(rp, rp.block_results()));
  st.wall_ms = wall_ms_since(t0);
  m.stages.push_back(std::move(st));
  save_manifest(rp.manifest().string(), m);
  std::printf("analyze: %zu blocks x %zu dimensions -> %s\n", blocks.size(),
              sc.analysis.dims.size(), rp.block_results().string().c_str());
}

// ------------------------------------------------------------------ report

void cmd_report(const RunPaths& rp) {
  auto m = open_run(rp);
  refuse_repeat(m, "report", rp);
  if (!fs::exists(rp.block_results()))
    throw data_error("no block_results.json in " + rp.dir.string() +
                     "; run analyze first");
  const auto t0 = std::chrono::steady_clock::now();
  nlohmann::json j;
  try {
    std::ifstream in(rp.block_results());
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("malformed block_results.json: " + std::string(e.what()));
  }
  std::string csv =
      "block_start_s,d,witness_avg,key_fraction,key_rate_bps,"
      "coincidences,singles_rate_bob\n";
  for (const auto& jb : j) {
    for (const auto& jr : jb.at("results")) {
      const bool defined = jr.at("witness_defined").get<bool>();
      csv += fmt_g(jb.at("block_start_s").get<double>()) + ",";
      csv += std::to_string(jr.at("d").get<int>()) + ",";
      csv += (defined ? fmt_g(jr.at("witness_avg").get<double>())
                      : std::string("nan")) +
             ",";
      csv += (defined ? fmt_g(jr.at("key_fraction_avg").get<double>())
                      : std::string("nan")) +
             ",";
      csv += fmt_g(jr.at("key_rate_bps").get<double>()) + ",";
      csv += std::to_string(
                 jr.at("subspace_coincidences").get<std::int64_t>()) +
             ",";
      csv += fmt_g(jb.at("singles_rate_bob").get<double>()) + "\n";
    }
  }
  write_text_file(rp.report().string(), csv);
  StageRecord st;
  st.name = "report";
  st.inputs.push_back(rec(rp, rp.block_results()));
  st.outputs.push_back(rec(rp, rp.report()));
  st.wall_ms = wall_ms_since(t0);
  m.stages.push_back(std::move(st));
  save_manifest(rp.manifest().string(), m);
  std::printf("report: %s\n", rp.report().string().c_str());
}

// ------------------------------------------------------------------- sweep

// One simulated session per noise point. The ratio scales an added flat
// background on both parties to ratio x that party's signal singles rate,
// on top of whatever the scenario already configures; everything else is
// untouched. Sessions, sync, and analysis stay in memory; only the CSV
// and the manifest land on disk.
void cmd_sweep(const std::string& config_path, const RunPaths& rp,
               std::uint64_t seed, const std::vector<double>& ratios) {
  Scenario base = parse_scenario_file(config_path);
  if (ratios.empty())
    throw config_error("sweep needs at least one --noise ratio");
  for (double r : ratios)
    if (!(r >= 0))
      throw config_error("noise ratio must be >= 0, got " + fmt_g(r));
  ensure_fresh_run_dir(rp);
  const auto t0 = std::chrono::steady_clock::now();

  std::string csv =
      "noise_ratio,block_start_s,d,witness_avg,key_fraction,key_rate_bps,"
      "coincidences,best_d\n";
  for (std::size_t ni = 0; ni < ratios.size(); ++ni) {
    const double ratio = ratios[ni];
    Scenario sc = base;
    const double sig_alice =
        sc.source.pair_rate_hz *
        std::pow(10.0, -sc.channel.loss_alice_db / 10.0);
    const double sig_bob = sc.source.pair_rate_hz *
                           std::pow(10.0, -sc.channel.loss_bob_db / 10.0);
    auto add_flat = [](RateProfile& p, double hz) {
      if (hz <= 0) return;
      if (!p.defined()) {
        p = RateProfile::constant(hz);
        return;
      }
      for (auto& k : p.knots) k.second += hz;
    };
    // Per-detector rates: four detectors share the party's added total.
    add_flat(sc.channel.background_alice_hz, ratio * sig_alice / 4);
    add_flat(sc.channel.background_bob_hz, ratio * sig_bob / 4);
    validate_scenario(sc);

    auto res = simulate_session(sc.source, sc.channel,
                                sc.session.duration_s,
                                derive_seed(seed, "sweep", ni), false);
    TagStream bob = clock_enabled(sc)
                        ? apply_model(res.bob,
                                      track_drift(res.alice, res.bob,
                                                  sc.sync))
                        : std::move(res.bob);
    auto blocks = analyze_blocks(res.alice, bob, sc,
                                 derive_seed(seed, "sweep.analysis", ni),
                                 nullptr, nullptr, false);
    for (const auto& ba : blocks) {
      auto choice = optimize_dimension(ba.per_d);
      for (const auto& r : ba.per_d) {
        csv += fmt_g(ratio) + ",";
        csv += fmt_g(ba.start_s) + ",";
        csv += std::to_string(r.d) + ",";
        csv += (r.witness_defined ? fmt_g(r.witness_avg)
                                  : std::string("nan")) +
               ",";
        csv += (r.witness_defined ? fmt_g(r.key_fraction_avg)
                                  : std::string("nan")) +
               ",";
        csv += fmt_g(r.key_rate_bps) + ",";
        csv += std::to_string(r.subspace_coincidences) + ",";
        csv += std::to_string(choice.found ? choice.best_d : 0) + "\n";
      }
    }
  }
  write_text_file(rp.sweep().string(), csv);

  RunManifest m;
  m.seed = seed;
  m.scenario = serialize_scenario(base);
  StageRecord st;
  st.name = "sweep";
  st.inputs.push_back({config_path, digest_file(config_path)});
  st.outputs.push_back(rec(rp, rp.sweep()));
  st.wall_ms = wall_ms_since(t0);
  m.stages.push_back(std::move(st));
  save_manifest(rp.manifest().string(), m);
  std::printf("sweep: %zu noise points -> %s\n", ratios.size(),
              rp.sweep().string().c_str());
}

// ---------------------------------------------------------------- pipeline

void cmd_pipeline(const std::string& config_path, const RunPaths& rp,
                  std::uint64_t seed, TagFormat format, bool export_mats) {
  Scenario sc = parse_scenario_file(config_path);  // fail before mkdir
  cmd_simulate(config_path, rp, seed, format);
  if (clock_enabled(sc)) cmd_sync(rp);
  cmd_analyze(rp, export_mats);
  cmd_report(rp);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Two-party energy-time entanglement sessions: simulation, clock "
      "recovery, time-bin analysis, and key-rate reports"};
  app.require_subcommand(1);

  std::string config_path, out_dir, format_name = "binary";
  std::uint64_t seed = 12345;
  int threads = 1;
  std::vector<double> ratios;
  bool export_mats = false;

  app.add_option("--seed", seed, "Master seed; every stage derives from it")
      ->capture_default_str();
  app.add_option("--out", out_dir, "Run directory");
  app.add_option("--threads", threads,
                 "Worker threads (results are identical at any count)")
      ->check(CLI::PositiveNumber);
  app.add_option("--format", format_name, "Tag file format")
      ->check(CLI::IsMember({"binary", "csv"}))
      ->capture_default_str();

  auto* sim = app.add_subcommand("simulate",
                                 "Generate a session's tag streams");
  sim->add_option("--config", config_path, "Scenario file")->required();

  auto* syn = app.add_subcommand("sync",
                                 "Recover Bob's clock against Alice's");

  auto* ana = app.add_subcommand("analyze",
                                 "Discretize and score every block");
  ana->add_flag("--export-matrices", export_mats,
                "Write per-block coincidence matrices as CSV");

  auto* rep = app.add_subcommand("report",
                                 "Flatten block results to report.csv");

  auto* swp = app.add_subcommand("sweep",
                                 "Re-run the scenario across noise ratios");
  swp->add_option("--config", config_path, "Scenario file")->required();
  swp->add_option("--noise", ratios,
                  "Background-to-signal ratios, e.g. --noise 0 1 5 20")
      ->required();

  auto* pip = app.add_subcommand(
      "pipeline", "simulate, sync if drifting, analyze, report");
  pip->add_option("--config", config_path, "Scenario file")->required();
  pip->add_flag("--export-matrices", export_mats,
                "Write per-block coincidence matrices as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (out_dir.empty()) throw config_error("--out is required");
    RunPaths rp{fs::path(out_dir)};
    const TagFormat format =
        format_name == "csv" ? TagFormat::csv : TagFormat::binary;
    if (sim->parsed()) cmd_simulate(config_path, rp, seed, format);
    if (syn->parsed()) cmd_sync(rp);
    if (ana->parsed()) cmd_analyze(rp, export_mats);
    if (rep->parsed()) cmd_report(rp);
    if (swp->parsed()) cmd_sweep(config_path, rp, seed, ratios);
    if (pip->parsed())
      cmd_pipeline(config_path, rp, seed, format, export_mats);
    return 0;
  } catch (const config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const sync_error& e) {
    std::fprintf(stderr, "sync error: %s\n", e.what());
    return 3;
  } catch (const data_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
