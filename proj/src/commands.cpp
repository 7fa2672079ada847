#include "ptmotion/commands.hpp"

#include "ptmotion/eval.hpp"
#include "ptmotion/io.hpp"
#include "ptmotion/report.hpp"
#include "ptmotion/sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace ptmotion::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// RunConfig serialization

json band_to_json(const dsp::BandSpec& b) {
  json j;
  j["low_hz"] = b.low_hz;
  j["high_hz"] = b.high_hz;
  j["kind"] = b.kind == dsp::BandKind::lowpass ? "lowpass" : "bandpass";
  return j;
}

dsp::BandSpec band_from_json(const json& j, const std::string& what) {
  dsp::BandSpec b;
  for (const auto& [key, value] : j.items()) {
    if (key == "low_hz") b.low_hz = value.get<double>();
    else if (key == "high_hz") b.high_hz = value.get<double>();
    else if (key == "kind") {
      const std::string k = value.get<std::string>();
      if (k == "lowpass") b.kind = dsp::BandKind::lowpass;
      else if (k == "bandpass") b.kind = dsp::BandKind::bandpass;
      else throw Error(what + ".kind must be \"lowpass\" or \"bandpass\", got \"" + k + "\"");
    } else {
      throw Error("unknown field \"" + key + "\" in " + what);
    }
  }
  return b;
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["emit"] = cfg.emit;

  json resp;
  resp["lowpass"] = band_to_json(cfg.respiratory.lowpass);
  resp["selection_lo_hz"] = cfg.respiratory.selection_lo_hz;
  resp["selection_hi_hz"] = cfg.respiratory.selection_hi_hz;
  resp["n_pcs_considered"] = cfg.respiratory.n_pcs_considered;
  resp["decimate_to_hz"] = cfg.respiratory.decimate_to_hz;
  j["respiratory"] = std::move(resp);

  json card;
  card["bandpass"] = band_to_json(cfg.cardiac.bandpass);
  card["selection_lo_hz"] = cfg.cardiac.selection_lo_hz;
  card["selection_hi_hz"] = cfg.cardiac.selection_hi_hz;
  card["prominence_factor"] = cfg.cardiac.prominence_factor;
  card["min_separation_s"] = cfg.cardiac.min_separation_s;
  card["n_components"] = cfg.cardiac.n_components ? json(*cfg.cardiac.n_components) : json();
  if (cfg.cardiac.arrhythmia_overrides) {
    json ovr;
    ovr["bandpass"] = band_to_json(cfg.cardiac.arrhythmia_overrides->bandpass);
    ovr["prominence_factor"] = cfg.cardiac.arrhythmia_overrides->prominence_factor;
    card["arrhythmia_overrides"] = std::move(ovr);
  } else {
    card["arrhythmia_overrides"] = json();
  }
  j["cardiac"] = std::move(card);
  return j;
}

void respiratory_from_json(const json& j, motion::RespiratoryConfig& out) {
  for (const auto& [key, value] : j.items()) {
    if (key == "lowpass") out.lowpass = band_from_json(value, "respiratory.lowpass");
    else if (key == "selection_lo_hz") out.selection_lo_hz = value.get<double>();
    else if (key == "selection_hi_hz") out.selection_hi_hz = value.get<double>();
    else if (key == "n_pcs_considered") out.n_pcs_considered = value.get<int>();
    else if (key == "decimate_to_hz") out.decimate_to_hz = value.get<double>();
    else throw Error("unknown field \"" + key + "\" in respiratory config");
  }
}

void cardiac_from_json(const json& j, motion::CardiacConfig& out) {
  for (const auto& [key, value] : j.items()) {
    if (key == "bandpass") out.bandpass = band_from_json(value, "cardiac.bandpass");
    else if (key == "selection_lo_hz") out.selection_lo_hz = value.get<double>();
    else if (key == "selection_hi_hz") out.selection_hi_hz = value.get<double>();
    else if (key == "prominence_factor") out.prominence_factor = value.get<double>();
    else if (key == "min_separation_s") out.min_separation_s = value.get<double>();
    else if (key == "n_components") {
      if (value.is_null()) out.n_components.reset();
      else out.n_components = value.get<int>();
    } else if (key == "arrhythmia_overrides") {
      if (value.is_null()) {
        out.arrhythmia_overrides.reset();
      } else {
        motion::ArrhythmiaOverrides ovr;
        for (const auto& [okey, ovalue] : value.items()) {
          if (okey == "bandpass")
            ovr.bandpass = band_from_json(ovalue, "arrhythmia_overrides.bandpass");
          else if (okey == "prominence_factor") ovr.prominence_factor = ovalue.get<double>();
          else throw Error("unknown field \"" + okey + "\" in arrhythmia_overrides");
        }
        out.arrhythmia_overrides = ovr;
      }
    } else {
      throw Error("unknown field \"" + key + "\" in cardiac config");
    }
  }
}

// ---------------------------------------------------------------------------
// Provenance stamps

std::string comment_stamp(const RunConfig& cfg) {
  return "config_hash=" + config_hash(cfg) + " seed=" + std::to_string(cfg.seed);
}

json provenance_json(const RunConfig& cfg) {
  json j;
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.seed;
  return j;
}

// Re-write a JSON file with a "provenance" object added at the top level.
void stamp_json_file(const std::string& path, const RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  json j;
  in >> j;
  in.close();
  j["provenance"] = provenance_json(cfg);
  io::write_file_atomic(path, j.dump(2) + "\n");
}

// Append a "# config_hash=... seed=..." comment line; the text loaders skip
// comment lines, so the payload round-trips unchanged.
void append_comment_stamp(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot open file for appending: " + path);
  out << "# " << comment_stamp(cfg) << "\n";
}

void ensure_out_dir(const std::string& dir) {
  if (dir.empty()) throw Error("output directory is empty");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

json load_json_file(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error("malformed " + what + ": " + path);
  return j;
}

std::string fmt(double v, int decimals) { return report::format_fixed(v, decimals); }

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cout << "warning: " << w << "\n";
}

}  // namespace

bool RunConfig::emits(const std::string& kind) const {
  return std::find(emit.begin(), emit.end(), kind) != emit.end();
}

void RunConfig::validate() const {
  if (output_dir.empty()) throw Error("output_dir is empty");
  for (const std::string& kind : emit) {
    if (kind != "json" && kind != "csv" && kind != "svg")
      throw Error("unknown emit kind \"" + kind + "\" (valid: json, csv, svg)");
    if (std::count(emit.begin(), emit.end(), kind) > 1)
      throw Error("duplicate emit kind \"" + kind + "\"");
  }
}

RunConfig load_run_config(const std::string& path) {
  json j = load_json_file(path, "run config");
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") cfg.seed = value.get<std::uint64_t>();
    else if (key == "output_dir") cfg.output_dir = value.get<std::string>();
    else if (key == "emit") cfg.emit = value.get<std::vector<std::string>>();
    else if (key == "respiratory") respiratory_from_json(value, cfg.respiratory);
    else if (key == "cardiac") cardiac_from_json(value, cfg.cardiac);
    else if (key == "provenance") continue;  // tolerated on round-trip
    else throw Error("unknown field \"" + key + "\" in run config " + path);
  }
  cfg.validate();
  return cfg;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  cfg.validate();
  json j = run_config_to_json(cfg);
  j["provenance"] = provenance_json(cfg);
  io::write_file_atomic(path, j.dump(2) + "\n");
}

std::string config_hash(const RunConfig& cfg) {
  const std::string canonical = run_config_to_json(cfg).dump();
  std::uint64_t h = 14695981039346656037ULL;  // FNV-1a 64-bit
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag_seed,
                           const RunConfig& cfg) {
  if (flag_seed) return *flag_seed;
  if (const char* env = std::getenv("PT_MOTION_SEED")) {
    const std::string text(env);
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    } catch (const std::exception&) {
      throw Error("PT_MOTION_SEED is not an unsigned integer: \"" + text + "\"");
    }
  }
  return cfg.seed;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const SimulateArgs& args, const RunConfig& cfg) {
  sim::SimConfig scfg;
  try {
    scfg = sim::scenario(args.scenario);
  } catch (const Error&) {
    std::cerr << "error: unknown scenario \"" << args.scenario
              << "\" (valid: normal, rr_variable, pvc, apnea, hiccup, weak_contraction)\n";
    return kExitUsage;
  }
  scfg.seed = cfg.seed;

  ensure_out_dir(args.out_dir);
  const sim::SimOutput out = sim::simulate(scfg);

  const std::string rec_path = join_path(args.out_dir, "recording.json");
  io::save_recording(out.recording, rec_path);
  sim::save_ground_truth(out.truth, join_path(args.out_dir, "truth.json"));

  stamp_json_file(rec_path, cfg);
  stamp_json_file(join_path(args.out_dir, "truth.json"), cfg);
  append_comment_stamp(join_path(args.out_dir, "recording.csv"), cfg);

  std::cout << "simulate: scenario " << args.scenario << ", seed " << cfg.seed << " -> "
            << args.out_dir << " (3 files: " << out.recording.n_channels() << " coils, "
            << out.recording.n_samples() << " samples, "
            << out.truth.beat_times.times.size() << " beats)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// extract

int cmd_extract(const ExtractArgs& args, const RunConfig& cfg) {
  const PtRecording rec = io::load_recording(args.recording_path);
  ensure_out_dir(args.out_dir);

  const motion::RespExtraction resp = motion::extract_respiratory(rec, cfg.respiratory);
  const motion::CardiacExtraction card = motion::extract_cardiac(rec, cfg.cardiac, cfg.seed);

  const std::string resp_path = join_path(args.out_dir, "respiratory_trace.txt");
  const std::string card_path = join_path(args.out_dir, "cardiac_trace.txt");
  const std::string trig_path = join_path(args.out_dir, "pt_triggers.txt");
  io::save_trace(resp.trace, resp_path);
  io::save_trace(card.trace, card_path);
  io::save_triggers(card.triggers, trig_path);
  append_comment_stamp(resp_path, cfg);
  append_comment_stamp(card_path, cfg);
  append_comment_stamp(trig_path, cfg);

  json prov;
  prov["provenance"] = provenance_json(cfg);
  prov["config"] = run_config_to_json(cfg);
  {
    json r;
    r["path"] = args.recording_path;
    r["n_samples"] = rec.n_samples();
    r["n_channels"] = rec.n_channels();
    r["dt_s"] = rec.dt;
    prov["recording"] = std::move(r);
  }
  {
    json r;
    r["selected_pc"] = resp.diag.selected_pc;
    r["band_power"] = resp.diag.band_power;
    r["polarity_correlation"] = resp.diag.polarity_correlation;
    r["polarity_resolved"] = resp.diag.polarity_resolved;
    r["polarity"] = to_string(resp.trace.polarity);
    r["warnings"] = resp.diag.warnings;
    prov["respiratory"] = std::move(r);
  }
  {
    json c;
    c["n_components"] = card.diag.n_components;
    c["selected_ic"] = card.diag.selected_ic;
    c["band_power"] = card.diag.band_power;
    c["selected_peak_hz"] = card.diag.selected_peak_hz;
    c["ica_converged"] = card.diag.ica_converged;
    c["ica_iterations"] = card.diag.ica_iterations;
    c["polarity_resolved"] = card.diag.polarity_resolved;
    c["n_triggers"] = card.triggers.times.size();
    c["warnings"] = card.diag.warnings;
    prov["cardiac"] = std::move(c);
  }
  io::write_file_atomic(join_path(args.out_dir, "provenance.json"), prov.dump(2) + "\n");

  std::cout << "extract: " << args.recording_path << " -> " << args.out_dir
            << " (4 files: " << card.triggers.times.size()
            << " triggers, cardiac peak " << fmt(card.diag.selected_peak_hz, 2)
            << " Hz, respiratory polarity " << to_string(resp.trace.polarity) << ")\n";
  print_warnings(resp.diag.warnings);
  print_warnings(card.diag.warnings);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

// Reference values interpolated onto the extracted trace's grid. Traces must
// share their origin and cover the same span; sample rates may differ.
std::vector<double> align_reference(const MotionTrace& pt, const MotionTrace& ref) {
  if (std::abs(ref.t0 - pt.t0) > 1e-9)
    throw Error("grid mismatch unresolvable: traces start at t0=" +
                io::format_double(pt.t0) + " vs " + io::format_double(ref.t0));
  if (std::abs(ref.duration_s() - pt.duration_s()) > 0.05 * pt.duration_s())
    throw Error("grid mismatch unresolvable: trace durations differ by more than 5%: " +
                io::format_double(pt.duration_s()) + " s vs " +
                io::format_double(ref.duration_s()) + " s");
  if (std::abs(ref.dt - pt.dt) <= 1e-12 && ref.n_samples() == pt.n_samples())
    return ref.values;
  return dsp::interp_linear(ref.values, ref.dt, pt.dt, pt.n_samples());
}

struct EvalOutcome {
  json report;
  std::vector<std::string> warnings;
  // Headline numbers for the console line.
  double pearson_r = 0.0;
  bool has_r = false;
  double mean_delay_s = 0.0, std_delay_s = 0.0;
  std::size_t n_pairs = 0;
  double mad_percent = 0.0;
  bool has_mad = false;
  double p_value = 0.0;
  bool has_p = false;
};

int evaluate_summary_fixture(const EvaluateArgs& args, const RunConfig& cfg) {
  const std::vector<FixtureRow> rows = load_summary_fixture(args.summary_fixture);
  std::vector<eval::PatientDelays> delays;
  delays.reserve(rows.size());
  for (const FixtureRow& r : rows)
    delays.push_back({r.mean_delay_ms / 1000.0, r.std_delay_ms / 1000.0});
  const eval::DelaySummary s = eval::summarize_delays(delays);

  ensure_out_dir(args.out_dir);
  json j;
  j["provenance"] = provenance_json(cfg);
  j["n_patients"] = rows.size();
  j["median_jitter_ms"] = s.median_jitter_s * 1000.0;
  j["jitter_min_ms"] = s.jitter_min_s * 1000.0;
  j["jitter_max_ms"] = s.jitter_max_s * 1000.0;
  j["mean_delay_band_count"] = s.band_count;
  io::write_file_atomic(join_path(args.out_dir, "delay_summary.json"), j.dump(2) + "\n");

  std::ostringstream md;
  md << "# Trigger delay summary\n\n";
  std::vector<std::vector<std::string>> table;
  for (const FixtureRow& r : rows)
    table.push_back({r.patient, fmt(r.mean_delay_ms, 1), fmt(r.std_delay_ms, 1)});
  md << report::markdown_table({"patient", "mean delay (ms)", "delay std (ms)"}, table);
  md << "\nMedian jitter " << fmt(s.median_jitter_s * 1000.0, 1) << " ms, range ["
     << fmt(s.jitter_min_s * 1000.0, 1) << ", " << fmt(s.jitter_max_s * 1000.0, 1)
     << "] ms; " << s.band_count << "/" << rows.size()
     << " mean delays within 150±35 ms.\n\n";
  md << "---\n" << comment_stamp(cfg) << "\n";
  io::write_file_atomic(join_path(args.out_dir, "delay_summary.md"), md.str());

  std::cout << "evaluate: median jitter " << fmt(s.median_jitter_s * 1000.0, 1)
            << " ms, range [" << fmt(s.jitter_min_s * 1000.0, 1) << ", "
            << fmt(s.jitter_max_s * 1000.0, 1) << "] ms, " << s.band_count << "/"
            << rows.size() << " mean delays within 150±35 ms\n";
  return kExitOk;
}

}  // namespace

int cmd_evaluate(const EvaluateArgs& args, const RunConfig& cfg) {
  if (!args.summary_fixture.empty()) return evaluate_summary_fixture(args, cfg);

  const MotionTrace pt_trace = io::load_trace(args.pt_trace_path);
  const MotionTrace ref_trace = io::load_trace(args.ref_trace_path);
  const TriggerTrain pt_trig = io::load_triggers(args.pt_triggers_path);
  const TriggerTrain ecg_trig = io::load_triggers(args.ecg_triggers_path);
  std::optional<TriggerTrain> truth;
  if (!args.truth_triggers_path.empty())
    truth = io::load_triggers(args.truth_triggers_path);

  ensure_out_dir(args.out_dir);
  EvalOutcome out;
  out.report["provenance"] = provenance_json(cfg);

  // --- Respiratory agreement. A constant trace (no respiratory motion) is
  // reported as degenerate rather than failing the whole evaluation.
  const std::vector<double> ref_vals = align_reference(pt_trace, ref_trace);
  json resp;
  resp["degenerate"] = false;
  bool degenerate = false;
  try {
    out.pearson_r = eval::pearson(pt_trace.values, ref_vals);
    out.has_r = true;
    resp["pearson_r"] = out.pearson_r;
  } catch (const Error& e) {
    if (std::string(e.what()).find("degenerate") == std::string::npos) throw;
    degenerate = true;
    resp["degenerate"] = true;
    resp["pearson_r"] = json();
    out.warnings.push_back(
        "no respiratory motion: " + std::string(e.what()) +
        "; respiratory comparison skipped");
  }

  if (!degenerate) {
    try {
      MotionTrace ref_on_grid = pt_trace;  // same grid/kind, reference values
      ref_on_grid.values = ref_vals;
      ref_on_grid.polarity = ref_trace.polarity;
      const motion::RespBins pt_bins = motion::bin_respiratory(pt_trace);
      const motion::RespBins ref_bins = motion::bin_respiratory(ref_on_grid);
      const eval::BinConsistencyMatrix m = eval::bin_consistency(pt_bins, ref_bins);
      json bins;
      json percent = json::array();
      for (int i = 0; i < 4; ++i) {
        json row = json::array();
        for (int k = 0; k < 4; ++k) row.push_back(m.percent(i, k));
        percent.push_back(std::move(row));
      }
      bins["percent"] = std::move(percent);
      bins["row_defined"] = std::vector<bool>(m.row_defined.begin(), m.row_defined.end());
      resp["bin_consistency"] = std::move(bins);
    } catch (const Error& e) {
      resp["bin_consistency"] = json();
      out.warnings.push_back("respiratory binning skipped: " + std::string(e.what()));
    }
  } else {
    resp["bin_consistency"] = json();
  }
  out.report["respiratory"] = std::move(resp);

  // --- Trigger pairing.
  eval::PairingReport rep = eval::pair_triggers(pt_trig, ecg_trig);
  if (truth) rep = eval::classify_unpaired(rep, *truth);
  out.n_pairs = rep.pairs.size();
  out.mean_delay_s = rep.mean_delay;
  out.std_delay_s = rep.std_delay;
  {
    json p;
    p["n_pairs"] = rep.pairs.size();
    p["n_unpaired_pt"] = rep.unpaired_pt.size();
    p["n_unpaired_ecg"] = rep.unpaired_ecg.size();
    p["mean_delay_s"] = rep.mean_delay;
    p["std_delay_s"] = rep.std_delay;
    p["mean_rr_s"] = rep.mean_rr;
    p["stats_defined"] = rep.stats_defined;
    out.report["pairing"] = std::move(p);
    if (!rep.stats_defined)
      out.warnings.push_back("no trigger pairs found; delay statistics undefined");
  }
  if (truth) {
    int counts[5] = {0, 0, 0, 0, 0};
    for (const eval::UnpairedClassification& c : rep.classifications)
      ++counts[static_cast<int>(c.kind)];
    json cls;
    cls[eval::to_string(eval::UnpairedKind::fp_ecg)] = counts[0];
    cls[eval::to_string(eval::UnpairedKind::fn_ecg)] = counts[1];
    cls[eval::to_string(eval::UnpairedKind::fp_pt)] = counts[2];
    cls[eval::to_string(eval::UnpairedKind::fn_pt)] = counts[3];
    cls[eval::to_string(eval::UnpairedKind::indeterminate)] = counts[4];
    out.report["classification"] = std::move(cls);
  } else {
    out.report["classification"] = json();
  }

  // --- Cycle durations and the delay-vs-RR regression.
  std::vector<double> cyc_rr, cyc_delay;
  try {
    const eval::CycleComparison cyc = eval::cycle_duration_compare(pt_trig, ecg_trig, rep);
    out.mad_percent = cyc.mad_percent;
    out.has_mad = true;
    json c;
    c["mad_percent"] = cyc.mad_percent;
    c["n_cycles"] = cyc.cycles.size();
    out.report["cycles"] = std::move(c);

    // One point per cycle: the ECG RR interval against the delay of the pair
    // that closes the cycle.
    std::size_t k = 0;
    for (std::size_t i = 0; i + 1 < rep.pairs.size() && k < cyc.cycles.size(); ++i) {
      const double rr_ecg = rep.pairs[i + 1].t_ecg - rep.pairs[i].t_ecg;
      if (std::abs(rr_ecg - cyc.cycles[k].rr_ecg) > 1e-12) continue;  // skipped cycle
      cyc_rr.push_back(cyc.cycles[k].rr_ecg);
      cyc_delay.push_back(rep.pairs[i + 1].delay);
      ++k;
    }
  } catch (const Error& e) {
    out.report["cycles"] = json();
    out.warnings.push_back("cycle comparison skipped: " + std::string(e.what()));
  }

  json cycle_points = json::array();
  for (std::size_t i = 0; i < cyc_rr.size(); ++i) {
    json p;
    p["rr_ecg_s"] = cyc_rr[i];
    p["delay_s"] = cyc_delay[i];
    cycle_points.push_back(std::move(p));
  }
  out.report["cycle_points"] = std::move(cycle_points);

  eval::RegressionResult reg;
  bool has_reg = false;
  if (cyc_rr.size() >= 3) {
    try {
      reg = eval::linreg(cyc_rr, cyc_delay);
      has_reg = true;
      out.p_value = reg.p_value;
      out.has_p = true;
      json r;
      r["slope"] = reg.slope;
      r["intercept_s"] = reg.intercept;
      r["r"] = reg.r;
      r["p_value"] = reg.p_value;
      r["n"] = reg.n;
      out.report["delay_vs_rr"] = std::move(r);
    } catch (const Error& e) {
      out.report["delay_vs_rr"] = json();
      out.warnings.push_back("delay-vs-RR regression skipped: " + std::string(e.what()));
    }
  } else {
    out.report["delay_vs_rr"] = json();
    out.warnings.push_back("delay-vs-RR regression skipped: fewer than 3 cycles");
  }

  json pairs = json::array();
  for (const eval::TriggerPair& p : rep.pairs) {
    json e;
    e["t_pt"] = p.t_pt;
    e["t_ecg"] = p.t_ecg;
    e["delay_s"] = p.delay;
    pairs.push_back(std::move(e));
  }
  out.report["pairs"] = std::move(pairs);
  out.report["warnings"] = out.warnings;

  io::write_file_atomic(join_path(args.out_dir, "report.json"),
                        out.report.dump(2) + "\n");

  // --- Markdown rendering.
  {
    std::ostringstream md;
    md << "# Evaluation report\n\n## Respiratory\n\n";
    if (out.has_r) {
      md << "Pearson r vs reference: **" << fmt(out.pearson_r, 4) << "**\n\n";
      if (!out.report["respiratory"]["bin_consistency"].is_null()) {
        const auto& percent = out.report["respiratory"]["bin_consistency"]["percent"];
        std::vector<std::vector<std::string>> rows;
        const char* names[4] = {"end-exp", "mid-exp", "mid-insp", "end-insp"};
        for (int i = 0; i < 4; ++i) {
          std::vector<std::string> row{names[i]};
          for (int k = 0; k < 4; ++k)
            row.push_back(fmt(percent[i][k].get<double>(), 1));
          rows.push_back(std::move(row));
        }
        md << "Bin consistency (% of samples per extracted-trace bin):\n\n";
        md << report::markdown_table(
            {"bin", "end-exp", "mid-exp", "mid-insp", "end-insp"}, rows);
        md << "\n";
      }
    } else {
      md << "No respiratory motion (degenerate trace); comparison skipped.\n\n";
    }
    md << "## Cardiac triggers\n\n";
    md << "- pairs: " << rep.pairs.size() << " (unpaired PT " << rep.unpaired_pt.size()
       << ", unpaired ECG " << rep.unpaired_ecg.size() << ")\n";
    if (rep.stats_defined)
      md << "- delay: " << fmt(rep.mean_delay * 1000.0, 1) << " ± "
         << fmt(rep.std_delay * 1000.0, 1) << " ms\n";
    if (out.has_mad)
      md << "- cycle duration MAD: " << fmt(out.mad_percent, 2) << " % of mean ECG RR ("
         << out.report["cycles"]["n_cycles"].get<std::size_t>() << " cycles)\n";
    if (truth && !out.report["classification"].is_null()) {
      md << "- unpaired classification:";
      for (const auto& [key, value] : out.report["classification"].items())
        md << " " << key << "=" << value.get<int>();
      md << "\n";
    }
    if (has_reg)
      md << "- delay vs RR: slope " << fmt(reg.slope * 1000.0, 2) << " ms/s, r "
         << fmt(reg.r, 3) << ", p " << fmt(reg.p_value, 4) << " (n=" << reg.n << ")\n";
    if (!out.warnings.empty()) {
      md << "\n## Warnings\n\n";
      for (const std::string& w : out.warnings) md << "- " << w << "\n";
    }
    md << "\n---\n" << comment_stamp(cfg) << "\n";
    io::write_file_atomic(join_path(args.out_dir, "report.md"), md.str());
  }

  // --- Optional CSV / SVG extras.
  if (cfg.emits("csv")) {
    if (!out.report["respiratory"]["bin_consistency"].is_null()) {
      const auto& percent = out.report["respiratory"]["bin_consistency"]["percent"];
      std::vector<std::vector<std::string>> rows;
      const char* names[4] = {"end_exp", "mid_exp", "mid_insp", "end_insp"};
      for (int i = 0; i < 4; ++i) {
        std::vector<std::string> row{names[i]};
        for (int k = 0; k < 4; ++k) row.push_back(fmt(percent[i][k].get<double>(), 3));
        rows.push_back(std::move(row));
      }
      io::write_file_atomic(
          join_path(args.out_dir, "bin_consistency.csv"),
          report::csv_table({comment_stamp(cfg)},
                            {"bin", "end_exp", "mid_exp", "mid_insp", "end_insp"}, rows));
    }
    {
      std::vector<std::vector<std::string>> rows;
      for (const eval::TriggerPair& p : rep.pairs)
        rows.push_back({io::format_double(p.t_pt), io::format_double(p.t_ecg),
                        io::format_double(p.delay)});
      io::write_file_atomic(join_path(args.out_dir, "pairs.csv"),
                            report::csv_table({comment_stamp(cfg)},
                                              {"t_pt_s", "t_ecg_s", "delay_s"}, rows));
    }
    {
      std::vector<std::vector<std::string>> rows;
      for (std::size_t i = 0; i < cyc_rr.size(); ++i)
        rows.push_back({io::format_double(cyc_rr[i]), io::format_double(cyc_delay[i])});
      io::write_file_atomic(join_path(args.out_dir, "cycles.csv"),
                            report::csv_table({comment_stamp(cfg)},
                                              {"rr_ecg_s", "delay_s"}, rows));
    }
  }
  if (cfg.emits("svg") && cyc_rr.size() >= 2) {
    std::vector<report::Series> series;
    report::Series scatter;
    scatter.x = cyc_rr;
    scatter.y = cyc_delay;
    scatter.label = "per-beat delay";
    scatter.lines = false;
    scatter.markers = true;
    series.push_back(std::move(scatter));
    if (has_reg) {
      const auto [lo_it, hi_it] = std::minmax_element(cyc_rr.begin(), cyc_rr.end());
      report::Series fit;
      report::Series band_lo, band_hi;
      const int kSteps = 32;
      for (int s = 0; s <= kSteps; ++s) {
        const double x = *lo_it + (*hi_it - *lo_it) * s / kSteps;
        fit.x.push_back(x);
        fit.y.push_back(reg.predict(x));
        const auto [lo, hi] = reg.ci95(x);
        band_lo.x.push_back(x);
        band_lo.y.push_back(lo);
        band_hi.x.push_back(x);
        band_hi.y.push_back(hi);
      }
      fit.label = "least-squares fit";
      band_lo.label = "95% CI";
      series.push_back(std::move(fit));
      series.push_back(std::move(band_lo));
      series.push_back(std::move(band_hi));
    }
    report::PlotOptions opt;
    opt.title = "Per-beat trigger delay vs preceding RR";
    opt.x_label = "ECG RR interval (s)";
    opt.y_label = "PT trigger delay (s)";
    opt.provenance = comment_stamp(cfg);
    io::write_file_atomic(join_path(args.out_dir, "delay_vs_rr.svg"),
                          report::render_svg_plot(series, opt));
  }

  std::cout << "evaluate: ";
  if (out.has_r) std::cout << "r=" << fmt(out.pearson_r, 4);
  else std::cout << "no respiratory motion";
  std::cout << ", delay " << fmt(rep.mean_delay * 1000.0, 1) << " ± "
            << fmt(rep.std_delay * 1000.0, 1) << " ms over " << rep.pairs.size()
            << " pairs";
  if (out.has_mad) std::cout << ", cycle MAD " << fmt(out.mad_percent, 2) << " %";
  if (out.has_p) std::cout << ", p(delay~RR)=" << fmt(out.p_value, 4);
  std::cout << "\n";
  print_warnings(out.warnings);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const ReportArgs& args, const RunConfig& cfg) {
  if (args.run_dirs.empty()) {
    std::cerr << "error: no run directories given\n";
    return kExitUsage;
  }
  struct Run {
    std::string dir;
    json report;
  };
  std::vector<Run> runs;
  for (const std::string& dir : args.run_dirs) {
    const std::string path = join_path(dir, "report.json");
    if (!fs::exists(path)) {
      std::cerr << "error: no run artifacts found in " << dir << " (missing report.json)\n";
      return kExitUsage;
    }
    runs.push_back({dir, load_json_file(path, "run report")});
  }

  std::vector<eval::PatientDelays> delays;
  std::vector<double> correlations;
  std::vector<double> pooled_rr, pooled_delay;
  std::vector<std::vector<std::string>> table;
  for (const Run& run : runs) {
    const json& p = run.report.at("pairing");
    const double mean_delay = p.at("mean_delay_s").get<double>();
    const double std_delay = p.at("std_delay_s").get<double>();
    delays.push_back({mean_delay, std_delay});

    std::string r_text = "—";
    const json& resp = run.report.at("respiratory");
    if (resp.contains("pearson_r") && !resp.at("pearson_r").is_null()) {
      correlations.push_back(resp.at("pearson_r").get<double>());
      r_text = fmt(correlations.back(), 3);
    }
    std::string mad_text = "—";
    if (!run.report.at("cycles").is_null())
      mad_text = fmt(run.report.at("cycles").at("mad_percent").get<double>(), 2);
    for (const json& pt : run.report.at("cycle_points")) {
      pooled_rr.push_back(pt.at("rr_ecg_s").get<double>());
      pooled_delay.push_back(pt.at("delay_s").get<double>());
    }
    table.push_back({run.dir, std::to_string(p.at("n_pairs").get<std::size_t>()),
                     fmt(mean_delay * 1000.0, 1), fmt(std_delay * 1000.0, 1), r_text,
                     mad_text});
  }

  const eval::DelaySummary summary = eval::summarize_delays(delays);
  ensure_out_dir(args.out_dir);

  json j;
  j["provenance"] = provenance_json(cfg);
  j["n_runs"] = runs.size();
  j["median_jitter_ms"] = summary.median_jitter_s * 1000.0;
  j["jitter_min_ms"] = summary.jitter_min_s * 1000.0;
  j["jitter_max_ms"] = summary.jitter_max_s * 1000.0;
  j["mean_delay_band_count"] = summary.band_count;
  {
    json rows = json::array();
    for (std::size_t i = 0; i < runs.size(); ++i) {
      json row;
      row["dir"] = runs[i].dir;
      row["mean_delay_s"] = delays[i].mean_delay_s;
      row["std_delay_s"] = delays[i].std_delay_s;
      rows.push_back(std::move(row));
    }
    j["runs"] = std::move(rows);
  }
  io::write_file_atomic(join_path(args.out_dir, "summary.json"), j.dump(2) + "\n");

  {
    std::ostringstream md;
    md << "# Aggregate report (" << runs.size() << " runs)\n\n";
    md << report::markdown_table({"run", "pairs", "mean delay (ms)", "delay std (ms)",
                                  "resp r", "cycle MAD (%)"},
                                 table);
    md << "\nMedian jitter " << fmt(summary.median_jitter_s * 1000.0, 1) << " ms, range ["
       << fmt(summary.jitter_min_s * 1000.0, 1) << ", "
       << fmt(summary.jitter_max_s * 1000.0, 1) << "] ms; " << summary.band_count << "/"
       << runs.size() << " mean delays within 150±35 ms.\n";
    md << "\n---\n" << comment_stamp(cfg) << "\n";
    io::write_file_atomic(join_path(args.out_dir, "summary.md"), md.str());
  }

  if (cfg.emits("csv") && !correlations.empty()) {
    const eval::Histogram2d h = eval::histogram2d(correlations, correlations, 10, 1);
    std::vector<std::vector<std::string>> rows;
    const double width = (h.x_max - h.x_min) / 10.0;
    for (int b = 0; b < 10; ++b)
      rows.push_back({io::format_double(h.x_min + b * width),
                      io::format_double(h.x_min + (b + 1) * width),
                      fmt(h.counts(b, 0), 0)});
    io::write_file_atomic(
        join_path(args.out_dir, "correlation_hist.csv"),
        report::csv_table({comment_stamp(cfg)}, {"r_lo", "r_hi", "count"}, rows));
  }
  if (cfg.emits("csv") && !pooled_rr.empty()) {
    const eval::Histogram2d h = eval::histogram2d(pooled_rr, pooled_delay, 12, 12);
    std::vector<std::vector<std::string>> rows;
    for (Index i = 0; i < h.counts.rows(); ++i) {
      std::vector<std::string> row;
      for (Index k = 0; k < h.counts.cols(); ++k) row.push_back(fmt(h.counts(i, k), 0));
      rows.push_back(std::move(row));
    }
    std::vector<std::string> header;
    for (Index k = 0; k < h.counts.cols(); ++k) header.push_back("delay_bin_" + std::to_string(k));
    io::write_file_atomic(
        join_path(args.out_dir, "delay_rr_hist.csv"),
        report::csv_table({comment_stamp(cfg),
                           "rows: RR bins " + io::format_double(h.x_min) + ".." +
                               io::format_double(h.x_max) + " s; cols: delay bins " +
                               io::format_double(h.y_min) + ".." +
                               io::format_double(h.y_max) + " s"},
                          header, rows));
  }
  if (cfg.emits("svg") && !pooled_rr.empty()) {
    report::Series scatter;
    scatter.x = pooled_rr;
    scatter.y = pooled_delay;
    scatter.lines = false;
    scatter.markers = true;
    scatter.label = "all runs";
    report::PlotOptions opt;
    opt.title = "Pooled per-beat delay vs RR";
    opt.x_label = "ECG RR interval (s)";
    opt.y_label = "PT trigger delay (s)";
    opt.provenance = comment_stamp(cfg);
    io::write_file_atomic(join_path(args.out_dir, "delay_rr_scatter.svg"),
                          report::render_svg_plot({scatter}, opt));
  }
  if (cfg.emits("svg") && correlations.size() >= 2) {
    const eval::Histogram2d h = eval::histogram2d(correlations, correlations, 10, 1);
    report::Series line;
    const double width = (h.x_max - h.x_min) / 10.0;
    for (int b = 0; b < 10; ++b) {
      line.x.push_back(h.x_min + (b + 0.5) * width);
      line.y.push_back(h.counts(b, 0));
    }
    line.label = "runs";
    line.markers = true;
    report::PlotOptions opt;
    opt.title = "Respiratory correlation across runs";
    opt.x_label = "Pearson r";
    opt.y_label = "runs";
    opt.provenance = comment_stamp(cfg);
    io::write_file_atomic(join_path(args.out_dir, "correlation_hist.svg"),
                          report::render_svg_plot({line}, opt));
  }

  std::cout << "report: " << runs.size() << " runs, median jitter "
            << fmt(summary.median_jitter_s * 1000.0, 1) << " ms, range ["
            << fmt(summary.jitter_min_s * 1000.0, 1) << ", "
            << fmt(summary.jitter_max_s * 1000.0, 1) << "] ms, " << summary.band_count
            << "/" << runs.size() << " mean delays within 150±35 ms\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// summary fixture

std::vector<FixtureRow> load_summary_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  std::vector<FixtureRow> rows;
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string trimmed = line;
    while (!trimmed.empty() && (trimmed.back() == '\r' || trimmed.back() == ' '))
      trimmed.pop_back();
    if (trimmed.empty() || trimmed.front() == '#') continue;
    std::vector<std::string> cells;
    std::istringstream ss(trimmed);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!header_seen) {
      if (cells.size() != 3 || cells[0] != "patient" || cells[1] != "mean_delay_ms" ||
          cells[2] != "std_delay_ms")
        throw Error("summary fixture " + path +
                    " must start with header patient,mean_delay_ms,std_delay_ms");
      header_seen = true;
      continue;
    }
    if (cells.size() != 3)
      throw Error("summary fixture line " + std::to_string(line_no) + " has " +
                  std::to_string(cells.size()) + " fields, expected 3");
    FixtureRow row;
    row.patient = cells[0];
    row.mean_delay_ms = io::parse_double(cells[1], "mean_delay_ms");
    row.std_delay_ms = io::parse_double(cells[2], "std_delay_ms");
    rows.push_back(std::move(row));
  }
  if (!header_seen) throw Error("summary fixture " + path + " has no header line");
  if (rows.empty()) throw Error("summary fixture " + path + " has no data rows");
  return rows;
}

}  // namespace ptmotion::cli
