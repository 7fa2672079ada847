#pragma once

#include "ptmotion/motion.hpp"
#include "ptmotion/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ptmotion::cli {

// Exit codes shared by every command: 0 success (warnings allowed), 1
// processing error, 2 usage error (bad flags, unknown names, nothing to do).
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

struct RunConfig {
  motion::RespiratoryConfig respiratory;
  motion::CardiacConfig cardiac;
  std::uint64_t seed = 42;
  std::string output_dir = ".";
  std::vector<std::string> emit = {"json", "csv"};  // subset of {json, csv, svg}

  bool emits(const std::string& kind) const;
  // Throws on unknown emit kinds, duplicate entries, or an empty output_dir.
  void validate() const;
};

// JSON round-trip for RunConfig. Load accepts a partial file: absent fields
// keep their defaults; unknown fields are rejected so typos cannot silently
// fall back to defaults.
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

// FNV-1a hash (16 hex digits) over the canonical JSON form of the config.
// Stamped into every output file so results trace back to their settings.
std::string config_hash(const RunConfig& cfg);

// Resolve the effective seed: --seed flag beats the PT_MOTION_SEED
// environment variable, which beats the config-file value.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag_seed,
                           const RunConfig& cfg);

struct SimulateArgs {
  std::string scenario = "normal";
  std::string out_dir;
};

// Writes recording.json + recording.csv + truth.json into out_dir and prints
// a one-line summary. Unknown scenario names exit 2 and list the valid ones.
int cmd_simulate(const SimulateArgs& args, const RunConfig& cfg);

struct ExtractArgs {
  std::string recording_path;  // header JSON of a PT recording
  std::string out_dir;
};

// Runs both extraction pipelines and writes respiratory_trace.txt,
// cardiac_trace.txt, pt_triggers.txt, and provenance.json (configuration,
// seed, selection diagnostics, warnings) into out_dir.
int cmd_extract(const ExtractArgs& args, const RunConfig& cfg);

struct EvaluateArgs {
  std::string pt_trace_path;    // extracted respiratory trace
  std::string ref_trace_path;   // reference respiratory trace
  std::string pt_triggers_path;
  std::string ecg_triggers_path;
  std::string truth_triggers_path;  // optional: enables unpaired classification
  std::string summary_fixture;      // optional: per-patient delay CSV; summary-only mode
  std::string out_dir;
};

// Compares extracted against reference signals and writes report.json +
// report.md (plus CSV/SVG extras per cfg.emit). With summary_fixture set,
// instead summarizes a per-patient delay table and prints the median jitter.
int cmd_evaluate(const EvaluateArgs& args, const RunConfig& cfg);

struct ReportArgs {
  std::vector<std::string> run_dirs;  // each holding a report.json from cmd_evaluate
  std::string out_dir;
};

// Aggregates evaluation runs: per-run summary table, delay statistics across
// runs, correlation histogram, pooled delay-vs-RR 2-D histogram as CSV, and
// optional SVG plots. A run directory without report.json exits 2.
int cmd_report(const ReportArgs& args, const RunConfig& cfg);

// Per-patient delay rows parsed from a summary fixture CSV with columns
// patient,mean_delay_ms,std_delay_ms (comments with '#', header required).
struct FixtureRow {
  std::string patient;
  double mean_delay_ms = 0.0;
  double std_delay_ms = 0.0;
};
std::vector<FixtureRow> load_summary_fixture(const std::string& path);

}  // namespace ptmotion::cli
