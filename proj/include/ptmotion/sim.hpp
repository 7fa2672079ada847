#pragma once

#include "ptmotion/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ptmotion::sim {

// One bulk-motion transient: a windowed oscillatory burst added to the
// artifact source channel.
struct HiccupEvent {
  double time_s = 0.0;
  double duration_s = 1.0;
  double magnitude = 1.0;
};

struct SimConfig {
  int n_coils = 16;           // supported range 16..28
  int n_slices = 8;
  double slice_duration_s = 10.0;
  double dt_s = 0.0028;
  double t0_s = 0.0;

  double resp_rate_hz = 0.25;
  double resp_amplitude = 1.0;  // relative units; 0 = apnea

  double mean_rr_s = 1.0;
  double rr_jitter_pct = 5.0;   // normal intervals drawn uniform in +/- this percent
  double pvc_probability = 0.0; // chance any interval is premature (0.45..0.6 of mean RR)
  double systole_fraction = 0.33;
  double cardiac_amplitude = 1.0;

  // Weak-contraction model: each beat independently has its systolic
  // excursion scaled by weak_beat_scale with probability weak_beat_fraction.
  // Scale 1 (the default) leaves every beat at full depth.
  double weak_beat_fraction = 0.0;
  double weak_beat_scale = 1.0;  // supported range (0.45, 1]

  double snr_db = 25.0;         // +infinity disables noise
  std::vector<HiccupEvent> hiccup_events;

  std::uint64_t seed = 1;

  Index samples_per_slice() const;
  Index n_samples() const;
  double systole_s() const { return systole_fraction * mean_rr_s; }

  // Throws on out-of-range fields or a sample interval too coarse to resolve
  // the systolic upstroke (dt must be < systole_fraction*mean_rr/5).
  void validate() const;
};

// Named presets covering the regimes the pipelines must handle.
SimConfig scenario(const std::string& name);

// Beat times plus per-beat premature flags (used to verify schedule
// statistics; the flags are not part of the exported ground truth).
struct BeatSchedule {
  std::vector<double> times;
  std::vector<bool> premature;
};

// Draws the beat schedule for cfg over [t0, t_end]. Intervals advance on a
// virtual grid; a beat whose systolic descent comes within 0.9 s of a slice
// junction (or of the recording start/end) is dropped while the grid keeps
// advancing: the zero-phase filters used during extraction are unreliable
// near segment edges, so a beat there could not be timed faithfully, and
// dropping it leaves the neighbouring beats' rhythm and timing untouched.
// junction times are absolute seconds.
BeatSchedule draw_beat_times(const SimConfig& cfg, double t_end,
                             const std::vector<double>& junction_times);

// Canonical cardiac source: from each beat, a half-cosine descent from the
// rest level to -1 over systole_s, then a fast exponential rebound toward +1
// (time constant = a third of the interval to the next beat) that flattens
// into a diastasis plateau and lands every cycle back on the same rest
// level. Intervals longer than
// 1.35x the mean RR instead settle to the nominal cycle-mean level, hold it,
// and ramp back up just before the next descent, so pauses carry no
// low-frequency pulse. Steepest descent is at beat + systole_s/2 exactly.
// Used by simulate() and by tests as the waveform oracle.
std::vector<double> cardiac_waveform(const std::vector<double>& beats, double t0,
                                     double dt, Index n, double systole_s,
                                     double mean_rr_s);

// Same waveform with a per-beat descent depth in (0.45, 1]: beat k descends
// to a trough `depth[k]` of the way from its start level to -1, so weak beats
// carve a proportionally shallower dip while keeping the same timing. An
// empty vector means full depth everywhere; otherwise one entry per beat.
std::vector<double> cardiac_waveform(const std::vector<double>& beats,
                                     const std::vector<double>& depths, double t0,
                                     double dt, Index n, double systole_s,
                                     double mean_rr_s);

struct SimGroundTruth {
  MotionTrace resp_trace;      // inspiration-positive
  MotionTrace artifact_trace;  // zero outside hiccup events
  TriggerTrain beat_times;     // source = ground_truth, anchored at systole onset
  Eigen::MatrixXcd mixing;     // n_coils x 3: respiratory, cardiac, artifact gains
};

struct SimOutput {
  PtRecording recording;
  SimGroundTruth truth;
};

// Generates coil samples: per-slice baseline + mixing * (resp, cardiac,
// artifact) sources + complex white noise at snr_db. Spine channels occupy
// the largest z_index values and receive positive real respiratory gains.
// Pure function of cfg (independent sub-streams per concern, so e.g.
// disabling noise does not change the beat schedule).
SimOutput simulate(const SimConfig& cfg);

void save_ground_truth(const SimGroundTruth& truth, const std::filesystem::path& path);
SimGroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace ptmotion::sim
