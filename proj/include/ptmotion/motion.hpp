#pragma once

#include "ptmotion/dsp.hpp"
#include "ptmotion/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ptmotion::motion {

struct RespiratoryConfig {
  dsp::BandSpec lowpass = dsp::BandSpec::lowpass(0.8);
  double selection_lo_hz = 0.1;   // the respiratory peak is sought here
  double selection_hi_hz = 0.6;
  int n_pcs_considered = 2;
  double decimate_to_hz = 50.0;   // respiration lives far below this

  // Throws if the selection band leaves the lowpass band or any band is
  // invalid for the sample interval.
  void validate(double dt) const;
};

// Replacement filter/detector settings for recordings where the default
// cardiac band or prominence misses beats (weak contraction, heavy
// arrhythmia). The default-constructed values are the documented preset;
// the pipeline applies them only when explicitly engaged, never silently.
struct ArrhythmiaOverrides {
  dsp::BandSpec bandpass = dsp::BandSpec::bandpass(0.6, 2.4);
  double prominence_factor = 2.0;
};

struct CardiacConfig {
  dsp::BandSpec bandpass = dsp::BandSpec::bandpass(0.5, 3.0);
  double selection_lo_hz = 0.5;
  double selection_hi_hz = 3.0;
  double prominence_factor = 3.0;
  double min_separation_s = 0.3;
  std::optional<int> n_components;  // force the PCA order; default: 95% variance rule
  std::optional<ArrhythmiaOverrides> arrhythmia_overrides;

  const dsp::BandSpec& effective_bandpass() const {
    return arrhythmia_overrides ? arrhythmia_overrides->bandpass : bandpass;
  }
  double effective_prominence() const {
    return arrhythmia_overrides ? arrhythmia_overrides->prominence_factor
                                : prominence_factor;
  }

  void validate(double dt) const;
};

// Triggers are discarded this close (in samples) to a slice junction: the
// forward-backward filter needs that many samples to settle, so a peak inside
// the zone may be a junction transient. 3x the tap count of the band's
// biquad cascade, the usual filtfilt warm-up.
Index junction_guard_samples(const dsp::BandSpec& band);

struct RespDiagnostics {
  int selected_pc = -1;                 // index into the considered PCs
  std::vector<double> band_power;       // selection-band peak power per PC
  double polarity_correlation = 0.0;    // candidate vs spine reference
  bool polarity_resolved = false;
  std::vector<std::string> warnings;
};

struct RespExtraction {
  MotionTrace trace;  // kind=respiratory, recording grid, larger = inspiration
  RespDiagnostics diag;
};

// Low-pass + PCA respiratory extraction: realize, per-slice normalize,
// zero-phase low-pass per column, decimate, PCA, pick the PC with the larger
// selection-band peak, resolve polarity against the feet-most spine channel,
// and interpolate back onto the recording grid.
RespExtraction extract_respiratory(const PtRecording& rec,
                                   const RespiratoryConfig& cfg = {});

// Flips `candidate` so it correlates positively with the low-pass-filtered
// real part of the spine channel with the largest z_index (per-slice
// centred). Without spine channels the trace is returned unchanged with
// polarity=arbitrary. The optional out-param reports the correlation used.
MotionTrace resolve_resp_polarity(const MotionTrace& candidate, const PtRecording& rec,
                                  double* correlation_out = nullptr);

enum class RespPhase { end_exp, mid_exp, mid_insp, end_insp };
const char* to_string(RespPhase p);

struct RespBins {
  std::vector<RespPhase> labels;  // one per trace sample
  std::array<double, 3> edges;    // 25th/50th/75th amplitude percentiles
};

// Amplitude-quartile binning of an inspiration-positive trace. Requires
// resolved polarity; a constant trace has no quartiles and is rejected.
RespBins bin_respiratory(const MotionTrace& trace);

struct CardiacDiagnostics {
  int n_components = 0;             // PCA order fed to ICA
  int selected_ic = -1;
  std::vector<double> band_power;   // selection-band peak power per IC
  double selected_peak_hz = 0.0;
  bool ica_converged = false;
  int ica_iterations = 0;
  bool polarity_resolved = false;
  std::vector<std::string> warnings;
};

struct CardiacExtraction {
  MotionTrace trace;     // kind=cardiac_filtered, systolic descent negative
  TriggerTrain triggers; // source=pt; empty (with warning) if polarity is ambiguous
  CardiacDiagnostics diag;
};

// PCA + ICA cardiac extraction: realize, per-slice normalize, whiten to K
// components (smallest K explaining >= 95% variance, clamped to [2,8], or
// cfg.n_components), symmetric ICA, pick the IC with the largest
// selection-band peak, band-pass per slice, fix the sign by derivative
// skewness, then detect negative derivative peaks per slice segment.
CardiacExtraction extract_cardiac(const PtRecording& rec, const CardiacConfig& cfg = {},
                                  std::uint64_t seed = 42);

// Sign rule: systole is fast and diastole slow, so a correctly signed trace
// has a negatively skewed derivative. Positive skewness flips the trace;
// |skewness| <= 1e-6 leaves it unchanged with polarity=arbitrary.
MotionTrace resolve_cardiac_sign(const MotionTrace& trace);

}  // namespace ptmotion::motion
