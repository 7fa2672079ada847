#pragma once

#include "ptmotion/types.hpp"

#include <vector>

namespace ptmotion::dsp {

enum class BandKind { lowpass, bandpass };

// Frequency band for filtering and spectral selection, in hertz.
// A lowpass band keeps [0, high_hz]; a bandpass band keeps [low_hz, high_hz].
struct BandSpec {
  double low_hz = 0.0;
  double high_hz = 0.8;
  BandKind kind = BandKind::lowpass;

  static BandSpec lowpass(double high_hz) { return {0.0, high_hz, BandKind::lowpass}; }
  static BandSpec bandpass(double low_hz, double high_hz) {
    return {low_hz, high_hz, BandKind::bandpass};
  }

  // Throws unless 0 <= low < high < Nyquist for the given sample interval.
  void validate(double dt) const;
};

struct SpectralPeak {
  double freq_hz = 0.0;
  double power = 0.0;
};

// Forward-backward 4th-order Butterworth filter (bilinear design), so the
// passband is phase-neutral. Each slice segment is filtered independently
// when boundaries are given; slopes are extended by odd reflection over
// three filter lengths before filtering, and segments shorter than that
// warm-up are rejected.
std::vector<double> zero_phase_filter(const std::vector<double>& x, double dt,
                                      const BandSpec& band,
                                      const std::vector<Index>& slice_boundaries = {});

// Location and power of the largest periodogram value inside [f_lo, f_hi].
// The signal is mean-removed, Hann-windowed, and zero-padded to at least 4x
// its length (more if needed to reach a 0.02 Hz grid). Requires the window
// to span at least two periods of f_lo.
SpectralPeak band_peak(const std::vector<double>& x, double dt, double f_lo, double f_hi);

// First-order finite difference: d[i] = x[i+1] - x[i]; length n-1.
std::vector<double> finite_difference(const std::vector<double>& x);

// Indices of local minima of d deeper than -prominence_factor times the
// scaled median absolute deviation of d (MAD * 1.4826). Minima closer than
// min_separation_s keep only the deepest.
std::vector<Index> detect_negative_peaks(const std::vector<double>& d, double dt,
                                         double min_separation_s,
                                         double prominence_factor);

// Decimate x from dt_in to the coarser grid dt_out: anti-alias lowpass at
// 0.45/dt_out, then linear interpolation onto the new grid. dt_out == dt_in
// returns x unchanged; dt_out < dt_in is an error.
std::vector<double> resample(const std::vector<double>& x, double dt_in, double dt_out);

// Linear interpolation of y (grid dt_in, shared origin) onto n_out samples
// spaced dt_out; the query grid is clamped to the source span.
std::vector<double> interp_linear(const std::vector<double>& y, double dt_in,
                                  double dt_out, Index n_out);

// Median of v (copies and sorts; even length averages the middle pair).
double median(std::vector<double> v);

// Robust sigma estimate: 1.4826 * median(|v - median(v)|).
double mad_sigma(const std::vector<double>& v);

}  // namespace ptmotion::dsp
