#include "ptmotion/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

namespace ptmotion::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

void check_finite(const std::vector<double>& x, const char* who) {
  for (double v : x)
    if (!std::isfinite(v)) throw Error(std::string(who) + ": non-finite input");
}

// ---------------------------------------------------------------------------
// Butterworth design via the bilinear transform, factored into biquads.
// ---------------------------------------------------------------------------

struct Biquad {
  double b0, b1, b2;  // numerator
  double a1, a2;      // denominator (a0 == 1)

  double dc_gain() const { return (b0 + b1 + b2) / (1.0 + a1 + a2); }
};

struct SosFilter {
  std::vector<Biquad> sections;
};

std::complex<double> bilinear(std::complex<double> s, double dt) {
  return (1.0 + s * (dt / 2.0)) / (1.0 - s * (dt / 2.0));
}

// Denominator coefficients of (1 - z_pole z^-1)(1 - conj(z_pole) z^-1).
void pole_pair(std::complex<double> z, double& a1, double& a2) {
  a1 = -2.0 * z.real();
  a2 = std::norm(z);
}

std::complex<double> eval_section(const Biquad& q, std::complex<double> z) {
  std::complex<double> zi = 1.0 / z;
  return (q.b0 + q.b1 * zi + q.b2 * zi * zi) / (1.0 + q.a1 * zi + q.a2 * zi * zi);
}

double cascade_magnitude(const SosFilter& f, double freq_hz, double dt) {
  std::complex<double> z = std::polar(1.0, 2.0 * kPi * freq_hz * dt);
  std::complex<double> h = 1.0;
  for (const auto& q : f.sections) h *= eval_section(q, z);
  return std::abs(h);
}

// Order-4 analog Butterworth prototype poles with positive imaginary part;
// their conjugates complete the set.
std::array<std::complex<double>, 2> prototype_poles_upper() {
  // exp(i*pi*(2k+1)/(2n) + i*pi/2) for k = 0, 1 lies in the upper-left quadrant.
  std::array<std::complex<double>, 2> p;
  for (int k = 0; k < 2; ++k) {
    double theta = kPi / 2.0 + kPi * (2.0 * k + 1.0) / 8.0;
    p[k] = std::polar(1.0, theta);
  }
  return p;
}

SosFilter design_butterworth(const BandSpec& band, double dt) {
  band.validate(dt);
  SosFilter f;

  if (band.kind == BandKind::lowpass) {
    const double wc = 2.0 / dt * std::tan(kPi * band.high_hz * dt);  // prewarped
    for (const auto& proto : prototype_poles_upper()) {
      std::complex<double> zp = bilinear(proto * wc, dt);
      Biquad q{1.0, 2.0, 1.0, 0.0, 0.0};  // both zeros at z = -1
      pole_pair(zp, q.a1, q.a2);
      f.sections.push_back(q);
    }
    // Unit gain at DC.
    double g = 1.0;
    for (const auto& q : f.sections) g *= q.dc_gain();
    f.sections.front().b0 /= g;
    f.sections.front().b1 /= g;
    f.sections.front().b2 /= g;
    return f;
  }

  // Band-pass: transform each prototype pole with s -> (s^2 + w0^2)/(B s),
  // yielding two pole pairs per prototype pole (8 poles in total) plus
  // matching zeros at z = +1 and z = -1.
  const double w1 = 2.0 / dt * std::tan(kPi * band.low_hz * dt);
  const double w2 = 2.0 / dt * std::tan(kPi * band.high_hz * dt);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;
  for (const auto& proto : prototype_poles_upper()) {
    std::complex<double> pb = proto * (bw / 2.0);
    std::complex<double> disc = std::sqrt(pb * pb - w0 * w0);
    for (std::complex<double> s : {pb + disc, pb - disc}) {
      std::complex<double> zp = bilinear(s, dt);
      Biquad q{1.0, 0.0, -1.0, 0.0, 0.0};  // zeros at z = +1 and z = -1
      pole_pair(zp, q.a1, q.a2);
      f.sections.push_back(q);
    }
  }
  // Unit gain at the (unwarped) centre frequency.
  const double f_center = std::atan(w0 * dt / 2.0) / (kPi * dt);
  double g = cascade_magnitude(f, f_center, dt);
  f.sections.front().b0 /= g;
  f.sections.front().b1 /= g;
  f.sections.front().b2 /= g;
  return f;
}

// One biquad stage in transposed direct form II with explicit state.
struct BiquadState {
  double s1 = 0.0, s2 = 0.0;

  double step(const Biquad& q, double x) {
    double y = q.b0 * x + s1;
    s1 = q.b1 * x - q.a1 * y + s2;
    s2 = q.b2 * x - q.a2 * y;
    return y;
  }
};

// Run the cascade over x in place. Initial states are chosen so a constant
// input passes through with no start-up transient (steady-state priming).
void sos_filter_inplace(const SosFilter& f, std::vector<double>& x) {
  if (x.empty()) return;
  std::vector<BiquadState> state(f.sections.size());
  double level = x.front();
  for (std::size_t s = 0; s < f.sections.size(); ++s) {
    const Biquad& q = f.sections[s];
    double g = q.dc_gain();
    state[s].s1 = (g - q.b0) * level;
    state[s].s2 = (q.b2 - q.a2 * g) * level;
    level *= g;
  }
  for (double& v : x) {
    for (std::size_t s = 0; s < f.sections.size(); ++s) v = state[s].step(f.sections[s], v);
  }
}

// Samples per characteristic period of the band: the edge whose time scale
// dominates the transient (the cutoff for lowpass, the lower edge for
// bandpass).
Index filter_length_samples(const BandSpec& band, double dt) {
  double f_char = (band.kind == BandKind::lowpass) ? band.high_hz : band.low_hz;
  return static_cast<Index>(std::ceil(1.0 / (f_char * dt)));
}

std::vector<double> filtfilt_segment(const SosFilter& f, const BandSpec& band,
                                     const double* x, Index n, double dt) {
  const Index pad = 3 * filter_length_samples(band, dt);
  if (n <= pad)
    throw Error("zero_phase_filter: input shorter than filter warm-up (" +
                std::to_string(n) + " samples, need more than " + std::to_string(pad) + ")");

  // Odd reflection about both end points keeps the local slope continuous.
  std::vector<double> buf;
  buf.reserve(static_cast<std::size_t>(n + 2 * pad));
  for (Index i = pad; i >= 1; --i) buf.push_back(2.0 * x[0] - x[i]);
  buf.insert(buf.end(), x, x + n);
  for (Index i = n - 2; i >= n - 1 - pad; --i) buf.push_back(2.0 * x[n - 1] - x[i]);

  sos_filter_inplace(f, buf);
  std::reverse(buf.begin(), buf.end());
  sos_filter_inplace(f, buf);
  std::reverse(buf.begin(), buf.end());

  return std::vector<double>(buf.begin() + pad, buf.begin() + pad + n);
}

}  // namespace

void BandSpec::validate(double dt) const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("band: dt must be positive");
  const double nyquist = 0.5 / dt;
  if (kind == BandKind::lowpass) {
    if (!(high_hz > 0.0)) throw Error("band: lowpass cutoff must be positive");
    if (low_hz != 0.0) throw Error("band: lowpass low edge must be 0");
  } else {
    if (!(low_hz > 0.0)) throw Error("band: bandpass low edge must be positive");
    if (!(high_hz > low_hz)) throw Error("band: band edges must satisfy low < high");
  }
  if (!(high_hz < nyquist))
    throw Error("band: high edge " + std::to_string(high_hz) +
                " Hz must lie below the Nyquist frequency " + std::to_string(nyquist) + " Hz");
}

std::vector<double> zero_phase_filter(const std::vector<double>& x, double dt,
                                      const BandSpec& band,
                                      const std::vector<Index>& slice_boundaries) {
  band.validate(dt);
  check_finite(x, "zero_phase_filter");
  if (x.empty()) throw Error("zero_phase_filter: empty input");

  const SosFilter f = design_butterworth(band, dt);
  const std::vector<Index>& bounds =
      slice_boundaries.empty() ? std::vector<Index>{0} : slice_boundaries;

  std::vector<double> out(x.size());
  for (auto [begin, end] : segment_ranges(bounds, static_cast<Index>(x.size()))) {
    std::vector<double> seg = filtfilt_segment(f, band, x.data() + begin, end - begin, dt);
    std::copy(seg.begin(), seg.end(), out.begin() + begin);
  }
  return out;
}

namespace {

// In-place iterative radix-2 FFT; n must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * kPi / static_cast<double>(len);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

SpectralPeak band_peak(const std::vector<double>& x, double dt, double f_lo, double f_hi) {
  check_finite(x, "band_peak");
  if (!(dt > 0.0)) throw Error("band_peak: dt must be positive");
  if (!(f_lo > 0.0) || !(f_hi > f_lo)) throw Error("band_peak: band edges must satisfy 0 < low < high");
  if (!(f_hi <= 0.5 / dt)) throw Error("band_peak: high edge above Nyquist");
  const std::size_t n = x.size();
  if (static_cast<double>(n) * dt < 2.0 / f_lo)
    throw Error("band_peak: window too short for band (need >= " +
                std::to_string(2.0 / f_lo) + " s)");

  // Mean-removed, Hann-windowed, zero-padded periodogram. Padding gives at
  // least 4x the record length and at least a 0.02 Hz frequency grid.
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  std::size_t nfft = next_pow2(std::max<std::size_t>(
      4 * n, static_cast<std::size_t>(std::ceil(1.0 / (0.02 * dt)))));
  std::vector<std::complex<double>> spec(nfft, 0.0);
  double wsum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double w = (n == 1) ? 1.0
                        : 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) /
                                                static_cast<double>(n - 1)));
    wsum2 += w * w;
    spec[i] = (x[i] - mean) * w;
  }
  fft_pow2(spec);

  const double df = 1.0 / (static_cast<double>(nfft) * dt);
  const double scale = 2.0 / (wsum2 / dt);  // one-sided density normalisation
  std::size_t k_lo = static_cast<std::size_t>(std::ceil(f_lo / df - 1e-9));
  std::size_t k_hi = static_cast<std::size_t>(std::floor(f_hi / df + 1e-9));
  k_hi = std::min(k_hi, nfft / 2);
  if (k_lo > k_hi) throw Error("band_peak: band contains no frequency bins");

  SpectralPeak peak{0.0, -1.0};
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    double p = std::norm(spec[k]) * scale;
    if (p > peak.power) peak = {static_cast<double>(k) * df, p};
  }
  return peak;
}

std::vector<double> finite_difference(const std::vector<double>& x) {
  if (x.size() < 2) throw Error("finite_difference: need at least 2 samples");
  check_finite(x, "finite_difference");
  std::vector<double> d(x.size() - 1);
  for (std::size_t i = 0; i + 1 < x.size(); ++i) d[i] = x[i + 1] - x[i];
  return d;
}

double median(std::vector<double> v) {
  if (v.empty()) throw Error("median: empty input");
  std::sort(v.begin(), v.end());
  std::size_t mid = v.size() / 2;
  if (v.size() % 2 == 1) return v[mid];
  return 0.5 * (v[mid - 1] + v[mid]);
}

double mad_sigma(const std::vector<double>& v) {
  double med = median(v);
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) dev[i] = std::abs(v[i] - med);
  return 1.4826 * median(std::move(dev));
}

std::vector<Index> detect_negative_peaks(const std::vector<double>& d, double dt,
                                         double min_separation_s,
                                         double prominence_factor) {
  if (d.empty()) throw Error("detect_negative_peaks: empty input");
  check_finite(d, "detect_negative_peaks");
  if (!(dt > 0.0)) throw Error("detect_negative_peaks: dt must be positive");
  if (!(min_separation_s > 0.0))
    throw Error("detect_negative_peaks: min_separation_s must be positive");
  if (!(prominence_factor > 0.0))
    throw Error("detect_negative_peaks: prominence_factor must be positive");

  const double threshold = -prominence_factor * mad_sigma(d);
  std::vector<Index> candidates;
  for (std::size_t i = 1; i + 1 < d.size(); ++i) {
    // Strict drop on the left, non-strict rise on the right, so a flat
    // trough yields exactly one candidate (its first sample).
    if (d[i] < d[i - 1] && d[i] <= d[i + 1] && d[i] < threshold)
      candidates.push_back(static_cast<Index>(i));
  }

  // Enforce separation keeping the deeper dip; equal depths keep the earlier.
  std::stable_sort(candidates.begin(), candidates.end(), [&](Index a, Index b) {
    if (d[a] != d[b]) return d[a] < d[b];
    return a < b;
  });
  std::vector<Index> kept;
  for (Index c : candidates) {
    bool clear = true;
    for (Index k : kept) {
      if (std::abs(static_cast<double>(c - k)) * dt < min_separation_s) {
        clear = false;
        break;
      }
    }
    if (clear) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<double> interp_linear(const std::vector<double>& y, double dt_in,
                                  double dt_out, Index n_out) {
  if (y.empty()) throw Error("interp_linear: empty input");
  if (!(dt_in > 0.0) || !(dt_out > 0.0)) throw Error("interp_linear: dt must be positive");
  std::vector<double> out(static_cast<std::size_t>(n_out));
  const Index n = static_cast<Index>(y.size());
  for (Index k = 0; k < n_out; ++k) {
    double pos = static_cast<double>(k) * dt_out / dt_in;
    Index i = static_cast<Index>(std::floor(pos));
    if (i >= n - 1) {
      out[k] = y[n - 1];
      continue;
    }
    if (i < 0) i = 0;
    double frac = pos - static_cast<double>(i);
    out[k] = y[i] + frac * (y[i + 1] - y[i]);
  }
  return out;
}

std::vector<double> resample(const std::vector<double>& x, double dt_in, double dt_out) {
  check_finite(x, "resample");
  if (!(dt_out > 0.0) || !std::isfinite(dt_out)) throw Error("resample: dt_out must be positive");
  if (!(dt_in > 0.0) || !std::isfinite(dt_in)) throw Error("resample: dt_in must be positive");
  if (dt_out == dt_in) return x;
  if (dt_out < dt_in) throw Error("resample: dt_out must not be finer than dt_in");
  if (x.size() < 2) throw Error("resample: need at least 2 samples");

  std::vector<double> filtered =
      zero_phase_filter(x, dt_in, BandSpec::lowpass(0.45 / dt_out));
  Index n_out = static_cast<Index>(std::floor(static_cast<double>(x.size() - 1) *
                                              dt_in / dt_out)) + 1;
  return interp_linear(filtered, dt_in, dt_out, n_out);
}

}  // namespace ptmotion::dsp
