#include "ptmotion/motion.hpp"

#include "ptmotion/bss.hpp"
#include "ptmotion/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

namespace ptmotion::motion {
namespace {

constexpr double kMinDurationS = 10.0;

std::vector<double> column_vector(const Eigen::MatrixXd& m, Index col) {
  return std::vector<double>(m.col(col).data(), m.col(col).data() + m.rows());
}

// Pearson correlation that reports degeneracy instead of throwing: returns
// false when either input has no variance.
bool try_pearson(const std::vector<double>& a, const std::vector<double>& b,
                 double& r_out) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const double denom = std::sqrt(saa) * std::sqrt(sbb);
  if (!(denom > 0.0) || !std::isfinite(denom)) return false;
  r_out = std::clamp(sab / denom, -1.0, 1.0);
  return true;
}

// Population skewness m3 / m2^1.5; zero for a constant input.
double skewness(const std::vector<double>& d) {
  const double n = static_cast<double>(d.size());
  if (d.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : d) {
    const double e = v - mean;
    m2 += e * e;
    m3 += e * e * e;
  }
  m2 /= n;
  m3 /= n;
  if (!(m2 > 0.0)) return 0.0;
  return m3 / (m2 * std::sqrt(m2));
}

// First differences taken within each slice segment only, so junction steps
// never enter the statistic.
std::vector<double> segment_derivatives(const MotionTrace& trace) {
  std::vector<double> d;
  if (!trace.values.empty()) d.reserve(trace.values.size() - 1);
  for (auto [begin, end] : trace.segments())
    for (Index i = begin; i + 1 < end; ++i)
      d.push_back(trace.values[i + 1] - trace.values[i]);
  return d;
}

// Linear-interpolation percentile of a sorted sample (the h = (n-1)p rule).
double percentile_sorted(const std::vector<double>& sorted, double p) {
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

void require_min_duration(const PtRecording& rec, const char* pipeline) {
  if (rec.duration_s() + 1e-9 < kMinDurationS)
    throw Error(std::string(pipeline) + " needs a recording of at least " +
                io::format_double(kMinDurationS) + " s, got " +
                io::format_double(rec.duration_s()) + " s");
}

// Index of the spine channel with the largest z_index (first on ties);
// -1 when the recording has no spine channels.
Index feet_most_spine_channel(const PtRecording& rec) {
  Index best = -1;
  int best_z = 0;
  for (Index ch = 0; ch < rec.n_channels(); ++ch) {
    if (static_cast<std::size_t>(ch) >= rec.channels.size()) break;
    const ChannelMeta& meta = rec.channels[static_cast<std::size_t>(ch)];
    if (meta.group != CoilGroup::spine) continue;
    if (best < 0 || meta.z_index > best_z) {
      best = ch;
      best_z = meta.z_index;
    }
  }
  return best;
}

}  // namespace

void RespiratoryConfig::validate(double dt) const {
  if (lowpass.kind != dsp::BandKind::lowpass)
    throw Error("RespiratoryConfig.lowpass must be a low-pass band");
  lowpass.validate(dt);
  if (!(selection_lo_hz > 0.0) || !(selection_hi_hz > selection_lo_hz))
    throw Error("RespiratoryConfig selection band invalid: need 0 < lo < hi, got [" +
                io::format_double(selection_lo_hz) + ", " +
                io::format_double(selection_hi_hz) + "]");
  if (selection_hi_hz > lowpass.high_hz)
    throw Error("RespiratoryConfig selection band must lie inside the lowpass band: " +
                io::format_double(selection_hi_hz) + " Hz > " +
                io::format_double(lowpass.high_hz) + " Hz");
  if (n_pcs_considered < 1)
    throw Error("RespiratoryConfig.n_pcs_considered must be >= 1");
  if (!(decimate_to_hz > 0.0) || !std::isfinite(decimate_to_hz))
    throw Error("RespiratoryConfig.decimate_to_hz must be positive and finite");
  if (selection_hi_hz >= 0.5 * decimate_to_hz)
    throw Error("RespiratoryConfig.decimate_to_hz too low: selection band reaches " +
                io::format_double(selection_hi_hz) + " Hz, Nyquist after decimation is " +
                io::format_double(0.5 * decimate_to_hz) + " Hz");
}

void CardiacConfig::validate(double dt) const {
  if (bandpass.kind != dsp::BandKind::bandpass)
    throw Error("CardiacConfig.bandpass must be a band-pass band");
  bandpass.validate(dt);
  if (!(selection_lo_hz > 0.0) || !(selection_hi_hz > selection_lo_hz))
    throw Error("CardiacConfig selection band invalid: need 0 < lo < hi, got [" +
                io::format_double(selection_lo_hz) + ", " +
                io::format_double(selection_hi_hz) + "]");
  if (selection_hi_hz >= 0.5 / dt)
    throw Error("CardiacConfig selection band reaches " +
                io::format_double(selection_hi_hz) + " Hz, at or above Nyquist " +
                io::format_double(0.5 / dt) + " Hz");
  if (!(prominence_factor > 0.0))
    throw Error("CardiacConfig.prominence_factor must be positive");
  if (!(min_separation_s > 0.0))
    throw Error("CardiacConfig.min_separation_s must be positive");
  if (n_components && *n_components < 2)
    throw Error("CardiacConfig.n_components must be >= 2, got " +
                std::to_string(*n_components));
  if (arrhythmia_overrides) {
    if (arrhythmia_overrides->bandpass.kind != dsp::BandKind::bandpass)
      throw Error("ArrhythmiaOverrides.bandpass must be a band-pass band");
    arrhythmia_overrides->bandpass.validate(dt);
    if (!(arrhythmia_overrides->prominence_factor > 0.0))
      throw Error("ArrhythmiaOverrides.prominence_factor must be positive");
  }
}

Index junction_guard_samples(const dsp::BandSpec& band) {
  const Index n_biquads = band.kind == dsp::BandKind::bandpass ? 4 : 2;
  const Index taps = 2 * n_biquads + 1;  // FIR-equivalent length of the cascade
  return 3 * taps;
}

RespExtraction extract_respiratory(const PtRecording& rec, const RespiratoryConfig& cfg) {
  rec.validate();
  cfg.validate(rec.dt);
  require_min_duration(rec, "respiratory extraction");

  PtRecording work = rec;
  io::normalize_slices_inplace(work);
  bss::RealizedMatrix rm = bss::realize(work);

  // Low-pass every real/imaginary channel column on the native grid, slice
  // by slice, then move to the coarse grid where respiration is analysed.
  const double dt_out = 1.0 / cfg.decimate_to_hz;
  const bool decimating = dt_out > rec.dt * (1.0 + 1e-12);
  const double dt_work = decimating ? dt_out : rec.dt;

  Eigen::MatrixXd low;
  for (Index c = 0; c < rm.data.cols(); ++c) {
    std::vector<double> col = column_vector(rm.data, c);
    col = dsp::zero_phase_filter(col, rec.dt, cfg.lowpass, rec.slice_boundaries);
    if (decimating) col = dsp::resample(col, rec.dt, dt_out);
    if (low.size() == 0) low.resize(static_cast<Index>(col.size()), rm.data.cols());
    low.col(c) = Eigen::Map<const Eigen::VectorXd>(col.data(), static_cast<Index>(col.size()));
  }

  const Index n_work = low.rows();
  const Index k = std::min<Index>(cfg.n_pcs_considered, std::min(low.cols(), n_work - 1));
  bss::RealizedMatrix centered = bss::center_columns(low);
  bss::PcaResult p = bss::pca(centered, k);

  RespDiagnostics diag;
  diag.band_power.resize(static_cast<std::size_t>(k), 0.0);
  Index selected = 0;
  double best_power = -1.0;
  for (Index j = 0; j < k; ++j) {
    std::vector<double> score = column_vector(p.scores, j);
    dsp::SpectralPeak peak =
        dsp::band_peak(score, dt_work, cfg.selection_lo_hz, cfg.selection_hi_hz);
    diag.band_power[static_cast<std::size_t>(j)] = peak.power;
    if (peak.power > best_power) {
      best_power = peak.power;
      selected = j;
    }
  }
  diag.selected_pc = static_cast<int>(selected);

  // Degeneracy check: a coherent breathing oscillation concentrates roughly
  // 50x the component's variance at its spectral peak (measured across
  // scenarios), while a motion-free noise floor reaches only ~10-12x. A peak
  // below the mid-gap ratio means the selection band holds no real
  // respiration (breath-hold, apnea), so downstream consumers are warned.
  constexpr double kDegeneratePeakToVariance = 25.0;
  {
    const Eigen::VectorXd score = p.scores.col(selected);
    const double variance = score.squaredNorm() / static_cast<double>(score.size());
    if (!(best_power > kDegeneratePeakToVariance * variance)) {
      char text[192];
      std::snprintf(text, sizeof(text),
                    "respiratory component looks degenerate: selection-band peak "
                    "explains %.1fx the component variance (coherent breathing "
                    "reaches ~50x); treat the trace as no-motion",
                    variance > 0.0 ? best_power / variance : 0.0);
      diag.warnings.emplace_back(text);
    }
  }

  MotionTrace candidate;
  candidate.values = column_vector(p.scores, selected);
  candidate.dt = dt_work;
  candidate.t0 = rec.t0;
  candidate.kind = TraceKind::respiratory;
  candidate.polarity = Polarity::arbitrary;
  candidate.slice_boundaries = {0};

  double r = 0.0;
  MotionTrace oriented = resolve_resp_polarity(candidate, rec, &r);
  diag.polarity_correlation = r;
  diag.polarity_resolved = oriented.polarity == Polarity::resolved;
  if (!diag.polarity_resolved) {
    if (feet_most_spine_channel(rec) < 0)
      diag.warnings.push_back(
          "recording has no spine channels; respiratory polarity left arbitrary");
    else
      diag.warnings.push_back(
          "spine polarity reference has no variance; respiratory polarity left arbitrary");
  }

  RespExtraction out;
  out.trace.values = decimating
                         ? dsp::interp_linear(oriented.values, dt_work, rec.dt, rec.n_samples())
                         : oriented.values;
  out.trace.dt = rec.dt;
  out.trace.t0 = rec.t0;
  out.trace.kind = TraceKind::respiratory;
  out.trace.polarity = oriented.polarity;
  out.trace.slice_boundaries = rec.slice_boundaries;
  out.diag = std::move(diag);
  return out;
}

MotionTrace resolve_resp_polarity(const MotionTrace& candidate, const PtRecording& rec,
                                  double* correlation_out) {
  candidate.validate();
  rec.validate();
  if (correlation_out) *correlation_out = 0.0;

  MotionTrace out = candidate;
  const Index spine = feet_most_spine_channel(rec);
  if (spine < 0) {
    out.polarity = Polarity::arbitrary;
    return out;
  }

  // Reference: low-passed real part of the feet-most spine channel, each
  // slice centred so junction offsets cannot dominate the correlation.
  std::vector<double> ref(static_cast<std::size_t>(rec.n_samples()));
  for (Index i = 0; i < rec.n_samples(); ++i)
    ref[static_cast<std::size_t>(i)] = rec.samples(i, spine).real();
  ref = dsp::zero_phase_filter(ref, rec.dt, dsp::BandSpec::lowpass(0.8),
                               rec.slice_boundaries);
  for (auto [begin, end] : rec.segments()) {
    double mean = 0.0;
    for (Index i = begin; i < end; ++i) mean += ref[static_cast<std::size_t>(i)];
    mean /= static_cast<double>(end - begin);
    for (Index i = begin; i < end; ++i) ref[static_cast<std::size_t>(i)] -= mean;
  }

  std::vector<double> ref_on_grid =
      dsp::interp_linear(ref, rec.dt, candidate.dt, candidate.n_samples());

  double r = 0.0;
  if (!try_pearson(candidate.values, ref_on_grid, r)) {
    out.polarity = Polarity::arbitrary;
    return out;
  }
  if (correlation_out) *correlation_out = r;
  if (r < 0.0)
    for (double& v : out.values) v = -v;
  out.polarity = Polarity::resolved;
  return out;
}

const char* to_string(RespPhase p) {
  switch (p) {
    case RespPhase::end_exp: return "end_exp";
    case RespPhase::mid_exp: return "mid_exp";
    case RespPhase::mid_insp: return "mid_insp";
    case RespPhase::end_insp: return "end_insp";
  }
  return "end_exp";
}

RespBins bin_respiratory(const MotionTrace& trace) {
  trace.validate();
  if (trace.polarity != Polarity::resolved)
    throw Error("respiratory binning requires resolved polarity");
  if (trace.n_samples() < 4)
    throw Error("respiratory binning needs at least 4 samples, got " +
                std::to_string(trace.n_samples()));

  std::vector<double> sorted = trace.values;
  std::sort(sorted.begin(), sorted.end());
  if (!(sorted.back() > sorted.front()))
    throw Error("degenerate amplitude distribution: trace has zero range");

  RespBins bins;
  bins.edges = {percentile_sorted(sorted, 0.25), percentile_sorted(sorted, 0.50),
                percentile_sorted(sorted, 0.75)};
  bins.labels.reserve(trace.values.size());
  for (double v : trace.values) {
    RespPhase p = RespPhase::end_insp;
    if (v <= bins.edges[0])
      p = RespPhase::end_exp;
    else if (v <= bins.edges[1])
      p = RespPhase::mid_exp;
    else if (v <= bins.edges[2])
      p = RespPhase::mid_insp;
    bins.labels.push_back(p);
  }
  return bins;
}

CardiacExtraction extract_cardiac(const PtRecording& rec, const CardiacConfig& cfg,
                                  std::uint64_t seed) {
  rec.validate();
  cfg.validate(rec.dt);
  require_min_duration(rec, "cardiac extraction");

  PtRecording work = rec;
  io::normalize_slices_inplace(work);
  bss::RealizedMatrix rm = bss::realize(work);

  const Index n = rm.data.rows();
  const Index n_cols = rm.data.cols();
  const Index k_cap = std::min(n_cols, n - 1);

  Index k = 0;
  if (cfg.n_components) {
    k = *cfg.n_components;
    if (k < 2 || k > k_cap)
      throw Error("n_components must lie in [2, " + std::to_string(k_cap) + "], got " +
                  std::to_string(k));
  } else {
    // Smallest order whose leading eigenvalues explain >= 95% of the total
    // variance, clamped to [2, 8] (and to the rank bound).
    const Index k_max = std::min<Index>(8, k_cap);
    const double total_var = rm.data.squaredNorm() / static_cast<double>(n - 1);
    bss::PcaResult spectrum = bss::pca(rm, k_max);
    double cum = 0.0;
    k = k_max;
    for (Index j = 0; j < spectrum.eigenvalues.size(); ++j) {
      cum += spectrum.eigenvalues[j];
      if (cum >= 0.95 * total_var) {
        k = j + 1;
        break;
      }
    }
    k = std::max<Index>(k, 2);
  }

  bss::Whitened wh = bss::whiten(rm, k);
  bss::IcaResult ica = bss::fast_ica(wh.scores_white, seed);

  CardiacDiagnostics diag;
  diag.n_components = static_cast<int>(k);
  diag.ica_converged = ica.converged;
  diag.ica_iterations = ica.iterations;
  if (!ica.converged)
    diag.warnings.push_back("independent component analysis did not converge");

  diag.band_power.resize(static_cast<std::size_t>(k), 0.0);
  Index selected = 0;
  double best_power = -1.0;
  double best_freq = 0.0;
  for (Index j = 0; j < k; ++j) {
    std::vector<double> src = column_vector(ica.sources, j);
    dsp::SpectralPeak peak =
        dsp::band_peak(src, rec.dt, cfg.selection_lo_hz, cfg.selection_hi_hz);
    diag.band_power[static_cast<std::size_t>(j)] = peak.power;
    if (peak.power > best_power) {
      best_power = peak.power;
      best_freq = peak.freq_hz;
      selected = j;
    }
  }
  diag.selected_ic = static_cast<int>(selected);
  diag.selected_peak_hz = best_freq;

  std::vector<double> src = column_vector(ica.sources, selected);
  src = dsp::zero_phase_filter(src, rec.dt, cfg.effective_bandpass(), rec.slice_boundaries);

  MotionTrace trace;
  trace.values = std::move(src);
  trace.dt = rec.dt;
  trace.t0 = rec.t0;
  trace.kind = TraceKind::cardiac_filtered;
  trace.polarity = Polarity::arbitrary;
  trace.slice_boundaries = rec.slice_boundaries;

  trace = resolve_cardiac_sign(trace);
  diag.polarity_resolved = trace.polarity == Polarity::resolved;

  CardiacExtraction out;
  out.triggers.source = TriggerSource::pt;
  if (!diag.polarity_resolved) {
    diag.warnings.push_back(
        "cardiac sign ambiguous (derivative skewness inside tie band); triggers withheld");
    out.trace = std::move(trace);
    out.diag = std::move(diag);
    return out;
  }

  // Detect negative derivative peaks per slice segment; peaks inside the
  // filter's settling zone next to a junction are discarded as transients.
  const Index guard = junction_guard_samples(cfg.effective_bandpass());
  struct Candidate {
    double time;
    double depth;
  };
  std::vector<Candidate> found;
  for (auto [begin, end] : trace.segments()) {
    std::vector<double> seg(trace.values.begin() + begin, trace.values.begin() + end);
    std::vector<double> d = dsp::finite_difference(seg);
    std::vector<Index> idx = dsp::detect_negative_peaks(d, rec.dt, cfg.min_separation_s,
                                                        cfg.effective_prominence());
    const double seg_len = static_cast<double>(end - begin);
    for (Index i : idx) {
      const double pos = static_cast<double>(i) + 0.5;  // between samples i and i+1
      if (pos < static_cast<double>(guard)) continue;
      if (seg_len - 1.0 - pos < static_cast<double>(guard)) continue;
      found.push_back({rec.t0 + (static_cast<double>(begin) + pos) * rec.dt, d[i]});
    }
  }

  // Segments are detected independently, so enforce the minimum separation
  // across junctions too: deepest peak wins.
  std::sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.time < b.time;
  });
  std::vector<double> kept;
  for (const Candidate& c : found) {
    bool clash = false;
    for (double t : kept)
      if (std::abs(t - c.time) < cfg.min_separation_s) {
        clash = true;
        break;
      }
    if (!clash) kept.push_back(c.time);
  }
  std::sort(kept.begin(), kept.end());

  out.triggers.times = std::move(kept);
  if (out.triggers.times.empty())
    diag.warnings.push_back("no cardiac triggers detected");
  out.triggers.validate();
  out.trace = std::move(trace);
  out.diag = std::move(diag);
  return out;
}

MotionTrace resolve_cardiac_sign(const MotionTrace& trace) {
  trace.validate();
  MotionTrace out = trace;
  const double g1 = skewness(segment_derivatives(trace));
  if (g1 > 1e-6) {
    for (double& v : out.values) v = -v;
    out.polarity = Polarity::resolved;
  } else if (g1 < -1e-6) {
    out.polarity = Polarity::resolved;
  } else {
    out.polarity = Polarity::arbitrary;
  }
  return out;
}

}  // namespace ptmotion::motion
