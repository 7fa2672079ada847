#include "ptmotion/sim.hpp"

#include "ptmotion/io.hpp"
#include "ptmotion/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace ptmotion::sim {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

// Diastolic recovery runs at tau = (RR - systole)/kRecoverySharpness, so the
// level rebounds quickly after the descent and then sits on a near-flat
// diastasis plateau until the next beat. Concentrating the cycle's slope in
// the descent keeps the derivative's spread (MAD) small relative to the
// systolic dip — the trigger detector's prominence rule needs that margin —
// and every descent still starts from the same level regardless of the
// preceding RR: 1 - 2*exp(-kRecoverySharpness).
constexpr double kRecoverySharpness = 3.0;
constexpr double kRestLevel = 1.0 - 2.0 * 0.049787068367863944;  // 1 - 2*exp(-3)

// Independent sub-stream tags so changing one concern (e.g. disabling noise)
// never perturbs draws for another.
constexpr std::uint64_t kStreamMixing = 0x11;
constexpr std::uint64_t kStreamBaseline = 0x22;
constexpr std::uint64_t kStreamSchedule = 0x33;
constexpr std::uint64_t kStreamPhase = 0x44;
constexpr std::uint64_t kStreamNoise = 0x55;
constexpr std::uint64_t kStreamWeakBeats = 0x66;

// Keep descents this clear of slice junctions and of the recording start/end.
// The zero-phase band-pass applied during extraction reflects the trace at
// every junction, and the resulting transient rings for about a second at the
// lower band edge; a descent inside that window shifts its apparent trigger
// by more than one sample.
constexpr double kJunctionClearance = 0.9;

// Half-cosine from `level` (u = 0) down to `trough` (u = systole_s).
double descent_value(double level, double trough, double u, double systole_s) {
  return trough + (level - trough) * 0.5 * (1.0 + std::cos(kPi * u / systole_s));
}

}  // namespace

Index SimConfig::samples_per_slice() const {
  return static_cast<Index>(std::llround(slice_duration_s / dt_s));
}

Index SimConfig::n_samples() const {
  return static_cast<Index>(n_slices) * samples_per_slice();
}

void SimConfig::validate() const {
  if (n_coils < 16 || n_coils > 28)
    throw Error("n_coils outside supported range [16, 28]: " + std::to_string(n_coils));
  if (n_slices < 1) throw Error("n_slices must be positive");
  if (!(slice_duration_s > 0.0)) throw Error("slice_duration_s must be positive");
  if (!(dt_s > 0.0)) throw Error("dt_s must be positive");
  if (!(resp_rate_hz > 0.0)) throw Error("resp_rate_hz must be positive");
  if (!(resp_amplitude >= 0.0)) throw Error("resp_amplitude must be non-negative");
  if (!(mean_rr_s > 0.0)) throw Error("mean_rr_s must be positive");
  if (!(rr_jitter_pct >= 0.0) || rr_jitter_pct >= 95.0)
    throw Error("rr_jitter_pct outside [0, 95)");
  if (!(pvc_probability >= 0.0) || !(pvc_probability <= 1.0))
    throw Error("pvc_probability outside [0, 1]");
  if (!(systole_fraction > 0.0) || systole_fraction > 0.6)
    throw Error("systole_fraction outside (0, 0.6]");
  if (!(cardiac_amplitude >= 0.0)) throw Error("cardiac_amplitude must be non-negative");
  if (!(weak_beat_fraction >= 0.0) || !(weak_beat_fraction <= 1.0))
    throw Error("weak_beat_fraction outside [0, 1]");
  if (!(weak_beat_scale > 0.45) || weak_beat_scale > 1.0)
    throw Error("weak_beat_scale outside (0.45, 1]: shallower beats would start "
                "their recovery above the quiet-gap hold level");
  if (!(snr_db > 0.0))  // +inf passes: noise disabled
    throw Error("snr_db must be positive (use infinity to disable noise)");
  if (!(dt_s < systole_fraction * mean_rr_s / 5.0))
    throw Error("dt_s too coarse to resolve the systolic upstroke: need dt < systole_fraction*mean_rr/5");
  for (const HiccupEvent& e : hiccup_events) {
    if (!(e.duration_s > 0.0)) throw Error("hiccup event duration_s must be positive");
    if (!std::isfinite(e.time_s) || !std::isfinite(e.magnitude))
      throw Error("hiccup event fields must be finite");
  }
  if (samples_per_slice() < 2) throw Error("slice_duration_s too short for dt_s");
}

SimConfig scenario(const std::string& name) {
  SimConfig cfg;  // defaults = normal
  if (name == "normal") return cfg;
  if (name == "rr_variable") {
    cfg.mean_rr_s = 0.9;
    cfg.rr_jitter_pct = 100.0 / 3.0;  // intervals uniform in [0.6, 1.2] s
    return cfg;
  }
  if (name == "pvc") {
    cfg.pvc_probability = 0.2;
    return cfg;
  }
  if (name == "apnea") {
    cfg.resp_amplitude = 0.0;
    // A faster heart rate keeps the cardiac fundamental well above the
    // respiratory low-pass band, and shortens the quiet-gap transitions near
    // slice junctions (they scale with RR), so the extracted respiratory
    // residual stays near-flat instead of picking up cardiac bleed-through.
    cfg.mean_rr_s = 0.7;
    return cfg;
  }
  if (name == "hiccup") {
    cfg.hiccup_events = {{35.0, 1.2, 6.0}};
    return cfg;
  }
  if (name == "weak_contraction") {
    cfg.cardiac_amplitude = 0.5;
    cfg.rr_jitter_pct = 20.0;
    cfg.snr_db = 8.0;
    // A weak-pump heart with beat-to-beat variability: a third of the beats
    // carve a dip shallow enough to slip under the default peak-prominence
    // threshold while remaining detectable at a lowered one.
    cfg.weak_beat_fraction = 1.0 / 3.0;
    cfg.weak_beat_scale = 0.6;
    return cfg;
  }
  throw Error("unknown scenario '" + name + "'");
}

BeatSchedule draw_beat_times(const SimConfig& cfg, double t_end,
                             const std::vector<double>& junction_times) {
  Rng rng(cfg.seed, kStreamSchedule);
  const double rr = cfg.mean_rr_s;
  const double systole = cfg.systole_s();
  const double jitter = cfg.rr_jitter_pct / 100.0;
  const double p = cfg.pvc_probability;
  // Premature intervals average 0.525*rr; stretch normal intervals so the
  // long-run mean interval stays rr.
  const double stretch = p < 1.0 ? 1.0 + 0.475 * p / (1.0 - p) : 1.0;

  // The recording start behaves like a junction for the extraction filters,
  // so descents keep the same clearance from it.
  std::vector<double> bounds;
  bounds.reserve(junction_times.size() + 1);
  bounds.push_back(cfg.t0_s);
  bounds.insert(bounds.end(), junction_times.begin(), junction_times.end());

  // A descent [b, b+systole] within kJunctionClearance of a boundary may not
  // be emitted: the reflection transient there mistimes its trigger.
  auto clears = [&](double b) {
    auto it = std::upper_bound(bounds.begin(), bounds.end(), b - kJunctionClearance);
    return it == bounds.end() || *it >= b + systole + kJunctionClearance - 1e-9;
  };

  // Beats advance on a virtual grid: every interval is drawn from the virtual
  // predecessor, and a beat too close to a boundary is dropped outright while
  // the grid keeps advancing. Moving beats aside instead would disturb the
  // local rhythm, and the band-passed trace mistimes a beat whose neighbours
  // sit at irregular distances; a silent gap leaves neighbouring beats'
  // timing intact and the long-run rhythm statistics unchanged.
  BeatSchedule out;
  double v = cfg.t0_s + rr * rng.uniform(0.25, 0.75);
  bool premature = false;
  while (v + systole + kJunctionClearance <= t_end) {
    if (clears(v)) {
      out.times.push_back(v);
      out.premature.push_back(premature);
    }
    if (rng.uniform() < p) {
      v += rr * rng.uniform(0.45, 0.6);
      premature = true;
    } else {
      v += rr * stretch * (1.0 + rng.uniform(-jitter, jitter));
      premature = false;
    }
  }
  return out;
}

std::vector<double> cardiac_waveform(const std::vector<double>& beats, double t0,
                                     double dt, Index n, double systole_s,
                                     double mean_rr_s) {
  return cardiac_waveform(beats, {}, t0, dt, n, systole_s, mean_rr_s);
}

std::vector<double> cardiac_waveform(const std::vector<double>& beats,
                                     const std::vector<double>& speeds, double t0,
                                     double dt, Index n, double systole_s,
                                     double mean_rr_s) {
  if (!speeds.empty() && speeds.size() != beats.size())
    throw Error("cardiac descent speeds count " + std::to_string(speeds.size()) +
                " does not match beat count " + std::to_string(beats.size()));
  for (double s : speeds)
    if (!(s > 0.45) || s > 1.0)
      throw Error("cardiac beat descent speed outside (0.45, 1]: " + std::to_string(s));

  // Duration-weighted mean of one nominal cycle (descent + recovery). Quiet
  // stretches hold this value, so a pause adds no low-frequency pulse
  // relative to steady beating and stays invisible to the respiratory band.
  const double f_sys = systole_s / mean_rr_s;
  const double q = kRecoverySharpness;
  const double recovery_mean = 1.0 - 2.0 * (1.0 - std::exp(-q)) / q;
  const double gap_level =
      f_sys * 0.5 * (kRestLevel - 1.0) + (1.0 - f_sys) * recovery_mean;
  const double tau_nom = (mean_rr_s - systole_s) / q;
  // Gentle pre-descent return to the rest level: long enough that most of its
  // rise sits outside the cardiac band-pass kernel's reach around the next
  // beat's descent (a steeper ramp drags the next trigger early).
  const double ramp_s = 0.75 * mean_rr_s;
  // Intervals longer than this hold gap_level and ramp back up just before
  // the next descent; shorter intervals scale the recovery time constant so
  // the level lands on kRestLevel exactly when the next beat arrives.
  const double fill_threshold = 1.35 * mean_rr_s;

  std::vector<double> out(static_cast<std::size_t>(n), gap_level);
  if (beats.empty()) return out;

  auto ramp_to_rest = [&](double s) {  // s in [0, ramp_s]
    return gap_level +
           (kRestLevel - gap_level) * 0.5 * (1.0 - std::cos(kPi * s / ramp_s));
  };

  Index i = static_cast<Index>(std::ceil((beats.front() - t0) / dt - 1e-9));
  if (i < 0) i = 0;
  // Quiet lead-in before the first beat, ending in the pre-descent ramp.
  for (Index j = 0; j < i; ++j) {
    const double s = t0 + static_cast<double>(j) * dt - (beats.front() - ramp_s);
    if (s > 0.0) out[static_cast<std::size_t>(j)] = ramp_to_rest(s);
  }
  double level = kRestLevel;
  const std::size_t n_beats = beats.size();
  for (std::size_t k = 0; k < n_beats; ++k) {
    const double b = beats[k];
    // A weak beat covers the same stroke at a reduced descent rate: the
    // displacement trough stays at -1, only the systole stretches.
    const double speed = speeds.empty() ? 1.0 : speeds[k];
    const double sys_k = systole_s / speed;
    const double rebound = 2.0;  // recovery gap from -1 toward +1
    // Recovery time from the trough up to gap_level at the nominal rate.
    const double settle_s = tau_nom * std::log(rebound / (1.0 - gap_level));
    const bool last = (k + 1 == n_beats);
    const double next = last ? std::numeric_limits<double>::infinity() : beats[k + 1];
    const double rr = next - b;
    const bool fill = !(rr <= fill_threshold);  // the last stretch always fills
    const double tau = fill ? tau_nom : std::max(rr - sys_k, 0.05 * mean_rr_s) / q;
    while (i < n) {
      const double t = t0 + static_cast<double>(i) * dt;
      if (t >= next) break;
      const double u = t - b;
      double value;
      if (u < sys_k) value = descent_value(level, -1.0, u, sys_k);
      else if (!fill || u - sys_k < settle_s)
        value = 1.0 - rebound * std::exp(-(u - sys_k) / tau);
      else if (last || u < rr - ramp_s) value = gap_level;
      else value = ramp_to_rest(u - (rr - ramp_s));
      out[static_cast<std::size_t>(i)] = value;
      ++i;
    }
    if (last) break;
    if (fill) {
      level = kRestLevel;
    } else {
      const double u = next - b;
      level = u < sys_k ? descent_value(level, -1.0, u, sys_k)
                        : 1.0 - rebound * std::exp(-(u - sys_k) / tau);
    }
  }
  return out;
}

namespace {

std::vector<double> resp_waveform(const SimConfig& cfg) {
  Rng rng(cfg.seed, kStreamPhase);
  const double phase = rng.uniform(0.0, 2.0 * kPi);
  const Index n = cfg.n_samples();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double t = cfg.t0_s + static_cast<double>(i) * cfg.dt_s;
    const double w = 2.0 * kPi * cfg.resp_rate_hz * t + phase;
    // Fundamental plus a weak second harmonic: inhalation steeper than
    // exhalation, with larger value = inspiration.
    out[static_cast<std::size_t>(i)] =
        cfg.resp_amplitude * (std::sin(w) + 0.25 * std::sin(2.0 * w + phase));
  }
  return out;
}

std::vector<double> artifact_waveform(const SimConfig& cfg) {
  const Index n = cfg.n_samples();
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (const HiccupEvent& e : cfg.hiccup_events) {
    Index lo = static_cast<Index>(std::ceil((e.time_s - cfg.t0_s) / cfg.dt_s));
    Index hi = static_cast<Index>(std::floor((e.time_s + e.duration_s - cfg.t0_s) / cfg.dt_s));
    lo = std::max<Index>(lo, 0);
    hi = std::min<Index>(hi, n - 1);
    for (Index i = lo; i <= hi; ++i) {
      const double t = cfg.t0_s + static_cast<double>(i) * cfg.dt_s - e.time_s;
      const double env = 0.5 * (1.0 - std::cos(2.0 * kPi * t / e.duration_s));
      out[static_cast<std::size_t>(i)] +=
          e.magnitude * env * std::sin(2.0 * kPi * 1.8 * t);
    }
  }
  return out;
}

// Remove the complex projection of v onto each of the given directions.
void orthogonalize_against(Eigen::VectorXcd& v, const std::vector<const Eigen::VectorXcd*>& dirs) {
  for (const Eigen::VectorXcd* d : dirs) {
    const double nn = d->squaredNorm();
    if (nn < 1e-24) continue;
    v -= (d->dot(v) / nn) * (*d);
  }
}

}  // namespace

SimOutput simulate(const SimConfig& cfg) {
  cfg.validate();
  const Index n = cfg.n_samples();
  const Index c = cfg.n_coils;
  const Index per_slice = cfg.samples_per_slice();
  const int n_spine = cfg.n_coils / 2;
  const int n_body = cfg.n_coils - n_spine;

  std::vector<Index> boundaries;
  std::vector<double> junctions;
  for (int s = 0; s < cfg.n_slices; ++s) {
    boundaries.push_back(static_cast<Index>(s) * per_slice);
    if (s > 0) junctions.push_back(cfg.t0_s + static_cast<double>(boundaries.back()) * cfg.dt_s);
  }

  // Sources.
  const double t_end = cfg.t0_s + static_cast<double>(n) * cfg.dt_s;
  BeatSchedule schedule = draw_beat_times(cfg, t_end, junctions);
  std::vector<double> speeds;
  if (cfg.weak_beat_fraction > 0.0) {
    Rng weak_rng(cfg.seed, kStreamWeakBeats);
    speeds.reserve(schedule.times.size());
    for (std::size_t k = 0; k < schedule.times.size(); ++k)
      speeds.push_back(weak_rng.uniform() < cfg.weak_beat_fraction ? cfg.weak_beat_scale
                                                                   : 1.0);
  }
  std::vector<double> resp = resp_waveform(cfg);
  std::vector<double> card = cardiac_waveform(schedule.times, speeds, cfg.t0_s, cfg.dt_s,
                                              n, cfg.systole_s(), cfg.mean_rr_s);
  std::vector<double> art = artifact_waveform(cfg);

  // Mixing vectors. Respiratory: body coils complex Gaussian, spine coils
  // positive real gains (this is the deterministic sign the polarity rule
  // anchors on). Cardiac: complex Gaussian with damped spine coordinates,
  // made orthogonal to the respiratory vector. Artifact: parallel to the
  // cardiac vector, so bulk transients contaminate the cardiac component
  // rather than separating into their own.
  Rng mix_rng(cfg.seed, kStreamMixing);
  Eigen::VectorXcd w_r(c), w_c(c);
  for (Index k = 0; k < c; ++k) {
    if (k < n_body) w_r(k) = std::complex<double>(mix_rng.gauss(), mix_rng.gauss());
    else w_r(k) = std::complex<double>(mix_rng.uniform(0.6, 1.2), 0.0);
  }
  for (Index k = 0; k < c; ++k) {
    const double damp = k < n_body ? 1.0 : 0.3;
    w_c(k) = damp * std::complex<double>(mix_rng.gauss(), mix_rng.gauss());
  }
  orthogonalize_against(w_c, {&w_r});
  w_c *= cfg.cardiac_amplitude;
  Eigen::VectorXcd w_a = 0.8 * w_c;

  // Modulated part of the signal (before baselines and noise).
  auto as_complex = [n](const std::vector<double>& v) {
    Eigen::VectorXcd out(n);
    for (Index i = 0; i < n; ++i) out(i) = v[static_cast<std::size_t>(i)];
    return out;
  };
  Eigen::MatrixXcd samples = as_complex(resp) * w_r.transpose();
  samples.noalias() += as_complex(card) * w_c.transpose();
  if (!cfg.hiccup_events.empty()) samples.noalias() += as_complex(art) * w_a.transpose();

  const double p_signal = samples.squaredNorm() / static_cast<double>(n * c);

  // Per-slice baseline offsets, orthogonal to the mixing vectors so the
  // projection of the noise-free mixture onto the respiratory vector equals
  // the respiratory source exactly, slice jumps notwithstanding.
  Rng base_rng(cfg.seed, kStreamBaseline);
  for (int s = 0; s < cfg.n_slices; ++s) {
    Eigen::VectorXcd base(c);
    for (Index k = 0; k < c; ++k)
      base(k) = 3.0 * std::complex<double>(base_rng.gauss(), base_rng.gauss());
    orthogonalize_against(base, {&w_r, &w_c});
    samples.middleRows(static_cast<Index>(s) * per_slice, per_slice).rowwise() +=
        base.transpose();
  }

  if (std::isfinite(cfg.snr_db) && p_signal > 0.0) {
    Rng noise_rng(cfg.seed, kStreamNoise);
    const double sigma = std::sqrt(p_signal * std::pow(10.0, -cfg.snr_db / 10.0) / 2.0);
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < c; ++k)
        samples(i, k) += std::complex<double>(sigma * noise_rng.gauss(),
                                              sigma * noise_rng.gauss());
  }

  SimOutput out;
  out.recording.samples = std::move(samples);
  out.recording.dt = cfg.dt_s;
  out.recording.t0 = cfg.t0_s;
  out.recording.slice_boundaries = boundaries;
  out.recording.channels.reserve(static_cast<std::size_t>(c));
  for (Index k = 0; k < c; ++k) {
    ChannelMeta meta;
    meta.channel_id = static_cast<int>(k);
    meta.group = k < n_body ? CoilGroup::body : CoilGroup::spine;
    meta.z_index = static_cast<int>(k);
    meta.label = (k < n_body ? "body_" + std::to_string(k)
                             : "spine_" + std::to_string(k - n_body));
    out.recording.channels.push_back(meta);
  }
  out.recording.validate();

  out.truth.resp_trace.values = std::move(resp);
  out.truth.resp_trace.dt = cfg.dt_s;
  out.truth.resp_trace.t0 = cfg.t0_s;
  out.truth.resp_trace.kind = TraceKind::respiratory;
  out.truth.resp_trace.polarity = Polarity::resolved;
  out.truth.resp_trace.slice_boundaries = boundaries;

  out.truth.artifact_trace.values = std::move(art);
  out.truth.artifact_trace.dt = cfg.dt_s;
  out.truth.artifact_trace.t0 = cfg.t0_s;
  out.truth.artifact_trace.kind = TraceKind::artifact;
  out.truth.artifact_trace.polarity = Polarity::arbitrary;
  out.truth.artifact_trace.slice_boundaries = boundaries;

  out.truth.beat_times.times = std::move(schedule.times);
  out.truth.beat_times.source = TriggerSource::ground_truth;
  out.truth.beat_times.validate();

  out.truth.mixing.resize(c, 3);
  out.truth.mixing.col(0) = w_r;
  out.truth.mixing.col(1) = w_c;
  out.truth.mixing.col(2) = w_a;
  return out;
}

void save_ground_truth(const SimGroundTruth& truth, const std::filesystem::path& path) {
  json j;
  j["dt_s"] = truth.resp_trace.dt;
  j["t0_s"] = truth.resp_trace.t0;
  j["slice_boundaries"] = truth.resp_trace.slice_boundaries;
  j["resp"] = truth.resp_trace.values;
  j["artifact"] = truth.artifact_trace.values;
  j["beat_times"] = truth.beat_times.times;
  const Index c = truth.mixing.rows();
  json re = json::array(), im = json::array();
  for (Index k = 0; k < c; ++k) {
    json row_re = json::array(), row_im = json::array();
    for (Index col = 0; col < 3; ++col) {
      row_re.push_back(truth.mixing(k, col).real());
      row_im.push_back(truth.mixing(k, col).imag());
    }
    re.push_back(std::move(row_re));
    im.push_back(std::move(row_im));
  }
  j["mixing_re"] = std::move(re);
  j["mixing_im"] = std::move(im);
  io::write_file_atomic(path.string(), j.dump(2) + "\n");
}

SimGroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("malformed ground-truth JSON in " + path.string() + ": " + e.what());
  }
  auto require = [&](const char* key) -> const json& {
    if (!j.contains(key))
      throw Error("ground-truth file missing field \"" + std::string(key) + "\"");
    return j.at(key);
  };

  SimGroundTruth truth;
  const double dt = require("dt_s").get<double>();
  const double t0 = require("t0_s").get<double>();
  const std::vector<Index> boundaries = require("slice_boundaries").get<std::vector<Index>>();

  truth.resp_trace.values = require("resp").get<std::vector<double>>();
  truth.resp_trace.dt = dt;
  truth.resp_trace.t0 = t0;
  truth.resp_trace.kind = TraceKind::respiratory;
  truth.resp_trace.polarity = Polarity::resolved;
  truth.resp_trace.slice_boundaries = boundaries;

  truth.artifact_trace.values = require("artifact").get<std::vector<double>>();
  truth.artifact_trace.dt = dt;
  truth.artifact_trace.t0 = t0;
  truth.artifact_trace.kind = TraceKind::artifact;
  truth.artifact_trace.polarity = Polarity::arbitrary;
  truth.artifact_trace.slice_boundaries = boundaries;

  truth.beat_times.times = require("beat_times").get<std::vector<double>>();
  truth.beat_times.source = TriggerSource::ground_truth;
  truth.beat_times.validate();

  const json& re = require("mixing_re");
  const json& im = require("mixing_im");
  if (!re.is_array() || !im.is_array() || re.size() != im.size())
    throw Error("mixing_re/mixing_im must be arrays of equal length");
  const Index c = static_cast<Index>(re.size());
  truth.mixing.resize(c, 3);
  for (Index k = 0; k < c; ++k) {
    const json& row_re = re.at(static_cast<std::size_t>(k));
    const json& row_im = im.at(static_cast<std::size_t>(k));
    if (row_re.size() != 3 || row_im.size() != 3)
      throw Error("mixing rows must have 3 entries (respiratory, cardiac, artifact)");
    for (Index col = 0; col < 3; ++col)
      truth.mixing(k, col) = std::complex<double>(
          row_re.at(static_cast<std::size_t>(col)).get<double>(),
          row_im.at(static_cast<std::size_t>(col)).get<double>());
  }
  return truth;
}

}  // namespace ptmotion::sim
