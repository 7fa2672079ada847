#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ptmotion/dsp.hpp"
#include "ptmotion/io.hpp"
#include "ptmotion/motion.hpp"
#include "ptmotion/rng.hpp"
#include "ptmotion/sim.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <vector>

using namespace ptmotion;
using test_support::pearson_oracle;
using test_support::rms;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<ChannelMeta> make_channels(int n_total, int n_spine) {
  std::vector<ChannelMeta> out;
  for (int i = 0; i < n_total; ++i) {
    ChannelMeta m;
    m.channel_id = i;
    m.z_index = i;
    m.group = i >= n_total - n_spine ? CoilGroup::spine : CoilGroup::body;
    m.label = std::string(to_string(m.group)) + "_" + std::to_string(i);
    out.push_back(m);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// For each reference time, the trigger times falling in [ref+lo, ref+hi].
std::vector<double> delays_in_window(const std::vector<double>& triggers,
                                     const std::vector<double>& refs, double lo,
                                     double hi, int* n_outside = nullptr) {
  std::vector<double> delays;
  std::size_t matched = 0;
  for (double ref : refs) {
    int hits = 0;
    double delay = 0.0;
    for (double t : triggers) {
      if (t >= ref + lo && t <= ref + hi) {
        ++hits;
        delay = t - ref;
      }
    }
    if (hits == 1) {
      delays.push_back(delay);
      ++matched;
    }
  }
  if (n_outside) *n_outside = static_cast<int>(triggers.size() - matched);
  return delays;
}

}  // namespace

TEST_CASE("junction guard covers the filter settling span") {
  // Forward-backward biquad cascades settle within ~3x their FIR-equivalent
  // length: a band-pass cascade has 4 sections (9 taps), a low-pass 2 (5 taps).
  CHECK(motion::junction_guard_samples(dsp::BandSpec::bandpass(0.5, 3.0)) == 27);
  CHECK(motion::junction_guard_samples(dsp::BandSpec::lowpass(0.8)) == 15);
}

TEST_CASE("config validation names the offending field") {
  motion::RespiratoryConfig r;
  CHECK_NOTHROW(r.validate(0.0028));
  r.selection_hi_hz = 0.9;  // outside the 0.8 Hz lowpass
  CHECK_THROWS_WITH_AS(r.validate(0.0028), doctest::Contains("inside the lowpass band"),
                       Error);
  r = {};
  r.decimate_to_hz = 1.0;  // selection band would cross the new Nyquist
  CHECK_THROWS_WITH_AS(r.validate(0.0028), doctest::Contains("decimate_to_hz"), Error);
  r = {};
  r.n_pcs_considered = 0;
  CHECK_THROWS_WITH_AS(r.validate(0.0028), doctest::Contains("n_pcs_considered"), Error);

  motion::CardiacConfig c;
  CHECK_NOTHROW(c.validate(0.0028));
  c.n_components = 1;
  CHECK_THROWS_WITH_AS(c.validate(0.0028), doctest::Contains("n_components"), Error);
  c = {};
  c.prominence_factor = 0.0;
  CHECK_THROWS_WITH_AS(c.validate(0.0028), doctest::Contains("prominence_factor"), Error);
  c = {};
  c.min_separation_s = -1.0;
  CHECK_THROWS_WITH_AS(c.validate(0.0028), doctest::Contains("min_separation_s"), Error);
}

TEST_CASE("arrhythmia overrides swap the detection band and prominence") {
  motion::CardiacConfig c;
  CHECK(c.effective_bandpass().low_hz == doctest::Approx(0.5));
  CHECK(c.effective_prominence() == doctest::Approx(3.0));
  c.arrhythmia_overrides = motion::ArrhythmiaOverrides{};
  CHECK(c.effective_bandpass().low_hz == doctest::Approx(0.6));
  CHECK(c.effective_bandpass().high_hz == doctest::Approx(2.4));
  CHECK(c.effective_prominence() == doctest::Approx(2.0));
  CHECK_NOTHROW(c.validate(0.0028));
  c.arrhythmia_overrides->prominence_factor = -1.0;
  CHECK_THROWS_WITH_AS(c.validate(0.0028),
                       doctest::Contains("ArrhythmiaOverrides.prominence_factor"), Error);
}

TEST_CASE("recordings shorter than ten seconds are rejected") {
  const double dt = 0.0028;
  const Index n = static_cast<Index>(8.0 / dt);
  PtRecording rec;
  rec.samples = Eigen::MatrixXcd::Zero(n, 2);
  Rng rng(3);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < 2; ++c) rec.samples(i, c) = {rng.gauss(), rng.gauss()};
  rec.dt = dt;
  rec.channels = make_channels(2, 1);
  CHECK_THROWS_WITH_AS(motion::extract_respiratory(rec), doctest::Contains("at least 10"),
                       Error);
  CHECK_THROWS_WITH_AS(motion::extract_cardiac(rec), doctest::Contains("at least 10"),
                       Error);
}

TEST_CASE("respiratory selection needs a spectral window for the low band edge") {
  // 12 s clears the duration floor but cannot resolve 0.1 Hz peaks, and the
  // spectral-peak precondition propagates.
  const double dt = 0.0028;
  const Index n = static_cast<Index>(12.0 / dt);
  PtRecording rec;
  rec.samples = Eigen::MatrixXcd::Zero(n, 2);
  Rng rng(4);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < 2; ++c) rec.samples(i, c) = {rng.gauss(), rng.gauss()};
  rec.dt = dt;
  rec.channels = make_channels(2, 1);
  CHECK_THROWS_WITH_AS(motion::extract_respiratory(rec),
                       doctest::Contains("window too short"), Error);
}

TEST_CASE("a dominant slow tone on one channel is recovered almost exactly") {
  const double dt = 0.0028;
  const double dur = 60.0;
  const Index n = static_cast<Index>(dur / dt);
  const Index n_ch = 3;
  PtRecording rec;
  rec.samples.resize(n, n_ch);
  rec.dt = dt;
  std::vector<double> tone(static_cast<std::size_t>(n));
  Rng rng(11);
  const double noise_scale = 0.005;  // 40 dB below the tone's power
  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    tone[static_cast<std::size_t>(i)] = std::sin(2.0 * kPi * 0.25 * t);
    rec.samples(i, 0) = {tone[static_cast<std::size_t>(i)], 0.0};
    for (Index c = 1; c < n_ch; ++c)
      rec.samples(i, c) = {noise_scale * rng.gauss(), noise_scale * rng.gauss()};
  }
  // The tone channel doubles as the polarity reference.
  rec.channels = {{0, CoilGroup::spine, 5, "spine_0"},
                  {1, CoilGroup::body, 0, "body_1"},
                  {2, CoilGroup::body, 1, "body_2"}};

  motion::RespExtraction out = motion::extract_respiratory(rec);
  REQUIRE(out.trace.n_samples() == n);
  CHECK(out.trace.kind == TraceKind::respiratory);
  CHECK(out.trace.polarity == Polarity::resolved);
  CHECK(out.diag.polarity_resolved);
  CHECK(out.trace.dt == doctest::Approx(dt));
  const double r = pearson_oracle(out.trace.values, tone);
  CHECK(r >= 0.999);  // signed: polarity resolution must leave it positive
}

TEST_CASE("simulated breathing is recovered with the inspiration-positive sign") {
  sim::SimConfig cfg = sim::scenario("normal");
  cfg.seed = 5;
  sim::SimOutput out = sim::simulate(cfg);

  motion::RespExtraction resp = motion::extract_respiratory(out.recording);
  REQUIRE(resp.trace.n_samples() == out.recording.n_samples());
  CHECK(resp.trace.slice_boundaries == out.recording.slice_boundaries);
  CHECK(resp.trace.polarity == Polarity::resolved);
  CHECK(resp.diag.selected_pc >= 0);
  CHECK(resp.diag.selected_pc < 2);
  CHECK(resp.diag.band_power.size() == 2);

  const double r = pearson_oracle(resp.trace.values, out.truth.resp_trace.values);
  CHECK(r >= 0.95);  // signed, not absolute: polarity must be correct
}

TEST_CASE("respiratory polarity is correct across one hundred seeds") {
  int positive = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    sim::SimConfig cfg = sim::scenario("normal");
    cfg.n_slices = 2;
    cfg.slice_duration_s = 11.0;
    cfg.seed = seed;
    sim::SimOutput out = sim::simulate(cfg);
    motion::RespExtraction resp = motion::extract_respiratory(out.recording);
    REQUIRE(resp.trace.polarity == Polarity::resolved);
    const double r = pearson_oracle(resp.trace.values, out.truth.resp_trace.values);
    if (r > 0.3) ++positive;
  }
  CHECK(positive == 100);
}

TEST_CASE("polarity resolution flips against the spine reference") {
  const double dt = 0.005;
  const Index n = 6000;
  PtRecording rec;
  rec.samples.resize(n, 2);
  rec.dt = dt;
  Rng rng(21);
  std::vector<double> slow(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    slow[static_cast<std::size_t>(i)] = std::sin(2.0 * kPi * 0.2 * t);
    rec.samples(i, 0) = {0.1 * rng.gauss(), 0.1 * rng.gauss()};
    rec.samples(i, 1) = {slow[static_cast<std::size_t>(i)], 0.0};
  }
  rec.channels = {{0, CoilGroup::body, 0, "body_0"}, {1, CoilGroup::spine, 3, "spine_1"}};

  MotionTrace cand;
  cand.values = slow;
  cand.dt = dt;
  cand.kind = TraceKind::respiratory;

  double r = 0.0;
  MotionTrace same = motion::resolve_resp_polarity(cand, rec, &r);
  CHECK(same.polarity == Polarity::resolved);
  CHECK(r >= 0.99);
  CHECK(same.values == cand.values);  // aligned candidate is untouched

  MotionTrace flipped = cand;
  for (double& v : flipped.values) v = -v;
  double r2 = 0.0;
  MotionTrace fixed = motion::resolve_resp_polarity(flipped, rec, &r2);
  CHECK(fixed.polarity == Polarity::resolved);
  CHECK(r2 <= -0.99);  // reported correlation is pre-negation
  for (Index i = 0; i < n; ++i)
    CHECK(fixed.values[static_cast<std::size_t>(i)] ==
          cand.values[static_cast<std::size_t>(i)]);
}

TEST_CASE("polarity stays arbitrary without a usable spine reference") {
  const double dt = 0.0028;
  const Index n = static_cast<Index>(22.0 / dt);
  Rng rng(31);

  PtRecording body_only;
  body_only.samples.resize(n, 2);
  body_only.dt = dt;
  std::vector<double> slow(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    slow[static_cast<std::size_t>(i)] = std::sin(2.0 * kPi * 0.25 * t);
    body_only.samples(i, 0) = {slow[static_cast<std::size_t>(i)], 0.1 * rng.gauss()};
    body_only.samples(i, 1) = {0.1 * rng.gauss(), 0.1 * rng.gauss()};
  }
  body_only.channels = make_channels(2, 0);

  motion::RespExtraction resp = motion::extract_respiratory(body_only);
  CHECK(resp.trace.polarity == Polarity::arbitrary);
  CHECK_FALSE(resp.diag.polarity_resolved);
  REQUIRE(resp.diag.warnings.size() == 1);
  CHECK(resp.diag.warnings[0].find("no spine channels") != std::string::npos);

  // Spine channel present but its real part is constant: the reference has
  // no variance, so the sign is still unresolvable.
  PtRecording flat_spine = body_only;
  flat_spine.channels = make_channels(2, 1);
  for (Index i = 0; i < n; ++i)
    flat_spine.samples(i, 1) = {2.0, slow[static_cast<std::size_t>(i)]};
  motion::RespExtraction resp2 = motion::extract_respiratory(flat_spine);
  CHECK(resp2.trace.polarity == Polarity::arbitrary);
  REQUIRE(resp2.diag.warnings.size() == 1);
  CHECK(resp2.diag.warnings[0].find("no variance") != std::string::npos);
}

TEST_CASE("apnea yields a near-flat respiratory trace") {
  sim::SimConfig normal = sim::scenario("normal");
  normal.n_slices = 4;
  normal.seed = 2;
  sim::SimConfig apnea = sim::scenario("apnea");
  apnea.n_slices = 4;
  apnea.seed = 2;

  motion::RespExtraction r_normal = motion::extract_respiratory(sim::simulate(normal).recording);
  motion::RespExtraction r_apnea = motion::extract_respiratory(sim::simulate(apnea).recording);
  // Score units are relative, so "flat" means: far below the same pipeline's
  // output on a breathing subject under identical noise.
  CHECK(rms(r_apnea.trace.values) <= 0.15 * rms(r_normal.trace.values));
}

TEST_CASE("quartile binning splits a sinusoid evenly") {
  MotionTrace trace;
  trace.dt = 0.02;
  trace.polarity = Polarity::resolved;
  const Index n = 4000;
  for (Index i = 0; i < n; ++i)
    trace.values.push_back(
        std::sin(2.0 * kPi * 0.2371 * static_cast<double>(i) * trace.dt + 0.3));

  motion::RespBins bins = motion::bin_respiratory(trace);
  REQUIRE(bins.labels.size() == static_cast<std::size_t>(n));
  CHECK(bins.edges[0] < bins.edges[1]);
  CHECK(bins.edges[1] < bins.edges[2]);

  std::array<int, 4> counts{};
  for (motion::RespPhase p : bins.labels) counts[static_cast<int>(p)]++;
  for (int c : counts) {
    CHECK(c >= n / 4 - 1);
    CHECK(c <= n / 4 + 1);
  }

  // Determinism: binning the identical trace twice gives identical labels.
  motion::RespBins again = motion::bin_respiratory(trace);
  CHECK(again.labels == bins.labels);
  CHECK(again.edges == bins.edges);
}

TEST_CASE("quartile binning of a ramp gives four contiguous segments") {
  MotionTrace trace;
  trace.dt = 0.02;
  trace.polarity = Polarity::resolved;
  const Index n = 1000;
  for (Index i = 0; i < n; ++i) trace.values.push_back(0.001 * static_cast<double>(i));

  motion::RespBins bins = motion::bin_respiratory(trace);
  int transitions = 0;
  for (std::size_t i = 1; i < bins.labels.size(); ++i) {
    CHECK(static_cast<int>(bins.labels[i]) >= static_cast<int>(bins.labels[i - 1]));
    if (bins.labels[i] != bins.labels[i - 1]) ++transitions;
  }
  CHECK(transitions == 3);
  CHECK(bins.labels.front() == motion::RespPhase::end_exp);
  CHECK(bins.labels.back() == motion::RespPhase::end_insp);
}

TEST_CASE("binning requires resolved polarity and a nonzero range") {
  MotionTrace trace;
  trace.dt = 0.02;
  trace.values = test_support::sine_wave(0.3, 0.02, 20.0);
  trace.polarity = Polarity::arbitrary;
  CHECK_THROWS_WITH_AS(motion::bin_respiratory(trace),
                       doctest::Contains("resolved polarity"), Error);

  MotionTrace flat;
  flat.dt = 0.02;
  flat.polarity = Polarity::resolved;
  flat.values.assign(500, 1.25);
  CHECK_THROWS_WITH_AS(motion::bin_respiratory(flat),
                       doctest::Contains("degenerate amplitude distribution"), Error);
}

TEST_CASE("bins are amplitude-monotone on irregular data") {
  Rng rng(77);
  std::vector<double> x(4000);
  for (double& v : x) v = rng.gauss();
  MotionTrace trace;
  trace.dt = 0.02;
  trace.values = dsp::zero_phase_filter(x, trace.dt, dsp::BandSpec::lowpass(0.5));
  trace.polarity = Polarity::resolved;

  motion::RespBins bins = motion::bin_respiratory(trace);
  double max_end_exp = -1e300, min_end_insp = 1e300;
  std::array<int, 4> counts{};
  for (std::size_t i = 0; i < trace.values.size(); ++i) {
    counts[static_cast<int>(bins.labels[i])]++;
    if (bins.labels[i] == motion::RespPhase::end_exp)
      max_end_exp = std::max(max_end_exp, trace.values[i]);
    if (bins.labels[i] == motion::RespPhase::end_insp)
      min_end_insp = std::min(min_end_insp, trace.values[i]);
  }
  for (int c : counts) CHECK(c > 0);
  CHECK(min_end_insp >= max_end_exp);
}

TEST_CASE("cardiac sign rule follows derivative skewness") {
  // Slow rise / fast fall: negative derivative skewness, trace kept as-is.
  MotionTrace saw;
  saw.dt = 0.004;
  for (int p = 0; p < 30; ++p) {
    for (int i = 0; i < 200; ++i) saw.values.push_back(-1.0 + 0.01 * i);
    for (int i = 0; i < 50; ++i) saw.values.push_back(1.0 - 0.04 * i);
  }
  MotionTrace kept = motion::resolve_cardiac_sign(saw);
  CHECK(kept.polarity == Polarity::resolved);
  CHECK(kept.values == saw.values);

  MotionTrace inverted = saw;
  for (double& v : inverted.values) v = -v;
  MotionTrace fixed = motion::resolve_cardiac_sign(inverted);
  CHECK(fixed.polarity == Polarity::resolved);
  CHECK(fixed.values == saw.values);

  // Symmetric triangle: skewness is exactly zero, so the sign stays open.
  MotionTrace tri;
  tri.dt = 0.004;
  const double step = 0.015625;  // dyadic, so the skewness sums cancel exactly
  for (int p = 0; p < 30; ++p) {
    for (int i = 0; i < 125; ++i) tri.values.push_back(step * i);
    for (int i = 125; i > 0; --i) tri.values.push_back(step * i);
  }
  tri.values.push_back(0.0);
  MotionTrace open = motion::resolve_cardiac_sign(tri);
  CHECK(open.polarity == Polarity::arbitrary);
  CHECK(open.values == tri.values);
}

TEST_CASE("simulated cardiac source keeps its sign across one hundred seeds") {
  const sim::SimConfig base = sim::scenario("normal");
  const double dt = base.dt_s;
  const Index per_slice = static_cast<Index>(11.0 / dt);
  const Index n = 2 * per_slice;
  const std::vector<Index> boundaries = {0, per_slice};
  const std::vector<double> junctions = {static_cast<double>(per_slice) * dt};

  int correct = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    sim::SimConfig cfg = base;
    cfg.seed = seed;
    sim::BeatSchedule beats =
        sim::draw_beat_times(cfg, static_cast<double>(n) * dt, junctions);
    std::vector<double> wave = sim::cardiac_waveform(beats.times, 0.0, dt, n,
                                                     cfg.systole_s(), cfg.mean_rr_s);
    MotionTrace trace;
    trace.values = dsp::zero_phase_filter(wave, dt, dsp::BandSpec::bandpass(0.5, 3.0),
                                          boundaries);
    trace.dt = dt;
    trace.kind = TraceKind::cardiac_filtered;
    trace.slice_boundaries = boundaries;

    MotionTrace out = motion::resolve_cardiac_sign(trace);
    if (out.polarity == Polarity::resolved && out.values == trace.values) ++correct;
  }
  CHECK(correct == 100);
}

TEST_CASE("regular rhythm yields one well-timed trigger per beat") {
  sim::SimConfig cfg = sim::scenario("normal");
  cfg.seed = 5;
  sim::SimOutput out = sim::simulate(cfg);

  motion::CardiacExtraction card = motion::extract_cardiac(out.recording);
  CHECK(card.diag.polarity_resolved);
  CHECK(card.diag.ica_converged);
  CHECK(card.diag.n_components >= 2);
  CHECK(card.diag.selected_ic >= 0);
  CHECK(card.trace.kind == TraceKind::cardiac_filtered);
  CHECK(card.triggers.source == TriggerSource::pt);

  const std::vector<double>& beats = out.truth.beat_times.times;
  int n_extra = 0;
  std::vector<double> delays =
      delays_in_window(card.triggers.times, beats, 0.115, 0.215, &n_extra);
  CHECK(delays.size() == beats.size());  // every beat triggered exactly once
  CHECK(n_extra == 0);                   // and nothing else fired
  CHECK(std_of(delays) <= 0.010);
}

TEST_CASE("noise-free recordings give sample-accurate triggers") {
  sim::SimConfig cfg = sim::scenario("normal");
  cfg.snr_db = std::numeric_limits<double>::infinity();
  cfg.rr_jitter_pct = 0.0;
  cfg.seed = 9;
  sim::SimOutput out = sim::simulate(cfg);

  motion::CardiacExtraction card = motion::extract_cardiac(out.recording);
  const std::vector<double>& beats = out.truth.beat_times.times;
  REQUIRE(card.triggers.times.size() == beats.size());

  std::vector<double> delays;
  for (std::size_t i = 0; i < beats.size(); ++i)
    delays.push_back(card.triggers.times[i] - beats[i]);
  const double offset = dsp::median(delays);
  for (double d : delays) CHECK(std::abs(d - offset) <= cfg.dt_s + 1e-12);
}

TEST_CASE("forcing different component counts leaves the cardiac trace stable") {
  sim::SimConfig cfg = sim::scenario("normal");
  cfg.n_slices = 4;
  cfg.seed = 6;
  sim::SimOutput out = sim::simulate(cfg);
  const std::size_t n_beats = out.truth.beat_times.times.size();

  std::vector<MotionTrace> traces;
  for (int k : {4, 6, 8}) {
    motion::CardiacConfig c;
    c.n_components = k;
    motion::CardiacExtraction card = motion::extract_cardiac(out.recording, c);
    CHECK(card.diag.n_components == k);
    CHECK(card.triggers.times.size() == n_beats);
    traces.push_back(card.trace);
  }
  for (std::size_t a = 0; a < traces.size(); ++a)
    for (std::size_t b = a + 1; b < traces.size(); ++b) {
      const double r = pearson_oracle(traces[a].values, traces[b].values);
      CHECK(std::abs(r) >= 0.98);
    }
}

TEST_CASE("global rescaling changes no selections, polarities, or triggers") {
  sim::SimConfig cfg = sim::scenario("normal");
  cfg.n_slices = 4;
  cfg.seed = 7;
  sim::SimOutput out = sim::simulate(cfg);
  PtRecording scaled = out.recording;
  scaled.samples *= 3.7;

  motion::RespExtraction r1 = motion::extract_respiratory(out.recording);
  motion::RespExtraction r2 = motion::extract_respiratory(scaled);
  CHECK(r1.diag.selected_pc == r2.diag.selected_pc);
  CHECK(r1.trace.polarity == r2.trace.polarity);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < r1.trace.values.size(); ++i)
    max_diff = std::max(max_diff, std::abs(r1.trace.values[i] - r2.trace.values[i]));
  CHECK(max_diff <= 1e-9);

  motion::CardiacExtraction c1 = motion::extract_cardiac(out.recording);
  motion::CardiacExtraction c2 = motion::extract_cardiac(scaled);
  CHECK(c1.diag.selected_ic == c2.diag.selected_ic);
  CHECK(c1.trace.polarity == c2.trace.polarity);
  CHECK(c1.triggers.times == c2.triggers.times);
}

TEST_CASE("channel permutation leaves both pipelines unchanged") {
  sim::SimConfig cfg = sim::scenario("normal");
  cfg.n_slices = 4;
  cfg.seed = 8;
  sim::SimOutput out = sim::simulate(cfg);

  PtRecording permuted = out.recording;
  const Index c_total = out.recording.n_channels();
  for (Index c = 0; c < c_total; ++c) {
    permuted.samples.col(c) = out.recording.samples.col(c_total - 1 - c);
    permuted.channels[static_cast<std::size_t>(c)] =
        out.recording.channels[static_cast<std::size_t>(c_total - 1 - c)];
  }

  motion::RespExtraction r1 = motion::extract_respiratory(out.recording);
  motion::RespExtraction r2 = motion::extract_respiratory(permuted);
  CHECK(r1.trace.polarity == r2.trace.polarity);
  double resp_diff = 0.0;
  for (std::size_t i = 0; i < r1.trace.values.size(); ++i)
    resp_diff = std::max(resp_diff, std::abs(r1.trace.values[i] - r2.trace.values[i]));
  CHECK(resp_diff <= 1e-9);

  motion::CardiacExtraction c1 = motion::extract_cardiac(out.recording);
  motion::CardiacExtraction c2 = motion::extract_cardiac(permuted);
  REQUIRE(c1.triggers.times.size() == c2.triggers.times.size());
  double trig_diff = 0.0;
  for (std::size_t i = 0; i < c1.triggers.times.size(); ++i)
    trig_diff = std::max(trig_diff, std::abs(c1.triggers.times[i] - c2.triggers.times[i]));
  CHECK(trig_diff <= 1e-9);
}

TEST_CASE("slice-wise ingestion matches the continuous recording") {
  sim::SimConfig cfg = sim::scenario("normal");
  cfg.n_slices = 4;
  cfg.seed = 10;
  sim::SimOutput out = sim::simulate(cfg);
  const PtRecording& rec = out.recording;

  std::vector<PtRecording> parts;
  auto segs = rec.segments();
  for (auto [begin, end] : segs) {
    PtRecording p;
    p.samples = rec.samples.middleRows(begin, end - begin);
    p.dt = rec.dt;
    p.t0 = rec.t0 + static_cast<double>(begin) * rec.dt;
    p.channels = rec.channels;
    parts.push_back(std::move(p));
  }
  PtRecording stitched = io::concat_slices(parts);
  REQUIRE(stitched.n_samples() == rec.n_samples());
  REQUIRE(stitched.slice_boundaries == rec.slice_boundaries);

  motion::RespExtraction r_direct = motion::extract_respiratory(rec);
  motion::RespExtraction r_stitched = motion::extract_respiratory(stitched);
  CHECK(pearson_oracle(r_direct.trace.values, r_stitched.trace.values) >= 0.99);

  motion::CardiacExtraction c_direct = motion::extract_cardiac(rec);
  motion::CardiacExtraction c_stitched = motion::extract_cardiac(stitched);
  REQUIRE(c_direct.triggers.times.size() == c_stitched.triggers.times.size());
  for (std::size_t i = 0; i < c_direct.triggers.times.size(); ++i)
    CHECK(std::abs(c_direct.triggers.times[i] - c_stitched.triggers.times[i]) <=
          rec.dt + 1e-12);
}

TEST_CASE("triggers keep clear of slice junctions") {
  sim::SimConfig cfg = sim::scenario("pvc");
  cfg.seed = 3;
  sim::SimOutput out = sim::simulate(cfg);

  motion::CardiacExtraction card = motion::extract_cardiac(out.recording);
  REQUIRE(!card.triggers.times.empty());
  card.triggers.validate_within(out.recording.t0,
                                out.recording.t0 + out.recording.duration_s());

  const double guard_s =
      static_cast<double>(motion::junction_guard_samples(dsp::BandSpec::bandpass(0.5, 3.0))) *
      out.recording.dt;
  for (double t : card.triggers.times) {
    for (auto [begin, end] : out.recording.segments()) {
      const double seg_start = out.recording.t0 + static_cast<double>(begin) * out.recording.dt;
      const double seg_last = out.recording.t0 + static_cast<double>(end - 1) * out.recording.dt;
      if (t < seg_start || t > seg_last) continue;
      CHECK(t - seg_start >= guard_s - 1e-9);
      CHECK(seg_last - t >= guard_s - 1e-9);
    }
  }
}

TEST_CASE("pure-noise recordings do not crash either pipeline") {
  const double dt = 0.0028;
  const Index n = static_cast<Index>(22.0 / dt);
  PtRecording rec;
  rec.samples.resize(n, 16);
  rec.dt = dt;
  Rng rng(55);
  for (Index i = 0; i < n; ++i)
    for (Index c = 0; c < 16; ++c) rec.samples(i, c) = {rng.gauss(), rng.gauss()};
  rec.channels = make_channels(16, 8);

  motion::RespExtraction resp = motion::extract_respiratory(rec);
  CHECK(resp.trace.n_samples() == n);

  motion::CardiacExtraction card = motion::extract_cardiac(rec);
  CHECK(card.diag.n_components >= 2);
  CHECK(card.diag.band_power.size() == static_cast<std::size_t>(card.diag.n_components));
  if (!card.diag.polarity_resolved) {
    CHECK(card.triggers.times.empty());
    CHECK(!card.diag.warnings.empty());
  }
}
