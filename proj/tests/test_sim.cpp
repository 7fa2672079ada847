#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ptmotion/dsp.hpp"
#include "ptmotion/io.hpp"
#include "ptmotion/sim.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

using namespace ptmotion;
using test_support::TempDir;
using test_support::pearson_oracle;

namespace {

std::vector<double> successive_diffs(const std::vector<double>& t) {
  std::vector<double> d;
  for (std::size_t i = 1; i < t.size(); ++i) d.push_back(t[i] - t[i - 1]);
  return d;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Real part of the complex projection of each sample row onto w.
std::vector<double> project_real(const Eigen::MatrixXcd& samples, const Eigen::VectorXcd& w) {
  Eigen::VectorXcd proj = samples * w.conjugate();
  std::vector<double> out(static_cast<std::size_t>(proj.size()));
  for (Eigen::Index i = 0; i < proj.size(); ++i)
    out[static_cast<std::size_t>(i)] = proj(i).real();
  return out;
}

}  // namespace

TEST_CASE("config validation rejects infeasible settings") {
  sim::SimConfig cfg;
  CHECK_NOTHROW(cfg.validate());

  sim::SimConfig coarse = cfg;
  coarse.dt_s = 0.08;  // systole_fraction*mean_rr/5 = 0.066
  CHECK_THROWS_WITH_AS(coarse.validate(), doctest::Contains("systolic upstroke"), Error);

  sim::SimConfig coils = cfg;
  coils.n_coils = 4;
  CHECK_THROWS_WITH_AS(coils.validate(), doctest::Contains("[16, 28]"), Error);

  sim::SimConfig prob = cfg;
  prob.pvc_probability = 1.5;
  CHECK_THROWS_AS(prob.validate(), Error);
}

TEST_CASE("scenario presets carry the documented regimes") {
  CHECK(sim::scenario("apnea").resp_amplitude == 0.0);
  CHECK(sim::scenario("apnea").mean_rr_s == doctest::Approx(0.7));
  CHECK(sim::scenario("pvc").pvc_probability == doctest::Approx(0.2));
  CHECK(sim::scenario("rr_variable").mean_rr_s == doctest::Approx(0.9));
  CHECK(sim::scenario("rr_variable").rr_jitter_pct == doctest::Approx(100.0 / 3.0));
  CHECK(sim::scenario("hiccup").hiccup_events.size() == 1);
  CHECK(sim::scenario("weak_contraction").cardiac_amplitude == doctest::Approx(0.5));
  CHECK(sim::scenario("normal").n_coils == 16);
  CHECK_THROWS_WITH_AS(sim::scenario("nope"), doctest::Contains("unknown scenario"), Error);
}

TEST_CASE("beat schedule matches configured mean RR within 1 percent") {
  sim::SimConfig cfg;
  cfg.seed = 7;
  sim::BeatSchedule s = sim::draw_beat_times(cfg, 1200.0, {});
  REQUIRE(s.times.size() > 1000);
  std::vector<double> rr = successive_diffs(s.times);
  CHECK(std::abs(mean_of(rr) - cfg.mean_rr_s) / cfg.mean_rr_s < 0.01);
  for (std::size_t i = 0; i < rr.size(); ++i) CHECK(rr[i] >= 0.25 * cfg.mean_rr_s);
}

TEST_CASE("premature-beat fraction tracks pvc_probability within 2 points") {
  sim::SimConfig cfg = sim::scenario("pvc");
  cfg.seed = 11;
  sim::BeatSchedule s = sim::draw_beat_times(cfg, 1300.0, {});
  REQUIRE(s.times.size() > 1000);
  const double frac =
      static_cast<double>(std::count(s.premature.begin(), s.premature.end(), true)) /
      static_cast<double>(s.premature.size());
  CHECK(std::abs(frac - cfg.pvc_probability) < 0.02);
  std::vector<double> rr = successive_diffs(s.times);
  CHECK(std::abs(mean_of(rr) - cfg.mean_rr_s) / cfg.mean_rr_s < 0.01);
}

TEST_CASE("rr_variable draws intervals across the configured uniform range") {
  sim::SimConfig cfg = sim::scenario("rr_variable");
  cfg.seed = 3;
  sim::BeatSchedule s = sim::draw_beat_times(cfg, 900.0, {});
  std::vector<double> rr = successive_diffs(s.times);
  REQUIRE(rr.size() > 500);
  // The first few beats may sit compressed while the schedule clears the
  // recording start; steady-state intervals must fill the uniform range.
  std::vector<double> steady(rr.begin() + 5, rr.end());
  const auto [lo, hi] = std::minmax_element(steady.begin(), steady.end());
  CHECK(*lo >= 0.6 - 1e-9);
  CHECK(*hi <= 1.2 + 1e-9);
  CHECK(*hi - *lo > 0.4);  // actually exercises the range
}

TEST_CASE("cardiac waveform has its steepest descent half a systole after each beat") {
  const double dt = 0.0028;
  const double systole = 0.33;
  std::vector<double> beats;
  for (int k = 0; k < 100; ++k) beats.push_back(0.7 + 1.0 * k);
  const Index n = static_cast<Index>(std::llround(101.5 / dt));
  std::vector<double> card = sim::cardiac_waveform(beats, 0.0, dt, n, systole, 1.0);
  std::vector<double> d = dsp::finite_difference(card);

  for (double b : beats) {
    // steepest descent = most negative derivative near this beat
    const Index lo = static_cast<Index>((b - 0.05) / dt);
    const Index hi = static_cast<Index>((b + systole + 0.05) / dt);
    Index arg = lo;
    for (Index i = lo; i <= hi && i < static_cast<Index>(d.size()); ++i)
      if (d[static_cast<std::size_t>(i)] < d[static_cast<std::size_t>(arg)]) arg = i;
    const double t_steepest = (static_cast<double>(arg) + 0.5) * dt;
    CHECK(std::abs(t_steepest - (b + systole / 2.0)) <= dt);
  }
}

TEST_CASE("peak detector fires once per scheduled beat on each slice of the cardiac band") {
  // End-to-end waveform oracle in the regime the extraction pipeline actually
  // runs: the scheduler clears descents away from slice junctions, the trace
  // is band-passed slice by slice, and the detector sees each slice's
  // derivative on its own.
  const double dt = 0.0028;
  const double slice_s = 10.0;
  const int n_slices = 10;
  sim::SimConfig cfg;
  cfg.seed = 11;
  cfg.rr_jitter_pct = 0.0;  // strict 60 bpm grid (minus junction drops)
  std::vector<double> junctions;
  for (int s = 1; s < n_slices; ++s) junctions.push_back(s * slice_s);
  sim::BeatSchedule sched = sim::draw_beat_times(cfg, n_slices * slice_s, junctions);
  REQUIRE(sched.times.size() > 60);

  const Index per = static_cast<Index>(std::llround(slice_s / dt));
  const Index n = static_cast<Index>(n_slices) * per;
  std::vector<double> card =
      sim::cardiac_waveform(sched.times, 0.0, dt, n, cfg.systole_s(), cfg.mean_rr_s);

  std::vector<double> found;
  for (int s = 0; s < n_slices; ++s) {
    std::vector<double> seg(card.begin() + s * per, card.begin() + (s + 1) * per);
    std::vector<double> band =
        dsp::zero_phase_filter(seg, dt, dsp::BandSpec::bandpass(0.5, 3.0));
    std::vector<double> d = dsp::finite_difference(band);
    for (Index i : dsp::detect_negative_peaks(d, dt, 0.3, 3.0))
      found.push_back((static_cast<double>(s * per + i) + 0.5) * dt);
  }
  REQUIRE(found.size() == sched.times.size());
  for (std::size_t k = 0; k < found.size(); ++k)
    CHECK(std::abs(found[k] - (sched.times[k] + 0.165)) < 0.02);
}

TEST_CASE("same seed reproduces the simulation bit for bit") {
  sim::SimConfig cfg;
  cfg.seed = 42;
  sim::SimOutput a = sim::simulate(cfg);
  sim::SimOutput b = sim::simulate(cfg);
  CHECK(a.recording.samples == b.recording.samples);
  CHECK(a.truth.beat_times.times == b.truth.beat_times.times);
  CHECK(a.truth.resp_trace.values == b.truth.resp_trace.values);
  CHECK(a.truth.mixing == b.truth.mixing);

  sim::SimConfig other = cfg;
  other.seed = 43;
  sim::SimOutput o = sim::simulate(other);
  CHECK(a.recording.samples != o.recording.samples);
}

TEST_CASE("disabling noise leaves every other draw untouched") {
  sim::SimConfig noisy;
  noisy.seed = 9;
  sim::SimConfig clean = noisy;
  clean.snr_db = std::numeric_limits<double>::infinity();
  sim::SimOutput a = sim::simulate(noisy);
  sim::SimOutput b = sim::simulate(clean);
  CHECK(a.truth.beat_times.times == b.truth.beat_times.times);
  CHECK(a.truth.resp_trace.values == b.truth.resp_trace.values);
  CHECK(a.truth.mixing == b.truth.mixing);
  CHECK(a.recording.samples != b.recording.samples);
}

TEST_CASE("noise-free projection onto the respiratory vector is the true trace") {
  sim::SimConfig cfg;
  cfg.seed = 5;
  cfg.snr_db = std::numeric_limits<double>::infinity();
  sim::SimOutput out = sim::simulate(cfg);
  std::vector<double> proj = project_real(out.recording.samples, out.truth.mixing.col(0));
  const double r = pearson_oracle(proj, out.truth.resp_trace.values);
  CHECK(r >= 1.0 - 1e-12);
}

TEST_CASE("at default SNR the respiratory projection stays strongly correlated") {
  sim::SimConfig cfg;
  cfg.seed = 5;
  sim::SimOutput out = sim::simulate(cfg);
  std::vector<double> proj = project_real(out.recording.samples, out.truth.mixing.col(0));
  CHECK(pearson_oracle(proj, out.truth.resp_trace.values) >= 0.99);
}

TEST_CASE("spine channels carry positive real respiratory gains and the top z_index") {
  sim::SimOutput out = sim::simulate(sim::scenario("normal"));
  const auto& channels = out.recording.channels;
  int max_z = -1, max_z_at = -1;
  int n_spine = 0;
  for (std::size_t k = 0; k < channels.size(); ++k) {
    if (channels[k].z_index > max_z) {
      max_z = channels[k].z_index;
      max_z_at = static_cast<int>(k);
    }
    if (channels[k].group == CoilGroup::spine) {
      ++n_spine;
      CHECK(out.truth.mixing(static_cast<Index>(k), 0).real() >= 0.6);
      CHECK(out.truth.mixing(static_cast<Index>(k), 0).imag() == 0.0);
    }
  }
  CHECK(n_spine >= 2);
  CHECK(channels[static_cast<std::size_t>(max_z_at)].group == CoilGroup::spine);
}

TEST_CASE("true respiratory trace peaks at the configured rate") {
  sim::SimOutput out = sim::simulate(sim::scenario("normal"));
  dsp::SpectralPeak peak =
      dsp::band_peak(out.truth.resp_trace.values, out.truth.resp_trace.dt, 0.1, 0.6);
  CHECK(std::abs(peak.freq_hz - 0.25) <= 0.02);
}

TEST_CASE("apnea zeroes the respiratory trace and the respiratory band") {
  sim::SimConfig apnea = sim::scenario("apnea");
  apnea.seed = 2;
  sim::SimConfig normal = sim::scenario("normal");
  normal.seed = 2;
  sim::SimOutput a = sim::simulate(apnea);
  sim::SimOutput b = sim::simulate(normal);

  for (double v : a.truth.resp_trace.values) CHECK(v == 0.0);

  // Periodogram check on the respiratory-direction projection: with no
  // respiration the band peak is only noise, orders of magnitude below the
  // matched normal run.
  std::vector<double> pa = project_real(a.recording.samples, a.truth.mixing.col(0));
  std::vector<double> pb = project_real(b.recording.samples, b.truth.mixing.col(0));
  const double power_a = dsp::band_peak(pa, a.recording.dt, 0.1, 0.6).power;
  const double power_b = dsp::band_peak(pb, b.recording.dt, 0.1, 0.6).power;
  CHECK(power_a <= 0.01 * power_b);
}

TEST_CASE("recording and ground truth round-trip through their files") {
  TempDir dir;
  sim::SimConfig cfg;
  cfg.seed = 21;
  cfg.n_slices = 2;  // smaller files, same code paths
  sim::SimOutput out = sim::simulate(cfg);

  io::save_recording(out.recording, dir.file("rec.json"));
  PtRecording rec = io::load_recording(dir.file("rec.json"));
  CHECK(rec.samples == out.recording.samples);
  CHECK(rec.slice_boundaries == out.recording.slice_boundaries);
  CHECK(rec.channels == out.recording.channels);

  sim::save_ground_truth(out.truth, dir.file("truth.json"));
  sim::SimGroundTruth truth = sim::load_ground_truth(dir.file("truth.json"));
  REQUIRE(truth.beat_times.times.size() == out.truth.beat_times.times.size());
  for (std::size_t k = 0; k < truth.beat_times.times.size(); ++k)
    CHECK(std::abs(truth.beat_times.times[k] - out.truth.beat_times.times[k]) <= 1e-9);
  REQUIRE(truth.resp_trace.values.size() == out.truth.resp_trace.values.size());
  double max_err = 0.0;
  for (std::size_t k = 0; k < truth.resp_trace.values.size(); ++k)
    max_err = std::max(max_err,
                       std::abs(truth.resp_trace.values[k] - out.truth.resp_trace.values[k]));
  CHECK(max_err <= 1e-12);
  CHECK((truth.mixing - out.truth.mixing).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(truth.resp_trace.slice_boundaries == out.truth.resp_trace.slice_boundaries);
}

TEST_CASE("beats stay inside the recording and clear of slice junctions") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    sim::SimConfig cfg;
    cfg.seed = seed;
    sim::SimOutput out = sim::simulate(cfg);
    const double t_end = out.recording.t0 + out.recording.duration_s();
    out.truth.beat_times.validate_within(out.recording.t0, t_end);

    std::vector<double> junctions;
    for (std::size_t s = 1; s < out.recording.slice_boundaries.size(); ++s)
      junctions.push_back(out.recording.t0 +
                          static_cast<double>(out.recording.slice_boundaries[s]) *
                              out.recording.dt);
    const double systole = cfg.systole_s();
    for (double b : out.truth.beat_times.times) {
      // Descents also clear the recording start and end, where the
      // extraction filters are just as unreliable as at junctions.
      CHECK(b - out.recording.t0 >= 0.899);
      CHECK(t_end - (b + systole) >= 0.899);
      for (double j : junctions) {
        const bool inside = j > b - 0.899 && j < b + systole + 0.899;
        CHECK_FALSE(inside);
      }
    }
  }
}

TEST_CASE("hiccup bursts land only inside their configured windows") {
  sim::SimConfig cfg = sim::scenario("hiccup");
  cfg.seed = 4;
  sim::SimOutput out = sim::simulate(cfg);
  const auto& art = out.truth.artifact_trace.values;
  const sim::HiccupEvent& e = cfg.hiccup_events[0];
  double peak = 0.0;
  for (std::size_t i = 0; i < art.size(); ++i) {
    const double t = out.recording.t0 + static_cast<double>(i) * out.recording.dt;
    if (t < e.time_s || t > e.time_s + e.duration_s) CHECK(art[i] == 0.0);
    peak = std::max(peak, std::abs(art[i]));
  }
  CHECK(peak >= 0.5 * e.magnitude);
}
