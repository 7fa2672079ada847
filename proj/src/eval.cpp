#include "ptmotion/eval.hpp"

#include "ptmotion/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ptmotion::eval {

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation (divisor n-1); a single value has no spread.
double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// True when some element of sorted `v` lies within `w` of `t`.
bool any_within(const std::vector<double>& v, double t, double w) {
  auto it = std::lower_bound(v.begin(), v.end(), t - w);
  return it != v.end() && *it <= t + w;
}

// Index of the element of sorted `v` nearest to `t`, or -1 when empty.
std::ptrdiff_t nearest_index(const std::vector<double>& v, double t) {
  if (v.empty()) return -1;
  auto it = std::lower_bound(v.begin(), v.end(), t);
  if (it == v.begin()) return 0;
  if (it == v.end()) return static_cast<std::ptrdiff_t>(v.size()) - 1;
  const auto prev = it - 1;
  return (t - *prev <= *it - t) ? prev - v.begin() : it - v.begin();
}

struct Candidate {
  double key = 0.0;  // |dt| in step 1, residual in step 2
  std::size_t i = 0, j = 0;
  double t_pt = 0.0, t_ecg = 0.0;
};

// Greedy one-to-one acceptance in ascending key order; conflicts go to the
// smaller key, key ties to the earlier ECG trigger, then the earlier PT one.
std::vector<std::pair<std::size_t, std::size_t>> greedy_match(
    std::vector<Candidate>& cands, std::size_t n_pt, std::size_t n_ecg) {
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.key != b.key) return a.key < b.key;
    if (a.t_ecg != b.t_ecg) return a.t_ecg < b.t_ecg;
    return a.t_pt < b.t_pt;
  });
  std::vector<char> pt_used(n_pt, 0), ecg_used(n_ecg, 0);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const Candidate& c : cands) {
    if (pt_used[c.i] || ecg_used[c.j]) continue;
    pt_used[c.i] = 1;
    ecg_used[c.j] = 1;
    out.emplace_back(c.i, c.j);
  }
  return out;
}

// All (pt, ecg) index pairs with |t_pt - t_ecg - delay| <= cap.
std::vector<Candidate> candidates_within(const std::vector<double>& pt,
                                         const std::vector<double>& ecg, double delay,
                                         double cap) {
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < pt.size(); ++i) {
    const double centre = pt[i] - delay;
    auto lo = std::lower_bound(ecg.begin(), ecg.end(), centre - cap);
    for (auto it = lo; it != ecg.end() && *it <= centre + cap; ++it) {
      const std::size_t j = static_cast<std::size_t>(it - ecg.begin());
      cands.push_back({std::abs(pt[i] - *it - delay), i, j, pt[i], ecg[j]});
    }
  }
  return cands;
}

}  // namespace

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw Error("pearson inputs differ in length: " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  if (a.size() < 3)
    throw Error("pearson needs at least 3 samples, got " + std::to_string(a.size()));
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0)
    throw Error("pearson input is degenerate (constant signal, zero variance)");
  return sab / std::sqrt(saa * sbb);
}

const char* to_string(UnpairedKind k) {
  switch (k) {
    case UnpairedKind::fp_ecg: return "fp_ecg";
    case UnpairedKind::fn_ecg: return "fn_ecg";
    case UnpairedKind::fp_pt: return "fp_pt";
    case UnpairedKind::fn_pt: return "fn_pt";
    case UnpairedKind::indeterminate: return "indeterminate";
  }
  return "indeterminate";
}

PairingReport pair_triggers(const TriggerTrain& pt, const TriggerTrain& ecg) {
  pt.validate();
  ecg.validate();
  if (ecg.times.size() < 2)
    throw Error("ecg train needs at least 2 triggers to define a mean RR, got " +
                std::to_string(ecg.times.size()));

  PairingReport report;
  // Mean successive difference telescopes to (last - first) / (count - 1).
  report.mean_rr = (ecg.times.back() - ecg.times.front()) /
                   static_cast<double>(ecg.times.size() - 1);
  if (!(report.mean_rr > 0.0)) throw Error("ecg train mean RR is not positive");

  // Step 1: nearest ECG within half the mean RR; provisional mean delay.
  std::vector<Candidate> step1 =
      candidates_within(pt.times, ecg.times, 0.0, 0.5 * report.mean_rr);
  std::vector<std::pair<std::size_t, std::size_t>> provisional =
      greedy_match(step1, pt.times.size(), ecg.times.size());
  double delta = 0.0;
  if (!provisional.empty()) {
    for (auto [i, j] : provisional) delta += pt.times[i] - ecg.times[j];
    delta /= static_cast<double>(provisional.size());
  }

  // Step 2: rebuild from scratch around the provisional delay, residuals
  // capped at a quarter of the mean RR.
  const double cap = 0.25 * report.mean_rr;
  std::vector<Candidate> step2 = candidates_within(pt.times, ecg.times, delta, cap);
  std::vector<std::pair<std::size_t, std::size_t>> matched =
      greedy_match(step2, pt.times.size(), ecg.times.size());

  // A pair's delay must also sit within the cap of the *final* mean delay;
  // release the worst offender and re-average until none is left (rare).
  while (!matched.empty()) {
    double mean = 0.0;
    for (auto [i, j] : matched) mean += pt.times[i] - ecg.times[j];
    mean /= static_cast<double>(matched.size());
    std::size_t worst = matched.size();
    double worst_excess = 1e-15;
    for (std::size_t k = 0; k < matched.size(); ++k) {
      const double d = pt.times[matched[k].first] - ecg.times[matched[k].second];
      const double excess = std::abs(d - mean) - cap;
      if (excess > worst_excess) {
        worst_excess = excess;
        worst = k;
      }
    }
    if (worst == matched.size()) break;
    matched.erase(matched.begin() + static_cast<std::ptrdiff_t>(worst));
  }

  std::sort(matched.begin(), matched.end(),
            [&](const auto& a, const auto& b) { return ecg.times[a.second] < ecg.times[b.second]; });

  std::vector<char> pt_used(pt.times.size(), 0), ecg_used(ecg.times.size(), 0);
  std::vector<double> delays;
  for (auto [i, j] : matched) {
    pt_used[i] = 1;
    ecg_used[j] = 1;
    report.pairs.push_back({pt.times[i], ecg.times[j], pt.times[i] - ecg.times[j]});
    delays.push_back(pt.times[i] - ecg.times[j]);
  }
  for (std::size_t i = 0; i < pt.times.size(); ++i)
    if (!pt_used[i]) report.unpaired_pt.push_back(pt.times[i]);
  for (std::size_t j = 0; j < ecg.times.size(); ++j)
    if (!ecg_used[j]) report.unpaired_ecg.push_back(ecg.times[j]);

  report.stats_defined = !delays.empty();
  if (report.stats_defined) {
    report.mean_delay = mean_of(delays);
    report.std_delay = sample_std(delays, report.mean_delay);
  }
  return report;
}

PairingReport classify_unpaired(const PairingReport& report, const TriggerTrain& truth) {
  truth.validate();
  if (!(report.mean_rr > 0.0))
    throw Error("pairing report carries no mean RR; run pair_triggers first");

  PairingReport out = report;
  out.classifications.clear();
  const double cap = 0.25 * report.mean_rr;
  const double delta_pt = report.stats_defined ? report.mean_delay : 0.0;

  // Paired trigger times, for telling a duplicate trigger (its beat already
  // has a matched partner) from a beat the other train genuinely missed.
  std::vector<double> paired_pt, paired_ecg;
  for (const TriggerPair& p : report.pairs) {
    paired_pt.push_back(p.t_pt);
    paired_ecg.push_back(p.t_ecg);
  }
  std::sort(paired_pt.begin(), paired_pt.end());
  std::sort(paired_ecg.begin(), paired_ecg.end());

  for (double t : report.unpaired_pt) {
    UnpairedClassification c;
    c.time = t;
    c.side = TriggerSource::pt;
    const std::ptrdiff_t b = nearest_index(truth.times, t - delta_pt);
    if (b < 0 || std::abs(truth.times[static_cast<std::size_t>(b)] - (t - delta_pt)) > cap) {
      c.kind = UnpairedKind::fp_pt;  // marks no true beat
    } else {
      const double beat = truth.times[static_cast<std::size_t>(b)];
      if (any_within(paired_ecg, beat, cap))
        c.kind = UnpairedKind::fp_pt;  // beat already matched; this one is surplus
      else if (any_within(out.unpaired_ecg, beat, cap))
        c.kind = UnpairedKind::indeterminate;  // both trains fired yet failed to pair
      else
        c.kind = UnpairedKind::fn_ecg;  // real beat with no ECG trigger at all
    }
    out.classifications.push_back(c);
  }
  for (double t : report.unpaired_ecg) {
    UnpairedClassification c;
    c.time = t;
    c.side = TriggerSource::ecg;
    const std::ptrdiff_t b = nearest_index(truth.times, t);
    if (b < 0 || std::abs(truth.times[static_cast<std::size_t>(b)] - t) > cap) {
      c.kind = UnpairedKind::fp_ecg;
    } else {
      const double beat = truth.times[static_cast<std::size_t>(b)];
      if (any_within(paired_pt, beat + delta_pt, cap))
        c.kind = UnpairedKind::fp_ecg;
      else if (any_within(out.unpaired_pt, beat + delta_pt, cap))
        c.kind = UnpairedKind::indeterminate;
      else
        c.kind = UnpairedKind::fn_pt;
    }
    out.classifications.push_back(c);
  }
  return out;
}

BinConsistencyMatrix bin_consistency(const motion::RespBins& pt_bins,
                                     const motion::RespBins& ref_bins) {
  if (pt_bins.labels.size() != ref_bins.labels.size())
    throw Error("bin labelings differ in length: " + std::to_string(pt_bins.labels.size()) +
                " vs " + std::to_string(ref_bins.labels.size()));
  if (pt_bins.labels.empty()) throw Error("bin labelings are empty");

  Eigen::Matrix4d counts = Eigen::Matrix4d::Zero();
  for (std::size_t k = 0; k < pt_bins.labels.size(); ++k) {
    const int i = static_cast<int>(pt_bins.labels[k]);
    const int j = static_cast<int>(ref_bins.labels[k]);
    counts(i, j) += 1.0;
  }
  BinConsistencyMatrix out;
  for (int i = 0; i < 4; ++i) {
    const double total = counts.row(i).sum();
    out.row_defined[static_cast<std::size_t>(i)] = total > 0.0;
    if (total > 0.0) out.percent.row(i) = counts.row(i) * (100.0 / total);
  }
  return out;
}

CycleComparison cycle_duration_compare(const TriggerTrain& pt, const TriggerTrain& ecg,
                                       const PairingReport& report) {
  pt.validate();
  ecg.validate();
  for (const TriggerPair& p : report.pairs) {
    if (!std::binary_search(pt.times.begin(), pt.times.end(), p.t_pt) ||
        !std::binary_search(ecg.times.begin(), ecg.times.end(), p.t_ecg))
      throw Error("pairing report does not belong to these trigger trains");
  }
  if (report.pairs.size() < 2)
    throw Error("cycle comparison needs at least 2 consecutive paired beats, got " +
                std::to_string(report.pairs.size()) + " pairs");

  // Unpaired triggers inside a candidate cycle mean a beat was missed or
  // invented there; such cycles compare different heartbeats and are skipped.
  auto has_between = [](const std::vector<double>& v, double lo, double hi) {
    auto it = std::upper_bound(v.begin(), v.end(), lo);
    return it != v.end() && *it < hi;
  };

  CycleComparison out;
  double sum_abs = 0.0, sum_ecg = 0.0;
  for (std::size_t k = 0; k + 1 < report.pairs.size(); ++k) {
    const TriggerPair& a = report.pairs[k];
    const TriggerPair& b = report.pairs[k + 1];
    if (has_between(report.unpaired_ecg, a.t_ecg, b.t_ecg)) continue;
    if (has_between(report.unpaired_pt, a.t_pt, b.t_pt)) continue;
    CyclePair c;
    c.rr_pt = b.t_pt - a.t_pt;
    c.rr_ecg = b.t_ecg - a.t_ecg;
    out.cycles.push_back(c);
    sum_abs += std::abs(c.rr_pt - c.rr_ecg);
    sum_ecg += c.rr_ecg;
  }
  if (out.cycles.empty())
    throw Error("cycle comparison found no consecutive paired beats");
  const double n = static_cast<double>(out.cycles.size());
  out.mad_percent = (sum_abs / n) / (sum_ecg / n) * 100.0;
  return out;
}

DelaySummary summarize_delays(const std::vector<PatientDelays>& per_patient) {
  if (per_patient.empty()) throw Error("per_patient delay list is empty");
  std::vector<double> stds;
  DelaySummary s;
  for (const PatientDelays& p : per_patient) {
    stds.push_back(p.std_delay_s);
    if (p.mean_delay_s >= 0.115 && p.mean_delay_s <= 0.185) ++s.band_count;
  }
  s.median_jitter_s = dsp::median(stds);
  auto [lo, hi] = std::minmax_element(stds.begin(), stds.end());
  s.jitter_min_s = *lo;
  s.jitter_max_s = *hi;
  return s;
}

// ---------------------------------------------------------------------------
// Student t machinery

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw Error("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error("incomplete beta needs positive a and b");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
  return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided(double t, double nu) {
  if (!(nu > 0.0)) throw Error("t distribution needs positive degrees of freedom");
  const double at = std::abs(t);
  return incomplete_beta(0.5 * nu, 0.5, nu / (nu + at * at));
}

double student_t_critical(double alpha, double nu) {
  if (!(alpha > 0.0) || !(alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
  double lo = 0.0, hi = 1.0;
  while (student_t_two_sided(hi, nu) > alpha) {
    hi *= 2.0;
    if (hi > 1e12) throw Error("t critical value search failed to bracket");
  }
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (student_t_two_sided(mid, nu) > alpha)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-13 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

double RegressionResult::ci95_halfwidth(double x) const {
  return t_crit * resid_std *
         std::sqrt(1.0 / static_cast<double>(n) + (x - x_mean) * (x - x_mean) / sxx);
}

std::pair<double, double> RegressionResult::ci95(double x) const {
  const double hw = ci95_halfwidth(x);
  const double y = predict(x);
  return {y - hw, y + hw};
}

RegressionResult linreg(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw Error("linreg inputs differ in length: " + std::to_string(x.size()) + " vs " +
                std::to_string(y.size()));
  if (x.size() < 3)
    throw Error("linreg needs at least 3 points, got " + std::to_string(x.size()));

  const double n = static_cast<double>(x.size());
  const double xm = mean_of(x);
  const double ym = mean_of(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - xm) * (x[i] - xm);
    sxy += (x[i] - xm) * (y[i] - ym);
    syy += (y[i] - ym) * (y[i] - ym);
  }
  if (!(sxx > 0.0)) throw Error("linreg x values have zero variance");

  RegressionResult res;
  res.n = static_cast<Index>(x.size());
  res.x_mean = xm;
  res.sxx = sxx;
  res.slope = sxy / sxx;
  res.intercept = ym - res.slope * xm;
  res.r = syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;

  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (res.intercept + res.slope * x[i]);
    sse += e * e;
  }
  const double dof = n - 2.0;
  res.resid_std = std::sqrt(std::max(sse, 0.0) / dof);
  const double se_slope = res.resid_std / std::sqrt(sxx);
  if (se_slope > 0.0)
    res.p_value = student_t_two_sided(res.slope / se_slope, dof);
  else
    res.p_value = res.slope == 0.0 ? 1.0 : 0.0;  // perfect fit: slope exact
  res.t_crit = student_t_critical(0.05, dof);
  return res;
}

Histogram2d histogram2d(const std::vector<double>& x, const std::vector<double>& y,
                        int nbins_x, int nbins_y) {
  if (x.size() != y.size())
    throw Error("histogram2d inputs differ in length: " + std::to_string(x.size()) +
                " vs " + std::to_string(y.size()));
  if (x.empty()) throw Error("histogram2d input is empty");
  if (nbins_x < 1 || nbins_y < 1)
    throw Error("histogram2d bin counts must be at least 1, got " +
                std::to_string(nbins_x) + " x " + std::to_string(nbins_y));

  Histogram2d h;
  auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
  auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
  h.x_min = *xmin_it;
  h.x_max = *xmax_it;
  h.y_min = *ymin_it;
  h.y_max = *ymax_it;
  h.counts = Eigen::MatrixXd::Zero(nbins_x, nbins_y);

  auto bin_of = [](double v, double lo, double hi, int nbins) {
    if (!(hi > lo)) return 0;  // zero-width range: everything in the first bin
    const int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * nbins));
    return std::clamp(b, 0, nbins - 1);  // the maximum lands in the last bin
  };
  for (std::size_t k = 0; k < x.size(); ++k)
    h.counts(bin_of(x[k], h.x_min, h.x_max, nbins_x),
             bin_of(y[k], h.y_min, h.y_max, nbins_y)) += 1.0;
  return h;
}

}  // namespace ptmotion::eval
