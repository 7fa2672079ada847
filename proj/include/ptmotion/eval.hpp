#pragma once

#include "ptmotion/motion.hpp"
#include "ptmotion/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <string>
#include <utility>
#include <vector>

namespace ptmotion::eval {

// Pearson correlation coefficient. Both vectors must have equal length >= 3
// and nonzero variance; a (near-)constant input throws an Error mentioning
// "degenerate" — that is the signal callers use to flag a recording with no
// respiratory motion rather than reporting a meaningless correlation.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

struct TriggerPair {
  double t_pt = 0.0;
  double t_ecg = 0.0;
  double delay = 0.0;  // t_pt - t_ecg
};

// Why an unpaired trigger had no partner, judged against ground-truth beats:
// fp_* = the trigger does not correspond to a true beat; fn_* = the OTHER
// train missed a true beat this trigger marks; indeterminate = evidence
// points both ways (e.g. both trains fired near the beat yet failed to pair).
enum class UnpairedKind { fp_ecg, fn_ecg, fp_pt, fn_pt, indeterminate };

const char* to_string(UnpairedKind k);

struct UnpairedClassification {
  double time = 0.0;            // the unpaired trigger's timestamp
  TriggerSource side = TriggerSource::pt;  // which train it came from
  UnpairedKind kind = UnpairedKind::indeterminate;
};

struct PairingReport {
  std::vector<TriggerPair> pairs;   // one-to-one, ordered by ECG time
  std::vector<double> unpaired_pt;
  std::vector<double> unpaired_ecg;
  double mean_delay = 0.0;  // mean of pair delays; see stats_defined
  double std_delay = 0.0;   // sample std (divisor n-1); 0 for a single pair
  double mean_rr = 0.0;     // mean successive ECG interval
  bool stats_defined = false;  // false when no pairs exist (e.g. empty PT train)
  // One entry per unpaired trigger (PT entries first, then ECG), filled in by
  // classify_unpaired; empty until then.
  std::vector<UnpairedClassification> classifications;
};

// Two-step one-to-one trigger pairing.
// Step 1: each PT trigger is greedily matched to the nearest ECG trigger
// within half the mean ECG RR interval (conflicts go to the smaller |dt|,
// ties to the earlier ECG trigger); the matched delays give a provisional
// mean delay. Step 2: the step-1 matching is discarded and pairs are rebuilt
// greedily in ascending |t_pt - t_ecg - provisional_delay|, keeping residuals
// within a quarter of the mean RR. Pairs whose delay ends up farther than
// that cap from the final mean delay are released again (rare), so every
// reported pair satisfies |delay - mean_delay| <= 0.25 * mean_rr.
// The ECG train needs at least 2 triggers (otherwise its RR is undefined);
// an empty PT train yields a report with every ECG trigger unpaired and
// stats_defined = false.
PairingReport pair_triggers(const TriggerTrain& pt, const TriggerTrain& ecg);

// Labels every unpaired trigger in `report` against ground-truth beats,
// replacing manual adjudication. An unpaired PT trigger (after removing the
// mean PT delay) with no true beat within 0.25 * mean_rr is fp_pt; if a true
// beat is there and the ECG train has nothing near it, the ECG side missed a
// real beat: fn_ecg. Symmetrically for unpaired ECG triggers (whose delay
// against true beats is taken as zero): no beat -> fp_ecg, beat missed by PT
// -> fn_pt. When the opposite train also has an unpaired trigger near the
// same beat, the evidence conflicts and the label is indeterminate.
PairingReport classify_unpaired(const PairingReport& report, const TriggerTrain& truth);

// Row-stochastic overlap of two 4-phase respiratory binnings.
struct BinConsistencyMatrix {
  // percent(i, j) = share of samples labelled i by PT that the reference
  // labels j, in percent; rows = PT bins, columns = reference bins.
  Eigen::Matrix4d percent = Eigen::Matrix4d::Zero();
  // A PT bin that never occurs has no defined row; its percent row is zero
  // and its flag here is false (never NaN).
  std::array<bool, 4> row_defined{false, false, false, false};
};

// Sample-by-sample consistency of two equal-length bin labelings. Every
// defined row of the result sums to 100 within 0.01.
BinConsistencyMatrix bin_consistency(const motion::RespBins& pt_bins,
                                     const motion::RespBins& ref_bins);

struct CyclePair {
  double rr_pt = 0.0;
  double rr_ecg = 0.0;
};

struct CycleComparison {
  // mean |rr_pt - rr_ecg| over cycles, as a percentage of the mean ECG RR.
  double mad_percent = 0.0;
  std::vector<CyclePair> cycles;
};

// Compares cardiac cycle durations between the trains using the established
// pairing: every two pairs adjacent in ECG order with no unpaired trigger of
// either train in between define one cycle. A constant PT delay cancels in
// the differences, so mad_percent is invariant to it. Throws when fewer than
// two such consecutive pairs exist.
CycleComparison cycle_duration_compare(const TriggerTrain& pt, const TriggerTrain& ecg,
                                       const PairingReport& report);

struct PatientDelays {
  double mean_delay_s = 0.0;
  double std_delay_s = 0.0;
};

struct DelaySummary {
  double median_jitter_s = 0.0;  // median of per-patient delay stds
  double jitter_min_s = 0.0;
  double jitter_max_s = 0.0;
  // How many patients' mean delays fall inside the 150 +/- 35 ms band.
  int band_count = 0;
};

// Cohort summary of per-patient delay statistics.
DelaySummary summarize_delays(const std::vector<PatientDelays>& per_patient);

// Ordinary least squares of y on x with the two-sided t-test on the slope
// and the 95% confidence envelope for the mean response.
struct RegressionResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r = 0.0;        // Pearson correlation; 0 when y is constant
  double p_value = 1.0;  // two-sided, t distribution with n-2 dof
  // Envelope parameters: halfwidth(x) = t_crit * resid_std *
  // sqrt(1/n + (x - x_mean)^2 / sxx), minimal at x_mean.
  double x_mean = 0.0;
  double sxx = 0.0;        // sum of squared x deviations
  double resid_std = 0.0;  // residual standard error (divisor n-2)
  double t_crit = 0.0;     // two-sided 97.5% t quantile, n-2 dof
  Index n = 0;

  double predict(double x) const { return intercept + slope * x; }
  double ci95_halfwidth(double x) const;
  // Lower/upper 95% confidence bounds for the mean response at x.
  std::pair<double, double> ci95(double x) const;
};

// Requires equal lengths >= 3 and nonzero variance in x. A perfect fit
// (zero residual) reports p = 0 for a nonzero slope and p = 1 for a zero
// slope.
RegressionResult linreg(const std::vector<double>& x, const std::vector<double>& y);

struct Histogram2d {
  Eigen::MatrixXd counts;  // nbins_x rows, nbins_y columns; entries are whole
  double x_min = 0.0, x_max = 0.0;
  double y_min = 0.0, y_max = 0.0;
};

// Equal-width 2-D histogram spanning the data range; counts sum to the
// number of points. A zero-width range puts everything in the first bin.
Histogram2d histogram2d(const std::vector<double>& x, const std::vector<double>& y,
                        int nbins_x, int nbins_y);

// Regularized incomplete beta function I_x(a, b), the workhorse behind the
// t-distribution tail probabilities. Exposed for tests.
double incomplete_beta(double a, double b, double x);

// Two-sided tail probability P(|T| > t) for Student's t with nu dof.
double student_t_two_sided(double t, double nu);

// Two-sided critical value: the t with student_t_two_sided(t, nu) = alpha.
double student_t_critical(double alpha, double nu);

}  // namespace ptmotion::eval
