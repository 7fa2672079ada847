#include "ptmotion/types.hpp"

#include <cmath>
#include <set>

namespace ptmotion {

std::vector<std::pair<Index, Index>> segment_ranges(
    const std::vector<Index>& boundaries, Index n) {
  validate_boundaries(boundaries, n, "slice_boundaries");
  std::vector<std::pair<Index, Index>> out;
  out.reserve(boundaries.size());
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    Index begin = boundaries[i];
    Index end = (i + 1 < boundaries.size()) ? boundaries[i + 1] : n;
    out.emplace_back(begin, end);
  }
  return out;
}

void validate_boundaries(const std::vector<Index>& boundaries, Index n,
                         const std::string& what) {
  if (boundaries.empty()) throw Error(what + " must not be empty");
  if (boundaries.front() != 0) throw Error(what + " must start at 0");
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    if (boundaries[i] <= boundaries[i - 1])
      throw Error(what + " non-monotone at entry " + std::to_string(i));
  }
  if (boundaries.back() >= n)
    throw Error(what + " out of range: last boundary " +
                std::to_string(boundaries.back()) + " >= n=" + std::to_string(n));
}

void PtRecording::validate() const {
  if (samples.rows() < 2)
    throw Error("recording needs at least 2 samples (n=" +
                std::to_string(samples.rows()) + ")");
  if (samples.cols() < 2)
    throw Error("recording needs at least 2 channels (c=" +
                std::to_string(samples.cols()) + ")");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("dt_s must be positive and finite");
  if (!std::isfinite(t0)) throw Error("t0_s must be finite");
  validate_boundaries(slice_boundaries, n_samples(), "slice_boundaries");
  if (static_cast<Index>(channels.size()) != n_channels())
    throw Error("channels list length " + std::to_string(channels.size()) +
                " does not match channel count c=" + std::to_string(n_channels()));
  std::set<int> ids;
  for (const auto& ch : channels) {
    if (!ids.insert(ch.channel_id).second)
      throw Error("duplicate channel_id " + std::to_string(ch.channel_id));
  }
  if (!samples.allFinite()) throw Error("samples contain non-finite values");
}

const char* to_string(TraceKind k) {
  switch (k) {
    case TraceKind::respiratory: return "respiratory";
    case TraceKind::cardiac_raw: return "cardiac_raw";
    case TraceKind::cardiac_filtered: return "cardiac_filtered";
    case TraceKind::cardiac_derivative: return "cardiac_derivative";
    case TraceKind::artifact: return "artifact";
  }
  return "respiratory";
}

TraceKind trace_kind_from_string(const std::string& s) {
  if (s == "respiratory") return TraceKind::respiratory;
  if (s == "cardiac_raw") return TraceKind::cardiac_raw;
  if (s == "cardiac_filtered") return TraceKind::cardiac_filtered;
  if (s == "cardiac_derivative") return TraceKind::cardiac_derivative;
  if (s == "artifact") return TraceKind::artifact;
  throw Error("unknown trace kind \"" + s + "\"");
}

void MotionTrace::validate() const {
  if (values.empty()) throw Error("trace has no values");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error("dt_s must be positive and finite");
  if (!std::isfinite(t0)) throw Error("t0_s must be finite");
  for (double v : values)
    if (!std::isfinite(v)) throw Error("trace contains non-finite values");
  validate_boundaries(slice_boundaries, n_samples(), "slice_boundaries");
}

const char* to_string(TriggerSource s) {
  switch (s) {
    case TriggerSource::pt: return "pt";
    case TriggerSource::ecg: return "ecg";
    case TriggerSource::ground_truth: return "ground_truth";
  }
  return "pt";
}

TriggerSource trigger_source_from_string(const std::string& s) {
  if (s == "pt") return TriggerSource::pt;
  if (s == "ecg") return TriggerSource::ecg;
  if (s == "ground_truth") return TriggerSource::ground_truth;
  throw Error("unknown trigger source \"" + s + "\"");
}

void TriggerTrain::validate() const {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i])) throw Error("trigger times contain non-finite values");
    if (i > 0 && times[i] <= times[i - 1])
      throw Error("non-monotone trigger times at entry " + std::to_string(i));
  }
}

void TriggerTrain::validate_within(double t_begin, double t_end) const {
  validate();
  for (double t : times) {
    if (t < t_begin || t > t_end)
      throw Error("trigger time " + std::to_string(t) +
                  " outside recording span [" + std::to_string(t_begin) + ", " +
                  std::to_string(t_end) + "]");
  }
}

}  // namespace ptmotion
