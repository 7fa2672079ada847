#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ptmotion {

using Index = Eigen::Index;

// All library errors derive from this; the message names the offending
// field or quantity so callers (and tests) can tell failures apart.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

enum class CoilGroup { body, spine };

inline const char* to_string(CoilGroup g) {
  return g == CoilGroup::body ? "body" : "spine";
}

inline CoilGroup coil_group_from_string(const std::string& s) {
  if (s == "body") return CoilGroup::body;
  if (s == "spine") return CoilGroup::spine;
  throw Error("channel group must be \"body\" or \"spine\", got \"" + s + "\"");
}

struct ChannelMeta {
  int channel_id = 0;
  CoilGroup group = CoilGroup::body;
  // Ordinal position along the head-foot axis; larger = closer to the feet.
  // Meaningful for spine coils, where it drives the respiratory polarity rule.
  int z_index = 0;
  std::string label;

  bool operator==(const ChannelMeta&) const = default;
};

// Expand slice boundary indices into [begin, end) row ranges.
std::vector<std::pair<Index, Index>> segment_ranges(
    const std::vector<Index>& boundaries, Index n);

// Validate a boundary list against a signal of length n. `what` names the
// owning field in error messages.
void validate_boundaries(const std::vector<Index>& boundaries, Index n,
                         const std::string& what);

// One multi-coil recording: rows = time, columns = receiver channels.
// Immutable by convention after construction; nothing here mutates it.
struct PtRecording {
  Eigen::MatrixXcd samples;  // N x C complex samples
  double dt = 0.0028;        // seconds per sample
  double t0 = 0.0;           // absolute start time, seconds
  std::vector<Index> slice_boundaries{0};
  std::vector<ChannelMeta> channels;

  Index n_samples() const { return samples.rows(); }
  Index n_channels() const { return samples.cols(); }
  double duration_s() const { return static_cast<double>(samples.rows()) * dt; }

  std::vector<std::pair<Index, Index>> segments() const {
    return segment_ranges(slice_boundaries, n_samples());
  }

  void validate() const;
};

enum class TraceKind { respiratory, cardiac_raw, cardiac_filtered, cardiac_derivative, artifact };

const char* to_string(TraceKind k);
TraceKind trace_kind_from_string(const std::string& s);

enum class Polarity { resolved, arbitrary };

inline const char* to_string(Polarity p) {
  return p == Polarity::resolved ? "resolved" : "arbitrary";
}

inline Polarity polarity_from_string(const std::string& s) {
  if (s == "resolved") return Polarity::resolved;
  if (s == "arbitrary") return Polarity::arbitrary;
  throw Error("polarity must be \"resolved\" or \"arbitrary\", got \"" + s + "\"");
}

// A 1-D motion signal on a uniform time grid.
struct MotionTrace {
  std::vector<double> values;
  double dt = 0.0028;
  double t0 = 0.0;
  TraceKind kind = TraceKind::respiratory;
  Polarity polarity = Polarity::arbitrary;
  std::vector<Index> slice_boundaries{0};

  Index n_samples() const { return static_cast<Index>(values.size()); }
  double duration_s() const { return static_cast<double>(values.size()) * dt; }

  std::vector<std::pair<Index, Index>> segments() const {
    return segment_ranges(slice_boundaries, n_samples());
  }

  void validate() const;
};

enum class TriggerSource { pt, ecg, ground_truth };

const char* to_string(TriggerSource s);
TriggerSource trigger_source_from_string(const std::string& s);

// Ordered cardiac event timestamps, seconds.
struct TriggerTrain {
  std::vector<double> times;
  TriggerSource source = TriggerSource::pt;

  void validate() const;
  // Check that every trigger falls inside [t0, t0 + n*dt] of a recording.
  void validate_within(double t0, double t_end) const;
};

}  // namespace ptmotion
