#pragma once

#include "ptmotion/types.hpp"

#include <string>
#include <vector>

namespace ptmotion::io {

// PT container format: a JSON header file plus a CSV payload that lives next
// to it (same path with the extension replaced by ".csv"). The payload has
// 2*C columns per row: re_0, im_0, ..., re_{C-1}, im_{C-1}.
PtRecording load_recording(const std::string& header_path);
void save_recording(const PtRecording& rec, const std::string& header_path);

// Motion trace format: a single file whose first line is a JSON header
// ({"dt_s", "t0_s", "kind", ...}) followed by one value per line.
MotionTrace load_trace(const std::string& path);
void save_trace(const MotionTrace& trace, const std::string& path);

// Trigger train format: one decimal timestamp (seconds) per line; lines
// starting with '#' are comments. A "# source: <name>" comment records the
// train's origin and is honoured on load.
TriggerTrain load_triggers(const std::string& path);
void save_triggers(const TriggerTrain& train, const std::string& path);

// Stack recordings acquired slice by slice into one continuous recording.
// All inputs must agree on channel metadata and sample interval (dt within
// 1e-9 s). With more than one input, every slice segment of every input is
// mean-centred and scaled to unit standard deviation per channel before
// stacking, so junction offsets cannot masquerade as low-frequency motion.
// A single input is returned unchanged. slice_boundaries of the result
// record every junction.
PtRecording concat_slices(const std::vector<PtRecording>& parts);

// Mean-centre and scale to unit standard deviation every slice segment of
// every channel, in place (the same treatment concat_slices applies while
// stacking). Constant segments are only centred. Idempotent up to rounding.
void normalize_slices_inplace(PtRecording& rec);

// Serialize a double with shortest round-trip formatting (<= 17 significant
// digits; reparsing yields the identical bits). Shared by all text writers.
std::string format_double(double v);

// Strict, locale-independent double parser; `what` names the field for
// error messages.
double parse_double(const std::string& text, const std::string& what);

// Write `content` to `path` atomically (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace ptmotion::io
