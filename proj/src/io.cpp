#include "ptmotion/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>

namespace ptmotion::io {

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Payload lives next to the header: same path, extension swapped for .csv.
std::string payload_path_for(const std::string& header_path) {
  std::filesystem::path p(header_path);
  p.replace_extension(".csv");
  return p.string();
}

json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error("malformed " + what + ": not valid JSON");
  if (!j.is_object()) throw Error("malformed " + what + ": top level must be an object");
  return j;
}

const json& require(const json& j, const char* key, const std::string& what) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(what + ": missing field \"" + std::string(key) + "\"");
  return *it;
}

double require_number(const json& j, const char* key, const std::string& what) {
  const json& v = require(j, key, what);
  if (!v.is_number()) throw Error(what + ": field \"" + std::string(key) + "\" must be a number");
  return v.get<double>();
}

std::int64_t require_integer(const json& j, const char* key, const std::string& what) {
  const json& v = require(j, key, what);
  if (!v.is_number_integer())
    throw Error(what + ": field \"" + std::string(key) + "\" must be an integer");
  return v.get<std::int64_t>();
}

std::vector<Index> read_boundaries(const json& j, const std::string& what) {
  std::vector<Index> out;
  auto it = j.find("slice_boundaries");
  if (it == j.end()) return {0};
  if (!it->is_array()) throw Error(what + ": field \"slice_boundaries\" must be an array");
  for (const auto& v : *it) {
    if (!v.is_number_integer())
      throw Error(what + ": slice_boundaries entries must be integers");
    out.push_back(v.get<std::int64_t>());
  }
  return out;
}

// Split one CSV line into doubles; `where` identifies the row for messages.
void parse_csv_row(const std::string& line, std::vector<double>& out,
                   const std::string& where) {
  out.clear();
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t comma = line.find(',', pos);
    std::size_t end = (comma == std::string::npos) ? line.size() : comma;
    std::size_t a = pos, b = end;
    while (a < b && (line[a] == ' ' || line[a] == '\t')) ++a;
    while (b > a && (line[b - 1] == ' ' || line[b - 1] == '\t' || line[b - 1] == '\r')) --b;
    if (a == b) throw Error(where + ": empty field");
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(line.data() + a, line.data() + b, value);
    if (ec != std::errc() || ptr != line.data() + b)
      throw Error(where + ": not a number: \"" + line.substr(a, b - a) + "\"");
    out.push_back(value);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
}

bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (c != ' ' && c != '\t' && c != '\r') return false;
  }
  return true;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("cannot format double");
  return std::string(buf, ptr);
}

double parse_double(const std::string& text, const std::string& what) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end != begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw Error(what + ": not a number: \"" + text + "\"");
  return value;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open file for writing: " + tmp);
    out << content;
    if (!out) throw Error("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

PtRecording load_recording(const std::string& header_path) {
  const std::string what = "recording header";
  json j = parse_json(read_file(header_path), what);

  PtRecording rec;
  std::int64_t n = require_integer(j, "n", what);
  std::int64_t c = require_integer(j, "c", what);
  if (n < 2) throw Error(what + ": field \"n\" must be >= 2");
  if (c < 2) throw Error(what + ": field \"c\" must be >= 2");
  rec.dt = require_number(j, "dt_s", what);
  rec.t0 = j.contains("t0_s") ? require_number(j, "t0_s", what) : 0.0;
  rec.slice_boundaries = read_boundaries(j, what);

  const json& channels = require(j, "channels", what);
  if (!channels.is_array()) throw Error(what + ": field \"channels\" must be an array");
  if (static_cast<std::int64_t>(channels.size()) != c)
    throw Error(what + ": channels list length " + std::to_string(channels.size()) +
                " does not match channel count c=" + std::to_string(c));
  for (const auto& e : channels) {
    if (!e.is_object()) throw Error(what + ": channel entries must be objects");
    ChannelMeta m;
    m.channel_id = static_cast<int>(require_integer(e, "id", "channel entry"));
    const json& g = require(e, "group", "channel entry");
    if (!g.is_string()) throw Error("channel entry: field \"group\" must be a string");
    m.group = coil_group_from_string(g.get<std::string>());
    if (e.contains("z_index"))
      m.z_index = static_cast<int>(require_integer(e, "z_index", "channel entry"));
    else if (m.group == CoilGroup::spine)
      throw Error("channel entry: spine channel " + std::to_string(m.channel_id) +
                  " is missing \"z_index\"");
    if (e.contains("label")) {
      if (!e["label"].is_string()) throw Error("channel entry: field \"label\" must be a string");
      m.label = e["label"].get<std::string>();
    }
    rec.channels.push_back(std::move(m));
  }

  // Payload: one row per sample, 2C columns (re/im interleaved per channel).
  const std::string csv_path = payload_path_for(header_path);
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + csv_path);
  rec.samples.resize(n, c);
  std::string line;
  std::vector<double> row;
  std::int64_t r = 0;
  while (std::getline(in, line)) {
    if (is_blank_or_comment(line)) continue;
    if (r >= n)
      throw Error("sample count mismatch: header declares n=" + std::to_string(n) +
                  " but payload has more rows");
    parse_csv_row(line, row, "payload row " + std::to_string(r + 1));
    if (static_cast<std::int64_t>(row.size()) != 2 * c)
      throw Error("channel count mismatch: header declares c=" + std::to_string(c) +
                  " (" + std::to_string(2 * c) + " columns) but payload row " +
                  std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                  " columns");
    for (std::int64_t k = 0; k < c; ++k)
      rec.samples(r, k) = std::complex<double>(row[2 * k], row[2 * k + 1]);
    ++r;
  }
  if (r != n)
    throw Error("sample count mismatch: header declares n=" + std::to_string(n) +
                " but payload has " + std::to_string(r) + " rows");

  rec.validate();
  return rec;
}

void save_recording(const PtRecording& rec, const std::string& header_path) {
  rec.validate();

  json j;
  j["n"] = rec.n_samples();
  j["c"] = rec.n_channels();
  j["dt_s"] = rec.dt;
  j["t0_s"] = rec.t0;
  j["slice_boundaries"] = rec.slice_boundaries;
  json channels = json::array();
  for (const auto& m : rec.channels) {
    json e;
    e["id"] = m.channel_id;
    e["group"] = to_string(m.group);
    e["z_index"] = m.z_index;
    e["label"] = m.label;
    channels.push_back(std::move(e));
  }
  j["channels"] = std::move(channels);
  write_file_atomic(header_path, j.dump(2) + "\n");

  std::string body;
  body.reserve(static_cast<std::size_t>(rec.n_samples()) * rec.n_channels() * 20);
  for (Index r = 0; r < rec.n_samples(); ++r) {
    for (Index c = 0; c < rec.n_channels(); ++c) {
      if (c > 0) body += ',';
      body += format_double(rec.samples(r, c).real());
      body += ',';
      body += format_double(rec.samples(r, c).imag());
    }
    body += '\n';
  }
  write_file_atomic(payload_path_for(header_path), body);
}

MotionTrace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("trace file is empty: " + path);

  const std::string what = "trace header";
  json j = parse_json(line, what);
  MotionTrace t;
  t.dt = require_number(j, "dt_s", what);
  t.t0 = require_number(j, "t0_s", what);
  const json& kind = require(j, "kind", what);
  if (!kind.is_string()) throw Error(what + ": field \"kind\" must be a string");
  t.kind = trace_kind_from_string(kind.get<std::string>());
  if (j.contains("polarity")) {
    if (!j["polarity"].is_string()) throw Error(what + ": field \"polarity\" must be a string");
    t.polarity = polarity_from_string(j["polarity"].get<std::string>());
  }
  t.slice_boundaries = read_boundaries(j, what);

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (is_blank_or_comment(line)) continue;
    t.values.push_back(parse_double(line, "trace line " + std::to_string(row)));
  }
  t.validate();
  return t;
}

void save_trace(const MotionTrace& trace, const std::string& path) {
  trace.validate();
  json j;
  j["dt_s"] = trace.dt;
  j["t0_s"] = trace.t0;
  j["kind"] = to_string(trace.kind);
  j["polarity"] = to_string(trace.polarity);
  j["slice_boundaries"] = trace.slice_boundaries;

  std::string body = j.dump() + "\n";
  body.reserve(body.size() + trace.values.size() * 20);
  for (double v : trace.values) {
    body += format_double(v);
    body += '\n';
  }
  write_file_atomic(path, body);
}

TriggerTrain load_triggers(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  TriggerTrain train;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    if (line[start] == '#') {
      std::size_t key = line.find("source:", start);
      if (key != std::string::npos) {
        std::string name = line.substr(key + 7);
        std::size_t a = name.find_first_not_of(" \t");
        std::size_t b = name.find_last_not_of(" \t\r");
        if (a != std::string::npos)
          train.source = trigger_source_from_string(name.substr(a, b - a + 1));
      }
      continue;
    }
    train.times.push_back(parse_double(line, "trigger line " + std::to_string(row)));
  }
  train.validate();
  return train;
}

void save_triggers(const TriggerTrain& train, const std::string& path) {
  train.validate();
  std::string body = "# source: " + std::string(to_string(train.source)) + "\n";
  for (double t : train.times) {
    body += format_double(t);
    body += '\n';
  }
  write_file_atomic(path, body);
}

namespace {

// Centre and scale one [begin,end) block of one channel in place.
// Standard deviation uses the n-1 divisor; a constant block is only centred.
void normalize_block(Eigen::MatrixXcd& samples, Index begin, Index end, Index ch) {
  const Index len = end - begin;
  auto block = samples.col(ch).segment(begin, len);
  std::complex<double> mean = block.mean();
  block.array() -= mean;
  if (len < 2) return;
  double var = block.squaredNorm() / static_cast<double>(len - 1);
  double sd = std::sqrt(var);
  if (sd > 0.0) block /= sd;
}

}  // namespace

void normalize_slices_inplace(PtRecording& rec) {
  rec.validate();
  for (auto [begin, end] : rec.segments())
    for (Index ch = 0; ch < rec.n_channels(); ++ch)
      normalize_block(rec.samples, begin, end, ch);
}

PtRecording concat_slices(const std::vector<PtRecording>& parts) {
  if (parts.empty()) throw Error("concat_slices: empty input");
  for (const auto& p : parts) p.validate();
  if (parts.size() == 1) return parts.front();

  const PtRecording& first = parts.front();
  Index total = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const PtRecording& p = parts[i];
    if (p.n_channels() != first.n_channels() || p.channels != first.channels)
      throw Error("concat_slices: channel metadata mismatch at input " + std::to_string(i));
    if (std::abs(p.dt - first.dt) > 1e-9)
      throw Error("concat_slices: dt mismatch at input " + std::to_string(i) + " (" +
                  format_double(p.dt) + " vs " + format_double(first.dt) + ")");
    total += p.n_samples();
  }

  PtRecording out;
  out.dt = first.dt;
  out.t0 = first.t0;
  out.channels = first.channels;
  out.samples.resize(total, first.n_channels());
  out.slice_boundaries.clear();

  Index row = 0;
  for (const auto& p : parts) {
    out.samples.middleRows(row, p.n_samples()) = p.samples;
    // Keep every interior junction of the input as well as its start.
    for (auto [begin, end] : p.segments()) {
      out.slice_boundaries.push_back(row + begin);
      for (Index ch = 0; ch < out.n_channels(); ++ch)
        normalize_block(out.samples, row + begin, row + end, ch);
    }
    row += p.n_samples();
  }

  out.validate();
  return out;
}

}  // namespace ptmotion::io
