#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gazesyn/csv.hpp"
#include "gazesyn/error.hpp"
#include "gazesyn/signal.hpp"

namespace gazesyn {

/// Column names used when reading a recording CSV. Different GazeBase
/// releases name their columns differently, hence the map.
struct RecordingSchema {
  std::string time = "n_ms";
  std::string x = "x_deg";
  std::string y = "y_deg";
  std::string target_x = "xT_deg";
  std::string target_y = "yT_deg";
  std::string valid = "valid";

  /// Parses "x=gaze_x,y=gaze_y,..." overrides. Keys: time, x, y, target_x, target_y, valid.
  static RecordingSchema parse(const std::string& spec) {
    RecordingSchema s;
    if (csv::trim(spec).empty()) return s;
    for (const auto& item : csv::split(spec)) {
      const auto eq = item.find('=');
      require(eq != std::string::npos, "invalid_schema", "schema entry '" + item + "' is not key=column");
      const std::string key(csv::trim(std::string_view(item).substr(0, eq)));
      const std::string col(csv::trim(std::string_view(item).substr(eq + 1)));
      require(!col.empty(), "invalid_schema", "schema entry '" + key + "' has an empty column name");
      if (key == "time") s.time = col;
      else if (key == "x") s.x = col;
      else if (key == "y") s.y = col;
      else if (key == "target_x") s.target_x = col;
      else if (key == "target_y") s.target_y = col;
      else if (key == "valid") s.valid = col;
      else throw Error("invalid_schema", "unknown schema key '" + key + "'");
    }
    return s;
  }
};

/// Sidecar metadata stored next to a CSV as "<file>.meta" (key=value lines).
using Metadata = std::map<std::string, std::string>;

inline std::string meta_path(const std::string& csv_path) { return csv_path + ".meta"; }

inline Metadata read_metadata(const std::string& path) {
  Metadata m;
  std::ifstream in(path);
  if (!in) return m;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = csv::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    require(eq != std::string_view::npos, "parse_error", path + ": line '" + std::string(t) + "' is not key=value");
    m[std::string(csv::trim(t.substr(0, eq)))] = std::string(csv::trim(t.substr(eq + 1)));
  }
  return m;
}

inline void write_metadata(const std::string& path, const Metadata& m) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "io_error", "cannot write " + path);
  for (const auto& [k, v] : m) out << k << '=' << v << '\n';
}

namespace detail {

inline std::vector<std::string> read_header(std::istream& in, const std::string& path) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "parse_error", path + ": missing header row");
  return csv::split(line);
}

inline std::optional<std::size_t> find_column(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

inline std::size_t require_column(const std::vector<std::string>& header, const std::string& name,
                                  const std::string& path) {
  const auto c = find_column(header, name);
  if (!c) throw Error("missing_column", path + ": required column '" + name + "' not found");
  return *c;
}

inline double rate_from_times(const std::vector<double>& t, const Metadata& meta, const std::string& path) {
  if (auto it = meta.find("rate_hz"); it != meta.end()) return csv::parse_double(it->second, 0);
  require(t.size() >= 2, "parse_error", path + ": cannot infer the sample rate from fewer than 2 rows");
  return 1000.0 / (t[1] - t[0]);
}

inline void check_monotone(const std::vector<double>& t, const std::string& path) {
  for (std::size_t i = 1; i < t.size(); ++i)
    require(t[i] > t[i - 1], "non_monotone_time",
            path + ": timestamps not strictly increasing at data row " + std::to_string(i + 1));
}

}  // namespace detail

/// Reads a header-driven recording CSV. Subject and task come from the
/// sidecar unless given explicitly. A row with an empty x or y is invalid
/// and its position becomes NaN.
inline GazeRecording load_recording_csv(const std::string& path, const RecordingSchema& schema = {},
                                        std::optional<std::string> subject = std::nullopt,
                                        std::optional<std::string> task = std::nullopt) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io_error", "cannot open " + path);
  const auto header = detail::read_header(in, path);
  const std::size_t ct = detail::require_column(header, schema.time, path);
  const std::size_t cx = detail::require_column(header, schema.x, path);
  const std::size_t cy = detail::require_column(header, schema.y, path);
  const auto ctx = detail::find_column(header, schema.target_x);
  const auto cty = detail::find_column(header, schema.target_y);
  if (ctx.has_value() != cty.has_value())
    throw Error("missing_column", path + ": required column '" + (ctx ? schema.target_y : schema.target_x) +
                                      "' not found (targets come in pairs)");
  const auto cv = detail::find_column(header, schema.valid);

  GazeRecording r;
  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    require(f.size() == header.size(), "parse_error",
            path + ": row " + std::to_string(row) + " has " + std::to_string(f.size()) + " fields, expected " +
                std::to_string(header.size()));
    r.t_ms.push_back(csv::parse_double(f[ct], row));
    bool ok = true;
    auto coord = [&](const std::string& s) {
      if (csv::trim(s).empty()) {
        ok = false;
        return std::nan("");
      }
      return csv::parse_double(s, row);
    };
    r.x_deg.push_back(coord(f[cx]));
    r.y_deg.push_back(coord(f[cy]));
    if (!ok) {
      r.x_deg.back() = std::nan("");
      r.y_deg.back() = std::nan("");
    }
    if (ctx) {
      r.target_x_deg.push_back(csv::parse_double(f[*ctx], row));
      r.target_y_deg.push_back(csv::parse_double(f[*cty], row));
    }
    if (cv) {
      const auto v = csv::trim(f[*cv]);
      require(v == "0" || v == "1", "parse_error", path + ": row " + std::to_string(row) + ": valid must be 0 or 1");
      ok = ok && v == "1";
    }
    r.valid.push_back(ok ? 1 : 0);
  }
  require(!r.t_ms.empty(), "parse_error", path + ": no data rows");
  detail::check_monotone(r.t_ms, path);
  const auto meta = read_metadata(meta_path(path));
  r.sample_rate_hz = detail::rate_from_times(r.t_ms, meta, path);
  r.subject_id = subject ? *subject : (meta.count("subject") ? meta.at("subject") : std::string{});
  r.task_label = task ? *task : (meta.count("task") ? meta.at("task") : std::string{});
  r.validate();
  return r;
}

/// Writes `n_ms,x_deg,y_deg[,xT_deg,yT_deg],valid` plus the sidecar. Values
/// use the shortest round-trip decimal form, so load(write(r)) == r.
inline void write_recording_csv(const std::string& path, const GazeRecording& r) {
  r.validate();
  std::ofstream out(path);
  require(static_cast<bool>(out), "io_error", "cannot write " + path);
  out << "n_ms,x_deg,y_deg" << (r.has_target() ? ",xT_deg,yT_deg" : "") << ",valid\n";
  for (std::size_t i = 0; i < r.size(); ++i) {
    out << csv::format_double(r.t_ms[i]) << ',' << csv::format_double(r.x_deg[i]) << ','
        << csv::format_double(r.y_deg[i]);
    if (r.has_target())
      out << ',' << csv::format_double(r.target_x_deg[i]) << ',' << csv::format_double(r.target_y_deg[i]);
    out << ',' << (r.valid[i] ? 1 : 0) << '\n';
  }
  write_metadata(meta_path(path), {{"subject", r.subject_id}, {"task", r.task_label},
                                   {"rate_hz", csv::format_double(r.sample_rate_hz)}});
}

/// Velocity CSV emitted by `preprocess`: n_ms,vx_dps,vy_dps.
inline void write_velocity_csv(const std::string& path, const VelocitySequence& v, const Metadata& meta) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "io_error", "cannot write " + path);
  out << "n_ms,vx_dps,vy_dps\n";
  for (std::size_t i = 0; i < v.size(); ++i)
    out << csv::format_double(static_cast<double>(i) * 1000.0 / v.sample_rate_hz) << ','
        << csv::format_double(v.vx[i]) << ',' << csv::format_double(v.vy[i]) << '\n';
  auto m = meta;
  m["rate_hz"] = csv::format_double(v.sample_rate_hz);
  write_metadata(meta_path(path), m);
}

inline VelocitySequence load_velocity_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io_error", "cannot open " + path);
  const auto header = detail::read_header(in, path);
  const std::size_t ct = detail::require_column(header, "n_ms", path);
  const std::size_t cx = detail::require_column(header, "vx_dps", path);
  const std::size_t cy = detail::require_column(header, "vy_dps", path);
  VelocitySequence v;
  std::vector<double> t;
  std::string line;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    require(f.size() == header.size(), "parse_error", path + ": row " + std::to_string(row) + " has wrong field count");
    t.push_back(csv::parse_double(f[ct], row));
    v.vx.push_back(csv::parse_double(f[cx], row));
    v.vy.push_back(csv::parse_double(f[cy], row));
  }
  require(!t.empty(), "parse_error", path + ": no data rows");
  detail::check_monotone(t, path);
  v.sample_rate_hz = detail::rate_from_times(t, read_metadata(meta_path(path)), path);
  return v;
}

/// Sorted paths of the *.csv files directly inside `dir`.
inline std::vector<std::string> list_csv_files(const std::string& dir) {
  namespace fs = std::filesystem;
  require(fs::is_directory(dir), "io_error", "not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<GazeRecording> load_recordings_dir(const std::string& dir, const RecordingSchema& schema = {}) {
  std::vector<GazeRecording> out;
  for (const auto& p : list_csv_files(dir)) out.push_back(load_recording_csv(p, schema));
  require(!out.empty(), "io_error", "no recording CSVs in " + dir);
  return out;
}

}  // namespace gazesyn
