// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <napres/error.hpp>
#include <napres/grid.hpp>
#include <napres/spectral.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace napres {

/// The four pruning criteria. Thresholds are relative to the grid maximum.
struct PruneParams {
  double amp_threshold_db = -100.0;
  double f_min = 100.0;
  double f_max = 10000.0;
  double stability_limit = 0.25;

  void validate() const {
    if (!(amp_threshold_db < 0.0)) throw Error("amp_threshold_db must be negative");
    if (!(f_min >= 0.0 && f_min < f_max)) throw Error("need 0 <= f_min < f_max");
    if (!(stability_limit > 0.0)) throw Error("stability_limit must be positive");
  }
};

/// Reassigned coordinates of one STFT cell plus the two phase-stability
/// measures. `dif` is the drift of the reassigned frequency across frames,
/// `dgd` the drift of the reassigned time across bins; both are scaled by the
/// window's time-frequency cell (T^2 and 1/T^2, T = window duration) so they
/// are dimensionless. Cells with |X| = 0 are invalid and carry NaNs.
struct RawCell {
  double t_hat = 0.0;
  double f_hat = 0.0;
  double mag = 0.0;
  double dif = 0.0;
  double dgd = 0.0;
  bool valid = false;
};

struct RawGrid {
  Grid<RawCell> cells;
  std::vector<double> frame_times;
  std::vector<double> bin_freqs;
  AnalysisParams params;
  int sample_rate = 0;
  std::size_t averaged_count = 1;

  /// Largest |X| over valid cells; the 0 dB reference.
  double max_mag() const {
    double m = 0.0;
    for (const RawCell& c : cells.values()) {
      if (c.valid && c.mag > m) m = c.mag;
    }
    return m;
  }
};

struct ReassignedPoint {
  double t_sec = 0.0;
  double f_hz = 0.0;
  double mag_db = 0.0;

  friend bool operator==(const ReassignedPoint&, const ReassignedPoint&) = default;
};

/// Pruned reassigned spectrogram. Points are ordered by frame, then bin.
struct ReassignedPointCloud {
  std::vector<ReassignedPoint> points;
  double source_duration = 0.0;
  AnalysisParams analysis;
  PruneParams prune;
  int sample_rate = 0;
  std::size_t averaged_count = 1;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

inline RawGrid reassign_raw(const SpectrogramTriple& s) {
  if (!s.plain.same_shape(s.derivative) || !s.plain.same_shape(s.ramped)) {
    throw Error("spectrogram grids differ in shape");
  }
  if (s.sample_rate <= 0) throw Error("spectrogram has no sample rate");
  const std::size_t frames = s.frames();
  const std::size_t bins = s.bins();
  const double sr = s.sample_rate;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  RawGrid raw;
  raw.cells = Grid<RawCell>(frames, bins);
  raw.frame_times = s.frame_times;
  raw.bin_freqs = s.bin_freqs;
  raw.params = s.params;
  raw.sample_rate = s.sample_rate;
  raw.averaged_count = s.averaged_count;

  for (std::size_t k = 0; k < frames; ++k) {
    for (std::size_t b = 0; b < bins; ++b) {
      const Complex x = s.plain(k, b);
      RawCell& c = raw.cells(k, b);
      c.mag = std::abs(x);
      if (c.mag == 0.0) {
        c.valid = false;
        c.t_hat = c.f_hat = c.dif = c.dgd = nan;
        continue;
      }
      const Complex time_ratio = s.ramped(k, b) / x;
      const Complex freq_ratio = s.derivative(k, b) / x;
      c.valid = true;
      c.t_hat = s.frame_times[k] + time_ratio.real() / sr;
      c.f_hat = s.bin_freqs[b] - freq_ratio.imag() * sr / (2.0 * std::numbers::pi);
    }
  }

  const double window_sec = static_cast<double>(s.params.window_len) / sr;
  const double cell = window_sec * window_sec;
  const double hop_sec = static_cast<double>(s.params.hop) / sr;
  const double bin_hz = sr / static_cast<double>(s.params.fft_len);

  // Forward first differences; the last frame/bin reuses its predecessor's.
  for (std::size_t k = 0; k < frames; ++k) {
    for (std::size_t b = 0; b < bins; ++b) {
      RawCell& c = raw.cells(k, b);
      if (!c.valid) continue;
      if (frames < 2) {
        c.dif = 0.0;
      } else {
        const std::size_t k0 = k + 1 < frames ? k : k - 1;
        const RawCell& a = raw.cells(k0, b);
        const RawCell& n = raw.cells(k0 + 1, b);
        c.dif = (a.valid && n.valid) ? (n.f_hat - a.f_hat) / hop_sec * cell : nan;
      }
      if (bins < 2) {
        c.dgd = 0.0;
      } else {
        const std::size_t b0 = b + 1 < bins ? b : b - 1;
        const RawCell& a = raw.cells(k, b0);
        const RawCell& n = raw.cells(k, b0 + 1);
        c.dgd = (a.valid && n.valid) ? (n.t_hat - a.t_hat) / bin_hz / cell : nan;
      }
    }
  }
  return raw;
}

/// True when `c` passes all four criteria: amplitude, band, time containment
/// and phase stability (|dIF| < limit or |dGD - 1| < limit).
inline bool passes_prune(const RawCell& c, double mag_db, const PruneParams& p,
                         double duration) {
  if (!c.valid) return false;
  if (!(mag_db >= p.amp_threshold_db)) return false;
  if (!(c.f_hat >= p.f_min && c.f_hat <= p.f_max)) return false;
  if (!(c.t_hat >= 0.0 && c.t_hat <= duration)) return false;
  return std::abs(c.dif) < p.stability_limit || std::abs(c.dgd - 1.0) < p.stability_limit;
}

inline ReassignedPointCloud prune(const RawGrid& raw, const PruneParams& p, double duration) {
  p.validate();
  ReassignedPointCloud cloud;
  cloud.source_duration = duration;
  cloud.analysis = raw.params;
  cloud.prune = p;
  cloud.sample_rate = raw.sample_rate;
  cloud.averaged_count = raw.averaged_count;

  const double ref = raw.max_mag();
  if (ref <= 0.0) return cloud;
  for (std::size_t k = 0; k < raw.cells.frames(); ++k) {
    for (std::size_t b = 0; b < raw.cells.bins(); ++b) {
      const RawCell& c = raw.cells(k, b);
      if (!c.valid) continue;
      const double db = 20.0 * std::log10(c.mag / ref);
      if (passes_prune(c, db, p, duration)) cloud.points.push_back({c.t_hat, c.f_hat, db});
    }
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Point-cloud CSV: '#' comment lines with key=value provenance, then the
// header `t_sec,f_hz,mag_db` and one row per point (9 significant digits).

namespace detail {

inline std::string fmt_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::map<std::string, std::string> parse_comment_kv(const std::string& line,
                                                            std::map<std::string, std::string> kv) {
  std::string body = line.substr(1);
  std::size_t start = body.find_first_not_of(' ');
  if (start == std::string::npos) return kv;
  body = body.substr(start);
  std::size_t eq = body.find('=');
  if (eq != std::string::npos) kv[body.substr(0, eq)] = body.substr(eq + 1);
  return kv;
}

}  // namespace detail

inline void write_cloud_csv(const ReassignedPointCloud& cloud, std::ostream& out) {
  out << "# sample_rate=" << cloud.sample_rate << '\n'
      << "# window_len=" << cloud.analysis.window_len << '\n'
      << "# hop=" << cloud.analysis.hop << '\n'
      << "# fft_len=" << cloud.analysis.fft_len << '\n'
      << "# amp_threshold_db=" << detail::fmt_g9(cloud.prune.amp_threshold_db) << '\n'
      << "# f_min_hz=" << detail::fmt_g9(cloud.prune.f_min) << '\n'
      << "# f_max_hz=" << detail::fmt_g9(cloud.prune.f_max) << '\n'
      << "# stability_limit=" << detail::fmt_g9(cloud.prune.stability_limit) << '\n'
      << "# duration_sec=" << detail::fmt_g9(cloud.source_duration) << '\n'
      << "# J=" << cloud.averaged_count << '\n'
      << "t_sec,f_hz,mag_db\n";
  for (const ReassignedPoint& p : cloud.points) {
    out << detail::fmt_g9(p.t_sec) << ',' << detail::fmt_g9(p.f_hz) << ','
        << detail::fmt_g9(p.mag_db) << '\n';
  }
}

inline ReassignedPointCloud read_cloud_csv(std::istream& in) {
  ReassignedPointCloud cloud;
  std::map<std::string, std::string> kv;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      kv = detail::parse_comment_kv(line, std::move(kv));
      continue;
    }
    if (!header) {
      if (line != "t_sec,f_hz,mag_db") throw Error("cloud CSV: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    ReassignedPoint p;
    char c1 = 0, c2 = 0;
    std::istringstream row(line);
    if (!(row >> p.t_sec >> c1 >> p.f_hz >> c2 >> p.mag_db) || c1 != ',' || c2 != ',') {
      throw Error("cloud CSV: malformed row " + std::to_string(line_no));
    }
    cloud.points.push_back(p);
  }
  if (!header) throw Error("cloud CSV: missing header");

  auto num = [&](const char* key, double fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stod(it->second);
  };
  cloud.sample_rate = static_cast<int>(num("sample_rate", 0));
  cloud.analysis.window_len = static_cast<std::size_t>(num("window_len", 2048));
  cloud.analysis.hop = static_cast<std::size_t>(num("hop", 256));
  cloud.analysis.fft_len = static_cast<std::size_t>(num("fft_len", 2048));
  cloud.prune.amp_threshold_db = num("amp_threshold_db", -100.0);
  cloud.prune.f_min = num("f_min_hz", 100.0);
  cloud.prune.f_max = num("f_max_hz", 10000.0);
  cloud.prune.stability_limit = num("stability_limit", 0.25);
  cloud.source_duration = num("duration_sec", 0.0);
  cloud.averaged_count = static_cast<std::size_t>(num("J", 1));
  return cloud;
}

inline ReassignedPointCloud read_cloud_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_cloud_csv(in);
}

}  // namespace napres
