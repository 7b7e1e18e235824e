// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <napres/audio.hpp>
#include <napres/error.hpp>
#include <napres/reassign.hpp>
#include <napres/spectral.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace napres {

/// Where the pulses were found and how many were averaged.
struct PulseAlignment {
  std::size_t template_start = 0;
  std::size_t width_frames = 1;
  std::vector<double> correlation;  ///< p[i], normalised so p[template_start] = 1
  std::vector<std::size_t> peaks;   ///< frames actually averaged, ascending
  std::vector<double> peak_times;   ///< seconds, centre of each peak frame
  double f0_hz = 0.0;

  std::size_t J() const { return peaks.size(); }
};

struct NapresParams {
  double f0_hz = 120.0;
  std::size_t pulses_per_template = 1;
  std::optional<std::size_t> max_j;
  /// Peaks closer than this fraction of the expected period are merged.
  double min_separation_factor = 0.8;
  AnalysisParams analysis = AnalysisParams::glottal();
  PruneParams prune;

  void validate() const {
    if (!(f0_hz > 0.0)) throw Error("f0 must be positive");
    if (pulses_per_template < 1) throw Error("pulses_per_template must be >= 1");
    if (max_j && *max_j < 1) throw Error("max_j must be >= 1");
    if (!(min_separation_factor > 0.0)) throw Error("min_separation_factor must be positive");
    analysis.validate();
    prune.validate();
  }
};

struct NapresResult {
  ReassignedPointCloud cloud;
  PulseAlignment alignment;
  /// Set when fewer than two pulses were averaged.
  bool low_j_warning = false;
};

/// Autocorrelation pitch estimate. Uses the normalised cross-correlation over
/// lags in the search band and takes the shortest lag whose peak is within 90%
/// of the best one, which avoids locking onto subharmonics.
inline double estimate_f0(const Waveform& w, double f_lo = 60.0, double f_hi = 400.0) {
  if (!(f_lo > 0.0 && f_lo < f_hi)) throw Error("invalid pitch search band");
  if (w.empty()) throw Error("cannot estimate pitch of an empty waveform");
  const double sr = w.sample_rate;
  const auto lag_min = static_cast<std::size_t>(std::floor(sr / f_hi));
  const auto lag_max = static_cast<std::size_t>(std::ceil(sr / f_lo));
  const std::size_t n = w.size();
  if (lag_max + 2 >= n || lag_min < 1) throw Error("signal too short for pitch search band");

  const std::vector<double>& x = w.samples;
  std::vector<double> nccf(lag_max + 2, 0.0);
  for (std::size_t lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
    double r = 0.0, e0 = 0.0, e1 = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      r += x[i] * x[i + lag];
      e0 += x[i] * x[i];
      e1 += x[i + lag] * x[i + lag];
    }
    nccf[lag] = (e0 > 0.0 && e1 > 0.0) ? r / std::sqrt(e0 * e1) : 0.0;
  }

  double best = 0.0;
  for (std::size_t lag = lag_min; lag <= lag_max; ++lag) best = std::max(best, nccf[lag]);
  if (best < 0.3) throw Error("unvoiced/aperiodic input");

  for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
    const double v = nccf[lag];
    if (v < 0.9 * best || v < nccf[lag - 1] || v < nccf[lag + 1]) continue;
    const double a = nccf[lag - 1], c = nccf[lag + 1];
    const double denom = a - 2.0 * v + c;
    const double offset = denom < 0.0 ? 0.5 * (a - c) / denom : 0.0;
    return sr / (static_cast<double>(lag) + offset);
  }
  throw Error("unvoiced/aperiodic input");
}

/// Template width in frames: one (or more) glottal periods rounded to hops.
inline std::size_t template_width(double f0_hz, std::size_t pulses_per_template,
                                  const AnalysisParams& p, int sample_rate) {
  if (!(f0_hz > 0.0)) throw Error("f0 must be positive");
  const double frames = static_cast<double>(pulses_per_template) * sample_rate /
                        (f0_hz * static_cast<double>(p.hop));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(frames)));
}

/// Inner product of stacked magnitude frames between the template
/// [start, start + width) and every shift i in [0, frames - width].
inline std::vector<double> match_template(const SpectrogramTriple& s, std::size_t start,
                                          std::size_t width) {
  const std::size_t frames = s.frames();
  const std::size_t bins = s.bins();
  if (width == 0 || start + width > frames) throw Error("template window out of range");

  Grid<double> mag(frames, bins);
  for (std::size_t k = 0; k < frames; ++k) {
    for (std::size_t b = 0; b < bins; ++b) mag(k, b) = std::sqrt(std::norm(s.plain(k, b)));
  }

  // dots(n, c) = <|X[start + n]|, |X[c]|>
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> all(mag.values().data(), static_cast<Eigen::Index>(frames),
                                       static_cast<Eigen::Index>(bins));
  const RowMajor dots =
      all.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(width)) *
      all.transpose();

  std::vector<double> p(frames - width + 1, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    double acc = 0.0;
    for (std::size_t n = 0; n < width; ++n) acc += dots(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i + n));
    p[i] = acc;
  }
  const double self = p[start];
  if (!(self > 0.0)) throw Error("template region has no energy");
  for (double& v : p) v /= self;
  return p;
}

/// Interior indices with p[i-1] < p[i] >= p[i+1]. When `min_separation` > 1
/// conflicting peaks are resolved greedily, higher value first (ties to the
/// lower index). `anchor`, when given, is always kept and wins its conflicts.
inline std::vector<std::size_t> find_peaks(std::span<const double> p, double min_separation,
                                           std::optional<std::size_t> anchor = std::nullopt) {
  if (p.size() < 3) throw Error("peak search needs at least 3 values");
  if (anchor && *anchor >= p.size()) throw Error("anchor index out of range");

  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < p.size(); ++i) {
    if (p[i - 1] < p[i] && p[i] >= p[i + 1]) candidates.push_back(i);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });

  std::vector<std::size_t> kept;
  if (anchor) kept.push_back(*anchor);
  for (std::size_t c : candidates) {
    if (anchor && c == *anchor) continue;
    bool clear = std::all_of(kept.begin(), kept.end(), [&](std::size_t k) {
      const double gap = c > k ? static_cast<double>(c - k) : static_cast<double>(k - c);
      return gap >= min_separation;
    });
    if (clear) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  if (kept.empty()) throw Error("no pulses found");
  return kept;
}

/// Complex mean of the width-frame slices starting at each peak, applied to all
/// three grids. Slices running past the end are dropped; `max_j` keeps the
/// first max_j usable peaks. Frame times are those of the first slice.
inline SpectrogramTriple average_slices(const SpectrogramTriple& s,
                                        std::span<const std::size_t> peaks, std::size_t width,
                                        std::optional<std::size_t> max_j = std::nullopt) {
  if (width == 0) throw Error("slice width must be positive");
  std::vector<std::size_t> usable;
  for (std::size_t p : peaks) {
    if (p + width <= s.frames()) usable.push_back(p);
    if (max_j && usable.size() == *max_j) break;
  }
  if (usable.empty()) throw Error("no complete pulse slices to average");

  const std::size_t bins = s.bins();
  SpectrogramTriple out;
  out.plain = Grid<Complex>(width, bins);
  out.derivative = Grid<Complex>(width, bins);
  out.ramped = Grid<Complex>(width, bins);
  out.bin_freqs = s.bin_freqs;
  out.params = s.params;
  out.sample_rate = s.sample_rate;
  out.averaged_count = usable.size();
  out.frame_times.assign(s.frame_times.begin() + static_cast<std::ptrdiff_t>(usable.front()),
                         s.frame_times.begin() +
                             static_cast<std::ptrdiff_t>(usable.front() + width));

  const double inv = 1.0 / static_cast<double>(usable.size());
  auto accumulate = [&](const Grid<Complex>& src, Grid<Complex>& dst) {
    for (std::size_t p : usable) {
      for (std::size_t n = 0; n < width; ++n) {
        auto from = src.row(p + n);
        auto to = dst.row(n);
        for (std::size_t b = 0; b < bins; ++b) to[b] += from[b];
      }
    }
    for (Complex& v : dst.values()) v *= inv;
  };
  accumulate(s.plain, out.plain);
  accumulate(s.derivative, out.derivative);
  accumulate(s.ramped, out.ramped);
  return out;
}

/// Full pipeline: STFT triple, template at frame 0, template matching, peak
/// picking, slice averaging, reassignment and pruning. The input is assumed to
/// be cropped to the vowel of interest.
inline NapresResult napres(const Waveform& w, const NapresParams& params) {
  params.validate();
  const SpectrogramTriple s = stft_triple(w, params.analysis);
  const std::size_t width =
      template_width(params.f0_hz, params.pulses_per_template, params.analysis, w.sample_rate);
  if (width + 2 > s.frames()) throw Error("signal too short for one template plus matching");

  NapresResult res;
  PulseAlignment& al = res.alignment;
  al.template_start = 0;
  al.width_frames = width;
  al.f0_hz = params.f0_hz;
  al.correlation = match_template(s, 0, width);

  const double period_frames =
      w.sample_rate / (params.f0_hz * static_cast<double>(params.analysis.hop));
  std::vector<std::size_t> found = find_peaks(
      al.correlation, std::max(1.0, params.min_separation_factor * period_frames), 0);

  const SpectrogramTriple avg = average_slices(s, found, width, params.max_j);
  al.peaks.assign(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(avg.averaged_count));
  for (std::size_t p : al.peaks) al.peak_times.push_back(s.frame_times[p]);

  res.cloud = prune(reassign_raw(avg), params.prune, w.duration());
  res.low_j_warning = al.J() < 2;
  return res;
}

/// Alignment CSV: `# J=`, `# width_frames=`, `# f0_hz=` comment lines, then
/// `peak_frame,peak_time_sec,p_value` rows.
inline void write_alignment_csv(const PulseAlignment& al, std::ostream& out) {
  out << "# J=" << al.J() << '\n'
      << "# width_frames=" << al.width_frames << '\n'
      << "# f0_hz=" << detail::fmt_g9(al.f0_hz) << '\n'
      << "peak_frame,peak_time_sec,p_value\n";
  for (std::size_t i = 0; i < al.peaks.size(); ++i) {
    out << al.peaks[i] << ',' << detail::fmt_g9(al.peak_times[i]) << ','
        << detail::fmt_g9(al.correlation[al.peaks[i]]) << '\n';
  }
}

struct AlignmentRow {
  std::size_t peak_frame = 0;
  double peak_time_sec = 0.0;
  double p_value = 0.0;
};

struct AlignmentCsv {
  std::size_t J = 0;
  std::size_t width_frames = 0;
  double f0_hz = 0.0;
  std::vector<AlignmentRow> rows;
};

inline AlignmentCsv read_alignment_csv(std::istream& in) {
  AlignmentCsv a;
  std::map<std::string, std::string> kv;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      kv = detail::parse_comment_kv(line, std::move(kv));
      continue;
    }
    if (!header) {
      if (line != "peak_frame,peak_time_sec,p_value") {
        throw Error("alignment CSV: unexpected header '" + line + "'");
      }
      header = true;
      continue;
    }
    AlignmentRow r;
    char c1 = 0, c2 = 0;
    std::istringstream row(line);
    if (!(row >> r.peak_frame >> c1 >> r.peak_time_sec >> c2 >> r.p_value) || c1 != ',' ||
        c2 != ',') {
      throw Error("alignment CSV: malformed row '" + line + "'");
    }
    a.rows.push_back(r);
  }
  if (!header) throw Error("alignment CSV: missing header");
  if (!kv.count("J") || !kv.count("width_frames") || !kv.count("f0_hz")) {
    throw Error("alignment CSV: missing J/width_frames/f0_hz comments");
  }
  a.J = std::stoul(kv["J"]);
  a.width_frames = std::stoul(kv["width_frames"]);
  a.f0_hz = std::stod(kv["f0_hz"]);
  return a;
}

}  // namespace napres
