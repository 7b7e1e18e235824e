// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <napres/audio.hpp>
#include <napres/error.hpp>
#include <napres/formant.hpp>
#include <napres/pulse.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace napres {

enum class PulseShape { kImpulse, kRosenberg };

inline const char* to_string(PulseShape s) {
  return s == PulseShape::kImpulse ? "impulse" : "rosenberg";
}

struct Resonance {
  double freq_hz = 0.0;
  double bandwidth_hz = 0.0;
};

struct VowelSpec {
  double f0_hz = 120.0;
  std::vector<Resonance> formants = {
      {650.0, 80.0}, {1230.0, 90.0}, {2550.0, 120.0}, {3600.0, 160.0}, {4730.0, 200.0}};
  double duration_sec = 0.5;
  int sample_rate = 48000;
  PulseShape pulse_shape = PulseShape::kImpulse;
  bool lip_radiation = true;
  double jitter = 0.0;  ///< relative std of each period, drawn from the seed
  double target_rms = 0.2;

  void validate() const {
    if (!(f0_hz > 0.0)) throw Error("vowel f0 must be positive");
    if (!(duration_sec > 0.0)) throw Error("vowel duration must be positive");
    if (sample_rate <= 0) throw Error("sample rate must be positive");
    if (jitter < 0.0 || jitter >= 0.5) throw Error("jitter must be in [0, 0.5)");
    if (!(target_rms > 0.0)) throw Error("target RMS must be positive");
    for (std::size_t i = 0; i < formants.size(); ++i) {
      const Resonance& r = formants[i];
      if (!(r.freq_hz > 0.0 && r.freq_hz < 0.5 * sample_rate)) {
        throw Error("formant frequencies must lie in (0, Nyquist)");
      }
      if (!(r.bandwidth_hz > 0.0)) throw Error("formant bandwidths must be positive");
      if (i > 0 && !(r.freq_hz > formants[i - 1].freq_hz)) {
        throw Error("formant frequencies must be strictly increasing");
      }
    }
  }
};

/// Onset sample of every glottal pulse for the given spec.
inline std::vector<std::size_t> pulse_onsets(const VowelSpec& spec, std::uint64_t seed = 0) {
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_sec * spec.sample_rate));
  const double period = spec.sample_rate / spec.f0_hz;
  std::vector<std::size_t> onsets;
  if (spec.jitter == 0.0) {
    for (std::size_t k = 0;; ++k) {
      const auto i = static_cast<std::size_t>(std::llround(static_cast<double>(k) * period));
      if (i >= n) break;
      onsets.push_back(i);
    }
    return onsets;
  }
  GaussianSource noise(seed);
  double t = 0.0;
  while (true) {
    const auto i = static_cast<std::size_t>(std::llround(t));
    if (i >= n) break;
    onsets.push_back(i);
    t += period * std::max(0.5, 1.0 + spec.jitter * noise());
  }
  return onsets;
}

/// Two-pole resonator normalised to unity gain at DC.
inline void resonate(std::vector<double>& x, double freq_hz, double bandwidth_hz, int sample_rate) {
  const double r = std::exp(-std::numbers::pi * bandwidth_hz / sample_rate);
  const double theta = 2.0 * std::numbers::pi * freq_hz / sample_rate;
  const double a1 = -2.0 * r * std::cos(theta);
  const double a2 = r * r;
  const double b0 = 1.0 + a1 + a2;
  double y1 = 0.0, y2 = 0.0;
  for (double& v : x) {
    const double y = b0 * v - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

/// Glottal source through cascaded formant resonators, optional lip radiation,
/// scaled to `target_rms`.
inline Waveform synth_vowel(const VowelSpec& spec, std::uint64_t seed = 0) {
  spec.validate();
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_sec * spec.sample_rate));
  if (n == 0) throw Error("vowel duration is shorter than one sample");
  Waveform w;
  w.sample_rate = spec.sample_rate;
  w.samples.assign(n, 0.0);

  const double period = spec.sample_rate / spec.f0_hz;
  for (std::size_t onset : pulse_onsets(spec, seed)) {
    if (spec.pulse_shape == PulseShape::kImpulse) {
      w.samples[onset] += 1.0;
      continue;
    }
    // Rosenberg: 40% opening, 16% closing.
    const double open = 0.40 * period;
    const double close = 0.16 * period;
    const auto len = static_cast<std::size_t>(std::ceil(open + close));
    for (std::size_t j = 0; j < len && onset + j < n; ++j) {
      const double t = static_cast<double>(j);
      double g = 0.0;
      if (t < open) {
        g = 0.5 * (1.0 - std::cos(std::numbers::pi * t / open));
      } else if (t < open + close) {
        g = std::cos(0.5 * std::numbers::pi * (t - open) / close);
      }
      w.samples[onset + j] += g;
    }
  }

  for (const Resonance& r : spec.formants) resonate(w.samples, r.freq_hz, r.bandwidth_hz, spec.sample_rate);
  if (spec.lip_radiation) {
    for (std::size_t i = n; i-- > 1;) w.samples[i] -= w.samples[i - 1];
  }
  const double level = rms(w);
  if (!(level > 0.0)) throw Error("synthesised vowel is silent");
  for (double& v : w.samples) v *= spec.target_rms / level;
  return w;
}

/// First sample whose magnitude reaches 10% of the peak.
inline std::size_t first_onset(const Waveform& w) {
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) throw Error("cannot locate onset of a silent waveform");
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (std::abs(w.samples[i]) >= 0.1 * peak) return i;
  }
  return 0;
}

/// Analysis settings used when NAPReS runs inside the sweep.
inline NapresParams sweep_napres_defaults() {
  NapresParams p;
  p.analysis = AnalysisParams::glottal();
  p.prune.f_max = 5500.0;
  return p;
}

struct SweepConfig {
  std::vector<double> snr_levels = {100.0, 5.0, 2.0, 1.0};
  std::size_t replicas = 20;
  std::uint64_t seed = 1;
  SnrMode snr_mode = SnrMode::kAmplitude;
  bool run_napres = true;
  bool run_lpc = true;
  std::size_t k = 5;
  std::size_t gmm_components = 7;
  double histogram_bin_hz = 20.0;
  HistogramWeighting weighting = HistogramWeighting::kCount;
  GmmOptions gmm;
  FormantFilter formant_filter;
  NapresParams napres = sweep_napres_defaults();
  LpcParams lpc;
  std::size_t lpc_track_count = 67;

  void validate() const {
    if (replicas < 1) throw Error("replicas must be >= 1");
    if (snr_levels.empty()) throw Error("at least one SNR level is required");
    for (double s : snr_levels) {
      if (!(s > 0.0)) throw Error("SNR levels must be positive");
    }
    if (!run_napres && !run_lpc) throw Error("no methods selected");
    if (k < 1) throw Error("k must be >= 1");
    if (gmm_components < 1) throw Error("GMM needs at least one component");
    if (!(histogram_bin_hz > 0.0)) throw Error("histogram bin width must be positive");
    if (lpc_track_count < 1) throw Error("LPC track count must be >= 1");
    napres.validate();
    lpc.validate();
  }

  std::vector<FormantMethod> methods() const {
    std::vector<FormantMethod> m;
    if (run_napres) m.push_back(FormantMethod::kGmm);
    if (run_lpc) m.push_back(FormantMethod::kLpc);
    return m;
  }
};

/// Method label used in sweep outputs.
inline const char* sweep_label(FormantMethod m) { return m == FormantMethod::kGmm ? "NAPReS" : "LPC"; }

struct CellStats {
  std::vector<std::optional<double>> values;  ///< one per replica
  std::size_t successes = 0;
  std::size_t failures = 0;
  double mean = 0.0;
  double stdev = 0.0;  ///< sample standard deviation
  double min = 0.0;
  double max = 0.0;
};

inline CellStats cell_stats(std::vector<std::optional<double>> values) {
  CellStats c;
  c.values = std::move(values);
  std::vector<double> ok;
  for (const auto& v : c.values) {
    if (v) ok.push_back(*v);
  }
  c.successes = ok.size();
  c.failures = c.values.size() - ok.size();
  if (ok.empty()) return c;
  double sum = 0.0;
  for (double v : ok) sum += v;
  c.mean = sum / static_cast<double>(ok.size());
  double ss = 0.0;
  for (double v : ok) ss += (v - c.mean) * (v - c.mean);
  c.stdev = ok.size() > 1 ? std::sqrt(ss / static_cast<double>(ok.size() - 1)) : 0.0;
  c.min = *std::min_element(ok.begin(), ok.end());
  c.max = *std::max_element(ok.begin(), ok.end());
  return c;
}

struct SweepReport {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<FormantMethod> methods;
  std::vector<double> snr_levels;
  std::size_t replicas = 0;
  std::size_t k = 0;
  /// cells[method][snr][formant]
  std::vector<std::vector<std::vector<CellStats>>> cells;

  const CellStats& cell(FormantMethod m, std::size_t snr_index, std::size_t formant) const {
    for (std::size_t i = 0; i < methods.size(); ++i) {
      if (methods[i] == m) return cells.at(i).at(snr_index).at(formant);
    }
    throw Error(std::string("method not in report: ") + sweep_label(m));
  }
};

/// Independent seed for one (snr, replica) cell.
inline std::uint64_t cell_seed(std::uint64_t seed, std::size_t snr_index, std::size_t replica) {
  return seed ^ detail::mix64((static_cast<std::uint64_t>(snr_index) << 32) ^
                              static_cast<std::uint64_t>(replica));
}

/// NAPReS + histogram + GMM on one waveform. Any pipeline error is a full failure.
inline FormantReport napres_gmm_formants(const Waveform& w, const SweepConfig& cfg, std::uint64_t seed) {
  try {
    const NapresResult res = napres(w, cfg.napres);
    const FrequencyHistogram h = histogram(res.cloud, cfg.histogram_bin_hz, cfg.weighting);
    const GmmFit fit = fit_gmm(h, cfg.gmm_components, seed, cfg.gmm);
    return formants_from_gmm(fit, cfg.k, cfg.formant_filter);
  } catch (const Error&) {
    return report_from_sorted(FormantMethod::kGmm, {}, cfg.k);
  }
}

/// Track-averaged LPC starting at `start_sec`. Any error is a full failure.
inline FormantReport lpc_track_formants(const Waveform& w, const SweepConfig& cfg, double start_sec) {
  LpcParams p = cfg.lpc;
  p.k = cfg.k;
  try {
    const double stride = lpc_stride_for_count(w, p, start_sec, cfg.lpc_track_count);
    const std::vector<FormantReport> track = lpc_track(w, p, start_sec, stride);
    return average_track(track, cfg.k);
  } catch (const Error&) {
    return report_from_sorted(FormantMethod::kLpc, {}, cfg.k);
  }
}

inline std::string fmt_list(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + detail::fmt_g9(v[i]);
  return s;
}

inline std::vector<std::pair<std::string, std::string>> describe(const SweepConfig& cfg) {
  const NapresParams& n = cfg.napres;
  std::vector<std::pair<std::string, std::string>> c = {
      {"rng", GaussianSource::kName},
      {"seed", std::to_string(cfg.seed)},
      {"snr_mode", to_string(cfg.snr_mode)},
      {"snr_levels", fmt_list(cfg.snr_levels)},
      {"replicas", std::to_string(cfg.replicas)},
      {"k", std::to_string(cfg.k)},
      {"gmm_components", std::to_string(cfg.gmm_components)},
      {"gmm_starts", std::to_string(cfg.gmm.starts)},
      {"histogram_bin_hz", detail::fmt_g9(cfg.histogram_bin_hz)},
      {"histogram_weighting", to_string(cfg.weighting)},
      {"f0_hz", detail::fmt_g9(n.f0_hz)},
      {"window_len", std::to_string(n.analysis.window_len)},
      {"hop", std::to_string(n.analysis.hop)},
      {"fft_len", std::to_string(n.analysis.fft_len)},
      {"amp_threshold_db", detail::fmt_g9(n.prune.amp_threshold_db)},
      {"f_min_hz", detail::fmt_g9(n.prune.f_min)},
      {"f_max_hz", detail::fmt_g9(n.prune.f_max)},
      {"stability_limit", detail::fmt_g9(n.prune.stability_limit)},
      {"max_j", n.max_j ? std::to_string(*n.max_j) : std::string("all")},
      {"lpc_order", std::to_string(cfg.lpc.order)},
      {"lpc_rate_hz", std::to_string(cfg.lpc.analysis_rate())},
      {"lpc_window_ms", detail::fmt_g9(cfg.lpc.window_ms)},
      {"lpc_track_count", std::to_string(cfg.lpc_track_count)},
  };
  return c;
}

/// Adds noise per (snr, replica) cell and runs each selected method. Cells are
/// evaluated snr-major, replica-minor.
inline SweepReport run_sweep(const Waveform& clean, const SweepConfig& cfg) {
  cfg.validate();
  if (clean.empty()) throw Error("sweep input is empty");

  SweepReport rep;
  rep.config = describe(cfg);
  rep.methods = cfg.methods();
  rep.snr_levels = cfg.snr_levels;
  rep.replicas = cfg.replicas;
  rep.k = cfg.k;

  const double lpc_start = static_cast<double>(first_onset(clean)) / clean.sample_rate;
  const std::size_t S = cfg.snr_levels.size();
  // raw[method][snr][formant][replica]
  std::vector<std::vector<std::vector<std::vector<std::optional<double>>>>> raw(
      rep.methods.size(),
      std::vector<std::vector<std::vector<std::optional<double>>>>(
          S, std::vector<std::vector<std::optional<double>>>(cfg.k)));

  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t r = 0; r < cfg.replicas; ++r) {
      const std::uint64_t cs = cell_seed(cfg.seed, s, r);
      const Waveform noisy = add_white_noise(clean, cfg.snr_levels[s], cs, cfg.snr_mode);
      for (std::size_t m = 0; m < rep.methods.size(); ++m) {
        const FormantReport fr = rep.methods[m] == FormantMethod::kGmm
                                     ? napres_gmm_formants(noisy, cfg, cs)
                                     : lpc_track_formants(noisy, cfg, lpc_start);
        for (std::size_t f = 0; f < cfg.k; ++f) raw[m][s][f].push_back(fr.formants[f]);
      }
    }
  }

  rep.cells.resize(rep.methods.size());
  for (std::size_t m = 0; m < rep.methods.size(); ++m) {
    rep.cells[m].resize(S);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t f = 0; f < cfg.k; ++f) rep.cells[m][s].push_back(cell_stats(std::move(raw[m][s][f])));
    }
  }
  return rep;
}

inline void write_config_comments(const SweepReport& rep, std::ostream& out) {
  for (const auto& [key, value] : rep.config) out << "# " << key << '=' << value << '\n';
}

/// Long form: one row per (method, snr, formant, replica); failures are FAIL.
inline void write_sweep_long_csv(const SweepReport& rep, std::ostream& out) {
  write_config_comments(rep, out);
  out << "method,snr,formant,replica,value\n";
  for (std::size_t m = 0; m < rep.methods.size(); ++m) {
    for (std::size_t s = 0; s < rep.snr_levels.size(); ++s) {
      for (std::size_t f = 0; f < rep.k; ++f) {
        const CellStats& c = rep.cells[m][s][f];
        for (std::size_t r = 0; r < c.values.size(); ++r) {
          out << sweep_label(rep.methods[m]) << ',' << detail::fmt_g9(rep.snr_levels[s]) << ",F"
              << f + 1 << ',' << r << ',';
          if (c.values[r]) {
            out << detail::fmt_g9(*c.values[r]);
          } else {
            out << "FAIL";
          }
          out << '\n';
        }
      }
    }
  }
}

inline constexpr const char* kStatNames[] = {"Mean", "Std", "Min", "Max", "Failures"};

namespace detail {

inline std::optional<double> stat_value(const CellStats& c, std::size_t stat) {
  if (stat == 4) return static_cast<double>(c.failures);
  if (c.successes == 0) return std::nullopt;
  switch (stat) {
    case 0: return c.mean;
    case 1: return c.stdev;
    case 2: return c.min;
    default: return c.max;
  }
}

}  // namespace detail

/// Summary CSV: `method,formant,statistic,<snr>...`; empty cells where every
/// replica failed.
inline void write_summary_csv(const SweepReport& rep, std::ostream& out) {
  write_config_comments(rep, out);
  out << "method,formant,statistic";
  for (double s : rep.snr_levels) out << ',' << detail::fmt_g9(s);
  out << '\n';
  for (std::size_t m = 0; m < rep.methods.size(); ++m) {
    for (std::size_t f = 0; f < rep.k; ++f) {
      for (std::size_t st = 0; st < 5; ++st) {
        out << sweep_label(rep.methods[m]) << ",F" << f + 1 << ',' << kStatNames[st];
        for (std::size_t s = 0; s < rep.snr_levels.size(); ++s) {
          out << ',';
          if (auto v = detail::stat_value(rep.cells[m][s][f], st)) out << detail::fmt_g9(*v);
        }
        out << '\n';
      }
    }
  }
}

struct SummaryRow {
  std::string method;
  std::size_t formant = 0;  ///< 1-based
  std::string statistic;
  std::vector<std::optional<double>> values;
};

inline std::vector<SummaryRow> read_summary_csv(std::istream& in) {
  std::vector<SummaryRow> rows;
  std::string line;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (columns == 0) {
      if (f.size() < 4 || f[0] != "method" || f[1] != "formant" || f[2] != "statistic") {
        throw Error("summary CSV: unexpected header '" + line + "'");
      }
      columns = f.size();
      continue;
    }
    if (f.size() != columns || f[1].size() < 2 || f[1][0] != 'F') {
      throw Error("summary CSV: malformed row '" + line + "'");
    }
    SummaryRow r;
    r.method = f[0];
    r.formant = std::stoul(f[1].substr(1));
    r.statistic = f[2];
    for (std::size_t i = 3; i < f.size(); ++i) {
      r.values.push_back(f[i].empty() ? std::nullopt : std::optional<double>(std::stod(f[i])));
    }
    rows.push_back(std::move(r));
  }
  if (columns == 0) throw Error("summary CSV: missing header");
  return rows;
}

/// Side-by-side text table: one block per method, rows F1..Fk x statistics,
/// one column per SNR level. Cells without successful fits print "--".
inline std::string summarize(const SweepReport& rep) {
  std::ostringstream out;
  std::ostringstream cfg;
  write_config_comments(rep, cfg);
  out << cfg.str();
  char buf[64];
  for (std::size_t m = 0; m < rep.methods.size(); ++m) {
    out << '\n' << sweep_label(rep.methods[m]) << '\n';
    out << std::left << std::setw(5) << "" << std::setw(10) << "";
    for (double s : rep.snr_levels) {
      out << std::right << std::setw(10) << ("SNR " + detail::fmt_g9(s));
    }
    out << '\n';
    for (std::size_t f = 0; f < rep.k; ++f) {
      for (std::size_t st = 0; st < 5; ++st) {
        out << std::left << std::setw(5) << (st == 0 ? "F" + std::to_string(f + 1) : std::string())
            << std::setw(10) << kStatNames[st];
        for (std::size_t s = 0; s < rep.snr_levels.size(); ++s) {
          const auto v = detail::stat_value(rep.cells[m][s][f], st);
          if (!v) {
            std::snprintf(buf, sizeof buf, "--");
          } else if (st == 4) {
            std::snprintf(buf, sizeof buf, "%.0f", *v);
          } else {
            std::snprintf(buf, sizeof buf, "%.1f", *v);
          }
          out << std::right << std::setw(10) << buf;
        }
        out << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace napres
