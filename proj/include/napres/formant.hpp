// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <napres/audio.hpp>
#include <napres/error.hpp>
#include <napres/reassign.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace napres {

enum class HistogramWeighting { kCount, kMagnitude };

inline const char* to_string(HistogramWeighting w) {
  return w == HistogramWeighting::kCount ? "count" : "magnitude";
}

/// Frequency-axis projection of a point cloud.
struct FrequencyHistogram {
  std::vector<double> bin_edges;
  std::vector<double> counts;
  std::size_t total = 0;  ///< points that fell inside the edges
  HistogramWeighting weighting = HistogramWeighting::kCount;

  std::size_t size() const { return counts.size(); }
  double bin_width() const { return bin_edges.size() > 1 ? bin_edges[1] - bin_edges[0] : 0.0; }
  double center(std::size_t i) const { return 0.5 * (bin_edges[i] + bin_edges[i + 1]); }
  std::vector<double> centers() const {
    std::vector<double> c(size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = center(i);
    return c;
  }
};

/// Bins span [f_lo, f_hi] in steps of `bin_width`; the final edge is the first
/// step at or beyond f_hi. A point exactly on the top edge lands in the last bin.
inline FrequencyHistogram histogram(std::span<const ReassignedPoint> points, double f_lo,
                                    double f_hi, double bin_width,
                                    HistogramWeighting weighting = HistogramWeighting::kCount) {
  if (points.empty()) throw Error("cannot build a histogram from an empty cloud");
  if (!(bin_width > 0.0)) throw Error("histogram bin width must be positive");
  if (!(f_lo < f_hi)) throw Error("histogram range is empty");

  FrequencyHistogram h;
  h.weighting = weighting;
  const auto nbins = static_cast<std::size_t>(std::ceil((f_hi - f_lo) / bin_width - 1e-9));
  h.bin_edges.resize(nbins + 1);
  for (std::size_t i = 0; i <= nbins; ++i) h.bin_edges[i] = f_lo + bin_width * static_cast<double>(i);
  h.counts.assign(nbins, 0.0);

  for (const ReassignedPoint& p : points) {
    if (p.f_hz < f_lo || p.f_hz > h.bin_edges.back()) continue;
    auto idx = static_cast<std::size_t>((p.f_hz - f_lo) / bin_width);
    idx = std::min(idx, nbins - 1);
    h.counts[idx] += weighting == HistogramWeighting::kCount ? 1.0 : std::pow(10.0, p.mag_db / 20.0);
    ++h.total;
  }
  return h;
}

inline FrequencyHistogram histogram(const ReassignedPointCloud& cloud, double bin_width = 20.0,
                                    HistogramWeighting weighting = HistogramWeighting::kCount) {
  return histogram(cloud.points, cloud.prune.f_min, cloud.prune.f_max, bin_width, weighting);
}

struct GmmComponent {
  double A = 0.0;
  double mu = 0.0;
  double sigma = 1.0;
};

struct GmmFit {
  std::vector<GmmComponent> components;
  bool converged = false;
  double residual = 0.0;  ///< sum of squared errors against the histogram
  std::size_t iterations = 0;
  std::size_t start_index = 0;             ///< which multi-start won
  std::vector<double> residual_history;    ///< accepted iterates of the winning start

  std::size_t M() const { return components.size(); }

  double evaluate(double f) const {
    double s = 0.0;
    for (const GmmComponent& c : components) {
      const double z = (f - c.mu) / c.sigma;
      s += c.A * std::exp(-0.5 * z * z);
    }
    return s;
  }
};

struct GmmOptions {
  std::size_t max_iterations = 500;
  double relative_tolerance = 1e-8;
  std::size_t starts = 4;
  double init_smoothing_bins = 1.5;
  double init_min_separation_hz = 150.0;
};

namespace detail {

inline std::vector<double> gaussian_smooth(std::span<const double> x, double sigma_bins) {
  if (!(sigma_bins > 0.0)) return {x.begin(), x.end()};
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma_bins));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (std::ptrdiff_t j = -radius; j <= radius; ++j) {
    const double v = std::exp(-0.5 * (j / sigma_bins) * (j / sigma_bins));
    kernel[static_cast<std::size_t>(j + radius)] = v;
    norm += v;
  }
  for (double& v : kernel) v /= norm;
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> out(x.size(), 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t j = -radius; j <= radius; ++j) {
      const std::ptrdiff_t k = i + j;
      if (k >= 0 && k < n) acc += kernel[static_cast<std::size_t>(j + radius)] * x[static_cast<std::size_t>(k)];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

// Parameters per component: amplitude root a (A = a^2), mean, log sigma.
struct GmmState {
  std::vector<double> theta;

  GmmComponent component(std::size_t m) const {
    return {theta[3 * m] * theta[3 * m], theta[3 * m + 1], std::exp(theta[3 * m + 2])};
  }
};

class GmmProblem {
 public:
  GmmProblem(const FrequencyHistogram& h, std::size_t M)
      : x_(h.centers()), y_(h.counts), M_(M), lo_(h.bin_edges.front()), hi_(h.bin_edges.back()),
        log_sigma_min_(std::log(h.bin_width() / 4.0)),
        log_sigma_max_(std::log(h.bin_edges.back() - h.bin_edges.front())) {}

  double residual(const GmmState& s, Eigen::VectorXd* r = nullptr) const {
    double sse = 0.0;
    if (r) r->resize(static_cast<Eigen::Index>(x_.size()));
    for (std::size_t i = 0; i < x_.size(); ++i) {
      double model = 0.0;
      for (std::size_t m = 0; m < M_; ++m) {
        const GmmComponent c = s.component(m);
        const double z = (x_[i] - c.mu) / c.sigma;
        model += c.A * std::exp(-0.5 * z * z);
      }
      const double e = model - y_[i];
      if (r) (*r)(static_cast<Eigen::Index>(i)) = e;
      sse += e * e;
    }
    return sse;
  }

  Eigen::MatrixXd jacobian(const GmmState& s) const {
    Eigen::MatrixXd J(static_cast<Eigen::Index>(x_.size()), static_cast<Eigen::Index>(3 * M_));
    for (std::size_t m = 0; m < M_; ++m) {
      const double a = s.theta[3 * m];
      const GmmComponent c = s.component(m);
      const auto col = static_cast<Eigen::Index>(3 * m);
      for (std::size_t i = 0; i < x_.size(); ++i) {
        const double d = x_[i] - c.mu;
        const double z2 = d * d / (c.sigma * c.sigma);
        const double g = std::exp(-0.5 * z2);
        const auto row = static_cast<Eigen::Index>(i);
        J(row, col) = 2.0 * a * g;
        J(row, col + 1) = c.A * g * d / (c.sigma * c.sigma);
        J(row, col + 2) = c.A * g * z2;
      }
    }
    return J;
  }

  void project(GmmState& s) const {
    for (std::size_t m = 0; m < M_; ++m) {
      s.theta[3 * m + 1] = std::clamp(s.theta[3 * m + 1], lo_, hi_);
      s.theta[3 * m + 2] = std::clamp(s.theta[3 * m + 2], log_sigma_min_, log_sigma_max_);
    }
  }

  std::size_t M() const { return M_; }

 private:
  std::vector<double> x_, y_;
  std::size_t M_;
  double lo_, hi_, log_sigma_min_, log_sigma_max_;
};

struct LmResult {
  GmmState state;
  double residual = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<double> history;
};

// Levenberg-Marquardt with Marquardt scaling and box projection. Only steps that
// lower the residual are accepted, so the history is non-increasing.
inline LmResult levenberg_marquardt(const GmmProblem& prob, GmmState s, const GmmOptions& opt) {
  LmResult out;
  prob.project(s);
  Eigen::VectorXd r;
  double sse = prob.residual(s, &r);
  out.history.push_back(sse);
  double lambda = 1e-3;

  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    out.iterations = it + 1;
    const Eigen::MatrixXd J = prob.jacobian(s);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    Eigen::VectorXd diag = JtJ.diagonal().cwiseMax(1e-12);

    bool accepted = false;
    while (lambda < 1e16) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += lambda * diag;
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      GmmState trial = s;
      for (std::size_t p = 0; p < trial.theta.size(); ++p) {
        trial.theta[p] += step(static_cast<Eigen::Index>(p));
      }
      prob.project(trial);
      Eigen::VectorXd rt;
      const double trial_sse = prob.residual(trial, &rt);
      if (std::isfinite(trial_sse) && trial_sse < sse) {
        const double rel = (sse - trial_sse) / std::max(sse, std::numeric_limits<double>::min());
        s = std::move(trial);
        r = std::move(rt);
        sse = trial_sse;
        out.history.push_back(sse);
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        if (rel < opt.relative_tolerance) out.converged = true;
        break;
      }
      lambda *= 10.0;
    }
    // No descent direction left at any damping: a stationary point.
    if (!accepted) out.converged = true;
    if (out.converged || sse == 0.0) {
      out.converged = true;
      break;
    }
  }
  out.state = std::move(s);
  out.residual = sse;
  return out;
}

}  // namespace detail

/// Least-squares fit of a sum of M Gaussians to the histogram curve.
/// Start 0 seeds the means at the tallest peaks of a smoothed copy of the
/// histogram; further starts jitter that guess using `seed`. The lowest
/// residual wins, ties going to the earlier start.
inline GmmFit fit_gmm(const FrequencyHistogram& h, std::size_t M, std::uint64_t seed = 0,
                      const GmmOptions& opt = {}) {
  if (M < 1) throw Error("GMM needs at least one component");
  if (opt.starts < 1) throw Error("GMM needs at least one start");
  const std::size_t nonzero =
      static_cast<std::size_t>(std::count_if(h.counts.begin(), h.counts.end(), [](double c) { return c > 0.0; }));
  if (h.size() < 3 || nonzero < M) throw Error("degenerate histogram for GMM fit");

  const double bw = h.bin_width();
  const std::vector<double> cs = detail::gaussian_smooth(h.counts, opt.init_smoothing_bins);
  const double min_sep = std::max(2.0, opt.init_min_separation_hz / bw);

  std::vector<std::size_t> maxima;
  for (std::size_t i = 1; i + 1 < cs.size(); ++i) {
    if (cs[i - 1] < cs[i] && cs[i] >= cs[i + 1]) maxima.push_back(i);
  }
  std::stable_sort(maxima.begin(), maxima.end(), [&](std::size_t a, std::size_t b) { return cs[a] > cs[b]; });

  std::vector<std::size_t> chosen;
  auto far_enough = [&](std::size_t i, double sep) {
    return std::all_of(chosen.begin(), chosen.end(), [&](std::size_t j) {
      return std::abs(static_cast<double>(i) - static_cast<double>(j)) >= sep;
    });
  };
  for (std::size_t i : maxima) {
    if (chosen.size() == M) break;
    if (far_enough(i, min_sep)) chosen.push_back(i);
  }
  if (chosen.size() < M) {
    std::vector<std::size_t> order(cs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cs[a] > cs[b]; });
    for (std::size_t i : order) {
      if (chosen.size() == M) break;
      if (far_enough(i, 1.0)) chosen.push_back(i);
    }
  }

  detail::GmmState base;
  for (std::size_t i : chosen) {
    base.theta.push_back(std::sqrt(std::max(cs[i], 1e-12)));
    base.theta.push_back(h.center(i));
    base.theta.push_back(std::log(2.0 * bw));
  }

  const detail::GmmProblem prob(h, M);
  std::optional<detail::LmResult> best;
  std::size_t best_start = 0;
  for (std::size_t start = 0; start < opt.starts; ++start) {
    detail::GmmState init = base;
    if (start > 0) {
      std::mt19937_64 rng(seed ^ detail::mix64(start));
      std::uniform_real_distribution<double> shift(-3.0 * bw, 3.0 * bw);
      std::uniform_real_distribution<double> widen(std::log(0.5), std::log(2.0));
      for (std::size_t m = 0; m < M; ++m) {
        init.theta[3 * m + 1] += shift(rng);
        init.theta[3 * m + 2] += widen(rng);
      }
    }
    detail::LmResult res = detail::levenberg_marquardt(prob, std::move(init), opt);
    if (!best || res.residual < best->residual) {
      best = std::move(res);
      best_start = start;
    }
  }

  GmmFit fit;
  for (std::size_t m = 0; m < M; ++m) fit.components.push_back(best->state.component(m));
  fit.converged = best->converged;
  fit.residual = best->residual;
  fit.iterations = best->iterations;
  fit.start_index = best_start;
  fit.residual_history = std::move(best->history);
  return fit;
}

enum class FormantMethod { kGmm, kLpc };

inline const char* to_string(FormantMethod m) { return m == FormantMethod::kGmm ? "GMM" : "LPC"; }

/// F1..Fk; an empty optional marks a failed formant.
struct FormantReport {
  FormantMethod method = FormantMethod::kGmm;
  std::vector<std::optional<double>> formants;

  std::size_t k() const { return formants.size(); }
  std::size_t failures() const {
    return static_cast<std::size_t>(
        std::count_if(formants.begin(), formants.end(), [](const auto& f) { return !f; }));
  }
};

/// Builds a report from ascending candidate frequencies, padding with failures.
inline FormantReport report_from_sorted(FormantMethod method, std::span<const double> sorted,
                                        std::size_t k) {
  FormantReport r;
  r.method = method;
  for (std::size_t i = 0; i < k; ++i) {
    if (i < sorted.size()) {
      r.formants.emplace_back(sorted[i]);
    } else {
      r.formants.emplace_back(std::nullopt);
    }
  }
  return r;
}

struct FormantFilter {
  double min_relative_amplitude = 0.01;
  double max_sigma_hz = 500.0;
  double merge_hz = 100.0;
  /// A component within shoulder_hz of a narrow one at least shoulder_ratio
  /// times stronger is treated as that peak's shoulder.
  double shoulder_ratio = 5.0;
  double shoulder_hz = 300.0;
};

inline FormantReport formants_from_gmm(const GmmFit& fit, std::size_t k,
                                       const FormantFilter& filter = {}) {
  if (fit.components.empty()) throw Error("GMM fit has no components");
  double a_max = 0.0;
  for (const GmmComponent& c : fit.components) a_max = std::max(a_max, c.A);

  auto shoulder = [&](const GmmComponent& c) {
    for (const GmmComponent& d : fit.components) {
      if (d.sigma <= filter.max_sigma_hz && d.A >= filter.shoulder_ratio * c.A &&
          std::abs(d.mu - c.mu) < filter.shoulder_hz) {
        return true;
      }
    }
    return false;
  };
  std::vector<GmmComponent> keep;
  for (const GmmComponent& c : fit.components) {
    if (c.A > 0.0 && c.A >= filter.min_relative_amplitude * a_max && c.sigma <= filter.max_sigma_hz &&
        !shoulder(c)) {
      keep.push_back(c);
    }
  }
  // Sort by (mu, -A) so the result does not depend on component order.
  std::sort(keep.begin(), keep.end(), [](const GmmComponent& a, const GmmComponent& b) {
    return a.mu != b.mu ? a.mu < b.mu : a.A > b.A;
  });

  std::vector<GmmComponent> merged;
  for (const GmmComponent& c : keep) {
    if (!merged.empty() && c.mu - merged.back().mu < filter.merge_hz) {
      if (c.A > merged.back().A) merged.back() = c;
      continue;
    }
    merged.push_back(c);
  }
  std::vector<double> mus;
  for (const GmmComponent& c : merged) mus.push_back(c.mu);
  return report_from_sorted(FormantMethod::kGmm, mus, k);
}

inline void write_formant_csv_header(std::size_t k, std::ostream& out) {
  out << "method";
  for (std::size_t i = 1; i <= k; ++i) out << ",F" << i;
  out << ",failures\n";
}

inline void write_formant_csv_row(const FormantReport& r, std::ostream& out) {
  out << to_string(r.method);
  for (const auto& f : r.formants) {
    out << ',';
    if (f) out << detail::fmt_g9(*f);
  }
  out << ',' << r.failures() << '\n';
}

/// `method,F1,...,Fk,failures`; failed formants are empty fields.
inline void write_formant_csv(std::span<const FormantReport> reports, std::ostream& out) {
  if (reports.empty()) throw Error("no formant reports to write");
  write_formant_csv_header(reports.front().k(), out);
  for (const FormantReport& r : reports) write_formant_csv_row(r, out);
}

inline std::vector<FormantReport> read_formant_csv(std::istream& in) {
  std::vector<FormantReport> out;
  std::string line;
  std::size_t k = 0;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      fields.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!header) {
      if (fields.size() < 3 || fields.front() != "method" || fields.back() != "failures") {
        throw Error("formant CSV: unexpected header '" + line + "'");
      }
      k = fields.size() - 2;
      header = true;
      continue;
    }
    if (fields.size() != k + 2) throw Error("formant CSV: wrong field count in '" + line + "'");
    FormantReport r;
    if (fields[0] == "GMM") {
      r.method = FormantMethod::kGmm;
    } else if (fields[0] == "LPC") {
      r.method = FormantMethod::kLpc;
    } else {
      throw Error("formant CSV: unknown method '" + fields[0] + "'");
    }
    for (std::size_t i = 1; i <= k; ++i) {
      if (fields[i].empty()) {
        r.formants.emplace_back(std::nullopt);
      } else {
        r.formants.emplace_back(std::stod(fields[i]));
      }
    }
    if (std::stoul(fields.back()) != r.failures()) throw Error("formant CSV: failure count mismatch");
    out.push_back(std::move(r));
  }
  if (!header) throw Error("formant CSV: missing header");
  return out;
}

/// `f_lo_hz,f_hi_hz,count`
inline void write_histogram_csv(const FrequencyHistogram& h, std::ostream& out) {
  out << "# weighting=" << to_string(h.weighting) << '\n'
      << "# total=" << h.total << '\n'
      << "f_lo_hz,f_hi_hz,count\n";
  for (std::size_t i = 0; i < h.size(); ++i) {
    out << detail::fmt_g9(h.bin_edges[i]) << ',' << detail::fmt_g9(h.bin_edges[i + 1]) << ','
        << detail::fmt_g9(h.counts[i]) << '\n';
  }
}

/// `f_hz,histogram,fit` at bin centres, with components as comment lines.
inline void write_fit_curve_csv(const FrequencyHistogram& h, const GmmFit& fit, std::ostream& out) {
  out << "# converged=" << (fit.converged ? 1 : 0) << '\n'
      << "# residual=" << detail::fmt_g9(fit.residual) << '\n';
  for (const GmmComponent& c : fit.components) {
    out << "# component=" << detail::fmt_g9(c.A) << ';' << detail::fmt_g9(c.mu) << ';'
        << detail::fmt_g9(c.sigma) << '\n';
  }
  out << "f_hz,histogram,fit\n";
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double f = h.center(i);
    out << detail::fmt_g9(f) << ',' << detail::fmt_g9(h.counts[i]) << ','
        << detail::fmt_g9(fit.evaluate(f)) << '\n';
  }
}

// ---------------------------------------------------------------------------
// LPC baseline

struct LpcParams {
  std::size_t order = 12;
  double window_ms = 25.0;
  std::size_t k = 5;
  double pre_emphasis = 0.97;
  double window_half_width_sigmas = 2.5;
  double max_bandwidth_hz = 400.0;
  double edge_guard_hz = 50.0;

  /// Analysis rate: twice a (k + 0.5) kHz ceiling, 11 kHz for k = 5.
  int analysis_rate() const {
    return static_cast<int>(std::lround(2.0 * (static_cast<double>(k) + 0.5) * 1000.0));
  }

  void validate() const {
    if (order < 2) throw Error("LPC order must be >= 2");
    if (!(window_ms > 0.0)) throw Error("LPC window must be positive");
    if (k < 1) throw Error("LPC needs k >= 1");
    if (!(window_half_width_sigmas > 0.0)) throw Error("LPC window sigma span must be positive");
  }
};

/// Band-limited resampling with a Blackman-windowed sinc kernel.
inline Waveform resample(const Waveform& w, int new_rate) {
  if (new_rate <= 0) throw Error("sample rate must be positive");
  if (new_rate == w.sample_rate) return w;
  const double ratio = static_cast<double>(new_rate) / w.sample_rate;
  const double cutoff = 0.5 * std::min(1.0, ratio) * 0.95;  // cycles per input sample
  const double half_width = 16.0 / std::min(1.0, ratio);    // input samples
  const auto out_len = static_cast<std::size_t>(std::floor(static_cast<double>(w.size()) * ratio));

  Waveform out;
  out.sample_rate = new_rate;
  out.samples.resize(out_len);
  const auto n_in = static_cast<std::ptrdiff_t>(w.size());
  for (std::size_t m = 0; m < out_len; ++m) {
    const double t = static_cast<double>(m) / ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t n = lo; n <= hi; ++n) {
      const double d = static_cast<double>(n) - t;
      const double x = 2.0 * cutoff * d;
      const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double u = (d + half_width) / (2.0 * half_width);
      const double win = 0.42 - 0.5 * std::cos(2.0 * std::numbers::pi * u) +
                         0.08 * std::cos(4.0 * std::numbers::pi * u);
      acc += w.samples[static_cast<std::size_t>(n)] * 2.0 * cutoff * sinc * win;
    }
    out.samples[m] = acc;
  }
  return out;
}

namespace detail {

inline std::vector<double> lpc_window(std::size_t len, double half_width_sigmas) {
  std::vector<double> g(len);
  const double centre = 0.5 * static_cast<double>(len - 1);
  const double sigma = static_cast<double>(len) / (2.0 * half_width_sigmas);
  for (std::size_t n = 0; n < len; ++n) {
    const double z = (static_cast<double>(n) - centre) / sigma;
    g[n] = std::exp(-0.5 * z * z);
  }
  return g;
}

inline std::vector<double> pre_emphasize(std::span<const double> x, double coeff) {
  std::vector<double> y(x.size());
  if (x.empty()) return y;
  y[0] = x[0];
  for (std::size_t i = 1; i < x.size(); ++i) y[i] = x[i] - coeff * x[i - 1];
  return y;
}

// Samples prepared for framing: resampled and pre-emphasised.
struct LpcSignal {
  std::vector<double> samples;
  int sample_rate = 0;
  std::size_t window_len = 0;
  std::vector<double> window;
};

inline LpcSignal prepare_lpc(const Waveform& w, const LpcParams& p) {
  p.validate();
  LpcSignal s;
  const Waveform r = resample(w, p.analysis_rate());
  s.sample_rate = r.sample_rate;
  s.samples = pre_emphasize(r.samples, p.pre_emphasis);
  s.window_len = static_cast<std::size_t>(std::lround(p.window_ms * 1e-3 * s.sample_rate));
  if (s.window_len <= p.order) throw Error("LPC window shorter than the model order");
  s.window = lpc_window(s.window_len, p.window_half_width_sigmas);
  return s;
}

}  // namespace detail

/// Predictor polynomial [1, a1, ..., ap] by autocorrelation and Levinson-Durbin.
/// Returns nothing when the recursion is unstable or the frame is silent.
inline std::optional<std::vector<double>> lpc_coefficients(std::span<const double> frame,
                                                           std::size_t order) {
  if (frame.size() <= order) throw Error("LPC frame shorter than the model order");
  std::vector<double> r(order + 1, 0.0);
  for (std::size_t lag = 0; lag <= order; ++lag) {
    for (std::size_t i = 0; i + lag < frame.size(); ++i) r[lag] += frame[i] * frame[i + lag];
  }
  if (!(r[0] > 0.0)) return std::nullopt;

  std::vector<double> a(order + 1, 0.0);
  a[0] = 1.0;
  double err = r[0];
  for (std::size_t i = 1; i <= order; ++i) {
    double acc = r[i];
    for (std::size_t j = 1; j < i; ++j) acc += a[j] * r[i - j];
    const double refl = -acc / err;
    std::vector<double> prev(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(i));
    for (std::size_t j = 1; j < i; ++j) a[j] = prev[j] + refl * prev[i - j];
    a[i] = refl;
    err *= 1.0 - refl * refl;
    if (!(err > 0.0)) return std::nullopt;
  }
  return a;
}

/// Roots of 1 + a1 z^-1 + ... + ap z^-p, via the companion matrix.
inline std::vector<std::complex<double>> polynomial_roots(std::span<const double> a) {
  const std::size_t p = a.size() - 1;
  if (p == 0) return {};
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) C(0, static_cast<Eigen::Index>(j)) = -a[j + 1] / a[0];
  for (std::size_t i = 1; i < p; ++i) C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(C, false);
  std::vector<std::complex<double>> roots;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) roots.push_back(solver.eigenvalues()(i));
  return roots;
}

/// Formant candidates of one already-windowed frame at `sample_rate`.
inline FormantReport lpc_frame(std::span<const double> frame, int sample_rate, const LpcParams& p) {
  const auto coeffs = lpc_coefficients(frame, p.order);
  if (!coeffs) return report_from_sorted(FormantMethod::kLpc, {}, p.k);
  std::vector<double> freqs;
  const double nyquist = 0.5 * sample_rate;
  for (const std::complex<double>& z : polynomial_roots(*coeffs)) {
    if (z.imag() <= 0.0) continue;
    const double f = std::arg(z) * sample_rate / (2.0 * std::numbers::pi);
    const double bw = -std::log(std::abs(z)) * sample_rate / std::numbers::pi;
    if (bw <= p.max_bandwidth_hz && f > p.edge_guard_hz && f < nyquist - p.edge_guard_hz) {
      freqs.push_back(f);
    }
  }
  std::sort(freqs.begin(), freqs.end());
  return report_from_sorted(FormantMethod::kLpc, freqs, p.k);
}

/// Single LPC analysis window starting at `window_start` seconds.
inline FormantReport lpc_formants(const Waveform& w, const LpcParams& p, double window_start) {
  const detail::LpcSignal s = detail::prepare_lpc(w, p);
  if (window_start < 0.0) throw Error("LPC window start must be >= 0");
  const auto first = static_cast<std::size_t>(std::lround(window_start * s.sample_rate));
  if (first + s.window_len > s.samples.size()) throw Error("LPC window does not fit inside the signal");
  std::vector<double> frame(s.window_len);
  for (std::size_t n = 0; n < s.window_len; ++n) frame[n] = s.samples[first + n] * s.window[n];
  return lpc_frame(frame, s.sample_rate, p);
}

/// Sliding-window LPC from `start_sec` with a fixed stride; the number of
/// reports is floor((remaining - window) / stride) + 1.
inline std::vector<FormantReport> lpc_track(const Waveform& w, const LpcParams& p, double start_sec,
                                            double stride_sec) {
  if (!(stride_sec > 0.0)) throw Error("LPC stride must be positive");
  if (start_sec < 0.0) throw Error("LPC track start must be >= 0");
  const detail::LpcSignal s = detail::prepare_lpc(w, p);
  const auto first = static_cast<std::size_t>(std::lround(start_sec * s.sample_rate));
  if (first + s.window_len > s.samples.size()) throw Error("utterance shorter than one LPC window");

  const double span = static_cast<double>(s.samples.size() - first - s.window_len);
  const double stride = stride_sec * s.sample_rate;
  const auto count = static_cast<std::size_t>(std::floor(span / stride + 1e-9)) + 1;
  std::vector<FormantReport> out;
  out.reserve(count);
  std::vector<double> frame(s.window_len);
  const std::size_t last_start = s.samples.size() - s.window_len;
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t begin =
        std::min(last_start, first + static_cast<std::size_t>(std::lround(static_cast<double>(j) * stride)));
    for (std::size_t n = 0; n < s.window_len; ++n) frame[n] = s.samples[begin + n] * s.window[n];
    out.push_back(lpc_frame(frame, s.sample_rate, p));
  }
  return out;
}

/// Stride that yields exactly `count` track reports from `start_sec`.
inline double lpc_stride_for_count(const Waveform& w, const LpcParams& p, double start_sec,
                                   std::size_t count) {
  p.validate();
  if (count < 1) throw Error("LPC track needs at least one report");
  const int rate = p.analysis_rate();
  const double ratio = static_cast<double>(rate) / w.sample_rate;
  const auto len = rate == w.sample_rate
                       ? w.size()
                       : static_cast<std::size_t>(std::floor(static_cast<double>(w.size()) * ratio));
  const auto first = static_cast<std::size_t>(std::lround(start_sec * rate));
  const auto window = static_cast<std::size_t>(std::lround(p.window_ms * 1e-3 * rate));
  if (first + window > len) throw Error("utterance shorter than one LPC window");
  const double span = static_cast<double>(len - first - window);
  if (count == 1) return (span + 1.0) / rate;
  return span / static_cast<double>(count - 1) / rate;
}

/// Mean of each formant over the frames that found it. A formant fails when
/// fewer than `min_found_fraction` of the frames produced it.
inline FormantReport average_track(std::span<const FormantReport> track, std::size_t k,
                                   double min_found_fraction = 0.5) {
  FormantReport out;
  out.method = FormantMethod::kLpc;
  for (std::size_t i = 0; i < k; ++i) {
    double sum = 0.0;
    std::size_t found = 0;
    for (const FormantReport& r : track) {
      if (i < r.k() && r.formants[i]) {
        sum += *r.formants[i];
        ++found;
      }
    }
    if (found > 0 && static_cast<double>(found) >= min_found_fraction * static_cast<double>(track.size())) {
      out.formants.emplace_back(sum / static_cast<double>(found));
    } else {
      out.formants.emplace_back(std::nullopt);
    }
  }
  return out;
}

}  // namespace napres
