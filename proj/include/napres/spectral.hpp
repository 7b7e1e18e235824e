// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <napres/audio.hpp>
#include <napres/error.hpp>
#include <napres/fft.hpp>
#include <napres/grid.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

namespace napres {

using Complex = std::complex<double>;

/// STFT geometry, all in samples.
struct AnalysisParams {
  std::size_t window_len = 2048;
  std::size_t hop = 256;
  std::size_t fft_len = 2048;

  /// Short-window preset for resolving individual glottal pulses: a 256-sample
  /// window (5.3 ms at 48 kHz) zero-padded to a 2048-point transform.
  static AnalysisParams glottal() { return {256, 10, 2048}; }

  void validate() const {
    if (window_len < 2) throw Error("window_len must be at least 2");
    if (hop == 0 || hop > window_len) throw Error("hop must be in [1, window_len]");
    if (fft_len < window_len) throw Error("fft_len must be >= window_len");
  }
};

/// Hann window h, its centred time ramp t*h, and its analytic derivative dh/dt.
/// Ramp units are samples from the window centre; derivative units are per
/// sample.
struct WindowTriple {
  std::vector<double> plain;
  std::vector<double> ramped;
  std::vector<double> derivative;
};

inline WindowTriple make_windows(const AnalysisParams& p) {
  if (p.window_len < 2) throw Error("window_len must be at least 2");
  const std::size_t n_win = p.window_len;
  const double denom = static_cast<double>(n_win - 1);
  const double omega = 2.0 * std::numbers::pi / denom;
  const double centre = denom / 2.0;

  WindowTriple w;
  w.plain.resize(n_win);
  w.ramped.resize(n_win);
  w.derivative.resize(n_win);
  for (std::size_t n = 0; n < n_win; ++n) {
    const double x = omega * static_cast<double>(n);
    w.plain[n] = 0.5 * (1.0 - std::cos(x));
    w.ramped[n] = (static_cast<double>(n) - centre) * w.plain[n];
    w.derivative[n] = 0.5 * omega * std::sin(x);
  }
  // cos(pi) is exact, but cos(2*pi*n/(w-1)) for the endpoint is not; pin the
  // zeros and the odd-length midpoint so symmetry holds exactly.
  w.plain.front() = 0.0;
  w.plain.back() = 0.0;
  w.ramped.front() = 0.0;
  w.ramped.back() = 0.0;
  if (n_win % 2 == 1) {
    w.plain[n_win / 2] = 1.0;
    w.ramped[n_win / 2] = 0.0;
  }
  return w;
}

/// Three aligned STFTs of one signal: plain window, derivative window and
/// time-ramped window. `averaged_count` is the number of pulse slices that were
/// averaged to build the grids (1 for a direct transform).
struct SpectrogramTriple {
  Grid<Complex> plain;
  Grid<Complex> derivative;
  Grid<Complex> ramped;
  std::vector<double> frame_times;  ///< seconds, window centres
  std::vector<double> bin_freqs;    ///< Hz
  AnalysisParams params;
  int sample_rate = 0;
  std::size_t averaged_count = 1;

  std::size_t frames() const { return plain.frames(); }
  std::size_t bins() const { return plain.bins(); }
};

/// Frames are placed every `hop` samples starting at sample 0; the incomplete
/// trailing frame is dropped.
inline SpectrogramTriple stft_triple(const Waveform& w, const AnalysisParams& p) {
  p.validate();
  if (w.sample_rate <= 0) throw Error("sample rate must be positive");
  if (w.size() < p.window_len) {
    throw Error("signal shorter than one analysis window (" + std::to_string(w.size()) +
                " < " + std::to_string(p.window_len) + " samples)");
  }

  const WindowTriple win = make_windows(p);
  RealFft fft(p.fft_len);
  const std::size_t frames = (w.size() - p.window_len) / p.hop + 1;
  const std::size_t bins = fft.bins();
  const double sr = w.sample_rate;

  SpectrogramTriple s;
  s.plain = Grid<Complex>(frames, bins);
  s.derivative = Grid<Complex>(frames, bins);
  s.ramped = Grid<Complex>(frames, bins);
  s.params = p;
  s.sample_rate = w.sample_rate;
  s.frame_times.resize(frames);
  s.bin_freqs.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    s.bin_freqs[b] = static_cast<double>(b) * sr / static_cast<double>(p.fft_len);
  }

  std::vector<double> seg(p.window_len);
  for (std::size_t k = 0; k < frames; ++k) {
    const std::size_t start = k * p.hop;
    s.frame_times[k] =
        (static_cast<double>(start) + static_cast<double>(p.window_len - 1) / 2.0) / sr;
    const double* x = w.samples.data() + start;
    for (std::size_t n = 0; n < p.window_len; ++n) seg[n] = x[n] * win.plain[n];
    fft.forward(seg, s.plain.row(k));
    for (std::size_t n = 0; n < p.window_len; ++n) seg[n] = x[n] * win.derivative[n];
    fft.forward(seg, s.derivative.row(k));
    for (std::size_t n = 0; n < p.window_len; ++n) seg[n] = x[n] * win.ramped[n];
    fft.forward(seg, s.ramped.row(k));
  }
  return s;
}

}  // namespace napres
