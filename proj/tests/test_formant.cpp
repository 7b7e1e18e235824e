// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#include <napres/formant.hpp>
#include <napres/harness.hpp>

#include <catch_amalgamated.hpp>

#include "test_support.hpp"

#include <algorithm>
#include <numbers>
#include <random>
#include <sstream>

using namespace napres;
using Catch::Approx;

namespace {

FrequencyHistogram sampled_mixture(const std::vector<GmmComponent>& comps, double lo, double hi, double bw) {
  FrequencyHistogram h;
  for (double e = lo; e <= hi + 1e-9; e += bw) h.bin_edges.push_back(e);
  h.counts.resize(h.bin_edges.size() - 1);
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double f = h.center(i);
    for (const GmmComponent& c : comps) h.counts[i] += c.A * std::exp(-0.5 * std::pow((f - c.mu) / c.sigma, 2));
  }
  return h;
}

// Impulse train at f0 through an all-pole filter with resonances `poles`.
Waveform all_pole_vowel(const std::vector<Resonance>& poles, double f0, int sr, double duration) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.assign(static_cast<std::size_t>(duration * sr), 0.0);
  for (double t = 0.0; t < duration; t += 1.0 / f0) w.samples[static_cast<std::size_t>(t * sr)] = 1.0;
  for (const Resonance& r : poles) resonate(w.samples, r.freq_hz, r.bandwidth_hz, sr);
  return w;
}

}  // namespace

TEST_CASE("histogram") {
  SECTION("identical points share one bin") {
    const std::vector<ReassignedPoint> pts(10, ReassignedPoint{0.1, 1000.0, -3.0});
    const FrequencyHistogram h = histogram(pts, 100.0, 10000.0, 50.0);
    CHECK(h.size() == 198);
    CHECK(h.total == 10);
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (h.counts[i] > 0) {
        ++nonzero;
        CHECK(h.counts[i] == 10.0);
        CHECK(h.bin_edges[i] <= 1000.0);
        CHECK(h.bin_edges[i + 1] > 1000.0);
      }
    }
    CHECK(nonzero == 1);
  }
  SECTION("uniform cloud is flat") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> f(100.0, 10000.0);
    std::vector<ReassignedPoint> pts;
    for (int i = 0; i < 40000; ++i) pts.push_back({0.0, f(rng), -10.0});
    const FrequencyHistogram h = histogram(pts, 100.0, 10000.0, 50.0);
    const auto [lo, hi] = std::minmax_element(h.counts.begin(), h.counts.end());
    CHECK(*hi / *lo <= 2.0);
  }
  SECTION("count and magnitude weighting agree for equal magnitudes") {
    std::vector<ReassignedPoint> pts;
    for (int i = 0; i < 300; ++i) pts.push_back({0.0, 150.0 + 13.7 * i, -20.0});
    const FrequencyHistogram c = histogram(pts, 100.0, 5000.0, 20.0, HistogramWeighting::kCount);
    const FrequencyHistogram m = histogram(pts, 100.0, 5000.0, 20.0, HistogramWeighting::kMagnitude);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(m.counts[i] == Approx(0.1 * c.counts[i]));
  }
  SECTION("count weighting conserves mass, edge points included") {
    std::vector<ReassignedPoint> pts = {{0, 100.0, 0}, {0, 5000.0, 0}, {0, 2500.0, -1}};
    const FrequencyHistogram h = histogram(pts, 100.0, 5000.0, 20.0);
    double sum = 0.0;
    for (double v : h.counts) sum += v;
    CHECK(sum == 3.0);
    CHECK(h.counts.front() == 1.0);
    CHECK(h.counts.back() == 1.0);
  }
  SECTION("from a cloud uses its band") {
    ReassignedPointCloud cloud;
    cloud.prune.f_min = 200.0;
    cloud.prune.f_max = 1200.0;
    cloud.points = {{0, 300.0, 0}, {0, 1100.0, 0}};
    const FrequencyHistogram h = histogram(cloud, 20.0);
    CHECK(h.bin_edges.front() == 200.0);
    CHECK(h.bin_edges.back() == 1200.0);
    CHECK(h.total == 2);
  }
  SECTION("errors") {
    CHECK_THROWS_AS(histogram(std::vector<ReassignedPoint>{}, 100, 200, 10), Error);
    const std::vector<ReassignedPoint> one = {{0, 150, 0}};
    CHECK_THROWS_AS(histogram(one, 100, 200, 0), Error);
    CHECK_THROWS_AS(histogram(one, 200, 100, 10), Error);
  }
}

TEST_CASE("fit_gmm recovers a known two-component mixture") {
  const FrequencyHistogram h = sampled_mixture({{1.0, 700.0, 60.0}, {0.5, 1200.0, 80.0}}, 100.0, 2000.0, 10.0);
  const GmmFit fit = fit_gmm(h, 2, 1);
  CHECK(fit.converged);
  REQUIRE(fit.M() == 2);
  std::vector<GmmComponent> c = fit.components;
  std::sort(c.begin(), c.end(), [](const auto& a, const auto& b) { return a.mu < b.mu; });
  CHECK(c[0].mu == Approx(700.0).epsilon(0.02));
  CHECK(c[1].mu == Approx(1200.0).epsilon(0.02));
  CHECK(c[0].sigma == Approx(60.0).epsilon(0.1));
  CHECK(c[1].sigma == Approx(80.0).epsilon(0.1));
  CHECK(c[0].A == Approx(1.0).epsilon(0.05));
  CHECK(c[1].A == Approx(0.5).epsilon(0.05));
}

TEST_CASE("fit_gmm with one component finds the weighted mean") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d(1013.0, 70.0);
  std::vector<ReassignedPoint> pts;
  for (int i = 0; i < 5000; ++i) pts.push_back({0, d(rng), 0});
  const FrequencyHistogram h = histogram(pts, 500.0, 1700.0, 20.0);
  double wsum = 0.0, w = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    wsum += h.counts[i] * h.center(i);
    w += h.counts[i];
  }
  const GmmFit fit = fit_gmm(h, 1, 0);
  CHECK(std::abs(fit.components[0].mu - wsum / w) <= 20.0);
}

TEST_CASE("fit_gmm is stable across seeds on separated components") {
  const std::vector<GmmComponent> truth = {
      {40, 650, 40}, {30, 1230, 50}, {20, 2550, 60}, {12, 3600, 70}, {8, 4730, 80}};
  const FrequencyHistogram h = sampled_mixture(truth, 100.0, 5500.0, 20.0);
  const GmmFit a = fit_gmm(h, 5, 1);
  const GmmFit b = fit_gmm(h, 5, 987654321);
  auto means = [](const GmmFit& f) {
    std::vector<double> m;
    for (const auto& c : f.components) m.push_back(c.mu);
    std::sort(m.begin(), m.end());
    return m;
  };
  const auto ma = means(a), mb = means(b);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(ma[i] == Approx(mb[i]).epsilon(0.01));
    CHECK(ma[i] == Approx(truth[i].mu).epsilon(0.01));
  }
}

TEST_CASE("fit_gmm residual history never increases") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0.0, 1.5);
  FrequencyHistogram h = sampled_mixture({{30, 600, 50}, {20, 1300, 90}, {10, 2400, 70}}, 100.0, 3000.0, 20.0);
  for (double& c : h.counts) c = std::max(0.0, c + noise(rng));
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const GmmFit fit = fit_gmm(h, 4, seed);
    REQUIRE(fit.residual_history.size() >= 2);
    for (std::size_t i = 1; i < fit.residual_history.size(); ++i) {
      CHECK(fit.residual_history[i] <= fit.residual_history[i - 1]);
    }
    CHECK(fit.residual == fit.residual_history.back());
    for (const GmmComponent& c : fit.components) {
      CHECK(c.A >= 0.0);
      CHECK(c.sigma > 0.0);
      CHECK(c.mu >= h.bin_edges.front());
      CHECK(c.mu <= h.bin_edges.back());
    }
  }
}

TEST_CASE("fit_gmm is deterministic and rejects degenerate input") {
  const FrequencyHistogram h = sampled_mixture({{3, 800, 60}, {2, 1500, 60}}, 100.0, 2500.0, 20.0);
  const GmmFit a = fit_gmm(h, 3, 42);
  const GmmFit b = fit_gmm(h, 3, 42);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.components[i].mu == b.components[i].mu);
    CHECK(a.components[i].A == b.components[i].A);
  }
  FrequencyHistogram sparse = h;
  std::fill(sparse.counts.begin(), sparse.counts.end(), 0.0);
  sparse.counts[10] = 5.0;
  CHECK_THROWS_AS(fit_gmm(sparse, 2, 0), Error);
  CHECK_THROWS_AS(fit_gmm(h, 0, 0), Error);
}

TEST_CASE("formants_from_gmm") {
  SECTION("tiny component is filtered") {
    GmmFit fit;
    fit.components = {{1, 650, 50}, {0.8, 1230, 60}, {0.5, 2550, 70}, {0.3, 3600, 80}, {0.2, 4730, 90}, {0.001, 9000, 50}};
    const FormantReport r = formants_from_gmm(fit, 5);
    REQUIRE(r.k() == 5);
    CHECK(r.failures() == 0);
    CHECK(*r.formants[0] == 650.0);
    CHECK(*r.formants[4] == 4730.0);
  }
  SECTION("too few components leave failures") {
    GmmFit fit;
    fit.components = {{1, 2000, 50}, {1, 500, 50}};
    const FormantReport r = formants_from_gmm(fit, 5);
    CHECK(*r.formants[0] == 500.0);
    CHECK(*r.formants[1] == 2000.0);
    CHECK_FALSE(r.formants[2]);
    CHECK(r.failures() == 3);
  }
  SECTION("wide components and near-duplicates are dropped") {
    GmmFit fit;
    fit.components = {{1, 700, 50}, {0.5, 740, 40}, {2, 1500, 900}, {0.4, 2500, 60}};
    const FormantReport r = formants_from_gmm(fit, 3);
    CHECK(*r.formants[0] == 700.0);
    CHECK(*r.formants[1] == 2500.0);
    CHECK_FALSE(r.formants[2]);
  }
  SECTION("weak shoulder of a strong narrow peak is dropped") {
    GmmFit fit;
    fit.components = {{4.3, 477, 47}, {55, 650, 11}, {130, 1230, 9}, {70, 2550, 9}, {3, 2800, 2100}, {6, 4740, 30}};
    const FormantReport r = formants_from_gmm(fit, 4);
    CHECK(*r.formants[0] == 650.0);
    CHECK(*r.formants[3] == 4740.0);
    // A comparable neighbour is kept.
    fit.components[0].A = 20.0;
    CHECK(*formants_from_gmm(fit, 4).formants[0] == 477.0);
  }
  SECTION("order of components does not matter and output increases") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      GmmFit fit;
      for (int i = 0; i < 6; ++i) fit.components.push_back({u(rng), 100 + 5000 * u(rng), 20 + 600 * u(rng)});
      const FormantReport a = formants_from_gmm(fit, 5);
      std::shuffle(fit.components.begin(), fit.components.end(), rng);
      const FormantReport b = formants_from_gmm(fit, 5);
      CHECK(a.formants == b.formants);
      double last = -1.0;
      bool failed = false;
      for (const auto& f : a.formants) {
        if (!f) {
          failed = true;
          continue;
        }
        CHECK_FALSE(failed);  // failures only at the tail
        CHECK(*f > last);
        last = *f;
      }
    }
  }
}

TEST_CASE("formant CSV round trip") {
  const std::vector<FormantReport> reports = {
      report_from_sorted(FormantMethod::kGmm, std::vector<double>{651.25, 1230.5, 2551, 3600.125, 4731}, 5),
      report_from_sorted(FormantMethod::kLpc, std::vector<double>{700, 1250}, 5)};
  std::stringstream ss;
  write_formant_csv(reports, ss);
  CHECK(ss.str() == "method,F1,F2,F3,F4,F5,failures\nGMM,651.25,1230.5,2551,3600.125,4731,0\nLPC,700,1250,,,,3\n");
  const auto back = read_formant_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].formants == reports[0].formants);
  CHECK(back[1].formants == reports[1].formants);
  CHECK(back[1].method == FormantMethod::kLpc);
}

TEST_CASE("histogram and fit CSVs") {
  const FrequencyHistogram h = sampled_mixture({{1, 700, 60}}, 100.0, 1500.0, 20.0);
  const GmmFit fit = fit_gmm(h, 1, 0);
  std::stringstream hs, fs;
  write_histogram_csv(h, hs);
  write_fit_curve_csv(h, fit, fs);
  CHECK(hs.str().find("f_lo_hz,f_hi_hz,count\n100,120,") != std::string::npos);
  CHECK(fs.str().find("f_hz,histogram,fit\n110,") != std::string::npos);
  CHECK(fs.str().find("# component=") != std::string::npos);
}

TEST_CASE("resample preserves in-band tones") {
  const Waveform w = testing::sine(1000.0, 0.5, 48000);
  const Waveform r = resample(w, 11000);
  CHECK(r.sample_rate == 11000);
  CHECK(r.size() == 11000);
  double worst = 0.0;
  for (std::size_t m = 500; m + 500 < r.size(); ++m) {
    const double ideal = 0.5 * std::sin(2.0 * std::numbers::pi * 1000.0 * static_cast<double>(m) / 11000.0);
    worst = std::max(worst, std::abs(r.samples[m] - ideal));
  }
  CHECK(worst < 5e-3);

  // A tone above the new Nyquist is removed.
  const Waveform hi = resample(testing::sine(8000.0, 0.5, 48000), 11000);
  double energy = 0.0;
  for (std::size_t m = 500; m + 500 < hi.size(); ++m) energy += hi.samples[m] * hi.samples[m];
  CHECK(std::sqrt(energy / static_cast<double>(hi.size() - 1000)) < 5e-3);
}

TEST_CASE("Levinson-Durbin and root finding") {
  SECTION("AR(2) coefficients are recovered") {
    // x[n] = 1.3 x[n-1] - 0.6 x[n-2] + e[n]
    GaussianSource g(7);
    std::vector<double> x(200000, 0.0);
    for (std::size_t n = 2; n < x.size(); ++n) x[n] = 1.3 * x[n - 1] - 0.6 * x[n - 2] + g();
    const auto a = lpc_coefficients(x, 2);
    REQUIRE(a);
    CHECK((*a)[0] == 1.0);
    CHECK((*a)[1] == Approx(-1.3).epsilon(0.01));
    CHECK((*a)[2] == Approx(0.6).epsilon(0.02));
  }
  SECTION("silence fails") {
    const std::vector<double> z(100, 0.0);
    CHECK_FALSE(lpc_coefficients(z, 4));
  }
  SECTION("companion roots") {
    // (1 - 0.5 z^-1)(1 + 0.25 z^-1) = 1 - 0.25 z^-1 - 0.125 z^-2
    const std::vector<double> a = {1.0, -0.25, -0.125};
    auto roots = polynomial_roots(a);
    std::sort(roots.begin(), roots.end(), [](auto x, auto y) { return x.real() < y.real(); });
    CHECK(roots[0].real() == Approx(-0.25));
    CHECK(roots[1].real() == Approx(0.5));
  }
}

TEST_CASE("LPC recovers the poles of an all-pole signal") {
  const std::vector<Resonance> poles = {{650, 80}, {1230, 90}, {2550, 120}};
  LpcParams p;
  p.order = 6;
  p.k = 3;
  p.pre_emphasis = 0.0;
  for (double f0 : {100.0, 120.0}) {
    const Waveform w = all_pole_vowel(poles, f0, p.analysis_rate(), 0.5);
    for (double start = 0.15; start < 0.3; start += 0.0137) {
      const FormantReport r = lpc_formants(w, p, start);
      REQUIRE(r.failures() == 0);
      for (std::size_t i = 0; i < 3; ++i) CHECK(*r.formants[i] == Approx(poles[i].freq_hz).epsilon(0.02));
    }
  }
}

TEST_CASE("LPC failure modes") {
  LpcParams p;
  SECTION("silence is a whole-frame failure") {
    Waveform z;
    z.sample_rate = 48000;
    z.samples.assign(4800, 0.0);
    CHECK(lpc_formants(z, p, 0.0).failures() == 5);
  }
  SECTION("white noise rarely yields five sharp resonances") {
    std::size_t f45 = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Waveform n = add_white_noise(testing::sine(1.0, 1e-6, 4800), 1e-6, seed);
      const FormantReport r = lpc_formants(n, p, 0.01);
      f45 += (r.formants[3] ? 0 : 1) + (r.formants[4] ? 0 : 1);
    }
    CHECK(f45 >= 20);
  }
  SECTION("window must fit") {
    const Waveform w = testing::sine(200.0, 0.3, 4800);
    CHECK_THROWS_AS(lpc_formants(w, p, 0.09), Error);
  }
}

TEST_CASE("lpc_track") {
  const Waveform v = synth_vowel(VowelSpec{});
  LpcParams p;
  SECTION("stride chosen for 67 reports") {
    const double stride = lpc_stride_for_count(v, p, 0.0, 67);
    CHECK(lpc_track(v, p, 0.0, stride).size() == 67);
    const double late = lpc_stride_for_count(v, p, 0.0123, 67);
    CHECK(lpc_track(v, p, 0.0123, late).size() == 67);
  }
  SECTION("stride of the whole duration gives one report") {
    CHECK(lpc_track(v, p, 0.0, v.duration()).size() == 1);
    CHECK(lpc_track(v, p, 0.0, lpc_stride_for_count(v, p, 0.0, 1)).size() == 1);
  }
  SECTION("stationary vowel gives a steady track") {
    const auto track = lpc_track(v, p, 0.0, lpc_stride_for_count(v, p, 0.0, 67));
    for (std::size_t i = 0; i < 5; ++i) {
      std::vector<double> vals;
      for (const auto& r : track) {
        if (r.formants[i]) vals.push_back(*r.formants[i]);
      }
      REQUIRE(vals.size() >= 60);
      double mean = 0.0;
      for (double x : vals) mean += x;
      mean /= static_cast<double>(vals.size());
      double var = 0.0;
      for (double x : vals) var += (x - mean) * (x - mean);
      CHECK(std::sqrt(var / static_cast<double>(vals.size() - 1)) <= 0.02 * mean);
    }
  }
  SECTION("errors") {
    CHECK_THROWS_AS(lpc_track(v, p, 0.0, 0.0), Error);
    CHECK_THROWS_AS(lpc_track(v, p, 0.49, 0.01), Error);
  }
}

TEST_CASE("average_track") {
  std::vector<FormantReport> track;
  track.push_back(report_from_sorted(FormantMethod::kLpc, std::vector<double>{500, 1500, 2500}, 3));
  track.push_back(report_from_sorted(FormantMethod::kLpc, std::vector<double>{520, 1540}, 3));
  track.push_back(report_from_sorted(FormantMethod::kLpc, std::vector<double>{510}, 3));
  track.push_back(report_from_sorted(FormantMethod::kLpc, std::vector<double>{}, 3));
  const FormantReport r = average_track(track, 3);
  CHECK(*r.formants[0] == Approx(510.0));
  CHECK(*r.formants[1] == Approx(1520.0));  // 2 of 4 frames: exactly half
  CHECK_FALSE(r.formants[2]);                // 1 of 4 frames
}
