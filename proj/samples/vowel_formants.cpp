// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

// Synthesises a vowel, adds noise, and prints the formants found by
// NAPReS+GMM next to the LPC baseline.

#include <napres/napres.hpp>

#include <cstdio>

int main() {
  using namespace napres;
  const Waveform clean = synth_vowel(VowelSpec{});
  const Waveform noisy = add_white_noise(clean, 5.0, 42);

  NapresParams params = sweep_napres_defaults();
  params.f0_hz = estimate_f0(noisy);
  const NapresResult res = napres::napres(noisy, params);
  const GmmFit fit = fit_gmm(histogram(res.cloud), 7, 42);
  const FormantReport gmm = formants_from_gmm(fit, 5);

  const LpcParams lpc;
  const double stride = lpc_stride_for_count(noisy, lpc, 0.0, 67);
  const FormantReport lpc_report = average_track(lpc_track(noisy, lpc, 0.0, stride), 5);

  std::printf("f0 %.2f Hz, J = %zu pulses, %zu points\n", params.f0_hz, res.alignment.J(),
              res.cloud.points.size());
  for (std::size_t i = 0; i < 5; ++i) {
    auto show = [](const std::optional<double>& f) { return f ? *f : 0.0; };
    std::printf("F%zu  NAPReS %7.1f  LPC %7.1f\n", i + 1, show(gmm.formants[i]),
                show(lpc_report.formants[i]));
  }
}
