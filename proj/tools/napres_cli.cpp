// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#include <napres/napres.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace napres;

namespace {

// Thrown for flag combinations CLI11 cannot express; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PitchFlags {
  std::optional<double> f0;
  bool estimate = false;
  double search_lo = 60.0;
  double search_hi = 400.0;

  void add(CLI::App& app) {
    app.add_option("--f0", f0, "Fundamental frequency in Hz")->check(CLI::PositiveNumber);
    app.add_flag("--estimate-f0", estimate, "Estimate F0 by autocorrelation");
    app.add_option("--f0-min", search_lo, "Lower bound of the F0 search band (Hz)")
        ->check(CLI::PositiveNumber);
    app.add_option("--f0-max", search_hi, "Upper bound of the F0 search band (Hz)")
        ->check(CLI::PositiveNumber);
  }

  double resolve(const Waveform& w) const {
    if (f0) return *f0;
    return estimate_f0(w, search_lo, search_hi);
  }

  void require() const {
    if (!f0 && !estimate) throw UsageError("either --f0 or --estimate-f0 is required");
    if (f0 && estimate) throw UsageError("--f0 and --estimate-f0 are mutually exclusive");
  }
};

void add_analysis_flags(CLI::App& app, AnalysisParams& a, PruneParams& p) {
  app.add_option("--window", a.window_len, "Analysis window length (samples)")
      ->check(CLI::Range(2, 1 << 20));
  app.add_option("--hop", a.hop, "Hop between frames (samples)")->check(CLI::Range(1, 1 << 20));
  app.add_option("--fft-len", a.fft_len, "FFT length (samples, >= window)")
      ->check(CLI::Range(2, 1 << 22));
  app.add_option("--threshold-db", p.amp_threshold_db, "Amplitude threshold relative to max (dB)");
  app.add_option("--f-min", p.f_min, "Lowest retained frequency (Hz)");
  app.add_option("--f-max", p.f_max, "Highest retained frequency (Hz)");
  app.add_option("--stability", p.stability_limit, "Phase stability limit");
}

void add_napres_flags(CLI::App& app, NapresParams& n, std::optional<std::size_t>& max_j) {
  add_analysis_flags(app, n.analysis, n.prune);
  app.add_option("--max-j", max_j, "Cap on the number of pulses averaged")->check(CLI::PositiveNumber);
  app.add_option("--pulses-per-template", n.pulses_per_template, "Glottal periods per template")
      ->check(CLI::PositiveNumber);
}

void validate_or_usage(const auto& params) {
  try {
    params.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot open " + p.string() + " for writing");
  return f;
}

void close_out(std::ofstream& f, const fs::path& p) {
  f.close();
  if (!f) throw Error("failed writing " + p.string());
}

bool is_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  char magic[4] = {};
  f.read(magic, 4);
  return !(f.gcount() == 4 && std::string(magic, 4) == "RIFF");
}

// ---------------------------------------------------------------------------

struct NapresCmd {
  std::string input;
  std::string out = ".";
  PitchFlags pitch;
  NapresParams params;
  std::optional<std::size_t> max_j;
  bool plot = false;

  void add(CLI::App& root) {
    params.analysis = AnalysisParams::glottal();
    auto* sub = root.add_subcommand("napres", "Build the averaged, pruned, reassigned spectrogram of a vowel");
    sub->add_option("input", input, "Cropped vowel WAV file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory");
    pitch.add(*sub);
    add_napres_flags(*sub, params, max_j);
    sub->add_flag("--plot", plot, "Also write cloud.svg");
    sub->callback([this] { run(); });
  }

  void run() {
    pitch.require();
    params.max_j = max_j;
    params.f0_hz = pitch.f0.value_or(120.0);
    validate_or_usage(params);

    const Waveform w = read_wav(input);
    params.f0_hz = pitch.resolve(w);
    const NapresResult res = napres::napres(w, params);
    if (res.low_j_warning) std::cerr << "warning: only " << res.alignment.J() << " pulse averaged\n";

    const fs::path dir = prepare_out_dir(out);
    auto cloud_path = dir / "cloud.csv";
    auto f = open_out(cloud_path);
    write_cloud_csv(res.cloud, f);
    close_out(f, cloud_path);

    auto align_path = dir / "alignment.csv";
    auto a = open_out(align_path);
    write_alignment_csv(res.alignment, a);
    close_out(a, align_path);

    if (plot) write_scatter_svg(res.cloud, (dir / "cloud.svg").string());
    std::cout << "J=" << res.alignment.J() << " points=" << res.cloud.points.size() << '\n';
  }
};

struct FormantsCmd {
  std::string input;
  std::string out = ".";
  std::string method = "auto";
  std::size_t components = 7;
  std::size_t k = 5;
  double bin_width = 20.0;
  std::string weighting = "count";
  std::uint64_t seed = 1;
  PitchFlags pitch;
  NapresParams params;
  std::optional<std::size_t> max_j;
  LpcParams lpc;
  std::optional<double> lpc_start;
  std::size_t lpc_count = 67;

  void add(CLI::App& root) {
    params.analysis = AnalysisParams::glottal();
    auto* sub = root.add_subcommand("formants", "Estimate formants from a point cloud CSV or a WAV file");
    sub->add_option("input", input, "cloud.csv from `napres`, or a WAV file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--method", method, "gmm, lpc, both, or auto (gmm for CSV, both for WAV)")
        ->check(CLI::IsMember({"auto", "gmm", "lpc", "both"}));
    sub->add_option("--components", components, "GMM component count")->check(CLI::PositiveNumber);
    sub->add_option("-k,--formants", k, "Number of formants to report")->check(CLI::PositiveNumber);
    sub->add_option("--bin-width", bin_width, "Histogram bin width (Hz)")->check(CLI::PositiveNumber);
    sub->add_option("--weighting", weighting, "Histogram weighting")
        ->check(CLI::IsMember({"count", "magnitude"}));
    sub->add_option("--seed", seed, "Seed for GMM multi-start");
    pitch.add(*sub);
    add_napres_flags(*sub, params, max_j);
    sub->add_option("--lpc-order", lpc.order, "LPC model order")->check(CLI::Range(2, 64));
    sub->add_option("--lpc-window-ms", lpc.window_ms, "LPC window length (ms)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--lpc-start", lpc_start, "LPC track start (s); default is the first onset");
    sub->add_option("--lpc-count", lpc_count, "Number of LPC frames averaged")
        ->check(CLI::PositiveNumber);
    sub->callback([this] { run(); });
  }

  void run() {
    const bool csv = is_csv(input);
    std::string m = method;
    if (m == "auto") m = csv ? "gmm" : "both";
    const bool want_gmm = m == "gmm" || m == "both";
    const bool want_lpc = m == "lpc" || m == "both";
    if (csv && want_lpc) throw UsageError("LPC needs a WAV input");
    if (!csv && want_gmm) pitch.require();
    params.max_j = max_j;
    params.f0_hz = pitch.f0.value_or(120.0);
    lpc.k = k;
    validate_or_usage(params);
    validate_or_usage(lpc);

    const fs::path dir = prepare_out_dir(out);
    std::vector<FormantReport> reports;
    std::optional<Waveform> wav;
    if (!csv) wav = read_wav(input);

    if (want_gmm) {
      ReassignedPointCloud cloud;
      if (csv) {
        cloud = read_cloud_csv(input);
      } else {
        params.f0_hz = pitch.resolve(*wav);
        cloud = napres::napres(*wav, params).cloud;
      }
      const FrequencyHistogram h = histogram(
          cloud, bin_width, weighting == "count" ? HistogramWeighting::kCount : HistogramWeighting::kMagnitude);
      const GmmFit fit = fit_gmm(h, components, seed);
      if (!fit.converged) std::cerr << "warning: GMM fit hit the iteration cap\n";
      reports.push_back(formants_from_gmm(fit, k));

      auto hp = dir / "histogram.csv";
      auto hf = open_out(hp);
      write_histogram_csv(h, hf);
      close_out(hf, hp);
      auto cp = dir / "fit.csv";
      auto cf = open_out(cp);
      write_fit_curve_csv(h, fit, cf);
      close_out(cf, cp);
    }
    if (want_lpc) {
      const double start = lpc_start.value_or(static_cast<double>(first_onset(*wav)) / wav->sample_rate);
      const double stride = lpc_stride_for_count(*wav, lpc, start, lpc_count);
      const auto track = lpc_track(*wav, lpc, start, stride);
      reports.push_back(average_track(track, k));
    }

    auto rp = dir / "formants.csv";
    auto rf = open_out(rp);
    rf << "# components=" << components << "\n# bin_width_hz=" << detail::fmt_g9(bin_width)
       << "\n# weighting=" << weighting << "\n# seed=" << seed << "\n# lpc_order=" << lpc.order
       << "\n# lpc_count=" << lpc_count << '\n';
    write_formant_csv(reports, rf);
    close_out(rf, rp);
    write_formant_csv(reports, std::cout);
  }
};

struct SweepCmd {
  std::string input;
  std::string out = ".";
  bool synth = false;
  VowelSpec spec;
  std::vector<std::string> formant_flags;
  std::string pulse = "impulse";
  bool no_lip = false;
  std::optional<double> f0;
  SweepConfig cfg;
  std::optional<std::size_t> max_j;
  std::vector<std::string> methods = {"napres", "lpc"};
  std::string snr_mode = "amplitude";

  void add(CLI::App& root) {
    auto* sub = root.add_subcommand("sweep", "Monte Carlo noise sweep of NAPReS+GMM against LPC");
    sub->add_option("input", input, "Cropped vowel WAV file (omit with --synth)")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output directory");
    sub->add_flag("--synth", synth, "Use a synthetic vowel as the clean signal");
    sub->add_option("--synth-f0", spec.f0_hz, "Synthetic vowel F0 (Hz)")->check(CLI::PositiveNumber);
    sub->add_option("--synth-formants", formant_flags, "Formants as freq:bandwidth list, e.g. 650:80,1230:90")
        ->delimiter(',');
    sub->add_option("--duration", spec.duration_sec, "Synthetic vowel duration (s)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--pulse", pulse, "Glottal source shape")->check(CLI::IsMember({"impulse", "rosenberg"}));
    sub->add_option("--jitter", spec.jitter, "Relative period jitter of the synthetic source");
    sub->add_flag("--no-lip-radiation", no_lip, "Disable the lip radiation differentiator");
    sub->add_option("--f0", f0, "F0 of a WAV input (Hz); estimated when omitted")->check(CLI::PositiveNumber);
    sub->add_option("--snr", cfg.snr_levels, "SNR levels (signal RMS / noise RMS)")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    sub->add_option("--replicas", cfg.replicas, "Replicas per SNR level")->check(CLI::PositiveNumber);
    sub->add_option("--seed", cfg.seed, "Sweep seed");
    sub->add_option("--methods", methods, "Methods to run")
        ->delimiter(',')
        ->check(CLI::IsMember({"napres", "lpc"}));
    sub->add_option("--snr-mode", snr_mode, "amplitude or power ratio")
        ->check(CLI::IsMember({"amplitude", "power"}));
    sub->add_option("--components", cfg.gmm_components, "GMM component count")->check(CLI::PositiveNumber);
    sub->add_option("-k,--formants", cfg.k, "Number of formants")->check(CLI::PositiveNumber);
    sub->add_option("--lpc-order", cfg.lpc.order, "LPC model order")->check(CLI::Range(2, 64));
    sub->add_option("--lpc-count", cfg.lpc_track_count, "LPC frames per replica")
        ->check(CLI::PositiveNumber);
    add_napres_flags(*sub, cfg.napres, max_j);
    sub->callback([this] { run(); });
  }

  void run() {
    if (synth == !input.empty()) throw UsageError("give either an input WAV or --synth");
    if (!formant_flags.empty()) {
      spec.formants.clear();
      for (const std::string& f : formant_flags) {
        const auto colon = f.find(':');
        try {
          if (colon == std::string::npos) throw std::invalid_argument(f);
          spec.formants.push_back({std::stod(f.substr(0, colon)), std::stod(f.substr(colon + 1))});
        } catch (const std::exception&) {
          throw UsageError("bad --synth-formants entry '" + f + "', expected freq:bandwidth");
        }
      }
    }
    spec.pulse_shape = pulse == "rosenberg" ? PulseShape::kRosenberg : PulseShape::kImpulse;
    spec.lip_radiation = !no_lip;
    cfg.run_napres = std::find(methods.begin(), methods.end(), "napres") != methods.end();
    cfg.run_lpc = std::find(methods.begin(), methods.end(), "lpc") != methods.end();
    cfg.snr_mode = snr_mode == "power" ? SnrMode::kPower : SnrMode::kAmplitude;
    cfg.napres.max_j = max_j;
    cfg.lpc.k = cfg.k;
    if (synth) {
      validate_or_usage(spec);
      cfg.napres.f0_hz = spec.f0_hz;
    } else if (f0) {
      cfg.napres.f0_hz = *f0;
    }
    validate_or_usage(cfg);

    Waveform clean;
    if (synth) {
      clean = synth_vowel(spec, cfg.seed);
    } else {
      clean = read_wav(input);
      if (!f0) cfg.napres.f0_hz = estimate_f0(clean);
    }
    const SweepReport rep = run_sweep(clean, cfg);

    const fs::path dir = prepare_out_dir(out);
    auto lp = dir / "sweep_long.csv";
    auto lf = open_out(lp);
    write_sweep_long_csv(rep, lf);
    close_out(lf, lp);
    auto sp = dir / "summary.csv";
    auto sf = open_out(sp);
    write_summary_csv(rep, sf);
    close_out(sf, sp);
    const std::string table = summarize(rep);
    auto tp = dir / "table.txt";
    auto tf = open_out(tp);
    tf << table;
    close_out(tf, tp);
    std::cout << table;
  }
};

struct RenderCmd {
  std::string input;
  std::string out;
  PlotOptions opt;

  void add(CLI::App& root) {
    auto* sub = root.add_subcommand("render", "Render a point cloud CSV as an SVG scatter plot");
    sub->add_option("input", input, "cloud.csv")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output SVG path")->required();
    sub->add_option("--title", opt.title, "Plot title");
    sub->add_option("--floor-db", opt.floor_db, "Level drawn palest (dB)");
    sub->add_option("--width", opt.width, "Image width (px)");
    sub->add_option("--height", opt.height, "Image height (px)");
    sub->callback([this] { run(); });
  }

  void run() {
    if (!(opt.floor_db < 0.0)) throw UsageError("--floor-db must be negative");
    write_scatter_svg(read_cloud_csv(input), out, opt);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NAPReS: averaged reassigned spectrograms and formant estimation", "napres"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  NapresCmd napres_cmd;
  FormantsCmd formants_cmd;
  SweepCmd sweep_cmd;
  RenderCmd render_cmd;
  napres_cmd.add(app);
  formants_cmd.add(app);
  sweep_cmd.add(app);
  render_cmd.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
