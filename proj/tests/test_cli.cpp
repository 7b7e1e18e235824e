// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#include <napres/formant.hpp>
#include <napres/harness.hpp>
#include <napres/pulse.hpp>

#include <catch_amalgamated.hpp>

#include "cli_support.hpp"
#include "test_support.hpp"

#include <fstream>

using namespace napres;
using namespace napres::testing;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;
  fs::path vowel;
  fs::path log;

  explicit Workspace(const std::string& name) : dir(scratch_dir("cli_" + name)) {
    vowel = dir / "vowel.wav";
    log = dir / "log.txt";
    write_wav(synth_vowel(VowelSpec{}), vowel.string());
  }
  int run(const std::string& args) const { return run_cli(args, log); }
  std::string q(const fs::path& p) const { return "'" + p.string() + "'"; }
};

}  // namespace

TEST_CASE("cli usage errors exit with 2") {
  const Workspace ws("usage");
  CHECK(ws.run("") == 2);
  CHECK(ws.run("frobnicate") == 2);
  CHECK(ws.run("napres " + ws.q(ws.vowel) + " --out " + ws.q(ws.dir / "a")) == 2);  // no f0
  CHECK(slurp(ws.log).find("--f0") != std::string::npos);
  CHECK(ws.run("napres " + ws.q(ws.vowel) + " --f0 120 --bogus") == 2);
  CHECK(ws.run("napres " + ws.q(ws.dir / "missing.wav") + " --f0 120") == 2);
  CHECK(ws.run("napres " + ws.q(ws.vowel) + " --f0 120 --hop 0") == 2);
  CHECK(ws.run("napres " + ws.q(ws.vowel) + " --f0 120 --window 512 --fft-len 256") == 2);
  CHECK(ws.run("sweep") == 2);
  CHECK(ws.run("sweep --synth --methods magic") == 2);
  CHECK(ws.run("sweep --synth --synth-formants 650") == 2);
  CHECK(ws.run("render " + ws.q(ws.vowel)) == 2);  // --out missing
  CHECK(ws.run("--help") == 0);
  CHECK(ws.run("sweep --help") == 0);
}

TEST_CASE("cli runtime failures exit with 1") {
  const Workspace ws("runtime");
  const fs::path junk = ws.dir / "junk.wav";
  std::ofstream(junk) << "RIFF but not really a wave file";
  CHECK(ws.run("napres " + ws.q(junk) + " --f0 120 --out " + ws.q(ws.dir / "o")) == 1);
  const fs::path bad_csv = ws.dir / "bad.csv";
  std::ofstream(bad_csv) << "a,b\n1,2\n";
  CHECK(ws.run("formants " + ws.q(bad_csv) + " --out " + ws.q(ws.dir / "o")) == 1);
  CHECK(ws.run("render " + ws.q(bad_csv) + " --out " + ws.q(ws.dir / "x.svg")) == 1);

  // Pure noise has no pitch.
  const fs::path noise = ws.dir / "noise.wav";
  write_wav(uniform_noise(24000, 3), noise.string());
  CHECK(ws.run("napres " + ws.q(noise) + " --estimate-f0 --out " + ws.q(ws.dir / "o")) == 1);
}

TEST_CASE("cli napres writes a cloud and an alignment") {
  const Workspace ws("napres");
  const fs::path out = ws.dir / "out";
  REQUIRE(ws.run("napres " + ws.q(ws.vowel) + " --f0 120 --out " + ws.q(out)) == 0);
  std::ifstream cf(out / "cloud.csv");
  const ReassignedPointCloud cloud = read_cloud_csv(cf);
  CHECK(cloud.averaged_count == 59);
  CHECK(cloud.size() > 100);
  std::ifstream af(out / "alignment.csv");
  const AlignmentCsv align = read_alignment_csv(af);
  CHECK(align.J == 59);
  CHECK(align.rows.size() == 59);
  CHECK_FALSE(fs::exists(out / "cloud.svg"));

  SECTION("--plot adds an SVG without touching the CSV") {
    const fs::path out2 = ws.dir / "out2";
    REQUIRE(ws.run("napres " + ws.q(ws.vowel) + " --f0 120 --plot --out " + ws.q(out2)) == 0);
    CHECK(slurp(out2 / "cloud.csv") == slurp(out / "cloud.csv"));
    CHECK(slurp(out2 / "cloud.svg").starts_with("<svg"));
  }
  SECTION("--max-j caps the average") {
    const fs::path out5 = ws.dir / "j5";
    REQUIRE(ws.run("napres " + ws.q(ws.vowel) + " --f0 120 --max-j 5 --out " + ws.q(out5)) == 0);
    std::ifstream a5(out5 / "alignment.csv");
    CHECK(read_alignment_csv(a5).J == 5);
    CHECK(slurp(out5 / "cloud.csv") != slurp(out / "cloud.csv"));
  }
  SECTION("estimated f0 works too") {
    CHECK(ws.run("napres " + ws.q(ws.vowel) + " --estimate-f0 --out " + ws.q(ws.dir / "est")) == 0);
  }
}

TEST_CASE("cli formants from a cloud and from a WAV") {
  const Workspace ws("formants");
  const fs::path out = ws.dir / "out";
  REQUIRE(ws.run("napres " + ws.q(ws.vowel) + " --f0 120 --out " + ws.q(out)) == 0);
  REQUIRE(ws.run("formants " + ws.q(out / "cloud.csv") + " --out " + ws.q(out)) == 0);
  std::ifstream ff(out / "formants.csv");
  const auto reports = read_formant_csv(ff);
  REQUIRE(reports.size() == 1);
  const VowelSpec spec;
  for (std::size_t i = 0; i < 5; ++i) {
    REQUIRE(reports[0].formants[i]);
    CHECK(*reports[0].formants[i] == Approx(spec.formants[i].freq_hz).epsilon(0.05));
  }
  CHECK(slurp(out / "histogram.csv").find("f_lo_hz,f_hi_hz,count") != std::string::npos);
  CHECK(slurp(out / "fit.csv").find("f_hz,histogram,fit") != std::string::npos);

  const fs::path both = ws.dir / "both";
  REQUIRE(ws.run("formants " + ws.q(ws.vowel) + " --f0 120 --method both --out " + ws.q(both)) == 0);
  std::ifstream bf(both / "formants.csv");
  const auto two = read_formant_csv(bf);
  REQUIRE(two.size() == 2);
  CHECK(two[0].method == FormantMethod::kGmm);
  CHECK(two[1].method == FormantMethod::kLpc);

  CHECK(ws.run("formants " + ws.q(out / "cloud.csv") + " --method lpc --out " + ws.q(both)) == 2);
  CHECK(ws.run("formants " + ws.q(ws.vowel) + " --method lpc --out " + ws.q(ws.dir / "lpc")) == 0);
}

TEST_CASE("cli sweep and render") {
  const Workspace ws("sweep");
  const fs::path out = ws.dir / "sweep";
  REQUIRE(ws.run("sweep --synth --snr 100,2 --replicas 2 --seed 3 --out " + ws.q(out)) == 0);
  std::ifstream sf(out / "summary.csv");
  const auto rows = read_summary_csv(sf);
  CHECK(rows.size() == 2 * 5 * 5);
  CHECK(slurp(out / "sweep_long.csv").find("method,snr,formant,replica,value") != std::string::npos);
  CHECK(slurp(out / "table.txt").find("NAPReS") != std::string::npos);

  const fs::path wav_out = ws.dir / "wav";
  REQUIRE(ws.run("sweep " + ws.q(ws.vowel) + " --methods lpc --snr 5 --replicas 1 --out " + ws.q(wav_out)) == 0);
  std::ifstream wf(wav_out / "summary.csv");
  const auto lpc_rows = read_summary_csv(wf);
  REQUIRE_FALSE(lpc_rows.empty());
  CHECK(lpc_rows.front().method == "LPC");

  const fs::path nap = ws.dir / "nap";
  REQUIRE(ws.run("napres " + ws.q(ws.vowel) + " --f0 120 --out " + ws.q(nap)) == 0);
  REQUIRE(ws.run("render " + ws.q(nap / "cloud.csv") + " --out " + ws.q(ws.dir / "c.svg")) == 0);
  CHECK(slurp(ws.dir / "c.svg").find("<circle") != std::string::npos);
  CHECK(ws.run("render " + ws.q(nap / "cloud.csv") + " --floor-db 5 --out " + ws.q(ws.dir / "d.svg")) == 2);
}
