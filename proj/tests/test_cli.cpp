// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sodiff/cli.hpp"
#include "support.hpp"

using namespace sodiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "sodiff-cli-test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  const auto p = dir / "run.yaml";
  std::ofstream(p) << "crystal:\n  material: alpha-quartz.mat\n  form_factors: formfactors.dat\n" << body;
  return p;
}

const char* kSmall = R"(output:
  directory: out
  grid: binary
sections:
  - name: small
    geometry: {kind: bragg, hkl: [1, 1, 0], wavelength_A: 2.0, thickness_um: 100}
    scan:
      theta: {darwin: 4, n: 33}
      rho: {min_deg: -0.2, max_deg: 0.2, n: 9}
    analysis: {mode: polarization, axis: theta}
  - name: small-oam
    geometry: {kind: bragg, wavelength_A: 2.0, thickness_um: 300}
    scan:
      theta: {min_arcsec: -4, max_arcsec: 4, n: 32}
      rho: {min_arcsec: -4, max_arcsec: 4, n: 32}
    analysis: {mode: oam, L: 8, n_r: 16, n_phi: 32}
)";

struct Result {
  int code;
  std::string err;
};

Result run_cli(const std::string& args, const fs::path& dir) {
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + SODIFF_TEST_CLI + "\" " + args + " > \"" + (dir / "stdout.txt").string() +
                          "\" 2> \"" + err.string() + "\"";
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(err)};
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("presets are listed in order and all validate") {
    const auto names = cli::list_presets();
    const std::vector<std::string> expected{"coil-model", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8b"};
    CHECK(names == expected);
    for (const auto& n : names) CHECK_NOTHROW(cli::load_config(cli::preset_path(n)));
    const auto fig4 = cli::load_config(cli::preset_path("fig4"));
    CHECK(fig4.sections.front().geometry->wavelength == doctest::Approx(5.0279));
    CHECK_THROWS_AS(cli::preset_path("fig99"), ConfigError);
  }

  TEST_CASE("unknown keys are rejected with their path") {
    const auto dir = scratch("unknown");
    const auto cfg = write_config(dir, std::string(kSmall) + "    colour: red\n");
    CHECK_THROWS_WITH_AS(cli::load_config(cfg), doctest::Contains("sections[1].colour"), ConfigError);
    const auto r = run_cli("run " + cfg.string(), dir);
    CHECK(r.code == 2);
    const auto j = nlohmann::json::parse(r.err);
    CHECK(j["error"]["kind"] == "config");
    CHECK(j["error"]["key"] == "sections[1].colour");
    CHECK_FALSE(fs::exists(dir / "out"));  // nothing computed
  }

  TEST_CASE("empty ranges point at the offending key") {
    const auto dir = scratch("empty");
    std::string body = kSmall;
    body.replace(body.find("{min_arcsec: -4, max_arcsec: 4, n: 32}"), 38, "{min_arcsec: 4, max_arcsec: 4, n: 32}");
    const auto r = run_cli("run " + write_config(dir, body).string(), dir);
    CHECK(r.code == 2);
    CHECK(nlohmann::json::parse(r.err)["error"]["key"] == "sections[1].scan.theta");
  }

  TEST_CASE("schema checks") {
    const auto dir = scratch("schema");
    auto fails = [&](const std::string& body, const std::string& needle) {
      CHECK_THROWS_WITH_AS(cli::load_config(write_config(dir, body)), doctest::Contains(needle.c_str()), ConfigError);
    };
    fails("sections: []\n", "sections");
    fails("sections:\n  - name: a\n    analysis: {mode: dance}\n", "sections[0].analysis.mode");
    fails("sections:\n  - name: a\n    geometry: {kind: bragg, wavelength_A: 2, bragg_angle_deg: 20, thickness_um: 1}\n"
          "    scan: {theta: {darwin: 3}, rho: {min_deg: 0, max_deg: 0, n: 1}}\n    analysis: {mode: polarization}\n",
          "exactly one of wavelength_A and bragg_angle_deg");
    fails("sections:\n  - name: a\n    geometry: {kind: bragg, wavelength_A: 2, thickness_um: 1}\n"
          "    scan: {theta: {darwin: 3}, rho: {min_deg: 0, max_deg: 0, n: 1}, branches: incoherent}\n"
          "    analysis: {mode: polarization}\n",
          "Laue geometry only");
    fails("sections:\n  - name: a\n    analysis: {mode: instrument, task: coil, tilt_deg: 5}\n", "sections[0].analysis.alpha");
    fails("sections:\n  - name: a\n    geometry: {kind: bragg, wavelength_A: 2, thickness_um: 1}\n"
          "    scan: {theta: {darwin: 3}, rho: {min_deg: -1, max_deg: 1, n: 8}}\n    analysis: {mode: oam, L: 40, n_phi: 64}\n",
          "Nyquist");
    fails("output: {precision: 40}\nsections:\n  - name: a\n    analysis: {mode: instrument, task: coil, tilt_deg: 5, alpha: {min_deg: 0, max_deg: 1}}\n",
          "output.precision");
  }

  TEST_CASE("physics and I/O failures map to their exit codes") {
    const auto dir = scratch("codes");
    std::string body = kSmall;
    body.replace(body.find("hkl: [1, 1, 0]"), 14, "hkl: [0, 0, 1]");
    auto r = run_cli("run " + write_config(dir, body).string(), dir);
    CHECK(r.code == 3);
    CHECK(nlohmann::json::parse(r.err)["error"]["kind"] == "physics");

    std::ofstream(dir / "missing.yaml") << "crystal: {material: nowhere.mat}\n" << kSmall;
    r = run_cli("run " + (dir / "missing.yaml").string(), dir);
    CHECK(r.code == 4);
    r = run_cli("run " + (dir / "absent.yaml").string(), dir);
    CHECK(r.code == 4);
    r = run_cli("frobnicate", dir);
    CHECK(r.code == 2);
  }

  TEST_CASE("runs are byte-identical and carry provenance") {
    const auto dir = scratch("determinism");
    const auto cfg = write_config(dir, kSmall);
    REQUIRE(run_cli("--threads 1 run " + cfg.string(), dir).code == 0);
    fs::rename(dir / "out", dir / "first");
    REQUIRE(run_cli("--threads 3 run " + cfg.string(), dir).code == 0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "first")) {
      const auto name = e.path().filename();
      CHECK(name.extension() != ".tmp");
      CHECK(slurp(e.path()) == slurp(dir / "out" / name));
      const auto text = slurp(e.path());
      if (name.extension() == ".csv") {
        CHECK(text.rfind("# sodiff ", 0) == 0);
        CHECK(text.find("# config_hash=" + cli::fnv1a_hex(slurp(cfg))) != std::string::npos);
        CHECK(text.find("# units:") != std::string::npos);
      }
      ++files;
    }
    CHECK(files >= 6);
    const auto summary = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
    CHECK(summary["provenance"]["config_hash"] == cli::fnv1a_hex(slurp(cfg)));
    CHECK(summary["sections"].size() == 2);
    CHECK(fs::exists(dir / "out" / "small-grid.bin.json"));
    const auto out = slurp(dir / "stdout.txt");
    CHECK(out.find("[small] polarization grid=33x9") != std::string::npos);
    CHECK(out.find("[small-oam] oam grid=32x32") != std::string::npos);
  }

  TEST_CASE("fit sections read measured scans") {
    const auto dir = scratch("fit");
    std::ofstream scan(dir / "scan.csv");
    scan << "abscissa_unit,arcsec\nx,value,sigma\n";
    for (int i = -20; i <= 20; ++i) {
      const double x = 0.5 * i;
      scan << x << ',' << 0.1 * x * std::exp(-x * x / 8.0) << ",0.01\n";
    }
    scan.close();
    std::ofstream(dir / "fit.yaml") << "output: {directory: out}\nsections:\n  - name: measured\n"
                                       "    analysis: {mode: instrument, task: fit, scan_file: scan.csv}\n";
    REQUIRE(run_cli("run " + (dir / "fit.yaml").string(), dir).code == 0);
    const auto s = nlohmann::json::parse(slurp(dir / "out" / "summary.json"));
    const auto& p = s["sections"][0]["results"]["fit"]["parameters"];
    CHECK(p["width"]["value"].get<double>() == doctest::Approx(2.0 * test::kArcsec).epsilon(1e-6));
    CHECK(s["sections"][0]["results"]["fit"]["covariance"].size() == 4);
  }

  TEST_CASE("polarized spinors point where asked") {
    for (const Vec3& d : std::vector<Vec3>{Vec3::UnitX(), Vec3::UnitY(), Vec3(-0.3, 0.4, -0.5)}) {
      const Spinor s = cli::polarized_spinor(d);
      const SpinorMatrix rho = s * s.adjoint();
      const Vec3 n = d.normalized();
      CHECK(2.0 * rho(0, 1).real() == doctest::Approx(n.x()));
      CHECK(-2.0 * rho(0, 1).imag() == doctest::Approx(n.y()));
      CHECK((rho(0, 0) - rho(1, 1)).real() == doctest::Approx(n.z()));
    }
  }
}
