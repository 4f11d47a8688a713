// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sodiff/cli.hpp"
#include "sodiff/constants.hpp"

namespace sodiff::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr double kDeg = PhysicalConstants::pi / 180.0;
constexpr double kArcsec = kDeg / 3600.0;

class Emitter {
 public:
  Emitter(const RunConfig& cfg, fs::path dir) : cfg_(cfg), dir_(std::move(dir)) {}

  std::string num(double x) const {
    if (std::isnan(x)) return "nan";
    return fmt::format("{:.{}g}", x, cfg_.output.precision);
  }

  // Rounds to the output precision so JSON and CSV agree digit for digit.
  double round(double x) const {
    if (!std::isfinite(x)) return x;
    return std::stod(fmt::format("{:.{}g}", x, cfg_.output.precision));
  }

  std::string header(const std::string& section, const std::string& units) const {
    return fmt::format("# sodiff {}\n# config_hash={}\n# section={}\n# units: {}\n", code_version(), cfg_.hash,
                       section, units);
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path target = dir_ / name;
    const fs::path tmp = dir_ / (name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + tmp.string());
      out << content;
      out.flush();
      if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + target.string() + ": " + ec.message());
    files_.push_back(name);
  }

  const std::vector<std::string>& files() const { return files_; }

 private:
  const RunConfig& cfg_;
  fs::path dir_;
  std::vector<std::string> files_;
};

struct Section {
  json result = json::object();
  std::string summary;
};

Axis make_axis(const RangeSpec& r, double darwin_width) {
  if (r.darwin > 0.0) return Axis::make(-r.darwin * darwin_width, r.darwin * darwin_width, r.n);
  return Axis::make(r.min, r.n == 1 ? r.min : r.max, r.n);
}

const char* beam_name(Beam b) { return to_string(b); }

struct Built {
  std::unique_ptr<ScanGeometry> geometry;
  WaveGrid grid;
};

Built build_grid(const CrystalModel& crystal, const SectionConfig& sec, const RunOptions& opt) {
  Built b;
  b.geometry = std::make_unique<ScanGeometry>(crystal, *sec.geometry);
  const double dw = sec.scan->theta.darwin > 0.0 ? b.geometry->darwin_width() : 0.0;
  const Axis theta = make_axis(sec.scan->theta, dw);
  const Axis rho = make_axis(sec.scan->rho, 0.0);
  ScanOptions so;
  so.threads = opt.threads;
  so.resolve_branches = sec.scan->incoherent_branches;
  b.grid = grid_scan(*b.geometry, polarized_spinor(sec.polarization), theta, rho, so);
  return b;
}

json geometry_json(const ScanGeometry& g, const WaveGrid& grid, const Emitter& e) {
  json j;
  j["kind"] = to_string(g.kind());
  j["wavelength_A"] = e.round(g.wavelength());
  j["bragg_angle_deg"] = e.round(g.bragg_angle() / kDeg);
  j["crystal_rotation_rad"] = e.round(g.crystal_rotation());
  j["backscattering"] = g.backscattering();
  j["darwin_width_arcsec"] = e.round(g.darwin_width() / kArcsec);
  j["grid"] = {grid.theta.n, grid.rho.n};
  j["max_residual"] = e.round(grid.max_residual);
  std::size_t failed = 0;
  for (auto f : grid.failed) failed += f;
  j["failed_points"] = failed;
  return j;
}

void dump_grid(const WaveGrid& grid, const std::string& name, Emitter& e, const RunConfig& cfg) {
  if (cfg.output.grid_format == "csv") {
    std::ostringstream os;
    os << e.header(name, "theta_rad=rad, rho_rad=rad, amplitudes dimensionless (spinor along z)");
    write_grid_csv(grid, os, cfg.output.precision);
    e.write(name + "-grid.csv", os.str());
  } else if (cfg.output.grid_format == "binary") {
    std::ostringstream os(std::ios::binary);
    write_grid_binary(grid, os);
    e.write(name + "-grid.bin", os.str());
    // The binary layout is fixed, so its provenance lives in a sidecar.
    json side;
    side["config_hash"] = cfg.hash;
    side["code_version"] = code_version();
    side["units"] = "theta, rho in rad; amplitudes dimensionless, spinor components along z";
    for (const auto& [k, v] : grid.metadata) side["metadata"][k] = v;
    e.write(name + "-grid.bin.json", side.dump(2) + "\n");
  }
}

// Largest |P_y(theta) + P_y(-theta)| over max |P_y|, for an axis symmetric about zero.
double antisymmetry(const PolarizationCurve& c) {
  const std::size_t n = c.abscissa.size();
  double peak = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!c.valid[i] || !c.valid[n - 1 - i]) continue;
    peak = std::max(peak, std::abs(c.Py[i]));
    worst = std::max(worst, std::abs(c.Py[i] + c.Py[n - 1 - i]));
  }
  return peak > 0.0 ? worst / peak : 0.0;
}

Section run_polarization(const SectionConfig& sec, const Built& b, Emitter& e) {
  Section s;
  const auto& a = sec.analysis;
  const auto& grid = b.grid;
  std::function<bool(std::size_t, std::size_t)> include;
  if (a.dynamical_region_only) {
    include = [&](std::size_t i, std::size_t j) { return std::abs(b.geometry->eta(grid.theta.at(i), grid.rho.at(j))) <= 1.0; };
  }
  std::string line;
  for (Beam beam : a.beams) {
    const auto flips = spin_flip_summary(grid, beam, include);
    json bj;
    bj["spin_flip_ratio"] = e.round(flips.ratio());
    bj["spin_flip_fraction"] = e.round(flips.fraction());
    std::ostringstream os;
    if (a.axis == "map") {
      const auto m = polarization_map(grid, beam);
      os << e.header(sec.name, "theta_arcsec=arcsec, rho_deg=deg, P dimensionless, intensity=flux");
      os << "theta_arcsec,rho_deg,Px,Py,Pz,intensity\n";
      for (std::size_t i = 0; i < m.theta.n; ++i) {
        for (std::size_t j = 0; j < m.rho.n; ++j) {
          const std::size_t k = i * m.rho.n + j;
          const double nan = std::nan("");
          os << e.num(m.theta.at(i) / kArcsec) << ',' << e.num(m.rho.at(j) / kDeg) << ','
             << e.num(m.valid[k] ? m.Px[k] : nan) << ',' << e.num(m.valid[k] ? m.Py[k] : nan) << ','
             << e.num(m.valid[k] ? m.Pz[k] : nan) << ',' << e.num(m.intensity[k]) << '\n';
        }
      }
      e.write(fmt::format("{}-polarization-map-{}.csv", sec.name, beam_name(beam)), os.str());
    } else {
      const bool theta = a.axis == "theta";
      const auto c = polarization_curve(grid, beam, theta ? ScanAxis::Theta : ScanAxis::Rho);
      const double unit = theta ? kArcsec : kDeg;
      const char* col = theta ? "theta_arcsec" : "rho_deg";
      os << e.header(sec.name, fmt::format("{}={}, P dimensionless, flux=summed flux", col, theta ? "arcsec" : "deg"));
      os << col << ",Px,Py,Pz,flux\n";
      for (std::size_t i = 0; i < c.abscissa.size(); ++i) {
        const double nan = std::nan("");
        os << e.num(c.abscissa[i] / unit) << ',' << e.num(c.valid[i] ? c.Px[i] : nan) << ','
           << e.num(c.valid[i] ? c.Py[i] : nan) << ',' << e.num(c.valid[i] ? c.Pz[i] : nan) << ','
           << e.num(c.weight[i]) << '\n';
      }
      e.write(fmt::format("{}-polarization-{}-{}.csv", sec.name, a.axis, beam_name(beam)), os.str());
      const Axis& ax = theta ? grid.theta : grid.rho;
      if (ax.n > 1 && std::abs(ax.start + ax.stop) <= 1e-12 * std::abs(ax.stop)) {
        bj["py_antisymmetry"] = e.round(antisymmetry(c));
      }
    }
    line += fmt::format(" {} flip/non-flip={}", beam_name(beam), e.num(flips.ratio()));
    s.result["beams"][beam_name(beam)] = bj;
  }
  s.summary = line;
  return s;
}

std::string distribution_csv(const OamDistribution& d, const std::string& section, const Emitter& e) {
  std::ostringstream os;
  os << e.header(section, "ell=hbar, p=probability normalized to total intensity");
  os << "ell,p\n";
  for (int l = -d.L; l <= d.L; ++l) os << l << ',' << e.num(d.at(l)) << '\n';
  return os.str();
}

json distribution_json(const OamDistribution& d, const Emitter& e) {
  json j;
  j["mean"] = e.round(d.mean);
  j["expectation"] = e.round(oam_expectation(d));
  j["rms"] = e.round(oam_rms(d));
  j["captured"] = e.round(d.sum());
  j["residual"] = e.round(d.residual);
  return j;
}

PolarSampling scaled_sampling(const AnalysisConfig& a, const WaveGrid& grid) {
  PolarSampling ps = a.sampling;
  ps.r_max = a.sampling.r_max * grid.wavenumber;  // configured as an angle
  return ps;
}

// Intensity-weighted oracle <L_z> over a set of incoherent fields.
LzEstimate combined_oracle(const std::vector<AzimuthalField>& fields) {
  LzEstimate out;
  double w = 0.0;
  for (const auto& f : fields) {
    const double I = f.intensity();
    if (!(I > 0.0)) continue;
    const auto o = oracle_Lz(f);
    out.value += I * o.value;
    out.refinement_delta = std::max(out.refinement_delta, o.refinement_delta);
    out.under_resolved = out.under_resolved || o.under_resolved;
    w += I;
  }
  if (w > 0.0) out.value /= w;
  return out;
}

Section run_oam(const SectionConfig& sec, const Built& b, Emitter& e) {
  Section s;
  const auto& a = sec.analysis;
  const auto& grid = b.grid;
  const PolarSampling ps = scaled_sampling(a, grid);
  for (Beam beam : a.beams) {
    std::map<SpinComponent, double> means;
    for (SpinComponent comp : a.components) {
      std::vector<AzimuthalField> fields;
      if (grid.has_branches()) {
        for (int br = 0; br < 2; ++br) fields.push_back(resample(component_image(grid, beam, comp, br, a.physical_only), ps));
      } else {
        fields.push_back(resample(component_image(grid, beam, comp, -1, a.physical_only), ps));
      }
      const auto d = oam_distribution(std::span<const AzimuthalField>(fields), a.L);
      const auto o = combined_oracle(fields);
      if (o.under_resolved) spdlog::warn("{}: {} {} oracle estimate is under-resolved", sec.name, beam_name(beam), to_string(comp));
      json j = distribution_json(d, e);
      j["oracle_Lz"] = e.round(o.value);
      j["oracle_refinement_delta"] = e.round(o.refinement_delta);
      j["intensity_ratio"] = e.round(fields.front().intensity_ratio());
      s.result["beams"][beam_name(beam)][to_string(comp)] = j;
      means[comp] = d.mean;
      e.write(fmt::format("{}-oam-{}-{}.csv", sec.name, beam_name(beam), to_string(comp)), distribution_csv(d, sec.name, e));
      s.summary += fmt::format(" {}/{} mean_l={}", beam_name(beam), to_string(comp), e.num(d.mean));
    }
    if (means.count(SpinComponent::Flipped) && means.count(SpinComponent::NonFlipped)) {
      s.result["beams"][beam_name(beam)]["mean_shift"] =
          e.round(means[SpinComponent::Flipped] - means[SpinComponent::NonFlipped]);
    }
  }
  return s;
}

Section run_interference(const SectionConfig& sec, const Built& b, Emitter& e) {
  Section s;
  const auto& a = sec.analysis;
  const PolarSampling ps = scaled_sampling(a, b.grid);
  for (Beam beam : a.beams) {
    const auto field = resample(interference_image(b.grid, beam, a.physical_only), ps);
    const auto d = oam_distribution(field, a.L);
    json j = distribution_json(d, e);
    j["intensity_ratio"] = e.round(field.intensity_ratio());
    s.result["beams"][beam_name(beam)] = j;
    e.write(fmt::format("{}-interference-{}.csv", sec.name, beam_name(beam)), distribution_csv(d, sec.name, e));
    s.summary += fmt::format(" {} mean_l={}", beam_name(beam), e.num(d.mean));
  }
  return s;
}

Section run_phase_map(const SectionConfig& sec, const Built& b, Emitter& e) {
  Section s;
  const auto& a = sec.analysis;
  const auto& grid = b.grid;
  // Nested loops inside the dynamical region around the grid centre.
  const double dw = b.geometry->darwin_width();
  const double half_cells = 0.5 * dw / std::max(grid.theta.step(), 1e-300);
  const std::size_t ci = grid.theta.n / 2;
  const std::size_t cj = grid.rho.n / 2;
  std::vector<std::size_t> sizes;
  for (double f : {0.2, 0.45, 0.7}) {
    const auto h = static_cast<std::size_t>(std::max(1.0, std::floor(f * half_cells)));
    if (h < ci && h < cj && h + ci < grid.theta.n && h + cj < grid.rho.n) sizes.push_back(h);
  }
  for (Beam beam : a.beams) {
    for (SpinComponent comp : a.components) {
      const auto pm = phase_map(grid, comp, beam);
      std::ostringstream os;
      os << e.header(sec.name, "theta_arcsec=arcsec, rho_deg=deg, phase_rad=rad wrapped to (-pi, pi]");
      os << "theta_arcsec,rho_deg,phase_rad\n";
      for (std::size_t i = 0; i < pm.theta.n; ++i) {
        for (std::size_t j = 0; j < pm.rho.n; ++j) {
          const std::size_t k = pm.index(i, j);
          os << e.num(pm.theta.at(i) / kArcsec) << ',' << e.num(pm.rho.at(j) / kDeg) << ','
             << e.num(pm.valid[k] ? pm.phase[k] : std::nan("")) << '\n';
        }
      }
      e.write(fmt::format("{}-phase-{}-{}.csv", sec.name, beam_name(beam), to_string(comp)), os.str());
      json windings = json::array();
      std::string w;
      for (auto h : sizes) {
        try {
          const int n = winding_number(pm, rectangular_loop(ci, cj, h, h, grid.propagation_sense(beam)));
          windings.push_back({{"half_width_cells", h}, {"winding", n}});
          w += (w.empty() ? "" : "/") + std::to_string(n);
        } catch (const PhysicsError& err) {
          windings.push_back({{"half_width_cells", h}, {"winding", nullptr}, {"error", err.what()}});
          w += (w.empty() ? "" : "/") + std::string("?");
        }
      }
      s.result["beams"][beam_name(beam)][to_string(comp)]["windings"] = windings;
      s.summary += fmt::format(" {}/{} winding={}", beam_name(beam), to_string(comp), w);
    }
  }
  return s;
}

MeasuredScan synthetic_scan(const std::vector<double>& x, const std::vector<double>& y, double noise,
                            std::mt19937_64& rng) {
  MeasuredScan scan;
  std::normal_distribution<double> gauss(0.0, noise);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(y[i])) continue;
    scan.x.push_back(x[i]);
    scan.value.push_back(y[i] + (noise > 0.0 ? gauss(rng) : 0.0));
    if (noise > 0.0) scan.sigma.push_back(noise);
  }
  return scan;
}

json fit_json(const FitResult& f, const Emitter& e) {
  json j;
  j["converged"] = f.converged;
  j["chi2"] = e.round(f.chi2);
  j["dof"] = f.dof;
  for (std::size_t i = 0; i < f.names.size(); ++i) {
    j["parameters"][f.names[i]] = {{"value", e.round(f.values[i])}, {"uncertainty", e.round(f.uncertainty(f.names[i]))}};
  }
  json cov = json::array();
  for (const auto& row : f.covariance) {
    json r = json::array();
    for (double v : row) r.push_back(e.round(v));
    cov.push_back(r);
  }
  j["covariance"] = cov;
  return j;
}

// Fits `repeats` noisy realizations and reports the mean and spread of each parameter.
json monte_carlo(const std::vector<double>& x, const std::vector<double>& y, const AnalysisConfig& a,
                 std::uint64_t seed, const std::function<FitResult(const MeasuredScan&)>& fit, const Emitter& e) {
  json j;
  const std::size_t repeats = std::max<std::size_t>(a.repeats, 1);
  std::vector<FitResult> fits;
  for (std::size_t r = 0; r < repeats; ++r) {
    std::mt19937_64 rng(seed + r);
    fits.push_back(fit(synthetic_scan(x, y, a.noise, rng)));
  }
  j["noise"] = e.round(a.noise);
  j["repeats"] = repeats;
  j["seed"] = seed;
  j["first"] = fit_json(fits.front(), e);
  for (std::size_t p = 0; p < fits.front().names.size(); ++p) {
    double m = 0.0;
    double v = 0.0;
    for (const auto& f : fits) m += f.values[p];
    m /= static_cast<double>(fits.size());
    for (const auto& f : fits) v += (f.values[p] - m) * (f.values[p] - m);
    const double sd = fits.size() > 1 ? std::sqrt(v / static_cast<double>(fits.size() - 1)) : 0.0;
    j["ensemble"][fits.front().names[p]] = {{"mean", e.round(m)}, {"std", e.round(sd)}};
  }
  return j;
}

Section run_convolution(const SectionConfig& sec, const Built& b, const RunOptions& opt, Emitter& e) {
  Section s;
  const auto& a = sec.analysis;
  const double dw = b.geometry->darwin_width();
  ResolutionKernel kernel;
  kernel.sigma = a.sigma_rad > 0.0 ? a.sigma_rad : a.sigma_darwin * dw;
  s.result["sigma_arcsec"] = e.round(kernel.sigma / kArcsec);
  for (Beam beam : a.beams) {
    const auto raw = polarization_curve(b.grid, beam, ScanAxis::Theta);
    const auto conv = convolve_resolution(raw, kernel);
    std::ostringstream os;
    os << e.header(sec.name, "theta_arcsec=arcsec, P dimensionless, flux=summed flux");
    os << "theta_arcsec,Py_raw,Pz_raw,Py_convolved,Pz_convolved,flux_raw,flux_convolved\n";
    for (std::size_t i = 0; i < raw.abscissa.size(); ++i) {
      os << e.num(raw.abscissa[i] / kArcsec) << ',' << e.num(raw.Py[i]) << ',' << e.num(raw.Pz[i]) << ','
         << e.num(conv.Py[i]) << ',' << e.num(conv.Pz[i]) << ',' << e.num(raw.weight[i]) << ','
         << e.num(conv.weight[i]) << '\n';
    }
    e.write(fmt::format("{}-convolution-{}.csv", sec.name, beam_name(beam)), os.str());
    double peak = 0.0;
    for (std::size_t i = 0; i < conv.Py.size(); ++i) {
      if (std::isfinite(conv.Py[i])) peak = std::max(peak, std::abs(conv.Py[i]));
    }
    json bj;
    bj["py_peak_convolved"] = e.round(peak);
    if (a.repeats > 0) {
      std::vector<double> x(conv.abscissa.size());
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = conv.abscissa[i];
      bj["fit"] = monte_carlo(x, conv.Py, a, opt.seed, fit_gaussian_derivative, e);
      s.summary += fmt::format(" {} fit_width_arcsec={}", beam_name(beam),
                               e.num(bj["fit"]["ensemble"]["width"]["mean"].get<double>() / kArcsec));
    }
    s.result["beams"][beam_name(beam)] = bj;
    s.summary += fmt::format(" {} peak|Py|={}", beam_name(beam), e.num(peak));
  }
  return s;
}

Section run_coil(const SectionConfig& sec, const RunOptions& opt, Emitter& e) {
  Section s;
  const auto& a = sec.analysis;
  CoilModel model = thermal_coil(a.coil_tilt, a.guide_field);
  model.speed = PhysicalConstants::speed(a.coil_wavelength);
  if (a.coil_path_length > 0.0) model.path_length = a.coil_path_length;
  const Axis alpha = make_axis(a.alpha, 0.0);
  std::vector<double> x;
  std::vector<double> phase;
  std::vector<double> pz;
  std::ostringstream os;
  os << e.header(sec.name, "alpha_deg=deg, dphi_rad=rad, Pz dimensionless");
  os << "alpha_deg,dphi_rad,Pz\n";
  for (double al : alpha.values()) {
    const double dp = coil_tilt_phase(model, al);
    x.push_back(al);
    phase.push_back(dp);
    pz.push_back(std::sin(dp));
    os << e.num(al / kDeg) << ',' << e.num(dp) << ',' << e.num(std::sin(dp)) << '\n';
  }
  e.write(sec.name + "-coil.csv", os.str());
  s.result["coil_field_T"] = e.round(model.coil_field());
  s.result["path_length_m"] = e.round(model.path_length);
  s.result["guide_amplification"] = e.round(model.guide_amplification());
  const double ref = coil_tilt_phase(model, kDeg);
  s.result["dphi_at_1deg_rad"] = e.round(ref);
  s.summary = fmt::format(" dphi(1deg)={} rad", e.num(ref));
  if (a.repeats > 0) {
    auto lin = [](const MeasuredScan& m) { return linear_fit(m); };
    s.result["pz_fit"] = monte_carlo(x, pz, a, opt.seed, lin, e);
    s.summary += fmt::format(" slope={} /rad", e.num(s.result["pz_fit"]["ensemble"]["slope"]["mean"].get<double>()));
  }
  return s;
}

Section run_fit(const SectionConfig& sec, Emitter& e) {
  Section s;
  const auto scan = ingest_scan(sec.analysis.scan_file);
  const auto f = sec.analysis.fit_model == "linear" ? linear_fit(scan) : fit_gaussian_derivative(scan);
  s.result["fit"] = fit_json(f, e);
  s.result["points"] = scan.x.size();
  json meta = json::object();
  for (const auto& [k, v] : scan.metadata) meta[k] = v;
  s.result["scan_metadata"] = meta;
  s.summary = fmt::format(" model={} chi2/dof={}", sec.analysis.fit_model,
                          e.num(f.dof > 0 ? f.chi2 / static_cast<double>(f.dof) : 0.0));
  return s;
}

}  // namespace

void run(const RunConfig& config, const RunOptions& options) {
  const fs::path dir = options.output_override.value_or(config.output.directory);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  Emitter emitter(config, dir);

  std::optional<CrystalModel> crystal;
  if (!config.material.empty()) crystal = load_material(config.material, load_form_factors(config.form_factors));

  json summary;
  summary["provenance"] = {{"config_hash", config.hash},
                           {"code_version", code_version()},
                           {"units", "angles as named in each key; lengths in angstrom unless suffixed"}};
  summary["config"] = config.source.filename().string();
  summary["seed"] = options.seed;
  summary["sections"] = json::array();

  for (const auto& sec : config.sections) {
    const auto start = std::chrono::steady_clock::now();
    Section s;
    std::string grid_desc = "-";
    const auto& a = sec.analysis;
    const bool standalone = a.mode == Mode::Instrument && a.task != "convolution";
    json geometry;
    if (!standalone) {
      const Built b = build_grid(*crystal, sec, options);
      grid_desc = fmt::format("{}x{}", b.grid.theta.n, b.grid.rho.n);
      geometry = geometry_json(*b.geometry, b.grid, emitter);
      dump_grid(b.grid, sec.name, emitter, config);
      switch (a.mode) {
        case Mode::Polarization: s = run_polarization(sec, b, emitter); break;
        case Mode::Oam: s = run_oam(sec, b, emitter); break;
        case Mode::Interference: s = run_interference(sec, b, emitter); break;
        case Mode::PhaseMap: s = run_phase_map(sec, b, emitter); break;
        case Mode::Instrument: s = run_convolution(sec, b, options, emitter); break;
      }
    } else if (a.task == "coil") {
      s = run_coil(sec, options, emitter);
    } else {
      s = run_fit(sec, emitter);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json entry;
    entry["name"] = sec.name;
    entry["mode"] = to_string(a.mode);
    if (!a.task.empty()) entry["task"] = a.task;
    if (!geometry.is_null()) entry["geometry"] = geometry;
    entry["results"] = s.result;
    summary["sections"].push_back(entry);
    fmt::print("[{}] {} grid={} time={:.2f}s{}\n", sec.name, to_string(a.mode), grid_desc, wall, s.summary);
  }
  json files = json::array();
  for (const auto& f : emitter.files()) files.push_back(f);
  summary["files"] = files;
  emitter.write("summary.json", summary.dump(2) + "\n");
}

}  // namespace sodiff::cli
