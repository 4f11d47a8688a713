// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "sodiff/cli.hpp"
#include "sodiff/constants.hpp"

#ifndef SODIFF_DATA_DIR
#define SODIFF_DATA_DIR "."
#endif
#ifndef SODIFF_VERSION
#define SODIFF_VERSION "0.0.0"
#endif

namespace sodiff::cli {

namespace {

constexpr double kDeg = PhysicalConstants::pi / 180.0;
constexpr double kArcsec = kDeg / 3600.0;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void require_map(const YAML::Node& n, const std::string& path) {
  if (!n.IsMap()) bad(path, "expected a mapping");
}

void check_keys(const YAML::Node& n, const std::string& path, const std::set<std::string>& allowed) {
  require_map(n, path);
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      bad(join(path, key), "unknown key (allowed: " + list + ")");
    }
  }
}

template <typename T>
T as(const YAML::Node& n, const std::string& path) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    bad(path, "value has the wrong type");
  }
}

template <typename T>
T get_or(const YAML::Node& parent, const std::string& key, const std::string& path, T fallback) {
  const YAML::Node n = parent[key];
  if (!n) return fallback;
  return as<T>(n, join(path, key));
}

template <typename T>
T get_required(const YAML::Node& parent, const std::string& key, const std::string& path) {
  const YAML::Node n = parent[key];
  if (!n) bad(join(path, key), "required key missing");
  return as<T>(n, join(path, key));
}

double positive(double v, const std::string& path) {
  if (!(v > 0.0) || !std::isfinite(v)) bad(path, "must be a positive number");
  return v;
}

std::size_t grid_count(const YAML::Node& parent, const std::string& key, const std::string& path,
                       std::size_t fallback, std::size_t minimum) {
  const auto v = get_or<long long>(parent, key, path, static_cast<long long>(fallback));
  if (v < static_cast<long long>(minimum)) bad(join(path, key), "must be at least " + std::to_string(minimum));
  return static_cast<std::size_t>(v);
}

// {darwin: k} (theta only), {min_deg, max_deg}, {min_arcsec, max_arcsec} or {min_rad, max_rad}; plus n.
RangeSpec parse_range(const YAML::Node& n, const std::string& path, bool allow_darwin, std::size_t default_n) {
  std::set<std::string> keys{"min_deg", "max_deg", "min_arcsec", "max_arcsec", "min_rad", "max_rad", "n"};
  if (allow_darwin) keys.insert("darwin");
  check_keys(n, path, keys);
  RangeSpec r;
  r.n = grid_count(n, "n", path, default_n, 1);
  int forms = 0;
  if (n["darwin"]) {
    r.darwin = positive(as<double>(n["darwin"], join(path, "darwin")), join(path, "darwin"));
    ++forms;
  }
  for (const auto& [suffix, unit] : {std::pair<std::string, double>{"deg", kDeg}, {"arcsec", kArcsec}, {"rad", 1.0}}) {
    const bool has_min = static_cast<bool>(n["min_" + suffix]);
    const bool has_max = static_cast<bool>(n["max_" + suffix]);
    if (has_min != has_max) bad(path, "min_" + suffix + " and max_" + suffix + " must be given together");
    if (has_min) {
      r.min = as<double>(n["min_" + suffix], join(path, "min_" + suffix)) * unit;
      r.max = as<double>(n["max_" + suffix], join(path, "max_" + suffix)) * unit;
      ++forms;
    }
  }
  if (forms == 0) bad(path, "range needs bounds");
  if (forms > 1) bad(path, "range bounds given more than once");
  if (r.darwin == 0.0) {
    if (!std::isfinite(r.min) || !std::isfinite(r.max)) bad(path, "bounds must be finite");
    if (r.n == 1 ? r.max != r.min : !(r.max > r.min)) bad(path, "empty range: max must exceed min");
  }
  return r;
}

Beam parse_beam(const YAML::Node& n, const std::string& path) {
  const auto s = as<std::string>(n, path);
  if (s == "reflected") return Beam::Reflected;
  if (s == "transmitted") return Beam::Transmitted;
  bad(path, "unknown beam '" + s + "' (reflected, transmitted)");
}

SpinComponent parse_component(const YAML::Node& n, const std::string& path) {
  const auto s = as<std::string>(n, path);
  if (s == "flipped") return SpinComponent::Flipped;
  if (s == "non-flipped") return SpinComponent::NonFlipped;
  bad(path, "unknown spin component '" + s + "' (flipped, non-flipped)");
}

template <typename T, typename F>
std::vector<T> parse_list(const YAML::Node& parent, const std::string& key, const std::string& path,
                          std::vector<T> fallback, F parse) {
  const YAML::Node n = parent[key];
  if (!n) return fallback;
  const auto p = join(path, key);
  if (!n.IsSequence() || n.size() == 0) bad(p, "expected a non-empty list");
  std::vector<T> out;
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(parse(n[i], p + "[" + std::to_string(i) + "]"));
  return out;
}

GeometrySpec parse_geometry(const YAML::Node& n, const std::string& path, Vec3& polarization) {
  check_keys(n, path,
             {"kind", "hkl", "wavelength_A", "bragg_angle_deg", "thickness_um", "thickness_mm", "asymmetry_deg",
              "alignment", "schwinger", "polarization"});
  GeometrySpec g;
  const auto kind = get_required<std::string>(n, "kind", path);
  if (kind == "bragg") g.kind = GeometryKind::BraggReflection;
  else if (kind == "laue") g.kind = GeometryKind::LaueTransmission;
  else bad(join(path, "kind"), "expected 'bragg' or 'laue'");

  if (n["hkl"]) {
    const auto hkl = as<std::vector<int>>(n["hkl"], join(path, "hkl"));
    if (hkl.size() != 3) bad(join(path, "hkl"), "expected three integers");
    g.hkl = Miller{hkl[0], hkl[1], hkl[2]};
    if (g.hkl.is_zero()) bad(join(path, "hkl"), "hkl must not be (0,0,0)");
  }
  const bool has_lambda = static_cast<bool>(n["wavelength_A"]);
  const bool has_angle = static_cast<bool>(n["bragg_angle_deg"]);
  if (has_lambda == has_angle) bad(path, "give exactly one of wavelength_A and bragg_angle_deg");
  if (has_lambda) g.wavelength = positive(as<double>(n["wavelength_A"], join(path, "wavelength_A")), join(path, "wavelength_A"));
  if (has_angle) {
    const double a = as<double>(n["bragg_angle_deg"], join(path, "bragg_angle_deg"));
    if (!(a > 0.0 && a <= 90.0)) bad(join(path, "bragg_angle_deg"), "must lie in (0, 90]");
    g.bragg_angle = a * kDeg;
  }
  const bool has_um = static_cast<bool>(n["thickness_um"]);
  const bool has_mm = static_cast<bool>(n["thickness_mm"]);
  if (has_um == has_mm) bad(path, "give exactly one of thickness_um and thickness_mm");
  if (has_um) g.thickness = positive(as<double>(n["thickness_um"], join(path, "thickness_um")), join(path, "thickness_um")) * 1e4;
  if (has_mm) g.thickness = positive(as<double>(n["thickness_mm"], join(path, "thickness_mm")), join(path, "thickness_mm")) * 1e7;
  g.asymmetry_angle = get_or<double>(n, "asymmetry_deg", path, 0.0) * kDeg;
  const auto align = get_or<std::string>(n, "alignment", path, "dynamical");
  if (align == "dynamical") g.alignment = Alignment::Dynamical;
  else if (align == "geometric") g.alignment = Alignment::Geometric;
  else bad(join(path, "alignment"), "expected 'dynamical' or 'geometric'");
  g.schwinger_scale = get_or<bool>(n, "schwinger", path, true) ? 1.0 : 0.0;
  if (n["polarization"]) {
    const auto p = as<std::vector<double>>(n["polarization"], join(path, "polarization"));
    if (p.size() != 3) bad(join(path, "polarization"), "expected three components");
    polarization = Vec3(p[0], p[1], p[2]);
    if (!(polarization.norm() > 0.0)) bad(join(path, "polarization"), "must be a non-zero vector");
    polarization.normalize();
  }
  return g;
}

ScanConfig parse_scan(const YAML::Node& n, const std::string& path) {
  check_keys(n, path, {"theta", "rho", "branches"});
  ScanConfig s;
  if (!n["theta"]) bad(join(path, "theta"), "required key missing");
  if (!n["rho"]) bad(join(path, "rho"), "required key missing");
  s.theta = parse_range(n["theta"], join(path, "theta"), true, 256);
  s.rho = parse_range(n["rho"], join(path, "rho"), false, 256);
  const auto br = get_or<std::string>(n, "branches", path, "coherent");
  if (br == "incoherent") s.incoherent_branches = true;
  else if (br != "coherent") bad(join(path, "branches"), "expected 'coherent' or 'incoherent'");
  return s;
}

void parse_sampling(const YAML::Node& n, const std::string& path, AnalysisConfig& a) {
  a.L = static_cast<int>(grid_count(n, "L", path, 32, 0));
  a.sampling.n_r = grid_count(n, "n_r", path, 128, 2);
  a.sampling.n_phi = grid_count(n, "n_phi", path, 256, 8);
  if (a.L > static_cast<int>(a.sampling.n_phi / 2) - 1) bad(join(path, "L"), "exceeds the azimuthal Nyquist limit");
  if (n["r_max_deg"]) a.sampling.r_max = positive(as<double>(n["r_max_deg"], join(path, "r_max_deg")), join(path, "r_max_deg")) * kDeg;
  const auto axis = get_or<std::string>(n, "azimuth_axis", path, "minus-x");
  if (axis == "minus-x") a.sampling.sense = AzimuthSense::AboutMinusX;
  else if (axis == "plus-x") a.sampling.sense = AzimuthSense::AboutPlusX;
  else bad(join(path, "azimuth_axis"), "expected 'minus-x' or 'plus-x'");
  a.physical_only = get_or<bool>(n, "physical_only", path, true);
}

AnalysisConfig parse_analysis(const YAML::Node& n, const std::string& path) {
  require_map(n, path);
  AnalysisConfig a;
  const auto mode = get_required<std::string>(n, "mode", path);
  auto beams = [&] { a.beams = parse_list<Beam>(n, "beams", path, a.beams, parse_beam); };
  auto comps = [&] { a.components = parse_list<SpinComponent>(n, "components", path, a.components, parse_component); };
  const std::set<std::string> sampling_keys{"L", "n_r", "n_phi", "r_max_deg", "azimuth_axis", "physical_only"};
  auto with = [](std::set<std::string> base, std::initializer_list<std::string> more) {
    base.insert(more.begin(), more.end());
    return base;
  };
  if (mode == "polarization") {
    a.mode = Mode::Polarization;
    check_keys(n, path, {"mode", "beams", "axis", "dynamical_region_only"});
    beams();
    a.axis = get_or<std::string>(n, "axis", path, "theta");
    if (a.axis != "theta" && a.axis != "rho" && a.axis != "map") bad(join(path, "axis"), "expected theta, rho or map");
    a.dynamical_region_only = get_or<bool>(n, "dynamical_region_only", path, false);
  } else if (mode == "oam") {
    a.mode = Mode::Oam;
    check_keys(n, path, with(sampling_keys, {"mode", "beams", "components"}));
    beams();
    comps();
    parse_sampling(n, path, a);
  } else if (mode == "interference") {
    a.mode = Mode::Interference;
    check_keys(n, path, with(sampling_keys, {"mode", "beams"}));
    beams();
    parse_sampling(n, path, a);
  } else if (mode == "phase-map") {
    a.mode = Mode::PhaseMap;
    check_keys(n, path, {"mode", "beams", "components"});
    beams();
    comps();
  } else if (mode == "instrument") {
    a.mode = Mode::Instrument;
    a.task = get_required<std::string>(n, "task", path);
    if (a.task == "convolution") {
      check_keys(n, path, {"mode", "task", "beams", "sigma_darwin", "sigma_arcsec", "noise", "repeats"});
      beams();
      if (n["sigma_darwin"] && n["sigma_arcsec"]) bad(path, "give at most one of sigma_darwin and sigma_arcsec");
      a.sigma_darwin = positive(get_or<double>(n, "sigma_darwin", path, 5.0), join(path, "sigma_darwin"));
      if (n["sigma_arcsec"]) a.sigma_rad = positive(as<double>(n["sigma_arcsec"], join(path, "sigma_arcsec")), join(path, "sigma_arcsec")) * kArcsec;
    } else if (a.task == "coil") {
      check_keys(n, path, {"mode", "task", "tilt_deg", "guide_field_mT", "path_length_m", "wavelength_A", "alpha", "noise", "repeats"});
      a.coil_tilt = get_required<double>(n, "tilt_deg", path) * kDeg;
      a.guide_field = get_or<double>(n, "guide_field_mT", path, 0.0) * 1e-3;
      if (a.guide_field < 0.0) bad(join(path, "guide_field_mT"), "must not be negative");
      a.coil_path_length = get_or<double>(n, "path_length_m", path, 0.0);
      if (a.coil_path_length < 0.0) bad(join(path, "path_length_m"), "must not be negative");
      a.coil_wavelength = positive(get_or<double>(n, "wavelength_A", path, 1.8), join(path, "wavelength_A"));
      if (!n["alpha"]) bad(join(path, "alpha"), "required key missing");
      a.alpha = parse_range(n["alpha"], join(path, "alpha"), false, 41);
    } else if (a.task == "fit") {
      check_keys(n, path, {"mode", "task", "scan_file", "model"});
      a.scan_file = get_required<std::string>(n, "scan_file", path);
      a.fit_model = get_or<std::string>(n, "model", path, "gaussian-derivative");
      if (a.fit_model != "gaussian-derivative" && a.fit_model != "linear") {
        bad(join(path, "model"), "expected 'gaussian-derivative' or 'linear'");
      }
    } else {
      bad(join(path, "task"), "expected convolution, coil or fit");
    }
    if (n["noise"]) {
      a.noise = as<double>(n["noise"], join(path, "noise"));
      if (!(a.noise >= 0.0)) bad(join(path, "noise"), "must not be negative");
    }
    a.repeats = grid_count(n, "repeats", path, a.noise > 0.0 ? 1 : 0, 0);
  } else {
    bad(join(path, "mode"), "expected polarization, oam, phase-map, interference or instrument");
  }
  return a;
}

}  // namespace

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Polarization: return "polarization";
    case Mode::Oam: return "oam";
    case Mode::PhaseMap: return "phase-map";
    case Mode::Interference: return "interference";
    case Mode::Instrument: return "instrument";
  }
  return "?";
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string code_version() { return SODIFF_VERSION; }

std::vector<std::filesystem::path> data_search_path() {
  std::vector<std::filesystem::path> dirs;
  if (const char* env = std::getenv("SODIFF_DATA_PATH")) {
    std::stringstream ss(env);
    std::string item;
    while (std::getline(ss, item, ':')) {
      if (!item.empty()) dirs.emplace_back(item);
    }
  }
  dirs.emplace_back(SODIFF_DATA_DIR);
  return dirs;
}

std::filesystem::path resolve_data_file(const std::filesystem::path& name, const std::filesystem::path& relative_to) {
  namespace fs = std::filesystem;
  if (name.is_absolute()) {
    if (fs::exists(name)) return name;
    throw IoError("data file not found: " + name.string());
  }
  std::vector<fs::path> candidates;
  if (!relative_to.empty()) candidates.push_back(relative_to / name);
  for (const auto& d : data_search_path()) {
    candidates.push_back(d / name);
    candidates.push_back(d / "data" / name);
  }
  for (const auto& c : candidates) {
    if (fs::exists(c)) return c;
  }
  throw IoError("data file not found: " + name.string());
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(path.string() + ": YAML syntax error: " + e.what());
  }
  RunConfig cfg;
  cfg.source = path;
  cfg.hash = fnv1a_hex(text);
  check_keys(root, "", {"crystal", "output", "sections"});
  const auto base = path.parent_path();

  const YAML::Node crystal = root["crystal"];
  bool needs_crystal = false;
  if (crystal) {
    check_keys(crystal, "crystal", {"material", "form_factors"});
  }

  if (const YAML::Node out = root["output"]) {
    check_keys(out, "output", {"directory", "grid", "precision"});
    cfg.output.directory = get_or<std::string>(out, "directory", "output", "out");
    cfg.output.grid_format = get_or<std::string>(out, "grid", "output", "none");
    if (cfg.output.grid_format != "none" && cfg.output.grid_format != "csv" && cfg.output.grid_format != "binary") {
      bad("output.grid", "expected none, csv or binary");
    }
    cfg.output.precision = static_cast<int>(get_or<long long>(out, "precision", "output", 9));
    if (cfg.output.precision < 3 || cfg.output.precision > 17) bad("output.precision", "must lie in [3, 17]");
  }
  if (cfg.output.directory.is_relative()) cfg.output.directory = base / cfg.output.directory;

  const YAML::Node sections = root["sections"];
  if (!sections || !sections.IsSequence() || sections.size() == 0) bad("sections", "expected a non-empty list");
  std::set<std::string> names;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const std::string p = "sections[" + std::to_string(i) + "]";
    const YAML::Node s = sections[i];
    check_keys(s, p, {"name", "geometry", "scan", "analysis"});
    SectionConfig sc;
    sc.name = get_required<std::string>(s, "name", p);
    if (sc.name.empty() || sc.name.find_first_of("/\\ ") != std::string::npos) {
      bad(join(p, "name"), "must be a non-empty token without spaces or slashes");
    }
    if (!names.insert(sc.name).second) bad(join(p, "name"), "duplicate section name '" + sc.name + "'");
    if (!s["analysis"]) bad(join(p, "analysis"), "required key missing");
    sc.analysis = parse_analysis(s["analysis"], join(p, "analysis"));
    const bool standalone = sc.analysis.mode == Mode::Instrument && sc.analysis.task != "convolution";
    if (s["geometry"]) sc.geometry = parse_geometry(s["geometry"], join(p, "geometry"), sc.polarization);
    if (s["scan"]) sc.scan = parse_scan(s["scan"], join(p, "scan"));
    if (!standalone) {
      if (!sc.geometry) bad(join(p, "geometry"), "required key missing");
      if (!sc.scan) bad(join(p, "scan"), "required key missing");
      needs_crystal = true;
      if (sc.scan->incoherent_branches && sc.geometry->kind != GeometryKind::LaueTransmission) {
        bad(join(p, "scan.branches"), "incoherent branch averaging applies to Laue geometry only");
      }
      if (sc.scan->theta.n < 2 && sc.analysis.mode != Mode::Polarization) {
        bad(join(p, "scan.theta.n"), "this analysis needs a two-dimensional grid");
      }
      if ((sc.analysis.mode == Mode::Oam || sc.analysis.mode == Mode::Interference ||
           sc.analysis.mode == Mode::PhaseMap) && sc.scan->rho.n < 2) {
        bad(join(p, "scan.rho.n"), "this analysis needs a two-dimensional grid");
      }
    } else if (sc.analysis.task == "fit") {
      sc.analysis.scan_file = resolve_data_file(sc.analysis.scan_file, base);
    }
    cfg.sections.push_back(std::move(sc));
  }

  if (needs_crystal) {
    if (!crystal) bad("crystal", "required key missing");
    cfg.material = resolve_data_file(get_required<std::string>(crystal, "material", "crystal"), base);
    cfg.form_factors = resolve_data_file(get_or<std::string>(crystal, "form_factors", "crystal", "formfactors.dat"), base);
  }
  return cfg;
}

std::vector<std::string> list_presets() {
  namespace fs = std::filesystem;
  std::set<std::string> names;
  for (const auto& dir : data_search_path()) {
    const fs::path p = dir / "presets";
    if (!fs::is_directory(p)) continue;
    for (const auto& entry : fs::directory_iterator(p)) {
      if (entry.is_regular_file() && entry.path().extension() == ".yaml") names.insert(entry.path().stem().string());
    }
  }
  return {names.begin(), names.end()};
}

std::filesystem::path preset_path(const std::string& name) {
  for (const auto& dir : data_search_path()) {
    const auto p = dir / "presets" / (name + ".yaml");
    if (std::filesystem::exists(p)) return p;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

Spinor polarized_spinor(const Vec3& direction) {
  const Vec3 d = direction.normalized();
  const double polar = std::acos(std::clamp(d.z(), -1.0, 1.0));
  const double azim = std::atan2(d.y(), d.x());
  return Spinor(std::cos(polar / 2), std::polar(std::sin(polar / 2), azim));
}

}  // namespace sodiff::cli
