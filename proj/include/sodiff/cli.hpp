// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sodiff/dispersion.hpp"
#include "sodiff/instrument.hpp"
#include "sodiff/oam.hpp"
#include "sodiff/wavefield.hpp"

namespace sodiff::cli {

// Angular range. `darwin` > 0 means +-darwin times the Darwin width (theta only).
struct RangeSpec {
  double min = 0.0;  // rad
  double max = 0.0;  // rad
  double darwin = 0.0;
  std::size_t n = 256;
};

struct ScanConfig {
  RangeSpec theta;
  RangeSpec rho;
  bool incoherent_branches = false;
};

enum class Mode { Polarization, Oam, PhaseMap, Interference, Instrument };

const char* to_string(Mode m);

struct AnalysisConfig {
  Mode mode = Mode::Polarization;
  std::vector<Beam> beams{Beam::Reflected, Beam::Transmitted};
  std::vector<SpinComponent> components{SpinComponent::Flipped, SpinComponent::NonFlipped};
  std::string axis = "theta";  // polarization: theta, rho or map
  int L = 32;
  PolarSampling sampling;
  bool physical_only = true;
  bool dynamical_region_only = false;  // restrict integrated spin-flip numbers to |eta| <= 1
  // instrument
  std::string task;  // convolution, coil, fit
  double sigma_darwin = 5.0;
  double sigma_rad = 0.0;
  std::string fit_model = "gaussian-derivative";
  std::filesystem::path scan_file;
  double noise = 0.0;
  std::size_t repeats = 0;
  double coil_tilt = 0.0;
  double guide_field = 0.0;
  double coil_path_length = 0.0;  // m; 0 selects the thermal-beam default
  double coil_wavelength = 1.8;
  RangeSpec alpha;
};

struct SectionConfig {
  std::string name;
  std::optional<GeometrySpec> geometry;
  Vec3 polarization = Vec3::UnitX();
  std::optional<ScanConfig> scan;
  AnalysisConfig analysis;
};

struct OutputConfig {
  std::filesystem::path directory = "out";
  std::string grid_format = "none";  // none, csv, binary
  int precision = 9;
};

struct RunConfig {
  std::filesystem::path source;
  std::string hash;  // FNV-1a of the config bytes, hex
  std::filesystem::path material;
  std::filesystem::path form_factors;
  std::vector<SectionConfig> sections;
  OutputConfig output;
};

struct RunOptions {
  unsigned threads = 1;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> output_override;
};

// Directories searched for data files and presets: SODIFF_DATA_PATH entries
// (colon separated), then the compiled-in source tree.
std::vector<std::filesystem::path> data_search_path();
std::filesystem::path resolve_data_file(const std::filesystem::path& name,
                                        const std::filesystem::path& relative_to);

RunConfig load_config(const std::filesystem::path& path);

std::vector<std::string> list_presets();
std::filesystem::path preset_path(const std::string& name);

std::string fnv1a_hex(const std::string& bytes);
std::string code_version();

// Spinor fully polarized along `direction`.
Spinor polarized_spinor(const Vec3& direction);

// Runs every section; throws ConfigError / PhysicsError / IoError.
void run(const RunConfig& config, const RunOptions& options);

// Full command-line entry point; returns the process exit code.
int main_entry(int argc, char** argv);

}  // namespace sodiff::cli
