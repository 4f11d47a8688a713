// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sodiff/wavefield.hpp"

namespace sodiff {

struct ResolutionKernel {
  double sigma = 0.0;       // rad
  double truncation = 5.0;  // support is +-truncation*sigma

  // Discrete weights on a grid of spacing h, normalized to unit sum.
  std::vector<double> weights(double h) const;
};

// Smears P*I and I separately with reflective (edge-repeating) padding and
// divides. Requires a uniform abscissa and sigma >= grid step.
PolarizationCurve convolve_resolution(const PolarizationCurve& curve, const ResolutionKernel& kernel);

// Convolves a plain series with the same edge handling.
std::vector<double> smear(const std::vector<double>& values, const ResolutionKernel& kernel, double h);

struct MeasuredScan {
  std::string unit = "rad";        // unit of the source file
  std::vector<double> x;           // converted to rad
  std::vector<double> value;
  std::vector<double> sigma;       // empty when not provided
  std::map<std::string, std::string> metadata;
};

// CSV with a first line "abscissa_unit,<rad|deg|arcsec>", then a header naming
// x,value[,sigma]; lines starting with '#' are comments ("# key=value" becomes metadata).
MeasuredScan ingest_scan(const std::filesystem::path& path);
double angle_unit_factor(const std::string& unit);

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<std::vector<double>> covariance;
  bool converged = false;
  double chi2 = 0.0;
  std::size_t dof = 0;
  std::size_t iterations = 0;

  double value(const std::string& name) const;
  double uncertainty(const std::string& name) const;
};

// A (x - x0) exp(-(x - x0)^2 / 2 w^2) + c by trust-region least squares.
FitResult fit_gaussian_derivative(const MeasuredScan& scan);
double gaussian_derivative(double x, double A, double x0, double w, double c);

// Weighted straight line value = slope * x + intercept.
FitResult linear_fit(const MeasuredScan& scan);

struct CoilModel {
  double tilt = 0.0;              // theta_c, rad
  double flip_angle = 1.5707963267948966;
  double guide_field = 0.0;       // T
  double speed = 0.0;             // m/s
  double path_length = 0.0;       // m, coil thickness along the beam at alpha = 0
  double gyromagnetic_ratio = 0.0;  // rad/(s T)

  // Coil field that makes the (coil + guide) precession exceed the guide-only
  // precession by flip_angle over path_length.
  double coil_field() const;
  // Factor by which the guide field enlarges the divergence-dependent phase.
  double guide_amplification() const;
};

CoilModel thermal_coil(double tilt, double guide_field);

double coil_tilt_phase(const CoilModel& model, double alpha);

}  // namespace sodiff
