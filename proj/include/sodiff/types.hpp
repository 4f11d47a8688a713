// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace sodiff {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Spinor = Eigen::Vector2cd;
using SpinorMatrix = Eigen::Matrix2cd;

// Error categories map onto the command-line exit codes (2, 3, 4).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PhysicsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Miller {
  int h = 0;
  int k = 0;
  int l = 0;
  bool is_zero() const { return h == 0 && k == 0 && l == 0; }
  Vec3 as_vector() const { return Vec3(h, k, l); }
};

enum class Beam { Transmitted, Reflected };

inline const char* to_string(Beam b) {
  return b == Beam::Transmitted ? "transmitted" : "reflected";
}

}  // namespace sodiff
