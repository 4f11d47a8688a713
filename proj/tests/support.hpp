// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "sodiff/crystal.hpp"

namespace sodiff::test {

inline std::filesystem::path data_dir() { return std::filesystem::path(SODIFF_TEST_SOURCE_DIR) / "data"; }

inline const CrystalModel& quartz() {
  static const CrystalModel model =
      load_material(data_dir() / "alpha-quartz.mat", load_form_factors(data_dir() / "formfactors.dat"));
  return model;
}

// Spin along +x, the incident momentum direction.
inline Spinor spin_x() { return Spinor(1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)); }

constexpr double kDeg = 3.14159265358979323846 / 180.0;
constexpr double kArcsec = kDeg / 3600.0;

}  // namespace sodiff::test
