// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "sodiff/dispersion.hpp"

namespace sodiff::oracle {

struct Field {
  Spinor transmitted;
  Spinor reflected;  // flux-normalized
};

// Full spinor two-beam problem as a 4x4 eigenproblem with the boundary
// conditions solved by a dense linear system. No channel decoupling.
Field exit_field(const DiffractionGeometry& g, const StructureSums& sums, const Spinor& u0,
                 double schwinger_scale = 1.0);

// Non-absorbing finite-thickness reflectivity in reduced deviation y and
// thickness parameter A (Bragg case).
double bragg_reflectivity(double y, double A);

// Scalar (nuclear only) reduced deviation and thickness parameter of a geometry.
struct Reduced {
  double y = 0.0;
  double A = 0.0;
};
Reduced reduced(const DiffractionGeometry& g, const StructureSums& sums);

}  // namespace sodiff::oracle
