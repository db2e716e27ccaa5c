#pragma once

namespace crtmle {

// Bounds applied to every nuisance quantity that the clever covariate
// divides by.
struct Truncation {
  double propensity_lo = 0.01;
  double propensity_hi = 0.99;
  double censoring_floor = 0.05;
  double cif_cap = 1.0 - 1e-8;
};

}  // namespace crtmle
