#pragma once

#include <string>

#include "retrig/models.hpp"
#include "retrig/observability.hpp"

namespace retrig {

/// One built-in model rendered twice: numeric callables for the integrator
/// and polynomials for the observability checker. Construction cross-checks
/// the two renderings of F_z at random points and fails fast on drift.
struct DualModel {
    BuiltinModel numeric;
    PolyPlant poly;
    Eigen::VectorXd theta;
    Eigen::VectorXd z;

    Eigen::VectorXd eval_numeric(const Eigen::VectorXd& x) const;
    PolyVectorField field_poly() const { return poly.closed_loop(z, theta); }
};

/// model_id is "example_4_2" (params c, k1, k2) or "example_4_3"
/// (params k1, k2, k3). Throws std::invalid_argument naming the worst point
/// when the two renderings disagree beyond 1e-10 relative.
DualModel build_dual(const std::string& model_id, const std::vector<double>& gains,
                     const Eigen::VectorXd& theta, const Eigen::VectorXd& z);

}  // namespace retrig
