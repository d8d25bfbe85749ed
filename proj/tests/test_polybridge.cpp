#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "retrig/polybridge.hpp"

using namespace retrig;

TEST_CASE("planar dual model: renderings agree at fresh points") {
    Eigen::VectorXd theta(1), z(1);
    theta << 2.0;
    z << 0.3;
    DualModel dm = build_dual("example_4_2", {1.0, 1.0, 3.0}, theta, z);

    PolyVectorField F = dm.field_poly();
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> pt(-3.0, 3.0);
    for (int rep = 0; rep < 25; ++rep) {
        Eigen::VectorXd x(2);
        x << pt(rng), pt(rng);
        Eigen::VectorXd a = dm.eval_numeric(x);
        Eigen::VectorXd b = F.eval(x);
        CHECK((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
    }
}

TEST_CASE("third-order dual model: renderings agree at fresh points") {
    Eigen::VectorXd theta(2), z(2);
    theta << 0.8, -0.6;
    z << -0.2, 1.4;
    DualModel dm = build_dual("example_4_3", {1.0, 2.0, 3.0}, theta, z);

    PolyVectorField F = dm.field_poly();
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> pt(-2.0, 2.0);
    for (int rep = 0; rep < 25; ++rep) {
        Eigen::VectorXd x(3);
        x << pt(rng), pt(rng), pt(rng);
        Eigen::VectorXd a = dm.eval_numeric(x);
        Eigen::VectorXd b = F.eval(x);
        CHECK((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
    }
}

TEST_CASE("build_dual rejects unknown models and bad shapes") {
    Eigen::VectorXd theta(1), z(1);
    theta << 2.0;
    z << 0.0;
    CHECK_THROWS_AS(build_dual("example_9_9", {1.0, 1.0, 3.0}, theta, z), std::invalid_argument);
    CHECK_THROWS(build_dual("example_4_2", {1.0, 1.0}, theta, z));  // missing gain
    Eigen::VectorXd wrong(2);
    wrong << 1.0, 2.0;
    CHECK_THROWS(build_dual("example_4_2", {1.0, 1.0, 3.0}, wrong, z));
}
