#include "retrig/polybridge.hpp"

#include <random>
#include <sstream>
#include <stdexcept>

namespace retrig {

Eigen::VectorXd DualModel::eval_numeric(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd u = numeric.ctrl.k(z, x);
    return numeric.plant.f(x, u) + numeric.plant.g(x, u) * theta;
}

DualModel build_dual(const std::string& model_id, const std::vector<double>& gains,
                     const Eigen::VectorXd& theta, const Eigen::VectorXd& z) {
    DualModel dm;
    if (model_id == "example_4_2") {
        if (gains.size() != 3) throw std::invalid_argument("build_dual: example_4_2 needs c,k1,k2");
        dm.numeric = example_4_2(gains[0], gains[1], gains[2]);
        dm.poly = poly_example_4_2(gains[0], gains[1], gains[2]);
    } else if (model_id == "example_4_3") {
        if (gains.size() != 3)
            throw std::invalid_argument("build_dual: example_4_3 needs k1,k2,k3");
        dm.numeric = example_4_3(gains[0], gains[1], gains[2]);
        dm.poly = poly_example_4_3(gains[0], gains[1], gains[2]);
    } else {
        throw std::invalid_argument("build_dual: unknown model '" + model_id + "'");
    }
    if (theta.size() != dm.numeric.plant.l || z.size() != dm.numeric.plant.l)
        throw std::invalid_argument("build_dual: parameter dimension mismatch");
    dm.theta = theta;
    dm.z = z;

    const PolyVectorField Fz = dm.field_poly();
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double worst = 0.0;
    Eigen::VectorXd worst_x;
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd x(dm.numeric.plant.n);
        for (int i = 0; i < x.size(); ++i) x(i) = gauss(rng);
        x *= std::pow(unif(rng), 1.0 / x.size()) / std::max(x.norm(), 1e-300);  // unit ball
        const Eigen::VectorXd a = dm.eval_numeric(x);
        const Eigen::VectorXd b = Fz.eval(x);
        const double rel = (a - b).norm() / (1.0 + a.norm());
        if (rel > worst) {
            worst = rel;
            worst_x = x;
        }
    }
    if (worst > 1e-10) {
        std::ostringstream os;
        os << "build_dual: numeric/polynomial renderings disagree (rel " << worst << ") at x = ["
           << worst_x.transpose() << "]";
        throw std::invalid_argument(os.str());
    }
    return dm;
}

}  // namespace retrig
