// Pools three classes drawn from related AR(1) models and compares each
// estimate with its class SCM.

#include "linpool/pooling.hpp"

#include <cstdio>

using namespace linpool;

int main() {
    const Index p = 40;
    const std::vector<double> rho{0.3, 0.4, 0.5};
    const std::vector<Index> n{15, 60, 15};
    Rng rng(2024);

    std::vector<RealDataset> classes;
    std::vector<MatrixXd> truth;
    for (std::size_t k = 0; k < rho.size(); ++k) {
        const auto model = CovarianceModel::ar1(p, 1.0 + static_cast<double>(k), rho[k]);
        truth.push_back(materialize(model));
        classes.push_back(sample<double>(EllipticalLaw(Family::StudentT, model, 8.0), n[k], rng));
    }

    const auto res = pool(classes, PoolingConfig::linpool());
    std::printf("class    n   nmse(scm)  nmse(linpool)  weights (S1 S2 S3 | I)\n");
    for (std::size_t k = 0; k < classes.size(); ++k) {
        const double norm = truth[k].squaredNorm();
        const double scm = (sample_covariance(classes[k]) - truth[k]).squaredNorm() / norm;
        const double lin = (res.estimates[k] - truth[k]).squaredNorm() / norm;
        const VectorXd a = res.coefficients.weights.col(static_cast<Index>(k));
        std::printf("%5zu %4ld %10.4f %14.4f   %.3f %.3f %.3f | %.3g\n", k + 1, static_cast<long>(n[k]), scm, lin, a(0),
                    a(1), a(2), a(3));
    }
    return 0;
}
