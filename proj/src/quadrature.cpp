#include "evansbif/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include <Eigen/Eigenvalues>

namespace evansbif {

namespace {

QuadratureRule build_rule(int n) {
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        const double b = i / std::sqrt(4.0 * i * i - 1.0);
        jacobi(i, i - 1) = b;
        jacobi(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    QuadratureRule rule;
    for (int i = 0; i < n; ++i) {
        rule.nodes.push_back(eig.eigenvalues()(i));
        const double v = eig.eigenvectors()(0, i);
        rule.weights.push_back(2.0 * v * v);
    }
    return rule;
}

} // namespace

const QuadratureRule& gauss_legendre(int n) {
    static std::mutex mutex;
    static std::map<int, QuadratureRule> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, build_rule(n)).first;
    return it->second;
}

} // namespace evansbif
