#pragma once

#include <vector>

namespace evansbif {

struct QuadratureRule {
    std::vector<double> nodes;   // on [-1, 1]
    std::vector<double> weights;
};

/// n-point Gauss-Legendre rule (Golub-Welsch).
const QuadratureRule& gauss_legendre(int n);

} // namespace evansbif
