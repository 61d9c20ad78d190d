#include "evansbif/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "evansbif/errors.hpp"
#include "evansbif/quadrature.hpp"

namespace evansbif {

namespace {

MatrixXd central_differences(const RhsFn& f, int d, double t, const VectorXd& x, double lambda) {
    const double base_step = std::cbrt(std::numeric_limits<double>::epsilon());
    MatrixXd jac(d, d);
    VectorXd xp = x;
    for (int j = 0; j < d; ++j) {
        const double h = base_step * std::max(1.0, std::fabs(x(j)));
        xp(j) = x(j) + h;
        const VectorXd fp = f(t, xp, lambda);
        xp(j) = x(j) - h;
        const VectorXd fm = f(t, xp, lambda);
        xp(j) = x(j);
        jac.col(j) = (fp - fm) / (2.0 * h);
    }
    return jac;
}

} // namespace

ModelSpec::ModelSpec(ModelParts parts) : parts_(std::move(parts)) {
    if (parts_.dimension <= 0) throw ConfigError("model dimension must be positive");
    if (!parts_.rhs) throw ConfigError("model '" + parts_.name + "' has no right-hand side");
    for (std::size_t i = 1; i < parts_.breakpoints.size(); ++i)
        if (!(parts_.breakpoints[i - 1] < parts_.breakpoints[i]))
            throw ConfigError("breakpoints must be strictly increasing");
    if (!(parts_.param_domain.lo <= parts_.param_domain.hi)) throw ConfigError("empty parameter domain");

    if (!parts_.jacobian) {
        const int d = parts_.dimension;
        parts_.jacobian = [f = parts_.rhs, d](double t, const VectorXd& x, double lambda) {
            return central_differences(f, d, t, x, lambda);
        };
        parts_.jacobian_source = JacobianSource::FiniteDifference;
        parts_.provenance["jacobian"] = "finite-difference fallback";
    }
    if (!parts_.branch) {
        const int d = parts_.dimension;
        parts_.branch = [d](double, double) { return VectorXd::Zero(d).eval(); };
        parts_.provenance.emplace("branch", "zero");
    }
}

MatrixXd ModelSpec::finite_difference_jacobian(double t, const VectorXd& x, double lambda) const {
    return central_differences(parts_.rhs, parts_.dimension, t, x, lambda);
}

MatrixXd variation_coefficients(const ModelSpec& m, double lambda, double t) {
    return m.jacobian(t, m.branch(lambda, t), lambda);
}

ModelSpec make_linear_model(std::string name, int dimension, std::function<MatrixXd(double, double)> coeffs,
                            std::vector<double> breakpoints) {
    ModelParts parts;
    parts.name = std::move(name);
    parts.dimension = dimension;
    parts.rhs = [coeffs](double t, const VectorXd& x, double lambda) { return (coeffs(t, lambda) * x).eval(); };
    parts.jacobian = [coeffs](double t, const VectorXd&, double lambda) { return coeffs(t, lambda); };
    parts.breakpoints = std::move(breakpoints);
    parts.provenance["kind"] = "linear";
    return ModelSpec(std::move(parts));
}

ModelSpec linearization(const ModelSpec& m, double shift) {
    const int d = m.dimension();
    auto coeffs = [m, shift, d](double t, double lambda) {
        MatrixXd a = variation_coefficients(m, lambda, t);
        a.diagonal().array() += shift;
        return a;
    };
    ModelSpec out = make_linear_model(m.name() + "/linearized", d, coeffs, m.breakpoints());
    return out;
}

ModelSpec dual_linearization(const ModelSpec& m) {
    auto coeffs = [m](double t, double lambda) { return (-variation_coefficients(m, lambda, t).transpose()).eval(); };
    return make_linear_model(m.name() + "/dual", m.dimension(), coeffs, m.breakpoints());
}

ModelSpec make_example10() {
    ModelParts parts;
    parts.name = "example10";
    parts.dimension = 2;
    parts.rhs = [](double t, const VectorXd& x, double lambda) {
        const double th = std::tanh(t);
        VectorXd dx(2);
        dx << -th * x(0), th * x(1) + x(0) * x(0) - lambda * lambda;
        return dx;
    };
    parts.jacobian = [](double t, const VectorXd& x, double) {
        const double th = std::tanh(t);
        MatrixXd j(2, 2);
        j << -th, 0.0, 2.0 * x(0), th;
        return j;
    };
    parts.branch = [](double lambda, double t) {
        VectorXd phi(2);
        phi << lambda * std::sqrt(2.0) / std::cosh(t), lambda * lambda * std::tanh(t);
        return phi;
    };
    parts.param_domain = {-10.0, 10.0};
    parts.provenance["kind"] = "builtin";
    return ModelSpec(std::move(parts));
}

ModelSpec make_proto(double nu, double mu) {
    double xi1 = 0.0;
    if (mu != 0.0) {
        if (nu == 0.0 || -2.0 * mu / nu < 0.0)
            throw ConfigError("proto model has no bounded branch: nu x1^2 + 2 mu = 0 has no real root");
        xi1 = std::sqrt(-2.0 * mu / nu);
    }
    ModelParts parts;
    parts.name = "proto";
    parts.dimension = 2;
    parts.rhs = [nu, mu](double t, const VectorXd& x, double) {
        const double th = std::tanh(t);
        VectorXd dx(2);
        dx << -th * x(0), th * x(1) + nu * x(0) * x(0) + mu;
        return dx;
    };
    parts.jacobian = [nu](double t, const VectorXd& x, double) {
        const double th = std::tanh(t);
        MatrixXd j(2, 2);
        j << -th, 0.0, 2.0 * nu * x(0), th;
        return j;
    };
    // With nu xi1^2 + 2 mu = 0 the bounded solution reduces to (xi1 / cosh t, -mu tanh t).
    parts.branch = [xi1, mu](double, double t) {
        VectorXd phi(2);
        phi << xi1 / std::cosh(t), -mu * std::tanh(t);
        return phi;
    };
    parts.param_domain = {-10.0, 10.0};
    parts.provenance["kind"] = "builtin";
    parts.provenance["nu"] = std::to_string(nu);
    parts.provenance["mu"] = std::to_string(mu);
    return ModelSpec(std::move(parts));
}

ModelSpec make_example9(Example9Params params) {
    if (params.n <= 0) throw ConfigError("example9 requires n >= 1");
    if (!(params.alpha > 0.0)) throw ConfigError("example9 requires alpha > 0");
    if (!params.coupling) throw ConfigError("example9 requires a coupling matrix C(lambda)");
    const int n = params.n;
    const double alpha = params.alpha;
    auto coupling = params.coupling;
    auto nonlinearity = params.nonlinearity;

    auto linear_part = [n, alpha, coupling](double t, double lambda) {
        const double a = t >= 0.0 ? -alpha : alpha;
        MatrixXd c = coupling(lambda);
        if (c.rows() != n || c.cols() != n) throw ConfigError("example9 coupling has wrong shape");
        MatrixXd m = MatrixXd::Zero(2 * n, 2 * n);
        m.topLeftCorner(n, n).diagonal().setConstant(a);
        m.bottomLeftCorner(n, n) = c;
        m.bottomRightCorner(n, n).diagonal().setConstant(-a);
        return m;
    };

    ModelParts parts;
    parts.name = "example9";
    parts.dimension = 2 * n;
    parts.rhs = [linear_part, nonlinearity](double t, const VectorXd& x, double lambda) {
        VectorXd dx = linear_part(t, lambda) * x;
        if (nonlinearity) dx += nonlinearity(t, x, lambda);
        return dx;
    };
    const int d = 2 * n;
    parts.jacobian = [linear_part, nonlinearity, d](double t, const VectorXd& x, double lambda) {
        MatrixXd j = linear_part(t, lambda);
        if (nonlinearity) j += central_differences(nonlinearity, d, t, x, lambda);
        return j;
    };
    parts.jacobian_source = nonlinearity ? JacobianSource::FiniteDifference : JacobianSource::Analytic;
    parts.breakpoints = {0.0};
    parts.param_domain = {-10.0, 10.0};
    parts.provenance["kind"] = "builtin";
    parts.provenance["n"] = std::to_string(n);
    parts.provenance["alpha"] = std::to_string(alpha);
    parts.provenance["C"] = params.coupling_description;
    if (nonlinearity) {
        parts.provenance["jacobian"] = "analytic linear part + finite-difference nonlinearity";

        // F(t, 0, lambda) = 0 and D_x F(t, 0, lambda) = 0 on a sample grid.
        const VectorXd zero = VectorXd::Zero(d);
        for (double t : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
            for (double lambda : {-1.0, -0.1, 0.0, 0.3, 2.0}) {
                if (nonlinearity(t, zero, lambda).lpNorm<Eigen::Infinity>() > 1e-12)
                    throw ConfigError("example9 nonlinearity must vanish at x = 0");
                if (central_differences(nonlinearity, d, t, zero, lambda).lpNorm<Eigen::Infinity>() > 1e-6)
                    throw ConfigError("example9 nonlinearity must have vanishing derivative at x = 0");
            }
        }
    }
    return ModelSpec(std::move(parts));
}

double jacobian_consistency(const ModelSpec& m, int samples, unsigned seed, double t_range, double x_range) {
    std::mt19937_64 rng(seed);
    const auto& dom = m.param_domain();
    const double lo = std::isfinite(dom.lo) ? dom.lo : -2.0;
    const double hi = std::isfinite(dom.hi) ? dom.hi : 2.0;
    std::uniform_real_distribution<double> ut(-t_range, t_range);
    std::uniform_real_distribution<double> ux(-x_range, x_range);
    std::uniform_real_distribution<double> ul(lo, hi);
    const int d = m.dimension();
    double worst = 0.0;
    for (int s = 0; s < samples; ++s) {
        const double t = ut(rng);
        const double lambda = ul(rng);
        VectorXd x(d);
        for (int i = 0; i < d; ++i) x(i) = ux(rng);
        const MatrixXd stored = m.jacobian(t, x, lambda);
        const MatrixXd fd = m.finite_difference_jacobian(t, x, lambda);
        const double scale = std::max(1.0, stored.norm());
        worst = std::max(worst, (stored - fd).norm() / scale);
    }
    return worst;
}

double branch_residual(const ModelSpec& m, double lambda, double tau, double t) {
    if (tau == t) return 0.0;
    const double lo = std::min(tau, t);
    const double hi = std::max(tau, t);
    std::vector<double> cuts{lo};
    for (double b : m.breakpoints())
        if (b > lo && b < hi) cuts.push_back(b);
    cuts.push_back(hi);

    const QuadratureRule& rule = gauss_legendre(10);
    VectorXd integral = VectorXd::Zero(m.dimension());
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
        const int pieces = std::max(1, static_cast<int>(std::ceil((cuts[c + 1] - cuts[c]) / 0.25)));
        const double h = (cuts[c + 1] - cuts[c]) / pieces;
        for (int p = 0; p < pieces; ++p) {
            const double a = cuts[c] + p * h;
            for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
                const double s = a + 0.5 * h * (rule.nodes[q] + 1.0);
                integral += 0.5 * h * rule.weights[q] * m.rhs(s, m.branch(lambda, s), lambda);
            }
        }
    }
    if (t < tau) integral = -integral;
    return (m.branch(lambda, t) - m.branch(lambda, tau) - integral).norm();
}

} // namespace evansbif
