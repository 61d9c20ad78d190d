#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace evansbif {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using RhsFn = std::function<VectorXd(double t, const VectorXd& x, double lambda)>;
using JacobianFn = std::function<MatrixXd(double t, const VectorXd& x, double lambda)>;
using BranchFn = std::function<VectorXd(double lambda, double t)>;

enum class JacobianSource { Analytic, Expression, FiniteDifference };

struct ParamDomain {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool contains(double lambda) const { return lambda >= lo && lambda <= hi; }
};

/// Everything needed to build a ModelSpec. A missing jacobian is replaced by
/// central finite differences of the rhs; a missing branch by the zero branch.
struct ModelParts {
    std::string name;
    int dimension = 0;
    RhsFn rhs;
    JacobianFn jacobian;
    JacobianSource jacobian_source = JacobianSource::Analytic;
    BranchFn branch;
    std::vector<double> breakpoints;
    ParamDomain param_domain;
    std::map<std::string, std::string> provenance;
};

/// Parametrized nonautonomous system x' = f(t, x, lambda) together with a
/// known family of bounded solutions phi_lambda. Immutable once built.
class ModelSpec {
public:
    explicit ModelSpec(ModelParts parts);

    const std::string& name() const noexcept { return parts_.name; }
    int dimension() const noexcept { return parts_.dimension; }
    const std::vector<double>& breakpoints() const noexcept { return parts_.breakpoints; }
    const ParamDomain& param_domain() const noexcept { return parts_.param_domain; }
    JacobianSource jacobian_source() const noexcept { return parts_.jacobian_source; }
    const std::map<std::string, std::string>& provenance() const noexcept { return parts_.provenance; }

    VectorXd rhs(double t, const VectorXd& x, double lambda) const { return parts_.rhs(t, x, lambda); }
    MatrixXd jacobian(double t, const VectorXd& x, double lambda) const { return parts_.jacobian(t, x, lambda); }
    VectorXd branch(double lambda, double t) const { return parts_.branch(lambda, t); }

    /// Central-difference Jacobian of the rhs, independent of the stored one.
    MatrixXd finite_difference_jacobian(double t, const VectorXd& x, double lambda) const;

private:
    ModelParts parts_;
};

/// A(t, lambda) = D_x f(t, phi_lambda(t), lambda).
MatrixXd variation_coefficients(const ModelSpec& m, double lambda, double t);

/// Linear system x' = A(t, lambda) x with the zero branch.
ModelSpec make_linear_model(std::string name, int dimension, std::function<MatrixXd(double t, double lambda)> coeffs,
                            std::vector<double> breakpoints = {});

/// The variation equation of m as a linear model, optionally shifted to A + c I.
ModelSpec linearization(const ModelSpec& m, double shift = 0.0);

/// Dual variation equation x' = -A(t, lambda)^T x.
ModelSpec dual_linearization(const ModelSpec& m);

// Built-in models.

/// x' = diag(-tanh t, tanh t) x + (0, x1^2) - (0, lambda^2),
/// branch phi_lambda(t) = lambda (sqrt2 / cosh t, lambda tanh t).
ModelSpec make_example10();

/// x' = diag(-tanh t, tanh t) x + (0, nu x1^2) + (0, mu).
/// Branch: the bounded solution through (sqrt(-2 mu / nu), 0), or zero when mu = 0.
ModelSpec make_proto(double nu, double mu);

struct Example9Params {
    int n = 1;
    double alpha = 1.0;
    std::function<MatrixXd(double lambda)> coupling; // C(lambda), n x n
    RhsFn nonlinearity;                                // F(t, x, lambda); empty means F = 0
    std::string coupling_description = "custom";
};

/// Block system x' = [[a(t) I, 0], [C(lambda), -a(t) I]] x + F(t, x, lambda) with
/// a(t) = -alpha for t >= 0 and +alpha for t < 0; trivial branch.
ModelSpec make_example9(Example9Params params);

// Configuration loading.

ModelSpec load_model(std::string_view config_text);
ModelSpec load_model_file(const std::string& path);

// Validation helpers.

/// Largest relative deviation between stored and finite-difference Jacobian
/// over `samples` pseudo-random points (t, x, lambda).
double jacobian_consistency(const ModelSpec& m, int samples, unsigned seed, double t_range = 10.0,
                            double x_range = 2.0);

/// |phi(t) - phi(tau) - int_tau^t f(s, phi(s), lambda) ds| using composite
/// Gauss-Legendre quadrature that splits at breakpoints.
double branch_residual(const ModelSpec& m, double lambda, double tau, double t);

} // namespace evansbif
