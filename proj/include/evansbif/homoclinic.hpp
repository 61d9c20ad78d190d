#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "evansbif/dichotomy.hpp"
#include "evansbif/errors.hpp"

namespace evansbif {

struct HomoclinicOptions {
    int segments = 8;
    double bvp_tol = 1e-9;
    int max_newton_iters = 25;
    double nontrivial_floor = 1e-6;
    /// Spacing of the returned samples.
    double sample_step = 0.05;
    /// Horizon of the projector analyses at t = -T and t = T (empty: automatic).
    std::optional<double> projector_horizon;
    DichotomyOptions dichotomy;
};

/// A bounded solution y = phi - phi_lambda of the equation of perturbed motion on [-T, T].
struct HomoclinicSolution {
    enum class Status { Converged, Trivial };

    double lambda = 0.0;
    double horizon = 0.0;
    std::vector<double> grid;
    std::vector<VectorXd> y;
    std::vector<VectorXd> dy;
    /// Sup norm of the shooting defect (segment mismatches and boundary rows).
    double residual = 0.0;
    /// max_t |y(t)|.
    double amplitude = 0.0;
    /// Largest angle between y(-T) and N(P-(-T)) and between y(T) and R(P+(T)).
    double boundary_angle = 0.0;
    int newton_iterations = 0;
    Status status = Status::Converged;

    /// Cubic Hermite interpolation of the samples.
    VectorXd at(double t) const;
};

using Guess = std::function<VectorXd(double t)>;

/// Multiple shooting for y' = f(t, y + phi, lambda) - f(t, phi, lambda) with
/// y(-T) in N(P-(-T)) and y(T) in R(P+(T)). Throws HomoclinicError::Divergence
/// when Newton fails; a solution below nontrivial_floor comes back with status Trivial.
HomoclinicSolution solve_homoclinic(const ModelSpec& m, double lambda, double horizon, const Guess& guess,
                                    const IntegratorConfig& cfg, const HomoclinicOptions& opts = {});

/// Unit vector closest to R(P+(0)) cap N(P-(0)): the mean of the principal vectors of the smallest angle.
VectorXd kernel_direction(const ModelSpec& m, double lambda, const IntegratorConfig& cfg,
                          const DichotomyOptions& opts = {});

/// Tries delta * v / cosh t for the kernel direction v and amplitudes delta
/// in seed_amplitudes, both signs, until a nontrivial solution converges.
HomoclinicSolution seed_homoclinic(const ModelSpec& m, double lambda, double horizon, const IntegratorConfig& cfg,
                                   const HomoclinicOptions& opts = {},
                                   const std::vector<double>& seed_amplitudes = {0.1, 0.03, 0.01, 0.3, 1.0});

struct ContinuationOptions {
    double step_min = 1e-4;
};

/// Raised when the continuation step falls below step_min; carries the solutions found so far.
class BranchStall : public HomoclinicError {
public:
    BranchStall(const std::string& what, std::vector<HomoclinicSolution> partial)
        : HomoclinicError(Kind::Stall, what), partial_(std::move(partial)) {}
    const std::vector<HomoclinicSolution>& partial() const noexcept { return partial_; }

private:
    std::vector<HomoclinicSolution> partial_;
};

/// Natural-parameter continuation from seed.lambda to lambda_end with a secant
/// predictor. The seed is not part of the result; the last point is lambda_end.
std::vector<HomoclinicSolution> trace_branch(const ModelSpec& m, double lambda_end, double step,
                                             const HomoclinicSolution& seed, const IntegratorConfig& cfg,
                                             const HomoclinicOptions& opts = {}, const ContinuationOptions& copts = {});

} // namespace evansbif
