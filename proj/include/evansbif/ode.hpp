#pragma once

#include <array>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "evansbif/model.hpp"

namespace evansbif {

struct IntegratorConfig {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    /// Time between QR reorthonormalizations when propagating frames.
    double reorth_interval = 1.0;
    std::size_t max_steps = 2'000'000;

    void validate() const;
};

using SystemRhs = std::function<void(double t, const VectorXd& y, VectorXd& dydt)>;

/// Accepted steps of a Dormand-Prince 5(4) run together with the
/// coefficients of its continuous extension.
class Trajectory {
public:
    Trajectory(double t0, VectorXd y0);

    double start_time() const noexcept { return times_.front(); }
    double end_time() const noexcept { return times_.back(); }
    const std::vector<double>& times() const noexcept { return times_; }
    const std::vector<VectorXd>& states() const noexcept { return states_; }
    const VectorXd& final_state() const noexcept { return states_.back(); }
    std::size_t steps() const noexcept { return dense_.size(); }

    /// Dense output; t must lie between start_time() and end_time().
    VectorXd at(double t) const;

    /// Appends another trajectory whose start coincides with our end.
    void append(const Trajectory& next);

private:
    friend Trajectory solve_ivp(const SystemRhs&, double, const VectorXd&, double, std::span<const double>,
                                const IntegratorConfig&);

    struct DenseStep {
        double t0 = 0.0;
        double h = 0.0;
        std::array<VectorXd, 5> coeff;
    };

    std::vector<double> times_;
    std::vector<VectorXd> states_;
    std::vector<DenseStep> dense_;
};

/// Adaptive integration of y' = F(t, y) from t0 to t1 (either direction).
/// The interval is split exactly at every breakpoint strictly between t0 and
/// t1; inside a piece, F is only evaluated at times in its open interior so
/// one-sided limits are used at discontinuities.
Trajectory solve_ivp(const SystemRhs& rhs, double t0, const VectorXd& y0, double t1,
                     std::span<const double> breakpoints, const IntegratorConfig& cfg);

/// x' = f(t, x, lambda) with x(tau) = xi.
Trajectory integrate(const ModelSpec& m, double lambda, double tau, const VectorXd& xi, double t_end,
                     const IntegratorConfig& cfg);

/// Time-dependent coefficient matrix of a linear system plus its breakpoints.
struct LinearFlow {
    int dimension = 0;
    std::function<MatrixXd(double t)> coefficients;
    std::vector<double> breakpoints;
};

/// The variation equation x' = A(t, lambda) x along the branch.
LinearFlow variation_flow(const ModelSpec& m, double lambda);

/// Y(t) for Y' = A(t) Y, Y(s) = Y0 (Y0 may be d x k).
MatrixXd propagate_matrix(const LinearFlow& flow, const MatrixXd& y0, double s, double t, const IntegratorConfig& cfg);

/// Same, keeping the dense trajectory of the column-major flattened state.
Trajectory propagate_matrix_dense(const LinearFlow& flow, const MatrixXd& y0, double s, double t,
                                  const IntegratorConfig& cfg);

MatrixXd unflatten(const VectorXd& flat, int rows, int cols);

struct TransitionMatrix {
    MatrixXd value;
    double from_time = 0.0;
    double to_time = 0.0;
    double lambda = 0.0;
};

/// Phi_lambda(t, s); backward when t < s (the integration variable is reversed,
/// never a matrix inverse).
TransitionMatrix transition_matrix(const ModelSpec& m, double lambda, double s, double t, const IntegratorConfig& cfg);

/// d x k matrix with orthonormal columns.
class Frame {
public:
    Frame() = default;
    /// Checks orthonormality to 1e-10.
    explicit Frame(MatrixXd columns);
    /// Orthonormalizes arbitrary full-rank columns (thin QR).
    static Frame orthonormalize(const MatrixXd& columns);

    const MatrixXd& columns() const noexcept { return cols_; }
    int dimension() const noexcept { return static_cast<int>(cols_.rows()); }
    int rank() const noexcept { return static_cast<int>(cols_.cols()); }
    MatrixXd projector() const { return cols_ * cols_.transpose(); }

private:
    MatrixXd cols_;
};

/// Thin QR with nonnegative diagonal of R.
struct ThinQr {
    MatrixXd q;
    MatrixXd r;
};
ThinQr thin_qr(const MatrixXd& a);

/// Orthonormal basis of the orthogonal complement of span(frame).
MatrixXd orthogonal_complement(const MatrixXd& frame);

/// Largest principal angle between two subspaces of equal dimension.
double subspace_angle(const MatrixXd& a, const MatrixXd& b);

/// Principal angles (ascending) between span(a) and span(b).
std::vector<double> principal_angles(const MatrixXd& a, const MatrixXd& b);

/// Orthonormal frame propagated with periodic QR; r_factors[c] belongs to the
/// chunk [times[c], times[c+1]].
struct QrSweep {
    std::vector<double> times;
    std::vector<MatrixXd> frames;
    std::vector<MatrixXd> r_factors;
};

/// Uniform chunks of length at most cfg.reorth_interval between s and t.
QrSweep qr_sweep(const LinearFlow& flow, const MatrixXd& frame0, double s, double t, const IntegratorConfig& cfg);

/// One QR step per consecutive pair of nodes (monotone in either direction).
QrSweep qr_sweep_nodes(const LinearFlow& flow, const MatrixXd& frame0, const std::vector<double>& nodes,
                       const IntegratorConfig& cfg);

struct FramePropagation {
    Frame frame;
    std::vector<double> growth_exponents;
};

/// QR-stabilized image of Phi(t, s) F together with time-averaged log R
/// diagonals (finite-time growth rates of the nested subspaces), sorted in
/// descending order.
FramePropagation propagate_frame(const ModelSpec& m, double lambda, const Frame& f, double s, double t,
                                 const IntegratorConfig& cfg);

} // namespace evansbif
