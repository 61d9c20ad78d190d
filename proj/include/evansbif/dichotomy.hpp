#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "evansbif/model.hpp"
#include "evansbif/ode.hpp"

namespace evansbif {

enum class HalfAxis { Plus, Minus, Whole };

std::string_view to_string(HalfAxis axis);

struct DichotomyOptions {
    /// Minimal exponent separation around the shift for a dichotomy verdict.
    double gap_threshold = 0.05;
    /// Subspace angle allowed between the frames at horizons T and 2T.
    double frame_tol = 1e-6;
    /// Automatic horizon selection: start here, double up to max_horizon.
    double initial_horizon = 10.0;
    double max_horizon = 160.0;
    /// |det[S | U]| below this counts as a failed splitting on the whole line.
    double transversality_tol = 1e-8;
    /// Seed of the generic starting frame.
    std::uint64_t seed = 0x5eedULL;
};

/// Range of finite-time growth rates of one direction over tail windows.
struct RateBand {
    double lo = 0.0;
    double hi = 0.0;
};

/// Result of the two-pass QR analysis on one half line with base time tau.
///
/// Plus: bands ascending, and the first j columns of `nested` span the j-dimensional
/// forward-slowest subspace at tau. Minus: bands descending, and the first j columns
/// span the j-dimensional subspace that is fastest in forward time (slowest backward).
struct HalfLineSplitting {
    HalfAxis axis = HalfAxis::Plus;
    double base_time = 0.0;
    double horizon = 0.0;
    std::vector<RateBand> bands;
    MatrixXd nested;

    /// QR data of the second pass, in sweep order (ending at base_time).
    std::vector<double> sweep_times;
    std::vector<MatrixXd> sweep_r;

    /// Plus: #{bands entirely below gamma}. Minus: #{bands entirely above gamma}.
    int count(double gamma) const;
    /// Distance from gamma to the nearest band (0 when gamma lies inside one).
    double gap(double gamma) const;
    /// Leading j columns of the nested frame.
    MatrixXd frame(int j) const;
    /// Transient constant of the j-dimensional invariant part for decay rate
    /// alpha relative to the shift gamma, evaluated on the converged half of the sweep.
    double constant_estimate(int j, double gamma, double alpha) const;
};

HalfLineSplitting analyze_half_line(const ModelSpec& m, double lambda, HalfAxis axis, double base_time, double horizon,
                                    const IntegratorConfig& cfg, const DichotomyOptions& opts = {});

struct DichotomyVerdict {
    bool dichotomic = false;
    double gap = 0.0;
    int morse_index = 0;
};

struct DichotomyProjector {
    Frame range_frame;
    Frame kernel_frame;
    int morse_index = 0;
    double rate_estimate = 0.0;
    double constant_estimate = 1.0;
    HalfAxis half_axis = HalfAxis::Whole;
    double horizon = 0.0;
    double base_time = 0.0;

    int dimension() const { return range_frame.dimension(); }
    /// The projector with the given range and kernel.
    MatrixXd matrix() const;
};

/// Both half-line analyses for one parameter value at one base time, with
/// horizon convergence checked. Every shift gamma is answered from the same
/// propagation (shifting only moves the growth rates).
class DichotomyAnalysis {
public:
    /// horizon: fixed T, or automatic selection when empty.
    static DichotomyAnalysis compute(const ModelSpec& m, double lambda, double base_time, std::optional<double> horizon,
                                     const IntegratorConfig& cfg, const DichotomyOptions& opts = {},
                                     bool need_plus = true, bool need_minus = true);

    double lambda() const noexcept { return lambda_; }
    double horizon() const noexcept { return horizon_; }
    double base_time() const noexcept { return base_time_; }
    int dimension() const noexcept { return dimension_; }
    const DichotomyOptions& options() const noexcept { return opts_; }
    const HalfLineSplitting& plus() const;
    const HalfLineSplitting& minus() const;
    bool has_plus() const noexcept { return plus_.has_value(); }
    bool has_minus() const noexcept { return minus_.has_value(); }

    DichotomyVerdict verdict(double gamma, HalfAxis interval) const;
    DichotomyVerdict verdict(double gamma, HalfAxis interval, double gap_threshold) const;

    /// Throws DichotomyError (NoSpectralGap / NotHyperbolic) when no projector exists.
    DichotomyProjector projector(HalfAxis axis, double gamma = 0.0) const;

    /// Smallest and largest band endpoints over the analysed half lines.
    std::pair<double, double> exponent_range() const;

private:
    double lambda_ = 0.0;
    double horizon_ = 0.0;
    double base_time_ = 0.0;
    int dimension_ = 0;
    DichotomyOptions opts_;
    std::optional<HalfLineSplitting> plus_;
    std::optional<HalfLineSplitting> minus_;
};

/// R(P(base)) and N(P(base)) of the variation equation on the given half axis.
DichotomyProjector estimate_projector(const ModelSpec& m, double lambda, HalfAxis half_axis, double horizon,
                                      const IntegratorConfig& cfg, const DichotomyOptions& opts = {},
                                      double base_time = 0.0);

/// Dichotomy test of the shifted variation equation x' = (A(t) - gamma I) x.
/// horizon <= 0 selects the horizon automatically.
DichotomyVerdict has_dichotomy(const ModelSpec& m, double lambda, double gamma, HalfAxis interval, double horizon,
                               const IntegratorConfig& cfg, const DichotomyOptions& opts = {});

/// m- - m+ from the two half-line splittings at shift gamma.
int fredholm_index(const DichotomyAnalysis& analysis, double gamma = 0.0);

/// Q = I - P^T: range R(P)^perp, kernel N(P)^perp.
DichotomyProjector dual_projector(const DichotomyProjector& p);

using Forcing = std::function<VectorXd(double t)>;

struct InhomogeneousOptions {
    double grid_step = 0.05;
    int quadrature_points = 8;
};

struct InhomogeneousSolution {
    std::vector<double> times;
    std::vector<VectorXd> values;
    /// max over interior steps of |psi(t_{j+1}) - x(t_{j+1})| / h, where x solves
    /// x' = A x + g from psi(t_j).
    double residual = 0.0;
    double horizon = 0.0;
};

/// The bounded solution of x' = A(t, lambda) x + g(t), sampled on [-T, T].
/// Green's-function integrals are carried out over [-2T, 2T], so the error from
/// truncating the real line is of order exp(-alpha T) at the sample edges.
InhomogeneousSolution solve_inhomogeneous(const ModelSpec& m, double lambda, const Forcing& g, double horizon,
                                          const IntegratorConfig& cfg, const DichotomyOptions& opts = {},
                                          const InhomogeneousOptions& iopts = {});

} // namespace evansbif
