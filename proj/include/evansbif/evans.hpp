#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "evansbif/dichotomy.hpp"

namespace evansbif {

struct EvansOptions {
    /// |E| <= max(zero_rel_tol * max |E|, transversality_tol) on the grid counts as zero.
    double zero_rel_tol = 1e-8;
    /// Width to which sign changes are bisected.
    double zero_loc_tol = 1e-6;
    /// Principal angles below this count as a shared direction.
    double angle_zero_tol = 1e-4;
    /// Largest subspace angle allowed between neighbouring grid points.
    double angle_step_tol = 0.25;
    /// Steps with |E(k+1) - E(k)| > lip_factor * spacing are flagged.
    double lip_factor = 100.0;
    /// Replace the graph orientation at the left end by a random orthogonal
    /// change of basis drawn from this seed.
    std::optional<std::uint64_t> random_anchor_seed;
    int jobs = 1;
};

/// Everything needed to evaluate E at new parameter values.
struct EvansContext {
    ModelSpec model;
    IntegratorConfig cfg;
    DichotomyOptions dopts;
    EvansOptions eopts;
    double horizon = 0.0;
};

struct EvansCurve {
    std::vector<double> grid;
    std::vector<double> values;
    std::vector<Frame> plus_frames;  // R(P+(0)) at each grid point
    std::vector<Frame> minus_frames; // N(P-(0)) at each grid point
    int morse_plus = 0;
    int morse_minus = 0;
    double horizon = 0.0;
    double zero_tol = 0.0;
    /// Indices k whose step k -> k+1 changes E faster than lip_factor allows.
    std::vector<std::size_t> rough_steps;
    std::shared_ptr<const EvansContext> context;

    std::size_t index_of(double lambda) const;
};

/// E(lambda) = det[xi+_1 .. xi+_{d-m}, xi-_1 .. xi-_m] on a uniform grid of grid_n
/// points, with bases carried along the grid by orthogonal Procrustes alignment.
/// horizon <= 0 chooses it automatically at lambda = a and keeps it fixed.
EvansCurve evans_curve(const ModelSpec& m, double a, double b, int grid_n, double horizon, const IntegratorConfig& cfg,
                       const DichotomyOptions& dopts = {}, const EvansOptions& eopts = {});

struct ParityResult {
    enum class Kind { Interval, IndexAtPoint };
    int value = 1;
    double a = 0.0;
    double b = 0.0;
    double evans_a = 0.0;
    double evans_b = 0.0;
    Kind kind = Kind::Interval;
};

/// sgn E(a) * sgn E(b) over the whole curve.
ParityResult parity(const EvansCurve& curve);
/// Same over [a, b]; both must be grid points.
ParityResult parity(const EvansCurve& curve, double a, double b);

/// Limit of sgn E(lambda* - eps) sgn E(lambda* + eps) using the nearest grid
/// points on either side where E is nonzero.
ParityResult parity_index(const EvansCurve& curve, double lambda_star);

struct CriticalValue {
    enum class Kind { SignChange, InconclusiveZero };
    double lambda = 0.0;
    /// -1 or +1; 0 when undefined because the zero is not isolated.
    int parity_index = 0;
    Kind kind = Kind::SignChange;
    bool isolated = true;
};

struct BifurcationScan {
    /// Sign changes of E: bifurcation values with parity index -1.
    std::vector<CriticalValue> bifurcations;
    /// Zeros of E without a sign change; the parity criterion says nothing here.
    std::vector<CriticalValue> inconclusive;
};

BifurcationScan detect_bifurcation_values(const EvansCurve& curve);

/// dim(R(P+(0)) cap N(P-(0))) by counting small principal angles.
int geometric_multiplicity(const ModelSpec& m, double lambda, double horizon, const IntegratorConfig& cfg,
                           const DichotomyOptions& dopts = {}, const EvansOptions& eopts = {});

using MatrixPath = std::function<MatrixXd(double lambda)>;

struct FiniteParity {
    ParityResult result;
    /// Partition points where the path is singular (not usable).
    std::vector<double> singular_points;
    /// Product of the parities of the subintervals cut at the usable points.
    int partition_product = 1;
    bool partition_consistent = true;
    /// No sampled point of the path is singular.
    bool invertible_throughout = true;
};

bool is_singular(const MatrixXd& a);

/// sgn det path(a) * sgn det path(b), checked against a partition.
FiniteParity finite_dim_parity(const MatrixPath& path, double a, double b, const std::vector<double>& partition = {},
                               int samples = 201);

} // namespace evansbif
