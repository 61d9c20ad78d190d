#include "evansbif/evans.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "evansbif/errors.hpp"
#include "evansbif/parallel.hpp"

namespace evansbif {

namespace {

struct RawPoint {
    MatrixXd plus;
    MatrixXd minus;
    int k = 0;
    int m = 0;
};

std::string at_lambda(double lambda) {
    std::ostringstream s;
    s << " at lambda = " << lambda;
    return s.str();
}

RawPoint raw_point(const EvansContext& ctx, double lambda) {
    const int d = ctx.model.dimension();
    try {
        const auto a = DichotomyAnalysis::compute(ctx.model, lambda, 0.0, ctx.horizon, ctx.cfg, ctx.dopts);
        const auto& p = a.plus();
        const auto& q = a.minus();
        if (p.gap(0.0) < ctx.dopts.gap_threshold || q.gap(0.0) < ctx.dopts.gap_threshold)
            throw EvansError(EvansError::Kind::Projector, "no spectral gap at 0 on a half line" + at_lambda(lambda));
        RawPoint out;
        out.k = p.count(0.0);
        out.m = q.count(0.0);
        if (d - out.k != out.m) {
            std::ostringstream msg;
            msg << "Morse indices differ" << at_lambda(lambda) << ": m+ = " << d - out.k << ", m- = " << out.m;
            throw EvansError(EvansError::Kind::MorseMismatch, msg.str());
        }
        out.plus = p.frame(out.k);
        out.minus = q.frame(out.m);
        return out;
    } catch (const DichotomyError& e) {
        throw EvansError(EvansError::Kind::Projector, std::string("projector estimation failed: ") + e.what());
    }
}

// Basis of span(raw) closest to ref.
MatrixXd procrustes(const MatrixXd& raw, const MatrixXd& ref) {
    if (raw.cols() == 0) return raw;
    Eigen::JacobiSVD<MatrixXd> svd(raw.transpose() * ref, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return raw * (svd.matrixU() * svd.matrixV().transpose());
}

// Orientation of a frame read as a graph over its leading coordinates.
MatrixXd graph_oriented(MatrixXd f) {
    const Eigen::Index k = f.cols();
    if (k == 0) return f;
    if (f.topRows(k).determinant() < 0.0) f.col(k - 1) *= -1.0;
    return f;
}

MatrixXd random_orthogonal(Eigen::Index k, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    MatrixXd a(k, k);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    MatrixXd q = thin_qr(a).q;
    if (k > 0 && (rng() & 1u)) q.col(0) *= -1.0;
    return q;
}

double det_of(const MatrixXd& s, const MatrixXd& u) {
    MatrixXd basis(s.rows(), s.cols() + u.cols());
    basis << s, u;
    return basis.determinant();
}

int sgn(double v) { return (v > 0.0) - (v < 0.0); }

struct Aligned {
    MatrixXd plus;
    MatrixXd minus;
    double value = 0.0;
};

Aligned aligned_point(const EvansContext& ctx, double lambda, const MatrixXd& ref_plus, const MatrixXd& ref_minus) {
    const RawPoint raw = raw_point(ctx, lambda);
    if (raw.k != ref_plus.cols())
        throw EvansError(EvansError::Kind::Projector, "half-line Morse index changes" + at_lambda(lambda));
    const double jump = std::max(subspace_angle(raw.plus, ref_plus), subspace_angle(raw.minus, ref_minus));
    if (jump > ctx.eopts.angle_step_tol) {
        std::ostringstream msg;
        msg << "frames jump by " << jump << " rad" << at_lambda(lambda) << "; refine the grid";
        throw EvansError(EvansError::Kind::FrameJump, msg.str());
    }
    Aligned out;
    out.plus = procrustes(raw.plus, ref_plus);
    out.minus = procrustes(raw.minus, ref_minus);
    out.value = det_of(out.plus, out.minus);
    return out;
}

// Shrinks [a, b] around a sign change of E (sign sa at a) to zero_loc_tol.
double bisect_sign_change(const EvansCurve& curve, double a, double b, int sa, const MatrixXd& ref_plus,
                          const MatrixXd& ref_minus) {
    const EvansContext& ctx = *curve.context;
    while (b - a > ctx.eopts.zero_loc_tol) {
        const double mid = 0.5 * (a + b);
        const double v = aligned_point(ctx, mid, ref_plus, ref_minus).value;
        if (std::fabs(v) <= curve.zero_tol) return mid;
        if (sgn(v) == sa) a = mid;
        else b = mid;
    }
    return 0.5 * (a + b);
}

} // namespace

std::size_t EvansCurve::index_of(double lambda) const {
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (std::fabs(grid[i] - lambda) <= 1e-9 * std::max(1.0, std::fabs(lambda))) return i;
    throw std::invalid_argument("lambda = " + std::to_string(lambda) + " is not a grid point of the curve");
}

EvansCurve evans_curve(const ModelSpec& m, double a, double b, int grid_n, double horizon, const IntegratorConfig& cfg,
                       const DichotomyOptions& dopts, const EvansOptions& eopts) {
    if (grid_n < 2) throw std::invalid_argument("grid_n must be at least 2");
    if (!(a < b)) throw std::invalid_argument("evans_curve needs a < b");
    if (!m.param_domain().contains(a) || !m.param_domain().contains(b))
        throw std::invalid_argument("[a, b] must lie in the parameter domain");

    auto ctx = std::make_shared<EvansContext>(EvansContext{m, cfg, dopts, eopts, horizon});
    if (!(horizon > 0.0)) {
        try {
            ctx->horizon = DichotomyAnalysis::compute(m, a, 0.0, std::nullopt, cfg, dopts).horizon();
        } catch (const DichotomyError& e) {
            throw EvansError(EvansError::Kind::Projector, std::string("projector estimation failed: ") + e.what());
        }
    }

    EvansCurve curve;
    curve.context = ctx;
    curve.horizon = ctx->horizon;
    const auto n = static_cast<std::size_t>(grid_n);
    for (std::size_t i = 0; i < n; ++i)
        curve.grid.push_back(i + 1 == n ? b : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));

    std::vector<RawPoint> raw(n);
    parallel_for(n, eopts.jobs, [&](std::size_t i) { raw[i] = raw_point(*ctx, curve.grid[i]); });

    const int d = m.dimension();
    curve.morse_plus = d - raw[0].k;
    curve.morse_minus = raw[0].m;

    MatrixXd s = raw[0].plus, u = raw[0].minus;
    if (eopts.random_anchor_seed) {
        std::mt19937_64 rng(*eopts.random_anchor_seed);
        s = s * random_orthogonal(s.cols(), rng);
        u = u * random_orthogonal(u.cols(), rng);
    } else {
        s = graph_oriented(s);
        u = graph_oriented(u);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            if (raw[i].k != raw[0].k)
                throw EvansError(EvansError::Kind::Projector, "half-line Morse index changes" + at_lambda(curve.grid[i]));
            const double jump = std::max(subspace_angle(raw[i].plus, s), subspace_angle(raw[i].minus, u));
            if (jump > eopts.angle_step_tol) {
                std::ostringstream msg;
                msg << "frames jump by " << jump << " rad between lambda = " << curve.grid[i - 1] << " and "
                    << curve.grid[i] << "; refine the grid";
                throw EvansError(EvansError::Kind::FrameJump, msg.str());
            }
            s = procrustes(raw[i].plus, s);
            u = procrustes(raw[i].minus, u);
        }
        curve.plus_frames.emplace_back(s);
        curve.minus_frames.emplace_back(u);
        curve.values.push_back(det_of(s, u));
    }

    double emax = 0.0;
    for (double v : curve.values) emax = std::max(emax, std::fabs(v));
    // Orthonormal frames bound |E| by 1, so the absolute floor is the transversality test of has_dichotomy.
    curve.zero_tol = std::max(eopts.zero_rel_tol * emax, dopts.transversality_tol);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double h = curve.grid[i + 1] - curve.grid[i];
        if (std::fabs(curve.values[i + 1] - curve.values[i]) > eopts.lip_factor * h) curve.rough_steps.push_back(i);
    }
    return curve;
}

ParityResult parity(const EvansCurve& curve) { return parity(curve, curve.grid.front(), curve.grid.back()); }

ParityResult parity(const EvansCurve& curve, double a, double b) {
    const std::size_t i = curve.index_of(a), j = curve.index_of(b);
    ParityResult r;
    r.a = curve.grid[i];
    r.b = curve.grid[j];
    r.evans_a = curve.values[i];
    r.evans_b = curve.values[j];
    for (std::size_t idx : {i, j}) {
        if (std::fabs(curve.values[idx]) <= curve.zero_tol)
            throw EvansError(EvansError::Kind::EndpointCritical,
                             "E vanishes at the endpoint" + at_lambda(curve.grid[idx]) + "; parity undefined");
    }
    r.value = sgn(r.evans_a) * sgn(r.evans_b);
    return r;
}

ParityResult parity_index(const EvansCurve& curve, double lambda_star) {
    const auto& g = curve.grid;
    const std::size_t n = g.size();
    if (lambda_star <= g.front() || lambda_star >= g.back())
        throw EvansError(EvansError::Kind::NotIsolatedZero, "lambda* must lie inside the grid");
    // Grid neighbours of lambda*, skipping lambda* itself when it is a grid point.
    std::size_t right = static_cast<std::size_t>(std::upper_bound(g.begin(), g.end(), lambda_star) - g.begin());
    std::size_t left = right - 1;
    const double tol = 1e-9 * std::max(1.0, std::fabs(lambda_star));
    bool on_grid = false;
    if (std::fabs(g[left] - lambda_star) <= tol) {
        on_grid = true;
        if (left == 0) throw EvansError(EvansError::Kind::NotIsolatedZero, "lambda* must lie inside the grid");
        --left;
    } else if (right < n && std::fabs(g[right] - lambda_star) <= tol) {
        on_grid = true;
        ++right;
    }
    if (right >= n) throw EvansError(EvansError::Kind::NotIsolatedZero, "lambda* must lie inside the grid");
    const bool zero_left = std::fabs(curve.values[left]) <= curve.zero_tol;
    const bool zero_right = std::fabs(curve.values[right]) <= curve.zero_tol;
    if (zero_left || zero_right) {
        throw EvansError(EvansError::Kind::NotIsolatedZero,
                         "E vanishes next to lambda*" + at_lambda(lambda_star) +
                             (on_grid ? "" : " (between grid points)") + ": parity index undefined (non-isolated)");
    }
    ParityResult r;
    r.kind = ParityResult::Kind::IndexAtPoint;
    r.a = g[left];
    r.b = g[right];
    r.evans_a = curve.values[left];
    r.evans_b = curve.values[right];
    r.value = sgn(r.evans_a) * sgn(r.evans_b);
    return r;
}

BifurcationScan detect_bifurcation_values(const EvansCurve& curve) {
    BifurcationScan scan;
    const auto& g = curve.grid;
    const auto& e = curve.values;
    const std::size_t n = g.size();
    const double tol = curve.zero_tol;
    auto nonzero = [&](std::size_t i) { return std::fabs(e[i]) > tol; };
    const EvansContext& ctx = *curve.context;

    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (nonzero(i) && nonzero(i + 1) && sgn(e[i]) != sgn(e[i + 1])) {
            const double l = bisect_sign_change(curve, g[i], g[i + 1], sgn(e[i]), curve.plus_frames[i].columns(),
                                                curve.minus_frames[i].columns());
            scan.bifurcations.push_back({l, -1, CriticalValue::Kind::SignChange, true});
        }
    }

    // Runs of grid points where E vanishes.
    for (std::size_t p = 0; p < n;) {
        if (nonzero(p)) {
            ++p;
            continue;
        }
        std::size_t q = p;
        while (q + 1 < n && !nonzero(q + 1)) ++q;
        const bool isolated = p == q;
        const double where = isolated ? g[p] : 0.5 * (g[p] + g[q]);
        if (p == 0 || q + 1 == n) {
            scan.inconclusive.push_back({where, 0, CriticalValue::Kind::InconclusiveZero, false});
        } else if (sgn(e[p - 1]) != sgn(e[q + 1])) {
            double l = where;
            if (isolated)
                l = bisect_sign_change(curve, g[p - 1], g[q + 1], sgn(e[p - 1]), curve.plus_frames[p - 1].columns(),
                                       curve.minus_frames[p - 1].columns());
            scan.bifurcations.push_back({l, isolated ? -1 : 0, CriticalValue::Kind::SignChange, isolated});
        } else {
            scan.inconclusive.push_back({where, isolated ? 1 : 0, CriticalValue::Kind::InconclusiveZero, isolated});
        }
        p = q + 1;
    }

    // Zeros touched between grid points: local minima of |E| without a sign change.
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(nonzero(i - 1) && nonzero(i) && nonzero(i + 1))) continue;
        if (sgn(e[i - 1]) != sgn(e[i]) || sgn(e[i]) != sgn(e[i + 1])) continue;
        if (!(std::fabs(e[i]) < std::fabs(e[i - 1]) && std::fabs(e[i]) < std::fabs(e[i + 1]))) continue;
        const MatrixXd& rp = curve.plus_frames[i].columns();
        const MatrixXd& rm = curve.minus_frames[i].columns();
        const int s0 = sgn(e[i]);
        double lo = g[i - 1], hi = g[i + 1];
        const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
        double f1 = aligned_point(ctx, x1, rp, rm).value, f2 = aligned_point(ctx, x2, rp, rm).value;
        std::optional<double> flipped;
        while (hi - lo > ctx.eopts.zero_loc_tol) {
            if (sgn(f1) == -s0) { flipped = x1; break; }
            if (sgn(f2) == -s0) { flipped = x2; break; }
            if (std::fabs(f1) < std::fabs(f2)) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = aligned_point(ctx, x1, rp, rm).value;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = aligned_point(ctx, x2, rp, rm).value;
            }
        }
        if (flipped) {
            // Two sign changes hidden between neighbouring grid points.
            scan.bifurcations.push_back(
                {bisect_sign_change(curve, g[i - 1], *flipped, s0, rp, rm), -1, CriticalValue::Kind::SignChange, true});
            scan.bifurcations.push_back(
                {bisect_sign_change(curve, *flipped, g[i + 1], -s0, rp, rm), -1, CriticalValue::Kind::SignChange, true});
        } else if (std::min(std::fabs(f1), std::fabs(f2)) <= tol) {
            const double where = std::fabs(f1) < std::fabs(f2) ? x1 : x2;
            scan.inconclusive.push_back({where, 1, CriticalValue::Kind::InconclusiveZero, true});
        }
    }

    auto by_lambda = [](const CriticalValue& x, const CriticalValue& y) { return x.lambda < y.lambda; };
    std::sort(scan.bifurcations.begin(), scan.bifurcations.end(), by_lambda);
    std::sort(scan.inconclusive.begin(), scan.inconclusive.end(), by_lambda);
    return scan;
}

int geometric_multiplicity(const ModelSpec& m, double lambda, double horizon, const IntegratorConfig& cfg,
                           const DichotomyOptions& dopts, const EvansOptions& eopts) {
    EvansContext ctx{m, cfg, dopts, eopts, horizon};
    if (!(horizon > 0.0)) {
        try {
            ctx.horizon = DichotomyAnalysis::compute(m, lambda, 0.0, std::nullopt, cfg, dopts).horizon();
        } catch (const DichotomyError& e) {
            throw EvansError(EvansError::Kind::Projector, std::string("projector estimation failed: ") + e.what());
        }
    }
    const RawPoint raw = raw_point(ctx, lambda);
    int count = 0;
    for (double angle : principal_angles(raw.plus, raw.minus)) count += angle < eopts.angle_zero_tol;
    return count;
}

bool is_singular(const MatrixXd& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("square matrix expected");
    double bound = 1.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) bound *= a.col(j).norm();
    if (bound == 0.0) return true;
    return std::fabs(a.determinant()) <= 1e-12 * bound;
}

FiniteParity finite_dim_parity(const MatrixPath& path, double a, double b, const std::vector<double>& partition,
                               int samples) {
    if (!(a < b)) throw std::invalid_argument("finite_dim_parity needs a < b");
    auto sign_det = [&](double l) {
        const MatrixXd x = path(l);
        return is_singular(x) ? 0 : sgn(x.determinant());
    };
    FiniteParity out;
    const int sa = sign_det(a), sb = sign_det(b);
    if (sa == 0 || sb == 0)
        throw EvansError(EvansError::Kind::EndpointCritical, "path is singular at an endpoint; parity undefined");
    out.result.a = a;
    out.result.b = b;
    out.result.evans_a = path(a).determinant();
    out.result.evans_b = path(b).determinant();
    out.result.value = sa * sb;

    std::vector<double> cuts{a};
    std::vector<double> inner(partition);
    std::sort(inner.begin(), inner.end());
    for (double c : inner) {
        if (!(c > a && c < b)) throw std::invalid_argument("partition points must lie inside (a, b)");
        if (sign_det(c) == 0) out.singular_points.push_back(c);
        else cuts.push_back(c);
    }
    cuts.push_back(b);
    out.partition_product = 1;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) out.partition_product *= sign_det(cuts[i]) * sign_det(cuts[i + 1]);
    out.partition_consistent = out.partition_product == out.result.value;

    int prev = sa;
    for (int i = 1; i < samples; ++i) {
        const double l = i + 1 == samples ? b : a + (b - a) * i / (samples - 1);
        const int s = sign_det(l);
        if (s == 0 || s != prev) out.invertible_throughout = false;
        prev = s;
    }
    return out;
}

} // namespace evansbif
