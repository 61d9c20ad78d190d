#include "evansbif/dichotomy.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "evansbif/errors.hpp"
#include "evansbif/quadrature.hpp"

namespace evansbif {

namespace {

MatrixXd generic_frame(int d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    MatrixXd a(d, d);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    return thin_qr(a).q;
}

MatrixXd reversed_columns(const MatrixXd& q) { return q.rowwise().reverse(); }

// Average of log diag(R) over chunks [c0, c1) per unit time.
std::vector<double> window_rates(const QrSweep& sweep, std::size_t c0, std::size_t c1) {
    const Eigen::Index d = sweep.r_factors.front().rows();
    std::vector<double> rates(static_cast<std::size_t>(d), 0.0);
    for (std::size_t c = c0; c < c1; ++c)
        for (Eigen::Index i = 0; i < d; ++i) rates[static_cast<std::size_t>(i)] += std::log(sweep.r_factors[c](i, i));
    const double len = std::fabs(sweep.times[c1] - sweep.times[c0]);
    for (auto& r : rates) r /= len;
    return rates;
}

double operator_norm(const MatrixXd& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<MatrixXd> svd(a);
    return svd.singularValues()(0);
}

// Largest principal angle between leading column blocks of the nested frames,
// over every split whose neighbouring bands are separated by at least `sep`.
double nested_drift(const HalfLineSplitting& a, const HalfLineSplitting& b, double sep) {
    const int d = static_cast<int>(a.bands.size());
    double worst = 0.0;
    for (int j = 1; j < d; ++j) {
        const auto& lower = a.bands[static_cast<std::size_t>(j - 1)];
        const auto& upper = a.bands[static_cast<std::size_t>(j)];
        const double separation = a.axis == HalfAxis::Plus ? upper.lo - lower.hi : lower.lo - upper.hi;
        if (separation < sep) continue;
        worst = std::max(worst, subspace_angle(a.frame(j), b.frame(j)));
    }
    return worst;
}

} // namespace

std::string_view to_string(HalfAxis axis) {
    switch (axis) {
    case HalfAxis::Plus: return "plus";
    case HalfAxis::Minus: return "minus";
    case HalfAxis::Whole: return "whole";
    }
    return "?";
}

int HalfLineSplitting::count(double gamma) const {
    int n = 0;
    for (const auto& b : bands) n += axis == HalfAxis::Plus ? (b.hi < gamma) : (b.lo > gamma);
    return n;
}

double HalfLineSplitting::gap(double gamma) const {
    double g = std::numeric_limits<double>::infinity();
    for (const auto& b : bands) {
        if (gamma >= b.lo && gamma <= b.hi) return 0.0;
        g = std::min(g, gamma < b.lo ? b.lo - gamma : gamma - b.hi);
    }
    return g;
}

MatrixXd HalfLineSplitting::frame(int j) const { return nested.leftCols(j); }

double HalfLineSplitting::constant_estimate(int j, double gamma, double alpha) const {
    if (j == 0 || sweep_r.empty()) return 1.0;
    const std::size_t n = sweep_r.size();
    const std::size_t first = n / 2;
    const double sign = axis == HalfAxis::Plus ? -1.0 : 1.0;
    std::vector<MatrixXd> inv;
    inv.reserve(n);
    for (const auto& r : sweep_r) {
        const MatrixXd block = r.topLeftCorner(j, j);
        inv.push_back(block.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(j, j)));
    }
    double k = 1.0;
    for (std::size_t c1 = first + 1; c1 <= n; ++c1) {
        MatrixXd g = MatrixXd::Identity(j, j);
        for (std::size_t c0 = c1; c0-- > first;) {
            g = inv[c0] * g;
            const double dt = std::fabs(sweep_times[c1] - sweep_times[c0]);
            k = std::max(k, operator_norm(g) * std::exp((alpha + sign * gamma) * dt));
        }
    }
    return k;
}

HalfLineSplitting analyze_half_line(const ModelSpec& m, double lambda, HalfAxis axis, double base_time, double horizon,
                                    const IntegratorConfig& cfg, const DichotomyOptions& opts) {
    if (axis == HalfAxis::Whole) throw std::invalid_argument("analyze_half_line needs a half axis");
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
    if (!m.param_domain().contains(lambda)) throw std::invalid_argument("lambda outside the parameter domain");
    const int d = m.dimension();
    const LinearFlow flow = variation_flow(m, lambda);
    const double dir = axis == HalfAxis::Plus ? 1.0 : -1.0;
    const double far = base_time + dir * horizon;

    const QrSweep first = qr_sweep(flow, generic_frame(d, opts.seed), base_time, far, cfg);
    const std::size_t n = first.r_factors.size();
    const std::size_t h = n / 2;
    std::vector<std::pair<std::size_t, std::size_t>> windows{{h, n}};
    if (n - h >= 2) {
        const std::size_t mid = h + (n - h) / 2;
        windows.push_back({h, mid});
        windows.push_back({mid, n});
    }
    HalfLineSplitting out;
    out.axis = axis;
    out.base_time = base_time;
    out.horizon = horizon;
    out.bands.assign(static_cast<std::size_t>(d), RateBand{std::numeric_limits<double>::infinity(),
                                                         -std::numeric_limits<double>::infinity()});
    for (const auto& [c0, c1] : windows) {
        const auto rates = window_rates(first, c0, c1);
        for (int j = 0; j < d; ++j) {
            // column d-1-j of the first pass becomes column j after reversal
            double rate = rates[static_cast<std::size_t>(d - 1 - j)];
            if (axis == HalfAxis::Minus) rate = -rate;
            auto& b = out.bands[static_cast<std::size_t>(j)];
            b.lo = std::min(b.lo, rate);
            b.hi = std::max(b.hi, rate);
        }
    }

    const QrSweep second = qr_sweep(flow, reversed_columns(first.frames.back()), far, base_time, cfg);
    out.nested = second.frames.back();
    out.sweep_times = second.times;
    out.sweep_r = second.r_factors;
    return out;
}

MatrixXd DichotomyProjector::matrix() const {
    const int d = dimension();
    const int k = range_frame.rank();
    MatrixXd basis(d, d);
    basis << range_frame.columns(), kernel_frame.columns();
    const MatrixXd inv = basis.fullPivLu().inverse();
    return range_frame.columns() * inv.topRows(k);
}

DichotomyAnalysis DichotomyAnalysis::compute(const ModelSpec& m, double lambda, double base_time,
                                             std::optional<double> horizon, const IntegratorConfig& cfg,
                                             const DichotomyOptions& opts, bool need_plus, bool need_minus) {
    DichotomyAnalysis a;
    a.lambda_ = lambda;
    a.base_time_ = base_time;
    a.dimension_ = m.dimension();
    a.opts_ = opts;

    struct Pair {
        std::optional<HalfLineSplitting> plus, minus;
    };
    auto run = [&](double t) {
        Pair p;
        if (need_plus) p.plus = analyze_half_line(m, lambda, HalfAxis::Plus, base_time, t, cfg, opts);
        if (need_minus) p.minus = analyze_half_line(m, lambda, HalfAxis::Minus, base_time, t, cfg, opts);
        return p;
    };
    auto drift = [&](const Pair& x, const Pair& y) {
        double w = 0.0;
        if (x.plus) w = std::max(w, nested_drift(*x.plus, *y.plus, opts.gap_threshold));
        if (x.minus) w = std::max(w, nested_drift(*x.minus, *y.minus, opts.gap_threshold));
        return w;
    };

    double t = horizon ? *horizon : opts.initial_horizon;
    if (!(t > 0.0)) throw std::invalid_argument("horizon must be positive");
    Pair cur = run(t);
    while (true) {
        const Pair next = run(2.0 * t);
        const double w = drift(cur, next);
        if (w <= opts.frame_tol) break;
        if (horizon || 4.0 * t > opts.max_horizon) {
            std::ostringstream msg;
            msg << "dichotomy frames not converged at lambda = " << lambda << ": doubling T = " << t
                << " moves them by " << w << " rad";
            throw DichotomyError(DichotomyError::Kind::HorizonNotConverged, msg.str());
        }
        cur = next;
        t *= 2.0;
    }
    a.horizon_ = t;
    a.plus_ = std::move(cur.plus);
    a.minus_ = std::move(cur.minus);
    return a;
}

const HalfLineSplitting& DichotomyAnalysis::plus() const {
    if (!plus_) throw std::logic_error("plus half line was not analysed");
    return *plus_;
}

const HalfLineSplitting& DichotomyAnalysis::minus() const {
    if (!minus_) throw std::logic_error("minus half line was not analysed");
    return *minus_;
}

DichotomyVerdict DichotomyAnalysis::verdict(double gamma, HalfAxis interval) const {
    return verdict(gamma, interval, opts_.gap_threshold);
}

DichotomyVerdict DichotomyAnalysis::verdict(double gamma, HalfAxis interval, double gap_threshold) const {
    DichotomyVerdict v;
    const int d = dimension_;
    switch (interval) {
    case HalfAxis::Plus:
        v.gap = plus().gap(gamma);
        v.morse_index = d - plus().count(gamma);
        v.dichotomic = v.gap >= gap_threshold;
        return v;
    case HalfAxis::Minus:
        v.gap = minus().gap(gamma);
        v.morse_index = minus().count(gamma);
        v.dichotomic = v.gap >= gap_threshold;
        return v;
    case HalfAxis::Whole: break;
    }
    v.gap = std::min(plus().gap(gamma), minus().gap(gamma));
    const int k = plus().count(gamma);
    const int mm = minus().count(gamma);
    v.morse_index = mm;
    if (v.gap < gap_threshold || k + mm != d) return v;
    MatrixXd basis(d, d);
    basis << plus().frame(k), minus().frame(mm);
    v.dichotomic = std::fabs(basis.determinant()) > opts_.transversality_tol;
    return v;
}

DichotomyProjector DichotomyAnalysis::projector(HalfAxis axis, double gamma) const {
    const DichotomyVerdict v = verdict(gamma, axis);
    if (v.gap < opts_.gap_threshold) {
        std::ostringstream msg;
        msg << "no spectral gap at gamma = " << gamma << " (lambda = " << lambda_ << ", gap " << v.gap
            << "); lambda is possibly critical";
        throw DichotomyError(DichotomyError::Kind::NoSpectralGap, msg.str());
    }
    DichotomyProjector p;
    p.half_axis = axis;
    p.horizon = horizon_;
    p.base_time = base_time_;
    p.rate_estimate = v.gap;
    p.morse_index = v.morse_index;
    const int d = dimension_;
    switch (axis) {
    case HalfAxis::Plus: {
        const int k = plus().count(gamma);
        const MatrixXd s = plus().frame(k);
        p.range_frame = Frame(s);
        p.kernel_frame = Frame(orthogonal_complement(s));
        p.constant_estimate = plus().constant_estimate(k, gamma, v.gap);
        return p;
    }
    case HalfAxis::Minus: {
        const int mm = minus().count(gamma);
        const MatrixXd u = minus().frame(mm);
        p.kernel_frame = Frame(u);
        p.range_frame = Frame(orthogonal_complement(u));
        p.constant_estimate = minus().constant_estimate(mm, gamma, v.gap);
        return p;
    }
    case HalfAxis::Whole: break;
    }
    if (!v.dichotomic) {
        std::ostringstream msg;
        msg << "no dichotomy on the whole line at gamma = " << gamma << " (lambda = " << lambda_
            << "): stable and unstable subspaces are not complementary";
        throw DichotomyError(DichotomyError::Kind::NotHyperbolic, msg.str());
    }
    const int k = plus().count(gamma);
    const int mm = minus().count(gamma);
    p.range_frame = Frame(plus().frame(k));
    p.kernel_frame = Frame(minus().frame(mm));
    const MatrixXd pm = p.matrix();
    const double scale = std::max({1.0, operator_norm(pm), operator_norm(MatrixXd::Identity(d, d) - pm)});
    p.constant_estimate =
        scale * std::max(plus().constant_estimate(k, gamma, v.gap), minus().constant_estimate(mm, gamma, v.gap));
    return p;
}

std::pair<double, double> DichotomyAnalysis::exponent_range() const {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto* s : {plus_ ? &*plus_ : nullptr, minus_ ? &*minus_ : nullptr}) {
        if (!s) continue;
        for (const auto& b : s->bands) {
            lo = std::min(lo, b.lo);
            hi = std::max(hi, b.hi);
        }
    }
    return {lo, hi};
}

DichotomyProjector estimate_projector(const ModelSpec& m, double lambda, HalfAxis half_axis, double horizon,
                                      const IntegratorConfig& cfg, const DichotomyOptions& opts, double base_time) {
    const std::optional<double> t = horizon > 0.0 ? std::optional<double>(horizon) : std::nullopt;
    const auto a = DichotomyAnalysis::compute(m, lambda, base_time, t, cfg, opts, half_axis != HalfAxis::Minus,
                                              half_axis != HalfAxis::Plus);
    return a.projector(half_axis, 0.0);
}

DichotomyVerdict has_dichotomy(const ModelSpec& m, double lambda, double gamma, HalfAxis interval, double horizon,
                               const IntegratorConfig& cfg, const DichotomyOptions& opts) {
    const std::optional<double> t = horizon > 0.0 ? std::optional<double>(horizon) : std::nullopt;
    const auto a = DichotomyAnalysis::compute(m, lambda, 0.0, t, cfg, opts, interval != HalfAxis::Minus,
                                              interval != HalfAxis::Plus);
    return a.verdict(gamma, interval);
}

int fredholm_index(const DichotomyAnalysis& analysis, double gamma) {
    const int m_plus = analysis.dimension() - analysis.plus().count(gamma);
    const int m_minus = analysis.minus().count(gamma);
    return m_minus - m_plus;
}

DichotomyProjector dual_projector(const DichotomyProjector& p) {
    DichotomyProjector q = p;
    q.range_frame = Frame(orthogonal_complement(p.range_frame.columns()));
    q.kernel_frame = Frame(orthogonal_complement(p.kernel_frame.columns()));
    q.morse_index = p.dimension() - p.morse_index;
    return q;
}

InhomogeneousSolution solve_inhomogeneous(const ModelSpec& m, double lambda, const Forcing& g, double horizon,
                                          const IntegratorConfig& cfg, const DichotomyOptions& opts,
                                          const InhomogeneousOptions& iopts) {
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
    if (!(iopts.grid_step > 0.0)) throw std::invalid_argument("grid_step must be positive");
    const int d = m.dimension();
    const auto center = DichotomyAnalysis::compute(m, lambda, 0.0, std::nullopt, cfg, opts);
    const auto v = center.verdict(0.0, HalfAxis::Whole);
    if (!v.dichotomic)
        throw DichotomyError(DichotomyError::Kind::NotHyperbolic,
                             "solve_inhomogeneous requires a dichotomy on the whole line at gamma = 0");
    const int k = center.plus().count(0.0);
    const int mm = center.minus().count(0.0);
    const double w = 2.0 * horizon;

    std::vector<double> nodes;
    const int steps = static_cast<int>(std::ceil(2.0 * w / iopts.grid_step - 1e-9));
    for (int i = 0; i <= steps; ++i) nodes.push_back(i == steps ? w : -w + 2.0 * w * i / steps);
    for (double b : m.breakpoints())
        if (b > -w && b < w) nodes.push_back(b);
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end(), [](double a, double b) { return std::fabs(a - b) < 1e-12; }),
                nodes.end());
    const std::size_t n = nodes.size();

    const LinearFlow flow = variation_flow(m, lambda);
    const auto right = DichotomyAnalysis::compute(m, lambda, w, center.horizon(), cfg, opts, true, false);
    const auto left = DichotomyAnalysis::compute(m, lambda, -w, center.horizon(), cfg, opts, false, true);
    std::vector<double> rev(nodes.rbegin(), nodes.rend());
    const QrSweep stable = qr_sweep_nodes(flow, right.plus().nested, rev, cfg);
    const QrSweep unstable = qr_sweep_nodes(flow, left.minus().nested, nodes, cfg);

    std::vector<MatrixXd> proj(n);
    for (std::size_t j = 0; j < n; ++j) {
        MatrixXd basis(d, d);
        basis << stable.frames[n - 1 - j].leftCols(k), unstable.frames[j].leftCols(mm);
        const MatrixXd inv = basis.fullPivLu().inverse();
        proj[j] = basis.leftCols(k) * inv.topRows(k);
    }

    const QuadratureRule& rule = gauss_legendre(iopts.quadrature_points);
    std::vector<MatrixXd> step(n - 1);
    std::vector<VectorXd> wj(n - 1);
    const MatrixXd id = MatrixXd::Identity(d, d);
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const double a = nodes[j], b = nodes[j + 1];
        const Trajectory traj = propagate_matrix_dense(flow, id, a, b, cfg);
        step[j] = unflatten(traj.final_state(), d, d);
        VectorXd acc = VectorXd::Zero(d);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const double s = a + 0.5 * (b - a) * (rule.nodes[q] + 1.0);
            const MatrixXd x = unflatten(traj.at(s), d, d);
            acc += 0.5 * (b - a) * rule.weights[q] * x.partialPivLu().solve(g(s));
        }
        wj[j] = acc;
    }

    std::vector<VectorXd> stable_part(n, VectorXd::Zero(d)), unstable_part(n, VectorXd::Zero(d));
    for (std::size_t j = 0; j + 1 < n; ++j) stable_part[j + 1] = step[j] * (proj[j] * (stable_part[j] + wj[j]));
    for (std::size_t j = n - 1; j-- > 0;) {
        const VectorXd back = step[j].partialPivLu().solve(unstable_part[j + 1]);
        unstable_part[j] = (id - proj[j]) * (back - wj[j]);
    }

    InhomogeneousSolution out;
    out.horizon = horizon;
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < n; ++j) {
        if (nodes[j] < -horizon - 1e-12 || nodes[j] > horizon + 1e-12) continue;
        kept.push_back(j);
        out.times.push_back(nodes[j]);
        out.values.push_back(stable_part[j] + unstable_part[j]);
    }
    SystemRhs forced = [&flow, &g](double t, const VectorXd& x, VectorXd& dx) { dx = flow.coefficients(t) * x + g(t); };
    for (std::size_t i = 0; i + 1 < kept.size(); ++i) {
        const std::size_t j = kept[i];
        const double a = nodes[j], b = nodes[j + 1];
        const VectorXd psi = stable_part[j] + unstable_part[j];
        const Trajectory traj = solve_ivp(forced, a, psi, b, {}, cfg);
        const VectorXd next = stable_part[j + 1] + unstable_part[j + 1];
        out.residual = std::max(out.residual, (traj.final_state() - next).lpNorm<Eigen::Infinity>() / (b - a));
    }
    return out;
}

} // namespace evansbif
