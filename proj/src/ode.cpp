#include "evansbif/ode.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evansbif/errors.hpp"

namespace evansbif {

namespace {

// Dormand-Prince 5(4) tableau with the continuous extension of Hairer's dopri5.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

double error_norm(const VectorXd& err, const VectorXd& y0, const VectorXd& y1, const IntegratorConfig& cfg) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        const double sk = cfg.abs_tol + cfg.rel_tol * std::max(std::fabs(y0(i)), std::fabs(y1(i)));
        const double q = err(i) / sk;
        acc += q * q;
    }
    return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(1, err.size())));
}

struct Piece {
    double lo;
    double hi;
};

// Integrates one breakpoint-free piece, appending accepted steps to `out`.
template <class AppendFn>
VectorXd integrate_piece(const SystemRhs& rhs, double t0, VectorXd y, double t1, const IntegratorConfig& cfg,
                         AppendFn&& append) {
    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double lo = std::min(t0, t1), hi = std::max(t0, t1);
    const double inner_lo = std::nextafter(lo, hi);
    const double inner_hi = std::nextafter(hi, lo);
    auto eval = [&](double t, const VectorXd& state, VectorXd& out) {
        rhs(std::clamp(t, inner_lo, inner_hi), state, out);
    };

    const Eigen::Index n = y.size();
    VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), err(n);
    eval(t0, y, k1);

    // Initial step guess (Hairer & Wanner, II.4).
    double h;
    {
        VectorXd scale = (cfg.abs_tol + cfg.rel_tol * y.array().abs()).matrix();
        const double dnf = std::sqrt((k1.array() / scale.array()).square().mean());
        const double dny = std::sqrt((y.array() / scale.array()).square().mean());
        double h0 = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * dny / dnf;
        h0 = std::min(h0, std::min(cfg.max_step, hi - lo));
        ytmp = y + dir * h0 * k1;
        eval(t0 + dir * h0, ytmp, k2);
        const double der2 = std::sqrt((((k2 - k1).array() / scale.array()).square()).mean()) / h0;
        const double der12 = std::max(std::fabs(der2), dnf);
        const double h1 = der12 <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / der12, 1.0 / 5.0);
        h = std::min({100.0 * h0, h1, cfg.max_step, hi - lo});
    }

    double t = t0;
    std::size_t steps = 0;
    bool last_rejected = false;
    while (dir * (t1 - t) > 0.0) {
        if (++steps > cfg.max_steps) throw IntegrationError("maximum number of integration steps exceeded");
        const double remaining = std::fabs(t1 - t);
        bool hits_end = false;
        if (h >= remaining * (1.0 - 1e-12)) {
            h = remaining;
            hits_end = true;
        }
        const double min_step = 1e-14 * std::max(1.0, std::fabs(t));
        if (h < min_step)
            throw IntegrationError("step size underflow at t = " + std::to_string(t) + " (stiffness or blow-up)");
        const double hs = dir * h;

        ytmp = y + hs * (a21 * k1);
        eval(t + c2 * hs, ytmp, k2);
        ytmp = y + hs * (a31 * k1 + a32 * k2);
        eval(t + c3 * hs, ytmp, k3);
        ytmp = y + hs * (a41 * k1 + a42 * k2 + a43 * k3);
        eval(t + c4 * hs, ytmp, k4);
        ytmp = y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        eval(t + c5 * hs, ytmp, k5);
        ytmp = y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        const double t_new = hits_end ? t1 : t + hs;
        eval(t_new, ytmp, k6);
        ynew = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        eval(t_new, ynew, k7);
        err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        if (!ynew.allFinite()) {
            if (h <= min_step * 2) throw IntegrationError("non-finite state at t = " + std::to_string(t));
            h *= 0.2;
            last_rejected = true;
            continue;
        }
        const double en = error_norm(err, y, ynew, cfg);
        if (en <= 1.0) {
            std::array<VectorXd, 5> coeff;
            const VectorXd ydiff = ynew - y;
            const VectorXd bspl = hs * k1 - ydiff;
            coeff[0] = y;
            coeff[1] = ydiff;
            coeff[2] = bspl;
            coeff[3] = ydiff - hs * k7 - bspl;
            coeff[4] = hs * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
            append(t, hs, t_new, ynew, std::move(coeff));
            t = t_new;
            y = ynew;
            k1 = k7;
            double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
            if (last_rejected) fac = std::min(fac, 1.0);
            h = std::min(h * fac, cfg.max_step);
            last_rejected = false;
        } else {
            h *= std::clamp(0.9 * std::pow(en, -0.2), 0.1, 0.9);
            last_rejected = true;
        }
    }
    return y;
}

} // namespace

void IntegratorConfig::validate() const {
    if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw std::invalid_argument("integrator tolerances must be positive");
    if (!(reorth_interval > 0.0)) throw std::invalid_argument("reorth_interval must be positive");
    if (!(max_step > 0.0)) throw std::invalid_argument("max_step must be positive");
}

Trajectory::Trajectory(double t0, VectorXd y0) {
    times_.push_back(t0);
    states_.push_back(std::move(y0));
}

VectorXd Trajectory::at(double t) const {
    if (dense_.empty()) return states_.front();
    const bool forward = times_.back() >= times_.front();
    // Index of the step containing t.
    std::size_t idx;
    if (forward) {
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        idx = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
    } else {
        auto it = std::upper_bound(times_.begin(), times_.end(), t, std::greater<double>());
        idx = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
    }
    idx = std::min(idx, dense_.size() - 1);
    if (t == times_[idx]) return states_[idx];
    if (t == times_[idx + 1]) return states_[idx + 1];
    const DenseStep& s = dense_[idx];
    const double theta = (t - s.t0) / s.h;
    const double theta1 = 1.0 - theta;
    return s.coeff[0] + theta * (s.coeff[1] + theta1 * (s.coeff[2] + theta * (s.coeff[3] + theta1 * s.coeff[4])));
}

void Trajectory::append(const Trajectory& next) {
    for (std::size_t i = 0; i < next.dense_.size(); ++i) {
        dense_.push_back(next.dense_[i]);
        times_.push_back(next.times_[i + 1]);
        states_.push_back(next.states_[i + 1]);
    }
}

Trajectory solve_ivp(const SystemRhs& rhs, double t0, const VectorXd& y0, double t1,
                     std::span<const double> breakpoints, const IntegratorConfig& cfg) {
    cfg.validate();
    Trajectory traj(t0, y0);
    if (t0 == t1) return traj;
    const double lo = std::min(t0, t1), hi = std::max(t0, t1);
    std::vector<double> cuts;
    for (double b : breakpoints)
        if (b > lo && b < hi) cuts.push_back(b);
    if (t1 < t0) std::reverse(cuts.begin(), cuts.end());
    cuts.push_back(t1);

    VectorXd y = y0;
    double start = t0;
    auto append = [&traj](double ts, double hs, double t_new, const VectorXd& ynew, std::array<VectorXd, 5>&& coeff) {
        Trajectory::DenseStep step;
        step.t0 = ts;
        step.h = hs;
        step.coeff = std::move(coeff);
        traj.dense_.push_back(std::move(step));
        traj.times_.push_back(t_new);
        traj.states_.push_back(ynew);
    };
    for (double stop : cuts) {
        y = integrate_piece(rhs, start, y, stop, cfg, append);
        start = stop;
    }
    return traj;
}

Trajectory integrate(const ModelSpec& m, double lambda, double tau, const VectorXd& xi, double t_end,
                     const IntegratorConfig& cfg) {
    if (!m.param_domain().contains(lambda)) throw std::invalid_argument("lambda outside the parameter domain");
    if (xi.size() != m.dimension()) throw std::invalid_argument("initial value has wrong dimension");
    SystemRhs rhs = [&m, lambda](double t, const VectorXd& x, VectorXd& dx) { dx = m.rhs(t, x, lambda); };
    return solve_ivp(rhs, tau, xi, t_end, m.breakpoints(), cfg);
}

LinearFlow variation_flow(const ModelSpec& m, double lambda) {
    LinearFlow flow;
    flow.dimension = m.dimension();
    flow.coefficients = [&m, lambda](double t) { return variation_coefficients(m, lambda, t); };
    flow.breakpoints = m.breakpoints();
    return flow;
}

MatrixXd unflatten(const VectorXd& flat, int rows, int cols) {
    return Eigen::Map<const MatrixXd>(flat.data(), rows, cols);
}

Trajectory propagate_matrix_dense(const LinearFlow& flow, const MatrixXd& y0, double s, double t,
                                  const IntegratorConfig& cfg) {
    const int d = flow.dimension;
    const int k = static_cast<int>(y0.cols());
    if (y0.rows() != d) throw std::invalid_argument("frame has wrong row count");
    SystemRhs rhs = [&flow, d, k](double time, const VectorXd& y, VectorXd& dy) {
        const MatrixXd a = flow.coefficients(time);
        dy.resize(y.size());
        Eigen::Map<MatrixXd>(dy.data(), d, k).noalias() = a * Eigen::Map<const MatrixXd>(y.data(), d, k);
    };
    const VectorXd flat = Eigen::Map<const VectorXd>(y0.data(), y0.size());
    return solve_ivp(rhs, s, flat, t, flow.breakpoints, cfg);
}

MatrixXd propagate_matrix(const LinearFlow& flow, const MatrixXd& y0, double s, double t, const IntegratorConfig& cfg) {
    if (s == t) return y0;
    const Trajectory traj = propagate_matrix_dense(flow, y0, s, t, cfg);
    return unflatten(traj.final_state(), flow.dimension, static_cast<int>(y0.cols()));
}

TransitionMatrix transition_matrix(const ModelSpec& m, double lambda, double s, double t, const IntegratorConfig& cfg) {
    if (!m.param_domain().contains(lambda)) throw std::invalid_argument("lambda outside the parameter domain");
    const int d = m.dimension();
    TransitionMatrix out;
    out.from_time = s;
    out.to_time = t;
    out.lambda = lambda;
    out.value = propagate_matrix(variation_flow(m, lambda), MatrixXd::Identity(d, d), s, t, cfg);
    return out;
}

Frame::Frame(MatrixXd columns) : cols_(std::move(columns)) {
    const MatrixXd gram = cols_.transpose() * cols_;
    if ((gram - MatrixXd::Identity(gram.rows(), gram.cols())).norm() > 1e-10)
        throw std::invalid_argument("frame columns are not orthonormal");
}

Frame Frame::orthonormalize(const MatrixXd& columns) {
    return Frame(thin_qr(columns).q);
}

ThinQr thin_qr(const MatrixXd& a) {
    const Eigen::Index d = a.rows(), k = a.cols();
    Eigen::HouseholderQR<MatrixXd> qr(a);
    ThinQr out;
    out.q = qr.householderQ() * MatrixXd::Identity(d, k);
    out.r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < k; ++i) {
        if (out.r(i, i) < 0.0) {
            out.r.row(i) *= -1.0;
            out.q.col(i) *= -1.0;
        }
    }
    return out;
}

MatrixXd orthogonal_complement(const MatrixXd& frame) {
    const Eigen::Index d = frame.rows(), k = frame.cols();
    if (k == 0) return MatrixXd::Identity(d, d);
    if (k == d) return MatrixXd(d, 0);
    Eigen::HouseholderQR<MatrixXd> qr(frame);
    const MatrixXd full = qr.householderQ() * MatrixXd::Identity(d, d);
    return full.rightCols(d - k);
}

double subspace_angle(const MatrixXd& a, const MatrixXd& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("subspace_angle needs equal dimensions");
    if (a.cols() == 0) return 0.0;
    // sin of the largest principal angle = ||(I - A A^T) B||_2.
    const MatrixXd resid = b - a * (a.transpose() * b);
    Eigen::JacobiSVD<MatrixXd> svd(resid);
    return std::asin(std::min(1.0, svd.singularValues()(0)));
}

std::vector<double> principal_angles(const MatrixXd& a, const MatrixXd& b) {
    std::vector<double> angles;
    if (a.cols() == 0 || b.cols() == 0) return angles;
    const MatrixXd& small = a.cols() <= b.cols() ? a : b;
    const MatrixXd& large = a.cols() <= b.cols() ? b : a;
    // sines from the part of `small` outside span(large): accurate for tiny angles.
    const MatrixXd resid = small - large * (large.transpose() * small);
    Eigen::JacobiSVD<MatrixXd> svd_sin(resid);
    Eigen::JacobiSVD<MatrixXd> svd_cos(large.transpose() * small);
    const Eigen::Index k = small.cols();
    for (Eigen::Index i = 0; i < k; ++i) {
        const double s = std::min(1.0, svd_sin.singularValues()(k - 1 - i));
        const double c = std::min(1.0, svd_cos.singularValues()(i));
        angles.push_back(std::atan2(s, c));
    }
    std::sort(angles.begin(), angles.end());
    return angles;
}

QrSweep qr_sweep_nodes(const LinearFlow& flow, const MatrixXd& frame0, const std::vector<double>& nodes,
                       const IntegratorConfig& cfg) {
    cfg.validate();
    if (nodes.empty()) throw std::invalid_argument("qr_sweep_nodes needs at least one node");
    QrSweep sweep;
    sweep.times.push_back(nodes.front());
    sweep.frames.push_back(frame0);
    MatrixXd q = frame0;
    for (std::size_t c = 0; c + 1 < nodes.size(); ++c) {
        const MatrixXd y = propagate_matrix(flow, q, nodes[c], nodes[c + 1], cfg);
        ThinQr qr = thin_qr(y);
        for (Eigen::Index i = 0; i < qr.r.rows(); ++i)
            if (!(qr.r(i, i) > 1e-300))
                throw DichotomyError(DichotomyError::Kind::RankCollapse, "frame rank collapse during QR propagation");
        q = qr.q;
        sweep.times.push_back(nodes[c + 1]);
        sweep.frames.push_back(q);
        sweep.r_factors.push_back(std::move(qr.r));
    }
    return sweep;
}

QrSweep qr_sweep(const LinearFlow& flow, const MatrixXd& frame0, double s, double t, const IntegratorConfig& cfg) {
    cfg.validate();
    const double dir = t >= s ? 1.0 : -1.0;
    const double span = std::fabs(t - s);
    const int chunks = span == 0.0 ? 0 : std::max(1, static_cast<int>(std::ceil(span / cfg.reorth_interval - 1e-9)));
    std::vector<double> nodes{s};
    for (int c = 1; c <= chunks; ++c) nodes.push_back(c == chunks ? t : s + dir * span * c / chunks);
    return qr_sweep_nodes(flow, frame0, nodes, cfg);
}

FramePropagation propagate_frame(const ModelSpec& m, double lambda, const Frame& f, double s, double t,
                                 const IntegratorConfig& cfg) {
    const int k = f.rank();
    FramePropagation out;
    out.growth_exponents.assign(static_cast<std::size_t>(k), 0.0);
    if (s == t) {
        out.frame = f;
        return out;
    }
    const QrSweep sweep = qr_sweep(variation_flow(m, lambda), f.columns(), s, t, cfg);
    for (const auto& r : sweep.r_factors)
        for (int i = 0; i < k; ++i) out.growth_exponents[static_cast<std::size_t>(i)] += std::log(r(i, i));
    for (auto& g : out.growth_exponents) g /= std::fabs(t - s);
    std::sort(out.growth_exponents.begin(), out.growth_exponents.end(), std::greater<double>());
    out.frame = Frame(sweep.frames.back());
    return out;
}

} // namespace evansbif
