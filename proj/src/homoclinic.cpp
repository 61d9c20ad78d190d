#include "evansbif/homoclinic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace evansbif {

namespace {

struct BoundaryData {
    MatrixXd unstable; // N(P-(-T))
    MatrixXd stable;   // R(P+(T))
    MatrixXd left_rows;
    MatrixXd right_rows;
};

BoundaryData boundary_data(const ModelSpec& m, double lambda, double horizon, const IntegratorConfig& cfg,
                           const HomoclinicOptions& opts) {
    const auto minus =
        DichotomyAnalysis::compute(m, lambda, -horizon, opts.projector_horizon, cfg, opts.dichotomy, false, true);
    const auto plus =
        DichotomyAnalysis::compute(m, lambda, horizon, opts.projector_horizon, cfg, opts.dichotomy, true, false);
    const double thr = opts.dichotomy.gap_threshold;
    if (minus.minus().gap(0.0) < thr || plus.plus().gap(0.0) < thr)
        throw DichotomyError(DichotomyError::Kind::NoSpectralGap, "no dichotomy at the truncation boundary");
    BoundaryData b;
    b.unstable = minus.minus().frame(minus.minus().count(0.0));
    b.stable = plus.plus().frame(plus.plus().count(0.0));
    if (b.unstable.cols() + b.stable.cols() != m.dimension()) {
        std::ostringstream msg;
        msg << "boundary conditions do not close: dim N(P-) = " << b.unstable.cols()
            << ", dim R(P+) = " << b.stable.cols() << " in dimension " << m.dimension();
        throw EvansError(EvansError::Kind::MorseMismatch, msg.str());
    }
    b.left_rows = orthogonal_complement(b.unstable).transpose();
    b.right_rows = orthogonal_complement(b.stable).transpose();
    return b;
}

class Shooting {
public:
    Shooting(const ModelSpec& m, double lambda, double horizon, const IntegratorConfig& cfg,
             const HomoclinicOptions& opts, BoundaryData bc)
        : m_(m), lambda_(lambda), cfg_(cfg), bc_(std::move(bc)), d_(m.dimension()), n_(opts.segments) {
        for (int i = 0; i <= n_; ++i) nodes_.push_back(-horizon + 2.0 * horizon * i / n_);
        nodes_.back() = horizon;
    }

    const std::vector<double>& nodes() const { return nodes_; }
    int unknowns() const { return n_ * d_; }

    VectorXd perturbation_rhs(double t, const VectorXd& y) const {
        const VectorXd phi = m_.branch(lambda_, t);
        return m_.rhs(t, y + phi, lambda_) - m_.rhs(t, phi, lambda_);
    }

    /// Defect and its Jacobian; keeps the segment trajectories.
    void evaluate(const VectorXd& s, VectorXd& f, MatrixXd& jac) {
        const int d = d_;
        segments_.clear();
        f.setZero(unknowns());
        jac.setZero(unknowns(), unknowns());
        const SystemRhs rhs = [&](double t, const VectorXd& z, VectorXd& dz) {
            const VectorXd y = z.head(d);
            const VectorXd phi = m_.branch(lambda_, t);
            dz.resize(z.size());
            dz.head(d) = m_.rhs(t, y + phi, lambda_) - m_.rhs(t, phi, lambda_);
            const MatrixXd a = m_.jacobian(t, y + phi, lambda_);
            Eigen::Map<const MatrixXd> phi_mat(z.data() + d, d, d);
            Eigen::Map<MatrixXd>(dz.data() + d, d, d) = a * phi_mat;
        };
        const int left = static_cast<int>(bc_.left_rows.rows());
        f.head(left) = bc_.left_rows * s.head(d);
        jac.block(0, 0, left, d) = bc_.left_rows;
        for (int i = 0; i < n_; ++i) {
            VectorXd z0(d + d * d);
            z0.head(d) = s.segment(i * d, d);
            Eigen::Map<MatrixXd>(z0.data() + d, d, d).setIdentity();
            segments_.push_back(solve_ivp(rhs, nodes_[i], z0, nodes_[i + 1], m_.breakpoints(), cfg_));
            const VectorXd& z1 = segments_.back().final_state();
            const Eigen::Map<const MatrixXd> flow(z1.data() + d, d, d);
            const int row = left + i * d;
            if (i + 1 < n_) {
                f.segment(row, d) = z1.head(d) - s.segment((i + 1) * d, d);
                jac.block(row, i * d, d, d) = flow;
                jac.block(row, (i + 1) * d, d, d) = -MatrixXd::Identity(d, d);
            } else {
                const int right = static_cast<int>(bc_.right_rows.rows());
                f.segment(row, right) = bc_.right_rows * z1.head(d);
                jac.block(row, i * d, right, d) = bc_.right_rows * flow;
            }
        }
    }

    VectorXd state(int segment, double t) const { return segments_[segment].at(t).head(d_); }
    VectorXd end_state() const { return segments_.back().final_state().head(d_); }
    const BoundaryData& boundary() const { return bc_; }

private:
    const ModelSpec& m_;
    double lambda_;
    IntegratorConfig cfg_;
    BoundaryData bc_;
    int d_;
    int n_;
    std::vector<double> nodes_;
    std::vector<Trajectory> segments_;
};

double vector_angle(const VectorXd& v, const MatrixXd& frame) {
    if (v.norm() == 0.0) return 0.0;
    return subspace_angle(frame, v.normalized());
}

} // namespace

VectorXd HomoclinicSolution::at(double t) const {
    if (grid.empty()) throw std::logic_error("empty homoclinic solution");
    if (t < grid.front() || t > grid.back()) throw std::out_of_range("time outside the solution grid");
    auto it = std::upper_bound(grid.begin(), grid.end(), t);
    std::size_t j = it == grid.end() ? grid.size() - 2 : static_cast<std::size_t>(it - grid.begin()) - 1;
    const double h = grid[j + 1] - grid[j];
    const double s = (t - grid[j]) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return h00 * y[j] + h10 * h * dy[j] + h01 * y[j + 1] + h11 * h * dy[j + 1];
}

HomoclinicSolution solve_homoclinic(const ModelSpec& m, double lambda, double horizon, const Guess& guess,
                                    const IntegratorConfig& cfg, const HomoclinicOptions& opts) {
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
    if (opts.segments < 1) throw std::invalid_argument("at least one shooting segment is needed");
    Shooting shoot(m, lambda, horizon, cfg, opts, boundary_data(m, lambda, horizon, cfg, opts));
    const int d = m.dimension();
    const auto& nodes = shoot.nodes();

    VectorXd s(shoot.unknowns());
    for (int i = 0; i < opts.segments; ++i) {
        const VectorXd g = guess(nodes[i]);
        if (g.size() != d) throw std::invalid_argument("guess has the wrong dimension");
        s.segment(i * d, d) = g;
    }

    VectorXd f;
    MatrixXd jac;
    try {
        shoot.evaluate(s, f, jac);
    } catch (const IntegrationError& e) {
        throw HomoclinicError(HomoclinicError::Kind::Divergence, std::string("initial guess blows up: ") + e.what());
    }
    int iter = 0;
    for (; f.lpNorm<Eigen::Infinity>() > opts.bvp_tol; ++iter) {
        if (iter == opts.max_newton_iters) {
            std::ostringstream msg;
            msg << "Newton did not converge in " << iter << " iterations at lambda = " << lambda
                << " (defect " << f.lpNorm<Eigen::Infinity>() << ")";
            throw HomoclinicError(HomoclinicError::Kind::Divergence, msg.str());
        }
        Eigen::FullPivLU<MatrixXd> lu(jac);
        const VectorXd delta = lu.solve(-f);
        const double norm0 = f.norm();
        bool accepted = false;
        for (double a = 1.0; a >= 1.0 / 1024.0; a *= 0.5) {
            const VectorXd trial = s + a * delta;
            VectorXd ft;
            MatrixXd jt;
            try {
                shoot.evaluate(trial, ft, jt);
            } catch (const IntegrationError&) {
                continue;
            }
            if (ft.norm() < (1.0 - 1e-4 * a) * norm0 || ft.lpNorm<Eigen::Infinity>() <= opts.bvp_tol) {
                s = trial;
                f = std::move(ft);
                jac = std::move(jt);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            std::ostringstream msg;
            msg << "Newton line search failed at lambda = " << lambda << " (defect " << f.lpNorm<Eigen::Infinity>()
                << ")";
            throw HomoclinicError(HomoclinicError::Kind::Divergence, msg.str());
        }
    }

    // Polish: the boundary angles are defect / |y(+-T)|, and |y(+-T)| is tiny.
    for (int extra = 0; extra < 3 && f.lpNorm<Eigen::Infinity>() > 0.0; ++extra) {
        const VectorXd trial = s + Eigen::FullPivLU<MatrixXd>(jac).solve(-f);
        VectorXd ft;
        MatrixXd jt;
        shoot.evaluate(trial, ft, jt);
        if (!(ft.lpNorm<Eigen::Infinity>() < 0.5 * f.lpNorm<Eigen::Infinity>())) {
            shoot.evaluate(s, f, jac);
            break;
        }
        s = trial;
        f = std::move(ft);
        jac = std::move(jt);
        ++iter;
    }

    HomoclinicSolution sol;
    sol.lambda = lambda;
    sol.horizon = horizon;
    sol.residual = f.lpNorm<Eigen::Infinity>();
    sol.newton_iterations = iter;
    for (int i = 0; i < opts.segments; ++i) {
        const double t0 = nodes[i], t1 = nodes[i + 1];
        const int pieces = std::max(1, static_cast<int>(std::ceil((t1 - t0) / opts.sample_step - 1e-9)));
        for (int j = 0; j < pieces; ++j) {
            const double t = t0 + (t1 - t0) * j / pieces;
            sol.grid.push_back(t);
            sol.y.push_back(j == 0 ? VectorXd(s.segment(i * d, d)) : shoot.state(i, t));
        }
    }
    sol.grid.push_back(horizon);
    sol.y.push_back(shoot.end_state());
    for (std::size_t j = 0; j < sol.grid.size(); ++j) {
        sol.dy.push_back(shoot.perturbation_rhs(sol.grid[j], sol.y[j]));
        sol.amplitude = std::max(sol.amplitude, sol.y[j].norm());
    }
    sol.boundary_angle = std::max(vector_angle(sol.y.front(), shoot.boundary().unstable),
                                  vector_angle(sol.y.back(), shoot.boundary().stable));
    sol.status = sol.amplitude > opts.nontrivial_floor ? HomoclinicSolution::Status::Converged
                                                        : HomoclinicSolution::Status::Trivial;
    return sol;
}

VectorXd kernel_direction(const ModelSpec& m, double lambda, const IntegratorConfig& cfg,
                          const DichotomyOptions& opts) {
    const auto a = DichotomyAnalysis::compute(m, lambda, 0.0, std::nullopt, cfg, opts);
    const MatrixXd s = a.plus().frame(a.plus().count(0.0));
    const MatrixXd u = a.minus().frame(a.minus().count(0.0));
    if (s.cols() == 0 || u.cols() == 0)
        throw HomoclinicError(HomoclinicError::Kind::Seeding, "a half-line subspace is trivial; no kernel direction");
    Eigen::JacobiSVD<MatrixXd> svd(s.transpose() * u, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd v = s * svd.matrixU().col(0) + u * svd.matrixV().col(0);
    return v.normalized();
}

HomoclinicSolution seed_homoclinic(const ModelSpec& m, double lambda, double horizon, const IntegratorConfig& cfg,
                                   const HomoclinicOptions& opts, const std::vector<double>& seed_amplitudes) {
    const VectorXd v = kernel_direction(m, lambda, cfg, opts.dichotomy);
    for (double delta : seed_amplitudes) {
        for (double sign : {1.0, -1.0}) {
            const Guess g = [&](double t) { return VectorXd(sign * delta * v / std::cosh(t)); };
            try {
                auto sol = solve_homoclinic(m, lambda, horizon, g, cfg, opts);
                if (sol.status == HomoclinicSolution::Status::Converged) return sol;
            } catch (const HomoclinicError&) {
            }
        }
    }
    std::ostringstream msg;
    msg << "no nontrivial homoclinic solution found from the kernel seeds at lambda = " << lambda;
    throw HomoclinicError(HomoclinicError::Kind::Seeding, msg.str());
}

std::vector<HomoclinicSolution> trace_branch(const ModelSpec& m, double lambda_end, double step,
                                             const HomoclinicSolution& seed, const IntegratorConfig& cfg,
                                             const HomoclinicOptions& opts, const ContinuationOptions& copts) {
    if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
    if (seed.status != HomoclinicSolution::Status::Converged)
        throw std::invalid_argument("trace_branch needs a converged nontrivial seed");
    std::vector<HomoclinicSolution> out;
    const double dir = lambda_end >= seed.lambda ? 1.0 : -1.0;
    HomoclinicSolution current = seed;
    std::optional<HomoclinicSolution> previous;
    double h = step;
    while (dir * (lambda_end - current.lambda) > 0.0) {
        double next = current.lambda + dir * h;
        if (dir * (next - lambda_end) >= 0.0) next = lambda_end;
        Guess guess = [&current](double t) { return current.at(t); };
        if (previous) {
            const double ratio = (next - current.lambda) / (current.lambda - previous->lambda);
            guess = [&current, &previous, ratio](double t) {
                const VectorXd c = current.at(t);
                return VectorXd(c + ratio * (c - previous->at(t)));
            };
        }
        std::optional<HomoclinicSolution> sol;
        try {
            sol = solve_homoclinic(m, next, seed.horizon, guess, cfg, opts);
        } catch (const HomoclinicError&) {
        } catch (const IntegrationError&) {
        }
        if (sol && sol->status == HomoclinicSolution::Status::Converged) {
            out.push_back(*sol);
            previous = std::move(current);
            current = std::move(*sol);
            h = std::min(step, 2.0 * h);
        } else {
            h *= 0.5;
            if (h < copts.step_min) {
                std::ostringstream msg;
                msg << "continuation stalled after lambda = " << current.lambda << " (step below " << copts.step_min
                    << ")";
                throw BranchStall(msg.str(), std::move(out));
            }
        }
    }
    return out;
}

} // namespace evansbif
