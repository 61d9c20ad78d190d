#include <chrono>
#include <cmath>
#include <random>

#include "doctest.h"
#include "evansbif/homoclinic.hpp"
#include "oracles.hpp"

using namespace evansbif;

namespace {

const IntegratorConfig cfg;

// Difference of the two bounded branches of the tanh example.
Eigen::Vector2d branch_gap(double lambda, double t) { return {-2.0 * std::sqrt(2.0) * lambda / std::cosh(t), 0.0}; }

double sup_error(const HomoclinicSolution& s, const std::function<Eigen::Vector2d(double)>& exact) {
    double err = 0.0;
    for (std::size_t j = 0; j < s.grid.size(); ++j) err = std::max(err, (s.y[j] - exact(s.grid[j])).lpNorm<Eigen::Infinity>());
    return err;
}

HomoclinicSolution tanh_solution(double lambda, double horizon) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> noise(-0.1, 0.1);
    const double n1 = noise(rng), n2 = noise(rng);
    const Guess g = [=](double t) {
        Eigen::Vector2d v = branch_gap(lambda, t);
        v(0) *= 1.0 + n1;
        v(1) += n2 * 2.0 * std::sqrt(2.0) * lambda / std::cosh(t);
        return VectorXd(v);
    };
    return solve_homoclinic(make_example10(), lambda, horizon, g, cfg);
}

} // namespace

TEST_CASE("tanh example: noisy guess converges to the second branch") {
    const auto sol = tanh_solution(0.3, 12.0);
    CHECK(sol.status == HomoclinicSolution::Status::Converged);
    CHECK(sol.residual <= 1e-9);
    CHECK(sup_error(sol, [](double t) { return branch_gap(0.3, t); }) <= 1e-4);
    CHECK(sol.amplitude == doctest::Approx(2.0 * std::sqrt(2.0) * 0.3).epsilon(1e-4));
    CHECK(sol.boundary_angle <= 1e-6);
    CHECK(sol.grid.front() == -12.0);
    CHECK(sol.grid.back() == 12.0);
    // Hermite interpolation between samples.
    for (double t : {-3.333, 0.01, 7.77}) CHECK((sol.at(t) - VectorXd(branch_gap(0.3, t))).norm() <= 1e-6);
}

TEST_CASE("zero guess gives the trivial solution") {
    for (const auto& m : {make_example10(), make_proto(1.0, -0.09)}) {
        const auto sol = solve_homoclinic(m, 0.3, 10.0, [](double) { return VectorXd::Zero(2).eval(); }, cfg);
        CHECK(sol.status == HomoclinicSolution::Status::Trivial);
        CHECK(sol.amplitude == 0.0);
        CHECK(sol.newton_iterations == 0);
    }
}

TEST_CASE("proto model: guess from the bounded-solution criterion") {
    const double lambda = 0.3;
    const auto m = make_proto(1.0, -lambda * lambda);
    const Eigen::Vector2d xi(-std::sqrt(2.0) * lambda, 0.0);
    const Guess g = [&](double t) {
        return VectorXd(oracle::proto_solution(1.0, -lambda * lambda, xi, t) - m.branch(lambda, t));
    };
    const auto sol = solve_homoclinic(m, lambda, 12.0, g, cfg);
    CHECK(sol.status == HomoclinicSolution::Status::Converged);
    CHECK(sol.residual <= 1e-6);
    CHECK(sup_error(sol, [&](double t) {
              return Eigen::Vector2d(oracle::proto_solution(1.0, -lambda * lambda, xi, t) - m.branch(lambda, t));
          }) <= 1e-6);
}

TEST_CASE("Newton failure is reported") {
    HomoclinicOptions opts;
    opts.max_newton_iters = 1;
    const Guess g = [](double t) { return VectorXd(0.3 * branch_gap(0.3, t)); };
    try {
        solve_homoclinic(make_example10(), 0.3, 12.0, g, cfg, opts);
        FAIL("expected an error");
    } catch (const HomoclinicError& e) {
        CHECK(e.kind() == HomoclinicError::Kind::Divergence);
    }
}

TEST_CASE("kernel seeding finds the bifurcating branch") {
    const auto v = kernel_direction(make_example10(), 0.0, cfg);
    CHECK(std::fabs(std::fabs(v(0)) - 1.0) <= 1e-8);
    const auto sol = seed_homoclinic(make_example10(), 0.3, 12.0, cfg);
    CHECK(sol.status == HomoclinicSolution::Status::Converged);
    CHECK(sup_error(sol, [](double t) { return branch_gap(0.3, t); }) <= 1e-4);

    // Hyperbolic saddle: no bounded solution besides zero.
    const auto saddle = make_linear_model("saddle", 2, [](double, double) {
        MatrixXd a(2, 2);
        a << -1, 0, 0, 1;
        return a;
    });
    try {
        seed_homoclinic(saddle, 0.0, 8.0, cfg);
        FAIL("expected an error");
    } catch (const HomoclinicError& e) {
        CHECK(e.kind() == HomoclinicError::Kind::Seeding);
    }
}

TEST_CASE("branch continuation towards and away from the bifurcation value") {
    const auto seed = tanh_solution(0.3, 12.0);
    const auto t0 = std::chrono::steady_clock::now();
    const auto down = trace_branch(make_example10(), 0.01, 0.05, seed, cfg);
    REQUIRE(!down.empty());
    CHECK(down.back().lambda == 0.01);
    for (std::size_t i = 0; i < down.size(); ++i) {
        CAPTURE(down[i].lambda);
        CHECK(down[i].lambda < 0.3);
        if (i > 0) CHECK(down[i].lambda < down[i - 1].lambda);
        CHECK(down[i].residual <= 1e-9);
        CHECK(std::fabs(down[i].amplitude / (2.0 * std::sqrt(2.0) * down[i].lambda) - 1.0) <= 0.05);
        CHECK(down[i].boundary_angle <= 1e-6);
    }
    const auto up = trace_branch(make_example10(), 0.5, 0.05, seed, cfg);
    REQUIRE(!up.empty());
    CHECK(up.back().lambda == 0.5);
    for (const auto& s : up) CHECK(std::fabs(s.amplitude / (2.0 * std::sqrt(2.0) * s.lambda) - 1.0) <= 0.05);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    MESSAGE("continuation time " << secs << " s");

    const auto single = trace_branch(make_example10(), 0.35, 1.0, seed, cfg);
    REQUIRE(single.size() == 1);
    CHECK(single[0].lambda == 0.35);
    CHECK(trace_branch(make_example10(), 0.3, 0.1, seed, cfg).empty());
}

TEST_CASE("property: converged solutions decay beyond the truncation") {
    for (double lambda : {0.1, 0.3, 0.5}) {
        const auto sol = tanh_solution(lambda, 12.0);
        const auto m = make_example10();
        const VectorXd x0 = sol.y.back() + m.branch(lambda, 12.0);
        const auto tr = integrate(m, lambda, 12.0, x0, 17.0, cfg);
        const double y0 = sol.y.back().norm();
        for (double t = 12.5; t <= 17.0; t += 0.5) {
            const double yt = (tr.at(t) - m.branch(lambda, t)).norm();
            // Half of the exponent 1 of the stable direction.
            CHECK(yt <= y0 * std::exp(-0.5 * (t - 12.0)));
        }
    }
}

TEST_CASE("property: truncation robustness") {
    for (double lambda : {0.05, 0.3}) {
        const auto a = tanh_solution(lambda, 12.0);
        const auto b = solve_homoclinic(make_example10(), lambda, 16.0, [&](double t) {
            return VectorXd(branch_gap(lambda, t));
        }, cfg);
        double diff = 0.0;
        for (std::size_t j = 0; j < a.grid.size(); ++j) diff = std::max(diff, (a.y[j] - b.at(a.grid[j])).norm());
        CHECK(diff <= 1e-5);
    }
}

TEST_CASE("property: a branch emanates from each detected sign change") {
    // Evans scan is exercised elsewhere; here lambda* = 0 of the tanh example.
    const double lambda_star = 0.0;
    for (double side : {1.0, -1.0}) {
        const auto seed = seed_homoclinic(make_example10(), lambda_star + side * 0.1, 12.0, cfg);
        const auto branch = trace_branch(make_example10(), lambda_star + side * 0.005, 0.02, seed, cfg);
        REQUIRE(branch.size() >= 2);
        for (std::size_t i = 1; i < branch.size(); ++i) CHECK(branch[i].amplitude < branch[i - 1].amplitude);
        CHECK(branch.back().amplitude <= 0.02);
    }
}
