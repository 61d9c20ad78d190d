#include <cmath>
#include <random>

#include "doctest.h"
#include "evansbif/errors.hpp"
#include "evansbif/ode.hpp"
#include "oracles.hpp"

using namespace evansbif;

namespace {

ModelSpec example9_linear(std::function<MatrixXd(double)> c) {
    Example9Params p;
    p.coupling = std::move(c);
    return make_example9(std::move(p));
}

std::vector<ModelSpec> builtins() {
    return {make_example10(), make_proto(0.0, 0.0), make_proto(1.0, -0.09),
            example9_linear([](double l) { return MatrixXd::Constant(1, 1, l); })};
}

} // namespace

TEST_CASE("nonlinear solution matches the closed form") {
    const double lambda = 0.3;
    const auto m = make_proto(1.0, -lambda * lambda);
    Eigen::Vector2d xi(std::sqrt(2.0) * lambda, 0.0);
    const auto traj = integrate(m, lambda, 0.0, xi, 5.0, IntegratorConfig{});
    double worst = 0.0;
    for (int k = 0; k <= 500; ++k) {
        const double t = 5.0 * k / 500.0;
        worst = std::max(worst, (traj.at(t) - oracle::proto_solution(1.0, -lambda * lambda, xi, t)).lpNorm<Eigen::Infinity>());
    }
    CHECK(worst <= 1e-7);
}

TEST_CASE("decoupled linear case against quadrature") {
    const auto m = make_proto(0.0, 0.0);
    const auto traj = integrate(m, 0.0, 0.0, Eigen::Vector2d(1.0, 1.0), 3.0, IntegratorConfig{});
    double worst = 0.0;
    for (int k = 0; k <= 300; ++k) {
        const double t = 3.0 * k / 300.0;
        // log|x_i| = -+ int_0^t tanh
        const double lc = oracle::simpson([](double s) { return std::tanh(s); }, 0.0, t);
        const Eigen::Vector2d exact(std::exp(-lc), std::exp(lc));
        worst = std::max(worst, (traj.at(t) - exact).lpNorm<Eigen::Infinity>());
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("zero-length integration returns the initial value") {
    for (const auto& m : builtins()) {
        const VectorXd xi = VectorXd::LinSpaced(m.dimension(), 0.5, 1.5);
        const auto traj = integrate(m, 0.2, 1.7, xi, 1.7, IntegratorConfig{});
        CHECK(traj.final_state() == xi);
        CHECK(traj.at(1.7) == xi);
        CHECK(traj.steps() == 0);
    }
}

TEST_CASE("backward integration") {
    const auto m = make_proto(1.0, -0.09);
    Eigen::Vector2d xi(0.2, -0.1);
    const auto traj = integrate(m, 0.3, 0.0, xi, -3.0, IntegratorConfig{});
    for (double t : {-0.5, -1.7, -3.0})
        CHECK((traj.at(t) - oracle::proto_solution(1.0, -0.09, xi, t)).norm() <= 1e-7);
}

TEST_CASE("transition matrices") {
    const IntegratorConfig cfg;
    const auto phi = transition_matrix(make_example10(), 0.0, 0.0, 1.0, cfg);
    CHECK(std::fabs(phi.value(0, 0) - 1.0 / std::cosh(1.0)) <= 1e-8);
    CHECK(std::fabs(phi.value(1, 1) - std::cosh(1.0)) <= 1e-8);
    CHECK(std::fabs(phi.value(0, 1)) <= 1e-8);
    CHECK(std::fabs(phi.value(1, 0)) <= 1e-8);
    CHECK(std::fabs(phi.value(0, 0) - 0.6480543) <= 1e-7);

    const auto ex9 = example9_linear([](double l) { return MatrixXd::Constant(1, 1, l); });
    const auto phi9 = transition_matrix(ex9, 0.0, 0.0, 1.0, cfg);
    CHECK((phi9.value - oracle::block_flow_positive(1.0, 0.0, 0.0, 1.0)).norm() <= 1e-8);
    const auto phi9c = transition_matrix(ex9, 0.7, 0.0, 2.0, cfg);
    CHECK((phi9c.value - oracle::block_flow_positive(1.0, 0.7, 0.0, 2.0)).norm() <= 1e-8 * phi9c.value.norm());

    for (const auto& m : builtins()) {
        const auto id = transition_matrix(m, 0.3, 2.5, 2.5, cfg);
        CHECK(id.value == MatrixXd::Identity(m.dimension(), m.dimension()));
    }
}

TEST_CASE("cocycle property and bounded growth") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ut(-5.0, 5.0), ul(-1.0, 1.0);
    const IntegratorConfig cfg;
    for (const auto& m : builtins()) {
        CAPTURE(m.name());
        for (int k = 0; k < 20; ++k) {
            const double s = ut(rng), r = ut(rng), t = ut(rng), lambda = ul(rng);
            const MatrixXd ts = transition_matrix(m, lambda, s, t, cfg).value;
            const MatrixXd tr = transition_matrix(m, lambda, r, t, cfg).value;
            const MatrixXd rs = transition_matrix(m, lambda, s, r, cfg).value;
            CHECK((tr * rs - ts).norm() <= 1e-7 * std::max(ts.norm(), (tr * rs).norm()));

            double big_m = 0.0;
            for (int q = 0; q <= 200; ++q) {
                const double tq = std::min(s, t) + std::fabs(t - s) * q / 200.0;
                big_m = std::max(big_m, variation_coefficients(m, lambda, tq).operatorNorm());
            }
            CHECK(ts.operatorNorm() <= std::exp(big_m * std::fabs(t - s)) * (1 + 1e-9));
        }
    }
}

TEST_CASE("breakpoint splitting is exact") {
    const auto m = example9_linear([](double l) { return MatrixXd::Constant(1, 1, l); });
    const IntegratorConfig cfg;
    const Eigen::Vector2d xi(0.3, -0.2);
    const auto whole = integrate(m, 0.5, -2.0, xi, 3.0, cfg);
    const auto first = integrate(m, 0.5, -2.0, xi, 0.0, cfg);
    const auto second = integrate(m, 0.5, 0.0, first.final_state(), 3.0, cfg);
    CHECK((whole.final_state() - second.final_state()).norm() <= 1e-12);
    CHECK(std::find(whole.times().begin(), whole.times().end(), 0.0) != whole.times().end());

    // Each side uses its own one-sided coefficients.
    const auto left = transition_matrix(m, 0.0, -1.0, 0.0, cfg).value;
    CHECK(std::fabs(left(0, 0) - std::exp(1.0)) <= 1e-8 * std::exp(1.0));
    const auto right = transition_matrix(m, 0.0, 0.0, 1.0, cfg).value;
    CHECK(std::fabs(right(0, 0) - std::exp(-1.0)) <= 1e-8);
}

TEST_CASE("dense output interpolates accurately") {
    const auto m = make_proto(1.0, -0.09);
    Eigen::Vector2d xi(0.1, 0.05);
    const auto traj = integrate(m, 0.0, -1.0, xi, 2.0, IntegratorConfig{});
    std::vector<double> mids;
    for (std::size_t i = 0; i + 1 < traj.times().size(); ++i) mids.push_back(0.5 * (traj.times()[i] + traj.times()[i + 1]));
    double worst = 0.0;
    for (double t : mids) {
        const Eigen::Vector2d back = oracle::proto_solution(1.0, -0.09, traj.at(0.0), t);
        worst = std::max(worst, (traj.at(t) - back).norm());
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("blow-up is reported") {
    ModelParts p;
    p.name = "riccati";
    p.dimension = 1;
    p.rhs = [](double, const VectorXd& x, double) { return (x.array() * x.array()).matrix().eval(); };
    const ModelSpec m(std::move(p));
    CHECK_THROWS_AS(integrate(m, 0.0, 0.0, VectorXd::Ones(1), 2.0, IntegratorConfig{}), IntegrationError);
}

TEST_CASE("invalid configuration") {
    IntegratorConfig cfg;
    cfg.rel_tol = 0.0;
    CHECK_THROWS(cfg.validate());
    cfg = IntegratorConfig{};
    cfg.reorth_interval = -1.0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("frame propagation") {
    const IntegratorConfig cfg;
    const auto ex10 = make_example10();
    const Frame e1(Eigen::Vector2d(1.0, 0.0));
    const auto out = propagate_frame(ex10, 0.0, e1, 0.0, 20.0, cfg);
    CHECK(std::fabs(std::fabs(out.frame.columns()(0, 0)) - 1.0) <= 1e-10);
    CHECK(std::fabs(out.growth_exponents[0] + 1.0) <= 0.05);

    const Frame id(MatrixXd::Identity(2, 2));
    const auto same = propagate_frame(ex10, 0.0, id, 3.0, 3.0, cfg);
    CHECK(same.frame.columns() == MatrixXd::Identity(2, 2));
    CHECK(same.growth_exponents == std::vector<double>{0.0, 0.0});

    const auto ex9 = example9_linear([](double) { return MatrixXd::Zero(1, 1); });
    const auto rates = propagate_frame(ex9, 0.0, id, 0.0, 10.0, cfg);
    REQUIRE(rates.growth_exponents.size() == 2);
    CHECK(std::fabs(rates.growth_exponents[0] - 1.0) <= 0.05);
    CHECK(std::fabs(rates.growth_exponents[1] + 1.0) <= 0.05);
}

TEST_CASE("stabilized and direct propagation span the same subspace") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> ut(-5.0, 5.0), ul(-1.0, 1.0);
    IntegratorConfig cfg;
    cfg.reorth_interval = 0.5;
    for (const auto& m : builtins()) {
        const int d = m.dimension();
        for (int k = 0; k < 10; ++k) {
            const int cols = 1 + static_cast<int>(rng() % static_cast<unsigned>(d));
            MatrixXd f(d, cols);
            for (int i = 0; i < f.size(); ++i) f.data()[i] = g(rng);
            const Frame frame = Frame::orthonormalize(f);
            const double s = ut(rng), lambda = ul(rng);
            const double t = s + std::uniform_real_distribution<double>(-5.0, 5.0)(rng);
            const auto stab = propagate_frame(m, lambda, frame, s, t, cfg);
            const MatrixXd direct = transition_matrix(m, lambda, s, t, cfg).value * frame.columns();
            CHECK(subspace_angle(stab.frame.columns(), thin_qr(direct).q) <= 1e-6);
        }
    }
}

TEST_CASE("linear algebra helpers") {
    MatrixXd a(3, 2);
    a << 1, 2, 0, 1, 1, 0;
    const ThinQr qr = thin_qr(a);
    CHECK((qr.q * qr.r - a).norm() <= 1e-14);
    CHECK(qr.r(0, 0) > 0.0);
    CHECK(qr.r(1, 1) > 0.0);
    const MatrixXd c = orthogonal_complement(qr.q);
    CHECK(c.cols() == 1);
    CHECK((qr.q.transpose() * c).norm() <= 1e-14);
    const auto angles = principal_angles(qr.q, Eigen::Vector3d(1, 0, 1).normalized());
    REQUIRE(angles.size() == 1);
    CHECK(angles[0] <= 1e-12);
    CHECK(subspace_angle(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)) == doctest::Approx(M_PI / 2));
    CHECK_THROWS(Frame(MatrixXd::Ones(2, 1)));
}
