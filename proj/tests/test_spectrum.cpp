#include <cmath>

#include "doctest.h"
#include "evansbif/errors.hpp"
#include "evansbif/spectrum.hpp"

using namespace evansbif;

namespace {

ModelSpec constant_saddle() {
    return make_linear_model("saddle", 2, [](double, double) {
        MatrixXd a(2, 2);
        a << -1, 0, 0, 1;
        return a;
    });
}

void check_invariants(const SpectralIntervalSet& s, int d) {
    CHECK(s.total_multiplicity() == d);
    CHECK(!s.intervals.empty());
    CHECK(static_cast<int>(s.intervals.size()) <= d);
    for (std::size_t i = 0; i < s.intervals.size(); ++i) {
        CHECK(s.intervals[i].lo <= s.intervals[i].hi);
        CHECK(s.intervals[i].multiplicity >= 1);
        if (i > 0) CHECK(s.intervals[i].lo > s.intervals[i - 1].hi);
    }
}

} // namespace

TEST_CASE("critical parameter: one interval of multiplicity two") {
    const auto s = dichotomy_spectrum(make_example10(), 0.0, IntegratorConfig{});
    REQUIRE(s.intervals.size() == 1);
    CHECK(std::fabs(s.intervals[0].lo + 1.0) <= s.resolution);
    CHECK(std::fabs(s.intervals[0].hi - 1.0) <= s.resolution);
    CHECK(s.intervals[0].multiplicity == 2);
    check_invariants(s, 2);
    CHECK(s.contains(0.0));
}

TEST_CASE("hyperbolic parameter: two point spectra") {
    const auto s = dichotomy_spectrum(make_example10(), 0.4, IntegratorConfig{});
    REQUIRE(s.intervals.size() == 2);
    CHECK(std::fabs(s.intervals[0].lo + 1.0) <= s.resolution);
    CHECK(std::fabs(s.intervals[1].hi - 1.0) <= s.resolution);
    for (const auto& iv : s.intervals) {
        CHECK(iv.hi - iv.lo <= s.resolution);
        CHECK(iv.multiplicity == 1);
    }
    check_invariants(s, 2);
    CHECK_FALSE(s.contains(0.0));
}

TEST_CASE("autonomous saddle") {
    const auto s = dichotomy_spectrum(constant_saddle(), 0.0, IntegratorConfig{});
    REQUIRE(s.intervals.size() == 2);
    CHECK(s.intervals[0].lo == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(s.intervals[1].hi == doctest::Approx(1.0).epsilon(1e-3));
    check_invariants(s, 2);
}

TEST_CASE("shifting the equation shifts the spectrum") {
    const IntegratorConfig cfg;
    for (double lambda : {0.0, 0.4}) {
        const auto base = dichotomy_spectrum(make_example10(), lambda, cfg);
        for (double c : {-0.5, 0.5}) {
            const auto shifted = dichotomy_spectrum(linearization(make_example10(), c), lambda, cfg);
            REQUIRE(shifted.intervals.size() == base.intervals.size());
            for (std::size_t i = 0; i < base.intervals.size(); ++i) {
                CHECK(std::fabs(shifted.intervals[i].lo - (base.intervals[i].lo + c)) <= base.resolution);
                CHECK(std::fabs(shifted.intervals[i].hi - (base.intervals[i].hi + c)) <= base.resolution);
                CHECK(shifted.intervals[i].multiplicity == base.intervals[i].multiplicity);
            }
        }
    }
}

TEST_CASE("multiplicities are conserved across the critical parameter") {
    for (double lambda : {-0.3, -0.01, 0.0, 0.01, 0.3}) {
        const auto s = dichotomy_spectrum(make_example10(), lambda, IntegratorConfig{});
        CHECK(s.total_multiplicity() == 2);
        CHECK(s.intervals.size() == (lambda == 0.0 ? 1u : 2u));
    }
}

TEST_CASE("block example with different multiplicities") {
    Example9Params p;
    p.n = 2;
    p.alpha = 0.5;
    p.coupling = [](double l) { return (l * MatrixXd::Identity(2, 2)).eval(); };
    const auto m = make_example9(p);
    const auto crit = dichotomy_spectrum(m, 0.0, IntegratorConfig{});
    REQUIRE(crit.intervals.size() == 1);
    CHECK(crit.intervals[0].multiplicity == 4);
    CHECK(std::fabs(crit.intervals[0].lo + 0.5) <= crit.resolution);
    CHECK(std::fabs(crit.intervals[0].hi - 0.5) <= crit.resolution);
    const auto hyp = dichotomy_spectrum(m, 1.0, IntegratorConfig{});
    REQUIRE(hyp.intervals.size() == 2);
    CHECK(hyp.intervals[0].multiplicity == 2);
    CHECK(hyp.intervals[1].multiplicity == 2);
}

TEST_CASE("shift range handling") {
    SpectrumOptions opts;
    opts.gamma_range = std::make_pair(-0.5, 0.5);
    CHECK_THROWS_AS(dichotomy_spectrum(make_example10(), 0.0, IntegratorConfig{}, opts), SpectrumError);
    opts.gamma_range = std::make_pair(-3.0, -2.0);
    const auto widened = dichotomy_spectrum(make_example10(), 0.4, IntegratorConfig{}, opts);
    CHECK(widened.intervals.size() == 2);
    CHECK(widened.gamma_hi > 1.0);
}

TEST_CASE("coarse resolution merges close intervals") {
    SpectrumOptions opts;
    opts.resolution = 2.5;
    const auto s = dichotomy_spectrum(make_example10(), 0.4, IntegratorConfig{}, opts);
    REQUIRE(s.intervals.size() == 1);
    CHECK(s.intervals[0].merged);
    CHECK(s.intervals[0].multiplicity == 2);
}
