#include <charconv>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "evansbif/cli.hpp"

namespace fs = std::filesystem;
using evansbif::cli::run;

namespace {

const fs::path configs = fs::path(EVANSBIF_SOURCE_DIR) / "configs";

struct Result {
    int code;
    std::string out, err;
};

Result invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("evansbif_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> row;
        std::istringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) row.push_back(cell);
        rows.push_back(row);
    }
    return rows;
}

std::string write_config(const std::string& name, const std::string& text) {
    const auto p = fs::temp_directory_path() / name;
    std::ofstream(p, std::ios::binary) << text;
    return p.string();
}

} // namespace

TEST_CASE("number formatting round-trips") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
        const auto s = evansbif::cli::format_number(v);
        double back = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        CHECK(back == v);
    }
    CHECK(evansbif::cli::format_number(0.5) == "0.5");
    CHECK(evansbif::cli::format_number(-2.0) == "-2");
}

TEST_CASE("spectrum command") {
    const auto dir = fresh_dir("spectrum");
    const auto r = invoke({"spectrum", (configs / "example10.toml").string(), "--lambda", "0", "--lambda", "0.4",
                           "--out", dir.string()});
    REQUIRE(r.code == 0);
    const auto rows = read_csv(dir / "spectrum.csv");
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == std::vector<std::string>{"lambda", "interval_lo", "interval_hi", "multiplicity"});
    CHECK(rows[1][0] == "0");
    CHECK(std::stod(rows[1][1]) == doctest::Approx(-1.0).epsilon(1e-2));
    CHECK(std::stod(rows[1][2]) == doctest::Approx(1.0).epsilon(1e-2));
    CHECK(rows[1][3] == "2");
    CHECK(rows[2][3] == "1");
    CHECK(rows[3][3] == "1");
    CHECK(fs::exists(dir / "spectrum.json"));
    CHECK(fs::exists(dir / "manifest.json"));

    const auto empty = fresh_dir("spectrum_empty");
    REQUIRE(invoke({"spectrum", (configs / "example10.toml").string(), "--out", empty.string(), "--format", "csv"})
                .code == 0);
    CHECK(slurp(empty / "spectrum.csv") == "lambda,interval_lo,interval_hi,multiplicity\n");
    CHECK_FALSE(fs::exists(empty / "spectrum.json"));
}

TEST_CASE("evans command: sign patterns") {
    const auto dir = fresh_dir("evans");
    REQUIRE(invoke({"evans", (configs / "example10.toml").string(), "--interval", "-0.5", "0.5", "--grid", "101",
                    "--out", dir.string()})
                .code == 0);
    const auto rows = read_csv(dir / "evans.csv");
    REQUIRE(rows.size() == 102);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double l = std::stod(rows[i][0]), e = std::stod(rows[i][1]);
        if (i < 51) CHECK(e < 0.0);
        if (i > 51) CHECK(e > 0.0);
        if (i == 51) CHECK(std::fabs(e) <= 1e-8);
        CHECK(rows[i][2] == "1");
        CHECK(rows[i][3] == "1");
        (void)l;
    }
    const auto script = slurp(dir / "evans.gp");
    CHECK(script.find("'evans.csv'") != std::string::npos);

    const auto sq = fresh_dir("evans_sq");
    REQUIRE(invoke({"evans", (configs / "example9_square.toml").string(), "--interval", "-0.5", "0.5", "--out",
                    sq.string(), "--format", "csv"})
                .code == 0);
    int zeros = 0;
    const auto sq_rows = read_csv(sq / "evans.csv");
    for (std::size_t i = 1; i < sq_rows.size(); ++i) {
        const double e = std::stod(sq_rows[i][1]);
        CHECK(e >= -1e-12);
        zeros += std::fabs(e) <= 1e-8;
    }
    CHECK(zeros == 1);

    const auto hyp = fresh_dir("evans_saddle");
    REQUIRE(invoke({"evans", (configs / "saddle.toml").string(), "--interval", "-0.5", "0.5", "--grid", "11", "--out",
                    hyp.string()})
                .code == 0);
    const auto h_rows = read_csv(hyp / "evans.csv");
    for (std::size_t i = 2; i < h_rows.size(); ++i)
        CHECK((std::stod(h_rows[i][1]) > 0) == (std::stod(h_rows[1][1]) > 0));
}

TEST_CASE("bifurcate and parity commands") {
    const auto dir = fresh_dir("bif");
    const auto r = invoke({"bifurcate", (configs / "example10.toml").string(), "--interval", "-0.5", "0.5", "--out",
                           dir.string()});
    REQUIRE(r.code == 0);
    const auto j = slurp(dir / "bifurcations.json");
    CHECK(j.find("\"sign_change\"") != std::string::npos);
    CHECK(j.find("\"parity\": -1") != std::string::npos);

    const auto hyp = fresh_dir("bif_saddle");
    REQUIRE(invoke({"bifurcate", (configs / "saddle.toml").string(), "--interval", "-0.5", "0.5", "--grid", "11",
                    "--out", hyp.string()})
                .code == 0);
    const auto hj = slurp(hyp / "bifurcations.json");
    CHECK(hj.find("\"bifurcations\": []") != std::string::npos);
    CHECK(hj.find("\"parity\": 1") != std::string::npos);

    const auto par = fresh_dir("parity");
    const auto p = invoke({"parity", (configs / "example10.toml").string(), "--interval", "0.1", "0.5", "--grid", "9",
                           "--out", par.string()});
    REQUIRE(p.code == 0);
    CHECK(p.out.find("parity 1 ") != std::string::npos);
}

TEST_CASE("branch command") {
    const auto dir = fresh_dir("branch");
    REQUIRE(invoke({"branch", (configs / "example10.toml").string(), "--lambda-star", "0", "--direction", "+",
                    "--stop", "0.5", "--out", dir.string()})
                .code == 0);
    const auto rows = read_csv(dir / "branch.csv");
    REQUIRE(rows.size() >= 3);
    CHECK(std::stod(rows.back()[0]) == 0.5);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const double l = std::stod(rows[i][0]), amp = std::stod(rows[i][1]);
        CHECK(std::fabs(amp / (2.0 * std::sqrt(2.0) * l) - 1.0) <= 0.05);
        CHECK(std::stod(rows[i][2]) <= 1e-9);
    }
    const auto none = fresh_dir("branch_none");
    REQUIRE(invoke({"branch", (configs / "example10.toml").string(), "--lambda-star", "0", "--stop", "0", "--out",
                    none.string()})
                .code == 0);
    CHECK(slurp(none / "branch.csv") == "lambda,amplitude,residual\n");
}

TEST_CASE("exit codes") {
    const auto dir = fresh_dir("codes").string();
    CHECK(invoke({"evans", "/no/such/file.toml", "--interval", "0", "1", "--out", dir}).code == 1);
    CHECK(invoke({"evans", (configs / "example10.toml").string(), "--out", dir}).code == 1);
    CHECK(invoke({"frobnicate"}).code == 1);
    CHECK(invoke({"--help"}).code == 0);
    const auto bad = write_config("evansbif_bad.toml", "[model]\nkind = \"custom\"\nrhs = [\"-x1 +\"]\n");
    const auto r = invoke({"evans", bad, "--interval", "0", "1", "--out", dir});
    CHECK(r.code == 1);
    CHECK(r.err.find("offset") != std::string::npos);

    const auto bump = write_config("evansbif_bump.toml", "[model]\nkind = \"custom\"\nrhs = [\"-tanh(t)*x1\"]\n");
    CHECK(invoke({"evans", bump, "--interval", "0", "1", "--grid", "5", "--out", dir}).code == 3);

    CHECK(invoke({"bifurcate", (configs / "example10.toml").string(), "--interval", "0", "0.5", "--out", dir}).code ==
          4);
    CHECK(invoke({"branch", (configs / "saddle.toml").string(), "--lambda-star", "0", "--stop", "0.2", "--out", dir})
              .code == 5);
}

TEST_CASE("outputs are deterministic") {
    const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
    for (const auto& d : {a, b}) {
        REQUIRE(invoke({"evans", (configs / "example9_linear.toml").string(), "--interval", "-0.5", "0.5", "--grid",
                        "21", "--jobs", "2", "--out", d.string()})
                    .code == 0);
    }
    CHECK(slurp(a / "evans.csv") == slurp(b / "evans.csv"));
    CHECK(slurp(a / "evans.json") == slurp(b / "evans.json"));
}
