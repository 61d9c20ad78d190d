#include "evansbif/cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "evansbif/errors.hpp"
#include "evansbif/evans.hpp"
#include "evansbif/expr.hpp"
#include "evansbif/homoclinic.hpp"
#include "evansbif/parallel.hpp"
#include "evansbif/spectrum.hpp"

namespace evansbif::cli {

using json = nlohmann::ordered_json;

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

namespace {

struct Options {
    std::string config;
    double horizon = 0.0;
    int grid = 101;
    double resolution = 1e-3;
    double tol = 1e-10;
    std::string out = ".";
    std::string format = "both";
    int jobs = 1;

    // spectrum
    std::vector<double> lambdas;
    std::vector<double> range;
    int count = 0;
    std::vector<double> gamma_range;
    // evans, parity, bifurcate
    std::vector<double> interval;
    std::vector<double> index_points;
    std::vector<double> split_points;
    // branch
    double lambda_star = 0.0;
    std::string direction = "+";
    double stop = 0.0;
    double step = 0.05;
    double bvp_tol = 1e-9;
};

class Run {
public:
    Run(std::string command, const Options& o, std::ostream& out, std::ostream& err)
        : command_(std::move(command)), o_(o), out_(out), err_(err) {
        start_ = std::chrono::steady_clock::now();
        std::filesystem::create_directories(o.out);
        cfg_.rel_tol = o.tol;
        cfg_.abs_tol = o.tol * 1e-2;
        cfg_.validate();
        eopts_.jobs = o.jobs;
    }

    bool csv() const { return o_.format == "csv" || o_.format == "both"; }
    bool want_json() const { return o_.format == "json" || o_.format == "both"; }

    void write(const std::string& name, const std::string& content) {
        const auto path = std::filesystem::path(o_.out) / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) throw ConfigError("cannot write '" + path.string() + "'");
        f << content;
        if (!f) throw ConfigError("write failed for '" + path.string() + "'");
        outputs_.push_back(path.string());
        out_ << "wrote " << path.string() << '\n';
    }

    const IntegratorConfig& cfg() const { return cfg_; }
    const DichotomyOptions& dopts() const { return dopts_; }
    const EvansOptions& eopts() const { return eopts_; }
    json& extra() { return extra_; }
    std::ostream& warn() { return err_ << "warning: "; }

    void finish() {
        json m;
        m["command"] = command_;
        m["config"] = o_.config;
        m["toolkit_version"] = toolkit_version;
        m["flags"] = {{"horizon", o_.horizon}, {"grid", o_.grid},   {"resolution", o_.resolution},
                      {"tol", o_.tol},         {"out", o_.out},     {"format", o_.format},
                      {"jobs", o_.jobs}};
        m["integrator"] = {{"rel_tol", cfg_.rel_tol},
                           {"abs_tol", cfg_.abs_tol},
                           {"max_step", std::isfinite(cfg_.max_step) ? json(cfg_.max_step) : json("inf")},
                           {"reorth_interval", cfg_.reorth_interval},
                           {"max_steps", cfg_.max_steps}};
        m["dichotomy"] = {{"gap_threshold", dopts_.gap_threshold},     {"frame_tol", dopts_.frame_tol},
                          {"initial_horizon", dopts_.initial_horizon}, {"max_horizon", dopts_.max_horizon},
                          {"transversality_tol", dopts_.transversality_tol}, {"seed", dopts_.seed}};
        for (auto& [k, v] : extra_.items()) m[k] = v;
        m["outputs"] = outputs_;
        m["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const auto path = std::filesystem::path(o_.out) / "manifest.json";
        std::ofstream f(path, std::ios::binary);
        if (!f) throw ConfigError("cannot write '" + path.string() + "'");
        f << m.dump(2) << '\n';
        out_ << "wrote " << path.string() << '\n';
    }

private:
    std::string command_;
    const Options& o_;
    std::ostream& out_;
    std::ostream& err_;
    IntegratorConfig cfg_;
    DichotomyOptions dopts_;
    EvansOptions eopts_;
    json extra_ = json::object();
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
};

json evans_options_json(const EvansOptions& e) {
    return {{"zero_rel_tol", e.zero_rel_tol},       {"zero_loc_tol", e.zero_loc_tol},
            {"angle_zero_tol", e.angle_zero_tol},   {"angle_step_tol", e.angle_step_tol},
            {"lip_factor", e.lip_factor}};
}

json matrix_json(const MatrixXd& a) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
        rows.push_back(row);
    }
    return rows;
}

std::pair<double, double> read_interval(const Options& o) {
    if (o.interval.size() != 2 || !(o.interval[0] < o.interval[1]))
        throw ConfigError("--interval needs two values a < b");
    if (o.grid < 2) throw ConfigError("--grid must be at least 2");
    return {o.interval[0], o.interval[1]};
}

EvansCurve curve_for(const ModelSpec& m, const Options& o, Run& run) {
    const auto [a, b] = read_interval(o);
    auto curve = evans_curve(m, a, b, o.grid, o.horizon, run.cfg(), run.dopts(), run.eopts());
    run.extra()["evans"] = evans_options_json(run.eopts());
    run.extra()["evans"]["interval"] = {a, b};
    run.extra()["evans"]["grid_n"] = o.grid;
    run.extra()["evans"]["horizon"] = curve.horizon;
    run.extra()["evans"]["zero_tol"] = curve.zero_tol;
    if (!curve.rough_steps.empty())
        run.warn() << curve.rough_steps.size() << " grid steps change E faster than lip_factor allows; "
                  << "consider a finer grid\n";
    return curve;
}

int cmd_spectrum(const Options& o, std::ostream& out, std::ostream& err) {
    const ModelSpec m = load_model_file(o.config);
    Run run("spectrum", o, out, err);
    std::vector<double> lambdas = o.lambdas;
    if (!o.range.empty()) {
        if (o.range.size() != 2 || o.count < 1) throw ConfigError("--range a b needs --count n >= 1");
        for (int i = 0; i < o.count; ++i)
            lambdas.push_back(o.count == 1 ? o.range[0] : o.range[0] + (o.range[1] - o.range[0]) * i / (o.count - 1));
    }
    SpectrumOptions so;
    so.resolution = o.resolution;
    if (o.horizon > 0.0) so.horizon = o.horizon;
    if (!o.gamma_range.empty()) {
        if (o.gamma_range.size() != 2) throw ConfigError("--gamma-range needs two values");
        so.gamma_range = std::pair{o.gamma_range[0], o.gamma_range[1]};
    }
    std::vector<SpectralIntervalSet> sets(lambdas.size());
    parallel_for(lambdas.size(), o.jobs,
                 [&](std::size_t i) { sets[i] = dichotomy_spectrum(m, lambdas[i], run.cfg(), so, run.dopts()); });

    if (run.csv()) {
        std::ostringstream csv;
        csv << "lambda,interval_lo,interval_hi,multiplicity\n";
        for (const auto& s : sets)
            for (const auto& iv : s.intervals)
                csv << format_number(s.lambda) << ',' << format_number(iv.lo) << ',' << format_number(iv.hi) << ','
                    << iv.multiplicity << '\n';
        run.write("spectrum.csv", csv.str());
    }
    if (run.want_json()) {
        json j;
        j["model"] = m.name();
        j["spectra"] = json::array();
        for (const auto& s : sets) {
            json e{{"lambda", s.lambda},   {"resolution", s.resolution}, {"gamma_range", {s.gamma_lo, s.gamma_hi}},
                   {"horizon", s.horizon}, {"intervals", json::array()}};
            for (const auto& iv : s.intervals)
                e["intervals"].push_back(
                    {{"lo", iv.lo}, {"hi", iv.hi}, {"multiplicity", iv.multiplicity}, {"merged", iv.merged}});
            j["spectra"].push_back(e);
        }
        run.write("spectrum.json", j.dump(2) + "\n");
    }
    json horizons = json::array();
    for (const auto& s : sets) horizons.push_back(s.horizon);
    run.extra()["spectrum"] = {{"lambdas", lambdas}, {"resolution", so.resolution}, {"probe_step", so.probe_step},
                               {"horizons", horizons}};
    run.finish();
    return Ok;
}

int cmd_evans(const Options& o, std::ostream& out, std::ostream& err) {
    const ModelSpec m = load_model_file(o.config);
    Run run("evans", o, out, err);
    const auto curve = curve_for(m, o, run);
    if (run.csv()) {
        std::ostringstream csv;
        csv << "lambda,E,m_plus,m_minus\n";
        for (std::size_t i = 0; i < curve.grid.size(); ++i)
            csv << format_number(curve.grid[i]) << ',' << format_number(curve.values[i]) << ',' << curve.morse_plus
                << ',' << curve.morse_minus << '\n';
        run.write("evans.csv", csv.str());
        run.write("evans.gp", "set datafile separator ','\n"
                              "set key autotitle columnhead\n"
                              "set xlabel 'lambda'\n"
                              "set ylabel 'E(lambda)'\n"
                              "set grid\n"
                              "set xzeroaxis\n"
                              "plot 'evans.csv' using 1:2 with linespoints\n");
    }
    if (run.want_json()) {
        json j{{"model", m.name()},
               {"horizon", curve.horizon},
               {"morse_plus", curve.morse_plus},
               {"morse_minus", curve.morse_minus},
               {"zero_tol", curve.zero_tol},
               {"rough_steps", curve.rough_steps},
               {"points", json::array()}};
        for (std::size_t i = 0; i < curve.grid.size(); ++i)
            j["points"].push_back({{"lambda", curve.grid[i]},
                                   {"E", curve.values[i]},
                                   {"plus_frame", matrix_json(curve.plus_frames[i].columns())},
                                   {"minus_frame", matrix_json(curve.minus_frames[i].columns())}});
        run.write("evans.json", j.dump(2) + "\n");
    }
    run.finish();
    return Ok;
}

json parity_json(const ParityResult& p) {
    return {{"a", p.a},
            {"b", p.b},
            {"value", p.value},
            {"E_a", p.evans_a},
            {"E_b", p.evans_b},
            {"kind", p.kind == ParityResult::Kind::Interval ? "interval" : "index_at_point"}};
}

int cmd_parity(const Options& o, std::ostream& out, std::ostream& err) {
    const ModelSpec m = load_model_file(o.config);
    Run run("parity", o, out, err);
    const auto curve = curve_for(m, o, run);
    const auto whole = parity(curve);
    json j{{"model", m.name()}, {"parity", parity_json(whole)}, {"splits", json::array()}, {"indices", json::array()}};
    for (double c : o.split_points) {
        const auto left = parity(curve, curve.grid.front(), c);
        const auto right = parity(curve, c, curve.grid.back());
        j["splits"].push_back({{"c", c},
                               {"left", left.value},
                               {"right", right.value},
                               {"multiplicative", left.value * right.value == whole.value}});
    }
    for (double l : o.index_points) j["indices"].push_back(parity_json(parity_index(curve, l)));
    run.write("parity.json", j.dump(2) + "\n");
    out << "parity " << whole.value << " on [" << format_number(whole.a) << ", " << format_number(whole.b) << "]\n";
    run.finish();
    return Ok;
}

int cmd_bifurcate(const Options& o, std::ostream& out, std::ostream& err) {
    const ModelSpec m = load_model_file(o.config);
    Run run("bifurcate", o, out, err);
    const auto curve = curve_for(m, o, run);
    const auto whole = parity(curve);
    const auto scan = detect_bifurcation_values(curve);
    std::vector<CriticalValue> all = scan.bifurcations;
    all.insert(all.end(), scan.inconclusive.begin(), scan.inconclusive.end());
    std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.lambda < y.lambda; });
    json j{{"model", m.name()}, {"interval", {whole.a, whole.b}}, {"parity", whole.value}, {"bifurcations", json::array()}};
    for (const auto& c : all) {
        j["bifurcations"].push_back({{"lambda", c.lambda},
                                     {"parity_index", c.parity_index == 0 ? json(nullptr) : json(c.parity_index)},
                                     {"kind", c.kind == CriticalValue::Kind::SignChange ? "sign_change"
                                                                                        : "inconclusive_zero"},
                                     {"isolated", c.isolated}});
        out << (c.kind == CriticalValue::Kind::SignChange ? "bifurcation" : "inconclusive zero") << " at lambda = "
            << format_number(c.lambda) << '\n';
    }
    run.write("bifurcations.json", j.dump(2) + "\n");
    run.finish();
    return Ok;
}

json solution_json(const HomoclinicSolution& s) {
    json y = json::array();
    for (const auto& v : s.y) {
        json row = json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(v(i));
        y.push_back(row);
    }
    return {{"lambda", s.lambda},
            {"horizon", s.horizon},
            {"residual", s.residual},
            {"amplitude", s.amplitude},
            {"boundary_angle", s.boundary_angle},
            {"newton_iterations", s.newton_iterations},
            {"t", s.grid},
            {"y", y}};
}

int cmd_branch(const Options& o, std::ostream& out, std::ostream& err) {
    const ModelSpec m = load_model_file(o.config);
    if (o.direction != "+" && o.direction != "-") throw ConfigError("--direction must be + or -");
    if (!(o.step > 0.0)) throw ConfigError("--step must be positive");
    const double dir = o.direction == "+" ? 1.0 : -1.0;
    Run run("branch", o, out, err);
    HomoclinicOptions hopts;
    hopts.bvp_tol = o.bvp_tol;
    const double horizon = o.horizon > 0.0 ? o.horizon : 12.0;
    std::vector<HomoclinicSolution> branch;
    bool truncated = false;
    if (dir * (o.stop - o.lambda_star) > 0.0) {
        const double first = dir * (o.stop - o.lambda_star) < o.step ? o.stop : o.lambda_star + dir * o.step;
        branch.push_back(seed_homoclinic(m, first, horizon, run.cfg(), hopts));
        try {
            auto rest = trace_branch(m, o.stop, o.step, branch.front(), run.cfg(), hopts);
            branch.insert(branch.end(), rest.begin(), rest.end());
        } catch (const BranchStall& e) {
            branch.insert(branch.end(), e.partial().begin(), e.partial().end());
            truncated = true;
            run.warn() << e.what() << "; branch truncated\n";
        }
    } else if (o.stop != o.lambda_star) {
        throw ConfigError("--stop lies on the wrong side of --lambda-star for --direction " + o.direction);
    }
    if (run.csv()) {
        std::ostringstream csv;
        csv << "lambda,amplitude,residual\n";
        for (const auto& s : branch)
            csv << format_number(s.lambda) << ',' << format_number(s.amplitude) << ',' << format_number(s.residual)
                << '\n';
        run.write("branch.csv", csv.str());
    }
    if (run.want_json()) {
        json j{{"model", m.name()}, {"lambda_star", o.lambda_star}, {"direction", o.direction},
               {"truncated", truncated}, {"solutions", json::array()}};
        for (const auto& s : branch) j["solutions"].push_back(solution_json(s));
        run.write("branch_solutions.json", j.dump(2) + "\n");
    }
    run.extra()["homoclinic"] = {{"horizon", horizon},           {"segments", hopts.segments},
                                 {"bvp_tol", hopts.bvp_tol},     {"max_newton_iters", hopts.max_newton_iters},
                                 {"nontrivial_floor", hopts.nontrivial_floor}, {"sample_step", hopts.sample_step},
                                 {"step", o.step},               {"stop", o.stop},
                                 {"truncated", truncated}};
    run.finish();
    return Ok;
}

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("config", o.config, "model configuration file")->required();
    sub->add_option("--horizon", o.horizon, "truncation horizon T (0: automatic)")->capture_default_str();
    sub->add_option("--tol", o.tol, "integrator relative tolerance (absolute: tol/100)")->capture_default_str();
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--format", o.format, "csv, json or both")
        ->check(CLI::IsMember({"csv", "json", "both"}))
        ->capture_default_str();
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

void add_interval(CLI::App* sub, Options& o) {
    sub->add_option("--interval", o.interval, "parameter interval a b")->expected(2)->required();
    sub->add_option("--grid", o.grid, "number of grid points")->capture_default_str();
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bifurcation analysis of bounded entire solutions via dichotomies and Evans functions", "evansbif"};
    app.require_subcommand(1);
    app.set_version_flag("--version", toolkit_version);
    Options o;

    auto* spectrum = app.add_subcommand("spectrum", "dichotomy spectrum at parameter values");
    add_common(spectrum, o);
    spectrum->add_option("--lambda", o.lambdas, "parameter values");
    spectrum->add_option("--range", o.range, "parameter range a b (with --count)")->expected(2);
    spectrum->add_option("--count", o.count, "number of values in --range");
    spectrum->add_option("--resolution", o.resolution, "interval endpoint resolution")->capture_default_str();
    spectrum->add_option("--gamma-range", o.gamma_range, "shift range to scan")->expected(2);

    auto* evans = app.add_subcommand("evans", "Evans function on a parameter grid");
    add_common(evans, o);
    add_interval(evans, o);

    auto* par = app.add_subcommand("parity", "parity of the operator path");
    add_common(par, o);
    add_interval(par, o);
    par->add_option("--split", o.split_points, "grid points c checked for multiplicativity");
    par->add_option("--index", o.index_points, "parameter values for the parity index");

    auto* bif = app.add_subcommand("bifurcate", "detect bifurcation values");
    add_common(bif, o);
    add_interval(bif, o);

    auto* branch = app.add_subcommand("branch", "continue a homoclinic branch from a bifurcation value");
    add_common(branch, o);
    branch->add_option("--lambda-star", o.lambda_star, "bifurcation value")->required();
    branch->add_option("--direction", o.direction, "+ or -")->capture_default_str();
    branch->add_option("--stop", o.stop, "last parameter value")->required();
    branch->add_option("--step", o.step, "continuation step")->capture_default_str();
    branch->add_option("--bvp-tol", o.bvp_tol, "shooting defect tolerance")->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? Ok : ConfigFailure;
    }

    try {
        if (*spectrum) return cmd_spectrum(o, out, err);
        if (*evans) return cmd_evans(o, out, err);
        if (*par) return cmd_parity(o, out, err);
        if (*bif) return cmd_bifurcate(o, out, err);
        if (*branch) return cmd_branch(o, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return ConfigFailure;
    } catch (const expr::ParseError& e) {
        err << "config error: " << e.what() << '\n';
        return ConfigFailure;
    } catch (const EvansError& e) {
        err << "error: " << e.what() << '\n';
        if (e.kind() == EvansError::Kind::MorseMismatch) return MorseMismatch;
        if (e.kind() == EvansError::Kind::EndpointCritical) return EndpointCritical;
        return NumericalFailure;
    } catch (const HomoclinicError& e) {
        err << "error: " << e.what() << '\n';
        return e.kind() == HomoclinicError::Kind::Seeding ? SeedingFailure : NumericalFailure;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return NumericalFailure;
    } catch (const std::invalid_argument& e) {
        err << "invalid argument: " << e.what() << '\n';
        return ConfigFailure;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return ConfigFailure;
    }
    return ConfigFailure;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, out, err);
}

} // namespace evansbif::cli
