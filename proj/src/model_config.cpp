#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>
#include <random>
#include <set>

#include "evansbif/config.hpp"
#include "evansbif/errors.hpp"
#include "evansbif/expr.hpp"
#include "evansbif/model.hpp"

namespace evansbif {

namespace {

using expr::Expression;

std::vector<Expression> compile(const std::vector<std::string>& sources, const std::string& key,
                                const std::set<std::string>& allowed) {
    std::vector<Expression> out;
    out.reserve(sources.size());
    for (std::size_t i = 0; i < sources.size(); ++i) {
        try {
            out.push_back(Expression::parse(sources[i]));
        } catch (const expr::ParseError& e) {
            throw ConfigError(key + "[" + std::to_string(i) + "]: " + e.what());
        }
        for (const auto& v : out.back().free_variables())
            if (!allowed.count(v))
                throw ConfigError(key + "[" + std::to_string(i) + "]: variable '" + v + "' is not allowed here");
    }
    return out;
}

std::set<std::string> state_variables(int d, bool with_time) {
    std::set<std::string> vars{"lambda"};
    if (with_time) vars.insert("t");
    for (int i = 1; i <= d; ++i) vars.insert("x" + std::to_string(i));
    return vars;
}

VectorXd eval_vector(const std::vector<Expression>& exprs, double t, double lambda, const VectorXd& x) {
    VectorXd out(static_cast<Eigen::Index>(exprs.size()));
    const std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (std::size_t i = 0; i < exprs.size(); ++i) out(static_cast<Eigen::Index>(i)) = exprs[i].evaluate(t, lambda, xs);
    return out;
}

ParamDomain read_domain(const config::Document& doc, ParamDomain fallback) {
    if (!doc.contains("model.param_domain")) return fallback;
    const auto v = doc.numbers("model.param_domain");
    if (v.size() != 2 || !(v[0] <= v[1])) throw ConfigError("model.param_domain must be [a, b] with a <= b");
    return {v[0], v[1]};
}

int read_positive_int(const config::Document& doc, const std::string& key) {
    const double v = doc.number(key);
    if (v < 1 || std::floor(v) != v) throw ConfigError(key + " must be a positive integer");
    return static_cast<int>(v);
}

ModelSpec with_domain(ModelSpec m, const config::Document& doc) {
    if (!doc.contains("model.param_domain")) return m;
    // Builtins are rebuilt with the configured domain.
    ModelParts parts;
    parts.name = m.name();
    parts.dimension = m.dimension();
    parts.rhs = [m](double t, const VectorXd& x, double l) { return m.rhs(t, x, l); };
    parts.jacobian = [m](double t, const VectorXd& x, double l) { return m.jacobian(t, x, l); };
    parts.jacobian_source = m.jacobian_source();
    parts.branch = [m](double l, double t) { return m.branch(l, t); };
    parts.breakpoints = m.breakpoints();
    parts.param_domain = read_domain(doc, m.param_domain());
    parts.provenance = m.provenance();
    return ModelSpec(std::move(parts));
}

ModelSpec load_example9(const config::Document& doc) {
    Example9Params p;
    p.n = doc.contains("model.n") ? read_positive_int(doc, "model.n") : 1;
    p.alpha = doc.number_or("model.alpha", 1.0);
    const int n = p.n;
    if (!doc.contains("model.C")) throw ConfigError("example9 requires model.C (n*n expressions in lambda)");
    const auto c_src = doc.strings("model.C");
    if (c_src.size() != static_cast<std::size_t>(n * n))
        throw ConfigError("model.C must have n*n = " + std::to_string(n * n) + " entries");
    auto c_exprs = std::make_shared<const std::vector<Expression>>(compile(c_src, "model.C", {"lambda"}));
    p.coupling = [c_exprs, n](double lambda) {
        MatrixXd c(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) c(i, j) = (*c_exprs)[static_cast<std::size_t>(i * n + j)].evaluate(0.0, lambda, {});
        return c;
    };
    std::string desc;
    for (const auto& s : c_src) desc += (desc.empty() ? "" : "; ") + s;
    p.coupling_description = desc;
    if (doc.contains("model.F")) {
        const auto f_src = doc.strings("model.F");
        if (f_src.size() != static_cast<std::size_t>(2 * n)) throw ConfigError("model.F must have 2n entries");
        auto f_exprs = std::make_shared<const std::vector<Expression>>(compile(f_src, "model.F", state_variables(2 * n, true)));
        p.nonlinearity = [f_exprs](double t, const VectorXd& x, double lambda) { return eval_vector(*f_exprs, t, lambda, x); };
    }
    return with_domain(make_example9(std::move(p)), doc);
}

ModelSpec load_custom(const config::Document& doc) {
    const auto rhs_src = doc.strings("model.rhs");
    int d = static_cast<int>(rhs_src.size());
    if (doc.contains("model.dimension")) {
        d = read_positive_int(doc, "model.dimension");
        if (static_cast<std::size_t>(d) != rhs_src.size())
            throw ConfigError("model.dimension = " + std::to_string(d) + " but model.rhs has " +
                              std::to_string(rhs_src.size()) + " expressions");
    }
    if (d == 0) throw ConfigError("model.rhs is empty");

    ModelParts parts;
    parts.name = doc.contains("model.name") ? doc.string("model.name") : "custom";
    parts.dimension = d;
    parts.provenance["kind"] = "custom";
    auto rhs = std::make_shared<const std::vector<Expression>>(compile(rhs_src, "model.rhs", state_variables(d, true)));
    parts.rhs = [rhs](double t, const VectorXd& x, double lambda) { return eval_vector(*rhs, t, lambda, x); };

    if (doc.contains("model.jacobian")) {
        const auto jac_src = doc.strings("model.jacobian");
        if (jac_src.size() != static_cast<std::size_t>(d * d))
            throw ConfigError("model.jacobian must have d*d = " + std::to_string(d * d) + " entries");
        auto jac = std::make_shared<const std::vector<Expression>>(compile(jac_src, "model.jacobian", state_variables(d, true)));
        parts.jacobian = [jac, d](double t, const VectorXd& x, double lambda) {
            const VectorXd flat = eval_vector(*jac, t, lambda, x);
            MatrixXd j(d, d);
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) j(r, c) = flat(r * d + c);
            return j;
        };
        parts.jacobian_source = JacobianSource::Expression;
        parts.provenance["jacobian"] = "expression";
    }

    if (doc.contains("model.branch")) {
        const auto br_src = doc.strings("model.branch");
        if (br_src.size() != static_cast<std::size_t>(d)) throw ConfigError("model.branch must have d entries");
        auto br = std::make_shared<const std::vector<Expression>>(compile(br_src, "model.branch", {"t", "lambda"}));
        parts.branch = [br](double lambda, double t) { return eval_vector(*br, t, lambda, VectorXd()); };
        parts.provenance["branch"] = "expression";
    }

    if (doc.contains("model.breakpoints")) parts.breakpoints = doc.numbers("model.breakpoints");
    parts.param_domain = read_domain(doc, ParamDomain{});
    const bool has_branch = static_cast<bool>(parts.branch);
    ModelSpec m(std::move(parts));

    // Sampled validation of the declared invariants.
    const auto& dom = m.param_domain();
    const double lam_lo = std::isfinite(dom.lo) ? dom.lo : -1.0;
    const double lam_hi = std::isfinite(dom.hi) ? dom.hi : 1.0;
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> ut(-5.0, 5.0), ul(lam_lo, lam_hi), ux(-0.5, 0.5);
    for (int s = 0; s < 20; ++s) {
        const double t = ut(rng), lambda = ul(rng);
        VectorXd x = m.branch(lambda, t);
        for (int i = 0; i < d; ++i) x(i) += ux(rng);
        if (!has_branch) {
            const double f0 = m.rhs(t, VectorXd::Zero(d), lambda).norm();
            if (f0 > 1e-10)
                throw ConfigError("model.branch omitted but x = 0 is not a solution (|f(t,0,lambda)| = " +
                                  std::to_string(f0) + ")");
        }
        if (m.jacobian_source() == JacobianSource::Expression) {
            const MatrixXd a = m.jacobian(t, x, lambda);
            const MatrixXd b = m.finite_difference_jacobian(t, x, lambda);
            if ((a - b).norm() > 1e-5 * std::max(1.0, a.norm()))
                throw ConfigError("model.jacobian disagrees with finite differences of model.rhs");
        }
    }
    if (has_branch) {
        for (double lambda : {lam_lo, 0.5 * (lam_lo + lam_hi), lam_hi}) {
            for (double tau : {-4.0, -0.5, 1.0}) {
                const double r = branch_residual(m, lambda, tau, tau + 1.5);
                if (r > 1e-8 * 1.5)
                    throw ConfigError("model.branch does not solve the equation (integral residual " + std::to_string(r) + ")");
            }
        }
    }
    return m;
}

} // namespace

ModelSpec load_model(std::string_view config_text) {
    const config::Document doc = config::Document::parse(config_text);
    const std::string kind = doc.string("model.kind");
    if (kind == "example10") return with_domain(make_example10(), doc);
    if (kind == "proto") return with_domain(make_proto(doc.number_or("model.nu", 0.0), doc.number_or("model.mu", 0.0)), doc);
    if (kind == "example9") return load_example9(doc);
    if (kind == "custom") return load_custom(doc);
    throw ConfigError("unknown model.kind '" + kind + "'");
}

ModelSpec load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_model(text);
}

} // namespace evansbif
