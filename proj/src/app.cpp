#include "cmalab/app.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "cmalab/drivers.hpp"
#include "cmalab/error.hpp"
#include "cmalab/ma_operator.hpp"
#include "cmalab/ma_solvers.hpp"
#include "cmalab/verify.hpp"

namespace cmalab {

namespace {

constexpr double kInfD = std::numeric_limits<double>::infinity();

nlohmann::json num(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return "nan";
    return x > 0 ? "inf" : "-inf";
}

std::filesystem::path out_dir(const RunConfig& cfg) {
    std::filesystem::path p(cfg.output);
    std::filesystem::create_directories(p);
    return p;
}

void write_fn_csv(const std::filesystem::path& path, const RunConfig& cfg, const RadialFn& v) {
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open " + path.string());
    os << provenance_comment(cfg);
    write_csv(os, v);
}

void write_report(const std::filesystem::path& path, const RunConfig& cfg, nlohmann::json body, std::ostream& out) {
    std::string text = config_to_text(cfg);
    body["config"] = text;
    body["config_hash"] = fnv1a_hex(text);
    body["seed"] = cfg.seed;
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open " + path.string());
    os << std::setprecision(17) << body.dump(2) << '\n';
    body.erase("config");
    out << body.dump(2) << '\n';
}

std::string plain_comment(const RunConfig& cfg) {
    std::string text = config_to_text(cfg);
    return "config_hash = " + fnv1a_hex(text) + "\n" + text;
}

EigenResult eigen_for(const RunConfig& cfg, const GridPtr& g) {
    return eigen_inverse_iteration(g, cfg.tol, cfg.max_iter);
}

int cmd_eigen(const RunConfig& cfg, std::ostream& out) {
    auto g = make_grid(cfg.n, cfg.N, cfg.clustering);
    nlohmann::json j;
    EigenResult primary;
    bool ok = true;
    if (cfg.method == "inverse" || cfg.method == "both") {
        primary = eigen_inverse_iteration(g, cfg.tol, cfg.max_iter);
    }
    if (cfg.method == "descent" || cfg.method == "both") {
        EigenResult d = eigen_rayleigh_descent(g, cfg.tol, cfg.max_iter);
        j["descent"] = {{"lambda1", d.lambda1}, {"residual", d.residual}, {"iterations", d.iterations},
                        {"converged", d.converged}, {"rounding_limited", d.rounding_limited}};
        if (cfg.method == "descent") {
            primary = d;
        } else {
            double agree = std::abs(d.lambda1 - primary.lambda1) / primary.lambda1;
            j["method_agreement"] = agree;
            ok = ok && agree <= 1e-3;
        }
    }
    double E = energy_E(primary.u1), I = energy_I(primary.u1);
    j["method"] = primary.method;
    j["lambda1"] = primary.lambda1;
    j["residual"] = primary.residual;
    j["iterations"] = primary.iterations;
    j["converged"] = primary.converged;
    j["E"] = E;
    j["I"] = I;
    j["pair_identity"] = std::abs(E - std::pow(primary.lambda1, cfg.n) * I) / E;
    j["n"] = cfg.n;
    j["N"] = cfg.N;
    ok = ok && primary.converged;
    auto dir = out_dir(cfg);
    write_fn_csv(dir / "u1.csv", cfg, primary.u1);
    write_report(dir / "report.json", cfg, j, out);
    return ok ? kExitOk : kExitCheckFailed;
}

int cmd_solve(const RunConfig& cfg, std::ostream& out) {
    auto g = make_grid(cfg.n, cfg.N, cfg.clustering);
    auto dens = density_from_config(cfg, *g);
    RadialFn v = solve_radial_ma(g, dens);
    auto m = ma_rad(v);
    double err = 0.0;
    for (int j = 0; j + 1 < g->size(); ++j) err = std::max(err, std::abs(m[j] - dens[j]) / std::max(dens[j], 1e-300));
    const double bound = 50.0 * g->h_max * g->h_max;
    nlohmann::json j{{"density", cfg.density}, {"round_trip_rel_error", err}, {"round_trip_bound", bound},
                     {"E", energy_E(v)}, {"I", energy_I(v)}, {"min_u", v.min()}};
    auto dir = out_dir(cfg);
    write_fn_csv(dir / "solution.csv", cfg, v);
    write_report(dir / "report.json", cfg, j, out);
    return err <= bound ? kExitOk : kExitCheckFailed;
}

int cmd_flow(const RunConfig& cfg, std::ostream& out) {
    FlowOutcome fo = run_flow_config(cfg);
    const FlowState& st = fo.state;
    nlohmann::json j;
    j["t"] = st.t;
    j["steps"] = st.history.size() - 1;
    j["rejected"] = st.rejected;
    j["steady"] = st.steady;
    j["lambda1"] = fo.lambda1;
    j["compatibility_residual"] = fo.compatibility;
    j["K1"] = num(fo.flow.forcing.K1);
    j["K2"] = num(fo.flow.forcing.K2);
    j["K3"] = num(fo.flow.forcing.K3);
    j["uniform_bound"] = {{"checked", fo.bound_checked}, {"margin", num(fo.bound_margin)},
                          {"max_u", fo.max_u}, {"max_boundary", fo.max_boundary}};
    j["monitors"] = {{"ut_over_M", num(fo.monitor.ut_over_M)}, {"ma_min", num(fo.monitor.ma_min)},
                     {"ma_over_Mp", num(fo.monitor.ma_over_Mp)}, {"finite", fo.monitor.finite}};
    double diss = kInfD, chain = kInfD;
    for (std::size_t k = 1; k < st.history.size(); ++k) {
        diss = std::min(diss, st.history[k].dissipation_min);
        chain = std::min(chain, st.history[k].slope_chain_min);
    }
    j["dissipation_min"] = num(diss);
    j["slope_chain_min"] = num(chain);
    j["final"] = {{"J", num(st.diag.J)}, {"sup_ut", st.diag.sup_ut}, {"u_min", st.diag.u_min}};
    j["ok"] = fo.ok();
    auto dir = out_dir(cfg);
    write_trajectory_csv((dir / "trajectory.csv").string(), st, plain_comment(cfg));
    write_fn_csv(dir / "solution.csv", cfg, st.v);
    write_report(dir / "report.json", cfg, j, out);
    return fo.ok() ? kExitOk : kExitCheckFailed;
}

int cmd_sublinear(const RunConfig& cfg, std::ostream& out) {
    auto g = make_grid(cfg.n, cfg.N, cfg.clustering);
    double lambda1 = eigen_for(cfg, g).lambda1;
    Nonlinearity nl = nonlinearity_from_config(cfg, lambda1);
    SublinearOptions opt;
    opt.m_levels = cfg.m_levels;
    opt.eps_levels = cfg.eps_levels;
    if (cfg.solver_tol > 0.0) opt.tol = cfg.solver_tol;
    opt.blend_delta = cfg.blend_delta;
    opt.steady_tol = cfg.steady_tol;
    opt.seed = static_cast<unsigned>(cfg.seed);
    SublinearReport rep = run_sublinear(nl, g, lambda1, opt);
    auto j = nlohmann::json::parse(rep.to_json());
    bool ok = rep.converged && rep.residual <= opt.tol && rep.norm >= 1e-3 && rep.J < 0.0 && rep.challenge_gap >= 0.0;
    j["ok"] = ok;
    auto dir = out_dir(cfg);
    write_fn_csv(dir / "solution.csv", cfg, rep.u);
    FlowState tr;
    tr.history = rep.trajectory;
    write_trajectory_csv((dir / "trajectory.csv").string(), tr, plain_comment(cfg));
    write_report(dir / "report.json", cfg, j, out);
    return ok ? kExitOk : kExitCheckFailed;
}

int cmd_superlinear(const RunConfig& cfg, std::ostream& out) {
    auto g = make_grid(cfg.n, cfg.N, cfg.clustering);
    double lambda1 = eigen_for(cfg, g).lambda1;
    Nonlinearity nl = nonlinearity_from_config(cfg, lambda1);
    SuperlinearOptions opt;
    opt.m_path = cfg.m_path;
    opt.seed_path = cfg.seed_path;
    opt.delta_levels = cfg.delta_levels;
    opt.a_fractions = cfg.a_fractions;
    if (cfg.solver_tol > 0.0) opt.tol = cfg.solver_tol;
    opt.blend_delta = cfg.blend_delta;
    opt.seed = static_cast<unsigned>(cfg.seed);
    SuperlinearReport rep = run_superlinear(nl, g, lambda1, opt);
    auto j = nlohmann::json::parse(rep.to_json());
    bool ok = rep.converged && rep.residual <= opt.tol && rep.c > 0.0 && rep.T0c_max < 2.0;
    j["ok"] = ok;
    auto dir = out_dir(cfg);
    write_fn_csv(dir / "solution.csv", cfg, rep.u);
    std::string comment = plain_comment(cfg);
    for (std::size_t k = 0; k < rep.stages.size(); ++k) {
        std::ostringstream name;
        name << "path_J_stage" << k << ".csv";
        write_path_csv((dir / name.str()).string(), rep.stages[k],
                       comment + "delta = " + std::to_string(rep.stages[k].delta) + "\n");
    }
    if (!rep.stages.empty()) write_path_csv((dir / "path_J.csv").string(), rep.stages.back(), comment);
    write_report(dir / "report.json", cfg, j, out);
    return ok ? kExitOk : kExitCheckFailed;
}

int cmd_verify(const RunConfig& cfg, std::ostream& out) {
    VerifyReport rep = verify_suite(cfg);
    auto j = nlohmann::json::parse(rep.to_json());
    auto dir = out_dir(cfg);
    write_report(dir / "report.json", cfg, j, out);
    return rep.all_pass() ? kExitOk : kExitCheckFailed;
}

}  // namespace

std::string provenance_comment(const RunConfig& cfg) {
    std::istringstream in(plain_comment(cfg));
    std::ostringstream os;
    std::string line;
    while (std::getline(in, line)) os << "# " << line << '\n';
    return os.str();
}

Nonlinearity read_table_nonlinearity(const std::string& path, int n) {
    std::ifstream is(path);
    if (!is) throw ConfigError("table_file: cannot open " + path);
    std::vector<std::pair<double, double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || line.rfind("x,", 0) == 0) continue;
        std::istringstream ls(line);
        double x = 0, y = 0;
        char comma = 0;
        if (!(ls >> x >> comma >> y) || comma != ',') throw ConfigError("table_file: bad row in " + path, lineno);
        if (x > 0.0 || y < 0.0 || !std::isfinite(y)) throw ConfigError("table_file: need x <= 0 and value >= 0", lineno);
        rows.emplace_back(x, y);
    }
    if (rows.size() < 2) throw ConfigError("table_file: need at least two rows");
    std::sort(rows.begin(), rows.end());
    for (std::size_t k = 1; k < rows.size(); ++k)
        if (rows[k].first == rows[k - 1].first) throw ConfigError("table_file: duplicate x value");
    if (rows.back().first != 0.0) throw ConfigError("table_file: the table must include x = 0");
    std::vector<double> xs, ys;
    for (auto& [x, y] : rows) {
        xs.push_back(x);
        ys.push_back(y);
    }
    auto seg = [xs](double x) {
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        std::size_t k = it == xs.begin() ? 0 : static_cast<std::size_t>(it - xs.begin()) - 1;
        return std::min(k, xs.size() - 2);
    };
    Nonlinearity nl;
    nl.n = n;
    nl.name = "table:" + path;
    nl.growth = GrowthClass::custom;
    nl.rhs = [xs, ys, seg](double, double x) {
        x = std::min(x, 0.0);
        std::size_t k = seg(x);
        double w = (x - xs[k]) / (xs[k + 1] - xs[k]);
        return std::max(0.0, (1.0 - w) * ys[k] + w * ys[k + 1]);
    };
    nl.rhs_dx = [xs, ys, seg](double, double x) {
        if (x > 0.0) return 0.0;
        std::size_t k = seg(x);
        return (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
    };
    return nl;
}

Nonlinearity nonlinearity_from_config(const RunConfig& cfg, double lambda1) {
    if (cfg.nonlinearity == "eigen") return make_eigen_nonlinearity(cfg.n, lambda1);
    if (cfg.nonlinearity == "sublinear") return make_sublinear_test(lambda1, cfg.n);
    if (cfg.nonlinearity == "superlinear") return make_superlinear_test(lambda1, cfg.n);
    if (cfg.nonlinearity == "table") return read_table_nonlinearity(cfg.table_file, cfg.n);
    throw ConfigError("nonlinearity: unknown name '" + cfg.nonlinearity + "'");
}

MuFunction mu_from_config(const RunConfig& cfg) {
    MuFunction mu = cfg.mu_p > 0.0 ? MuFunction::build(cfg.mu_p, cfg.mu_eps) : MuFunction::log_branch();
    if (cfg.mu_fault > 0.0) mu = mu.with_fault(cfg.mu_fault);
    return mu;
}

std::vector<double> density_from_config(const RunConfig& cfg, const RadialGrid& g) {
    std::vector<double> d(g.size());
    for (int j = 0; j < g.size(); ++j) {
        double s = g.s[j];
        if (cfg.density == "one")
            d[j] = 1.0;
        else if (cfg.density == "one_plus_s")
            d[j] = 1.0 + s;
        else if (cfg.density == "two_plus_sin3s")
            d[j] = 2.0 + std::sin(3.0 * s);
        else
            throw ConfigError("density: unknown name '" + cfg.density + "'");
    }
    return d;
}

bool FlowOutcome::ok() const {
    return max_u <= 0.0 && max_boundary == 0.0 && bound_margin >= 0.0 && ma_min > 0.0 && monitor.finite;
}

FlowOutcome run_flow_config(const RunConfig& cfg) {
    FlowOutcome fo;
    auto g = make_grid(cfg.n, cfg.N, cfg.clustering);
    EigenResult eig = eigen_for(cfg, g);
    fo.lambda1 = eig.lambda1;
    FlowConfig& fc = fo.flow;
    fc.mu = mu_from_config(cfg);
    fc.dt_init = cfg.dt;
    fc.dt_max = cfg.dt_max;
    fc.t_end = cfg.t_end;
    fc.cfl_safety = cfg.cfl_safety;
    fc.psh_floor = cfg.psh_floor;
    fc.steady_tol = cfg.steady_tol;
    if (cfg.forcing == "eigen") {
        fc.forcing = eigen_forcing(cfg.n, eig.lambda1, fc.mu, cfg.forcing_kappa);
        if (cfg.monitors) fc.energy = perturbed(make_eigen_nonlinearity(cfg.n, eig.lambda1), cfg.forcing_kappa);
    } else if (cfg.forcing == "nonlinearity") {
        Nonlinearity nl = perturbed(nonlinearity_from_config(cfg, eig.lambda1), cfg.forcing_eps);
        fc.forcing = forcing_from_nonlinearity(nl, fc.mu);
        if (nl.growth == GrowthClass::sublinear) {
            // psi_sub^n increases to (2 lambda1)^n, so f is bounded by its values at 0 and -inf
            double top = std::pow(2.0 * eig.lambda1, cfg.n) + cfg.forcing_eps;
            fc.forcing.K1 = std::max(std::abs(fc.mu(cfg.forcing_eps)), std::abs(fc.mu(top)));
            fc.forcing.K2 = 0.0;
        }
        if (cfg.monitors) fc.energy = nl;
    } else if (cfg.forcing == "constant") {
        fc.forcing = constant_forcing(cfg.forcing_constant);
    } else {
        throw ConfigError("forcing: unknown name '" + cfg.forcing + "'");
    }

    RadialFn raw = cfg.initial == "eigen" ? cfg.initial_scale * eig.u1
                                          : sample(g, [&](double s) { return cfg.initial_scale * (s - 1.0); });
    raw.values.back() = 0.0;
    fo.v0 = prepare_initial(raw, fc.forcing, fc.mu, cfg.blend_delta);
    fo.compatibility = compatibility_residual(fo.v0, fc.forcing, fc.mu);

    const double u0 = fo.v0.sup_norm(), h2 = g->h_max * g->h_max;
    fo.bound_checked = std::isfinite(uniform_lower_bound(fc, cfg.n, u0, 0.0));
    fo.bound_margin = kInfD;
    fo.ma_min = kInfD;
    fo.max_u = -kInfD;
    FlowState& st = fo.state;
    st = make_flow_state(fc, fo.v0);
    auto record = [&] {
        for (double x : st.v.values) fo.max_u = std::max(fo.max_u, x);
        fo.max_boundary = std::max(fo.max_boundary, std::abs(st.v.values.back()));
        if (fo.bound_checked)
            fo.bound_margin = std::min(fo.bound_margin, st.diag.u_min - uniform_lower_bound(fc, cfg.n, u0, st.t) + 10.0 * h2);
    };
    record();
    while (st.t < fc.t_end * (1.0 - 1e-14) && static_cast<long>(st.history.size()) <= fc.max_steps) {
        step(st, fc, fc.t_end - st.t);
        record();
        fo.ma_min = std::min(fo.ma_min, st.diag.ma_min);
        if (st.diag.sup_ut <= fc.steady_tol) {
            st.steady = true;
            break;
        }
    }
    if (st.history.size() == 1) fo.ma_min = st.diag.ma_min;
    fo.monitor = monitors(st, fc);
    return fo;
}

int run_command(const RunConfig& cfg, std::ostream& out) {
    switch (cfg.subcommand) {
        case Subcommand::eigen: return cmd_eigen(cfg, out);
        case Subcommand::solve: return cmd_solve(cfg, out);
        case Subcommand::flow: return cmd_flow(cfg, out);
        case Subcommand::sublinear: return cmd_sublinear(cfg, out);
        case Subcommand::superlinear: return cmd_superlinear(cfg, out);
        case Subcommand::verify: return cmd_verify(cfg, out);
    }
    return kExitConfig;
}

}  // namespace cmalab
