#include "cmalab/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "cmalab/error.hpp"

namespace cmalab {

std::string to_string(Subcommand s) {
    switch (s) {
        case Subcommand::eigen: return "eigen";
        case Subcommand::solve: return "solve";
        case Subcommand::flow: return "flow";
        case Subcommand::sublinear: return "sublinear";
        case Subcommand::superlinear: return "superlinear";
        case Subcommand::verify: return "verify";
    }
    return "verify";
}

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v, int line) {
    if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'", line);
    }
}

long to_long(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'", line);
    }
}

bool to_bool(const std::string& key, const std::string& v, int line) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'", line);
}

std::vector<double> to_list(const std::string& key, const std::string& v, int line) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError(key + ": empty list item", line);
        out.push_back(to_double(key, item, line));
    }
    if (out.empty()) throw ConfigError(key + ": empty list", line);
    return out;
}

void need(bool ok, const std::string& key, const std::string& what, int line) {
    if (!ok) throw ConfigError(key + ": " + what, line);
}

void positive(double x, const std::string& key, int line) { need(x > 0.0 && std::isfinite(x), key, "must be positive", line); }

std::string choose(const std::string& key, const std::string& v, std::initializer_list<const char*> allowed, int line) {
    for (const char* a : allowed)
        if (v == a) return v;
    std::string list;
    for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
    throw ConfigError(key + ": expected one of {" + list + "}, got '" + v + "'", line);
}

std::string fmt(double x) {
    if (std::isinf(x)) return "inf";
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

std::string fmt_list(const std::vector<double>& xs) {
    std::string out;
    for (double x : xs) out += (out.empty() ? "" : ",") + fmt(x);
    return out;
}

}  // namespace

void set_config_value(RunConfig& c, const std::string& key, const std::string& v, int line) {
    if (key == "subcommand") {
        std::string s = choose(key, v, {"eigen", "solve", "flow", "sublinear", "superlinear", "verify"}, line);
        static const std::map<std::string, Subcommand> m{{"eigen", Subcommand::eigen},
                                                         {"solve", Subcommand::solve},
                                                         {"flow", Subcommand::flow},
                                                         {"sublinear", Subcommand::sublinear},
                                                         {"superlinear", Subcommand::superlinear},
                                                         {"verify", Subcommand::verify}};
        c.subcommand = m.at(s);
    } else if (key == "n") {
        long x = to_long(key, v, line);
        need(x >= 1 && x <= 8, key, "dimension must lie in [1, 8]", line);
        c.n = static_cast<int>(x);
    } else if (key == "N" || key == "grid") {
        long x = to_long(key, v, line);
        need(x >= 16, key, "N below minimum 16", line);
        need(x <= 1 << 20, key, "N above maximum 1048576", line);
        c.N = static_cast<int>(x);
    } else if (key == "clustering") {
        c.clustering = parse_clustering(choose(key, v, {"uniform", "boundary_refined"}, line));
    } else if (key == "mu_p") {
        double p = to_double(key, v, line);
        need(std::isinf(p) || p > 2.0, key, "p must exceed 2 or be inf", line);
        c.mu_p = std::isinf(p) ? 0.0 : p;
    } else if (key == "mu_eps") {
        double x = to_double(key, v, line);
        need(x > 0.0 && x < 0.1, key, "must lie in (0, 0.1)", line);
        c.mu_eps = x;
    } else if (key == "mu_fault") {
        double x = to_double(key, v, line);
        need(x >= 0.0 && std::isfinite(x), key, "must be nonnegative", line);
        c.mu_fault = x;
    } else if (key == "nonlinearity") {
        c.nonlinearity = choose(key, v, {"eigen", "sublinear", "superlinear", "table"}, line);
    } else if (key == "table_file") {
        c.table_file = v;
    } else if (key == "tol") {
        double x = to_double(key, v, line);
        positive(x, key, line);
        c.tol = x;
    } else if (key == "max_iter") {
        long x = to_long(key, v, line);
        need(x >= 1, key, "must be at least 1", line);
        c.max_iter = static_cast<int>(x);
    } else if (key == "method") {
        c.method = choose(key, v, {"inverse", "descent", "both"}, line);
    } else if (key == "density") {
        c.density = choose(key, v, {"one", "one_plus_s", "two_plus_sin3s"}, line);
    } else if (key == "forcing") {
        c.forcing = choose(key, v, {"eigen", "nonlinearity", "constant"}, line);
    } else if (key == "forcing_kappa") {
        double x = to_double(key, v, line);
        need(x >= 0.0 && std::isfinite(x), key, "must be nonnegative", line);
        c.forcing_kappa = x;
    } else if (key == "forcing_constant") {
        double x = to_double(key, v, line);
        need(std::isfinite(x), key, "must be finite", line);
        c.forcing_constant = x;
    } else if (key == "forcing_eps") {
        double x = to_double(key, v, line);
        positive(x, key, line);
        c.forcing_eps = x;
    } else if (key == "initial") {
        c.initial = choose(key, v, {"eigen", "linear"}, line);
    } else if (key == "initial_scale") {
        double x = to_double(key, v, line);
        positive(x, key, line);
        c.initial_scale = x;
    } else if (key == "dt") {
        double x = to_double(key, v, line);
        positive(x, key, line);
        c.dt = x;
    } else if (key == "dt_max") {
        double x = to_double(key, v, line);
        positive(x, key, line);
        c.dt_max = x;
    } else if (key == "t_end") {
        double x = to_double(key, v, line);
        positive(x, key, line);
        c.t_end = x;
    } else if (key == "cfl_safety") {
        double x = to_double(key, v, line);
        need(x > 0.0 && x <= 1.0, key, "must lie in (0, 1]", line);
        c.cfl_safety = x;
    } else if (key == "psh_floor") {
        double x = to_double(key, v, line);
        positive(x, key, line);
        c.psh_floor = x;
    } else if (key == "steady_tol") {
        double x = to_double(key, v, line);
        positive(x, key, line);
        c.steady_tol = x;
    } else if (key == "blend_delta") {
        double x = to_double(key, v, line);
        need(x > 0.0 && x < 0.25, key, "must lie in (0, 0.25)", line);
        c.blend_delta = x;
    } else if (key == "monitors") {
        c.monitors = to_bool(key, v, line);
    } else if (key == "solver_tol") {
        double x = to_double(key, v, line);
        positive(x, key, line);
        c.solver_tol = x;
    } else if (key == "m_levels") {
        auto xs = to_list(key, v, line);
        for (double x : xs) positive(x, key, line);
        c.m_levels = xs;
    } else if (key == "eps_levels") {
        auto xs = to_list(key, v, line);
        for (double x : xs) positive(x, key, line);
        c.eps_levels = xs;
    } else if (key == "m_path") {
        long x = to_long(key, v, line);
        need(x >= 3, key, "must be at least 3", line);
        c.m_path = static_cast<int>(x);
    } else if (key == "seed_path") {
        long x = to_long(key, v, line);
        need(x == 0 || x == 1, key, "must be 0 or 1", line);
        c.seed_path = static_cast<int>(x);
    } else if (key == "delta_levels") {
        auto xs = to_list(key, v, line);
        for (double x : xs) need(x > 0.0 && x < 0.25, key, "levels must lie in (0, 0.25)", line);
        c.delta_levels = xs;
    } else if (key == "a_fractions") {
        auto xs = to_list(key, v, line);
        for (double x : xs) need(x > 0.0 && x < 0.25, key, "fractions must lie in (0, 0.25)", line);
        c.a_fractions = xs;
    } else if (key == "output") {
        need(!v.empty(), key, "must not be empty", line);
        c.output = v;
    } else if (key == "seed") {
        long x = to_long(key, v, line);
        need(x >= 0, key, "must be nonnegative", line);
        c.seed = static_cast<std::uint64_t>(x);
    } else if (key == "serial") {
        c.serial = to_bool(key, v, line);
    } else {
        throw ConfigError("unknown key '" + key + "'", line);
    }
}

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    bool saw_n_levels = false;
    while (std::getline(in, raw)) {
        ++line;
        auto hash = raw.find('#');
        std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (s.empty()) continue;
        auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
        std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError("missing key", line);
        if (value.empty()) throw ConfigError(key + ": missing value", line);
        set_config_value(c, key, value, line);
        saw_n_levels = saw_n_levels || key == "delta_levels" || key == "a_fractions";
    }
    if (c.dt > c.dt_max) throw ConfigError("dt: must not exceed dt_max");
    if (saw_n_levels && c.a_fractions.size() < c.delta_levels.size())
        throw ConfigError("a_fractions: need one fraction per delta level");
    if (c.nonlinearity == "table" && c.table_file.empty()) throw ConfigError("table_file: required for nonlinearity = table");
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_text(const RunConfig& c) {
    std::ostringstream os;
    os << "subcommand = " << to_string(c.subcommand) << '\n'
       << "n = " << c.n << '\n'
       << "N = " << c.N << '\n'
       << "clustering = " << to_string(c.clustering) << '\n'
       << "mu_p = " << (c.mu_p > 0.0 ? fmt(c.mu_p) : "inf") << '\n'
       << "mu_eps = " << fmt(c.mu_eps) << '\n'
       << "mu_fault = " << fmt(c.mu_fault) << '\n'
       << "nonlinearity = " << c.nonlinearity << '\n';
    if (!c.table_file.empty()) os << "table_file = " << c.table_file << '\n';
    os << "tol = " << fmt(c.tol) << '\n'
       << "max_iter = " << c.max_iter << '\n'
       << "method = " << c.method << '\n'
       << "density = " << c.density << '\n'
       << "forcing = " << c.forcing << '\n'
       << "forcing_kappa = " << fmt(c.forcing_kappa) << '\n'
       << "forcing_constant = " << fmt(c.forcing_constant) << '\n'
       << "forcing_eps = " << fmt(c.forcing_eps) << '\n'
       << "initial = " << c.initial << '\n'
       << "initial_scale = " << fmt(c.initial_scale) << '\n'
       << "dt = " << fmt(c.dt) << '\n'
       << "dt_max = " << fmt(c.dt_max) << '\n'
       << "t_end = " << fmt(c.t_end) << '\n'
       << "cfl_safety = " << fmt(c.cfl_safety) << '\n'
       << "psh_floor = " << fmt(c.psh_floor) << '\n'
       << "steady_tol = " << fmt(c.steady_tol) << '\n'
       << "blend_delta = " << fmt(c.blend_delta) << '\n'
       << "monitors = " << (c.monitors ? "true" : "false") << '\n';
    if (c.solver_tol > 0.0) os << "solver_tol = " << fmt(c.solver_tol) << '\n';
    os << "m_levels = " << fmt_list(c.m_levels) << '\n'
       << "eps_levels = " << fmt_list(c.eps_levels) << '\n'
       << "m_path = " << c.m_path << '\n'
       << "seed_path = " << c.seed_path << '\n'
       << "delta_levels = " << fmt_list(c.delta_levels) << '\n'
       << "a_fractions = " << fmt_list(c.a_fractions) << '\n'
       << "output = " << c.output << '\n'
       << "seed = " << c.seed << '\n'
       << "serial = " << (c.serial ? "true" : "false") << '\n';
    return os.str();
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace cmalab
