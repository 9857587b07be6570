#include "hhls/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <utility>

#include <CLI11.hpp>

#include "hhls/domain.hpp"
#include "hhls/kernel.hpp"

namespace hhls::cli {

using nlohmann::json;

// ------------------------------------------------------------------ commands

namespace {

const std::vector<std::pair<Command, std::string>>& command_table() {
    static const std::vector<std::pair<Command, std::string>> table = {
        {Command::constant, "constant"}, {Command::ball_volume, "ball-volume"}, {Command::quotient, "quotient"},
        {Command::solve, "solve"},       {Command::critical, "critical"},       {Command::pohozaev, "pohozaev"},
        {Command::probe, "probe"},       {Command::rescale, "rescale"},
    };
    return table;
}

}  // namespace

const char* command_name(Command c) {
    for (const auto& [cmd, name] : command_table()) {
        if (cmd == c) return name.c_str();
    }
    return "constant";
}

Command parse_command(const std::string& s) {
    for (const auto& [cmd, name] : command_table()) {
        if (name == s) return cmd;
    }
    throw ConfigError("command", "unknown command '" + s + "'");
}

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& entry : command_table()) v.push_back(entry.second);
        return v;
    }();
    return names;
}

ConfigError::ConfigError(std::string field, const std::string& message, int line)
    : UsageError(field + ": " + message), field_(std::move(field)), line_(line) {}

// ------------------------------------------------------------------ parsing

namespace {

// 1-based line of the (last) key of a dotted path in the source text, 0 if unknown.
int find_line(const std::string& text, const std::string& field) {
    if (text.empty()) return 0;
    std::size_t pos = 0;
    std::stringstream ss(field);
    std::string part;
    while (std::getline(ss, part, '.')) {
        const std::size_t found = text.find("\"" + part + "\"", pos);
        if (found == std::string::npos) return 0;
        pos = found;
    }
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

class Reader {
public:
    explicit Reader(const std::string& text) : text_(text) {}

    [[noreturn]] void fail(const std::string& field, const std::string& message) const {
        throw ConfigError(field, message, find_line(text_, field));
    }

    const json* section(const json& root, const std::string& name, const std::vector<std::string>& keys) const {
        if (!root.contains(name)) return nullptr;
        const json& s = root.at(name);
        if (!s.is_object()) fail(name, "must be an object");
        for (const auto& item : s.items()) {
            if (std::find(keys.begin(), keys.end(), item.key()) == keys.end()) {
                fail(name + "." + item.key(), "unknown key");
            }
        }
        return &s;
    }

    void real(const json* s, const std::string& sec, const std::string& key, double& out) const {
        if (!s || !s->contains(key)) return;
        const json& v = s->at(key);
        if (!v.is_number()) fail(sec + "." + key, "must be a number");
        out = v.get<double>();
        if (!std::isfinite(out)) fail(sec + "." + key, "must be finite");
    }
    void real(const json* s, const std::string& sec, const std::string& key, std::optional<double>& out) const {
        if (!s || !s->contains(key) || s->at(key).is_null()) return;
        double v = 0.0;
        real(s, sec, key, v);
        out = v;
    }
    void integer(const json* s, const std::string& sec, const std::string& key, int& out) const {
        if (!s || !s->contains(key)) return;
        const json& v = s->at(key);
        if (!v.is_number_integer()) fail(sec + "." + key, "must be an integer");
        const long long x = v.get<long long>();
        if (x < -2147483647LL || x > 2147483647LL) fail(sec + "." + key, "out of range");
        out = static_cast<int>(x);
    }
    void unsigned_integer(const json* s, const std::string& sec, const std::string& key,
                          unsigned long long& out) const {
        if (!s || !s->contains(key)) return;
        const json& v = s->at(key);
        if (!v.is_number_unsigned()) fail(sec + "." + key, "must be a nonnegative integer");
        out = v.get<unsigned long long>();
    }
    void boolean(const json* s, const std::string& sec, const std::string& key, bool& out) const {
        if (!s || !s->contains(key)) return;
        const json& v = s->at(key);
        if (!v.is_boolean()) fail(sec + "." + key, "must be true or false");
        out = v.get<bool>();
    }
    void string(const json* s, const std::string& sec, const std::string& key, std::string& out) const {
        if (!s || !s->contains(key)) return;
        const json& v = s->at(key);
        if (!v.is_string()) fail(sec + "." + key, "must be a string");
        out = v.get<std::string>();
    }
    // Numbers, or the string "q_alpha" (resolved later) encoded as NaN.
    void reals(const json* s, const std::string& sec, const std::string& key, std::vector<double>& out,
               bool allow_q_alpha = false) const {
        if (!s || !s->contains(key)) return;
        const json& v = s->at(key);
        if (!v.is_array()) fail(sec + "." + key, "must be an array of numbers");
        out.clear();
        for (const auto& e : v) {
            if (allow_q_alpha && e.is_string() && e.get<std::string>() == "q_alpha") {
                out.push_back(std::nan(""));
                continue;
            }
            if (!e.is_number()) fail(sec + "." + key, "must be an array of numbers");
            out.push_back(e.get<double>());
            if (!std::isfinite(out.back())) fail(sec + "." + key, "entries must be finite");
        }
    }

    int line(const std::string& field) const { return find_line(text_, field); }

private:
    const std::string& text_;
};

void validate(ExperimentConfig& c, const Reader& rd) {
    auto fail = [&](const std::string& field, const std::string& msg) { rd.fail(field, msg); };
    if (c.n < 1) fail("group.n", "must be a positive integer");
    try {
        (void)KernelSpec(c.n, c.alpha, 0, c.lambda);
    } catch (const UsageError& e) {
        const std::string msg = e.what();
        const std::size_t colon = msg.find(':');
        std::string field = colon == std::string::npos ? "kernel" : msg.substr(0, colon);
        if (field == "kernel.n") field = "group.n";
        const std::string rest = colon == std::string::npos ? msg : msg.substr(colon + 2);
        fail(field, rest);
    }
    const KernelSpec spec = c.kernel();
    const double qa = spec.q_alpha();

    // domain
    if (c.domain.kind != "cylinder" && c.domain.kind != "gauge_ball") {
        fail("domain.kind", "must be 'cylinder' or 'gauge_ball'");
    }
    const auto dim = static_cast<std::size_t>(2 * c.n + 1);
    if (!c.domain.center.empty() && c.domain.center.size() != dim) {
        fail("domain.center", "must have 2n+1 = " + std::to_string(dim) + " entries");
    }
    if (c.domain.center.empty()) c.domain.center.assign(dim, 0.0);
    if (c.domain.kind == "gauge_ball" &&
        std::any_of(c.domain.center.begin(), c.domain.center.end(), [](double v) { return v != 0.0; })) {
        fail("domain.center", "gauge_ball domains must be centered at the origin");
    }
    if (!(c.domain.R > 0.0)) fail("domain.R", "must be positive");
    if (!(c.domain.h > 0.0)) fail("domain.h", "must be positive");
    if (c.domain.ht && !(*c.domain.ht > 0.0)) fail("domain.ht", "must be positive");

    // solver
    if (c.solver.q && !(*c.solver.q > 1.0)) fail("solver.q", "must exceed 1");
    if (!(c.solver.tol_residual > 0.0)) fail("solver.tol_residual", "must be positive");
    if (!(c.solver.tol_energy > 0.0)) fail("solver.tol_energy", "must be positive");
    if (c.solver.max_iter < 1) fail("solver.max_iter", "must be a positive integer");
    if (!(c.solver.damping > 0.0) || !(c.solver.damping <= 1.0)) fail("solver.damping", "must lie in (0, 1]");
    if (c.solver.init != "constant" && c.solver.init != "truncated_H") {
        fail("solver.init", "must be 'constant' or 'truncated_H'");
    }
    if (!(c.solver.init_scale >= 0.0)) fail("solver.init_scale", "must be nonnegative");
    if (c.solver.boundary_order < 1) fail("solver.boundary_order", "must be a positive integer");
    if (c.solver.boundary_values != "integral" && c.solver.boundary_values != "nearest") {
        fail("solver.boundary_values", "must be 'integral' or 'nearest'");
    }
    if (!(c.solver.delta > 0.0)) fail("solver.delta", "must be positive");
    for (double& q : c.solver.schedule) {
        if (std::isnan(q)) q = qa;
        // Accept a typed-out decimal of q_alpha.
        if (std::abs(q - qa) <= 1e-9) q = qa;
    }

    // input
    if (c.input.f != "extremal" && c.input.f != "conformal" && c.input.f != "constant") {
        fail("input.f", "must be 'extremal', 'conformal' or 'constant'");
    }
    if (!(c.input.eps > 0.0)) fail("input.eps", "must be positive");
    if (c.input.q && !(*c.input.q > 1.0)) fail("input.q", "must exceed 1");
    if (c.input.samples < 1) fail("input.samples", "must be a positive integer");

    // output / runtime
    if (c.output.format != "json" && c.output.format != "csv") fail("output.format", "must be 'json' or 'csv'");
    if (c.runtime.threads < 1) fail("runtime.threads", "must be a positive integer");

    // command-specific ranges
    std::ostringstream range;
    range.precision(17);
    switch (c.command) {
        case Command::solve:
        case Command::pohozaev:
        case Command::rescale: {
            if (!c.solver.q) c.solver.q = 1.8;
            if (!(*c.solver.q > qa) || !(*c.solver.q < 2.0)) {
                range << "must lie in (q_alpha, 2) = (" << qa << ", 2)";
                fail("solver.q", range.str());
            }
            if (c.domain.kind != "cylinder" && c.command == Command::pohozaev) {
                fail("domain.kind", "pohozaev requires a cylinder domain");
            }
            break;
        }
        case Command::critical: {
            if (!(c.lambda > 0.0)) fail("kernel.lambda", "critical requires lambda > 0");
            if (c.solver.schedule.empty()) fail("solver.schedule", "critical requires a nonempty q schedule");
            for (std::size_t k = 0; k < c.solver.schedule.size(); ++k) {
                const double q = c.solver.schedule[k];
                if (!(q >= qa) || !(q < 2.0)) fail("solver.schedule", "entries must lie in [q_alpha, 2)");
                if (k > 0 && !(q < c.solver.schedule[k - 1])) fail("solver.schedule", "must be strictly decreasing");
            }
            if (c.solver.schedule.back() != qa) fail("solver.schedule", "last entry must be q_alpha");
            c.solver.q = c.solver.schedule.front();
            break;
        }
        case Command::probe: {
            if (!(c.lambda <= 0.0)) fail("kernel.lambda", "probe requires lambda <= 0");
            if (!c.solver.q) c.solver.q = qa;
            if (std::abs(*c.solver.q - qa) <= 1e-9) c.solver.q = qa;
            if (!(*c.solver.q <= qa)) {
                range << "must not exceed q_alpha = " << qa;
                fail("solver.q", range.str());
            }
            break;
        }
        case Command::quotient: {
            if (!c.input.q) c.input.q = qa;
            break;
        }
        case Command::constant:
        case Command::ball_volume:
            break;
    }
}

}  // namespace

ExperimentConfig parse_config(const json& j, const std::string& text) {
    const Reader rd(text);
    if (!j.is_object()) rd.fail("config", "must be a JSON object");
    static const std::vector<std::string> top = {"command", "group",  "kernel", "domain",
                                                 "solver",  "input",  "output", "runtime", "schema_version"};
    for (const auto& item : j.items()) {
        if (std::find(top.begin(), top.end(), item.key()) == top.end()) rd.fail(item.key(), "unknown key");
    }
    ExperimentConfig c;
    if (!j.contains("command")) rd.fail("command", "missing");
    if (!j.at("command").is_string()) rd.fail("command", "must be a string");
    try {
        c.command = parse_command(j.at("command").get<std::string>());
    } catch (const ConfigError&) {
        rd.fail("command", "must be one of constant, ball-volume, quotient, solve, critical, pohozaev, probe, rescale");
    }

    const json* g = rd.section(j, "group", {"n", "Q"});
    rd.integer(g, "group", "n", c.n);
    if (g && g->contains("Q")) {
        int Q = 0;
        rd.integer(g, "group", "Q", Q);
        if (Q != 2 * c.n + 2) rd.fail("group.Q", "must equal 2n + 2");
    }

    const json* k = rd.section(j, "kernel", {"alpha", "lambda"});
    rd.real(k, "kernel", "alpha", c.alpha);
    rd.real(k, "kernel", "lambda", c.lambda);

    const json* d = rd.section(j, "domain", {"kind", "center", "R", "h", "ht"});
    rd.string(d, "domain", "kind", c.domain.kind);
    rd.reals(d, "domain", "center", c.domain.center);
    rd.real(d, "domain", "R", c.domain.R);
    rd.real(d, "domain", "h", c.domain.h);
    rd.real(d, "domain", "ht", c.domain.ht);

    const json* s = rd.section(j, "solver",
                               {"q", "tol_residual", "tol_energy", "max_iter", "damping", "init", "init_scale",
                                "schedule", "boundary_order", "boundary_values", "delta"});
    rd.real(s, "solver", "q", c.solver.q);
    rd.real(s, "solver", "tol_residual", c.solver.tol_residual);
    rd.real(s, "solver", "tol_energy", c.solver.tol_energy);
    rd.integer(s, "solver", "max_iter", c.solver.max_iter);
    rd.real(s, "solver", "damping", c.solver.damping);
    rd.string(s, "solver", "init", c.solver.init);
    rd.real(s, "solver", "init_scale", c.solver.init_scale);
    rd.reals(s, "solver", "schedule", c.solver.schedule, true);
    rd.integer(s, "solver", "boundary_order", c.solver.boundary_order);
    rd.string(s, "solver", "boundary_values", c.solver.boundary_values);
    rd.real(s, "solver", "delta", c.solver.delta);

    const json* in = rd.section(j, "input", {"f", "eps", "q", "samples", "seed", "include_cells"});
    rd.string(in, "input", "f", c.input.f);
    rd.real(in, "input", "eps", c.input.eps);
    rd.real(in, "input", "q", c.input.q);
    rd.integer(in, "input", "samples", c.input.samples);
    rd.unsigned_integer(in, "input", "seed", c.input.seed);
    rd.boolean(in, "input", "include_cells", c.input.include_cells);

    const json* o = rd.section(j, "output", {"path", "format"});
    rd.string(o, "output", "path", c.output.path);
    rd.string(o, "output", "format", c.output.format);

    const json* r = rd.section(j, "runtime", {"threads", "deterministic"});
    rd.integer(r, "runtime", "threads", c.runtime.threads);
    rd.boolean(r, "runtime", "deterministic", c.runtime.deterministic);

    validate(c, rd);
    return c;
}

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto byte = std::min<std::size_t>(e.byte, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
        throw ConfigError("config", std::string("JSON syntax error: ") + e.what(), line);
    }
    return parse_config(j, text);
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["command"] = command_name(c.command);
    j["group"] = {{"n", c.n}, {"Q", 2 * c.n + 2}};
    j["kernel"] = {{"alpha", c.alpha}, {"lambda", c.lambda}};
    j["domain"] = {{"kind", c.domain.kind}, {"center", c.domain.center}, {"R", c.domain.R}, {"h", c.domain.h}};
    j["domain"]["ht"] = c.domain.ht ? json(*c.domain.ht) : json(nullptr);
    json s = {{"tol_residual", c.solver.tol_residual},
              {"tol_energy", c.solver.tol_energy},
              {"max_iter", c.solver.max_iter},
              {"damping", c.solver.damping},
              {"init", c.solver.init},
              {"init_scale", c.solver.init_scale},
              {"schedule", c.solver.schedule},
              {"boundary_order", c.solver.boundary_order},
              {"boundary_values", c.solver.boundary_values},
              {"delta", c.solver.delta}};
    s["q"] = c.solver.q ? json(*c.solver.q) : json(nullptr);
    j["solver"] = s;
    j["input"] = {{"f", c.input.f},
                  {"eps", c.input.eps},
                  {"samples", c.input.samples},
                  {"seed", c.input.seed},
                  {"include_cells", c.input.include_cells}};
    j["input"]["q"] = c.input.q ? json(*c.input.q) : json(nullptr);
    j["output"] = {{"path", c.output.path}, {"format", c.output.format}};
    j["runtime"] = {{"threads", c.runtime.threads}, {"deterministic", c.runtime.deterministic}};
    return j;
}

OutputPaths resolve_output(const ExperimentConfig& c) {
    std::string dir = ".";
    if (const char* env = std::getenv("HHLS_OUTPUT_DIR"); env && *env) dir = env;
    std::string path = c.output.path;
    if (path.empty()) path = std::string(command_name(c.command)) + "." + c.output.format;
    if (path.front() != '/' && std::getenv("HHLS_OUTPUT_DIR") && *std::getenv("HHLS_OUTPUT_DIR")) {
        path = dir + "/" + path;
    }
    OutputPaths out;
    if (c.output.format == "json") {
        out.artifact = path;
        return out;
    }
    const std::string stem = std::filesystem::path(path).replace_extension().string();
    out.cells_csv = stem + ".csv";
    out.trace_csv = stem + "_trace.csv";
    out.artifact = stem + ".json";
    return out;
}

// ------------------------------------------------------------------ execution

namespace {

GaugeDomain make_domain(const ExperimentConfig& c) {
    if (c.domain.kind == "gauge_ball") {
        const double R = c.domain.R;
        Box b;
        const auto D = static_cast<std::size_t>(2 * c.n);
        b.lo.assign(D + 1, -R);
        b.hi.assign(D + 1, R);
        b.lo[D] = -R * R;
        b.hi[D] = R * R;
        return GaugeDomain::indicator(
            c.n, [R](const HPoint& p) { return gauge_norm(p) < R; }, b, "gauge_ball");
    }
    return GaugeDomain::cylinder(HPoint::from_coords(c.domain.center), c.domain.R);
}

std::shared_ptr<const Grid> make_grid(const ExperimentConfig& c, const GaugeDomain& d) {
    GridOptions o;
    o.t_spacing = c.domain.ht;
    return build_grid(d, c.domain.h, o);
}

OperatorOptions operator_options(const ExperimentConfig& c) {
    OperatorOptions o;
    o.threads = c.runtime.threads;
    o.deterministic = c.runtime.deterministic;
    return o;
}

SolverConfig solver_config(const ExperimentConfig& c) {
    SolverConfig s;
    s.q = c.solver.q.value_or(1.8);
    s.spec = c.kernel();
    s.tol_residual = c.solver.tol_residual;
    s.tol_energy = c.solver.tol_energy;
    s.max_iter = c.solver.max_iter;
    s.damping = c.solver.damping;
    s.init = parse_init(c.solver.init);
    s.init_scale = c.solver.init_scale;
    s.op = operator_options(c);
    return s;
}

json grid_json(const Grid& g) {
    return {{"cells", g.size()}, {"h", g.h()}, {"ht", g.ht()}, {"cell_volume", g.cell_volume()},
            {"volume", g.volume()}};
}

json report_json(const SolveReport& r) {
    json j;
    j["converged"] = r.converged;
    j["multiplier"] = r.multiplier;
    j["el_residual"] = r.el_residual;
    j["iterations"] = r.iterations;
    j["q"] = r.q;
    j["damping_used"] = r.damping_used;
    j["diagnostic"] = r.diagnostic;
    j["energy_trace"] = r.energy_trace;
    j["extensions"] = r.extensions;
    const auto& v = r.solution.values;
    j["min_value"] = v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
    j["max_value"] = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
    j["strictly_positive"] = !v.empty() && *std::min_element(v.begin(), v.end()) > 0.0;
    j["norm_q"] = v.empty() ? 0.0 : lq_norm(r.solution, r.q);
    if (!r.stage_q.empty()) {
        j["stage_q"] = r.stage_q;
        j["stage_multipliers"] = r.stage_multipliers;
        j["failed_stage"] = r.failed_stage;
    }
    return j;
}

json series_json(const SolveReport& r, bool include_cells) {
    json s;
    s["energy_trace"] = trace_json(r.energy_trace);
    if (include_cells) s["solution"] = cells_json(r.solution);
    return s;
}

json run_constant(const ExperimentConfig& c) {
    return {{"value", sharp_constant(c.n, c.alpha)}, {"Q", 2 * c.n + 2}};
}

json run_ball_volume(const ExperimentConfig& c) {
    const double R = c.domain.R;
    const double Q = 2.0 * c.n + 2.0;
    const double exact = gauge_ball_volume(c.n);
    ExperimentConfig ball = c;
    ball.domain.kind = "gauge_ball";
    ball.domain.center.assign(static_cast<std::size_t>(2 * c.n + 1), 0.0);
    const auto g1 = make_grid(ball, make_domain(ball));
    ExperimentConfig ball2 = ball;
    ball2.domain.R = 2.0 * R;
    const auto g2 = make_grid(ball2, make_domain(ball2));
    const double grid_unit = g1->volume() / std::pow(R, Q);

    // Monte Carlo over the bounding box of B_R.
    std::mt19937_64 rng(c.input.seed);
    std::uniform_real_distribution<double> uz(-R, R), ut(-R * R, R * R);
    const auto D = static_cast<std::size_t>(2 * c.n);
    std::vector<double> xyz(D + 1);
    long long hits = 0;
    for (int s = 0; s < c.input.samples; ++s) {
        double z2 = 0.0;
        for (std::size_t a = 0; a < D; ++a) {
            const double v = uz(rng);
            z2 += v * v;
        }
        const double t = ut(rng);
        if (z2 * z2 + t * t < R * R * R * R) ++hits;
    }
    const double box = std::pow(2.0 * R, static_cast<double>(D)) * 2.0 * R * R;
    const double mc_unit = box * static_cast<double>(hits) / c.input.samples / std::pow(R, Q);
    const double mc_stderr = box / std::pow(R, Q) *
                             std::sqrt(static_cast<double>(hits) / c.input.samples *
                                       (1.0 - static_cast<double>(hits) / c.input.samples) / c.input.samples);
    return {{"closed_form", exact},
            {"grid", grid_unit},
            {"grid_rel_error", std::abs(grid_unit - exact) / exact},
            {"grid_cells", g1->size()},
            {"monte_carlo", mc_unit},
            {"monte_carlo_rel_error", std::abs(mc_unit - exact) / exact},
            {"monte_carlo_stderr", mc_stderr},
            {"monte_carlo_samples", c.input.samples},
            {"dilation_ratio_grid", g2->volume() / g1->volume()},
            {"dilation_ratio_expected", std::pow(2.0, Q)}};
}

json run_quotient(const ExperimentConfig& c) {
    const auto grid = make_grid(c, make_domain(c));
    const KernelSpec spec = c.kernel();
    const double q = *c.input.q;
    GridFunction f;
    if (c.input.f == "extremal") {
        f = sample(grid, [&](const HPoint& p) { return extremal_H(p, spec); });
    } else if (c.input.f == "conformal") {
        const HPoint zeta = HPoint::from_coords(c.domain.center);
        const double eps = c.input.eps;
        f = sample(grid, [&](const HPoint& p) { return conformal_family(p, eps, zeta, spec); });
    } else {
        f = GridFunction(grid, 1.0);
    }
    const KernelOperator op = KernelOperator::hls(grid, spec, operator_options(c));
    const double energy = op.energy(f.values);
    const double norm = lq_norm(f, q);
    const double quotient = energy / (norm * norm);
    const double D = sharp_constant(c.n, c.alpha);
    return {{"quotient", quotient},     {"energy", energy}, {"norm_q", norm},
            {"q", q},                   {"sharp_constant", D}, {"ratio_to_sharp_constant", quotient / D},
            {"below_sharp_constant", quotient < D}, {"grid", grid_json(*grid)}};
}

json run_solve(const ExperimentConfig& c, json& series) {
    const auto grid = make_grid(c, make_domain(c));
    const SolveReport r = solve_subcritical(grid, solver_config(c));
    series = series_json(r, c.input.include_cells);
    json j = report_json(r);
    j["grid"] = grid_json(*grid);
    return j;
}

json run_critical(const ExperimentConfig& c, json& series) {
    const auto grid = make_grid(c, make_domain(c));
    const SolveReport r = solve_critical_via_limit(grid, c.kernel(), c.solver.schedule, solver_config(c));
    series = series_json(r, c.input.include_cells);
    json j = report_json(r);
    j["grid"] = grid_json(*grid);
    return j;
}

json run_pohozaev(const ExperimentConfig& c, json& series) {
    const GaugeDomain d = make_domain(c);
    const auto grid = make_grid(c, d);
    const SolverConfig sc = solver_config(c);
    const SolveReport r = solve_subcritical(grid, sc);
    series = series_json(r, c.input.include_cells);
    json j;
    j["solve"] = report_json(r);
    j["grid"] = grid_json(*grid);
    const double p = conjugate_exponent(sc.q);
    const KernelSpec spec = c.kernel();
    j["p"] = p;
    j["coefficient"] = pohozaev_coefficient(c.n, c.alpha, p);
    j["critical_coefficient"] = pohozaev_coefficient(c.n, c.alpha, spec.p_alpha());
    if (!(r.multiplier > 0.0)) throw DegenerateInputError("pohozaev: solve produced no positive multiplier");
    const GridFunction F = to_pohozaev_form(r.solution, r.multiplier, sc.q);
    const auto nodes = boundary_quadrature(d, c.solver.boundary_order);
    const BoundaryValues bv =
        c.solver.boundary_values == "nearest" ? BoundaryValues::nearest_cell : BoundaryValues::integral_extension;
    const PohozaevTerms t = pohozaev_residual(F, p, spec, nodes, bv, operator_options(c));
    j["lhs"] = t.lhs;
    j["rhs_bulk"] = t.rhs_bulk;
    j["rhs_boundary"] = t.rhs_boundary;
    j["rel_residual"] = t.rel_residual;
    j["boundary_nodes"] = nodes.size();
    return j;
}

json run_probe(const ExperimentConfig& c) {
    const auto grid = make_grid(c, make_domain(c));
    const KernelSpec spec = c.kernel();
    const ProbeResult r = nonexistence_probe(grid, spec, *c.solver.q, solver_config(c));
    return {{"verdict", verdict_name(r.verdict)},
            {"iterations", r.iterations},
            {"sup_norm_trace", r.sup_norm_trace},
            {"el_residual", r.el_residual},
            {"starshaped", r.starshaped},
            {"warning", r.warning},
            {"q", *c.solver.q},
            {"grid", grid_json(*grid)}};
}

json run_rescale(const ExperimentConfig& c, json& series) {
    const auto grid = make_grid(c, make_domain(c));
    const SolverConfig sc = solver_config(c);
    const SolveReport r = solve_subcritical(grid, sc);
    series = series_json(r, c.input.include_cells);
    const KernelSpec spec = c.kernel();
    const RescaleResult rr = blowup_rescale(r.solution, sc.q, spec);

    // Sample g at the rescaled images of (a stride of) the cell centers plus the origin.
    const std::size_t N = grid->size();
    const std::size_t stride = std::max<std::size_t>(1, N / static_cast<std::size_t>(c.input.samples));
    const HPoint peak_inv = inv(rr.peak);
    double gmin = rr.g(HPoint(c.n)), gmax = gmin;
    std::size_t count = 1;
    for (std::size_t i = 0; i < N; i += stride) {
        const double v = rr.g(dilate(1.0 / rr.mu, mul(peak_inv, grid->center(i))));
        gmin = std::min(gmin, v);
        gmax = std::max(gmax, v);
        ++count;
    }
    json j;
    j["solve"] = report_json(r);
    j["grid"] = grid_json(*grid);
    j["mu"] = rr.mu;
    j["peak_index"] = rr.peak_index;
    j["peak"] = rr.peak.coords();
    j["peak_value"] = rr.peak_value;
    j["g_at_origin"] = rr.g(HPoint(c.n));
    j["g_min"] = gmin;
    j["g_max"] = gmax;
    j["g_samples"] = count;
    j["warning"] = rr.warning;
    if (rr.domain_map->kind() == GaugeDomain::Kind::cylinder) {
        j["domain_map"] = {{"kind", "cylinder"},
                           {"center", rr.domain_map->center().coords()},
                           {"R", rr.domain_map->radius()}};
    } else {
        j["domain_map"] = {{"kind", "indicator"}, {"description", rr.domain_map->description()}};
    }
    if (spec.lambda != 0.0) {
        const LambdaTermDiagnostic ld = lambda_term_diagnostic(r.solution, spec, sc.q, c.solver.delta, sc.op);
        j["lambda_term"] = {{"peak_ratio", ld.peak_ratio}, {"bound", ld.bound}, {"delta", c.solver.delta}};
    } else {
        j["lambda_term"] = {{"peak_ratio", 0.0}, {"bound", 0.0}, {"delta", c.solver.delta}};
    }
    return j;
}

}  // namespace

json execute(const ExperimentConfig& c) {
    const auto start = std::chrono::steady_clock::now();
    json artifact;
    artifact["schema_version"] = kSchemaVersion;
    artifact["tool"] = "hhls";
    artifact["version"] = HHLS_VERSION;
    artifact["command"] = command_name(c.command);
    artifact["config"] = to_json(c);
    json results, series;
    try {
        switch (c.command) {
            case Command::constant: results = run_constant(c); break;
            case Command::ball_volume: results = run_ball_volume(c); break;
            case Command::quotient: results = run_quotient(c); break;
            case Command::solve: results = run_solve(c, series); break;
            case Command::critical: results = run_critical(c, series); break;
            case Command::pohozaev: results = run_pohozaev(c, series); break;
            case Command::probe: results = run_probe(c); break;
            case Command::rescale: results = run_rescale(c, series); break;
        }
        artifact["status"] = "ok";
    } catch (const DegenerateInputError& e) {
        artifact["status"] = "degenerate";
        artifact["error"] = e.what();
        results = json::object();
        series = nullptr;
    }
    artifact["results"] = results;
    if (!series.is_null()) artifact["series"] = series;
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    // Timing is the only run-dependent datum; leaving it out keeps deterministic artifacts byte-stable.
    artifact["wall_time_s"] = c.runtime.deterministic ? json(nullptr) : json(elapsed);
    return artifact;
}

json run(const ExperimentConfig& c) {
    json artifact = execute(c);
    const OutputPaths paths = resolve_output(c);
    if (c.output.format == "csv") {
        json files = json::array();
        const json& series = artifact.contains("series") ? artifact["series"] : json();
        if (series.is_object()) {
            if (series.contains("energy_trace")) {
                std::vector<double> trace;
                for (const auto& row : series["energy_trace"]["rows"]) trace.push_back(row[1].get<double>());
                write_trace_csv(trace, paths.trace_csv);
                files.push_back(std::filesystem::path(paths.trace_csv).filename().string());
            }
            if (series.contains("solution")) {
                std::ostringstream os;
                const auto& cols = series["solution"]["columns"];
                for (std::size_t a = 0; a < cols.size(); ++a) os << (a ? "," : "") << cols[a].get<std::string>();
                os << "\n";
                char buf[40];
                for (const auto& row : series["solution"]["rows"]) {
                    for (std::size_t a = 0; a < row.size(); ++a) {
                        if (a) os << ",";
                        if (row[a].is_number_integer()) {
                            os << row[a].get<long long>();
                        } else {
                            std::snprintf(buf, sizeof buf, "%.17g", row[a].get<double>());
                            os << buf;
                        }
                    }
                    os << "\n";
                }
                write_text_file(paths.cells_csv, os.str());
                files.push_back(std::filesystem::path(paths.cells_csv).filename().string());
            }
        }
        artifact["files"] = files;
    }
    write_text_file(paths.artifact, artifact.dump(2) + "\n");
    return artifact;
}

// ------------------------------------------------------------------ entry point

namespace {

struct Flag {
    std::string name;  // without dashes
    std::string field; // dotted config path
    enum Kind { real, integer, text, reals, boolean_true, boolean_false } kind;
    std::string help;
};

const std::vector<Flag>& flags() {
    static const std::vector<Flag> f = {
        {"n", "group.n", Flag::integer, "Heisenberg dimension n"},
        {"alpha", "kernel.alpha", Flag::real, "Riesz order alpha in (0, Q)"},
        {"lambda", "kernel.lambda", Flag::real, "coupling of the |.|^{-(Q-alpha-1)} term"},
        {"kind", "domain.kind", Flag::text, "domain kind: cylinder | gauge_ball"},
        {"center", "domain.center", Flag::reals, "domain center, comma separated (x.., y.., t)"},
        {"R", "domain.R", Flag::real, "domain radius"},
        {"h", "domain.h", Flag::real, "grid spacing in z"},
        {"ht", "domain.ht", Flag::real, "grid spacing in t"},
        {"q", "solver.q", Flag::real, "exponent q"},
        {"tol-residual", "solver.tol_residual", Flag::real, "EL residual tolerance"},
        {"tol-energy", "solver.tol_energy", Flag::real, "relative energy change tolerance"},
        {"max-iter", "solver.max_iter", Flag::integer, "iteration limit"},
        {"damping", "solver.damping", Flag::real, "geometric damping theta in (0, 1]"},
        {"init", "solver.init", Flag::text, "initial guess: constant | truncated_H"},
        {"init-scale", "solver.init_scale", Flag::real, "amplitude of the initial guess"},
        {"schedule", "solver.schedule", Flag::reals, "q schedule, comma separated ('q_alpha' allowed)"},
        {"boundary-order", "solver.boundary_order", Flag::integer, "boundary quadrature order"},
        {"boundary-values", "solver.boundary_values", Flag::text, "boundary values: integral | nearest"},
        {"delta", "solver.delta", Flag::real, "exponent of the lambda-term bound"},
        {"f", "input.f", Flag::text, "quotient test function: extremal | conformal | constant"},
        {"eps", "input.eps", Flag::real, "conformal scale epsilon"},
        {"quotient-q", "input.q", Flag::real, "quotient exponent (default q_alpha)"},
        {"samples", "input.samples", Flag::integer, "Monte Carlo / rescale sample count"},
        {"seed", "input.seed", Flag::integer, "Monte Carlo seed"},
        {"no-cells", "input.include_cells", Flag::boolean_false, "omit grid-function dumps"},
        {"output", "output.path", Flag::text, "artifact path"},
        {"format", "output.format", Flag::text, "series format: json | csv"},
        {"threads", "runtime.threads", Flag::integer, "degree of parallelism for kernel sums"},
        {"deterministic", "runtime.deterministic", Flag::boolean_true, "sequential, bitwise reproducible sums"},
        {"parallel", "runtime.deterministic", Flag::boolean_false, "allow schedule-dependent parallel sums"},
    };
    return f;
}

void set_path(json& root, const std::string& field, json value) {
    const std::size_t dot = field.find('.');
    root[field.substr(0, dot)][field.substr(dot + 1)] = std::move(value);
}

json convert_flag(const Flag& f, const std::string& raw) {
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size() || s.empty()) throw ConfigError(f.field, "flag --" + f.name + ": '" + s + "' is not a number");
        return v;
    };
    switch (f.kind) {
        case Flag::real: return number(raw);
        case Flag::integer: {
            const double v = number(raw);
            if (v != std::floor(v) || std::abs(v) > 2147483647.0) {
                throw ConfigError(f.field, "flag --" + f.name + ": '" + raw + "' is not an integer");
            }
            if (f.field == "input.seed") {
                if (v < 0) throw ConfigError(f.field, "flag --" + f.name + ": must be nonnegative");
                return json(static_cast<unsigned long long>(v));
            }
            return json(static_cast<long long>(v));
        }
        case Flag::text: return raw;
        case Flag::reals: {
            json arr = json::array();
            std::stringstream ss(raw);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (item == "q_alpha") {
                    arr.push_back("q_alpha");
                } else {
                    arr.push_back(number(item));
                }
            }
            return arr;
        }
        case Flag::boolean_true: return true;
        case Flag::boolean_false: return false;
    }
    return raw;
}

void print_error(std::ostream& err, const std::string& kind, const std::string& field, int line,
                 const std::string& message) {
    json e = {{"error", kind}, {"message", message}};
    if (!field.empty()) e["field"] = field;
    if (line > 0) e["line"] = line;
    err << e.dump() << "\n";
}

}  // namespace

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Heisenberg-group HLS experiments: sharp constants, quotients, EL solver, diagnostics"};
    app.set_help_flag("--help", "print help");  // -h is taken by the grid spacing
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(HHLS_VERSION));

    std::string config_path;
    std::map<std::string, std::string> raw;    // flag name -> value
    std::vector<std::string> set_switches;     // boolean flags given
    std::vector<CLI::App*> subs;
    auto add_flags = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file (flags override its values)");
        for (const auto& f : flags()) {
            if (f.kind == Flag::boolean_true || f.kind == Flag::boolean_false) {
                sub->add_flag_callback("--" + f.name, [&set_switches, name = f.name] { set_switches.push_back(name); },
                                       f.help);
            } else {
                sub->add_option_function<std::string>(
                    "--" + f.name, [&raw, name = f.name](const std::string& v) { raw[name] = v; }, f.help);
            }
        }
    };
    for (const auto& name : command_names()) {
        CLI::App* sub = app.add_subcommand(name, "run the '" + name + "' experiment");
        add_flags(sub);
        subs.push_back(sub);
    }
    CLI::App* run_sub = app.add_subcommand("run", "run the command named in --config");
    add_flags(run_sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << HHLS_VERSION << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        print_error(err, "usage", "", 0, e.what());
        return 2;
    }

    std::string text;
    try {
        json j = json::object();
        if (!config_path.empty()) {
            text = read_text_file(config_path);
            try {
                j = json::parse(text);
            } catch (const json::parse_error& e) {
                const auto byte = std::min<std::size_t>(e.byte, text.size());
                const int line =
                    1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
                throw ConfigError("config", std::string("JSON syntax error: ") + e.what(), line);
            }
            if (!j.is_object()) throw ConfigError("config", "must be a JSON object", 1);
        }
        std::string cmd;
        for (CLI::App* sub : subs) {
            if (sub->parsed()) cmd = sub->get_name();
        }
        if (!cmd.empty()) {
            j["command"] = cmd;
        } else if (!j.contains("command")) {
            throw ConfigError("command", "'run' requires a config with a command");
        }
        for (const auto& f : flags()) {
            if (auto it = raw.find(f.name); it != raw.end()) set_path(j, f.field, convert_flag(f, it->second));
            if (std::find(set_switches.begin(), set_switches.end(), f.name) != set_switches.end()) {
                set_path(j, f.field, convert_flag(f, ""));
            }
        }
        const ExperimentConfig cfg = parse_config(j, text);
        const json artifact = run(cfg);
        const OutputPaths paths = resolve_output(cfg);
        out << paths.artifact << "\n";
        (void)artifact;
        return 0;
    } catch (const ConfigError& e) {
        print_error(err, "config", e.field(), e.line(), e.what());
        return 2;
    } catch (const UsageError& e) {
        print_error(err, "config", "", 0, e.what());
        return 2;
    } catch (const IoError& e) {
        print_error(err, "io", "", 0, e.what());
        return 3;
    } catch (const std::exception& e) {
        print_error(err, "internal", "", 0, e.what());
        return 1;
    }
}

}  // namespace hhls::cli
