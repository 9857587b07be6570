#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "hhls/cli.hpp"
#include "hhls/domain.hpp"
#include "schema_check.hpp"

using namespace hhls;
using namespace hhls::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int status;
    std::string out, err;
};

Run invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "hhls");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int status = main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
    return {status, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("hhls_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

json load(const fs::path& p) { return json::parse(read_text_file(p.string())); }

const json& schema() {
    static const json s = json::parse(read_text_file(HHLS_SCHEMA_PATH));
    return s;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& e : v) s += e + "\n";
    return s;
}

}  // namespace

TEST_CASE("command names") {
    for (const auto& name : command_names()) CHECK(command_name(parse_command(name)) == name);
    CHECK(command_names().size() == 8);
    CHECK_THROWS_AS(parse_command("nope"), ConfigError);
}

TEST_CASE("config parsing fills defaults") {
    const ExperimentConfig c = parse_config_text(R"({"command": "solve"})");
    CHECK(c.command == Command::solve);
    CHECK(c.n == 1);
    CHECK(c.alpha == 2.0);
    CHECK(*c.solver.q == 1.8);
    CHECK(c.domain.center == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(c.runtime.deterministic);
    const ExperimentConfig p = parse_config_text(R"({"command": "probe", "kernel": {"lambda": -0.2}})");
    CHECK(*p.solver.q == p.kernel().q_alpha());
    const ExperimentConfig cr = parse_config_text(
        R"({"command": "critical", "kernel": {"lambda": 1}, "solver": {"schedule": [1.6, 1.5, "q_alpha"]}})");
    CHECK(cr.solver.schedule.back() == cr.kernel().q_alpha());
    // Typed-out decimal of q_alpha is accepted and snapped.
    const ExperimentConfig cr2 = parse_config_text(
        R"({"command": "critical", "kernel": {"lambda": 1}, "solver": {"schedule": [1.6, 1.3333333333]}})");
    CHECK(cr2.solver.schedule.back() == cr2.kernel().q_alpha());
}

TEST_CASE("config round-trips through its resolved form") {
    const ExperimentConfig c = parse_config_text(
        R"({"command": "rescale", "group": {"n": 1}, "kernel": {"alpha": 1.5, "lambda": 0.5},
            "domain": {"R": 2, "h": 0.3, "ht": 0.4}, "solver": {"q": 1.7, "damping": 0.8},
            "input": {"seed": 9}, "runtime": {"threads": 2, "deterministic": false}})");
    const json j = to_json(c);
    const json again = to_json(parse_config(j, j.dump()));
    CHECK(j == again);
    CHECK(j["domain"]["ht"] == 0.4);
    CHECK(j["group"]["Q"] == 4);
}

TEST_CASE("config errors name the field and the line") {
    auto fails = [](const std::string& text, const std::string& field, int line) {
        try {
            (void)parse_config_text(text);
        } catch (const ConfigError& e) {
            CHECK(e.field() == field);
            CHECK(e.line() == line);
            return;
        }
        FAIL("no ConfigError for " << text);
    };
    fails("{\n  \"command\": \"solve\",\n  \"kernel\": {\n    \"alpha\": 4\n  }\n}", "kernel.alpha", 4);
    fails("{\n  \"command\": \"solve\",\n  \"solver\": {\"q\": 1.2}\n}", "solver.q", 3);
    fails("{\n  \"command\": \"solve\",\n  \"domain\": {\"hh\": 1}\n}", "domain.hh", 3);
    fails("{\n  \"command\": \"solve\",\n  \"domain\": {\"h\": \"x\"}\n}", "domain.h", 3);
    fails("{\"command\": \"solve\", \"group\": {\"n\": 0}}", "group.n", 1);
    fails("{\"command\": \"jump\"}", "command", 1);
    fails("{\"command\": \"solve\",\n\"colour\": 1}", "colour", 2);
    fails("{\"command\": \"solve\",\n\n \"domain\": [}", "config", 3);
    fails("{\"command\": \"critical\", \"kernel\": {\"lambda\": 1}, \"solver\": {\"schedule\": [1.5, 1.6]}}",
          "solver.schedule", 1);
    fails("{\"command\": \"critical\", \"kernel\": {\"lambda\": 0}, \"solver\": {\"schedule\": [1.5]}}",
          "kernel.lambda", 1);
    fails("{\"command\": \"probe\", \"kernel\": {\"lambda\": 0.5}}", "kernel.lambda", 1);
    fails("{\"command\": \"solve\", \"domain\": {\"center\": [0, 0]}}", "domain.center", 1);
    fails("{\"command\": \"solve\", \"output\": {\"format\": \"xml\"}}", "output.format", 1);
    fails("{\"command\": \"solve\", \"kernel\": {\"alpha\": 3.5, \"lambda\": 1}}", "kernel.lambda", 1);
}

TEST_CASE("constant subcommand") {
    const fs::path dir = scratch("constant");
    const Run r = invoke({"constant", "--n", "1", "--alpha", "2", "--output", (dir / "c.json").string()});
    REQUIRE(r.status == 0);
    const json a = load(dir / "c.json");
    CHECK(a["results"]["value"].get<double>() == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(a["status"] == "ok");
    CHECK(a["config"]["kernel"]["alpha"] == 2.0);
    CHECK(a["wall_time_s"].is_null());
    CHECK(schema_check::validate(a, schema()).empty());
}

TEST_CASE("wall time is reported outside deterministic mode") {
    const fs::path dir = scratch("walltime");
    REQUIRE(invoke({"constant", "--parallel", "--output", (dir / "c.json").string()}).status == 0);
    const json a = load(dir / "c.json");
    CHECK(a["wall_time_s"].is_number());
    CHECK(a["config"]["runtime"]["deterministic"] == false);
    CHECK(schema_check::validate(a, schema()).empty());
}

TEST_CASE("validation failures exit with status 2 and one parseable line") {
    const Run r = invoke({"solve", "--alpha", "4"});
    CHECK(r.status == 2);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    const json e = json::parse(r.err);
    CHECK(e["error"] == "config");
    CHECK(e["field"] == "kernel.alpha");
    const Run bad = invoke({"solve", "--h", "abc"});
    CHECK(bad.status == 2);
    CHECK(json::parse(bad.err)["field"] == "domain.h");
    CHECK(invoke({"bogus"}).status == 2);
    CHECK(invoke({"solve", "--unknown-flag", "1"}).status == 2);
    CHECK(invoke({"--help"}).status == 0);
}

TEST_CASE("config files and flag overrides") {
    const fs::path dir = scratch("configfile");
    const fs::path cfg = dir / "cfg.json";
    write_text_file(cfg.string(), R"({"command": "constant", "kernel": {"alpha": 1}})");
    REQUIRE(invoke({"run", "--config", cfg.string(), "--output", (dir / "a.json").string()}).status == 0);
    CHECK(load(dir / "a.json")["results"]["value"].get<double>() ==
          doctest::Approx(12.0131687574450377).epsilon(1e-12));
    // Flags override the file; the subcommand overrides the file's command.
    REQUIRE(invoke({"constant", "--config", cfg.string(), "--alpha", "2", "--output", (dir / "b.json").string()})
                .status == 0);
    CHECK(load(dir / "b.json")["results"]["value"].get<double>() == doctest::Approx(4.0));
    // Errors in a file carry its line number.
    write_text_file(cfg.string(), "{\n\"command\": \"solve\",\n\"solver\": {\n\"damping\": 2}}");
    const Run r = invoke({"run", "--config", cfg.string()});
    CHECK(r.status == 2);
    CHECK(json::parse(r.err)["line"] == 4);
    CHECK(invoke({"run", "--config", (dir / "missing.json").string()}).status == 3);
}

TEST_CASE("I/O failures exit with status 3") {
    const Run r = invoke({"constant", "--output", "/nonexistent-dir/x/y.json"});
    CHECK(r.status == 3);
    CHECK(json::parse(r.err)["error"] == "io");
    CHECK_THROWS_AS(write_text_file("/nonexistent-dir/x", "1"), IoError);
    CHECK_THROWS_AS(read_text_file("/nonexistent-dir/x"), IoError);
}

TEST_CASE("output directory from the environment") {
    const fs::path dir = scratch("envdir");
    ::setenv("HHLS_OUTPUT_DIR", dir.string().c_str(), 1);
    const Run r = invoke({"constant"});
    ::unsetenv("HHLS_OUTPUT_DIR");
    REQUIRE(r.status == 0);
    CHECK(fs::exists(dir / "constant.json"));
    CHECK(r.out == (dir / "constant.json").string() + "\n");
}

TEST_CASE("series emission") {
    const fs::path dir = scratch("series");
    // Empty trace: header-only CSV.
    write_trace_csv({}, (dir / "t.csv").string());
    CHECK(read_text_file((dir / "t.csv").string()) == "iteration,energy\n");

    // Single-cell solve: one data row with the closed-form value.
    const GaugeDomain d = GaugeDomain::indicator(
        1, [](const HPoint& p) { return p.z_norm2() < 0.01 && std::abs(p.t()) < 0.1; }, Box{{-1, -1, -1}, {1, 1, 1}});
    const auto g = build_grid(d, 0.9);
    REQUIRE(g->size() == 1);
    SolverConfig c;
    c.q = 1.8;
    const SolveReport rep = solve_subcritical(g, c);
    emit_series(rep, "csv", (dir / "one.csv").string());
    const std::string cells = read_text_file((dir / "one.csv").string());
    std::istringstream in(cells);
    std::string header, row, extra;
    std::getline(in, header);
    std::getline(in, row);
    CHECK_FALSE(std::getline(in, extra));
    CHECK(header == "cell_index,x1,y1,t,weight,value");
    const double value = std::stod(row.substr(row.rfind(',') + 1));
    CHECK(value == doctest::Approx(std::pow(g->cell_volume(), -1.0 / 1.8)).epsilon(1e-14));
    CHECK(fs::exists(dir / "one_trace.csv"));

    // JSON series reproduce the grid function bit-exactly.
    const SolveReport big = solve_subcritical(build_grid(GaugeDomain::cylinder(1, 1.0), 0.25), c);
    emit_series(big, "json", (dir / "big.json").string());
    const json s = load(dir / "big.json");
    const auto& rows = s["solution"]["rows"];
    REQUIRE(rows.size() == big.solution.size());
    for (std::size_t i = 0; i < rows.size(); ++i) REQUIRE(rows[i].back().get<double>() == big.solution.values[i]);
    CHECK(s["energy_trace"]["rows"].size() == big.energy_trace.size());
    CHECK_THROWS_AS(emit_series(big, "xml", (dir / "x").string()), UsageError);
}

TEST_CASE("solve artifact in csv format") {
    const fs::path dir = scratch("csvsolve");
    const Run r = invoke({"solve", "--h", "0.25", "--format", "csv", "--output", (dir / "s.csv").string()});
    REQUIRE(r.status == 0);
    CHECK(r.out == (dir / "s.json").string() + "\n");
    const json a = load(dir / "s.json");
    CHECK(schema_check::validate(a, schema()).empty());
    CHECK(a["files"].size() == 2);
    CHECK(fs::exists(dir / "s.csv"));
    CHECK(fs::exists(dir / "s_trace.csv"));
    CHECK(a["results"]["converged"] == true);
}

TEST_CASE("degenerate math is reported in-band") {
    // A constant zero multiplier cannot occur from the CLI; a non-converging
    // solve is still a successful run.
    const fs::path dir = scratch("nonconv");
    const Run r = invoke({"solve", "--h", "0.25", "--max-iter", "2", "--no-cells", "--output", (dir / "s.json").string()});
    REQUIRE(r.status == 0);
    const json a = load(dir / "s.json");
    CHECK(a["results"]["converged"] == false);
    CHECK_FALSE(a["results"]["diagnostic"].get<std::string>().empty());
    const bool dumped = a.contains("series") && a["series"].contains("solution");
    CHECK_FALSE(dumped);
    CHECK(schema_check::validate(a, schema()).empty());
}

TEST_CASE("schema validator rejects malformed artifacts") {
    const fs::path dir = scratch("schema");
    REQUIRE(invoke({"constant", "--output", (dir / "c.json").string()}).status == 0);
    json a = load(dir / "c.json");
    REQUIRE(schema_check::validate(a, schema()).empty());
    json b = a;
    b.erase("config");
    CHECK_FALSE(schema_check::validate(b, schema()).empty());
    b = a;
    b["results"].erase("value");
    CHECK_FALSE(schema_check::validate(b, schema()).empty());
    b = a;
    b["config"]["domain"]["kind"] = "sphere";
    CHECK_FALSE(schema_check::validate(b, schema()).empty());
    b = a;
    b["extra"] = 1;
    INFO(join(schema_check::validate(b, schema())));
    CHECK_FALSE(schema_check::validate(b, schema()).empty());
}
