#pragma once

// Experiment configuration, orchestration and artifact emission for the `hhls` tool.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hhls/errors.hpp"
#include "hhls/solver.hpp"

namespace hhls::cli {

inline constexpr int kSchemaVersion = 1;

enum class Command { constant, ball_volume, quotient, solve, critical, pohozaev, probe, rescale };

const char* command_name(Command c);
Command parse_command(const std::string& s);
const std::vector<std::string>& command_names();

// Validation failure of an experiment config; `field` is the dotted config path and
// `line` the 1-based line in the config text (0 when the value came from a flag or default).
class ConfigError : public UsageError {
public:
    ConfigError(std::string field, const std::string& message, int line = 0);
    const std::string& field() const { return field_; }
    int line() const { return line_; }

private:
    std::string field_;
    int line_;
};

struct DomainConfig {
    std::string kind = "cylinder";  // cylinder | gauge_ball
    std::vector<double> center;     // 2n + 1 coordinates; empty = origin
    double R = 1.0;
    double h = 0.2;
    std::optional<double> ht;  // t-spacing; default from the grid rule
};

struct SolverSection {
    std::optional<double> q;  // default: 1.8 for solve-type commands, q_alpha for probe
    double tol_residual = 1e-8;
    double tol_energy = 1e-12;
    int max_iter = 500;
    double damping = 1.0;
    std::string init = "constant";
    double init_scale = 1.0;
    std::vector<double> schedule;           // critical
    int boundary_order = 8;                 // pohozaev
    std::string boundary_values = "integral";  // pohozaev: integral | nearest
    double delta = 0.5;                     // rescale: lambda-term diagnostic exponent
};

struct InputSection {
    std::string f = "extremal";  // quotient: extremal | conformal | constant
    double eps = 1.0;
    std::optional<double> q;     // quotient exponent; default q_alpha
    int samples = 200000;        // ball-volume Monte Carlo samples / rescale sample points
    unsigned long long seed = 12345;
    bool include_cells = true;   // dump grid functions in solve-type artifacts
};

struct OutputSection {
    std::string path;  // empty: <output dir>/<command>.<format>
    std::string format = "json";
};

struct RuntimeSection {
    int threads = 1;
    bool deterministic = true;
};

struct ExperimentConfig {
    Command command = Command::constant;
    int n = 1;
    double alpha = 2.0;
    double lambda = 0.0;
    DomainConfig domain;
    SolverSection solver;
    InputSection input;
    OutputSection output;
    RuntimeSection runtime;

    KernelSpec kernel() const { return KernelSpec(n, alpha, 0, lambda); }
};

// Parses and validates a config object. `text` is the original source (for line numbers).
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& text = "");
// Parses JSON text; syntax errors become ConfigError with the offending line.
ExperimentConfig parse_config_text(const std::string& text);
// Fully resolved config (defaults filled in), as embedded in artifacts.
nlohmann::json to_json(const ExperimentConfig& cfg);

// Resolved artifact and series paths: the JSON artifact always exists; CSV series
// only when output.format == "csv".
struct OutputPaths {
    std::string artifact;
    std::string cells_csv;
    std::string trace_csv;
};
OutputPaths resolve_output(const ExperimentConfig& cfg);

// Runs the command and returns the artifact (does not write files).
nlohmann::json execute(const ExperimentConfig& cfg);
// execute() plus file output. Returns the artifact.
nlohmann::json run(const ExperimentConfig& cfg);

// Series tables.
nlohmann::json cells_json(const GridFunction& f);
nlohmann::json trace_json(const std::vector<double>& trace);
void write_cells_csv(const GridFunction& f, const std::string& path);
void write_trace_csv(const std::vector<double>& trace, const std::string& path);
// energy_trace and solution dump of a report: JSON file (format json) or the two CSV
// tables `path` and `<stem>_trace.csv` (format csv).
void emit_series(const SolveReport& report, const std::string& format, const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Entry point of the command-line tool; returns the process exit status
// (0 ran, 2 config error, 3 I/O error, 1 internal error).
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace hhls::cli
