#include <cstdio>
#include <fstream>
#include <sstream>

#include "hhls/cli.hpp"

namespace hhls::cli {

using nlohmann::json;

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> cell_columns(int n) {
    std::vector<std::string> cols{"cell_index"};
    for (int j = 1; j <= n; ++j) cols.push_back("x" + std::to_string(j));
    for (int j = 1; j <= n; ++j) cols.push_back("y" + std::to_string(j));
    cols.push_back("t");
    cols.push_back("weight");
    cols.push_back("value");
    return cols;
}

}  // namespace

json cells_json(const GridFunction& f) {
    json rows = json::array();
    if (f.grid) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            json row = json::array({i});
            for (double c : f.grid->center(i).coords()) row.push_back(c);
            row.push_back(f.grid->weight(i));
            row.push_back(f.values[i]);
            rows.push_back(std::move(row));
        }
    }
    return {{"columns", cell_columns(f.grid ? f.grid->n() : 1)}, {"rows", rows}};
}

json trace_json(const std::vector<double>& trace) {
    json rows = json::array();
    for (std::size_t k = 0; k < trace.size(); ++k) rows.push_back(json::array({k, trace[k]}));
    return {{"columns", {"iteration", "energy"}}, {"rows", rows}};
}

void write_cells_csv(const GridFunction& f, const std::string& path) {
    std::ostringstream os;
    const auto cols = cell_columns(f.grid ? f.grid->n() : 1);
    for (std::size_t a = 0; a < cols.size(); ++a) os << (a ? "," : "") << cols[a];
    os << "\n";
    if (f.grid) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            os << i;
            for (double c : f.grid->center(i).coords()) os << "," << format_double(c);
            os << "," << format_double(f.grid->weight(i)) << "," << format_double(f.values[i]) << "\n";
        }
    }
    write_text_file(path, os.str());
}

void write_trace_csv(const std::vector<double>& trace, const std::string& path) {
    std::ostringstream os;
    os << "iteration,energy\n";
    for (std::size_t k = 0; k < trace.size(); ++k) os << k << "," << format_double(trace[k]) << "\n";
    write_text_file(path, os.str());
}

void emit_series(const SolveReport& report, const std::string& format, const std::string& path) {
    if (format == "csv") {
        std::string stem = path;
        if (stem.size() > 4 && stem.compare(stem.size() - 4, 4, ".csv") == 0) stem.resize(stem.size() - 4);
        write_cells_csv(report.solution, stem + ".csv");
        write_trace_csv(report.energy_trace, stem + "_trace.csv");
        return;
    }
    if (format != "json") throw UsageError("output.format: must be 'json' or 'csv'");
    const json j = {{"energy_trace", trace_json(report.energy_trace)}, {"solution", cells_json(report.solution)}};
    write_text_file(path, j.dump(2) + "\n");
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("failed reading '" + path + "'");
    return ss.str();
}

}  // namespace hhls::cli
