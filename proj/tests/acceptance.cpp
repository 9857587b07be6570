// Acceptance suite: one PASS/FAIL line per criterion, with the measured values and
// the wall time of each check. Exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hhls/cli.hpp"
#include "hhls/domain.hpp"
#include "hhls/hgroup.hpp"
#include "hhls/kernel.hpp"
#include "hhls/solver.hpp"
#include "schema_check.hpp"

using namespace hhls;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void criterion(int id, double budget_s, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream timing;
    timing << "time " << secs << " s (budget " << budget_s << " s)";
    o.require(secs < budget_s, "runtime budget");
    if (!o.pass) ++failures;
    std::printf("%s criterion %d: %s;%s\n", o.pass ? "PASS" : "FAIL", id, timing.str().c_str(),
                o.detail.str().c_str());
    std::fflush(stdout);
}

// D_{n,alpha} written out with the C library Gamma.
double sharp_constant_oracle(int n, double alpha) {
    const double Q = 2.0 * n + 2.0;
    const double nf = std::tgamma(n + 1.0);
    const double base = std::pow(pi, n + 1.0) / (std::pow(2.0, n - 1.0) * nf);
    return std::pow(base, (Q - alpha) / Q) * nf * std::tgamma(alpha / 2.0) / std::pow(std::tgamma((Q + alpha) / 4.0), 2);
}

HPoint random_point(std::mt19937_64& rng, int n, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> x(n), y(n);
    for (int j = 0; j < n; ++j) {
        x[j] = u(rng);
        y[j] = u(rng);
    }
    return HPoint(x, y, u(rng));
}

double max_abs_diff(const HPoint& a, const HPoint& b, double& scale) {
    const auto ca = a.coords(), cb = b.coords();
    double m = 0.0;
    scale = 1.0;
    for (std::size_t i = 0; i < ca.size(); ++i) {
        m = std::max(m, std::abs(ca[i] - cb[i]));
        scale = std::max(scale, std::abs(ca[i]));
    }
    return m;
}

GaugeDomain gauge_ball(double R) {
    return GaugeDomain::indicator(
        1, [R](const HPoint& p) { return gauge_norm(p) < R; }, Box{{-R, -R, -R * R}, {R, R, R * R}}, "gauge ball");
}

SolverConfig solve_config(double q, double lambda) {
    SolverConfig c;
    c.q = q;
    c.spec = KernelSpec(1, 2.0, 0, lambda);
    return c;
}

bool monotone_trace(const SolveReport& r, double tol_energy) {
    for (std::size_t k = 1; k < r.energy_trace.size(); ++k) {
        if (r.energy_trace[k] < r.energy_trace[k - 1] - 10.0 * tol_energy * std::abs(r.energy_trace[k - 1])) {
            return false;
        }
    }
    return true;
}

bool strictly_positive(const GridFunction& f) {
    return std::all_of(f.values.begin(), f.values.end(), [](double v) { return v > 0.0; });
}

// Criterion-7 solutions, shared with criteria 8 and 10.
struct Criterion7 {
    SolveReport coarse, fine;
    bool ready = false;
};
Criterion7 c7;

std::string tool_run(const std::vector<std::string>& args_in, const fs::path& dir, int& status) {
    std::vector<std::string> args = {"hhls"};
    args.insert(args.end(), args_in.begin(), args_in.end());
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    ::setenv("HHLS_OUTPUT_DIR", dir.string().c_str(), 1);
    std::ostringstream out, err;
    status = cli::main_entry(static_cast<int>(argv.size()), argv.data(), out, err);
    ::unsetenv("HHLS_OUTPUT_DIR");
    std::string path = out.str();
    while (!path.empty() && path.back() == '\n') path.pop_back();
    return status == 0 ? path : err.str();
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");

    criterion(1, 1e-3, [](Outcome& o) {
        const double d12 = sharp_constant(1, 2.0);
        const double d11 = sharp_constant(1, 1.0);
        // High-precision reference value and the C-library Gamma evaluation.
        const double ref11 = 12.0131687574450377255427380465;
        const double oracle11 = sharp_constant_oracle(1, 1.0);
        o.detail << " D(1,2)=" << d12 << " D(1,1)=" << d11;
        o.require(std::abs(d12 - 4.0) <= 1e-12, "D(1,2) = 4");
        o.require(std::abs(d11 - ref11) <= 1e-10, "D(1,1) vs high-precision reference");
        o.require(std::abs(d11 - oracle11) <= 1e-10, "D(1,1) vs tgamma evaluation");
    });

    criterion(2, 1.0, [](Outcome& o) {
        std::mt19937_64 rng(20240611);
        std::uniform_real_distribution<double> logr(-3.0, 3.0);
        const int cases = 10000;
        int bad_assoc = 0, bad_identity = 0, bad_inverse = 0, bad_homog = 0, bad_invariance = 0;
        for (int k = 0; k < cases; ++k) {
            const int n = 1 + k % 3;
            const HPoint a = random_point(rng, n, 10.0), b = random_point(rng, n, 10.0), c = random_point(rng, n, 10.0);
            double scale = 1.0;
            const HPoint l = mul(mul(a, b), c), r = mul(a, mul(b, c));
            if (max_abs_diff(l, r, scale) > 1e-12 * scale) ++bad_assoc;
            const HPoint e(n);
            if (!(mul(e, a) == a && mul(a, e) == a)) ++bad_identity;
            if (!(mul(a, inv(a)) == e && mul(inv(a), a) == e)) ++bad_inverse;
            const double rr = std::pow(10.0, logr(rng));
            if (std::abs(gauge_norm(dilate(rr, a)) - rr * gauge_norm(a)) > 1e-12 * rr * gauge_norm(a)) ++bad_homog;
            const double d = dist(a, b);
            if (std::abs(dist(mul(c, a), mul(c, b)) - d) > 1e-12 * d) ++bad_invariance;
        }
        o.detail << " " << cases << " cases per law; violations assoc=" << bad_assoc << " identity=" << bad_identity
                 << " inverse=" << bad_inverse << " homogeneity=" << bad_homog << " left-invariance=" << bad_invariance;
        o.require(bad_assoc + bad_identity + bad_inverse + bad_homog + bad_invariance == 0, "group laws");
    });

    criterion(3, 10.0, [](Outcome& o) {
        const double exact = pi * pi / 2.0;
        const double grid_vol = build_grid(gauge_ball(1.0), 0.05)->volume();
        std::mt19937_64 rng(12345);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const int samples = 400000;
        int hits = 0;
        for (int k = 0; k < samples; ++k) {
            const double x = u(rng), y = u(rng), t = u(rng);
            if (gauge_norm(HPoint::of(x, y, t)) < 1.0) ++hits;
        }
        const double mc_vol = 8.0 * hits / samples;
        const double v1 = build_grid(gauge_ball(1.0), 0.1)->volume();
        const double v2 = build_grid(gauge_ball(2.0), 0.2)->volume();
        const double ratio = v2 / v1;
        o.detail << " grid=" << grid_vol << " (rel " << std::abs(grid_vol / exact - 1) << ") mc=" << mc_vol << " (rel "
                 << std::abs(mc_vol / exact - 1) << ") |B2|/|B1|=" << ratio;
        o.require(std::abs(grid_vol / exact - 1.0) <= 0.005, "grid volume within 0.5%");
        o.require(std::abs(mc_vol / exact - 1.0) <= 0.01, "Monte Carlo volume within 1%");
        o.require(std::abs(ratio / 16.0 - 1.0) <= 0.01, "dilation ratio 2^Q within 1%");
    });

    criterion(4, 120.0, [](Outcome& o) {
        const KernelSpec spec(1, 2.0);
        const double qa = spec.q_alpha();
        const auto g = build_grid(GaugeDomain::cylinder(1, 1.0), 0.2);
        const KernelOperator op = KernelOperator::riesz(g, spec, 0);
        std::mt19937_64 rng(4242);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double worst = 0.0;
        for (int k = 0; k < 50; ++k) {
            std::vector<double> v(g->size());
            switch (k % 5) {
                case 0:  // i.i.d. uniform
                    for (double& e : v) e = u(rng);
                    break;
                case 1:  // sparse spikes
                    for (double& e : v) e = u(rng) < 0.05 ? u(rng) : 0.0;
                    break;
                case 2: {  // a bump of random width around a random cell
                    const HPoint c = g->center(static_cast<std::size_t>(u(rng) * g->size()) % g->size());
                    const double w = 0.05 + u(rng);
                    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(-std::pow(dist(g->center(i), c) / w, 2));
                    break;
                }
                case 3: {  // a dilated extremal profile
                    const double eps = 0.05 + u(rng);
                    for (std::size_t i = 0; i < v.size(); ++i) {
                        v[i] = conformal_family(g->center(i), eps, HPoint(1), spec);
                    }
                    break;
                }
                default:  // heavy-tailed
                    for (double& e : v) e = std::pow(u(rng), 6.0);
                    break;
            }
            worst = std::max(worst, energy_quotient(op, GridFunction(g, v), qa));
        }
        o.detail << " max quotient=" << worst << " (bound " << 4.0 * 1.05 << ")";
        o.require(worst <= 4.0 * 1.05, "quotient below 4 (1 + 5%)");
    });

    criterion(5, 300.0, [](Outcome& o) {
        const KernelSpec spec(1, 2.0);
        const double qa = spec.q_alpha();
        GridOptions go;
        go.t_spacing = 2.0;
        std::vector<double> quotients;
        for (double R : {2.0, 4.0, 8.0}) {
            const auto g = build_grid(GaugeDomain::cylinder(1, R), 0.25, go);
            const GridFunction H = sample(g, [&](const HPoint& p) { return extremal_H(p, spec); });
            quotients.push_back(energy_quotient(H, spec, qa));
            o.detail << " R=" << R << ":" << quotients.back();
        }
        o.require(quotients[0] < quotients[1] && quotients[1] < quotients[2], "monotone in R");
        o.require(quotients[2] >= 0.8 * 4.0, "at least 80% of 4 at R = 8");
    });

    criterion(6, 120.0, [](Outcome& o) {
        const KernelSpec spec(1, 2.0);
        const double qa = spec.q_alpha();
        GridOptions go;
        go.t_spacing = 0.25;
        const auto g = build_grid(GaugeDomain::cylinder(1, 16.0), 0.25, go);
        std::vector<double> norms;
        for (double eps : {0.5, 1.0}) {
            double s = 0.0;
            for (std::size_t i = 0; i < g->size(); ++i) {
                s += g->weight(i) * std::pow(conformal_family(g->center(i), eps, HPoint(1), spec), qa);
            }
            norms.push_back(std::pow(s, 1.0 / qa));
            o.detail << " eps=" << eps << ":" << norms.back();
        }
        const double rel = std::abs(norms[0] - norms[1]) / std::max(norms[0], norms[1]);
        o.detail << " rel diff=" << rel;
        o.require(rel <= 0.02, "norms agree within 2%");
    });

    criterion(7, 600.0, [](Outcome& o) {
        const SolverConfig cfg = solve_config(1.8, 0.0);
        c7.coarse = solve_subcritical(build_grid(GaugeDomain::cylinder(1, 1.0), 0.2), cfg);
        c7.fine = solve_subcritical(build_grid(GaugeDomain::cylinder(1, 1.0), 0.1), cfg);
        c7.ready = true;
        for (const SolveReport* r : {&c7.coarse, &c7.fine}) {
            o.detail << " h=" << r->solution.grid->h() << ": mu=" << r->multiplier << " res=" << r->el_residual
                     << " iters=" << r->iterations;
            o.require(r->converged, "converged");
            o.require(r->el_residual < 1e-8, "el_residual < 1e-8");
            o.require(strictly_positive(r->solution), "strictly positive");
            o.require(monotone_trace(*r, cfg.tol_energy), "monotone energy trace");
        }
        const double rel = std::abs(c7.coarse.multiplier - c7.fine.multiplier) / c7.fine.multiplier;
        o.detail << " multiplier rel diff=" << rel;
        o.require(rel <= 0.03, "multipliers agree within 3%");
    });

    criterion(8, 120.0, [](Outcome& o) {
        if (!c7.ready) throw std::runtime_error("criterion 7 solutions unavailable");
        const KernelSpec spec(1, 2.0);
        const double q = 1.8, p = conjugate_exponent(q);
        for (const SolveReport* r : {&c7.coarse, &c7.fine}) {
            const GridFunction F = to_pohozaev_form(r->solution, r->multiplier, q);
            const auto nodes = boundary_quadrature(F.grid->domain(), 8);
            const PohozaevTerms t = pohozaev_residual(F, p, spec, nodes, BoundaryValues::integral_extension);
            o.detail << " h=" << F.grid->h() << ": rel_residual=" << t.rel_residual;
            o.require(t.rel_residual <= 0.05, "Pohozaev residual within 5%");
        }
        double worst = 0.0;
        int tested = 0;
        for (int n = 1; n <= 4; ++n) {
            for (double alpha = 0.25; alpha < 2.0 * n + 2.0; alpha += 0.25) {
                const KernelSpec s(n, alpha);
                const double c = pohozaev_coefficient(n, alpha, s.p_alpha());
                worst = std::max(worst, std::abs(c) / s.Q());
                ++tested;
            }
        }
        o.detail << " critical coefficient max |.|/Q=" << worst << " over " << tested << " (n,alpha)";
        o.require(worst <= 1e-14, "critical coefficient vanishes");
    });

    criterion(9, 900.0, [](Outcome& o) {
        const auto g = build_grid(GaugeDomain::cylinder(1, 1.0), 0.2);
        const KernelSpec spec(1, 2.0, 0, 1.0);
        const double qa = spec.q_alpha();
        const SolveReport r = solve_critical_via_limit(g, spec, {1.6, 1.5, 1.4, qa}, solve_config(1.6, 1.0));
        o.detail << " stages:";
        for (std::size_t k = 0; k < r.stage_q.size(); ++k) o.detail << " q=" << r.stage_q[k] << "->" << r.stage_multipliers[k];
        o.detail << " res=" << r.el_residual;
        o.require(r.converged && r.failed_stage == -1, "continuation converged");
        o.require(r.q == qa, "final stage at q_alpha");
        o.require(strictly_positive(r.solution), "positive solution");

        const KernelSpec neg(1, 2.0, 0, -0.2);
        const ProbeResult pr = nonexistence_probe(g, neg, neg.q_alpha(), solve_config(neg.q_alpha(), -0.2));
        o.detail << " probe verdict=" << verdict_name(pr.verdict) << " iters=" << pr.iterations
                 << " res=" << pr.el_residual;
        o.require(!(pr.verdict == ProbeResult::Verdict::converged_nontrivial && pr.el_residual < 1e-8),
                  "probe did not find a nontrivial solution");
    });

    criterion(10, 60.0, [](Outcome& o) {
        if (!c7.ready) throw std::runtime_error("criterion 7 solutions unavailable");
        const KernelSpec spec(1, 2.0);
        const double q = 1.8;
        std::size_t sampled = 0;
        bool origin_ok = true, range_ok = true;
        for (const SolveReport* r : {&c7.coarse, &c7.fine}) {
            const RescaleResult b = blowup_rescale(r->solution, q, spec);
            const Grid& g = *r->solution.grid;
            origin_ok = origin_ok && b.g(HPoint(1)) == 1.0;
            const HPoint peak_inv = inv(b.peak);
            auto check = [&](const HPoint& xi) {
                // Preimage of xi under s -> peak . delta_mu(s).
                const double v = b.g(dilate(1.0 / b.mu, mul(peak_inv, xi)));
                range_ok = range_ok && v > 0.0 && v <= 1.0;
                ++sampled;
            };
            for (std::size_t i = 0; i < g.size(); ++i) check(g.center(i));
            std::mt19937_64 rng(99);
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            for (int k = 0; k < 2000;) {
                const HPoint xi = HPoint::of(u(rng), u(rng), u(rng));
                if (!contains(g.domain(), xi)) continue;
                check(xi);
                ++k;
            }
        }
        o.detail << " g(0)=1: " << (origin_ok ? "yes" : "no") << ", " << sampled << " sampled points in (0,1]: "
                 << (range_ok ? "yes" : "no");
        o.require(origin_ok, "g(0) = 1");
        o.require(range_ok, "0 < g <= 1");

        const KernelSpec s1(1, 2.0, 0, 1.0);
        const double qa = s1.q_alpha();
        const auto g = build_grid(GaugeDomain::cylinder(1, 1.0), 0.1);
        const KernelOperator op0 = KernelOperator::riesz(g, s1, 0), op1 = KernelOperator::riesz(g, s1, 1);
        std::vector<double> ratios;
        for (double eps : {1.0, 0.5, 0.25}) {
            const GridFunction fe = sample(g, [&](const HPoint& p) { return conformal_family(p, eps, HPoint(1), s1); });
            ratios.push_back(lambda_term_diagnostic(op0, op1, fe, 1.0, qa, 0.5).peak_ratio);
            o.detail << " eps=" << eps << ":" << ratios.back();
        }
        o.require(ratios[0] > ratios[1] && ratios[1] > ratios[2], "lambda-term diagnostic decreasing");
    });

    criterion(11, 60.0, [](Outcome& o) {
        const json schema = json::parse(cli::read_text_file(HHLS_SCHEMA_PATH));
        const std::vector<std::vector<std::string>> runs = {
            {"constant", "--n", "2", "--alpha", "1.5"},
            {"ball-volume", "--h", "0.1", "--samples", "20000"},
            {"quotient", "--R", "2", "--h", "0.4", "--f", "conformal", "--eps", "0.5"},
            {"solve", "--h", "0.25"},
            {"critical", "--h", "0.25", "--lambda", "1", "--schedule", "1.6,1.5,q_alpha"},
            {"pohozaev", "--h", "0.25"},
            {"probe", "--h", "0.25", "--lambda", "-0.2"},
            {"rescale", "--h", "0.25", "--lambda", "0.5", "--samples", "50"},
            {"solve", "--h", "0.25", "--format", "csv"},
        };
        const fs::path base = fs::temp_directory_path() / "hhls_acceptance_cli";
        fs::remove_all(base);
        int schema_ok = 0, config_ok = 0, stable = 0;
        for (std::size_t k = 0; k < runs.size(); ++k) {
            std::vector<std::string> texts;
            std::vector<std::vector<std::string>> companions;
            for (const char* pass : {"a", "b"}) {
                const fs::path dir = base / pass;
                fs::create_directories(dir);
                int status = 0;
                const std::string path = tool_run(runs[k], dir, status);
                if (status != 0) throw std::runtime_error(runs[k][0] + " failed: " + path);
                texts.push_back(cli::read_text_file(path));
                std::vector<std::string> extra;
                const json a = json::parse(texts.back());
                if (a.contains("files")) {
                    for (const auto& f : a["files"]) {
                        extra.push_back(cli::read_text_file((fs::path(path).parent_path() / f.get<std::string>()).string()));
                    }
                }
                companions.push_back(extra);
            }
            const json a = json::parse(texts[0]);
            const auto errors = schema_check::validate(a, schema);
            if (errors.empty()) ++schema_ok;
            for (const auto& e : errors) o.detail << " schema(" << runs[k][0] << "): " << e;
            // The embedded config reproduces itself through the parser.
            const json cfg = a.at("config");
            if (a.at("command") == cfg.at("command") && cli::to_json(cli::parse_config(cfg)) == cfg) ++config_ok;
            if (texts[0] == texts[1] && companions[0] == companions[1]) ++stable;
        }
        o.detail << " " << runs.size() << " runs: schema-valid " << schema_ok << ", config round-trip " << config_ok
                 << ", byte-stable " << stable;
        const int total = static_cast<int>(runs.size());
        o.require(schema_ok == total, "schema-valid artifacts");
        o.require(config_ok == total, "embedded config round-trips");
        o.require(stable == total, "byte-stable deterministic output");
        fs::remove_all(base);
    });

    std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "SOME FAILED", failures);
    return failures == 0 ? 0 : 1;
}
