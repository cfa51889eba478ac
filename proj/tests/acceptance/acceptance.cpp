// Acceptance driver: `acceptance <criterion|all> [--out dir]`.
// Prints one PASS/FAIL line per criterion; exit code 0 iff every requested criterion passed.

#include "hsflow/errors.hpp"
#include "hsflow/fem.hpp"
#include "hsflow/lsa.hpp"
#include "hsflow/runner.hpp"
#include "hsflow/schemes.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace hsflow;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path g_out = "acceptance_out";

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

TriangleMesh make_mesh(const PolarShapeSpec& spec, std::size_t nb, double h) {
    MeshPolicy p;
    p.boundary_vertex_count = nb;
    p.interior_target_edge = h;
    return generate_mesh(sample_polar_boundary(spec, nb), p);
}

Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
    return v;
}

PolarShapeSpec random_shape(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> amp(-0.03, 0.03);
    PolarShapeSpec s{1.0, {}};
    for (int m = 2; m <= 5; ++m) s.modes.push_back({m, amp(rng), amp(rng)});
    return s;
}

// ---- experiment runs shared by criteria 1 to 5 ----

struct ExperimentRun {
    json verify;
    double wall_seconds = 0.0;
};

fs::path cache_path(Experiment e) { return g_out / ("run_" + experiment_name(e) + ".json"); }

bool cache_fresh(const fs::path& p) {
    std::error_code ec;
    const auto exe = fs::last_write_time("/proc/self/exe", ec);
    return fs::exists(p) && (ec || fs::last_write_time(p) >= exe);
}

ExperimentRun run_experiment(Experiment e, bool force) {
    const fs::path cache = cache_path(e);
    if (!force && cache_fresh(cache)) {
        std::ifstream in(cache);
        const json j = json::parse(in);
        return {j.at("verify"), j.at("wall_seconds").get<double>()};
    }
    std::ostringstream yaml;
    yaml << "experiment: " << experiment_name(e) << "\nscheme: newton\nboundary_vertices: 256\ninterior_edge: 0.04\n"
         << "output_stride: " << (e == Experiment::m2 ? 10 : 5) << "\n";
    const RunConfig cfg = parse_run_config(yaml.str());
    const auto t0 = std::chrono::steady_clock::now();
    const VerifyReport rep = verify_experiment(cfg);
    ExperimentRun run{json::parse(verify_json(rep)), seconds_since(t0)};
    fs::create_directories(g_out);
    std::ofstream(cache) << json{{"verify", run.verify}, {"wall_seconds", run.wall_seconds}}.dump(1) << '\n';
    return run;
}

Outcome decay_criterion(Experiment e, double runtime_limit) {
    const ExperimentRun r = run_experiment(e, true);
    const auto& v = r.verify;
    const double tol = experiment_preset(e).rate_tolerance;
    bool ok = r.wall_seconds <= runtime_limit;
    std::string d;
    for (const auto& [name, err] : v.at("rel_err").items()) {
        ok = ok && std::abs(err.get<double>()) <= tol;
        d += fmt("%s=%.4f (pred %.1f, rel %.2e) ", name.c_str(), v.at("fitted").at(name).get<double>(),
                 v.at("predicted").at(name).get<double>(), err.get<double>());
    }
    d += fmt("tol %.0e, %.0fs", tol, r.wall_seconds);
    return {ok, d};
}

Outcome c01() { return decay_criterion(Experiment::m2, 600.0); }
Outcome c02() { return decay_criterion(Experiment::m3, 600.0); }
Outcome c03() { return decay_criterion(Experiment::mixed, 900.0); }

// First-order estimate of the relative area change of forward-Euler vertex advection:
// sum over modes of dt * sigma (m^2 - 1) m (m - 1) delta_m^2 / 2 on the unit disk.
double predicted_area_drift(Experiment e) {
    const auto p = experiment_preset(e);
    double s = 0.0;
    for (const auto& md : p.shape.modes) {
        const double m = md.m;
        s += 0.5 * (m * m - 1.0) * m * (m - 1.0) * (md.cos_amp * md.cos_amp + md.sin_amp * md.sin_amp) / 2.0;
    }
    return p.dt * s;
}

Outcome c04() {
    bool ok = true;
    std::string d;
    for (Experiment e : {Experiment::m2, Experiment::m3, Experiment::mixed}) {
        const auto v = run_experiment(e, false).verify;
        const double area = v.at("area_drift"), ucm = v.at("ucm_max");
        ok = ok && area <= 1e-6 && ucm <= 1e-6;
        d += fmt("%s: area %.2e (dt-estimate %.2e) ucm %.1e; ", experiment_name(e).c_str(), area,
                 predicted_area_drift(e), ucm);
    }
    return {ok, d + "tol 1e-6"};
}

Outcome c05() {
    bool ok = true;
    std::string d;
    for (Experiment e : {Experiment::m2, Experiment::m3, Experiment::mixed}) {
        const bool mono = run_experiment(e, false).verify.at("perimeter_monotone");
        ok = ok && mono;
        d += fmt("%s monotone=%s ", experiment_name(e).c_str(), mono ? "yes" : "no");
    }
    return {ok, d + "(rel tol 1e-10 per step)"};
}

// ---- boundary form oracles ----

double max_edge_stretch(const TriangleMesh& mesh, const Vector& w, double dt) {
    const auto& loop = mesh.boundary_loop();
    double m = 0.0;
    for (std::size_t k = 0; k < loop.size(); ++k) {
        const auto i = static_cast<std::size_t>(loop[k]);
        const auto j = static_cast<std::size_t>(loop[(k + 1) % loop.size()]);
        const Vec2 dw(w[2 * j] - w[2 * i], w[2 * j + 1] - w[2 * i + 1]);
        m = std::max(m, dt * dw.norm() / (mesh.vertex(j) - mesh.vertex(i)).norm());
    }
    return m;
}

Outcome c06() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    const double sigma = 0.5, dt = 0.1;
    const TriangleMesh mesh = make_mesh(random_shape(rng), 96, 0.15);
    const auto n = static_cast<Eigen::Index>(VelocitySpace(mesh).ndofs());
    double worst = 1e300, worst_err = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Vector u = random_vector(rng, n, 1.0);
        u *= 0.5 / max_edge_stretch(mesh, u, dt);
        Vector v = random_vector(rng, n, 1.0);
        v *= 5.0 / max_edge_stretch(mesh, v, dt);
        const double exact = dt / sigma * assemble_perimeter_gradient(mesh, u, dt, sigma).dot(v);
        std::vector<double> err;
        for (double eps : {1e-2, 1e-3, 1e-4}) {
            const double fd =
                (deformed_perimeter(mesh, u + eps * v, dt) - deformed_perimeter(mesh, u - eps * v, dt)) / (2.0 * eps);
            err.push_back(std::abs(fd - exact));
        }
        // order from the least-squares slope of log err against log eps
        const double slope = (std::log10(err[0]) - std::log10(err[2])) / 2.0;
        worst = std::min(worst, slope);
        worst_err = std::max(worst_err, err[2]);
    }
    const double sec = seconds_since(t0);
    return {worst >= 1.9 && sec <= 60.0,
            fmt("min observed order %.3f over 100 fields, max err at eps=1e-4 %.1e, %zu triangles, %.1fs", worst,
                worst_err, mesh.num_triangles(), sec)};
}

Outcome c07() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unit(0.05, 1.0);
    const double sigma = 0.5, dt = 0.05;
    const TriangleMesh mesh = make_mesh(random_shape(rng), 96, 0.15);
    const auto n = static_cast<Eigen::Index>(VelocitySpace(mesh).ndofs());
    double min_gap = 1e300, min_quad_gap = 1e300;
    for (int trial = 0; trial < 100; ++trial) {
        Vector u = random_vector(rng, n, 1.0);
        u *= 0.5 * unit(rng) / max_edge_stretch(mesh, u, dt);
        Vector du = random_vector(rng, n, 1.0);
        du *= 0.5 * unit(rng) / max_edge_stretch(mesh, du, dt);
        const double p0 = deformed_perimeter(mesh, u, dt);
        const Vector g = assemble_perimeter_gradient(mesh, u, dt, sigma);
        const SparseMatrix hm = assemble_perimeter_hessian(mesh, u, dt, sigma, HessianKind::majorant);
        const SparseMatrix he = assemble_perimeter_hessian(mesh, u, dt, sigma, HessianKind::exact);
        const double bound = p0 + dt / sigma * (g.dot(du) + 0.5 * du.dot(hm * du));
        min_gap = std::min(min_gap, (bound - deformed_perimeter(mesh, u + du, dt)) / p0);
        const Vector v = random_vector(rng, n, 1.0);
        min_quad_gap = std::min(min_quad_gap, v.dot(hm * v) - v.dot(he * v));
    }
    const double sec = seconds_since(t0);
    return {min_gap >= -1e-14 && min_quad_gap >= -1e-12 && sec <= 60.0,
            fmt("min relative slack of the quadratic bound %.2e, min v'(A_maj - A_exact)v %.2e, %.1fs", min_gap,
                min_quad_gap, sec)};
}

// ---- scheme consistency ----

Outcome c08() {
    const auto t0 = std::chrono::steady_clock::now();
    const PolarShapeSpec spec{1.0, {{2, 0.05, 0.0}}};
    std::vector<double> rates;
    std::string d;
    for (double dt : {8e-3, 4e-3, 2e-3, 1e-3}) {
        SchemeConfig c;
        c.scheme = Scheme::curl;
        c.alpha = 1e-3;
        c.dt = dt;
        c.t_end = 0.5;
        c.newton_tol = 1e-10;
        c.newton_max_iters = 2000;
        const auto r = run_simulation(spec, c);
        rates.push_back(fit_growth_rate(r.series.mode_series(2, false)).rate);
        d += fmt("dt=%g s2=%.6f; ", dt, rates.back());
    }
    // the spatial error is common to all runs; successive differences isolate the time error
    double worst = 1e300;
    for (std::size_t i = 0; i + 2 < rates.size(); ++i) {
        const double order = std::log2(std::abs(rates[i] - rates[i + 1]) / std::abs(rates[i + 1] - rates[i + 2]));
        worst = std::min(worst, order);
        d += fmt("order %.3f; ", order);
    }
    const double sec = seconds_since(t0);
    return {worst >= 0.9 && sec <= 1800.0, d + fmt("%.0fs", sec)};
}

Outcome c09() {
    const auto t0 = std::chrono::steady_clock::now();
    const TriangleMesh mesh = make_mesh({1.0, {{2, 0.05, 0.0}}}, 128, 0.15);
    double max_det = 0.0;
    std::vector<double> diffs;
    std::string d;
    for (double dt : {4e-3, 2e-3, 1e-3, 5e-4}) {
        SchemeConfig c;
        c.dt = dt;
        c.newton_tol = 1e-14;
        c.newton_max_iters = 5000;
        const auto rn = step_newton(mesh, c);
        const auto rd = step_nonlinear_det(mesh, c);
        max_det = std::max(max_det, rd.report.max_det_error);
        const Vector diff = rd.velocity.coeffs() - rn.velocity.coeffs();
        diffs.push_back(diff.head(static_cast<Eigen::Index>(2 * mesh.num_vertices())).lpNorm<Eigen::Infinity>());
        d += fmt("dt=%g det_err=%.2e |u_det-u_newton|=%.2e; ", dt, rd.report.max_det_error, diffs.back());
    }
    double worst = 1e300;
    for (std::size_t i = 0; i + 1 < diffs.size(); ++i) worst = std::min(worst, std::log2(diffs[i] / diffs[i + 1]));
    const double sec = seconds_since(t0);
    return {max_det <= 1e-8 && worst >= 1.8 && sec <= 600.0,
            d + fmt("min order %.3f, max |det-1| %.2e, %.0fs", worst, max_det, sec)};
}

Outcome c10() {
    const auto t0 = std::chrono::steady_clock::now();
    const double sigma = 0.5;
    double worst_lap = 0.0, worst_order = 1e300;
    std::string d;
    for (int m = 2; m <= 5; ++m) {
        const double h = 1e-4;
        auto p = [&](double x, double y) {
            return perturbed_pressure(m, sigma, 1.0, 0.05, std::hypot(x, y), std::atan2(y, x));
        };
        for (double x = -0.6; x <= 0.61; x += 0.2) {
            for (double y = -0.6; y <= 0.61; y += 0.2) {
                const double lap =
                    (p(x + h, y) + p(x - h, y) + p(x, y + h) + p(x, y - h) - 4.0 * p(x, y)) / (h * h);
                worst_lap = std::max(worst_lap, std::abs(lap));
            }
        }
        auto mismatch = [&](double delta) {
            double worst = 0.0;
            for (int k = 0; k < 256; ++k) {
                const double th = 2.0 * std::numbers::pi * k / 256.0;
                const double r = 1.0 + delta * std::cos(m * th);
                const double rp = -delta * m * std::sin(m * th);
                const double rpp = -delta * m * m * std::cos(m * th);
                const double kappa = (r * r + 2.0 * rp * rp - r * rpp) / std::pow(r * r + rp * rp, 1.5);
                worst = std::max(worst, std::abs(perturbed_pressure(m, sigma, 1.0, delta, r, th) - sigma * kappa));
            }
            return worst;
        };
        const double order = std::log10(mismatch(1e-2) / mismatch(1e-3));
        worst_order = std::min(worst_order, order);
        d += fmt("m=%d order %.3f; ", m, order);
    }
    const double sec = seconds_since(t0);
    return {worst_lap <= 1e-6 && std::abs(worst_order - 2.0) <= 0.1 && sec <= 60.0,
            d + fmt("max |Laplacian| %.1e", worst_lap)};
}

Outcome c11() {
    const fs::path dir = g_out / "c11_bench";
    fs::create_directories(dir);
    const fs::path cfg = dir / "bench.yaml";
    std::ofstream(cfg) << "experiment: m2\nbench_schemes: [explicit, newton]\nbench_steps: 50\n"
                          "boundary_vertices: 256\ninterior_edge: 0.04\n";
    std::ostringstream log, err;
    const int rc = cmd_bench(cfg, dir, true, log, err);
    if (rc != exit_ok) return {false, "cmd_bench exited with " + std::to_string(rc) + ": " + err.str()};
    std::ifstream in(dir / "bench.json");
    const json j = json::parse(in);
    bool explicit_violates = false, newton_monotone = false;
    std::string d;
    for (const auto& row : j.at("rows")) {
        const std::string s = row.at("scheme");
        const bool mono = row.at("perimeter_monotone");
        if (s == "explicit") explicit_violates = !mono;
        if (s == "newton") newton_monotone = mono && row.at("steps_completed").get<int>() == 50;
        d += fmt("%s dt=%.3g steps %d: %s; ", s.c_str(), row.at("dt").get<double>(),
                 row.at("steps_completed").get<int>(), row.at("status").get<std::string>().c_str());
    }
    return {explicit_violates && newton_monotone, d + "recorded in " + (dir / "bench.json").string()};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
    static const std::vector<std::pair<std::string, std::function<Outcome()>>> list = {
        {"c01_mode2_decay", c01},       {"c02_mode3_decay", c02},      {"c03_mixed_modes", c03},
        {"c04_conservation", c04},      {"c05_liapunov", c05},         {"c06_shape_derivative", c06},
        {"c07_majorant", c07},          {"c08_curl_consistency", c08}, {"c09_nonlinear_det", c09},
        {"c10_lsa_field", c10},         {"c11_explicit_stability", c11}};
    return list;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::string which = "all";
    std::string out = g_out.string();
    app.add_option("criterion", which, "criterion name (e.g. c04 or c04_conservation) or 'all'");
    app.add_option("--out", out, "directory for cached runs and artifacts");
    CLI11_PARSE(app, argc, argv);
    g_out = out;
    fs::create_directories(g_out);

    bool all_pass = true, matched = false;
    for (const auto& [name, fn] : criteria()) {
        if (which != "all" && name != which && name.substr(0, 3) != which) continue;
        matched = true;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        all_pass = all_pass && o.pass;
        const std::string line = (o.pass ? "PASS " : "FAIL ") + name + ": " + o.detail;
        std::cout << line << std::endl;
        std::ofstream(g_out / "results.txt", std::ios::app) << line << '\n';
    }
    if (!matched) {
        std::cerr << "unknown criterion " << which << '\n';
        return 2;
    }
    return all_pass ? 0 : 1;
}
