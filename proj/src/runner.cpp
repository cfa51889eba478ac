#include "hsflow/runner.hpp"

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace hsflow {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string experiment_name(Experiment e) {
    switch (e) {
        case Experiment::custom: return "custom";
        case Experiment::m2: return "m2";
        case Experiment::m3: return "m3";
        case Experiment::mixed: return "mixed";
        case Experiment::circle: return "circle";
    }
    return "custom";
}

Experiment parse_experiment(const std::string& name) {
    if (name == "custom") return Experiment::custom;
    if (name == "m2") return Experiment::m2;
    if (name == "m3") return Experiment::m3;
    if (name == "mixed") return Experiment::mixed;
    if (name == "circle") return Experiment::circle;
    throw ConfigError("experiment", "unknown experiment '" + name + "' (expected m2, m3, mixed, circle or custom)");
}

ExperimentPreset experiment_preset(Experiment e) {
    ExperimentPreset p;
    switch (e) {
        case Experiment::m2:
            p.shape = {1.0, {{2, 0.05, 0.0}}};
            p.dt = 0.0005 / 3.0;
            p.t_end = 1.5 / 3.0;
            p.rate_tolerance = 0.01;
            break;
        case Experiment::m3:
            p.shape = {1.0, {{3, 0.05, 0.0}}};
            p.dt = 0.0005 / 12.0;
            p.t_end = 1.5 / 12.0;
            p.rate_tolerance = 0.01;
            break;
        case Experiment::mixed:
            p.shape = {1.0, {{2, 0.03, 0.0}, {3, 0.0, -0.03}, {4, 0.0, 0.03}, {5, -0.03, 0.0}}};
            p.dt = 0.005 / 120.0;
            p.t_end = 0.125;
            p.rate_tolerance = 0.02;
            break;
        case Experiment::circle:
            p.shape = {1.0, {}};
            p.dt = 1e-3;
            p.t_end = 0.1;
            break;
        case Experiment::custom:
            p.shape = {1.0, {}};
            p.dt = 1e-3;
            p.t_end = 0.0;
            break;
    }
    return p;
}

// ---------------------------------------------------------------------------------------------
// config

namespace {

const std::set<std::string> kKnownKeys = {
    "experiment",   "base_radius",   "modes",        "sigma",         "dt",           "t_end",
    "scheme",       "alpha",         "newton_tol",   "newton_max_iters", "output_stride", "m_max",
    "boundary_vertices", "interior_edge", "adaptive", "grading",     "min_angle_deg", "max_area_ratio",
    "snapshot_stride", "output_dir", "seed",         "bench_schemes", "bench_steps"};

template <class T>
T scalar(const YAML::Node& root, const std::string& key) {
    const YAML::Node n = root[key];
    if (!n.IsScalar()) throw ConfigError(key, "expected a scalar value");
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(key, "cannot read '" + n.Scalar() + "' as the expected type");
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& yaml_text) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ConfigError("<file>", std::string("YAML syntax error: ") + e.what());
    }
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) throw ConfigError("<file>", "top level must be a mapping of keys to values");
    for (const auto& kv : root) {
        const std::string key = kv.first.as<std::string>();
        if (!kKnownKeys.count(key)) throw ConfigError(key, "unknown key");
    }

    RunConfig cfg;
    if (root["experiment"]) cfg.experiment = parse_experiment(scalar<std::string>(root, "experiment"));
    const ExperimentPreset preset = experiment_preset(cfg.experiment);
    cfg.shape = preset.shape;
    cfg.scheme.dt = preset.dt;
    cfg.scheme.t_end = preset.t_end;

    if (root["base_radius"]) cfg.shape.base_radius = scalar<double>(root, "base_radius");
    if (root["modes"]) {
        const YAML::Node modes = root["modes"];
        if (!modes.IsSequence()) throw ConfigError("modes", "expected a list of [m, cos_amp, sin_amp]");
        cfg.shape.modes.clear();
        for (const auto& item : modes) {
            if (!item.IsSequence() || item.size() != 3) {
                throw ConfigError("modes", "each entry must be [m, cos_amp, sin_amp]");
            }
            try {
                cfg.shape.modes.push_back({item[0].as<int>(), item[1].as<double>(), item[2].as<double>()});
            } catch (const YAML::Exception&) {
                throw ConfigError("modes", "entries must be [integer, number, number]");
            }
            if (cfg.shape.modes.back().m < 0) throw ConfigError("modes", "mode numbers must be >= 0");
        }
    }
    SchemeConfig& s = cfg.scheme;
    if (root["sigma"]) s.sigma = scalar<double>(root, "sigma");
    if (root["dt"]) s.dt = scalar<double>(root, "dt");
    if (root["t_end"]) s.t_end = scalar<double>(root, "t_end");
    if (root["scheme"]) s.scheme = parse_scheme(scalar<std::string>(root, "scheme"));
    if (root["alpha"]) s.alpha = scalar<double>(root, "alpha");
    if (root["newton_tol"]) s.newton_tol = scalar<double>(root, "newton_tol");
    if (root["newton_max_iters"]) s.newton_max_iters = scalar<int>(root, "newton_max_iters");
    if (root["output_stride"]) s.output_stride = scalar<int>(root, "output_stride");
    if (root["m_max"]) s.m_max = scalar<int>(root, "m_max");
    if (root["boundary_vertices"]) {
        const int n = scalar<int>(root, "boundary_vertices");
        if (n < 8) throw ConfigError("boundary_vertices", "need at least 8 boundary vertices");
        s.mesh_policy.boundary_vertex_count = static_cast<std::size_t>(n);
    }
    if (root["interior_edge"]) s.mesh_policy.interior_target_edge = scalar<double>(root, "interior_edge");
    if (root["adaptive"]) s.mesh_policy.adaptive = scalar<bool>(root, "adaptive");
    if (root["grading"]) s.mesh_policy.grading = scalar<double>(root, "grading");
    if (root["min_angle_deg"]) s.mesh_policy.min_angle_deg = scalar<double>(root, "min_angle_deg");
    if (root["max_area_ratio"]) s.mesh_policy.max_area_ratio = scalar<double>(root, "max_area_ratio");
    if (root["snapshot_stride"]) {
        cfg.snapshot_stride = scalar<int>(root, "snapshot_stride");
        if (cfg.snapshot_stride < 0) throw ConfigError("snapshot_stride", "must be >= 0");
    }
    if (root["output_dir"]) cfg.output_dir = scalar<std::string>(root, "output_dir");
    if (root["seed"]) cfg.seed = scalar<std::uint64_t>(root, "seed");
    if (root["bench_schemes"]) {
        const YAML::Node list = root["bench_schemes"];
        if (!list.IsSequence()) throw ConfigError("bench_schemes", "expected a list of scheme names");
        for (const auto& item : list) cfg.bench_schemes.push_back(parse_scheme(item.as<std::string>()));
    }
    if (root["bench_steps"]) {
        cfg.bench_steps = scalar<int>(root, "bench_steps");
        if (cfg.bench_steps < 1) throw ConfigError("bench_steps", "must be >= 1");
    }

    if (!(cfg.shape.base_radius > 0.0)) throw ConfigError("base_radius", "must be positive");
    s.validate();
    try {
        sample_polar_boundary(cfg.shape, s.mesh_policy.boundary_vertex_count);
    } catch (const GeometryError& e) {
        throw ConfigError("modes", e.what());
    }
    for (const auto& m : cfg.shape.modes) {
        if (m.m > s.m_max) throw ConfigError("m_max", "smaller than the largest initial mode");
    }
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("<file>", "cannot open config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str());
}

// ---------------------------------------------------------------------------------------------
// analysis

std::vector<ModeFit> fit_modes(const PolarShapeSpec& shape, double sigma, const DiagnosticsSeries& series) {
    std::vector<ModeFit> fits;
    if (series.records.empty()) return fits;
    const double t_last = series.records.back().t;
    for (const auto& mode : shape.modes) {
        if (mode.m < 2) continue;
        for (int k = 0; k < 2; ++k) {
            const bool sine = k == 1;
            const double amp = sine ? mode.sin_amp : mode.cos_amp;
            if (amp == 0.0) continue;
            ModeFit f;
            f.m = mode.m;
            f.name = (sine ? "s" : "c") + std::to_string(mode.m);
            f.predicted = dispersion_rate(mode.m, sigma, shape.base_radius);
            const double window = std::min(t_last, 1.5 / std::abs(f.predicted));
            std::vector<std::pair<double, double>> pts;
            for (const auto& p : series.mode_series(mode.m, sine)) {
                if (p.first <= window * (1.0 + 1e-12)) pts.push_back(p);
            }
            const GrowthFit g = fit_growth_rate(pts);
            f.fitted = g.rate;
            f.rel_err = std::abs(g.rate - f.predicted) / std::abs(f.predicted);
            f.rms_log_residual = g.rms_log_residual;
            f.samples = g.samples_used;
            fits.push_back(f);
        }
    }
    return fits;
}

RunSummary summarize(const SimulationResult& result) {
    RunSummary s;
    if (result.series.records.empty()) return s;
    const double a0 = result.series.records.front().area;
    for (const auto& r : result.series.records) {
        s.area_drift = std::max(s.area_drift, std::abs(r.area - a0) / a0);
        s.ucm_max = std::max(s.ucm_max, r.u_cm.norm());
    }
    for (std::size_t i = 0; i < result.step_reports.size(); ++i) {
        if (!result.step_reports[i].perimeter_monotone()) {
            s.perimeter_monotone = false;
            if (s.first_non_monotone_step < 0) s.first_non_monotone_step = static_cast<int>(i);
        }
    }
    return s;
}

VerifyReport verify_experiment(const RunConfig& cfg, SimulationResult* result_out) {
    if (cfg.experiment == Experiment::custom) {
        throw ConfigError("experiment", "verify needs one of the built-in experiments m2, m3, mixed, circle");
    }
    VerifyReport rep;
    rep.experiment = cfg.experiment;
    rep.scheme = cfg.scheme.scheme;
    rep.rate_tolerance = experiment_preset(cfg.experiment).rate_tolerance;
    SimulationResult result = run_simulation(cfg.shape, cfg.scheme);
    rep.fits = fit_modes(cfg.shape, cfg.scheme.sigma, result.series);
    rep.summary = summarize(result);
    rep.pass = rep.summary.area_drift <= rep.area_tolerance && rep.summary.ucm_max <= rep.ucm_tolerance &&
               rep.summary.perimeter_monotone;
    for (const auto& f : rep.fits) rep.pass = rep.pass && f.rel_err <= rep.rate_tolerance;
    if (result_out) *result_out = std::move(result);
    return rep;
}

std::vector<BenchRow> run_bench(const RunConfig& cfg) {
    std::vector<Scheme> schemes = cfg.bench_schemes;
    if (schemes.empty()) {
        schemes = {Scheme::explicit_curvature, Scheme::newton, Scheme::curl, Scheme::nonlinear_det};
    }
    const BoundaryCurve curve = sample_polar_boundary(cfg.shape, cfg.scheme.mesh_policy.boundary_vertex_count);
    const TriangleMesh initial = generate_mesh(curve, cfg.scheme.mesh_policy);
    std::vector<BenchRow> rows;
    for (Scheme sch : schemes) {
        SchemeConfig sc = cfg.scheme;
        sc.scheme = sch;
        if (sch == Scheme::curl && !(sc.alpha > 0.0)) sc.alpha = SchemeConfig{}.alpha;
        BenchRow row;
        row.scheme = sch;
        row.dt = sc.dt;
        row.steps_requested = cfg.bench_steps;
        StepWorkspace ws;
        TriangleMesh mesh = initial;
        long total_iters = 0;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            for (int n = 0; n < cfg.bench_steps; ++n) {
                if (n > 0) {
                    auto [fresh, flag] = maybe_remesh(mesh, sc.mesh_policy);
                    if (flag) mesh = std::move(fresh);
                }
                StepResult r = step(mesh, sc, &ws);
                total_iters += r.report.newton_iterations;
                row.max_newton_iterations = std::max(row.max_newton_iterations, r.report.newton_iterations);
                if (!r.report.perimeter_monotone()) row.perimeter_monotone = false;
                mesh = std::move(r.mesh);
                ++row.steps_completed;
            }
            row.status = row.perimeter_monotone ? "ok" : "unstable";
        } catch (const Error& e) {
            row.status = std::string(row.perimeter_monotone ? "failed: " : "unstable, then failed: ") + e.what();
        }
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (row.steps_completed > 0) {
            row.ms_per_step = 1e3 * row.wall_seconds / row.steps_completed;
            row.mean_newton_iterations = static_cast<double>(total_iters) / row.steps_completed;
        }
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------------------------
// JSON

namespace {

json config_json(const RunConfig& cfg) {
    const SchemeConfig& s = cfg.scheme;
    json modes = json::array();
    for (const auto& m : cfg.shape.modes) modes.push_back({{"m", m.m}, {"c", m.cos_amp}, {"s", m.sin_amp}});
    json j;
    j["experiment"] = experiment_name(cfg.experiment);
    j["scheme"] = scheme_name(s.scheme);
    j["sigma"] = s.sigma;
    j["dt"] = s.dt;
    j["t_end"] = s.t_end;
    j["alpha"] = s.alpha;
    j["newton_tol"] = s.newton_tol;
    j["newton_max_iters"] = s.newton_max_iters;
    j["output_stride"] = s.output_stride;
    j["m_max"] = s.m_max;
    j["seed"] = cfg.seed;
    j["shape"] = {{"base_radius", cfg.shape.base_radius}, {"modes", modes}};
    j["mesh"] = {{"boundary_vertices", s.mesh_policy.boundary_vertex_count},
                 {"interior_edge", s.mesh_policy.interior_target_edge},
                 {"adaptive", s.mesh_policy.adaptive},
                 {"grading", s.mesh_policy.grading},
                 {"min_angle_deg", s.mesh_policy.min_angle_deg},
                 {"max_area_ratio", s.mesh_policy.max_area_ratio}};
    return j;
}

json record_json(const DiagnosticsRecord& r) {
    json f;
    f["mean"] = r.fourier.mean;
    for (int m = 1; m <= r.fourier.m_max; ++m) {
        f["c" + std::to_string(m)] = r.fourier.c(m);
        f["s" + std::to_string(m)] = r.fourier.s(m);
    }
    return {{"step", r.step},
            {"t", r.t},
            {"area", r.area},
            {"perimeter", r.perimeter},
            {"u_cm", {r.u_cm.x(), r.u_cm.y()}},
            {"u_cm_norm", r.u_cm.norm()},
            {"u_cm_trapezoid", {r.u_cm_trapezoid.x(), r.u_cm_trapezoid.y()}},
            {"fourier", f}};
}

json report_json(std::size_t step, const StepReport& r) {
    return {{"step", step},
            {"newton_iterations", r.newton_iterations},
            {"final_increment", r.final_increment},
            {"kkt_residual", r.kkt_residual},
            {"perimeter_before", r.perimeter_before},
            {"perimeter_after", r.perimeter_after},
            {"area_before", r.area_before},
            {"area_after", r.area_after},
            {"max_displacement", r.max_displacement},
            {"max_det_error", r.max_det_error},
            {"remeshed", r.remeshed},
            {"increment_history", r.increment_history}};
}

json summary_json(const RunSummary& s) {
    return {{"area_drift", s.area_drift},
            {"ucm_max", s.ucm_max},
            {"perimeter_monotone", s.perimeter_monotone},
            {"first_non_monotone_step", s.first_non_monotone_step}};
}

}  // namespace

std::string diagnostics_json(const SimulationResult& result, const RunConfig& cfg) {
    json j;
    j["config"] = config_json(cfg);
    json recs = json::array();
    for (const auto& r : result.series.records) recs.push_back(record_json(r));
    j["records"] = recs;
    json reps = json::array();
    for (std::size_t i = 0; i < result.step_reports.size(); ++i) reps.push_back(report_json(i, result.step_reports[i]));
    j["step_reports"] = reps;
    j["summary"] = summary_json(summarize(result));
    return j.dump(1) + "\n";
}

std::string verify_json(const VerifyReport& rep) {
    json fitted = json::object();
    json predicted = json::object();
    json rel = json::object();
    json samples = json::object();
    for (const auto& f : rep.fits) {
        fitted[f.name] = f.fitted;
        predicted[f.name] = f.predicted;
        rel[f.name] = f.rel_err;
        samples[f.name] = f.samples;
    }
    json j;
    j["experiment"] = experiment_name(rep.experiment);
    j["scheme"] = scheme_name(rep.scheme);
    j["fitted"] = fitted;
    j["predicted"] = predicted;
    j["rel_err"] = rel;
    j["fit_samples"] = samples;
    j["area_drift"] = rep.summary.area_drift;
    j["ucm_max"] = rep.summary.ucm_max;
    j["perimeter_monotone"] = rep.summary.perimeter_monotone;
    j["tolerances"] = {{"rate_rel", rep.rate_tolerance}, {"area_drift", rep.area_tolerance}, {"ucm", rep.ucm_tolerance}};
    j["pass"] = rep.pass;
    return j.dump(1) + "\n";
}

std::string bench_json(const std::vector<BenchRow>& rows, const RunConfig& cfg) {
    json list = json::array();
    for (const auto& r : rows) {
        list.push_back({{"scheme", scheme_name(r.scheme)},
                        {"dt", r.dt},
                        {"steps_requested", r.steps_requested},
                        {"steps_completed", r.steps_completed},
                        {"wall_seconds", r.wall_seconds},
                        {"ms_per_step", r.ms_per_step},
                        {"mean_newton_iterations", r.mean_newton_iterations},
                        {"max_newton_iterations", r.max_newton_iterations},
                        {"perimeter_monotone", r.perimeter_monotone},
                        {"status", r.status}});
    }
    return json{{"config", config_json(cfg)}, {"rows", list}}.dump(1) + "\n";
}

// ---------------------------------------------------------------------------------------------
// SVG

namespace {

const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::vector<double> nice_ticks(double lo, double hi) {
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double k : {1.0, 2.0, 5.0, 10.0}) {
        if (k * mag >= raw) {
            step = k * mag;
            break;
        }
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) ticks.push_back(t);
    return ticks;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
}

struct Frame {
    double x0 = 70, y0 = 40, w = 520, h = 300;
    double xmin, xmax, ymin, ymax;
    double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
    double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

void pad_range(double& lo, double& hi) {
    if (!(hi > lo)) {
        const double c = std::isfinite(lo) ? lo : 0.0;
        const double d = std::max(std::abs(c) * 1e-3, 1e-12);
        lo = c - d;
        hi = c + d;
        return;
    }
    const double d = 0.05 * (hi - lo);
    lo -= d;
    hi += d;
}

void axes(std::ostringstream& os, const Frame& f, const std::string& title, const std::string& xlabel,
          const std::string& ylabel, bool xticks) {
    os << "<rect x=\"" << f.x0 << "\" y=\"" << f.y0 << "\" width=\"" << f.w << "\" height=\"" << f.h
       << "\" fill=\"none\" stroke=\"#333\"/>\n";
    os << "<text x=\"" << f.x0 + f.w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
       << "</text>\n";
    os << "<text x=\"" << f.x0 + f.w / 2 << "\" y=\"" << f.y0 + f.h + 40
       << "\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(xlabel) << "</text>\n";
    os << "<text x=\"16\" y=\"" << f.y0 + f.h / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
       << f.y0 + f.h / 2 << ")\">" << xml_escape(ylabel) << "</text>\n";
    if (xticks) {
        for (double t : nice_ticks(f.xmin, f.xmax)) {
            os << "<line x1=\"" << f.px(t) << "\" y1=\"" << f.y0 + f.h << "\" x2=\"" << f.px(t) << "\" y2=\""
               << f.y0 + f.h + 5 << "\" stroke=\"#333\"/>\n";
            os << "<text x=\"" << f.px(t) << "\" y=\"" << f.y0 + f.h + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
               << fmt(t) << "</text>\n";
        }
    }
    for (double t : nice_ticks(f.ymin, f.ymax)) {
        os << "<line x1=\"" << f.x0 - 5 << "\" y1=\"" << f.py(t) << "\" x2=\"" << f.x0 << "\" y2=\"" << f.py(t)
           << "\" stroke=\"#333\"/>\n";
        os << "<text x=\"" << f.x0 - 8 << "\" y=\"" << f.py(t) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(t)
           << "</text>\n";
    }
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<PlotSeries>& series) {
    Frame f;
    f.xmin = f.ymin = std::numeric_limits<double>::infinity();
    f.xmax = f.ymax = -std::numeric_limits<double>::infinity();
    for (const auto& s : series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            f.xmin = std::min(f.xmin, s.x[i]);
            f.xmax = std::max(f.xmax, s.x[i]);
            f.ymin = std::min(f.ymin, s.y[i]);
            f.ymax = std::max(f.ymax, s.y[i]);
        }
    }
    if (!std::isfinite(f.xmin)) f.xmin = f.xmax = f.ymin = f.ymax = 0.0;
    pad_range(f.ymin, f.ymax);
    if (!(f.xmax > f.xmin)) pad_range(f.xmin, f.xmax);

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" font-family=\"sans-serif\">\n";
    os << "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    axes(os, f, title, xlabel, ylabel, true);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kColors[k % std::size(kColors)];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\"";
        if (s.dashed) os << " stroke-dasharray=\"6 4\"";
        os << " points=\"";
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            os << fmt(f.px(s.x[i])) << ',' << fmt(f.py(s.y[i])) << ' ';
        }
        os << "\"/>\n";
        const double ly = f.y0 + 14 + 16 * static_cast<double>(k);
        os << "<line x1=\"" << f.x0 + f.w - 150 << "\" y1=\"" << ly - 4 << "\" x2=\"" << f.x0 + f.w - 128 << "\" y2=\""
           << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6 4\"" : "")
           << "/>\n";
        os << "<text x=\"" << f.x0 + f.w - 122 << "\" y=\"" << ly << "\" font-size=\"11\">" << xml_escape(s.label)
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string svg_bar_plot(const std::string& title, const std::string& ylabel, const std::vector<std::string>& labels,
                         const std::vector<double>& values) {
    Frame f;
    f.xmin = 0.0;
    f.xmax = static_cast<double>(std::max<std::size_t>(values.size(), 1));
    f.ymin = 0.0;
    f.ymax = 0.0;
    for (double v : values) {
        if (std::isfinite(v)) f.ymax = std::max(f.ymax, v);
    }
    f.ymax = f.ymax > 0.0 ? 1.1 * f.ymax : 1.0;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" font-family=\"sans-serif\">\n";
    os << "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    axes(os, f, title, "", ylabel, false);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::isfinite(values[i]) ? values[i] : 0.0;
        const double left = f.px(static_cast<double>(i) + 0.2);
        const double right = f.px(static_cast<double>(i) + 0.8);
        os << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(f.py(v)) << "\" width=\"" << fmt(right - left)
           << "\" height=\"" << fmt(f.py(0.0) - f.py(v)) << "\" fill=\"" << kColors[i % std::size(kColors)] << "\"/>\n";
        os << "<text x=\"" << fmt(0.5 * (left + right)) << "\" y=\"" << f.y0 + f.h + 18
           << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(i < labels.size() ? labels[i] : "") << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// ---------------------------------------------------------------------------------------------
// commands

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

std::string diagnostics_csv(const SimulationResult& result) {
    std::ostringstream os;
    os << std::setprecision(17);
    const int m_max = result.config.m_max;
    os << "step,t,area,perimeter,u_cm_x,u_cm_y,u_cm_trapezoid_x,u_cm_trapezoid_y,mean";
    for (int m = 1; m <= m_max; ++m) os << ",c" << m << ",s" << m;
    os << '\n';
    for (const auto& r : result.series.records) {
        os << r.step << ',' << r.t << ',' << r.area << ',' << r.perimeter << ',' << r.u_cm.x() << ',' << r.u_cm.y() << ','
           << r.u_cm_trapezoid.x() << ',' << r.u_cm_trapezoid.y() << ',' << r.fourier.mean;
        for (int m = 1; m <= m_max; ++m) os << ',' << r.fourier.c(m) << ',' << r.fourier.s(m);
        os << '\n';
    }
    return os.str();
}

void write_snapshot(const fs::path& dir, const SimulationSnapshot& s) {
    char tag[32];
    std::snprintf(tag, sizeof tag, "%06d", s.step);
    fs::create_directories(dir);
    write_boundary_csv((dir / ("boundary_" + std::string(tag) + ".csv")).string(), s.mesh.boundary_curve());
    write_mesh((dir / ("mesh_" + std::string(tag) + ".msh")).string(), s.mesh);
    const VelocitySpace vs(s.mesh);
    std::ofstream os(dir / ("fields_" + std::string(tag) + ".csv"));
    os << std::setprecision(17) << "vertex,x,y,u_x,u_y,p\n";
    for (std::size_t v = 0; v < s.mesh.num_vertices(); ++v) {
        os << v << ',' << s.mesh.vertex(v).x() << ',' << s.mesh.vertex(v).y() << ','
           << s.velocity.coeffs()[vs.vertex_dof(v, 0)] << ',' << s.velocity.coeffs()[vs.vertex_dof(v, 1)] << ','
           << s.pressure.coeffs()[static_cast<Eigen::Index>(v)] << '\n';
    }
    std::ofstream ob(dir / ("bubbles_" + std::string(tag) + ".csv"));
    ob << std::setprecision(17) << "triangle,b_x,b_y\n";
    for (std::size_t t = 0; t < s.mesh.num_triangles(); ++t) {
        ob << t << ',' << s.velocity.coeffs()[vs.bubble_dof(t, 0)] << ',' << s.velocity.coeffs()[vs.bubble_dof(t, 1)]
           << '\n';
    }
}

void write_tangential(const fs::path& path, const SimulationSnapshot& s, double sigma) {
    const TangentialReport rep = tangential_diagnostic(s.mesh, s.velocity, sigma);
    std::ofstream os(path);
    os << std::setprecision(10) << "boundary_index,residual_sigma,residual_unit\n";
    for (std::size_t i = 0; i < rep.boundary_index.size(); ++i) {
        os << rep.boundary_index[i] << ',' << rep.residual_sigma[i] << ',' << rep.residual_unit[i] << '\n';
    }
}

void write_plots(const fs::path& out, const SimulationResult& result, const RunConfig& cfg) {
    PlotSeries area{"A(t)", {}, {}};
    PlotSeries ucm{"|u_cm(t)|", {}, {}};
    for (const auto& r : result.series.records) {
        area.x.push_back(r.t);
        area.y.push_back(r.area);
        ucm.x.push_back(r.t);
        ucm.y.push_back(r.u_cm.norm());
    }
    write_text(out / "area.svg", svg_line_plot("Area", "t", "A", {area}));
    write_text(out / "ucm.svg", svg_line_plot("Center-of-mass velocity", "t", "|u_cm|", {ucm}));

    std::vector<PlotSeries> modes;
    for (const auto& mode : cfg.shape.modes) {
        if (mode.m < 2) continue;
        for (int k = 0; k < 2; ++k) {
            const bool sine = k == 1;
            const double a0 = sine ? mode.sin_amp : mode.cos_amp;
            if (a0 == 0.0) continue;
            const std::string name = (sine ? "s" : "c") + std::to_string(mode.m);
            const double rate = dispersion_rate(mode.m, cfg.scheme.sigma, cfg.shape.base_radius);
            PlotSeries sim{name + " simulated", {}, {}};
            PlotSeries pred{name + " predicted", {}, {}, true};
            const double floor = 1e-9 * std::abs(a0);
            for (const auto& [t, a] : result.series.mode_series(mode.m, sine)) {
                if (std::abs(a) < floor) continue;
                sim.x.push_back(t);
                sim.y.push_back(std::log(std::abs(a)));
                pred.x.push_back(t);
                pred.y.push_back(std::log(std::abs(a0)) + rate * t);
            }
            modes.push_back(std::move(sim));
            modes.push_back(std::move(pred));
        }
    }
    if (!modes.empty()) write_text(out / "modes.svg", svg_line_plot("Fourier modes", "t", "log |dR_m|", modes));
}

struct Logger {
    bool quiet;
    std::ostream& os;
    template <class T>
    Logger& operator<<(const T& v) {
        if (!quiet) os << v;
        return *this;
    }
};

}  // namespace

int cmd_run(const fs::path& config, const fs::path& out_arg, bool quiet, std::ostream& log_os, std::ostream& err) {
    Logger log{quiet, log_os};
    RunConfig cfg;
    try {
        cfg = load_run_config(config);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    }
    const fs::path out = out_arg.empty() ? cfg.output_dir : out_arg;
    fs::create_directories(out);
    const fs::path snaps = out / "snapshots";
    const long long n_steps = std::llround(cfg.scheme.t_end / cfg.scheme.dt);
    int record_index = 0;
    auto on_record = [&](const SimulationSnapshot& s) {
        const bool last = s.step == n_steps;
        const bool strided = cfg.snapshot_stride > 0 && record_index % cfg.snapshot_stride == 0;
        if (record_index == 0 || last || strided) write_snapshot(snaps, s);
        if (last) write_tangential(out / "tangential.csv", s, cfg.scheme.sigma);
        ++record_index;
    };
    log << "running " << experiment_name(cfg.experiment) << " with scheme " << scheme_name(cfg.scheme.scheme) << ", "
        << n_steps << " steps of dt = " << cfg.scheme.dt << '\n';
    SimulationResult result;
    int code = exit_ok;
    try {
        result = run_simulation(cfg.shape, cfg.scheme, on_record);
    } catch (const SimulationError& e) {
        err << "numerical failure: " << e.what() << '\n';
        result = e.partial();
        if (e.mesh()) write_mesh((out / "failure_mesh.msh").string(), *e.mesh());
        code = exit_numerical;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const Error& e) {
        err << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    }
    write_text(out / "diagnostics.json", diagnostics_json(result, cfg));
    write_text(out / "diagnostics.csv", diagnostics_csv(result));
    write_plots(out, result, cfg);
    const RunSummary s = summarize(result);
    log << "records: " << result.series.records.size() << ", area drift " << s.area_drift << ", max |u_cm| "
        << s.ucm_max << ", perimeter " << (s.perimeter_monotone ? "monotone" : "NOT monotone") << '\n';
    if (code == exit_ok) {
        try {
            for (const auto& f : fit_modes(cfg.shape, cfg.scheme.sigma, result.series)) {
                log << "mode " << f.name << ": fitted rate " << f.fitted << ", predicted " << f.predicted
                    << ", relative error " << f.rel_err << '\n';
            }
        } catch (const std::invalid_argument& e) {
            log << "growth-rate fit skipped: " << e.what() << '\n';
        }
    }
    log << "artifacts in " << out.string() << '\n';
    return code;
}

int cmd_verify(const fs::path& config, const fs::path& out_arg, bool quiet, std::ostream& log_os, std::ostream& err) {
    Logger log{quiet, log_os};
    RunConfig cfg;
    try {
        cfg = load_run_config(config);
        if (cfg.experiment == Experiment::custom) {
            throw ConfigError("experiment", "verify needs one of the built-in experiments m2, m3, mixed, circle");
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    }
    const fs::path out = out_arg.empty() ? cfg.output_dir : out_arg;
    fs::create_directories(out);
    log << "verifying " << experiment_name(cfg.experiment) << " with scheme " << scheme_name(cfg.scheme.scheme) << '\n';
    VerifyReport rep;
    SimulationResult result;
    try {
        rep = verify_experiment(cfg, &result);
    } catch (const SimulationError& e) {
        err << "numerical failure: " << e.what() << '\n';
        write_text(out / "diagnostics.json", diagnostics_json(e.partial(), cfg));
        return exit_numerical;
    } catch (const Error& e) {
        err << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    } catch (const std::invalid_argument& e) {
        err << "growth-rate fit failed: " << e.what() << '\n';
        return exit_verify_failed;
    }
    write_text(out / "diagnostics.json", diagnostics_json(result, cfg));
    write_text(out / "verify.json", verify_json(rep));
    for (const auto& f : rep.fits) {
        log << "  " << f.name << ": fitted " << f.fitted << ", predicted " << f.predicted << ", rel_err " << f.rel_err
            << (f.rel_err <= rep.rate_tolerance ? "" : "  (above tolerance)") << '\n';
    }
    log << "  area drift " << rep.summary.area_drift << ", max |u_cm| " << rep.summary.ucm_max << ", perimeter "
        << (rep.summary.perimeter_monotone ? "monotone" : "NOT monotone") << '\n';
    log << (rep.pass ? "PASS" : "FAIL") << '\n';
    return rep.pass ? exit_ok : exit_verify_failed;
}

int cmd_bench(const fs::path& config, const fs::path& out_arg, bool quiet, std::ostream& log_os, std::ostream& err) {
    Logger log{quiet, log_os};
    RunConfig cfg;
    try {
        cfg = load_run_config(config);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_config;
    }
    const fs::path out = out_arg.empty() ? cfg.output_dir : out_arg;
    fs::create_directories(out);
    std::vector<BenchRow> rows;
    try {
        rows = run_bench(cfg);
    } catch (const Error& e) {
        err << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    }
    std::ostringstream csv;
    csv << "scheme,dt,steps_requested,steps_completed,wall_seconds,ms_per_step,mean_newton_iterations,"
           "max_newton_iterations,perimeter_monotone,status\n";
    std::vector<std::string> labels;
    std::vector<double> ms;
    for (const auto& r : rows) {
        std::string status = r.status;
        std::replace(status.begin(), status.end(), ',', ';');
        std::replace(status.begin(), status.end(), '\n', ' ');
        csv << scheme_name(r.scheme) << ',' << r.dt << ',' << r.steps_requested << ',' << r.steps_completed << ','
            << r.wall_seconds << ',' << r.ms_per_step << ',' << r.mean_newton_iterations << ','
            << r.max_newton_iterations << ',' << (r.perimeter_monotone ? "true" : "false") << ',' << status << '\n';
        labels.push_back(scheme_name(r.scheme));
        ms.push_back(r.ms_per_step);
        log << scheme_name(r.scheme) << ": " << r.steps_completed << "/" << r.steps_requested << " steps, "
            << r.ms_per_step << " ms/step, " << r.mean_newton_iterations << " Newton iterations/step, " << r.status
            << '\n';
    }
    write_text(out / "bench.csv", csv.str());
    write_text(out / "bench.json", bench_json(rows, cfg));
    write_text(out / "bench.svg", svg_bar_plot("Wall time per step", "ms / step", labels, ms));
    return exit_ok;
}

}  // namespace hsflow
