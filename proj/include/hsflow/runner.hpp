#pragma once

#include "hsflow/geometry.hpp"
#include "hsflow/lsa.hpp"
#include "hsflow/schemes.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace hsflow {

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numerical = 3, exit_verify_failed = 4 };

/// Built-in experiments; `custom` means the shape comes entirely from the config.
enum class Experiment { custom, m2, m3, mixed, circle };

std::string experiment_name(Experiment e);
Experiment parse_experiment(const std::string& name);

/// Initial shape, time step and final time of a built-in experiment (sigma = 0.5).
struct ExperimentPreset {
    PolarShapeSpec shape;
    double dt = 0.0;
    double t_end = 0.0;
    double rate_tolerance = 0.0;  // relative, on fitted growth rates
};
ExperimentPreset experiment_preset(Experiment e);

struct RunConfig {
    Experiment experiment = Experiment::custom;
    PolarShapeSpec shape;
    SchemeConfig scheme;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 0;
    int snapshot_stride = 0;  // in records; 0 writes only the first and last
    std::vector<Scheme> bench_schemes;
    int bench_steps = 50;
};

/// Parses YAML text. Unknown keys and ill-typed values raise ConfigError naming the key.
RunConfig parse_run_config(const std::string& yaml_text);
RunConfig load_run_config(const std::filesystem::path& path);

struct ModeFit {
    std::string name;  // "c2", "s3", ...
    int m = 0;
    double fitted = 0.0;
    double predicted = 0.0;
    double rel_err = 0.0;
    double rms_log_residual = 0.0;
    std::size_t samples = 0;
};

/// Modes with a non-zero initial amplitude, each fitted over t <= min(t_end, 1.5 / |s_m|).
std::vector<ModeFit> fit_modes(const PolarShapeSpec& shape, double sigma, const DiagnosticsSeries& series);

struct RunSummary {
    double area_drift = 0.0;  // max |A(t) - A(0)| / A(0)
    double ucm_max = 0.0;
    bool perimeter_monotone = true;
    int first_non_monotone_step = -1;
};
RunSummary summarize(const SimulationResult& result);

struct VerifyReport {
    Experiment experiment = Experiment::custom;
    Scheme scheme = Scheme::newton;
    std::vector<ModeFit> fits;
    RunSummary summary;
    double rate_tolerance = 0.0;
    double area_tolerance = 1e-6;
    double ucm_tolerance = 1e-6;
    bool pass = false;
};

/// Runs the configured built-in experiment and checks it against the acceptance tolerances.
VerifyReport verify_experiment(const RunConfig& cfg, SimulationResult* result_out = nullptr);

struct BenchRow {
    Scheme scheme = Scheme::newton;
    double dt = 0.0;
    int steps_requested = 0;
    int steps_completed = 0;
    double wall_seconds = 0.0;
    double ms_per_step = 0.0;
    double mean_newton_iterations = 0.0;
    int max_newton_iterations = 0;
    bool perimeter_monotone = true;
    std::string status;  // "ok", "unstable" or "failed: ..."
};

std::vector<BenchRow> run_bench(const RunConfig& cfg);

std::string diagnostics_json(const SimulationResult& result, const RunConfig& cfg);
std::string verify_json(const VerifyReport& report);
std::string bench_json(const std::vector<BenchRow>& rows, const RunConfig& cfg);

/// CLI entry points. Messages go to `log` unless quiet; errors always go to `err`.
int cmd_run(const std::filesystem::path& config, const std::filesystem::path& out, bool quiet, std::ostream& log,
            std::ostream& err);
int cmd_verify(const std::filesystem::path& config, const std::filesystem::path& out, bool quiet, std::ostream& log,
               std::ostream& err);
int cmd_bench(const std::filesystem::path& config, const std::filesystem::path& out, bool quiet, std::ostream& log,
              std::ostream& err);

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool dashed = false;
};

/// Standalone SVG line plot; non-finite points are skipped.
std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<PlotSeries>& series);
std::string svg_bar_plot(const std::string& title, const std::string& ylabel, const std::vector<std::string>& labels,
                         const std::vector<double>& values);

}  // namespace hsflow
