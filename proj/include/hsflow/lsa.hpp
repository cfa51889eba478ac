#pragma once

#include <utility>
#include <vector>

namespace hsflow {

/// Linear-stability prediction for one Fourier mode of a perturbed disk.
struct ModePrediction {
    int m = 0;
    double growth_rate = 0.0;         // 1/time
    double pressure_amplitude = 0.0;  // A_m per unit radial perturbation
};

/// -sigma m (m^2 - 1) / R0^3.
double dispersion_rate(int m, double sigma, double r0);

ModePrediction predict_mode(int m, double sigma, double r0);

/// sigma/R0 + A_m r^m cos(m theta) with A_m = sigma (m^2 - 1) delta_r / R0^(m+2).
double perturbed_pressure(int m, double sigma, double r0, double delta_r, double r, double theta);

struct GrowthFit {
    double rate = 0.0;
    double intercept = 0.0;  // log amplitude at t = 0
    double rms_log_residual = 0.0;
    std::size_t samples_used = 0;
};

/// Least squares line through (t, log|a|). Samples below floor_fraction * |a(first)| are dropped.
/// Throws std::invalid_argument with fewer than `min_samples` usable samples.
GrowthFit fit_growth_rate(const std::vector<std::pair<double, double>>& series, double floor_fraction = 1e-9,
                          std::size_t min_samples = 5);

}  // namespace hsflow
