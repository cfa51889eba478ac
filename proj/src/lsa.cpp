#include "hsflow/lsa.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hsflow {

double dispersion_rate(int m, double sigma, double r0) {
    const double md = m;
    return -sigma * md * (md * md - 1.0) / (r0 * r0 * r0);
}

ModePrediction predict_mode(int m, double sigma, double r0) {
    const double md = m;
    return {m, dispersion_rate(m, sigma, r0), sigma * (md * md - 1.0) / std::pow(r0, md + 2.0)};
}

double perturbed_pressure(int m, double sigma, double r0, double delta_r, double r, double theta) {
    const double md = m;
    const double a_m = sigma * (md * md - 1.0) / std::pow(r0, md + 2.0) * delta_r;
    return sigma / r0 + a_m * std::pow(r, md) * std::cos(md * theta);
}

GrowthFit fit_growth_rate(const std::vector<std::pair<double, double>>& series, double floor_fraction,
                          std::size_t min_samples) {
    if (series.empty()) throw std::invalid_argument("growth-rate fit: empty series");
    const double floor = floor_fraction * std::abs(series.front().second);
    std::vector<double> t;
    std::vector<double> y;
    for (const auto& [ti, ai] : series) {
        if (std::abs(ai) < floor || ai == 0.0) continue;
        t.push_back(ti);
        y.push_back(std::log(std::abs(ai)));
    }
    if (t.size() < min_samples) {
        throw std::invalid_argument("growth-rate fit: " + std::to_string(t.size()) +
                                    " usable samples, need at least " + std::to_string(min_samples));
    }
    const double n = static_cast<double>(t.size());
    double tm = 0.0;
    double ym = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        tm += t[i];
        ym += y[i];
    }
    tm /= n;
    ym /= n;
    double stt = 0.0;
    double sty = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        stt += (t[i] - tm) * (t[i] - tm);
        sty += (t[i] - tm) * (y[i] - ym);
    }
    if (stt <= 0.0) throw std::invalid_argument("growth-rate fit: samples share one time");
    GrowthFit fit;
    fit.rate = sty / stt;
    fit.intercept = ym - fit.rate * tm;
    double ss = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = y[i] - (fit.intercept + fit.rate * t[i]);
        ss += r * r;
    }
    fit.rms_log_residual = std::sqrt(ss / n);
    fit.samples_used = t.size();
    return fit;
}

}  // namespace hsflow
