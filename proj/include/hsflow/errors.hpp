#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GeometryError : public Error {
public:
    using Error::Error;
};

class MeshError : public Error {
public:
    using Error::Error;
};

/// Raised by advect_mesh when a triangle loses positive orientation.
class MeshInversionError : public MeshError {
public:
    MeshInversionError(std::size_t triangle, double signed_area)
        : MeshError("triangle " + std::to_string(triangle) +
                    " inverted during advection (signed area " + std::to_string(signed_area) + ")"),
          triangle_(triangle), signed_area_(signed_area) {}

    std::size_t triangle() const noexcept { return triangle_; }
    double signed_area() const noexcept { return signed_area_; }

private:
    std::size_t triangle_;
    double signed_area_;
};

class SolverError : public Error {
public:
    using Error::Error;
};

/// Newton loop failed to reach the increment tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> history)
        : Error(what), history_(std::move(history)) {}

    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& message)
        : Error("config key '" + key + "': " + message), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace hsflow
