#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace hsflow {

using Vec2 = Eigen::Vector2d;

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Rotation by -pi/2: maps the CCW tangent onto the outward normal.
inline Vec2 rotate_cw(const Vec2& v) { return {v.y(), -v.x()}; }

struct FourierMode {
    int m = 0;
    double cos_amp = 0.0;
    double sin_amp = 0.0;
};

/// Star-shaped curve R(theta) = R0 * (1 + sum_m c_m cos(m theta) + s_m sin(m theta)).
struct PolarShapeSpec {
    double base_radius = 1.0;
    std::vector<FourierMode> modes;

    double radius(double theta) const;
};

/// Closed, simple, counter-clockwise polygon with per-vertex frames.
class BoundaryCurve {
public:
    /// Validates orientation and simplicity; throws GeometryError otherwise.
    explicit BoundaryCurve(std::vector<Vec2> vertices);

    std::size_t size() const { return vertices_.size(); }
    const std::vector<Vec2>& vertices() const { return vertices_; }
    const Vec2& vertex(std::size_t i) const { return vertices_[i]; }

    /// Length of segment i -> i+1 (cyclic).
    const std::vector<double>& segment_lengths() const { return segment_lengths_; }
    const std::vector<Vec2>& tangents() const { return tangents_; }
    const std::vector<Vec2>& normals() const { return normals_; }

    /// Average of the two adjacent segment lengths.
    double arc_weight(std::size_t i) const;

private:
    std::vector<Vec2> vertices_;
    std::vector<double> segment_lengths_;
    std::vector<Vec2> tangents_;
    std::vector<Vec2> normals_;
};

struct CurveMeasures {
    double perimeter = 0.0;
    double area = 0.0;
};

/// Mean radial perturbation plus cosine/sine amplitudes for 1 <= m <= m_max.
struct FourierCoefficients {
    int m_max = 0;
    double mean = 0.0;
    std::vector<double> cos_amp;  // index m, entry 0 unused
    std::vector<double> sin_amp;

    double c(int m) const { return cos_amp.at(static_cast<std::size_t>(m)); }
    double s(int m) const { return sin_amp.at(static_cast<std::size_t>(m)); }
};

BoundaryCurve sample_polar_boundary(const PolarShapeSpec& spec, std::size_t n_vertices);

CurveMeasures curve_measures(const BoundaryCurve& curve);

/// Area centroid of the polygon.
Vec2 polygon_centroid(const BoundaryCurve& curve);

/// Signed area of an arbitrary closed polygon (shoelace).
double signed_polygon_area(std::span<const Vec2> vertices);

/// Discrete curvature vector -(tau_{i+1/2} - tau_{i-1/2}) / l_i; equals kappa*n with
/// kappa > 0 on a CCW circle.
std::vector<Vec2> vertex_curvature_vector(const BoundaryCurve& curve);

/// Radial Fourier analysis of R(theta) - 1 about the polygon centroid.
FourierCoefficients fourier_decompose(const BoundaryCurve& curve, int m_max);

/// Same as above with an explicit anchor point.
FourierCoefficients fourier_decompose(const BoundaryCurve& curve, int m_max, const Vec2& center);

/// u_cm = A^{-1} * boundary integral of x (u.n), trapezoidal in the vertices.
Vec2 center_of_mass_velocity(const BoundaryCurve& curve, std::span<const double> normal_velocity);

/// Same integral for vertex velocities interpolated linearly along each edge, with the edge
/// normals; exact for piecewise-linear boundary traces.
Vec2 center_of_mass_velocity(const BoundaryCurve& curve, std::span<const Vec2> velocity);

void write_boundary_csv(std::ostream& os, const BoundaryCurve& curve);
void write_boundary_csv(const std::string& path, const BoundaryCurve& curve);
BoundaryCurve read_boundary_csv(std::istream& is);

}  // namespace hsflow
