#include "hsflow/geometry.hpp"

#include "hsflow/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace hsflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double d1 = cross(b - a, c - a);
    const double d2 = cross(b - a, d - a);
    const double d3 = cross(d - c, a - c);
    const double d4 = cross(d - c, b - c);
    return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

// Angles of the vertices about `center`, unwrapped to a strictly increasing sequence
// starting at the angle of vertex 0. Throws when the curve is not star-shaped about center.
std::vector<double> unwrapped_angles(const BoundaryCurve& curve, const Vec2& center) {
    const std::size_t n = curve.size();
    std::vector<double> theta(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 d = curve.vertex(i) - center;
        theta[i] = std::atan2(d.y(), d.x());
    }
    for (std::size_t i = 1; i < n; ++i) {
        double step = theta[i] - theta[i - 1];
        step -= kTwoPi * std::floor(step / kTwoPi);
        if (step <= 0.0 || step >= std::numbers::pi) {
            throw GeometryError("curve is not star-shaped about the anchor point (vertex " +
                                std::to_string(i) + ")");
        }
        theta[i] = theta[i - 1] + step;
    }
    const double closing = theta[0] + kTwoPi - theta[n - 1];
    if (closing <= 0.0 || closing >= std::numbers::pi) {
        throw GeometryError("curve does not wind once around the anchor point");
    }
    return theta;
}

}  // namespace

double PolarShapeSpec::radius(double theta) const {
    double r = 1.0;
    for (const auto& mode : modes) {
        r += mode.cos_amp * std::cos(mode.m * theta) + mode.sin_amp * std::sin(mode.m * theta);
    }
    return base_radius * r;
}

BoundaryCurve::BoundaryCurve(std::vector<Vec2> vertices) : vertices_(std::move(vertices)) {
    const std::size_t n = vertices_.size();
    if (n < 3) {
        throw GeometryError("boundary curve needs at least 3 vertices");
    }
    if (signed_polygon_area(vertices_) <= 0.0) {
        throw GeometryError("boundary curve must be counter-clockwise with positive area");
    }

    segment_lengths_.resize(n);
    std::vector<Vec2> seg_dir(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 d = vertices_[(i + 1) % n] - vertices_[i];
        segment_lengths_[i] = d.norm();
        if (segment_lengths_[i] == 0.0) {
            throw GeometryError("zero-length boundary segment at vertex " + std::to_string(i));
        }
        seg_dir[i] = d / segment_lengths_[i];
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;
            if (segments_intersect(vertices_[i], vertices_[(i + 1) % n], vertices_[j],
                                   vertices_[(j + 1) % n])) {
                throw GeometryError("boundary curve self-intersects (segments " + std::to_string(i) +
                                    ", " + std::to_string(j) + ")");
            }
        }
    }

    tangents_.resize(n);
    normals_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 t = seg_dir[(i + n - 1) % n] + seg_dir[i];
        tangents_[i] = t.normalized();
        normals_[i] = rotate_cw(tangents_[i]);
    }
}

double BoundaryCurve::arc_weight(std::size_t i) const {
    const std::size_t n = size();
    return 0.5 * (segment_lengths_[(i + n - 1) % n] + segment_lengths_[i]);
}

double signed_polygon_area(std::span<const Vec2> vertices) {
    const std::size_t n = vertices.size();
    double twice = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        twice += cross(vertices[i], vertices[(i + 1) % n]);
    }
    return 0.5 * twice;
}

BoundaryCurve sample_polar_boundary(const PolarShapeSpec& spec, std::size_t n_vertices) {
    if (n_vertices < 8) {
        throw GeometryError("sample_polar_boundary needs at least 8 vertices");
    }
    if (!(spec.base_radius > 0.0)) {
        throw GeometryError("base radius must be positive");
    }
    std::vector<Vec2> pts(n_vertices);
    for (std::size_t k = 0; k < n_vertices; ++k) {
        const double theta = kTwoPi * static_cast<double>(k) / static_cast<double>(n_vertices);
        const double r = spec.radius(theta);
        if (!(r > 0.0)) {
            throw GeometryError("polar shape is not star-shaped: R(theta) <= 0 at sample " +
                                std::to_string(k));
        }
        pts[k] = Vec2(r * std::cos(theta), r * std::sin(theta));
    }
    return BoundaryCurve(std::move(pts));
}

CurveMeasures curve_measures(const BoundaryCurve& curve) {
    CurveMeasures out;
    for (double l : curve.segment_lengths()) out.perimeter += l;
    out.area = signed_polygon_area(curve.vertices());
    return out;
}

Vec2 polygon_centroid(const BoundaryCurve& curve) {
    const auto& v = curve.vertices();
    const std::size_t n = v.size();
    // Shift by vertex 0 so that the result is translation-equivariant to roundoff.
    const Vec2 origin = v[0];
    double twice_area = 0.0;
    Vec2 acc = Vec2::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = v[i] - origin;
        const Vec2 b = v[(i + 1) % n] - origin;
        const double w = cross(a, b);
        twice_area += w;
        acc += w * (a + b);
    }
    return origin + acc / (3.0 * twice_area);
}

std::vector<Vec2> vertex_curvature_vector(const BoundaryCurve& curve) {
    const std::size_t n = curve.size();
    const auto& v = curve.vertices();
    const auto& len = curve.segment_lengths();
    std::vector<Vec2> h(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t prev = (i + n - 1) % n;
        const Vec2 t_prev = (v[i] - v[prev]) / len[prev];
        const Vec2 t_next = (v[(i + 1) % n] - v[i]) / len[i];
        h[i] = -(t_next - t_prev) / curve.arc_weight(i);
    }
    return h;
}

FourierCoefficients fourier_decompose(const BoundaryCurve& curve, int m_max) {
    return fourier_decompose(curve, m_max, polygon_centroid(curve));
}

FourierCoefficients fourier_decompose(const BoundaryCurve& curve, int m_max, const Vec2& center) {
    if (m_max < 0) {
        throw GeometryError("m_max must be non-negative");
    }
    const std::size_t n = curve.size();
    const std::vector<double> theta = unwrapped_angles(curve, center);

    FourierCoefficients out;
    out.m_max = m_max;
    out.cos_amp.assign(static_cast<std::size_t>(m_max) + 1, 0.0);
    out.sin_amp.assign(static_cast<std::size_t>(m_max) + 1, 0.0);

    for (std::size_t k = 0; k < n; ++k) {
        // Trapezoid weight of node k on the periodic angle grid.
        const double before = k == 0 ? theta[0] + kTwoPi - theta[n - 1] : theta[k] - theta[k - 1];
        const double after = k + 1 == n ? theta[0] + kTwoPi - theta[k] : theta[k + 1] - theta[k];
        const double w = 0.5 * (before + after);
        const double dr = (curve.vertex(k) - center).norm() - 1.0;
        out.mean += w * dr;
        for (int m = 1; m <= m_max; ++m) {
            out.cos_amp[static_cast<std::size_t>(m)] += w * dr * std::cos(m * theta[k]);
            out.sin_amp[static_cast<std::size_t>(m)] += w * dr * std::sin(m * theta[k]);
        }
    }
    out.mean /= kTwoPi;
    for (int m = 1; m <= m_max; ++m) {
        out.cos_amp[static_cast<std::size_t>(m)] /= std::numbers::pi;
        out.sin_amp[static_cast<std::size_t>(m)] /= std::numbers::pi;
    }
    return out;
}

Vec2 center_of_mass_velocity(const BoundaryCurve& curve, std::span<const double> normal_velocity) {
    if (normal_velocity.size() != curve.size()) {
        throw GeometryError("normal velocity must have one value per curve vertex");
    }
    Vec2 acc = Vec2::Zero();
    for (std::size_t i = 0; i < curve.size(); ++i) {
        acc += curve.arc_weight(i) * normal_velocity[i] * curve.vertex(i);
    }
    return acc / curve_measures(curve).area;
}

Vec2 center_of_mass_velocity(const BoundaryCurve& curve, std::span<const Vec2> velocity) {
    if (velocity.size() != curve.size()) throw GeometryError("velocity must have one value per curve vertex");
    const std::size_t n = curve.size();
    Vec2 acc = Vec2::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        const Vec2& xi = curve.vertex(i);
        const Vec2& xj = curve.vertex(j);
        const Vec2 nl = rotate_cw(xj - xi);  // normal times length
        const double ui = velocity[i].dot(nl);
        const double uj = velocity[j].dot(nl);
        acc += ((2.0 * ui + uj) * xi + (ui + 2.0 * uj) * xj) / 6.0;
    }
    return acc / curve_measures(curve).area;
}

void write_boundary_csv(std::ostream& os, const BoundaryCurve& curve) {
    const Vec2 c = polygon_centroid(curve);
    os << "theta,x,y\n";
    os << std::setprecision(17);
    for (const Vec2& p : curve.vertices()) {
        const Vec2 d = p - c;
        os << std::atan2(d.y(), d.x()) << ',' << p.x() << ',' << p.y() << '\n';
    }
}

void write_boundary_csv(const std::string& path, const BoundaryCurve& curve) {
    std::ofstream os(path);
    if (!os) throw GeometryError("cannot open " + path + " for writing");
    write_boundary_csv(os, curve);
}

BoundaryCurve read_boundary_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("theta,x,y", 0) != 0) {
        throw GeometryError("boundary CSV must start with header 'theta,x,y'");
    }
    std::vector<Vec2> pts;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string theta, x, y;
        if (!std::getline(row, theta, ',') || !std::getline(row, x, ',') || !std::getline(row, y)) {
            throw GeometryError("malformed boundary CSV row: " + line);
        }
        pts.emplace_back(std::stod(x), std::stod(y));
    }
    return BoundaryCurve(std::move(pts));
}

}  // namespace hsflow
