#include "hsflow/mesh.hpp"

#include "hsflow/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

namespace hsflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t next_mesh_id() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

double signed_triangle_area(const Vec2& a, const Vec2& b, const Vec2& c) {
    return 0.5 * cross(b - a, c - a);
}

// One ring of generated vertices: the boundary polygon scaled by `scale` about the centroid.
struct Ring {
    double scale = 1.0;
    double spacing = 0.0;
    std::vector<int> ids;
};

// Stitches the annulus between two rings. Both rings start near boundary vertex 0; at every
// step the shorter of the two candidate diagonals is taken.
void zip_rings(const std::vector<Vec2>& pts, const Ring& outer, const Ring& inner,
               std::vector<Triangle>& tris) {
    const std::size_t nb = outer.ids.size();
    const std::size_t na = inner.ids.size();
    auto o = [&](std::size_t k) { return outer.ids[k % nb]; };
    auto in = [&](std::size_t i) { return inner.ids[i % na]; };
    std::size_t i = 0;
    std::size_t k = 0;
    while (i < na || k < nb) {
        bool advance_outer;
        if (i == na) {
            advance_outer = true;
        } else if (k == nb) {
            advance_outer = false;
        } else {
            const double d_outer = (pts[in(i)] - pts[o(k + 1)]).squaredNorm();
            const double d_inner = (pts[in(i + 1)] - pts[o(k)]).squaredNorm();
            advance_outer = d_outer <= d_inner;
        }
        if (advance_outer) {
            tris.push_back({in(i), o(k), o(k + 1)});
            ++k;
        } else {
            tris.push_back({in(i), o(k), in(i + 1)});
            ++i;
        }
    }
}

}  // namespace

TriangleMesh::TriangleMesh(std::vector<Vec2> vertices, std::vector<Triangle> triangles,
                           std::vector<int> boundary_loop)
    : vertices_(std::move(vertices)),
      triangles_(std::move(triangles)),
      boundary_loop_(std::move(boundary_loop)),
      id_(next_mesh_id()) {
    validate();
}

TriangleMesh::TriangleMesh(Unchecked, std::vector<Vec2> vertices, std::vector<Triangle> triangles,
                           std::vector<int> boundary_loop)
    : vertices_(std::move(vertices)),
      triangles_(std::move(triangles)),
      boundary_loop_(std::move(boundary_loop)),
      id_(next_mesh_id()) {}

void TriangleMesh::validate() const {
    const int nv = static_cast<int>(vertices_.size());
    if (triangles_.empty()) throw MeshError("mesh has no triangles");
    if (boundary_loop_.size() < 3) throw MeshError("boundary loop needs at least 3 vertices");

    // directed edge -> number of triangles using it
    std::map<std::pair<int, int>, int> directed;
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
        const auto& tri = triangles_[t];
        for (int v : tri) {
            if (v < 0 || v >= nv) throw MeshError("triangle " + std::to_string(t) + " has a bad index");
        }
        if (!(triangle_area(t) > 0.0)) {
            throw MeshError("triangle " + std::to_string(t) + " is not positively oriented");
        }
        for (int e = 0; e < 3; ++e) {
            if (++directed[{tri[e], tri[(e + 1) % 3]}] > 1) {
                throw MeshError("non-conforming mesh: directed edge repeated in triangle " +
                                std::to_string(t));
            }
        }
    }

    std::map<int, int> boundary_next;
    for (const auto& [edge, count] : directed) {
        if (directed.count({edge.second, edge.first}) == 0) {
            if (!boundary_next.emplace(edge.first, edge.second).second) {
                throw MeshError("boundary is not a single simple loop");
            }
        }
    }
    if (boundary_next.size() != boundary_loop_.size()) {
        throw MeshError("boundary loop does not match the boundary edges of the triangulation");
    }
    const std::size_t nb = boundary_loop_.size();
    for (std::size_t k = 0; k < nb; ++k) {
        auto it = boundary_next.find(boundary_loop_[k]);
        if (it == boundary_next.end() || it->second != boundary_loop_[(k + 1) % nb]) {
            throw MeshError("boundary loop does not match the boundary edges of the triangulation");
        }
    }
}

double TriangleMesh::triangle_area(std::size_t t) const {
    const auto& tri = triangles_[t];
    return signed_triangle_area(vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]);
}

double TriangleMesh::area() const {
    double a = 0.0;
    for (std::size_t t = 0; t < triangles_.size(); ++t) a += triangle_area(t);
    return a;
}

std::vector<Vec2> TriangleMesh::boundary_points() const {
    std::vector<Vec2> pts;
    pts.reserve(boundary_loop_.size());
    for (int v : boundary_loop_) pts.push_back(vertices_[v]);
    return pts;
}

BoundaryCurve TriangleMesh::boundary_curve() const { return BoundaryCurve(boundary_points()); }

TriangleMesh TriangleMesh::with_vertices(std::vector<Vec2> vertices) const {
    if (vertices.size() != vertices_.size()) {
        throw MeshError("with_vertices: vertex count mismatch");
    }
    TriangleMesh out(Unchecked{}, std::move(vertices), triangles_, boundary_loop_);
    for (std::size_t t = 0; t < out.num_triangles(); ++t) {
        const double a = out.triangle_area(t);
        if (!(a > 0.0)) throw MeshInversionError(t, a);
    }
    return out;
}

void MeshPolicy::validate() const {
    if (boundary_vertex_count < 8) throw MeshError("boundary_vertex_count must be >= 8");
    if (!(min_angle_deg > 0.0 && min_angle_deg <= 30.0)) {
        throw MeshError("min_angle_deg must lie in (0, 30]");
    }
    if (!(interior_target_edge > 0.0)) throw MeshError("interior_target_edge must be positive");
    if (!(grading > 1.0)) throw MeshError("grading must exceed 1");
    if (!(max_area_ratio > 1.0)) throw MeshError("max_area_ratio must exceed 1");
}

TriangleMesh generate_mesh(const BoundaryCurve& curve, const MeshPolicy& policy) {
    policy.validate();
    const std::size_t n = curve.size();
    const Vec2 center = polygon_centroid(curve);

    // Boundary angles about the centroid, unwrapped from the angle of vertex 0.
    std::vector<double> theta(n);
    double mean_radius = 0.0;
    double min_radius = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
        const Vec2 d = curve.vertex(k) - center;
        theta[k] = std::atan2(d.y(), d.x());
        mean_radius += d.norm();
        min_radius = std::min(min_radius, d.norm());
        if (k > 0) {
            double step = theta[k] - theta[k - 1];
            step -= kTwoPi * std::floor(step / kTwoPi);
            if (step <= 0.0 || step >= std::numbers::pi) {
                throw MeshError("boundary is not star-shaped about its centroid");
            }
            theta[k] = theta[k - 1] + step;
        }
    }
    mean_radius /= static_cast<double>(n);
    if (theta[n - 1] - theta[0] >= kTwoPi) {
        throw MeshError("boundary winds more than once around its centroid");
    }

    // Point at arc length a (measured from vertex 0) on the boundary polygon.
    std::vector<double> arc(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) arc[k + 1] = arc[k] + curve.segment_lengths()[k];
    const double perimeter = arc[n];
    auto boundary_point = [&](double a) {
        a -= perimeter * std::floor(a / perimeter);
        auto it = std::upper_bound(arc.begin(), arc.end(), a);
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::distance(arc.begin(), it)) - 1, n - 1);
        const double s = (a - arc[k]) / curve.segment_lengths()[k];
        return Vec2((1.0 - s) * curve.vertex(k) + s * curve.vertex((k + 1) % n));
    };

    const double boundary_spacing = perimeter / static_cast<double>(n);
    const double target = policy.interior_target_edge;

    std::vector<Vec2> pts(curve.vertices());
    std::vector<Ring> rings;
    {
        Ring outer;
        outer.scale = 1.0;
        outer.spacing = boundary_spacing;
        outer.ids.resize(n);
        for (std::size_t k = 0; k < n; ++k) outer.ids[k] = static_cast<int>(k);
        rings.push_back(std::move(outer));
    }

    // Each ring is the boundary scaled about the centroid, resampled uniformly in arc length.
    constexpr double kRowHeight = 0.8660254037844386;  // equilateral height / edge
    for (int depth = 1;; ++depth) {
        const Ring& prev = rings.back();
        double h = target;
        if (policy.adaptive && target > prev.spacing) h = std::min(prev.spacing * policy.grading, target);
        const double scale = prev.scale - 0.5 * (prev.spacing + h) * kRowHeight / mean_radius;
        if (scale * min_radius < 0.6 * h) break;

        const auto count = static_cast<std::size_t>(std::max(4.0, std::round(scale * perimeter / h)));
        Ring ring;
        ring.scale = scale;
        ring.spacing = h;
        const double offset = depth % 2 == 1 ? 0.5 : 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const double a = perimeter * (static_cast<double>(i) + offset) / static_cast<double>(count);
            ring.ids.push_back(static_cast<int>(pts.size()));
            pts.push_back(center + scale * (boundary_point(a) - center));
        }
        rings.push_back(std::move(ring));
    }

    std::vector<Triangle> tris;
    for (std::size_t j = 0; j + 1 < rings.size(); ++j) zip_rings(pts, rings[j], rings[j + 1], tris);

    const int c = static_cast<int>(pts.size());
    pts.push_back(center);
    const Ring& innermost = rings.back();
    for (std::size_t i = 0; i < innermost.ids.size(); ++i) {
        tris.push_back({c, innermost.ids[i], innermost.ids[(i + 1) % innermost.ids.size()]});
    }

    std::vector<int> loop(n);
    for (std::size_t k = 0; k < n; ++k) loop[k] = static_cast<int>(k);
    TriangleMesh mesh(std::move(pts), std::move(tris), std::move(loop));

    const MeshQuality q = quality_report(mesh);
    if (q.min_angle_deg < policy.min_angle_deg) {
        std::ostringstream msg;
        msg << "mesh generation reached a minimum angle of " << q.min_angle_deg
            << " deg, below the required " << policy.min_angle_deg << " deg";
        throw MeshError(msg.str());
    }
    if (q.max_area_ratio > policy.max_area_ratio) {
        std::ostringstream msg;
        msg << "mesh generation produced an area ratio of " << q.max_area_ratio
            << ", above the allowed " << policy.max_area_ratio;
        throw MeshError(msg.str());
    }
    return mesh;
}

TriangleMesh advect_mesh(const TriangleMesh& mesh, std::span<const Vec2> velocity, double dt) {
    if (velocity.size() != mesh.num_vertices()) {
        throw MeshError("advect_mesh: one velocity per vertex required");
    }
    std::vector<Vec2> moved(mesh.num_vertices());
    for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = mesh.vertex(i) + dt * velocity[i];
    return mesh.with_vertices(std::move(moved));
}

MeshQuality quality_report(const TriangleMesh& mesh) {
    MeshQuality q;
    q.min_angle_deg = 180.0;
    double amin = std::numeric_limits<double>::infinity();
    double amax = 0.0;
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tri = mesh.triangle(t);
        for (int e = 0; e < 3; ++e) {
            const Vec2 a = mesh.vertex(tri[(e + 1) % 3]) - mesh.vertex(tri[e]);
            const Vec2 b = mesh.vertex(tri[(e + 2) % 3]) - mesh.vertex(tri[e]);
            const double angle = std::atan2(std::abs(cross(a, b)), a.dot(b)) * 180.0 / std::numbers::pi;
            q.min_angle_deg = std::min(q.min_angle_deg, angle);
        }
        const double area = mesh.triangle_area(t);
        amin = std::min(amin, area);
        amax = std::max(amax, area);
    }
    q.max_area_ratio = amax / amin;
    return q;
}

std::pair<TriangleMesh, bool> maybe_remesh(const TriangleMesh& mesh, const MeshPolicy& policy) {
    const MeshQuality q = quality_report(mesh);
    if (q.min_angle_deg >= policy.min_angle_deg && q.max_area_ratio <= policy.max_area_ratio) {
        return {mesh, false};
    }
    return {generate_mesh(mesh.boundary_curve(), policy), true};
}

void write_mesh(std::ostream& os, const TriangleMesh& mesh) {
    os << mesh.num_vertices() << ' ' << mesh.num_triangles() << ' ' << mesh.num_boundary() << '\n';
    os << std::setprecision(17);
    for (const Vec2& p : mesh.vertices()) os << p.x() << ' ' << p.y() << '\n';
    for (const auto& t : mesh.triangles()) os << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    for (int b : mesh.boundary_loop()) os << b << '\n';
}

void write_mesh(const std::string& path, const TriangleMesh& mesh) {
    std::ofstream os(path);
    if (!os) throw MeshError("cannot open " + path + " for writing");
    write_mesh(os, mesh);
}

TriangleMesh read_mesh(std::istream& is) {
    std::size_t nv = 0, nt = 0, nb = 0;
    if (!(is >> nv >> nt >> nb)) throw MeshError("mesh file: bad header");
    std::vector<Vec2> pts(nv);
    for (auto& p : pts) {
        std::string x, y;
        if (!(is >> x >> y)) throw MeshError("mesh file: truncated vertex block");
        p = Vec2(std::stod(x), std::stod(y));
    }
    std::vector<Triangle> tris(nt);
    for (auto& t : tris) {
        if (!(is >> t[0] >> t[1] >> t[2])) throw MeshError("mesh file: truncated triangle block");
    }
    std::vector<int> loop(nb);
    for (auto& b : loop) {
        if (!(is >> b)) throw MeshError("mesh file: truncated boundary block");
    }
    return TriangleMesh(std::move(pts), std::move(tris), std::move(loop));
}

}  // namespace hsflow
