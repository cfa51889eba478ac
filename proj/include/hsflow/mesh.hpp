#pragma once

#include "hsflow/geometry.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hsflow {

using Triangle = std::array<int, 3>;

/// Conforming triangulation of the droplet. Immutable once built; every mesh gets a
/// process-unique id so that fields can be tied to the snapshot they were computed on.
class TriangleMesh {
public:
    /// Validates orientation, conformity and the boundary loop; throws MeshError.
    TriangleMesh(std::vector<Vec2> vertices, std::vector<Triangle> triangles,
                 std::vector<int> boundary_loop);

    std::size_t num_vertices() const { return vertices_.size(); }
    std::size_t num_triangles() const { return triangles_.size(); }
    std::size_t num_boundary() const { return boundary_loop_.size(); }

    const std::vector<Vec2>& vertices() const { return vertices_; }
    const std::vector<Triangle>& triangles() const { return triangles_; }
    const std::vector<int>& boundary_loop() const { return boundary_loop_; }
    const Vec2& vertex(std::size_t i) const { return vertices_[i]; }
    const Triangle& triangle(std::size_t t) const { return triangles_[t]; }

    double triangle_area(std::size_t t) const;
    double area() const;

    std::vector<Vec2> boundary_points() const;
    BoundaryCurve boundary_curve() const;

    std::uint64_t id() const { return id_; }

    /// Same connectivity, new coordinates; only orientation is checked.
    TriangleMesh with_vertices(std::vector<Vec2> vertices) const;

private:
    struct Unchecked {};
    TriangleMesh(Unchecked, std::vector<Vec2> vertices, std::vector<Triangle> triangles,
                 std::vector<int> boundary_loop);

    void validate() const;

    std::vector<Vec2> vertices_;
    std::vector<Triangle> triangles_;
    std::vector<int> boundary_loop_;
    std::uint64_t id_;
};

struct MeshPolicy {
    std::size_t boundary_vertex_count = 256;
    double interior_target_edge = 0.04;
    bool adaptive = true;
    /// Ratio between spacings of consecutive rings in the graded zone.
    double grading = 1.25;
    double min_angle_deg = 15.0;
    double max_area_ratio = 50.0;

    void validate() const;
};

struct MeshQuality {
    double min_angle_deg = 0.0;
    double max_area_ratio = 0.0;
};

/// Mapped-disk triangulation: the boundary vertices are kept bit-exactly, interior rings
/// are the boundary polygon scaled about its centroid.
TriangleMesh generate_mesh(const BoundaryCurve& curve, const MeshPolicy& policy);

/// x -> x + dt * velocity(x) at every vertex. Throws MeshInversionError.
TriangleMesh advect_mesh(const TriangleMesh& mesh, std::span<const Vec2> velocity, double dt);

MeshQuality quality_report(const TriangleMesh& mesh);

/// Rebuilds the interior from the boundary when the quality drops below the policy.
std::pair<TriangleMesh, bool> maybe_remesh(const TriangleMesh& mesh, const MeshPolicy& policy);

void write_mesh(std::ostream& os, const TriangleMesh& mesh);
void write_mesh(const std::string& path, const TriangleMesh& mesh);
TriangleMesh read_mesh(std::istream& is);

}  // namespace hsflow
