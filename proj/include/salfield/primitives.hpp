#pragma once

// Closed, outward-oriented triangle meshes for simple solids.

#include <cstddef>

#include "salfield/geometry.hpp"

namespace salfield {

/// Axis-aligned box given by center and half extents; 12 triangles.
TriangleMesh make_box(const Vec3& center, const Vec3& half);

/// Capped cylinder along +y from `base` up to base.y + height.
TriangleMesh make_cylinder(const Vec3& base, double radius, double height, std::size_t segments = 24);

/// Cone along +y from a circular base at `base` to an apex at base.y + height.
TriangleMesh make_cone(const Vec3& base, double radius, double height, std::size_t segments = 24);

/// Icosahedron subdivided `level` times and projected to the sphere.
TriangleMesh make_icosphere(double radius, int level, const Vec3& center = Vec3::Zero());

/// Concatenates b into a, offsetting face indices.
void append_mesh(TriangleMesh& a, const TriangleMesh& b);

/// Signed enclosed volume (positive for outward-oriented closed meshes).
double signed_volume(const TriangleMesh& mesh);

}  // namespace salfield
