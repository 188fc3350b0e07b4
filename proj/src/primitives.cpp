#include "salfield/primitives.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace salfield {

TriangleMesh make_box(const Vec3& c, const Vec3& h) {
    if (!(h.minCoeff() > 0)) throw std::invalid_argument("make_box: half extents must be positive");
    TriangleMesh m;
    for (int i = 0; i < 8; ++i)
        m.vertices.push_back(c + Vec3((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(), (i & 4) ? h.z() : -h.z()));
    // Corner index bits: 1 = +x, 2 = +y, 4 = +z.
    m.faces = {{0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}, {0, 1, 5}, {0, 5, 4},
               {2, 6, 7}, {2, 7, 3}, {0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}};
    return m;
}

namespace {
std::vector<Vec3> ring(const Vec3& base, double radius, double y, std::size_t n) {
    std::vector<Vec3> out;
    for (std::size_t k = 0; k < n; ++k) {
        const double a = 2.0 * std::numbers::pi * double(k) / double(n);
        out.push_back(base + Vec3(radius * std::cos(a), y, radius * std::sin(a)));
    }
    return out;
}
}  // namespace

TriangleMesh make_cylinder(const Vec3& base, double radius, double height, std::size_t n) {
    if (!(radius > 0) || !(height > 0) || n < 3) throw std::invalid_argument("make_cylinder: bad parameters");
    TriangleMesh m;
    const auto lo = ring(base, radius, 0.0, n), hi = ring(base, radius, height, n);
    m.vertices.insert(m.vertices.end(), lo.begin(), lo.end());
    m.vertices.insert(m.vertices.end(), hi.begin(), hi.end());
    const auto N = static_cast<std::uint32_t>(n);
    m.vertices.push_back(base);
    m.vertices.push_back(base + Vec3(0, height, 0));
    const std::uint32_t cb = 2 * N, ct = 2 * N + 1;
    for (std::uint32_t k = 0; k < N; ++k) {
        const std::uint32_t k1 = (k + 1) % N;
        m.faces.push_back({k, N + k1, k1});
        m.faces.push_back({k, N + k, N + k1});
        m.faces.push_back({cb, k, k1});
        m.faces.push_back({ct, N + k1, N + k});
    }
    return m;
}

TriangleMesh make_cone(const Vec3& base, double radius, double height, std::size_t n) {
    if (!(radius > 0) || !(height > 0) || n < 3) throw std::invalid_argument("make_cone: bad parameters");
    TriangleMesh m;
    m.vertices = ring(base, radius, 0.0, n);
    const auto N = static_cast<std::uint32_t>(n);
    m.vertices.push_back(base);
    m.vertices.push_back(base + Vec3(0, height, 0));
    for (std::uint32_t k = 0; k < N; ++k) {
        const std::uint32_t k1 = (k + 1) % N;
        m.faces.push_back({N, k, k1});
        m.faces.push_back({N + 1, k1, k});
    }
    return m;
}

TriangleMesh make_icosphere(double radius, int level, const Vec3& center) {
    if (!(radius > 0) || level < 0) throw std::invalid_argument("make_icosphere: bad parameters");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p.normalize();
    std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                           {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                           {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            v.push_back((v[a] + v[b]).normalized());
            const auto id = static_cast<std::uint32_t>(v.size() - 1);
            mid.emplace(key, id);
            return id;
        };
        std::vector<Face> next;
        for (const auto& tri : f) {
            const auto a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
            next.push_back({tri[0], a, c});
            next.push_back({tri[1], b, a});
            next.push_back({tri[2], c, b});
            next.push_back({a, b, c});
        }
        f = std::move(next);
    }
    TriangleMesh m;
    for (const auto& p : v) m.vertices.push_back(center + radius * p);
    m.faces = std::move(f);
    return m;
}

void append_mesh(TriangleMesh& a, const TriangleMesh& b) {
    const auto off = static_cast<std::uint32_t>(a.vertices.size());
    a.vertices.insert(a.vertices.end(), b.vertices.begin(), b.vertices.end());
    for (auto f : b.faces) a.faces.push_back({f[0] + off, f[1] + off, f[2] + off});
}

double signed_volume(const TriangleMesh& mesh) {
    double v = 0.0;
    for (const auto& f : mesh.faces)
        v += mesh.vertices[f[0]].dot(mesh.vertices[f[1]].cross(mesh.vertices[f[2]])) / 6.0;
    return v;
}

}  // namespace salfield
