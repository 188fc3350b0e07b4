#include "salfield/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <random>
#include <utility>

namespace salfield {

double TriangleMesh::face_area(std::size_t f) const {
    const auto& t = faces[f];
    return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

Vec3 TriangleMesh::face_normal(std::size_t f) const {
    const auto& t = faces[f];
    return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).normalized();
}

double TriangleMesh::area() const {
    double a = 0.0;
    for (std::size_t f = 0; f < faces.size(); ++f) a += face_area(f);
    return a;
}

void validate_mesh(const TriangleMesh& mesh) {
    if (mesh.vertices.empty() || mesh.faces.empty()) throw MeshError("mesh has no vertices or faces");
    const auto nv = mesh.vertices.size();
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& t = mesh.faces[f];
        for (auto v : t)
            if (v >= nv)
                throw MeshError("face " + std::to_string(f) + " references vertex " + std::to_string(v) + " of " +
                                std::to_string(nv));
        if (!(mesh.face_area(f) > kMinFaceArea)) throw MeshError("face " + std::to_string(f) + " is degenerate");
        for (int k = 0; k < 3; ++k) ++directed[{t[k], t[(k + 1) % 3]}];
    }
    for (const auto& [edge, count] : directed) {
        if (count != 1)
            throw MeshError("non-watertight: directed edge (" + std::to_string(edge.first) + "," +
                            std::to_string(edge.second) + ") used " + std::to_string(count) + " times");
        const auto rev = directed.find({edge.second, edge.first});
        if (rev == directed.end())
            throw MeshError("non-watertight: boundary edge (" + std::to_string(edge.first) + "," +
                            std::to_string(edge.second) + ")");
    }
}

TriangleMesh normalize_to_unit_sphere(TriangleMesh mesh) {
    if (mesh.vertices.empty()) throw MeshError("cannot normalize an empty mesh");
    Eigen::AlignedBox3d box;
    for (const auto& v : mesh.vertices) box.extend(v);
    const Vec3 center = box.center();
    double rmax = 0.0;
    for (auto& v : mesh.vertices) {
        v -= center;
        rmax = std::max(rmax, v.norm());
    }
    if (!(rmax > 0)) throw MeshError("cannot normalize a mesh collapsed to a point");
    for (auto& v : mesh.vertices) v /= rmax;
    return mesh;
}

// ---------------------------------------------------------------------------
// KdTree

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= 8) return id;
    Eigen::AlignedBox3d box;
    for (auto i = begin; i < end; ++i) box.extend(points_[order_[i]]);
    int axis = 0;
    box.sizes().maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double ca = points_[a][axis], cb = points_[b][axis];
                         return ca < cb || (ca == cb && a < b);
                     });
    const double split = points_[order_[mid]][axis];
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    Node& n = nodes_[id];
    n.axis = static_cast<std::uint8_t>(axis);
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
}

namespace {
inline bool closer(double d2, std::size_t idx, double best_d2, std::size_t best_idx) {
    return d2 < best_d2 || (d2 == best_d2 && idx < best_idx);
}
}  // namespace

KdTree::Hit KdTree::nearest(const Vec3& q, std::size_t exclude) const {
    double best_d2 = std::numeric_limits<double>::infinity();
    std::size_t best = npos;
    if (nodes_.empty()) return {};
    std::vector<std::int32_t> stack{0};
    // Depth-first, nearer child first; the far child is re-checked against the bound when popped.
    std::vector<double> bound{0.0};
    while (!stack.empty()) {
        const auto id = stack.back();
        const double lb = bound.back();
        stack.pop_back();
        bound.pop_back();
        if (lb > best_d2) continue;
        const Node& n = nodes_[id];
        if (n.left < 0) {
            for (auto i = n.begin; i < n.end; ++i) {
                const auto idx = order_[i];
                if (idx == exclude) continue;
                const double d2 = (points_[idx] - q).squaredNorm();
                if (closer(d2, idx, best_d2, best)) {
                    best_d2 = d2;
                    best = idx;
                }
            }
            continue;
        }
        const double diff = q[n.axis] - n.split;
        const auto near = diff < 0 ? n.left : n.right;
        const auto far = diff < 0 ? n.right : n.left;
        stack.push_back(far);
        bound.push_back(std::max(lb, diff * diff));
        stack.push_back(near);
        bound.push_back(lb);
    }
    if (best == npos) return {};
    return Hit{best, std::sqrt(best_d2)};
}

std::vector<KdTree::Hit> KdTree::knn(const Vec3& q, std::size_t k) const {
    using Entry = std::pair<double, std::size_t>;  // (d2, index); lexicographic order is the tie rule
    std::priority_queue<Entry> heap;
    if (k == 0 || nodes_.empty()) return {};
    std::vector<std::pair<std::int32_t, double>> stack{{0, 0.0}};
    while (!stack.empty()) {
        const auto [id, lb] = stack.back();
        stack.pop_back();
        if (heap.size() == k && lb > heap.top().first) continue;
        const Node& n = nodes_[id];
        if (n.left < 0) {
            for (auto i = n.begin; i < n.end; ++i) {
                const Entry e{(points_[order_[i]] - q).squaredNorm(), order_[i]};
                if (heap.size() < k) {
                    heap.push(e);
                } else if (e < heap.top()) {
                    heap.pop();
                    heap.push(e);
                }
            }
            continue;
        }
        const double diff = q[n.axis] - n.split;
        stack.emplace_back(diff < 0 ? n.right : n.left, std::max(lb, diff * diff));
        stack.emplace_back(diff < 0 ? n.left : n.right, lb);
    }
    std::vector<Hit> out(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
        out[i] = Hit{heap.top().second, std::sqrt(heap.top().first)};
        heap.pop();
    }
    return out;
}

// ---------------------------------------------------------------------------
// MeshDistance

MeshDistance::MeshDistance(const TriangleMesh& mesh) : mesh_(mesh) {
    if (mesh_.faces.empty()) throw MeshError("signed distance needs a nonempty mesh");
    const auto nf = mesh_.faces.size();
    face_normals_.resize(nf);
    vertex_normals_.assign(mesh_.vertices.size(), Vec3::Zero());
    std::map<std::pair<std::uint32_t, std::uint32_t>, Vec3> edge_sum;
    for (std::size_t f = 0; f < nf; ++f) {
        const auto& t = mesh_.faces[f];
        const Vec3 n = mesh_.face_normal(f);
        face_normals_[f] = n;
        for (int k = 0; k < 3; ++k) {
            const Vec3& a = mesh_.vertices[t[k]];
            const Vec3 e1 = (mesh_.vertices[t[(k + 1) % 3]] - a).normalized();
            const Vec3 e2 = (mesh_.vertices[t[(k + 2) % 3]] - a).normalized();
            const double angle = std::acos(std::clamp(e1.dot(e2), -1.0, 1.0));
            vertex_normals_[t[k]] += angle * n;
            const auto key = std::minmax(t[k], t[(k + 1) % 3]);
            auto [it, inserted] = edge_sum.try_emplace({key.first, key.second}, Vec3::Zero());
            it->second += n;
        }
    }
    edge_normals_.resize(nf);
    for (std::size_t f = 0; f < nf; ++f) {
        const auto& t = mesh_.faces[f];
        for (int k = 0; k < 3; ++k) {
            const auto key = std::minmax(t[k], t[(k + 1) % 3]);
            edge_normals_[f][k] = edge_sum.at({key.first, key.second});
        }
    }
    tri_order_.resize(nf);
    std::iota(tri_order_.begin(), tri_order_.end(), 0u);
    build(0, static_cast<std::uint32_t>(nf));
}

std::int32_t MeshDistance::build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    BvhNode node;
    Eigen::AlignedBox3d centroids;
    for (auto i = begin; i < end; ++i) {
        const auto& t = mesh_.faces[tri_order_[i]];
        for (auto v : t) node.box.extend(mesh_.vertices[v]);
        centroids.extend((mesh_.vertices[t[0]] + mesh_.vertices[t[1]] + mesh_.vertices[t[2]]) / 3.0);
    }
    node.begin = begin;
    node.end = end;
    nodes_.push_back(node);
    if (end - begin <= 4) return id;
    int axis = 0;
    centroids.sizes().maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    auto centroid = [&](std::uint32_t f) {
        const auto& t = mesh_.faces[f];
        return mesh_.vertices[t[0]][axis] + mesh_.vertices[t[1]][axis] + mesh_.vertices[t[2]][axis];
    };
    std::nth_element(tri_order_.begin() + begin, tri_order_.begin() + mid, tri_order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         const double ca = centroid(a), cb = centroid(b);
                         return ca < cb || (ca == cb && a < b);
                     });
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

namespace {

enum class Region : std::uint8_t { Face, Edge0, Edge1, Edge2, Vertex0, Vertex1, Vertex2 };

// Closest point on triangle (a, b, c) with the Voronoi region it falls in.
// Edge k joins vertex k and vertex k+1.
std::pair<Vec3, Region> closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return {a, Region::Vertex0};
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return {b, Region::Vertex1};
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return {a + (d1 / (d1 - d3)) * ab, Region::Edge0};
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return {c, Region::Vertex2};
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return {a + (d2 / (d2 - d6)) * ac, Region::Edge2};
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
        return {b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b), Region::Edge1};
    const double denom = 1.0 / (va + vb + vc);
    return {a + ab * (vb * denom) + ac * (vc * denom), Region::Face};
}

}  // namespace

void MeshDistance::search(const Vec3& p, Query& best) const {
    std::vector<std::int32_t> stack{0};
    while (!stack.empty()) {
        const auto id = stack.back();
        stack.pop_back();
        const BvhNode& n = nodes_[id];
        if (n.box.squaredExteriorDistance(p) > best.d2) continue;
        if (n.left < 0) {
            for (auto i = n.begin; i < n.end; ++i) {
                const auto f = tri_order_[i];
                const auto& t = mesh_.faces[f];
                const auto [q, region] =
                    closest_on_triangle(p, mesh_.vertices[t[0]], mesh_.vertices[t[1]], mesh_.vertices[t[2]]);
                const double d2 = (p - q).squaredNorm();
                if (d2 < best.d2 || (d2 == best.d2 && f < best.face)) {
                    best.d2 = d2;
                    best.face = f;
                    best.feature = static_cast<Feature>(region);
                    best.point = q;
                }
            }
            continue;
        }
        const double dl = nodes_[n.left].box.squaredExteriorDistance(p);
        const double dr = nodes_[n.right].box.squaredExteriorDistance(p);
        if (dl <= dr) {
            stack.push_back(n.right);
            stack.push_back(n.left);
        } else {
            stack.push_back(n.left);
            stack.push_back(n.right);
        }
    }
}

Vec3 MeshDistance::pseudonormal(std::size_t face, Feature feature) const {
    const auto& t = mesh_.faces[face];
    switch (feature) {
        case Feature::Face: return face_normals_[face];
        case Feature::Edge0: return edge_normals_[face][0];
        case Feature::Edge1: return edge_normals_[face][1];
        case Feature::Edge2: return edge_normals_[face][2];
        case Feature::Vertex0: return vertex_normals_[t[0]];
        case Feature::Vertex1: return vertex_normals_[t[1]];
        case Feature::Vertex2: return vertex_normals_[t[2]];
    }
    return face_normals_[face];
}

MeshDistance::Closest MeshDistance::closest(const Vec3& p) const {
    Query best;
    search(p, best);
    return Closest{best.point, best.face, std::sqrt(best.d2)};
}

double MeshDistance::unsigned_distance(const Vec3& p) const { return closest(p).distance; }

double MeshDistance::signed_distance(const Vec3& p) const {
    Query best;
    search(p, best);
    const double d = std::sqrt(best.d2);
    if (d == 0.0) return 0.0;
    return (p - best.point).dot(pseudonormal(best.face, best.feature)) < 0 ? -d : d;
}

// ---------------------------------------------------------------------------
// Sampling, mirroring, set distances

std::vector<std::size_t> farthest_point_sampling_from(std::span<const Vec3> points, std::size_t k,
                                                      std::size_t first) {
    const std::size_t n = points.size();
    if (k < 1 || k > n)
        throw std::out_of_range("farthest_point_sampling: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(n) + "]");
    if (first >= n) throw std::out_of_range("farthest_point_sampling: first index out of range");
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> picked{first};
    picked.reserve(k);
    std::size_t last = first;
    while (picked.size() < k) {
        std::size_t arg = 0;
        double far = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            min_d2[i] = std::min(min_d2[i], (points[i] - points[last]).squaredNorm());
            if (min_d2[i] > far) {
                far = min_d2[i];
                arg = i;
            }
        }
        picked.push_back(arg);
        last = arg;
    }
    return picked;
}

std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points, std::size_t k, std::uint64_t seed) {
    if (points.empty()) throw std::out_of_range("farthest_point_sampling: empty point set");
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
    return farthest_point_sampling_from(points, k, pick(rng));
}

SymmetryPlane SymmetryPlane::through(const Vec3& normal, const Vec3& point) {
    SymmetryPlane p;
    p.normal = normal.normalized();
    p.offset = p.normal.dot(point);
    p.validate();
    return p;
}

void SymmetryPlane::validate() const {
    if (std::abs(normal.norm() - 1.0) > 1e-6) throw std::invalid_argument("symmetry plane normal must be unit length");
}

Vec3 mirror(const Vec3& p, const SymmetryPlane& plane) {
    return p - 2.0 * (plane.normal.dot(p) - plane.offset) * plane.normal;
}

std::vector<Vec3> mirror(std::span<const Vec3> points, const SymmetryPlane& plane) {
    plane.validate();
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(mirror(p, plane));
    return out;
}

namespace {
double directed_hausdorff(std::span<const Vec3> from, const KdTree& to) {
    double worst = 0.0;
    for (const auto& p : from) worst = std::max(worst, to.nearest(p).distance);
    return worst;
}
}  // namespace

double hausdorff(std::span<const Vec3> a, std::span<const Vec3> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("hausdorff: empty point set");
    const KdTree ta(std::vector<Vec3>(a.begin(), a.end()));
    const KdTree tb(std::vector<Vec3>(b.begin(), b.end()));
    return std::max(directed_hausdorff(a, tb), directed_hausdorff(b, ta));
}

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t n, Rng& rng,
                                 std::vector<std::uint32_t>* face_ids) {
    if (mesh.faces.empty()) throw MeshError("cannot sample an empty mesh");
    std::vector<double> cdf(mesh.faces.size());
    double total = 0.0;
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) cdf[f] = (total += mesh.face_area(f));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<Vec3> out;
    out.reserve(n);
    if (face_ids) face_ids->clear();
    for (std::size_t i = 0; i < n; ++i) {
        const double r = u01(rng) * total;
        const auto f = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin(),
                                     static_cast<std::ptrdiff_t>(cdf.size() - 1)));
        const auto& t = mesh.faces[f];
        const double s = std::sqrt(u01(rng)), w = u01(rng);
        out.push_back((1 - s) * mesh.vertices[t[0]] + s * (1 - w) * mesh.vertices[t[1]] + s * w * mesh.vertices[t[2]]);
        if (face_ids) face_ids->push_back(static_cast<std::uint32_t>(f));
    }
    return out;
}

}  // namespace salfield
