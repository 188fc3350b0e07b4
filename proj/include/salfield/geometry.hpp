#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "salfield/rng.hpp"

namespace salfield {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

/// Rejected mesh input (bad indices, degenerate faces, open boundaries).
class MeshError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kMinFaceArea = 1e-12;

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;

    bool empty() const noexcept { return faces.empty(); }
    double face_area(std::size_t f) const;
    Vec3 face_normal(std::size_t f) const;  // unit
    double area() const;
};

/// Index bounds, per-face area > 1e-12, and closed 2-manifold orientation:
/// every directed edge appears once and its reverse appears exactly once.
void validate_mesh(const TriangleMesh& mesh);

/// Centers the vertex bounding box at the origin and scales the largest vertex norm to 1.
TriangleMesh normalize_to_unit_sphere(TriangleMesh mesh);

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<float> saliency;  // empty, or one score per point

    void validate() const {
        if (points.empty()) throw std::invalid_argument("point cloud is empty");
        if (!saliency.empty() && saliency.size() != points.size())
            throw std::invalid_argument("saliency length does not match point count");
    }
};

/// Balanced kd-tree over a fixed point set. Exact nearest-neighbour queries,
/// ties broken toward the lowest point index.
class KdTree {
public:
    struct Hit {
        std::size_t index = std::numeric_limits<std::size_t>::max();
        double distance = std::numeric_limits<double>::infinity();
    };
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    KdTree() = default;
    explicit KdTree(std::vector<Vec3> points);

    std::size_t size() const noexcept { return points_.size(); }
    const std::vector<Vec3>& points() const noexcept { return points_; }

    /// Nearest point, optionally skipping one index (the query's own point).
    Hit nearest(const Vec3& q, std::size_t exclude = npos) const;

    /// k nearest points sorted by (distance, index).
    std::vector<Hit> knn(const Vec3& q, std::size_t k) const;

private:
    struct Node {
        std::uint32_t begin = 0, end = 0;  // range into order_
        std::int32_t left = -1, right = -1;
        std::uint8_t axis = 0;
        double split = 0.0;
    };
    std::int32_t build(std::uint32_t begin, std::uint32_t end);

    std::vector<Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

/// Exact unsigned distance to a closed oriented mesh with the sign taken from
/// angle-weighted pseudonormals of the closest feature (face, edge or vertex).
class MeshDistance {
public:
    explicit MeshDistance(const TriangleMesh& mesh);

    double signed_distance(const Vec3& p) const;
    double unsigned_distance(const Vec3& p) const;

    /// Closest surface point and the face it lies on.
    struct Closest {
        Vec3 point;
        std::size_t face = 0;
        double distance = 0.0;
    };
    Closest closest(const Vec3& p) const;

    const TriangleMesh& mesh() const noexcept { return mesh_; }

private:
    enum class Feature : std::uint8_t { Face, Edge0, Edge1, Edge2, Vertex0, Vertex1, Vertex2 };
    struct Query {
        double d2 = std::numeric_limits<double>::infinity();
        std::size_t face = 0;
        Feature feature = Feature::Face;
        Vec3 point;
    };
    struct BvhNode {
        Eigen::AlignedBox3d box;
        std::int32_t left = -1, right = -1;
        std::uint32_t begin = 0, end = 0;
    };
    std::int32_t build(std::uint32_t begin, std::uint32_t end);
    void search(const Vec3& p, Query& best) const;
    Vec3 pseudonormal(std::size_t face, Feature feature) const;

    TriangleMesh mesh_;
    std::vector<Vec3> face_normals_;
    std::vector<Vec3> vertex_normals_;
    std::vector<std::array<Vec3, 3>> edge_normals_;  // per face, edge k = (v_k, v_{k+1})
    std::vector<std::uint32_t> tri_order_;
    std::vector<BvhNode> nodes_;
};

inline double signed_distance(const MeshDistance& index, const Vec3& p) { return index.signed_distance(p); }

/// Greedy max-min subsampling; the first index is drawn from `seed`.
std::vector<std::size_t> farthest_point_sampling(std::span<const Vec3> points, std::size_t k, std::uint64_t seed);

/// Greedy max-min subsampling from a given first index; ties go to the lowest index.
std::vector<std::size_t> farthest_point_sampling_from(std::span<const Vec3> points, std::size_t k, std::size_t first);

/// Plane n . x = d with unit normal.
struct SymmetryPlane {
    Vec3 normal = Vec3::UnitX();
    double offset = 0.0;

    static SymmetryPlane through(const Vec3& normal, const Vec3& point);
    void validate() const;
};

Vec3 mirror(const Vec3& p, const SymmetryPlane& plane);
std::vector<Vec3> mirror(std::span<const Vec3> points, const SymmetryPlane& plane);

/// Symmetric Hausdorff distance between two nonempty point sets.
double hausdorff(std::span<const Vec3> a, std::span<const Vec3> b);

/// Area-uniform surface samples; `face_ids` receives the source face of each sample.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t n, Rng& rng,
                                 std::vector<std::uint32_t>* face_ids = nullptr);

}  // namespace salfield
