#pragma once

// Mesh files, synthetic part-labelled categories, SDF sample sets and the
// dataset manifest.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "salfield/geometry.hpp"

namespace salfield {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Mesh files

/// OFF or OBJ (by extension), triangulated, validated with validate_mesh.
TriangleMesh load_mesh(const fs::path& path);
/// OFF with shortest round-trip decimal coordinates.
void write_off(const fs::path& path, const TriangleMesh& mesh);

// ---------------------------------------------------------------------------
// Synthetic categories

struct PartInfo {
    std::string name;
    bool common = false;
};

struct ShapeRecord {
    std::string id;
    std::string category;
    TriangleMesh mesh;
    bool is_interest = false;
    std::vector<PartInfo> parts;           // empty for meshes without labels
    std::vector<std::uint16_t> face_part;  // one entry per face when labelled

    bool labelled() const noexcept { return !parts.empty(); }
    bool face_common(std::size_t f) const { return parts.at(face_part.at(f)).common; }
};

enum class PrimitiveKind { Box, Cylinder, Cone };

struct Range {
    double lo = 0.0, hi = 0.0;
};

/// A fixed solid. Box: `anchor` is the center and `size` the half extents.
/// Cylinder and cone: `anchor` is the base center, size.x the radius, size.y the height.
struct PrimitiveSpec {
    PrimitiveKind kind = PrimitiveKind::Box;
    Vec3 anchor = Vec3::Zero();
    Vec3 size = Vec3::Ones();
    std::size_t segments = 16;
};

/// How one drawn instance part is replicated.
///   Legs: vertical cylinders hanging from y = attach_y at (+-x, +-z).
///   Fins: thin boxes on the +-x and +-z axes, centered at height attach_y.
enum class InstanceLayout { Legs, Fins };

struct InstancePartSpec {
    std::string name;
    InstanceLayout layout = InstanceLayout::Legs;
    double attach_y = 0.0;
    Range radius;    // leg radius, or fin radial half-extent
    Range length;    // leg length, or fin half height
    Range offset_x;  // leg x, or fin radial center distance
    Range offset_z;  // leg z; unused for fins
    double thickness = 0.01;  // fin half thickness
    std::size_t segments = 12;
};

struct SyntheticCategorySpec {
    std::string name;
    std::vector<std::pair<std::string, PrimitiveSpec>> common_parts;
    std::vector<InstancePartSpec> instance_parts;

    void validate() const;
};

/// Built-in specs: "table", "chair" and "rocket".
SyntheticCategorySpec builtin_spec(const std::string& name);
std::vector<std::string> builtin_spec_names();

/// Instances are generated in fixed canonical coordinates inside the unit ball,
/// so common parts are bitwise identical across instances and seeds.
std::vector<ShapeRecord> generate_synthetic_category(const SyntheticCategorySpec& spec, std::size_t n_instances,
                                                     std::uint64_t seed);

/// Per-face labels next to a mesh: CSV face_index,part,label.
void write_face_labels(const fs::path& path, const ShapeRecord& shape);
void read_face_labels(const fs::path& path, ShapeRecord& shape);

/// Area-uniform surface samples with the common flag of the source face.
struct LabelledCloud {
    std::vector<Vec3> points;
    std::vector<std::uint8_t> common;
    std::vector<std::uint16_t> part;
};
LabelledCloud sample_labelled_surface(const ShapeRecord& shape, std::size_t n, std::uint64_t seed);
/// n evenly spread points: FPS over n * oversample area-uniform samples.
LabelledCloud fps_labelled_surface(const ShapeRecord& shape, std::size_t n, std::uint64_t seed,
                                   std::size_t oversample = 4);

// ---------------------------------------------------------------------------
// SDF samples

struct SdfSampleSet {
    std::string shape_id;
    std::vector<std::array<float, 3>> points;
    std::vector<float> sdf;

    std::size_t size() const noexcept { return sdf.size(); }
    void validate() const;
    bool operator==(const SdfSampleSet&) const = default;
};

struct SdfSamplingConfig {
    std::size_t n_total = 25000;
    double near_fraction = 0.95;
    std::array<double, 2> sigma_near = {0.025, 0.0025};
    double ball_radius = 1.1;
};

/// Near-surface points (noise truncated at 3 sigma) then uniform points in the ball.
/// Signed distances are evaluated at the float-rounded points that get stored.
SdfSampleSet sample_sdf(const TriangleMesh& mesh, const SdfSamplingConfig& cfg, std::uint64_t seed,
                        std::string shape_id = {});

inline constexpr std::uint32_t kSamplesVersion = 1;
void write_samples(const fs::path& path, const SdfSampleSet& set);
/// The shape id is not stored in the file; the caller assigns it.
SdfSampleSet read_samples(const fs::path& path);

// ---------------------------------------------------------------------------
// Manifest

struct ManifestRow {
    std::string shape_id;
    std::string category;
    std::string mesh_path;
    std::string samples_path;
    bool is_interest = false;
};

struct Manifest {
    fs::path dir;  // relative paths resolve against this
    std::vector<ManifestRow> rows;

    fs::path resolve(const std::string& p) const;
    std::vector<std::string> categories() const;  // sorted unique
};

Manifest read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const Manifest& manifest);

/// Loads the mesh (and labels sidecar if present) for one row.
ShapeRecord load_shape(const Manifest& manifest, const ManifestRow& row);

}  // namespace salfield
