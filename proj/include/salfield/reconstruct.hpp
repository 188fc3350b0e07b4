#pragma once

// Dense field evaluation on a regular grid, marching cubes carrying saliency
// along with the surface, thresholded part extraction and PLY export.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "salfield/decoder.hpp"
#include "salfield/geometry.hpp"

namespace salfield {

inline constexpr double kGridBound = 1.1;

/// R^3 samples over [-1.1, 1.1]^3, index = x + R * (y + R * z).
struct ScalarGrid {
    std::size_t resolution = 0;
    std::vector<float> sdf;
    std::vector<float> saliency;

    ScalarGrid() = default;
    explicit ScalarGrid(std::size_t r);

    std::size_t size() const noexcept { return resolution * resolution * resolution; }
    double spacing() const noexcept { return 2.0 * kGridBound / double(resolution - 1); }
    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const noexcept {
        return x + resolution * (y + resolution * z);
    }
    std::array<float, 3> point(std::size_t x, std::size_t y, std::size_t z) const noexcept;
    std::array<float, 3> point(std::size_t i) const noexcept;
    void validate() const;
};

struct SalientMesh {
    TriangleMesh mesh;
    std::vector<double> saliency;  // per vertex

    bool empty() const noexcept { return mesh.faces.empty(); }
};

/// Field callback: fill sdf and saliency for a batch of points.
using FieldFn = std::function<void(std::span<const std::array<float, 3>> points, std::span<float> sdf,
                                   std::span<float> saliency)>;

inline constexpr std::size_t kGridBatch = 4096;

/// Evaluates `field` at every grid point in fixed batches of kGridBatch;
/// batches run in parallel (threads = 0 means thread_count()).
ScalarGrid evaluate_grid(const FieldFn& field, std::size_t resolution, std::size_t threads = 0);
ScalarGrid evaluate_grid(const DecoderParams<float>& decoder, std::span<const float> z, std::size_t resolution,
                         std::size_t threads = 0);

inline constexpr double kWeldTolerance = 1e-7;

/// Zero iso-surface, triangles wound so normals point toward positive sdf.
/// Vertex saliency is interpolated at the same edge parameter as position.
SalientMesh marching_cubes(const ScalarGrid& grid, std::size_t threads = 0);

enum class PartMode { Salient, Specific };
PartMode parse_part_mode(const std::string& s);

/// Min-max normalizes the grid's saliency by the range it takes on the
/// reconstructed surface; everything is then clipped to [0, 1]. Without a
/// surface the range comes from samples with |sdf| <= sqrt(3) * spacing, and
/// failing that from all samples.
void normalize_grid_saliency(ScalarGrid& grid, std::size_t threads = 0);

/// Normalizes saliency, overwrites the sdf of samples failing the mode's
/// predicate with +delta and polygonizes the result.
SalientMesh extract_parts(ScalarGrid grid, double threshold, PartMode mode, double delta = 0.1,
                          std::size_t threads = 0);

/// Colormap entry for a saliency in [0, 1]: round(s * 255).
std::array<std::uint8_t, 3> viridis(double s);

void export_ply(const SalientMesh& mesh, const std::filesystem::path& path);
std::string ply_string(const SalientMesh& mesh);

struct PlyData {
    std::vector<std::array<double, 3>> positions;
    std::vector<double> quality;
    std::vector<std::array<int, 3>> colors;
    std::vector<Face> faces;
};
/// Reads the ASCII layout written by export_ply.
PlyData read_ply(const std::filesystem::path& path);

void write_grid(const std::filesystem::path& path, const ScalarGrid& grid);
ScalarGrid read_grid(const std::filesystem::path& path);

}  // namespace salfield
