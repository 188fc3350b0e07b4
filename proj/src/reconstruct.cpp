#include "salfield/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "salfield/binio.hpp"
#include "salfield/parallel.hpp"
#include "salfield/trainer.hpp"
#include "tables.hpp"

namespace salfield {

ScalarGrid::ScalarGrid(std::size_t r) : resolution(r) {
    if (r < 2) throw std::invalid_argument("grid resolution must be >= 2");
    sdf.assign(size(), 0.0f);
    saliency.assign(size(), 0.0f);
}

std::array<float, 3> ScalarGrid::point(std::size_t x, std::size_t y, std::size_t z) const noexcept {
    const double h = spacing();
    return {float(-kGridBound + h * double(x)), float(-kGridBound + h * double(y)), float(-kGridBound + h * double(z))};
}

std::array<float, 3> ScalarGrid::point(std::size_t i) const noexcept {
    const std::size_t r = resolution;
    return point(i % r, (i / r) % r, i / (r * r));
}

void ScalarGrid::validate() const {
    if (resolution < 2) throw std::invalid_argument("grid resolution must be >= 2");
    if (sdf.size() != size() || saliency.size() != size())
        throw std::invalid_argument("grid value arrays must hold R^3 samples");
    for (std::size_t i = 0; i < size(); ++i)
        if (!std::isfinite(sdf[i]) || !std::isfinite(saliency[i]))
            throw std::invalid_argument("grid contains non-finite values");
}

ScalarGrid evaluate_grid(const FieldFn& field, std::size_t resolution, std::size_t threads) {
    ScalarGrid grid(resolution);
    const std::size_t n = grid.size();
    const std::size_t batches = (n + kGridBatch - 1) / kGridBatch;
    parallel_for(
        batches,
        [&](std::size_t b) {
            const std::size_t s = b * kGridBatch, m = std::min(kGridBatch, n - s);
            std::vector<std::array<float, 3>> pts(m);
            for (std::size_t i = 0; i < m; ++i) pts[i] = grid.point(s + i);
            field(pts, std::span<float>(grid.sdf).subspan(s, m), std::span<float>(grid.saliency).subspan(s, m));
        },
        threads);
    grid.validate();
    return grid;
}

ScalarGrid evaluate_grid(const DecoderParams<float>& decoder, std::span<const float> z, std::size_t resolution,
                         std::size_t threads) {
    if (z.size() != decoder.config.latent_dim) throw std::invalid_argument("evaluate_grid: latent size mismatch");
    FieldFn fn = [&](std::span<const std::array<float, 3>> pts, std::span<float> sdf, std::span<float> sal) {
        const auto f = evaluate_field(decoder, z, pts, pts.size());
        std::copy(f.sdf.begin(), f.sdf.end(), sdf.begin());
        std::copy(f.saliency.begin(), f.saliency.end(), sal.begin());
    };
    return evaluate_grid(fn, resolution, threads);
}

PartMode parse_part_mode(const std::string& s) {
    if (s == "salient") return PartMode::Salient;
    if (s == "specific") return PartMode::Specific;
    throw std::invalid_argument("unknown part mode '" + s + "' (expected salient or specific)");
}

void normalize_grid_saliency(ScalarGrid& grid, std::size_t threads) {
    grid.validate();
    float lo = INFINITY, hi = -INFINITY;
    const auto surface = marching_cubes(grid, threads);
    for (double s : surface.saliency) {
        lo = std::min(lo, float(s));
        hi = std::max(hi, float(s));
    }
    if (!(lo <= hi)) {
        const double band = std::sqrt(3.0) * grid.spacing();
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (std::abs(grid.sdf[i]) <= band) {
                lo = std::min(lo, grid.saliency[i]);
                hi = std::max(hi, grid.saliency[i]);
            }
    }
    if (!(lo <= hi)) {
        const auto [a, b] = std::minmax_element(grid.saliency.begin(), grid.saliency.end());
        lo = *a;
        hi = *b;
    }
    for (auto& s : grid.saliency) s = hi > lo ? std::clamp((s - lo) / (hi - lo), 0.0f, 1.0f) : 0.0f;
}

SalientMesh extract_parts(ScalarGrid grid, double threshold, PartMode mode, double delta, std::size_t threads) {
    if (!(threshold >= 0 && threshold <= 1)) throw std::invalid_argument("extract_parts: threshold must be in [0, 1]");
    if (!(delta > 0)) throw std::invalid_argument("extract_parts: delta must be > 0");
    normalize_grid_saliency(grid, threads);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double s = grid.saliency[i];
        const bool keep = mode == PartMode::Salient ? s >= threshold : s <= threshold;
        if (!keep) grid.sdf[i] = float(delta);
    }
    return marching_cubes(grid, threads);
}

std::array<std::uint8_t, 3> viridis(double s) {
    const int i = int(std::lround(std::clamp(s, 0.0, 1.0) * 255.0));
    return {detail::kViridis[i][0], detail::kViridis[i][1], detail::kViridis[i][2]};
}

std::string ply_string(const SalientMesh& m) {
    if (m.saliency.size() != m.mesh.vertices.size())
        throw std::invalid_argument("export_ply: saliency count does not match vertex count");
    std::ostringstream os;
    os.precision(9);
    os << "ply\nformat ascii 1.0\n"
       << "element vertex " << m.mesh.vertices.size() << "\n"
       << "property float x\nproperty float y\nproperty float z\nproperty float quality\n"
       << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
       << "element face " << m.mesh.faces.size() << "\n"
       << "property list uchar int vertex_indices\nend_header\n";
    for (std::size_t i = 0; i < m.mesh.vertices.size(); ++i) {
        const auto& v = m.mesh.vertices[i];
        const auto c = viridis(m.saliency[i]);
        os << float(v.x()) << ' ' << float(v.y()) << ' ' << float(v.z()) << ' ' << float(m.saliency[i]) << ' '
           << int(c[0]) << ' ' << int(c[1]) << ' ' << int(c[2]) << '\n';
    }
    for (const auto& f : m.mesh.faces) os << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    return os.str();
}

void export_ply(const SalientMesh& mesh, const std::filesystem::path& path) {
    const std::string text = ply_string(mesh);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

PlyData read_ply(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    auto fail = [&](const std::string& what) { throw FormatError(path.string() + ": " + what); };
    std::string line;
    std::size_t nv = 0, nf = 0;
    bool header_ok = false;
    if (!std::getline(in, line) || line != "ply") fail("missing ply magic");
    while (std::getline(in, line)) {
        if (line == "end_header") {
            header_ok = true;
            break;
        }
        std::istringstream ls(line);
        std::string kw, what;
        ls >> kw;
        if (kw == "element") {
            std::size_t n = 0;
            if (!(ls >> what >> n)) fail("bad element line");
            if (what == "vertex") nv = n;
            else if (what == "face") nf = n;
        }
    }
    if (!header_ok) fail("missing end_header");
    PlyData d;
    for (std::size_t i = 0; i < nv; ++i) {
        std::array<double, 3> p;
        double q;
        std::array<int, 3> c;
        if (!(in >> p[0] >> p[1] >> p[2] >> q >> c[0] >> c[1] >> c[2])) fail("truncated vertex list");
        d.positions.push_back(p);
        d.quality.push_back(q);
        d.colors.push_back(c);
    }
    for (std::size_t i = 0; i < nf; ++i) {
        int k;
        Face f;
        if (!(in >> k >> f[0] >> f[1] >> f[2]) || k != 3) fail("bad face");
        for (auto v : f)
            if (v >= nv) fail("face index out of range");
        d.faces.push_back(f);
    }
    return d;
}

namespace {
constexpr std::uint32_t kGridVersion = 1;
}

void write_grid(const std::filesystem::path& path, const ScalarGrid& grid) {
    grid.validate();
    BinaryWriter w(path);
    w.magic("GRID");
    w.u32(kGridVersion);
    w.u32(std::uint32_t(grid.resolution));
    w.f32s(grid.sdf);
    w.f32s(grid.saliency);
    w.close();
}

ScalarGrid read_grid(const std::filesystem::path& path) {
    BinaryReader r(path);
    r.expect_magic("GRID");
    if (const auto v = r.u32(); v != kGridVersion)
        throw FormatError(path.string() + ": unsupported grid version " + std::to_string(v));
    const std::uint64_t res = r.u32();
    if (res < 2 || res * res * res * 8 > r.remaining())
        throw FormatError(path.string() + ": grid resolution inconsistent with file size");
    ScalarGrid g;
    g.resolution = std::size_t(res);
    g.sdf = r.f32s(g.size());
    g.saliency = r.f32s(g.size());
    r.expect_end();
    return g;
}

}  // namespace salfield
