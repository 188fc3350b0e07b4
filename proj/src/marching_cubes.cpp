#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "salfield/parallel.hpp"
#include "salfield/reconstruct.hpp"
#include "tables.hpp"

namespace salfield {

namespace {

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

struct EdgeVertex {
    Vec3 pos;
    double saliency;
};

struct Slab {
    std::vector<std::array<std::uint64_t, 3>> tris;  // global edge keys
    std::unordered_map<std::uint64_t, EdgeVertex> verts;
};

// Edge keys are (lower grid index) * 3 + axis, so neighbouring cubes share them.
Slab polygonize_slab(const ScalarGrid& g, std::size_t z) {
    Slab slab;
    const std::size_t r = g.resolution;
    const double h = g.spacing();
    for (std::size_t y = 0; y + 1 < r; ++y)
        for (std::size_t x = 0; x + 1 < r; ++x) {
            std::size_t idx[8];
            unsigned cube = 0;
            for (int c = 0; c < 8; ++c) {
                idx[c] = g.index(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2]);
                if (g.sdf[idx[c]] < 0.0f) cube |= 1u << c;
            }
            if (detail::kMcEdgeTable[cube] == 0) continue;
            std::uint64_t keys[12];
            for (int e = 0; e < 12; ++e) {
                if (!(detail::kMcEdgeTable[cube] & (1u << e))) continue;
                int a = kEdge[e][0], b = kEdge[e][1];
                if (idx[a] > idx[b]) std::swap(a, b);
                int axis = 0;
                while (kCorner[a][axis] == kCorner[b][axis]) ++axis;
                keys[e] = std::uint64_t(idx[a]) * 3 + std::uint64_t(axis);
                if (slab.verts.count(keys[e])) continue;
                const double sa = g.sdf[idx[a]], sb = g.sdf[idx[b]];
                const double t = sa / (sa - sb);
                Vec3 pa, pb;
                for (int k = 0; k < 3; ++k) {
                    const std::size_t ca[3] = {x, y, z};
                    pa[k] = -kGridBound + h * double(ca[k] + kCorner[a][k]);
                    pb[k] = -kGridBound + h * double(ca[k] + kCorner[b][k]);
                }
                const double la = g.saliency[idx[a]], lb = g.saliency[idx[b]];
                slab.verts.emplace(keys[e], EdgeVertex{pa + t * (pb - pa), la + t * (lb - la)});
            }
            const auto& row = detail::kMcTriTable[cube];
            // The table winds triangles facing the inside; reverse to face +sdf.
            for (int i = 0; row[i] != -1; i += 3)
                slab.tris.push_back({keys[row[i]], keys[row[i + 2]], keys[row[i + 1]]});
        }
    return slab;
}

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
};
struct CellHash {
    std::size_t operator()(const CellKey& k) const noexcept {
        return std::size_t(std::uint64_t(k.x) * 73856093u ^ std::uint64_t(k.y) * 19349663u ^ std::uint64_t(k.z) * 83492791u);
    }
};

// Merges vertices closer than kWeldTolerance (in every coordinate), keeping the first.
std::vector<std::uint32_t> weld(const std::vector<EdgeVertex>& verts) {
    std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> cells;
    std::vector<std::uint32_t> remap(verts.size());
    auto cell_of = [](const Vec3& p) {
        return CellKey{std::int64_t(std::floor(p.x() / kWeldTolerance)), std::int64_t(std::floor(p.y() / kWeldTolerance)),
                       std::int64_t(std::floor(p.z() / kWeldTolerance))};
    };
    for (std::uint32_t i = 0; i < verts.size(); ++i) {
        const Vec3& p = verts[i].pos;
        const CellKey c = cell_of(p);
        std::int64_t found = -1;
        for (int dx = -1; dx <= 1 && found < 0; ++dx)
            for (int dy = -1; dy <= 1 && found < 0; ++dy)
                for (int dz = -1; dz <= 1 && found < 0; ++dz) {
                    auto it = cells.find({c.x + dx, c.y + dy, c.z + dz});
                    if (it == cells.end()) continue;
                    for (std::uint32_t j : it->second)
                        if ((verts[j].pos - p).cwiseAbs().maxCoeff() <= kWeldTolerance) {
                            found = j;
                            break;
                        }
                }
        if (found >= 0) {
            remap[i] = std::uint32_t(found);
        } else {
            remap[i] = i;
            cells[c].push_back(i);
        }
    }
    return remap;
}

}  // namespace

SalientMesh marching_cubes(const ScalarGrid& grid, std::size_t threads) {
    grid.validate();
    const std::size_t r = grid.resolution;
    std::vector<Slab> slabs(r - 1);
    parallel_for(r - 1, [&](std::size_t z) { slabs[z] = polygonize_slab(grid, z); }, threads);

    // Deterministic merge: vertex ids in order of first use, slab by slab.
    std::unordered_map<std::uint64_t, std::uint32_t> id_of;
    std::vector<EdgeVertex> verts;
    std::vector<Face> faces;
    for (const Slab& s : slabs)
        for (const auto& t : s.tris) {
            Face f;
            for (int k = 0; k < 3; ++k) {
                auto [it, inserted] = id_of.try_emplace(t[k], std::uint32_t(verts.size()));
                if (inserted) verts.push_back(s.verts.at(t[k]));
                f[k] = it->second;
            }
            faces.push_back(f);
        }

    const auto remap = weld(verts);
    SalientMesh out;
    std::vector<std::int64_t> new_id(verts.size(), -1);
    for (const Face& f0 : faces) {
        const Face f{remap[f0[0]], remap[f0[1]], remap[f0[2]]};
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
        const Vec3 &a = verts[f[0]].pos, &b = verts[f[1]].pos, &c = verts[f[2]].pos;
        if (0.5 * (b - a).cross(c - a).norm() <= kMinFaceArea) continue;
        Face g;
        for (int k = 0; k < 3; ++k) {
            if (new_id[f[k]] < 0) {
                new_id[f[k]] = std::int64_t(out.mesh.vertices.size());
                out.mesh.vertices.push_back(verts[f[k]].pos);
                out.saliency.push_back(verts[f[k]].saliency);
            }
            g[k] = std::uint32_t(new_id[f[k]]);
        }
        out.mesh.faces.push_back(g);
    }
    return out;
}

}  // namespace salfield
