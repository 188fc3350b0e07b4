#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "salfield/binio.hpp"
#include "salfield/dataset.hpp"
#include "salfield/rng.hpp"

namespace salfield {

void SdfSampleSet::validate() const {
    if (points.size() != sdf.size())
        throw std::invalid_argument("sample set: " + std::to_string(points.size()) + " points but " +
                                    std::to_string(sdf.size()) + " sdf values");
}

SdfSampleSet sample_sdf(const TriangleMesh& mesh, const SdfSamplingConfig& cfg, std::uint64_t seed,
                        std::string shape_id) {
    if (cfg.n_total == 0) throw std::invalid_argument("sample_sdf: n_total must be > 0");
    if (!(cfg.near_fraction >= 0 && cfg.near_fraction <= 1))
        throw std::invalid_argument("sample_sdf: near_fraction must be in [0, 1]");
    if (!(cfg.sigma_near[0] > 0 && cfg.sigma_near[1] > 0 && cfg.ball_radius > 0))
        throw std::invalid_argument("sample_sdf: sigmas and ball radius must be positive");
    const MeshDistance dist(mesh);
    Rng rng(seed);
    const auto n_near = static_cast<std::size_t>(std::llround(cfg.near_fraction * double(cfg.n_total)));
    const auto surface = sample_surface(mesh, n_near, rng);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> cube(-cfg.ball_radius, cfg.ball_radius);

    SdfSampleSet out;
    out.shape_id = std::move(shape_id);
    out.points.reserve(cfg.n_total);
    out.sdf.reserve(cfg.n_total);
    auto emit = [&](const Vec3& p) {
        const std::array<float, 3> pf{float(p.x()), float(p.y()), float(p.z())};
        out.points.push_back(pf);
        out.sdf.push_back(float(dist.signed_distance(Vec3(pf[0], pf[1], pf[2]))));
    };
    for (std::size_t i = 0; i < n_near; ++i) {
        const double sigma = cfg.sigma_near[i < n_near / 2 ? 0 : 1];
        Vec3 noise;
        do {
            noise = Vec3(gauss(rng), gauss(rng), gauss(rng)) * sigma;
        } while (noise.norm() >= 3.0 * sigma);
        emit(surface[i] + noise);
    }
    while (out.sdf.size() < cfg.n_total) {
        const Vec3 p(cube(rng), cube(rng), cube(rng));
        if (p.norm() <= cfg.ball_radius) emit(p);
    }
    return out;
}

void write_samples(const fs::path& path, const SdfSampleSet& set) {
    set.validate();
    if (set.size() == 0) throw std::invalid_argument("write_samples: refusing to write an empty sample set");
    BinaryWriter w(path);
    w.magic("SDFS");
    w.u32(kSamplesVersion);
    w.u64(set.size());
    std::vector<float> rows;
    rows.reserve(4 * set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        rows.insert(rows.end(), set.points[i].begin(), set.points[i].end());
        rows.push_back(set.sdf[i]);
    }
    w.f32s(rows);
    w.close();
}

SdfSampleSet read_samples(const fs::path& path) {
    BinaryReader r(path);
    r.expect_magic("SDFS");
    if (const auto v = r.u32(); v != kSamplesVersion)
        throw FormatError(path.string() + ": unsupported sample version " + std::to_string(v));
    const auto n = r.u64();
    if (n > r.remaining() / 16) throw FormatError(path.string() + ": truncated file");
    const auto rows = r.f32s(4 * n);
    r.expect_end();
    SdfSampleSet s;
    s.points.resize(n);
    s.sdf.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.points[i] = {rows[4 * i], rows[4 * i + 1], rows[4 * i + 2]};
        s.sdf[i] = rows[4 * i + 3];
    }
    return s;
}

// ---------------------------------------------------------------------------

namespace {
constexpr const char* kManifestHeader = "shape_id,category,mesh_path,samples_path,is_interest";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

void check_cell(const std::string& v, const char* what) {
    if (v.find_first_of(",\n\r") != std::string::npos)
        throw std::invalid_argument(std::string("manifest: ") + what + " may not contain commas or newlines: " + v);
}
}  // namespace

fs::path Manifest::resolve(const std::string& p) const {
    const fs::path q(p);
    return q.is_absolute() ? q : dir / q;
}

std::vector<std::string> Manifest::categories() const {
    std::set<std::string> s;
    for (const auto& r : rows) s.insert(r.category);
    return {s.begin(), s.end()};
}

Manifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    Manifest m;
    m.dir = path.parent_path();
    std::string line;
    if (!std::getline(in, line) || line != kManifestHeader)
        throw FormatError(path.string() + ": manifest header must be '" + kManifestHeader + "'");
    std::set<std::string> ids;
    for (std::size_t ln = 2; std::getline(in, line); ++ln) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 5) throw FormatError(path.string() + ":" + std::to_string(ln) + ": expected 5 columns");
        ManifestRow r{cells[0], cells[1], cells[2], cells[3], false};
        if (cells[4] == "1" || cells[4] == "true")
            r.is_interest = true;
        else if (cells[4] != "0" && cells[4] != "false")
            throw FormatError(path.string() + ":" + std::to_string(ln) + ": is_interest must be 0/1");
        if (r.shape_id.empty()) throw FormatError(path.string() + ":" + std::to_string(ln) + ": empty shape_id");
        if (!ids.insert(r.shape_id).second)
            throw FormatError(path.string() + ":" + std::to_string(ln) + ": duplicate shape_id " + r.shape_id);
        m.rows.push_back(std::move(r));
    }
    return m;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << kManifestHeader << '\n';
    for (const auto& r : manifest.rows) {
        check_cell(r.shape_id, "shape_id");
        check_cell(r.category, "category");
        check_cell(r.mesh_path, "mesh_path");
        check_cell(r.samples_path, "samples_path");
        out << r.shape_id << ',' << r.category << ',' << r.mesh_path << ',' << r.samples_path << ','
            << (r.is_interest ? 1 : 0) << '\n';
    }
    if (!out) throw IoError("write failed on " + path.string());
}

ShapeRecord load_shape(const Manifest& manifest, const ManifestRow& row) {
    ShapeRecord s;
    s.id = row.shape_id;
    s.category = row.category;
    s.is_interest = row.is_interest;
    const auto mesh_path = manifest.resolve(row.mesh_path);
    s.mesh = load_mesh(mesh_path);
    auto labels = mesh_path;
    labels += ".labels";
    if (fs::exists(labels)) read_face_labels(labels, s);
    return s;
}

}  // namespace salfield
