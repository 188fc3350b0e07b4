#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "salfield/binio.hpp"
#include "salfield/dataset.hpp"
#include "salfield/primitives.hpp"
#include "salfield/rng.hpp"

namespace salfield {

namespace {

TriangleMesh build_primitive(const PrimitiveSpec& p) {
    switch (p.kind) {
        case PrimitiveKind::Box: return make_box(p.anchor, p.size);
        case PrimitiveKind::Cylinder: return make_cylinder(p.anchor, p.size.x(), p.size.y(), p.segments);
        case PrimitiveKind::Cone: return make_cone(p.anchor, p.size.x(), p.size.y(), p.segments);
    }
    throw std::logic_error("unknown primitive kind");
}

double draw(const Range& r, Rng& rng) {
    if (r.lo == r.hi) return r.lo;
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

void check_range(const Range& r, const std::string& what) {
    if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi))
        throw std::invalid_argument("synthetic spec: empty range for " + what);
}

std::vector<TriangleMesh> build_instance_part(const InstancePartSpec& s, Rng& rng) {
    // Draw order is fixed so one seed always yields the same instance.
    const double radius = draw(s.radius, rng);
    const double length = draw(s.length, rng);
    const double ox = draw(s.offset_x, rng);
    const double oz = draw(s.offset_z, rng);
    std::vector<TriangleMesh> out;
    if (s.layout == InstanceLayout::Legs) {
        for (double sx : {1.0, -1.0})
            for (double sz : {1.0, -1.0})
                out.push_back(make_cylinder(Vec3(sx * ox, s.attach_y - length, sz * oz), radius, length, s.segments));
    } else {
        const double center = ox + radius;
        for (double sign : {1.0, -1.0}) {
            out.push_back(make_box(Vec3(sign * center, s.attach_y, 0), Vec3(radius, length, s.thickness)));
            out.push_back(make_box(Vec3(0, s.attach_y, sign * center), Vec3(s.thickness, length, radius)));
        }
    }
    return out;
}

}  // namespace

void SyntheticCategorySpec::validate() const {
    if (name.empty()) throw std::invalid_argument("synthetic spec: empty name");
    if (common_parts.empty() && instance_parts.empty()) throw std::invalid_argument("synthetic spec: no parts");
    for (const auto& p : instance_parts) {
        check_range(p.radius, p.name + ".radius");
        check_range(p.length, p.name + ".length");
        check_range(p.offset_x, p.name + ".offset_x");
        check_range(p.offset_z, p.name + ".offset_z");
        if (!(p.radius.lo > 0) || !(p.length.lo > 0))
            throw std::invalid_argument("synthetic spec: " + p.name + " sizes must be positive");
    }
}

SyntheticCategorySpec builtin_spec(const std::string& name) {
    SyntheticCategorySpec s;
    s.name = name;
    const PrimitiveSpec top{PrimitiveKind::Box, Vec3(0, 0, 0), Vec3(0.45, 0.04, 0.35)};
    InstancePartSpec legs;
    legs.name = "legs";
    legs.layout = InstanceLayout::Legs;
    legs.attach_y = -0.06;
    legs.radius = {0.025, 0.06};
    legs.length = {0.3, 0.55};
    legs.offset_x = {0.22, 0.4};
    legs.offset_z = {0.15, 0.3};
    if (name == "table") {
        s.common_parts = {{"top", top}};
        s.instance_parts = {legs};
    } else if (name == "chair") {
        s.common_parts = {{"top", top}, {"back", {PrimitiveKind::Box, Vec3(0, 0.3, -0.31), Vec3(0.45, 0.24, 0.03)}}};
        s.instance_parts = {legs};
    } else if (name == "rocket") {
        s.common_parts = {{"body", {PrimitiveKind::Cylinder, Vec3(0, -0.6, 0), Vec3(0.15, 0.9, 0), 24}},
                          {"nose", {PrimitiveKind::Cone, Vec3(0, 0.32, 0), Vec3(0.15, 0.35, 0), 24}}};
        InstancePartSpec fins;
        fins.name = "fins";
        fins.layout = InstanceLayout::Fins;
        fins.attach_y = -0.45;
        fins.radius = {0.06, 0.14};
        fins.length = {0.08, 0.16};
        fins.offset_x = {0.17, 0.17};
        fins.offset_z = {0.0, 0.0};
        fins.thickness = 0.012;
        s.instance_parts = {fins};
    } else {
        throw std::invalid_argument("unknown synthetic spec '" + name + "' (expected table, chair or rocket)");
    }
    return s;
}

std::vector<std::string> builtin_spec_names() { return {"table", "chair", "rocket"}; }

std::vector<ShapeRecord> generate_synthetic_category(const SyntheticCategorySpec& spec, std::size_t n_instances,
                                                     std::uint64_t seed) {
    spec.validate();
    std::vector<ShapeRecord> out;
    for (std::size_t i = 0; i < n_instances; ++i) {
        Rng rng(derive_seed(seed, i));
        ShapeRecord rec;
        char id[24];
        std::snprintf(id, sizeof id, "_%04zu", i);
        rec.id = spec.name + id;
        rec.category = spec.name;
        bool ok = false;
        std::string last_error;
        for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
            rec.mesh = {};
            rec.parts.clear();
            rec.face_part.clear();
            auto add = [&](const TriangleMesh& m, std::uint16_t part) {
                append_mesh(rec.mesh, m);
                rec.face_part.insert(rec.face_part.end(), m.faces.size(), part);
            };
            for (const auto& [pname, prim] : spec.common_parts) {
                rec.parts.push_back({pname, true});
                add(build_primitive(prim), static_cast<std::uint16_t>(rec.parts.size() - 1));
            }
            for (const auto& ip : spec.instance_parts) {
                rec.parts.push_back({ip.name, false});
                for (const auto& m : build_instance_part(ip, rng))
                    add(m, static_cast<std::uint16_t>(rec.parts.size() - 1));
            }
            try {
                validate_mesh(rec.mesh);
                double rmax = 0;
                for (const auto& v : rec.mesh.vertices) rmax = std::max(rmax, v.norm());
                if (rmax > 1.0) throw MeshError("instance leaves the unit ball");
                ok = true;
            } catch (const MeshError& e) {
                last_error = e.what();
            }
        }
        if (!ok) throw MeshError(rec.id + ": degenerate parameter draw after 10 attempts: " + last_error);
        out.push_back(std::move(rec));
    }
    return out;
}

void write_face_labels(const fs::path& path, const ShapeRecord& shape) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "face_index,part,label\n";
    for (std::size_t f = 0; f < shape.face_part.size(); ++f) {
        const auto& p = shape.parts.at(shape.face_part[f]);
        out << f << ',' << p.name << ',' << (p.common ? "common" : "specific") << '\n';
    }
    if (!out) throw IoError("write failed on " + path.string());
}

void read_face_labels(const fs::path& path, ShapeRecord& shape) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "face_index,part,label")
        throw FormatError(path.string() + ": bad label header");
    shape.parts.clear();
    shape.face_part.clear();
    for (std::size_t ln = 2; std::getline(in, line); ++ln) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string idx, part, label;
        if (!std::getline(ls, idx, ',') || !std::getline(ls, part, ',') || !std::getline(ls, label))
            throw FormatError(path.string() + ":" + std::to_string(ln) + ": malformed row");
        if (std::stoul(idx) != shape.face_part.size())
            throw FormatError(path.string() + ":" + std::to_string(ln) + ": face indices must be consecutive");
        if (label != "common" && label != "specific")
            throw FormatError(path.string() + ":" + std::to_string(ln) + ": label must be common or specific");
        const bool common = label == "common";
        std::size_t k = 0;
        while (k < shape.parts.size() && shape.parts[k].name != part) ++k;
        if (k == shape.parts.size()) shape.parts.push_back({part, common});
        if (shape.parts[k].common != common)
            throw FormatError(path.string() + ": part '" + part + "' labelled both common and specific");
        shape.face_part.push_back(static_cast<std::uint16_t>(k));
    }
    if (shape.face_part.size() != shape.mesh.faces.size())
        throw FormatError(path.string() + ": " + std::to_string(shape.face_part.size()) + " labels for " +
                          std::to_string(shape.mesh.faces.size()) + " faces");
}

LabelledCloud sample_labelled_surface(const ShapeRecord& shape, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint32_t> faces;
    LabelledCloud c;
    c.points = sample_surface(shape.mesh, n, rng, &faces);
    if (shape.labelled()) {
        for (auto f : faces) {
            c.part.push_back(shape.face_part[f]);
            c.common.push_back(shape.face_common(f) ? 1 : 0);
        }
    }
    return c;
}

LabelledCloud fps_labelled_surface(const ShapeRecord& shape, std::size_t n, std::uint64_t seed, std::size_t oversample) {
    if (n == 0 || oversample == 0) throw std::invalid_argument("fps_labelled_surface: n and oversample must be > 0");
    const LabelledCloud dense = sample_labelled_surface(shape, n * oversample, seed);
    LabelledCloud c;
    for (std::size_t i : farthest_point_sampling_from(dense.points, n, 0)) {
        c.points.push_back(dense.points[i]);
        if (!dense.common.empty()) {
            c.common.push_back(dense.common[i]);
            c.part.push_back(dense.part[i]);
        }
    }
    return c;
}

}  // namespace salfield
