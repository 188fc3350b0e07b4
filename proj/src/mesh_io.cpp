#include <charconv>
#include <fstream>
#include <sstream>

#include "salfield/binio.hpp"
#include "salfield/dataset.hpp"

namespace salfield {

namespace {

std::string lower_ext(const fs::path& p) {
    auto e = p.extension().string();
    for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return e;
}

std::string strip_comment(std::string line) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    return line;
}

[[noreturn]] void parse_fail(const fs::path& p, std::size_t line, const std::string& what) {
    throw FormatError(p.string() + ":" + std::to_string(line) + ": " + what);
}

TriangleMesh read_off(std::istream& in, const fs::path& path) {
    // Tokenize the whole file ignoring comments; OFF is whitespace-separated.
    std::vector<std::pair<std::string, std::size_t>> tok;
    std::string line;
    for (std::size_t ln = 1; std::getline(in, line); ++ln) {
        std::istringstream ls(strip_comment(line));
        std::string t;
        while (ls >> t) tok.emplace_back(t, ln);
    }
    std::size_t i = 0;
    auto next = [&](const char* what) -> const std::pair<std::string, std::size_t>& {
        if (i >= tok.size()) parse_fail(path, tok.empty() ? 0 : tok.back().second, std::string("missing ") + what);
        return tok[i++];
    };
    auto integer = [&](const char* what) {
        const auto& [s, ln] = next(what);
        long long v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size() || v < 0) parse_fail(path, ln, std::string("bad ") + what);
        return static_cast<std::size_t>(v);
    };
    auto real = [&]() {
        const auto& [s, ln] = next("coordinate");
        double v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) parse_fail(path, ln, "bad coordinate '" + s + "'");
        return v;
    };
    if (next("header").first != "OFF") parse_fail(path, 1, "missing OFF header");
    const auto nv = integer("vertex count"), nf = integer("face count");
    integer("edge count");
    TriangleMesh m;
    m.vertices.reserve(nv);
    for (std::size_t v = 0; v < nv; ++v) {
        const double x = real(), y = real(), z = real();
        m.vertices.emplace_back(x, y, z);
    }
    for (std::size_t f = 0; f < nf; ++f) {
        const auto line_no = i < tok.size() ? tok[i].second : 0;
        const auto k = integer("face arity");
        if (k != 3) parse_fail(path, line_no, "non-triangulated face with " + std::to_string(k) + " vertices");
        Face face{};
        for (auto& idx : face) idx = static_cast<std::uint32_t>(integer("vertex index"));
        m.faces.push_back(face);
    }
    return m;
}

TriangleMesh read_obj(std::istream& in, const fs::path& path) {
    TriangleMesh m;
    std::string line;
    for (std::size_t ln = 1; std::getline(in, line); ++ln) {
        std::istringstream ls(strip_comment(line));
        std::string kw;
        if (!(ls >> kw)) continue;
        if (kw == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) parse_fail(path, ln, "bad vertex");
            m.vertices.emplace_back(x, y, z);
        } else if (kw == "f") {
            std::vector<std::uint32_t> idx;
            std::string t;
            while (ls >> t) {
                const auto head = t.substr(0, t.find('/'));
                long long v = 0;
                auto [p, ec] = std::from_chars(head.data(), head.data() + head.size(), v);
                if (ec != std::errc() || p != head.data() + head.size() || v == 0)
                    parse_fail(path, ln, "bad face index '" + t + "'");
                const long long resolved = v > 0 ? v - 1 : static_cast<long long>(m.vertices.size()) + v;
                if (resolved < 0) parse_fail(path, ln, "face index out of range");
                idx.push_back(static_cast<std::uint32_t>(resolved));
            }
            if (idx.size() != 3) parse_fail(path, ln, "non-triangulated face with " + std::to_string(idx.size()) + " vertices");
            m.faces.push_back({idx[0], idx[1], idx[2]});
        }
    }
    return m;
}

std::string fmt(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace

TriangleMesh load_mesh(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mesh " + path.string());
    const auto ext = lower_ext(path);
    TriangleMesh m;
    if (ext == ".off")
        m = read_off(in, path);
    else if (ext == ".obj")
        m = read_obj(in, path);
    else
        throw FormatError(path.string() + ": unsupported mesh extension '" + ext + "'");
    try {
        validate_mesh(m);
    } catch (const MeshError& e) {
        throw MeshError(path.string() + ": " + e.what());
    }
    return m;
}

void write_off(const fs::path& path, const TriangleMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
    for (const auto& v : mesh.vertices) out << fmt(v.x()) << ' ' << fmt(v.y()) << ' ' << fmt(v.z()) << '\n';
    for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    if (!out) throw IoError("write failed on " + path.string());
}

}  // namespace salfield
