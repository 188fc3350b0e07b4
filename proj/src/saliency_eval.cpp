#include "salfield/saliency_eval.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "salfield/binio.hpp"
#include "salfield/config.hpp"
#include "salfield/trainer.hpp"

namespace salfield {

std::vector<double> normalize_saliency(std::span<const double> raw) {
    std::vector<double> out(raw.size(), 0.0);
    if (raw.empty()) return out;
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double a = *lo, range = *hi - *lo;
    if (!(range > 0)) return out;
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = std::clamp((raw[i] - a) / range, 0.0, 1.0);
    return out;
}

SaliencyMap SaliencyMap::from_raw(std::vector<double> raw) {
    SaliencyMap m;
    m.normalized = normalize_saliency(raw);
    m.raw = std::move(raw);
    return m;
}

namespace {

void check_lengths(std::span<const Vec3> points, std::span<const double> saliency, const char* who) {
    if (points.size() != saliency.size())
        throw std::invalid_argument(std::string(who) + ": " + std::to_string(points.size()) + " points but " +
                                    std::to_string(saliency.size()) + " saliency values");
}

Vec3 centroid(std::span<const Vec3> points) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : points) c += p;
    return c / double(points.size());
}

}  // namespace

double ssr(std::span<const Vec3> points, std::span<const double> saliency) {
    check_lengths(points, saliency, "ssr");
    if (points.size() < 2) throw std::invalid_argument("ssr: needs at least two points");
    const KdTree tree(std::vector<Vec3>(points.begin(), points.end()));
    double s = 0;
    for (std::size_t i = 0; i < points.size(); ++i) s += std::abs(saliency[i] - saliency[tree.nearest(points[i], i).index]);
    return s / double(points.size());
}

double mirror_distance(std::span<const Vec3> points, const SymmetryPlane& plane) {
    if (points.empty()) throw std::invalid_argument("mirror_distance: empty point set");
    const KdTree tree(std::vector<Vec3>(points.begin(), points.end()));
    double worst = 0;
    for (const auto& p : points) worst = std::max(worst, tree.nearest(mirror(p, plane)).distance);
    return worst;
}

double symmetry_distance(std::span<const Vec3> points, std::span<const double> saliency, const SymmetryPlane& plane,
                         double tolerance) {
    check_lengths(points, saliency, "symmetry_distance");
    if (points.empty()) throw std::invalid_argument("symmetry_distance: empty point set");
    plane.validate();
    const KdTree tree(std::vector<Vec3>(points.begin(), points.end()));
    double worst = 0, s = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto hit = tree.nearest(mirror(points[i], plane));
        worst = std::max(worst, hit.distance);
        s += std::abs(saliency[hit.index] - saliency[i]);
    }
    if (!(worst < tolerance))
        throw AsymmetricInput("symmetry_distance: cloud is not symmetric about the plane (max mirror distance " +
                              format_double(worst) + " >= tolerance " + format_double(tolerance) + ")");
    return s / double(points.size());
}

SymmetryReport find_symmetry_plane(std::span<const Vec3> points, double tolerance) {
    if (points.empty()) throw std::invalid_argument("find_symmetry_plane: empty point set");
    const Vec3 c = centroid(points);
    SymmetryReport r;
    r.max_distance = INFINITY;
    for (int a = 0; a < 3; ++a) {
        const auto plane = SymmetryPlane::through(Vec3::Unit(a), c);
        r.candidate_distance[a] = mirror_distance(points, plane);
        if (r.candidate_distance[a] < r.max_distance) {
            r.max_distance = r.candidate_distance[a];
            r.plane = plane;
            r.axis = a;
        }
    }
    r.is_symmetric = r.max_distance < tolerance;
    return r;
}

SymmetryReport symmetry_report(std::span<const Vec3> points, std::span<const double> saliency, double tolerance) {
    check_lengths(points, saliency, "symmetry_report");
    auto r = find_symmetry_plane(points, tolerance);
    if (r.is_symmetric) r.d_sym = symmetry_distance(points, saliency, r.plane, tolerance);
    return r;
}

SaliencyMap pca_saliency(std::span<const Vec3> points, std::size_t k) {
    if (k < 4) throw std::invalid_argument("pca_saliency: k must be >= 4");
    if (points.size() <= k) throw std::invalid_argument("pca_saliency: needs more than k points");
    const KdTree tree(std::vector<Vec3>(points.begin(), points.end()));
    std::vector<double> raw(points.size(), 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto nn = tree.knn(points[i], k);
        Vec3 mean = Vec3::Zero();
        for (const auto& h : nn) mean += points[h.index];
        mean /= double(nn.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (const auto& h : nn) {
            const Vec3 d = points[h.index] - mean;
            cov += d * d.transpose();
        }
        cov /= double(nn.size());
        const double trace = cov.trace();
        if (!(trace > 0)) continue;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov, Eigen::EigenvaluesOnly);
        raw[i] = std::max(0.0, es.eigenvalues()[0]) / trace;
    }
    return SaliencyMap::from_raw(std::move(raw));
}

SaliencyMap issn_saliency(const DecoderParams<float>& decoder, std::span<const float> z, std::span<const Vec3> points) {
    std::vector<std::array<float, 3>> p(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) p[i] = {float(points[i].x()), float(points[i].y()), float(points[i].z())};
    const auto f = evaluate_field(decoder, z, p);
    return SaliencyMap::from_raw(std::vector<double>(f.saliency.begin(), f.saliency.end()));
}

SaliencyMap gradient_saliency(const PointNetParams<float>& classifier, std::span<const Vec3> points, int label) {
    return SaliencyMap::from_raw(gradient_norms(classifier, points, label));
}

std::vector<std::size_t> topk_indices(std::span<const double> saliency, std::size_t k) {
    if (k < 1 || k > saliency.size())
        throw std::out_of_range("topk: k=" + std::to_string(k) + " outside [1, " + std::to_string(saliency.size()) + "]");
    std::vector<std::size_t> idx(saliency.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + std::ptrdiff_t(k), idx.end(), [&](std::size_t a, std::size_t b) {
        return saliency[a] > saliency[b] || (saliency[a] == saliency[b] && a < b);
    });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

PointCloud topk_salient(std::span<const Vec3> points, std::span<const double> saliency, std::size_t k) {
    check_lengths(points, saliency, "topk_salient");
    PointCloud out;
    for (std::size_t i : topk_indices(saliency, k)) {
        out.points.push_back(points[i]);
        out.saliency.push_back(float(saliency[i]));
    }
    return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows, bool header) {
    std::string s;
    if (header) s += "shape_id,method,ssr,is_symmetric,d_sym\n";
    for (const auto& r : rows)
        s += r.shape_id + ',' + r.method + ',' + format_double(r.ssr) + ',' + (r.is_symmetric ? "1" : "0") + ',' +
             (r.d_sym ? format_double(*r.d_sym) : std::string()) + '\n';
    return s;
}

void write_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << metrics_csv(rows);
    if (!out) throw IoError("write failed on " + path.string());
}

std::string saliency_map_csv(const std::string& shape_id, std::span<const Vec3> points, const SaliencyMap& map,
                             bool header) {
    if (points.size() != map.size()) throw std::invalid_argument("saliency_map_csv: length mismatch");
    std::string s;
    if (header) s += "shape_id,point_index,x,y,z,raw,normalized\n";
    for (std::size_t i = 0; i < points.size(); ++i)
        s += shape_id + ',' + std::to_string(i) + ',' + format_double(points[i].x()) + ',' +
             format_double(points[i].y()) + ',' + format_double(points[i].z()) + ',' + format_double(map.raw[i]) +
             ',' + format_double(map.normalized[i]) + '\n';
    return s;
}

}  // namespace salfield
