#pragma once

// Saliency metrics (smoothness ratio, symmetry distance), symmetry plane
// search, baseline saliency maps and salient-point utilities.

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "salfield/autodiff.hpp"
#include "salfield/decoder.hpp"
#include "salfield/geometry.hpp"
#include "salfield/pointnet.hpp"

namespace salfield {

/// (s - min) / (max - min), or all zeros for a constant map.
std::vector<double> normalize_saliency(std::span<const double> raw);

struct SaliencyMap {
    std::vector<double> raw;
    std::vector<double> normalized;

    static SaliencyMap from_raw(std::vector<double> raw);
    std::size_t size() const noexcept { return raw.size(); }
};

/// Mean |s_i - s_nn(i)| with the query point excluded from its own search.
double ssr(std::span<const Vec3> points, std::span<const double> saliency);

inline constexpr double kSymmetryTolerance = 0.1;

class AsymmetricInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Largest distance from a mirrored point to its nearest original point.
double mirror_distance(std::span<const Vec3> points, const SymmetryPlane& plane);

/// Mean |s_nn(p'_i) - s_i| over mirrored points p'_i matched to their nearest
/// original point. Throws AsymmetricInput when the cloud is not symmetric
/// about the plane within `tolerance`.
double symmetry_distance(std::span<const Vec3> points, std::span<const double> saliency, const SymmetryPlane& plane,
                         double tolerance = kSymmetryTolerance);

struct SymmetryReport {
    SymmetryPlane plane;
    int axis = 0;                              // 0, 1, 2 for x, y, z
    std::array<double, 3> candidate_distance{};  // max mirror NN distance per axis
    double max_distance = 0;
    bool is_symmetric = false;
    std::optional<double> d_sym;
};

/// Best of the three axis-aligned planes through the centroid.
SymmetryReport find_symmetry_plane(std::span<const Vec3> points, double tolerance = kSymmetryTolerance);

/// find_symmetry_plane plus d_sym for symmetric clouds.
SymmetryReport symmetry_report(std::span<const Vec3> points, std::span<const double> saliency,
                               double tolerance = kSymmetryTolerance);

inline constexpr std::size_t kPcaNeighbours = 16;

/// Surface variation lambda_min / trace of the k-neighbourhood covariance
/// (the neighbourhood includes the point itself).
SaliencyMap pca_saliency(std::span<const Vec3> points, std::size_t k = kPcaNeighbours);

/// Decoder saliency head evaluated at the points.
SaliencyMap issn_saliency(const DecoderParams<float>& decoder, std::span<const float> z,
                          std::span<const Vec3> points);

/// Input-gradient norm of the classifier's cross-entropy per point.
/// `label` < 0 uses the classifier's own prediction.
template <class T>
std::vector<double> gradient_norms(const PointNetParams<T>& net, std::span<const Vec3> points, int label = -1) {
    if (points.empty()) throw std::invalid_argument("gradient_saliency: empty point set");
    if (net.config.input_dim != 3) throw std::invalid_argument("gradient_saliency: classifier must take xyz input");
    if (net.tensors.empty()) throw std::invalid_argument("gradient_saliency: untrained classifier");
    const std::size_t n = points.size();
    ad::Graph<T> g;
    Tensor<T> x = Tensor<T>::matrix(n, 3);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) x[i * 3 + c] = static_cast<T>(points[i][c]);
    const ad::Var xv = g.variable(std::move(x));
    const auto params = bind_params(g, net.tensors, false);
    const ad::Var logits = pointnet_logits(g, net.config, std::span<const ad::Var>(params), xv, n);
    if (label < 0) {
        const auto& lv = g.value(logits);
        label = 0;
        for (std::size_t j = 1; j < lv.cols(); ++j)
            if (lv[j] > lv[std::size_t(label)]) label = int(j);
    }
    if (std::size_t(label) >= net.config.outputs) throw std::out_of_range("gradient_saliency: label out of range");
    g.backward(ad::softmax_cross_entropy(g, logits, std::vector<int>{label}));
    const auto& gr = g.grad(xv);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (int c = 0; c < 3; ++c) s += double(gr[i * 3 + c]) * double(gr[i * 3 + c]);
        out[i] = std::sqrt(s);
    }
    return out;
}

SaliencyMap gradient_saliency(const PointNetParams<float>& classifier, std::span<const Vec3> points, int label = -1);

/// Indices of the k highest scores, ties to the lower index, returned in
/// ascending index order.
std::vector<std::size_t> topk_indices(std::span<const double> saliency, std::size_t k);
PointCloud topk_salient(std::span<const Vec3> points, std::span<const double> saliency, std::size_t k);

/// Scales row i of a per-point gradient by s_i.
template <class T>
Tensor<T> saliency_weighted_grad(const Tensor<T>& feature_grad, std::type_identity_t<std::span<const T>> saliency) {
    if (feature_grad.rank() != 2 || feature_grad.rows() != saliency.size())
        throw std::invalid_argument("saliency_weighted_grad: " + std::to_string(saliency.size()) +
                                    " weights for gradient " + shape_str(feature_grad.shape()));
    Tensor<T> out = feature_grad;
    const std::size_t c = out.cols();
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= saliency[i];
    return out;
}

struct MetricsRow {
    std::string shape_id;
    std::string method;
    double ssr = 0;
    bool is_symmetric = false;
    std::optional<double> d_sym;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows, bool header = true);
void write_metrics(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

/// Rows shape_id,point_index,x,y,z,raw,normalized.
std::string saliency_map_csv(const std::string& shape_id, std::span<const Vec3> points, const SaliencyMap& map,
                             bool header = true);

}  // namespace salfield
