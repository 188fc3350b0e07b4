#pragma once

// Contrastive saliency learning: a PointNet scores saliency-blended
// (x, y, z, sdf) sets as "category of interest" or not.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "salfield/autodiff.hpp"
#include "salfield/pointnet.hpp"
#include "salfield/rng.hpp"

namespace salfield {

inline PointNetConfig csl_pointnet_config() { return PointNetConfig{}; }

/// N x 4 rows (x, y, z, sdf). The sdf column is detached from the decoder.
template <class T>
ad::Var build_q(ad::Graph<T>& g, ad::Var points, ad::Var sdf_pred) {
    const auto& pv = g.value(points);
    const auto& fv = g.value(sdf_pred);
    if (pv.rank() != 2 || pv.cols() != 3) throw ShapeError("build_q: points must be N x 3");
    if (fv.size() != pv.rows())
        throw ShapeError("build_q: " + std::to_string(fv.size()) + " sdf values for " + std::to_string(pv.rows()) +
                         " points");
    const ad::Var f = g.constant(Tensor<T>(Shape{pv.rows(), 1}, fv.storage()));
    return ad::concat_columns(g, points, f);
}

/// Per-set probability of the category of interest (sets x 1): rows of Q are
/// scaled by saliency, then PointNet with a sigmoid output.
template <class T>
ad::Var classify(ad::Graph<T>& g, const PointNetConfig& cfg, std::span<const ad::Var> params, ad::Var q,
                 ad::Var saliency, std::size_t set_size) {
    if (g.value(q).rows() % set_size != 0) throw ShapeError("classify: row count is not a multiple of the set size");
    return ad::sigmoid(g, pointnet_logits(g, cfg, params, ad::scale_rows(g, q, saliency), set_size));
}

/// Binary cross-entropy of scores against 0/1 labels, clipped at 1e-7.
template <class T>
ad::Var bce_loss(ad::Graph<T>& g, ad::Var scores, std::vector<T> labels) {
    for (T t : labels)
        if (t != T(0) && t != T(1)) throw std::invalid_argument("bce_loss: labels must be 0 or 1");
    return ad::binary_cross_entropy(g, scores, std::move(labels));
}

/// Scalar BCE for one score, used by tests and logs.
inline double bce_value(double l, int label) {
    const double p = std::clamp(l, ad::kProbClip, 1.0 - ad::kProbClip);
    return label ? -std::log(p) : -std::log(1.0 - p);
}

/// issn + gamma * cls. With gamma == 0 the issn node is returned untouched.
template <class T>
ad::Var csl_loss(ad::Graph<T>& g, ad::Var issn_term, ad::Var cls_term, double gamma) {
    if (!(gamma >= 0)) throw std::invalid_argument("csl_loss: gamma must be >= 0");
    if (gamma == 0) return issn_term;
    return ad::add(g, issn_term, ad::mul_scalar(g, cls_term, static_cast<T>(gamma)));
}

/// Draws half interest and half other shapes per batch, without replacement
/// until a class pool runs dry, then from a reshuffled pool.
class BalancedSampler {
public:
    explicit BalancedSampler(const std::vector<bool>& interest) {
        for (std::size_t i = 0; i < interest.size(); ++i) (interest[i] ? pos_ : neg_).push_back(i);
        if (pos_.empty() || neg_.empty())
            throw std::invalid_argument("balanced batch: both the interest class and the other class need shapes");
    }

    std::vector<std::size_t> next(std::size_t batch_size, Rng& rng) {
        if (batch_size == 0 || batch_size % 2 != 0)
            throw std::invalid_argument("balanced batch: batch size must be even and positive, got " +
                                        std::to_string(batch_size));
        std::vector<std::size_t> out;
        take(pos_, pos_pool_, batch_size / 2, rng, out);
        take(neg_, neg_pool_, batch_size / 2, rng, out);
        return out;
    }

private:
    static void take(const std::vector<std::size_t>& all, std::vector<std::size_t>& pool, std::size_t n, Rng& rng,
                     std::vector<std::size_t>& out) {
        for (std::size_t k = 0; k < n; ++k) {
            if (pool.empty()) {
                pool = all;
                std::shuffle(pool.begin(), pool.end(), rng);
            }
            out.push_back(pool.back());
            pool.pop_back();
        }
    }

    std::vector<std::size_t> pos_, neg_, pos_pool_, neg_pool_;
};

/// One balanced batch from fresh pools.
inline std::vector<std::size_t> balanced_batch(const std::vector<bool>& interest, std::size_t batch_size, Rng& rng) {
    BalancedSampler s(interest);
    return s.next(batch_size, rng);
}

}  // namespace salfield
