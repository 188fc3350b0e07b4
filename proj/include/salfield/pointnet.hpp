#pragma once

// Vanilla PointNet: a shared per-point MLP, symmetric max pooling over each
// point set, and a small fully-connected head. Used both as the binary
// contrastive classifier over (x, y, z, sdf) sets and as the multi-class
// point cloud classifier.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "salfield/autodiff.hpp"
#include "salfield/rng.hpp"
#include "salfield/tensor.hpp"

namespace salfield {

struct PointNetConfig {
    std::size_t input_dim = 4;
    std::vector<std::size_t> point_widths{64, 128, 256};
    std::vector<std::size_t> head_widths{64};
    std::size_t outputs = 1;

    std::size_t linear_count() const noexcept { return point_widths.size() + head_widths.size() + 1; }
};

template <class T>
struct PointNetParams {
    PointNetConfig config;
    std::vector<Tensor<T>> tensors;  // [W0, b0, ...] shared layers, then head layers

    static PointNetParams init(const PointNetConfig& cfg, std::uint64_t seed) {
        if (cfg.point_widths.empty()) throw std::invalid_argument("pointnet: needs at least one shared layer");
        if (cfg.outputs < 1 || cfg.input_dim < 1) throw std::invalid_argument("pointnet: bad input/output size");
        PointNetParams p;
        p.config = cfg;
        Rng rng(seed);
        std::size_t in = cfg.input_dim;
        auto add = [&](std::size_t out) {
            const double bound = 1.0 / std::sqrt(double(in));
            std::uniform_real_distribution<double> u(-bound, bound);
            Tensor<T> w = Tensor<T>::matrix(in, out);
            for (auto& v : w.values()) v = static_cast<T>(u(rng));
            Tensor<T> b(Shape{out});
            for (auto& v : b.values()) v = static_cast<T>(u(rng));
            p.tensors.push_back(std::move(w));
            p.tensors.push_back(std::move(b));
            in = out;
        };
        for (auto w : cfg.point_widths) add(w);
        for (auto w : cfg.head_widths) add(w);
        add(cfg.outputs);
        return p;
    }

    template <class U>
    PointNetParams<U> cast() const {
        PointNetParams<U> out;
        out.config = config;
        for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
        return out;
    }
};

/// Gradient reweighting of one shared layer's per-point features.
template <class T>
struct FeatureGradWeighting {
    std::size_t layer = 0;   // index into point_widths
    std::vector<T> weights;  // one per input row
};

/// Logits (sets x outputs) for consecutive point sets of `set_size` rows each.
template <class T>
ad::Var pointnet_logits(ad::Graph<T>& g, const PointNetConfig& cfg, std::span<const ad::Var> params, ad::Var x,
                        std::size_t set_size, const FeatureGradWeighting<T>* weighting = nullptr) {
    if (params.size() != 2 * cfg.linear_count()) throw ShapeError("pointnet: parameter count does not match config");
    if (g.value(x).cols() != cfg.input_dim)
        throw ShapeError("pointnet: input has " + std::to_string(g.value(x).cols()) + " columns, expected " +
                         std::to_string(cfg.input_dim));
    if (weighting && weighting->layer >= cfg.point_widths.size())
        throw std::out_of_range("pointnet: weighted layer index out of range");
    std::size_t k = 0;
    ad::Var h = x;
    for (std::size_t l = 0; l < cfg.point_widths.size(); ++l, ++k) {
        h = ad::relu(g, ad::affine(g, h, params[2 * k], params[2 * k + 1]));
        if (weighting && weighting->layer == l) h = ad::scale_grad_rows(g, h, weighting->weights);
    }
    h = ad::max_over_segments(g, h, set_size);
    for (std::size_t l = 0; l < cfg.head_widths.size(); ++l, ++k)
        h = ad::relu(g, ad::affine(g, h, params[2 * k], params[2 * k + 1]));
    return ad::affine(g, h, params[2 * k], params[2 * k + 1]);
}

}  // namespace salfield
