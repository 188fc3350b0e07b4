#pragma once

// Auto-decoder network mapping (latent code, query point) to a signed
// distance and a saliency score, and the saliency-weighted SDF loss that
// trains both heads without saliency supervision.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "salfield/autodiff.hpp"
#include "salfield/rng.hpp"
#include "salfield/tensor.hpp"

namespace salfield {

struct DecoderConfig {
    std::size_t latent_dim = 64;
    std::size_t hidden = 256;
    std::size_t layers = 8;      // hidden fully-connected layers before the two-output head
    std::size_t skip_layer = 4;  // layer that re-reads (z, p) alongside the hidden features
    double delta = 0.1;          // SDF clamp
    double lambda = 1e-3;        // saliency regularization weight
    double beta = 0.1;           // latent L2 weight

    void validate() const {
        if (latent_dim < 1) throw std::invalid_argument("decoder: latent_dim must be >= 1");
        if (hidden < 1 || layers < 1) throw std::invalid_argument("decoder: hidden width and layer count must be >= 1");
        if (skip_layer >= layers && skip_layer != 0)
            throw std::invalid_argument("decoder: skip_layer must index a hidden layer");
        if (!(delta > 0)) throw std::invalid_argument("decoder: delta must be > 0");
        if (!(lambda >= 0)) throw std::invalid_argument("decoder: lambda must be >= 0");
        if (!(beta >= 0)) throw std::invalid_argument("decoder: beta must be >= 0");
    }

    std::size_t input_dim() const noexcept { return latent_dim + 3; }

    /// Input width of linear layer `l` (l == layers is the output head).
    std::size_t layer_input(std::size_t l) const noexcept {
        if (l == 0) return input_dim();
        if (skip_layer != 0 && l == skip_layer) return hidden + input_dim();
        return hidden;
    }
    std::size_t layer_output(std::size_t l) const noexcept { return l == layers ? 2 : hidden; }
};

/// Weights and biases of the decoder, stored as [W0, b0, W1, b1, ...].
template <class T>
struct DecoderParams {
    DecoderConfig config;
    std::vector<Tensor<T>> tensors;

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    static DecoderParams init(const DecoderConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        DecoderParams p;
        p.config = cfg;
        Rng rng(seed);
        for (std::size_t l = 0; l <= cfg.layers; ++l) {
            const std::size_t in = cfg.layer_input(l), out = cfg.layer_output(l);
            const double bound = 1.0 / std::sqrt(double(in));
            std::uniform_real_distribution<double> u(-bound, bound);
            Tensor<T> w = Tensor<T>::matrix(in, out);
            for (auto& v : w.values()) v = static_cast<T>(u(rng));
            Tensor<T> b(Shape{out});
            for (auto& v : b.values()) v = static_cast<T>(u(rng));
            p.tensors.push_back(std::move(w));
            p.tensors.push_back(std::move(b));
        }
        return p;
    }

    template <class U>
    DecoderParams<U> cast() const {
        DecoderParams<U> out;
        out.config = config;
        for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
        return out;
    }
};

/// Per-point network outputs: sdf in (-1, 1) and saliency in (0, 1).
template <class T>
struct FieldPrediction {
    std::vector<T> sdf;
    std::vector<T> saliency;
};

struct FieldVars {
    ad::Var sdf;       // N x 1
    ad::Var saliency;  // N x 1
};

/// Places each tensor in the graph, trainable or frozen.
template <class T>
std::vector<ad::Var> bind_params(ad::Graph<T>& g, const std::vector<Tensor<T>>& tensors, bool trainable) {
    std::vector<ad::Var> vars;
    vars.reserve(tensors.size());
    for (const auto& t : tensors) vars.push_back(trainable ? g.variable(t) : g.constant(t));
    return vars;
}

/// Runs the MLP on rows of [latent | point]. `latent_rows` is N x D, `points` is N x 3.
template <class T>
FieldVars decode(ad::Graph<T>& g, const DecoderConfig& cfg, std::span<const ad::Var> params, ad::Var latent_rows,
                 ad::Var points) {
    if (params.size() != 2 * (cfg.layers + 1)) throw ShapeError("decode: parameter count does not match config");
    const auto& lv = g.value(latent_rows);
    const auto& pv = g.value(points);
    if (lv.rank() != 2 || lv.cols() != cfg.latent_dim)
        throw ShapeError("decode: latent rows " + shape_str(lv.shape()) + " for latent_dim " +
                         std::to_string(cfg.latent_dim));
    if (pv.rank() != 2 || pv.cols() != 3) throw ShapeError("decode: points must be N x 3, got " + shape_str(pv.shape()));
    const ad::Var input = ad::concat_columns(g, latent_rows, points);
    ad::Var h = input;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        if (l != 0 && l == cfg.skip_layer) h = ad::concat_columns(g, h, input);
        h = ad::relu(g, ad::affine(g, h, params[2 * l], params[2 * l + 1]));
    }
    const ad::Var out = ad::affine(g, h, params[2 * cfg.layers], params[2 * cfg.layers + 1]);
    return FieldVars{ad::tanh(g, ad::column(g, out, 0)), ad::sigmoid(g, ad::column(g, out, 1))};
}

/// Forward-only evaluation of one latent code at a batch of points (N x 3).
template <class T>
FieldPrediction<T> decode(const DecoderParams<T>& params, std::span<const T> z, const Tensor<T>& points) {
    const auto& cfg = params.config;
    if (z.size() != cfg.latent_dim)
        throw ShapeError("decode: latent has " + std::to_string(z.size()) + " entries, expected " +
                         std::to_string(cfg.latent_dim));
    ad::Graph<T> g;
    const auto vars = bind_params(g, params.tensors, false);
    const std::size_t n = points.rows();
    const ad::Var zrow = g.constant(Tensor<T>(Shape{1, z.size()}, std::vector<T>(z.begin(), z.end())));
    const FieldVars f = decode(g, cfg, vars, ad::repeat_rows(g, zrow, n), g.constant(points));
    FieldPrediction<T> out;
    out.sdf = g.value(f.sdf).storage();
    out.saliency = g.value(f.saliency).storage();
    return out;
}

/// |clamp(f) - clamp(f_gt)| with clamp to [-delta, delta].
template <class T>
T clamped_l1(T f, T f_gt, T delta) {
    return std::abs(std::clamp(f, -delta, delta) - std::clamp(f_gt, -delta, delta));
}

struct IssnLossVars {
    ad::Var total;
    ad::Var sdf_term;  // mean clamped L1
    ad::Var sal_reg;   // mean of -lambda * log(s); invalid when lambda == 0
    ad::Var latent_reg;
};

/// Saliency-weighted clamped-L1 loss over all rows plus beta * mean_b ||z_b||^2.
/// With lambda == 0 the saliency head takes no part and the loss is the plain clamped L1.
template <class T>
IssnLossVars issn_loss(ad::Graph<T>& g, const FieldVars& pred, const std::vector<T>& gt_sdf,
                       std::span<const ad::Var> latents, const DecoderConfig& cfg) {
    const auto& fv = g.value(pred.sdf);
    if (fv.size() != gt_sdf.size())
        throw ShapeError("issn_loss: " + std::to_string(fv.size()) + " predictions for " +
                         std::to_string(gt_sdf.size()) + " targets");
    const T delta = static_cast<T>(cfg.delta);
    Tensor<T> gt_clamped(fv.shape());
    for (std::size_t i = 0; i < gt_sdf.size(); ++i) {
        if (!std::isfinite(double(gt_sdf[i]))) throw std::domain_error("issn_loss: non-finite ground-truth SDF");
        gt_clamped[i] = std::clamp(gt_sdf[i], -delta, delta);
    }
    for (T v : fv.values())
        if (!std::isfinite(double(v))) throw std::domain_error("issn_loss: non-finite prediction");
    const ad::Var per_point =
        ad::abs(g, ad::sub(g, ad::clamp_stopgrad(g, pred.sdf, delta), g.constant(std::move(gt_clamped))));
    IssnLossVars out;
    out.sdf_term = ad::mean(g, per_point);
    ad::Var data_term = out.sdf_term;
    if (cfg.lambda > 0) {
        const ad::Var reg = ad::mul_scalar(g, ad::log(g, pred.saliency), static_cast<T>(-cfg.lambda));
        data_term = ad::mean(g, ad::add(g, ad::mul(g, per_point, pred.saliency), reg));
        out.sal_reg = ad::mean(g, reg);
    }
    if (latents.empty()) throw ShapeError("issn_loss: no latent codes");
    ad::Var znorm = ad::sum_squares(g, latents[0]);
    for (std::size_t b = 1; b < latents.size(); ++b) znorm = ad::add(g, znorm, ad::sum_squares(g, latents[b]));
    out.latent_reg = ad::mul_scalar(g, znorm, static_cast<T>(cfg.beta / double(latents.size())));
    out.total = ad::add(g, data_term, out.latent_reg);
    return out;
}

/// Scalar value of the loss for given predictions, targets and one latent code.
template <class T>
double issn_loss_value(const FieldPrediction<T>& pred, const std::vector<T>& gt_sdf, std::span<const T> z,
                       const DecoderConfig& cfg) {
    if (pred.sdf.size() != pred.saliency.size()) throw ShapeError("issn_loss: sdf/saliency length mismatch");
    ad::Graph<T> g;
    const std::size_t n = pred.sdf.size();
    FieldVars fv{g.constant(Tensor<T>(Shape{n, 1}, pred.sdf)), g.constant(Tensor<T>(Shape{n, 1}, pred.saliency))};
    const ad::Var zv = g.constant(Tensor<T>(Shape{1, z.size()}, std::vector<T>(z.begin(), z.end())));
    const auto loss = issn_loss(g, fv, gt_sdf, std::span<const ad::Var>(&zv, 1), cfg);
    return g.value(loss.total)[0];
}

/// Minimizer of L*s - lambda*log(s) over s in (0, 1].
inline double optimal_saliency(double residual, double lambda) {
    if (!(lambda > 0)) throw std::invalid_argument("optimal_saliency: lambda must be > 0");
    if (residual < 0) throw std::invalid_argument("optimal_saliency: residual must be >= 0");
    if (residual == 0) return 1.0;
    return std::min(1.0, lambda / residual);
}

}  // namespace salfield
