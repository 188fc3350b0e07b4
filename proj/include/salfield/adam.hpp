#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "salfield/tensor.hpp"

namespace salfield {

/// Moment accumulators for one group of parameter tensors.
template <class T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update of `params` in place.
template <class T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
               double lr) {
    if (grads.size() != params.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.shape());
            state.v.emplace_back(p.shape());
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_step: state does not match parameter group");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (grads[k].shape() != params[k].shape() || state.m[k].shape() != params[k].shape())
            throw ShapeError("adam_step: shape mismatch for tensor " + std::to_string(k));
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor<T>& p = params[k];
        Tensor<T>& m = state.m[k];
        Tensor<T>& v = state.v[k];
        const Tensor<T>& g = grads[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            const double mi = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            const double vi = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double upd = lr * (mi / c1) / (std::sqrt(vi / c2) + state.eps);
            p[i] = static_cast<T>(double(p[i]) - upd);
        }
    }
}

}  // namespace salfield
