#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sggec/parameters.hpp"

namespace sggec {

// Adam with classic L2 coupling: weight decay is added to the gradient
// before the moment update.
template <typename T>
struct AdamStateT {
    T learning_rate = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    T weight_decay = T(1e-5);
    long step = 0;

    std::map<std::string, std::vector<T>> moment1;
    std::map<std::string, std::vector<T>> moment2;
};

using AdamState = AdamStateT<float>;

template <typename T>
void adam_step(ParametersT<T>& params, AdamStateT<T>& state) {
    state.step += 1;
    const T bias1 = T(1) - std::pow(state.beta1, static_cast<T>(state.step));
    const T bias2 = T(1) - std::pow(state.beta2, static_cast<T>(state.step));
    for (auto& [name, tensor] : params) {
        if (!tensor.has_grad()) {
            throw TensorError("adam_step: parameter '" + name + "' has no gradient");
        }
        auto& m = state.moment1[name];
        auto& v = state.moment2[name];
        if (m.empty()) m.assign(tensor.numel(), T(0));
        if (v.empty()) v.assign(tensor.numel(), T(0));
        if (m.size() != tensor.numel()) {
            throw TensorError("adam_step: moment shape mismatch for '" + name + "'");
        }
        auto& value = tensor.data();
        const auto& grad = tensor.grad();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const T g = grad[i] + state.weight_decay * value[i];
            m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g * g;
            const T mhat = m[i] / bias1;
            const T vhat = v[i] / bias2;
            value[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace sggec
