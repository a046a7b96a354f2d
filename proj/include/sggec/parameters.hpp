#pragma once

#include <map>
#include <string>
#include <vector>

#include "sggec/rng.hpp"
#include "sggec/tensor.hpp"

namespace sggec {

// Named map of learnable tensors. Names are stable dotted paths; iteration
// order is lexicographic, which keeps serialization deterministic.
template <typename T>
class ParametersT {
public:
    TensorT<T>& add(const std::string& name, TensorT<T> tensor) {
        if (items_.count(name)) {
            throw TensorError("parameter '" + name + "' already exists");
        }
        tensor.set_requires_grad(true);
        auto [it, ok] = items_.emplace(name, std::move(tensor));
        (void)ok;
        return it->second;
    }

    TensorT<T>& at(const std::string& name) {
        auto it = items_.find(name);
        if (it == items_.end()) {
            throw TensorError("unknown parameter '" + name + "'");
        }
        return it->second;
    }

    const TensorT<T>& at(const std::string& name) const {
        auto it = items_.find(name);
        if (it == items_.end()) {
            throw TensorError("unknown parameter '" + name + "'");
        }
        return it->second;
    }

    bool contains(const std::string& name) const { return items_.count(name) != 0; }

    std::size_t size() const { return items_.size(); }

    void zero_grad() {
        for (auto& [name, tensor] : items_) tensor.zero_grad();
    }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& [name, tensor] : items_) n += tensor.numel();
        return n;
    }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

private:
    std::map<std::string, TensorT<T>> items_;
};

using Parameters = ParametersT<float>;

// Xavier-uniform initialization for weight matrices.
template <typename T>
TensorT<T> init_xavier(std::vector<int> shape, Rng& rng) {
    TensorT<T> t = TensorT<T>::zeros(shape);
    const int fan_in = shape.size() == 2 ? shape[0] : 1;
    const int fan_out = shape.size() == 2 ? shape[1] : shape[0];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

// Scaled normal init for embedding tables.
template <typename T>
TensorT<T> init_embedding(std::vector<int> shape, Rng& rng) {
    TensorT<T> t = TensorT<T>::zeros(shape);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(shape.back()));
    for (auto& v : t.data()) v = static_cast<T>(rng.normal(0.0, stddev));
    return t;
}

// Widens a float parameter set to double for high-precision oracles.
inline ParametersT<double> widen(const ParametersT<float>& params) {
    ParametersT<double> out;
    for (const auto& [name, tensor] : params) {
        std::vector<double> data(tensor.data().begin(), tensor.data().end());
        out.add(name, TensorT<double>::from_data(tensor.shape(), std::move(data)));
    }
    return out;
}

}  // namespace sggec
