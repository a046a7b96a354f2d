#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "sggec/rng.hpp"
#include "sggec/tensor.hpp"

namespace sggec {

// Half-open [start, end) ranges of sub-word positions, one per word.
using SpanMap = std::vector<std::pair<int, int>>;

namespace detail {

template <typename T>
void record_many(TensorT<T>& out, const std::vector<const TensorT<T>*>& inputs,
                 std::function<void(TensorNode<T>&)> backprop) {
    bool needs = false;
    for (const TensorT<T>* in : inputs) {
        if (in->defined() && in->requires_grad()) {
            needs = true;
            break;
        }
    }
    if (!needs || !grad_enabled()) {
        return;
    }
    auto node = out.node();
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const TensorT<T>* in : inputs) {
        node->parents.push_back(in->node());
    }
    node->backprop = std::move(backprop);
}

inline void require(bool cond, const std::string& message) {
    if (!cond) throw TensorError(message);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and broadcast arithmetic
// ---------------------------------------------------------------------------

// add supports equal shapes, plus the [m,n] + [n] row-bias broadcast.
template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() == b.shape()) {
        TensorT<T> out = TensorT<T>::zeros(a.shape());
        const auto& av = a.data();
        const auto& bv = b.data();
        auto& ov = out.data();
        for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
        TensorT<T>::record(out, {&a, &b}, [](TensorNode<T>& node) {
            for (int p = 0; p < 2; ++p) {
                auto& parent = *node.parents[p];
                if (!parent.requires_grad) continue;
                parent.ensure_grad();
                for (std::size_t i = 0; i < node.grad.size(); ++i) {
                    parent.grad[i] += node.grad[i];
                }
            }
        });
        return out;
    }
    if (a.shape().size() == 2 && b.shape().size() == 1 && b.shape()[0] == a.cols()) {
        const int m = a.rows(), n = a.cols();
        TensorT<T> out = TensorT<T>::zeros(a.shape());
        const auto& av = a.data();
        const auto& bv = b.data();
        auto& ov = out.data();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) ov[i * n + j] = av[i * n + j] + bv[j];
        }
        TensorT<T>::record(out, {&a, &b}, [m, n](TensorNode<T>& node) {
            auto& pa = *node.parents[0];
            auto& pb = *node.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) pb.grad[j] += node.grad[i * n + j];
                }
            }
        });
        return out;
    }
    throw TensorError("add: incompatible shapes " + shape_string(a.shape()) + " and " +
                      shape_string(b.shape()));
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require(a.shape() == b.shape(), "sub: incompatible shapes " +
                                                shape_string(a.shape()) + " and " +
                                                shape_string(b.shape()));
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    TensorT<T>::record(out, {&a, &b}, [](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pb.grad[i] -= node.grad[i];
        }
    });
    return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require(a.shape() == b.shape(), "mul: incompatible shapes " +
                                                shape_string(a.shape()) + " and " +
                                                shape_string(b.shape()));
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    TensorT<T>::record(out, {&a, &b}, [](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                pa.grad[i] += node.grad[i] * pb.value[i];
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) {
                pb.grad[i] += node.grad[i] * pa.value[i];
            }
        }
    });
    return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T factor) {
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * factor;
    TensorT<T>::record(out, {&a}, [factor](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i] * factor;
    });
    return out;
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require(a.shape().size() == 2 && b.shape().size() == 2 && a.cols() == b.rows(),
                    "matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                        shape_string(b.shape()));
    const int m = a.rows(), k = a.cols(), n = b.cols();
    TensorT<T> out = TensorT<T>::zeros({m, n});
    const T* av = a.data().data();
    const T* bv = b.data().data();
    T* ov = out.data().data();
    for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            const T aik = av[i * k + kk];
            if (aik == T(0)) continue;
            const T* brow = bv + kk * n;
            T* orow = ov + i * n;
            for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    TensorT<T>::record(out, {&a, &b}, [m, k, n](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        const T* g = node.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();
            const T* bv = pb.value.data();
            for (int i = 0; i < m; ++i) {
                for (int kk = 0; kk < k; ++kk) {
                    T acc = T(0);
                    const T* grow = g + i * n;
                    const T* brow = bv + kk * n;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    pa.grad[i * k + kk] += acc;
                }
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            const T* av = pa.value.data();
            for (int i = 0; i < m; ++i) {
                const T* grow = g + i * n;
                for (int kk = 0; kk < k; ++kk) {
                    const T aik = av[i * k + kk];
                    if (aik == T(0)) continue;
                    T* brow = pb.grad.data() + kk * n;
                    for (int j = 0; j < n; ++j) brow[j] += aik * grow[j];
                }
            }
        }
    });
    return out;
}

// a [m,k] times b-transposed where b is [n,k]
template <typename T>
TensorT<T> matmul_nt(const TensorT<T>& a, const TensorT<T>& b) {
    detail::require(a.shape().size() == 2 && b.shape().size() == 2 && a.cols() == b.cols(),
                    "matmul_nt: incompatible shapes " + shape_string(a.shape()) + " and " +
                        shape_string(b.shape()));
    const int m = a.rows(), k = a.cols(), n = b.rows();
    TensorT<T> out = TensorT<T>::zeros({m, n});
    const T* av = a.data().data();
    const T* bv = b.data().data();
    T* ov = out.data().data();
    for (int i = 0; i < m; ++i) {
        const T* arow = av + i * k;
        for (int j = 0; j < n; ++j) {
            const T* brow = bv + j * k;
            T acc = T(0);
            for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            ov[i * n + j] = acc;
        }
    }
    TensorT<T>::record(out, {&a, &b}, [m, k, n](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        auto& pb = *node.parents[1];
        const T* g = node.grad.data();
        if (pa.requires_grad) {
            pa.ensure_grad();
            const T* bv = pb.value.data();
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    const T gij = g[i * n + j];
                    if (gij == T(0)) continue;
                    const T* brow = bv + j * k;
                    T* arow = pa.grad.data() + i * k;
                    for (int kk = 0; kk < k; ++kk) arow[kk] += gij * brow[kk];
                }
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            const T* av = pa.value.data();
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < n; ++j) {
                    const T gij = g[i * n + j];
                    if (gij == T(0)) continue;
                    const T* arow = av + i * k;
                    T* brow = pb.grad.data() + j * k;
                    for (int kk = 0; kk < k; ++kk) brow[kk] += gij * arow[kk];
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// nonlinearities
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > T(0) ? av[i] : T(0);
    TensorT<T>::record(out, {&a}, [](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            if (pa.value[i] > T(0)) pa.grad[i] += node.grad[i];
        }
    });
    return out;
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        const T x = av[i];
        if (x >= T(0)) {
            ov[i] = T(1) / (T(1) + std::exp(-x));
        } else {
            const T e = std::exp(x);
            ov[i] = e / (T(1) + e);
        }
    }
    TensorT<T>::record(out, {&a}, [](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            const T y = node.value[i];
            pa.grad[i] += node.grad[i] * y * (T(1) - y);
        }
    });
    return out;
}

// log(x + eps); the epsilon keeps copy-mixture zeros out of the singularity
template <typename T>
TensorT<T> log_eps(const TensorT<T>& a, T eps) {
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::log(av[i] + eps);
    TensorT<T>::record(out, {&a}, [eps](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            pa.grad[i] += node.grad[i] / (pa.value[i] + eps);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// softmax / layer norm / cross entropy
// ---------------------------------------------------------------------------

// Row-wise softmax over the last dimension of a [m,n] tensor. `mask`, when
// given, is row-major m*n with nonzero meaning "keep"; masked-out entries of
// the output are exactly zero. A fully masked row is an error.
template <typename T>
TensorT<T> softmax(const TensorT<T>& a, const std::vector<std::uint8_t>* mask = nullptr) {
    detail::require(a.shape().size() == 2,
                    "softmax: expected rank-2 tensor, got " + shape_string(a.shape()));
    const int m = a.rows(), n = a.cols();
    if (mask) {
        detail::require(mask->size() == static_cast<std::size_t>(m) * n,
                        "softmax: mask size does not match tensor shape " +
                            shape_string(a.shape()));
    }
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (int i = 0; i < m; ++i) {
        T mx = T(0);
        bool any = false;
        for (int j = 0; j < n; ++j) {
            if (mask && !(*mask)[i * n + j]) continue;
            const T x = av[i * n + j];
            if (!any || x > mx) mx = x;
            any = true;
        }
        if (!any) {
            throw TensorError("softmax: row " + std::to_string(i) + " is fully masked");
        }
        T sum = T(0);
        for (int j = 0; j < n; ++j) {
            if (mask && !(*mask)[i * n + j]) {
                ov[i * n + j] = T(0);
                continue;
            }
            const T e = std::exp(av[i * n + j] - mx);
            ov[i * n + j] = e;
            sum += e;
        }
        for (int j = 0; j < n; ++j) {
            if (mask && !(*mask)[i * n + j]) continue;
            ov[i * n + j] /= sum;
        }
    }
    std::vector<std::uint8_t> mask_copy = mask ? *mask : std::vector<std::uint8_t>();
    TensorT<T>::record(out, {&a}, [m, n, mask_copy = std::move(mask_copy)](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const bool masked = !mask_copy.empty();
        for (int i = 0; i < m; ++i) {
            T dot = T(0);
            for (int j = 0; j < n; ++j) {
                if (masked && !mask_copy[i * n + j]) continue;
                dot += node.grad[i * n + j] * node.value[i * n + j];
            }
            for (int j = 0; j < n; ++j) {
                if (masked && !mask_copy[i * n + j]) continue;
                const std::size_t idx = static_cast<std::size_t>(i) * n + j;
                pa.grad[idx] += node.value[idx] * (node.grad[idx] - dot);
            }
        }
    });
    return out;
}

// Row-wise layer normalization with affine gain/bias over the last dim.
template <typename T>
TensorT<T> layer_norm(const TensorT<T>& a, const TensorT<T>& gain, const TensorT<T>& bias,
                      T eps = T(1e-5)) {
    detail::require(a.shape().size() == 2, "layer_norm: expected rank-2 tensor, got " +
                                               shape_string(a.shape()));
    const int m = a.rows(), n = a.cols();
    detail::require(gain.shape() == std::vector<int>{n} && bias.shape() == std::vector<int>{n},
                    "layer_norm: gain/bias shape must be [" + std::to_string(n) + "]");
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    const auto& av = a.data();
    const auto& gv = gain.data();
    const auto& bv = bias.data();
    auto& ov = out.data();
    std::vector<T> inv_std(m), mean(m);
    for (int i = 0; i < m; ++i) {
        T mu = T(0);
        for (int j = 0; j < n; ++j) mu += av[i * n + j];
        mu /= T(n);
        T var = T(0);
        for (int j = 0; j < n; ++j) {
            const T d = av[i * n + j] - mu;
            var += d * d;
        }
        var /= T(n);
        const T inv = T(1) / std::sqrt(var + eps);
        mean[i] = mu;
        inv_std[i] = inv;
        for (int j = 0; j < n; ++j) {
            ov[i * n + j] = (av[i * n + j] - mu) * inv * gv[j] + bv[j];
        }
    }
    TensorT<T>::record(
        out, {&a, &gain, &bias},
        [m, n, mean = std::move(mean), inv_std = std::move(inv_std)](TensorNode<T>& node) {
            auto& pa = *node.parents[0];
            auto& pg = *node.parents[1];
            auto& pb = *node.parents[2];
            const T* g = node.grad.data();
            const T* xv = pa.value.data();
            const T* gv = pg.value.data();
            if (pg.requires_grad) pg.ensure_grad();
            if (pb.requires_grad) pb.ensure_grad();
            if (pa.requires_grad) pa.ensure_grad();
            for (int i = 0; i < m; ++i) {
                const T mu = mean[i];
                const T inv = inv_std[i];
                T mean_dxhat = T(0), mean_dxhat_xhat = T(0);
                for (int j = 0; j < n; ++j) {
                    const T xhat = (xv[i * n + j] - mu) * inv;
                    const T dy = g[i * n + j];
                    if (pg.requires_grad) pg.grad[j] += dy * xhat;
                    if (pb.requires_grad) pb.grad[j] += dy;
                    const T dxhat = dy * gv[j];
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * xhat;
                }
                if (!pa.requires_grad) continue;
                mean_dxhat /= T(n);
                mean_dxhat_xhat /= T(n);
                for (int j = 0; j < n; ++j) {
                    const T xhat = (xv[i * n + j] - mu) * inv;
                    const T dxhat = g[i * n + j] * gv[j];
                    pa.grad[i * n + j] += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                }
            }
        });
    return out;
}

// Per-row negative log likelihood of the given class under softmax(logits).
template <typename T>
TensorT<T> cross_entropy_rows(const TensorT<T>& logits, const std::vector<int>& targets) {
    detail::require(logits.shape().size() == 2, "cross_entropy: expected rank-2 logits, got " +
                                                    shape_string(logits.shape()));
    const int m = logits.rows(), c = logits.cols();
    detail::require(targets.size() == static_cast<std::size_t>(m),
                    "cross_entropy: target count " + std::to_string(targets.size()) +
                        " does not match row count " + std::to_string(m));
    for (int t : targets) {
        if (t < 0 || t >= c) {
            throw TensorError("cross_entropy: class index " + std::to_string(t) +
                              " out of range [0," + std::to_string(c) + ")");
        }
    }
    TensorT<T> out = TensorT<T>::zeros({m});
    const auto& lv = logits.data();
    auto& ov = out.data();
    for (int i = 0; i < m; ++i) {
        T mx = lv[i * c];
        for (int j = 1; j < c; ++j) mx = std::max(mx, lv[i * c + j]);
        T sum = T(0);
        for (int j = 0; j < c; ++j) sum += std::exp(lv[i * c + j] - mx);
        ov[i] = mx + std::log(sum) - lv[i * c + targets[i]];
    }
    TensorT<T>::record(out, {&logits}, [m, c, targets](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const T* lv = pa.value.data();
        for (int i = 0; i < m; ++i) {
            const T gi = node.grad[i];
            if (gi == T(0)) continue;
            T mx = lv[i * c];
            for (int j = 1; j < c; ++j) mx = std::max(mx, lv[i * c + j]);
            T sum = T(0);
            for (int j = 0; j < c; ++j) sum += std::exp(lv[i * c + j] - mx);
            for (int j = 0; j < c; ++j) {
                const T p = std::exp(lv[i * c + j] - mx) / sum;
                pa.grad[i * c + j] += gi * (p - (j == targets[i] ? T(1) : T(0)));
            }
        }
    });
    return out;
}

// Scalar convenience form for a single distribution.
template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& logits, int target) {
    TensorT<T> row = logits;
    if (logits.shape().size() == 1) {
        row = TensorT<T>::from_data({1, logits.dim(0)}, logits.data());
        TensorT<T>::record(row, {&logits}, [](TensorNode<T>& node) {
            auto& pa = *node.parents[0];
            if (!pa.requires_grad) return;
            pa.ensure_grad();
            for (std::size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
        });
    }
    TensorT<T> losses = cross_entropy_rows(row, {target});
    TensorT<T> out = TensorT<T>::from_data({1}, {losses.data()[0]});
    TensorT<T>::record(out, {&losses}, [](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        pa.grad[0] += node.grad[0];
    });
    return out;
}

// ---------------------------------------------------------------------------
// gather / concat / pooling
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> gather_rows(const TensorT<T>& table, const std::vector<int>& ids) {
    detail::require(table.shape().size() == 2, "gather_rows: expected rank-2 table, got " +
                                                   shape_string(table.shape()));
    const int r = table.rows(), d = table.cols();
    for (int id : ids) {
        if (id < 0 || id >= r) {
            throw TensorError("gather_rows: index " + std::to_string(id) + " out of range [0," +
                              std::to_string(r) + ")");
        }
    }
    const int k = static_cast<int>(ids.size());
    detail::require(k > 0, "gather_rows: empty index list");
    TensorT<T> out = TensorT<T>::zeros({k, d});
    const auto& tv = table.data();
    auto& ov = out.data();
    for (int i = 0; i < k; ++i) {
        std::copy_n(tv.begin() + static_cast<std::size_t>(ids[i]) * d, d, ov.begin() + i * d);
    }
    TensorT<T>::record(out, {&table}, [d, ids](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const T* g = node.grad.data() + i * d;
            T* dst = pa.grad.data() + static_cast<std::size_t>(ids[i]) * d;
            for (int j = 0; j < d; ++j) dst[j] += g[j];
        }
    });
    return out;
}

template <typename T>
TensorT<T> embedding_lookup(const TensorT<T>& table, const std::vector<int>& ids) {
    return gather_rows(table, ids);
}

// Horizontal concatenation of same-row-count matrices.
template <typename T>
TensorT<T> concat_cols(const std::vector<TensorT<T>>& parts) {
    detail::require(!parts.empty(), "concat_cols: no inputs");
    if (parts.size() == 1) return parts[0];
    const int m = parts[0].rows();
    int total = 0;
    std::vector<int> widths;
    for (const auto& p : parts) {
        detail::require(p.rows() == m, "concat_cols: row mismatch " + shape_string(p.shape()));
        widths.push_back(p.cols());
        total += p.cols();
    }
    TensorT<T> out = TensorT<T>::zeros({m, total});
    auto& ov = out.data();
    int offset = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const auto& pv = parts[pi].data();
        const int w = widths[pi];
        for (int i = 0; i < m; ++i) {
            std::copy_n(pv.begin() + static_cast<std::size_t>(i) * w, w,
                        ov.begin() + static_cast<std::size_t>(i) * total + offset);
        }
        offset += w;
    }
    std::vector<const TensorT<T>*> refs;
    for (const auto& p : parts) refs.push_back(&p);
    detail::record_many(out, refs, [m, total, widths](TensorNode<T>& node) {
        int offset = 0;
        for (std::size_t pi = 0; pi < node.parents.size(); ++pi) {
            auto& parent = *node.parents[pi];
            const int w = widths[pi];
            if (parent.requires_grad) {
                parent.ensure_grad();
                for (int i = 0; i < m; ++i) {
                    const T* g = node.grad.data() + static_cast<std::size_t>(i) * total + offset;
                    T* dst = parent.grad.data() + static_cast<std::size_t>(i) * w;
                    for (int j = 0; j < w; ++j) dst[j] += g[j];
                }
            }
            offset += w;
        }
    });
    return out;
}

// Vertical stacking of same-width matrices.
template <typename T>
TensorT<T> stack_rows(const std::vector<TensorT<T>>& parts) {
    detail::require(!parts.empty(), "stack_rows: no inputs");
    if (parts.size() == 1) return parts[0];
    const int d = parts[0].cols();
    int total = 0;
    std::vector<int> heights;
    for (const auto& p : parts) {
        detail::require(p.cols() == d, "stack_rows: column mismatch " + shape_string(p.shape()));
        heights.push_back(p.rows());
        total += p.rows();
    }
    TensorT<T> out = TensorT<T>::zeros({total, d});
    auto& ov = out.data();
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.data().begin(), p.data().end(), ov.begin() + offset);
        offset += p.data().size();
    }
    std::vector<const TensorT<T>*> refs;
    for (const auto& p : parts) refs.push_back(&p);
    detail::record_many(out, refs, [heights, d](TensorNode<T>& node) {
        std::size_t offset = 0;
        for (std::size_t pi = 0; pi < node.parents.size(); ++pi) {
            auto& parent = *node.parents[pi];
            const std::size_t count = static_cast<std::size_t>(heights[pi]) * d;
            if (parent.requires_grad) {
                parent.ensure_grad();
                for (std::size_t i = 0; i < count; ++i) parent.grad[i] += node.grad[offset + i];
            }
            offset += count;
        }
    });
    return out;
}

// Word pooling: row w of the output is the mean of x rows in span w.
template <typename T>
TensorT<T> pool_spans_mean(const TensorT<T>& x, const SpanMap& spans) {
    detail::require(x.shape().size() == 2, "pool_spans_mean: expected rank-2 input, got " +
                                               shape_string(x.shape()));
    detail::require(!spans.empty(), "pool_spans_mean: empty span map");
    const int n = x.rows(), d = x.cols();
    for (const auto& [s, e] : spans) {
        detail::require(0 <= s && s < e && e <= n,
                        "pool_spans_mean: span [" + std::to_string(s) + "," + std::to_string(e) +
                            ") out of range for " + std::to_string(n) + " rows");
    }
    const int w = static_cast<int>(spans.size());
    TensorT<T> out = TensorT<T>::zeros({w, d});
    const auto& xv = x.data();
    auto& ov = out.data();
    for (int wi = 0; wi < w; ++wi) {
        const auto [s, e] = spans[wi];
        const T inv = T(1) / T(e - s);
        for (int r = s; r < e; ++r) {
            for (int j = 0; j < d; ++j) ov[wi * d + j] += xv[r * d + j] * inv;
        }
    }
    TensorT<T>::record(out, {&x}, [d, spans](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t wi = 0; wi < spans.size(); ++wi) {
            const auto [s, e] = spans[wi];
            const T inv = T(1) / T(e - s);
            const T* g = node.grad.data() + wi * d;
            for (int r = s; r < e; ++r) {
                T* dst = pa.grad.data() + static_cast<std::size_t>(r) * d;
                for (int j = 0; j < d; ++j) dst[j] += g[j] * inv;
            }
        }
    });
    return out;
}

// Dual context blend: rows covered by span w get beta*h + (1-beta)*hw[w],
// rows outside every span (BOS/EOS/PAD) pass h through unchanged.
template <typename T>
TensorT<T> dual_mix(const TensorT<T>& h, const TensorT<T>& hw, const SpanMap& spans, T beta) {
    detail::require(h.shape().size() == 2 && hw.shape().size() == 2 && h.cols() == hw.cols(),
                    "dual_mix: incompatible shapes " + shape_string(h.shape()) + " and " +
                        shape_string(hw.shape()));
    detail::require(hw.rows() == static_cast<int>(spans.size()),
                    "dual_mix: word-state rows do not match span count");
    const int n = h.rows(), d = h.cols();
    std::vector<int> word_of(n, -1);
    for (std::size_t wi = 0; wi < spans.size(); ++wi) {
        const auto [s, e] = spans[wi];
        detail::require(0 <= s && s < e && e <= n, "dual_mix: span out of range");
        for (int r = s; r < e; ++r) word_of[r] = static_cast<int>(wi);
    }
    TensorT<T> out = TensorT<T>::zeros(h.shape());
    const auto& hv = h.data();
    const auto& wv = hw.data();
    auto& ov = out.data();
    for (int i = 0; i < n; ++i) {
        const int w = word_of[i];
        if (w < 0) {
            std::copy_n(hv.begin() + static_cast<std::size_t>(i) * d, d, ov.begin() + i * d);
        } else {
            for (int j = 0; j < d; ++j) {
                ov[i * d + j] = beta * hv[i * d + j] + (T(1) - beta) * wv[w * d + j];
            }
        }
    }
    TensorT<T>::record(out, {&h, &hw}, [n, d, beta, word_of = std::move(word_of)](
                                           TensorNode<T>& node) {
        auto& ph = *node.parents[0];
        auto& pw = *node.parents[1];
        if (ph.requires_grad) ph.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        for (int i = 0; i < n; ++i) {
            const int w = word_of[i];
            const T* g = node.grad.data() + static_cast<std::size_t>(i) * d;
            if (ph.requires_grad) {
                const T coeff = w < 0 ? T(1) : beta;
                T* dst = ph.grad.data() + static_cast<std::size_t>(i) * d;
                for (int j = 0; j < d; ++j) dst[j] += coeff * g[j];
            }
            if (w >= 0 && pw.requires_grad) {
                T* dst = pw.grad.data() + static_cast<std::size_t>(w) * d;
                for (int j = 0; j < d; ++j) dst[j] += (T(1) - beta) * g[j];
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// copy-mechanism plumbing
// ---------------------------------------------------------------------------

// Scatter source-position attention into vocabulary space: mass for token id v
// is the sum of attention over source positions holding v. Ids never touched
// stay exactly zero.
template <typename T>
TensorT<T> scatter_to_vocab(const TensorT<T>& attn, const std::vector<int>& source_ids,
                            int vocab_size) {
    detail::require(attn.shape().size() == 2, "scatter_to_vocab: expected rank-2 attention, got " +
                                                  shape_string(attn.shape()));
    const int m = attn.rows(), s = attn.cols();
    detail::require(static_cast<int>(source_ids.size()) == s,
                    "scatter_to_vocab: source id count does not match attention columns");
    for (int id : source_ids) {
        detail::require(0 <= id && id < vocab_size,
                        "scatter_to_vocab: source id " + std::to_string(id) + " out of range");
    }
    TensorT<T> out = TensorT<T>::zeros({m, vocab_size});
    const auto& av = attn.data();
    auto& ov = out.data();
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < s; ++j) {
            ov[static_cast<std::size_t>(i) * vocab_size + source_ids[j]] += av[i * s + j];
        }
    }
    TensorT<T>::record(out, {&attn}, [m, s, vocab_size, source_ids](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < s; ++j) {
                pa.grad[i * s + j] +=
                    node.grad[static_cast<std::size_t>(i) * vocab_size + source_ids[j]];
            }
        }
    });
    return out;
}

// Row-wise convex mixture p = eta*pg + (1-eta)*pc with eta a [m,1] column.
template <typename T>
TensorT<T> gate_mix(const TensorT<T>& pg, const TensorT<T>& pc, const TensorT<T>& eta) {
    detail::require(pg.shape() == pc.shape(), "gate_mix: distribution shapes differ: " +
                                                  shape_string(pg.shape()) + " vs " +
                                                  shape_string(pc.shape()));
    const int m = pg.rows(), n = pg.cols();
    detail::require(eta.shape() == std::vector<int>({m, 1}),
                    "gate_mix: eta must be [" + std::to_string(m) + ",1], got " +
                        shape_string(eta.shape()));
    TensorT<T> out = TensorT<T>::zeros(pg.shape());
    const auto& gv = pg.data();
    const auto& cv = pc.data();
    const auto& ev = eta.data();
    auto& ov = out.data();
    for (int i = 0; i < m; ++i) {
        const T e = ev[i];
        for (int j = 0; j < n; ++j) {
            ov[i * n + j] = e * gv[i * n + j] + (T(1) - e) * cv[i * n + j];
        }
    }
    TensorT<T>::record(out, {&pg, &pc, &eta}, [m, n](TensorNode<T>& node) {
        auto& ppg = *node.parents[0];
        auto& ppc = *node.parents[1];
        auto& peta = *node.parents[2];
        const T* ev = peta.value.data();
        if (ppg.requires_grad) ppg.ensure_grad();
        if (ppc.requires_grad) ppc.ensure_grad();
        if (peta.requires_grad) peta.ensure_grad();
        for (int i = 0; i < m; ++i) {
            const T e = ev[i];
            T eta_acc = T(0);
            for (int j = 0; j < n; ++j) {
                const std::size_t idx = static_cast<std::size_t>(i) * n + j;
                const T g = node.grad[idx];
                if (ppg.requires_grad) ppg.grad[idx] += e * g;
                if (ppc.requires_grad) ppc.grad[idx] += (T(1) - e) * g;
                eta_acc += g * (ppg.value[idx] - ppc.value[idx]);
            }
            if (peta.requires_grad) peta.grad[i] += eta_acc;
        }
    });
    return out;
}

// out[i] = p[i][ids[i]]
template <typename T>
TensorT<T> pick_per_row(const TensorT<T>& p, const std::vector<int>& ids) {
    detail::require(p.shape().size() == 2, "pick_per_row: expected rank-2 input, got " +
                                               shape_string(p.shape()));
    const int m = p.rows(), n = p.cols();
    detail::require(static_cast<int>(ids.size()) == m,
                    "pick_per_row: id count does not match row count");
    for (int id : ids) {
        detail::require(0 <= id && id < n,
                        "pick_per_row: index " + std::to_string(id) + " out of range");
    }
    TensorT<T> out = TensorT<T>::zeros({m});
    const auto& pv = p.data();
    auto& ov = out.data();
    for (int i = 0; i < m; ++i) ov[i] = pv[static_cast<std::size_t>(i) * n + ids[i]];
    TensorT<T>::record(out, {&p}, [m, n, ids](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (int i = 0; i < m; ++i) {
            pa.grad[static_cast<std::size_t>(i) * n + ids[i]] += node.grad[i];
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// reductions / regularization
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> sum_all(const TensorT<T>& a) {
    T acc = T(0);
    for (T v : a.data()) acc += v;
    TensorT<T> out = TensorT<T>::scalar(acc);
    TensorT<T>::record(out, {&a}, [](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (auto& g : pa.grad) g += node.grad[0];
    });
    return out;
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& a) {
    T acc = T(0);
    for (T v : a.data()) acc += v;
    const T inv = T(1) / T(a.numel());
    TensorT<T> out = TensorT<T>::scalar(acc * inv);
    TensorT<T>::record(out, {&a}, [inv](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (auto& g : pa.grad) g += node.grad[0] * inv;
    });
    return out;
}

// Inverted dropout. Identity when p == 0 or in eval mode.
template <typename T>
TensorT<T> dropout(const TensorT<T>& a, double p, Rng& rng, bool train) {
    if (p < 0.0 || p >= 1.0) {
        throw TensorError("dropout: probability " + std::to_string(p) + " outside [0,1)");
    }
    if (!train || p == 0.0) return a;
    const T keep_scale = T(1.0 / (1.0 - p));
    std::vector<T> mask(a.numel());
    for (auto& v : mask) v = rng.bernoulli(p) ? T(0) : keep_scale;
    TensorT<T> out = TensorT<T>::zeros(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * mask[i];
    TensorT<T>::record(out, {&a}, [mask = std::move(mask)](TensorNode<T>& node) {
        auto& pa = *node.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            pa.grad[i] += node.grad[i] * mask[i];
        }
    });
    return out;
}

// Weighted sum of scalar tensors, accumulated in double so the composition
// of loss terms is exact to the output precision.
template <typename T>
TensorT<T> weighted_sum_scalars(const std::vector<TensorT<T>>& terms,
                                const std::vector<double>& weights) {
    detail::require(!terms.empty() && terms.size() == weights.size(),
                    "weighted_sum_scalars: term/weight count mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        detail::require(terms[i].numel() == 1, "weighted_sum_scalars: non-scalar term");
        acc += weights[i] * static_cast<double>(terms[i].data()[0]);
    }
    TensorT<T> out = TensorT<T>::scalar(static_cast<T>(acc));
    std::vector<const TensorT<T>*> refs;
    for (const auto& t : terms) refs.push_back(&t);
    detail::record_many(out, refs, [weights](TensorNode<T>& node) {
        for (std::size_t i = 0; i < node.parents.size(); ++i) {
            auto& parent = *node.parents[i];
            if (!parent.requires_grad) continue;
            parent.ensure_grad();
            parent.grad[0] += node.grad[0] * static_cast<T>(weights[i]);
        }
    });
    return out;
}

}  // namespace sggec
