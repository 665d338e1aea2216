#pragma once

// Test-side reference implementations, kept independent of the library code
// paths they check: unfolding from the raw index formula, the mode product
// as a direct sum, a straight-line network evaluator, finite differences,
// and quadrature for sine moments.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "metacurv/mlp.hpp"
#include "metacurv/rng.hpp"
#include "metacurv/tensor.hpp"

namespace oracles {

using metacurv::DenseMatrix;
using metacurv::DenseTensor;
using metacurv::MLP;

inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    return scale > 0.0 ? diff / scale : diff;
}

inline double rel_err(const DenseMatrix& a, const DenseMatrix& b) {
    return rel_err(a.data(), b.data());
}

inline double rel_err(const DenseTensor& a, const DenseTensor& b) {
    return rel_err(a.data(), b.data());
}

// Flat storage offset for a 1-based multi-index (row-major, mode 1 slowest).
inline std::size_t storage_offset(const std::vector<std::size_t>& shape,
                                  const std::vector<std::size_t>& idx1) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < shape.size(); ++k) off = off * shape[k] + (idx1[k] - 1);
    return off;
}

// Advances a 1-based odometer; returns false after the last index.
inline bool next_index(std::vector<std::size_t>& idx1, const std::vector<std::size_t>& shape) {
    std::size_t k = shape.size();
    while (k > 0) {
        if (++idx1[k - 1] <= shape[k - 1]) return true;
        idx1[k - 1] = 1;
        --k;
    }
    return false;
}

// Mode-n unfolding straight from the element-mapping formula
// j = 1 + sum_{k != n} (i_k - 1) J_k, J_k = prod_{m=1, m != n}^{k-1} I_m,
// evaluating every product explicitly per element.
inline DenseMatrix unfold(const DenseTensor& t, std::size_t n) {
    const auto& shape = t.shape();
    const std::size_t rows = shape[n - 1];
    const std::size_t cols = t.size() / rows;
    DenseMatrix out(rows, cols);
    std::vector<std::size_t> idx(shape.size(), 1);
    do {
        std::size_t j = 1;
        for (std::size_t k = 1; k <= shape.size(); ++k) {
            if (k == n) continue;
            std::size_t jk = 1;
            for (std::size_t m = 1; m + 1 <= k; ++m) {
                if (m != n) jk *= shape[m - 1];
            }
            j += (idx[k - 1] - 1) * jk;
        }
        out(idx[n - 1] - 1, j - 1) = t[storage_offset(shape, idx)];
    } while (next_index(idx, shape));
    return out;
}

// (t x_n m) as the direct sum over the contracted index.
inline DenseTensor mode_product(const DenseTensor& t, const DenseMatrix& m, std::size_t n) {
    std::vector<std::size_t> out_shape = t.shape();
    out_shape[n - 1] = m.rows();
    DenseTensor out(out_shape);
    std::vector<std::size_t> idx(out_shape.size(), 1);
    do {
        double s = 0.0;
        std::vector<std::size_t> src = idx;
        for (std::size_t in = 1; in <= t.shape()[n - 1]; ++in) {
            src[n - 1] = in;
            s += t[storage_offset(t.shape(), src)] * m(idx[n - 1] - 1, in - 1);
        }
        out[storage_offset(out_shape, idx)] = s;
    } while (next_index(idx, out_shape));
    return out;
}

// Kronecker product by its block definition.
inline DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) {
            out(i, j) = a(i / b.rows(), j / b.cols()) * b(i % b.rows(), j % b.cols());
        }
    }
    return out;
}

// Straight-line network evaluator (explicit vectors, no shared code with
// metacurv::forward).
inline double forward(const MLP& net, double x) {
    std::vector<double> act{x};
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& w = net.layers[l].weight;
        const auto& b = net.layers[l].bias;
        const std::size_t out_dim = w.extent(1), in_dim = w.extent(2);
        std::vector<double> next(out_dim);
        for (std::size_t o = 0; o < out_dim; ++o) {
            double s = b[o];
            for (std::size_t i = 0; i < in_dim; ++i) s += w[o * in_dim + i] * act[i];
            next[o] = s;
        }
        if (l + 1 < net.layers.size()) {
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        }
        act = next;
    }
    return act[0];
}

// Central finite differences with per-coordinate steps.
inline std::vector<double> fd_grad(const std::vector<double>& theta,
                                   const std::function<double(const std::vector<double>&)>& f,
                                   double base_step = 1e-5) {
    std::vector<double> g(theta.size());
    std::vector<double> probe = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double h = base_step * (1.0 + std::abs(theta[i]));
        probe[i] = theta[i] + h;
        const double fp = f(probe);
        probe[i] = theta[i] - h;
        const double fm = f(probe);
        probe[i] = theta[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// Composite Simpson quadrature.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
    if (n % 2) ++n;
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

inline metacurv::DenseTensor random_tensor(metacurv::SplitMix64& rng,
                                           const std::vector<std::size_t>& shape) {
    metacurv::DenseTensor t(shape);
    for (double& x : t.data()) x = rng.uniform(-1.0, 1.0);
    return t;
}

inline metacurv::DenseMatrix random_matrix(metacurv::SplitMix64& rng, std::size_t rows,
                                           std::size_t cols) {
    metacurv::DenseMatrix m(rows, cols);
    for (double& x : m.data()) x = rng.uniform(-1.0, 1.0);
    return m;
}

}  // namespace oracles
