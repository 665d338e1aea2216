#include "metacurv/tensor.hpp"

#include <stdexcept>
#include <string>
#include <utility>

namespace metacurv {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

void validate_shape(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor order must be >= 1");
    for (std::size_t e : shape) {
        if (e == 0) throw std::invalid_argument("tensor extents must be >= 1");
    }
}

}  // namespace

DenseTensor::DenseTensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_product(shape_), 0.0);
}

DenseTensor::DenseTensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != shape_product(shape_)) {
        throw std::invalid_argument("tensor data length does not match shape");
    }
}

std::size_t DenseTensor::extent(std::size_t mode) const {
    if (mode < 1 || mode > shape_.size()) {
        throw std::invalid_argument("mode " + std::to_string(mode) + " out of range");
    }
    return shape_[mode - 1];
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("matrix extents must be >= 1");
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("matrix extents must be >= 1");
    if (data_.size() != rows * cols) {
        throw std::invalid_argument("matrix data length does not match rows*cols");
    }
}

DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner extents differ");
    DenseMatrix c(a.rows(), b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    double* cd = c.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ad[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = bd + p * m;
            double* crow = cd + i * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

std::vector<double> matvec(const DenseMatrix& m, const std::vector<double>& x) {
    if (m.cols() != x.size()) throw std::invalid_argument("matvec: extents differ");
    std::vector<double> y(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) s += m(r, c) * x[c];
        y[r] = s;
    }
    return y;
}

DenseMatrix transpose(const DenseMatrix& m) {
    DenseMatrix t(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
    return t;
}

namespace {

// Column strides of the mode-n unfolding: J[k] = prod_{m<k, m != n} I_m,
// all indices 0-based here. Mode `mode` is 1-based.
std::vector<std::size_t> unfold_strides(const std::vector<std::size_t>& shape, std::size_t mode) {
    std::vector<std::size_t> J(shape.size(), 0);
    std::size_t cur = 1;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (k == mode - 1) continue;
        J[k] = cur;
        cur *= shape[k];
    }
    return J;
}

void check_mode(const std::vector<std::size_t>& shape, std::size_t mode) {
    if (mode < 1 || mode > shape.size()) {
        throw std::invalid_argument("mode " + std::to_string(mode) + " out of range for order " +
                                    std::to_string(shape.size()) + " tensor");
    }
}

}  // namespace

DenseMatrix unfold(const DenseTensor& t, std::size_t mode) {
    check_mode(t.shape(), mode);
    const auto& shape = t.shape();
    const std::size_t order = shape.size();
    const std::size_t rows = shape[mode - 1];
    const std::size_t cols = t.size() / rows;
    const auto J = unfold_strides(shape, mode);

    DenseMatrix out(rows, cols);
    std::vector<std::size_t> idx(order, 0);
    for (std::size_t off = 0; off < t.size(); ++off) {
        std::size_t rem = off;
        for (std::size_t k = order; k-- > 0;) {
            idx[k] = rem % shape[k];
            rem /= shape[k];
        }
        std::size_t col = 0;
        for (std::size_t k = 0; k < order; ++k) {
            if (k != mode - 1) col += idx[k] * J[k];
        }
        out(idx[mode - 1], col) = t[off];
    }
    return out;
}

DenseTensor fold(const DenseMatrix& m, std::size_t mode, const std::vector<std::size_t>& shape) {
    check_mode(shape, mode);
    const std::size_t order = shape.size();
    const std::size_t total = shape_product(shape);
    if (m.rows() != shape[mode - 1] || m.rows() * m.cols() != total) {
        throw std::invalid_argument("fold: matrix dimensions inconsistent with shape and mode");
    }
    const auto J = unfold_strides(shape, mode);

    DenseTensor out(shape);
    std::vector<std::size_t> idx(order, 0);
    for (std::size_t off = 0; off < total; ++off) {
        std::size_t rem = off;
        for (std::size_t k = order; k-- > 0;) {
            idx[k] = rem % shape[k];
            rem /= shape[k];
        }
        std::size_t col = 0;
        for (std::size_t k = 0; k < order; ++k) {
            if (k != mode - 1) col += idx[k] * J[k];
        }
        out[off] = m(idx[mode - 1], col);
    }
    return out;
}

DenseTensor mode_product(const DenseTensor& t, const DenseMatrix& m, std::size_t mode) {
    check_mode(t.shape(), mode);
    if (m.cols() != t.shape()[mode - 1]) {
        throw std::invalid_argument("mode_product: matrix cols must equal tensor extent I_n");
    }
    // 1x1 factor is a plain scale; identical arithmetic to the general path.
    if (m.rows() == 1 && m.cols() == 1) {
        DenseTensor out = t;
        const double s = m(0, 0);
        for (double& x : out.data()) x = s * x;
        return out;
    }
    std::vector<std::size_t> out_shape = t.shape();
    out_shape[mode - 1] = m.rows();
    return fold(matmul(m, unfold(t, mode)), mode, out_shape);
}

DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::size_t p = 0; p < a.rows(); ++p)
        for (std::size_t q = 0; q < a.cols(); ++q) {
            const double apq = a(p, q);
            for (std::size_t r = 0; r < b.rows(); ++r)
                for (std::size_t s = 0; s < b.cols(); ++s)
                    out(p * b.rows() + r, q * b.cols() + s) = apq * b(r, s);
        }
    return out;
}

std::vector<double> vectorize(const DenseTensor& t) { return t.data(); }

DenseTensor devectorize(const std::vector<double>& v, const std::vector<std::size_t>& shape) {
    validate_shape(shape);
    if (v.size() != shape_product(shape)) {
        throw std::invalid_argument("devectorize: length does not match shape");
    }
    return DenseTensor(shape, v);
}

}  // namespace metacurv
