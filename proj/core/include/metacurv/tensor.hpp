#pragma once

#include <cstddef>
#include <vector>

namespace metacurv {

/// Dense order-N tensor with 64-bit real entries.
///
/// Storage is row-major with mode 1 slowest-varying: for shape (I1,I2,I3),
/// element (i1,i2,i3) (0-based) lives at flat offset ((i1*I2)+i2)*I3+i3.
/// vectorize() returns exactly this flat order, which is the convention
/// that makes the Kronecker expansion Mo (x) Mi (x) Mf act on vectorized
/// tensors the same way the chained mode products act on the tensor.
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(std::vector<std::size_t> shape);  // zero-filled
    DenseTensor(std::vector<std::size_t> shape, std::vector<double> data);

    std::size_t order() const { return shape_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    /// Extent of a mode, 1-based (mode 1 .. order()).
    std::size_t extent(std::size_t mode) const;
    std::size_t size() const { return data_.size(); }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// Dense row-major matrix (a second-order tensor kept as its own type
/// because unfoldings and curvature factors are handled as matrices).
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols);  // zero-filled
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

DenseMatrix identity(std::size_t n);
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& m);
std::vector<double> matvec(const DenseMatrix& m, const std::vector<double>& x);

/// Mode-n unfolding. Row i_n holds the mode-n fibers; the column index of
/// element (i1..iN) is sum_{k != n} i_k * J_k with J_k = prod_{m<k, m != n} I_m
/// (0-based form of the usual fiber-ordering formula), so mode 1 varies
/// fastest among the remaining modes.
DenseMatrix unfold(const DenseTensor& t, std::size_t mode);

/// Exact inverse of unfold for the given mode and target shape.
DenseTensor fold(const DenseMatrix& m, std::size_t mode, const std::vector<std::size_t>& shape);

/// n-mode product t x_n m: contracts mode n of t with the columns of m.
/// Result shape replaces I_n by m.rows(); unfold(result, n) == m * unfold(t, n).
DenseTensor mode_product(const DenseTensor& t, const DenseMatrix& m, std::size_t mode);

/// Kronecker product; block (p,q) of the result is a(p,q) * b.
DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b);

/// Flat view of the tensor in storage order (mode 1 slowest).
std::vector<double> vectorize(const DenseTensor& t);
DenseTensor devectorize(const std::vector<double>& v, const std::vector<std::size_t>& shape);

}  // namespace metacurv
