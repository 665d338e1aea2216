#include "metacurv/curvature.hpp"

#include <stdexcept>
#include <string>

namespace metacurv {

namespace {

void check_block_shape(const DenseTensor& g, const CurvatureBlock& b, const char* what) {
    if (g.order() != 3) {
        throw std::invalid_argument(std::string(what) + ": tensor must be order 3 (Cout,Cin,d)");
    }
    if (b.mo.rows() != b.mo.cols() || b.mi.rows() != b.mi.cols() || b.mf.rows() != b.mf.cols()) {
        throw std::invalid_argument(std::string(what) + ": curvature factors must be square");
    }
    if (b.mo.rows() != g.extent(1) || b.mi.rows() != g.extent(2) || b.mf.rows() != g.extent(3)) {
        throw std::invalid_argument(std::string(what) + ": factor extents do not match tensor shape");
    }
}

}  // namespace

CurvatureBlock mc_init(const LayerShape& shape, McVariant variant) {
    if (shape.cout == 0 || shape.cin == 0 || shape.d == 0) {
        throw std::invalid_argument("mc_init: extents must be >= 1");
    }
    return CurvatureBlock{identity(shape.cout), identity(shape.cin), identity(shape.d), variant};
}

DenseTensor mc_transform(const DenseTensor& g, const CurvatureBlock& b) {
    check_block_shape(g, b, "mc_transform");
    return mode_product(mode_product(mode_product(g, b.mf, 3), b.mi, 2), b.mo, 1);
}

DenseTensor mc_adjoint(const DenseTensor& u, const CurvatureBlock& b) {
    check_block_shape(u, b, "mc_adjoint");
    return mode_product(mode_product(mode_product(u, transpose(b.mf), 3), transpose(b.mi), 2),
                        transpose(b.mo), 1);
}

DenseMatrix mc_expand(const CurvatureBlock& b, std::size_t size_cap) {
    const std::size_t n = b.mo.rows() * b.mi.rows() * b.mf.rows();
    if (n > size_cap) {
        throw std::length_error("mc_expand: expanded size " + std::to_string(n) +
                                " exceeds cap " + std::to_string(size_cap));
    }
    return kron(b.mo, kron(b.mi, b.mf));
}

McParamGrads mc_param_grads(const DenseTensor& g, const DenseTensor& u, const CurvatureBlock& b) {
    check_block_shape(g, b, "mc_param_grads");
    check_block_shape(u, b, "mc_param_grads");

    const DenseMatrix mo_t = transpose(b.mo);
    const DenseMatrix mi_t = transpose(b.mi);
    const DenseMatrix mf_t = transpose(b.mf);

    McParamGrads out;
    out.mf = matmul(unfold(mode_product(mode_product(u, mo_t, 1), mi_t, 2), 3),
                    transpose(unfold(g, 3)));
    out.mi = matmul(unfold(mode_product(mode_product(u, mo_t, 1), mf_t, 3), 2),
                    transpose(unfold(g, 2)));
    if (b.variant == McVariant::MC1) {
        out.mo = DenseMatrix(b.mo.rows(), b.mo.cols());  // frozen factor, zero gradient
    } else {
        out.mo = matmul(unfold(mode_product(mode_product(u, mi_t, 2), mf_t, 3), 1),
                        transpose(unfold(g, 1)));
    }
    return out;
}

}  // namespace metacurv
