#pragma once

#include <cstddef>

#include "metacurv/tensor.hpp"

namespace metacurv {

/// MC1 keeps the output-channel factor Mo pinned to the identity; MC2
/// learns all three factors.
enum class McVariant { MC1, MC2 };

/// Shape of one parameter tensor as seen by the curvature transform:
/// (Cout, Cin, d) with d = 1 for fully connected weights and biases.
struct LayerShape {
    std::size_t cout = 1;
    std::size_t cin = 1;
    std::size_t d = 1;
};

/// Per-layer factored preconditioner acting on gradient tensors of shape
/// (Cout, Cin, d) as g x_3 Mf x_2 Mi x_1 Mo.
struct CurvatureBlock {
    DenseMatrix mo;  // Cout x Cout
    DenseMatrix mi;  // Cin  x Cin
    DenseMatrix mf;  // d    x d
    McVariant variant = McVariant::MC2;
};

/// Gradients of a scalar loss with respect to the three factors.
struct McParamGrads {
    DenseMatrix mo;
    DenseMatrix mi;
    DenseMatrix mf;
};

inline constexpr std::size_t kMcExpandCap = 4096;

/// Identity-initialized block (the transform starts as a no-op).
CurvatureBlock mc_init(const LayerShape& shape, McVariant variant);

/// g x_3 Mf x_2 Mi x_1 Mo. Order of the three products is immaterial.
DenseTensor mc_transform(const DenseTensor& g, const CurvatureBlock& b);

/// Transpose of the linear map above: u x_3 Mf^T x_2 Mi^T x_1 Mo^T,
/// so that <mc_transform(g,b), u> == <g, mc_adjoint(u,b)>.
DenseTensor mc_adjoint(const DenseTensor& u, const CurvatureBlock& b);

/// Dense Mo (x) Mi (x) Mf. Diagnostic only; throws std::length_error when
/// Cout*Cin*d exceeds size_cap. Production code never materializes this.
DenseMatrix mc_expand(const CurvatureBlock& b, std::size_t size_cap = kMcExpandCap);

/// Factor gradients of a scalar loss whose sensitivity at mc_transform(g,b)
/// is u:
///   dMf = unfold(u x_1 Mo^T x_2 Mi^T, 3) * unfold(g, 3)^T
///   dMi = unfold(u x_1 Mo^T x_3 Mf^T, 2) * unfold(g, 2)^T
///   dMo = unfold(u x_2 Mi^T x_3 Mf^T, 1) * unfold(g, 1)^T
/// For MC1 blocks dMo is returned as zero (Mo is frozen).
McParamGrads mc_param_grads(const DenseTensor& g, const DenseTensor& u, const CurvatureBlock& b);

}  // namespace metacurv
