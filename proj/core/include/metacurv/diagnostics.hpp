#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace metacurv {

struct DiagResult {
    std::string name;
    double max_err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

/// Mode-product/unfolding law, distinct-mode commutativity, Kronecker
/// equivalence and expanded-matrix commutativity on random instances.
std::vector<DiagResult> diag_algebra(std::uint64_t seed, std::size_t instances = 200);

/// Analytic gradients against finite differences: model loss gradient,
/// curvature factor gradients, one-step meta-gradients for all rule types,
/// and the Hessian-vector product against the exact least-squares Hessian.
std::vector<DiagResult> diag_gradients(std::uint64_t seed);

/// Full-matrix meta-gradient: outer-product form and finite differences.
std::vector<DiagResult> diag_eq6(std::uint64_t seed);

/// Soft nearest-neighbor decomposition: SGD accumulation on a full matrix,
/// exactness of the similarity-weighted expansion, and the first-order
/// substitution residual shrinking with the inner step size.
std::vector<DiagResult> diag_eq8(std::uint64_t seed);

}  // namespace metacurv
