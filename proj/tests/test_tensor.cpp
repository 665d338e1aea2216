#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <stdexcept>

#include "metacurv/rng.hpp"
#include "metacurv/tensor.hpp"
#include "oracles.hpp"

using namespace metacurv;

namespace {

DenseTensor iota_tensor(const std::vector<std::size_t>& shape) {
    DenseTensor t(shape);
    std::iota(t.data().begin(), t.data().end(), 1.0);
    return t;
}

}  // namespace

TEST_CASE("tensor construction validates shape and data") {
    CHECK_THROWS_AS(DenseTensor({}), std::invalid_argument);
    CHECK_THROWS_AS(DenseTensor({2, 0, 3}), std::invalid_argument);
    CHECK_THROWS_AS(DenseTensor({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
    const DenseTensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.order() == 2);
    CHECK(t.extent(2) == 3);
    CHECK_THROWS_AS(t.extent(3), std::invalid_argument);
}

TEST_CASE("unfolding a matrix at mode 1 is the matrix itself") {
    const DenseTensor t = iota_tensor({2, 2});
    const DenseMatrix m = unfold(t, 1);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 2);
    // column j indexes i2
    CHECK(m(0, 0) == 1.0);
    CHECK(m(0, 1) == 2.0);
    CHECK(m(1, 0) == 3.0);
    CHECK(m(1, 1) == 4.0);
}

TEST_CASE("mode-3 unfolding of a (2,3,2) tensor matches the index formula") {
    const DenseTensor t = iota_tensor({2, 3, 2});
    const DenseMatrix got = unfold(t, 3);
    const DenseMatrix expect = oracles::unfold(t, 3);
    CHECK(got.rows() == 2);
    CHECK(got.cols() == 6);
    for (std::size_t r = 0; r < got.rows(); ++r)
        for (std::size_t c = 0; c < got.cols(); ++c) CHECK(got(r, c) == expect(r, c));
    // columns are the mode-3 fibers t[i1,i2,:], mode 1 varying fastest
    CHECK(got(0, 0) == 1.0);
    CHECK(got(1, 0) == 2.0);
    CHECK(got(0, 1) == 7.0);
    CHECK(got(1, 1) == 8.0);
    CHECK(got(0, 2) == 3.0);
    CHECK(got(1, 2) == 4.0);
}

TEST_CASE("unfold matches the formula oracle on random shapes and modes") {
    SplitMix64 rng = substream(11, 0);
    for (int it = 0; it < 50; ++it) {
        const std::size_t order = 1 + rng.next() % 4;
        std::vector<std::size_t> shape(order);
        for (auto& e : shape) e = 1 + rng.next() % 4;
        const DenseTensor t = oracles::random_tensor(rng, shape);
        for (std::size_t n = 1; n <= order; ++n) {
            const DenseMatrix a = unfold(t, n);
            const DenseMatrix b = oracles::unfold(t, n);
            REQUIRE(a.rows() == b.rows());
            REQUIRE(a.cols() == b.cols());
            for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
        }
    }
}

TEST_CASE("fold inverts unfold exactly") {
    SplitMix64 rng = substream(12, 0);
    for (const auto& shape :
         {std::vector<std::size_t>{3}, std::vector<std::size_t>{2, 3},
          std::vector<std::size_t>{2, 3, 4}}) {
        const DenseTensor t = oracles::random_tensor(rng, shape);
        for (std::size_t n = 1; n <= shape.size(); ++n) {
            const DenseTensor back = fold(unfold(t, n), n, shape);
            REQUIRE(back.shape() == shape);
            for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
        }
    }
}

TEST_CASE("fold of a 1xK matrix at mode 1 keeps the data") {
    const DenseMatrix m(1, 4, {1.0, 2.0, 3.0, 4.0});
    const DenseTensor t = fold(m, 1, {1, 4});
    CHECK(t.data() == m.data());
}

TEST_CASE("fold from the brute-force unfolding recovers the tensor") {
    const DenseTensor t = iota_tensor({2, 3, 2});
    const DenseTensor back = fold(oracles::unfold(t, 3), 3, {2, 3, 2});
    CHECK(back.data() == t.data());
}

TEST_CASE("fold and unfold reject inconsistent arguments") {
    const DenseTensor t = iota_tensor({2, 3, 2});
    CHECK_THROWS_AS(unfold(t, 0), std::invalid_argument);
    CHECK_THROWS_AS(unfold(t, 4), std::invalid_argument);
    CHECK_THROWS_AS(fold(DenseMatrix(3, 4), 3, {2, 3, 2}), std::invalid_argument);
    CHECK_THROWS_AS(fold(DenseMatrix(2, 5), 3, {2, 3, 2}), std::invalid_argument);
}

TEST_CASE("mode product with the identity is the tensor itself") {
    SplitMix64 rng = substream(13, 0);
    const DenseTensor t = oracles::random_tensor(rng, {2, 3, 4});
    for (std::size_t n = 1; n <= 3; ++n) {
        const DenseTensor got = mode_product(t, identity(t.shape()[n - 1]), n);
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(got[i] == t[i]);
    }
}

TEST_CASE("mode product matches the direct-summation oracle") {
    SplitMix64 rng = substream(14, 0);
    const DenseTensor t = oracles::random_tensor(rng, {2, 2, 2});
    const DenseMatrix m = oracles::random_matrix(rng, 2, 2);
    for (std::size_t n = 1; n <= 3; ++n) {
        CHECK(oracles::rel_err(mode_product(t, m, n), oracles::mode_product(t, m, n)) <= 1e-15);
    }
    // rectangular factor too
    const DenseMatrix wide = oracles::random_matrix(rng, 5, 2);
    CHECK(oracles::rel_err(mode_product(t, wide, 2), oracles::mode_product(t, wide, 2)) <= 1e-15);
    CHECK_THROWS_AS(mode_product(t, DenseMatrix(2, 3), 1), std::invalid_argument);
}

TEST_CASE("unfolding law: unfold(t x_n m, n) == m * unfold(t, n)") {
    SplitMix64 rng = substream(15, 0);
    double worst = 0.0;
    for (int it = 0; it < 200; ++it) {
        const std::size_t order = 2 + rng.next() % 3;
        std::vector<std::size_t> shape(order);
        for (auto& e : shape) e = 1 + rng.next() % 4;
        const std::size_t n = 1 + rng.next() % order;
        const DenseTensor t = oracles::random_tensor(rng, shape);
        const DenseMatrix m = oracles::random_matrix(rng, 1 + rng.next() % 4, shape[n - 1]);
        worst = std::max(worst, oracles::rel_err(unfold(mode_product(t, m, n), n),
                                                 matmul(m, unfold(t, n))));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("distinct-mode products commute") {
    SplitMix64 rng = substream(16, 0);
    double worst = 0.0;
    for (int it = 0; it < 200; ++it) {
        const DenseTensor t = oracles::random_tensor(rng, {2, 3, 4});
        const DenseMatrix mo = oracles::random_matrix(rng, 2, 2);
        const DenseMatrix mi = oracles::random_matrix(rng, 3, 3);
        const DenseMatrix mf = oracles::random_matrix(rng, 4, 4);
        const DenseTensor a = mode_product(mode_product(mode_product(t, mf, 3), mi, 2), mo, 1);
        const DenseTensor b = mode_product(mode_product(mode_product(t, mo, 1), mi, 2), mf, 3);
        const DenseTensor c = mode_product(mode_product(mode_product(t, mi, 2), mf, 3), mo, 1);
        worst = std::max({worst, oracles::rel_err(a, b), oracles::rel_err(a, c)});
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("kron basics") {
    SplitMix64 rng = substream(17, 0);
    const DenseMatrix b = oracles::random_matrix(rng, 3, 2);
    const DenseMatrix k1 = kron(identity(1), b);
    CHECK(k1.rows() == 3);
    CHECK(k1.cols() == 2);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(k1.data()[i] == b.data()[i]);

    CHECK(kron(DenseMatrix(2, 3), DenseMatrix(4, 5)).rows() == 8);
    CHECK(kron(DenseMatrix(2, 3), DenseMatrix(4, 5)).cols() == 15);

    const DenseMatrix a(2, 2, {1, 2, 3, 4});
    const DenseMatrix x(2, 2, {0, 1, 1, 0});
    const DenseMatrix got = kron(a, x);
    const DenseMatrix expect = oracles::kron(a, x);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.data()[i] == expect.data()[i]);
    CHECK(got(0, 1) == 1.0);
    CHECK(got(0, 3) == 2.0);
    CHECK(got(2, 1) == 3.0);
    CHECK(got(3, 2) == 4.0);
}

TEST_CASE("vectorize and devectorize") {
    SplitMix64 rng = substream(18, 0);
    const DenseTensor t = oracles::random_tensor(rng, {2, 3, 4});
    const DenseTensor back = devectorize(vectorize(t), t.shape());
    CHECK(back.data() == t.data());

    const DenseTensor flat = oracles::random_tensor(rng, {1, 1, 7});
    CHECK(vectorize(flat) == flat.data());

    CHECK_THROWS_AS(devectorize({1.0, 2.0}, {3}), std::invalid_argument);
}

TEST_CASE("kronecker equivalence of the factored transform") {
    SplitMix64 rng = substream(19, 0);
    double worst = 0.0;
    for (int it = 0; it < 200; ++it) {
        const DenseTensor t = oracles::random_tensor(rng, {2, 3, 4});
        const DenseMatrix mo = oracles::random_matrix(rng, 2, 2);
        const DenseMatrix mi = oracles::random_matrix(rng, 3, 3);
        const DenseMatrix mf = oracles::random_matrix(rng, 4, 4);
        const DenseTensor lhs = mode_product(mode_product(mode_product(t, mf, 3), mi, 2), mo, 1);
        const std::vector<double> rhs =
            matvec(oracles::kron(mo, oracles::kron(mi, mf)), vectorize(t));
        worst = std::max(worst, oracles::rel_err(vectorize(lhs), rhs));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("expanded factor matrices commute in every order") {
    SplitMix64 rng = substream(20, 0);
    double worst = 0.0;
    for (int it = 0; it < 50; ++it) {
        const DenseTensor t = oracles::random_tensor(rng, {2, 3, 4});
        const DenseMatrix mo = oracles::random_matrix(rng, 2, 2);
        const DenseMatrix mi = oracles::random_matrix(rng, 3, 3);
        const DenseMatrix mf = oracles::random_matrix(rng, 4, 4);
        const DenseMatrix mo_hat = oracles::kron(mo, oracles::kron(identity(3), identity(4)));
        const DenseMatrix mi_hat = oracles::kron(identity(2), oracles::kron(mi, identity(4)));
        const DenseMatrix mf_hat = oracles::kron(identity(2), oracles::kron(identity(3), mf));
        const DenseMatrix* hats[3] = {&mo_hat, &mi_hat, &mf_hat};
        const int orders[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
        std::vector<double> ref;
        for (const auto& ord : orders) {
            std::vector<double> cur = vectorize(t);
            for (int idx : ord) cur = matvec(*hats[idx], cur);
            if (ref.empty()) {
                ref = cur;
            } else {
                worst = std::max(worst, oracles::rel_err(cur, ref));
            }
        }
    }
    CHECK(worst <= 1e-12);
}
