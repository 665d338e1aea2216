#include "metacurv/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "metacurv/curvature.hpp"
#include "metacurv/inner_rules.hpp"
#include "metacurv/mlp.hpp"
#include "metacurv/rng.hpp"
#include "metacurv/trainer.hpp"

namespace metacurv {

namespace {

constexpr std::uint64_t kStreamDiag = 0x64696167;  // independent of training streams

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    return scale > 0.0 ? diff / scale : diff;
}

DenseTensor random_tensor(SplitMix64& rng, const std::vector<std::size_t>& shape) {
    DenseTensor t(shape);
    for (double& x : t.data()) x = rng.uniform(-1.0, 1.0);
    return t;
}

DenseMatrix random_matrix(SplitMix64& rng, std::size_t rows, std::size_t cols) {
    DenseMatrix m(rows, cols);
    for (double& x : m.data()) x = rng.uniform(-1.0, 1.0);
    return m;
}

CurvatureBlock random_block(SplitMix64& rng, const std::vector<std::size_t>& shape,
                            McVariant variant = McVariant::MC2) {
    CurvatureBlock b;
    b.mo = random_matrix(rng, shape[0], shape[0]);
    b.mi = random_matrix(rng, shape[1], shape[1]);
    b.mf = random_matrix(rng, shape[2], shape[2]);
    b.variant = variant;
    return b;
}

MLP random_net(SplitMix64& rng, const std::vector<std::size_t>& widths) {
    MLP net = init_weights(widths, rng.next());
    // nonzero biases so gradient checks exercise every path
    for (auto& l : net.layers) {
        for (double& x : l.bias.data()) x = rng.uniform(-0.5, 0.5);
    }
    return net;
}

Episode random_episode(SplitMix64& rng, std::size_t k_shot, std::size_t n_eval) {
    const SineTask task = sample_task(rng);
    return sample_episode(task, k_shot, n_eval, rng);
}

// Central finite differences of a scalar function of the parameters.
template <typename LossFn>
std::vector<double> fd_grad(const std::vector<double>& theta, LossFn loss) {
    std::vector<double> g(theta.size());
    std::vector<double> probe = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double h = 1e-5 * (1.0 + std::abs(theta[i]));
        probe[i] = theta[i] + h;
        const double lp = loss(probe);
        probe[i] = theta[i] - h;
        const double lm = loss(probe);
        probe[i] = theta[i];
        g[i] = (lp - lm) / (2.0 * h);
    }
    return g;
}

DiagResult check(std::string name, double err, double tol) {
    return DiagResult{std::move(name), err, tol, err <= tol};
}

}  // namespace

std::vector<DiagResult> diag_algebra(std::uint64_t seed, std::size_t instances) {
    SplitMix64 rng = substream(seed, kStreamDiag, 1);
    double unfold_law = 0.0, commute = 0.0, kron_equiv = 0.0, expanded = 0.0;

    for (std::size_t it = 0; it < instances; ++it) {
        // mode-product / unfolding law on a random order-2..4 tensor
        {
            const std::size_t order = 2 + rng.next() % 3;
            std::vector<std::size_t> shape(order);
            for (auto& e : shape) e = 1 + rng.next() % 4;
            const std::size_t mode = 1 + rng.next() % order;
            const DenseTensor t = random_tensor(rng, shape);
            const DenseMatrix m = random_matrix(rng, 1 + rng.next() % 4, shape[mode - 1]);
            const DenseTensor prod = mode_product(t, m, mode);
            unfold_law = std::max(
                unfold_law, rel_err(unfold(prod, mode).data(), matmul(m, unfold(t, mode)).data()));
        }

        // distinct-mode commutativity and the Kronecker expansion on (2,3,4)
        const std::vector<std::size_t> shape{2, 3, 4};
        const DenseTensor g = random_tensor(rng, shape);
        const CurvatureBlock b = random_block(rng, shape);
        const DenseTensor ref = mc_transform(g, b);
        const int orders[6][3] = {{1, 2, 3}, {1, 3, 2}, {2, 1, 3}, {2, 3, 1}, {3, 1, 2}, {3, 2, 1}};
        for (const auto& ord : orders) {
            DenseTensor cur = g;
            for (int mode : ord) {
                const DenseMatrix& m = mode == 1 ? b.mo : (mode == 2 ? b.mi : b.mf);
                cur = mode_product(cur, m, static_cast<std::size_t>(mode));
            }
            commute = std::max(commute, rel_err(cur.data(), ref.data()));
        }

        kron_equiv = std::max(kron_equiv,
                              rel_err(vectorize(ref), matvec(mc_expand(b), vectorize(g))));

        const DenseMatrix mo_hat = kron(b.mo, kron(identity(3), identity(4)));
        const DenseMatrix mi_hat = kron(identity(2), kron(b.mi, identity(4)));
        const DenseMatrix mf_hat = kron(identity(2), kron(identity(3), b.mf));
        const DenseMatrix* hats[3] = {&mo_hat, &mi_hat, &mf_hat};
        const std::vector<double> vec = vectorize(g);
        std::vector<double> expanded_ref;
        for (const auto& ord : orders) {
            std::vector<double> cur = vec;
            for (int idx : ord) cur = matvec(*hats[idx - 1], cur);
            if (expanded_ref.empty()) {
                expanded_ref = cur;
            } else {
                expanded = std::max(expanded, rel_err(cur, expanded_ref));
            }
        }
    }

    return {check("mode-product unfolding law", unfold_law, 1e-12),
            check("distinct-mode commutativity", commute, 1e-12),
            check("kronecker equivalence", kron_equiv, 1e-12),
            check("expanded-matrix commutativity", expanded, 1e-12)};
}

std::vector<DiagResult> diag_gradients(std::uint64_t seed) {
    SplitMix64 rng = substream(seed, kStreamDiag, 2);
    std::vector<DiagResult> results;

    // model loss gradient vs finite differences
    {
        double err = 0.0;
        for (int it = 0; it < 20; ++it) {
            const MLP net = random_net(rng, {1, 4, 3, 1});
            const Episode ep = random_episode(rng, 6, 6);
            const auto widths = net.widths();
            const std::vector<double> theta = to_param_vector(net.layers);
            const std::vector<double> analytic =
                to_param_vector(loss_grad(net, ep.train_x, ep.train_y));
            const std::vector<double> fd = fd_grad(theta, [&](const std::vector<double>& p) {
                MLP probe;
                probe.layers = from_param_vector(widths, p);
                return mse_loss(probe, ep.train_x, ep.train_y);
            });
            err = std::max(err, rel_err(analytic, fd));
        }
        results.push_back(check("loss gradient vs finite differences", err, 1e-6));
    }

    // curvature factor gradients vs finite differences
    {
        double err = 0.0;
        for (const auto& shape : {std::vector<std::size_t>{2, 3, 4}, {5, 4, 1}}) {
            const DenseTensor g = random_tensor(rng, shape);
            const DenseTensor u = random_tensor(rng, shape);
            CurvatureBlock b = random_block(rng, shape);
            const McParamGrads grads = mc_param_grads(g, u, b);
            auto objective = [&](const CurvatureBlock& blk) {
                const DenseTensor t = mc_transform(g, blk);
                double s = 0.0;
                for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * u[i];
                return s;
            };
            auto fd_matrix = [&](DenseMatrix CurvatureBlock::*member) {
                DenseMatrix out((b.*member).rows(), (b.*member).cols());
                CurvatureBlock probe = b;
                for (std::size_t i = 0; i < out.size(); ++i) {
                    const double h = 1e-5;
                    (probe.*member).data()[i] = (b.*member).data()[i] + h;
                    const double fp = objective(probe);
                    (probe.*member).data()[i] = (b.*member).data()[i] - h;
                    const double fm = objective(probe);
                    (probe.*member).data()[i] = (b.*member).data()[i];
                    out.data()[i] = (fp - fm) / (2.0 * h);
                }
                return out;
            };
            err = std::max(err, rel_err(grads.mo.data(), fd_matrix(&CurvatureBlock::mo).data()));
            err = std::max(err, rel_err(grads.mi.data(), fd_matrix(&CurvatureBlock::mi).data()));
            err = std::max(err, rel_err(grads.mf.data(), fd_matrix(&CurvatureBlock::mf).data()));
        }
        results.push_back(check("curvature factor gradients vs finite differences", err, 1e-6));
    }

    // exact one-step meta-gradient vs composite finite differences, all rules
    {
        double err = 0.0;
        const std::vector<std::size_t> widths{1, 4, 2, 1};
        for (int which = 0; which < 4; ++which) {
            const MLP net = random_net(rng, widths);
            const Episode ep = random_episode(rng, 5, 7);
            InnerRule rule;
            switch (which) {
                case 0: rule = FixedLR{0.05}; break;
                case 1: {
                    PerCoordinate pc{zeros_like(net.layers)};
                    for (auto& l : pc.alpha) {
                        for (double& x : l.weight.data()) x = rng.uniform(0.01, 0.1);
                        for (double& x : l.bias.data()) x = rng.uniform(0.01, 0.1);
                    }
                    rule = std::move(pc);
                    break;
                }
                case 2: {
                    PerLayer pl;
                    for (std::size_t l = 0; l < net.layers.size(); ++l) {
                        pl.alpha.push_back(rng.uniform(0.01, 0.1));
                    }
                    rule = std::move(pl);
                    break;
                }
                default: {
                    MetaCurv mc;
                    mc.alpha = 0.05;
                    mc.variant = McVariant::MC2;
                    BlockStack stack;
                    for (const auto& l : net.layers) {
                        CurvatureBlock wb = random_block(
                            rng, {l.weight.extent(1), l.weight.extent(2), l.weight.extent(3)});
                        CurvatureBlock bb = random_block(
                            rng, {l.bias.extent(1), l.bias.extent(2), l.bias.extent(3)});
                        stack.push_back(BlockPair{std::move(wb), std::move(bb)});
                    }
                    mc.steps = {std::move(stack)};
                    rule = std::move(mc);
                }
            }
            const std::vector<double> exact =
                to_param_vector(meta_grad_theta(net, ep, rule, MetaGradMode::Exact));
            const std::vector<double> fd =
                fd_grad(to_param_vector(net.layers), [&](const std::vector<double>& p) {
                    MLP probe;
                    probe.layers = from_param_vector(widths, p);
                    const ParamStack g = loss_grad(probe, ep.train_x, ep.train_y);
                    MLP adapted;
                    adapted.layers = inner_update(probe.layers, g, rule);
                    return mse_loss(adapted, ep.eval_x, ep.eval_y);
                });
            err = std::max(err, rel_err(exact, fd));
        }
        results.push_back(check("one-step meta-gradient vs composite finite differences", err, 1e-4));
    }

    // HVP against the exact Hessian of a linear least-squares model
    {
        double err = 0.0;
        for (int it = 0; it < 10; ++it) {
            MLP net({1, 1});
            net.layers[0].weight[0] = rng.uniform(-1.0, 1.0);
            net.layers[0].bias[0] = rng.uniform(-1.0, 1.0);
            const Episode ep = random_episode(rng, 8, 8);
            const double n = static_cast<double>(ep.train_x.size());
            double sxx = 0.0, sx = 0.0;
            for (double x : ep.train_x) {
                sxx += x * x;
                sx += x;
            }
            // L = (1/K) sum (w x + b - y)^2; constant Hessian in (w, b)
            const double h00 = 2.0 * sxx / n, h01 = 2.0 * sx / n, h11 = 2.0;
            const std::vector<double> v{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
            const std::vector<double> expect{h00 * v[0] + h01 * v[1], h01 * v[0] + h11 * v[1]};
            const std::vector<double> got = hvp(net, ep.train_x, ep.train_y, v, 1e-4);
            err = std::max(err, rel_err(got, expect));
        }
        results.push_back(check("hvp vs analytic least-squares hessian", err, 1e-8));
    }

    return results;
}

std::vector<DiagResult> diag_eq6(std::uint64_t seed) {
    SplitMix64 rng = substream(seed, kStreamDiag, 3);
    double outer_err = 0.0, fd_err = 0.0;

    for (int it = 0; it < 5; ++it) {
        const MLP net = random_net(rng, {1, 3, 1});
        const std::size_t p = net.param_count();
        const Episode ep = random_episode(rng, 5, 6);
        const double alpha = 0.05;
        DenseMatrix m = random_matrix(rng, p, p);

        const std::vector<double> theta = to_param_vector(net.layers);
        const std::vector<double> g = to_param_vector(loss_grad(net, ep.train_x, ep.train_y));
        const std::vector<double> mg = matvec(m, g);
        std::vector<double> adapted_theta(p);
        for (std::size_t i = 0; i < p; ++i) adapted_theta[i] = theta[i] - alpha * mg[i];
        MLP adapted;
        adapted.layers = from_param_vector(net.widths(), adapted_theta);
        const std::vector<double> u = to_param_vector(loss_grad(adapted, ep.eval_x, ep.eval_y));

        // the whole parameter vector as one (p,1,1) tensor with Mo = M
        CurvatureBlock block{m, identity(1), identity(1), McVariant::MC2};
        DenseTensor g_t({p, 1, 1}, g);
        DenseTensor u_t({p, 1, 1}, u);
        for (double& x : u_t.data()) x *= -alpha;
        const DenseMatrix assembled = mc_param_grads(g_t, u_t, block).mo;

        DenseMatrix outer(p, p);
        for (std::size_t r = 0; r < p; ++r)
            for (std::size_t c = 0; c < p; ++c) outer(r, c) = -alpha * u[r] * g[c];
        outer_err = std::max(outer_err, rel_err(assembled.data(), outer.data()));

        // finite differences of L_val as a function of the matrix entries
        DenseMatrix fd(p, p);
        DenseMatrix probe = m;
        auto loss_of_m = [&](const DenseMatrix& mm) {
            const std::vector<double> mmg = matvec(mm, g);
            std::vector<double> th(p);
            for (std::size_t i = 0; i < p; ++i) th[i] = theta[i] - alpha * mmg[i];
            MLP a;
            a.layers = from_param_vector(net.widths(), th);
            return mse_loss(a, ep.eval_x, ep.eval_y);
        };
        for (std::size_t i = 0; i < fd.size(); ++i) {
            const double h = 1e-5;
            probe.data()[i] = m.data()[i] + h;
            const double fp = loss_of_m(probe);
            probe.data()[i] = m.data()[i] - h;
            const double fm = loss_of_m(probe);
            probe.data()[i] = m.data()[i];
            fd.data()[i] = (fp - fm) / (2.0 * h);
        }
        fd_err = std::max(fd_err, rel_err(assembled.data(), fd.data()));
    }

    return {check("full-matrix meta-gradient vs outer product", outer_err, 1e-12),
            check("full-matrix meta-gradient vs finite differences", fd_err, 1e-6)};
}

std::vector<DiagResult> diag_eq8(std::uint64_t seed) {
    SplitMix64 rng = substream(seed, kStreamDiag, 4);
    double accum_err = 0.0, decomp_err = 0.0;
    std::size_t monotonicity_violations = 0;

    for (int it = 0; it < 20; ++it) {
        const MLP net = random_net(rng, {1, 4, 1});
        const std::size_t p = net.param_count();
        const DenseMatrix m0 = identity(p);
        std::vector<Episode> tasks;
        for (int i = 0; i < 3; ++i) tasks.push_back(random_episode(rng, 5, 5));
        const Episode new_task = random_episode(rng, 5, 5);
        const double beta = 0.5;

        double prev_residual = 0.0;
        for (int decade = 0; decade < 4; ++decade) {
            const double alpha = 0.5 / std::pow(10.0, decade);
            const SnnReport report = snn_decompose(net, m0, tasks, new_task, alpha, beta);
            decomp_err = std::max(decomp_err, report.eq_decomp_rel_error);

            // SGD accumulation: M_final - M_0 == alpha*beta * sum u g^T
            double diff = 0.0, scale = 0.0;
            for (std::size_t i = 0; i < report.m_final.size(); ++i) {
                const double lhs = report.m_final.data()[i] - m0.data()[i];
                const double rhs = alpha * beta * report.outer_sum.data()[i];
                diff = std::max(diff, std::abs(lhs - rhs));
                scale = std::max({scale, std::abs(lhs), std::abs(rhs), 1.0});
            }
            accum_err = std::max(accum_err, diff / scale);

            if (decade > 0 && report.taylor_residual >= prev_residual) {
                ++monotonicity_violations;
            }
            prev_residual = report.taylor_residual;
        }
    }

    return {check("sgd accumulation on full matrix", accum_err, 1e-12),
            check("similarity decomposition identity", decomp_err, 1e-10),
            check("taylor residual monotone in alpha",
                  static_cast<double>(monotonicity_violations), 0.0)};
}

}  // namespace metacurv
