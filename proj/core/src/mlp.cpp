#include "metacurv/mlp.hpp"

#include <cmath>
#include <stdexcept>

#include "metacurv/rng.hpp"

namespace metacurv {

MLP::MLP(const std::vector<std::size_t>& widths) {
    if (widths.size() < 2) throw std::invalid_argument("MLP: need at least input and output widths");
    for (std::size_t w : widths) {
        if (w == 0) throw std::invalid_argument("MLP: layer widths must be >= 1");
    }
    layers.reserve(widths.size() - 1);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        layers.push_back(LayerPair{DenseTensor({widths[l + 1], widths[l], 1}),
                                   DenseTensor({widths[l + 1], 1, 1})});
    }
}

std::vector<std::size_t> MLP::widths() const {
    std::vector<std::size_t> w;
    if (layers.empty()) return w;
    w.push_back(layers.front().weight.extent(2));
    for (const auto& l : layers) w.push_back(l.weight.extent(1));
    return w;
}

std::size_t MLP::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

double forward(const MLP& net, double x) {
    const std::size_t depth = net.layers.size();
    std::vector<double> act{x};
    std::vector<double> next;
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& w = net.layers[l].weight;
        const auto& b = net.layers[l].bias;
        const std::size_t out = w.extent(1), in = w.extent(2);
        next.assign(out, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            double s = b[o];
            for (std::size_t i = 0; i < in; ++i) s += w[o * in + i] * act[i];
            next[o] = (l + 1 < depth && s <= 0.0) ? 0.0 : s;
        }
        act.swap(next);
    }
    return act[0];
}

double mse_loss(const MLP& net, std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("mse_loss: xs/ys lengths differ");
    if (xs.empty()) throw std::invalid_argument("mse_loss: empty dataset");
    double acc = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double e = forward(net, xs[k]) - ys[k];
        acc += e * e;
    }
    return acc / static_cast<double>(xs.size());
}

ParamStack loss_grad(const MLP& net, std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("loss_grad: xs/ys lengths differ");
    if (xs.empty()) throw std::invalid_argument("loss_grad: empty dataset");

    const std::size_t depth = net.layers.size();
    const std::size_t count = xs.size();
    ParamStack grad = zeros_like(net.layers);

    // Reused per-sample workspace: pre-activations z[l], activations a[l].
    std::vector<std::vector<double>> z(depth), a(depth + 1), delta(depth);
    a[0].resize(1);
    for (std::size_t l = 0; l < depth; ++l) {
        const std::size_t out = net.layers[l].weight.extent(1);
        z[l].resize(out);
        a[l + 1].resize(out);
        delta[l].resize(out);
    }

    for (std::size_t k = 0; k < count; ++k) {
        a[0][0] = xs[k];
        for (std::size_t l = 0; l < depth; ++l) {
            const auto& w = net.layers[l].weight;
            const auto& b = net.layers[l].bias;
            const std::size_t out = w.extent(1), in = w.extent(2);
            for (std::size_t o = 0; o < out; ++o) {
                double s = b[o];
                for (std::size_t i = 0; i < in; ++i) s += w[o * in + i] * a[l][i];
                z[l][o] = s;
                a[l + 1][o] = (l + 1 < depth && s <= 0.0) ? 0.0 : s;
            }
        }

        delta[depth - 1][0] = (2.0 / static_cast<double>(count)) * (a[depth][0] - ys[k]);
        for (std::size_t l = depth; l-- > 0;) {
            const auto& w = net.layers[l].weight;
            const std::size_t out = w.extent(1), in = w.extent(2);
            auto& gw = grad[l].weight;
            auto& gb = grad[l].bias;
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[l][o];
                gb[o] += d;
                for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += d * a[l][i];
            }
            if (l > 0) {
                for (std::size_t i = 0; i < in; ++i) {
                    double s = 0.0;
                    for (std::size_t o = 0; o < out; ++o) s += w[o * in + i] * delta[l][o];
                    delta[l - 1][i] = (z[l - 1][i] > 0.0) ? s : 0.0;
                }
            }
        }
    }
    return grad;
}

std::vector<double> to_param_vector(const ParamStack& params) {
    std::vector<double> flat;
    std::size_t n = 0;
    for (const auto& l : params) n += l.weight.size() + l.bias.size();
    flat.reserve(n);
    for (const auto& l : params) {
        flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
        flat.insert(flat.end(), l.bias.data().begin(), l.bias.data().end());
    }
    return flat;
}

ParamStack from_param_vector(const std::vector<std::size_t>& widths, std::span<const double> flat) {
    MLP shape(widths);
    if (flat.size() != shape.param_count()) {
        throw std::invalid_argument("from_param_vector: length does not match widths");
    }
    std::size_t pos = 0;
    for (auto& l : shape.layers) {
        for (double& x : l.weight.data()) x = flat[pos++];
        for (double& x : l.bias.data()) x = flat[pos++];
    }
    return std::move(shape.layers);
}

std::vector<double> hvp(const MLP& net, std::span<const double> xs, std::span<const double> ys,
                        std::span<const double> v, double h) {
    if (h <= 0.0) throw std::invalid_argument("hvp: step must be positive");
    const std::size_t n = net.param_count();
    if (v.size() != n) throw std::invalid_argument("hvp: vector length does not match parameters");

    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return std::vector<double>(n, 0.0);

    const std::vector<double> theta = to_param_vector(net.layers);
    const auto widths = net.widths();
    std::vector<double> shifted(n);

    MLP plus;
    for (std::size_t i = 0; i < n; ++i) shifted[i] = theta[i] + h * (v[i] / scale);
    plus.layers = from_param_vector(widths, shifted);
    const std::vector<double> gp = to_param_vector(loss_grad(plus, xs, ys));

    MLP minus;
    for (std::size_t i = 0; i < n; ++i) shifted[i] = theta[i] - h * (v[i] / scale);
    minus.layers = from_param_vector(widths, shifted);
    const std::vector<double> gm = to_param_vector(loss_grad(minus, xs, ys));

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = scale * (gp[i] - gm[i]) / (2.0 * h);
        if (!std::isfinite(out[i])) throw std::runtime_error("hvp: non-finite result");
    }
    return out;
}

MLP init_weights(std::uint64_t seed) { return init_weights(kDefaultWidths, seed); }

MLP init_weights(const std::vector<std::size_t>& widths, std::uint64_t seed) {
    MLP net(widths);
    SplitMix64 rng = substream(seed, kStreamInit);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const double fan_in = static_cast<double>(widths[l]);
        const double fan_out = static_cast<double>(widths[l + 1]);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& x : net.layers[l].weight.data()) x = rng.uniform(-bound, bound);
        // biases stay zero
    }
    return net;
}

ParamStack zeros_like(const ParamStack& p) {
    ParamStack out;
    out.reserve(p.size());
    for (const auto& l : p) {
        out.push_back(LayerPair{DenseTensor(l.weight.shape()), DenseTensor(l.bias.shape())});
    }
    return out;
}

void stack_axpy(double a, const ParamStack& x, ParamStack& y) {
    for (std::size_t l = 0; l < y.size(); ++l) {
        for (std::size_t i = 0; i < y[l].weight.size(); ++i) y[l].weight[i] += a * x[l].weight[i];
        for (std::size_t i = 0; i < y[l].bias.size(); ++i) y[l].bias[i] += a * x[l].bias[i];
    }
}

void stack_scale(double a, ParamStack& x) {
    for (auto& l : x) {
        for (double& v : l.weight.data()) v *= a;
        for (double& v : l.bias.data()) v *= a;
    }
}

double stack_dot(const ParamStack& a, const ParamStack& b) {
    double s = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        for (std::size_t i = 0; i < a[l].weight.size(); ++i) s += a[l].weight[i] * b[l].weight[i];
        for (std::size_t i = 0; i < a[l].bias.size(); ++i) s += a[l].bias[i] * b[l].bias[i];
    }
    return s;
}

bool stack_all_finite(const ParamStack& p) {
    for (const auto& l : p) {
        for (double v : l.weight.data())
            if (!std::isfinite(v)) return false;
        for (double v : l.bias.data())
            if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace metacurv
