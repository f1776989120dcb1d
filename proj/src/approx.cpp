#include "ieqn/approx.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "ieqn/csv.hpp"
#include "ieqn/errors.hpp"
#include "ieqn/rng.hpp"

namespace ieqn::approx {

void NetworkSpec::validate() const {
    if (layer_sizes.size() < 2) {
        throw std::invalid_argument("NetworkSpec: need at least one affine layer");
    }
    for (const std::size_t s : layer_sizes) {
        if (s == 0) throw std::invalid_argument("NetworkSpec: zero-width layer");
    }
    if (activations.size() != layer_sizes.size() - 1) {
        throw std::invalid_argument("NetworkSpec: one activation per affine layer required");
    }
    if (residual && layer_sizes.front() != layer_sizes.back()) {
        throw std::invalid_argument("NetworkSpec: residual requires matching input/output dims");
    }
}

std::size_t NetworkSpec::param_count() const {
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        count += layer_sizes[l + 1] * layer_sizes[l] + layer_sizes[l + 1];
    }
    return count;
}

std::uint64_t NetworkSpec::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto mix = [&h](std::uint64_t x) {
        h ^= x;
        h *= 0x100000001b3ULL;
    };
    for (const std::size_t s : layer_sizes) mix(s);
    mix(0xa5a5);
    for (const Activation a : activations) mix(static_cast<std::uint64_t>(a) + 1);
    mix(residual ? 2 : 1);
    mix(static_cast<std::uint64_t>(squash) + 7);
    return h;
}

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    NetworkParams params{std::vector<double>(spec.param_count(), 0.0)};
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        const std::size_t fan_in = spec.layer_sizes[l];
        const std::size_t fan_out = spec.layer_sizes[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < fan_out * fan_in; ++i) {
            params.values[offset + i] = bound * (2.0 * rng.next_double() - 1.0);
        }
        offset += fan_out * fan_in + fan_out;  // biases stay zero
    }
    return params;
}

namespace {

double activate(Activation a, double z) {
    switch (a) {
        case Activation::ReLU: return z > 0.0 ? z : 0.0;
        case Activation::Tanh: return std::tanh(z);
        case Activation::Identity: return z;
    }
    return z;
}

double activate_grad(Activation a, double z) {
    switch (a) {
        case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Pre-activations per layer plus post-activation outputs; enough state to
/// run the backward pass.
struct ForwardTrace {
    std::vector<std::vector<double>> pre;   // z_l per affine layer
    std::vector<std::vector<double>> post;  // h_0 = input, then h_l
    std::vector<double> pre_squash;
    std::vector<double> output;
};

ForwardTrace forward_trace(const NetworkSpec& spec, const NetworkParams& params,
                           std::span<const double> input) {
    spec.validate();
    if (input.size() != spec.input_dim()) {
        throw std::invalid_argument("forward: input dimension mismatch");
    }
    if (params.values.size() != spec.param_count()) {
        throw std::invalid_argument("forward: parameter layout mismatch");
    }

    ForwardTrace trace;
    trace.post.emplace_back(input.begin(), input.end());
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        const std::size_t in_dim = spec.layer_sizes[l];
        const std::size_t out_dim = spec.layer_sizes[l + 1];
        const double* w = params.values.data() + offset;
        const double* b = params.values.data() + offset + out_dim * in_dim;
        const auto& h = trace.post.back();

        std::vector<double> z(out_dim);
        for (std::size_t o = 0; o < out_dim; ++o) {
            double acc = b[o];
            const double* row = w + o * in_dim;
            for (std::size_t i = 0; i < in_dim; ++i) acc += row[i] * h[i];
            z[o] = acc;
        }
        std::vector<double> hnext(out_dim);
        for (std::size_t o = 0; o < out_dim; ++o) hnext[o] = activate(spec.activations[l], z[o]);
        trace.pre.push_back(std::move(z));
        trace.post.push_back(std::move(hnext));
        offset += out_dim * in_dim + out_dim;
    }

    trace.pre_squash = trace.post.back();
    if (spec.residual) {
        for (std::size_t i = 0; i < trace.pre_squash.size(); ++i) trace.pre_squash[i] += input[i];
    }
    trace.output = trace.pre_squash;
    if (spec.squash == OutputSquash::UnitInterval) {
        for (double& y : trace.output) y = sigmoid(y);
    }
    return trace;
}

}  // namespace

std::vector<double> forward(const NetworkSpec& spec, const NetworkParams& params,
                            std::span<const double> input) {
    return forward_trace(spec, params, input).output;
}

Gradients gradient(const NetworkSpec& spec, const NetworkParams& params,
                   std::span<const double> input, std::span<const double> upstream) {
    const ForwardTrace trace = forward_trace(spec, params, input);
    if (upstream.size() != spec.output_dim()) {
        throw std::invalid_argument("gradient: upstream dimension mismatch");
    }

    Gradients grads{std::vector<double>(params.values.size(), 0.0),
                    std::vector<double>(input.size(), 0.0)};

    std::vector<double> delta(upstream.begin(), upstream.end());
    if (spec.squash == OutputSquash::UnitInterval) {
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double y = trace.output[i];
            delta[i] *= y * (1.0 - y);
        }
    }
    if (spec.residual) {
        for (std::size_t i = 0; i < delta.size(); ++i) grads.wrt_input[i] += delta[i];
    }

    // offsets of each affine layer in the flat vector
    const std::size_t n_layers = spec.layer_sizes.size() - 1;
    std::vector<std::size_t> offsets(n_layers);
    std::size_t offset = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        offsets[l] = offset;
        offset += spec.layer_sizes[l + 1] * spec.layer_sizes[l] + spec.layer_sizes[l + 1];
    }

    for (std::size_t li = n_layers; li-- > 0;) {
        const std::size_t in_dim = spec.layer_sizes[li];
        const std::size_t out_dim = spec.layer_sizes[li + 1];
        const double* w = params.values.data() + offsets[li];
        double* gw = grads.wrt_params.data() + offsets[li];
        double* gb = grads.wrt_params.data() + offsets[li] + out_dim * in_dim;
        const auto& h_in = trace.post[li];

        for (std::size_t o = 0; o < out_dim; ++o) {
            delta[o] *= activate_grad(spec.activations[li], trace.pre[li][o]);
        }
        std::vector<double> delta_prev(in_dim, 0.0);
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double d = delta[o];
            gb[o] += d;
            double* grow = gw + o * in_dim;
            const double* wrow = w + o * in_dim;
            for (std::size_t i = 0; i < in_dim; ++i) {
                grow[i] += d * h_in[i];
                delta_prev[i] += d * wrow[i];
            }
        }
        delta = std::move(delta_prev);
    }
    for (std::size_t i = 0; i < input.size(); ++i) grads.wrt_input[i] += delta[i];

    for (const double g : grads.wrt_params) {
        if (!std::isfinite(g)) throw DivergenceError("gradient: non-finite parameter gradient", 0);
    }
    return grads;
}

void polyak_update(NetworkParams& target, const NetworkParams& live, double weight) {
    if (target.values.size() != live.values.size()) {
        throw std::invalid_argument("polyak_update: layout mismatch");
    }
    if (!(weight >= 0.0 && weight <= 1.0)) {
        throw std::invalid_argument("polyak_update: weight must lie in [0,1]");
    }
    for (std::size_t i = 0; i < target.values.size(); ++i) {
        target.values[i] = weight * live.values[i] + (1.0 - weight) * target.values[i];
    }
}

OptimizerState OptimizerState::sgd(double learning_rate, std::size_t param_count) {
    OptimizerState s;
    s.method = Method::SGD;
    s.learning_rate = learning_rate;
    s.m.assign(param_count, 0.0);
    s.v.assign(param_count, 0.0);
    return s;
}

OptimizerState OptimizerState::adam(double learning_rate, std::size_t param_count) {
    OptimizerState s;
    s.method = Method::Adam;
    s.learning_rate = learning_rate;
    s.m.assign(param_count, 0.0);
    s.v.assign(param_count, 0.0);
    return s;
}

void OptimizerState::step(NetworkParams& params, std::span<const double> grad) {
    if (grad.size() != params.values.size() || m.size() != params.values.size()) {
        throw std::invalid_argument("OptimizerState: buffer layout mismatch");
    }
    ++t;
    if (method == Method::SGD) {
        for (std::size_t i = 0; i < grad.size(); ++i) {
            params.values[i] -= learning_rate * grad[i];
        }
        return;
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < grad.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params.values[i] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
    }
}

void save_params(const NetworkSpec& spec, const NetworkParams& params, std::ostream& out) {
    out << "fingerprint," << spec.fingerprint() << '\n';
    for (const double v : params.values) out << format_double(v) << '\n';
}

NetworkParams load_params(const NetworkSpec& spec, std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("params CSV: empty stream");
    const auto header = split_csv_line(line);
    if (header.size() != 2 || header[0] != "fingerprint") {
        throw ConfigError("params CSV: missing fingerprint header");
    }
    if (header[1] != std::to_string(spec.fingerprint())) {
        throw ConfigError("params CSV: fingerprint does not match the network spec");
    }
    NetworkParams params;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        params.values.push_back(parse_double(line));
    }
    if (params.values.size() != spec.param_count()) {
        throw ConfigError("params CSV: wrong parameter count");
    }
    return params;
}

}  // namespace ieqn::approx
