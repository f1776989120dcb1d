#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace ieqn::approx {

enum class Activation { ReLU, Tanh, Identity };
enum class OutputSquash { None, UnitInterval };

/// Fully-connected network description. layer_sizes = {in, h1, ..., out};
/// one activation per affine layer. With residual = true the input is added
/// to the last layer's output before the squash (requires in == out). The
/// UnitInterval squash is an elementwise logistic, a smooth bijection of
/// the reals onto (0,1).
struct NetworkSpec {
    std::vector<std::size_t> layer_sizes;
    std::vector<Activation> activations;
    bool residual = false;
    OutputSquash squash = OutputSquash::None;

    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    std::size_t param_count() const;
    std::uint64_t fingerprint() const;
    void validate() const;
};

/// Flat parameter vector. Layout per layer l: weights row-major
/// (out x in), then biases (out).
struct NetworkParams {
    std::vector<double> values;

    bool operator==(const NetworkParams&) const = default;
};

/// Seeded uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
/// weights, zero biases.
NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed);

std::vector<double> forward(const NetworkSpec& spec, const NetworkParams& params,
                            std::span<const double> input);

struct Gradients {
    std::vector<double> wrt_params;
    std::vector<double> wrt_input;
};

/// Exact reverse-mode gradient of dot(output, upstream) with respect to the
/// parameters and the input. Throws DivergenceError on non-finite results.
Gradients gradient(const NetworkSpec& spec, const NetworkParams& params,
                   std::span<const double> input, std::span<const double> upstream);

/// target <- weight*live + (1-weight)*target, elementwise.
void polyak_update(NetworkParams& target, const NetworkParams& live, double weight);

struct OptimizerState {
    enum class Method { SGD, Adam };

    Method method = Method::Adam;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<double> m;  // first-moment buffer (Adam)
    std::vector<double> v;  // second-moment buffer (Adam)
    std::uint64_t t = 0;

    static OptimizerState sgd(double learning_rate, std::size_t param_count);
    static OptimizerState adam(double learning_rate, std::size_t param_count);

    void step(NetworkParams& params, std::span<const double> grad);
};

/// Flat CSV of doubles, one per line, preceded by a header carrying the
/// spec fingerprint; round-trips bit-exactly.
void save_params(const NetworkSpec& spec, const NetworkParams& params, std::ostream& out);
NetworkParams load_params(const NetworkSpec& spec, std::istream& in);

}  // namespace ieqn::approx
