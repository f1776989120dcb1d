#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ieqn {

/// Bad user-facing configuration (unknown key, unparsable value, bad path).
/// The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical computation produced non-finite values (diverged learning
/// rate, exploding parameters). Carries the step at which it was detected.
/// The CLI maps this to exit code 3.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

    std::size_t step() const { return step_; }

protected:
    struct Preformatted {};
    DivergenceError(Preformatted, const std::string& what, std::size_t step)
        : std::runtime_error(what), step_(step) {}

private:
    std::size_t step_;
};

}  // namespace ieqn
