#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ieqn/rng.hpp"

namespace ieqn::dist {

/// Finite-support real distribution: ascending atoms with positive weights
/// summing to one. Immutable after construction; all queries are pure and
/// safe to call from multiple threads.
///
/// Conventions (fixed once, used by every caller):
///   - cdf is the right-continuous step function F(z) = P(Z <= z).
///   - quantile(alpha) is the generalized inverse inf{z : F(z) >= alpha},
///     so results are always atoms.
///   - expectile(tau) is the root of the asymmetric-L2 first-order condition
///     g(e) = tau*E[(Z-e)+] - (1-tau)*E[(e-Z)+], found by bisection on the
///     support hull (absolute tolerance 1e-10, max 200 iterations).
///   - expectile_inverse(v) solves the same first-order condition for tau at
///     fixed value v; the condition is linear in tau, so the root is exact:
///     tau = B/(A+B) with A = E[(Z-v)+], B = E[(v-Z)+].
class EmpiricalDistribution {
public:
    /// Validates, sorts by atom (weights carried along), precomputes
    /// cumulative sums. Throws std::invalid_argument when atoms/weights are
    /// empty, mismatched, non-finite, weights are not all positive, or the
    /// weight total misses 1 by more than 1e-12 (measured with compensated
    /// summation).
    EmpiricalDistribution(std::vector<double> atoms, std::vector<double> weights);

    static EmpiricalDistribution dirac(double c);
    static EmpiricalDistribution uniform_atoms(std::vector<double> atoms);
    /// As the main constructor but rescales weights by their exact sum
    /// first. Used internally where weights arise as long products (Bellman
    /// mixtures) and carry a few ulps of drift.
    static EmpiricalDistribution with_normalization(std::vector<double> atoms,
                                                    std::vector<double> weights);

    std::span<const double> atoms() const { return atoms_; }
    std::span<const double> weights() const { return weights_; }
    std::size_t size() const { return atoms_.size(); }
    double min() const { return atoms_.front(); }
    double max() const { return atoms_.back(); }
    bool degenerate() const { return atoms_.front() == atoms_.back(); }
    double mean() const { return mean_; }

    double cdf(double z) const;
    double quantile(double alpha) const;
    double expectile(double tau) const;
    double expectile_inverse(double value) const;

    /// Draws one atom index with probability proportional to its weight.
    std::size_t sample_index(Rng& rng) const;
    double sample(Rng& rng) const { return atoms_[sample_index(rng)]; }

    /// CSV with header "atom,weight", 17 significant digits per field.
    void to_csv(std::ostream& out) const;
    static EmpiricalDistribution from_csv(std::istream& in);

    friend bool operator==(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
        return a.atoms_ == b.atoms_ && a.weights_ == b.weights_;
    }

private:
    struct Tails {
        double below_w, below_wz;  // weight and weighted mass of atoms <= e
        double above_w, above_wz;  // weight and weighted mass of atoms  > e
    };
    Tails tails_at(double e) const;

    std::vector<double> atoms_;
    std::vector<double> weights_;
    std::vector<double> cum_w_;   // cumulative weights
    std::vector<double> cum_wz_;  // cumulative weight*atom
    double mean_ = 0.0;
};

/// Exact 1-Wasserstein distance: integral of |F1 - F2| over the merged
/// support partition. Symmetric, zero iff the distributions coincide.
double wasserstein1(const EmpiricalDistribution& a, const EmpiricalDistribution& b);

/// Mixture of gaussians given as (mean, std, weight) components. Only a
/// sampling recipe: it is always discretized through sample_mixture before
/// any distributional computation.
struct GaussianComponent {
    double mean;
    double std;
    double weight;
};

class GaussianMixtureSpec {
public:
    /// Requires at least one component, std > 0 and weight > 0 everywhere;
    /// weights are normalized to sum to one.
    explicit GaussianMixtureSpec(std::vector<GaussianComponent> components);

    std::span<const GaussianComponent> components() const { return components_; }
    double sample(Rng& rng) const;

private:
    std::vector<GaussianComponent> components_;
    std::vector<double> cum_weights_;
};

/// n equal-weight atoms drawn from the mixture with the project Rng;
/// identical seed gives bit-identical atoms.
EmpiricalDistribution sample_mixture(const GaussianMixtureSpec& spec, std::size_t n,
                                     std::uint64_t seed);

/// The K levels tau_k = (2k-1)/(2K), k = 1..K (stored 0-based).
class FractionGrid {
public:
    explicit FractionGrid(std::size_t k_count);

    std::size_t size() const { return levels_.size(); }
    double level(std::size_t i) const { return levels_[i]; }
    const std::vector<double>& levels() const { return levels_; }

private:
    std::vector<double> levels_;
};

}  // namespace ieqn::dist
