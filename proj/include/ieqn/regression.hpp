#pragma once

#include <cstdint>
#include <vector>

#include "ieqn/dist.hpp"

namespace ieqn::regression {

using dist::EmpiricalDistribution;
using dist::FractionGrid;

enum class StatisticKind { Quantile, Expectile };

/// K statistic values (quantile or expectile estimates) attached to a
/// fraction grid for one distribution.
struct StatisticVector {
    FractionGrid grid;
    std::vector<double> values;
    StatisticKind kind;

    /// Linear interpolation between the nearest grid levels; clamps to the
    /// first/last value outside the grid range.
    double value_at(double fraction) const;
};

// Pointwise losses. The subgradient convention at z == q uses the z <= q
// branch, i.e. weight (1 - alpha).

/// Asymmetric L1: (alpha*1{z>q} + (1-alpha)*1{z<=q}) * |z - q|.
double quantile_loss(double q, double z, double alpha);
/// d quantile_loss / d q.
double quantile_loss_subgrad(double q, double z, double alpha);

/// Asymmetric L2: (tau*1{z>e} + (1-tau)*1{z<=e}) * (z - e)^2.
double expectile_loss(double e, double z, double tau);
/// d expectile_loss / d e = -2 * weight * (z - e).
double expectile_loss_grad(double e, double z, double tau);

/// |alpha - 1{z<q}| * H_kappa(z - q) / kappa, with H the Huber function
/// (u^2/2 inside [-kappa, kappa], kappa*(|u| - kappa/2) outside).
/// Converges to quantile_loss pointwise as kappa -> 0+.
double huber_quantile_loss(double q, double z, double alpha, double kappa);
double huber_quantile_loss_grad(double q, double z, double alpha, double kappa);

struct LossSpec {
    enum class Kind { L1, L2, Huber };
    Kind kind = Kind::L1;
    double kappa = 1.0;  // Huber only
};

struct FitConfig {
    double learning_rate = 1e-4;
    std::size_t steps = 1000;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
};

struct FitResult {
    StatisticVector statistics;
    /// Mean absolute error against the exact oracle statistics, one entry
    /// per step (after the update).
    std::vector<double> mae_trace;
};

/// Stochastic subgradient descent of the per-level losses over minibatches
/// drawn from `samples`. Values start at zero. The MAE trace is measured
/// against quantile(samples, tau_k) for L1/Huber and expectile(samples,
/// tau_k) for L2. Deterministic given the seed; throws DivergenceError if a
/// value goes non-finite.
FitResult fit_statistics(const EmpiricalDistribution& samples, const FractionGrid& grid,
                         const LossSpec& loss, const FitConfig& cfg);

struct FreeFitResult {
    std::vector<double> values;
    std::vector<double> mae_trace;
};

/// As fit_statistics but fits expectile values at caller-provided fractions
/// (used to fit expectiles at exactly the mapped fractions of a quantile
/// grid, whose readout is then a quantile estimate). The oracle for the MAE
/// trace is likewise caller-provided.
FreeFitResult fit_expectiles_at(const EmpiricalDistribution& samples,
                                const std::vector<double>& fractions,
                                const std::vector<double>& oracle, const FitConfig& cfg);

}  // namespace ieqn::regression
