#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ieqn/dist.hpp"

namespace ieqn::projection {

using dist::EmpiricalDistribution;
using dist::FractionGrid;

/// Snaps a fraction x in [0,1] to the grid level whose cell contains it:
/// x in [j/K, (j+1)/K) maps to (2j+1)/(2K), clamped into the grid at x = 1.
/// The snap moves x by at most 1/(2K) and grid levels are fixed points.
double floor_k(const FractionGrid& grid, double x);
std::size_t floor_k_index(const FractionGrid& grid, double x);

/// The exact quantile-fraction -> expectile-fraction table for one
/// distribution: mapped_k = expectile_inverse(quantile(tau_k)). Monotone
/// non-decreasing in k.
struct MapperTable {
    FractionGrid grid;
    std::vector<double> mapped;
};

MapperTable exact_mapper(const EmpiricalDistribution& d, const FractionGrid& grid);

/// K equal-weight atoms at the grid quantiles of d (the 1-Wasserstein
/// optimal uniform K-atom approximation).
EmpiricalDistribution project_quantile(const EmpiricalDistribution& d, std::size_t k_count);

/// K equal-weight atoms at expectiles of d evaluated at the grid-snapped
/// mapped fractions: atom_k = expectile(floor_k(expectile_inverse(quantile(tau_k)))).
/// Single-atom inputs bypass the inverse step and return K copies of the atom.
EmpiricalDistribution project_dual(const EmpiricalDistribution& d, std::size_t k_count);

struct ConvergenceRow {
    std::size_t k_count;
    double w1_dual;
    double w1_quantile;
};

/// Exact projection errors per K; serialized as CSV `K,w1_dual,w1_quantile`.
std::vector<ConvergenceRow> convergence_study(const EmpiricalDistribution& d,
                                              std::span<const std::size_t> k_values);

struct NonexpansionResult {
    double lhs;  // W1(project_dual(d1), project_dual(d2))
    double rhs;  // W1(d1, d2)
};

NonexpansionResult nonexpansion_check(const EmpiricalDistribution& d1,
                                      const EmpiricalDistribution& d2, std::size_t k_count);

/// Runs nonexpansion_check on consecutive pairs (d[2i], d[2i+1]); the i-th
/// result lands in slot i. OpenMP over pairs; the serial variant is the
/// reference the parallel one is tested against.
std::vector<NonexpansionResult> nonexpansion_battery(
    std::span<const EmpiricalDistribution> pairs, std::size_t k_count);
std::vector<NonexpansionResult> nonexpansion_battery_serial(
    std::span<const EmpiricalDistribution> pairs, std::size_t k_count);

}  // namespace ieqn::projection
