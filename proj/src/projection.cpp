#include "ieqn/projection.hpp"

#include <cmath>
#include <stdexcept>

#include "ieqn/parallel.hpp"

namespace ieqn::projection {

std::size_t floor_k_index(const FractionGrid& grid, double x) {
    if (!(x >= 0.0 && x <= 1.0)) {
        throw std::invalid_argument("floor_k: x must lie in [0,1]");
    }
    const double k = static_cast<double>(grid.size());
    // cell floor(K*x) contains x; its midpoint (2*floor(K*x)+1)/(2K) is the
    // grid level tau_{floor(K*x)+1}, clamped into the grid at x = 1
    double j = std::floor(k * x) + 1.0;
    if (j < 1.0) j = 1.0;
    if (j > k) j = k;
    return static_cast<std::size_t>(j) - 1;
}

double floor_k(const FractionGrid& grid, double x) {
    return grid.level(floor_k_index(grid, x));
}

MapperTable exact_mapper(const EmpiricalDistribution& d, const FractionGrid& grid) {
    MapperTable table{grid, std::vector<double>(grid.size())};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        table.mapped[i] = d.expectile_inverse(d.quantile(grid.level(i)));
    }
    return table;
}

EmpiricalDistribution project_quantile(const EmpiricalDistribution& d, std::size_t k_count) {
    const FractionGrid grid(k_count);
    std::vector<double> atoms(k_count);
    for (std::size_t i = 0; i < k_count; ++i) atoms[i] = d.quantile(grid.level(i));
    return EmpiricalDistribution::uniform_atoms(std::move(atoms));
}

EmpiricalDistribution project_dual(const EmpiricalDistribution& d, std::size_t k_count) {
    const FractionGrid grid(k_count);
    if (d.degenerate()) {
        return EmpiricalDistribution::uniform_atoms(
            std::vector<double>(k_count, d.min()));
    }
    std::vector<double> atoms(k_count);
    for (std::size_t i = 0; i < k_count; ++i) {
        const double mapped = d.expectile_inverse(d.quantile(grid.level(i)));
        atoms[i] = d.expectile(floor_k(grid, mapped));
    }
    return EmpiricalDistribution::uniform_atoms(std::move(atoms));
}

std::vector<ConvergenceRow> convergence_study(const EmpiricalDistribution& d,
                                              std::span<const std::size_t> k_values) {
    std::vector<ConvergenceRow> rows;
    rows.reserve(k_values.size());
    for (const std::size_t k : k_values) {
        if (k == 0) throw std::invalid_argument("convergence_study: K must be >= 1");
        rows.push_back({k, wasserstein1(project_dual(d, k), d),
                        wasserstein1(project_quantile(d, k), d)});
    }
    return rows;
}

NonexpansionResult nonexpansion_check(const EmpiricalDistribution& d1,
                                      const EmpiricalDistribution& d2, std::size_t k_count) {
    return {wasserstein1(project_dual(d1, k_count), project_dual(d2, k_count)),
            wasserstein1(d1, d2)};
}

namespace {

template <class Loop>
std::vector<NonexpansionResult> battery_impl(std::span<const EmpiricalDistribution> pairs,
                                             std::size_t k_count, Loop&& loop) {
    if (pairs.size() % 2 != 0) {
        throw std::invalid_argument("nonexpansion_battery: odd number of distributions");
    }
    std::vector<NonexpansionResult> results(pairs.size() / 2);
    loop(results.size(), [&](std::size_t i) {
        results[i] = nonexpansion_check(pairs[2 * i], pairs[2 * i + 1], k_count);
    });
    return results;
}

}  // namespace

std::vector<NonexpansionResult> nonexpansion_battery(
    std::span<const EmpiricalDistribution> pairs, std::size_t k_count) {
    return battery_impl(pairs, k_count,
                        [](std::size_t n, auto&& f) { parallel_for(n, f); });
}

std::vector<NonexpansionResult> nonexpansion_battery_serial(
    std::span<const EmpiricalDistribution> pairs, std::size_t k_count) {
    return battery_impl(pairs, k_count,
                        [](std::size_t n, auto&& f) { serial_for(n, f); });
}

}  // namespace ieqn::projection
