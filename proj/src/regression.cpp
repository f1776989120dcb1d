#include "ieqn/regression.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ieqn/errors.hpp"
#include "ieqn/rng.hpp"

namespace ieqn::regression {

double StatisticVector::value_at(double fraction) const {
    const auto& levels = grid.levels();
    if (fraction <= levels.front()) return values.front();
    if (fraction >= levels.back()) return values.back();
    const auto it = std::upper_bound(levels.begin(), levels.end(), fraction);
    const std::size_t hi = static_cast<std::size_t>(it - levels.begin());
    const std::size_t lo = hi - 1;
    const double t = (fraction - levels[lo]) / (levels[hi] - levels[lo]);
    return values[lo] + t * (values[hi] - values[lo]);
}

namespace {

void check_fraction(double alpha, const char* name) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument(std::string(name) + ": fraction must lie in (0,1)");
    }
}

}  // namespace

double quantile_loss(double q, double z, double alpha) {
    check_fraction(alpha, "quantile_loss");
    const double weight = z > q ? alpha : 1.0 - alpha;
    return weight * std::abs(z - q);
}

double quantile_loss_subgrad(double q, double z, double alpha) {
    check_fraction(alpha, "quantile_loss");
    return z > q ? -alpha : 1.0 - alpha;
}

double expectile_loss(double e, double z, double tau) {
    check_fraction(tau, "expectile_loss");
    const double weight = z > e ? tau : 1.0 - tau;
    const double r = z - e;
    return weight * r * r;
}

double expectile_loss_grad(double e, double z, double tau) {
    check_fraction(tau, "expectile_loss");
    const double weight = z > e ? tau : 1.0 - tau;
    return -2.0 * weight * (z - e);
}

double huber_quantile_loss(double q, double z, double alpha, double kappa) {
    check_fraction(alpha, "huber_quantile_loss");
    if (!(kappa > 0.0)) throw std::invalid_argument("huber_quantile_loss: kappa must be > 0");
    const double u = z - q;
    const double au = std::abs(u);
    const double huber = au <= kappa ? 0.5 * u * u : kappa * (au - 0.5 * kappa);
    const double weight = std::abs(alpha - (z < q ? 1.0 : 0.0));
    return weight * huber / kappa;
}

double huber_quantile_loss_grad(double q, double z, double alpha, double kappa) {
    check_fraction(alpha, "huber_quantile_loss");
    if (!(kappa > 0.0)) throw std::invalid_argument("huber_quantile_loss: kappa must be > 0");
    const double u = z - q;
    const double dhuber_du = std::abs(u) <= kappa ? u : (u > 0.0 ? kappa : -kappa);
    const double weight = std::abs(alpha - (z < q ? 1.0 : 0.0));
    return -weight * dhuber_du / kappa;  // d/dq = -d/du
}

namespace {

struct LossGrad {
    double (*grad)(double value, double z, double fraction, double kappa);
};

double grad_l1(double v, double z, double f, double) { return quantile_loss_subgrad(v, z, f); }
double grad_l2(double v, double z, double f, double) { return expectile_loss_grad(v, z, f); }
double grad_huber(double v, double z, double f, double kappa) {
    return huber_quantile_loss_grad(v, z, f, kappa);
}

std::vector<double> run_sgd(const EmpiricalDistribution& samples,
                            const std::vector<double>& fractions,
                            const std::vector<double>& oracle, const LossSpec& loss,
                            const FitConfig& cfg, std::vector<double>& values) {
    if (cfg.steps == 0) throw std::invalid_argument("fit: steps must be >= 1");
    if (cfg.batch_size == 0) throw std::invalid_argument("fit: batch_size must be >= 1");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("fit: learning_rate must be > 0");

    double (*grad)(double, double, double, double) = nullptr;
    switch (loss.kind) {
        case LossSpec::Kind::L1: grad = grad_l1; break;
        case LossSpec::Kind::L2: grad = grad_l2; break;
        case LossSpec::Kind::Huber: grad = grad_huber; break;
    }

    Rng rng(cfg.seed);
    const double batch_scale = 1.0 / static_cast<double>(cfg.batch_size);
    std::vector<double> batch(cfg.batch_size);
    std::vector<double> mae_trace(cfg.steps);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        for (double& z : batch) z = samples.sample(rng);
        for (std::size_t k = 0; k < values.size(); ++k) {
            double g = 0.0;
            for (const double z : batch) g += grad(values[k], z, fractions[k], loss.kappa);
            values[k] -= cfg.learning_rate * batch_scale * g;
            if (!std::isfinite(values[k])) {
                throw DivergenceError("fit_statistics: value diverged", step);
            }
        }
        double mae = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k) mae += std::abs(values[k] - oracle[k]);
        mae_trace[step] = mae / static_cast<double>(values.size());
    }
    return mae_trace;
}

}  // namespace

FitResult fit_statistics(const EmpiricalDistribution& samples, const FractionGrid& grid,
                         const LossSpec& loss, const FitConfig& cfg) {
    std::vector<double> oracle(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        oracle[k] = loss.kind == LossSpec::Kind::L2 ? samples.expectile(grid.level(k))
                                                    : samples.quantile(grid.level(k));
    }
    FitResult result{
        {grid, std::vector<double>(grid.size(), 0.0),
         loss.kind == LossSpec::Kind::L2 ? StatisticKind::Expectile : StatisticKind::Quantile},
        {}};
    result.mae_trace =
        run_sgd(samples, grid.levels(), oracle, loss, cfg, result.statistics.values);
    return result;
}

FreeFitResult fit_expectiles_at(const EmpiricalDistribution& samples,
                                const std::vector<double>& fractions,
                                const std::vector<double>& oracle, const FitConfig& cfg) {
    if (fractions.size() != oracle.size() || fractions.empty()) {
        throw std::invalid_argument("fit_expectiles_at: fractions/oracle size mismatch");
    }
    FreeFitResult result{std::vector<double>(fractions.size(), 0.0), {}};
    result.mae_trace =
        run_sgd(samples, fractions, oracle, LossSpec{LossSpec::Kind::L2, 1.0}, cfg, result.values);
    return result;
}

}  // namespace ieqn::regression
