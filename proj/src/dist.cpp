#include "ieqn/dist.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "ieqn/csv.hpp"

namespace ieqn::dist {

namespace {

/// Neumaier compensated sum; accurate enough to check the 1e-12 invariant.
double compensated_sum(std::span<const double> xs) {
    double sum = 0.0;
    double comp = 0.0;
    for (const double x : xs) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    return sum + comp;
}

constexpr double kWeightTol = 1e-12;
constexpr double kExpectileTol = 1e-10;
constexpr int kExpectileMaxIter = 200;

}  // namespace

EmpiricalDistribution::EmpiricalDistribution(std::vector<double> atoms,
                                             std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
    if (atoms_.empty()) throw std::invalid_argument("EmpiricalDistribution: no atoms");
    if (atoms_.size() != weights_.size()) {
        throw std::invalid_argument("EmpiricalDistribution: atoms/weights length mismatch");
    }
    for (const double a : atoms_) {
        if (!std::isfinite(a)) throw std::invalid_argument("EmpiricalDistribution: non-finite atom");
    }
    for (const double w : weights_) {
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw std::invalid_argument("EmpiricalDistribution: weights must be positive");
        }
    }
    const double total = compensated_sum(weights_);
    if (std::abs(total - 1.0) > kWeightTol) {
        throw std::invalid_argument("EmpiricalDistribution: weights sum to " +
                                    format_double(total) + ", expected 1");
    }

    if (!std::is_sorted(atoms_.begin(), atoms_.end())) {
        std::vector<std::size_t> order(atoms_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t i, std::size_t j) { return atoms_[i] < atoms_[j]; });
        std::vector<double> sorted_atoms(atoms_.size());
        std::vector<double> sorted_weights(atoms_.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            sorted_atoms[i] = atoms_[order[i]];
            sorted_weights[i] = weights_[order[i]];
        }
        atoms_ = std::move(sorted_atoms);
        weights_ = std::move(sorted_weights);
    }

    cum_w_.resize(atoms_.size());
    cum_wz_.resize(atoms_.size());
    double cw = 0.0;
    double cwz = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        cw += weights_[i];
        cwz += weights_[i] * atoms_[i];
        cum_w_[i] = cw;
        cum_wz_[i] = cwz;
    }
    mean_ = cwz;
}

EmpiricalDistribution EmpiricalDistribution::dirac(double c) {
    return EmpiricalDistribution({c}, {1.0});
}

EmpiricalDistribution EmpiricalDistribution::uniform_atoms(std::vector<double> atoms) {
    if (atoms.empty()) throw std::invalid_argument("uniform_atoms: no atoms");
    const std::size_t n = atoms.size();
    const double w = 1.0 / static_cast<double>(n);
    return EmpiricalDistribution(std::move(atoms), std::vector<double>(n, w));
}

EmpiricalDistribution EmpiricalDistribution::with_normalization(std::vector<double> atoms,
                                                                std::vector<double> weights) {
    const double total = compensated_sum(weights);
    if (!(total > 0.0) || !std::isfinite(total)) {
        throw std::invalid_argument("with_normalization: weight total must be positive");
    }
    for (double& w : weights) w /= total;
    return EmpiricalDistribution(std::move(atoms), std::move(weights));
}

double EmpiricalDistribution::cdf(double z) const {
    // first atom strictly greater than z; everything before it is <= z
    const auto it = std::upper_bound(atoms_.begin(), atoms_.end(), z);
    if (it == atoms_.begin()) return 0.0;
    const std::size_t idx = static_cast<std::size_t>(it - atoms_.begin()) - 1;
    if (idx + 1 == atoms_.size()) return 1.0;
    return cum_w_[idx];
}

double EmpiricalDistribution::quantile(double alpha) const {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("quantile: alpha must lie in (0,1)");
    }
    const auto it = std::lower_bound(cum_w_.begin(), cum_w_.end(), alpha);
    std::size_t idx = static_cast<std::size_t>(it - cum_w_.begin());
    if (idx >= atoms_.size()) idx = atoms_.size() - 1;  // cum_w_ tops out 1 +/- eps
    return atoms_[idx];
}

EmpiricalDistribution::Tails EmpiricalDistribution::tails_at(double e) const {
    const auto it = std::upper_bound(atoms_.begin(), atoms_.end(), e);
    Tails t{};
    if (it == atoms_.begin()) {
        t.below_w = 0.0;
        t.below_wz = 0.0;
    } else {
        const std::size_t idx = static_cast<std::size_t>(it - atoms_.begin()) - 1;
        t.below_w = cum_w_[idx];
        t.below_wz = cum_wz_[idx];
    }
    t.above_w = cum_w_.back() - t.below_w;
    t.above_wz = cum_wz_.back() - t.below_wz;
    return t;
}

double EmpiricalDistribution::expectile(double tau) const {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw std::invalid_argument("expectile: tau must lie in (0,1)");
    }
    if (degenerate()) return atoms_.front();

    // g is continuous and strictly decreasing in e on the support hull,
    // positive at the min atom and negative at the max atom.
    const auto g = [&](double e) {
        const Tails t = tails_at(e);
        const double above_part = t.above_wz - e * t.above_w;  // E[(Z-e)+]
        const double below_part = e * t.below_w - t.below_wz;  // E[(e-Z)+]
        return tau * above_part - (1.0 - tau) * below_part;
    };

    double lo = atoms_.front();
    double hi = atoms_.back();
    for (int iter = 0; iter < kExpectileMaxIter && hi - lo > kExpectileTol; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (g(mid) >= 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (hi - lo > 1e-6 * (1.0 + std::abs(hi))) {
        throw std::logic_error("expectile: bisection failed to converge");
    }
    return 0.5 * (lo + hi);
}

double EmpiricalDistribution::expectile_inverse(double value) const {
    if (value < atoms_.front() || value > atoms_.back()) {
        throw std::invalid_argument("expectile_inverse: value outside the support hull");
    }
    if (degenerate()) return 0.5;
    const Tails t = tails_at(value);
    const double above_part = t.above_wz - value * t.above_w;  // E[(Z-v)+]
    const double below_part = value * t.below_w - t.below_wz;  // E[(v-Z)+]
    const double denom = above_part + below_part;
    if (denom <= 0.0) return 0.5;  // numerically degenerate hull
    const double tau = below_part / denom;
    return std::clamp(tau, 0.0, 1.0);
}

std::size_t EmpiricalDistribution::sample_index(Rng& rng) const {
    const double u = rng.next_double();
    const auto it = std::upper_bound(cum_w_.begin(), cum_w_.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cum_w_.begin());
    if (idx >= atoms_.size()) idx = atoms_.size() - 1;
    return idx;
}

void EmpiricalDistribution::to_csv(std::ostream& out) const {
    out << "atom,weight\n";
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        out << format_double(atoms_[i]) << ',' << format_double(weights_[i]) << '\n';
    }
}

EmpiricalDistribution EmpiricalDistribution::from_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"atom", "weight"}) {
        throw ConfigError("EmpiricalDistribution CSV: missing 'atom,weight' header");
    }
    std::vector<double> atoms;
    std::vector<double> weights;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 2) throw ConfigError("EmpiricalDistribution CSV: bad row '" + line + "'");
        atoms.push_back(parse_double(fields[0]));
        weights.push_back(parse_double(fields[1]));
    }
    return EmpiricalDistribution(std::move(atoms), std::move(weights));
}

double wasserstein1(const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
    const auto atoms_a = a.atoms();
    const auto atoms_b = b.atoms();
    const auto weights_a = a.weights();
    const auto weights_b = b.weights();

    std::size_t i = 0;
    std::size_t j = 0;
    double f_a = 0.0;
    double f_b = 0.0;
    double prev = 0.0;
    bool have_prev = false;
    double total = 0.0;

    while (i < atoms_a.size() || j < atoms_b.size()) {
        double z;
        if (i < atoms_a.size() && j < atoms_b.size()) {
            z = std::min(atoms_a[i], atoms_b[j]);
        } else if (i < atoms_a.size()) {
            z = atoms_a[i];
        } else {
            z = atoms_b[j];
        }
        if (have_prev) total += std::abs(f_a - f_b) * (z - prev);
        while (i < atoms_a.size() && atoms_a[i] == z) f_a += weights_a[i++];
        while (j < atoms_b.size() && atoms_b[j] == z) f_b += weights_b[j++];
        prev = z;
        have_prev = true;
    }
    return total;
}

GaussianMixtureSpec::GaussianMixtureSpec(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
    if (components_.empty()) throw std::invalid_argument("GaussianMixtureSpec: no components");
    double total = 0.0;
    for (const auto& c : components_) {
        if (!(c.std > 0.0) || !std::isfinite(c.std)) {
            throw std::invalid_argument("GaussianMixtureSpec: std must be positive");
        }
        if (!(c.weight > 0.0) || !std::isfinite(c.weight) || !std::isfinite(c.mean)) {
            throw std::invalid_argument("GaussianMixtureSpec: bad component");
        }
        total += c.weight;
    }
    cum_weights_.reserve(components_.size());
    double cum = 0.0;
    for (auto& c : components_) {
        c.weight /= total;
        cum += c.weight;
        cum_weights_.push_back(cum);
    }
}

double GaussianMixtureSpec::sample(Rng& rng) const {
    const double u = rng.next_double();
    const auto it = std::upper_bound(cum_weights_.begin(), cum_weights_.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cum_weights_.begin());
    if (idx >= components_.size()) idx = components_.size() - 1;
    const auto& c = components_[idx];
    return c.mean + c.std * rng.next_gaussian();
}

EmpiricalDistribution sample_mixture(const GaussianMixtureSpec& spec, std::size_t n,
                                     std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("sample_mixture: n must be >= 1");
    Rng rng(seed);
    std::vector<double> atoms(n);
    for (double& a : atoms) a = spec.sample(rng);
    return EmpiricalDistribution::uniform_atoms(std::move(atoms));
}

FractionGrid::FractionGrid(std::size_t k_count) {
    if (k_count == 0) throw std::invalid_argument("FractionGrid: K must be >= 1");
    levels_.resize(k_count);
    for (std::size_t i = 0; i < k_count; ++i) {
        levels_[i] = static_cast<double>(2 * i + 1) / static_cast<double>(2 * k_count);
    }
}

}  // namespace ieqn::dist
