#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ieqn/approx.hpp"
#include "ieqn/errors.hpp"
#include "ieqn/mdp.hpp"
#include "ieqn/regression.hpp"
#include "ieqn/rng.hpp"

namespace ieqn::agents {

using dist::FractionGrid;
using regression::StatisticKind;
using regression::StatisticVector;

enum class Variant { IQN0, IQN1, IENNaive, IEQN };

struct AgentConfig {
    Variant variant = Variant::IEQN;
    double kappa = 1.0;                    // Huber width, IQN1 only
    std::size_t n_fractions = 8;           // N fractions per update, drawn U(0,1)
    double z_lr = 1e-4;
    double mapper_lr = 7e-5;
    std::size_t target_update_period = 100;
    double polyak_weight = 0.5;            // mapper target blend; Z target is a full copy
    double gamma = 1.0;
    std::uint64_t seed = 0;
    std::size_t updates_per_sample = 1;
    std::size_t z_hidden = 64;
    std::size_t mapper_hidden = 64;
    approx::OptimizerState::Method optimizer = approx::OptimizerState::Method::Adam;
    /// Diagnostic hook: when non-empty (size must equal n_fractions) these
    /// fractions are used verbatim instead of sampling.
    std::vector<double> fixed_fractions;

    void validate() const;
};

/// The Z-network inputs a state one-hot concatenated with the fraction and
/// outputs one value per action. The mapper (IEQN only) inputs a fraction
/// and outputs a fraction in (0,1): two hidden layers (ReLU then Tanh), a
/// linear head, an input-to-output residual, and a logistic squash.
struct AgentState {
    Variant variant;
    std::size_t n_states = 0;
    std::size_t n_actions = 0;

    approx::NetworkSpec z_spec;
    approx::NetworkParams z_params;
    approx::NetworkParams z_target;
    approx::OptimizerState z_opt;

    approx::NetworkSpec mapper_spec;  // IEQN only
    approx::NetworkParams mapper_params;
    approx::NetworkParams mapper_target;
    approx::OptimizerState mapper_opt;

    std::uint64_t step = 0;
    Rng fraction_rng{0};

    // diagnostics: how often the target networks were evaluated
    mutable std::uint64_t z_target_queries = 0;
    mutable std::uint64_t mapper_target_queries = 0;

    double z_value(std::size_t s, double fraction, std::size_t a) const;
    double z_target_value(std::size_t s, double fraction, std::size_t a) const;
    double mapper_value(double fraction) const;
    double mapper_target_value(double fraction) const;
};

AgentState make_agent(const mdp::TabularMDP& m, const AgentConfig& cfg);

struct Transition {
    std::size_t s = 0;
    std::size_t a = 0;
    double r = 0.0;
    std::size_t next_s = 0;
    bool done = false;
};

/// Argmax over actions of the fraction-averaged Z values at `state`; ties
/// break toward the lowest action index.
std::size_t greedy_action(const AgentState& agent, std::size_t state,
                          std::span<const double> fractions);

struct IeqnLossReport {
    double loss_e = 0.0;
    double loss_q = 0.0;
    std::vector<double> z_grad;       // d loss_e / d theta
    std::vector<double> mapper_grad;  // d loss_q / d phi (through the frozen Z)
};

/// Losses and gradients for one transition at the given fractions, without
/// touching any state. The expectile loss reaches only the Z parameters;
/// the quantile loss reaches only the mapper parameters (the Z-network is
/// frozen inside the candidate quantiles). Target values come from the
/// target networks and carry no gradient; done transitions never query
/// them.
IeqnLossReport ieqn_losses(const AgentState& agent, const Transition& tr, const AgentConfig& cfg,
                           std::span<const double> fractions);

struct UpdateLosses {
    double loss_e = 0.0;
    double loss_q = 0.0;
};

/// One Algorithm-style dual update: theta steps on the expectile loss, phi
/// on the quantile loss; every target_update_period steps the Z target is
/// copied and the mapper target is Polyak-blended. Throws DivergenceError
/// on non-finite losses.
UpdateLosses ieqn_update(AgentState& agent, const Transition& tr, const AgentConfig& cfg);

/// Single-network TD update for IQN-0 (asymmetric L1), IQN-1 (quantile
/// Huber) and IEN-Naive (asymmetric L2 with expectile values used directly
/// as target samples).
double baseline_update(AgentState& agent, const Transition& tr, const AgentConfig& cfg);

/// Live-network statistic values on a fraction grid. Quantile statistics of
/// an IEQN agent go through the mapper (Z composed with the learned
/// fraction map); everything else queries Z directly.
StatisticVector fraction_statistics(const AgentState& agent, std::size_t state, std::size_t action,
                                    const FractionGrid& grid, StatisticKind kind);

struct TraceStatRow {
    std::size_t step;
    std::size_t state;
    StatisticKind kind;
    double fraction;
    double value;
};

struct TraceSummaryRow {
    std::size_t step;
    std::size_t state;
    std::optional<double> quantile_spread;
    std::optional<double> expectile_spread;
    std::optional<double> loss_e;
    std::optional<double> loss_q;
};

struct TrainTrace {
    std::vector<TraceStatRow> stats;
    std::vector<TraceSummaryRow> summary;
};

/// Environment rollouts with greedy actions and per-transition updates,
/// fully deterministic given cfg.seed. Statistics are recorded for every
/// non-terminal state on a 51-level midpoint grid, every `eval_every`
/// steps plus a final snapshot (eval_every = 0 records only the final
/// snapshot). On divergence the trace so far is attached to the error.
TrainTrace train(const mdp::TabularMDP& m, const AgentConfig& cfg, std::size_t n_steps,
                 std::size_t eval_every);

/// Independent seeded runs; result i belongs to configs[i]. OpenMP over
/// runs; the serial variant is the reference.
std::vector<TrainTrace> train_many(const mdp::TabularMDP& m, std::span<const AgentConfig> configs,
                                   std::size_t n_steps, std::size_t eval_every);
std::vector<TrainTrace> train_many_serial(const mdp::TabularMDP& m,
                                          std::span<const AgentConfig> configs,
                                          std::size_t n_steps, std::size_t eval_every);

/// Thrown by train when an update diverges; carries the partial trace.
class TrainDivergence : public DivergenceError {
public:
    TrainDivergence(const DivergenceError& cause, TrainTrace partial)
        : DivergenceError(Preformatted{}, cause.what(), cause.step()),
          partial_(std::move(partial)) {}
    const TrainTrace& partial_trace() const { return partial_; }

private:
    TrainTrace partial_;
};

/// (value at fraction 0.9 - value at fraction 0.1) / scale, interpolating
/// between grid levels. scale must be positive.
double spread_metric(const StatisticVector& stats, double scale);

/// Default scale: |statistic at 0.5| floored at 1e-3.
double default_spread_scale(const StatisticVector& stats);

}  // namespace ieqn::agents
