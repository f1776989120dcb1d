#include "ieqn/agents.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ieqn/parallel.hpp"

namespace ieqn::agents {

namespace {

constexpr std::size_t kEvalGridSize = 51;

std::vector<double> encode_input(std::size_t n_states, std::size_t s, double fraction) {
    std::vector<double> input(n_states + 1, 0.0);
    input[s] = 1.0;
    input[n_states] = fraction;
    return input;
}

bool uses_mapper(Variant v) { return v == Variant::IEQN; }

}  // namespace

void AgentConfig::validate() const {
    if (n_fractions == 0) throw std::invalid_argument("AgentConfig: n_fractions must be >= 1");
    if (!(z_lr > 0.0)) throw std::invalid_argument("AgentConfig: z_lr must be > 0");
    if (uses_mapper(variant) && !(mapper_lr > 0.0)) {
        throw std::invalid_argument("AgentConfig: mapper_lr must be > 0");
    }
    if (target_update_period == 0) {
        throw std::invalid_argument("AgentConfig: target_update_period must be >= 1");
    }
    if (!(polyak_weight >= 0.0 && polyak_weight <= 1.0)) {
        throw std::invalid_argument("AgentConfig: polyak_weight must lie in [0,1]");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument("AgentConfig: gamma must lie in [0,1]");
    }
    if (variant == Variant::IQN1 && !(kappa > 0.0)) {
        throw std::invalid_argument("AgentConfig: kappa must be > 0");
    }
    if (updates_per_sample == 0) {
        throw std::invalid_argument("AgentConfig: updates_per_sample must be >= 1");
    }
    if (!fixed_fractions.empty() && fixed_fractions.size() != n_fractions) {
        throw std::invalid_argument("AgentConfig: fixed_fractions size must equal n_fractions");
    }
}

double AgentState::z_value(std::size_t s, double fraction, std::size_t a) const {
    return approx::forward(z_spec, z_params, encode_input(n_states, s, fraction))[a];
}

double AgentState::z_target_value(std::size_t s, double fraction, std::size_t a) const {
    ++z_target_queries;
    return approx::forward(z_spec, z_target, encode_input(n_states, s, fraction))[a];
}

double AgentState::mapper_value(double fraction) const {
    const std::vector<double> in{fraction};
    return approx::forward(mapper_spec, mapper_params, in)[0];
}

double AgentState::mapper_target_value(double fraction) const {
    ++mapper_target_queries;
    const std::vector<double> in{fraction};
    return approx::forward(mapper_spec, mapper_target, in)[0];
}

AgentState make_agent(const mdp::TabularMDP& m, const AgentConfig& cfg) {
    cfg.validate();
    m.validate();

    AgentState agent;
    agent.variant = cfg.variant;
    agent.n_states = m.n_states;
    agent.n_actions = m.n_actions;

    agent.z_spec = approx::NetworkSpec{
        {m.n_states + 1, cfg.z_hidden, cfg.z_hidden, m.n_actions},
        {approx::Activation::ReLU, approx::Activation::ReLU, approx::Activation::Identity},
        false,
        approx::OutputSquash::None};
    agent.z_params = approx::init_params(agent.z_spec, Rng::split_tag(cfg.seed, "z-init"));
    agent.z_target = agent.z_params;
    agent.z_opt = cfg.optimizer == approx::OptimizerState::Method::Adam
                      ? approx::OptimizerState::adam(cfg.z_lr, agent.z_spec.param_count())
                      : approx::OptimizerState::sgd(cfg.z_lr, agent.z_spec.param_count());

    if (uses_mapper(cfg.variant)) {
        agent.mapper_spec = approx::NetworkSpec{
            {1, cfg.mapper_hidden, cfg.mapper_hidden, 1},
            {approx::Activation::ReLU, approx::Activation::Tanh, approx::Activation::Identity},
            true,
            approx::OutputSquash::UnitInterval};
        agent.mapper_params =
            approx::init_params(agent.mapper_spec, Rng::split_tag(cfg.seed, "mapper-init"));
        agent.mapper_target = agent.mapper_params;
        agent.mapper_opt =
            cfg.optimizer == approx::OptimizerState::Method::Adam
                ? approx::OptimizerState::adam(cfg.mapper_lr, agent.mapper_spec.param_count())
                : approx::OptimizerState::sgd(cfg.mapper_lr, agent.mapper_spec.param_count());
    }

    agent.fraction_rng = Rng(Rng::split_tag(cfg.seed, "fractions"));
    return agent;
}

std::size_t greedy_action(const AgentState& agent, std::size_t state,
                          std::span<const double> fractions) {
    if (fractions.empty()) throw std::invalid_argument("greedy_action: need fractions");
    std::vector<double> mean_values(agent.n_actions, 0.0);
    for (const double f : fractions) {
        const auto out =
            approx::forward(agent.z_spec, agent.z_params, encode_input(agent.n_states, state, f));
        for (std::size_t a = 0; a < agent.n_actions; ++a) mean_values[a] += out[a];
    }
    std::size_t best = 0;
    for (std::size_t a = 1; a < agent.n_actions; ++a) {
        if (mean_values[a] > mean_values[best]) best = a;
    }
    return best;
}

namespace {

std::vector<double> draw_fractions(AgentState& agent, const AgentConfig& cfg) {
    if (!cfg.fixed_fractions.empty()) return cfg.fixed_fractions;
    std::vector<double> fractions(cfg.n_fractions);
    for (double& f : fractions) f = agent.fraction_rng.next_open_double();
    return fractions;
}

/// Target samples z_j. Done transitions use the reward only and never
/// touch the target networks.
std::vector<double> target_samples(const AgentState& agent, const Transition& tr,
                                   const AgentConfig& cfg, std::span<const double> fractions) {
    std::vector<double> targets(fractions.size(), tr.r);
    if (tr.done || cfg.gamma == 0.0) return targets;
    const std::size_t next_a = greedy_action(agent, tr.next_s, fractions);
    for (std::size_t j = 0; j < fractions.size(); ++j) {
        const double f = uses_mapper(agent.variant) ? agent.mapper_target_value(fractions[j])
                                                    : fractions[j];
        targets[j] += cfg.gamma * agent.z_target_value(tr.next_s, f, next_a);
    }
    return targets;
}

void refresh_targets(AgentState& agent, const AgentConfig& cfg) {
    if (agent.step % cfg.target_update_period != 0) return;
    agent.z_target = agent.z_params;  // full copy
    if (uses_mapper(agent.variant)) {
        approx::polyak_update(agent.mapper_target, agent.mapper_params, cfg.polyak_weight);
    }
}

void add_scaled(std::vector<double>& acc, std::span<const double> g, double scale) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * g[i];
}

}  // namespace

IeqnLossReport ieqn_losses(const AgentState& agent, const Transition& tr, const AgentConfig& cfg,
                           std::span<const double> fractions) {
    if (agent.variant != Variant::IEQN) {
        throw std::invalid_argument("ieqn_losses: agent is not an IEQN agent");
    }
    const std::size_t n = fractions.size();
    const double pair_scale = 1.0 / static_cast<double>(n * n);
    const std::vector<double> targets = target_samples(agent, tr, cfg, fractions);

    IeqnLossReport report;
    report.z_grad.assign(agent.z_params.values.size(), 0.0);
    report.mapper_grad.assign(agent.mapper_params.values.size(), 0.0);

    std::vector<double> upstream(agent.n_actions, 0.0);
    const std::size_t fraction_slot = agent.n_states;

    for (std::size_t i = 0; i < n; ++i) {
        const double tau = fractions[i];

        // expectile candidate e_i = Z_theta(s, a, tau_i); gradient to theta
        const std::vector<double> e_input = encode_input(agent.n_states, tr.s, tau);
        const double e_i = approx::forward(agent.z_spec, agent.z_params, e_input)[tr.a];
        double e_up = 0.0;
        for (const double z : targets) {
            report.loss_e += pair_scale * regression::expectile_loss(e_i, z, tau);
            e_up += pair_scale * regression::expectile_loss_grad(e_i, z, tau);
        }
        if (e_up != 0.0) {
            std::fill(upstream.begin(), upstream.end(), 0.0);
            upstream[tr.a] = e_up;
            const auto g = approx::gradient(agent.z_spec, agent.z_params, e_input, upstream);
            add_scaled(report.z_grad, g.wrt_params, 1.0);
        }

        // quantile candidate q_i = Z_theta(s, a, m_phi(tau_i)); theta is
        // frozen here, the gradient reaches phi through the fraction input
        const double m_i = agent.mapper_value(tau);
        const std::vector<double> q_input = encode_input(agent.n_states, tr.s, m_i);
        const double q_i = approx::forward(agent.z_spec, agent.z_params, q_input)[tr.a];
        double q_up = 0.0;
        for (const double z : targets) {
            report.loss_q += pair_scale * regression::quantile_loss(q_i, z, tau);
            q_up += pair_scale * regression::quantile_loss_subgrad(q_i, z, tau);
        }
        if (q_up != 0.0) {
            std::fill(upstream.begin(), upstream.end(), 0.0);
            upstream[tr.a] = q_up;
            const auto gz = approx::gradient(agent.z_spec, agent.z_params, q_input, upstream);
            const double fraction_up = gz.wrt_input[fraction_slot];
            if (fraction_up != 0.0) {
                const std::vector<double> m_input{tau};
                const std::vector<double> m_up{fraction_up};
                const auto gm =
                    approx::gradient(agent.mapper_spec, agent.mapper_params, m_input, m_up);
                add_scaled(report.mapper_grad, gm.wrt_params, 1.0);
            }
        }
    }
    return report;
}

UpdateLosses ieqn_update(AgentState& agent, const Transition& tr, const AgentConfig& cfg) {
    const std::vector<double> fractions = draw_fractions(agent, cfg);
    const IeqnLossReport report = ieqn_losses(agent, tr, cfg, fractions);
    if (!std::isfinite(report.loss_e) || !std::isfinite(report.loss_q)) {
        throw DivergenceError("ieqn_update: non-finite loss", agent.step);
    }
    agent.z_opt.step(agent.z_params, report.z_grad);
    agent.mapper_opt.step(agent.mapper_params, report.mapper_grad);
    ++agent.step;
    refresh_targets(agent, cfg);
    return {report.loss_e, report.loss_q};
}

double baseline_update(AgentState& agent, const Transition& tr, const AgentConfig& cfg) {
    if (agent.variant == Variant::IEQN) {
        throw std::invalid_argument("baseline_update: use ieqn_update for IEQN agents");
    }
    const std::vector<double> fractions = draw_fractions(agent, cfg);
    const std::size_t n = fractions.size();
    const double pair_scale = 1.0 / static_cast<double>(n * n);
    const std::vector<double> targets = target_samples(agent, tr, cfg, fractions);

    double loss = 0.0;
    std::vector<double> grad(agent.z_params.values.size(), 0.0);
    std::vector<double> upstream(agent.n_actions, 0.0);

    for (std::size_t i = 0; i < n; ++i) {
        const double tau = fractions[i];
        const std::vector<double> input = encode_input(agent.n_states, tr.s, tau);
        const double c_i = approx::forward(agent.z_spec, agent.z_params, input)[tr.a];
        double up = 0.0;
        for (const double z : targets) {
            switch (agent.variant) {
                case Variant::IQN0:
                    loss += pair_scale * regression::quantile_loss(c_i, z, tau);
                    up += pair_scale * regression::quantile_loss_subgrad(c_i, z, tau);
                    break;
                case Variant::IQN1:
                    loss += pair_scale * regression::huber_quantile_loss(c_i, z, tau, cfg.kappa);
                    up += pair_scale *
                          regression::huber_quantile_loss_grad(c_i, z, tau, cfg.kappa);
                    break;
                case Variant::IENNaive:
                    loss += pair_scale * regression::expectile_loss(c_i, z, tau);
                    up += pair_scale * regression::expectile_loss_grad(c_i, z, tau);
                    break;
                case Variant::IEQN: break;  // unreachable
            }
        }
        if (up != 0.0) {
            std::fill(upstream.begin(), upstream.end(), 0.0);
            upstream[tr.a] = up;
            const auto g = approx::gradient(agent.z_spec, agent.z_params, input, upstream);
            add_scaled(grad, g.wrt_params, 1.0);
        }
    }

    if (!std::isfinite(loss)) throw DivergenceError("baseline_update: non-finite loss", agent.step);
    agent.z_opt.step(agent.z_params, grad);
    ++agent.step;
    refresh_targets(agent, cfg);
    return loss;
}

StatisticVector fraction_statistics(const AgentState& agent, std::size_t state, std::size_t action,
                                    const FractionGrid& grid, StatisticKind kind) {
    StatisticVector stats{grid, std::vector<double>(grid.size(), 0.0), kind};
    for (std::size_t k = 0; k < grid.size(); ++k) {
        double fraction = grid.level(k);
        if (kind == StatisticKind::Quantile && agent.variant == Variant::IEQN) {
            fraction = agent.mapper_value(fraction);
        }
        stats.values[k] = agent.z_value(state, fraction, action);
    }
    return stats;
}

double spread_metric(const StatisticVector& stats, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("spread_metric: scale must be > 0");
    return (stats.value_at(0.9) - stats.value_at(0.1)) / scale;
}

double default_spread_scale(const StatisticVector& stats) {
    return std::max(std::abs(stats.value_at(0.5)), 1e-3);
}

namespace {

bool records_quantiles(Variant v) { return v != Variant::IENNaive; }
bool records_expectiles(Variant v) { return v == Variant::IENNaive || v == Variant::IEQN; }

void record_eval(const AgentState& agent, const mdp::TabularMDP& m, std::size_t step,
                 std::optional<double> loss_e, std::optional<double> loss_q, TrainTrace& trace) {
    const FractionGrid grid(kEvalGridSize);
    std::vector<double> greedy_fracs(grid.levels());
    for (std::size_t s = 0; s < m.n_states; ++s) {
        if (m.terminal[s]) continue;
        const std::size_t a = greedy_action(agent, s, greedy_fracs);
        TraceSummaryRow summary{step, s, std::nullopt, std::nullopt, loss_e, loss_q};
        if (records_quantiles(agent.variant)) {
            const auto stats = fraction_statistics(agent, s, a, grid, StatisticKind::Quantile);
            for (std::size_t k = 0; k < grid.size(); ++k) {
                trace.stats.push_back(
                    {step, s, StatisticKind::Quantile, grid.level(k), stats.values[k]});
            }
            summary.quantile_spread = spread_metric(stats, default_spread_scale(stats));
        }
        if (records_expectiles(agent.variant)) {
            const auto stats = fraction_statistics(agent, s, a, grid, StatisticKind::Expectile);
            for (std::size_t k = 0; k < grid.size(); ++k) {
                trace.stats.push_back(
                    {step, s, StatisticKind::Expectile, grid.level(k), stats.values[k]});
            }
            summary.expectile_spread = spread_metric(stats, default_spread_scale(stats));
        }
        trace.summary.push_back(summary);
    }
}

}  // namespace

TrainTrace train(const mdp::TabularMDP& m, const AgentConfig& cfg, std::size_t n_steps,
                 std::size_t eval_every) {
    AgentState agent = make_agent(m, cfg);
    Rng env_rng(Rng::split_tag(cfg.seed, "env"));
    Rng action_rng(Rng::split_tag(cfg.seed, "action-fractions"));

    TrainTrace trace;
    std::optional<double> last_loss_e;
    std::optional<double> last_loss_q;

    std::size_t state = 0;
    try {
        for (std::size_t step = 1; step <= n_steps; ++step) {
            std::vector<double> action_fracs = cfg.fixed_fractions;
            if (action_fracs.empty()) {
                action_fracs.resize(cfg.n_fractions);
                for (double& f : action_fracs) f = action_rng.next_open_double();
            }
            const std::size_t action = greedy_action(agent, state, action_fracs);

            const double reward = m.reward(state, action).sample(env_rng);
            const auto& row = m.transition_row(state, action);
            const double u = env_rng.next_double();
            double cum = 0.0;
            std::size_t next = m.n_states - 1;
            for (std::size_t cand = 0; cand < m.n_states; ++cand) {
                cum += row[cand];
                if (u < cum) {
                    next = cand;
                    break;
                }
            }
            const Transition tr{state, action, reward, next, m.terminal[next]};

            for (std::size_t rep = 0; rep < cfg.updates_per_sample; ++rep) {
                if (cfg.variant == Variant::IEQN) {
                    const UpdateLosses losses = ieqn_update(agent, tr, cfg);
                    last_loss_e = losses.loss_e;
                    last_loss_q = losses.loss_q;
                } else {
                    const double loss = baseline_update(agent, tr, cfg);
                    if (cfg.variant == Variant::IENNaive) {
                        last_loss_e = loss;
                    } else {
                        last_loss_q = loss;
                    }
                }
            }

            state = tr.done ? 0 : next;

            if (eval_every != 0 && step % eval_every == 0 && step != n_steps) {
                record_eval(agent, m, step, last_loss_e, last_loss_q, trace);
            }
        }
    } catch (const DivergenceError& err) {
        throw TrainDivergence(err, std::move(trace));
    }
    record_eval(agent, m, n_steps, last_loss_e, last_loss_q, trace);
    return trace;
}

namespace {

template <class Loop>
std::vector<TrainTrace> train_many_impl(const mdp::TabularMDP& m,
                                        std::span<const AgentConfig> configs, std::size_t n_steps,
                                        std::size_t eval_every, Loop&& loop) {
    std::vector<TrainTrace> traces(configs.size());
    // exceptions must not escape the worker loop; collect and rethrow the
    // first one (by run index) after joining
    std::vector<std::exception_ptr> errors(configs.size());
    loop(configs.size(), [&](std::size_t i) {
        try {
            traces[i] = train(m, configs[i], n_steps, eval_every);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    });
    for (const auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }
    return traces;
}

}  // namespace

std::vector<TrainTrace> train_many(const mdp::TabularMDP& m, std::span<const AgentConfig> configs,
                                   std::size_t n_steps, std::size_t eval_every) {
    return train_many_impl(m, configs, n_steps, eval_every,
                           [](std::size_t n, auto&& f) { parallel_for(n, f); });
}

std::vector<TrainTrace> train_many_serial(const mdp::TabularMDP& m,
                                          std::span<const AgentConfig> configs,
                                          std::size_t n_steps, std::size_t eval_every) {
    return train_many_impl(m, configs, n_steps, eval_every,
                           [](std::size_t n, auto&& f) { serial_for(n, f); });
}

}  // namespace ieqn::agents
