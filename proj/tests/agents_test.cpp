#include <doctest.h>

#include <cmath>
#include <vector>

#include "ieqn/agents.hpp"
#include "test_util.hpp"

using ieqn::Rng;
using ieqn::dist::FractionGrid;
using ieqn::test::bimodal_spec;
using namespace ieqn::agents;

namespace {

ieqn::mdp::TabularMDP toy_chain(std::size_t states = 3) {
    return ieqn::mdp::chain_mdp(states, bimodal_spec(), 500, 99);
}

/// Chain-like MDP with two actions so greedy selection is non-trivial;
/// both actions behave identically.
ieqn::mdp::TabularMDP two_action_mdp() {
    auto m = toy_chain(2);
    ieqn::mdp::TabularMDP out;
    out.n_states = m.n_states;
    out.n_actions = 2;
    out.gamma = m.gamma;
    out.terminal = m.terminal;
    for (std::size_t s = 0; s < m.n_states; ++s) {
        for (std::size_t a = 0; a < 2; ++a) {
            out.transitions.push_back(m.transition_row(s, 0));
            out.rewards.push_back(m.reward(s, 0));
        }
    }
    out.validate();
    return out;
}

AgentConfig quick_config(Variant variant, std::uint64_t seed = 1) {
    AgentConfig cfg;
    cfg.variant = variant;
    cfg.seed = seed;
    cfg.z_lr = 1e-3;
    cfg.mapper_lr = 1e-3;
    cfg.n_fractions = 4;
    cfg.z_hidden = 16;
    cfg.mapper_hidden = 16;
    cfg.target_update_period = 20;
    return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("agents");

TEST_CASE("greedy_action ties break to the lowest index") {
    const auto m = two_action_mdp();
    auto cfg = quick_config(Variant::IQN0);
    auto agent = make_agent(m, cfg);

    const std::vector<double> fracs{0.25, 0.5, 0.75};

    // force identical action heads: zero the output layer entirely
    std::fill(agent.z_params.values.end() - static_cast<std::ptrdiff_t>(
                  (agent.z_spec.layer_sizes[2] + 1) * m.n_actions),
              agent.z_params.values.end(), 0.0);
    CHECK(greedy_action(agent, 0, fracs) == 0);

    // hand-set bias so action 1's mean is larger by 1.0
    agent.z_params.values.back() = 1.0;  // bias of the last output unit
    CHECK(greedy_action(agent, 0, fracs) == 1);

    // single-action chain always picks action 0
    const auto single = toy_chain();
    auto single_agent = make_agent(single, quick_config(Variant::IEQN));
    CHECK(greedy_action(single_agent, 0, fracs) == 0);
}

TEST_CASE("ieqn update on a zero-reward done transition is a no-op") {
    const auto m = toy_chain();
    auto cfg = quick_config(Variant::IEQN);
    auto agent = make_agent(m, cfg);
    // zero nets: every candidate and target is zero
    std::fill(agent.z_params.values.begin(), agent.z_params.values.end(), 0.0);
    agent.z_target = agent.z_params;
    const auto z_before = agent.z_params;
    const auto m_before = agent.mapper_params;

    const Transition done{2, 0, 0.0, 3, true};
    const auto losses = ieqn_update(agent, done, cfg);
    CHECK(losses.loss_e == 0.0);
    CHECK(losses.loss_q == 0.0);
    CHECK(agent.z_params == z_before);
    CHECK(agent.mapper_params == m_before);
}

TEST_CASE("done transitions never query the target networks") {
    const auto m = toy_chain();
    auto cfg = quick_config(Variant::IEQN);
    auto agent = make_agent(m, cfg);
    const Transition done{2, 0, 1.5, 3, true};
    for (int i = 0; i < 5; ++i) ieqn_update(agent, done, cfg);
    CHECK(agent.z_target_queries == 0);
    CHECK(agent.mapper_target_queries == 0);

    const Transition live{0, 0, 0.0, 1, false};
    ieqn_update(agent, live, cfg);
    CHECK(agent.z_target_queries == cfg.n_fractions);
    CHECK(agent.mapper_target_queries == cfg.n_fractions);

    auto baseline = make_agent(m, quick_config(Variant::IQN0));
    baseline_update(baseline, done, quick_config(Variant::IQN0));
    CHECK(baseline.z_target_queries == 0);
    baseline_update(baseline, live, quick_config(Variant::IQN0));
    CHECK(baseline.z_target_queries == quick_config(Variant::IQN0).n_fractions);
}

TEST_CASE("with N=1 and tau=0.5 the update is classical TD") {
    const auto m = toy_chain();
    auto cfg = quick_config(Variant::IEQN, 5);
    cfg.n_fractions = 1;
    cfg.fixed_fractions = {0.5};
    cfg.z_lr = 3e-3;
    cfg.optimizer = ieqn::approx::OptimizerState::Method::SGD;
    cfg.target_update_period = 1000000;  // freeze targets: fixed TD target
    auto agent = make_agent(m, cfg);

    // the expectile loss at tau = 0.5 is half a squared TD error
    const Transition live{0, 0, 0.25, 1, false};
    const auto fracs = std::vector<double>{0.5};
    const auto report = ieqn_losses(agent, live, cfg, fracs);
    const double e = agent.z_value(0, 0.5, 0);
    const double target =
        live.r + cfg.gamma * agent.z_target_value(1, agent.mapper_target_value(0.5), 0);
    CHECK(report.loss_e == doctest::Approx(0.5 * (target - e) * (target - e)).epsilon(1e-12));

    for (int i = 0; i < 6000; ++i) ieqn_update(agent, live, cfg);
    CHECK(agent.z_value(0, 0.5, 0) == doctest::Approx(target).epsilon(1e-3));
}

TEST_CASE("gradient routing separates the two losses") {
    const auto m = toy_chain();
    auto cfg = quick_config(Variant::IEQN, 7);
    auto agent = make_agent(m, cfg);
    const Transition live{0, 0, 0.7, 1, false};
    const std::vector<double> fracs{0.2, 0.55, 0.9, 0.35};

    const auto report = ieqn_losses(agent, live, cfg, fracs);

    // finite-difference of loss_e through the candidate path w.r.t. phi is
    // exactly zero: e_i never touches the mapper
    auto perturbed = agent;
    for (std::size_t i = 0; i < perturbed.mapper_params.values.size(); i += 7) {
        perturbed.mapper_params.values[i] += 0.05;
    }
    const auto report2 = ieqn_losses(perturbed, live, cfg, fracs);
    CHECK(report2.loss_e == report.loss_e);
    CHECK(report2.loss_q != report.loss_q);  // the quantile path does move

    // an L_E-only step changes theta only; an L_Q-only step changes phi only
    auto agent_e = agent;
    agent_e.z_opt.step(agent_e.z_params, report.z_grad);
    CHECK(!(agent_e.z_params == agent.z_params));
    CHECK(agent_e.mapper_params == agent.mapper_params);

    auto agent_q = agent;
    agent_q.mapper_opt.step(agent_q.mapper_params, report.mapper_grad);
    CHECK(agent_q.z_params == agent.z_params);
    CHECK(!(agent_q.mapper_params == agent.mapper_params));
}

TEST_CASE("baseline losses: huber shrinks to the L1 loss") {
    const auto m = toy_chain();
    const Transition live{0, 0, 0.3, 1, false};

    auto cfg0 = quick_config(Variant::IQN0, 13);
    auto cfg1 = quick_config(Variant::IQN1, 13);
    cfg1.kappa = 1e-9;
    auto agent0 = make_agent(m, cfg0);
    auto agent1 = make_agent(m, cfg1);
    agent1.variant = Variant::IQN1;

    // identical seeds give identical networks and identical fractions
    const double loss0 = baseline_update(agent0, live, cfg0);
    const double loss1 = baseline_update(agent1, live, cfg1);
    CHECK(std::abs(loss0 - loss1) <= 1e-6);
}

TEST_CASE("baseline zero-loss on zeroed nets") {
    const auto m = toy_chain();
    for (const auto variant : {Variant::IQN0, Variant::IQN1, Variant::IENNaive}) {
        auto cfg = quick_config(variant, 3);
        auto agent = make_agent(m, cfg);
        std::fill(agent.z_params.values.begin(), agent.z_params.values.end(), 0.0);
        agent.z_target = agent.z_params;
        const Transition done{2, 0, 0.0, 3, true};
        CHECK(baseline_update(agent, done, cfg) == 0.0);
    }
}

TEST_CASE("mapper outputs stay inside (0,1) during training") {
    const auto m = toy_chain();
    auto cfg = quick_config(Variant::IEQN, 21);
    auto agent = make_agent(m, cfg);
    Rng env(4);
    const FractionGrid grid(21);
    std::size_t state = 0;
    for (int step = 0; step < 500; ++step) {
        const double r = m.reward(state, 0).sample(env);
        const std::size_t next = state + 1;
        const Transition tr{state, 0, r, next, m.terminal[next]};
        ieqn_update(agent, tr, cfg);
        state = tr.done ? 0 : next;
        if (step % 50 == 0) {
            for (std::size_t k = 0; k < grid.size(); ++k) {
                const double mapped = agent.mapper_value(grid.level(k));
                CHECK(mapped > 0.0);
                CHECK(mapped < 1.0);
            }
        }
    }
}

TEST_CASE("train is deterministic and honors eval_every") {
    const auto m = toy_chain();
    auto cfg = quick_config(Variant::IEQN, 31);
    const auto a = train(m, cfg, 200, 50);
    const auto b = train(m, cfg, 200, 50);
    REQUIRE(a.stats.size() == b.stats.size());
    for (std::size_t i = 0; i < a.stats.size(); ++i) {
        CHECK(a.stats[i].value == b.stats[i].value);
        CHECK(a.stats[i].step == b.stats[i].step);
    }

    // eval_every = 0: only the final snapshot, one eval per live state
    const auto final_only = train(m, cfg, 100, 0);
    std::size_t distinct_steps = 0;
    std::size_t last = 0;
    for (const auto& row : final_only.summary) {
        if (row.step != last) {
            ++distinct_steps;
            last = row.step;
        }
    }
    CHECK(distinct_steps == 1);
    CHECK(final_only.summary.front().step == 100);

    // different seeds genuinely differ
    auto cfg2 = cfg;
    cfg2.seed = 32;
    const auto c = train(m, cfg2, 200, 0);
    CHECK(c.stats.back().value != a.stats.back().value);
}

TEST_CASE("spread_metric") {
    const FractionGrid grid(51);
    StatisticVector constant{grid, std::vector<double>(51, 2.5), StatisticKind::Expectile};
    CHECK(spread_metric(constant, 1.0) == 0.0);

    // values equal to the fraction levels: spread = 0.9 - 0.1
    StatisticVector ramp{grid, grid.levels(), StatisticKind::Quantile};
    CHECK(spread_metric(ramp, 1.0) == doctest::Approx(0.8).epsilon(1e-12));

    CHECK_THROWS(spread_metric(ramp, 0.0));
    CHECK_THROWS(spread_metric(ramp, -1.0));

    CHECK(default_spread_scale(ramp) == doctest::Approx(0.5).epsilon(1e-12));
    StatisticVector zeros{grid, std::vector<double>(51, 0.0), StatisticKind::Expectile};
    CHECK(default_spread_scale(zeros) == 1e-3);
}

TEST_CASE("trained ieqn quantile readout approximates the reward distribution") {
    // full desk-scale run: the quantile statistics at the reward state,
    // taken as uniform atoms, land near the reward distribution (W1 about
    // 0.4-0.56 across seeds at this budget, against ~1.9 untrained; the
    // learned tails saturate around +-2.6 because extreme-fraction
    // expectiles train slowly under U(0,1) fraction sampling).
    const auto m = ieqn::mdp::chain_mdp(3, bimodal_spec(), 1000, 99);
    AgentConfig cfg;
    cfg.variant = Variant::IEQN;
    cfg.seed = 1234;
    cfg.z_lr = 1e-3;
    cfg.mapper_lr = 1e-3;
    cfg.n_fractions = 8;
    cfg.target_update_period = 200;
    const std::size_t n_steps = 40000;
    const auto trace = train(m, cfg, n_steps, 0);

    std::vector<double> q_atoms;
    for (const auto& row : trace.stats) {
        if (row.step == n_steps && row.state == 2 &&
            row.kind == ieqn::regression::StatisticKind::Quantile) {
            q_atoms.push_back(row.value);
        }
    }
    REQUIRE(q_atoms.size() == 51);
    std::sort(q_atoms.begin(), q_atoms.end());
    const auto readout = ieqn::dist::EmpiricalDistribution::uniform_atoms(std::move(q_atoms));
    CHECK(ieqn::dist::wasserstein1(readout, m.reward(2, 0)) <= 0.6);
}

TEST_CASE("train divergence carries the partial trace") {
    const auto m = toy_chain();
    auto cfg = quick_config(Variant::IEQN, 41);
    cfg.optimizer = ieqn::approx::OptimizerState::Method::SGD;
    cfg.z_lr = 1e18;
    cfg.mapper_lr = 1e18;
    bool threw = false;
    try {
        train(m, cfg, 5000, 10);
    } catch (const TrainDivergence& e) {
        threw = true;
        CHECK(e.step() < 5000);
    }
    CHECK(threw);
}

TEST_SUITE_END();
