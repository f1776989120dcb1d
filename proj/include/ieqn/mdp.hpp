#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "ieqn/dist.hpp"

namespace ieqn::mdp {

using dist::EmpiricalDistribution;
using dist::GaussianMixtureSpec;

/// Finite MDP with per-(s,a) empirical reward distributions. Terminal
/// states must self-loop with zero reward; validate() enforces that along
/// with row-stochastic transitions (tolerance 1e-12) and gamma in [0,1].
struct TabularMDP {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<EmpiricalDistribution> rewards;     // indexed s * n_actions + a
    std::vector<std::vector<double>> transitions;   // row per (s,a), one prob per next state
    std::vector<bool> terminal;                     // per state
    double gamma = 1.0;

    std::size_t sa_index(std::size_t s, std::size_t a) const { return s * n_actions + a; }
    const EmpiricalDistribution& reward(std::size_t s, std::size_t a) const {
        return rewards[sa_index(s, a)];
    }
    const std::vector<double>& transition_row(std::size_t s, std::size_t a) const {
        return transitions[sa_index(s, a)];
    }

    void validate() const;
};

struct Policy {
    std::vector<std::vector<double>> probs;  // per state, one prob per action

    static Policy single_action(std::size_t n_states);
    void validate(const TabularMDP& mdp) const;
};

/// Current estimate of Z(s,a), one distribution per state-action pair.
/// Entries at terminal states are pinned to a dirac at zero.
struct ReturnTable {
    std::vector<EmpiricalDistribution> entries;  // indexed s * n_actions + a

    const EmpiricalDistribution& at(const TabularMDP& mdp, std::size_t s, std::size_t a) const {
        return entries[mdp.sa_index(s, a)];
    }
};

ReturnTable zero_return_table(const TabularMDP& mdp);

/// Largest per-(s,a) W1 between two tables.
double sup_w1(const ReturnTable& a, const ReturnTable& b);

/// CSV `state,action,atom,weight`.
void dump_csv(const ReturnTable& table, const TabularMDP& mdp, std::ostream& out);

/// Deterministic chain s_1 -> ... -> s_n plus an absorbing terminal state.
/// All transitions carry zero reward except the terminal transition out of
/// s_n, which carries `n_reward_atoms` samples of `terminal_reward`.
/// One action, gamma = 1.
TabularMDP chain_mdp(std::size_t n_chain_states, const GaussianMixtureSpec& terminal_reward,
                     std::size_t n_reward_atoms, std::uint64_t seed);

/// Single live state with a self-loop reward plus an (unreachable is fine)
/// terminal companion state; used for discounted fixed-point studies.
TabularMDP self_loop_mdp(const EmpiricalDistribution& reward, double gamma);

/// One application of the distributional Bellman operator: output(s,a) is
/// the exact finite mixture of r + gamma*z over (reward atom, next state,
/// next action, next-Z atom), compressed by quantile projection when it
/// exceeds max_atoms. Exact duplicates are merged first. Entries at
/// terminal states come out as a dirac at zero (episode over).
/// OpenMP over (s,a); the serial variant is the reference.
ReturnTable bellman_apply(const TabularMDP& mdp, const Policy& pi, const ReturnTable& z,
                          std::size_t max_atoms);
ReturnTable bellman_apply_serial(const TabularMDP& mdp, const Policy& pi, const ReturnTable& z,
                                 std::size_t max_atoms);

/// bellman_apply followed by the dual projection with k_count atoms at
/// every (s,a); the inner mixture is compressed at mixture_max_atoms.
ReturnTable dual_bellman_apply(const TabularMDP& mdp, const Policy& pi, const ReturnTable& z,
                               std::size_t k_count, std::size_t mixture_max_atoms = 1000);

/// Empirical per-(s,a) distribution of discounted rollout returns.
/// For gamma < 1 requires gamma^horizon * max|reward atom| <= 1e-6; for
/// gamma = 1 requires the policy-induced chain to terminate almost surely
/// (checked by reachability). Rollout r of pair (s,a) uses the substream
/// split(seed, sa*n_rollouts + r), so results are independent of thread
/// count. OpenMP over rollouts; serial variant kept as reference.
ReturnTable return_distribution_oracle(const TabularMDP& mdp, const Policy& pi,
                                       std::size_t n_rollouts, std::size_t horizon,
                                       std::uint64_t seed);
ReturnTable return_distribution_oracle_serial(const TabularMDP& mdp, const Policy& pi,
                                              std::size_t n_rollouts, std::size_t horizon,
                                              std::uint64_t seed);

/// Smallest horizon with gamma^h * r_max <= 1e-6 (at least 1). Throws for
/// gamma = 1 (caller must rely on almost-sure termination instead).
std::size_t suggested_horizon(const TabularMDP& mdp);

}  // namespace ieqn::mdp
