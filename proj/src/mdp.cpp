#include "ieqn/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "ieqn/csv.hpp"
#include "ieqn/parallel.hpp"
#include "ieqn/projection.hpp"

namespace ieqn::mdp {

namespace {

constexpr double kRowTol = 1e-12;

bool is_zero_dirac(const EmpiricalDistribution& d) {
    return d.size() == 1 && d.min() == 0.0;
}

}  // namespace

void TabularMDP::validate() const {
    if (n_states == 0 || n_actions == 0) {
        throw std::invalid_argument("TabularMDP: empty state or action space");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument("TabularMDP: gamma must lie in [0,1]");
    }
    if (rewards.size() != n_states * n_actions || transitions.size() != n_states * n_actions ||
        terminal.size() != n_states) {
        throw std::invalid_argument("TabularMDP: table sizes inconsistent");
    }
    for (std::size_t s = 0; s < n_states; ++s) {
        for (std::size_t a = 0; a < n_actions; ++a) {
            const auto& row = transition_row(s, a);
            if (row.size() != n_states) {
                throw std::invalid_argument("TabularMDP: transition row length mismatch");
            }
            double total = 0.0;
            for (const double p : row) {
                if (p < 0.0) throw std::invalid_argument("TabularMDP: negative transition prob");
                total += p;
            }
            if (std::abs(total - 1.0) > kRowTol) {
                throw std::invalid_argument("TabularMDP: transition row does not sum to 1");
            }
            if (terminal[s]) {
                if (row[s] != 1.0) {
                    throw std::invalid_argument("TabularMDP: terminal state must self-loop");
                }
                if (!is_zero_dirac(reward(s, a))) {
                    throw std::invalid_argument("TabularMDP: terminal state must have zero reward");
                }
            }
        }
    }
}

Policy Policy::single_action(std::size_t n_states) {
    return Policy{std::vector<std::vector<double>>(n_states, std::vector<double>{1.0})};
}

void Policy::validate(const TabularMDP& mdp) const {
    if (probs.size() != mdp.n_states) throw std::invalid_argument("Policy: state count mismatch");
    for (const auto& row : probs) {
        if (row.size() != mdp.n_actions) {
            throw std::invalid_argument("Policy: action count mismatch");
        }
        double total = 0.0;
        for (const double p : row) {
            if (p < 0.0) throw std::invalid_argument("Policy: negative probability");
            total += p;
        }
        if (std::abs(total - 1.0) > kRowTol) {
            throw std::invalid_argument("Policy: row does not sum to 1");
        }
    }
}

ReturnTable zero_return_table(const TabularMDP& mdp) {
    return ReturnTable{std::vector<EmpiricalDistribution>(
        mdp.n_states * mdp.n_actions, EmpiricalDistribution::dirac(0.0))};
}

double sup_w1(const ReturnTable& a, const ReturnTable& b) {
    if (a.entries.size() != b.entries.size()) {
        throw std::invalid_argument("sup_w1: table size mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        worst = std::max(worst, dist::wasserstein1(a.entries[i], b.entries[i]));
    }
    return worst;
}

void dump_csv(const ReturnTable& table, const TabularMDP& mdp, std::ostream& out) {
    out << "state,action,atom,weight\n";
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            const auto& d = table.at(mdp, s, a);
            for (std::size_t i = 0; i < d.size(); ++i) {
                out << s << ',' << a << ',' << format_double(d.atoms()[i]) << ','
                    << format_double(d.weights()[i]) << '\n';
            }
        }
    }
}

TabularMDP chain_mdp(std::size_t n_chain_states, const GaussianMixtureSpec& terminal_reward,
                     std::size_t n_reward_atoms, std::uint64_t seed) {
    if (n_chain_states < 2) throw std::invalid_argument("chain_mdp: need at least 2 states");
    if (n_reward_atoms == 0) throw std::invalid_argument("chain_mdp: need reward atoms");

    const std::size_t n = n_chain_states + 1;  // + absorbing terminal
    TabularMDP m;
    m.n_states = n;
    m.n_actions = 1;
    m.gamma = 1.0;
    m.terminal.assign(n, false);
    m.terminal[n - 1] = true;

    const EmpiricalDistribution zero = EmpiricalDistribution::dirac(0.0);
    const EmpiricalDistribution final_reward =
        dist::sample_mixture(terminal_reward, n_reward_atoms, Rng::split_tag(seed, "chain-reward"));

    for (std::size_t s = 0; s < n; ++s) {
        std::vector<double> row(n, 0.0);
        if (s + 1 < n) {
            row[s + 1] = 1.0;  // ... -> next; s_n -> terminal
        } else {
            row[s] = 1.0;  // terminal self-loop
        }
        m.transitions.push_back(std::move(row));
        m.rewards.push_back(s == n_chain_states - 1 ? final_reward : zero);
    }
    m.validate();
    return m;
}

TabularMDP self_loop_mdp(const EmpiricalDistribution& reward, double gamma) {
    TabularMDP m;
    m.n_states = 1;
    m.n_actions = 1;
    m.gamma = gamma;
    m.terminal = {false};
    m.transitions = {{1.0}};
    m.rewards = {reward};
    m.validate();
    return m;
}

namespace {

/// Exact mixture of r + gamma*z for one (s,a); merged duplicates, weights
/// renormalized (they are products of three normalized vectors and drift by
/// a few ulps), then quantile-compressed if larger than max_atoms.
EmpiricalDistribution backup_one(const TabularMDP& mdp, const Policy& pi, const ReturnTable& z,
                                 std::size_t s, std::size_t a, std::size_t max_atoms) {
    if (mdp.terminal[s]) return EmpiricalDistribution::dirac(0.0);

    const auto& reward = mdp.reward(s, a);
    const auto& row = mdp.transition_row(s, a);

    std::vector<double> values;
    std::vector<double> weights;
    for (std::size_t next = 0; next < mdp.n_states; ++next) {
        const double p_next = row[next];
        if (p_next == 0.0) continue;
        if (mdp.terminal[next] || mdp.gamma == 0.0) {
            // episode over (or discount kills the continuation): only the
            // immediate reward contributes, whatever the stored entry says
            for (std::size_t ri = 0; ri < reward.size(); ++ri) {
                values.push_back(reward.atoms()[ri]);
                weights.push_back(p_next * reward.weights()[ri]);
            }
            continue;
        }
        for (std::size_t a2 = 0; a2 < mdp.n_actions; ++a2) {
            const double p_action = pi.probs[next][a2];
            if (p_action == 0.0) continue;
            const auto& zdist = z.at(mdp, next, a2);
            for (std::size_t ri = 0; ri < reward.size(); ++ri) {
                const double r = reward.atoms()[ri];
                const double wr = reward.weights()[ri];
                for (std::size_t zi = 0; zi < zdist.size(); ++zi) {
                    values.push_back(r + mdp.gamma * zdist.atoms()[zi]);
                    weights.push_back(p_next * p_action * wr * zdist.weights()[zi]);
                }
            }
        }
    }

    // sort and merge exact duplicates before building the distribution
    std::vector<std::size_t> order(values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
    std::vector<double> merged_values;
    std::vector<double> merged_weights;
    merged_values.reserve(values.size());
    merged_weights.reserve(values.size());
    for (const std::size_t idx : order) {
        if (!merged_values.empty() && merged_values.back() == values[idx]) {
            merged_weights.back() += weights[idx];
        } else {
            merged_values.push_back(values[idx]);
            merged_weights.push_back(weights[idx]);
        }
    }

    EmpiricalDistribution mixture = EmpiricalDistribution::with_normalization(
        std::move(merged_values), std::move(merged_weights));
    if (mixture.size() > max_atoms) {
        return projection::project_quantile(mixture, max_atoms);
    }
    return mixture;
}

template <class Loop>
ReturnTable bellman_impl(const TabularMDP& mdp, const Policy& pi, const ReturnTable& z,
                         std::size_t max_atoms, Loop&& loop) {
    if (max_atoms == 0) throw std::invalid_argument("bellman_apply: max_atoms must be >= 1");
    if (z.entries.size() != mdp.n_states * mdp.n_actions) {
        throw std::invalid_argument("bellman_apply: return table size mismatch");
    }
    ReturnTable out = zero_return_table(mdp);
    loop(mdp.n_states * mdp.n_actions, [&](std::size_t sa) {
        const std::size_t s = sa / mdp.n_actions;
        const std::size_t a = sa % mdp.n_actions;
        out.entries[sa] = backup_one(mdp, pi, z, s, a, max_atoms);
    });
    return out;
}

}  // namespace

ReturnTable bellman_apply(const TabularMDP& mdp, const Policy& pi, const ReturnTable& z,
                          std::size_t max_atoms) {
    return bellman_impl(mdp, pi, z, max_atoms,
                        [](std::size_t n, auto&& f) { parallel_for(n, f); });
}

ReturnTable bellman_apply_serial(const TabularMDP& mdp, const Policy& pi, const ReturnTable& z,
                                 std::size_t max_atoms) {
    return bellman_impl(mdp, pi, z, max_atoms,
                        [](std::size_t n, auto&& f) { serial_for(n, f); });
}

ReturnTable dual_bellman_apply(const TabularMDP& mdp, const Policy& pi, const ReturnTable& z,
                               std::size_t k_count, std::size_t mixture_max_atoms) {
    if (k_count == 0) throw std::invalid_argument("dual_bellman_apply: K must be >= 1");
    ReturnTable backed = bellman_apply(mdp, pi, z, mixture_max_atoms);
    parallel_for(backed.entries.size(), [&](std::size_t sa) {
        backed.entries[sa] = projection::project_dual(backed.entries[sa], k_count);
    });
    return backed;
}

namespace {

/// Almost-sure absorption under pi: every state reachable under pi must be
/// able to reach a terminal state.
bool terminates_almost_surely(const TabularMDP& mdp, const Policy& pi) {
    const std::size_t n = mdp.n_states;
    // can_reach_terminal: fixed point over "some successor can"
    std::vector<bool> can_reach(n, false);
    for (std::size_t s = 0; s < n; ++s) can_reach[s] = mdp.terminal[s];
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t s = 0; s < n; ++s) {
            if (can_reach[s]) continue;
            for (std::size_t a = 0; a < mdp.n_actions && !can_reach[s]; ++a) {
                if (pi.probs[s][a] == 0.0) continue;
                const auto& row = mdp.transition_row(s, a);
                for (std::size_t next = 0; next < n; ++next) {
                    if (row[next] > 0.0 && can_reach[next]) {
                        can_reach[s] = true;
                        changed = true;
                        break;
                    }
                }
            }
        }
    }
    // also every state reachable FROM a can-reach state must itself reach
    // terminal, otherwise mass can leak into a recurrent non-terminal class
    for (std::size_t s = 0; s < n; ++s) {
        if (!can_reach[s]) return false;
    }
    return true;
}

double rollout_return(const TabularMDP& mdp, const Policy& pi, std::size_t s0, std::size_t a0,
                      std::size_t horizon, Rng& rng) {
    double total = 0.0;
    double discount = 1.0;
    std::size_t s = s0;
    std::size_t a = a0;
    for (std::size_t t = 0; t < horizon; ++t) {
        if (mdp.terminal[s]) break;
        total += discount * mdp.reward(s, a).sample(rng);
        discount *= mdp.gamma;

        const auto& row = mdp.transition_row(s, a);
        const double u = rng.next_double();
        double cum = 0.0;
        std::size_t next = mdp.n_states - 1;
        for (std::size_t cand = 0; cand < mdp.n_states; ++cand) {
            cum += row[cand];
            if (u < cum) {
                next = cand;
                break;
            }
        }
        s = next;
        if (mdp.terminal[s]) break;

        const auto& action_row = pi.probs[s];
        const double ua = rng.next_double();
        double cuma = 0.0;
        std::size_t next_a = mdp.n_actions - 1;
        for (std::size_t cand = 0; cand < mdp.n_actions; ++cand) {
            cuma += action_row[cand];
            if (ua < cuma) {
                next_a = cand;
                break;
            }
        }
        a = next_a;
        if (discount == 0.0) break;
    }
    return total;
}

template <class Loop>
ReturnTable oracle_impl(const TabularMDP& mdp, const Policy& pi, std::size_t n_rollouts,
                        std::size_t horizon, std::uint64_t seed, Loop&& loop) {
    if (n_rollouts == 0) throw std::invalid_argument("oracle: n_rollouts must be >= 1");
    if (horizon == 0) throw std::invalid_argument("oracle: horizon must be >= 1");
    pi.validate(mdp);

    double r_max = 0.0;
    for (const auto& r : mdp.rewards) {
        r_max = std::max(r_max, std::max(std::abs(r.min()), std::abs(r.max())));
    }
    if (mdp.gamma >= 1.0) {
        if (!terminates_almost_surely(mdp, pi)) {
            throw std::invalid_argument(
                "oracle: gamma = 1 requires almost-sure termination under the policy");
        }
    } else if (std::pow(mdp.gamma, static_cast<double>(horizon)) * r_max > 1e-6) {
        throw std::invalid_argument("oracle: horizon too short for the discount tail bound");
    }

    const std::size_t n_pairs = mdp.n_states * mdp.n_actions;
    std::vector<double> returns(n_pairs * n_rollouts);
    loop(n_pairs * n_rollouts, [&](std::size_t task) {
        const std::size_t sa = task / n_rollouts;
        const std::size_t s = sa / mdp.n_actions;
        const std::size_t a = sa % mdp.n_actions;
        Rng rng(Rng::split(seed, task));
        returns[task] = rollout_return(mdp, pi, s, a, horizon, rng);
    });

    ReturnTable out = zero_return_table(mdp);
    for (std::size_t sa = 0; sa < n_pairs; ++sa) {
        std::vector<double> atoms(returns.begin() + static_cast<std::ptrdiff_t>(sa * n_rollouts),
                                  returns.begin() + static_cast<std::ptrdiff_t>((sa + 1) * n_rollouts));
        out.entries[sa] = EmpiricalDistribution::uniform_atoms(std::move(atoms));
    }
    return out;
}

}  // namespace

ReturnTable return_distribution_oracle(const TabularMDP& mdp, const Policy& pi,
                                       std::size_t n_rollouts, std::size_t horizon,
                                       std::uint64_t seed) {
    return oracle_impl(mdp, pi, n_rollouts, horizon, seed,
                       [](std::size_t n, auto&& f) { parallel_for(n, f); });
}

ReturnTable return_distribution_oracle_serial(const TabularMDP& mdp, const Policy& pi,
                                              std::size_t n_rollouts, std::size_t horizon,
                                              std::uint64_t seed) {
    return oracle_impl(mdp, pi, n_rollouts, horizon, seed,
                       [](std::size_t n, auto&& f) { serial_for(n, f); });
}

std::size_t suggested_horizon(const TabularMDP& mdp) {
    if (mdp.gamma >= 1.0) {
        throw std::invalid_argument("suggested_horizon: undefined for gamma = 1");
    }
    double r_max = 0.0;
    for (const auto& r : mdp.rewards) {
        r_max = std::max(r_max, std::max(std::abs(r.min()), std::abs(r.max())));
    }
    if (r_max == 0.0 || mdp.gamma == 0.0) return 1;
    std::size_t h = 1;
    double tail = mdp.gamma * r_max;
    while (tail > 1e-6 && h < 1000000) {
        tail *= mdp.gamma;
        ++h;
    }
    return h;
}

}  // namespace ieqn::mdp
