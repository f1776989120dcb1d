// Wall-clock comparison of the OpenMP kernels against their serial
// reference implementations. Run with --smoke for a quick correctness-
// oriented pass at tiny sizes.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "ieqn/agents.hpp"
#include "ieqn/dist.hpp"
#include "ieqn/mdp.hpp"
#include "ieqn/parallel.hpp"
#include "ieqn/projection.hpp"
#include "ieqn/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(const char* name, double serial_s, double parallel_s, bool identical) {
    std::printf("%-28s serial %8.3fs   openmp %8.3fs   speedup %5.2fx   %s\n", name, serial_s,
                parallel_s, parallel_s > 0.0 ? serial_s / parallel_s : 0.0,
                identical ? "results identical" : "RESULTS DIFFER");
}

}  // namespace

int main(int argc, char** argv) {
    const bool smoke = argc > 1 && std::strcmp(argv[1], "--smoke") == 0;
    std::printf("threads available: %d\n", ieqn::hardware_threads());

    const ieqn::dist::GaussianMixtureSpec bimodal(
        {{-2.0, 1.0, 0.5}, {2.0, 1.0, 0.5}});

    // Monte-Carlo return oracle
    {
        const auto m = ieqn::mdp::chain_mdp(smoke ? 3 : 6, bimodal, smoke ? 200 : 5000, 11);
        const auto pi = ieqn::mdp::Policy::single_action(m.n_states);
        const std::size_t rollouts = smoke ? 500 : 200000;

        auto t0 = Clock::now();
        const auto serial =
            ieqn::mdp::return_distribution_oracle_serial(m, pi, rollouts, m.n_states + 5, 7);
        const double serial_s = seconds_since(t0);
        t0 = Clock::now();
        const auto parallel =
            ieqn::mdp::return_distribution_oracle(m, pi, rollouts, m.n_states + 5, 7);
        const double parallel_s = seconds_since(t0);
        report("mc rollout oracle", serial_s, parallel_s,
               ieqn::mdp::sup_w1(serial, parallel) == 0.0);
    }

    // distributional Bellman sweep
    {
        const auto m = ieqn::mdp::chain_mdp(smoke ? 3 : 12, bimodal, smoke ? 200 : 20000, 13);
        const auto pi = ieqn::mdp::Policy::single_action(m.n_states);
        auto z = ieqn::mdp::zero_return_table(m);
        z = ieqn::mdp::bellman_apply(m, pi, z, 2000);  // warm start so every entry is wide

        const int sweeps = smoke ? 2 : 10;
        auto t0 = Clock::now();
        auto zs = z;
        for (int i = 0; i < sweeps; ++i) zs = ieqn::mdp::bellman_apply_serial(m, pi, zs, 2000);
        const double serial_s = seconds_since(t0);
        t0 = Clock::now();
        auto zp = z;
        for (int i = 0; i < sweeps; ++i) zp = ieqn::mdp::bellman_apply(m, pi, zp, 2000);
        const double parallel_s = seconds_since(t0);
        report("bellman backup sweep", serial_s, parallel_s, ieqn::mdp::sup_w1(zs, zp) == 0.0);
    }

    // nonexpansion pair battery
    {
        ieqn::Rng rng(99);
        const std::size_t n_pairs = smoke ? 8 : 300;
        std::vector<ieqn::dist::EmpiricalDistribution> dists;
        for (std::size_t i = 0; i < 2 * n_pairs; ++i) {
            std::vector<double> atoms(40);
            for (double& a : atoms) a = -3.0 + 6.0 * rng.next_double();
            dists.push_back(ieqn::dist::EmpiricalDistribution::uniform_atoms(std::move(atoms)));
        }
        auto t0 = Clock::now();
        const auto serial = ieqn::projection::nonexpansion_battery_serial(dists, 200);
        const double serial_s = seconds_since(t0);
        t0 = Clock::now();
        const auto parallel = ieqn::projection::nonexpansion_battery(dists, 200);
        const double parallel_s = seconds_since(t0);
        bool identical = serial.size() == parallel.size();
        for (std::size_t i = 0; identical && i < serial.size(); ++i) {
            identical = serial[i].lhs == parallel[i].lhs && serial[i].rhs == parallel[i].rhs;
        }
        report("nonexpansion battery", serial_s, parallel_s, identical);
    }

    // multi-seed agent training
    {
        const auto m = ieqn::mdp::chain_mdp(4, bimodal, 1000, 17);
        std::vector<ieqn::agents::AgentConfig> configs(smoke ? 2 : 4);
        for (std::size_t i = 0; i < configs.size(); ++i) {
            configs[i].variant = ieqn::agents::Variant::IEQN;
            configs[i].z_lr = 1e-3;
            configs[i].mapper_lr = 1e-3;
            configs[i].seed = 1000 + i;
        }
        const std::size_t steps = smoke ? 50 : 4000;

        auto t0 = Clock::now();
        const auto serial = ieqn::agents::train_many_serial(m, configs, steps, 0);
        const double serial_s = seconds_since(t0);
        t0 = Clock::now();
        const auto parallel = ieqn::agents::train_many(m, configs, steps, 0);
        const double parallel_s = seconds_since(t0);

        bool identical = serial.size() == parallel.size();
        for (std::size_t i = 0; identical && i < serial.size(); ++i) {
            identical = serial[i].stats.size() == parallel[i].stats.size();
            for (std::size_t r = 0; identical && r < serial[i].stats.size(); ++r) {
                identical = serial[i].stats[r].value == parallel[i].stats[r].value;
            }
        }
        report("multi-seed ieqn training", serial_s, parallel_s, identical);
    }

    return 0;
}
