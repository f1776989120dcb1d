#include "ieqn/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "ieqn/agents.hpp"
#include "ieqn/csv.hpp"
#include "ieqn/errors.hpp"
#include "ieqn/mdp.hpp"
#include "ieqn/parallel.hpp"
#include "ieqn/projection.hpp"
#include "ieqn/regression.hpp"

namespace ieqn::cli {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

RunConfig::RunConfig(std::span<const KeySpec> schema)
    : schema_(schema.begin(), schema.end()) {
    for (const auto& spec : schema_) {
        if (!spec.required) values_[spec.key] = spec.default_value;
    }
}

const KeySpec& RunConfig::spec_for(const std::string& key) const {
    for (const auto& spec : schema_) {
        if (spec.key == key) return spec;
    }
    throw ConfigError("unknown key '" + key + "'");
}

void RunConfig::set(const std::string& key, const std::string& value) {
    spec_for(key);
    values_[key] = value;
}

void RunConfig::apply_set(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                              ": expected key = value");
        }
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void RunConfig::finalize() const {
    for (const auto& spec : schema_) {
        if (spec.required && values_.find(spec.key) == values_.end()) {
            throw ConfigError("missing required key '" + spec.key + "'");
        }
    }
}

bool RunConfig::has(const std::string& key) const {
    const auto it = values_.find(key);
    return it != values_.end() && !it->second.empty();
}

std::string RunConfig::get_string(const std::string& key) const {
    spec_for(key);
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required key '" + key + "'");
    return it->second;
}

double RunConfig::get_double(const std::string& key) const {
    try {
        return parse_double(get_string(key));
    } catch (const ConfigError&) {
        throw ConfigError("key '" + key + "': expected a number, got '" + get_string(key) + "'");
    }
}

std::size_t RunConfig::get_size(const std::string& key) const {
    const double v = get_double(key);
    if (v < 0.0 || v != std::floor(v) || v > 1e15) {
        throw ConfigError("key '" + key + "': expected a non-negative integer");
    }
    return static_cast<std::size_t>(v);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string text = get_string(key);
    try {
        return std::stoull(text);
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + text + "'");
    }
}

std::vector<std::size_t> RunConfig::get_size_list(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& field : split_csv_line(get_string(key))) {
        const std::string item = trim(field);
        if (item.empty()) continue;
        const double v = parse_double(item);
        if (v < 1.0 || v != std::floor(v)) {
            throw ConfigError("key '" + key + "': expected positive integers");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw ConfigError("key '" + key + "': empty list");
    return out;
}

dist::GaussianMixtureSpec RunConfig::get_mixture(const std::string& key) const {
    std::vector<dist::GaussianComponent> components;
    for (const auto& field : split_csv_line(get_string(key))) {
        const std::string item = trim(field);
        if (item.empty()) continue;
        const auto first = item.find(':');
        const auto second = item.find(':', first == std::string::npos ? first : first + 1);
        if (first == std::string::npos || second == std::string::npos) {
            throw ConfigError("key '" + key + "': components are mean:std:weight");
        }
        components.push_back({parse_double(trim(item.substr(0, first))),
                              parse_double(trim(item.substr(first + 1, second - first - 1))),
                              parse_double(trim(item.substr(second + 1)))});
    }
    if (components.empty()) throw ConfigError("key '" + key + "': no components");
    try {
        return dist::GaussianMixtureSpec(std::move(components));
    } catch (const std::invalid_argument& e) {
        throw ConfigError("key '" + key + "': " + e.what());
    }
}

namespace {

const std::string kBimodal = "-2:1:0.5,2:1:0.5";

const std::vector<KeySpec> kRegressSchema = {
    {"seed", "1", "root seed; every substream derives from it"},
    {"target.components", kBimodal, "gaussian mixture mean:std:weight[,...]"},
    {"target.samples", "10000", "atoms drawn from the mixture"},
    {"grid.k", "11", "number of fraction levels (2k-1)/(2K)"},
    {"fit.lr", "1e-4", "SGD learning rate"},
    {"fit.steps", "20000", "SGD steps"},
    {"fit.batch", "32", "minibatch size"},
    {"fit.seeds", "1", "independent fits; per-fit seed derives from the root"},
};

const std::vector<KeySpec> kProjectSchema = {
    {"seed", "1", "root seed"},
    {"target.components", kBimodal, "gaussian mixture mean:std:weight[,...]"},
    {"target.dirac", "", "when set, use a point mass at this value instead"},
    {"target.samples", "100000", "atoms drawn from the mixture"},
    {"study.k_list", "2,5,10,50,200", "projection sizes for the convergence study"},
    {"pairs.count", "100", "random distribution pairs for the nonexpansion table"},
    {"pairs.atoms", "20", "atoms per random distribution"},
    {"pairs.k", "200", "projection size for the nonexpansion table"},
};

const std::vector<KeySpec> kDpSchema = {
    {"seed", "1", "root seed"},
    {"mdp.kind", "chain", "chain | selfloop"},
    {"chain.states", "4", "live chain states (terminal state added)"},
    {"chain.reward_atoms", "10000", "atoms sampled for the terminal reward"},
    {"selfloop.reward_atoms", "2000", "atoms sampled for the self-loop reward"},
    {"reward.components", kBimodal, "reward mixture mean:std:weight[,...]"},
    {"gamma", "1.0", "discount; selfloop requires gamma < 1"},
    {"dp.k", "100", "dual projection size"},
    {"dp.iterations", "0", "fixed-point sweeps; 0 = automatic"},
    {"dp.max_atoms", "1000", "mixture compression inside the Bellman backup"},
    {"oracle.rollouts", "100000", "Monte-Carlo rollouts per state-action pair"},
    {"oracle.horizon", "0", "rollout cap; 0 = automatic"},
};

const std::vector<KeySpec> kTrainSchema = {
    {"seed", "1", "root seed"},
    {"agents", "ieqn,ien", "comma list of iqn0,iqn1,ien,ieqn"},
    {"seeds", "1", "independent runs per agent"},
    {"steps", "30000", "environment transitions per run"},
    {"eval_every", "0", "trace period; 0 = final snapshot only"},
    {"chain.states", "4", "live chain states"},
    {"chain.reward_atoms", "10000", "atoms sampled for the terminal reward"},
    {"reward.components", kBimodal, "reward mixture mean:std:weight[,...]"},
    {"gamma", "1.0", "discount"},
    {"agent.n_fractions", "8", "fractions per update, drawn U(0,1)"},
    {"agent.z_lr", "1e-4", "Z-network learning rate"},
    {"agent.mapper_lr", "7e-5", "mapper learning rate"},
    {"agent.target_update_period", "100", "steps between target refreshes"},
    {"agent.polyak_weight", "0.5", "mapper target blend weight"},
    {"agent.kappa", "1.0", "Huber width (iqn1)"},
    {"agent.updates_per_sample", "1", "gradient updates per transition"},
    {"agent.z_hidden", "64", "Z-network hidden width"},
    {"agent.mapper_hidden", "64", "mapper hidden width"},
    {"agent.optimizer", "adam", "adam | sgd"},
};

const std::vector<KeySpec> kSpreadSchema = {
    {"seed", "1", "unused; accepted for interface uniformity"},
    {"input", "", "trace CSV (step,state,kind,fraction,value)", true},
    {"scale", "auto", "auto = |statistic at 0.5| floored at 1e-3, or a number"},
};

}  // namespace

const std::vector<KeySpec>& schema_for(const std::string& subcommand) {
    if (subcommand == "regress") return kRegressSchema;
    if (subcommand == "project") return kProjectSchema;
    if (subcommand == "dp") return kDpSchema;
    if (subcommand == "train") return kTrainSchema;
    if (subcommand == "spread") return kSpreadSchema;
    throw ConfigError("unknown subcommand '" + subcommand + "'");
}

std::string schema_help(const std::string& subcommand) {
    std::ostringstream out;
    out << "Config keys (key = value file or --set KEY=VALUE):\n";
    for (const auto& spec : schema_for(subcommand)) {
        out << "  " << spec.key;
        if (spec.required) {
            out << " (required)";
        } else {
            out << " = " << (spec.default_value.empty() ? "\"\"" : spec.default_value);
        }
        out << "\n      " << spec.help << "\n";
    }
    return out.str();
}

namespace {

/// Buffers every output file; nothing touches the disk until flush().
class OutputBundle {
public:
    OutputBundle(std::filesystem::path dir, bool quiet) : dir_(std::move(dir)), quiet_(quiet) {}

    void check_writable() const {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw ConfigError("cannot create output dir '" + dir_.string() + "'");
        const auto probe = dir_ / ".write-probe";
        std::ofstream f(probe);
        if (!f) throw ConfigError("output dir '" + dir_.string() + "' is not writable");
        f.close();
        std::filesystem::remove(probe, ec);
    }

    // files_ is a deque so references handed out here stay valid when
    // later files are opened
    std::ostringstream& file(const std::string& name) {
        for (auto& [existing, stream] : files_) {
            if (existing == name) return stream;
        }
        files_.emplace_back(name, std::ostringstream{});
        return files_.back().second;
    }

    void flush() {
        for (auto& [name, stream] : files_) {
            const auto path = dir_ / name;
            std::ofstream out(path, std::ios::binary);
            if (!out) throw ConfigError("cannot write '" + path.string() + "'");
            out << stream.str();
            if (!quiet_) std::cout << "wrote " << path.string() << "\n";
        }
    }

private:
    std::filesystem::path dir_;
    bool quiet_;
    std::deque<std::pair<std::string, std::ostringstream>> files_;
};

dist::EmpiricalDistribution make_target(const RunConfig& cfg, std::uint64_t seed) {
    if (cfg.has("target.dirac")) {
        return dist::EmpiricalDistribution::dirac(cfg.get_double("target.dirac"));
    }
    return dist::sample_mixture(cfg.get_mixture("target.components"),
                                cfg.get_size("target.samples"), seed);
}

void cmd_regress(const RunConfig& cfg, OutputBundle& out) {
    const std::uint64_t root_seed = cfg.get_u64("seed");
    const auto samples = dist::sample_mixture(cfg.get_mixture("target.components"),
                                              cfg.get_size("target.samples"),
                                              Rng::split_tag(root_seed, "target-samples"));
    const dist::FractionGrid grid(cfg.get_size("grid.k"));
    const std::size_t n_seeds = cfg.get_size("fit.seeds");
    if (n_seeds == 0) throw ConfigError("fit.seeds must be >= 1");

    regression::FitConfig fit;
    fit.learning_rate = cfg.get_double("fit.lr");
    fit.steps = cfg.get_size("fit.steps");
    fit.batch_size = cfg.get_size("fit.batch");

    // exact mapped fractions for the dual readout: the expectile fraction
    // whose value equals each grid quantile
    const auto mapper = projection::exact_mapper(samples, grid);
    std::vector<double> quantile_oracle(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        quantile_oracle[k] = samples.quantile(grid.level(k));
    }

    const auto trace_csv = [](const std::vector<double>& mae) {
        std::ostringstream s;
        s << "step,mae\n";
        for (std::size_t i = 0; i < mae.size(); ++i) {
            s << (i + 1) << ',' << format_double(mae[i]) << '\n';
        }
        return s.str();
    };

    for (std::size_t i = 0; i < n_seeds; ++i) {
        regression::FitConfig seeded = fit;
        seeded.seed = Rng::split(Rng::split_tag(root_seed, "fit"), i);
        const std::string suffix = "_s" + std::to_string(i) + ".csv";

        const auto l1 = regression::fit_statistics(samples, grid,
                                                   {regression::LossSpec::Kind::L1, 1.0}, seeded);
        const auto l2 = regression::fit_statistics(samples, grid,
                                                   {regression::LossSpec::Kind::L2, 1.0}, seeded);
        const auto mapped =
            regression::fit_expectiles_at(samples, mapper.mapped, quantile_oracle, seeded);

        out.file("regress_l1_mae" + suffix) << trace_csv(l1.mae_trace);
        out.file("regress_l2_mae" + suffix) << trace_csv(l2.mae_trace);
        out.file("regress_mapped_mae" + suffix) << trace_csv(mapped.mae_trace);

        auto& final_csv = out.file("regress_final" + suffix);
        final_csv << "kind,fraction,value\n";
        for (std::size_t k = 0; k < grid.size(); ++k) {
            final_csv << "quantile," << format_double(grid.level(k)) << ','
                      << format_double(l1.statistics.values[k]) << '\n';
        }
        for (std::size_t k = 0; k < grid.size(); ++k) {
            final_csv << "expectile," << format_double(grid.level(k)) << ','
                      << format_double(l2.statistics.values[k]) << '\n';
        }
        for (std::size_t k = 0; k < grid.size(); ++k) {
            final_csv << "mapped_quantile," << format_double(grid.level(k)) << ','
                      << format_double(mapped.values[k]) << '\n';
        }
    }
}

void cmd_project(const RunConfig& cfg, OutputBundle& out) {
    const std::uint64_t root_seed = cfg.get_u64("seed");
    const auto target = make_target(cfg, Rng::split_tag(root_seed, "target-samples"));

    const auto k_list = cfg.get_size_list("study.k_list");
    const auto rows = projection::convergence_study(target, k_list);
    auto& conv = out.file("convergence.csv");
    conv << "K,w1_dual,w1_quantile\n";
    for (const auto& row : rows) {
        conv << row.k_count << ',' << format_double(row.w1_dual) << ','
             << format_double(row.w1_quantile) << '\n';
    }

    const std::size_t n_pairs = cfg.get_size("pairs.count");
    const std::size_t n_atoms = cfg.get_size("pairs.atoms");
    if (n_atoms == 0) throw ConfigError("pairs.atoms must be >= 1");
    Rng rng(Rng::split_tag(root_seed, "pairs"));
    std::vector<dist::EmpiricalDistribution> dists;
    dists.reserve(2 * n_pairs);
    for (std::size_t i = 0; i < 2 * n_pairs; ++i) {
        std::vector<double> atoms(n_atoms);
        std::vector<double> weights(n_atoms);
        for (double& a : atoms) a = -3.0 + 6.0 * rng.next_double();
        for (double& w : weights) w = -std::log(rng.next_open_double());
        dists.push_back(dist::EmpiricalDistribution::with_normalization(std::move(atoms),
                                                                        std::move(weights)));
    }
    const auto results = projection::nonexpansion_battery(dists, cfg.get_size("pairs.k"));
    auto& pairs_csv = out.file("nonexpansion.csv");
    pairs_csv << "pair,lhs,rhs\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        pairs_csv << i << ',' << format_double(results[i].lhs) << ','
                  << format_double(results[i].rhs) << '\n';
    }
}

void cmd_dp(const RunConfig& cfg, OutputBundle& out) {
    const std::uint64_t root_seed = cfg.get_u64("seed");
    const double gamma = cfg.get_double("gamma");
    const std::string kind = cfg.get_string("mdp.kind");

    mdp::TabularMDP m;
    if (kind == "chain") {
        m = mdp::chain_mdp(cfg.get_size("chain.states"), cfg.get_mixture("reward.components"),
                           cfg.get_size("chain.reward_atoms"), Rng::split_tag(root_seed, "mdp"));
        m.gamma = gamma;
    } else if (kind == "selfloop") {
        if (!(gamma < 1.0)) throw ConfigError("selfloop requires gamma < 1");
        const auto reward = dist::sample_mixture(cfg.get_mixture("reward.components"),
                                                 cfg.get_size("selfloop.reward_atoms"),
                                                 Rng::split_tag(root_seed, "mdp"));
        m = mdp::self_loop_mdp(reward, gamma);
    } else {
        throw ConfigError("mdp.kind must be chain or selfloop");
    }
    m.validate();
    const auto pi = mdp::Policy::single_action(m.n_states);

    std::size_t horizon = cfg.get_size("oracle.horizon");
    if (horizon == 0) {
        horizon = m.gamma < 1.0 ? mdp::suggested_horizon(m) : m.n_states + 5;
    }
    const auto oracle = mdp::return_distribution_oracle(m, pi, cfg.get_size("oracle.rollouts"),
                                                        horizon,
                                                        Rng::split_tag(root_seed, "oracle"));

    std::size_t iterations = cfg.get_size("dp.iterations");
    if (iterations == 0) {
        iterations = m.gamma < 1.0
                         ? static_cast<std::size_t>(
                               std::ceil(std::log(1e-3) / std::log(std::max(m.gamma, 1e-6))))
                         : m.n_states + 5;
        iterations = std::min<std::size_t>(std::max<std::size_t>(iterations, 1), 300);
    }
    const std::size_t k_count = cfg.get_size("dp.k");
    const std::size_t max_atoms = cfg.get_size("dp.max_atoms");

    auto& iter_csv = out.file("dp_iterations.csv");
    iter_csv << "iteration,sup_w1_oracle\n";
    mdp::ReturnTable z = mdp::zero_return_table(m);
    for (std::size_t it = 1; it <= iterations; ++it) {
        z = mdp::dual_bellman_apply(m, pi, z, k_count, max_atoms);
        iter_csv << it << ',' << format_double(mdp::sup_w1(z, oracle)) << '\n';
    }

    std::ostringstream table;
    mdp::dump_csv(z, m, table);
    out.file("dp_final.csv") << table.str();
}

agents::Variant parse_variant(const std::string& name) {
    if (name == "iqn0") return agents::Variant::IQN0;
    if (name == "iqn1") return agents::Variant::IQN1;
    if (name == "ien") return agents::Variant::IENNaive;
    if (name == "ieqn") return agents::Variant::IEQN;
    throw ConfigError("unknown agent variant '" + name + "'");
}

const char* variant_name(agents::Variant v) {
    switch (v) {
        case agents::Variant::IQN0: return "iqn0";
        case agents::Variant::IQN1: return "iqn1";
        case agents::Variant::IENNaive: return "ien";
        case agents::Variant::IEQN: return "ieqn";
    }
    return "?";
}

std::string kind_name(regression::StatisticKind kind) {
    return kind == regression::StatisticKind::Quantile ? "quantile" : "expectile";
}

std::string optional_field(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

void write_trace(const agents::TrainTrace& trace, const std::string& suffix, OutputBundle& out) {
    auto& stats_csv = out.file("trace" + suffix);
    stats_csv << "step,state,kind,fraction,value\n";
    for (const auto& row : trace.stats) {
        stats_csv << row.step << ',' << row.state << ',' << kind_name(row.kind) << ','
                  << format_double(row.fraction) << ',' << format_double(row.value) << '\n';
    }
    auto& summary_csv = out.file("summary" + suffix);
    summary_csv << "step,state,quantile_spread,expectile_spread,loss_e,loss_q\n";
    for (const auto& row : trace.summary) {
        summary_csv << row.step << ',' << row.state << ',' << optional_field(row.quantile_spread)
                    << ',' << optional_field(row.expectile_spread) << ','
                    << optional_field(row.loss_e) << ',' << optional_field(row.loss_q) << '\n';
    }
}

void cmd_train(const RunConfig& cfg, OutputBundle& out) {
    const std::uint64_t root_seed = cfg.get_u64("seed");
    auto m = mdp::chain_mdp(cfg.get_size("chain.states"), cfg.get_mixture("reward.components"),
                            cfg.get_size("chain.reward_atoms"), Rng::split_tag(root_seed, "mdp"));
    m.gamma = cfg.get_double("gamma");
    m.validate();

    std::vector<agents::Variant> variants;
    for (const auto& field : split_csv_line(cfg.get_string("agents"))) {
        const std::string name = trim(field);
        if (!name.empty()) variants.push_back(parse_variant(name));
    }
    if (variants.empty()) throw ConfigError("agents: empty list");

    const std::string optimizer = cfg.get_string("agent.optimizer");
    if (optimizer != "adam" && optimizer != "sgd") {
        throw ConfigError("agent.optimizer must be adam or sgd");
    }

    agents::AgentConfig base;
    base.n_fractions = cfg.get_size("agent.n_fractions");
    base.z_lr = cfg.get_double("agent.z_lr");
    base.mapper_lr = cfg.get_double("agent.mapper_lr");
    base.target_update_period = cfg.get_size("agent.target_update_period");
    base.polyak_weight = cfg.get_double("agent.polyak_weight");
    base.kappa = cfg.get_double("agent.kappa");
    base.updates_per_sample = cfg.get_size("agent.updates_per_sample");
    base.z_hidden = cfg.get_size("agent.z_hidden");
    base.mapper_hidden = cfg.get_size("agent.mapper_hidden");
    base.gamma = m.gamma;
    base.optimizer = optimizer == "adam" ? approx::OptimizerState::Method::Adam
                                         : approx::OptimizerState::Method::SGD;

    const std::size_t n_seeds = cfg.get_size("seeds");
    if (n_seeds == 0) throw ConfigError("seeds must be >= 1");
    const std::size_t n_steps = cfg.get_size("steps");
    if (n_steps == 0) throw ConfigError("steps must be >= 1");
    const std::size_t eval_every = cfg.get_size("eval_every");

    std::vector<agents::AgentConfig> configs;
    for (const auto variant : variants) {
        for (std::size_t i = 0; i < n_seeds; ++i) {
            agents::AgentConfig run = base;
            run.variant = variant;
            run.seed = Rng::split(Rng::split_tag(root_seed, variant_name(variant)), i);
            configs.push_back(run);
        }
    }

    const auto traces = agents::train_many(m, configs, n_steps, eval_every);

    auto& ratios = out.file("spread_ratios.csv");
    ratios << "agent,seed,kind,spread_first,spread_last,ratio\n";
    const std::size_t first_state = 0;
    const std::size_t last_state = cfg.get_size("chain.states") - 1;

    for (std::size_t c = 0; c < configs.size(); ++c) {
        const auto& run = configs[c];
        const std::size_t seed_idx = c % n_seeds;
        const std::string suffix =
            std::string("_") + variant_name(run.variant) + "_s" + std::to_string(seed_idx) + ".csv";
        write_trace(traces[c], suffix, out);

        // raw final spreads from the last snapshot (scale 1; the ratio is
        // normalization-invariant)
        const std::size_t final_step = n_steps;
        for (const auto kind :
             {regression::StatisticKind::Quantile, regression::StatisticKind::Expectile}) {
            std::vector<double> fractions;
            std::vector<double> first_vals;
            std::vector<double> last_vals;
            for (const auto& row : traces[c].stats) {
                if (row.step != final_step || row.kind != kind) continue;
                if (row.state == first_state) {
                    fractions.push_back(row.fraction);
                    first_vals.push_back(row.value);
                } else if (row.state == last_state) {
                    last_vals.push_back(row.value);
                }
            }
            if (fractions.empty()) continue;
            const dist::FractionGrid grid(fractions.size());
            const agents::StatisticVector first_stats{grid, first_vals, kind};
            const agents::StatisticVector last_stats{grid, last_vals, kind};
            const double spread_first = agents::spread_metric(first_stats, 1.0);
            const double spread_last = agents::spread_metric(last_stats, 1.0);
            const double ratio = spread_last != 0.0
                                     ? spread_first / spread_last
                                     : std::numeric_limits<double>::quiet_NaN();
            ratios << variant_name(run.variant) << ',' << seed_idx << ',' << kind_name(kind) << ','
                   << format_double(spread_first) << ',' << format_double(spread_last) << ','
                   << format_double(ratio) << '\n';
        }
    }
}

void cmd_spread(const RunConfig& cfg, OutputBundle& out) {
    const std::string input = cfg.get_string("input");
    std::ifstream in(input);
    if (!in) throw ConfigError("cannot read trace file '" + input + "'");

    std::string line;
    if (!std::getline(in, line) ||
        split_csv_line(line) !=
            std::vector<std::string>{"step", "state", "kind", "fraction", "value"}) {
        throw ConfigError("trace CSV: bad header");
    }

    // (step, state) -> kind -> sorted (fraction, value)
    std::map<std::pair<std::size_t, std::size_t>,
             std::map<std::string, std::vector<std::pair<double, double>>>>
        groups;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 5) {
            throw ConfigError("trace CSV: bad row at line " + std::to_string(line_no));
        }
        const auto step = static_cast<std::size_t>(parse_double(fields[0]));
        const auto state = static_cast<std::size_t>(parse_double(fields[1]));
        groups[{step, state}][fields[2]].emplace_back(parse_double(fields[3]),
                                                      parse_double(fields[4]));
    }

    const std::string scale_text = cfg.get_string("scale");
    const bool auto_scale = scale_text == "auto";
    const double fixed_scale = auto_scale ? 0.0 : parse_double(scale_text);
    if (!auto_scale && !(fixed_scale > 0.0)) throw ConfigError("scale must be positive or auto");

    const auto interp = [](std::vector<std::pair<double, double>>& pts, double x) {
        std::sort(pts.begin(), pts.end());
        if (x <= pts.front().first) return pts.front().second;
        if (x >= pts.back().first) return pts.back().second;
        for (std::size_t i = 1; i < pts.size(); ++i) {
            if (pts[i].first >= x) {
                const double t = (x - pts[i - 1].first) / (pts[i].first - pts[i - 1].first);
                return pts[i - 1].second + t * (pts[i].second - pts[i - 1].second);
            }
        }
        return pts.back().second;
    };

    auto& csv = out.file("spread_summary.csv");
    csv << "step,state,quantile_spread,expectile_spread\n";
    for (auto& [key, kinds] : groups) {
        std::string q_field;
        std::string e_field;
        for (auto& [kind, pts] : kinds) {
            const double low = interp(pts, 0.1);
            const double high = interp(pts, 0.9);
            const double mid = interp(pts, 0.5);
            const double scale = auto_scale ? std::max(std::abs(mid), 1e-3) : fixed_scale;
            const std::string field = format_double((high - low) / scale);
            if (kind == "quantile") {
                q_field = field;
            } else if (kind == "expectile") {
                e_field = field;
            } else {
                throw ConfigError("trace CSV: unknown kind '" + kind + "'");
            }
        }
        csv << key.first << ',' << key.second << ',' << q_field << ',' << e_field << '\n';
    }
}

}  // namespace

int dispatch(const CliOptions& options) {
    try {
        RunConfig config(schema_for(options.subcommand));
        if (!options.config_path.empty()) config.load_file(options.config_path);
        for (const auto& kv : options.sets) config.apply_set(kv);
        if (options.seed) config.set("seed", std::to_string(*options.seed));
        config.finalize();

        OutputBundle out(options.out_dir, options.quiet);
        out.check_writable();

        if (options.subcommand == "regress") {
            cmd_regress(config, out);
        } else if (options.subcommand == "project") {
            cmd_project(config, out);
        } else if (options.subcommand == "dp") {
            cmd_dp(config, out);
        } else if (options.subcommand == "train") {
            cmd_train(config, out);
        } else if (options.subcommand == "spread") {
            cmd_spread(config, out);
        } else {
            throw ConfigError("unknown subcommand '" + options.subcommand + "'");
        }
        out.flush();
        return 0;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace ieqn::cli
