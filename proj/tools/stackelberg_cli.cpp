// Command-line front end: run one experiment, sweep inner tolerances and
// seeds, print the regret baseline, or certify a finished run.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stackelberg/stackelberg.hpp"

namespace fs = std::filesystem;
using namespace stackelberg;

namespace {

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    return ExperimentConfig::from_json(j);
}

std::vector<double> parse_tolerances(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    if (out.empty()) throw std::runtime_error("empty --inner-tol list");
    return out;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stackelberg pricing learner"};
    app.require_subcommand(1);

    std::string config_path, out_dir, rounds_path, tol_list = "1e-6,0.1,0.3,0.5";
    std::optional<std::uint64_t> seed_override;
    int n_seeds = 10;
    double epsilon = 1e-2;

    auto* run = app.add_subcommand("run", "run one experiment and write outputs");
    run->add_option("--config", config_path, "experiment config JSON")->required();
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--seed", seed_override, "override the config seed");

    auto* sweep = app.add_subcommand("sweep", "run a tolerance x seed sweep");
    sweep->add_option("--config", config_path, "experiment config JSON")->required();
    sweep->add_option("--inner-tol", tol_list, "comma-separated inner tolerances");
    sweep->add_option("--seeds", n_seeds, "number of consecutive seeds per tolerance");
    sweep->add_option("--out", out_dir, "output directory")->required();

    auto* baseline = app.add_subcommand("baseline", "print the regret baseline and its argmin");
    baseline->add_option("--config", config_path, "experiment config JSON")->required();

    auto* certify = app.add_subcommand("certify", "certify a finished run from its rounds CSV");
    certify->add_option("--rounds", rounds_path, "rounds.csv of a finished run")->required();
    certify->add_option("--config", config_path, "experiment config JSON")->required();
    certify->add_option("--epsilon", epsilon, "certificate target");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            ExperimentConfig config = load_config(config_path);
            if (seed_override) config.seed = *seed_override;
            const ExperimentResult result = run_experiment(config);
            emit_outputs(result, config, out_dir);
            std::cout << "wrote " << (fs::path(out_dir) / "rounds.csv").string() << "\n";
        } else if (*sweep) {
            const ExperimentConfig base = load_config(config_path);
            nlohmann::json sweep_summary = nlohmann::json::array();
            for (double tol : parse_tolerances(tol_list)) {
                std::vector<double> best_costs, avg_regrets;
                for (int s = 0; s < n_seeds; ++s) {
                    ExperimentConfig config = base;
                    config.inner_stop.value = tol;
                    config.seed = base.seed + static_cast<std::uint64_t>(s);
                    const ExperimentResult result = run_experiment(config);
                    char tag[64];
                    std::snprintf(tag, sizeof(tag), "tol_%g/seed_%llu", tol,
                                  static_cast<unsigned long long>(config.seed));
                    emit_outputs(result, config, fs::path(out_dir) / tag);
                    double best = result.records.front().realized_cost;
                    for (const auto& r : result.records)
                        best = std::min(best, r.realized_cost);
                    best_costs.push_back(best);
                    avg_regrets.push_back(result.records.back().average_regret);
                }
                sweep_summary.push_back({{"inner_tol", tol},
                                         {"median_best_cost", median(best_costs)},
                                         {"median_avg_regret", median(avg_regrets)},
                                         {"seeds", n_seeds}});
                std::cout << "tol " << tol << ": median best cost "
                          << median(best_costs) << ", median avg regret "
                          << median(avg_regrets) << "\n";
            }
            std::ofstream out(fs::path(out_dir) / "sweep_summary.json", std::ios::binary);
            out << sweep_summary.dump(2) << "\n";
        } else if (*baseline) {
            const ExperimentConfig config = load_config(config_path);
            const auto [value, pi] = regret_baseline(config.game, config.regret_oracle_grid);
            nlohmann::json j{{"baseline", value},
                             {"argmin", std::vector<double>(pi.data(), pi.data() + pi.size())}};
            std::cout << j.dump(2) << "\n";
        } else if (*certify) {
            const ExperimentConfig config = load_config(config_path);
            const auto rounds = read_rounds_csv(rounds_path);
            if (rounds.empty()) throw std::runtime_error("no rounds in " + rounds_path);
            const CsvRound* best = &rounds.front();
            for (const auto& r : rounds)
                if (r.realized_cost < best->realized_cost) best = &r;

            // The inner loop is deterministic, so the allocation at t* is
            // reproducible from the price and the config's stopping rule.
            const RidehailGame game(config.game);
            const NeResult oracle = ne_oracle(game, best->price);
            NeResult inner;
            switch (config.inner_stop.kind) {
                case StoppingRuleSpec::Kind::MaxIters:
                    inner = approx_ne(game, best->price,
                                      MaxIters{static_cast<std::int64_t>(config.inner_stop.value)});
                    break;
                case StoppingRuleSpec::Kind::Residual:
                    inner = approx_ne(game, best->price, Residual{config.inner_stop.value});
                    break;
                case StoppingRuleSpec::Kind::DistanceToOracle:
                    inner = approx_ne(game, best->price,
                                      DistanceToOracle{config.inner_stop.value, oracle.x_star});
                    break;
            }
            RoundRecord rec;
            rec.t = best->t;
            rec.price = best->price;
            rec.allocation = inner.x_star;
            rec.realized_cost = best->realized_cost;
            const StackelbergReport report = certify_stackelberg(
                {rec}, config.game, epsilon, config.regret_oracle_grid);
            std::cout << report.to_json().dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
