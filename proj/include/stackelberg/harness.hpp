#ifndef STACKELBERG_HARNESS_HPP
#define STACKELBERG_HARNESS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stackelberg/common.hpp"
#include "stackelberg/equilibrium.hpp"
#include "stackelberg/gp.hpp"
#include "stackelberg/gp_fit.hpp"
#include "stackelberg/leader.hpp"
#include "stackelberg/ridehail_game.hpp"

namespace stackelberg {

struct StoppingRuleSpec {
    enum class Kind { MaxIters, Residual, DistanceToOracle } kind = Kind::Residual;
    double value = 1e-8;  // iteration count, residual tolerance, or distance target

    nlohmann::json to_json() const {
        const char* name = kind == Kind::MaxIters ? "max_iters"
                           : kind == Kind::Residual ? "residual"
                                                    : "distance_to_oracle";
        return {{"kind", name}, {"value", value}};
    }
    static StoppingRuleSpec from_json(const nlohmann::json& j) {
        StoppingRuleSpec s;
        const std::string k = j.at("kind").get<std::string>();
        if (k == "max_iters")
            s.kind = Kind::MaxIters;
        else if (k == "residual")
            s.kind = Kind::Residual;
        else if (k == "distance_to_oracle")
            s.kind = Kind::DistanceToOracle;
        else
            throw std::invalid_argument("unknown stopping rule kind: " + k);
        s.value = j.at("value").get<double>();
        return s;
    }
};

struct ExperimentConfig {
    GameParams game;
    int rounds = 25;           // T
    int warmup_rounds = 5;     // random-price rounds used for GP calibration
    StoppingRuleSpec inner_stop;
    BetaSchedule beta_schedule;
    AcquisitionConfig acquisition;
    KernelSpec::Kind kernel_kind = KernelSpec::Kind::SquaredExponential;
    bool refit_after_warmup = true;
    std::uint64_t seed = 0;
    int regret_oracle_grid = 200;

    void validate() const {
        game.validate();
        if (rounds < warmup_rounds || warmup_rounds < 0)
            throw std::invalid_argument("ExperimentConfig: need T >= n_warm >= 0");
        if (regret_oracle_grid <= 0)
            throw std::invalid_argument("ExperimentConfig: regret_oracle_grid must be positive");
    }

    nlohmann::json to_json() const {
        return {{"game", game.to_json()},
                {"T", rounds},
                {"n_warm", warmup_rounds},
                {"inner_stop", inner_stop.to_json()},
                {"beta", beta_schedule.to_json()},
                {"acquisition", acquisition.to_json()},
                {"kernel_kind", kernel_kind == KernelSpec::Kind::SquaredExponential
                                    ? "squared_exponential"
                                    : "linear"},
                {"refit_after_warmup", refit_after_warmup},
                {"seed", seed},
                {"regret_oracle_grid", regret_oracle_grid}};
    }
    static ExperimentConfig from_json(const nlohmann::json& j) {
        ExperimentConfig c;
        c.game = GameParams::from_json(j.at("game"));
        c.rounds = j.at("T").get<int>();
        c.warmup_rounds = j.at("n_warm").get<int>();
        c.inner_stop = StoppingRuleSpec::from_json(j.at("inner_stop"));
        c.beta_schedule = BetaSchedule::from_json(j.at("beta"));
        c.acquisition = AcquisitionConfig::from_json(j.at("acquisition"));
        c.kernel_kind = j.at("kernel_kind").get<std::string>() == "linear"
                            ? KernelSpec::Kind::Linear
                            : KernelSpec::Kind::SquaredExponential;
        c.refit_after_warmup = j.at("refit_after_warmup").get<bool>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.regret_oracle_grid = j.at("regret_oracle_grid").get<int>();
        c.validate();
        return c;
    }
};

struct RoundRecord {
    int t = 0;
    PriceVector price;
    JointAllocation allocation;       // x^t, logged for diagnostics only
    double realized_cost = 0.0;       // J(pi^t, x^t(pi^t))
    double oracle_cost = 0.0;         // J(pi^t, x^*(pi^t))
    std::int64_t inner_iterations = 0;
    double inner_residual = 0.0;
    double instantaneous_regret = 0.0;
    double cumulative_regret = 0.0;
    double average_regret = 0.0;
};

struct StackelbergReport {
    int t_star = 0;
    PriceVector price;
    double leader_gap = 0.0;
    double follower_gap = 0.0;
    double epsilon_target = 0.0;
    bool certified = false;

    nlohmann::json to_json() const {
        return {{"t_star", t_star},
                {"price", std::vector<double>(price.data(), price.data() + price.size())},
                {"leader_gap", leader_gap},
                {"follower_gap", follower_gap},
                {"epsilon_target", epsilon_target},
                {"certified", certified}};
    }
};

// min over the price box of J(pi, x^*(pi)): uniform grid scan with
// warm-started oracle solves, then one coordinate-wise refinement pass around
// the best cell. Cached per game instance.
inline std::pair<double, PriceVector> regret_baseline(const GameParams& params,
                                                      int grid_points) {
    static std::mutex cache_mutex;
    static std::map<std::string, std::pair<double, PriceVector>> cache;
    const std::string key = params.to_json().dump() + "#" + std::to_string(grid_points);
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }

    const RidehailGame game(params);
    const long d = params.districts;
    const int n = grid_points;
    const long total = static_cast<long>(std::pow(static_cast<double>(n), static_cast<double>(d)));

    JointAllocation warm = game.initial_point();
    auto oracle_cost = [&](const PriceVector& pi) {
        const NeResult r = ne_oracle(game, pi, 1e-10, &warm);
        warm = r.x_star;
        return leader_cost(r.x_star, params);
    };

    double best_value = std::numeric_limits<double>::infinity();
    PriceVector best_pi;
    std::vector<int> idx(d, 0);
    for (long flat = 0; flat < total; ++flat) {
        PriceVector pi(d);
        for (long m = 0; m < d; ++m)
            pi(m) = (n == 1) ? params.price_min
                             : params.price_min +
                                   idx[m] * (params.price_max - params.price_min) / (n - 1);
        const double value = oracle_cost(pi);
        if (value < best_value) {
            best_value = value;
            best_pi = pi;
        }
        for (long m = d - 1; m >= 0; --m) {
            if (++idx[m] < n) break;
            idx[m] = 0;
        }
    }

    // One refinement pass, one grid spacing around the best cell.
    const double spacing = (n > 1) ? (params.price_max - params.price_min) / (n - 1)
                                   : (params.price_max - params.price_min);
    for (long m = 0; m < d; ++m) {
        const double a = std::max(params.price_min, best_pi(m) - spacing);
        const double b = std::min(params.price_max, best_pi(m) + spacing);
        const double xm = detail::golden_section(
            [&](double val) {
                PriceVector probe = best_pi;
                probe(m) = val;
                return oracle_cost(probe);
            },
            a, b, 1e-6);
        PriceVector probe = best_pi;
        probe(m) = xm;
        const double value = oracle_cost(probe);
        if (value < best_value) {
            best_value = value;
            best_pi = probe;
        }
    }

    std::lock_guard<std::mutex> lock(cache_mutex);
    cache[key] = {best_value, best_pi};
    return cache[key];
}

struct ExperimentResult {
    std::vector<RoundRecord> records;
    double baseline = 0.0;
    PriceVector baseline_price;
    GpState gp;  // final posterior state
};

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    const RidehailGame game(config.game);
    const GameParams& params = config.game;
    const long d = params.districts;

    const auto [baseline, baseline_pi] = regret_baseline(params, config.regret_oracle_grid);

    const PriceVector lower = PriceVector::Constant(d, params.price_min);
    const PriceVector upper = PriceVector::Constant(d, params.price_max);
    const double box_width = params.price_max - params.price_min;

    KernelSpec kernel;
    kernel.kind = config.kernel_kind;
    kernel.lengthscale = Eigen::VectorXd::Constant(d, box_width / 4.0);
    kernel.signal_variance = 1.0;
    GpState gp(kernel, 0.1);

    std::mt19937_64 warm_rng(stream_seed(config.seed, "warmup"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    ExperimentResult result{.records = {}, .baseline = baseline, .baseline_price = baseline_pi,
                            .gp = gp};
    double cumulative_cost = 0.0;

    for (int t = 1; t <= config.rounds; ++t) {
        PriceVector pi(d);
        if (t <= config.warmup_rounds) {
            for (long m = 0; m < d; ++m)
                pi(m) = params.price_min + unit(warm_rng) * box_width;
        } else {
            pi = choose_next_price(gp, config.beta_schedule, config.acquisition, t, lower,
                                   upper);
        }

        const NeResult oracle = ne_oracle(game, pi);
        NeResult inner;
        switch (config.inner_stop.kind) {
            case StoppingRuleSpec::Kind::MaxIters:
                inner = approx_ne(game, pi,
                                  MaxIters{static_cast<std::int64_t>(config.inner_stop.value)});
                break;
            case StoppingRuleSpec::Kind::Residual:
                inner = approx_ne(game, pi, Residual{config.inner_stop.value});
                break;
            case StoppingRuleSpec::Kind::DistanceToOracle:
                inner = approx_ne(game, pi,
                                  DistanceToOracle{config.inner_stop.value, oracle.x_star});
                break;
        }

        RoundRecord rec;
        rec.t = t;
        rec.price = pi;
        rec.allocation = inner.x_star;
        try {
            rec.realized_cost = leader_cost(inner.x_star, params);
            rec.oracle_cost = leader_cost(oracle.x_star, params);
        } catch (const AllFleetsIdle& e) {
            throw AllFleetsIdle("round " + std::to_string(t) + ": " + e.what());
        }
        rec.inner_iterations = inner.iterations;
        rec.inner_residual = inner.residual;
        cumulative_cost += rec.realized_cost;
        rec.instantaneous_regret = rec.realized_cost - baseline;
        rec.cumulative_regret = cumulative_cost - t * baseline;
        rec.average_regret = rec.cumulative_regret / t;
        result.records.push_back(rec);

        gp = gp.append(pi, rec.realized_cost);
        if (t == config.warmup_rounds && config.refit_after_warmup &&
            config.warmup_rounds >= 2) {
            FitBounds bounds;
            bounds.lengthscale_lo = 1e-2 * box_width;
            bounds.lengthscale_hi = 1e2 * box_width;
            const FitResult fit =
                fit_hyperparameters(gp.inputs(), gp.observations(), config.kernel_kind, bounds,
                                    8, stream_seed(config.seed, "gp_fit"));
            gp = gp.with_hyperparameters(fit.kernel, fit.noise_sd);
            log_msg(LogLevel::Info,
                    "refit after warm-up: noise_sd = " + std::to_string(fit.noise_sd));
        }
    }
    result.gp = gp;
    return result;
}

// Picks t* = argmin_t realized cost and reports the leader and follower
// optimality gaps there.
inline StackelbergReport certify_stackelberg(const std::vector<RoundRecord>& records,
                                             const GameParams& params, double epsilon_target,
                                             int baseline_grid = 200) {
    if (records.empty()) throw std::invalid_argument("certify_stackelberg: no records");
    const auto [baseline, baseline_pi] = regret_baseline(params, baseline_grid);
    const RidehailGame game(params);

    const RoundRecord* best = &records.front();
    for (const auto& rec : records)
        if (rec.realized_cost < best->realized_cost) best = &rec;

    StackelbergReport report;
    report.t_star = best->t;
    report.price = best->price;
    report.leader_gap = best->realized_cost - baseline;
    report.follower_gap = certify_epsilon_nash(game, best->allocation, best->price);
    report.epsilon_target = epsilon_target;
    report.certified =
        std::max(report.leader_gap, report.follower_gap) <= epsilon_target;
    return report;
}

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.15g", v);
    return buf;
}

}  // namespace detail

inline std::string rounds_csv_header(long d) {
    std::string h = "t";
    for (long m = 1; m <= d; ++m) h += ",pi_" + std::to_string(m);
    h += ",J_realized,J_oracle,inner_iters,inner_residual,R_t,avg_regret";
    return h;
}

inline std::string rounds_to_csv(const std::vector<RoundRecord>& records, long d) {
    std::string out = rounds_csv_header(d) + "\n";
    for (const auto& r : records) {
        out += std::to_string(r.t);
        for (long m = 0; m < d; ++m) out += "," + detail::fmt_double(r.price(m));
        out += "," + detail::fmt_double(r.realized_cost);
        out += "," + detail::fmt_double(r.oracle_cost);
        out += "," + std::to_string(r.inner_iterations);
        out += "," + detail::fmt_double(r.inner_residual);
        out += "," + detail::fmt_double(r.cumulative_regret);
        out += "," + detail::fmt_double(r.average_regret);
        out += "\n";
    }
    return out;
}

// Minimal round view parsed back from a CSV (no allocations stored there).
struct CsvRound {
    int t = 0;
    PriceVector price;
    double realized_cost = 0.0;
    double oracle_cost = 0.0;
    std::int64_t inner_iterations = 0;
    double inner_residual = 0.0;
    double cumulative_regret = 0.0;
    double average_regret = 0.0;
};

inline std::vector<CsvRound> read_rounds_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open rounds CSV: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty rounds CSV: " + path.string());
    long d = 0;
    {
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ','))
            if (col.rfind("pi_", 0) == 0) ++d;
    }
    std::vector<CsvRound> rounds;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string col;
        std::vector<std::string> cols;
        while (std::getline(ss, col, ',')) cols.push_back(col);
        CsvRound r;
        r.t = std::stoi(cols.at(0));
        r.price.resize(d);
        for (long m = 0; m < d; ++m) r.price(m) = std::stod(cols.at(1 + m));
        r.realized_cost = std::stod(cols.at(1 + d));
        r.oracle_cost = std::stod(cols.at(2 + d));
        r.inner_iterations = std::stoll(cols.at(3 + d));
        r.inner_residual = std::stod(cols.at(4 + d));
        r.cumulative_regret = std::stod(cols.at(5 + d));
        r.average_regret = std::stod(cols.at(6 + d));
        rounds.push_back(std::move(r));
    }
    return rounds;
}

// Writes rounds.csv, summary.json, and a config echo under `dir`.
inline void emit_outputs(const ExperimentResult& result, const ExperimentConfig& config,
                         const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir.string());

    auto write_file = [&](const std::filesystem::path& p, const std::string& content) {
        std::ofstream out(p, std::ios::binary);  // binary keeps LF endings everywhere
        if (!out) throw std::runtime_error("cannot write " + p.string());
        out << content;
        if (!out) throw std::runtime_error("write failed for " + p.string());
    };

    write_file(dir / "rounds.csv", rounds_to_csv(result.records, config.game.districts));

    nlohmann::json summary;
    if (result.records.empty()) {
        summary["best_round"] = nullptr;
    } else {
        const StackelbergReport report = certify_stackelberg(
            result.records, config.game, 1e-2, config.regret_oracle_grid);
        const auto& last = result.records.back();
        summary["best_round"] = report.t_star;
        summary["best_price"] = std::vector<double>(report.price.data(),
                                                    report.price.data() + report.price.size());
        double best_cost = result.records.front().realized_cost;
        for (const auto& r : result.records) best_cost = std::min(best_cost, r.realized_cost);
        summary["best_realized_cost"] = best_cost;
        summary["final_average_regret"] = last.average_regret;
        summary["baseline"] = result.baseline;
        summary["certificate"] = report.to_json();
    }
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    write_file(dir / "config.json", config.to_json().dump(2) + "\n");
}

}  // namespace stackelberg

#endif  // STACKELBERG_HARNESS_HPP
