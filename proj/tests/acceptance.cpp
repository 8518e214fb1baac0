// End-to-end acceptance gate. Each numbered check prints one PASS/FAIL line;
// the process exits nonzero if any check fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#include "test_support.hpp"

using namespace stackelberg;
namespace ts = test_support;

namespace {

int failures = 0;

void report(int id, const std::string& what, bool pass, const std::string& detail,
            double elapsed_s) {
    if (!pass) ++failures;
    std::printf("%s criterion %d: %s (%s) [%.1fs]\n", pass ? "PASS" : "FAIL", id, what.c_str(),
                detail.c_str(), elapsed_s);
    std::fflush(stdout);
}

class Timer {
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();

  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
};

ExperimentConfig benchmark_config(double inner_tol, std::uint64_t seed) {
    ExperimentConfig c;
    c.game = ts::benchmark3x2();
    c.rounds = 25;
    c.warmup_rounds = 5;
    c.inner_stop = {StoppingRuleSpec::Kind::DistanceToOracle, inner_tol};
    c.beta_schedule = BetaSchedule::fixed(0.2);
    c.seed = seed;
    c.regret_oracle_grid = 200;
    return c;
}

struct SweepStats {
    std::vector<double> best_cost, best_p1, best_p2, avg_regret_25, avg_regret_10;
    std::vector<ExperimentResult> results;  // kept for certification checks
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

}  // namespace

int main() {
    const GameParams bench = ts::benchmark3x2();
    const RidehailGame game(bench);

    // 1. cost of the reference price pair at the exact lower-level equilibrium
    {
        Timer timer;
        const NeResult ne = ne_oracle(game, Eigen::Vector2d(1.0, 2.0));
        const double cost = leader_cost(ne.x_star, bench);
        report(1, "cost at reference prices (1, 2)", cost >= 0.20 && cost <= 0.24,
               "got " + fmt(cost) + ", required [0.20, 0.24]", timer.seconds());
    }

    // 2. statistical reproduction of the benchmark learning outcomes
    std::map<double, SweepStats> sweep;
    {
        Timer timer;
        const std::vector<double> tols = {1e-6, 0.1, 0.3, 0.5};
        for (double tol : tols) {
            SweepStats& s = sweep[tol];
            for (int seed = 0; seed < 10; ++seed) {
                ExperimentResult r = run_experiment(benchmark_config(tol, 100 + seed));
                const RoundRecord* best = &r.records.front();
                for (const auto& rec : r.records)
                    if (rec.realized_cost < best->realized_cost) best = &rec;
                s.best_cost.push_back(best->realized_cost);
                s.best_p1.push_back(best->price(0));
                s.best_p2.push_back(best->price(1));
                s.avg_regret_25.push_back(r.records[24].average_regret);
                s.avg_regret_10.push_back(r.records[9].average_regret);
                s.results.push_back(std::move(r));
            }
        }
        bool pass = true;
        std::ostringstream detail;
        for (double tol : tols) {
            const double med_cost = ts::median(sweep[tol].best_cost);
            const double med_reg = ts::median(sweep[tol].avg_regret_25);
            if (med_cost > 1e-2 || med_reg > 0.12) pass = false;
            detail << "tol=" << fmt(tol) << ": med best cost " << fmt(med_cost)
                   << ", med avg regret " << fmt(med_reg) << "; ";
        }
        const double p1 = ts::median(sweep[1e-6].best_p1);
        const double p2 = ts::median(sweep[1e-6].best_p2);
        const bool price_ok = std::abs(p1 - 1.91) <= 0.15 && std::abs(p2 - 4.99) <= 0.15;
        if (!price_ok) pass = false;
        detail << "med best price (" << fmt(p1) << ", " << fmt(p2)
               << "), required within 0.15 of (1.91, 4.99)";
        const double elapsed = timer.seconds();
        if (elapsed >= 600.0) pass = false;
        report(2, "10-seed sweep over inner tolerances", pass, detail.str(), elapsed);
    }

    // 3. inner-loop convergence rate under the iteration-budgeted schedule
    {
        Timer timer;
        std::mt19937_64 rng(71);
        double worst_slope = -1e9;
        for (int trial = 0; trial < 5; ++trial) {
            const PriceVector pi = ts::random_price(bench, rng);
            const NeResult star = ne_oracle(game, pi);
            std::vector<double> ks, d2;
            for (long K : {10L, 100L, 1000L, 10000L}) {
                const NeResult r = approx_ne(game, pi, MaxIters{K});
                ks.push_back(static_cast<double>(K));
                d2.push_back((r.x_star.stacked - star.x_star.stacked).squaredNorm() + 1e-300);
            }
            worst_slope = std::max(worst_slope, ts::loglog_slope(ks, d2));
        }
        report(3, "inner-loop squared-distance decay", worst_slope <= -0.9,
               "worst log-log slope " + fmt(worst_slope) + ", required <= -0.9",
               timer.seconds());
    }

    // 4. factorized posterior vs explicit dense inverse
    {
        Timer timer;
        std::mt19937_64 rng(72);
        std::uniform_real_distribution<double> u(0.1, 5.0), yu(-1.0, 1.0), lu(0.3, 3.0);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            KernelSpec k;
            k.kind = trial % 5 == 4 ? KernelSpec::Kind::Linear
                                    : KernelSpec::Kind::SquaredExponential;
            k.lengthscale = Eigen::Vector2d(lu(rng), lu(rng));
            k.signal_variance = lu(rng);
            GpState gp(k, 0.1 + 0.1 * yu(rng) * yu(rng));
            const int n = 5 + static_cast<int>(rng() % 46);
            for (int i = 0; i < n; ++i)
                gp = gp.append(Eigen::Vector2d(u(rng), u(rng)), yu(rng));
            for (int q = 0; q < 5; ++q) {
                const PriceVector probe = Eigen::Vector2d(u(rng), u(rng));
                const auto [mean, var] = gp.posterior(probe);
                const auto [dmean, dvar] = ts::dense_posterior(gp, probe);
                worst = std::max({worst, std::abs(mean - dmean), std::abs(var - dvar)});
            }
        }
        report(4, "posterior equivalence across 20 random datasets", worst <= 1e-8,
               "max abs deviation " + fmt(worst) + ", required <= 1e-8", timer.seconds());
    }

    // 5. analytic pseudogradient vs central finite differences
    {
        Timer timer;
        std::mt19937_64 rng(73);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const JointAllocation x = ts::random_feasible(bench, rng);
            const PriceVector pi = ts::random_price(bench, rng);
            const Eigen::VectorXd v = pseudogradient(x, pi, bench);
            const Eigen::VectorXd fd = ts::fd_pseudogradient(x, pi, bench);
            worst = std::max(worst, (v - fd).norm() / std::max(1.0, v.norm()));
        }
        report(5, "gradient correctness on 100 random feasible points", worst <= 1e-5,
               "max relative error " + fmt(worst) + ", required <= 1e-5", timer.seconds());
    }

    // 6. projected-gradient vs best-response equilibria
    {
        Timer timer;
        std::mt19937_64 rng(74);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const PriceVector pi = ts::random_price(bench, rng);
            const NeResult pg = ne_oracle(game, pi);
            const NeResult br = ne_via_best_response(game, pi);
            worst = std::max(worst, (pg.x_star.stacked - br.x_star.stacked).norm());
        }
        report(6, "equilibrium agreement between independent solvers", worst <= 1e-6,
               "max deviation " + fmt(worst) + " on 20 prices, required <= 1e-6",
               timer.seconds());
    }

    // 7. property suite
    {
        Timer timer;
        std::ostringstream detail;
        bool pass = true;
        auto sub = [&](const char* name, bool ok) {
            if (!ok) {
                pass = false;
                detail << name << " FAILED; ";
            }
        };
        std::mt19937_64 rng(75);

        {  // strict monotonicity of the pseudogradient
            bool ok = true;
            for (int trial = 0; trial < 100; ++trial) {
                const JointAllocation x = ts::random_feasible(bench, rng);
                const JointAllocation y = ts::random_feasible(bench, rng);
                if ((x.stacked - y.stacked).norm() < 1e-10) continue;
                const PriceVector pi = ts::random_price(bench, rng);
                ok = ok && (pseudogradient(x, pi, bench) - pseudogradient(y, pi, bench))
                                   .dot(x.stacked - y.stacked) > 0.0;
            }
            sub("monotonicity", ok);
        }
        {  // projection properties
            bool ok = true;
            std::uniform_real_distribution<double> u(-3.0, 8.0);
            const Eigen::Vector2d cap(2.0, 2.0);
            for (int trial = 0; trial < 100; ++trial) {
                Eigen::Vector2d y(u(rng), u(rng)), w(u(rng), u(rng));
                const Eigen::VectorXd zy = project_capped_simplex(y, cap, 2.5);
                const Eigen::VectorXd zw = project_capped_simplex(w, cap, 2.5);
                ok = ok && zy.minCoeff() >= -1e-12 && (cap - zy).minCoeff() >= -1e-12 &&
                     zy.sum() <= 2.5 + 1e-12 &&
                     (project_capped_simplex(zy, cap, 2.5) - zy).norm() <= 1e-12 &&
                     (zy - zw).norm() <= (y - w).norm() + 1e-12;
            }
            sub("projection", ok);
        }
        {  // kernel PSD
            bool ok = true;
            std::uniform_real_distribution<double> u(0.1, 5.0), lu(0.2, 3.0);
            for (int trial = 0; trial < 50; ++trial) {
                KernelSpec k;
                k.kind = KernelSpec::Kind::SquaredExponential;
                k.lengthscale = Eigen::Vector2d(lu(rng), lu(rng));
                k.signal_variance = lu(rng);
                std::vector<PriceVector> in;
                for (int i = 0; i < 10; ++i) in.push_back(Eigen::Vector2d(u(rng), u(rng)));
                const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram_matrix(k, in));
                ok = ok && eig.eigenvalues().minCoeff() >= -1e-10;
            }
            sub("kernel PSD", ok);
        }
        {  // posterior variance monotone under append
            bool ok = true;
            std::uniform_real_distribution<double> u(0.1, 5.0), yu(-1.0, 1.0);
            KernelSpec k;
            k.kind = KernelSpec::Kind::SquaredExponential;
            k.lengthscale = Eigen::Vector2d(1.0, 1.5);
            k.signal_variance = 1.0;
            GpState gp(k, 0.1);
            std::vector<PriceVector> queries;
            for (int i = 0; i < 6; ++i) queries.push_back(Eigen::Vector2d(u(rng), u(rng)));
            for (int i = 0; i < 15; ++i) {
                std::vector<double> before;
                for (const auto& q : queries) before.push_back(gp.posterior(q).second);
                gp = gp.append(Eigen::Vector2d(u(rng), u(rng)), yu(rng));
                for (size_t j = 0; j < queries.size(); ++j)
                    ok = ok && gp.posterior(queries[j]).second <= before[j] + 1e-10;
            }
            sub("variance monotone under append", ok);

            // acquisition audit on the same posterior
            const PriceVector lo = Eigen::Vector2d(0.1, 0.1), hi = Eigen::Vector2d(5.0, 5.0);
            const AcquisitionConfig cfg;
            const PriceVector pick =
                choose_next_price(gp, BetaSchedule::fixed(0.2), cfg, 16, lo, hi);
            const double chosen = surrogate_lcb(gp, pick, 0.2, 0.0, 16);
            double grid_min = std::numeric_limits<double>::infinity();
            for (int i = 0; i < cfg.grid_points_per_dim; ++i)
                for (int j = 0; j < cfg.grid_points_per_dim; ++j) {
                    PriceVector q(2);
                    q(0) = 0.1 + i * 4.9 / (cfg.grid_points_per_dim - 1);
                    q(1) = 0.1 + j * 4.9 / (cfg.grid_points_per_dim - 1);
                    grid_min = std::min(grid_min, surrogate_lcb(gp, q, 0.2, 0.0, 16));
                }
            sub("acquisition grid audit", chosen <= grid_min + 1e-12);
        }
        {  // regret recomputation from an emitted CSV, plus bitwise determinism
            namespace fs = std::filesystem;
            const fs::path dir = fs::temp_directory_path() / "stackelberg_acceptance_csv";
            const ExperimentConfig cfg = benchmark_config(1e-6, 104);
            emit_outputs(sweep[1e-6].results[4], cfg, dir);
            const auto rounds = read_rounds_csv(dir / "rounds.csv");
            const double baseline = rounds[0].realized_cost - rounds[0].cumulative_regret;
            bool ok = rounds.size() == 25;
            double running = 0.0;
            for (size_t t = 0; t < rounds.size(); ++t) {
                running += rounds[t].realized_cost;
                const double expected = running - static_cast<double>(t + 1) * baseline;
                ok = ok && std::abs(rounds[t].cumulative_regret - expected) <= 1e-9;
            }
            sub("regret accounting from CSV", ok);
            std::error_code ec;
            fs::remove_all(dir, ec);

            const ExperimentResult again = run_experiment(cfg);
            sub("bitwise determinism",
                rounds_to_csv(again.records, 2) ==
                    rounds_to_csv(sweep[1e-6].results[4].records, 2));
        }
        {  // regret trend and noise-floor ordering across the sweep
            bool trend = true;
            for (const auto& [tol, s] : sweep)
                trend = trend && ts::mean(s.avg_regret_25) < ts::mean(s.avg_regret_10);
            sub("regret trend R25/25 < R10/10", trend);
            sub("noise-floor ordering of best costs",
                ts::mean(sweep[1e-6].best_cost) <= ts::mean(sweep[0.5].best_cost) + 1e-3);
        }
        report(7, "property suite", pass, pass ? "all properties hold" : detail.str(),
               timer.seconds());
    }

    // 8. certification of the best round in every tight-tolerance run
    {
        Timer timer;
        bool pass = true;
        double worst_leader = 0.0, worst_follower = 0.0;
        for (const auto& r : sweep[1e-6].results) {
            const StackelbergReport rep = certify_stackelberg(r.records, bench, 1e-2, 200);
            worst_leader = std::max(worst_leader, rep.leader_gap);
            worst_follower = std::max(worst_follower, rep.follower_gap);
            pass = pass && rep.leader_gap <= 1e-2 && rep.follower_gap <= 1e-2;
        }
        report(8, "equilibrium certificate at the best round", pass,
               "worst leader gap " + fmt(worst_leader) + ", worst follower gap " +
                   fmt(worst_follower) + ", required <= 1e-2",
               timer.seconds());
    }

    if (failures > 0) std::printf("%d criterion check(s) failed\n", failures);
    return failures;
}
