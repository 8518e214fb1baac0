#ifndef STACKELBERG_EQUILIBRIUM_HPP
#define STACKELBERG_EQUILIBRIUM_HPP

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <variant>

#include <json.hpp>

#include "stackelberg/common.hpp"
#include "stackelberg/ridehail_game.hpp"

namespace stackelberg {

// Anything exposing a monotone pseudogradient over a product of projectable
// feasible sets. Monotonicity is checked by property test, not at runtime.
template <class G>
concept GameLike = requires(const G& g, const JointAllocation& x, const PriceVector& pi,
                            const Eigen::VectorXd& y, int i) {
    { g.n_followers() } -> std::convertible_to<int>;
    { g.districts() } -> std::convertible_to<int>;
    { g.pseudogradient(x, pi) } -> std::convertible_to<Eigen::VectorXd>;
    { g.project(y, i) } -> std::convertible_to<Eigen::VectorXd>;
    { g.utility(i, x, pi) } -> std::convertible_to<double>;
    { g.initial_point() } -> std::convertible_to<JointAllocation>;
};

struct MaxIters {
    std::int64_t iters;
};
struct Residual {
    double tol;
    std::int64_t max_iters = 5'000'000;
};
struct DistanceToOracle {
    double eps;
    JointAllocation oracle;
    std::int64_t max_iters = 5'000'000;
};
using StoppingRule = std::variant<MaxIters, Residual, DistanceToOracle>;

// Step-size policy for the projected pseudogradient iteration. The decaying
// schedule gamma0/(k + k0) realizes the O(1/K) approximation contract; the
// adaptive constant step converges linearly and is used when a tight residual
// or distance target must actually be reached.
struct StepPolicy {
    enum class Kind { Decaying, AdaptiveConstant } kind = Kind::Decaying;
    double gamma0 = 1.0;   // Decaying
    double k0 = 10.0;      // Decaying
    double gamma = 0.05;   // AdaptiveConstant initial step
    static StepPolicy decaying(double g0 = 1.0, double k0 = 10.0) {
        return {Kind::Decaying, g0, k0, 0.0};
    }
    static StepPolicy adaptive(double gamma = 0.05) {
        return {Kind::AdaptiveConstant, 0.0, 0.0, gamma};
    }
};

struct NeResult {
    JointAllocation x_star;
    std::int64_t iterations = 0;
    double residual = 0.0;
    bool converged = false;

    nlohmann::json to_json() const {
        return {{"x_star", std::vector<double>(x_star.stacked.data(),
                                               x_star.stacked.data() + x_star.stacked.size())},
                {"iterations", iterations},
                {"residual", residual},
                {"converged", converged}};
    }
};

template <GameLike G>
JointAllocation project_all(const G& game, const Eigen::VectorXd& y) {
    JointAllocation z(game.n_followers(), game.districts());
    for (int i = 0; i < game.n_followers(); ++i)
        z.block(i) = game.project(y.segment(static_cast<long>(i) * game.districts(),
                                            game.districts()),
                                  i);
    return z;
}

// Fixed-point residual of the projected-gradient map at unit reference step,
// || x - P(x - v(x)) ||.
template <GameLike G>
double ne_residual(const G& game, const JointAllocation& x, const PriceVector& pi) {
    const Eigen::VectorXd v = game.pseudogradient(x, pi);
    const JointAllocation mapped = project_all(game, x.stacked - v);
    return (x.stacked - mapped.stacked).norm();
}

// Simultaneous projected pseudogradient descent,
// x^{k+1}_i = P_i(x^k_i - gamma^k v_i(x^k; pi)).
template <GameLike G>
NeResult approx_ne(const G& game, const PriceVector& pi, const StoppingRule& stop,
                   StepPolicy policy = {}, const JointAllocation* start = nullptr) {
    JointAllocation x = start ? *start : game.initial_point();
    double res = ne_residual(game, x, pi);
    if (res == 0.0) return {x, 0, 0.0, true};

    const bool by_iters = std::holds_alternative<MaxIters>(stop);
    const auto* by_res = std::get_if<Residual>(&stop);
    const auto* by_dist = std::get_if<DistanceToOracle>(&stop);
    const std::int64_t budget = by_iters ? std::get<MaxIters>(stop).iters
                                         : (by_res ? by_res->max_iters : by_dist->max_iters);

    // Accuracy-targeted rules need the linearly convergent mode; the decaying
    // schedule cannot reach tight tolerances in any reasonable budget.
    if (!by_iters && policy.kind == StepPolicy::Kind::Decaying)
        policy = StepPolicy::adaptive();

    auto satisfied = [&](const JointAllocation& xc, double residual) {
        if (by_res) return residual <= by_res->tol;
        if (by_dist) return (xc.stacked - by_dist->oracle.stacked).norm() <= by_dist->eps;
        return false;
    };
    if (satisfied(x, res)) return {x, 0, res, true};

    double gamma = policy.gamma;
    double window_best = res;
    const std::int64_t window = 200;

    std::int64_t k = 0;
    for (; k < budget; ++k) {
        const double step = (policy.kind == StepPolicy::Kind::Decaying)
                                ? policy.gamma0 / (static_cast<double>(k) + policy.k0)
                                : gamma;
        const Eigen::VectorXd v = game.pseudogradient(x, pi);
        x = project_all(game, x.stacked - step * v);

        if (!by_iters) {
            res = ne_residual(game, x, pi);
            if (satisfied(x, res)) return {x, k + 1, res, true};
            if (policy.kind == StepPolicy::Kind::AdaptiveConstant && (k + 1) % window == 0) {
                if (res > 0.999 * window_best) {
                    gamma *= 0.5;  // stalled or diverging, contract the step
                    if (gamma < 1e-12) break;
                } else if (res < 0.5 * window_best) {
                    gamma = std::min(gamma * 1.25, policy.gamma * 4.0);
                }
                window_best = res;
            }
        }
    }
    res = ne_residual(game, x, pi);
    const bool ok = by_iters || satisfied(x, res);
    return {x, k, res, ok};
}

// High-precision NE used for regret evaluation and certification.
template <GameLike G>
NeResult ne_oracle(const G& game, const PriceVector& pi, double tol = 1e-10,
                   const JointAllocation* start = nullptr) {
    NeResult r = approx_ne(game, pi, Residual{tol, 5'000'000}, StepPolicy::adaptive(), start);
    if (!r.converged)
        throw OracleNotConverged("NE oracle stalled at residual " + std::to_string(r.residual));
    return r;
}

// Single-player best response by projected gradient ascent on the concave
// own-utility, opponents held fixed.
template <GameLike G>
Eigen::VectorXd best_response(const G& game, int i, const JointAllocation& x_minus_i,
                              const PriceVector& pi, double tol = 1e-10,
                              std::int64_t max_iters = 2'000'000) {
    const int d = game.districts();
    JointAllocation x = x_minus_i;
    auto own_grad = [&](const JointAllocation& xc) {
        return game.pseudogradient(xc, pi).segment(static_cast<long>(i) * d, d).eval();
    };
    auto residual = [&](const JointAllocation& xc) {
        const Eigen::VectorXd mapped = game.project(xc.block(i) - own_grad(xc), i);
        return (xc.block(i) - mapped).norm();
    };

    double gamma = 0.05;
    double res = residual(x);
    double window_best = res;
    const std::int64_t window = 200;
    for (std::int64_t k = 0; k < max_iters && res > tol; ++k) {
        x.block(i) = game.project(x.block(i) - gamma * own_grad(x), i);
        res = residual(x);
        if ((k + 1) % window == 0) {
            if (res > 0.999 * window_best) {
                gamma *= 0.5;
                if (gamma < 1e-12) break;
            } else if (res < 0.5 * window_best) {
                gamma = std::min(gamma * 1.25, 0.2);
            }
            window_best = res;
        }
    }
    if (res > tol) throw NotConverged(res);
    return x.block(i);
}

// Sequential (Gauss-Seidel) best-response iteration. Independent route to the
// unique NE, used to cross-validate the projected-gradient oracle.
template <GameLike G>
NeResult ne_via_best_response(const G& game, const PriceVector& pi, double tol = 1e-10,
                              std::int64_t max_sweeps = 100'000) {
    JointAllocation x = game.initial_point();
    for (std::int64_t sweep = 0; sweep < max_sweeps; ++sweep) {
        double shift = 0.0;
        for (int i = 0; i < game.n_followers(); ++i) {
            const Eigen::VectorXd br = best_response(game, i, x, pi, tol * 0.1);
            shift = std::max(shift, (br - x.block(i)).norm());
            x.block(i) = br;
        }
        if (shift <= tol) {
            return {x, sweep + 1, ne_residual(game, x, pi), true};
        }
    }
    throw OracleNotConverged("best-response iteration did not stabilize");
}

// Smallest epsilon for which x is an epsilon-Nash equilibrium (up to the
// best-response tolerance): max_i [ U_i(BR_i, x_{-i}) - U_i(x_i, x_{-i}) ].
template <GameLike G>
double certify_epsilon_nash(const G& game, const JointAllocation& x, const PriceVector& pi) {
    double worst = 0.0;
    for (int i = 0; i < game.n_followers(); ++i) {
        JointAllocation dev = x;
        dev.block(i) = best_response(game, i, x, pi);
        worst = std::max(worst, game.utility(i, dev, pi) - game.utility(i, x, pi));
    }
    return worst;
}

}  // namespace stackelberg

#endif  // STACKELBERG_EQUILIBRIUM_HPP
