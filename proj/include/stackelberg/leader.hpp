#ifndef STACKELBERG_LEADER_HPP
#define STACKELBERG_LEADER_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "stackelberg/common.hpp"
#include "stackelberg/gp.hpp"

namespace stackelberg {

// Confidence-width schedule for the LCB surrogate.
struct BetaSchedule {
    enum class Kind { Fixed, Theoretical } kind = Kind::Fixed;
    double value = 0.2;   // Fixed
    double rkhs_bound = 1.0;      // B
    double cost_lipschitz = 1.0;  // L_J
    double set_diameter = 1.0;    // M = max ||x - x'|| over the joint feasible set
    double delta = 0.1;

    static BetaSchedule fixed(double v) {
        BetaSchedule s;
        s.kind = Kind::Fixed;
        s.value = v;
        return s;
    }
    static BetaSchedule theoretical(double B, double L_J, double M_diam, double delta) {
        BetaSchedule s;
        s.kind = Kind::Theoretical;
        s.rkhs_bound = B;
        s.cost_lipschitz = L_J;
        s.set_diameter = M_diam;
        s.delta = delta;
        if (B <= 0 || L_J <= 0 || M_diam <= 0 || delta <= 0 || delta >= 1)
            throw std::invalid_argument("theoretical beta needs positive constants, delta in (0,1)");
        return s;
    }

    nlohmann::json to_json() const {
        if (kind == Kind::Fixed) return {{"kind", "fixed"}, {"value", value}};
        return {{"kind", "theoretical"},
                {"B", rkhs_bound},
                {"L_J", cost_lipschitz},
                {"M_diam", set_diameter},
                {"delta", delta}};
    }
    static BetaSchedule from_json(const nlohmann::json& j) {
        if (j.at("kind").get<std::string>() == "fixed")
            return fixed(j.at("value").get<double>());
        return theoretical(j.at("B").get<double>(), j.at("L_J").get<double>(),
                           j.at("M_diam").get<double>(), j.at("delta").get<double>());
    }
};

struct AcquisitionConfig {
    double epsilon = 0.0;           // target accuracy input of the outer loop
    int grid_points_per_dim = 50;
    int refine_starts = 5;
    double refine_tol = 1e-6;

    nlohmann::json to_json() const {
        return {{"epsilon", epsilon},
                {"grid_points_per_dim", grid_points_per_dim},
                {"refine_starts", refine_starts},
                {"refine_tol", refine_tol}};
    }
    static AcquisitionConfig from_json(const nlohmann::json& j) {
        AcquisitionConfig c;
        c.epsilon = j.at("epsilon").get<double>();
        c.grid_points_per_dim = j.at("grid_points_per_dim").get<int>();
        c.refine_starts = j.at("refine_starts").get<int>();
        c.refine_tol = j.at("refine_tol").get<double>();
        return c;
    }
};

inline double beta(const BetaSchedule& schedule, int t, const GpState& gp) {
    if (t < 1) throw std::invalid_argument("beta: round index starts at 1");
    if (schedule.kind == BetaSchedule::Kind::Fixed) return schedule.value;
    if (gp.kernel().signal_variance > 1.0 + 1e-12)
        throw std::invalid_argument(
            "theoretical beta requires a normalized kernel, signal_variance <= 1");
    const double sigma2 = gp.noise_sd() * gp.noise_sd();
    const double gain = gp.greedy_info_gain();
    return schedule.rkhs_bound +
           (2.0 * schedule.cost_lipschitz * schedule.set_diameter / sigma2) *
               std::sqrt(2.0 * (gain + 1.0 + std::log(2.0 / schedule.delta)));
}

// Lower-confidence-bound surrogate, mu - (beta + eps*sqrt(t)/sigma) * sigma_t.
inline double surrogate_lcb(const GpState& gp, const PriceVector& pi, double beta_t,
                            double epsilon, int t) {
    const auto [mean, var] = gp.posterior(pi);
    const double width = beta_t + epsilon * std::sqrt(static_cast<double>(t)) / gp.noise_sd();
    return mean - width * std::sqrt(var);
}

namespace detail {

inline bool lex_less(const PriceVector& a, const PriceVector& b) {
    for (long m = 0; m < a.size(); ++m) {
        if (a(m) < b(m)) return true;
        if (a(m) > b(m)) return false;
    }
    return false;
}

// Golden-section minimization of f over [a, b].
template <class F>
double golden_section(F&& f, double a, double b, double tol) {
    constexpr double inv_phi = 0.6180339887498949;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace detail

// Grid scan plus coordinate-wise golden-section refinement from the best
// cells. Deterministic; ties broken toward the lexicographically smallest
// point.
inline PriceVector choose_next_price(const GpState& gp, const BetaSchedule& schedule,
                                     const AcquisitionConfig& config, int t,
                                     const PriceVector& lower, const PriceVector& upper) {
    const long d = lower.size();
    const double beta_t = beta(schedule, t, gp);
    auto objective = [&](const PriceVector& pi) {
        return surrogate_lcb(gp, pi, beta_t, config.epsilon, t);
    };

    const int n = config.grid_points_per_dim;
    const long total = static_cast<long>(std::pow(static_cast<double>(n), static_cast<double>(d)));
    std::vector<double> values(total);
    std::vector<PriceVector> points(total);
    std::vector<int> idx(d, 0);
    for (long flat = 0; flat < total; ++flat) {
        PriceVector pi(d);
        for (long m = 0; m < d; ++m)
            pi(m) = (n == 1) ? lower(m)
                             : lower(m) + idx[m] * (upper(m) - lower(m)) / (n - 1);
        points[flat] = pi;
        values[flat] = objective(pi);
        for (long m = d - 1; m >= 0; --m) {  // odometer, last coordinate fastest
            if (++idx[m] < n) break;
            idx[m] = 0;
        }
    }

    long best = 0;
    for (long flat = 1; flat < total; ++flat) {
        if (values[flat] < values[best] ||
            (values[flat] == values[best] && detail::lex_less(points[flat], points[best])))
            best = flat;
    }
    PriceVector best_point = points[best];
    double best_value = values[best];

    // Local refinement around the top cells, one grid spacing wide.
    std::vector<long> order(total);
    std::iota(order.begin(), order.end(), 0L);
    const long starts = std::min<long>(config.refine_starts, total);
    std::partial_sort(order.begin(), order.begin() + starts, order.end(),
                      [&](long a, long b) { return values[a] < values[b]; });
    for (long s = 0; s < starts; ++s) {
        PriceVector x = points[order[s]];
        double fx = values[order[s]];
        for (int sweep = 0; sweep < 20; ++sweep) {
            const double before = fx;
            for (long m = 0; m < d; ++m) {
                const double spacing =
                    (n > 1) ? (upper(m) - lower(m)) / (n - 1) : (upper(m) - lower(m));
                const double a = std::max(lower(m), x(m) - spacing);
                const double b = std::min(upper(m), x(m) + spacing);
                const double xm = detail::golden_section(
                    [&](double val) {
                        PriceVector probe = x;
                        probe(m) = val;
                        return objective(probe);
                    },
                    a, b, config.refine_tol);
                PriceVector probe = x;
                probe(m) = xm;
                const double fp = objective(probe);
                if (fp < fx) {
                    x = probe;
                    fx = fp;
                }
            }
            if (before - fx < config.refine_tol) break;
        }
        if (fx < best_value) {
            best_value = fx;
            best_point = x;
        }
    }
    return best_point;
}

}  // namespace stackelberg

#endif  // STACKELBERG_LEADER_HPP
