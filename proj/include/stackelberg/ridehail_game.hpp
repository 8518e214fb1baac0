#ifndef STACKELBERG_RIDEHAIL_GAME_HPP
#define STACKELBERG_RIDEHAIL_GAME_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <optional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "stackelberg/common.hpp"

namespace stackelberg {

using PriceVector = Eigen::VectorXd;

// Total fleet size below this threshold makes the leader's cost undefined.
inline constexpr double kIdleFleetThreshold = 1e-9;

// Parameters of the lower-level market game plus the leader's target.
struct GameParams {
    int n_followers = 0;                        // N
    int districts = 0;                          // d
    Eigen::VectorXd revenue_potential;          // W, length d
    Eigen::VectorXd abandonment;                // Delta, length d
    Eigen::VectorXd fleet_size;                 // M, length N
    std::optional<Eigen::VectorXd> district_cap;  // x_max, length d; empty => cap = M_i
    double price_min = 0.0;
    double price_max = 0.0;
    Eigen::VectorXd target_distribution;        // xi_star, length d

    // Effective per-coordinate cap for follower i. When no explicit cap is
    // given the box never binds before the budget.
    double cap(int follower, int district) const {
        if (district_cap) return (*district_cap)(district);
        return fleet_size(follower);
    }

    void validate() const {
        if (n_followers <= 0 || districts <= 0)
            throw std::invalid_argument("GameParams: N and d must be positive");
        auto check_len = [&](const Eigen::VectorXd& v, int len, const char* name) {
            if (v.size() != len)
                throw std::invalid_argument(std::string("GameParams: bad length for ") + name);
        };
        check_len(revenue_potential, districts, "W");
        check_len(abandonment, districts, "Delta");
        check_len(fleet_size, n_followers, "M");
        check_len(target_distribution, districts, "xi_star");
        if (district_cap) check_len(*district_cap, districts, "x_max");
        if (revenue_potential.minCoeff() <= 0.0)
            throw std::invalid_argument("GameParams: W must be strictly positive");
        if (abandonment.minCoeff() <= 0.0)
            throw std::invalid_argument("GameParams: Delta must be strictly positive");
        if (fleet_size.minCoeff() <= 0.0)
            throw std::invalid_argument("GameParams: M must be strictly positive");
        if (district_cap && district_cap->minCoeff() <= 0.0)
            throw std::invalid_argument("GameParams: x_max must be strictly positive");
        if (price_min < 0.0 || price_min >= price_max)
            throw std::invalid_argument("GameParams: need 0 <= pi_min < pi_max");
        if (target_distribution.minCoeff() < 0.0 || target_distribution.maxCoeff() > 1.0 ||
            std::abs(target_distribution.sum() - 1.0) > 1e-12)
            throw std::invalid_argument("GameParams: xi_star must lie on the simplex");
    }

    nlohmann::json to_json() const {
        auto vec = [](const Eigen::VectorXd& v) {
            return std::vector<double>(v.data(), v.data() + v.size());
        };
        nlohmann::json j{{"N", n_followers},
                         {"d", districts},
                         {"W", vec(revenue_potential)},
                         {"Delta", vec(abandonment)},
                         {"M", vec(fleet_size)},
                         {"pi_min", price_min},
                         {"pi_max", price_max},
                         {"xi_star", vec(target_distribution)}};
        if (district_cap)
            j["x_max"] = vec(*district_cap);
        else
            j["x_max"] = nullptr;
        return j;
    }

    static GameParams from_json(const nlohmann::json& j) {
        auto vec = [](const nlohmann::json& a) {
            std::vector<double> v = a.get<std::vector<double>>();
            return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size())).eval();
        };
        GameParams p;
        p.n_followers = j.at("N").get<int>();
        p.districts = j.at("d").get<int>();
        p.revenue_potential = vec(j.at("W"));
        p.abandonment = vec(j.at("Delta"));
        p.fleet_size = vec(j.at("M"));
        p.price_min = j.at("pi_min").get<double>();
        p.price_max = j.at("pi_max").get<double>();
        p.target_distribution = vec(j.at("xi_star"));
        if (j.contains("x_max") && !j.at("x_max").is_null()) {
            if (j.at("x_max").is_number()) {
                p.district_cap =
                    Eigen::VectorXd::Constant(p.districts, j.at("x_max").get<double>());
            } else {
                p.district_cap = vec(j.at("x_max"));
            }
        }
        p.validate();
        return p;
    }
};

// Stacked follower profile with per-follower block access.
struct JointAllocation {
    Eigen::VectorXd stacked;  // length N*d, follower-major
    int n_followers = 0;
    int districts = 0;

    JointAllocation() = default;
    JointAllocation(int n, int d)
        : stacked(Eigen::VectorXd::Zero(static_cast<long>(n) * d)), n_followers(n), districts(d) {}

    auto block(int i) { return stacked.segment(static_cast<long>(i) * districts, districts); }
    auto block(int i) const {
        return stacked.segment(static_cast<long>(i) * districts, districts);
    }

    Eigen::VectorXd aggregate() const {
        Eigen::VectorXd s = Eigen::VectorXd::Zero(districts);
        for (int i = 0; i < n_followers; ++i) s += block(i);
        return s;
    }
};

// Market-share utility of follower i.
inline double utility(int i, const JointAllocation& x, const PriceVector& pi,
                      const GameParams& params) {
    const Eigen::VectorXd agg = x.aggregate();
    double u = 0.0;
    for (int m = 0; m < params.districts; ++m) {
        const double xi = x.block(i)(m);
        u += params.revenue_potential(m) * xi / (agg(m) + params.abandonment(m)) - xi * pi(m);
    }
    return u;
}

// Stacked pseudogradient v(x; pi), block i = -grad_{x_i} U_i.
inline Eigen::VectorXd pseudogradient(const JointAllocation& x, const PriceVector& pi,
                                      const GameParams& params) {
    const Eigen::VectorXd agg = x.aggregate();
    Eigen::VectorXd v(static_cast<long>(params.n_followers) * params.districts);
    for (int i = 0; i < params.n_followers; ++i) {
        for (int m = 0; m < params.districts; ++m) {
            const double denom = agg(m) + params.abandonment(m);
            const double others = agg(m) - x.block(i)(m) + params.abandonment(m);
            v(static_cast<long>(i) * params.districts + m) =
                pi(m) - params.revenue_potential(m) * others / (denom * denom);
        }
    }
    return v;
}

// Euclidean projection onto { 0 <= z <= cap, sum(z) <= budget }. Exact
// breakpoint search on the budget multiplier.
inline Eigen::VectorXd project_capped_simplex(const Eigen::VectorXd& y,
                                              const Eigen::VectorXd& cap, double budget) {
    const long d = y.size();
    Eigen::VectorXd z = y.cwiseMax(0.0).cwiseMin(cap);
    if (z.sum() <= budget) return z;

    // sum(clip(y - lambda, 0, cap)) is piecewise linear, non-increasing in
    // lambda, with kinks at y_m and y_m - cap_m.
    std::vector<double> kinks;
    kinks.reserve(2 * static_cast<size_t>(d));
    for (long m = 0; m < d; ++m) {
        kinks.push_back(y(m));
        kinks.push_back(y(m) - cap(m));
    }
    std::sort(kinks.begin(), kinks.end());
    auto mass = [&](double lambda) {
        double s = 0.0;
        for (long m = 0; m < d; ++m) s += std::clamp(y(m) - lambda, 0.0, cap(m));
        return s;
    };
    // Smallest kink with mass(kink) <= budget; the crossing lies in the
    // segment ending there.
    size_t lo = 0, hi = kinks.size() - 1;
    while (lo < hi) {
        size_t mid = (lo + hi) / 2;
        if (mass(kinks[mid]) <= budget)
            hi = mid;
        else
            lo = mid + 1;
    }
    const double seg_hi = kinks[lo];
    // Within the segment the active coordinates are those strictly between
    // their kinks; solve the linear equation for lambda.
    const double seg_lo = (lo == 0) ? seg_hi - 1.0 : kinks[lo - 1];
    const double probe = 0.5 * (seg_lo + seg_hi);
    double fixed = 0.0, active_sum = 0.0;
    long n_active = 0;
    for (long m = 0; m < d; ++m) {
        const double val = y(m) - probe;
        if (val >= cap(m)) {
            fixed += cap(m);
        } else if (val > 0.0) {
            active_sum += y(m);
            ++n_active;
        }
    }
    double lambda;
    if (n_active == 0) {
        lambda = seg_hi;  // flat segment, any point attains the budget at its end
    } else {
        lambda = (fixed + active_sum - budget) / static_cast<double>(n_active);
        lambda = std::clamp(lambda, seg_lo, seg_hi);
    }
    for (long m = 0; m < d; ++m) z(m) = std::clamp(y(m) - lambda, 0.0, cap(m));
    return z;
}

// Projection onto follower i's feasible set.
inline Eigen::VectorXd project_feasible(const Eigen::VectorXd& y, int i,
                                        const GameParams& params) {
    Eigen::VectorXd cap(params.districts);
    for (int m = 0; m < params.districts; ++m) cap(m) = params.cap(i, m);
    return project_capped_simplex(y, cap, params.fleet_size(i));
}

// Squared deviation of the achieved fleet distribution from the target.
inline double leader_cost(const JointAllocation& x, const GameParams& params) {
    const Eigen::VectorXd agg = x.aggregate();
    const double total = agg.sum();
    if (total <= kIdleFleetThreshold)
        throw AllFleetsIdle("leader cost undefined: total fleet allocation is " +
                            std::to_string(total));
    return (agg / total - params.target_distribution).squaredNorm();
}

// Adapter exposing the game to generic solvers.
class RidehailGame {
  public:
    explicit RidehailGame(GameParams params) : params_(std::move(params)) {
        params_.validate();
    }

    int n_followers() const { return params_.n_followers; }
    int districts() const { return params_.districts; }
    const GameParams& params() const { return params_; }

    Eigen::VectorXd pseudogradient(const JointAllocation& x, const PriceVector& pi) const {
        return stackelberg::pseudogradient(x, pi, params_);
    }
    Eigen::VectorXd project(const Eigen::VectorXd& y, int i) const {
        return project_feasible(y, i, params_);
    }
    double utility(int i, const JointAllocation& x, const PriceVector& pi) const {
        return stackelberg::utility(i, x, pi, params_);
    }

    // Uniform allocation x_{i,m} = M_i / d, feasible by construction.
    JointAllocation initial_point() const {
        JointAllocation x(params_.n_followers, params_.districts);
        for (int i = 0; i < params_.n_followers; ++i)
            x.block(i).setConstant(params_.fleet_size(i) / params_.districts);
        return x;
    }

  private:
    GameParams params_;
};

}  // namespace stackelberg

#endif  // STACKELBERG_RIDEHAIL_GAME_HPP
