#ifndef STACKELBERG_GP_FIT_HPP
#define STACKELBERG_GP_FIT_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "stackelberg/common.hpp"
#include "stackelberg/gp.hpp"

namespace stackelberg {

struct FitBounds {
    double lengthscale_lo = 1e-2;
    double lengthscale_hi = 1e2;
    double signal_var_lo = 1e-4;
    double signal_var_hi = 1e2;
    double noise_sd_lo = 1e-4;
    double noise_sd_hi = 10.0;
};

struct FitResult {
    KernelSpec kernel;
    double noise_sd = 0.0;
    double nll = 0.0;
    bool degenerate = false;  // all observations identical, prior defaults returned
};

namespace detail {

// Parameter vector layout (all in log space):
//   SquaredExponential: [log l_1..log l_d, log s2, log sigma]
//   Linear:             [log s2, log sigma]
inline KernelSpec unpack_kernel(const Eigen::VectorXd& theta, KernelSpec::Kind kind, int dim) {
    KernelSpec spec;
    spec.kind = kind;
    if (kind == KernelSpec::Kind::SquaredExponential) {
        spec.lengthscale = theta.head(dim).array().exp().matrix();
        spec.signal_variance = std::exp(theta(dim));
    } else {
        spec.lengthscale = Eigen::VectorXd::Ones(dim);
        spec.signal_variance = std::exp(theta(0));
    }
    return spec;
}

inline double unpack_noise(const Eigen::VectorXd& theta) {
    return std::exp(theta(theta.size() - 1));
}

}  // namespace detail

// Negative log marginal likelihood,
// 0.5 y'(K+s^2 I)^{-1}y + 0.5 logdet(K+s^2 I) + t/2 log(2 pi).
inline double gp_nll(const std::vector<PriceVector>& inputs, const Eigen::VectorXd& obs,
                     const KernelSpec& kernel, double noise_sd) {
    const long t = static_cast<long>(inputs.size());
    const Eigen::MatrixXd A = gram_matrix(kernel, inputs) +
                              noise_sd * noise_sd * Eigen::MatrixXd::Identity(t, t);
    const Eigen::LLT<Eigen::MatrixXd> llt = jittered_llt(A);
    const Eigen::VectorXd alpha = llt.solve(obs);
    double logdet = 0.0;
    for (long i = 0; i < t; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    return 0.5 * obs.dot(alpha) + 0.5 * logdet +
           0.5 * static_cast<double>(t) * std::log(2.0 * std::numbers::pi);
}

// NLL and its analytic gradient with respect to the log-space parameters.
inline std::pair<double, Eigen::VectorXd> gp_nll_gradient(const std::vector<PriceVector>& inputs,
                                                          const Eigen::VectorXd& obs,
                                                          KernelSpec::Kind kind,
                                                          const Eigen::VectorXd& theta) {
    const long t = static_cast<long>(inputs.size());
    const int dim = static_cast<int>(inputs.front().size());
    const KernelSpec kernel = detail::unpack_kernel(theta, kind, dim);
    const double sigma = detail::unpack_noise(theta);

    const Eigen::MatrixXd K = gram_matrix(kernel, inputs);
    const Eigen::MatrixXd A = K + sigma * sigma * Eigen::MatrixXd::Identity(t, t);
    const Eigen::LLT<Eigen::MatrixXd> llt = jittered_llt(A);
    const Eigen::VectorXd alpha = llt.solve(obs);
    const Eigen::MatrixXd Ainv = llt.solve(Eigen::MatrixXd::Identity(t, t));

    double logdet = 0.0;
    for (long i = 0; i < t; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    const double nll = 0.5 * obs.dot(alpha) + 0.5 * logdet +
                       0.5 * static_cast<double>(t) * std::log(2.0 * std::numbers::pi);

    // dNLL/dp = -0.5 tr((alpha alpha' - A^{-1}) dA/dp)
    const Eigen::MatrixXd W = alpha * alpha.transpose() - Ainv;
    Eigen::VectorXd grad(theta.size());
    long p = 0;
    if (kind == KernelSpec::Kind::SquaredExponential) {
        for (int m = 0; m < dim; ++m, ++p) {
            double acc = 0.0;
            const double l2 = kernel.lengthscale(m) * kernel.lengthscale(m);
            for (long i = 0; i < t; ++i)
                for (long j = 0; j < t; ++j) {
                    const double diff = inputs[i](m) - inputs[j](m);
                    acc += W(i, j) * K(i, j) * diff * diff / l2;
                }
            grad(p) = -0.5 * acc;
        }
    }
    grad(p++) = -0.5 * (W.array() * K.array()).sum();           // log signal variance
    grad(p) = -0.5 * 2.0 * sigma * sigma * W.trace();           // log noise sd
    return {nll, grad};
}

// Multi-start projected gradient descent on the NLL in log-parameter space.
inline FitResult fit_hyperparameters(const std::vector<PriceVector>& inputs,
                                     const Eigen::VectorXd& obs, KernelSpec::Kind kind,
                                     const FitBounds& bounds, int multistarts = 8,
                                     std::uint64_t seed = 0) {
    if (inputs.size() < 2)
        throw std::invalid_argument("fit_hyperparameters needs at least 2 observations");
    const int dim = static_cast<int>(inputs.front().size());
    const int n_params = (kind == KernelSpec::Kind::SquaredExponential) ? dim + 2 : 2;

    FitResult fallback;
    fallback.kernel.kind = kind;
    fallback.kernel.lengthscale = Eigen::VectorXd::Ones(dim);
    fallback.kernel.signal_variance = 1.0;
    fallback.noise_sd = 0.1;
    if (obs.maxCoeff() - obs.minCoeff() < 1e-14) {
        fallback.degenerate = true;
        fallback.nll = gp_nll(inputs, obs, fallback.kernel, fallback.noise_sd);
        log_msg(LogLevel::Info, "fit_hyperparameters: degenerate data, returning prior defaults");
        return fallback;
    }

    Eigen::VectorXd lo(n_params), hi(n_params);
    long p = 0;
    if (kind == KernelSpec::Kind::SquaredExponential) {
        for (int m = 0; m < dim; ++m, ++p) {
            lo(p) = std::log(bounds.lengthscale_lo);
            hi(p) = std::log(bounds.lengthscale_hi);
        }
    }
    lo(p) = std::log(bounds.signal_var_lo);
    hi(p) = std::log(bounds.signal_var_hi);
    ++p;
    lo(p) = std::log(bounds.noise_sd_lo);
    hi(p) = std::log(bounds.noise_sd_hi);

    auto clamp_box = [&](Eigen::VectorXd v) {
        for (long q = 0; q < v.size(); ++q) v(q) = std::clamp(v(q), lo(q), hi(q));
        return v;
    };

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    double best_nll = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_theta;
    for (int s = 0; s < multistarts; ++s) {
        Eigen::VectorXd theta(n_params);
        if (s == 0) {
            theta = 0.5 * (lo + hi);  // geometric midpoint of the box
        } else {
            for (long q = 0; q < n_params; ++q)
                theta(q) = lo(q) + unit(rng) * (hi(q) - lo(q));
        }

        auto [f, g] = gp_nll_gradient(inputs, obs, kind, theta);
        for (int iter = 0; iter < 150; ++iter) {
            double step = 1.0;
            bool moved = false;
            while (step > 1e-10) {
                const Eigen::VectorXd cand = clamp_box(theta - step * g);
                const double fc = gp_nll_gradient(inputs, obs, kind, cand).first;
                if (fc < f - 1e-4 * step * g.squaredNorm() ||
                    (fc < f && (cand - theta).norm() > 0)) {
                    theta = cand;
                    f = fc;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
            g = gp_nll_gradient(inputs, obs, kind, theta).second;
            const Eigen::VectorXd proj_step = clamp_box(theta - g) - theta;
            if (proj_step.norm() < 1e-8) break;
        }
        if (f < best_nll) {
            best_nll = f;
            best_theta = theta;
        }
    }

    FitResult result;
    result.kernel = detail::unpack_kernel(best_theta, kind, dim);
    result.noise_sd = detail::unpack_noise(best_theta);
    result.nll = best_nll;
    return result;
}

}  // namespace stackelberg

#endif  // STACKELBERG_GP_FIT_HPP
