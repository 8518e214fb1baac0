#ifndef STACKELBERG_GP_HPP
#define STACKELBERG_GP_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stackelberg/common.hpp"
#include "stackelberg/ridehail_game.hpp"

namespace stackelberg {

struct KernelSpec {
    enum class Kind { SquaredExponential, Linear } kind = Kind::SquaredExponential;
    Eigen::VectorXd lengthscale;   // per input dimension, SquaredExponential only
    double signal_variance = 1.0;

    nlohmann::json to_json() const {
        return {{"kind", kind == Kind::SquaredExponential ? "squared_exponential" : "linear"},
                {"lengthscale",
                 std::vector<double>(lengthscale.data(), lengthscale.data() + lengthscale.size())},
                {"signal_variance", signal_variance}};
    }
    static KernelSpec from_json(const nlohmann::json& j) {
        KernelSpec s;
        const std::string kind = j.at("kind").get<std::string>();
        s.kind = (kind == "linear") ? Kind::Linear : Kind::SquaredExponential;
        const auto ls = j.at("lengthscale").get<std::vector<double>>();
        s.lengthscale = Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<long>(ls.size()));
        s.signal_variance = j.at("signal_variance").get<double>();
        return s;
    }
};

inline double kernel_eval(const KernelSpec& spec, const PriceVector& a, const PriceVector& b) {
    if (spec.kind == KernelSpec::Kind::Linear) return spec.signal_variance * a.dot(b);
    double q = 0.0;
    for (long m = 0; m < a.size(); ++m) {
        const double diff = (a(m) - b(m)) / spec.lengthscale(m);
        q += diff * diff;
    }
    return spec.signal_variance * std::exp(-0.5 * q);
}

inline Eigen::MatrixXd gram_matrix(const KernelSpec& spec,
                                   const std::vector<PriceVector>& inputs) {
    const long t = static_cast<long>(inputs.size());
    Eigen::MatrixXd K(t, t);
    for (long i = 0; i < t; ++i)
        for (long j = i; j < t; ++j) {
            K(i, j) = kernel_eval(spec, inputs[i], inputs[j]);
            K(j, i) = K(i, j);
        }
    return K;
}

// Cholesky of A + jitter*I, jitter starting at 1e-10 and doubling up to 1e-6.
inline Eigen::LLT<Eigen::MatrixXd> jittered_llt(const Eigen::MatrixXd& A) {
    double jitter = 1e-10;
    while (jitter <= 1e-6) {
        Eigen::LLT<Eigen::MatrixXd> llt(
            A + jitter * Eigen::MatrixXd::Identity(A.rows(), A.cols()));
        if (llt.info() == Eigen::Success) {
            if (jitter > 1e-10)
                log_msg(LogLevel::Info, "Gram factorization needed jitter " +
                                            std::to_string(jitter));
            return llt;
        }
        jitter *= 2.0;
    }
    throw FactorizationFailed("Gram matrix numerically indefinite even with 1e-6 jitter");
}

// Posterior state over the leader's cost: observed (price, realized cost)
// pairs plus a cached factorization of K + sigma^2 I. Immutable after
// construction; append returns a new state.
class GpState {
  public:
    GpState(KernelSpec kernel, double noise_sd)
        : kernel_(std::move(kernel)), noise_sd_(noise_sd) {}

    GpState(KernelSpec kernel, double noise_sd, std::vector<PriceVector> inputs,
            Eigen::VectorXd observations)
        : kernel_(std::move(kernel)),
          noise_sd_(noise_sd),
          inputs_(std::move(inputs)),
          observations_(std::move(observations)) {
        refactorize();
    }

    long size() const { return static_cast<long>(inputs_.size()); }
    const std::vector<PriceVector>& inputs() const { return inputs_; }
    const Eigen::VectorXd& observations() const { return observations_; }
    const KernelSpec& kernel() const { return kernel_; }
    double noise_sd() const { return noise_sd_; }

    GpState append(const PriceVector& pi, double cost) const {
        std::vector<PriceVector> in = inputs_;
        in.push_back(pi);
        Eigen::VectorXd obs(observations_.size() + 1);
        obs.head(observations_.size()) = observations_;
        obs(observations_.size()) = cost;
        return GpState(kernel_, noise_sd_, std::move(in), std::move(obs));
    }

    // Same data under different hyperparameters (post warm-up refit).
    GpState with_hyperparameters(KernelSpec kernel, double noise_sd) const {
        return GpState(std::move(kernel), noise_sd, inputs_, observations_);
    }

    std::pair<double, double> posterior(const PriceVector& pi) const {
        const double prior_var = kernel_eval(kernel_, pi, pi);
        if (size() == 0) return {0.0, prior_var};
        Eigen::VectorXd kvec(size());
        for (long i = 0; i < size(); ++i) kvec(i) = kernel_eval(kernel_, inputs_[i], pi);
        const double mean = kvec.dot(alpha_);
        const Eigen::VectorXd w = llt_.solve(kvec);
        double var = prior_var - kvec.dot(w);
        if (var < -1e-10)
            log_msg(LogLevel::Info,
                    "posterior variance clamped from " + std::to_string(var));
        return {mean, std::max(var, 0.0)};
    }

    // 0.5 * logdet(I + sigma^-2 K) over the realized inputs; a lower bound on
    // the maximum information gain.
    double greedy_info_gain() const {
        if (size() == 0) return 0.0;
        const Eigen::MatrixXd A =
            Eigen::MatrixXd::Identity(size(), size()) +
            gram_matrix(kernel_, inputs_) / (noise_sd_ * noise_sd_);
        const Eigen::LLT<Eigen::MatrixXd> llt = jittered_llt(A);
        double logdet = 0.0;
        for (long i = 0; i < size(); ++i) logdet += std::log(llt.matrixL()(i, i));
        return logdet;  // 2 * sum(log diag(L)) / 2
    }

    nlohmann::json to_json() const {
        nlohmann::json in = nlohmann::json::array();
        for (const auto& pi : inputs_)
            in.push_back(std::vector<double>(pi.data(), pi.data() + pi.size()));
        return {{"inputs", in},
                {"observations", std::vector<double>(observations_.data(),
                                                     observations_.data() +
                                                         observations_.size())},
                {"kernel", kernel_.to_json()},
                {"noise_sd", noise_sd_}};
    }

    static GpState from_json(const nlohmann::json& j) {
        std::vector<PriceVector> inputs;
        for (const auto& a : j.at("inputs")) {
            const auto v = a.get<std::vector<double>>();
            inputs.push_back(
                Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size())));
        }
        const auto obs = j.at("observations").get<std::vector<double>>();
        Eigen::VectorXd y =
            Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<long>(obs.size()));
        return GpState(KernelSpec::from_json(j.at("kernel")), j.at("noise_sd").get<double>(),
                       std::move(inputs), std::move(y));
    }

  private:
    void refactorize() {
        const Eigen::MatrixXd A =
            gram_matrix(kernel_, inputs_) +
            noise_sd_ * noise_sd_ * Eigen::MatrixXd::Identity(size(), size());
        llt_ = jittered_llt(A);
        alpha_ = llt_.solve(observations_);
    }

    KernelSpec kernel_;
    double noise_sd_;
    std::vector<PriceVector> inputs_;
    Eigen::VectorXd observations_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;  // (K + sigma^2 I)^{-1} y
};

}  // namespace stackelberg

#endif  // STACKELBERG_GP_HPP
