#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "npglab/mdp.hpp"

namespace npglab {

enum class PotentialKind { Sigma, ConditionalEntropy, Custom };

// Convex potential on the positive orthant. The sigma family interpolates
// between the squared Euclidean norm (sigma = 0), negative entropy
// (sigma = 1) and the log-barrier (sigma = 2); its Hessian is always
// diag(x^-sigma). ConditionalEntropy is sum_{s,a} eta log(eta / rho) over the
// (s, a) layout of Mdp; its Hessian geometry is the state-action counterpart
// of the policy-space metric used by Kakade's natural gradient.
//
// Sign convention: every potential stored here is convex (negative entropies,
// not entropies), and 0 log 0 := 0.
class Potential {
  public:
    using ValueFn = std::function<double(const Vec&)>;
    using GradientFn = std::function<Vec(const Vec&)>;
    using HessianFn = std::function<Mat(const Vec&)>;

    static Potential sigma(double s) {
        Potential p;
        p.kind_ = PotentialKind::Sigma;
        p.sigma_ = s;
        return p;
    }

    static Potential conditional_entropy(int n_states, int n_actions) {
        if (n_states <= 0 || n_actions <= 0)
            throw std::invalid_argument("conditional_entropy: invalid dimensions");
        Potential p;
        p.kind_ = PotentialKind::ConditionalEntropy;
        p.n_states_ = n_states;
        p.n_actions_ = n_actions;
        return p;
    }

    static Potential custom(ValueFn value, GradientFn gradient, HessianFn hessian) {
        Potential p;
        p.kind_ = PotentialKind::Custom;
        p.value_fn_ = std::move(value);
        p.gradient_fn_ = std::move(gradient);
        p.hessian_fn_ = std::move(hessian);
        return p;
    }

    PotentialKind kind() const { return kind_; }
    double sigma_exponent() const { return sigma_; }
    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }

    double value(const Vec& x) const {
        switch (kind_) {
            case PotentialKind::Sigma:
                return sigma_value(x);
            case PotentialKind::ConditionalEntropy:
                return cond_entropy_value(x);
            case PotentialKind::Custom:
                return value_fn_(x);
        }
        throw std::logic_error("potential: bad kind");
    }

    Vec gradient(const Vec& x) const {
        switch (kind_) {
            case PotentialKind::Sigma: {
                require_interior(x, sigma_ > 0.0);
                if (sigma_ == 1.0) return (x.array().log() + 1.0).matrix();
                if (sigma_ == 2.0) return (-x.array().inverse()).matrix();
                return (x.array().pow(1.0 - sigma_) / (1.0 - sigma_)).matrix();
            }
            case PotentialKind::ConditionalEntropy: {
                require_interior(x, true);
                const Vec rho = marginals(x);
                Vec g(x.size());
                for (int s = 0; s < n_states_; ++s)
                    for (int a = 0; a < n_actions_; ++a) {
                        const int i = s * n_actions_ + a;
                        g(i) = std::log(x(i) / rho(s));
                    }
                return g;
            }
            case PotentialKind::Custom:
                return gradient_fn_(x);
        }
        throw std::logic_error("potential: bad kind");
    }

    Mat hessian(const Vec& x) const {
        switch (kind_) {
            case PotentialKind::Sigma: {
                require_interior(x, sigma_ > 0.0);
                return x.array().pow(-sigma_).matrix().asDiagonal();
            }
            case PotentialKind::ConditionalEntropy: {
                require_interior(x, true);
                const Vec rho = marginals(x);
                Mat h = Mat::Zero(x.size(), x.size());
                for (int s = 0; s < n_states_; ++s)
                    for (int a = 0; a < n_actions_; ++a) {
                        const int i = s * n_actions_ + a;
                        h(i, i) = 1.0 / x(i);
                        for (int b = 0; b < n_actions_; ++b)
                            h(i, s * n_actions_ + b) -= 1.0 / rho(s);
                    }
                return h;
            }
            case PotentialKind::Custom:
                return hessian_fn_(x);
        }
        throw std::logic_error("potential: bad kind");
    }

  private:
    double sigma_value(const Vec& x) const {
        if (sigma_ > 0.0 && x.minCoeff() < 0.0)
            fail_domain(x, "nonpositive entry where positivity is required");
        if (sigma_ == 1.0) {
            double acc = 0.0;
            for (int i = 0; i < x.size(); ++i)
                if (x(i) > 0.0) acc += x(i) * std::log(x(i));
            return acc;
        }
        if (sigma_ == 2.0) {
            double acc = 0.0;
            for (int i = 0; i < x.size(); ++i) {
                if (x(i) <= 0.0) return std::numeric_limits<double>::infinity();
                acc -= std::log(x(i));
            }
            return acc;
        }
        if (sigma_ > 2.0 && x.minCoeff() <= 0.0)
            return std::numeric_limits<double>::infinity();
        const double c = 1.0 / ((2.0 - sigma_) * (1.0 - sigma_));
        return c * x.array().pow(2.0 - sigma_).sum();
    }

    double cond_entropy_value(const Vec& x) const {
        check_layout(x);
        if (x.minCoeff() < 0.0)
            fail_domain(x, "nonpositive entry where positivity is required");
        const Vec rho = marginals(x);
        double acc = 0.0;
        for (int s = 0; s < n_states_; ++s)
            for (int a = 0; a < n_actions_; ++a) {
                const double e = x(s * n_actions_ + a);
                if (e > 0.0) acc += e * std::log(e / rho(s));
            }
        return acc;
    }

    Vec marginals(const Vec& x) const {
        check_layout(x);
        Vec rho = Vec::Zero(n_states_);
        for (int s = 0; s < n_states_; ++s)
            for (int a = 0; a < n_actions_; ++a) rho(s) += x(s * n_actions_ + a);
        return rho;
    }

    void check_layout(const Vec& x) const {
        if (x.size() != static_cast<Eigen::Index>(n_states_) * n_actions_)
            throw std::invalid_argument("conditional_entropy: vector does not match (s,a) layout");
    }

    void require_interior(const Vec& x, bool needed) const {
        if (!needed) return;
        if (x.minCoeff() <= 0.0) fail_domain(x, "derivative requires strictly positive entries");
    }

    [[noreturn]] void fail_domain(const Vec& x, const char* what) const {
        int arg = 0;
        x.minCoeff(&arg);
        std::ostringstream os;
        os << "potential: " << what << " (entry " << arg << " = " << x(arg) << ")";
        throw std::domain_error(os.str());
    }

    PotentialKind kind_ = PotentialKind::Sigma;
    double sigma_ = 1.0;
    int n_states_ = 0;
    int n_actions_ = 0;
    ValueFn value_fn_;
    GradientFn gradient_fn_;
    HessianFn hessian_fn_;
};

inline double potential_value(const Potential& phi, const Vec& x) { return phi.value(x); }
inline Vec potential_gradient(const Potential& phi, const Vec& x) { return phi.gradient(x); }
inline Mat potential_hessian(const Potential& phi, const Vec& x) { return phi.hessian(x); }

// D_phi(x, y) = phi(x) - phi(y) - <grad phi(y), x - y>. Nonnegative; +infinity
// when x lies outside the closure of the domain of phi (e.g. a zero entry for
// sigma >= 2), which is a value, not an error.
inline double bregman_divergence(const Potential& phi, const Vec& x, const Vec& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("bregman_divergence: size mismatch");
    const double vx = phi.value(x);
    if (std::isinf(vx)) return std::numeric_limits<double>::infinity();
    return vx - phi.value(y) - phi.gradient(y).dot(x - y);
}

// Riemannian inner product of the Hessian geometry, v^T hess(phi)(x) w.
inline double metric_inner(const Potential& phi, const Vec& x, const Vec& v, const Vec& w) {
    return v.dot(phi.hessian(x) * w);
}

namespace fd {

// Central-difference step used by the check utilities.
inline double step(double xi) { return 1e-5 * std::max(1.0, std::abs(xi)); }

template <typename F>
Vec gradient(F&& f, const Vec& x) {
    Vec g(x.size());
    Vec xp = x, xm = x;
    for (int i = 0; i < x.size(); ++i) {
        const double h = step(x(i));
        xp(i) = x(i) + h;
        xm(i) = x(i) - h;
        g(i) = (f(xp) - f(xm)) / (2.0 * h);
        xp(i) = x(i);
        xm(i) = x(i);
    }
    return g;
}

template <typename F>
Mat hessian(F&& f, const Vec& x) {
    const int n = static_cast<int>(x.size());
    Mat h(n, n);
    Vec y = x;
    for (int i = 0; i < n; ++i) {
        const double hi = step(x(i));
        for (int j = 0; j < n; ++j) {
            const double hj = step(x(j));
            y = x;
            y(i) += hi;
            y(j) += hj;
            const double fpp = f(y);
            y = x;
            y(i) += hi;
            y(j) -= hj;
            const double fpm = f(y);
            y = x;
            y(i) -= hi;
            y(j) += hj;
            const double fmp = f(y);
            y = x;
            y(i) -= hi;
            y(j) -= hj;
            const double fmm = f(y);
            h(i, j) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
        }
    }
    return 0.5 * (h + h.transpose());
}

}  // namespace fd

// Finite-difference Hessians of y -> D_phi(x, y) and y -> D_phi(y, x) at
// y = x. Both should match hess(phi)(x); exposed as a check utility.
inline std::pair<Mat, Mat> hessian_of_bregman_check(const Potential& phi, const Vec& x) {
    auto first = [&](const Vec& y) { return bregman_divergence(phi, x, y); };
    auto second = [&](const Vec& y) { return bregman_divergence(phi, y, x); };
    return {fd::hessian(first, x), fd::hessian(second, x)};
}

// Potential names accepted in configs and on the command line:
// "sigma:<float>" and "conditional_entropy".
inline Potential parse_potential(const std::string& name, int n_states, int n_actions) {
    if (name == "conditional_entropy")
        return Potential::conditional_entropy(n_states, n_actions);
    if (name.rfind("sigma:", 0) == 0) {
        try {
            return Potential::sigma(std::stod(name.substr(6)));
        } catch (const std::logic_error&) {
            throw std::invalid_argument("unknown potential: " + name);
        }
    }
    throw std::invalid_argument("unknown potential: " + name);
}

}  // namespace npglab
