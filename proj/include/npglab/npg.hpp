#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "npglab/geometry.hpp"
#include "npglab/mdp.hpp"

namespace npglab {

// Tabular softmax parameters, one entry per (s, a) in the flat layout.
using SoftmaxParams = Vec;

// Selector for the metric behind a natural gradient. Morimura's NPG is the
// sigma = 1 Hessian geometry; Kakade's NPG is the Hessian geometry of the
// conditional entropy pulled back to policy space.
struct GeometrySpec {
    enum class Kind { Vanilla, Kakade, Morimura, Sigma, HessianOf };

    Kind kind = Kind::Kakade;
    double sigma = 1.0;                 // for Kind::Sigma
    std::optional<Potential> phi;       // for Kind::HessianOf

    static GeometrySpec vanilla() { return {Kind::Vanilla, 0.0, std::nullopt}; }
    static GeometrySpec kakade() { return {Kind::Kakade, 0.0, std::nullopt}; }
    static GeometrySpec morimura() { return {Kind::Morimura, 0.0, std::nullopt}; }
    static GeometrySpec sigma_geometry(double s) { return {Kind::Sigma, s, std::nullopt}; }
    static GeometrySpec hessian_of(Potential p) {
        return {Kind::HessianOf, 0.0, std::move(p)};
    }
};

// Objective R_lambda(theta) = <r, eta_theta> - lambda * phi(eta_theta).
// lambda = 0 is the plain discounted reward and ignores the regularizer.
struct Objective {
    double lambda = 0.0;
    std::optional<Potential> regularizer;

    static Objective unregularized() { return {}; }
    static Objective regularized(double lambda, Potential phi) {
        if (lambda < 0.0) throw std::invalid_argument("objective: lambda must be >= 0");
        return {lambda, std::move(phi)};
    }
};

inline Policy softmax_policy(const Mdp& m, const SoftmaxParams& theta) {
    if (theta.size() != m.sa_dim())
        throw std::invalid_argument("softmax_policy: theta has wrong length");
    if (!theta.allFinite())
        throw std::invalid_argument("softmax_policy: theta has non-finite entries");
    Mat probs(m.n_states, m.n_actions);
    for (int s = 0; s < m.n_states; ++s) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < m.n_actions; ++a) mx = std::max(mx, theta(m.idx(s, a)));
        double z = 0.0;
        for (int a = 0; a < m.n_actions; ++a) {
            probs(s, a) = std::exp(theta(m.idx(s, a)) - mx);
            z += probs(s, a);
        }
        probs.row(s) /= z;
    }
    return Policy{std::move(probs)};
}

// Exact Jacobian of theta -> eta_theta (columns indexed like theta). Columns
// span the tangent space of the polytope; per-state row sums of any column
// vanish, so the linear constraint map annihilates the range.
inline Mat jacobian_eta(const Mdp& m, const SoftmaxParams& theta) {
    const int n = m.sa_dim();
    const Policy pi = softmax_policy(m, theta);
    const StateActionFrequency freq = state_action_frequency(m, pi);
    const TransitionKernels k = transition_kernels(m, pi);
    // d eta / d pi(a|s) = rho(s) (I - gamma P_pi^T)^{-1} e_(s,a); composing with
    // the softmax Jacobian gives column (s,a) as the solve of
    // c(s,a') = eta(s,a') (delta_{a'a} - pi(a|s)).
    Mat c = Mat::Zero(n, n);
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) {
            const int col = m.idx(s, a);
            for (int ap = 0; ap < m.n_actions; ++ap) {
                const int row = m.idx(s, ap);
                c(row, col) = freq.eta(row) * ((ap == a ? 1.0 : 0.0) - pi.probs(s, a));
            }
        }
    const Mat system = Mat::Identity(n, n) - m.gamma * k.state_action.transpose();
    return system.partialPivLu().solve(c);
}

// Gradient in state-action space of the (possibly regularized) objective,
// r - lambda grad phi(eta).
inline Vec state_action_gradient(const Mdp& m, const Vec& eta, const Objective& obj) {
    Vec g = m.r;
    if (obj.lambda > 0.0) {
        if (!obj.regularizer)
            throw std::invalid_argument("objective: lambda > 0 requires a regularizer");
        g -= obj.lambda * obj.regularizer->gradient(eta);
    }
    return g;
}

inline double objective_value(const Mdp& m, const Vec& eta, const Objective& obj) {
    double val = m.r.dot(eta);
    if (obj.lambda > 0.0) {
        if (!obj.regularizer)
            throw std::invalid_argument("objective: lambda > 0 requires a regularizer");
        val -= obj.lambda * obj.regularizer->value(eta);
    }
    return val;
}

// Exact gradient of R_lambda(theta). The reward term comes from the policy
// gradient theorem, d/d theta_(s,a) R = eta(s,a) (Q(s,a) - V(s)); the
// regularizer term is the chain rule through eta_theta.
inline Vec policy_gradient(const Mdp& m, const SoftmaxParams& theta, const Objective& obj) {
    const Policy pi = softmax_policy(m, theta);
    const BellmanData bell = bellman_data(m, pi);
    const StateActionFrequency freq = state_action_frequency(m, pi);
    Vec grad(m.sa_dim());
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) {
            const int i = m.idx(s, a);
            grad(i) = freq.eta(i) * (bell.q(i) - bell.v(s));
        }
    if (obj.lambda > 0.0) {
        if (!obj.regularizer)
            throw std::invalid_argument("objective: lambda > 0 requires a regularizer");
        grad -= obj.lambda * (jacobian_eta(m, theta).transpose() *
                              obj.regularizer->gradient(freq.eta));
    }
    return grad;
}

// Hessian metric tensor in state-action coordinates for a geometry selector.
// Vanilla has no state-action counterpart and is rejected here.
inline Mat geometry_hessian(const GeometrySpec& geo, const Mdp& m, const Vec& eta) {
    switch (geo.kind) {
        case GeometrySpec::Kind::Kakade:
            return Potential::conditional_entropy(m.n_states, m.n_actions).hessian(eta);
        case GeometrySpec::Kind::Morimura:
            return Potential::sigma(1.0).hessian(eta);
        case GeometrySpec::Kind::Sigma:
            return Potential::sigma(geo.sigma).hessian(eta);
        case GeometrySpec::Kind::HessianOf:
            if (!geo.phi) throw std::invalid_argument("geometry: HessianOf without potential");
            return geo.phi->hessian(eta);
        case GeometrySpec::Kind::Vanilla:
            break;
    }
    throw std::invalid_argument("geometry: vanilla has no state-action Hessian");
}

// Fisher information matrix of the state marginals,
// F_rho(theta)_ij = sum_s (d_i rho(s)) (d_j rho(s)) / rho(s).
inline Mat state_fisher_matrix(const Mdp& m, const SoftmaxParams& theta) {
    const Mat j = jacobian_eta(m, theta);
    const Policy pi = softmax_policy(m, theta);
    const StateActionFrequency freq = state_action_frequency(m, pi);
    Mat drho = Mat::Zero(m.n_states, m.sa_dim());
    Vec rho = Vec::Zero(m.n_states);
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) {
            drho.row(s) += j.row(m.idx(s, a));
            rho(s) += freq.eta(m.idx(s, a));
        }
    return drho.transpose() * rho.cwiseInverse().asDiagonal() * drho;
}

// Gram matrix of the chosen geometry at theta. Kakade's Gram is assembled
// directly in policy space from rho(s) pi(a|s) (delta_{aa'} - pi(a'|s));
// state-action geometries are assembled as J^T hess(phi)(eta) J from the
// analytic Jacobian. The two Kakade routes coincide (pullback identity) and
// are cross-checked in the tests.
inline Mat gram_matrix(const Mdp& m, const SoftmaxParams& theta, const GeometrySpec& geo) {
    const int n = m.sa_dim();
    if (geo.kind == GeometrySpec::Kind::Vanilla) return Mat::Identity(n, n);
    if (geo.kind == GeometrySpec::Kind::Kakade) {
        const Policy pi = softmax_policy(m, theta);
        const StateActionFrequency freq = state_action_frequency(m, pi);
        Mat g = Mat::Zero(n, n);
        for (int s = 0; s < m.n_states; ++s) {
            double rho = 0.0;
            for (int a = 0; a < m.n_actions; ++a) rho += freq.eta(m.idx(s, a));
            for (int a = 0; a < m.n_actions; ++a)
                for (int b = 0; b < m.n_actions; ++b)
                    g(m.idx(s, a), m.idx(s, b)) =
                        rho * pi.probs(s, a) * ((a == b ? 1.0 : 0.0) - pi.probs(s, b));
        }
        return 0.5 * (g + g.transpose());
    }
    const Mat j = jacobian_eta(m, theta);
    const Policy pi = softmax_policy(m, theta);
    const StateActionFrequency freq = state_action_frequency(m, pi);
    const Mat h = geometry_hessian(geo, m, freq.eta);
    Mat g = j.transpose() * h * j;
    return 0.5 * (g + g.transpose());
}

// Moore-Penrose pseudoinverse applied to a vector, via SVD with a relative
// singular value cutoff.
inline Vec pinv_apply(const Mat& a, const Vec& b, double rel_cutoff = 1e-10) {
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& sv = svd.singularValues();
    if (sv.size() == 0) return Vec::Zero(a.cols());
    const double cutoff = sv(0) * rel_cutoff;
    Vec coeffs = svd.matrixU().transpose() * b;
    for (int i = 0; i < sv.size(); ++i)
        coeffs(i) = sv(i) > cutoff ? coeffs(i) / sv(i) : 0.0;
    return svd.matrixV() * coeffs;
}

// Natural gradient direction G(theta)^+ grad R_lambda(theta).
inline Vec npg_direction(const Mdp& m, const SoftmaxParams& theta, const GeometrySpec& geo,
                         const Objective& obj) {
    const Vec grad = policy_gradient(m, theta, obj);
    if (geo.kind == GeometrySpec::Kind::Vanilla) return grad;
    return pinv_apply(gram_matrix(m, theta, geo), grad);
}

// Geometry names accepted in configs and on the command line.
inline GeometrySpec parse_geometry(const std::string& name, int n_states, int n_actions) {
    if (name == "vanilla") return GeometrySpec::vanilla();
    if (name == "kakade") return GeometrySpec::kakade();
    if (name == "morimura") return GeometrySpec::morimura();
    if (name.rfind("sigma:", 0) == 0) {
        try {
            return GeometrySpec::sigma_geometry(std::stod(name.substr(6)));
        } catch (const std::logic_error&) {
            throw std::invalid_argument("unknown geometry: " + name);
        }
    }
    if (name.rfind("hessian:", 0) == 0)
        return GeometrySpec::hessian_of(parse_potential(name.substr(8), n_states, n_actions));
    throw std::invalid_argument("unknown geometry: " + name);
}

inline std::string geometry_name(const GeometrySpec& geo) {
    switch (geo.kind) {
        case GeometrySpec::Kind::Vanilla: return "vanilla";
        case GeometrySpec::Kind::Kakade: return "kakade";
        case GeometrySpec::Kind::Morimura: return "morimura";
        case GeometrySpec::Kind::Sigma: {
            std::ostringstream os;
            os << "sigma:" << geo.sigma;
            return os.str();
        }
        case GeometrySpec::Kind::HessianOf: {
            if (geo.phi && geo.phi->kind() == PotentialKind::ConditionalEntropy)
                return "hessian:conditional_entropy";
            if (geo.phi && geo.phi->kind() == PotentialKind::Sigma) {
                std::ostringstream os;
                os << "hessian:sigma:" << geo.phi->sigma_exponent();
                return os.str();
            }
            return "hessian:custom";
        }
    }
    return "unknown";
}

}  // namespace npglab
