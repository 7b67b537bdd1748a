#pragma once

#include <Eigen/Dense>

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace npglab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Tolerances used for validation throughout the library.
inline constexpr double kStochasticTol = 1e-12;
inline constexpr double kFeasibilityTol = 1e-10;

// Finite Markov decision process with discounted reward criterion.
//
// State-action pairs are flattened as s * n_actions + a everywhere in this
// library. Row (s, a) of `alpha` holds the next-state distribution under
// (s, a); `r` is the instantaneous reward vector and `mu` the initial state
// distribution.
struct Mdp {
    int n_states = 0;
    int n_actions = 0;
    Mat alpha;  // (S*A) x S, rows stochastic
    Vec r;      // S*A
    double gamma = 0.0;
    Vec mu;     // S

    int sa_dim() const { return n_states * n_actions; }
    int idx(int s, int a) const { return s * n_actions + a; }
};

// Conditional distribution of actions given states, rows stochastic.
struct Policy {
    Mat probs;  // S x A
};

// Discounted state-action visitation distribution. Nonnegative, sums to one
// and satisfies the flow constraints of the state-action polytope.
struct StateActionFrequency {
    Vec eta;  // S*A
};

// Q, V and the state marginal rho for a fixed policy. Q is unnormalized,
// Q = (I - gamma P_pi)^{-1} r, so that <r, eta> = (1-gamma) <mu, V>.
struct BellmanData {
    Vec q;    // S*A
    Vec v;    // S
    Vec rho;  // S
};

inline void validate_mdp(const Mdp& m) {
    if (m.n_states <= 0 || m.n_actions <= 0)
        throw std::invalid_argument("mdp: state and action counts must be positive");
    const int n = m.sa_dim();
    if (m.alpha.rows() != n || m.alpha.cols() != m.n_states)
        throw std::invalid_argument("mdp: alpha has wrong shape");
    if (m.r.size() != n)
        throw std::invalid_argument("mdp: reward vector has wrong length");
    if (m.mu.size() != m.n_states)
        throw std::invalid_argument("mdp: initial distribution has wrong length");
    if (!(m.gamma > 0.0 && m.gamma < 1.0)) {
        std::ostringstream os;
        os << "mdp: discount out of range (0,1): gamma = " << m.gamma;
        throw std::invalid_argument(os.str());
    }
    for (int s = 0; s < m.n_states; ++s) {
        for (int a = 0; a < m.n_actions; ++a) {
            const auto row = m.alpha.row(m.idx(s, a));
            if (row.minCoeff() < 0.0) {
                std::ostringstream os;
                os << "mdp: alpha row (s=" << s << ", a=" << a << ") has a negative entry";
                throw std::invalid_argument(os.str());
            }
            if (std::abs(row.sum() - 1.0) > kStochasticTol) {
                std::ostringstream os;
                os << "mdp: alpha row not stochastic at (s=" << s << ", a=" << a
                   << "), sum = " << row.sum();
                throw std::invalid_argument(os.str());
            }
        }
    }
    if (m.mu.minCoeff() < 0.0)
        throw std::invalid_argument("mdp: initial distribution has a negative entry");
    if (std::abs(m.mu.sum() - 1.0) > kStochasticTol) {
        std::ostringstream os;
        os << "mdp: initial distribution not stochastic, sum = " << m.mu.sum();
        throw std::invalid_argument(os.str());
    }
}

inline void validate_policy(const Mdp& m, const Policy& pi) {
    if (pi.probs.rows() != m.n_states || pi.probs.cols() != m.n_actions)
        throw std::invalid_argument("policy: wrong shape for this mdp");
    for (int s = 0; s < m.n_states; ++s) {
        if (pi.probs.row(s).minCoeff() < 0.0) {
            std::ostringstream os;
            os << "policy: row not stochastic at s=" << s << " (negative entry)";
            throw std::invalid_argument(os.str());
        }
        if (std::abs(pi.probs.row(s).sum() - 1.0) > kStochasticTol) {
            std::ostringstream os;
            os << "policy: row not stochastic at s=" << s << ", sum = " << pi.probs.row(s).sum();
            throw std::invalid_argument(os.str());
        }
    }
}

inline Policy uniform_policy(const Mdp& m) {
    return Policy{Mat::Constant(m.n_states, m.n_actions, 1.0 / m.n_actions)};
}

struct TransitionKernels {
    Mat state_action;  // (S*A) x (S*A), P_pi((s',a') | (s,a))
    Mat state;         // S x S, p_pi(s' | s)
};

// Markov kernels induced by a policy on state-action pairs and on states.
inline TransitionKernels transition_kernels(const Mdp& m, const Policy& pi) {
    if (pi.probs.rows() != m.n_states || pi.probs.cols() != m.n_actions)
        throw std::invalid_argument("transition_kernels: policy shape mismatch");
    const int n = m.sa_dim();
    Mat big = Mat::Zero(n, n);
    Mat small = Mat::Zero(m.n_states, m.n_states);
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) {
            const int sa = m.idx(s, a);
            for (int sp = 0; sp < m.n_states; ++sp) {
                const double p = m.alpha(sa, sp);
                small(s, sp) += pi.probs(s, a) * p;
                for (int ap = 0; ap < m.n_actions; ++ap)
                    big(sa, m.idx(sp, ap)) = p * pi.probs(sp, ap);
            }
        }
    return TransitionKernels{std::move(big), std::move(small)};
}

namespace detail {

inline void check_finite(const Vec& x, const char* what) {
    if (!x.allFinite())
        throw std::runtime_error(std::string(what) + ": linear solve produced non-finite values");
}

}  // namespace detail

// Occupancy measure of a policy, eta = (1-gamma) (I - gamma P_pi^T)^{-1} (mu * pi).
inline StateActionFrequency state_action_frequency(const Mdp& m, const Policy& pi) {
    const int n = m.sa_dim();
    const TransitionKernels k = transition_kernels(m, pi);
    Vec start(n);
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a)
            start(m.idx(s, a)) = m.mu(s) * pi.probs(s, a);
    const Mat system = Mat::Identity(n, n) - m.gamma * k.state_action.transpose();
    Vec eta = (1.0 - m.gamma) * system.partialPivLu().solve(start);
    detail::check_finite(eta, "state_action_frequency");
    // Clamp the tiny negative round-off that the solve can produce.
    eta = eta.cwiseMax(0.0);
    return StateActionFrequency{std::move(eta)};
}

// Residuals of the flow constraints,
// l_s(eta) = sum_a eta(s,a) - gamma sum_{s',a'} eta(s',a') alpha(s|s',a') - (1-gamma) mu(s).
// eta lies in the state-action polytope iff eta >= 0 and all residuals vanish.
inline Vec polytope_residuals(const Mdp& m, const Vec& eta) {
    if (eta.size() != m.sa_dim())
        throw std::invalid_argument("polytope_residuals: eta has wrong length");
    Vec res = -(1.0 - m.gamma) * m.mu;
    res += m.alpha.transpose() * eta * (-m.gamma);
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a)
            res(s) += eta(m.idx(s, a));
    return res;
}

// Linear part of the polytope constraints: W eta = (1-gamma) mu characterizes
// the affine hull. W has full row rank S for gamma < 1, so ker(W) is the
// tangent space of the polytope with dimension S(A-1).
inline Mat constraint_matrix(const Mdp& m) {
    const int n = m.sa_dim();
    Mat w = -m.gamma * m.alpha.transpose();
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a)
            w(s, m.idx(s, a)) += 1.0;
    return w;
}

// Orthonormal basis of the tangent space ker(W), as columns of an n x (n - S) matrix.
inline Mat tangent_basis(const Mdp& m) {
    const Mat w = constraint_matrix(m);
    Eigen::JacobiSVD<Mat> svd(w, Eigen::ComputeFullV);
    const int n = m.sa_dim();
    const int dim = n - m.n_states;
    return svd.matrixV().rightCols(dim);
}

// Inverse of the occupancy map: pi(a|s) = eta(s,a) / rho(s). Requires every
// state marginal to be positive.
inline Policy conditioning(const Mdp& m, const StateActionFrequency& freq) {
    if (freq.eta.size() != m.sa_dim())
        throw std::invalid_argument("conditioning: eta has wrong length");
    Mat probs(m.n_states, m.n_actions);
    for (int s = 0; s < m.n_states; ++s) {
        double rho = 0.0;
        for (int a = 0; a < m.n_actions; ++a) rho += freq.eta(m.idx(s, a));
        if (rho <= 0.0) {
            std::ostringstream os;
            os << "conditioning: zero state marginal at s=" << s
               << " (positivity assumption violated)";
            throw std::domain_error(os.str());
        }
        for (int a = 0; a < m.n_actions; ++a) probs(s, a) = freq.eta(m.idx(s, a)) / rho;
    }
    return Policy{std::move(probs)};
}

// Q = (I - gamma P_pi)^{-1} r together with V and the state marginal rho.
inline BellmanData bellman_data(const Mdp& m, const Policy& pi) {
    const int n = m.sa_dim();
    const TransitionKernels k = transition_kernels(m, pi);
    const Mat system = Mat::Identity(n, n) - m.gamma * k.state_action;
    Vec q = system.partialPivLu().solve(m.r);
    detail::check_finite(q, "bellman_data");
    Vec v(m.n_states);
    for (int s = 0; s < m.n_states; ++s) {
        double acc = 0.0;
        for (int a = 0; a < m.n_actions; ++a) acc += pi.probs(s, a) * q(m.idx(s, a));
        v(s) = acc;
    }
    const StateActionFrequency freq = state_action_frequency(m, pi);
    Vec rho = Vec::Zero(m.n_states);
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) rho(s) += freq.eta(m.idx(s, a));
    return BellmanData{std::move(q), std::move(v), std::move(rho)};
}

inline double reward(const Mdp& m, const Policy& pi) {
    return m.r.dot(state_action_frequency(m, pi).eta);
}

// Which sufficient condition for the positivity assumption holds, if any.
enum class PositivityCondition { MuPositive, AlphaPositive, Unknown };

inline PositivityCondition positivity_condition(const Mdp& m) {
    if (m.mu.minCoeff() > 0.0) return PositivityCondition::MuPositive;
    if (m.alpha.minCoeff() > 0.0 && m.gamma > 0.0) return PositivityCondition::AlphaPositive;
    return PositivityCondition::Unknown;
}

}  // namespace npglab
