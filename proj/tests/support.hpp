#pragma once

#include <cstdint>
#include <random>

#include "npglab/mdp.hpp"

namespace npglab::testing {

// Two-state, two-action example: action a1 switches states, action a2 stays.
// Staying pays 2 in s1 and 1 in s2; mu = (0.2, 0.8), gamma = 0.9. The optimum
// is to stay in s1 and to switch in s2, with value 1.84 and occupancies
// eta(s1,a2) = 0.92, eta(s2,a1) = 0.08.
inline Mdp two_state_example() {
    Mdp m;
    m.n_states = 2;
    m.n_actions = 2;
    m.gamma = 0.9;
    m.alpha = Mat::Zero(4, 2);
    m.alpha(m.idx(0, 0), 1) = 1.0;  // s1 --a1--> s2
    m.alpha(m.idx(0, 1), 0) = 1.0;  // s1 --a2--> s1
    m.alpha(m.idx(1, 0), 0) = 1.0;  // s2 --a1--> s1
    m.alpha(m.idx(1, 1), 1) = 1.0;  // s2 --a2--> s2
    m.r = Vec::Zero(4);
    m.r(m.idx(0, 1)) = 2.0;
    m.r(m.idx(1, 1)) = 1.0;
    m.mu = Vec(2);
    m.mu << 0.2, 0.8;
    return m;
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    Vec simplex_point(int n) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v(i) = -std::log(uniform() + 1e-300);
        return v / v.sum();
    }

    Vec normal_vec(int n) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

  private:
    std::mt19937_64 engine_;
};

inline Mdp random_mdp(Rng& rng, int n_states, int n_actions) {
    Mdp m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.gamma = rng.uniform(0.5, 0.95);
    m.alpha = Mat::Zero(m.sa_dim(), n_states);
    for (int i = 0; i < m.sa_dim(); ++i) m.alpha.row(i) = rng.simplex_point(n_states).transpose();
    m.r = Vec(m.sa_dim());
    for (int i = 0; i < m.sa_dim(); ++i) m.r(i) = rng.uniform(-1.0, 1.0);
    m.mu = rng.simplex_point(n_states);
    return m;
}

inline Policy random_policy(Rng& rng, const Mdp& m) {
    Mat probs(m.n_states, m.n_actions);
    for (int s = 0; s < m.n_states; ++s) probs.row(s) = rng.simplex_point(m.n_actions).transpose();
    return Policy{probs};
}

// Random interior point of the state-action polytope.
inline Vec random_interior_eta(Rng& rng, const Mdp& m) {
    return state_action_frequency(m, random_policy(rng, m)).eta;
}

}  // namespace npglab::testing
