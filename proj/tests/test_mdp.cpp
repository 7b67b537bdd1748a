#include <catch_amalgamated.hpp>

#include "npglab/mdp.hpp"
#include "support.hpp"

using namespace npglab;
using namespace npglab::testing;
using Catch::Matchers::ContainsSubstring;

namespace {

Mdp single_state_single_action(double r = 1.0, double gamma = 0.9) {
    Mdp m;
    m.n_states = 1;
    m.n_actions = 1;
    m.gamma = gamma;
    m.alpha = Mat::Ones(1, 1);
    m.r = Vec::Constant(1, r);
    m.mu = Vec::Ones(1);
    return m;
}

Policy stay_policy(const Mdp& m) {
    Mat probs = Mat::Zero(2, 2);
    probs(0, 1) = 1.0;
    probs(1, 1) = 1.0;
    return Policy{probs};
}

Policy optimal_policy(const Mdp& m) {
    Mat probs = Mat::Zero(2, 2);
    probs(0, 1) = 1.0;  // stay in s1
    probs(1, 0) = 1.0;  // switch in s2
    return Policy{probs};
}

}  // namespace

TEST_CASE("validate_mdp accepts the two-state example", "[mdp]") {
    REQUIRE_NOTHROW(validate_mdp(two_state_example()));
}

TEST_CASE("validate_mdp rejects a non-stochastic row", "[mdp]") {
    Mdp m = two_state_example();
    m.alpha(m.idx(0, 0), 1) = 0.9;
    REQUIRE_THROWS_WITH(validate_mdp(m), ContainsSubstring("row not stochastic"));
}

TEST_CASE("validate_mdp rejects gamma at the boundary", "[mdp]") {
    Mdp m = two_state_example();
    m.gamma = 1.0;
    REQUIRE_THROWS_WITH(validate_mdp(m), ContainsSubstring("discount out of range"));
    m.gamma = 0.0;
    REQUIRE_THROWS_WITH(validate_mdp(m), ContainsSubstring("discount out of range"));
}

TEST_CASE("validate_mdp rejects a bad initial distribution", "[mdp]") {
    Mdp m = two_state_example();
    m.mu << 0.2, 0.9;
    REQUIRE_THROWS_WITH(validate_mdp(m), ContainsSubstring("initial distribution"));
}

TEST_CASE("transition kernels of a deterministic stay policy", "[mdp]") {
    const Mdp m = two_state_example();
    const TransitionKernels k = transition_kernels(m, stay_policy(m));
    REQUIRE(k.state_action(m.idx(0, 1), m.idx(0, 1)) == Catch::Approx(1.0));
    REQUIRE(k.state_action(m.idx(1, 1), m.idx(1, 1)) == Catch::Approx(1.0));
    for (int i = 0; i < 4; ++i) REQUIRE(k.state_action.row(i).sum() == Catch::Approx(1.0));
    REQUIRE(k.state(0, 0) == Catch::Approx(1.0));
    REQUIRE(k.state(1, 1) == Catch::Approx(1.0));
}

TEST_CASE("transition kernels of the trivial mdp", "[mdp]") {
    const Mdp m = single_state_single_action();
    const TransitionKernels k = transition_kernels(m, Policy{Mat::Ones(1, 1)});
    REQUIRE(k.state_action(0, 0) == Catch::Approx(1.0));
}

TEST_CASE("transition kernels of a uniform policy on a uniform mdp", "[mdp]") {
    Mdp m;
    m.n_states = 2;
    m.n_actions = 2;
    m.gamma = 0.5;
    m.alpha = Mat::Constant(4, 2, 0.5);
    m.r = Vec::Zero(4);
    m.mu = Vec::Constant(2, 0.5);
    const TransitionKernels k = transition_kernels(m, uniform_policy(m));
    for (int i = 0; i < 4; ++i) {
        REQUIRE(k.state_action.row(i).sum() == Catch::Approx(1.0));
        for (int j = 0; j < 4; ++j) REQUIRE(k.state_action(i, j) == Catch::Approx(0.25));
    }
}

TEST_CASE("occupancy of the trivial mdp is one", "[mdp]") {
    const Mdp m = single_state_single_action();
    const StateActionFrequency freq = state_action_frequency(m, Policy{Mat::Ones(1, 1)});
    REQUIRE(freq.eta(0) == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("occupancy of the optimal policy on the two-state example", "[mdp]") {
    const Mdp m = two_state_example();
    const StateActionFrequency freq = state_action_frequency(m, optimal_policy(m));
    REQUIRE(std::abs(freq.eta(m.idx(0, 1)) - 0.92) < 1e-12);
    REQUIRE(std::abs(freq.eta(m.idx(1, 0)) - 0.08) < 1e-12);
    REQUIRE(std::abs(freq.eta(m.idx(0, 0))) < 1e-12);
    REQUIRE(std::abs(freq.eta(m.idx(1, 1))) < 1e-12);
}

TEST_CASE("polytope membership holds for random policies on random mdps", "[mdp]") {
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        const Mdp m = random_mdp(rng, 3, 3);
        for (int k = 0; k < 50; ++k) {
            const StateActionFrequency freq = state_action_frequency(m, random_policy(rng, m));
            REQUIRE(freq.eta.minCoeff() >= 0.0);
            REQUIRE(std::abs(freq.eta.sum() - 1.0) < 1e-10);
            REQUIRE(polytope_residuals(m, freq.eta).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
}

TEST_CASE("polytope residuals flag infeasible vectors", "[mdp]") {
    const Mdp m = two_state_example();
    const Vec uniform = Vec::Constant(4, 0.25);
    REQUIRE(polytope_residuals(m, uniform).cwiseAbs().maxCoeff() > 1e-3);
    const Vec feasible = state_action_frequency(m, uniform_policy(m)).eta;
    REQUIRE(polytope_residuals(m, 2.0 * feasible).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("conditioning inverts the occupancy map", "[mdp]") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Mdp m = random_mdp(rng, 3, 2);
        const Policy pi = random_policy(rng, m);
        const StateActionFrequency freq = state_action_frequency(m, pi);
        const Policy recovered = conditioning(m, freq);
        REQUIRE((recovered.probs - pi.probs).cwiseAbs().maxCoeff() < 1e-10);
        const StateActionFrequency round = state_action_frequency(m, recovered);
        REQUIRE((round.eta - freq.eta).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("conditioning reports the state with zero marginal", "[mdp]") {
    const Mdp m = two_state_example();
    Vec eta(4);
    eta << 0.5, 0.5, 0.0, 0.0;
    REQUIRE_THROWS_WITH(conditioning(m, StateActionFrequency{eta}),
                        ContainsSubstring("zero state marginal at s=1"));
}

TEST_CASE("conditioning the optimal vertex recovers the optimal policy", "[mdp]") {
    const Mdp m = two_state_example();
    Vec eta(4);
    eta << 0.0, 0.92, 0.08, 0.0;
    const Policy pi = conditioning(m, StateActionFrequency{eta});
    REQUIRE(pi.probs(0, 1) == Catch::Approx(1.0));
    REQUIRE(pi.probs(1, 0) == Catch::Approx(1.0));
}

TEST_CASE("bellman data for zero reward is zero", "[mdp]") {
    Mdp m = two_state_example();
    m.r.setZero();
    const BellmanData bell = bellman_data(m, uniform_policy(m));
    REQUIRE(bell.q.cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE(bell.v.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("bellman data for the trivial mdp is the geometric series", "[mdp]") {
    const Mdp m = single_state_single_action(3.0, 0.5);
    const BellmanData bell = bellman_data(m, Policy{Mat::Ones(1, 1)});
    REQUIRE(bell.q(0) == Catch::Approx(6.0));
}

TEST_CASE("reward equals the normalized initial value", "[mdp]") {
    Rng rng(33);
    for (int trial = 0; trial < 20; ++trial) {
        const Mdp m = random_mdp(rng, 3, 3);
        const Policy pi = random_policy(rng, m);
        const BellmanData bell = bellman_data(m, pi);
        const double from_value = (1.0 - m.gamma) * m.mu.dot(bell.v);
        REQUIRE(std::abs(reward(m, pi) - from_value) < 1e-10);
        for (int s = 0; s < m.n_states; ++s) {
            double vs = 0.0;
            for (int a = 0; a < m.n_actions; ++a) vs += pi.probs(s, a) * bell.q(m.idx(s, a));
            REQUIRE(std::abs(bell.v(s) - vs) < 1e-10);
        }
    }
}

TEST_CASE("rewards on the two-state example", "[mdp]") {
    const Mdp m = two_state_example();
    REQUIRE(std::abs(reward(m, optimal_policy(m)) - 1.84) < 1e-12);
    REQUIRE(std::abs(reward(m, stay_policy(m)) - 1.2) < 1e-12);
    Mdp zero = m;
    zero.r.setZero();
    REQUIRE(reward(zero, uniform_policy(zero)) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("deterministic policies map to vertices", "[mdp]") {
    const Mdp m = two_state_example();
    const Mat w = constraint_matrix(m);
    for (int a0 = 0; a0 < 2; ++a0)
        for (int a1 = 0; a1 < 2; ++a1) {
            Mat probs = Mat::Zero(2, 2);
            probs(0, a0) = 1.0;
            probs(1, a1) = 1.0;
            const StateActionFrequency freq = state_action_frequency(m, Policy{probs});
            std::vector<int> active;
            for (int i = 0; i < 4; ++i)
                if (freq.eta(i) <= 1e-12) active.push_back(i);
            Mat stacked(w.rows() + static_cast<Eigen::Index>(active.size()), 4);
            stacked.topRows(w.rows()) = w;
            for (size_t k = 0; k < active.size(); ++k) {
                stacked.row(w.rows() + k).setZero();
                stacked(w.rows() + k, active[k]) = 1.0;
            }
            // A zero-dimensional face: the active constraints pin the point.
            REQUIRE(stacked.fullPivLu().rank() == 4);
        }
}

TEST_CASE("tangent basis spans the kernel of the constraint matrix", "[mdp]") {
    Rng rng(5);
    const Mdp m = random_mdp(rng, 3, 4);
    const Mat b = tangent_basis(m);
    REQUIRE(b.cols() == 3 * (4 - 1));
    REQUIRE((constraint_matrix(m) * b).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((b.transpose() * b - Mat::Identity(b.cols(), b.cols())).cwiseAbs().maxCoeff() <
            1e-12);
}

TEST_CASE("positivity condition helper", "[mdp]") {
    REQUIRE(positivity_condition(two_state_example()) == PositivityCondition::MuPositive);
    Mdp m = two_state_example();
    m.mu << 1.0, 0.0;
    REQUIRE(positivity_condition(m) == PositivityCondition::Unknown);
    m.alpha = Mat::Constant(4, 2, 0.5);
    REQUIRE(positivity_condition(m) == PositivityCondition::AlphaPositive);
}
