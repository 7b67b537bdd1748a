#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "npglab/dynamics.hpp"
#include "npglab/geometry.hpp"
#include "npglab/mdp.hpp"

namespace npglab {

// Ground truth for the unregularized problem, obtained by brute-force
// enumeration of all deterministic policies (the vertices of the
// state-action polytope).
struct OracleResult {
    double optimal_value = 0.0;
    std::vector<std::vector<int>> maximizer_actions;      // action per state
    std::vector<Policy> maximizer_policies;
    std::vector<StateActionFrequency> maximizer_etas;
    bool is_unique = false;
};

inline Policy deterministic_policy(const Mdp& m, const std::vector<int>& actions) {
    Mat probs = Mat::Zero(m.n_states, m.n_actions);
    for (int s = 0; s < m.n_states; ++s) probs(s, actions[s]) = 1.0;
    return Policy{std::move(probs)};
}

// Exact R* = max <r, eta> over the polytope together with all maximizing
// deterministic policies. Value ties within 1e-12 count as non-unique.
inline OracleResult enumerate_optimum(const Mdp& m) {
    double count = std::pow(static_cast<double>(m.n_actions), m.n_states);
    if (count > 1e6)
        throw std::invalid_argument("enumerate_optimum: |A|^|S| exceeds the enumeration guard");
    const auto total = static_cast<std::uint64_t>(count);

    OracleResult result;
    std::vector<double> values(total);
    std::vector<std::vector<int>> all_actions(total);
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint64_t code = 0; code < total; ++code) {
        std::vector<int> actions(m.n_states);
        std::uint64_t rest = code;
        for (int s = 0; s < m.n_states; ++s) {
            actions[s] = static_cast<int>(rest % m.n_actions);
            rest /= m.n_actions;
        }
        const Policy pi = deterministic_policy(m, actions);
        values[code] = m.r.dot(state_action_frequency(m, pi).eta);
        all_actions[code] = std::move(actions);
        best = std::max(best, values[code]);
    }
    result.optimal_value = best;
    for (std::uint64_t code = 0; code < total; ++code) {
        if (values[code] >= best - 1e-12) {
            const Policy pi = deterministic_policy(m, all_actions[code]);
            result.maximizer_actions.push_back(all_actions[code]);
            result.maximizer_etas.push_back(state_action_frequency(m, pi));
            result.maximizer_policies.push_back(pi);
        }
    }
    result.is_unique = result.maximizer_actions.size() == 1;
    return result;
}

struct RegularizedOptimum {
    StateActionFrequency eta_star;
    double value = 0.0;  // <r, eta*> - lambda phi(eta*)
};

// Interior maximizer of <r, eta> - lambda phi(eta) over the polytope,
// computed by the projected Newton iteration from the uniform policy. Aims
// for a projected-gradient norm of 1e-13 and fails if the certificate is
// worse than 1e-11 (lambda too small for the conditioning of the instance).
inline RegularizedOptimum regularized_optimum(const Mdp& m, const Potential& phi,
                                              double lambda) {
    if (lambda <= 0.0)
        throw std::invalid_argument("regularized_optimum: lambda must be positive");
    const StateActionFrequency start = state_action_frequency(m, uniform_policy(m));
    const NewtonFixedPoint fp = newton_fixed_point(m, start, phi, lambda, 1e-13);
    if (!(fp.achieved_pg <= 1e-11)) {
        std::ostringstream os;
        os << "regularized_optimum: stationarity certificate not reached (projected gradient "
           << fp.achieved_pg << "); the optimum is too close to the boundary for this lambda";
        throw std::runtime_error(os.str());
    }
    const double value = objective_value(m, fp.eta.eta, Objective::regularized(lambda, phi));
    return RegularizedOptimum{fp.eta, value};
}

}  // namespace npglab
