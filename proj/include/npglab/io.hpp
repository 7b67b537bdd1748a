#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "npglab/mdp.hpp"

namespace npglab {

using json = nlohmann::json;

// Schema: { "n_states": int, "n_actions": int, "alpha": [s][a][s'],
//           "r": [s][a], "gamma": float, "mu": [s] }.
inline json mdp_to_json(const Mdp& m) {
    json alpha = json::array();
    for (int s = 0; s < m.n_states; ++s) {
        json per_state = json::array();
        for (int a = 0; a < m.n_actions; ++a) {
            json row = json::array();
            for (int sp = 0; sp < m.n_states; ++sp) row.push_back(m.alpha(m.idx(s, a), sp));
            per_state.push_back(std::move(row));
        }
        alpha.push_back(std::move(per_state));
    }
    json r = json::array();
    for (int s = 0; s < m.n_states; ++s) {
        json row = json::array();
        for (int a = 0; a < m.n_actions; ++a) row.push_back(m.r(m.idx(s, a)));
        r.push_back(std::move(row));
    }
    json mu = json::array();
    for (int s = 0; s < m.n_states; ++s) mu.push_back(m.mu(s));
    return json{{"n_states", m.n_states}, {"n_actions", m.n_actions}, {"alpha", alpha},
                {"r", r},                 {"gamma", m.gamma},         {"mu", mu}};
}

inline Mdp mdp_from_json(const json& j) {
    Mdp m;
    m.n_states = j.at("n_states").get<int>();
    m.n_actions = j.at("n_actions").get<int>();
    if (m.n_states <= 0 || m.n_actions <= 0)
        throw std::invalid_argument("mdp json: state and action counts must be positive");
    m.gamma = j.at("gamma").get<double>();
    const int n = m.sa_dim();
    m.alpha = Mat::Zero(n, m.n_states);
    m.r = Vec::Zero(n);
    m.mu = Vec::Zero(m.n_states);
    const auto& alpha = j.at("alpha");
    const auto& r = j.at("r");
    const auto& mu = j.at("mu");
    if (static_cast<int>(alpha.size()) != m.n_states ||
        static_cast<int>(r.size()) != m.n_states ||
        static_cast<int>(mu.size()) != m.n_states)
        throw std::invalid_argument("mdp json: array sizes do not match n_states");
    for (int s = 0; s < m.n_states; ++s) {
        if (static_cast<int>(alpha[s].size()) != m.n_actions ||
            static_cast<int>(r[s].size()) != m.n_actions)
            throw std::invalid_argument("mdp json: array sizes do not match n_actions");
        for (int a = 0; a < m.n_actions; ++a) {
            if (static_cast<int>(alpha[s][a].size()) != m.n_states)
                throw std::invalid_argument("mdp json: alpha rows must have n_states entries");
            for (int sp = 0; sp < m.n_states; ++sp)
                m.alpha(m.idx(s, a), sp) = alpha[s][a][sp].get<double>();
            m.r(m.idx(s, a)) = r[s][a].get<double>();
        }
        m.mu(s) = mu[s].get<double>();
    }
    return m;
}

inline Mdp load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open mdp file: " + path);
    json j;
    in >> j;
    Mdp m = mdp_from_json(j);
    validate_mdp(m);
    return m;
}

inline void save_mdp(const Mdp& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write mdp file: " + path);
    out << mdp_to_json(m).dump(2) << "\n";
}

// Policies are stored as { "probs": [s][a] }.
inline json policy_to_json(const Policy& pi) {
    json probs = json::array();
    for (int s = 0; s < pi.probs.rows(); ++s) {
        json row = json::array();
        for (int a = 0; a < pi.probs.cols(); ++a) row.push_back(pi.probs(s, a));
        probs.push_back(std::move(row));
    }
    return json{{"probs", probs}};
}

inline Policy policy_from_json(const json& j, const Mdp& m) {
    const auto& probs = j.at("probs");
    if (static_cast<int>(probs.size()) != m.n_states)
        throw std::invalid_argument("policy json: wrong number of rows");
    Policy pi{Mat::Zero(m.n_states, m.n_actions)};
    for (int s = 0; s < m.n_states; ++s) {
        if (static_cast<int>(probs[s].size()) != m.n_actions)
            throw std::invalid_argument("policy json: wrong number of columns");
        for (int a = 0; a < m.n_actions; ++a) pi.probs(s, a) = probs[s][a].get<double>();
    }
    return pi;
}

inline Policy load_policy(const std::string& path, const Mdp& m) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open policy file: " + path);
    json j;
    in >> j;
    Policy pi = policy_from_json(j, m);
    validate_policy(m, pi);
    return pi;
}

}  // namespace npglab
