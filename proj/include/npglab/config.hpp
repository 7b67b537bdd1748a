#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "npglab/dynamics.hpp"

namespace npglab {

// Minimal TOML reader covering what experiment configs need: top-level
// `key = value` lines with strings, numbers, booleans and flat arrays.
namespace toml {

using Value = std::variant<std::string, double, bool, std::vector<std::string>,
                           std::vector<double>>;
using Table = std::map<std::string, Value>;

namespace detail {

inline std::string strip(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

inline Value parse_scalar(const std::string& raw, int line_no) {
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
        return raw.substr(1, raw.size() - 2);
    if (raw == "true") return true;
    if (raw == "false") return false;
    try {
        size_t used = 0;
        double v = std::stod(raw, &used);
        if (used == raw.size()) return v;
    } catch (const std::logic_error&) {
    }
    std::ostringstream os;
    os << "config: cannot parse value '" << raw << "' on line " << line_no;
    throw std::invalid_argument(os.str());
}

inline Value parse_array(const std::string& raw, int line_no) {
    std::vector<std::string> strings;
    std::vector<double> numbers;
    std::string body = raw.substr(1, raw.size() - 2);
    std::string token;
    bool in_string = false;
    std::vector<std::string> tokens;
    for (char c : body) {
        if (c == '"') in_string = !in_string;
        if (c == ',' && !in_string) {
            tokens.push_back(token);
            token.clear();
        } else {
            token += c;
        }
    }
    if (!strip(token).empty()) tokens.push_back(token);
    for (auto& tok : tokens) {
        Value v = parse_scalar(strip(tok), line_no);
        if (std::holds_alternative<std::string>(v))
            strings.push_back(std::get<std::string>(v));
        else if (std::holds_alternative<double>(v))
            numbers.push_back(std::get<double>(v));
        else
            throw std::invalid_argument("config: arrays may hold strings or numbers only");
    }
    if (!strings.empty() && !numbers.empty())
        throw std::invalid_argument("config: mixed-type arrays are not supported");
    if (!strings.empty()) return strings;
    return numbers;
}

}  // namespace detail

inline Table parse(std::istream& in) {
    Table table;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string body = detail::strip(detail::strip_comment(line));
        if (body.empty()) continue;
        const size_t eq = body.find('=');
        if (eq == std::string::npos) {
            std::ostringstream os;
            os << "config: expected 'key = value' on line " << line_no;
            throw std::invalid_argument(os.str());
        }
        const std::string key = detail::strip(body.substr(0, eq));
        const std::string raw = detail::strip(body.substr(eq + 1));
        if (key.empty() || raw.empty()) {
            std::ostringstream os;
            os << "config: empty key or value on line " << line_no;
            throw std::invalid_argument(os.str());
        }
        if (raw.front() == '[') {
            if (raw.back() != ']') {
                std::ostringstream os;
                os << "config: arrays must close on the same line (line " << line_no << ")";
                throw std::invalid_argument(os.str());
            }
            table[key] = detail::parse_array(raw, line_no);
        } else {
            table[key] = detail::parse_scalar(raw, line_no);
        }
    }
    return table;
}

inline Table parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    return parse(in);
}

}  // namespace toml

// One sweep: a set of methods run from the same seeded initializations on a
// single MDP, with shared controller and stop settings.
struct ExperimentConfig {
    std::string mdp_path;
    std::vector<std::string> methods;
    double lambda = 0.0;
    std::string regularizer = "sigma:1";
    int n_inits = 30;
    std::uint64_t seed = 7;
    StepController controller;
    FlowStop stop;
    std::string output_dir = "out";
};

namespace detail {

inline double get_number(const toml::Table& t, const std::string& key, double fallback) {
    auto it = t.find(key);
    if (it == t.end()) return fallback;
    if (!std::holds_alternative<double>(it->second))
        throw std::invalid_argument("config: '" + key + "' must be a number");
    return std::get<double>(it->second);
}

inline std::string get_string(const toml::Table& t, const std::string& key,
                              const std::string& fallback) {
    auto it = t.find(key);
    if (it == t.end()) return fallback;
    if (!std::holds_alternative<std::string>(it->second))
        throw std::invalid_argument("config: '" + key + "' must be a string");
    return std::get<std::string>(it->second);
}

}  // namespace detail

inline ExperimentConfig experiment_config_from_table(const toml::Table& t) {
    ExperimentConfig cfg;
    cfg.mdp_path = detail::get_string(t, "mdp", "");
    if (cfg.mdp_path.empty()) throw std::invalid_argument("config: 'mdp' is required");
    auto it = t.find("methods");
    if (it == t.end() || !std::holds_alternative<std::vector<std::string>>(it->second))
        throw std::invalid_argument("config: 'methods' must be an array of strings");
    cfg.methods = std::get<std::vector<std::string>>(it->second);
    cfg.lambda = detail::get_number(t, "lambda", 0.0);
    cfg.regularizer = detail::get_string(t, "regularizer", cfg.regularizer);
    cfg.n_inits = static_cast<int>(detail::get_number(t, "n_inits", cfg.n_inits));
    cfg.seed = static_cast<std::uint64_t>(detail::get_number(t, "seed", 7));
    cfg.output_dir = detail::get_string(t, "out_dir", cfg.output_dir);
    cfg.controller.base_dt = detail::get_number(t, "base_dt", cfg.controller.base_dt);
    cfg.controller.max_param_step =
        detail::get_number(t, "max_param_step", cfg.controller.max_param_step);
    cfg.controller.max_eta_step =
        detail::get_number(t, "max_eta_step", cfg.controller.max_eta_step);
    cfg.controller.min_dt = detail::get_number(t, "min_dt", cfg.controller.min_dt);
    cfg.stop.max_iters = static_cast<int>(detail::get_number(t, "max_iters", cfg.stop.max_iters));
    cfg.stop.gap_tol = detail::get_number(t, "gap_tol", cfg.stop.gap_tol);
    cfg.stop.grad_tol = detail::get_number(t, "grad_tol", cfg.stop.grad_tol);
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    return experiment_config_from_table(toml::parse_file(path));
}

}  // namespace npglab
