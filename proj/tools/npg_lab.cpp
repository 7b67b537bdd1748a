// npg-lab: command line front end for the natural policy gradient laboratory.
//
// Subcommands: solve, oracle, flow, newton, sweep. Exit codes: 0 on success,
// 1 for usage or validation errors, 2 for numerical failures.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "npglab/npglab.hpp"

namespace {

using namespace npglab;

json vec_to_json(const Vec& v) {
    json out = json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

int cmd_solve(const std::string& mdp_path, const std::string& policy_path) {
    const Mdp m = load_mdp(mdp_path);
    const Policy pi = policy_path.empty() ? uniform_policy(m) : load_policy(policy_path, m);
    const StateActionFrequency freq = state_action_frequency(m, pi);
    const BellmanData bell = bellman_data(m, pi);
    json out{{"eta", vec_to_json(freq.eta)},
             {"reward", m.r.dot(freq.eta)},
             {"q", vec_to_json(bell.q)},
             {"v", vec_to_json(bell.v)},
             {"rho", vec_to_json(bell.rho)}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_oracle(const std::string& mdp_path) {
    const Mdp m = load_mdp(mdp_path);
    const OracleResult res = enumerate_optimum(m);
    json maximizers = json::array();
    for (size_t i = 0; i < res.maximizer_actions.size(); ++i) {
        maximizers.push_back(json{{"actions", res.maximizer_actions[i]},
                                  {"eta", vec_to_json(res.maximizer_etas[i].eta)}});
    }
    json out{{"r_star", res.optimal_value},
             {"is_unique", res.is_unique},
             {"maximizers", maximizers}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

struct FlowOptions {
    std::string mdp_path;
    std::string geometry = "kakade";
    double lambda = 0.0;
    std::string regularizer = "sigma:1";
    int inits = 30;
    std::uint64_t seed = 7;
    std::string out_dir = "out";
    StepController ctrl;
    FlowStop stop;
};

int cmd_flow(const FlowOptions& opt) {
    ExperimentConfig cfg;
    cfg.mdp_path = opt.mdp_path;
    cfg.methods = {opt.geometry};
    cfg.lambda = opt.lambda;
    cfg.regularizer = opt.regularizer;
    cfg.n_inits = opt.inits;
    cfg.seed = opt.seed;
    cfg.controller = opt.ctrl;
    cfg.stop = opt.stop;
    cfg.output_dir = opt.out_dir;
    const SweepSummary summary = run_sweep(cfg);
    int failures = 0;
    for (const auto& run : summary.methods.front().runs)
        if (!run.error.empty()) ++failures;
    std::cout << "wrote " << summary.methods.front().runs.size() - failures
              << " trajectories to " << cfg.output_dir << " (r_star = " << summary.r_star
              << ")\n";
    return failures == 0 ? 0 : 2;
}

int cmd_newton(const std::string& mdp_path, const std::string& geometry, double lambda,
               int max_iters, std::optional<double> step) {
    const Mdp m = load_mdp(mdp_path);
    std::string potential_name = geometry;
    if (potential_name.rfind("hessian:", 0) == 0) potential_name = potential_name.substr(8);
    const Potential phi = parse_potential(potential_name, m.n_states, m.n_actions);
    const Vec theta0 = Vec::Zero(m.sa_dim());
    const NewtonReport report = regularized_npg_newton(m, theta0, phi, lambda, max_iters, step);
    json errors = json::array();
    for (double e : report.errors) errors.push_back(e);
    json out{{"errors", errors},
             {"quadratic_flag", report.quadratic_flag},
             {"quadratic_constant", report.quadratic_constant},
             {"diverged", report.diverged},
             {"eta_star", vec_to_json(report.eta_star)}};
    std::cout << out.dump(2) << "\n";
    return report.diverged ? 2 : 0;
}

int cmd_sweep(const std::string& config_path) {
    const ExperimentConfig cfg = load_experiment_config(config_path);
    const SweepSummary summary = run_sweep(cfg);
    int failures = 0;
    for (const auto& ms : summary.methods)
        for (const auto& run : ms.runs)
            if (!run.error.empty()) ++failures;
    std::cout << "sweep finished: " << summary.methods.size() << " methods, r_star = "
              << summary.r_star;
    if (failures > 0) std::cout << ", " << failures << " failed runs";
    std::cout << "; summary at " << cfg.output_dir << "/summary.json\n";
    return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Natural policy gradient laboratory for finite MDPs"};
    app.require_subcommand(1);

    std::string mdp_path, policy_path, config_path;

    auto* solve = app.add_subcommand("solve", "Occupancy measure, reward, Q and V of a policy");
    solve->add_option("mdp", mdp_path, "MDP JSON file")->required();
    solve->add_option("--policy", policy_path, "policy JSON file (default: uniform)");

    auto* oracle = app.add_subcommand("oracle", "Exact optimum by deterministic enumeration");
    oracle->add_option("mdp", mdp_path, "MDP JSON file")->required();

    FlowOptions flow_opt;
    auto* flow = app.add_subcommand("flow", "Integrate NPG flows from seeded initializations");
    flow->add_option("mdp", flow_opt.mdp_path, "MDP JSON file")->required();
    flow->add_option("--geometry", flow_opt.geometry,
                     "vanilla | kakade | morimura | sigma:<float> | hessian:conditional_entropy");
    flow->add_option("--lambda", flow_opt.lambda, "regularization strength");
    flow->add_option("--regularizer", flow_opt.regularizer,
                     "sigma:<float> | conditional_entropy");
    flow->add_option("--inits", flow_opt.inits, "number of random initializations");
    flow->add_option("--seed", flow_opt.seed, "seed for the initializations");
    flow->add_option("--out", flow_opt.out_dir, "output directory");
    flow->add_option("--max-iters", flow_opt.stop.max_iters, "iteration cap");
    flow->add_option("--gap-tol", flow_opt.stop.gap_tol, "stop when the gap falls below this");
    flow->add_option("--grad-tol", flow_opt.stop.grad_tol, "stop on small gradient norm");
    flow->add_option("--base-dt", flow_opt.ctrl.base_dt, "base step size");
    flow->add_option("--max-step", flow_opt.ctrl.max_param_step, "cap on |d theta| per step");
    flow->add_option("--max-eta-step", flow_opt.ctrl.max_eta_step, "cap on |d eta| per step");

    std::string newton_geometry = "sigma:1";
    double newton_lambda = 0.05;
    int newton_iters = 100;
    double newton_step = 0.0;
    auto* newton = app.add_subcommand("newton", "Regularized NPG iteration with Newton step");
    newton->add_option("mdp", mdp_path, "MDP JSON file")->required();
    newton->add_option("--geometry", newton_geometry, "regularizing potential");
    newton->add_option("--lambda", newton_lambda, "regularization strength")->required();
    newton->add_option("--max-iters", newton_iters, "iteration cap");
    newton->add_option("--step", newton_step, "step size override (default: Newton-matched)");

    auto* sweep = app.add_subcommand("sweep", "Run a sweep described by a TOML config");
    sweep->add_option("config", config_path, "config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // 0 for --help, 1 for usage errors
    }

    try {
        if (solve->parsed()) return cmd_solve(mdp_path, policy_path);
        if (oracle->parsed()) return cmd_oracle(mdp_path);
        if (flow->parsed()) return cmd_flow(flow_opt);
        if (newton->parsed())
            return cmd_newton(mdp_path, newton_geometry, newton_lambda, newton_iters,
                              newton_step > 0.0 ? std::optional<double>(newton_step)
                                                : std::nullopt);
        if (sweep->parsed()) return cmd_sweep(config_path);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
