#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "npglab/harness.hpp"
#include "support.hpp"

using namespace npglab;
using namespace npglab::testing;

namespace {

Trajectory synthetic_trajectory(int n, double t_step,
                                const std::function<double(double)>& gap_of_t) {
    Trajectory traj;
    for (int i = 0; i < n; ++i) {
        FlowRecord rec;
        rec.t = (i + 1) * t_step;
        rec.theta = Vec::Zero(1);
        rec.eta = Vec::Zero(1);
        rec.gap = gap_of_t(rec.t);
        rec.reward = -rec.gap;
        rec.objective = rec.reward;
        traj.records.push_back(rec);
    }
    traj.status = FlowStatus::Converged;
    return traj;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("initializations are reproducible and seed-sensitive", "[harness]") {
    const auto a = random_initializations(30, 2, 2, 7);
    const auto b = random_initializations(30, 2, 2, 7);
    const auto c = random_initializations(30, 2, 2, 8);
    REQUIRE(a.size() == 30);
    for (int k = 0; k < 30; ++k) {
        REQUIRE(a[k].size() == 4);
        REQUIRE((a[k] - b[k]).cwiseAbs().maxCoeff() == 0.0);
    }
    REQUIRE((a[0] - c[0]).cwiseAbs().maxCoeff() > 0.0);
    REQUIRE_THROWS_AS(random_initializations(0, 2, 2, 7), std::invalid_argument);
}

TEST_CASE("exponential fit recovers a synthetic rate", "[harness]") {
    const Trajectory traj =
        synthetic_trajectory(200, 0.05, [](double t) { return std::exp(-2.0 * t); });
    const RateFit fit = fit_rate(traj, RateModel::Exponential);
    REQUIRE(fit.slope == Catch::Approx(-2.0).margin(1e-6));
    REQUIRE(fit.r_squared >= 0.999999);
}

TEST_CASE("power-law fit recovers a synthetic rate", "[harness]") {
    const Trajectory traj =
        synthetic_trajectory(200, 0.5, [](double t) { return std::pow(t, -2.0); });
    const RateFit fit = fit_rate(traj, RateModel::PowerLaw);
    REQUIRE(fit.slope == Catch::Approx(-2.0).margin(1e-6));
    REQUIRE(fit.r_squared >= 0.999999);
}

TEST_CASE("fit window drops the transient and the floor", "[harness]") {
    Trajectory traj =
        synthetic_trajectory(100, 0.05, [](double t) { return std::exp(-2.0 * t); });
    for (int i = 95; i < 100; ++i) traj.records[i].gap = 1e-13;  // below the floor
    const RateFit fit = fit_rate(traj, RateModel::Exponential);
    REQUIRE(fit.window_lo >= 10);
    REQUIRE(fit.window_hi <= 95);
}

TEST_CASE("fit refuses too little data", "[harness]") {
    const Trajectory traj =
        synthetic_trajectory(10, 0.1, [](double t) { return std::exp(-t); });
    REQUIRE_THROWS_AS(fit_rate(traj, RateModel::Exponential), std::invalid_argument);
}

TEST_CASE("sweep writes deterministic trajectories and a summary", "[harness]") {
    const auto dir = std::filesystem::temp_directory_path() / "npglab_sweep_test";
    std::filesystem::remove_all(dir);

    ExperimentConfig cfg;
    cfg.mdp_path = std::string(NPGLAB_DATA_DIR) + "/kakade_two_state.json";
    cfg.methods = {"kakade"};
    cfg.n_inits = 2;
    cfg.seed = 7;
    cfg.stop.max_iters = 2000;
    cfg.stop.gap_tol = 1e-10;
    cfg.output_dir = (dir / "a").string();
    const SweepSummary first = run_sweep(cfg);
    REQUIRE(first.methods.size() == 1);
    REQUIRE(first.methods[0].runs.size() == 2);
    REQUIRE(std::abs(first.r_star - 1.84) < 1e-10);
    for (const auto& run : first.methods[0].runs) {
        REQUIRE(run.error.empty());
        REQUIRE(run.status == FlowStatus::Converged);
        REQUIRE(std::filesystem::exists(run.csv_path));
        REQUIRE(run.fit.has_value());
        REQUIRE(run.fit->slope < 0.0);
    }
    REQUIRE(std::filesystem::exists(dir / "a" / "summary.json"));

    cfg.output_dir = (dir / "b").string();
    const SweepSummary second = run_sweep(cfg);
    for (size_t k = 0; k < first.methods[0].runs.size(); ++k) {
        const std::string bytes_a = slurp(first.methods[0].runs[k].csv_path);
        const std::string bytes_b = slurp(second.methods[0].runs[k].csv_path);
        REQUIRE(!bytes_a.empty());
        REQUIRE(bytes_a == bytes_b);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("sweep validates its configuration", "[harness]") {
    ExperimentConfig cfg;
    cfg.mdp_path = std::string(NPGLAB_DATA_DIR) + "/kakade_two_state.json";
    cfg.methods = {};
    REQUIRE_THROWS_AS(run_sweep(cfg), std::invalid_argument);
    cfg.methods = {"kakade"};
    cfg.mdp_path = "does_not_exist.json";
    REQUIRE_THROWS(run_sweep(cfg));
}

TEST_CASE("toml configs parse", "[harness]") {
    std::istringstream in(R"(# sweep description
mdp = "data/kakade_two_state.json"   # the example
methods = ["kakade", "sigma:1.5"]
lambda = 0.1
regularizer = "conditional_entropy"
n_inits = 5
seed = 42
out_dir = "out/test"
base_dt = 0.2
max_iters = 1234
gap_tol = 1e-9
)");
    const ExperimentConfig cfg = experiment_config_from_table(toml::parse(in));
    REQUIRE(cfg.mdp_path == "data/kakade_two_state.json");
    REQUIRE(cfg.methods.size() == 2);
    REQUIRE(cfg.methods[1] == "sigma:1.5");
    REQUIRE(cfg.lambda == Catch::Approx(0.1));
    REQUIRE(cfg.regularizer == "conditional_entropy");
    REQUIRE(cfg.n_inits == 5);
    REQUIRE(cfg.seed == 42);
    REQUIRE(cfg.output_dir == "out/test");
    REQUIRE(cfg.controller.base_dt == Catch::Approx(0.2));
    REQUIRE(cfg.stop.max_iters == 1234);
    REQUIRE(cfg.stop.gap_tol == Catch::Approx(1e-9));
}

TEST_CASE("toml parser rejects malformed lines", "[harness]") {
    std::istringstream missing_eq("mdp data.json\n");
    REQUIRE_THROWS_AS(toml::parse(missing_eq), std::invalid_argument);
    std::istringstream bad_value("lambda = abc\n");
    REQUIRE_THROWS_AS(toml::parse(bad_value), std::invalid_argument);
    std::istringstream mixed("methods = [\"a\", 1]\n");
    REQUIRE_THROWS_AS(toml::parse(mixed), std::invalid_argument);
    std::istringstream missing_mdp("methods = [\"kakade\"]\n");
    REQUIRE_THROWS_AS(experiment_config_from_table(toml::parse(missing_mdp)),
                      std::invalid_argument);
}
