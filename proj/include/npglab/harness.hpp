#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "npglab/config.hpp"
#include "npglab/dynamics.hpp"
#include "npglab/io.hpp"
#include "npglab/oracle.hpp"

namespace npglab {

// ---------------------------------------------------------------------------
// Seeded initializations
// ---------------------------------------------------------------------------

namespace rng {

// Standard normal samples via Box-Muller on top of mt19937_64. Hand-rolled so
// that streams are identical across standard library implementations.
class NormalSampler {
  public:
    explicit NormalSampler(std::uint64_t seed) : engine_(seed) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace rng

// n i.i.d. standard normal parameter vectors; the seed fully determines the
// output, and all methods of a sweep consume the same list.
inline std::vector<Vec> random_initializations(int n, int n_states, int n_actions,
                                               std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("random_initializations: n must be >= 1");
    rng::NormalSampler normal(seed);
    std::vector<Vec> out;
    out.reserve(n);
    for (int k = 0; k < n; ++k) {
        Vec theta(static_cast<Eigen::Index>(n_states) * n_actions);
        for (int i = 0; i < theta.size(); ++i) theta(i) = normal();
        out.push_back(std::move(theta));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

enum class RateModel { Exponential, PowerLaw };

inline const char* to_string(RateModel m) {
    return m == RateModel::Exponential ? "exponential" : "power_law";
}

// Least-squares fit of log(gap) against t (Exponential) or log(t) (PowerLaw)
// on the trajectory tail: the first 10% of records and everything below the
// numerical floor of 1e-12 are excluded.
struct RateFit {
    RateModel model = RateModel::Exponential;
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    int window_lo = 0;  // first record index used
    int window_hi = 0;  // one past the last record index used
};

inline constexpr double kGapFloor = 1e-12;

inline RateFit fit_rate(const Trajectory& traj, RateModel model) {
    const int n = static_cast<int>(traj.records.size());
    const int skip = static_cast<int>(std::ceil(0.1 * n));
    std::vector<double> xs, ys;
    int lo = -1, hi = -1;
    for (int i = skip; i < n; ++i) {
        const auto& rec = traj.records[i];
        if (!(rec.gap >= kGapFloor)) continue;
        if (model == RateModel::PowerLaw && !(rec.t > 0.0)) continue;
        xs.push_back(model == RateModel::Exponential ? rec.t : std::log(rec.t));
        ys.push_back(std::log(rec.gap));
        if (lo < 0) lo = i;
        hi = i + 1;
    }
    if (xs.size() < 20)
        throw std::invalid_argument("fit_rate: insufficient data above the numerical floor");
    const auto count = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= count;
    my /= count;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    RateFit fit;
    fit.model = model;
    fit.window_lo = lo;
    fit.window_hi = hi;
    if (sxx == 0.0) throw std::invalid_argument("fit_rate: degenerate abscissa");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (syy == 0.0) {
        fit.r_squared = 1.0;
    } else {
        double ss_res = 0.0;
        for (size_t i = 0; i < xs.size(); ++i) {
            const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
            ss_res += e * e;
        }
        fit.r_squared = 1.0 - ss_res / syy;
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct RunResult {
    int init = 0;
    FlowStatus status = FlowStatus::MaxIters;
    double final_gap = std::numeric_limits<double>::quiet_NaN();
    double final_time = 0.0;
    std::optional<RateFit> fit;
    std::string csv_path;
    std::string error;  // nonempty when the trajectory failed
};

struct MethodSummary {
    std::string method;
    std::vector<RunResult> runs;
};

struct SweepSummary {
    double r_star = 0.0;
    double lambda = 0.0;
    std::vector<MethodSummary> methods;
};

namespace detail {

inline std::string sanitize(const std::string& name) {
    std::string out = name;
    for (char& c : out)
        if (c == ':' || c == '/' || c == ' ') c = '-';
    return out;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_trajectory_csv(const Mdp& m, const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trajectory file: " + path);
    out << "t";
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) out << ",theta_s" << s << "_a" << a;
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) out << ",eta_s" << s << "_a" << a;
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) out << ",pi_s" << s << "_a" << a;
    out << ",reward,gap\n";
    for (const auto& rec : traj.records) {
        out << format_double(rec.t);
        for (int i = 0; i < rec.theta.size(); ++i) out << "," << format_double(rec.theta(i));
        for (int i = 0; i < rec.eta.size(); ++i) out << "," << format_double(rec.eta(i));
        const Policy pi = softmax_policy(m, rec.theta);
        for (int s = 0; s < m.n_states; ++s)
            for (int a = 0; a < m.n_actions; ++a) out << "," << format_double(pi.probs(s, a));
        out << "," << format_double(rec.reward) << "," << format_double(rec.gap) << "\n";
    }
}

// Exponential fits for the linearly convergent methods, power-law fits for
// vanilla PG and sigma > 1; no fit for sigma < 1 (finite-time boundary runs).
inline std::optional<RateModel> default_fit_model(const GeometrySpec& geo, double lambda) {
    if (lambda > 0.0) return RateModel::Exponential;
    switch (geo.kind) {
        case GeometrySpec::Kind::Vanilla: return RateModel::PowerLaw;
        case GeometrySpec::Kind::Kakade:
        case GeometrySpec::Kind::Morimura:
        case GeometrySpec::Kind::HessianOf: return RateModel::Exponential;
        case GeometrySpec::Kind::Sigma:
            if (geo.sigma < 1.0) return std::nullopt;
            if (geo.sigma > 1.0) return RateModel::PowerLaw;
            return RateModel::Exponential;
    }
    return std::nullopt;
}

inline json rate_fit_to_json(const RateFit& fit) {
    return json{{"model", to_string(fit.model)},   {"slope", fit.slope},
                {"intercept", fit.intercept},      {"r_squared", fit.r_squared},
                {"window_lo", fit.window_lo},      {"window_hi", fit.window_hi}};
}

inline json summary_to_json(const SweepSummary& summary) {
    json methods = json::array();
    for (const auto& ms : summary.methods) {
        json runs = json::array();
        for (const auto& run : ms.runs) {
            json r{{"init", run.init},
                   {"status", to_string(run.status)},
                   {"final_gap", run.final_gap},
                   {"final_time", run.final_time},
                   {"csv", run.csv_path}};
            if (run.fit) r["fit"] = rate_fit_to_json(*run.fit);
            if (!run.error.empty()) r["error"] = run.error;
            runs.push_back(std::move(r));
        }
        methods.push_back(json{{"method", ms.method}, {"runs", runs}});
    }
    return json{{"r_star", summary.r_star}, {"lambda", summary.lambda}, {"methods", methods}};
}

}  // namespace detail

// Runs every (method, initialization) pair of the config, writes one CSV per
// trajectory plus a summary.json, and returns the summary. Individual
// trajectory failures are recorded and do not abort the sweep.
inline SweepSummary run_sweep(const ExperimentConfig& cfg) {
    if (cfg.methods.empty()) throw std::invalid_argument("sweep: methods list is empty");
    if (cfg.n_inits < 1) throw std::invalid_argument("sweep: n_inits must be >= 1");
    const Mdp m = load_mdp(cfg.mdp_path);

    Objective obj = Objective::unregularized();
    double r_star;
    if (cfg.lambda > 0.0) {
        const Potential phi = parse_potential(cfg.regularizer, m.n_states, m.n_actions);
        obj = Objective::regularized(cfg.lambda, phi);
        r_star = regularized_optimum(m, phi, cfg.lambda).value;
    } else {
        r_star = enumerate_optimum(m).optimal_value;
    }
    FlowStop stop = cfg.stop;
    stop.r_star = r_star;

    std::vector<GeometrySpec> geometries;
    for (const auto& name : cfg.methods)
        geometries.push_back(parse_geometry(name, m.n_states, m.n_actions));

    std::filesystem::create_directories(cfg.output_dir);
    const std::vector<Vec> inits =
        random_initializations(cfg.n_inits, m.n_states, m.n_actions, cfg.seed);

    SweepSummary summary;
    summary.r_star = r_star;
    summary.lambda = cfg.lambda;
    for (size_t mi = 0; mi < geometries.size(); ++mi) {
        MethodSummary ms;
        ms.method = cfg.methods[mi];
        const auto fit_model = detail::default_fit_model(geometries[mi], cfg.lambda);
        for (int k = 0; k < cfg.n_inits; ++k) {
            RunResult run;
            run.init = k;
            try {
                const Trajectory traj =
                    integrate_flow(m, inits[k], geometries[mi], obj, cfg.controller, stop);
                run.status = traj.status;
                run.final_gap = traj.records.back().gap;
                run.final_time = traj.records.back().t;
                std::ostringstream name;
                name << detail::sanitize(cfg.methods[mi]) << "_init" << k << ".csv";
                run.csv_path = (std::filesystem::path(cfg.output_dir) / name.str()).string();
                detail::write_trajectory_csv(m, traj, run.csv_path);
                if (fit_model) {
                    try {
                        run.fit = fit_rate(traj, *fit_model);
                    } catch (const std::exception&) {
                        // too few records above the floor; leave the fit empty
                    }
                }
            } catch (const std::exception& e) {
                run.error = e.what();
            }
            ms.runs.push_back(std::move(run));
        }
        summary.methods.push_back(std::move(ms));
    }
    std::ofstream out(std::filesystem::path(cfg.output_dir) / "summary.json");
    if (!out) throw std::runtime_error("cannot write summary.json");
    out << detail::summary_to_json(summary).dump(2) << "\n";
    return summary;
}

}  // namespace npglab
