#pragma once

#include <Eigen/Dense>
#include <quadmath.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "npglab/geometry.hpp"
#include "npglab/mdp.hpp"
#include "npglab/npg.hpp"

namespace npglab {

// eta entries below this are treated as a face hit for non-Legendre flows.
inline constexpr double kBoundaryEta = 1e-9;

// Step controller for the explicit Euler discretization. The step is
// dt = min(base_dt, max_param_step / |d theta|, max_eta_step / |d eta|),
// then halved until the objective does not decrease, floored at min_dt.
struct StepController {
    double base_dt = 0.1;
    double max_param_step = 1.0;
    double max_eta_step = 0.05;
    double min_dt = 1e-8;
};

struct FlowStop {
    int max_iters = 2000;
    double gap_tol = 1e-12;
    double grad_tol = 1e-12;
    std::optional<double> r_star;  // reference value for the gap, if known
};

enum class FlowStatus { Converged, MaxIters, BoundaryHit, Diverged };

inline const char* to_string(FlowStatus s) {
    switch (s) {
        case FlowStatus::Converged: return "converged";
        case FlowStatus::MaxIters: return "max_iters";
        case FlowStatus::BoundaryHit: return "boundary_hit";
        case FlowStatus::Diverged: return "diverged";
    }
    return "unknown";
}

struct FlowRecord {
    double t = 0.0;       // accumulated time, sum of step sizes
    Vec theta;
    Vec eta;
    double reward = 0.0;     // <r, eta>
    double objective = 0.0;  // <r, eta> - lambda phi(eta)
    double gap = std::numeric_limits<double>::quiet_NaN();  // r_star - objective
};

struct Trajectory {
    std::vector<FlowRecord> records;
    FlowStatus status = FlowStatus::MaxIters;
    std::string boundary_face;  // set when status == BoundaryHit
};

// Thrown when a state-action space step would leave the positive orthant.
class boundary_error : public std::runtime_error {
  public:
    boundary_error(int index, const std::string& what)
        : std::runtime_error(what), index_(index) {}
    int blocking_index() const { return index_; }

  private:
    int index_;
};

namespace detail {

// Only Legendre-type geometries (sigma >= 1, conditional entropy) keep the
// flow interior for all time; for the others the boundary check is active.
inline bool boundary_check_active(const GeometrySpec& geo) {
    if (geo.kind == GeometrySpec::Kind::Sigma) return geo.sigma < 1.0;
    if (geo.kind == GeometrySpec::Kind::HessianOf && geo.phi &&
        geo.phi->kind() == PotentialKind::Sigma)
        return geo.phi->sigma_exponent() < 1.0;
    return false;
}

inline std::string face_description(const Mdp& m, const Vec& eta) {
    std::ostringstream os;
    bool first = true;
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a)
            if (eta(m.idx(s, a)) < kBoundaryEta) {
                if (!first) os << ", ";
                os << "eta(s=" << s << ",a=" << a << ")";
                first = false;
            }
    return os.str();
}

// Quad-precision kernel for the reduced metric systems. Strongly regularized
// optima sit at eta entries like exp(-c/lambda), so the reduced Hessian's
// condition number can reach 1/eta_min; solving through a QR factorization of
// a square-root factor M (with M^T M equal to the reduced Hessian) only pays
// the square root of that condition number, and carrying the factorization in
// __float128 keeps the solve meaningful down to eta entries around 1e-60.
namespace quadsolve {

using Real = __float128;

// M is n x d column-major with n >= d. Householder QR in place; the upper
// triangle of the leading d rows becomes R.
inline void qr_in_place(std::vector<Real>& a, int n, int d) {
    for (int k = 0; k < d; ++k) {
        Real sigma = 0;
        for (int i = k + 1; i < n; ++i) sigma += a[i + k * n] * a[i + k * n];
        const Real xk = a[k + k * n];
        if (sigma == 0) continue;
        const Real mu = sqrtq(xk * xk + sigma);
        const Real v0 = xk <= 0 ? xk - mu : -sigma / (xk + mu);
        const Real beta = 2 * v0 * v0 / (sigma + v0 * v0);
        // Normalized reflector v with v[k] = 1.
        std::vector<Real> v(n - k);
        v[0] = 1;
        for (int i = k + 1; i < n; ++i) v[i - k] = a[i + k * n] / v0;
        for (int j = k; j < d; ++j) {
            Real dot = 0;
            for (int i = k; i < n; ++i) dot += v[i - k] * a[i + j * n];
            dot *= beta;
            for (int i = k; i < n; ++i) a[i + j * n] -= dot * v[i - k];
        }
    }
}

// Solves (M^T M) x = rhs given the R factor stored in `a`.
inline std::vector<Real> solve_normal(const std::vector<Real>& a, int n, int d,
                                      std::vector<Real> rhs) {
    Real dmax = 0, dmin = -1;
    for (int k = 0; k < d; ++k) {
        const Real v = fabsq(a[k + k * n]);
        if (v > dmax) dmax = v;
        if (dmin < 0 || v < dmin) dmin = v;
    }
    if (!(dmin > dmax * Real(1e-30)))
        throw std::runtime_error(
            "reduced metric system numerically singular "
            "(lambda too small or eta too close to the boundary)");
    for (int i = 0; i < d; ++i) {  // forward solve R^T y = rhs
        Real acc = rhs[i];
        for (int j = 0; j < i; ++j) acc -= a[j + i * n] * rhs[j];
        rhs[i] = acc / a[i + i * n];
    }
    for (int i = d - 1; i >= 0; --i) {  // back solve R x = y
        Real acc = rhs[i];
        for (int j = i + 1; j < d; ++j) acc -= a[i + j * n] * rhs[j];
        rhs[i] = acc / a[i + i * n];
    }
    return rhs;
}

}  // namespace quadsolve

// Factor M = C B with C^T C = hess(phi)(x), built directly in quad precision.
// For the sigma family C is diag(x^{-sigma/2}); for the conditional entropy
// the factor comes from the policy-space form of the metric,
// C[(s,a'),(s,a)] = (delta_{a'a} - pi(a'|s)) / sqrt(x(s,a')).
inline std::vector<quadsolve::Real> metric_sqrt_times_basis(const Potential& phi, const Vec& x,
                                                            const Mat& basis) {
    using quadsolve::Real;
    const int n = static_cast<int>(basis.rows());
    const int d = static_cast<int>(basis.cols());
    std::vector<Real> m(static_cast<size_t>(n) * d);
    switch (phi.kind()) {
        case PotentialKind::Sigma: {
            const Real half = Real(-0.5) * Real(phi.sigma_exponent());
            for (int i = 0; i < n; ++i) {
                const Real w = powq(Real(x(i)), half);
                for (int j = 0; j < d; ++j) m[i + j * n] = w * Real(basis(i, j));
            }
            return m;
        }
        case PotentialKind::ConditionalEntropy: {
            const int ns = phi.n_states();
            const int na = phi.n_actions();
            for (int j = 0; j < d; ++j)
                for (int s = 0; s < ns; ++s) {
                    Real rho = 0, rowsum = 0;
                    for (int a = 0; a < na; ++a) {
                        rho += Real(x(s * na + a));
                        rowsum += Real(basis(s * na + a, j));
                    }
                    for (int ap = 0; ap < na; ++ap) {
                        const Real xap = Real(x(s * na + ap));
                        m[(s * na + ap) + j * n] =
                            (Real(basis(s * na + ap, j)) - xap / rho * rowsum) / sqrtq(xap);
                    }
                }
            return m;
        }
        case PotentialKind::Custom: {
            Eigen::SelfAdjointEigenSolver<Mat> eig(phi.hessian(x));
            const Vec vals = eig.eigenvalues().cwiseMax(0.0);
            const Mat c = vals.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
            const Mat cb = c * basis;
            for (int j = 0; j < d; ++j)
                for (int i = 0; i < n; ++i) m[i + j * n] = Real(cb(i, j));
            return m;
        }
    }
    throw std::logic_error("potential: bad kind");
}

// Solves (B^T hess(phi)(x) B) y = rhs and returns the expanded step B y.
// The expansion is also carried in quad precision: coordinates of eta near
// the boundary live many orders of magnitude below the step norm, and
// double-precision noise in those components would trip the orthant damping
// of the callers on every iteration.
inline Vec solve_reduced_metric_step(const Potential& phi, const Vec& x, const Mat& basis,
                                     const Vec& rhs) {
    using quadsolve::Real;
    const int n = static_cast<int>(basis.rows());
    const int d = static_cast<int>(basis.cols());
    std::vector<Real> m = metric_sqrt_times_basis(phi, x, basis);
    quadsolve::qr_in_place(m, n, d);
    std::vector<Real> b(d);
    for (int i = 0; i < d; ++i) b[i] = Real(rhs(i));
    const std::vector<Real> sol = quadsolve::solve_normal(m, n, d, std::move(b));
    Vec out(n);
    for (int i = 0; i < n; ++i) {
        Real acc = 0;
        for (int j = 0; j < d; ++j) acc += Real(basis(i, j)) * sol[j];
        out(i) = static_cast<double>(acc);
    }
    return out;
}

}  // namespace detail

// Explicit Euler integration of the NPG flow d theta/dt = G(theta)^+ grad
// R_lambda(theta) with adaptive step size. Records the trajectory in both
// parameter and state-action coordinates.
inline Trajectory integrate_flow(const Mdp& m, const SoftmaxParams& theta0,
                                 const GeometrySpec& geo, const Objective& obj,
                                 const StepController& ctrl, const FlowStop& stop) {
    Trajectory traj;
    Vec theta = theta0;
    const bool check_boundary = detail::boundary_check_active(geo);

    auto evaluate = [&](const Vec& th, double t) -> std::optional<FlowRecord> {
        try {
            FlowRecord rec;
            rec.t = t;
            rec.theta = th;
            rec.eta = state_action_frequency(m, softmax_policy(m, th)).eta;
            if (!rec.eta.allFinite()) return std::nullopt;
            rec.reward = m.r.dot(rec.eta);
            rec.objective = objective_value(m, rec.eta, obj);
            if (!std::isfinite(rec.objective)) return std::nullopt;
            rec.gap = stop.r_star ? *stop.r_star - rec.objective
                                  : std::numeric_limits<double>::quiet_NaN();
            return rec;
        } catch (const std::exception&) {
            return std::nullopt;
        }
    };

    {
        auto rec = evaluate(theta, 0.0);
        if (!rec) throw std::invalid_argument("integrate_flow: initial point is not evaluable");
        traj.records.push_back(*rec);
    }

    for (int iter = 0;; ++iter) {
        const FlowRecord& cur = traj.records.back();
        if (check_boundary && cur.eta.minCoeff() < kBoundaryEta) {
            traj.status = FlowStatus::BoundaryHit;
            traj.boundary_face = detail::face_description(m, cur.eta);
            return traj;
        }
        Vec grad, dir;
        Mat gram;
        bool finite = true;
        try {
            grad = policy_gradient(m, theta, obj);
            if (!grad.allFinite()) finite = false;
            if (finite && geo.kind != GeometrySpec::Kind::Vanilla) {
                gram = gram_matrix(m, theta, geo);
                if (!gram.allFinite()) finite = false;
            }
        } catch (const std::exception&) {
            finite = false;
        }
        if (!finite) {
            if (check_boundary) {
                traj.status = FlowStatus::BoundaryHit;
                traj.boundary_face = detail::face_description(m, cur.eta);
            } else {
                traj.status = FlowStatus::Diverged;
            }
            return traj;
        }
        if (grad.norm() <= stop.grad_tol) {
            traj.status = FlowStatus::Converged;
            return traj;
        }
        if (stop.r_star && cur.gap <= stop.gap_tol) {
            traj.status = FlowStatus::Converged;
            return traj;
        }
        if (iter >= stop.max_iters) {
            traj.status = FlowStatus::MaxIters;
            return traj;
        }

        dir = geo.kind == GeometrySpec::Kind::Vanilla ? grad : pinv_apply(gram, grad);
        const Mat jac = jacobian_eta(m, theta);
        const Vec deta_est = jac * dir;
        double dt = ctrl.base_dt;
        if (dir.norm() > 0.0) dt = std::min(dt, ctrl.max_param_step / dir.norm());
        if (deta_est.norm() > 0.0) dt = std::min(dt, ctrl.max_eta_step / deta_est.norm());
        dt = std::max(dt, ctrl.min_dt);

        std::optional<FlowRecord> next;
        while (true) {
            next = evaluate(theta + dt * dir, cur.t + dt);
            if (next && next->objective >= cur.objective - 1e-10) break;
            if (dt <= ctrl.min_dt) break;
            dt *= 0.5;
            dt = std::max(dt, ctrl.min_dt);
        }
        if (!next) {
            traj.status = check_boundary ? FlowStatus::BoundaryHit : FlowStatus::Diverged;
            if (traj.status == FlowStatus::BoundaryHit)
                traj.boundary_face = detail::face_description(m, cur.eta);
            return traj;
        }
        theta = next->theta;
        traj.records.push_back(*next);
    }
}

// One explicit Euler step of the gradient flow in state-action coordinates,
// d eta/dt = B (B^T H B)^{-1} B^T grad, with H the Hessian metric of phi and
// B an orthonormal tangent basis. Serves as the independent reference for the
// parameter-space integration.
inline StateActionFrequency riemannian_flow_step_state_action(const Mdp& m, const Vec& eta,
                                                              const Potential& phi,
                                                              const Objective& obj, double dt) {
    if (dt <= 0.0) throw std::invalid_argument("riemannian step: dt must be positive");
    const Mat b = tangent_basis(m);
    const Vec g = state_action_gradient(m, eta, obj);
    const Vec d = detail::solve_reduced_metric_step(phi, eta, b, b.transpose() * g);
    Vec next = eta + dt * d;
    for (int i = 0; i < next.size(); ++i)
        if (next(i) <= 0.0) {
            std::ostringstream os;
            os << "riemannian step: coordinate " << i << " would leave the positive orthant";
            throw boundary_error(i, os.str());
        }
    return StateActionFrequency{std::move(next)};
}

struct NewtonStepResult {
    StateActionFrequency eta;
    bool damped = false;  // step was shrunk to stay in the positive orthant
};

// Exact Newton step for maximizing <r, eta> - lambda phi(eta) over the affine
// hull of the polytope, computed in an orthonormal tangent basis. The update
// keeps the flow constraints exactly.
inline NewtonStepResult projected_newton_step(const Mdp& m, const StateActionFrequency& freq,
                                              const Potential& phi, double lambda) {
    if (lambda <= 0.0) throw std::invalid_argument("projected newton: lambda must be positive");
    const Mat b = tangent_basis(m);
    const Vec g = state_action_gradient(m, freq.eta,
                                        Objective::regularized(lambda, phi));
    // Newton step for the concave objective: the reduced Hessian is
    // -lambda B^T hess(phi) B, so d solves the metric system scaled by 1/lambda.
    Vec d = detail::solve_reduced_metric_step(phi, freq.eta, b, b.transpose() * g) / lambda;
    if (!d.allFinite())
        throw std::runtime_error("projected newton: step is not finite");
    bool damped = false;
    double frac = 1.0;
    for (int i = 0; i < d.size(); ++i)
        if (freq.eta(i) + d(i) <= 0.0) frac = std::min(frac, freq.eta(i) / -d(i));
    if (frac < 1.0) {
        d *= 0.99 * frac;
        damped = true;
    }
    return NewtonStepResult{StateActionFrequency{freq.eta + d}, damped};
}

// Projected gradient norm, |B^T (r - lambda grad phi)|; the stationarity
// measure for the regularized problem.
inline double projected_gradient_norm(const Mdp& m, const Vec& eta, const Potential& phi,
                                      double lambda) {
    const Mat b = tangent_basis(m);
    const Vec g = state_action_gradient(m, eta, Objective::regularized(lambda, phi));
    return (b.transpose() * g).norm();
}

struct NewtonFixedPoint {
    StateActionFrequency eta;
    double achieved_pg = std::numeric_limits<double>::infinity();
    int iterations = 0;
};

// Runs the projected Newton iteration towards stationarity, backtracking on
// objective decrease, and returns the best iterate found. The iteration stops
// at the tolerance, at the iteration cap, or when the projected gradient has
// stopped improving; the caller checks `achieved_pg` against its own needs.
inline NewtonFixedPoint newton_fixed_point(const Mdp& m, const StateActionFrequency& start,
                                           const Potential& phi, double lambda,
                                           double tol = 1e-13, int max_iters = 500) {
    const Objective obj = Objective::regularized(lambda, phi);
    NewtonFixedPoint best;
    best.eta = start;
    StateActionFrequency cur = start;
    int since_improvement = 0;
    for (int k = 0; k < max_iters; ++k) {
        const double pg = projected_gradient_norm(m, cur.eta, phi, lambda);
        if (pg < best.achieved_pg) {
            best.achieved_pg = pg;
            best.eta = cur;
            best.iterations = k;
            since_improvement = 0;
        } else if (++since_improvement >= 15) {
            break;  // stalled (solver noise floor for this conditioning)
        }
        if (pg <= tol) break;
        Vec d;
        try {
            d = projected_newton_step(m, cur, phi, lambda).eta.eta - cur.eta;
        } catch (const std::runtime_error&) {
            break;  // reduced system no longer solvable; keep the best iterate
        }
        const double base = objective_value(m, cur.eta, obj);
        Vec trial = cur.eta + d;
        for (int halvings = 0; halvings < 60; ++halvings) {
            if (trial.minCoeff() > 0.0 && objective_value(m, trial, obj) >= base - 1e-14) break;
            d *= 0.5;
            trial = cur.eta + d;
        }
        cur.eta = trial;
    }
    return best;
}

struct NewtonReport {
    std::vector<Vec> etas;       // state-action iterates
    std::vector<double> errors;  // Euclidean distance to the reference optimum
    Vec eta_star;                // reference fixed point of the projected Newton map
    bool quadratic_flag = false;
    double quadratic_constant = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
};

namespace detail {

// Looks for a tail of at least three iterates, ending where the errors first
// drop under `floor`, on which e_{k+1} <= C e_k^2 holds with a single
// C <= 1e3. A pair whose successor already sits at the measurement floor
// (reference accuracy, ~1e-14) is consistent with any contraction at least
// quadratic and does not break the tail. The fitted C is the largest ratio
// over the accepted tail.
inline void fit_quadratic_tail(NewtonReport& report, double floor = 1e-12) {
    const auto& e = report.errors;
    report.quadratic_flag = false;
    int hit = -1;
    for (int k = 0; k < static_cast<int>(e.size()); ++k)
        if (e[k] <= floor) {
            hit = k;
            break;
        }
    if (hit < 2) return;  // never reached the floor, or reached it instantly
    double c_max = 0.0;
    int start = hit;
    for (int k = hit - 1; k >= 0; --k) {
        if (e[k] <= 0.0) break;
        const double ratio = e[k + 1] / (e[k] * e[k]);
        if (ratio > 1e3 && e[k + 1] > 1e-14) break;
        if (ratio <= 1e3) c_max = std::max(c_max, ratio);
        start = k;
    }
    if (hit - start + 1 < 3) return;
    report.quadratic_constant = c_max;
    report.quadratic_flag = true;
}

}  // namespace detail

// Discrete NPG iteration theta_{k+1} = theta_k + dt G(theta_k)^+ grad
// R_lambda(theta_k) with the geometry induced by the regularizer itself.
// With the Newton-matched step size dt = 1/lambda the state-action iterates
// follow the projected Newton iteration up to a second-order error, giving
// local quadratic convergence; see the notes in the README.
//
// The error sequence is measured against the fixed point of
// projected_newton_step, computed independently from the uniform policy.
inline NewtonReport regularized_npg_newton(const Mdp& m, const SoftmaxParams& theta0,
                                           const Potential& phi, double lambda,
                                           int max_iters = 100,
                                           std::optional<double> step_size = std::nullopt) {
    if (lambda <= 0.0) throw std::invalid_argument("regularized npg: lambda must be positive");
    const double dt = step_size.value_or(1.0 / lambda);
    const Objective obj = Objective::regularized(lambda, phi);
    const GeometrySpec geo = GeometrySpec::hessian_of(phi);

    NewtonReport report;
    report.eta_star =
        newton_fixed_point(m, state_action_frequency(m, uniform_policy(m)), phi, lambda)
            .eta.eta;

    Vec theta = theta0;
    int increasing = 0;
    for (int k = 0; k <= max_iters; ++k) {
        const Vec eta = state_action_frequency(m, softmax_policy(m, theta)).eta;
        const double err = (eta - report.eta_star).norm();
        report.etas.push_back(eta);
        report.errors.push_back(err);
        if (err <= 1e-14) break;
        if (report.errors.size() >= 2 && err > report.errors[report.errors.size() - 2]) {
            if (++increasing >= 10) {
                report.diverged = true;
                break;
            }
        } else {
            increasing = 0;
        }
        if (k == max_iters) break;
        theta += dt * npg_direction(m, theta, geo, obj);
        if (!theta.allFinite()) {
            report.diverged = true;
            break;
        }
    }
    detail::fit_quadratic_tail(report);
    return report;
}

}  // namespace npglab
