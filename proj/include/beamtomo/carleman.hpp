#pragma once

#include <string>
#include <vector>

#include "beamtomo/common.hpp"
#include "beamtomo/geometry.hpp"
#include "beamtomo/grid.hpp"
#include "beamtomo/wave_solver.hpp"

namespace beamtomo {

// ψ(x) = |x − x₀|², φ = ψ − βt² + β₀, weight e^{λφ}.
struct CarlemanWeight {
    Domain domain = Domain::interval(0.0, 1.0);
    Vec2 x0 = Vec2::Zero();
    double rho = 1.0;
    double beta = 0.0, beta0 = 0.0, lambda = 1.0;
    double T = 0.0, T_star = 0.0;
    double delta = 0.0;    // largest margin with properties (1)-(2)
    double eps = 0.0;      // cutoff margin used with δ
    double eps_max = 0.0;  // largest admissible ε for property (2)
    double d0 = 0.0, d1 = 0.0;
    double max_psi = 0.0, min_psi = 0.0, min_grad_psi = 0.0, min_hess_eig = 0.0;
    double min_phi = 0.0;       // min of φ over Ω̄ × [−T, T]
    double margin1 = 0.0;       // β₀ − 4δ − max φ(·, ±T)
    double margin2 = 0.0;       // β₀ − 2δ − max φ over |t| ≥ T − 2ε
    std::size_t samples = 0;

    double psi(const Vec2& x) const { return (x - x0).squaredNorm(); }
    double phi(double t, const Vec2& x) const { return psi(x) - beta * t * t + beta0; }
    double weight(double t, const Vec2& x) const { return std::exp(lambda * phi(t, x)); }
    bool property1() const { return margin1 >= 0.0; }
    bool property2() const { return margin2 >= 0.0; }

    std::string to_json() const;
};

// beta0 <= 0 picks β₀ = βT² − min ψ + 1, so that φ ≥ 1. Samples Ω̄ with `samples` points per axis.
CarlemanWeight build_weight(const Domain& domain, const Vec2& x0, double beta, double beta0, double lambda,
                            double T, int samples = 401);

// Even cutoff: 0 for |t| > T − ε, 1 for |t| ≤ T − 2ε, quintic blend (C²) in between.
struct Cutoff {
    double T = 1.0, eps = 0.1;
    double operator()(double t) const;
    double d1(double t) const;
    double d2(double t) const;
};

Cutoff cutoff_chi(double T, double eps);

struct CarlemanRatio {
    std::vector<double> s;
    std::vector<double> lhs, rhs, ratio;  // lhs and rhs share a per-s scale factor
};

// Test field on a grid over [−T, T]; the two first and last levels and the boundary nodes must vanish.
// Flat Laplacian; weight from `w`.
CarlemanRatio carleman_ratio(const RField& v, const Coefficient& b, const Coefficient& q, const CarlemanWeight& w,
                             const std::vector<double>& s_list);

struct StabilityRow {
    double alpha = 0.0;
    double q_norm = 0.0;
    double trace_norm = 0.0;
    double ratio = 0.0;            // q_norm / trace_norm
    double y1_consistency = 0.0;   // ‖∂_t(trace difference) − trace(y₁)‖ / ‖trace(y₁)‖
};

struct StabilityResult {
    std::vector<StabilityRow> rows;
    double slope = 0.0;            // log trace_norm vs log alpha
    double even_extension_defect = 0.0;  // max |u₁_ttt(x, 0)|
    std::string to_csv() const;
};

// f₁ has linear part q₁ = f1.q; f₂ adds α·q_shape. First-order solves with u(0) = μ, u_t(0) = 0 and
// shared Taylor boundary data; y₁ from its own system with y₁_t(0) = qμ.
StabilityResult stability_experiment(const SemilinearSpec& f1, const Profile& q_shape, const Profile& mu,
                                     const Grid& grid, const std::vector<double>& alphas, int taylor_order = 3);

}  // namespace beamtomo
