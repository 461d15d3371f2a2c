#pragma once

#include <array>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "beamtomo/common.hpp"
#include "beamtomo/geometry.hpp"
#include "beamtomo/grid.hpp"

namespace beamtomo {

// Scalar coefficient c(t, x).
struct Coefficient {
    std::function<double(double, const Vec2&)> fn;
    bool zero = true;
    bool time_dependent = false;

    static Coefficient none() { return {}; }
    static Coefficient constant(double c);
    static Coefficient spatial(std::function<double(const Vec2&)> f);
    static Coefficient spacetime(std::function<double(double, const Vec2&)> f);

    double operator()(double t, const Vec2& x) const { return zero ? 0.0 : fn(t, x); }
    Coefficient operator+(const Coefficient& o) const;
    Coefficient scaled(double a) const;
};

// u_tt − Δ_g u + b u_t + f(x,t,u) = 0 with f = q u + f2 u²/2 + f3 u³/6 (+ optional extra).
struct SemilinearSpec {
    Metric metric = Metric::euclidean(Domain::interval(0.0, 1.0));
    Coefficient b;
    Coefficient q;
    Coefficient f2;
    Coefficient f3;
    // Optional additional nonlinearity g(t, x, u) with g(·,·,0) = 0 and no linear part.
    std::function<cplx(double, const Vec2&, cplx)> extra;
    bool b_in_E = false;  // admissibility flags: coefficient supported inside ℰ
    bool q_in_E = false;
    double delta0 = std::numeric_limits<double>::infinity();  // small-data bound on sup|data|

    bool linear() const { return f2.zero && f3.zero && !extra; }
};

enum class Direction { forward, backward };

// Coefficients sampled once on a grid; shared read-only by many solves.
class SolverContext {
public:
    SolverContext(const SemilinearSpec& spec, const Grid& grid);

    const SemilinearSpec& spec() const { return spec_; }
    const Grid& grid() const { return *grid_; }
    double speed_max() const { return speed_max_; }

    // Pointer to node values at level k, nullptr for an identically zero coefficient.
    const double* b(std::size_t k) const { return b_.at(k); }
    const double* q(std::size_t k) const { return q_.at(k); }
    const double* f2(std::size_t k) const { return f2_.at(k); }
    const double* f3(std::size_t k) const { return f3_.at(k); }
    const double* q_adjoint(std::size_t k) const { return qa_.at(k); }

    // Discrete Δ_g at an interior node.
    template <class S>
    S laplacian(const S* u, std::size_t node) const;
    double inv_c(std::size_t node) const { return inv_c_.empty() ? 1.0 : inv_c_[node]; }

    struct Table {
        bool zero = true;
        bool dynamic = false;
        std::size_t nodes = 0;
        std::vector<double> data;
        const double* at(std::size_t k) const {
            if (zero) return nullptr;
            return dynamic ? data.data() + k * nodes : data.data();
        }
    };

private:
    SemilinearSpec spec_;
    const Grid* grid_;
    Table b_, q_, f2_, f3_, qa_;
    std::vector<double> w_c_, w_l_, w_r_, w_d_, w_u_;  // stencil weights per node
    std::vector<double> inv_c_;
    double speed_max_ = 1.0;
    bool uniform_ = true;
};

template <class S>
using SourceFn = std::function<bool(std::size_t level, S* out)>;  // false: zero source at that level

template <class S>
struct LinearInputs {
    SourceFn<S> source;                   // physical level indexing
    std::size_t source_start = 0;         // first level with a possibly non-zero source
    const BoundaryData<S>* h = nullptr;   // Dirichlet data, physical levels
    const std::vector<S>* u0 = nullptr;   // u at the start level (t0 forward, T backward)
    const std::vector<S>* u1 = nullptr;   // u_t at the start level
};

struct SolveOptions {
    bool store_field = true;
    bool compute_trace = true;
};

template <class S>
struct Solution {
    Field<S> field;             // empty unless stored
    BoundaryTrace<S> trace;     // ∂_ν u on the boundary samples
    int iterations = 0;         // Picard iterations (semilinear)
    std::vector<double> ratios; // contraction ratios
    double residual = 0.0;      // final fixed-point increment, relative to ‖v‖∞
};

template <class S>
Solution<S> solve_linear(const SolverContext& ctx, const LinearInputs<S>& in, Direction dir = Direction::forward,
                         const SolveOptions& opt = {});

// Formal L² adjoint 𝓛* v = v_tt − Δ_g v − b v_t + (q − b_t) v = G with v(T) = v_t(T) = 0 (or given terminal data).
template <class S>
Solution<S> solve_adjoint(const SolverContext& ctx, const LinearInputs<S>& in, const SolveOptions& opt = {});

struct PicardOptions {
    double tol = 1e-12;
    int max_iter = 60;
};

template <class S>
Solution<S> solve_semilinear(const SolverContext& ctx, const BoundaryData<S>* h, const std::vector<S>* u0,
                             const std::vector<S>* u1, const PicardOptions& popt = {}, const SolveOptions& opt = {});

template <class S>
BoundaryTrace<S> neumann_trace(const Field<S>& field, const SolverContext& ctx);
// Flat-metric convenience.
template <class S>
BoundaryTrace<S> neumann_trace(const Field<S>& field);

// Helpers for tables and norms.
template <class S>
BoundaryData<S> boundary_from_function(const Grid& grid, const std::function<S(double, const Vec2&)>& h);
template <class S>
double sup_norm(const std::vector<S>& v);
template <class S>
double sup_norm(const BoundaryTable<S>& v) { return sup_norm(v.data); }
double discrete_energy(const RField& u, const SolverContext& ctx, std::size_t k);

// ---- Taylor boundary data for problem I

using Profile = std::function<double(const Vec2&)>;

struct TaylorData {
    int order = 0;
    std::vector<std::array<double, 5>> coef;  // ∂_t^j u(x,0) per boundary node, j ≤ order

    double value(std::size_t slot, double t) const;
    BoundaryData<double> table(const Grid& grid) const;
};

struct JetOptions {
    double h_space = 1e-2;  // finite-difference step for spatial derivatives of profiles
    double h_time = 1e-3;   // finite-difference step for time derivatives of coefficients
};

// ∂_t^k u(x, 0) for k = 0..m at a point, via the recursion
// ∂_t^{k+2}u = Δ_g ∂_t^k u − ∂_t^k(b u_t) − ∂_t^k f + ∂_t^k F.
std::array<double, 5> time_jets(const SemilinearSpec& spec, const Profile& u0, const Profile& u1,
                                const Coefficient& F, int m, const Vec2& x, const JetOptions& jo = {});

TaylorData boundary_data_from_mu(const Profile& mu, const SemilinearSpec& spec, int m, const Grid& grid,
                                 const JetOptions& jo = {});

struct CompatibilityReport {
    bool pass = true;
    int first_violated_order = -1;
    double max_violation = 0.0;
    std::vector<double> violation_per_order;
};

CompatibilityReport check_compatibility(const Profile& u0, const Profile& u1, const TaylorData& h,
                                        const Coefficient& F, int m, const SemilinearSpec& spec, const Grid& grid,
                                        double tol = 1e-8, const JetOptions& jo = {});

}  // namespace beamtomo
