#pragma once

#include <functional>
#include <vector>

#include "beamtomo/common.hpp"
#include "beamtomo/grid.hpp"

namespace beamtomo {

enum class DomainKind { interval, disk, rectangle };

class Domain {
public:
    static Domain interval(double a, double b);
    static Domain disk(const Vec2& center, double radius);
    static Domain rectangle(double x0, double x1, double y0, double y1);

    DomainKind kind() const { return kind_; }
    int dim() const { return kind_ == DomainKind::interval ? 1 : 2; }
    // Negative inside, zero on the boundary.
    double signed_distance(const Vec2& x) const;
    Vec2 project(const Vec2& x) const;
    bool contains(const Vec2& x, double tol = 0.0) const { return signed_distance(x) <= tol; }
    // Distance to the boundary along the straight line x + r v, r > 0 (x inside).
    double line_exit(const Vec2& x, const Vec2& v) const;
    Vec2 lo() const { return lo_; }
    Vec2 hi() const { return hi_; }
    Vec2 center() const { return center_; }
    double radius() const { return radius_; }

private:
    DomainKind kind_ = DomainKind::interval;
    Vec2 lo_{0, 0}, hi_{1, 0}, center_{0, 0};
    double radius_ = 0.0;
};

struct ConformalFactor {
    std::function<double(const Vec2&)> value;
    std::function<Vec2(const Vec2&)> gradient;  // optional; finite differences if empty

    static ConformalFactor constant(double c);
    // c(x) = 1 + amp * sin(k π x_axis)
    static ConformalFactor sine(double amp, double k, int axis = 0);
};

enum class MetricKind { euclidean, conformal };

// g = c(x)² δ on Ω, optionally padded outside Ω by blending c towards its
// value at the projection onto Ω.
class Metric {
public:
    static Metric euclidean(const Domain& domain);
    static Metric conformal(const Domain& domain, ConformalFactor c, double padding = 0.0);

    int dim() const { return domain_.dim(); }
    MetricKind kind() const { return kind_; }
    bool flat() const { return kind_ == MetricKind::euclidean; }
    const Domain& domain() const { return domain_; }
    double padding() const { return padding_; }

    double c(const Vec2& x) const;
    Vec2 grad_log_c(const Vec2& x) const;
    Eigen::Matrix2d hess_log_c(const Vec2& x) const;
    double norm(const Vec2& x, const Vec2& v) const { return c(x) * v.norm(); }
    double inner(const Vec2& x, const Vec2& u, const Vec2& w) const {
        const double cx = c(x);
        return cx * cx * u.dot(w);
    }
    // Γ^k_ij u^i w^j
    Vec2 christoffel(const Vec2& x, const Vec2& u, const Vec2& w) const;
    // min of c over a sample of Ω; the wave speed is bounded by 1/c_min
    double c_min_sampled(int n = 64) const;

private:
    Vec2 mask(Vec2 v) const {
        if (dim() == 1) v.y() = 0.0;
        return v;
    }
    double c_raw(const Vec2& x) const;
    Vec2 grad_raw(const Vec2& x) const;

    MetricKind kind_ = MetricKind::euclidean;
    Domain domain_;
    ConformalFactor factor_;
    double padding_ = 0.0;
};

struct GeodesicSample {
    double r;
    Vec2 x;
    Vec2 v;
};

struct Geodesic {
    Metric metric;
    Vec2 x0, v0;
    double step = 0.0;
    double tau_plus = 0.0;
    std::vector<GeodesicSample> samples;  // uniform in r except the final exit sample

    // State at arc length r in [0, tau_plus], integrated from the nearest sample.
    GeodesicSample at(double r) const;
};

struct NullGeodesic {
    double s = 0.0;  // t = r + s
    Geodesic geodesic;

    double t(double r) const { return r + s; }
    Vec2 x(double r) const { return geodesic.at(r).x; }
    double t_entry() const { return s; }
    double t_exit() const { return s + geodesic.tau_plus; }
};

// One RK4 step of the geodesic ODE.
void geodesic_rk4(const Metric& m, Vec2& x, Vec2& v, double h);

Geodesic trace_geodesic(const Metric& metric, const Vec2& x0, const Vec2& v0, double step = 1e-3,
                        double max_len = 100.0);
// Fixed-length integration ignoring the boundary (used on the padded domain).
Geodesic integrate_geodesic(const Metric& metric, const Vec2& x0, const Vec2& v0, double step, double length);
NullGeodesic make_null_geodesic(const Metric& metric, double s, const Vec2& x0, const Vec2& v0,
                                double step = 1e-3);

// Transverse unit vector E₂ at each sample (empty for n = 1).
std::vector<Vec2> parallel_frame(const Geodesic& geodesic);

struct ChartOptions {
    double eps = -1.0;          // margin beyond the Ω-endpoints; < 0: 5% of τ₊
    double delta_prime = -1.0;  // tube radius; < 0: default rule
    double step = 1e-3;         // base geodesic sampling
    double T = 0.0;             // time horizon (0 disables the time-boundary check)
};

// Fermi chart around an extended null geodesic.
// z₀ = (t+σ)/√2 + a/2, z₁ = (−t+σ)/√2 + a/2, z₂ = y, with σ the arc length
// along the extended geodesic and y the transverse geodesic coordinate.
class FermiChart {
public:
    FermiChart() = default;
    FermiChart(const NullGeodesic& beta, const ChartOptions& opt);

    int dim() const { return dim_; }
    bool flat() const { return metric_.flat(); }
    const Metric& metric() const { return metric_; }
    double s() const { return s_; }
    double tau() const { return tau_; }
    double eps() const { return eps_; }
    double delta_prime() const { return delta_prime_; }
    double a() const { return a_; }
    double b() const { return b_; }
    double a0() const { return a0_; }
    double b0() const { return b0_; }
    double z0_entry() const { return kSqrt2 * s_; }
    double z0_exit() const { return kSqrt2 * (s_ + tau_); }

    // (t, x) → z; returns false outside the chart's base range.
    bool to_fermi(double t, const Vec2& x, Eigen::Vector3d& z) const;
    // z → (t, x)
    void from_fermi(const Eigen::Vector3d& z, double& t, Vec2& x) const;
    // ḡ in z coordinates; top-left (n+1)×(n+1) block is meaningful.
    Eigen::Matrix3d metric_at(const Eigen::Vector3d& z) const;
    // ḡ¹¹ = (ḡ⁻¹)_{11}
    double inverse_g11(const Eigen::Vector3d& z) const;
    // Axis point at z₀.
    void axis_point(double z0, double& t, Vec2& x) const;

private:
    struct Base {
        Vec2 x, v, e;
    };
    Base base_at(double sigma) const;
    // exp_{γ(σ)}(y E(σ)) and its Jacobian columns ∂x/∂σ, ∂x/∂y
    void exp_map(double sigma, double y, Vec2& x, Vec2* dx_dsigma, Vec2* dx_dy) const;
    bool invert_spatial(const Vec2& x, double& sigma, double& y) const;
    void check_round_trip() const;

    Metric metric_;
    int dim_ = 1;
    double s_ = 0.0, tau_ = 0.0, eps_ = 0.0, delta_prime_ = 0.0;
    double a_ = 0.0, b_ = 0.0, a0_ = 0.0, b0_ = 0.0;
    double step_ = 1e-3, length_ = 0.0;
    std::vector<Base> base_;
};

FermiChart build_fermi_chart(const NullGeodesic& beta, const ChartOptions& opt);

struct InfluenceMasks {
    const Grid* grid = nullptr;
    double T = 0.0;
    std::vector<double> D_g;        // per spatial node
    std::vector<double> dist;       // distance to Γ per spatial node
    std::vector<std::uint8_t> in_domain;  // node inside Ω (for box grids around disks)
    std::vector<std::uint8_t> D;    // space-time, level-major
    std::vector<std::uint8_t> E;

    bool in_D(std::size_t k, std::size_t node) const { return D[k * grid->nodes() + node] != 0; }
    bool in_E(std::size_t k, std::size_t node) const { return E[k * grid->nodes() + node] != 0; }
    std::size_t count_E() const;
};

// D_g by sampling `directions` geodesic directions per node (0: 64 for n=2, 2 for n=1).
InfluenceMasks influence_sets(const Metric& metric, const Grid& grid, double T, int directions = 0);
// Pointwise versions used for continuous phantoms and ray geometry.
double longest_geodesic_through(const Metric& metric, const Vec2& x, int directions = 0);
double distance_to_boundary(const Metric& metric, const Vec2& x, int directions = 0);

}  // namespace beamtomo
