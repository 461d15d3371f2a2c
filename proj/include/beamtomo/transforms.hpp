#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "beamtomo/common.hpp"
#include "beamtomo/geometry.hpp"
#include "beamtomo/grid.hpp"

namespace beamtomo {

using SpaceTimeFn = std::function<double(double t, const Vec2& x)>;

// Boundary points × inward directions × time offsets. Each offset places the
// ray's midpoint time t_mid = s + τ₊/2 on a uniform grid in [t_mid_lo, t_mid_hi].
struct FamilySpec {
    int n_points = 10;       // ignored in 1D (two endpoints)
    int n_dirs = 8;          // ignored in 1D
    int n_s = 5;
    double t_mid_lo = 1.5;
    double t_mid_hi = 2.5;
    double grazing = 0.15;   // directions within this angle of the tangent are skipped
    double step = 1e-3;      // geodesic sampling
};

struct RayFamily {
    Metric metric = Metric::euclidean(Domain::interval(0.0, 1.0));
    std::vector<NullGeodesic> rays;

    std::size_t size() const { return rays.size(); }
};

RayFamily make_ray_family(const Metric& metric, const FamilySpec& spec);
// 1+1D family from explicit entry times: right-moving rays from the left end and left-moving from the right end.
RayFamily make_ray_family_1d(const Metric& metric, const std::vector<double>& s_right,
                             const std::vector<double>& s_left, double step = 1e-3);

// ∫₀^{τ₊} f(r + s, γ(r)) dr by composite Simpson, per ray.
std::vector<double> light_ray_transform(const SpaceTimeFn& f, const RayFamily& family, int segments = 512);

// Sparse ray × unknown operator; unknowns are the masked space-time nodes (level-major order).
class RayOperator {
public:
    RayOperator() = default;

    const Grid& grid() const { return *grid_; }
    std::size_t rows() const { return row_ptr_.empty() ? 0 : row_ptr_.size() - 1; }
    std::size_t cols() const { return col_cell_.size(); }
    const std::vector<std::uint8_t>& mask() const { return mask_; }
    const std::vector<std::size_t>& column_cells() const { return col_cell_; }

    std::vector<double> apply(const std::vector<double>& f) const;
    std::vector<double> apply_transpose(const std::vector<double>& y) const;
    double row_sum(std::size_t r) const;
    double frobenius2() const;

    // Unknown vector ↔ full space-time field (zero outside the mask).
    std::vector<double> expand(const std::vector<double>& f) const;
    std::vector<double> restrict_to_mask(const std::vector<double>& field) const;
    std::vector<double> sample(const SpaceTimeFn& f) const;

    const std::vector<int>& coverage() const { return coverage_; }
    int min_coverage() const;
    std::size_t low_coverage_cells(int threshold = 4) const;

    // Discrete gradient pairs (i, j, 1/step) over the masked unknowns, j = −1 for a neighbour outside the mask.
    struct Edge {
        long i, j;
        double w;
        int axis;  // 0: t, 1: x, 2: y
    };
    const std::vector<Edge>& edges() const { return edges_; }

private:
    friend RayOperator build_ray_operator(const Grid&, const RayFamily&, const std::vector<std::uint8_t>&, double);

    const Grid* grid_ = nullptr;
    std::vector<std::uint8_t> mask_;
    std::vector<std::size_t> col_cell_;
    std::vector<long> cell_col_;
    std::vector<std::size_t> row_ptr_;
    std::vector<std::size_t> col_;
    std::vector<double> val_;
    std::vector<std::size_t> tptr_, trow_;
    std::vector<double> tval_;
    std::vector<int> coverage_;
    std::vector<Edge> edges_;
};

// Linear (1+1D) or trilinear (2+1D) interpolation weights at Simpson nodes with spacing ≤ quad_step
// (0: half the smaller grid step). Throws CoverageError if some masked cell is hit by no ray.
RayOperator build_ray_operator(const Grid& grid, const RayFamily& family, const std::vector<std::uint8_t>& mask,
                               double quad_step = 0.0);

struct InversionOptions {
    double lambda = -1.0;       // < 0: discrepancy sweep
    double noise_level = 0.0;   // expected RMS noise per datum, for the discrepancy principle
    double discrepancy = 1.1;   // accept ‖Af − d‖ ≤ discrepancy · noise_level · √m
    int sweep_points = 5;
    double sweep_decades = 4.0;
    double time_weight = 1.0;   // relative weight of time differences in the penalty
    double tol = 1e-8;
    int max_iter = 4000;
};

struct SweepEntry {
    double lambda;
    double residual;
    int iterations;
    bool converged;
};

struct InversionResult {
    std::vector<double> field;  // full space-time field, zero outside the mask
    std::vector<double> unknowns;
    double lambda = 0.0;
    double residual = 0.0;      // ‖Af − d‖
    int iterations = 0;
    std::vector<double> residual_history;  // CG residual norms
    std::vector<SweepEntry> sweep;
};

// argmin ‖Af − d‖² + λ‖∇f‖² by conjugate gradients on the normal equations.
InversionResult invert_ray_transform(const RayOperator& op, const std::vector<double>& data,
                                     const InversionOptions& opt = {});

// Relative L² error of a field against a reference over the masked cells.
double relative_l2(const RayOperator& op, const std::vector<double>& field, const std::vector<double>& truth);

}  // namespace beamtomo
