#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "beamtomo/common.hpp"
#include "beamtomo/geometry.hpp"
#include "beamtomo/grid.hpp"
#include "beamtomo/wave_solver.hpp"

namespace beamtomo {

using CMat = Eigen::MatrixXcd;
using RMat = Eigen::MatrixXd;

struct RiccatiOptions {
    double step = 1e-2;     // z₀ step on each side of s
    double fd_step = 2e-3;  // step for ∂²ḡ¹¹
};

// Quadratic phase data along the chart axis: H = Z Y⁻¹ with
// dZ/dz₀ = −B Y, dY/dz₀ = A Z, Y(s) = I, Z(s) = H₀.
struct RiccatiSolution {
    int n = 1;
    double s = 0.0;
    CMat H0;
    RMat A;
    std::vector<double> z0;
    std::vector<CMat> H, Y, Z;
    std::vector<RMat> B;

    double z0_min() const { return z0.front(); }
    double z0_max() const { return z0.back(); }
    // Cubic Hermite interpolation using the ODE right-hand sides at the nodes.
    void interpolate(double z, CMat& Yz, CMat& Zz) const;
    CMat H_at(double z) const;
    cplx det_Y(double z) const;
    std::size_t segment(double z) const;

    // max |det(Im H)|det Y|² − det Im H₀| / det Im H₀
    double conservation_error() const;
    double symmetry_error() const;
    double min_imag_eig() const;
};

// Im part of a complex symmetric matrix and its smallest eigenvalue.
RMat imag_part(const CMat& H);
double min_eig(const RMat& M);

RiccatiSolution solve_riccati(const FermiChart& chart, const CMat& H0, const RiccatiOptions& opt = {});

// a₀,₀(z₀) = (det Y)^{-1/2} exp(sign/(2√2) ∫_s^{z₀} b), square root tracked along z₀.
struct Amplitude {
    int sign = 1;
    std::vector<double> z0;
    std::vector<cplx> sqrt_det_Y;  // branch-tracked
    std::vector<double> b;         // b on the axis
    std::vector<double> integral;  // ∫_s^{z₀} b
    std::vector<cplx> a;
    double transport_residual = 0.0;  // max on-axis ODE residual

    cplx at(double z, const RiccatiSolution& ric) const;
};

std::vector<double> sample_on_axis(const FermiChart& chart, const std::vector<double>& z0, const Coefficient& c);
Amplitude transport_amplitude(const RiccatiSolution& ric, const std::vector<double>& b_axis, int sign);

// Which equation a beam approximately solves.
enum class BeamKind { forward, adjoint };

class Beam {
public:
    Beam() = default;
    Beam(FermiChart chart, RiccatiSolution ric, Amplitude amp, double sigma, bool normalize, bool conjugate);

    const FermiChart& chart() const { return chart_; }
    const RiccatiSolution& riccati() const { return ric_; }
    const Amplitude& amplitude() const { return amp_; }
    double sigma() const { return sigma_; }
    double p_norm() const { return p_norm_; }
    bool conjugate() const { return conjugate_; }
    int dim() const { return chart_.dim(); }

    // Field value; zero outside the tube.
    cplx operator()(double t, const Vec2& x) const;
    // Phase φ̃ and amplitude Ã with u = Ã e^{iσφ̃} (conjugated when flagged);
    // false outside the chart.
    bool phase_amplitude(double t, const Vec2& x, cplx& phase, cplx& amp) const;
    cplx phase_z(const Eigen::Vector3d& z) const;
    cplx amplitude_z(const Eigen::Vector3d& z) const;
    cplx value_z(const Eigen::Vector3d& z) const;

    // Dirichlet data on the boundary nodes of a solver grid.
    BoundaryData<cplx> boundary_data(const Grid& grid) const;
    // Values on the boundary samples (for boundary pairings).
    BoundaryTable<cplx> on_samples(const Grid& grid) const;
    CField sample(const Grid& grid) const;

private:
    FermiChart chart_;
    RiccatiSolution ric_;
    Amplitude amp_;
    double sigma_ = 1.0;
    double p_norm_ = 1.0;
    bool conjugate_ = false;
};

Beam assemble_beam(const FermiChart& chart, const RiccatiSolution& ric, const Amplitude& amp, double sigma,
                   bool normalize = true, bool conjugate = false);

// Forward beams solve 𝓛_{b,q}u ≈ 0; adjoint beams e^{−iσφ̄}ā solve 𝓛*_{b,q}v ≈ 0.
Beam make_beam(const FermiChart& chart, const CMat& H0, const Coefficient& b, double sigma, BeamKind kind,
               bool normalize = true, const RiccatiOptions& ropt = {});

struct ResidualReport {
    double residual_l2 = 0.0;
    double beam_l2 = 0.0;
    double normalized = 0.0;
    double eikonal_axis = 0.0;    // max |𝓢φ| on the axis
    double transport_axis = 0.0;  // max |𝓣(a, φ)| on the axis
    std::size_t tube_nodes = 0;
};

struct ResidualOptions {
    double fd_step = 1e-3;
    bool check_resolution = true;
    int axis_samples = 41;
    // Restrict the L² norms to |z′| ≤ δ′/2, where the cutoff is identically one.
    bool core_only = false;
};

// 𝓛_{b,q}u for the beam in WKB-factored form, derivatives of φ and the amplitude by
// central differences; L² norms by grid quadrature over all levels.
ResidualReport beam_residual(const Beam& beam, const Coefficient& b, const Coefficient& q, const Grid& grid,
                             const ResidualOptions& opt = {});

// Rows (z0, det_identity_error, transport_residual).
std::string beam_diagnostics_csv(const Beam& beam);

}  // namespace beamtomo
