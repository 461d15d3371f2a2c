#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "beamtomo/beams.hpp"
#include "beamtomo/common.hpp"
#include "beamtomo/geometry.hpp"
#include "beamtomo/linearize.hpp"
#include "beamtomo/transforms.hpp"

namespace beamtomo {

// ---------------------------------------------------------------- Gaussian limits

using Profile1 = std::function<double(const Eigen::VectorXd&)>;

struct GaussianLimit {
    std::vector<double> sigmas;
    std::vector<double> values;
    double limit = 0.0;          // extrapolated in 1/σ
    double closed_form = 0.0;    // (π/2)^{n/2} det(P)^{-1/2} η(0)
};

// σ^{n/2} ∫ η(x) e^{−2σ xᵀPx} dx over the cube [−support, support]^n.
double gaussian_integral(const RMat& P, const Profile1& eta, double support, double sigma, int nodes = 0);
GaussianLimit gaussian_limit(const RMat& P, const Profile1& eta, double support, const std::vector<double>& sigmas);
// ∫ e^{−½xᵀPx} e^{−iξ·x} dx = (2π)^{n/2} det(P)^{-1/2} e^{−½ξᵀP⁻¹ξ}
double gaussian_fourier(const RMat& P, const Eigen::VectorXd& xi);
// The same transform by tensor Simpson quadrature on [−half_width, half_width]^n.
cplx gaussian_fourier_quadrature(const RMat& P, const Eigen::VectorXd& xi, double half_width, int nodes = 401);

// ---------------------------------------------------------------- σ-extrapolation

struct Extrapolation {
    double limit = 0.0;
    double c1 = 0.0, c2 = 0.0;
    double residual = 0.0;  // RMS misfit of the three-term model
};

enum class ExtrapolationModel {
    half_power,  // L + c₁σ^{−1/2} + c₂σ^{−1}
    integer,     // L + c₁σ^{−1} + c₂σ^{−2}
};

// Least-squares fit over at least four σ values.
Extrapolation extrapolate(const std::vector<double>& sigmas, const std::vector<double>& values,
                          ExtrapolationModel model = ExtrapolationModel::half_power);

// ---------------------------------------------------------------- probes

enum class ProbeMode { damping, potential };

struct ProbeOptions {
    double max_fit_residual = 0.05;  // relative to max |value|
    double abs_floor = 1e-9;         // misfits below this are always accepted
};

struct ProbeResult {
    int ray_id = -1;
    ProbeMode mode = ProbeMode::damping;
    std::vector<double> sigmas;
    std::vector<cplx> pairings;   // ∫_Σ trace_diff · v dΣ
    std::vector<double> values;   // normalized per mode
    Extrapolation fit;
    double weighted = 0.0;        // limit of the weighted integral
    double axis_integral = 0.0;   // ∫ coefficient dz₀ along the axis
    double line_integral = 0.0;   // ∫ coefficient dr (light-ray transform value)
};

// Transverse normalization σ^{n/2} |det Y(s)|⁻¹ ∫ χ² e^{−2σ z′ᵀ Im H₀ z′} dz′.
double transverse_norm(const Beam& beam);

// Normalized probe value at one σ: −√2 Re(P/(iσ))/N (damping) or Re(P)/N (potential).
double probe_value(cplx pairing, const Beam& adjoint, ProbeMode mode);

// Exponential identity J = −2√2 (e^{−I/(2√2)} − 1) inverted for I = ∫ b dz₀.
double invert_damping_identity(double weighted);

ProbeResult beam_probe(const std::vector<BoundaryTrace<cplx>>& trace_diffs, const std::vector<Beam>& adjoint_beams,
                       const Grid& grid, ProbeMode mode, int ray_id = -1, const ProbeOptions& opt = {});

// ---------------------------------------------------------------- recovery of b and q

struct RecoveryOptions {
    std::vector<double> sigmas{64, 128, 256, 512};
    ChartOptions chart;           // per-ray chart margins (T is filled in)
    CMat H0;                      // empty: i·I
    double eps = 1e-3;            // first-order stencil step
    InversionOptions inversion;
    ProbeOptions probe;
};

struct RecoveryResult {
    std::vector<ProbeResult> probes;
    std::vector<double> line_integrals;  // per ray
    InversionResult inversion;
    std::vector<double> field;           // reference + recovered difference on the inversion grid
    std::vector<double> difference;      // recovered difference only
};

// Per-ray integrals ∫_β (c₁ − c₂) dr from probes of the two oracles.
std::vector<ProbeResult> probe_family(const DtNOracle& oracle1, const DtNOracle& oracle2, const RayFamily& family,
                                      ProbeMode mode, const RecoveryOptions& opt);

RecoveryResult recover_b(const DtNOracle& oracle1, const DtNOracle& oracle2, const RayFamily& family,
                         const RayOperator& op, const RecoveryOptions& opt = {});
RecoveryResult recover_q(const DtNOracle& oracle1, const DtNOracle& oracle2, const RayFamily& family,
                         const RayOperator& op, const RecoveryOptions& opt = {});

// ---------------------------------------------------------------- cubic coefficient

// Null covectors ζ_i = (ζ_t, ζ_x, ζ_y) in the orthonormal frame at p and weights k with Σ k_i ζ_i = 0.
struct ConeQuadruple {
    double t0 = 0.0;
    Vec2 x0 = Vec2::Zero();
    double theta = 0.0, theta_tilde = 0.0;
    std::array<Eigen::Vector3d, 4> zeta;
    std::array<double, 4> k{};

    double null_defect() const;     // max |ζ_t² − |ζ_x|²|
    double balance_defect() const;  // |Σ k_i ζ_i|
    // Spatial unit direction (Euclidean) of the ray carrying ζ_i, for the metric c at p.
    Vec2 direction(int i) const;
};

ConeQuadruple cone_quadruple(double t0, const Vec2& x0, double theta, double theta_tilde, int dim = 2);

struct PhaseDiagnostics {
    cplx S_at_p = 0.0;
    double grad_norm = 0.0;      // |dS(p)|
    double min_imag_ratio = 0.0; // min Im S / d² over the sample sphere
    Eigen::Matrix3cd hessian;    // ∂²S in (t, x, y)
    cplx sqrt_det = 0.0;         // det(−i Hess S)^{1/2}, principal branches of the eigenvalues
};

// S = Σ |k_i| φ̃_i with φ̃_i the phase of beam i; conjugated beams (k_i < 0) carry −φ̄, so S = Σ k_i φ_i or φ̄_i.
class CombinedPhase {
public:
    CombinedPhase(std::vector<const Beam*> beams, std::array<double, 4> k, double t0, const Vec2& x0);
    cplx operator()(double t, const Vec2& x) const;
    PhaseDiagnostics diagnostics(double radius = 0.05, int samples = 200, double fd_step = 1e-4) const;

private:
    std::vector<const Beam*> beams_;
    std::array<double, 4> k_;
    double t0_;
    Vec2 x0_;
};

struct CubicBeams {
    std::array<Beam, 4> beams;  // beam 0 is the receiver v₀
    std::array<double, 4> amp_at_p{};
    std::array<cplx, 4> amp_p{};
};

struct CubicOptions {
    std::vector<double> sigmas{48, 64, 80, 96};
    double eps = 0.05;
    double kappa = 0.0;         // transverse Im H at the waist; <= 0: 1/(2τ_p) per beam
    double chart_eps = 0.5;
    double delta_prime = 0.45;
    double phase_radius = 0.05;
    double max_fit_residual = 0.1;  // relative to max |scaled|
    double abs_floor = 1e-8;
    double step = 1e-3;             // geodesic sampling
    // stationary-phase corrections come in integer powers of 1/σ
    ExtrapolationModel model = ExtrapolationModel::integer;
};

// Beams along the four quadruple directions, focused at p, frequencies σ|k_i|, conjugated for k_i < 0.
CubicBeams cubic_beams(const Metric& metric, const ConeQuadruple& quad, double sigma, double T,
                       const CubicOptions& opt);

struct CubicResult {
    std::vector<double> sigmas;
    std::vector<cplx> pairings;
    std::vector<cplx> scaled;  // σ^{(n+1)/2} P det(−i Hess S)^{1/2} / Π a_i(p)
    cplx limit = 0.0;
    double fit_residual = 0.0;
    PhaseDiagnostics phase;
    cplx calibration = 0.0;    // constant c with scaled → c·m(p)
    double m_hat = 0.0;
};

// Raw scaled limit at p; recover_cubic divides by a calibration constant.
CubicResult cubic_probe(const DtNOracle& oracle, const ConeQuadruple& quad, const CubicOptions& opt);
// Calibration constant from a run with known m at p.
cplx calibrate_cubic(const CubicResult& reference, double m_known);
CubicResult recover_cubic(const DtNOracle& oracle, const ConeQuadruple& quad, cplx calibration,
                          const CubicOptions& opt);

// ---------------------------------------------------------------- report

struct Report {
    std::string kind;
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<std::pair<std::string, std::string>> provenance;

    void add(const std::string& key, double v) { metrics.emplace_back(key, v); }
    void note(const std::string& key, const std::string& v) { provenance.emplace_back(key, v); }
    std::string to_json() const;
};

// Probe table rows (ray_id, sigma, value_re, value_im).
std::string probe_table_csv(const std::vector<ProbeResult>& probes);

}  // namespace beamtomo
