#include "beamtomo/recon.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace beamtomo {

namespace {

void require_spd(const RMat& P, const char* what) {
    if (P.rows() == 0 || P.rows() != P.cols()) throw PreconditionError("recon", std::string(what) + " must be square");
    if ((P - P.transpose()).norm() > 1e-12 * (1.0 + P.norm()))
        throw PreconditionError("recon", std::string(what) + " must be symmetric");
    Eigen::LLT<RMat> llt(P);
    if (llt.info() != Eigen::Success) throw PreconditionError("recon", std::string(what) + " must be positive definite");
}

std::vector<double> simpson_weights(int m, double h) {
    if (m % 2 == 0) ++m;
    std::vector<double> w(m, 2.0 * h / 3.0);
    for (int i = 1; i < m; i += 2) w[i] = 4.0 * h / 3.0;
    w.front() = w.back() = h / 3.0;
    return w;
}

// Tensor Simpson rule on [−L, L]^n; body(x, weight).
template <class F>
void tensor_simpson(int n, double L, int m, F&& body) {
    if (m % 2 == 0) ++m;
    const double h = 2.0 * L / (m - 1);
    const auto w = simpson_weights(m, h);
    std::vector<int> idx(n, 0);
    Eigen::VectorXd x(n);
    while (true) {
        double wt = 1.0;
        for (int d = 0; d < n; ++d) {
            x[d] = -L + idx[d] * h;
            wt *= w[idx[d]];
        }
        body(x, wt);
        int d = 0;
        while (d < n && ++idx[d] == m) idx[d++] = 0;
        if (d == n) break;
    }
}

// Least squares in the columns of X; returns coefficients and RMS misfit.
Eigen::VectorXd lsq(const RMat& X, const Eigen::VectorXd& y, double& rms) {
    Eigen::VectorXd scale = X.colwise().norm().transpose();
    for (int j = 0; j < scale.size(); ++j)
        if (scale[j] == 0.0) scale[j] = 1.0;
    const RMat Xs = X * scale.cwiseInverse().asDiagonal();
    Eigen::VectorXd c = Xs.colPivHouseholderQr().solve(y);
    c = c.cwiseQuotient(scale);
    rms = std::sqrt((X * c - y).squaredNorm() / double(y.size()));
    return c;
}

// Dirichlet data of a beam, ramped to zero over the first levels so it is compatible with zero initial data.
BoundaryData<cplx> beam_data(const Beam& beam, const Grid& grid, double ramp) {
    BoundaryData<cplx> d = beam.boundary_data(grid);
    for (std::size_t k = 0; k < d.levels; ++k) {
        const double t = grid.t(static_cast<int>(k)) - grid.t0();
        if (t >= ramp) break;
        const double w = smooth_step(t / ramp);
        for (std::size_t i = 0; i < d.slots; ++i) d(k, i) *= w;
    }
    return d;
}

double ramp_length(const Grid& grid) { return std::max(0.05, 4.0 * grid.dt()); }

const char* mode_name(ProbeMode m) { return m == ProbeMode::damping ? "damping" : "potential"; }

}  // namespace

// ---------------------------------------------------------------- Gaussian limits

double gaussian_integral(const RMat& P, const Profile1& eta, double support, double sigma, int nodes) {
    require_spd(P, "P");
    if (!(sigma > 0) || !(support > 0)) throw PreconditionError("recon", "sigma and support must be positive");
    const int n = static_cast<int>(P.rows());
    if (n > 3) throw PreconditionError("recon", "gaussian_integral supports n <= 3");
    if (nodes <= 0) {
        // resolve the Gaussian width 1/sqrt(4σλ_max) with ~12 nodes
        const double lmax = Eigen::SelfAdjointEigenSolver<RMat>(P).eigenvalues().maxCoeff();
        const double width = 1.0 / std::sqrt(4.0 * sigma * lmax);
        nodes = std::clamp(static_cast<int>(std::ceil(24.0 * support / width)) | 1, 201, n == 1 ? 20001 : 801);
    }
    double acc = 0.0;
    tensor_simpson(n, support, nodes, [&](const Eigen::VectorXd& x, double w) {
        const double e = -2.0 * sigma * x.dot(P * x);
        if (e > -745.0) acc += w * eta(x) * std::exp(e);
    });
    return std::pow(sigma, 0.5 * n) * acc;
}

GaussianLimit gaussian_limit(const RMat& P, const Profile1& eta, double support, const std::vector<double>& sigmas) {
    require_spd(P, "P");
    if (sigmas.size() < 2) throw PreconditionError("recon", "gaussian_limit needs at least two sigmas");
    const int n = static_cast<int>(P.rows());
    GaussianLimit out;
    out.sigmas = sigmas;
    for (double s : sigmas) out.values.push_back(gaussian_integral(P, eta, support, s));
    const int m = static_cast<int>(sigmas.size());
    const int terms = m >= 3 ? 3 : 2;
    RMat X(m, terms);
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = 1.0 / sigmas[i];
        if (terms == 3) X(i, 2) = 1.0 / (sigmas[i] * sigmas[i]);
        y[i] = out.values[i];
    }
    double rms = 0.0;
    out.limit = lsq(X, y, rms)[0];
    out.closed_form = std::pow(kPi / 2.0, 0.5 * n) / std::sqrt(P.determinant()) * eta(Eigen::VectorXd::Zero(n));
    return out;
}

double gaussian_fourier(const RMat& P, const Eigen::VectorXd& xi) {
    require_spd(P, "P");
    const int n = static_cast<int>(P.rows());
    if (xi.size() != n) throw PreconditionError("recon", "xi has the wrong dimension");
    const Eigen::VectorXd y = P.llt().solve(xi);
    return std::pow(2.0 * kPi, 0.5 * n) / std::sqrt(P.determinant()) * std::exp(-0.5 * xi.dot(y));
}

cplx gaussian_fourier_quadrature(const RMat& P, const Eigen::VectorXd& xi, double half_width, int nodes) {
    require_spd(P, "P");
    const int n = static_cast<int>(P.rows());
    if (xi.size() != n) throw PreconditionError("recon", "xi has the wrong dimension");
    cplx acc = 0.0;
    tensor_simpson(n, half_width, nodes, [&](const Eigen::VectorXd& x, double w) {
        acc += w * std::exp(cplx(-0.5 * x.dot(P * x), -xi.dot(x)));
    });
    return acc;
}

// ---------------------------------------------------------------- σ-extrapolation

Extrapolation extrapolate(const std::vector<double>& sigmas, const std::vector<double>& values,
                          ExtrapolationModel model) {
    if (sigmas.size() != values.size()) throw PreconditionError("recon", "sigma and value lists differ in length");
    if (sigmas.size() < 4) throw PreconditionError("recon", "extrapolation needs at least four sigma values");
    const int m = static_cast<int>(sigmas.size());
    RMat X(m, 3);
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
        if (!(sigmas[i] > 0)) throw PreconditionError("recon", "sigma values must be positive");
        if (!std::isfinite(values[i])) throw NumericError("recon", "non-finite probe value");
        X(i, 0) = 1.0;
        const double u = model == ExtrapolationModel::half_power ? 1.0 / std::sqrt(sigmas[i]) : 1.0 / sigmas[i];
        X(i, 1) = u;
        X(i, 2) = u * u;
        y[i] = values[i];
    }
    Extrapolation e;
    const Eigen::VectorXd c = lsq(X, y, e.residual);
    e.limit = c[0];
    e.c1 = c[1];
    e.c2 = c[2];
    return e;
}

// ---------------------------------------------------------------- probes

double transverse_norm(const Beam& beam) {
    const RiccatiSolution& ric = beam.riccati();
    const int n = ric.n;
    const RMat ImH = imag_part(ric.H0);
    const double dp = beam.chart().delta_prime();
    const double sigma = beam.sigma();
    const double lmax = Eigen::SelfAdjointEigenSolver<RMat>(ImH).eigenvalues().maxCoeff();
    const double width = 1.0 / std::sqrt(4.0 * sigma * lmax);
    const int nodes = std::clamp(static_cast<int>(std::ceil(24.0 * dp / width)) | 1, 401, n == 1 ? 20001 : 801);
    double acc = 0.0;
    tensor_simpson(n, dp, nodes, [&](const Eigen::VectorXd& z, double w) {
        const double chi = smooth_cutoff(z.norm() / dp);
        if (chi == 0.0) return;
        acc += w * chi * chi * std::exp(-2.0 * sigma * z.dot(ImH * z));
    });
    const double pn = beam.p_norm();
    return pn * pn * acc / std::abs(ric.det_Y(ric.s));
}

double probe_value(cplx pairing, const Beam& adjoint, ProbeMode mode) {
    const double N = transverse_norm(adjoint);
    if (mode == ProbeMode::damping) return -kSqrt2 * (pairing / cplx(0.0, adjoint.sigma())).real() / N;
    return pairing.real() / N;
}

double invert_damping_identity(double weighted) {
    const double arg = 1.0 - weighted / (2.0 * kSqrt2);
    if (!(arg > 0.0)) {
        std::ostringstream os;
        os << "exponential identity has log argument " << arg << " (weighted integral " << weighted
           << "); probe noise too large";
        throw IdentityViolation("recon", os.str());
    }
    return -2.0 * kSqrt2 * std::log(arg);
}

ProbeResult beam_probe(const std::vector<BoundaryTrace<cplx>>& trace_diffs, const std::vector<Beam>& adjoint_beams,
                       const Grid& grid, ProbeMode mode, int ray_id, const ProbeOptions& opt) {
    if (trace_diffs.size() != adjoint_beams.size())
        throw PreconditionError("recon", "one trace difference per adjoint beam is required");
    ProbeResult r;
    r.ray_id = ray_id;
    r.mode = mode;
    for (std::size_t i = 0; i < adjoint_beams.size(); ++i) {
        const Beam& v = adjoint_beams[i];
        const cplx P = pair_traces(grid, trace_diffs[i], v.on_samples(grid));
        r.sigmas.push_back(v.sigma());
        r.pairings.push_back(P);
        r.values.push_back(probe_value(P, v, mode));
    }
    r.fit = extrapolate(r.sigmas, r.values);
    double vmax = 0.0;
    for (double v : r.values) vmax = std::max(vmax, std::abs(v));
    if (r.fit.residual > opt.max_fit_residual * vmax + opt.abs_floor) {
        std::ostringstream os;
        os << "ray " << ray_id << " (" << mode_name(mode) << "): extrapolation residual " << r.fit.residual
           << " exceeds " << opt.max_fit_residual << " of max |value| " << vmax;
        throw ProbeQualityError("recon", os.str());
    }
    r.weighted = r.fit.limit;
    r.axis_integral = mode == ProbeMode::damping ? invert_damping_identity(r.weighted) : r.weighted;
    // dz₀ = √2 dr along the axis
    r.line_integral = r.axis_integral / kSqrt2;
    return r;
}

// ---------------------------------------------------------------- recovery of b and q

std::vector<ProbeResult> probe_family(const DtNOracle& oracle1, const DtNOracle& oracle2, const RayFamily& family,
                                      ProbeMode mode, const RecoveryOptions& opt) {
    const Grid& grid = oracle2.grid();
    if (oracle1.grid().nodes() != grid.nodes() || oracle1.grid().levels() != grid.levels())
        throw PreconditionError("recon", "oracles must share a grid");
    if (opt.sigmas.size() < 4) throw PreconditionError("recon", "at least four sigma values are required");
    const Coefficient& b_ref = oracle2.spec().b;
    const int n = family.metric.dim();
    const CMat H0 = opt.H0.size() ? opt.H0 : CMat(cplx(0, 1) * CMat::Identity(n, n));
    ChartOptions copt = opt.chart;
    copt.T = grid.T();
    const double ramp = ramp_length(grid);

    const std::size_t nr = family.size(), ns = opt.sigmas.size();
    std::vector<BoundaryTrace<cplx>> diffs(nr * ns);
    std::vector<Beam> adj(nr * ns);
    std::vector<std::string> failure(nr * ns);
    parallel_for(nr * ns, [&](std::size_t job) {
        const std::size_t j = job / ns, i = job % ns;
        try {
            const FermiChart chart(family.rays[j], copt);
            const Beam fwd = make_beam(chart, H0, b_ref, opt.sigmas[i], BeamKind::forward);
            EpsStencil st;
            st.h.push_back(beam_data(fwd, grid, ramp));
            st.eps = opt.eps;
            BoundaryTrace<cplx> d = eps_derivative(oracle1, st);
            const BoundaryTrace<cplx> d2 = eps_derivative(oracle2, st);
            for (std::size_t k = 0; k < d.data.size(); ++k) d.data[k] -= d2.data[k];
            diffs[job] = std::move(d);
            adj[job] = make_beam(chart, H0, b_ref, opt.sigmas[i], BeamKind::adjoint);
        } catch (const Error& e) {
            failure[job] = e.what();
        }
    });
    for (std::size_t job = 0; job < failure.size(); ++job)
        if (!failure[job].empty())
            throw OracleError("recon", "probe of ray " + std::to_string(job / ns) + " failed: " + failure[job]);

    std::vector<ProbeResult> out(nr);
    for (std::size_t j = 0; j < nr; ++j) {
        std::vector<BoundaryTrace<cplx>> d(diffs.begin() + j * ns, diffs.begin() + (j + 1) * ns);
        std::vector<Beam> v(adj.begin() + j * ns, adj.begin() + (j + 1) * ns);
        out[j] = beam_probe(d, v, grid, mode, static_cast<int>(j), opt.probe);
    }
    return out;
}

namespace {

RecoveryResult finish_recovery(std::vector<ProbeResult> probes, const RayOperator& op, const Coefficient& reference,
                               const RecoveryOptions& opt) {
    RecoveryResult r;
    r.probes = std::move(probes);
    for (const auto& p : r.probes) r.line_integrals.push_back(p.line_integral);
    r.inversion = invert_ray_transform(op, r.line_integrals, opt.inversion);
    r.difference = r.inversion.field;
    const Grid& g = op.grid();
    r.field.resize(r.difference.size());
    for (std::size_t k = 0; k < g.levels(); ++k)
        for (std::size_t n = 0; n < g.nodes(); ++n) {
            const std::size_t c = k * g.nodes() + n;
            r.field[c] = reference(g.t(static_cast<int>(k)), g.point(n)) + r.difference[c];
        }
    return r;
}

void check_family(const RayFamily& family, const RayOperator& op) {
    if (op.rows() != family.size())
        throw PreconditionError("recon", "ray operator and family have different ray counts");
}

}  // namespace

RecoveryResult recover_b(const DtNOracle& oracle1, const DtNOracle& oracle2, const RayFamily& family,
                         const RayOperator& op, const RecoveryOptions& opt) {
    check_family(family, op);
    auto probes = probe_family(oracle1, oracle2, family, ProbeMode::damping, opt);
    return finish_recovery(std::move(probes), op, oracle2.spec().b, opt);
}

RecoveryResult recover_q(const DtNOracle& oracle1, const DtNOracle& oracle2, const RayFamily& family,
                         const RayOperator& op, const RecoveryOptions& opt) {
    check_family(family, op);
    auto probes = probe_family(oracle1, oracle2, family, ProbeMode::potential, opt);
    return finish_recovery(std::move(probes), op, oracle2.spec().q, opt);
}

// ---------------------------------------------------------------- cone quadruples

double ConeQuadruple::null_defect() const {
    double d = 0.0;
    for (const auto& z : zeta) d = std::max(d, std::abs(z[0] * z[0] - z.tail<2>().squaredNorm()));
    return d;
}

double ConeQuadruple::balance_defect() const {
    Eigen::Vector3d s = Eigen::Vector3d::Zero();
    for (int i = 0; i < 4; ++i) s += k[i] * zeta[i];
    return s.norm();
}

Vec2 ConeQuadruple::direction(int i) const {
    const Vec2 xi = zeta.at(i).tail<2>();
    return xi / xi.norm();
}

ConeQuadruple cone_quadruple(double t0, const Vec2& x0, double theta, double theta_tilde, int dim) {
    if (dim != 2) throw PreconditionError("recon", "cone quadruples need two space dimensions");
    if (!(theta >= 0.0 && theta <= 1.0)) throw PreconditionError("recon", "theta must lie in [0, 1]");
    if (!(theta_tilde > 0.0 && theta_tilde < 1.0))
        throw PreconditionError("recon", "theta_tilde must lie in (0, 1); zero makes the system degenerate");
    ConeQuadruple q;
    q.t0 = t0;
    q.x0 = x0;
    q.theta = theta;
    q.theta_tilde = theta_tilde;
    const double c = std::sqrt(1.0 - theta * theta), ct = std::sqrt(1.0 - theta_tilde * theta_tilde);
    q.zeta[0] = {1.0, -c, theta};
    q.zeta[1] = {1.0, 1.0, 0.0};
    q.zeta[2] = {1.0, ct, theta_tilde};
    q.zeta[3] = {1.0, ct, -theta_tilde};
    // fix k₂ = 1 and solve the 3×3 system for (k₀, k₁, k₃)
    Eigen::Matrix3d M;
    M.col(0) = q.zeta[0];
    M.col(1) = q.zeta[1];
    M.col(2) = q.zeta[3];
    Eigen::FullPivLU<Eigen::Matrix3d> lu(M);
    if (!lu.isInvertible()) throw PreconditionError("recon", "quadruple system is degenerate");
    const Eigen::Vector3d r = lu.solve(-q.zeta[2]);
    q.k = {r[0], r[1], 1.0, r[2]};
    return q;
}

// ---------------------------------------------------------------- combined phase

CombinedPhase::CombinedPhase(std::vector<const Beam*> beams, std::array<double, 4> k, double t0, const Vec2& x0)
    : beams_(std::move(beams)), k_(k), t0_(t0), x0_(x0) {
    if (beams_.size() != 4) throw PreconditionError("recon", "combined phase needs four beams");
    for (std::size_t i = 0; i < 4; ++i) {
        Eigen::Vector3d z;
        if (!beams_[i]->chart().to_fermi(t0, x0, z))
            throw GeometryError("recon", "p lies outside the chart of beam " + std::to_string(i));
        const double off = beams_[i]->dim() == 2 ? std::hypot(z[1], z[2]) : std::abs(z[1]);
        if (off > 1e-6) {
            std::ostringstream os;
            os << "beam " << i << " misses p by " << off << " in Fermi coordinates; geodesics are not concurrent";
            throw GeometryError("recon", os.str());
        }
    }
}

cplx CombinedPhase::operator()(double t, const Vec2& x) const {
    cplx S = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        Eigen::Vector3d z;
        if (!beams_[i]->chart().to_fermi(t, x, z))
            throw GeometryError("recon", "combined phase evaluated outside the chart of beam " + std::to_string(i));
        S += std::abs(k_[i]) * beams_[i]->phase_z(z);
    }
    return S;
}

PhaseDiagnostics CombinedPhase::diagnostics(double radius, int samples, double fd_step) const {
    PhaseDiagnostics d;
    auto S = [&](const Eigen::Vector3d& y) { return (*this)(t0_ + y[0], x0_ + Vec2(y[1], y[2])); };
    const Eigen::Vector3d o = Eigen::Vector3d::Zero();
    d.S_at_p = S(o);
    const double h = fd_step;
    Eigen::Vector3cd grad;
    for (int a = 0; a < 3; ++a) {
        const Eigen::Vector3d e = Eigen::Vector3d::Unit(a) * h;
        grad[a] = (8.0 * (S(o + e) - S(o - e)) - (S(o + 2.0 * e) - S(o - 2.0 * e))) / (12.0 * h);
    }
    d.grad_norm = grad.norm();
    // second differences with a larger step (S is quadratic to leading order)
    const double H = std::max(10.0 * h, 1e-3);
    for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) {
            const Eigen::Vector3d ea = Eigen::Vector3d::Unit(a) * H, eb = Eigen::Vector3d::Unit(b) * H;
            const cplx v = (S(o + ea + eb) - S(o + ea - eb) - S(o - ea + eb) + S(o - ea - eb)) / (4.0 * H * H);
            d.hessian(a, b) = d.hessian(b, a) = v;
        }
    const Eigen::Matrix3cd M = cplx(0, -1) * d.hessian;
    Eigen::ComplexEigenSolver<Eigen::Matrix3cd> es(M);
    d.sqrt_det = 1.0;
    for (int i = 0; i < 3; ++i) d.sqrt_det *= std::sqrt(es.eigenvalues()[i]);
    // Fibonacci points on the sphere of the given radius in (t, x, y)
    d.min_imag_ratio = std::numeric_limits<double>::infinity();
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < samples; ++i) {
        const double zc = 1.0 - 2.0 * (i + 0.5) / samples;
        const double rc = std::sqrt(std::max(0.0, 1.0 - zc * zc));
        const Eigen::Vector3d u(zc, rc * std::cos(golden * i), rc * std::sin(golden * i));
        d.min_imag_ratio = std::min(d.min_imag_ratio, S(radius * u).imag() / (radius * radius));
    }
    return d;
}

// ---------------------------------------------------------------- cubic coefficient

CubicBeams cubic_beams(const Metric& metric, const ConeQuadruple& quad, double sigma, double T,
                       const CubicOptions& opt) {
    if (metric.dim() != 2) throw PreconditionError("recon", "cubic probes need two space dimensions");
    if (!metric.domain().contains(quad.x0, -1e-9)) throw PreconditionError("recon", "p must lie inside Omega");
    CubicBeams out;
    const double cx = metric.c(quad.x0);
    for (int i = 0; i < 4; ++i) {
        const Vec2 v = quad.direction(i);
        // back to the entry point, then forward through p
        const Geodesic back = trace_geodesic(metric, quad.x0, -v / cx, opt.step);
        const GeodesicSample& e = back.samples.back();
        const double s = quad.t0 - back.tau_plus;
        if (s <= 0.0) {
            std::ostringstream os;
            os << "beam " << i << " would enter at t = " << s << "; move p later in time";
            throw PreconditionError("recon", os.str());
        }
        const NullGeodesic ray = make_null_geodesic(metric, s, e.x, -e.v, opt.step);
        ChartOptions co;
        co.eps = opt.chart_eps;
        co.delta_prime = opt.delta_prime;
        co.step = opt.step;
        co.T = T;
        const FermiChart chart(ray, co);
        Eigen::Vector3d zp;
        if (!chart.to_fermi(quad.t0, quad.x0, zp)) throw GeometryError("recon", "p is outside the beam chart");
        const double tau_p = zp[0] - chart.z0_entry();
        // waist at p: transverse H = iκ there; κ = 1/(2τ_p) makes the beam narrowest at the entry
        const double kappa = opt.kappa > 0 ? opt.kappa : 1.0 / (2.0 * tau_p);
        CMat H0 = CMat::Zero(2, 2);
        H0(0, 0) = cplx(0, 1);
        H0(1, 1) = 1.0 / cplx(-2.0 * tau_p, -1.0 / kappa);
        const RiccatiSolution ric = solve_riccati(chart, H0);
        const auto bax = sample_on_axis(chart, ric.z0, Coefficient::none());
        // receiver solves the adjoint equation, inputs the forward one
        const Amplitude amp = transport_amplitude(ric, bax, i == 0 ? 1 : -1);
        const double k = quad.k[i];
        out.beams[i] = assemble_beam(chart, ric, amp, sigma * std::abs(k), false, k < 0);
        out.amp_p[i] = out.beams[i].amplitude_z(zp);
        out.amp_at_p[i] = std::abs(out.amp_p[i]);
    }
    return out;
}

CubicResult cubic_probe(const DtNOracle& oracle, const ConeQuadruple& quad, const CubicOptions& opt) {
    const SemilinearSpec& spec = oracle.spec();
    const Grid& grid = oracle.grid();
    if (opt.sigmas.size() < 4) throw PreconditionError("recon", "at least four sigma values are required");
    if (spec.extra) throw PreconditionError("recon", "cubic probes need a polynomial nonlinearity");
    if (!spec.b.zero) {
        // the adjoint beams above use b = 0 transport
        throw PreconditionError("recon", "cubic probes assume b = 0 after the damping step");
    }
    const double ramp = ramp_length(grid);
    CubicResult r;
    for (std::size_t si = 0; si < opt.sigmas.size(); ++si) {
        const double sigma = opt.sigmas[si];
        const CubicBeams cb = cubic_beams(spec.metric, quad, sigma, grid.T(), opt);
        if (si == 0) {
            CombinedPhase S({&cb.beams[0], &cb.beams[1], &cb.beams[2], &cb.beams[3]}, quad.k, quad.t0, quad.x0);
            r.phase = S.diagnostics(opt.phase_radius);
        }
        EpsStencil st;
        st.eps = opt.eps;
        for (int i = 1; i <= 3; ++i) st.h.push_back(beam_data(cb.beams[i], grid, ramp));
        BoundaryTrace<cplx> d3 = eps_derivative(oracle, st);
        if (!spec.f2.zero) {
            // known f2 interaction terms
            SemilinearSpec s2 = spec;
            s2.f3 = Coefficient::none();
            const BoundaryTrace<cplx> corr = third_linearization(s2, grid, st.h);
            for (std::size_t k = 0; k < d3.data.size(); ++k) d3.data[k] -= corr.data[k];
        }
        const cplx P = pair_traces(grid, d3, cb.beams[0].on_samples(grid));
        cplx amp = 1.0;
        for (const cplx& a : cb.amp_p) amp *= a;
        r.sigmas.push_back(sigma);
        r.pairings.push_back(P);
        r.scaled.push_back(std::pow(sigma, 1.5) * P * r.phase.sqrt_det / amp);
    }
    std::vector<double> re, im;
    double vmax = 0.0;
    for (const cplx& v : r.scaled) {
        re.push_back(v.real());
        im.push_back(v.imag());
        vmax = std::max(vmax, std::abs(v));
    }
    const Extrapolation fr = extrapolate(r.sigmas, re, opt.model), fi = extrapolate(r.sigmas, im, opt.model);
    r.limit = cplx(fr.limit, fi.limit);
    r.fit_residual = std::hypot(fr.residual, fi.residual);
    if (r.fit_residual > opt.max_fit_residual * vmax + opt.abs_floor) {
        std::ostringstream os;
        os << "cubic probe extrapolation residual " << r.fit_residual << " exceeds " << opt.max_fit_residual
           << " of max |scaled| " << vmax;
        throw ProbeQualityError("recon", os.str());
    }
    return r;
}

cplx calibrate_cubic(const CubicResult& reference, double m_known) {
    if (m_known == 0.0) throw ConfigError("recon", "calibration needs a non-zero known coefficient");
    const cplx c = reference.limit / m_known;
    if (std::abs(c) == 0.0) throw ConfigError("recon", "calibration run produced a zero limit");
    return c;
}

CubicResult recover_cubic(const DtNOracle& oracle, const ConeQuadruple& quad, cplx calibration,
                          const CubicOptions& opt) {
    if (std::abs(calibration) == 0.0) throw ConfigError("recon", "cubic recovery requires a calibration constant");
    CubicResult r = cubic_probe(oracle, quad, opt);
    r.calibration = calibration;
    r.m_hat = (r.limit / calibration).real();
    return r;
}

// ---------------------------------------------------------------- report

std::string Report::to_json() const {
    nlohmann::ordered_json j;
    j["kind"] = kind;
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    for (const auto& [k, v] : metrics) m[k] = std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json();
    j["metrics"] = m;
    nlohmann::ordered_json p = nlohmann::ordered_json::object();
    for (const auto& [k, v] : provenance) p[k] = v;
    j["provenance"] = p;
    return j.dump(2);
}

std::string probe_table_csv(const std::vector<ProbeResult>& probes) {
    std::ostringstream os;
    os << std::setprecision(17) << "ray_id,sigma,value_re,value_im\n";
    for (const auto& p : probes)
        for (std::size_t i = 0; i < p.sigmas.size(); ++i)
            os << p.ray_id << "," << p.sigmas[i] << "," << p.pairings[i].real() << "," << p.pairings[i].imag() << "\n";
    return os.str();
}

}  // namespace beamtomo
