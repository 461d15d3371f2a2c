#include "beamtomo/beams.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace beamtomo {

RMat imag_part(const CMat& H) {
    RMat M = H.imag();
    return 0.5 * (M + M.transpose());
}

double min_eig(const RMat& M) {
    if (M.rows() == 1) return M(0, 0);
    Eigen::SelfAdjointEigenSolver<RMat> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

namespace {

// ¼ ∂²ḡ¹¹/∂z_i∂z_j on the axis, fourth-order differences.
RMat coefficient_B(const FermiChart& chart, double z0, double h) {
    const int n = chart.dim();
    RMat B = RMat::Zero(n, n);
    if (chart.flat()) return B;
    static const double off[4] = {-2, -1, 1, 2};
    static const double w1[4] = {1, -8, 8, -1};
    auto g = [&](double a, double b) {
        Eigen::Vector3d z(z0, 0, 0);
        z[1] += a;
        if (n == 2) z[2] += b;
        return chart.inverse_g11(z);
    };
    const double g0 = g(0, 0);
    for (int i = 0; i < n; ++i) {
        auto gi = [&](double d) { return i == 0 ? g(d, 0) : g(0, d); };
        B(i, i) = (-gi(2 * h) + 16 * gi(h) - 30 * g0 + 16 * gi(-h) - gi(-2 * h)) / (12 * h * h);
    }
    if (n == 2) {
        double acc = 0.0;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) acc += w1[a] * w1[b] * g(off[a] * h, off[b] * h);
        B(0, 1) = B(1, 0) = acc / (144 * h * h);
    }
    return 0.25 * B;
}

}  // namespace

std::size_t RiccatiSolution::segment(double z) const {
    if (z <= z0.front()) return 0;
    if (z >= z0.back()) return z0.size() - 2;
    const auto it = std::upper_bound(z0.begin(), z0.end(), z);
    return static_cast<std::size_t>(it - z0.begin()) - 1;
}

void RiccatiSolution::interpolate(double z, CMat& Yz, CMat& Zz) const {
    const std::size_t i = segment(z);
    const double h = z0[i + 1] - z0[i];
    const double u = std::clamp((z - z0[i]) / h, 0.0, 1.0);
    const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
    const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
    const CMat dY0 = A.cast<cplx>() * Z[i], dY1 = A.cast<cplx>() * Z[i + 1];
    const CMat dZ0 = -B[i].cast<cplx>() * Y[i], dZ1 = -B[i + 1].cast<cplx>() * Y[i + 1];
    Yz = h00 * Y[i] + h10 * h * dY0 + h01 * Y[i + 1] + h11 * h * dY1;
    Zz = h00 * Z[i] + h10 * h * dZ0 + h01 * Z[i + 1] + h11 * h * dZ1;
}

CMat RiccatiSolution::H_at(double z) const {
    CMat Yz, Zz;
    interpolate(z, Yz, Zz);
    return Zz * Yz.inverse();
}

cplx RiccatiSolution::det_Y(double z) const {
    CMat Yz, Zz;
    interpolate(z, Yz, Zz);
    return Yz.determinant();
}

double RiccatiSolution::conservation_error() const {
    const double ref = imag_part(H0).determinant();
    double worst = 0.0;
    for (std::size_t i = 0; i < z0.size(); ++i) {
        const double v = imag_part(H[i]).determinant() * std::norm(Y[i].determinant());
        worst = std::max(worst, std::abs(v - ref) / std::abs(ref));
    }
    return worst;
}

double RiccatiSolution::symmetry_error() const {
    double worst = 0.0;
    for (const CMat& h : H) worst = std::max(worst, (h - h.transpose()).norm());
    return worst;
}

double RiccatiSolution::min_imag_eig() const {
    double m = std::numeric_limits<double>::infinity();
    for (const CMat& h : H) m = std::min(m, min_eig(imag_part(h)));
    return m;
}

RiccatiSolution solve_riccati(const FermiChart& chart, const CMat& H0, const RiccatiOptions& opt) {
    const int n = chart.dim();
    if (H0.rows() != n || H0.cols() != n) throw PreconditionError("beams", "H0 must be n x n");
    if ((H0 - H0.transpose()).norm() > 1e-12) throw PreconditionError("beams", "H0 must be symmetric");
    if (!(min_eig(imag_part(H0)) > 0)) throw PreconditionError("beams", "Im H0 must be positive definite");

    RiccatiSolution r;
    r.n = n;
    r.s = chart.z0_entry();
    r.H0 = H0;
    r.A = RMat::Zero(n, n);
    for (int i = 1; i < n; ++i) r.A(i, i) = 2.0;

    const double lo = chart.a0(), hi = chart.b0();
    const int m1 = std::max(1, static_cast<int>(std::ceil((r.s - lo) / opt.step)));
    const int m2 = std::max(1, static_cast<int>(std::ceil((hi - r.s) / opt.step)));
    const double h1 = (r.s - lo) / m1, h2 = (hi - r.s) / m2;
    const std::size_t N = m1 + m2 + 1;
    r.z0.resize(N);
    for (int i = 0; i <= m1; ++i) r.z0[i] = lo + i * h1;
    for (int i = 1; i <= m2; ++i) r.z0[m1 + i] = r.s + i * h2;
    r.z0[m1] = r.s;
    r.Y.resize(N);
    r.Z.resize(N);
    r.H.resize(N);
    r.B.resize(N);

    const CMat Ac = r.A.cast<cplx>();
    auto Bc = [&](double z) { return coefficient_B(chart, z, opt.fd_step).cast<cplx>().eval(); };
    auto rk4 = [&](CMat& Y, CMat& Z, double z, double h) {
        const CMat B0 = Bc(z), Bm = Bc(z + 0.5 * h), B1 = Bc(z + h);
        const CMat k1y = Ac * Z, k1z = -B0 * Y;
        const CMat k2y = Ac * (Z + 0.5 * h * k1z), k2z = -Bm * (Y + 0.5 * h * k1y);
        const CMat k3y = Ac * (Z + 0.5 * h * k2z), k3z = -Bm * (Y + 0.5 * h * k2y);
        const CMat k4y = Ac * (Z + h * k3z), k4z = -B1 * (Y + h * k3y);
        Y += h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y);
        Z += h / 6 * (k1z + 2 * k2z + 2 * k3z + k4z);
    };

    r.Y[m1] = CMat::Identity(n, n);
    r.Z[m1] = H0;
    {
        CMat Y = r.Y[m1], Z = r.Z[m1];
        for (int i = 1; i <= m2; ++i) {
            rk4(Y, Z, r.z0[m1 + i - 1], h2);
            r.Y[m1 + i] = Y;
            r.Z[m1 + i] = Z;
        }
    }
    {
        CMat Y = r.Y[m1], Z = r.Z[m1];
        for (int i = m1 - 1; i >= 0; --i) {
            rk4(Y, Z, r.z0[i + 1], -h1);
            r.Y[i] = Y;
            r.Z[i] = Z;
        }
    }
    for (std::size_t i = 0; i < N; ++i) {
        r.B[i] = coefficient_B(chart, r.z0[i], opt.fd_step);
        const cplx d = r.Y[i].determinant();
        if (std::abs(d) < 1e-12) {
            std::ostringstream os;
            os << "det Y vanishes at z0 = " << r.z0[i];
            throw DegeneracyError("beams", os.str());
        }
        r.H[i] = r.Z[i] * r.Y[i].inverse();
        if (!(min_eig(imag_part(r.H[i])) > 0)) {
            std::ostringstream os;
            os << "Im H lost positivity at z0 = " << r.z0[i] << "; reduce the step";
            throw StepSizeError("beams", os.str());
        }
    }
    return r;
}

// ---------------------------------------------------------------- amplitude

std::vector<double> sample_on_axis(const FermiChart& chart, const std::vector<double>& z0, const Coefficient& c) {
    std::vector<double> out(z0.size(), 0.0);
    if (c.zero) return out;
    for (std::size_t i = 0; i < z0.size(); ++i) {
        double t;
        Vec2 x;
        chart.axis_point(z0[i], t, x);
        out[i] = c(t, x);
    }
    return out;
}

Amplitude transport_amplitude(const RiccatiSolution& ric, const std::vector<double>& b_axis, int sign) {
    const std::size_t N = ric.z0.size();
    if (b_axis.size() != N) throw PreconditionError("beams", "b must be sampled on the Riccati grid");
    if (sign != 1 && sign != -1) throw PreconditionError("beams", "sign must be +1 or -1");
    Amplitude amp;
    amp.sign = sign;
    amp.z0 = ric.z0;
    amp.b = b_axis;
    amp.sqrt_det_Y.resize(N);
    amp.integral.assign(N, 0.0);
    amp.a.resize(N);

    std::size_t is = 0;
    while (is + 1 < N && ric.z0[is] < ric.s) ++is;
    // branch of √det Y by continuity from the value 1 at s
    amp.sqrt_det_Y[is] = std::sqrt(ric.Y[is].determinant());
    auto track = [&](std::size_t from, std::size_t to) {
        const cplx prev = amp.sqrt_det_Y[from];
        const cplx d = ric.Y[to].determinant();
        const double jump = std::abs(std::arg(d / (prev * prev)));
        if (jump > kPi / 2) throw ResolutionError("beams", "det Y winds too fast for the z0 grid");
        cplx r = std::sqrt(d);
        if (std::abs(r - prev) > std::abs(-r - prev)) r = -r;
        amp.sqrt_det_Y[to] = r;
    };
    for (std::size_t i = is + 1; i < N; ++i) track(i - 1, i);
    for (std::size_t i = is; i-- > 0;) track(i + 1, i);

    // ∫_s^{z₀} b, fourth-order on uniform stretches, trapezoid at the ends
    auto seg = [&](std::size_t i) {
        const double h = ric.z0[i + 1] - ric.z0[i];
        auto uni = [&](std::size_t j) { return std::abs(ric.z0[j + 1] - ric.z0[j] - h) < 1e-12; };
        if (i >= 1 && i + 2 < N && uni(i - 1) && uni(i + 1))
            return h / 24 * (-b_axis[i - 1] + 13 * b_axis[i] + 13 * b_axis[i + 1] - b_axis[i + 2]);
        return 0.5 * h * (b_axis[i] + b_axis[i + 1]);
    };
    for (std::size_t i = is + 1; i < N; ++i) amp.integral[i] = amp.integral[i - 1] + seg(i - 1);
    for (std::size_t i = is; i-- > 0;) amp.integral[i] = amp.integral[i + 1] - seg(i);
    const double c = sign / (2.0 * kSqrt2);
    for (std::size_t i = 0; i < N; ++i) amp.a[i] = std::exp(c * amp.integral[i]) / amp.sqrt_det_Y[i];

    // on-axis transport residual 2a' + [Tr(AH) − sign·b/√2] a with fourth-order differences
    double worst = 0.0;
    for (std::size_t i = 2; i + 2 < N; ++i) {
        const double h = ric.z0[i + 1] - ric.z0[i];
        if (std::abs(ric.z0[i] - ric.z0[i - 1] - h) > 1e-12 || std::abs(ric.z0[i + 2] - ric.z0[i + 1] - h) > 1e-12 ||
            std::abs(ric.z0[i - 1] - ric.z0[i - 2] - h) > 1e-12)
            continue;
        const cplx da = (-amp.a[i + 2] + 8.0 * amp.a[i + 1] - 8.0 * amp.a[i - 1] + amp.a[i - 2]) / (12 * h);
        const cplx trAH = (ric.A.cast<cplx>() * ric.H[i]).trace();
        const cplx res = 2.0 * da + (trAH - sign * b_axis[i] / kSqrt2) * amp.a[i];
        worst = std::max(worst, std::abs(res));
    }
    amp.transport_residual = worst;
    return amp;
}

cplx Amplitude::at(double z, const RiccatiSolution& ric) const {
    const std::size_t i = ric.segment(z);
    const double h = z0[i + 1] - z0[i];
    const double u = std::clamp((z - z0[i]) / h, 0.0, 1.0);
    const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
    const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
    const double I = h00 * integral[i] + h10 * h * b[i] + h01 * integral[i + 1] + h11 * h * b[i + 1];
    const cplx d = ric.det_Y(z);
    cplx r = std::sqrt(d);
    const cplx ref = u < 0.5 ? sqrt_det_Y[i] : sqrt_det_Y[i + 1];
    if (std::abs(r - ref) > std::abs(-r - ref)) r = -r;
    return std::exp(sign / (2.0 * kSqrt2) * I) / r;
}

// ---------------------------------------------------------------- beam

Beam::Beam(FermiChart chart, RiccatiSolution ric, Amplitude amp, double sigma, bool normalize, bool conjugate)
    : chart_(std::move(chart)),
      ric_(std::move(ric)),
      amp_(std::move(amp)),
      sigma_(sigma),
      p_norm_(normalize ? std::pow(sigma, chart_.dim() / 4.0) : 1.0),
      conjugate_(conjugate) {
    if (!(sigma > 0)) throw PreconditionError("beams", "sigma must be positive");
}

Beam assemble_beam(const FermiChart& chart, const RiccatiSolution& ric, const Amplitude& amp, double sigma,
                   bool normalize, bool conjugate) {
    return Beam(chart, ric, amp, sigma, normalize, conjugate);
}

Beam make_beam(const FermiChart& chart, const CMat& H0, const Coefficient& b, double sigma, BeamKind kind,
               bool normalize, const RiccatiOptions& ropt) {
    RiccatiSolution ric = solve_riccati(chart, H0, ropt);
    const auto bax = sample_on_axis(chart, ric.z0, b);
    // forward beams decay along the ray for b > 0; the adjoint beam carries the opposite sign
    Amplitude amp = transport_amplitude(ric, bax, kind == BeamKind::forward ? -1 : 1);
    return Beam(chart, std::move(ric), std::move(amp), sigma, normalize, kind == BeamKind::adjoint);
}

cplx Beam::phase_z(const Eigen::Vector3d& z) const {
    const int n = dim();
    const CMat H = ric_.H_at(z[0]);
    Eigen::VectorXcd zp(n);
    for (int i = 0; i < n; ++i) zp[i] = z[1 + i];
    const cplx phi = z[1] + (zp.transpose() * H * zp)(0, 0);
    return conjugate_ ? -std::conj(phi) : phi;
}

cplx Beam::amplitude_z(const Eigen::Vector3d& z) const {
    if (z[0] < chart_.a0() || z[0] > chart_.b0()) return 0.0;
    const double r = dim() == 2 ? std::hypot(z[1], z[2]) : std::abs(z[1]);
    const double chi = smooth_cutoff(r / chart_.delta_prime());
    if (chi == 0.0) return 0.0;
    const cplx a = p_norm_ * chi * amp_.at(z[0], ric_);
    return conjugate_ ? std::conj(a) : a;
}

cplx Beam::value_z(const Eigen::Vector3d& z) const {
    const cplx A = amplitude_z(z);
    if (A == 0.0) return 0.0;
    return A * std::exp(cplx(0, sigma_) * phase_z(z));
}

bool Beam::phase_amplitude(double t, const Vec2& x, cplx& phase, cplx& amp) const {
    Eigen::Vector3d z;
    if (!chart_.to_fermi(t, x, z)) return false;
    amp = amplitude_z(z);
    phase = phase_z(z);
    return true;
}

cplx Beam::operator()(double t, const Vec2& x) const {
    Eigen::Vector3d z;
    if (!chart_.to_fermi(t, x, z)) return 0.0;
    return value_z(z);
}

BoundaryData<cplx> Beam::boundary_data(const Grid& grid) const {
    const auto& bn = grid.boundary_nodes();
    BoundaryData<cplx> d(bn.size(), grid.levels());
    parallel_for(grid.levels(), [&](std::size_t k) {
        const double t = grid.t(static_cast<int>(k));
        for (std::size_t i = 0; i < bn.size(); ++i) d(k, i) = (*this)(t, grid.point(bn[i]));
    });
    return d;
}

BoundaryTable<cplx> Beam::on_samples(const Grid& grid) const {
    const auto& smp = grid.boundary_samples();
    BoundaryTable<cplx> d(smp.size(), grid.levels());
    parallel_for(grid.levels(), [&](std::size_t k) {
        const double t = grid.t(static_cast<int>(k));
        for (std::size_t i = 0; i < smp.size(); ++i) d(k, i) = (*this)(t, grid.point(smp[i].node));
    });
    return d;
}

CField Beam::sample(const Grid& grid) const {
    CField f(grid, conjugate_ ? "adjoint_beam" : "beam");
    parallel_for(grid.levels(), [&](std::size_t k) {
        const double t = grid.t(static_cast<int>(k));
        cplx* row = f.level(k);
        for (std::size_t n = 0; n < grid.nodes(); ++n) row[n] = (*this)(t, grid.point(n));
    });
    return f;
}

// ---------------------------------------------------------------- residual

namespace {

struct Jet {
    cplx f, ft, ftt;
    cplx fx[2], fxx[2];
};

// Fourth-order central differences of a function of (t, x).
template <class F>
Jet jet(const F& f, double t, const Vec2& x, int n, double h) {
    Jet j{};
    j.f = f(t, x);
    auto d1 = [&](auto g) { return (-g(2 * h) + 8.0 * g(h) - 8.0 * g(-h) + g(-2 * h)) / (12 * h); };
    auto d2 = [&](auto g) { return (-g(2 * h) + 16.0 * g(h) - 30.0 * j.f + 16.0 * g(-h) - g(-2 * h)) / (12 * h * h); };
    auto gt = [&](double d) { return f(t + d, x); };
    j.ft = d1(gt);
    j.ftt = d2(gt);
    for (int k = 0; k < n; ++k) {
        auto gx = [&](double d) {
            Vec2 y = x;
            y[k] += d;
            return f(t, y);
        };
        j.fx[k] = d1(gx);
        j.fxx[k] = d2(gx);
    }
    return j;
}

}  // namespace

ResidualReport beam_residual(const Beam& beam, const Coefficient& b, const Coefficient& q, const Grid& grid,
                             const ResidualOptions& opt) {
    const double width = 1.0 / std::sqrt(beam.sigma());
    if (opt.check_resolution && (grid.h() > width / 8 + 1e-15 || grid.dt() > width / 8 + 1e-15)) {
        std::ostringstream os;
        os << "grid step " << std::max(grid.h(), grid.dt()) << " does not resolve the beam width " << width
           << " (need h <= sigma^-1/2 / 8)";
        throw ResolutionError("beams", os.str());
    }
    const FermiChart& chart = beam.chart();
    const Metric& m = chart.metric();
    const int n = beam.dim();
    const double sig = beam.sigma();
    const double hf = opt.fd_step;

    auto phase = [&](double t, const Vec2& x) -> cplx {
        Eigen::Vector3d z;
        return chart.to_fermi(t, x, z) ? beam.phase_z(z) : cplx(0.0);
    };
    auto ampl = [&](double t, const Vec2& x) -> cplx {
        Eigen::Vector3d z;
        return chart.to_fermi(t, x, z) ? beam.amplitude_z(z) : cplx(0.0);
    };
    // 𝓛(Ae^{iσφ}) = e^{iσφ}[𝓛A + iσ(2φ_tA_t − 2⟨DA,Dφ⟩ + (φ_tt − Δφ + bφ_t)A) + σ²(|Dφ|² − φ_t²)A]
    auto bracket = [&](double t, const Vec2& x, cplx& eik, cplx& tr) -> cplx {
        const Jet P = jet(phase, t, x, n, hf);
        const Jet A = jet(ampl, t, x, n, hf);
        const double ci = m.flat() ? 1.0 : 1.0 / std::pow(m.c(x), 2);
        cplx lapP = 0, lapA = 0, gPA = 0, gPP = 0;
        for (int k = 0; k < n; ++k) {
            lapP += P.fxx[k];
            lapA += A.fxx[k];
            gPA += P.fx[k] * A.fx[k];
            gPP += P.fx[k] * P.fx[k];
        }
        lapP *= ci;
        lapA *= ci;
        gPA *= ci;
        gPP *= ci;
        const double bv = b(t, x), qv = q(t, x);
        eik = gPP - P.ft * P.ft;
        tr = 2.0 * P.ft * A.ft - 2.0 * gPA + (P.ftt - lapP + bv * P.ft) * A.f;
        const cplx LA = A.ftt - lapA + bv * A.ft + qv * A.f;
        return LA + cplx(0, sig) * tr + sig * sig * eik * A.f;
    };

    ResidualReport rep;
    std::vector<double> res_lvl(grid.levels(), 0.0), u_lvl(grid.levels(), 0.0);
    std::vector<std::size_t> cnt(grid.levels(), 0);
    // t = (z₀ − z₁)/√2 bounds the tube in time
    const double t_lo = (chart.a0() - chart.delta_prime()) / kSqrt2 - grid.dt();
    const double t_hi = (chart.b0() + chart.delta_prime()) / kSqrt2 + grid.dt();
    parallel_for(grid.levels(), [&](std::size_t k) {
        const double t = grid.t(static_cast<int>(k));
        if (t < t_lo || t > t_hi) return;
        for (std::size_t node = 0; node < grid.nodes(); ++node) {
            const Vec2 x = grid.point(node);
            Eigen::Vector3d z;
            if (!chart.to_fermi(t, x, z)) continue;
            if (opt.core_only && std::hypot(z[1], n == 2 ? z[2] : 0.0) > 0.5 * chart.delta_prime()) continue;
            const cplx A = beam.amplitude_z(z);
            if (A == 0.0) continue;
            const cplx e = std::exp(cplx(0, sig) * beam.phase_z(z));
            cplx eik, tr;
            const cplx r = e * bracket(t, x, eik, tr);
            const double w = grid.cell_weight(node);
            res_lvl[k] += std::norm(r) * w;
            u_lvl[k] += std::norm(A * e) * w;
            ++cnt[k];
        }
    });
    double rs = 0, us = 0;
    for (std::size_t k = 0; k < grid.levels(); ++k) {
        const double wt = (k == 0 || k + 1 == grid.levels()) ? 0.5 : 1.0;
        rs += wt * res_lvl[k];
        us += wt * u_lvl[k];
        rep.tube_nodes += cnt[k];
    }
    rep.residual_l2 = std::sqrt(rs * grid.dt());
    rep.beam_l2 = std::sqrt(us * grid.dt());
    rep.normalized = rep.beam_l2 > 0 ? rep.residual_l2 / rep.beam_l2 : 0.0;

    // on-axis eikonal and transport values inside Ω
    for (int i = 0; i < opt.axis_samples; ++i) {
        const double z0 = chart.z0_entry() + (chart.z0_exit() - chart.z0_entry()) * (i + 0.5) / opt.axis_samples;
        double t;
        Vec2 x;
        chart.axis_point(z0, t, x);
        cplx eik, tr;
        bracket(t, x, eik, tr);
        rep.eikonal_axis = std::max(rep.eikonal_axis, std::abs(eik));
        const double scale = std::max(1e-300, std::abs(beam.amplitude_z(Eigen::Vector3d(z0, 0, 0))));
        rep.transport_axis = std::max(rep.transport_axis, std::abs(tr) / scale);
    }
    return rep;
}

std::string beam_diagnostics_csv(const Beam& beam) {
    const RiccatiSolution& r = beam.riccati();
    const Amplitude& a = beam.amplitude();
    const double ref = imag_part(r.H0).determinant();
    std::ostringstream os;
    os << "z0,det_identity_error,transport_residual\n" << std::setprecision(12);
    for (std::size_t i = 0; i < r.z0.size(); ++i) {
        const double v = imag_part(r.H[i]).determinant() * std::norm(r.Y[i].determinant());
        double tres = 0.0;
        if (i >= 2 && i + 2 < r.z0.size()) {
            const double h = r.z0[i + 1] - r.z0[i];
            if (std::abs(r.z0[i] - r.z0[i - 1] - h) < 1e-12 && std::abs(r.z0[i + 2] - r.z0[i + 1] - h) < 1e-12 &&
                std::abs(r.z0[i - 1] - r.z0[i - 2] - h) < 1e-12) {
                const cplx da = (-a.a[i + 2] + 8.0 * a.a[i + 1] - 8.0 * a.a[i - 1] + a.a[i - 2]) / (12 * h);
                const cplx trAH = (r.A.cast<cplx>() * r.H[i]).trace();
                tres = std::abs(2.0 * da + (trAH - a.sign * a.b[i] / kSqrt2) * a.a[i]);
            }
        }
        os << r.z0[i] << ',' << std::abs(v - ref) / std::abs(ref) << ',' << tres << '\n';
    }
    return os.str();
}

}  // namespace beamtomo
