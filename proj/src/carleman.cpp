#include "beamtomo/carleman.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace beamtomo {

namespace {

std::vector<Vec2> sample_closure(const Domain& d, int n) {
    std::vector<Vec2> pts;
    if (d.dim() == 1) {
        for (int i = 0; i < n; ++i) pts.emplace_back(d.lo().x() + (d.hi().x() - d.lo().x()) * i / (n - 1), 0.0);
        return pts;
    }
    const Vec2 lo = d.kind() == DomainKind::disk ? Vec2(d.center().array() - d.radius()) : d.lo();
    const Vec2 hi = d.kind() == DomainKind::disk ? Vec2(d.center().array() + d.radius()) : d.hi();
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const Vec2 x(lo.x() + (hi.x() - lo.x()) * i / (n - 1), lo.y() + (hi.y() - lo.y()) * j / (n - 1));
            if (d.contains(x, 1e-12)) pts.push_back(x);
        }
    return pts;
}

double quintic(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }
double quintic_d1(double u) { return 30.0 * u * u * (1.0 - u) * (1.0 - u); }
double quintic_d2(double u) { return 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u); }

}  // namespace

std::string CarlemanWeight::to_json() const {
    nlohmann::ordered_json j;
    j["x0"] = {x0.x(), x0.y()};
    j["rho"] = rho;
    j["beta"] = beta;
    j["beta0"] = beta0;
    j["lambda"] = lambda;
    j["T"] = T;
    j["T_star"] = T_star;
    j["delta"] = delta;
    j["eps"] = eps;
    j["eps_max"] = eps_max;
    j["d0"] = d0;
    j["d1"] = d1;
    j["max_psi"] = max_psi;
    j["min_psi"] = min_psi;
    j["min_grad_psi"] = min_grad_psi;
    j["min_hess_eig"] = min_hess_eig;
    j["min_phi"] = min_phi;
    j["property1_margin"] = margin1;
    j["property2_margin"] = margin2;
    j["samples"] = samples;
    return j.dump(2);
}

CarlemanWeight build_weight(const Domain& domain, const Vec2& x0, double beta, double beta0, double lambda,
                            double T, int samples) {
    if (domain.signed_distance(x0) <= 1e-12)
        throw CriticalPointError("carleman", "x0 lies in the closure of Omega, where |Dpsi| vanishes");
    if (!(lambda > 0)) throw PreconditionError("carleman", "lambda must be positive");
    if (samples < 3) throw PreconditionError("carleman", "need at least three samples per axis");
    CarlemanWeight w;
    w.domain = domain;
    w.x0 = x0;
    w.lambda = lambda;
    w.T = T;
    const auto pts = sample_closure(domain, samples);
    w.samples = pts.size();

    // convexity of ψ by second differences
    const double fh = 1e-3;
    w.min_hess_eig = std::numeric_limits<double>::infinity();
    w.max_psi = -std::numeric_limits<double>::infinity();
    w.min_psi = w.min_grad_psi = std::numeric_limits<double>::infinity();
    for (const Vec2& x : pts) {
        const double p = w.psi(x);
        w.max_psi = std::max(w.max_psi, p);
        w.min_psi = std::min(w.min_psi, p);
        w.min_grad_psi = std::min(w.min_grad_psi, 2.0 * (x - x0).norm());
        Eigen::Matrix2d Hs;
        const int nd = domain.dim();
        Hs.setIdentity();
        for (int a = 0; a < nd; ++a)
            for (int b = 0; b < nd; ++b) {
                const Vec2 ea = Vec2::Unit(a) * fh, eb = Vec2::Unit(b) * fh;
                Hs(a, b) = (w.psi(x + ea + eb) - w.psi(x + ea - eb) - w.psi(x - ea + eb) + w.psi(x - ea - eb)) /
                           (4.0 * fh * fh);
            }
        const double ev = nd == 1 ? Hs(0, 0) : Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(Hs).eigenvalues()[0];
        w.min_hess_eig = std::min(w.min_hess_eig, ev);
    }
    w.rho = 0.5 * w.min_hess_eig;
    if (!(beta > 0 && beta < w.rho)) {
        std::ostringstream os;
        os << "beta = " << beta << " must lie in (0, rho) with rho = " << w.rho;
        throw PreconditionError("carleman", os.str());
    }
    w.beta = beta;
    w.T_star = std::sqrt(w.max_psi / w.rho);
    if (!(T > w.T_star)) {
        std::ostringstream os;
        os << "horizon T = " << T << " must exceed T* = " << w.T_star;
        throw HorizonError("carleman", os.str());
    }
    if (!(beta * T * T > w.max_psi)) {
        std::ostringstream os;
        os << "beta T^2 = " << beta * T * T << " must exceed max psi = " << w.max_psi << "; raise beta or T";
        throw HorizonError("carleman", os.str());
    }
    w.beta0 = beta0 > 0 ? beta0 : beta * T * T - w.min_psi + 1.0;
    w.min_phi = w.min_psi - beta * T * T + w.beta0;
    if (!(w.min_phi > 0)) {
        std::ostringstream os;
        os << "beta0 = " << w.beta0 << " leaves phi negative (min " << w.min_phi << ")";
        throw PreconditionError("carleman", os.str());
    }
    // largest δ with ρT² > max ψ + 4δ and βT² > max ψ + 4δ (β < ρ makes the second binding)
    // the inequalities are strict, so stay a hair inside the bound
    w.delta = (1.0 - 1e-9) * (std::min(beta, w.rho) * T * T - w.max_psi) / 4.0;
    w.eps_max = 0.5 * (T - std::sqrt((w.max_psi + 2.0 * w.delta) / beta));
    w.eps = std::min((1.0 - 1e-6) * w.eps_max, 0.24 * T);
    w.d0 = std::exp(lambda * w.beta0);
    w.d1 = std::exp(lambda * (w.beta0 - 2.0 * w.delta));

    double max_T = -std::numeric_limits<double>::infinity(), max_band = max_T;
    const double t_band = T - 2.0 * w.eps;
    for (const Vec2& x : pts) {
        max_T = std::max(max_T, w.phi(T, x));
        max_band = std::max(max_band, w.phi(t_band, x));  // φ decreases in |t|
    }
    w.margin1 = w.beta0 - 4.0 * w.delta - max_T;
    w.margin2 = w.beta0 - 2.0 * w.delta - max_band;
    return w;
}

double Cutoff::operator()(double t) const {
    const double a = std::abs(t);
    if (a <= T - 2.0 * eps) return 1.0;
    if (a >= T - eps) return 0.0;
    return quintic((T - eps - a) / eps);
}

double Cutoff::d1(double t) const {
    const double a = std::abs(t);
    if (a <= T - 2.0 * eps || a >= T - eps) return 0.0;
    const double sgn = t > 0 ? -1.0 : 1.0;
    return sgn * quintic_d1((T - eps - a) / eps) / eps;
}

double Cutoff::d2(double t) const {
    const double a = std::abs(t);
    if (a <= T - 2.0 * eps || a >= T - eps) return 0.0;
    return quintic_d2((T - eps - a) / eps) / (eps * eps);
}

Cutoff cutoff_chi(double T, double eps) {
    if (!(eps > 0 && eps < T / 4.0)) throw PreconditionError("carleman", "cutoff needs 0 < eps < T/4");
    return Cutoff{T, eps};
}

CarlemanRatio carleman_ratio(const RField& v, const Coefficient& b, const Coefficient& q, const CarlemanWeight& w,
                             const std::vector<double>& s_list) {
    if (!v.grid) throw PreconditionError("carleman", "field has no grid");
    const Grid& g = *v.grid;
    for (std::size_t i = 1; i < s_list.size(); ++i)
        if (!(s_list[i] > s_list[i - 1])) throw PreconditionError("carleman", "s_list must be increasing");
    const std::size_t nn = g.nodes(), nl = g.levels();
    if (nl < 5) throw PreconditionError("carleman", "need at least five time levels");

    double vmax = 0.0;
    for (double x : v.data) vmax = std::max(vmax, std::abs(x));
    CarlemanRatio out;
    out.s = s_list;
    if (vmax == 0.0) {
        out.lhs.assign(s_list.size(), 0.0);
        out.rhs.assign(s_list.size(), 0.0);
        out.ratio.assign(s_list.size(), 0.0);
        return out;
    }
    const double tol = 1e-12 * vmax;
    for (std::size_t k : {std::size_t(0), std::size_t(1), nl - 2, nl - 1})
        for (std::size_t n = 0; n < nn; ++n)
            if (std::abs(v(k, n)) > tol)
                throw PreconditionError("carleman", "test field must vanish on the first and last two levels");
    for (std::size_t k = 0; k < nl; ++k)
        for (std::size_t n : g.boundary_nodes())
            if (std::abs(v(k, n)) > tol) throw PreconditionError("carleman", "test field must vanish on Gamma");

    const double h = g.h(), dt = g.dt();
    const int nx = g.nx(), ny = g.ny();
    // per-node integrands, then weighted sums for each s
    std::vector<double> grad2(nl * nn, 0.0), vt2(nl * nn, 0.0), v2(nl * nn, 0.0), pv2(nl * nn, 0.0), phi(nl * nn);
    std::vector<double> dnu2(nl * g.boundary_samples().size(), 0.0), phis(dnu2.size());
    auto d_axis = [&](std::size_t k, int i, int j, int axis) {
        const int n_ax = axis == 0 ? nx : ny;
        const int c = axis == 0 ? i : j;
        auto at = [&](int o) { return axis == 0 ? v(k, g.index(i + o, j)) : v(k, g.index(i, j + o)); };
        if (c == 0) return (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
        if (c == n_ax - 1) return (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h);
        return (at(1) - at(-1)) / (2.0 * h);
    };
    for (std::size_t k = 0; k < nl; ++k) {
        const double t = g.t(static_cast<int>(k));
        for (std::size_t n = 0; n < nn; ++n) {
            const std::size_t c = k * nn + n;
            const int i = g.ix(n), j = g.iy(n);
            const Vec2 x = g.point(n);
            phi[c] = w.weight(t, x);
            double gx = d_axis(k, i, j, 0), gy = g.dim() == 2 ? d_axis(k, i, j, 1) : 0.0;
            grad2[c] = gx * gx + gy * gy;
            v2[c] = v(k, n) * v(k, n);
            if (k == 0 || k + 1 == nl) continue;
            const double vt = (v(k + 1, n) - v(k - 1, n)) / (2.0 * dt);
            vt2[c] = vt * vt;
            if (g.on_boundary(n)) continue;
            const double vtt = (v(k + 1, n) - 2.0 * v(k, n) + v(k - 1, n)) / (dt * dt);
            double lap = (v(k, g.index(i + 1, j)) - 2.0 * v(k, n) + v(k, g.index(i - 1, j))) / (h * h);
            if (g.dim() == 2) lap += (v(k, g.index(i, j + 1)) - 2.0 * v(k, n) + v(k, g.index(i, j - 1))) / (h * h);
            const double pv = vtt - lap + b(t, x) * vt + q(t, x) * v(k, n);
            pv2[c] = pv * pv;
        }
        const auto& bs = g.boundary_samples();
        for (std::size_t i = 0; i < bs.size(); ++i) {
            const double dn = -(-3.0 * v(k, bs[i].node) + 4.0 * v(k, bs[i].inward1) - v(k, bs[i].inward2)) / (2.0 * h);
            dnu2[k * bs.size() + i] = dn * dn;
            phis[k * bs.size() + i] = w.weight(t, g.point(bs[i].node));
        }
    }
    double phimax = 0.0;
    for (double p : phi) phimax = std::max(phimax, p);
    for (double s : s_list) {
        const double M = 2.0 * s * phimax;
        double L = 0.0, R = 0.0;
        for (std::size_t k = 0; k < nl; ++k) {
            const double wt = (k == 0 || k + 1 == nl) ? 0.5 * dt : dt;
            for (std::size_t n = 0; n < nn; ++n) {
                const std::size_t c = k * nn + n;
                const double e = std::exp(2.0 * s * phi[c] - M) * g.cell_weight(n) * wt;
                L += s * (grad2[c] + vt2[c] + s * s * v2[c]) * e;
                R += pv2[c] * e;
            }
            const auto& bs = g.boundary_samples();
            for (std::size_t i = 0; i < bs.size(); ++i) {
                const std::size_t c = k * bs.size() + i;
                R += dnu2[c] * std::exp(2.0 * s * phis[c] - M) * bs[i].weight * wt;
            }
        }
        out.lhs.push_back(L);
        out.rhs.push_back(R);
        out.ratio.push_back(R > 0 ? L / R : std::numeric_limits<double>::infinity());
    }
    return out;
}

std::string StabilityResult::to_csv() const {
    std::ostringstream os;
    os << std::setprecision(17) << "alpha,q_norm,trace_norm,ratio\n";
    for (const auto& r : rows) os << r.alpha << "," << r.q_norm << "," << r.trace_norm << "," << r.ratio << "\n";
    return os.str();
}

StabilityResult stability_experiment(const SemilinearSpec& f1, const Profile& q_shape, const Profile& mu,
                                     const Grid& grid, const std::vector<double>& alphas, int taylor_order) {
    if (alphas.empty()) throw PreconditionError("carleman", "no alpha values");
    if (!f1.b.zero) {
        // b(x, 0) = 0 is all the extension argument needs; check it on the nodes
        for (std::size_t n = 0; n < grid.nodes(); ++n)
            if (std::abs(f1.b(grid.t0(), grid.point(n))) > 1e-12)
                throw PreconditionError("carleman", "b(x, 0) must vanish for the even extension");
    }
    if (f1.q.time_dependent) throw PreconditionError("carleman", "f must be time independent");
    const std::size_t nn = grid.nodes(), nl = grid.levels();
    double mu0 = std::numeric_limits<double>::infinity();
    std::vector<double> mu_n(nn), qs(nn);
    for (std::size_t n = 0; n < nn; ++n) {
        mu_n[n] = mu(grid.point(n));
        qs[n] = q_shape(grid.point(n));
        mu0 = std::min(mu0, std::abs(mu_n[n]));
    }
    if (!(mu0 > 0.0)) throw PreconditionError("carleman", "mu vanishes somewhere on the closure of Omega");

    SemilinearSpec lin = f1;
    lin.f2 = lin.f3 = Coefficient::none();
    lin.extra = nullptr;
    const BoundaryData<double> h = boundary_data_from_mu(mu, lin, taylor_order, grid).table(grid);
    SolveOptions keep;
    SolverContext ctx1(lin, grid);
    const Solution<double> s1 = solve_linear(ctx1, LinearInputs<double>{{}, 0, &h, &mu_n, nullptr}, Direction::forward,
                                             SolveOptions{false, true});

    // y₁ system: coefficient b_t + q₁
    SemilinearSpec ys = lin;
    if (!f1.b.zero && f1.b.time_dependent) {
        const Coefficient b = f1.b;
        const double e = 1e-5;
        ys.q = f1.q + Coefficient::spacetime([b, e](double t, const Vec2& x) { return (b(t + e, x) - b(t - e, x)) / (2 * e); });
    }
    SolverContext cy(ys, grid);

    StabilityResult out;
    std::vector<double> la, lt;
    for (double alpha : alphas) {
        SemilinearSpec f2 = lin;
        f2.q = lin.q + Coefficient::spatial([q_shape, alpha](const Vec2& x) { return alpha * q_shape(x); });
        SolverContext ctx2(f2, grid);
        const Solution<double> s2 = solve_linear(ctx2, LinearInputs<double>{{}, 0, &h, &mu_n, nullptr},
                                                 Direction::forward, keep);
        const RField& u2 = s2.field;
        // q = f₂_u − f₁_u
        std::vector<double> qn(nn), y1t0(nn);
        for (std::size_t n = 0; n < nn; ++n) {
            qn[n] = alpha * qs[n];
            y1t0[n] = qn[n] * mu_n[n];
        }
        LinearInputs<double> yin;
        yin.u1 = &y1t0;
        yin.source = [&](std::size_t k, double* dst) {
            if (k == 0) return false;  // u₂_t(0) = 0
            const std::size_t kp = std::min(k + 1, nl - 1), km = k - 1;
            const double span = (kp - km) * grid.dt();
            for (std::size_t n = 0; n < nn; ++n) dst[n] = qn[n] * (u2(kp, n) - u2(km, n)) / span;
            return true;
        };
        const Solution<double> y1 = solve_linear(cy, yin, Direction::forward, keep);

        StabilityRow row;
        row.alpha = alpha;
        double qq = 0.0;
        for (std::size_t n = 0; n < nn; ++n) qq += qn[n] * qn[n] * grid.cell_weight(n);
        row.q_norm = std::sqrt(qq);
        row.trace_norm = trace_norm(grid, y1.trace);
        row.ratio = row.trace_norm > 0 ? row.q_norm / row.trace_norm : std::numeric_limits<double>::infinity();

        // time derivative of the trace difference against the y₁ trace
        BoundaryTrace<double> dd(y1.trace.slots, y1.trace.levels);
        for (std::size_t k = 0; k < nl; ++k) {
            const std::size_t kp = std::min(k + 1, nl - 1), km = k == 0 ? 0 : k - 1;
            const double span = (kp - km) * grid.dt();
            for (std::size_t i = 0; i < dd.slots; ++i)
                dd(k, i) = ((s1.trace(kp, i) - s2.trace(kp, i)) - (s1.trace(km, i) - s2.trace(km, i))) / span -
                           y1.trace(k, i);
        }
        row.y1_consistency = row.trace_norm > 0 ? trace_norm(grid, dd) / row.trace_norm : 0.0;
        out.rows.push_back(row);
        if (row.trace_norm > 0 && alpha > 0) {
            la.push_back(std::log(alpha));
            lt.push_back(std::log(row.trace_norm));
        }
        // u₁_ttt(x, 0) = y₁_tt(x, 0) from the y₁ equation at t = 0; the source vanishes there since u₂_t(0) = 0
        {
            const double* cb = cy.b(0);
            const double* cq = cy.q(0);
            const double* y0 = y1.field.level(0);
            for (std::size_t n = 0; n < nn; ++n) {
                if (grid.on_boundary(n)) continue;
                const double ytt = cy.laplacian(y0, n) - (cb ? cb[n] : 0.0) * y1t0[n] - (cq ? cq[n] : 0.0) * y0[n];
                out.even_extension_defect = std::max(out.even_extension_defect, std::abs(ytt));
            }
        }
    }
    if (la.size() >= 2) {
        const double n = double(la.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t i = 0; i < la.size(); ++i) {
            sx += la[i];
            sy += lt[i];
            sxx += la[i] * la[i];
            sxy += la[i] * lt[i];
        }
        out.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    return out;
}

}  // namespace beamtomo
