#include "beamtomo/wave_solver.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

namespace beamtomo {

// ---------------------------------------------------------------- coefficients

Coefficient Coefficient::constant(double c) {
    Coefficient k;
    if (c == 0.0) return k;
    k.zero = false;
    k.fn = [c](double, const Vec2&) { return c; };
    return k;
}

Coefficient Coefficient::spatial(std::function<double(const Vec2&)> f) {
    Coefficient k;
    k.zero = false;
    k.fn = [f = std::move(f)](double, const Vec2& x) { return f(x); };
    return k;
}

Coefficient Coefficient::spacetime(std::function<double(double, const Vec2&)> f) {
    Coefficient k;
    k.zero = false;
    k.time_dependent = true;
    k.fn = std::move(f);
    return k;
}

Coefficient Coefficient::operator+(const Coefficient& o) const {
    if (zero) return o;
    if (o.zero) return *this;
    Coefficient k;
    k.zero = false;
    k.time_dependent = time_dependent || o.time_dependent;
    k.fn = [a = fn, b = o.fn](double t, const Vec2& x) { return a(t, x) + b(t, x); };
    return k;
}

Coefficient Coefficient::scaled(double a) const {
    if (zero || a == 0.0) return none();
    Coefficient k = *this;
    k.fn = [f = fn, a](double t, const Vec2& x) { return a * f(t, x); };
    return k;
}

// ---------------------------------------------------------------- context

namespace {

SolverContext::Table sample(const Coefficient& c, const Grid& g) {
    SolverContext::Table t;
    t.nodes = g.nodes();
    if (c.zero) return t;
    t.zero = false;
    t.dynamic = c.time_dependent;
    const std::size_t nl = t.dynamic ? g.levels() : 1;
    t.data.resize(nl * t.nodes);
    for (std::size_t k = 0; k < nl; ++k) {
        const double tk = g.t(static_cast<int>(k));
        for (std::size_t n = 0; n < t.nodes; ++n) t.data[k * t.nodes + n] = c.fn(tk, g.point(n));
    }
    bool all_zero = std::all_of(t.data.begin(), t.data.end(), [](double v) { return v == 0.0; });
    if (all_zero) {
        t.zero = true;
        t.data.clear();
    }
    return t;
}

template <class S>
bool finite_value(const S& v) {
    if constexpr (std::is_same_v<S, cplx>)
        return std::isfinite(v.real()) && std::isfinite(v.imag());
    else
        return std::isfinite(v);
}

}  // namespace

SolverContext::SolverContext(const SemilinearSpec& spec, const Grid& grid) : spec_(spec), grid_(&grid) {
    if (grid.dim() != spec.metric.dim()) throw ConfigError("wave_solver", "grid and metric dimensions differ");
    const std::size_t nn = grid.nodes();
    uniform_ = spec.metric.flat();
    double cmin = 1.0;
    if (!uniform_) {
        const double h2 = grid.h() * grid.h();
        w_c_.assign(nn, 0.0);
        w_l_.assign(nn, 0.0);
        w_r_.assign(nn, 0.0);
        w_d_.assign(nn, 0.0);
        w_u_.assign(nn, 0.0);
        inv_c_.assign(nn, 1.0);
        for (std::size_t n = 0; n < nn; ++n) {
            const Vec2 x = grid.point(n);
            const double c = spec.metric.c(x);
            cmin = std::min(cmin, c);
            inv_c_[n] = 1.0 / c;
            if (grid.dim() == 1) {
                const double cl = spec.metric.c(x - Vec2(0.5 * grid.h(), 0));
                const double cr = spec.metric.c(x + Vec2(0.5 * grid.h(), 0));
                w_l_[n] = 1.0 / (c * cl * h2);
                w_r_[n] = 1.0 / (c * cr * h2);
                w_c_[n] = -(w_l_[n] + w_r_[n]);
            } else {
                const double w = 1.0 / (c * c * h2);
                w_l_[n] = w_r_[n] = w_d_[n] = w_u_[n] = w;
                w_c_[n] = -4.0 * w;
            }
        }
        cmin = std::min(cmin, spec.metric.c_min_sampled());
    }
    speed_max_ = 1.0 / cmin;
    const double cfl_max = grid.dim() == 1 ? 0.9 : 0.6;
    if (grid.cfl(speed_max_) > cfl_max + 1e-12) {
        std::ostringstream os;
        os << "CFL number " << grid.cfl(speed_max_) << " exceeds " << cfl_max;
        throw ConfigError("wave_solver", os.str());
    }
    b_ = sample(spec.b, grid);
    q_ = sample(spec.q, grid);
    f2_ = sample(spec.f2, grid);
    f3_ = sample(spec.f3, grid);
    if (!spec.b.zero && spec.b.time_dependent) {
        const double d = grid.dt();
        Coefficient bt = Coefficient::spacetime(
            [b = spec.b, d](double t, const Vec2& x) { return (b(t + d, x) - b(t - d, x)) / (2 * d); });
        qa_ = sample(spec.q + bt.scaled(-1.0), grid);
    } else {
        qa_ = q_;
    }
}

template <class S>
S SolverContext::laplacian(const S* u, std::size_t n) const {
    const std::size_t nx = static_cast<std::size_t>(grid_->nx());
    if (uniform_) {
        const double ih2 = 1.0 / (grid_->h() * grid_->h());
        if (grid_->dim() == 1) return (u[n - 1] - 2.0 * u[n] + u[n + 1]) * ih2;
        return (u[n - 1] + u[n + 1] + u[n - nx] + u[n + nx] - 4.0 * u[n]) * ih2;
    }
    if (grid_->dim() == 1) return w_l_[n] * u[n - 1] + w_c_[n] * u[n] + w_r_[n] * u[n + 1];
    return w_l_[n] * u[n - 1] + w_r_[n] * u[n + 1] + w_d_[n] * u[n - nx] + w_u_[n] * u[n + nx] + w_c_[n] * u[n];
}

template double SolverContext::laplacian<double>(const double*, std::size_t) const;
template cplx SolverContext::laplacian<cplx>(const cplx*, std::size_t) const;

// ---------------------------------------------------------------- kernel

namespace {

template <class S>
struct Marcher {
    const SolverContext& ctx;
    const LinearInputs<S>& in;
    bool reversed;
    double b_sign;
    bool adjoint_q;
    const SolveOptions& opt;

    std::size_t phys(std::size_t j, std::size_t nt) const { return reversed ? nt - j : j; }

    Solution<S> run() {
        const Grid& g = ctx.grid();
        const std::size_t nn = g.nodes(), nt = static_cast<std::size_t>(g.nt());
        const double dt = g.dt(), dt2 = dt * dt;
        const auto& bnodes = g.boundary_nodes();
        std::vector<std::size_t> interior;
        interior.reserve(nn);
        for (std::size_t n = 0; n < nn; ++n)
            if (!g.on_boundary(n)) interior.push_back(n);

        if (in.h && (in.h->slots != bnodes.size() || in.h->levels != g.levels()))
            throw PreconditionError("wave_solver", "boundary data shape does not match the grid");
        if ((in.u0 && in.u0->size() != nn) || (in.u1 && in.u1->size() != nn))
            throw PreconditionError("wave_solver", "Cauchy data shape does not match the grid");

        Solution<S> sol;
        if (opt.store_field) sol.field = Field<S>(g, "solution");
        if (opt.compute_trace) sol.trace = BoundaryTrace<S>(g.boundary_samples().size(), g.levels());

        std::vector<S> up(nn, S{}), uc(nn, S{}), un(nn, S{}), src(nn, S{});

        auto observe = [&](std::size_t j, const std::vector<S>& u) {
            const std::size_t k = phys(j, nt);
            if (opt.store_field) std::copy(u.begin(), u.end(), sol.field.level(k));
            if (opt.compute_trace) {
                const auto& smp = g.boundary_samples();
                const double ih = 1.0 / (2.0 * g.h());
                for (std::size_t i = 0; i < smp.size(); ++i) {
                    const auto& s = smp[i];
                    sol.trace(k, i) = (3.0 * u[s.node] - 4.0 * u[s.inward1] + u[s.inward2]) * ih * ctx.inv_c(s.node);
                }
            }
        };
        auto set_boundary = [&](std::size_t j, std::vector<S>& u) {
            if (!in.h) {
                for (auto n : bnodes) u[n] = S{};
                return;
            }
            const std::size_t k = phys(j, nt);
            for (std::size_t i = 0; i < bnodes.size(); ++i) u[bnodes[i]] = (*in.h)(k, i);
        };
        auto get_source = [&](std::size_t j) -> bool {
            if (!in.source) return false;
            const std::size_t k = phys(j, nt);
            if (!reversed && k < in.source_start) return false;
            return in.source(k, src.data());
        };
        auto coef_q = [&](std::size_t j) { return adjoint_q ? ctx.q_adjoint(phys(j, nt)) : ctx.q(phys(j, nt)); };
        auto check = [&](std::size_t j, const std::vector<S>& u) {
            for (auto n : interior)
                if (!finite_value(u[n])) {
                    std::ostringstream os;
                    os << "non-finite value at step " << j << " (t = " << g.t(static_cast<int>(phys(j, nt))) << ")";
                    throw BlowupError("wave_solver", os.str());
                }
        };

        // With vanishing Cauchy data every level before the first active
        // boundary/source level is exactly zero; skip those steps.
        std::size_t ks = 0;
        if (!in.u0 && !in.u1 && !reversed) {
            std::size_t kh = g.levels();
            if (in.h) {
                for (std::size_t k = 0; k < g.levels() && kh == g.levels(); ++k)
                    for (std::size_t i = 0; i < bnodes.size(); ++i)
                        if ((*in.h)(k, i) != S{}) {
                            kh = k;
                            break;
                        }
            }
            const std::size_t kf = in.source ? in.source_start + 1 : g.levels();
            ks = std::min({kh, kf, g.levels()});
        }

        std::size_t j0;
        if (ks >= 2) {
            for (std::size_t j = 0; j < ks; ++j) observe(j, uc);
            if (ks >= g.levels()) return sol;
            j0 = ks - 1;  // up = level ks-2, uc = level ks-1, both zero
        } else {
            if (in.u0) uc = *in.u0;
            set_boundary(0, uc);
            observe(0, uc);
            const double* bb = ctx.b(phys(0, nt));
            const double* qq = coef_q(0);
            const bool has_src = get_source(0);
            const double dsign = reversed ? -1.0 : 1.0;  // u_tau = -u_t in reversed time
            for (auto n : interior) {
                const S ud = in.u1 ? S(dsign * (*in.u1)[n]) : S{};
                S acc = ctx.laplacian(uc.data(), n);
                if (bb) acc -= b_sign * bb[n] * ud;
                if (qq) acc -= qq[n] * uc[n];
                if (has_src) acc += src[n];
                un[n] = uc[n] + dt * ud + 0.5 * dt2 * acc;
            }
            set_boundary(1, un);
            check(1, un);
            observe(1, un);
            std::swap(up, uc);
            std::swap(uc, un);
            j0 = 1;
        }
        for (std::size_t j = j0; j < nt; ++j) {
            const double* bb = ctx.b(phys(j, nt));
            const double* qq = coef_q(j);
            const bool has_src = get_source(j);
            for (auto n : interior) {
                S acc = ctx.laplacian(uc.data(), n);
                if (qq) acc -= qq[n] * uc[n];
                if (has_src) acc += src[n];
                const double beta = bb ? 0.5 * b_sign * bb[n] * dt : 0.0;
                un[n] = (2.0 * uc[n] - (1.0 - beta) * up[n] + dt2 * acc) / (1.0 + beta);
            }
            set_boundary(j + 1, un);
            check(j + 1, un);
            observe(j + 1, un);
            std::swap(up, uc);
            std::swap(uc, un);
        }
        return sol;
    }
};

}  // namespace

template <class S>
Solution<S> solve_linear(const SolverContext& ctx, const LinearInputs<S>& in, Direction dir, const SolveOptions& opt) {
    const bool rev = dir == Direction::backward;
    Marcher<S> m{ctx, in, rev, rev ? -1.0 : 1.0, false, opt};
    return m.run();
}

template <class S>
Solution<S> solve_adjoint(const SolverContext& ctx, const LinearInputs<S>& in, const SolveOptions& opt) {
    Marcher<S> m{ctx, in, true, 1.0, true, opt};
    return m.run();
}

template Solution<double> solve_linear(const SolverContext&, const LinearInputs<double>&, Direction, const SolveOptions&);
template Solution<cplx> solve_linear(const SolverContext&, const LinearInputs<cplx>&, Direction, const SolveOptions&);
template Solution<double> solve_adjoint(const SolverContext&, const LinearInputs<double>&, const SolveOptions&);
template Solution<cplx> solve_adjoint(const SolverContext&, const LinearInputs<cplx>&, const SolveOptions&);

// ---------------------------------------------------------------- semilinear

template <class S>
double sup_norm(const std::vector<S>& v) {
    double m = 0.0;
    for (const S& x : v) m = std::max(m, static_cast<double>(std::abs(x)));
    return m;
}

template double sup_norm(const std::vector<double>&);
template double sup_norm(const std::vector<cplx>&);

namespace {

template <class S>
S nonlinear_part(const SolverContext& ctx, std::size_t k, std::size_t n, S u) {
    S r{};
    if (const double* f2 = ctx.f2(k)) r += 0.5 * f2[n] * u * u;
    if (const double* f3 = ctx.f3(k)) r += (1.0 / 6.0) * f3[n] * u * u * u;
    if (ctx.spec().extra) {
        const cplx e = ctx.spec().extra(ctx.grid().t(static_cast<int>(k)), ctx.grid().point(n), cplx(u));
        if constexpr (std::is_same_v<S, cplx>)
            r += e;
        else
            r += e.real();
    }
    return r;
}

}  // namespace

template <class S>
Solution<S> solve_semilinear(const SolverContext& ctx, const BoundaryData<S>* h, const std::vector<S>* u0,
                             const std::vector<S>* u1, const PicardOptions& popt, const SolveOptions& opt) {
    const SemilinearSpec& spec = ctx.spec();
    const Grid& g = ctx.grid();
    if (!spec.linear()) {
        double data = 0.0;
        if (h) data = std::max(data, sup_norm(*h));
        if (u0) data = std::max(data, sup_norm(*u0));
        if (u1) data = std::max(data, sup_norm(*u1));
        if (data > spec.delta0) throw PreconditionError("wave_solver", "data exceed the small-data bound delta0");
    }
    LinearInputs<S> lin;
    lin.h = h;
    lin.u0 = u0;
    lin.u1 = u1;
    SolveOptions vopt = opt;
    vopt.store_field = opt.store_field || !spec.linear();
    vopt.compute_trace = true;
    Solution<S> v = solve_linear(ctx, lin, Direction::forward, vopt);
    if (spec.linear()) {
        v.iterations = 1;
        return v;
    }

    const double vnorm = std::max(sup_norm(v.field.data), 1e-300);
    Field<S> what(g, "picard");
    double prev = -1.0;
    int bad = 0;
    bool converged = false;
    Solution<S> out;
    const std::size_t nn = g.nodes();
    for (int it = 1; it <= popt.max_iter; ++it) {
        LinearInputs<S> win;
        win.source = [&](std::size_t k, S* dst) {
            const S* vk = v.field.level(k);
            const S* wk = what.level(k);
            bool any = false;
            for (std::size_t n = 0; n < nn; ++n) {
                const S u = vk[n] + wk[n];
                dst[n] = u == S{} ? S{} : -nonlinear_part(ctx, k, n, u);
                any = any || dst[n] != S{};
            }
            return any;
        };
        SolveOptions wopt;
        wopt.store_field = true;
        wopt.compute_trace = false;
        Solution<S> w = solve_linear(ctx, win, Direction::forward, wopt);
        double diff = 0.0;
        for (std::size_t i = 0; i < w.field.data.size(); ++i)
            diff = std::max(diff, static_cast<double>(std::abs(w.field.data[i] - what.data[i])));
        if (!std::isfinite(diff)) {
            std::ostringstream os;
            os << "non-finite Picard iterate at iteration " << it << " (data too large)";
            throw ContractionFailure("wave_solver", os.str());
        }
        if (prev > 0.0) {
            const double ratio = diff / prev;
            out.ratios.push_back(ratio);
            bad = ratio >= 1.0 ? bad + 1 : 0;
            if (bad >= 3) {
                std::ostringstream os;
                os << "contraction ratio >= 1 for 3 consecutive iterations (last " << ratio << ", iteration " << it
                   << "); data too large";
                throw ContractionFailure("wave_solver", os.str());
            }
        }
        what.data.swap(w.field.data);
        prev = diff;
        out.iterations = it;
        out.residual = diff / vnorm;
        if (diff <= popt.tol * vnorm) {
            converged = true;
            break;
        }
    }
    if (!converged) throw ContractionFailure("wave_solver", "Picard iteration did not reach the tolerance");

    const BoundaryTrace<S> wt = neumann_trace(what, ctx);
    out.trace = v.trace;
    for (std::size_t i = 0; i < out.trace.data.size(); ++i) out.trace.data[i] += wt.data[i];
    if (opt.store_field) {
        out.field = std::move(v.field);
        for (std::size_t i = 0; i < out.field.data.size(); ++i) out.field.data[i] += what.data[i];
        out.field.kind = "semilinear";
    }
    return out;
}

template Solution<double> solve_semilinear(const SolverContext&, const BoundaryData<double>*,
                                           const std::vector<double>*, const std::vector<double>*,
                                           const PicardOptions&, const SolveOptions&);
template Solution<cplx> solve_semilinear(const SolverContext&, const BoundaryData<cplx>*, const std::vector<cplx>*,
                                         const std::vector<cplx>*, const PicardOptions&, const SolveOptions&);

// ---------------------------------------------------------------- traces, tables, energy

template <class S>
BoundaryTrace<S> neumann_trace(const Field<S>& field, const SolverContext& ctx) {
    const Grid& g = *field.grid;
    const auto& smp = g.boundary_samples();
    BoundaryTrace<S> tr(smp.size(), g.levels());
    const double ih = 1.0 / (2.0 * g.h());
    for (std::size_t k = 0; k < g.levels(); ++k) {
        const S* u = field.level(k);
        for (std::size_t i = 0; i < smp.size(); ++i) {
            const auto& s = smp[i];
            tr(k, i) = (3.0 * u[s.node] - 4.0 * u[s.inward1] + u[s.inward2]) * ih * ctx.inv_c(s.node);
        }
    }
    return tr;
}

template <class S>
BoundaryTrace<S> neumann_trace(const Field<S>& field) {
    const Grid& g = *field.grid;
    const auto& smp = g.boundary_samples();
    BoundaryTrace<S> tr(smp.size(), g.levels());
    const double ih = 1.0 / (2.0 * g.h());
    for (std::size_t k = 0; k < g.levels(); ++k) {
        const S* u = field.level(k);
        for (std::size_t i = 0; i < smp.size(); ++i) {
            const auto& s = smp[i];
            tr(k, i) = (3.0 * u[s.node] - 4.0 * u[s.inward1] + u[s.inward2]) * ih;
        }
    }
    return tr;
}

template BoundaryTrace<double> neumann_trace(const Field<double>&, const SolverContext&);
template BoundaryTrace<cplx> neumann_trace(const Field<cplx>&, const SolverContext&);
template BoundaryTrace<double> neumann_trace(const Field<double>&);
template BoundaryTrace<cplx> neumann_trace(const Field<cplx>&);

template <class S>
BoundaryData<S> boundary_from_function(const Grid& grid, const std::function<S(double, const Vec2&)>& h) {
    const auto& bn = grid.boundary_nodes();
    BoundaryData<S> d(bn.size(), grid.levels());
    for (std::size_t k = 0; k < grid.levels(); ++k)
        for (std::size_t i = 0; i < bn.size(); ++i) d(k, i) = h(grid.t(static_cast<int>(k)), grid.point(bn[i]));
    return d;
}

template BoundaryData<double> boundary_from_function(const Grid&, const std::function<double(double, const Vec2&)>&);
template BoundaryData<cplx> boundary_from_function(const Grid&, const std::function<cplx(double, const Vec2&)>&);

double discrete_energy(const RField& u, const SolverContext& ctx, std::size_t k) {
    const Grid& g = *u.grid;
    if (k == 0 || k >= g.levels() - 1) throw PreconditionError("wave_solver", "energy needs neighbouring levels");
    const Metric& m = ctx.spec().metric;
    const int n = g.dim();
    const double h = g.h();
    const double* a = u.level(k - 1);
    const double* c = u.level(k);
    const double* d = u.level(k + 1);
    double e = 0.0;
    for (std::size_t i = 0; i < g.nodes(); ++i) {
        const double ut = (d[i] - a[i]) / (2 * g.dt());
        const double cn = m.flat() ? 1.0 : std::pow(m.c(g.point(i)), n);
        e += 0.5 * cn * ut * ut * g.cell_weight(i);
    }
    // gradient on cell edges
    const int nx = g.nx(), ny = g.ny();
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) {
            const std::size_t p = g.index(i, j), q = g.index(i + 1, j);
            const double w = n == 2 ? ((j == 0 || j == ny - 1) ? 0.5 * h : h) : 1.0;
            const Vec2 mid = 0.5 * (g.point(p) + g.point(q));
            const double cw = m.flat() ? 1.0 : std::pow(m.c(mid), n - 2);
            const double dx = (c[q] - c[p]) / h;
            e += 0.5 * cw * dx * dx * h * w;
        }
    if (n == 2)
        for (int j = 0; j + 1 < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const std::size_t p = g.index(i, j), q = g.index(i, j + 1);
                const double w = (i == 0 || i == nx - 1) ? 0.5 * h : h;
                const double dy = (c[q] - c[p]) / h;
                e += 0.5 * dy * dy * h * w;
            }
    return e;
}

// ---------------------------------------------------------------- Taylor boundary data

namespace {

double time_derivative(const Coefficient& c, const Vec2& x, int order, double ht) {
    if (c.zero) return 0.0;
    if (order == 0) return c(0.0, x);
    if (!c.time_dependent) return 0.0;
    const double f2 = c(2 * ht, x), f1 = c(ht, x), m1 = c(-ht, x), m2 = c(-2 * ht, x);
    if (order == 1) return (-f2 + 8 * f1 - 8 * m1 + m2) / (12 * ht);
    if (order == 2) return (-f2 + 16 * f1 - 30 * c(0.0, x) + 16 * m1 - m2) / (12 * ht * ht);
    throw UnsupportedOrder("wave_solver", "coefficient time derivatives above order 2");
}

struct JetEval {
    const SemilinearSpec& spec;
    const Profile& u0;
    const Profile& u1;
    const Coefficient& F;
    const JetOptions& jo;

    double lap(const std::function<double(const Vec2&)>& p, const Vec2& x) const {
        const int n = spec.metric.dim();
        const double h = jo.h_space;
        double lap = 0.0;
        Vec2 grad(0, 0);
        const double p0 = p(x);
        for (int k = 0; k < n; ++k) {
            Vec2 e(0, 0);
            e[k] = h;
            const double a = p(x + 2 * e), b = p(x + e), c = p(x - e), d = p(x - 2 * e);
            lap += (-a + 16 * b - 30 * p0 + 16 * c - d) / (12 * h * h);
            grad[k] = (-a + 8 * b - 8 * c + d) / (12 * h);
        }
        if (spec.metric.flat()) return lap;
        const double cx = spec.metric.c(x);
        return (lap + (n - 2) * spec.metric.grad_log_c(x).dot(grad)) / (cx * cx);
    }

    double d(int k, const Vec2& x) const {
        if (k == 0) return u0(x);
        if (k == 1) return u1 ? u1(x) : 0.0;
        const int j = k - 2;
        double val = lap([this, j](const Vec2& y) { return d(j, y); }, x);
        std::array<double, 5> U{};  // Taylor coefficients u_i / i!
        double fact = 1.0;
        for (int i = 0; i <= j + 1; ++i) {
            if (i > 0) fact *= i;
            U[i] = d(i, x) / fact;
        }
        // ∂_t^j (b u_t) = Σ C(j,i) b^{(i)} ∂_t^{j-i+1} u
        for (int i = 0; i <= j; ++i) {
            const double binom = (i == 0 || i == j) ? 1.0 : static_cast<double>(j);
            val -= binom * time_derivative(spec.b, x, i, jo.h_time) * d(j - i + 1, x);
        }
        // ∂_t^j f via truncated series in t
        auto series = [&](const Coefficient& c) {
            std::array<double, 5> s{};
            double f = 1.0;
            for (int i = 0; i <= j; ++i) {
                if (i > 0) f *= i;
                s[i] = time_derivative(c, x, i, jo.h_time) / f;
            }
            return s;
        };
        auto mul = [&](const std::array<double, 5>& a, const std::array<double, 5>& b) {
            std::array<double, 5> r{};
            for (int p = 0; p <= j; ++p)
                for (int q = 0; p + q <= j; ++q) r[p + q] += a[p] * b[q];
            return r;
        };
        std::array<double, 5> fser{};
        const auto U2 = mul(U, U);
        const auto U3 = mul(U2, U);
        const auto Q = series(spec.q), F2 = series(spec.f2), F3 = series(spec.f3);
        const auto t1 = mul(Q, U), t2 = mul(F2, U2), t3 = mul(F3, U3);
        for (int i = 0; i <= j; ++i) fser[i] = t1[i] + 0.5 * t2[i] + t3[i] / 6.0;
        double jfact = 1.0;
        for (int i = 2; i <= j; ++i) jfact *= i;
        val -= jfact * fser[j];
        if (spec.extra) {
            auto g = [&](double t) {
                double u = 0.0, tp = 1.0;
                for (int i = 0; i <= j; ++i) {
                    u += U[i] * tp;
                    tp *= t;
                }
                return spec.extra(t, x, cplx(u)).real();
            };
            const double ht = jo.h_time;
            if (j == 0) val -= g(0.0);
            if (j == 1) val -= (-g(2 * ht) + 8 * g(ht) - 8 * g(-ht) + g(-2 * ht)) / (12 * ht);
            if (j == 2) val -= (-g(2 * ht) + 16 * g(ht) - 30 * g(0.0) + 16 * g(-ht) - g(-2 * ht)) / (12 * ht * ht);
        }
        val += time_derivative(F, x, j, jo.h_time);
        return val;
    }
};

}  // namespace

std::array<double, 5> time_jets(const SemilinearSpec& spec, const Profile& u0, const Profile& u1, const Coefficient& F,
                                int m, const Vec2& x, const JetOptions& jo) {
    if (m < 0 || m > 4) throw UnsupportedOrder("wave_solver", "Taylor recursion implemented up to order 4");
    JetEval ev{spec, u0, u1, F, jo};
    std::array<double, 5> out{};
    for (int k = 0; k <= m; ++k) out[k] = ev.d(k, x);
    return out;
}

double TaylorData::value(std::size_t slot, double t) const {
    double v = 0.0, tp = 1.0, fact = 1.0;
    for (int j = 0; j <= order; ++j) {
        if (j > 0) {
            tp *= t;
            fact *= j;
        }
        v += coef[slot][j] * tp / fact;
    }
    return v;
}

BoundaryData<double> TaylorData::table(const Grid& grid) const {
    BoundaryData<double> d(coef.size(), grid.levels());
    for (std::size_t k = 0; k < grid.levels(); ++k)
        for (std::size_t i = 0; i < coef.size(); ++i) d(k, i) = value(i, grid.t(static_cast<int>(k)) - grid.t0());
    return d;
}

TaylorData boundary_data_from_mu(const Profile& mu, const SemilinearSpec& spec, int m, const Grid& grid,
                                 const JetOptions& jo) {
    if (m < 0 || m > 4) throw UnsupportedOrder("wave_solver", "Taylor recursion implemented up to order 4");
    TaylorData td;
    td.order = m;
    const Profile zero;
    for (std::size_t node : grid.boundary_nodes()) {
        const Vec2 x = grid.point(node);
        if (std::abs(spec.b(0.0, x)) > 1e-12) throw PreconditionError("wave_solver", "b(x,0) must vanish");
        td.coef.push_back(time_jets(spec, mu, zero, Coefficient::none(), m, x, jo));
    }
    return td;
}

CompatibilityReport check_compatibility(const Profile& u0, const Profile& u1, const TaylorData& h,
                                        const Coefficient& F, int m, const SemilinearSpec& spec, const Grid& grid,
                                        double tol, const JetOptions& jo) {
    if (m < 0 || m > 4) throw UnsupportedOrder("wave_solver", "compatibility implemented up to order 4");
    CompatibilityReport rep;
    rep.violation_per_order.assign(m + 1, 0.0);
    const auto& bn = grid.boundary_nodes();
    if (h.coef.size() != bn.size() || h.order < m)
        throw PreconditionError("wave_solver", "boundary Taylor data do not cover the requested order");
    for (std::size_t i = 0; i < bn.size(); ++i) {
        const auto d = time_jets(spec, u0, u1, F, m, grid.point(bn[i]), jo);
        for (int k = 0; k <= m; ++k) {
            const double v = std::abs(h.coef[i][k] - d[k]) / std::max(1.0, std::abs(d[k]));
            rep.violation_per_order[k] = std::max(rep.violation_per_order[k], v);
        }
    }
    for (int k = 0; k <= m; ++k) {
        rep.max_violation = std::max(rep.max_violation, rep.violation_per_order[k]);
        if (rep.violation_per_order[k] > tol && rep.first_violated_order < 0) rep.first_violated_order = k;
    }
    rep.pass = rep.first_violated_order < 0;
    return rep;
}

}  // namespace beamtomo
