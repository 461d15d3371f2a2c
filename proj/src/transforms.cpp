#include "beamtomo/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace beamtomo {

namespace {

Vec2 unit_in_metric(const Metric& m, const Vec2& x, const Vec2& v) { return v / m.norm(x, v); }

NullGeodesic centred_ray(const Metric& metric, const Vec2& x0, const Vec2& v0, double t_mid, double step) {
    NullGeodesic b = make_null_geodesic(metric, 0.0, x0, unit_in_metric(metric, x0, v0), step);
    b.s = t_mid - 0.5 * b.geodesic.tau_plus;
    return b;
}

// Boundary points with their outward normals.
void boundary_points(const Domain& dom, int n, std::vector<Vec2>& pts, std::vector<Vec2>& normals) {
    if (dom.kind() == DomainKind::disk) {
        for (int i = 0; i < n; ++i) {
            const double a = 2 * kPi * (i + 0.5) / n;
            const Vec2 nrm(std::cos(a), std::sin(a));
            pts.push_back(dom.center() + dom.radius() * nrm);
            normals.push_back(nrm);
        }
        return;
    }
    const Vec2 lo = dom.lo(), hi = dom.hi();
    const double w = hi.x() - lo.x(), ht = hi.y() - lo.y();
    const double per = 2 * (w + ht);
    for (int i = 0; i < n; ++i) {
        double p = per * (i + 0.5) / n;
        if (p < w) {
            pts.emplace_back(lo.x() + p, lo.y());
            normals.emplace_back(0, -1);
        } else if ((p -= w) < ht) {
            pts.emplace_back(hi.x(), lo.y() + p);
            normals.emplace_back(1, 0);
        } else if ((p -= ht) < w) {
            pts.emplace_back(hi.x() - p, hi.y());
            normals.emplace_back(0, 1);
        } else {
            p -= w;
            pts.emplace_back(lo.x(), hi.y() - p);
            normals.emplace_back(-1, 0);
        }
    }
}

std::vector<double> offsets(const FamilySpec& spec) {
    std::vector<double> t(spec.n_s);
    for (int k = 0; k < spec.n_s; ++k)
        t[k] = spec.n_s == 1 ? 0.5 * (spec.t_mid_lo + spec.t_mid_hi)
                             : spec.t_mid_lo + (spec.t_mid_hi - spec.t_mid_lo) * k / (spec.n_s - 1);
    return t;
}

}  // namespace

RayFamily make_ray_family(const Metric& metric, const FamilySpec& spec) {
    if (spec.n_s < 1) throw ConfigError("transforms", "n_s must be at least 1");
    RayFamily fam;
    fam.metric = metric;
    const Domain& dom = metric.domain();
    const auto tmid = offsets(spec);
    if (metric.dim() == 1) {
        for (double tm : tmid) fam.rays.push_back(centred_ray(metric, dom.lo(), Vec2(1, 0), tm, spec.step));
        for (double tm : tmid) fam.rays.push_back(centred_ray(metric, dom.hi(), Vec2(-1, 0), tm, spec.step));
        return fam;
    }
    if (spec.n_points < 1 || spec.n_dirs < 1) throw ConfigError("transforms", "n_points and n_dirs must be positive");
    std::vector<Vec2> pts, nrm;
    boundary_points(dom, spec.n_points, pts, nrm);
    const double amax = 0.5 * kPi - spec.grazing;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec2 in = -nrm[i];
        for (int j = 0; j < spec.n_dirs; ++j) {
            const double a = spec.n_dirs == 1 ? 0.0 : -amax + 2 * amax * j / (spec.n_dirs - 1);
            const Vec2 v(std::cos(a) * in.x() - std::sin(a) * in.y(), std::sin(a) * in.x() + std::cos(a) * in.y());
            for (double tm : tmid) fam.rays.push_back(centred_ray(metric, pts[i], v, tm, spec.step));
        }
    }
    return fam;
}

RayFamily make_ray_family_1d(const Metric& metric, const std::vector<double>& s_right,
                             const std::vector<double>& s_left, double step) {
    if (metric.dim() != 1) throw PreconditionError("transforms", "1+1D family needs an interval");
    RayFamily fam;
    fam.metric = metric;
    const Domain& dom = metric.domain();
    for (double s : s_right) {
        auto b = make_null_geodesic(metric, s, dom.lo(), unit_in_metric(metric, dom.lo(), Vec2(1, 0)), step);
        fam.rays.push_back(std::move(b));
    }
    for (double s : s_left) {
        auto b = make_null_geodesic(metric, s, dom.hi(), unit_in_metric(metric, dom.hi(), Vec2(-1, 0)), step);
        fam.rays.push_back(std::move(b));
    }
    return fam;
}

namespace {

template <class F>
void simpson_nodes(double len, int segments, const F& visit) {
    const int n = std::max(2, segments + (segments & 1));
    const double h = len / n;
    for (int i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 1.0 : (i & 1 ? 4.0 : 2.0);
        visit(i * h, w * h / 3.0);
    }
}

}  // namespace

std::vector<double> light_ray_transform(const SpaceTimeFn& f, const RayFamily& family, int segments) {
    std::vector<double> out(family.size(), 0.0);
    parallel_for(family.size(), [&](std::size_t r) {
        const NullGeodesic& b = family.rays[r];
        double acc = 0.0;
        simpson_nodes(b.geodesic.tau_plus, segments, [&](double rr, double w) { acc += w * f(b.t(rr), b.x(rr)); });
        out[r] = acc;
    });
    return out;
}

// ---------------------------------------------------------------- operator

std::vector<double> RayOperator::apply(const std::vector<double>& f) const {
    if (f.size() != cols()) throw PreconditionError("transforms", "unknown vector has the wrong length");
    std::vector<double> y(rows(), 0.0);
    parallel_for(rows(), [&](std::size_t r) {
        double acc = 0.0;
        for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) acc += val_[p] * f[col_[p]];
        y[r] = acc;
    });
    return y;
}

std::vector<double> RayOperator::apply_transpose(const std::vector<double>& y) const {
    if (y.size() != rows()) throw PreconditionError("transforms", "data vector has the wrong length");
    std::vector<double> f(cols(), 0.0);
    // transpose kept in CSC form so the gather is deterministic
    parallel_for(cols(), [&](std::size_t c) {
        double acc = 0.0;
        for (std::size_t p = tptr_[c]; p < tptr_[c + 1]; ++p) acc += tval_[p] * y[trow_[p]];
        f[c] = acc;
    });
    return f;
}

double RayOperator::frobenius2() const {
    double acc = 0.0;
    for (double v : val_) acc += v * v;
    return acc;
}

double RayOperator::row_sum(std::size_t r) const {
    double acc = 0.0;
    for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) acc += val_[p];
    return acc;
}

std::vector<double> RayOperator::expand(const std::vector<double>& f) const {
    std::vector<double> out(mask_.size(), 0.0);
    for (std::size_t c = 0; c < col_cell_.size(); ++c) out[col_cell_[c]] = f[c];
    return out;
}

std::vector<double> RayOperator::restrict_to_mask(const std::vector<double>& field) const {
    std::vector<double> out(col_cell_.size());
    for (std::size_t c = 0; c < col_cell_.size(); ++c) out[c] = field[col_cell_[c]];
    return out;
}

std::vector<double> RayOperator::sample(const SpaceTimeFn& f) const {
    std::vector<double> out(col_cell_.size());
    const std::size_t nn = grid_->nodes();
    for (std::size_t c = 0; c < col_cell_.size(); ++c) {
        const std::size_t cell = col_cell_[c];
        out[c] = f(grid_->t(static_cast<int>(cell / nn)), grid_->point(cell % nn));
    }
    return out;
}

int RayOperator::min_coverage() const {
    return coverage_.empty() ? 0 : *std::min_element(coverage_.begin(), coverage_.end());
}

std::size_t RayOperator::low_coverage_cells(int threshold) const {
    return static_cast<std::size_t>(
        std::count_if(coverage_.begin(), coverage_.end(), [&](int c) { return c < threshold; }));
}

RayOperator build_ray_operator(const Grid& grid, const RayFamily& family, const std::vector<std::uint8_t>& mask,
                               double quad_step) {
    const std::size_t nn = grid.nodes();
    if (mask.size() != grid.levels() * nn) throw PreconditionError("transforms", "mask does not match the grid");
    if (grid.dim() != family.metric.dim()) throw PreconditionError("transforms", "grid and family dimensions differ");
    RayOperator op;
    op.grid_ = &grid;
    op.mask_ = mask;
    op.cell_col_.assign(mask.size(), -1);
    for (std::size_t c = 0; c < mask.size(); ++c)
        if (mask[c]) {
            op.cell_col_[c] = static_cast<long>(op.col_cell_.size());
            op.col_cell_.push_back(c);
        }
    if (op.col_cell_.empty()) throw CoverageError("transforms", "mask is empty");
    const double q = quad_step > 0 ? quad_step : 0.5 * std::min(grid.h(), grid.dt());
    const int dim = grid.dim();

    std::vector<std::vector<std::pair<std::size_t, double>>> rows(family.size());
    parallel_for(family.size(), [&](std::size_t r) {
        const NullGeodesic& b = family.rays[r];
        const double len = b.geodesic.tau_plus;
        std::vector<std::pair<std::size_t, double>> ent;
        simpson_nodes(len, static_cast<int>(std::ceil(len / q)), [&](double rr, double w) {
            const double t = b.t(rr);
            const Vec2 x = b.x(rr);
            const double ft = std::clamp((t - grid.t0()) / grid.dt(), 0.0, double(grid.nt()));
            const double fx = std::clamp((x.x() - grid.x0()) / grid.h(), 0.0, double(grid.nx() - 1));
            const double fy = dim == 2 ? std::clamp((x.y() - grid.y0()) / grid.h(), 0.0, double(grid.ny() - 1)) : 0.0;
            const int k0 = std::min(static_cast<int>(ft), grid.nt() - 1);
            const int i0 = std::min(static_cast<int>(fx), grid.nx() - 2);
            const int j0 = dim == 2 ? std::min(static_cast<int>(fy), grid.ny() - 2) : 0;
            const double at = ft - k0, ax = fx - i0, ay = fy - j0;
            for (int dk = 0; dk < 2; ++dk)
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < (dim == 2 ? 2 : 1); ++dj) {
                        double wt = w * (dk ? at : 1 - at) * (di ? ax : 1 - ax);
                        if (dim == 2) wt *= dj ? ay : 1 - ay;
                        if (wt == 0.0) continue;
                        const std::size_t cell = (k0 + dk) * nn + grid.index(i0 + di, j0 + dj);
                        const long col = op.cell_col_[cell];
                        if (col >= 0) ent.emplace_back(static_cast<std::size_t>(col), wt);
                    }
        });
        std::sort(ent.begin(), ent.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<std::pair<std::size_t, double>> merged;
        for (const auto& e : ent) {
            if (!merged.empty() && merged.back().first == e.first)
                merged.back().second += e.second;
            else
                merged.push_back(e);
        }
        rows[r] = std::move(merged);
    });

    op.row_ptr_.assign(1, 0);
    op.coverage_.assign(op.col_cell_.size(), 0);
    for (const auto& row : rows) {
        for (const auto& [c, v] : row) {
            op.col_.push_back(c);
            op.val_.push_back(v);
            if (v > 1e-14) ++op.coverage_[c];
        }
        op.row_ptr_.push_back(op.col_.size());
    }
    // CSC copy for the transpose
    const std::size_t nc = op.col_cell_.size();
    op.tptr_.assign(nc + 1, 0);
    for (std::size_t c : op.col_) ++op.tptr_[c + 1];
    std::partial_sum(op.tptr_.begin(), op.tptr_.end(), op.tptr_.begin());
    op.trow_.resize(op.col_.size());
    op.tval_.resize(op.col_.size());
    std::vector<std::size_t> fill(op.tptr_.begin(), op.tptr_.end() - 1);
    for (std::size_t r = 0; r + 1 < op.row_ptr_.size(); ++r)
        for (std::size_t p = op.row_ptr_[r]; p < op.row_ptr_[r + 1]; ++p) {
            const std::size_t c = op.col_[p];
            op.trow_[fill[c]] = r;
            op.tval_[fill[c]++] = op.val_[p];
        }

    const auto worst = std::min_element(op.coverage_.begin(), op.coverage_.end());
    if (*worst < 1) {
        const std::size_t cell = op.col_cell_[worst - op.coverage_.begin()];
        const Vec2 x = grid.point(cell % nn);
        std::ostringstream os;
        os << "masked cell at t=" << grid.t(static_cast<int>(cell / nn)) << ", x=(" << x.x() << ", " << x.y()
           << ") is not crossed by any ray";
        throw CoverageError("transforms", os.str());
    }

    // gradient edges: neighbours in t, x (and y)
    const int nx = grid.nx(), ny = grid.ny();
    const int nt = grid.nt();
    for (std::size_t c = 0; c < nc; ++c) {
        const std::size_t cell = op.col_cell_[c];
        const int k = static_cast<int>(cell / nn);
        const std::size_t node = cell % nn;
        const int i = grid.ix(node), j = grid.iy(node);
        auto visit = [&](int kk, int ii, int jj, double w, int axis) {
            if (kk < 0 || kk > nt || ii < 0 || ii >= nx || jj < 0 || jj >= ny) return;
            const long other = op.cell_col_[static_cast<std::size_t>(kk) * nn + grid.index(ii, jj)];
            if (other < 0)
                op.edges_.push_back({static_cast<long>(c), -1, w, axis});
            else if (other > static_cast<long>(c))
                op.edges_.push_back({static_cast<long>(c), other, w, axis});
        };
        for (int d : {-1, 1}) {
            visit(k + d, i, j, 1.0 / grid.dt(), 0);
            visit(k, i + d, j, 1.0 / grid.h(), 1);
            if (dim == 2) visit(k, i, j + d, 1.0 / grid.h(), 2);
        }
    }
    return op;
}

// ---------------------------------------------------------------- inversion

namespace {

std::vector<double> gradient_normal(const RayOperator& op, const std::vector<double>& f, double time_weight) {
    std::vector<double> out(f.size(), 0.0);
    for (const auto& e : op.edges()) {
        const double w = e.axis == 0 ? time_weight * e.w : e.w;
        const double d = w * (f[e.i] - (e.j >= 0 ? f[e.j] : 0.0));
        out[e.i] += w * d;
        if (e.j >= 0) out[e.j] -= w * d;
    }
    return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

struct CgOutcome {
    int iterations = 0;
    bool converged = false;
    std::vector<double> history;
};

CgOutcome cg(const RayOperator& op, double lambda, double time_weight, const std::vector<double>& rhs,
             std::vector<double>& x, double tol, int max_iter) {
    CgOutcome out;
    auto M = [&](const std::vector<double>& v) {
        auto r = op.apply_transpose(op.apply(v));
        if (lambda > 0) {
            const auto g = gradient_normal(op, v, time_weight);
            for (std::size_t i = 0; i < r.size(); ++i) r[i] += lambda * g[i];
        }
        return r;
    };
    const double bn = std::sqrt(dot(rhs, rhs));
    if (bn == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        out.converged = true;
        return out;
    }
    auto Mx = M(x);
    std::vector<double> r(rhs.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rhs[i] - Mx[i];
    std::vector<double> p = r;
    double rr = dot(r, r);
    out.history.push_back(std::sqrt(rr));
    for (int it = 1; it <= max_iter; ++it) {
        if (std::sqrt(rr) <= tol * bn) {
            out.converged = true;
            break;
        }
        const auto Mp = M(p);
        const double alpha = rr / dot(p, Mp);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * Mp[i];
        }
        const double rr_new = dot(r, r);
        out.history.push_back(std::sqrt(rr_new));
        out.iterations = it;
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    }
    if (!out.converged && std::sqrt(rr) <= tol * bn) out.converged = true;
    return out;
}

double data_residual(const RayOperator& op, const std::vector<double>& f, const std::vector<double>& d) {
    const auto Af = op.apply(f);
    double acc = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) acc += (Af[i] - d[i]) * (Af[i] - d[i]);
    return std::sqrt(acc);
}

}  // namespace

InversionResult invert_ray_transform(const RayOperator& op, const std::vector<double>& data,
                                     const InversionOptions& opt) {
    if (data.size() != op.rows()) throw PreconditionError("transforms", "data length differs from the ray count");
    const auto rhs = op.apply_transpose(data);
    InversionResult res;

    auto fail = [&](double lambda, const CgOutcome& o) {
        std::ostringstream os;
        os << "CG did not converge in " << opt.max_iter << " iterations (lambda " << lambda << "); residual history:";
        const std::size_t n = o.history.size();
        for (std::size_t i = n > 8 ? n - 8 : 0; i < n; ++i) os << ' ' << o.history[i];
        throw InversionError("transforms", os.str());
    };

    if (opt.lambda >= 0) {
        std::vector<double> x(op.cols(), 0.0);
        const auto o = cg(op, opt.lambda, opt.time_weight, rhs, x, opt.tol, opt.max_iter);
        if (!o.converged) fail(opt.lambda, o);
        res.unknowns = std::move(x);
        res.lambda = opt.lambda;
        res.iterations = o.iterations;
        res.residual_history = o.history;
    } else {
        // λ grid anchored at the ratio of the squared Frobenius norms of A and ∇
        double g2 = 0.0;
        for (const auto& ed : op.edges()) {
            const double w = ed.axis == 0 ? opt.time_weight * ed.w : ed.w;
            g2 += (ed.j >= 0 ? 2.0 : 1.0) * w * w;
        }
        const double a2 = op.frobenius2();
        const double scale = g2 > 0 ? a2 / g2 : 1.0;
        std::vector<double> x(op.cols(), 0.0);
        const double limit = opt.discrepancy * opt.noise_level * std::sqrt(double(op.rows()));
        int chosen = -1;
        std::vector<std::vector<double>> sols;
        std::vector<CgOutcome> outs;
        for (int k = 0; k < opt.sweep_points; ++k) {
            const double lam =
                10.0 * scale * std::pow(10.0, -opt.sweep_decades * k / std::max(1, opt.sweep_points - 1));
            const auto o = cg(op, lam, opt.time_weight, rhs, x, opt.tol, opt.max_iter);
            const double r = data_residual(op, x, data);
            res.sweep.push_back({lam, r, o.iterations, o.converged});
            sols.push_back(x);
            outs.push_back(o);
        }
        // discrepancy principle: the largest λ whose residual is at the noise level
        if (opt.noise_level > 0)
            for (int k = 0; k < opt.sweep_points; ++k)
                if (res.sweep[k].converged && res.sweep[k].residual <= limit) {
                    chosen = k;
                    break;
                }
        // otherwise quasi-optimality: the λ where consecutive solutions change least
        if (chosen < 0) {
            double best = std::numeric_limits<double>::infinity();
            for (int k = 0; k + 1 < opt.sweep_points; ++k) {
                if (!res.sweep[k].converged || !res.sweep[k + 1].converged) continue;
                double d = 0.0;
                for (std::size_t i = 0; i < sols[k].size(); ++i) d += std::pow(sols[k + 1][i] - sols[k][i], 2);
                if (d < best) {
                    best = d;
                    chosen = k;
                }
            }
        }
        if (chosen < 0)
            for (int k = opt.sweep_points - 1; k >= 0; --k)
                if (res.sweep[k].converged) {
                    chosen = k;
                    break;
                }
        if (chosen < 0) fail(res.sweep.back().lambda, outs.back());
        res.unknowns = sols[chosen];
        res.lambda = res.sweep[chosen].lambda;
        res.iterations = outs[chosen].iterations;
        res.residual_history = outs[chosen].history;
    }
    res.residual = data_residual(op, res.unknowns, data);
    res.field = op.expand(res.unknowns);
    return res;
}

double relative_l2(const RayOperator& op, const std::vector<double>& field, const std::vector<double>& truth) {
    const Grid& g = op.grid();
    const std::size_t nn = g.nodes();
    double num = 0.0, den = 0.0;
    for (std::size_t cell : op.column_cells()) {
        const double w = g.cell_weight(cell % nn);
        num += w * (field[cell] - truth[cell]) * (field[cell] - truth[cell]);
        den += w * truth[cell] * truth[cell];
    }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace beamtomo
