#include "beamtomo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace beamtomo {

namespace {

Vec2 rot90(const Vec2& v) { return Vec2(-v.y(), v.x()); }

}  // namespace

// ---------------------------------------------------------------- Domain

Domain Domain::interval(double a, double b) {
    if (!(b > a)) throw PreconditionError("geometry", "interval needs a < b");
    Domain d;
    d.kind_ = DomainKind::interval;
    d.lo_ = Vec2(a, 0.0);
    d.hi_ = Vec2(b, 0.0);
    return d;
}

Domain Domain::disk(const Vec2& center, double radius) {
    if (!(radius > 0)) throw PreconditionError("geometry", "disk radius must be positive");
    Domain d;
    d.kind_ = DomainKind::disk;
    d.center_ = center;
    d.radius_ = radius;
    d.lo_ = center - Vec2(radius, radius);
    d.hi_ = center + Vec2(radius, radius);
    return d;
}

Domain Domain::rectangle(double x0, double x1, double y0, double y1) {
    if (!(x1 > x0 && y1 > y0)) throw PreconditionError("geometry", "rectangle needs x0 < x1, y0 < y1");
    Domain d;
    d.kind_ = DomainKind::rectangle;
    d.lo_ = Vec2(x0, y0);
    d.hi_ = Vec2(x1, y1);
    return d;
}

double Domain::signed_distance(const Vec2& x) const {
    switch (kind_) {
        case DomainKind::interval:
            return std::max(lo_.x() - x.x(), x.x() - hi_.x());
        case DomainKind::disk:
            return (x - center_).norm() - radius_;
        case DomainKind::rectangle: {
            const Vec2 c = 0.5 * (lo_ + hi_);
            const Vec2 half = 0.5 * (hi_ - lo_);
            const Vec2 q = (x - c).cwiseAbs() - half;
            const double outside = q.cwiseMax(0.0).norm();
            const double inside = std::min(std::max(q.x(), q.y()), 0.0);
            return outside + inside;
        }
    }
    return 0.0;
}

Vec2 Domain::project(const Vec2& x) const {
    switch (kind_) {
        case DomainKind::interval:
            return Vec2(std::clamp(x.x(), lo_.x(), hi_.x()), 0.0);
        case DomainKind::disk: {
            const Vec2 d = x - center_;
            const double r = d.norm();
            if (r <= radius_) return x;
            return center_ + d * (radius_ / r);
        }
        case DomainKind::rectangle:
            return x.cwiseMax(lo_).cwiseMin(hi_);
    }
    return x;
}

double Domain::line_exit(const Vec2& x, const Vec2& v) const {
    const double inf = std::numeric_limits<double>::infinity();
    switch (kind_) {
        case DomainKind::interval:
            if (v.x() > 0) return std::max(0.0, (hi_.x() - x.x()) / v.x());
            if (v.x() < 0) return std::max(0.0, (lo_.x() - x.x()) / v.x());
            return inf;
        case DomainKind::disk: {
            const Vec2 d = x - center_;
            const double a = v.squaredNorm();
            const double b = d.dot(v);
            const double c = d.squaredNorm() - radius_ * radius_;
            const double disc = b * b - a * c;
            if (disc < 0) return 0.0;
            return std::max(0.0, (-b + std::sqrt(disc)) / a);
        }
        case DomainKind::rectangle: {
            double r = inf;
            for (int k = 0; k < 2; ++k) {
                if (v[k] > 0) r = std::min(r, (hi_[k] - x[k]) / v[k]);
                if (v[k] < 0) r = std::min(r, (lo_[k] - x[k]) / v[k]);
            }
            return std::max(0.0, r);
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------- Metric

ConformalFactor ConformalFactor::constant(double c) {
    ConformalFactor f;
    f.value = [c](const Vec2&) { return c; };
    f.gradient = [](const Vec2&) { return Vec2(0, 0); };
    return f;
}

ConformalFactor ConformalFactor::sine(double amp, double k, int axis) {
    ConformalFactor f;
    f.value = [=](const Vec2& x) { return 1.0 + amp * std::sin(k * kPi * x[axis]); };
    f.gradient = [=](const Vec2& x) {
        Vec2 g(0, 0);
        g[axis] = amp * k * kPi * std::cos(k * kPi * x[axis]);
        return g;
    };
    return f;
}

Metric Metric::euclidean(const Domain& domain) {
    Metric m;
    m.kind_ = MetricKind::euclidean;
    m.domain_ = domain;
    return m;
}

Metric Metric::conformal(const Domain& domain, ConformalFactor c, double padding) {
    if (!c.value) throw PreconditionError("geometry", "conformal metric needs a factor");
    Metric m;
    m.kind_ = MetricKind::conformal;
    m.domain_ = domain;
    m.factor_ = std::move(c);
    m.padding_ = padding;
    return m;
}

double Metric::c_raw(const Vec2& x) const { return factor_.value(x); }

Vec2 Metric::grad_raw(const Vec2& x) const {
    if (factor_.gradient) return mask(factor_.gradient(x));
    const double h = 1e-4;
    Vec2 g(0, 0);
    for (int k = 0; k < dim(); ++k) {
        Vec2 e(0, 0);
        e[k] = h;
        g[k] = (-c_raw(x + 2 * e) + 8 * c_raw(x + e) - 8 * c_raw(x - e) + c_raw(x - 2 * e)) / (12 * h);
    }
    return g;
}

double Metric::c(const Vec2& x) const {
    if (kind_ == MetricKind::euclidean) return 1.0;
    double v;
    if (padding_ > 0) {
        const double d = domain_.signed_distance(x);
        if (d > 0) {
            const double w = smooth_step(d / padding_);
            v = (1.0 - w) * c_raw(x) + w * c_raw(domain_.project(x));
        } else {
            v = c_raw(x);
        }
    } else {
        v = c_raw(x);
    }
    if (!(v > 0) || !std::isfinite(v)) throw NumericError("geometry", "conformal factor not positive");
    return v;
}

Vec2 Metric::grad_log_c(const Vec2& x) const {
    if (kind_ == MetricKind::euclidean) return Vec2(0, 0);
    if (padding_ <= 0 || domain_.signed_distance(x) <= 0) return grad_raw(x) / c_raw(x);
    const double h = 1e-6;
    Vec2 g(0, 0);
    for (int k = 0; k < dim(); ++k) {
        Vec2 e(0, 0);
        e[k] = h;
        g[k] = (std::log(c(x + e)) - std::log(c(x - e))) / (2 * h);
    }
    return g;
}

Eigen::Matrix2d Metric::hess_log_c(const Vec2& x) const {
    Eigen::Matrix2d H = Eigen::Matrix2d::Zero();
    if (kind_ == MetricKind::euclidean) return H;
    const double h = 1e-5;
    for (int k = 0; k < dim(); ++k) {
        Vec2 e(0, 0);
        e[k] = h;
        H.col(k) = (grad_log_c(x + e) - grad_log_c(x - e)) / (2 * h);
    }
    return 0.5 * (H + H.transpose());
}

Vec2 Metric::christoffel(const Vec2& x, const Vec2& u, const Vec2& w) const {
    if (kind_ == MetricKind::euclidean) return Vec2(0, 0);
    const Vec2 l = grad_log_c(x);
    return mask(u * l.dot(w) + w * l.dot(u) - u.dot(w) * l);
}

double Metric::c_min_sampled(int n) const {
    if (kind_ == MetricKind::euclidean) return 1.0;
    double cmin = std::numeric_limits<double>::infinity();
    const Vec2 lo = domain_.lo(), hi = domain_.hi();
    const int ny = dim() == 2 ? n : 1;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < n; ++i) {
            Vec2 x(lo.x() + (hi.x() - lo.x()) * i / (n - 1), dim() == 2 ? lo.y() + (hi.y() - lo.y()) * j / (n - 1) : 0.0);
            if (!domain_.contains(x, 1e-12)) continue;
            cmin = std::min(cmin, c(x));
        }
    return cmin;
}

// ---------------------------------------------------------------- geodesics

namespace {

struct State {
    Vec2 x, v, e;
};

State rhs(const Metric& m, const State& s, bool frame) {
    State d;
    d.x = s.v;
    d.v = -m.christoffel(s.x, s.v, s.v);
    d.e = frame ? Vec2(-m.christoffel(s.x, s.v, s.e)) : Vec2(0, 0);
    return d;
}

State axpy(const State& s, double h, const State& d) { return {s.x + h * d.x, s.v + h * d.v, s.e + h * d.e}; }

State rk4(const Metric& m, const State& s, double h, bool frame) {
    if (m.flat()) return {s.x + h * s.v, s.v, s.e};
    const State k1 = rhs(m, s, frame);
    const State k2 = rhs(m, axpy(s, 0.5 * h, k1), frame);
    const State k3 = rhs(m, axpy(s, 0.5 * h, k2), frame);
    const State k4 = rhs(m, axpy(s, h, k3), frame);
    return {s.x + h / 6 * (k1.x + 2 * k2.x + 2 * k3.x + k4.x), s.v + h / 6 * (k1.v + 2 * k2.v + 2 * k3.v + k4.v),
            s.e + h / 6 * (k1.e + 2 * k2.e + 2 * k3.e + k4.e)};
}

void check_unit(const Metric& m, const Vec2& x, const Vec2& v) {
    if (std::abs(m.norm(x, v) - 1.0) > 1e-10)
        throw PreconditionError("geometry", "initial direction is not g-unit");
}

}  // namespace

void geodesic_rk4(const Metric& m, Vec2& x, Vec2& v, double h) {
    State s = rk4(m, {x, v, Vec2(0, 0)}, h, false);
    x = s.x;
    v = s.v;
}

GeodesicSample Geodesic::at(double r) const {
    if (samples.empty()) throw PreconditionError("geometry", "empty geodesic");
    r = std::clamp(r, 0.0, samples.back().r);
    std::size_t n_uniform = samples.size();
    if (n_uniform > 1 && std::abs(samples.back().r - (n_uniform - 1) * step) > 1e-12) --n_uniform;
    std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(r / step), n_uniform - 1);
    const auto& s = samples[i];
    const double h = r - s.r;
    if (h == 0.0) return s;
    State out = rk4(metric, {s.x, s.v, Vec2(0, 0)}, h, false);
    return {r, out.x, out.v};
}

Geodesic trace_geodesic(const Metric& metric, const Vec2& x0, const Vec2& v0, double step, double max_len) {
    const Domain& dom = metric.domain();
    if (dom.signed_distance(x0) > 1e-9) throw PreconditionError("geometry", "x0 outside the closure of Omega");
    check_unit(metric, x0, v0);
    Geodesic g;
    g.metric = metric;
    g.x0 = x0;
    g.v0 = v0;
    g.step = step;
    g.samples.push_back({0.0, x0, v0});
    State s{x0, v0, Vec2(0, 0)};
    double r = 0.0;
    while (true) {
        if (r > max_len) throw TrappedRayError("geometry", "geodesic exceeded max_len without exiting");
        State next = rk4(metric, s, step, false);
        if (dom.signed_distance(next.x) > 0.0) {
            double lo = 0.0, hi = step;
            while (hi - lo > 1e-8 * step) {
                const double mid = 0.5 * (lo + hi);
                if (dom.signed_distance(rk4(metric, s, mid, false).x) > 0.0)
                    hi = mid;
                else
                    lo = mid;
            }
            const double h = 0.5 * (lo + hi);
            State fin = rk4(metric, s, h, false);
            g.tau_plus = r + h;
            g.samples.push_back({g.tau_plus, fin.x, fin.v});
            return g;
        }
        s = next;
        r += step;
        g.samples.push_back({r, s.x, s.v});
    }
}

Geodesic integrate_geodesic(const Metric& metric, const Vec2& x0, const Vec2& v0, double step, double length) {
    const int n = std::max(1, static_cast<int>(std::ceil(length / step - 1e-12)));
    const double h = length / n;
    Geodesic g;
    g.metric = metric;
    g.x0 = x0;
    g.v0 = v0;
    g.step = h;
    g.tau_plus = length;
    State s{x0, v0, Vec2(0, 0)};
    g.samples.push_back({0.0, x0, v0});
    for (int i = 1; i <= n; ++i) {
        s = rk4(metric, s, h, false);
        g.samples.push_back({i * h, s.x, s.v});
    }
    return g;
}

NullGeodesic make_null_geodesic(const Metric& metric, double s, const Vec2& x0, const Vec2& v0, double step) {
    NullGeodesic b;
    b.s = s;
    b.geodesic = trace_geodesic(metric, x0, v0, step);
    return b;
}

std::vector<Vec2> parallel_frame(const Geodesic& geodesic) {
    if (geodesic.samples.size() < 2) throw PreconditionError("geometry", "frame needs two samples");
    std::vector<Vec2> frame;
    if (geodesic.metric.dim() == 1) return frame;
    const Metric& m = geodesic.metric;
    State s{geodesic.samples[0].x, geodesic.samples[0].v, rot90(geodesic.samples[0].v)};
    frame.push_back(s.e);
    for (std::size_t i = 1; i < geodesic.samples.size(); ++i) {
        s = rk4(m, s, geodesic.samples[i].r - geodesic.samples[i - 1].r, true);
        if (!std::isfinite(s.e.x()) || !std::isfinite(s.e.y())) throw NumericError("geometry", "frame transport diverged");
        frame.push_back(s.e);
    }
    return frame;
}

// ---------------------------------------------------------------- Fermi chart

FermiChart::FermiChart(const NullGeodesic& beta, const ChartOptions& opt) {
    const Geodesic& geo = beta.geodesic;
    metric_ = geo.metric;
    dim_ = metric_.dim();
    s_ = beta.s;
    tau_ = geo.tau_plus;
    eps_ = opt.eps >= 0 ? opt.eps : 0.05 * tau_;
    step_ = opt.step;
    if (!(eps_ > 0)) throw PreconditionError("geometry", "chart margin eps must be positive");

    a_ = kSqrt2 * (s_ - eps_);
    b_ = kSqrt2 * (s_ + tau_ + eps_);
    a0_ = kSqrt2 * s_ - eps_;
    b0_ = kSqrt2 * (s_ + tau_) + eps_;

    if (opt.delta_prime > 0) {
        delta_prime_ = opt.delta_prime;
    } else {
        double d_time = std::numeric_limits<double>::infinity();
        if (opt.T > 0) d_time = std::min(s_ - eps_, opt.T - (s_ + tau_ + eps_));
        delta_prime_ = std::min(0.1 * d_time, 0.5 * eps_);
    }
    if (!(delta_prime_ > 0)) throw ChartDomainError("geometry", "extended geodesic touches the time boundary");
    if (delta_prime_ >= eps_) throw PreconditionError("geometry", "tube radius must be smaller than the margin eps");
    if (opt.T > 0) {
        const double t_lo = (a0_ - delta_prime_) / kSqrt2;
        const double t_hi = (b0_ + delta_prime_) / kSqrt2;
        if (t_lo <= 0.0 || t_hi >= opt.T)
            throw ChartDomainError("geometry", "chart tube touches t = 0 or t = T");
    }

    // extend backwards by eps, then sample the extended geodesic with its frame
    Geodesic back = integrate_geodesic(metric_, geo.x0, -geo.v0, std::min(step_, eps_), eps_);
    const Vec2 x_start = back.samples.back().x;
    const Vec2 v_start = -back.samples.back().v;
    length_ = tau_ + 2 * eps_;
    const int n = std::max(2, static_cast<int>(std::ceil(length_ / step_)));
    step_ = length_ / n;
    State s{x_start, v_start, rot90(v_start)};
    base_.reserve(n + 1);
    base_.push_back({s.x, s.v, s.e});
    for (int i = 1; i <= n; ++i) {
        s = rk4(metric_, s, step_, dim_ == 2);
        base_.push_back({s.x, s.v, s.e});
    }
    if (!metric_.flat()) check_round_trip();
}

FermiChart build_fermi_chart(const NullGeodesic& beta, const ChartOptions& opt) { return FermiChart(beta, opt); }

FermiChart::Base FermiChart::base_at(double sigma) const {
    sigma = std::clamp(sigma, 0.0, length_);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(sigma / step_), base_.size() - 1);
    const Base& b = base_[i];
    const double h = sigma - i * step_;
    if (h == 0.0) return b;
    if (metric_.flat()) return {b.x + h * b.v, b.v, b.e};
    State out = rk4(metric_, {b.x, b.v, b.e}, h, dim_ == 2);
    return {out.x, out.v, out.e};
}

void FermiChart::exp_map(double sigma, double y, Vec2& x, Vec2* dx_dsigma, Vec2* dx_dy) const {
    const Base b = base_at(sigma);
    if (dim_ == 1) {
        x = b.x;
        if (dx_dsigma) *dx_dsigma = b.v;
        if (dx_dy) *dx_dy = Vec2(0, 0);
        return;
    }
    if (metric_.flat()) {
        x = b.x + y * b.e;
        if (dx_dsigma) *dx_dsigma = b.v;
        if (dx_dy) *dx_dy = b.e;
        return;
    }
    // transverse geodesic from (x_b, E) plus one variation (δx, δv) for ∂/∂σ
    const Metric& m = metric_;
    Vec2 px = b.x, pv = b.e;
    Vec2 dx = b.v, dv = -m.christoffel(b.x, b.v, b.e);
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(y) / 2e-3)));
    const double h = y / n;
    auto f = [&](const Vec2& X, const Vec2& V, const Vec2& DX, const Vec2& DV, Vec2& oX, Vec2& oV, Vec2& oDX,
                 Vec2& oDV) {
        const Vec2 l = m.grad_log_c(X);
        const Eigen::Matrix2d H = m.hess_log_c(X);
        oX = V;
        oV = -2.0 * V * l.dot(V) + V.squaredNorm() * l;
        const Eigen::Matrix2d dGdv = -2.0 * (V * l.transpose() + l.dot(V) * Eigen::Matrix2d::Identity()) +
                                     2.0 * l * V.transpose();
        const Eigen::Matrix2d dGdx = -2.0 * V * (H * V).transpose() + V.squaredNorm() * H;
        oDX = DV;
        oDV = dGdx * DX + dGdv * DV;
    };
    for (int i = 0; i < n; ++i) {
        Vec2 k1x, k1v, k1dx, k1dv, k2x, k2v, k2dx, k2dv, k3x, k3v, k3dx, k3dv, k4x, k4v, k4dx, k4dv;
        f(px, pv, dx, dv, k1x, k1v, k1dx, k1dv);
        f(px + 0.5 * h * k1x, pv + 0.5 * h * k1v, dx + 0.5 * h * k1dx, dv + 0.5 * h * k1dv, k2x, k2v, k2dx, k2dv);
        f(px + 0.5 * h * k2x, pv + 0.5 * h * k2v, dx + 0.5 * h * k2dx, dv + 0.5 * h * k2dv, k3x, k3v, k3dx, k3dv);
        f(px + h * k3x, pv + h * k3v, dx + h * k3dx, dv + h * k3dv, k4x, k4v, k4dx, k4dv);
        px += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
        pv += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
        dx += h / 6 * (k1dx + 2 * k2dx + 2 * k3dx + k4dx);
        dv += h / 6 * (k1dv + 2 * k2dv + 2 * k3dv + k4dv);
    }
    x = px;
    if (dx_dsigma) *dx_dsigma = dx;
    if (dx_dy) *dx_dy = pv;
}

bool FermiChart::invert_spatial(const Vec2& x, double& sigma, double& y) const {
    if (metric_.flat()) {
        const Vec2 d = x - base_[0].x;
        sigma = d.dot(base_[0].v);
        y = dim_ == 2 ? d.dot(base_[0].e) : 0.0;
        return sigma >= 0.0 && sigma <= length_;
    }
    // nearest base sample, then Newton on (σ, y)
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < base_.size(); ++i) {
        const double d = (base_[i].x - x).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    sigma = best * step_;
    const double cb = metric_.c(base_[best].x);
    y = dim_ == 2 ? cb * cb * (x - base_[best].x).dot(base_[best].e) : 0.0;
    for (int it = 0; it < 50; ++it) {
        Vec2 xm, ds, dy;
        exp_map(sigma, y, xm, &ds, &dy);
        const Vec2 r = xm - x;
        if (r.norm() < 1e-14) break;
        if (dim_ == 1) {
            sigma -= r.x() / ds.x();
        } else {
            Eigen::Matrix2d J;
            J.col(0) = ds;
            J.col(1) = dy;
            const Vec2 d = J.fullPivLu().solve(r);
            sigma -= d.x();
            y -= d.y();
        }
        if (!std::isfinite(sigma) || !std::isfinite(y)) return false;
    }
    Vec2 xm;
    exp_map(sigma, y, xm, nullptr, nullptr);
    if ((xm - x).norm() > 1e-10) return false;
    return sigma >= 0.0 && sigma <= length_;
}

void FermiChart::check_round_trip() const {
    const int ns = 7, ny = dim_ == 2 ? 5 : 1;
    for (int i = 0; i < ns; ++i) {
        for (int j = 0; j < ny; ++j) {
            const double sigma = length_ * (0.1 + 0.8 * i / (ns - 1));
            const double y = dim_ == 2 ? delta_prime_ * (-1.0 + 2.0 * j / (ny - 1)) : 0.0;
            Vec2 x;
            exp_map(sigma, y, x, nullptr, nullptr);
            double s2 = 0, y2 = 0;
            if (!invert_spatial(x, s2, y2) || std::abs(s2 - sigma) > 1e-8 || std::abs(y2 - y) > 1e-8)
                throw ConjugatePointError("geometry", "exponential map not invertible on the chart tube");
        }
    }
}

bool FermiChart::to_fermi(double t, const Vec2& x, Eigen::Vector3d& z) const {
    double sigma = 0, y = 0;
    if (!invert_spatial(x, sigma, y)) return false;
    z[0] = (t + sigma) / kSqrt2 + 0.5 * a_;
    z[1] = (-t + sigma) / kSqrt2 + 0.5 * a_;
    z[2] = y;
    return true;
}

void FermiChart::from_fermi(const Eigen::Vector3d& z, double& t, Vec2& x) const {
    const double sigma = (z[0] + z[1] - a_) / kSqrt2;
    t = (z[0] - z[1]) / kSqrt2;
    exp_map(sigma, dim_ == 2 ? z[2] : 0.0, x, nullptr, nullptr);
}

void FermiChart::axis_point(double z0, double& t, Vec2& x) const { from_fermi(Eigen::Vector3d(z0, 0, 0), t, x); }

Eigen::Matrix3d FermiChart::metric_at(const Eigen::Vector3d& z) const {
    const double sigma = (z[0] + z[1] - a_) / kSqrt2;
    Vec2 x, ds, dy;
    exp_map(sigma, dim_ == 2 ? z[2] : 0.0, x, &ds, &dy);
    const double c2 = std::pow(metric_.c(x), 2);
    Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
    J(0, 0) = 1.0 / kSqrt2;
    J(0, 1) = -1.0 / kSqrt2;
    const int n = dim_;
    for (int k = 0; k < n; ++k) {
        J(1 + k, 0) = ds[k] / kSqrt2;
        J(1 + k, 1) = ds[k] / kSqrt2;
        if (n == 2) J(1 + k, 2) = dy[k];
    }
    Eigen::Matrix3d G = Eigen::Matrix3d::Zero();
    G(0, 0) = -1.0;
    for (int k = 0; k < n; ++k) G(1 + k, 1 + k) = c2;
    Eigen::Matrix3d gbar = Eigen::Matrix3d::Identity();
    if (n == 2) {
        gbar = J.transpose() * G * J;
    } else {
        const Eigen::Matrix2d J2 = J.topLeftCorner<2, 2>();
        gbar.topLeftCorner<2, 2>() = J2.transpose() * G.topLeftCorner<2, 2>() * J2;
    }
    return gbar;
}

double FermiChart::inverse_g11(const Eigen::Vector3d& z) const {
    const Eigen::Matrix3d g = metric_at(z);
    if (dim_ == 2) return g.inverse()(1, 1);
    return g.topLeftCorner<2, 2>().inverse()(1, 1);
}

// ---------------------------------------------------------------- influence sets

namespace {

double exit_length(const Metric& metric, const Vec2& x, const Vec2& v) {
    if (metric.flat()) return metric.domain().line_exit(x, v);
    const Vec2 u = v / metric.norm(x, v);
    return trace_geodesic(metric, x, u, 2e-3).tau_plus;
}

std::vector<Vec2> directions_for(const Metric& metric, int directions) {
    std::vector<Vec2> dirs;
    if (metric.dim() == 1) {
        dirs = {Vec2(1, 0), Vec2(-1, 0)};
        return dirs;
    }
    const int n = directions > 0 ? directions : 64;
    for (int j = 0; j < n; ++j) {
        const double th = 2 * kPi * j / n;
        dirs.emplace_back(std::cos(th), std::sin(th));
    }
    return dirs;
}

}  // namespace

double longest_geodesic_through(const Metric& metric, const Vec2& x, int directions) {
    if (!metric.domain().contains(x, 1e-12)) return 0.0;
    double best = 0.0;
    for (const Vec2& v : directions_for(metric, directions))
        best = std::max(best, exit_length(metric, x, v) + exit_length(metric, x, -v));
    return best;
}

double distance_to_boundary(const Metric& metric, const Vec2& x, int directions) {
    if (!metric.domain().contains(x, 1e-12)) return 0.0;
    if (metric.flat()) return std::max(0.0, -metric.domain().signed_distance(x));
    double best = std::numeric_limits<double>::infinity();
    for (const Vec2& v : directions_for(metric, directions)) best = std::min(best, exit_length(metric, x, v));
    return best;
}

std::size_t InfluenceMasks::count_E() const {
    return static_cast<std::size_t>(std::count(E.begin(), E.end(), std::uint8_t{1}));
}

InfluenceMasks influence_sets(const Metric& metric, const Grid& grid, double T, int directions) {
    if (grid.dim() != metric.dim()) throw PreconditionError("geometry", "grid and metric dimensions differ");
    InfluenceMasks m;
    m.grid = &grid;
    m.T = T;
    const std::size_t nn = grid.nodes();
    m.D_g.assign(nn, 0.0);
    m.dist.assign(nn, 0.0);
    m.in_domain.assign(nn, 0);
    parallel_for(nn, [&](std::size_t i) {
        const Vec2 x = grid.point(i);
        if (!metric.domain().contains(x, 1e-12)) return;
        m.in_domain[i] = 1;
        m.D_g[i] = longest_geodesic_through(metric, x, directions);
        m.dist[i] = distance_to_boundary(metric, x, directions);
    });
    m.D.assign(grid.levels() * nn, 0);
    m.E.assign(grid.levels() * nn, 0);
    for (std::size_t k = 0; k < grid.levels(); ++k) {
        const double t = grid.t(static_cast<int>(k));
        for (std::size_t i = 0; i < nn; ++i) {
            if (!m.in_domain[i]) continue;
            m.D[k * nn + i] = (t > m.dist[i] && t < T - m.dist[i]) ? 1 : 0;
            m.E[k * nn + i] = (t > m.D_g[i] && t < T - m.D_g[i]) ? 1 : 0;
        }
    }
    return m;
}

}  // namespace beamtomo
