#include <doctest.h>

#include <cmath>

#include "beamtomo/wave_solver.hpp"

using namespace beamtomo;

namespace {

const Domain unit = Domain::interval(0, 1);

SemilinearSpec flat_spec() {
    SemilinearSpec s;
    s.metric = Metric::euclidean(unit);
    return s;
}

double standing_wave_error(double h, double T) {
    const Grid g = Grid::for_domain(unit, h, T, 0.5);
    SolverContext ctx(flat_spec(), g);
    std::vector<double> u0(g.nodes());
    for (std::size_t n = 0; n < g.nodes(); ++n) u0[n] = std::sin(kPi * g.point(n).x());
    LinearInputs<double> in;
    in.u0 = &u0;
    const auto sol = solve_linear(ctx, in);
    double err = 0.0;
    for (std::size_t k = 0; k < g.levels(); ++k)
        for (std::size_t n = 0; n < g.nodes(); ++n)
            err = std::max(err, std::abs(sol.field(k, n) - u0[n] * std::cos(kPi * g.t(static_cast<int>(k)))));
    return err;
}

double bump(double x, double c, double w) { return std::exp(-std::pow((x - c) / w, 2)); }

// u* = sin(πx)cos(πt) with F := 𝓛u*.
double manufactured_error(double h) {
    SemilinearSpec s = flat_spec();
    s.b = Coefficient::spacetime([](double t, const Vec2& x) { return 0.5 * bump(x.x(), 0.4, 0.2) * (1 + 0.3 * t); });
    s.q = Coefficient::spatial([](const Vec2& x) { return 2.0 * bump(x.x(), 0.6, 0.15); });
    const Grid g = Grid::for_domain(unit, h, 1.0, 0.5);
    SolverContext ctx(s, g);
    auto ustar = [](double t, double x) { return std::sin(kPi * x) * std::cos(kPi * t); };
    LinearInputs<double> in;
    in.source = [&](std::size_t k, double* out) {
        const double t = g.t(static_cast<int>(k));
        for (std::size_t n = 0; n < g.nodes(); ++n) {
            const Vec2 p = g.point(n);
            const double x = p.x();
            const double utt = -kPi * kPi * ustar(t, x), uxx = utt;
            const double ut = -kPi * std::sin(kPi * x) * std::sin(kPi * t);
            out[n] = utt - uxx + s.b(t, p) * ut + s.q(t, p) * ustar(t, x);
        }
        return true;
    };
    std::vector<double> u0(g.nodes());
    for (std::size_t n = 0; n < g.nodes(); ++n) u0[n] = ustar(0.0, g.point(n).x());
    in.u0 = &u0;
    const auto sol = solve_linear(ctx, in);
    double err = 0.0;
    for (std::size_t k = 0; k < g.levels(); ++k)
        for (std::size_t n = 0; n < g.nodes(); ++n)
            err = std::max(err, std::abs(sol.field(k, n) - ustar(g.t(static_cast<int>(k)), g.point(n).x())));
    return err;
}

}  // namespace

TEST_CASE("standing wave converges at second order") {
    const double e1 = standing_wave_error(1.0 / 50, 1.0), e2 = standing_wave_error(1.0 / 100, 1.0);
    CHECK(e1 < 1e-2);
    CHECK(std::log2(e1 / e2) >= 1.9);
}

TEST_CASE("manufactured solution with b and q") {
    const double e1 = manufactured_error(1.0 / 50), e2 = manufactured_error(1.0 / 100);
    CHECK(std::log2(e1 / e2) >= 1.9);
}

TEST_CASE("energy is conserved without b and q") {
    const Grid g = Grid::for_domain(unit, 1.0 / 200, 4.0, 0.5);
    SolverContext ctx(flat_spec(), g);
    std::vector<double> u0(g.nodes());
    for (std::size_t n = 0; n < g.nodes(); ++n) u0[n] = std::sin(kPi * g.point(n).x()) + 0.3 * std::sin(3 * kPi * g.point(n).x());
    LinearInputs<double> in;
    in.u0 = &u0;
    const auto sol = solve_linear(ctx, in);
    const double e0 = discrete_energy(sol.field, ctx, 1);
    double drift = 0.0;
    for (std::size_t k = 1; k + 1 < g.levels(); ++k)
        drift = std::max(drift, std::abs(discrete_energy(sol.field, ctx, k) - e0) / e0);
    CHECK(drift < 1e-3);
}

TEST_CASE("adjoint") {
    SUBCASE("b = 0: adjoint solve is the time-reversed forward solve") {
        SemilinearSpec s = flat_spec();
        s.q = Coefficient::spatial([](const Vec2& x) { return 1.0 + x.x(); });
        const Grid g = Grid::for_domain(unit, 1.0 / 100, 2.0, 0.5);
        SolverContext ctx(s, g);
        const std::size_t nt = static_cast<std::size_t>(g.nt());
        auto G = [&](double t, double x) { return bump(x, 0.5, 0.1) * bump(t, 0.7, 0.2); };
        LinearInputs<double> ina, inf;
        ina.source = [&](std::size_t k, double* out) {
            for (std::size_t n = 0; n < g.nodes(); ++n) out[n] = G(g.t(static_cast<int>(k)), g.point(n).x());
            return true;
        };
        inf.source = [&](std::size_t k, double* out) {
            for (std::size_t n = 0; n < g.nodes(); ++n) out[n] = G(g.t(static_cast<int>(nt - k)), g.point(n).x());
            return true;
        };
        const auto a = solve_adjoint(ctx, ina);
        const auto f = solve_linear(ctx, inf);
        double err = 0.0, ref = 0.0;
        for (std::size_t k = 0; k < g.levels(); ++k)
            for (std::size_t n = 0; n < g.nodes(); ++n) {
                err = std::max(err, std::abs(a.field(k, n) - f.field(nt - k, n)));
                ref = std::max(ref, std::abs(f.field(k, n)));
            }
        CHECK(err < 1e-12 * ref);
    }
    SUBCASE("duality defect is second order") {
        auto defect = [](double h) {
            SemilinearSpec s = flat_spec();
            s.b = Coefficient::spacetime([](double t, const Vec2& x) { return 0.4 * bump(x.x(), 0.5, 0.2) * (1 + 0.5 * t); });
            s.q = Coefficient::spatial([](const Vec2& x) { return 1.0 + x.x(); });
            const Grid g = Grid::for_domain(unit, h, 2.0, 0.5);
            SolverContext ctx(s, g);
            auto F = [](double t, double x) { return bump(x, 0.3, 0.08) * bump(t, 0.6, 0.15); };
            auto G = [](double t, double x) { return bump(x, 0.7, 0.08) * bump(t, 1.4, 0.15); };
            LinearInputs<double> inf, ina;
            inf.source = [&](std::size_t k, double* out) {
                for (std::size_t n = 0; n < g.nodes(); ++n) out[n] = F(g.t(static_cast<int>(k)), g.point(n).x());
                return true;
            };
            ina.source = [&](std::size_t k, double* out) {
                for (std::size_t n = 0; n < g.nodes(); ++n) out[n] = G(g.t(static_cast<int>(k)), g.point(n).x());
                return true;
            };
            const auto u = solve_linear(ctx, inf);
            const auto v = solve_adjoint(ctx, ina);
            double lhs = 0.0, rhs = 0.0;
            for (std::size_t k = 0; k < g.levels(); ++k) {
                const double wt = (k == 0 || k + 1 == g.levels()) ? 0.5 : 1.0;
                for (std::size_t n = 0; n < g.nodes(); ++n) {
                    const double t = g.t(static_cast<int>(k)), x = g.point(n).x();
                    lhs += wt * G(t, x) * u.field(k, n);
                    rhs += wt * F(t, x) * v.field(k, n);
                }
            }
            return std::abs(lhs - rhs) / std::abs(lhs);
        };
        const double d1 = defect(1.0 / 100), d2 = defect(1.0 / 200);
        CHECK(d1 < 1e-2);
        CHECK(d2 < d1 / 3.0);
    }
}

TEST_CASE("Picard iteration") {
    const Grid g = Grid::for_domain(unit, 1.0 / 100, 2.0, 0.5);
    auto data = [&](double amp) {
        return boundary_from_function<double>(g, [amp](double t, const Vec2&) {
            return amp * std::exp(-std::pow((t - 0.5) / 0.1, 2)) * smooth_step(2.0 * t);
        });
    };
    SUBCASE("linear f needs one iteration") {
        SemilinearSpec s = flat_spec();
        s.q = Coefficient::constant(1.0);
        SolverContext ctx(s, g);
        const auto h = data(1e-2);
        const auto sol = solve_semilinear<double>(ctx, &h, nullptr, nullptr);
        CHECK(sol.iterations <= 1);
    }
    SUBCASE("cubic nonlinearity contracts for small data") {
        SemilinearSpec s = flat_spec();
        s.q = Coefficient::constant(1.0);
        s.f3 = Coefficient::constant(6.0);
        SolverContext ctx(s, g);
        const auto h = data(1e-2);
        const auto sol = solve_semilinear<double>(ctx, &h, nullptr, nullptr);
        REQUIRE(sol.ratios.size() >= 2);
        for (std::size_t i = 1; i < sol.ratios.size(); ++i) CHECK(sol.ratios[i] <= 0.5);
        const auto h10 = data(10.0);
        CHECK_THROWS_AS(solve_semilinear<double>(ctx, &h10, nullptr, nullptr), ContractionFailure);
    }
}

TEST_CASE("Neumann trace of the standing wave") {
    for (double h : {1.0 / 100, 1.0 / 200}) {
        const Grid g = Grid::for_domain(unit, h, 1.0, 0.5);
        RField u(g, "u");
        for (std::size_t k = 0; k < g.levels(); ++k)
            for (std::size_t n = 0; n < g.nodes(); ++n)
                u(k, n) = std::sin(kPi * g.point(n).x()) * std::cos(kPi * g.t(static_cast<int>(k)));
        const auto tr = neumann_trace(u);
        double err = 0.0;
        for (std::size_t k = 0; k < tr.levels; ++k)
            for (std::size_t i = 0; i < tr.slots; ++i)
                err = std::max(err, std::abs(tr(k, i) + kPi * std::cos(kPi * g.t(static_cast<int>(k)))));
        CHECK(err < 20.0 * h * h);
        RField u2(g, "u2");
        for (std::size_t i = 0; i < u.data.size(); ++i) u2.data[i] = 3.0 * u.data[i];
        const auto tr2 = neumann_trace(u2);
        for (std::size_t i = 0; i < tr.data.size(); ++i) CHECK(tr2.data[i] == doctest::Approx(3.0 * tr.data[i]));
    }
}

TEST_CASE("Taylor boundary data") {
    const Domain d = Domain::interval(0.1, 0.8);
    SemilinearSpec s;
    s.metric = Metric::euclidean(d);
    const Grid g = Grid::for_domain(d, 0.7 / 70, 1.0, 0.5);
    const Profile mu = [](const Vec2& x) { return std::sin(kPi * x.x()); };
    const TaylorData td = boundary_data_from_mu(mu, s, 4, g);
    const auto& bn = g.boundary_nodes();
    for (std::size_t i = 0; i < bn.size(); ++i) {
        const double m0 = mu(g.point(bn[i]));
        CHECK(td.coef[i][0] == doctest::Approx(m0).epsilon(1e-14));
        CHECK(std::abs(td.coef[i][1]) < 1e-12);
        CHECK(td.coef[i][2] == doctest::Approx(-kPi * kPi * m0).epsilon(1e-3));
        CHECK(std::abs(td.coef[i][3]) < 1e-8);
        CHECK(td.coef[i][4] == doctest::Approx(std::pow(kPi, 4) * m0).epsilon(1e-2));
        const double t = 0.1;
        CHECK(td.value(i, t) ==
              doctest::Approx(m0 * (1 - kPi * kPi * t * t / 2 + std::pow(kPi * t, 4) / 24)).epsilon(1e-3));
    }
    const auto tab = td.table(g);
    for (std::size_t i = 0; i < bn.size(); ++i) CHECK(tab(0, i) == mu(g.point(bn[i])));

    const Profile zero = [](const Vec2&) { return 0.0; };
    const auto ok = check_compatibility(mu, zero, td, Coefficient::none(), 4, s, g, 1e-2);
    CHECK(ok.pass);
    const Profile shifted = [](const Vec2& x) { return std::sin(kPi * x.x()) + 0.1; };
    const auto bad = check_compatibility(shifted, zero, td, Coefficient::none(), 4, s, g);
    CHECK_FALSE(bad.pass);
    CHECK(bad.first_violated_order == 0);
}
