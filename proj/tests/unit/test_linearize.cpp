#include <doctest.h>

#include <cmath>

#include "beamtomo/linearize.hpp"

using namespace beamtomo;

namespace {

Grid line_grid(double h = 0.01, double T = 2.0) {
    return Grid::for_domain(Domain::interval(0.0, 1.0), h, T, 0.9);
}

// Pulse entering from the left end; zero near t = 0 so the data is compatible.
BoundaryData<cplx> pulse(const Grid& g, double tc, double amp = 1.0) {
    return boundary_from_function<cplx>(g, [tc, amp](double t, const Vec2& x) {
        return x.x() < 0.5 ? cplx(amp * std::exp(-(t - tc) * (t - tc) / 0.01)) : cplx(0.0);
    });
}

double rel_diff(const Grid& g, const BoundaryTrace<cplx>& a, const BoundaryTrace<cplx>& b) {
    BoundaryTrace<cplx> d = a;
    for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] -= b.data[i];
    return trace_norm(g, d) / trace_norm(g, b);
}

SemilinearSpec spec_with(double q, double f2, double f3) {
    SemilinearSpec s;
    s.q = Coefficient::constant(q);
    if (f2 != 0.0) s.f2 = Coefficient::constant(f2);
    if (f3 != 0.0) s.f3 = Coefficient::constant(f3);
    return s;
}

}  // namespace

TEST_CASE("first-order stencil") {
    const Grid g = line_grid();
    const BoundaryData<cplx> h = pulse(g, 0.6);

    SUBCASE("linear problem: exact up to roundoff") {
        const SemilinearSpec s = spec_with(1.0, 0.0, 0.0);
        DtNOracle oracle(s, g);
        EpsStencil st;
        st.h = {h};
        st.eps = 1e-2;
        CHECK(rel_diff(g, eps_derivative(oracle, st), first_linearization(s, g, &h)) < 1e-10);
    }
    SUBCASE("quadratic nonlinearity: O(eps^2)") {
        const SemilinearSpec s = spec_with(1.0, 4.0, 2.0);
        DtNOracle oracle(s, g);
        const BoundaryTrace<cplx> ref = first_linearization(s, g, &h);
        double err[2];
        for (int i = 0; i < 2; ++i) {
            EpsStencil st;
            st.h = {h};
            st.eps = 0.1 / (1 << i);
            err[i] = rel_diff(g, eps_derivative(oracle, st), ref);
        }
        CHECK(err[0] < 0.05);
        CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.15));
    }
}

TEST_CASE("second-order stencil converges at O(eps^2)") {
    const Grid g = line_grid();
    const SemilinearSpec s = spec_with(0.5, 3.0, 6.0);
    DtNOracle oracle(s, g);
    BoundaryTrace<cplx> d[3];
    for (int i = 0; i < 3; ++i) {
        EpsStencil st;
        st.h = {pulse(g, 0.6), pulse(g, 0.7)};
        st.eps = 0.2 / (1 << i);
        d[i] = eps_derivative(oracle, st);
    }
    CHECK(trace_norm(g, d[2]) > 1e-3);
    const double e01 = rel_diff(g, d[0], d[1]), e12 = rel_diff(g, d[1], d[2]);
    CHECK(e01 / e12 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("third-order stencil against the direct third linearization") {
    const Grid g = line_grid();
    const std::vector<BoundaryData<cplx>> h{pulse(g, 0.55), pulse(g, 0.6), pulse(g, 0.65)};
    EpsStencil st;
    st.h = h;
    st.eps = 0.05;

    SUBCASE("cubic only") {
        const SemilinearSpec s = spec_with(1.0, 0.0, 5.0);
        DtNOracle oracle(s, g);
        StencilReport rep;
        const BoundaryTrace<cplx> d3 = eps_derivative(oracle, st, &rep);
        CHECK(rel_diff(g, d3, third_linearization(s, g, h)) < 0.1);
        CHECK(rep.corners.size() == 8);
        CHECK(rep.order == 3);
    }
    SUBCASE("with quadratic interactions") {
        const SemilinearSpec s = spec_with(1.0, 2.0, 5.0);
        DtNOracle oracle(s, g);
        CHECK(rel_diff(g, eps_derivative(oracle, st), third_linearization(s, g, h)) < 0.1);
    }
}

TEST_CASE("oracle cache and preconditions") {
    const Grid g = line_grid(0.02, 1.5);
    const SemilinearSpec s = spec_with(1.0, 0.0, 1.0);
    DtNOracle oracle(s, g);
    const BoundaryData<cplx> h = pulse(g, 0.5, 0.1);
    const BoundaryTrace<cplx> a = oracle(h);
    const BoundaryTrace<cplx> b = oracle(h);
    CHECK(oracle.cache_hits() == 1);
    CHECK(a.data == b.data);

    EpsStencil st;
    CHECK_THROWS_AS(eps_derivative(oracle, st), PreconditionError);
    st.h = {h, h, h, h};
    CHECK_THROWS_AS(eps_derivative(oracle, st), UnsupportedOrder);
    st.h = {h};
    st.eps = 0.0;
    CHECK_THROWS_AS(eps_derivative(oracle, st), PreconditionError);
}

TEST_CASE("large data reports the failing corner") {
    const Grid g = line_grid(0.02, 1.5);
    SemilinearSpec s = spec_with(0.0, 0.0, 50.0);
    DtNOracle oracle(s, g);
    EpsStencil st;
    st.h = {pulse(g, 0.5, 10.0)};
    st.eps = 1.0;
    CHECK_THROWS_AS(eps_derivative(oracle, st), StencilError);
}
