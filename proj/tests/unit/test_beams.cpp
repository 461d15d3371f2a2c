#include <doctest.h>

#include <cmath>

#include "beamtomo/beams.hpp"

using namespace beamtomo;

namespace {

const cplx I(0.0, 1.0);

FermiChart flat_chart(int dim, double s = 0.5) {
    if (dim == 1) {
        const Metric m = Metric::euclidean(Domain::interval(0, 1));
        return FermiChart(make_null_geodesic(m, s, Vec2(0, 0), Vec2(1, 0)), ChartOptions{});
    }
    const Metric m = Metric::euclidean(Domain::rectangle(0, 1, 0, 1));
    return FermiChart(make_null_geodesic(m, s, Vec2(0, 0.5), Vec2(1, 0)), ChartOptions{});
}

}  // namespace

TEST_CASE("Riccati closed forms") {
    SUBCASE("n = 1 flat") {
        const FermiChart ch = flat_chart(1);
        const RiccatiSolution r = solve_riccati(ch, CMat::Constant(1, 1, I));
        for (std::size_t i = 0; i < r.z0.size(); ++i) {
            CHECK(std::abs(r.H[i](0, 0) - I) < 1e-12);
            CHECK(std::abs(r.Y[i](0, 0) - 1.0) < 1e-12);
            CHECK(std::abs(r.Z[i](0, 0) - I) < 1e-12);
        }
    }
    SUBCASE("n = 2 flat") {
        const FermiChart ch = flat_chart(2);
        const RiccatiSolution r = solve_riccati(ch, I * CMat::Identity(2, 2));
        double err = 0.0;
        for (std::size_t i = 0; i < r.z0.size(); ++i) {
            const double tau = r.z0[i] - r.s;
            const cplx y22 = 1.0 + 2.0 * I * tau;
            err = std::max({err, std::abs(r.Y[i](0, 0) - 1.0), std::abs(r.Y[i](1, 1) - y22),
                            std::abs(r.H[i](0, 0) - I), std::abs(r.H[i](1, 1) - I / y22),
                            std::abs(r.H[i](0, 1))});
        }
        CHECK(err < 1e-10);
        CHECK(r.conservation_error() < 1e-12);
    }
    SUBCASE("conformal chart, general H0") {
        const Metric m =
            Metric::conformal(Domain::rectangle(0, 1, 0, 1), ConformalFactor::sine(0.1, 1.0, 0));
        const Vec2 x0(0.0, 0.4), v0 = Vec2(1.0, 0.3).normalized() / m.c(x0);
        const FermiChart ch(make_null_geodesic(m, 0.5, x0, v0), ChartOptions{});
        CMat H0(2, 2);
        H0 << cplx(0.3, 1.2), cplx(-0.1, 0.2), cplx(-0.1, 0.2), cplx(0.5, 0.8);
        const RiccatiSolution r = solve_riccati(ch, H0);
        CHECK(r.conservation_error() < 1e-6);
        CHECK(r.symmetry_error() < 1e-10);
        CHECK(r.min_imag_eig() > 0.0);
        RiccatiOptions fine;
        fine.step = 0.5e-2;
        const RiccatiSolution r2 = solve_riccati(ch, H0, fine);
        const double z = 0.5 * (r.z0_min() + r.z0_max());
        CHECK((r.H_at(z) - r2.H_at(z)).norm() < 1e-6);
    }
}

TEST_CASE("transport amplitude") {
    const FermiChart ch = flat_chart(1);
    const RiccatiSolution r = solve_riccati(ch, CMat::Constant(1, 1, I));
    SUBCASE("b = 0 gives one") {
        const Amplitude a = transport_amplitude(r, std::vector<double>(r.z0.size(), 0.0), -1);
        for (const auto& v : a.a) CHECK(std::abs(v - 1.0) < 1e-12);
    }
    SUBCASE("constant b gives an exponential") {
        const double c = 0.7;
        for (int sign : {-1, 1}) {
            const Amplitude a = transport_amplitude(r, std::vector<double>(r.z0.size(), c), sign);
            for (std::size_t i = 0; i < a.z0.size(); ++i)
                CHECK(std::abs(a.a[i] - std::exp(sign * c * (a.z0[i] - r.s) / (2.0 * kSqrt2))) < 1e-10);
        }
    }
    SUBCASE("n = 2 flat transport residual") {
        const FermiChart ch2 = flat_chart(2);
        const RiccatiSolution r2 = solve_riccati(ch2, I * CMat::Identity(2, 2));
        const Amplitude a = transport_amplitude(r2, std::vector<double>(r2.z0.size(), 0.0), -1);
        CHECK(a.transport_residual < 1e-6);
    }
}

TEST_CASE("beam values") {
    const FermiChart ch = flat_chart(2);
    const double sigma = 64.0;
    const Beam u = make_beam(ch, I * CMat::Identity(2, 2), Coefficient::none(), sigma, BeamKind::forward);
    SUBCASE("axis value is sigma^(n/4) a") {
        for (double f : {0.2, 0.5, 0.8}) {
            const double z0 = ch.z0_entry() + f * (ch.z0_exit() - ch.z0_entry());
            const Eigen::Vector3d z(z0, 0, 0);
            const cplx expect = std::pow(sigma, 0.5) * u.amplitude().at(z0, u.riccati());
            CHECK(std::abs(u.value_z(z) - expect) < 1e-10 * std::abs(expect));
        }
    }
    SUBCASE("transverse modulus") {
        const double z0 = 0.5 * (ch.z0_entry() + ch.z0_exit());
        const CMat H = u.riccati().H_at(z0);
        for (double f : {0.1, 0.25, 0.45}) {
            const double y = f * ch.delta_prime();
            const Eigen::Vector3d z(z0, 0, y);
            const double expect = std::pow(sigma, 0.5) * std::abs(u.amplitude().at(z0, u.riccati())) *
                                  std::exp(-sigma * H(1, 1).imag() * y * y);
            CHECK(std::abs(u.value_z(z)) == doctest::Approx(expect).epsilon(1e-8));
        }
    }
}

TEST_CASE("tube mass is sigma independent") {
    const Metric m = Metric::euclidean(Domain::interval(0, 1));
    // tube wide enough to hold the σ = 64 Gaussian
    ChartOptions co;
    co.eps = 0.4;
    co.delta_prime = 0.35;
    const FermiChart ch(make_null_geodesic(m, 0.5, Vec2(0, 0), Vec2(1, 0)), co);
    const Grid g = Grid::for_domain(Domain::interval(0, 1), 1.0 / 1000, 2.0, 0.5);
    std::vector<double> mass;
    for (double sigma : {64.0, 128.0, 256.0, 512.0, 1024.0}) {
        const Beam u = make_beam(ch, CMat::Constant(1, 1, I), Coefficient::none(), sigma, BeamKind::forward);
        const CField f = u.sample(g);
        double acc = 0.0;
        for (const auto& v : f.data) acc += std::norm(v);
        mass.push_back(acc * g.h() * g.dt());
    }
    for (double v : mass) {
        CHECK(v < 2.0 * mass.front());
        CHECK(v > 0.5 * mass.front());
    }
}

TEST_CASE("residual") {
    const Metric m = Metric::euclidean(Domain::interval(0, 1));
    const FermiChart ch(make_null_geodesic(m, 0.5, Vec2(0, 0), Vec2(1, 0)), ChartOptions{});
    const Grid g = Grid::for_domain(Domain::interval(0, 1), 1.0 / 800, 2.0, 0.5);
    const Beam u = make_beam(ch, CMat::Constant(1, 1, I), Coefficient::none(), 64.0, BeamKind::forward);
    const ResidualReport r0 = beam_residual(u, Coefficient::none(), Coefficient::none(), g);
    CHECK(r0.eikonal_axis < 1e-6);
    // constant q adds exactly q·u to an (here vanishing) residual
    const double q = 0.3;
    const ResidualReport rq = beam_residual(u, Coefficient::none(), Coefficient::constant(q), g);
    CHECK(std::abs(rq.residual_l2 - q * rq.beam_l2) < 1e-6 * rq.beam_l2 + r0.residual_l2);
}
