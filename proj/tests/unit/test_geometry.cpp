#include <doctest.h>

#include <cmath>

#include "beamtomo/geometry.hpp"

using namespace beamtomo;

namespace {

Metric sine_metric() {
    return Metric::conformal(Domain::rectangle(0, 1, 0, 1), ConformalFactor::sine(0.1, 1.0, 0));
}

}  // namespace

TEST_CASE("flat exit times") {
    const Metric m = Metric::euclidean(Domain::interval(0, 1));
    CHECK(trace_geodesic(m, Vec2(0, 0), Vec2(1, 0)).tau_plus == doctest::Approx(1.0).epsilon(1e-10));
    const Geodesic a = trace_geodesic(m, Vec2(0.3, 0), Vec2(1, 0));
    const Geodesic b = trace_geodesic(m, Vec2(0.3, 0), Vec2(-1, 0));
    CHECK(std::abs(a.tau_plus + b.tau_plus - 1.0) < 1e-8);

    const Metric disk = Metric::euclidean(Domain::disk(Vec2(0, 0), 1.0));
    CHECK(trace_geodesic(disk, Vec2(-1, 0), Vec2(1, 0)).tau_plus == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("conformal exit time converges under step refinement") {
    const Metric m = sine_metric();
    const Vec2 x0(0.0, 0.3), v0 = Vec2(1.0, 0.4).normalized() / m.c(Vec2(0.0, 0.3));
    const double t1 = trace_geodesic(m, x0, v0, 1e-3).tau_plus;
    const double t2 = trace_geodesic(m, x0, v0, 5e-4).tau_plus;
    CHECK(std::abs(t1 - t2) < 1e-6);
}

TEST_CASE("parallel frame") {
    SUBCASE("flat frame is constant") {
        const Metric m = Metric::euclidean(Domain::rectangle(0, 1, 0, 1));
        const Geodesic g = trace_geodesic(m, Vec2(0, 0.2), Vec2(0.6, 0.8));
        const auto E = parallel_frame(g);
        for (const auto& e : E) CHECK((e - E.front()).norm() < 1e-12);
    }
    SUBCASE("conformal frame is orthonormal and step independent") {
        const Metric m = sine_metric();
        const Vec2 x0(0.0, 0.3), v0 = Vec2(1.0, 0.4).normalized() / m.c(Vec2(0.0, 0.3));
        const Geodesic g = trace_geodesic(m, x0, v0, 1e-3);
        const auto E = parallel_frame(g);
        double err = 0.0;
        for (std::size_t i = 0; i < E.size(); ++i) {
            const auto& s = g.samples[i];
            err = std::max({err, std::abs(m.inner(s.x, E[i], E[i]) - 1.0), std::abs(m.inner(s.x, E[i], s.v))});
        }
        CHECK(err < 1e-8);
        const Geodesic g2 = trace_geodesic(m, x0, v0, 5e-4);
        const auto E2 = parallel_frame(g2);
        CHECK((E.back() - E2.back()).norm() < 1e-6);
    }
}

TEST_CASE("Fermi chart") {
    SUBCASE("1+1D round trip and closed form") {
        const Metric m = Metric::euclidean(Domain::interval(0, 1));
        const FermiChart ch(make_null_geodesic(m, 0.5, Vec2(0, 0), Vec2(1, 0)), ChartOptions{});
        for (double t : {0.5, 0.8, 1.1})
            for (double x : {0.05, 0.4, 0.9}) {
                Eigen::Vector3d z;
                REQUIRE(ch.to_fermi(t, Vec2(x, 0), z));
                // arc length is measured from the start of the extended segment
                const double sigma = x + ch.eps();
                CHECK(z(0) == doctest::Approx((t + sigma) / kSqrt2 + ch.a() / 2).epsilon(1e-12));
                CHECK(z(1) == doctest::Approx((-t + sigma) / kSqrt2 + ch.a() / 2).epsilon(1e-12));
                double t2;
                Vec2 x2;
                ch.from_fermi(z, t2, x2);
                CHECK(std::abs(t2 - t) < 1e-12);
                CHECK(std::abs(x2.x() - x) < 1e-12);
            }
    }
    SUBCASE("normal form on the axis") {
        const Metric m = sine_metric();
        const Vec2 x0(0.0, 0.5), v0 = Vec2(1.0, 0.2).normalized() / m.c(x0);
        const FermiChart ch(make_null_geodesic(m, 0.5, x0, v0), ChartOptions{});
        Eigen::Matrix3d eta = Eigen::Matrix3d::Zero();
        eta(0, 1) = eta(1, 0) = 1.0;
        eta(2, 2) = 1.0;
        const double fd = 1e-4;
        double err = 0.0, derr = 0.0;
        for (double f : {0.3, 0.5, 0.7}) {
            const double z0 = ch.z0_entry() + f * (ch.z0_exit() - ch.z0_entry());
            const Eigen::Vector3d z(z0, 0, 0);
            err = std::max(err, (ch.metric_at(z) - eta).cwiseAbs().maxCoeff());
            for (int k = 0; k < 3; ++k) {
                Eigen::Vector3d dz = Eigen::Vector3d::Zero();
                dz(k) = fd;
                derr = std::max(derr, ((ch.metric_at(z + dz) - ch.metric_at(z - dz)) / (2 * fd)).cwiseAbs().maxCoeff());
            }
        }
        CHECK(err < 1e-6);
        CHECK(derr < 1e-6);
    }
}

TEST_CASE("influence sets on the unit interval") {
    const Metric m = Metric::euclidean(Domain::interval(0, 1));
    const Grid g(1, 0, 0, 0.05, 21, 1, 0, 0.05, 80);
    const InfluenceMasks im = influence_sets(m, g, 4.0);
    for (std::size_t k = 0; k < g.levels(); ++k) {
        const double t = g.t(static_cast<int>(k));
        if (std::abs(t - 1.0) < 1e-9 || std::abs(t - 3.0) < 1e-9) continue;
        for (std::size_t n = 0; n < g.nodes(); ++n) CHECK(im.in_E(k, n) == (t > 1.0 && t < 3.0));
        const double x = 0.5;
        const std::size_t mid = g.index(10);
        REQUIRE(std::abs(g.point(mid).x() - x) < 1e-12);
        if (std::abs(t - 0.5) > 1e-9 && std::abs(t - 3.5) > 1e-9) CHECK(im.in_D(k, mid) == (t > 0.5 && t < 3.5));
    }
    const Grid g1(1, 0, 0, 0.05, 21, 1, 0, 0.05, 20);
    CHECK(influence_sets(m, g1, 1.0).count_E() == 0);
}
