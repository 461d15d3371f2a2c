#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "beamtomo/transforms.hpp"

using namespace beamtomo;

namespace {

double smooth_bump(double t, const Vec2& x) {
    return std::exp(-(x - Vec2(0.1, -0.1)).squaredNorm() / 0.2 - (t - 2.0) * (t - 2.0) / 0.5);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

std::vector<double> randn(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
}

// Every node carrying interpolation weight at the operator's default quadrature nodes.
std::vector<std::uint8_t> tube_mask(const Grid& g, const RayFamily& fam) {
    std::vector<std::uint8_t> mask(g.levels() * g.nodes(), 0);
    const double q = 0.5 * std::min(g.h(), g.dt());
    const int dim = g.dim();
    for (const auto& ray : fam.rays) {
        const double len = ray.geodesic.tau_plus;
        int n = static_cast<int>(std::ceil(len / q));
        n = std::max(2, n + (n & 1));
        for (int jr = 0; jr <= n; ++jr) {
            const double r = jr * len / n;
            const Vec2 x = ray.x(r);
            const double ft = (ray.t(r) - g.t0()) / g.dt(), fx = (x.x() - g.x0()) / g.h();
            const double fy = dim == 2 ? (x.y() - g.y0()) / g.h() : 0.0;
            const int k0 = std::min(static_cast<int>(ft), g.nt() - 1);
            const int i0 = std::min(static_cast<int>(fx), g.nx() - 2);
            const int j0 = dim == 2 ? std::min(static_cast<int>(fy), g.ny() - 2) : 0;
            for (int dk = 0; dk < 2; ++dk)
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < (dim == 2 ? 2 : 1); ++dj) {
                        double w = (dk ? ft - k0 : 1 - ft + k0) * (di ? fx - i0 : 1 - fx + i0);
                        if (dim == 2) w *= dj ? fy - j0 : 1 - fy + j0;
                        if (w > 1e-13) mask[(k0 + dk) * g.nodes() + g.index(i0 + di, j0 + dj)] = 1;
                    }
        }
    }
    return mask;
}

}  // namespace

TEST_CASE("light-ray transform closed forms in 1+1D") {
    const Metric m = Metric::euclidean(Domain::interval(0.0, 1.0));
    const RayFamily fam = make_ray_family_1d(m, {0.2, 0.5}, {0.3});
    REQUIRE(fam.size() == 3);
    const auto ones = light_ray_transform([](double, const Vec2&) { return 1.0; }, fam);
    const auto tx = light_ray_transform([](double t, const Vec2& x) { return t * x.x(); }, fam);
    for (std::size_t i = 0; i < 3; ++i) CHECK(ones[i] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(tx[0] == doctest::Approx(1.0 / 3 + 0.2 / 2).epsilon(1e-9));
    CHECK(tx[1] == doctest::Approx(1.0 / 3 + 0.5 / 2).epsilon(1e-9));
    CHECK(tx[2] == doctest::Approx(1.0 / 6 + 0.3 / 2).epsilon(1e-9));
}

TEST_CASE("disk family") {
    const Metric m = Metric::euclidean(Domain::disk(Vec2::Zero(), 1.0));
    FamilySpec fs;
    fs.n_points = 6;
    fs.n_dirs = 5;
    fs.n_s = 3;
    const RayFamily fam = make_ray_family(m, fs);
    CHECK(fam.size() > 0);
    const auto len = light_ray_transform([](double, const Vec2&) { return 1.0; }, fam);
    for (std::size_t i = 0; i < fam.size(); ++i) {
        const auto& r = fam.rays[i];
        CHECK(len[i] == doctest::Approx(r.geodesic.tau_plus).epsilon(1e-6));
        const double tmid = r.s + 0.5 * r.geodesic.tau_plus;
        CHECK(tmid >= fs.t_mid_lo - 1e-9);
        CHECK(tmid <= fs.t_mid_hi + 1e-9);
        // chord length from the entry direction
        const Vec2 x0 = r.x(0.0), v = (r.x(1e-3) - x0).normalized();
        CHECK(r.geodesic.tau_plus == doctest::Approx(-2.0 * x0.dot(v)).epsilon(1e-3));
    }
}

TEST_CASE("discrete operator") {
    SUBCASE("1+1D against the continuous transform") {
        const Metric m = Metric::euclidean(Domain::interval(0.0, 1.0));
        std::vector<double> s;
        for (int i = 0; i < 9; ++i) s.push_back(1.0 + 0.25 * i);
        const RayFamily fam = make_ray_family_1d(m, s, s);
        const Grid g(1, 0.0, 0.0, 0.0025, 401, 1, 0.0, 0.0025, 1800);
        const RayOperator op = build_ray_operator(g, fam, tube_mask(g, fam));
        const auto exact = light_ray_transform(smooth_bump, fam);
        const auto approx = op.apply(op.sample(smooth_bump));
        for (std::size_t i = 0; i < exact.size(); ++i) CHECK(std::abs(approx[i] - exact[i]) < 1e-4);
        for (std::size_t r = 0; r < op.rows(); ++r) CHECK(op.row_sum(r) == doctest::Approx(1.0).epsilon(1e-10));
    }

    const Metric m = Metric::euclidean(Domain::disk(Vec2::Zero(), 1.0));
    FamilySpec fs;
    fs.n_points = 8;
    fs.n_dirs = 6;
    fs.n_s = 3;
    const RayFamily fam = make_ray_family(m, fs);
    const Grid g(2, -1.0, -1.0, 0.05, 41, 41, 0.0, 0.05, 80);
    const std::vector<std::uint8_t> full = tube_mask(g, fam);

    SUBCASE("2+1D against the continuous transform, row sums") {
        const RayOperator op = build_ray_operator(g, fam, full);
        const auto exact = light_ray_transform(smooth_bump, fam);
        const auto approx = op.apply(op.sample(smooth_bump));
        double err = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < exact.size(); ++i) {
            err = std::max(err, std::abs(approx[i] - exact[i]));
            scale = std::max(scale, std::abs(exact[i]));
        }
        CHECK(err / scale < 5e-3);  // trilinear error ~ h²|f''|/8
        for (std::size_t r = 0; r < op.rows(); ++r)
            CHECK(op.row_sum(r) == doctest::Approx(fam.rays[r].geodesic.tau_plus).epsilon(1e-6));
    }

    // Part of the tube around the centre of the space-time cylinder.
    std::vector<std::uint8_t> mask(full.size(), 0);
    for (std::size_t k = 0; k < g.levels(); ++k)
        for (std::size_t n = 0; n < g.nodes(); ++n)
            mask[k * g.nodes() + n] =
                full[k * g.nodes() + n] && g.point(n).norm() < 0.6 && std::abs(g.t(k) - 2.0) < 0.3;
    const RayOperator op = build_ray_operator(g, fam, mask);

    SUBCASE("adjoint identity") {
        const auto f = randn(op.cols(), 1), y = randn(op.rows(), 2);
        const double lhs = dot(op.apply(f), y), rhs = dot(f, op.apply_transpose(y));
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
        CHECK(op.frobenius2() > 0.0);
    }
    SUBCASE("expand and restrict") {
        const auto f = randn(op.cols(), 3);
        CHECK(op.restrict_to_mask(op.expand(f)) == f);
    }
    SUBCASE("zero data gives the zero field") {
        InversionOptions io;
        io.lambda = 1e-3;
        const InversionResult r = invert_ray_transform(op, std::vector<double>(op.rows(), 0.0), io);
        CHECK(*std::max_element(r.field.begin(), r.field.end()) == 0.0);
        CHECK(*std::min_element(r.field.begin(), r.field.end()) == 0.0);
    }
    SUBCASE("consistent data is fitted") {
        const auto truth = op.sample(smooth_bump);
        const auto d = op.apply(truth);
        InversionOptions io;
        io.lambda = 1e-8;
        const InversionResult r = invert_ray_transform(op, d, io);
        CHECK(r.residual / std::sqrt(dot(d, d)) < 1e-2);
        CHECK(r.residual_history.size() > 1);
    }
    SUBCASE("discrepancy sweep records its candidates") {
        const auto d = op.apply(op.sample(smooth_bump));
        InversionOptions io;
        io.noise_level = 1e-3;
        const InversionResult r = invert_ray_transform(op, d, io);
        CHECK(!r.sweep.empty());
        CHECK(r.lambda > 0.0);
    }
}

TEST_CASE("unreached cells raise a coverage error") {
    const Metric m = Metric::euclidean(Domain::interval(0.0, 1.0));
    const RayFamily fam = make_ray_family_1d(m, {0.5}, {});
    const Grid g(1, 0.0, 0.0, 0.1, 11, 1, 0.0, 0.1, 30);
    const std::vector<std::uint8_t> mask(g.levels() * g.nodes(), 1);
    CHECK_THROWS_AS(build_ray_operator(g, fam, mask), CoverageError);
}
