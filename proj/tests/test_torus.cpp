#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>
#include <random>

#include "carnot/mollify.hpp"
#include "carnot/torus.hpp"
#include "oracles.hpp"

using namespace carnot;

namespace {
Point pt3(double x, double y, double z) {
    Point p(3);
    p << x, y, z;
    return p;
}
}  // namespace

TEST_CASE("reduce: identity on the cube, worked example, round trip") {
    auto g = GroupDescriptor::heisenberg();

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int it = 0; it < 100; ++it) {
        Point x = pt3(U(rng), U(rng), U(rng));
        auto r = reduce(g, x);
        CHECK((r.point - x).lpNorm<Eigen::Infinity>() < 1e-14);
        CHECK(r.k.isZero());
    }

    // worked example: brute-force search over k in {-2..2}^3 confirms the
    // layered solve
    Point x = pt3(1.5, -0.25, 0.7);
    auto r = reduce(g, x);
    CHECK(r.point[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.point[1] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r.point[2] == doctest::Approx(0.075).epsilon(1e-12));
    CHECK(r.k[0] == 1);
    CHECK(r.k[1] == -1);
    CHECK(r.k[2] == 0);
    {
        bool found = false;
        for (int a = -2; a <= 2; ++a)
            for (int b = -2; b <= 2; ++b)
                for (int c = -2; c <= 2; ++c) {
                    Point k = pt3(a, b, c);
                    Point cand = compose(g, inverse(g, k), x);
                    bool in_cube = true;
                    for (int i = 0; i < 3; ++i)
                        if (cand[i] < 0.0 || cand[i] >= 1.0) in_cube = false;
                    if (in_cube) {
                        // uniqueness: must equal the layered answer
                        CHECK((cand - r.point).lpNorm<Eigen::Infinity>() < 1e-12);
                        found = true;
                    }
                }
        CHECK(found);
    }

    // round trip on arbitrary points
    std::uniform_real_distribution<double> V(-4.0, 4.0);
    for (int it = 0; it < 1000; ++it) {
        Point p = pt3(V(rng), V(rng), V(rng));
        auto rr = reduce(g, p);
        Point back = compose(g, rr.k.cast<double>(), rr.point);
        CHECK((back - p).lpNorm<Eigen::Infinity>() < 1e-10);
        for (int i = 0; i < 3; ++i) {
            CHECK(rr.point[i] >= 0.0);
            CHECK(rr.point[i] < 1.0);
        }
        // idempotence
        auto r2 = reduce(g, rr.point);
        CHECK((r2.point - rr.point).lpNorm<Eigen::Infinity>() < 1e-14);
    }
}

TEST_CASE("reduce: lattice action fixes the representative of cube points") {
    auto g = GroupDescriptor::heisenberg();
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::uniform_int_distribution<int> K(-3, 3);
    for (int it = 0; it < 500; ++it) {
        Point x = pt3(U(rng), U(rng), U(rng));
        Point k = pt3(K(rng), K(rng), K(rng));
        Point shifted = compose(g, k, x);
        auto r = reduce(g, shifted);
        CHECK((r.point - x).lpNorm<Eigen::Infinity>() < 1e-10);
    }
}

TEST_CASE("torus_distance: reflexive, dominated by cc, wrap example") {
    auto g = GroupDescriptor::heisenberg();
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> U(0.0, 1.0);

    for (int it = 0; it < 20; ++it) {
        Point x = pt3(U(rng), U(rng), U(rng));
        CHECK(torus_distance(g, x, x) < 1e-12);
        Point y = pt3(U(rng), U(rng), U(rng));
        CHECK(torus_distance(g, x, y) <= cc_distance(g, x, y).value + 1e-12);
    }

    // wrap: (0.9,0,0) vs (0.1,0,0) meets through the x-face
    double d = torus_distance(g, pt3(0.9, 0, 0), pt3(0.1, 0, 0));
    {
        // enumeration oracle over k in {-2..2}^3
        double best = 1e300;
        for (int a = -2; a <= 2; ++a)
            for (int b = -2; b <= 2; ++b)
                for (int c = -2; c <= 2; ++c) {
                    Point k = pt3(a, b, c);
                    best = std::min(best,
                                    cc_distance(g, compose(g, k, pt3(0.9, 0, 0)), pt3(0.1, 0, 0))
                                        .value);
                }
        CHECK(d == doctest::Approx(best).epsilon(1e-9));
    }
    CHECK(d == doctest::Approx(0.2).epsilon(1e-9));

    // symmetry within solver tolerance
    for (int it = 0; it < 20; ++it) {
        Point x = pt3(U(rng), U(rng), U(rng));
        Point y = pt3(U(rng), U(rng), U(rng));
        CHECK(torus_distance(g, x, y) == doctest::Approx(torus_distance(g, y, x)).epsilon(1e-9));
    }
}

TEST_CASE("periodize_kernel: single-term case, unit mass, distant points") {
    auto g = GroupDescriptor::heisenberg();
    const double eps = 0.1;
    BumpProfile bump(g, eps);
    KernelSpec spec;
    spec.compact = true;
    spec.support_radius = eps;
    spec.eval = [&bump](const Point& u) { return bump.eval(u); };

    // x = y: only k = 0 contributes; psi_eps(0) = C eps^-Q e^-1
    Point x = pt3(0.4, 0.6, 0.3);
    double v = periodize_kernel(g, spec, x, x);
    double expected = bump.normalization() * std::pow(eps, -4.0) * std::exp(-1.0);
    CHECK(v == doctest::Approx(expected).epsilon(1e-12));

    // distant points with small support: zero
    CHECK(periodize_kernel(g, spec, pt3(0.1, 0.1, 0.1), pt3(0.6, 0.6, 0.6)) == 0.0);

    // mass: int_{[0,1)^n} sum_k psi_eps(k o x o y^-1) dy = 1 for any x,
    // via the substituted quadrature (exact change of variables)
    auto q = bump.unit_quadrature(48, /*normalize=*/false);
    double mass = 0.0;
    for (double w : q.weights) mass += w;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));

    // and the direct lattice-sum integral over a grid agrees to quadrature
    // accuracy (rectangle rule on the cube)
    const int m = 24;
    double direct = 0.0;
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            for (int c = 0; c < m; ++c) {
                Point y = pt3((a + 0.5) / m, (b + 0.5) / m, (c + 0.5) / m);
                direct += periodize_kernel(g, spec, x, y) / (m * m * m);
            }
    CHECK(direct == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("periodize_kernel: gaussian tail certification on the abelian torus") {
    auto g = GroupDescriptor::abelian(1);
    const double t = 0.05;
    KernelSpec spec;
    spec.gaussian = true;
    spec.gauss_c0 = 1.0 / std::sqrt(4.0 * oracles::kPi * t);
    spec.gauss_c = 4.0 * t;  // envelope matches the kernel itself
    spec.gauss_t = 1.0;
    spec.eval = [t](const Point& u) { return oracles::gauss1d_kernel(t, u[0]); };

    Point x(1), y(1);
    x << 0.3;
    y << 0.9;
    double v = periodize_kernel(g, spec, x, y);
    // brute force wide sum
    double ref = 0.0;
    for (int k = -60; k <= 60; ++k) ref += oracles::gauss1d_kernel(t, k + x[0] - y[0]);
    CHECK(v == doctest::Approx(ref).epsilon(1e-12));

    KernelSpec bad;
    bad.eval = spec.eval;
    CHECK_THROWS_AS(periodize_kernel(g, bad, x, y), ContractError);
}

TEST_CASE("GridFunction: node layout, periodic evaluation, serialization") {
    auto g = std::make_shared<const GroupDescriptor>(GroupDescriptor::heisenberg());
    auto f = GridFunction::from_function(g, {8, 8, 8}, [](const Point& p) {
        return std::sin(2 * oracles::kPi * p[0]) + std::cos(4 * oracles::kPi * p[2]);
    });

    // node evaluation is exact
    for (long idx : {0L, 13L, 200L, 511L}) {
        Point x = f.node_point(idx);
        CHECK(f(x) == doctest::Approx(f.values()[idx]).epsilon(1e-14));
    }

    // evaluation at any point equals evaluation at reduce(point)
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> V(-3.0, 3.0);
    for (int it = 0; it < 200; ++it) {
        Point p = pt3(V(rng), V(rng), V(rng));
        CHECK(f(p) == doctest::Approx(f(reduce(*g, p).point)).epsilon(1e-12));
    }

    // interpolation reproduces constants exactly
    auto lin = GridFunction::from_function(g, {8, 8, 8}, [](const Point&) { return 2.0; });
    CHECK(lin(pt3(0.123, 0.456, 0.789)) == doctest::Approx(2.0).epsilon(1e-14));

    f.save("grid_io_test");
    auto f2 = GridFunction::load("grid_io_test", g);
    CHECK((f2.values() - f.values()).abs().maxCoeff() == 0.0);
    f.save("grid_io_test_csv", true);
    auto f3 = GridFunction::load("grid_io_test_csv", g);
    CHECK((f3.values() - f.values()).abs().maxCoeff() < 1e-15);
}

TEST_CASE("tiling: the reduce pushforward of uniform mass is uniform") {
    auto g = GroupDescriptor::heisenberg();
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Point x = pt3(0.37, 0.81, 0.24);

    // E[phi(reduce(x o w))] over uniform w matches E[phi(uniform)] within 3 sigma
    auto phi1 = [](const Point& p) { return std::cos(2 * oracles::kPi * p[0]); };
    auto phi2 = [](const Point& p) { return p[2] * p[2]; };
    const int N = 20000;
    double s1 = 0, s2 = 0, q1 = 0, q2 = 0;
    for (int it = 0; it < N; ++it) {
        Point w = pt3(U(rng), U(rng), U(rng));
        Point r = reduce(g, compose(g, x, w)).point;
        double v1 = phi1(r), v2 = phi2(r);
        s1 += v1;
        s2 += v2;
        q1 += v1 * v1;
        q2 += v2 * v2;
    }
    s1 /= N;
    s2 /= N;
    double se1 = std::sqrt((q1 / N - s1 * s1) / N);
    double se2 = std::sqrt((q2 / N - s2 * s2) / N);
    CHECK(std::abs(s1 - 0.0) <= 3.0 * se1);        // E cos(2 pi U) = 0
    CHECK(std::abs(s2 - 1.0 / 3.0) <= 3.0 * se2);  // E U^2 = 1/3
}

TEST_CASE("fast kernels agree with the reference implementations") {
    auto g = GroupDescriptor::heisenberg();
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    Point out(3), red(3);
    for (int it = 0; it < 2000; ++it) {
        Point p = pt3(U(rng), U(rng), U(rng));
        Point q = pt3(U(rng), U(rng), U(rng));
        compose_into(g, p, q, out);
        CHECK((out - compose(g, p, q)).lpNorm<Eigen::Infinity>() < 1e-14);
        reduce_point_into(g, p, red);
        CHECK((red - reduce(g, p).point).lpNorm<Eigen::Infinity>() < 1e-12);
        // aliasing: out may be one of the operands
        Point alias = p;
        compose_into(g, alias, q, alias);
        CHECK((alias - compose(g, p, q)).lpNorm<Eigen::Infinity>() < 1e-14);
    }
}
