#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spde/actuation.hpp"
#include "spde/grid.hpp"
#include "spde/noise.hpp"

#include <cmath>

using namespace spde;

TEST_CASE("make_grid spacing and coordinates") {
    const Grid g = make_grid(1, 1.0, 64);
    CHECK(g.dx == doctest::Approx(1.0 / 63).epsilon(1e-14));
    CHECK(g.coord(0) == 0.0);
    CHECK(g.coord(63) == doctest::Approx(1.0));

    const Grid tiny = make_grid(1, 1.0, 3);
    CHECK(tiny.coord(0) == 0.0);
    CHECK(tiny.coord(1) == 0.5);
    CHECK(tiny.coord(2) == 1.0);

    const Grid g2 = make_grid(2, 0.25, 32);
    CHECK(g2.node_count() == 1024);
    CHECK(g2.dx == doctest::Approx(0.25 / 32).epsilon(1e-14));

    CHECK_THROWS_AS(make_grid(1, 1.0, 2), std::invalid_argument);
    CHECK_THROWS_AS(make_grid(1, -1.0, 8), std::invalid_argument);
    CHECK_THROWS_AS(make_grid(3, 1.0, 8), std::invalid_argument);
}

TEST_CASE("inner_product quadrature") {
    const Grid g = make_grid(1, 1.0, 64);
    Field ones = make_field(g, Eigen::VectorXd::Ones(g.node_count()));
    CHECK(inner_product(ones, ones) == doctest::Approx(1.0).epsilon(0.02));

    Field zero = make_field(g);
    CHECK(inner_product(zero, ones) == 0.0);

    Field s = make_field(g);
    for (int j = 0; j < g.points; ++j) s.values[j] = std::sin(M_PI * g.coord(j));
    CHECK(std::abs(inner_product(s, s) - 0.5) < 1e-3);

    const Grid other = make_grid(1, 1.0, 32);
    CHECK_THROWS_AS(inner_product(ones, make_field(other)), std::invalid_argument);
}

TEST_CASE("inner_product bilinearity and symmetry") {
    const Grid g = make_grid(1, 2.0, 17);
    Rng rng(7);
    std::normal_distribution<double> n01;
    auto random_field = [&]() {
        Field f = make_field(g);
        for (auto& v : f.values.reshaped()) v = n01(rng);
        return f;
    };
    for (int rep = 0; rep < 20; ++rep) {
        Field f = random_field(), h = random_field(), w = random_field();
        const double alpha = n01(rng), beta = n01(rng);
        CHECK(inner_product(f, h) == doctest::Approx(inner_product(h, f)).epsilon(1e-12));
        Field combo = make_field(g, alpha * f.values + beta * h.values);
        CHECK(inner_product(combo, w) ==
              doctest::Approx(alpha * inner_product(f, w) + beta * inner_product(h, w))
                  .epsilon(1e-12));
    }
}

TEST_CASE("noise: pointwise variance and Ito isometry") {
    const Grid g = make_grid(1, 1.0, 64);
    const double dt = 0.01;
    Rng rng(42);

    Field f = make_field(g);
    for (int j = 0; j < g.points; ++j) f.values[j] = std::sin(2 * M_PI * g.coord(j)) + 0.3;

    const int samples = 100000;
    double node_sq = 0, pair_sum = 0, pair_sq = 0;
    const int probe = 17;
    for (int i = 0; i < samples; ++i) {
        NoiseIncrement w = sample_noise(g, dt, rng);
        const double inc = w.pointwise()[probe];
        node_sq += inc * inc;
        const double p = noise_pairing(f, w);
        pair_sum += p;
        pair_sq += p * p;
    }
    const double node_var = node_sq / samples;
    CHECK(node_var == doctest::Approx(dt / g.dx).epsilon(0.05));

    const double mean = pair_sum / samples;
    const double var = pair_sq / samples - mean * mean;
    const double expected = dt * inner_product(f, f);
    CHECK(var == doctest::Approx(expected).epsilon(0.05));
    // zero mean within 3 standard errors
    CHECK(std::abs(mean) < 3 * std::sqrt(var / samples));
}

TEST_CASE("noise: 2D Ito isometry") {
    const Grid g = make_grid(2, 0.5, 12);
    const double dt = 0.02;
    Rng rng(5);
    Field f = make_field(g);
    std::normal_distribution<double> n01;
    for (auto& v : f.values.reshaped()) v = n01(rng);

    const int samples = 100000;
    double sq = 0, sum = 0;
    for (int i = 0; i < samples; ++i) {
        const double p = noise_pairing(f, sample_noise(g, dt, rng));
        sum += p;
        sq += p * p;
    }
    const double var = sq / samples - (sum / samples) * (sum / samples);
    CHECK(var == doctest::Approx(dt * inner_product(f, f)).epsilon(0.05));
}

TEST_CASE("noise: seed reproducibility") {
    const Grid g = make_grid(1, 1.0, 16);
    Rng a(123), b(123);
    const NoiseIncrement wa = sample_noise(g, 0.01, a);
    const NoiseIncrement wb = sample_noise(g, 0.01, b);
    CHECK((wa.xi - wb.xi).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("gaussian actuators: values and gram") {
    const Grid g = make_grid(1, 1.0, 101); // nodes land on multiples of 0.01
    const double sigma2 = 0.01;
    ActuatorMap map = gaussian_actuator_map(g, {{0.5}}, sigma2);
    const int center_node = 50;
    CHECK(map.shapes(center_node, 0) == doctest::Approx(1.0).epsilon(1e-14));
    // node at distance sigma = 0.1 (if it lands on the grid)
    Field probe = make_field(g);
    const double at_sigma = std::exp(-0.5);
    int node = 0;
    for (int j = 0; j < g.points; ++j)
        if (std::abs(g.coord(j) - 0.6) < 1e-12) node = j;
    CHECK(map.shapes(node, 0) == doctest::Approx(at_sigma).epsilon(1e-12));

    // Gram equals the brute-force sum
    Eigen::MatrixXd brute = Eigen::MatrixXd::Zero(map.count(), map.count());
    for (int j = 0; j < g.node_count(); ++j)
        brute += map.shapes.row(j).transpose() * map.shapes.row(j) * g.dx;
    CHECK((map.gram - brute).norm() <= 1e-12 * brute.norm());

    CHECK_THROWS_AS(gaussian_actuator_map(g, {{1.5}}, sigma2), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_actuator_map(g, {{0.5}}, -1.0), std::invalid_argument);
}

TEST_CASE("gaussian actuators: Nagumo layout") {
    const Grid g = make_grid(1, 5.0, 64);
    const double a = 5.0;
    ActuatorMap map = gaussian_actuator_map(g, {{0.7 * a}, {0.8 * a}, {0.9 * a}}, 0.25);
    CHECK(map.count() == 3);
    CHECK(map.gram.rows() == 3);
    // symmetric positive semi-definite
    CHECK((map.gram - map.gram.transpose()).norm() < 1e-14);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(map.gram);
    CHECK(es.eigenvalues().minCoeff() >= -1e-14);
}

TEST_CASE("boundary actuators") {
    const Grid g = make_grid(1, 1.0, 64);
    ActuatorMap map = boundary_actuator_map(g);
    CHECK(map.count() == 2);
    CHECK(map.shapes.col(0).sum() == 1.0);
    CHECK(map.shapes(0, 0) == 1.0);
    CHECK(map.shapes(63, 1) == 1.0);
    CHECK(map.gram(0, 0) == doctest::Approx(g.dx).epsilon(1e-14));
    CHECK(map.gram(1, 1) == doctest::Approx(g.dx).epsilon(1e-14));
    CHECK(map.gram(0, 1) == 0.0);

    Field f = control_field(map, Eigen::Vector2d(3.0, 0.0));
    CHECK(f.values[0] == 3.0);
    CHECK(f.values.segment(1, 63).lpNorm<Eigen::Infinity>() == 0.0);

    CHECK_THROWS_AS(boundary_actuator_map(make_grid(2, 1.0, 8)), std::invalid_argument);
}

TEST_CASE("control_field linearity") {
    const Grid g = make_grid(1, 1.0, 33);
    ActuatorMap map = gaussian_actuator_map(g, {{0.4}, {0.6}}, 0.02);

    CHECK(control_field(map, Eigen::Vector2d::Zero()).values.lpNorm<Eigen::Infinity>() == 0.0);

    // two overlapping Gaussians sum pointwise
    Field both = control_field(map, Eigen::Vector2d(1.0, 1.0));
    Eigen::VectorXd direct = map.shapes.col(0) + map.shapes.col(1);
    CHECK((both.values - direct).lpNorm<Eigen::Infinity>() < 1e-15);

    Rng rng(3);
    std::normal_distribution<double> n01;
    for (int rep = 0; rep < 10; ++rep) {
        Eigen::Vector2d u(n01(rng), n01(rng)), v(n01(rng), n01(rng));
        const double alpha = n01(rng), beta = n01(rng);
        Field lhs = control_field(map, alpha * u + beta * v);
        Eigen::VectorXd rhs =
            alpha * control_field(map, u).values + beta * control_field(map, v).values;
        CHECK((lhs.values - rhs).lpNorm<Eigen::Infinity>() < 1e-12);
    }

    CHECK_THROWS_AS(control_field(map, Eigen::Vector3d::Zero()), std::invalid_argument);
}
