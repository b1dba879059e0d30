#include "doctest.h"

#include "mtwcheck/radial_metric.hpp"

#include <cmath>
#include <functional>

using namespace mtwcheck;

namespace {

// Test-only fixed-step RK4 for the warp equation, independent of the
// library's integration path.
std::pair<double, double> rk4_warp(const std::function<double(double)>& k, double r_end,
                                   int n) {
    double h = r_end / n;
    double phi = 0, dphi = 1, r = 0;
    auto fp = [&](double rr, double p) { return -k(rr) * p; };
    for (int i = 0; i < n; ++i) {
        double k1p = dphi, k1d = fp(r, phi);
        double k2p = dphi + 0.5 * h * k1d, k2d = fp(r + 0.5 * h, phi + 0.5 * h * k1p);
        double k3p = dphi + 0.5 * h * k2d, k3d = fp(r + 0.5 * h, phi + 0.5 * h * k2p);
        double k4p = dphi + h * k3d, k4d = fp(r + h, phi + h * k3p);
        phi += h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p);
        dphi += h / 6 * (k1d + 2 * k2d + 2 * k3d + k4d);
        r += h;
    }
    return {phi, dphi};
}

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    if (n % 2) ++n;
    double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3;
}

}  // namespace

TEST_CASE("profile_from_curvature: zero curvature gives phi = r") {
    auto prof = profile_from_curvature([](double) { return 0.0; }, 10.0, 1e-3);
    for (double r : {0.0, 0.1, 1.0, 3.7, 9.99}) {
        auto m = prof.eval(r);
        CHECK(std::abs(m.phi - r) <= 1e-11);
        CHECK(std::abs(m.dphi - 1) <= 1e-11);
        CHECK(std::abs(m.k) <= 1e-12);
    }
}

TEST_CASE("profile_from_curvature: unit curvature gives phi = sin r") {
    auto prof = profile_from_curvature([](double) { return 1.0; }, 3.0, 5e-4);
    CHECK(std::abs(prof.phi(pi / 2) - 1.0) <= 1e-9);
    for (double r : {0.3, 1.1, 2.5}) {
        CHECK(std::abs(prof.phi(r) - std::sin(r)) <= 1e-10);
        CHECK(std::abs(prof.dphi(r) - std::cos(r)) <= 1e-10);
    }
}

TEST_CASE("profile_from_curvature: collapse before r_max is rejected with the radius") {
    try {
        profile_from_curvature([](double) { return 1.0; }, 4.0, 5e-4);
        FAIL("expected ProfileCollapseError");
    } catch (const ProfileCollapseError& e) {
        CHECK(std::abs(e.radius - pi) <= 2e-3);
    }
}

TEST_CASE("flattened cone: calibrated slope matches the angle deficit") {
    auto spec = make_flattened_cone(0.02);
    const double target = 1.0 - 0.02 / pi;
    CHECK(std::abs(spec.beta - target) <= 1e-10);
    CHECK(std::abs(spec.profile.dphi(2.0) - target) <= 1e-7);

    // edge slope equals 1 - integral(k phi) (independent quadrature)
    double deficit = simpson(
        [&](double r) { return gaussian_curvature(spec, r) * spec.profile.phi(r); }, 0, 1,
        20000);
    CHECK(std::abs(spec.profile.dphi(1.0) - (1.0 - deficit)) <= 1e-9);

    // independent fixed-step integration at the calibrated amplitude
    double amp = spec.bump_amplitude;
    auto [phi1, dphi1] =
        rk4_warp([amp](double r) { return amp * bump_shape(r); }, 1.0, 20000);
    CHECK(std::abs(dphi1 - target) <= 1e-10);
    CHECK(std::abs(phi1 - spec.profile.phi(1.0)) <= 1e-10);
}

TEST_CASE("flattened cone: curvature support and apex value") {
    auto spec = make_flattened_cone(0.02);
    CHECK(gaussian_curvature(spec, 2.0) == 0.0);
    CHECK(gaussian_curvature(spec, 1.0) == 0.0);
    CHECK(gaussian_curvature(spec, 0.0) == spec.bump_amplitude * std::exp(-1.0));
    CHECK(spec.max_curvature == doctest::Approx(0.0316).epsilon(0.07));
    for (int i = 0; i <= 10000; ++i) {
        double r = 10.0 * i / 10000;
        double k = gaussian_curvature(spec, r);
        CHECK(k >= 0.0);
        if (r >= 1.0) CHECK(k == 0.0);
    }
    for (int i = 0; i <= 200; ++i) {
        double r = 0.995 * i / 200;
        CHECK(gaussian_curvature(spec, r) > 0.0);
    }
}

TEST_CASE("flattened cone: strict mode bounds and rejection") {
    auto spec = make_flattened_cone(5e-5, ConeMode::paper_strict);
    CHECK(spec.max_curvature < 1e-4);
    CHECK(pi / std::sqrt(spec.max_curvature) > 314.0);
    CHECK_THROWS_AS(make_flattened_cone(1e-4, ConeMode::paper_strict), StrictModeError);
    CHECK_THROWS_AS(make_flattened_cone(0.02, ConeMode::paper_strict), StrictModeError);
    CHECK_THROWS_AS(make_flattened_cone(2.0), std::invalid_argument);
}

TEST_CASE("flattened cone: tiny deficit degenerates to the plane") {
    auto spec = make_flattened_cone(1e-8);
    CHECK(spec.max_curvature <= 1e-7);
    CHECK(std::abs(spec.beta - 1.0) <= 1e-8);
    CHECK(std::abs(spec.profile.phi(5.0) - 5.0) <= 1e-7);
}

TEST_CASE("total positive curvature") {
    for (double theta : {0.005, 0.02, 0.05}) {
        auto spec = make_flattened_cone(theta);
        double total = total_positive_curvature(spec);
        CHECK(std::abs(total - 2 * theta) <= 1e-6);
        CHECK(total < pi);
    }
    CHECK(std::abs(total_positive_curvature(make_sphere(1.0)) - 4 * pi) <= 1e-6);
    CHECK(total_positive_curvature(make_plane()) == 0.0);
}

TEST_CASE("profile round trip: curvature back to profile") {
    auto spec = make_flattened_cone(0.02);
    auto rebuilt = profile_from_curvature(
        [&](double r) { return gaussian_curvature(spec, r); }, 10.0, 5e-4);
    double sup = 0;
    for (int i = 0; i <= 2000; ++i) {
        double r = 10.0 * i / 2000;
        sup = std::max(sup, std::abs(rebuilt.phi(r) - spec.profile.phi(r)));
    }
    CHECK(sup <= 1e-8);
}

TEST_CASE("sphere profile") {
    auto spec = make_sphere(1.0);
    for (double r : {0.2, 1.0, 2.0, 3.0}) {
        CHECK(gaussian_curvature(spec, r) == 1.0);
        CHECK(std::abs(spec.profile.phi(r) - std::sin(r)) <= 1e-14);
    }
    CHECK(spec.r_domain_end == doctest::Approx(pi));
}

TEST_CASE("capped closed surface") {
    auto spec = make_capped_closed(0.02, 100, 5);
    CHECK(spec.topology == Topology::closed);
    CHECK(std::abs(total_positive_curvature(spec) - 4 * pi) <= 1e-6);

    double r_pole = spec.r_domain_end;
    auto pole = spec.profile.eval(r_pole);
    CHECK(std::abs(pole.phi) <= 1e-9);
    CHECK(std::abs(pole.dphi + 1.0) <= 1e-12);

    double min_k = 1e30;
    for (int i = 0; i <= 20000; ++i) {
        double r = r_pole * i / 20000;
        min_k = std::min(min_k, gaussian_curvature(spec, r));
    }
    CHECK(min_k >= 0.0);
    CHECK(gaussian_curvature(spec, 50.0) == 0.0);
    CHECK(gaussian_curvature(spec, 120.0) == 0.0);

    // bump data bit-identical with the open cone
    auto open_spec = make_flattened_cone(0.02);
    const auto& b0 = open_spec.profile.segments[0];
    const auto& b1 = spec.profile.segments[0];
    REQUIRE(b0.phi.size() == b1.phi.size());
    bool same = true;
    for (std::size_t i = 0; i < b0.phi.size(); ++i)
        same = same && b0.phi[i] == b1.phi[i] && b0.dphi[i] == b1.dphi[i];
    CHECK(same);
    CHECK(spec.beta == open_spec.beta);
}

TEST_CASE("positive perturbation") {
    auto cone = make_flattened_cone(0.02);
    SUBCASE("epsilon zero is the identity") {
        auto same = perturb_positive(cone, 0.0);
        CHECK(same.kind == "cone");
        CHECK(same.beta == cone.beta);
        const auto& a = cone.profile.segments[0].phi;
        const auto& b = same.profile.segments[0].phi;
        REQUIRE(a.size() == b.size());
        bool eq = true;
        for (std::size_t i = 0; i < a.size(); ++i) eq = eq && a[i] == b[i];
        CHECK(eq);
    }
    SUBCASE("small epsilon keeps completeness and makes K strictly positive") {
        auto pert = perturb_positive(cone, 1e-3);
        CHECK(pert.kind == "perturbed");
        double min_k = 1e30;
        for (int i = 0; i <= 5000; ++i)
            min_k = std::min(min_k, gaussian_curvature(pert, 50.0 * i / 5000));
        CHECK(min_k > 0.0);
        CHECK(total_positive_curvature(pert) < 2 * pi);
        CHECK(std::abs(total_positive_curvature(pert) -
                       (2 * 0.02 + two_pi * 1e-3 *
                                        simpson([&](double r) { return psi_shape(r) *
                                                                       pert.profile.phi(r); },
                                                0, 400, 200000))) <= 1e-5);
    }
    SUBCASE("oversized epsilon is rejected") {
        CHECK_THROWS(perturb_positive(cone, 5.0));
    }
}

TEST_CASE("development chart round trips") {
    auto spec = make_flattened_cone(0.02);
    SUBCASE("paper points") {
        auto p = spec.dev_to_polar({10, 10});
        CHECK(p.r == doctest::Approx(std::sqrt(200.0)).epsilon(1e-15));
        auto back = spec.polar_to_dev(p);
        CHECK(std::abs(back.a - 10) <= 1e-12);
        CHECK(std::abs(back.b - 10) <= 1e-12);

        auto q = spec.dev_to_polar({-10, 0.5});
        CHECK(q.r == doctest::Approx(std::sqrt(100.25)).epsilon(1e-15));
        auto qb = spec.polar_to_dev(q);
        CHECK(std::abs(qb.a + 10) <= 1e-12);
        CHECK(std::abs(qb.b - 0.5) <= 1e-12);
    }
    SUBCASE("slit edges identified") {
        double t = spec.theta_deficit;
        double e = 1e-9;
        auto lo = spec.dev_to_polar({5 * std::cos(1.5 * pi + t + e), 5 * std::sin(1.5 * pi + t + e)});
        auto hi = spec.dev_to_polar({5 * std::cos(1.5 * pi - t - e), 5 * std::sin(1.5 * pi - t - e)});
        CHECK(lo.theta <= 1e-8);
        CHECK(hi.theta >= two_pi - 1e-8);
        CHECK_THROWS_AS(spec.dev_to_polar({0, -5}), SlitDomainError);
    }
    SUBCASE("radius conversions invert, including inside the bump") {
        for (double rho : {0.2, 0.5, 0.9, 1.0, 1.5, 14.0}) {
            double r = spec.intrinsic_of_dev_radius(rho);
            CHECK(std::abs(spec.dev_radius_of(r) - rho) <= 1e-12 * (1 + rho));
        }
        CHECK(spec.dev_radius_of(1.0) == doctest::Approx(1.0 + spec.cone_shift));
        CHECK(spec.cone_shift > 0.0);
        CHECK(spec.cone_shift < 0.01);
    }
    SUBCASE("frame round trip") {
        PointPolar at = spec.dev_to_polar({10, 10});
        Vec2 v{0.3, -1.2};
        Vec2 f = spec.frame_from_dev(at, v);
        Vec2 back = spec.dev_from_frame(at, f);
        CHECK(std::abs(back.x - v.x) <= 1e-14);
        CHECK(std::abs(back.y - v.y) <= 1e-14);
    }
}

TEST_CASE("plane and sphere charts are the identity labeling") {
    auto plane = make_plane();
    auto p = plane.dev_to_polar({3, 4});
    CHECK(p.r == doctest::Approx(5.0));
    auto b = plane.polar_to_dev(p);
    CHECK(std::abs(b.a - 3) <= 1e-13);
    CHECK(std::abs(b.b - 4) <= 1e-13);

    auto sph = make_sphere(1.0);
    auto q = sph.dev_to_polar({0.3, 0.4});
    CHECK(q.r == doctest::Approx(0.5));
    CHECK(sph.intrinsic_of_dev_radius(0.5) == 0.5);
}
