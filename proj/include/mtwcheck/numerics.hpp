#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mtwcheck {

inline constexpr double pi = std::numbers::pi_v<double>;
inline constexpr double two_pi = 2.0 * std::numbers::pi_v<double>;

/// Wrap angle into [0, 2*pi).
inline double wrap_2pi(double a) {
    double w = std::fmod(a, two_pi);
    if (w < 0) w += two_pi;
    if (w == two_pi) w = 0.0;
    return w;
}

/// Wrap angle into (-pi, pi].
inline double wrap_pm_pi(double a) {
    double w = std::fmod(a, two_pi);
    if (w <= -pi) w += two_pi;
    if (w > pi) w -= two_pi;
    return w;
}

struct Vec2 {
    double x = 0, y = 0;
    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double c) const { return {x * c, y * c}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
};

inline Vec2 operator*(double c, Vec2 v) { return v * c; }

/// Distance from the origin to the segment [a, b].
inline double segment_min_radius(Vec2 a, Vec2 b) {
    Vec2 d = b - a;
    double len2 = d.dot(d);
    if (len2 == 0) return a.norm();
    double t = -a.dot(d) / len2;
    if (t <= 0) return a.norm();
    if (t >= 1) return b.norm();
    return (a + t * d).norm();
}

/// Deterministic splitmix64 generator; used instead of <random> distributions
/// so sampled configurations are reproducible across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

  private:
    std::uint64_t state_;
};

struct RootResult {
    double x = std::numeric_limits<double>::quiet_NaN();
    double f = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    bool converged = false;
};

/// Safeguarded secant/bisection solver on a bracketing interval
/// [a, b] with f(a) * f(b) <= 0. Converges to |f| <= ftol or interval
/// width <= xtol, then polishes with plain secant steps to push the
/// residual toward machine level (keeps downstream finite differences
/// of solver output smooth).
template <typename F>
RootResult solve_bracketed(F&& f, double a, double fa, double b, double fb,
                           double xtol, double ftol, int max_iter = 120) {
    RootResult res;
    if (fa == 0) { res = {a, fa, 0, true}; return res; }
    if (fb == 0) { res = {b, fb, 0, true}; return res; }
    if (std::isnan(fa) || std::isnan(fb) || fa * fb > 0)
        return res;

    double x0 = a, f0 = fa, x1 = b, f1 = fb;
    double best_x = std::abs(f0) < std::abs(f1) ? x0 : x1;
    double best_f = std::abs(f0) < std::abs(f1) ? f0 : f1;
    int it = 0;
    for (; it < max_iter; ++it) {
        double mid = 0.5 * (x0 + x1);
        double cand = mid;
        if (f1 != f0) {
            double sec = x1 - f1 * (x1 - x0) / (f1 - f0);
            double lo = std::min(x0, x1), hi = std::max(x0, x1);
            double margin = 0.01 * (hi - lo);
            if (sec > lo + margin && sec < hi - margin) cand = sec;
        }
        double fc = f(cand);
        ++it;
        if (!std::isnan(fc) && std::abs(fc) < std::abs(best_f)) { best_x = cand; best_f = fc; }
        if (std::isnan(fc)) {
            // invalid sample inside the bracket: fall back to pure bisection on halves
            fc = f(mid);
            cand = mid;
            if (std::isnan(fc)) break;
            if (std::abs(fc) < std::abs(best_f)) { best_x = cand; best_f = fc; }
        }
        if (fc == 0 || std::abs(fc) <= ftol) { best_x = cand; best_f = fc; break; }
        if (f0 * fc <= 0) { x1 = cand; f1 = fc; }
        else { x0 = cand; f0 = fc; }
        if (std::abs(x1 - x0) <= xtol) break;
    }
    // secant polish
    double px0 = x0, pf0 = f0, px1 = best_x, pf1 = best_f;
    for (int k = 0; k < 3; ++k) {
        if (pf1 == 0 || pf0 == pf1) break;
        double nx = px1 - pf1 * (px1 - px0) / (pf1 - pf0);
        if (!std::isfinite(nx)) break;
        double nf = f(nx);
        ++it;
        if (std::isnan(nf) || std::abs(nf) >= std::abs(pf1)) break;
        px0 = px1; pf0 = pf1; px1 = nx; pf1 = nf;
    }
    if (std::abs(pf1) < std::abs(best_f)) { best_x = px1; best_f = pf1; }
    res.x = best_x;
    res.f = best_f;
    res.iterations = it;
    res.converged = std::abs(best_f) <= 10 * ftol || std::abs(x1 - x0) <= xtol;
    return res;
}

/// Quintic Hermite on [0, h] from endpoint (value, first, second)
/// derivatives; evaluates value and the first two derivatives.
struct QuinticHermite {
    std::array<double, 6> a{};  // coefficients in u = (x - x0) / h
    double h = 1;

    static QuinticHermite fit(double h, double p0, double d0, double s0,
                              double p1, double d1, double s1) {
        QuinticHermite q;
        q.h = h;
        double dp = p1 - p0;
        q.a[0] = p0;
        q.a[1] = h * d0;
        q.a[2] = 0.5 * h * h * s0;
        q.a[3] = 10 * dp - h * (6 * d0 + 4 * d1) - h * h * (1.5 * s0 - 0.5 * s1);
        q.a[4] = -15 * dp + h * (8 * d0 + 7 * d1) + h * h * (1.5 * s0 - s1);
        q.a[5] = 6 * dp - 3 * h * (d0 + d1) - 0.5 * h * h * (s0 - s1);
        return q;
    }

    void eval(double u, double& v, double& d1, double& d2) const {
        v = ((((a[5] * u + a[4]) * u + a[3]) * u + a[2]) * u + a[1]) * u + a[0];
        double dv = (((5 * a[5] * u + 4 * a[4]) * u + 3 * a[3]) * u + 2 * a[2]) * u + a[1];
        double ddv = ((20 * a[5] * u + 12 * a[4]) * u + 6 * a[3]) * u + 2 * a[2];
        d1 = dv / h;
        d2 = ddv / (h * h);
    }
};

/// Cubic Hermite dense-output evaluation on [s0, s1] from endpoint
/// values and derivatives.
inline double cubic_hermite(double s, double s0, double s1, double y0, double f0,
                            double y1, double f1) {
    double h = s1 - s0;
    double u = (s - s0) / h;
    double u2 = u * u, u3 = u2 * u;
    return y0 * (2 * u3 - 3 * u2 + 1) + h * f0 * (u3 - 2 * u2 + u) +
           y1 * (-2 * u3 + 3 * u2) + h * f1 * (u3 - u2);
}

inline double cubic_hermite_deriv(double s, double s0, double s1, double y0, double f0,
                                  double y1, double f1) {
    double h = s1 - s0;
    double u = (s - s0) / h;
    double u2 = u * u;
    return (y0 * (6 * u2 - 6 * u) + h * f0 * (3 * u2 - 4 * u + 1) +
            y1 * (-6 * u2 + 6 * u) + h * f1 * (3 * u2 - 2 * u)) / h;
}

}  // namespace mtwcheck
