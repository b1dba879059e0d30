#include "mtwcheck/geodesics.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>

namespace mtwcheck {

namespace {

namespace ode = boost::numeric::odeint;
using stepper_t = ode::runge_kutta_fehlberg78<GeoState>;

struct GeoSystem {
    const SurfaceSpec* spec;
    double nu;
    double r_hi_clamp;

    void operator()(const GeoState& y, GeoState& dy, double) const {
        double r = std::clamp(y[0], 1e-9, r_hi_clamp);
        auto m = spec->profile.eval(r);
        dy[0] = y[1];
        if (nu == 0) {
            dy[1] = 0;
            dy[2] = 0;
        } else {
            double phi = std::max(m.phi, 1e-12);
            double inv2 = 1.0 / (phi * phi);
            dy[1] = nu * nu * m.dphi * inv2 / phi;
            dy[2] = nu * inv2;
        }
        dy[3] = y[4];
        dy[4] = -m.k * y[3];
    }
};

double hi_clamp(const SurfaceSpec& spec) {
    return spec.topology == Topology::closed ? spec.r_domain_end : spec.profile.r_tab_max;
}

struct RoughRegion {
    double lo, hi, cap;
};

/// Regions where the curvature profile is flat-to-all-orders at an edge;
/// embedded error estimates are over-optimistic there, so steps are capped.
std::vector<RoughRegion> rough_regions(const SurfaceSpec& spec) {
    std::vector<RoughRegion> out;
    if (spec.bump_amplitude > 0) out.push_back({0.0, spec.bump_r_end, 0.02});
    if (spec.kind == "capped")
        out.push_back({spec.cap_radius, spec.cap_radius + spec.rounding_width,
                       spec.rounding_width / 250.0});
    return out;
}

double capped_step(const std::vector<RoughRegion>& regions, double r, double step) {
    for (const auto& reg : regions)
        if (r + step >= reg.lo && r - step <= reg.hi) step = std::min(step, reg.cap);
    return step;
}

/// Advance y from s to s_target; no storage, no guards (used for
/// checkpointed refinement over sub-steps of an accepted trajectory).
void advance_plain(const GeoSystem& sys, const std::vector<RoughRegion>& regions, GeoState& y,
                   double& s, double s_target, const OdeSettings& set) {
    auto ctrl = ode::make_controlled(set.atol, set.rtol, stepper_t());
    double dt = std::min(set.h_init, std::max(s_target - s, 1e-12));
    long guard = 0;
    while (s < s_target) {
        double step = std::min(dt, s_target - s);
        step = capped_step(regions, y[0], step);
        ctrl.try_step(sys, y, s, step);
        dt = step;
        if (++guard > 2000000 || dt < 1e-15)
            throw std::runtime_error("geodesic refinement stalled at s = " + std::to_string(s));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

const GeodesicTrajectory::Step& GeodesicTrajectory::step_containing(double s) const {
    if (steps.empty()) throw std::logic_error("empty trajectory");
    auto it = std::upper_bound(steps.begin(), steps.end(), s,
                               [](double v, const Step& st) { return v < st.s1; });
    if (it == steps.end()) --it;
    return *it;
}

GeoState GeodesicTrajectory::eval(double s) const {
    const Step& st = step_containing(s);
    GeoState out;
    for (int i = 0; i < 5; ++i)
        out[i] = cubic_hermite(s, st.s0, st.s1, st.y0[i], st.f0[i], st.y1[i], st.f1[i]);
    return out;
}

GeodesicTrajectory integrate_geodesic(const SurfaceSpec& spec, const GeoState& y0, double nu,
                                      double L, const OdeSettings& set,
                                      double stop_beyond_level) {
    GeodesicTrajectory traj;
    if (L <= 0) return traj;
    auto ctrl = ode::make_controlled(set.atol, set.rtol, stepper_t());
    GeoSystem sys{&spec, nu, hi_clamp(spec)};
    auto regions = rough_regions(spec);
    const double guard_lo = spec.apex_guard;
    const double guard_hi = spec.topology == Topology::closed
                                ? spec.r_domain_end - spec.apex_guard
                                : std::numeric_limits<double>::infinity();

    GeoState y = y0, f;
    sys(y, f, 0.0);
    double s = 0, dt = set.h_init;
    long guard = 0;
    while (s < L) {
        double step = std::min(dt, L - s);
        step = capped_step(regions, y[0], step);
        GeoState ytry = y;
        double stry = s, dtry = step;
        auto res = ctrl.try_step(sys, ytry, stry, dtry);
        if (++guard > 5000000 || dtry < 1e-15)
            throw std::runtime_error("geodesic integration stalled at s = " + std::to_string(s));
        if (res == ode::controlled_step_result::fail) {
            dt = dtry;
            continue;
        }
        GeodesicTrajectory::Step rec;
        rec.s0 = s;
        rec.s1 = stry;
        rec.y0 = y;
        rec.f0 = f;
        rec.y1 = ytry;
        sys(ytry, f, stry);
        rec.f1 = f;
        traj.steps.push_back(rec);
        y = ytry;
        s = stry;
        dt = dtry;

        // guard scan over the accepted step
        double rmin = std::min(rec.y0[0], rec.y1[0]);
        double rmax = std::max(rec.y0[0], rec.y1[0]);
        if (rec.y0[1] * rec.y1[1] <= 0) {
            for (int i = 1; i < 8; ++i) {
                double si = rec.s0 + (rec.s1 - rec.s0) * i / 8.0;
                double ri = cubic_hermite(si, rec.s0, rec.s1, rec.y0[0], rec.f0[0], rec.y1[0],
                                          rec.f1[0]);
                rmin = std::min(rmin, ri);
                rmax = std::max(rmax, ri);
            }
        }
        if (rmin < guard_lo) throw ApexGuardError(s, rmin, false);
        if (rmax > guard_hi) throw ApexGuardError(s, rmax, true);

        if (y[0] > stop_beyond_level && y[1] > 0) {
            traj.early_stopped = true;
            break;
        }
    }
    return traj;
}

GeoState refined_state(const SurfaceSpec& spec, const GeodesicTrajectory& traj, double nu,
                       double s, const OdeSettings& set) {
    const auto& st = traj.step_containing(s);
    GeoState y = st.y0;
    double t = st.s0;
    if (s <= t) return y;
    GeoSystem sys{&spec, nu, hi_clamp(spec)};
    auto regions = rough_regions(spec);
    advance_plain(sys, regions, y, t, s, set);
    return y;
}

std::vector<RadiusCrossing> trajectory_radius_crossings(const SurfaceSpec& spec,
                                                        const GeodesicTrajectory& traj,
                                                        double nu, double level, double s_hi,
                                                        const OdeSettings& set) {
    std::vector<RadiusCrossing> out;
    constexpr int kScan = 16;
    for (const auto& st : traj.steps) {
        if (st.s0 >= s_hi) break;
        double hi = std::min(st.s1, s_hi);
        auto rad = [&](double s) {
            return cubic_hermite(s, st.s0, st.s1, st.y0[0], st.f0[0], st.y1[0], st.f1[0]) -
                   level;
        };
        double prev_s = st.s0, prev_g = rad(prev_s);
        for (int i = 1; i <= kScan; ++i) {
            double si = st.s0 + (hi - st.s0) * i / kScan;
            double gi = rad(si);
            if (prev_g == 0.0 || prev_g * gi < 0) {
                double a = prev_s, b = si, ga = prev_g;
                for (int it = 0; it < 60; ++it) {
                    double mid = 0.5 * (a + b);
                    double gm = rad(mid);
                    if (ga * gm <= 0) b = mid;
                    else { a = mid; ga = gm; }
                    if (b - a < 1e-13 * (1 + std::abs(b))) break;
                }
                double sc = 0.5 * (a + b);
                // checkpointed Newton polish
                GeoState y = refined_state(spec, traj, nu, sc, set);
                for (int it = 0; it < 4; ++it) {
                    double g = y[0] - level;
                    if (y[1] == 0) break;
                    double stp = g / y[1];
                    if (std::abs(stp) < 1e-15 * (1 + sc)) break;
                    double sn = sc - stp;
                    if (sn <= st.s0 - 1e-9 || sn >= hi + (hi - st.s0)) break;
                    sc = std::max(sn, 0.0);
                    y = refined_state(spec, traj, nu, sc, set);
                }
                if (sc > 1e-12 && sc <= s_hi && (out.empty() || sc - out.back().s > 1e-9))
                    out.push_back({sc, y[2], y[1]});
            }
            prev_s = si;
            prev_g = gi;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Geodesic
// ---------------------------------------------------------------------------

Geodesic Geodesic::make_numeric(const SurfaceSpec& spec, IntrinsicPos start, double alpha,
                                double L, const OdeSettings& set) {
    Geodesic g;
    g.kind_ = Kind::numeric;
    g.spec_ = &spec;
    g.start_ = start;
    g.alpha_ = alpha;
    g.length_ = L;
    g.ode_ = set;
    double phi0 = spec.metric(start.r).phi;
    g.nu_ = phi0 * std::sin(alpha);
    GeoState y0{start.r, std::cos(alpha), start.theta, 0.0, 1.0};
    g.traj_ = integrate_geodesic(spec, y0, g.nu_, L, set);
    return g;
}

Geodesic Geodesic::make_radial(const SurfaceSpec& spec, IntrinsicPos start, bool outward,
                               double L) {
    Geodesic g;
    g.kind_ = Kind::radial;
    g.spec_ = &spec;
    g.start_ = start;
    g.alpha_ = outward ? 0.0 : pi;
    g.length_ = L;
    g.nu_ = 0;
    g.radial_dir_ = outward ? 1 : -1;
    if (spec.topology == Topology::open) {
        if (!outward && start.r - L < spec.apex_guard)
            throw ApexGuardError(start.r - spec.apex_guard, spec.apex_guard, false);
        if (outward && start.r + L > spec.profile.r_tab_max)
            throw DomainLimitError(start.r + L, spec.profile.r_tab_max);
    }
    return g;
}

Geodesic Geodesic::make_flat_line(const SurfaceSpec& spec, IntrinsicPos start, double alpha,
                                  double L) {
    Geodesic g;
    g.kind_ = Kind::flat_line;
    g.spec_ = &spec;
    g.start_ = start;
    g.alpha_ = alpha;
    g.length_ = L;
    double rho0 = spec.dev_radius_of(start.r);
    g.flat_x0_ = {rho0, 0.0};
    g.flat_v_ = {std::cos(alpha), std::sin(alpha)};
    g.nu_ = spec.beta * g.flat_x0_.cross(g.flat_v_);
    return g;
}

GeodesicState Geodesic::radial_state(double s) const {
    GeodesicState st;
    if (spec_->topology == Topology::open) {
        st.r = start_.r + radial_dir_ * s;
        st.theta = start_.theta;
        st.dr = radial_dir_;
        st.dtheta = 0;
        return st;
    }
    double re = spec_->r_domain_end;
    double p = start_.r + radial_dir_ * s;
    double q = p / re;
    double kf = std::floor(q);
    double frac = q - kf;
    auto k = static_cast<long long>(kf);
    bool even = (k % 2) == 0;
    st.r = even ? frac * re : (1.0 - frac) * re;
    st.dr = radial_dir_ * (even ? 1.0 : -1.0);
    st.theta = start_.theta + pi * std::abs(kf);
    st.dtheta = 0;
    return st;
}

GeodesicState Geodesic::flat_state(double s) const {
    Vec2 p = flat_x0_ + s * flat_v_;
    double rho = p.norm();
    double chi = std::atan2(p.y, p.x);
    GeodesicState st;
    st.r = rho - spec_->cone_shift;
    st.theta = start_.theta + chi / spec_->beta;
    st.dr = p.dot(flat_v_) / rho;
    st.dtheta = p.cross(flat_v_) / (rho * rho * spec_->beta);
    return st;
}

GeodesicState Geodesic::state_at(double s) const {
    s = std::clamp(s, 0.0, length_);
    switch (kind_) {
        case Kind::radial: return radial_state(s);
        case Kind::flat_line: return flat_state(s);
        case Kind::numeric: {
            if (traj_.steps.empty()) return {start_.r, start_.theta, std::cos(alpha_), 0.0};
            GeoState y = traj_.eval(s);
            double phi = spec_->metric(std::max(y[0], 1e-9)).phi;
            return {y[0], y[2], y[1], nu_ == 0 ? 0.0 : nu_ / (phi * phi)};
        }
    }
    throw std::logic_error("unreachable");
}

GeodesicState Geodesic::state_at_refined(double s) const {
    s = std::clamp(s, 0.0, length_);
    if (kind_ != Kind::numeric || traj_.steps.empty()) return state_at(s);
    GeoState y = refined_state(*spec_, traj_, nu_, s, ode_);
    double phi = spec_->metric(std::max(y[0], 1e-9)).phi;
    return {y[0], y[2], y[1], nu_ == 0 ? 0.0 : nu_ / (phi * phi)};
}

IntrinsicPos Geodesic::intrinsic_at(double s) const {
    auto st = state_at(s);
    return {st.r, st.theta};
}

IntrinsicPos Geodesic::endpoint_intrinsic() const {
    if (kind_ == Kind::numeric && !traj_.steps.empty()) {
        const auto& y = traj_.steps.back().y1;
        return {y[0], y[2]};
    }
    return intrinsic_at(length_);
}

PointPolar Geodesic::endpoint() const { return spec_->polar_of(endpoint_intrinsic()); }

double Geodesic::velocity_angle_at(double s) const {
    auto st = (kind_ == Kind::numeric) ? state_at_refined(s) : state_at(s);
    double phi = spec_->metric(std::max(st.r, 1e-9)).phi;
    return std::atan2(phi * st.dtheta, st.dr);
}

const GeodesicTrajectory& Geodesic::radial_jacobi() const {
    if (radial_jacobi_) return *radial_jacobi_;
    auto traj = std::make_shared<GeodesicTrajectory>();
    auto kfun = [&](double s) {
        auto st = radial_state(s);
        return spec_->metric(std::clamp(st.r, 0.0, spec_->profile.r_tab_max)).k;
    };
    using JState = std::array<double, 2>;
    using jstepper_t = ode::runge_kutta_fehlberg78<JState>;
    auto ctrl = ode::make_controlled(ode_.atol, ode_.rtol, jstepper_t());
    auto sys = [&](const JState& y, JState& dy, double s) {
        dy[0] = y[1];
        dy[1] = -kfun(s) * y[0];
    };
    auto regions = rough_regions(*spec_);
    double re = spec_->r_domain_end;
    JState y{0.0, 1.0};
    double s = 0, dt = ode_.h_init;
    long guard = 0;
    while (s < length_) {
        double step = std::min(dt, length_ - s);
        double r_now = radial_state(s).r;
        step = capped_step(regions, r_now, step);
        if (spec_->topology == Topology::closed) {
            // steps must not straddle pole/center reflections: K(r(s)) has
            // a kink there
            double p = start_.r + radial_dir_ * s;
            double next_fold = radial_dir_ > 0 ? (std::floor(p / re + 1e-12) + 1) * re
                                               : (std::ceil(p / re - 1e-12) - 1) * re;
            double s_fold = (next_fold - start_.r) / radial_dir_;
            if (s_fold > s + 1e-12 && s_fold - s < step) step = s_fold - s;
        }
        JState ytry = y;
        double stry = s, dtry = step;
        auto res = ctrl.try_step(sys, ytry, stry, dtry);
        if (++guard > 2000000) throw std::runtime_error("radial Jacobi integration stalled");
        if (res == ode::controlled_step_result::fail) {
            dt = dtry;
            continue;
        }
        GeodesicTrajectory::Step rec;
        rec.s0 = s;
        rec.s1 = stry;
        auto st0 = radial_state(s);
        auto st1 = radial_state(stry);
        rec.y0 = {st0.r, st0.dr, st0.theta, y[0], y[1]};
        rec.y1 = {st1.r, st1.dr, st1.theta, ytry[0], ytry[1]};
        rec.f0 = {st0.dr, 0, 0, y[1], -kfun(s) * y[0]};
        rec.f1 = {st1.dr, 0, 0, ytry[1], -kfun(stry) * ytry[0]};
        traj->steps.push_back(rec);
        y = ytry;
        s = stry;
        dt = dtry;
    }
    radial_jacobi_ = traj;
    return *radial_jacobi_;
}

double Geodesic::jacobi_at(double s) const {
    s = std::clamp(s, 0.0, length_);
    switch (kind_) {
        case Kind::flat_line: return s;
        case Kind::radial: {
            if (length_ == 0) return 0;
            return radial_jacobi().eval(s)[3];
        }
        case Kind::numeric: {
            if (traj_.steps.empty()) return 0;
            return traj_.eval(s)[3];
        }
    }
    throw std::logic_error("unreachable");
}

namespace {

std::optional<double> first_jacobi_zero(const GeodesicTrajectory& traj, double s_max) {
    for (const auto& st : traj.steps) {
        if (st.s0 >= s_max) break;
        double j0 = st.y0[3], j1 = st.y1[3];
        if (st.s0 <= 1e-9) {
            if (j1 > 0) continue;  // J ~ s near the start
            j0 = 1e-300;
        }
        if (j0 > 0 && j1 > 0) continue;
        auto jac = [&](double s) {
            return cubic_hermite(s, st.s0, st.s1, st.y0[3], st.f0[3], st.y1[3], st.f1[3]);
        };
        double a = st.s0, b = st.s1, ja = j0;
        if (ja <= 0) return st.s0;
        for (int it = 0; it < 80; ++it) {
            double mid = 0.5 * (a + b);
            double jm = jac(mid);
            if (ja * jm <= 0) b = mid;
            else { a = mid; ja = jm; }
            if (b - a < 1e-10) break;
        }
        double z = 0.5 * (a + b);
        if (z <= s_max) return z;
        return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace

bool Geodesic::jacobi_positive() const {
    if (kind_ == Kind::flat_line) return true;
    if (length_ <= 1e-12) return true;
    const GeodesicTrajectory& traj = kind_ == Kind::radial ? radial_jacobi() : traj_;
    if (traj.steps.empty()) return true;
    return !first_jacobi_zero(traj, length_).has_value();
}

std::optional<double> Geodesic::jacobi_zero(double s_max) const {
    if (kind_ == Kind::flat_line) return std::nullopt;
    if (length_ <= 1e-12) return std::nullopt;
    const GeodesicTrajectory& traj = kind_ == Kind::radial ? radial_jacobi() : traj_;
    if (traj.steps.empty()) return std::nullopt;
    return first_jacobi_zero(traj, std::min(s_max, length_));
}

double Geodesic::min_radius(double* s_at) const {
    if (kind_ == Kind::radial) {
        double best = 1e300, sb = 0;
        for (double s : {0.0, length_}) {
            auto st = radial_state(s);
            if (st.r < best) {
                best = st.r;
                sb = s;
            }
        }
        if (spec_->topology == Topology::closed) {
            double re = spec_->r_domain_end;
            double p0 = start_.r, p1 = start_.r + radial_dir_ * length_;
            double lo = std::min(p0, p1), hi = std::max(p0, p1);
            for (double m = std::ceil(lo / (2 * re)) * 2 * re; m <= hi; m += 2 * re) {
                double s = (m - p0) / radial_dir_;
                if (s >= 0 && s <= length_ && best > 0) {
                    best = 0;
                    sb = s;
                }
            }
        }
        if (s_at) *s_at = sb;
        return best;
    }
    if (kind_ == Kind::flat_line) {
        Vec2 p1 = flat_x0_ + length_ * flat_v_;
        double rho = segment_min_radius(flat_x0_, p1);
        if (s_at) {
            double t = -flat_x0_.dot(flat_v_);
            *s_at = std::clamp(t, 0.0, length_);
        }
        return rho - spec_->cone_shift;
    }
    double best = 1e300, sb = 0;
    for (const auto& st : traj_.steps) {
        for (int i = 0; i <= 8; ++i) {
            double s = st.s0 + (st.s1 - st.s0) * i / 8.0;
            double r = cubic_hermite(s, st.s0, st.s1, st.y0[0], st.f0[0], st.y1[0], st.f1[0]);
            if (r < best) {
                best = r;
                sb = s;
            }
        }
    }
    if (s_at) *s_at = sb;
    return best;
}

std::vector<RadiusCrossing> Geodesic::radius_crossings(double level, double s_hi) const {
    s_hi = std::min(s_hi, length_);
    std::vector<RadiusCrossing> out;
    if (kind_ == Kind::numeric) {
        if (traj_.steps.empty()) return out;
        return trajectory_radius_crossings(*spec_, traj_, nu_, level, s_hi, ode_);
    }
    if (kind_ == Kind::radial) {
        if (spec_->topology == Topology::open) {
            double s = (level - start_.r) / radial_dir_;
            if (s > 1e-12 && s <= s_hi)
                out.push_back({s, start_.theta, static_cast<double>(radial_dir_)});
            return out;
        }
        double re = spec_->r_domain_end;
        int k_max = static_cast<int>(std::ceil((start_.r + s_hi) / re)) + 2;
        for (int k = -k_max; k <= k_max; ++k) {
            for (double target : {k * re + level, k * re - level}) {
                double s = (target - start_.r) / radial_dir_;
                if (s > 1e-12 && s <= s_hi) {
                    auto st = radial_state(s);
                    if (std::abs(st.r - level) < 1e-9) out.push_back({s, st.theta, st.dr});
                }
            }
        }
        std::sort(out.begin(), out.end(),
                  [](const RadiusCrossing& a, const RadiusCrossing& b) { return a.s < b.s; });
        out.erase(std::unique(out.begin(), out.end(),
                              [](const RadiusCrossing& a, const RadiusCrossing& b) {
                                  return std::abs(a.s - b.s) < 1e-9;
                              }),
                  out.end());
        return out;
    }
    // flat line: |x0 + s v|^2 = rho_level^2
    double rho_level = level + spec_->cone_shift;
    double b = flat_x0_.dot(flat_v_);
    double c = flat_x0_.dot(flat_x0_) - rho_level * rho_level;
    double disc = b * b - c;
    if (disc < 0) return out;
    double sq = std::sqrt(disc);
    for (double s : {-b - sq, -b + sq}) {
        if (s > 1e-12 && s <= s_hi) {
            auto st = flat_state(s);
            out.push_back({s, st.theta, st.dr});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

Geodesic shoot_intrinsic(const SurfaceSpec& spec, IntrinsicPos x, double alpha, double L,
                         const OdeSettings& set) {
    if (L < 0) throw std::invalid_argument("geodesic length must be nonnegative");
    if (x.r < spec.apex_guard && L > 0) throw ApexGuardError(0.0, x.r, false);
    alpha = wrap_pm_pi(alpha);
    double sa = std::sin(alpha);
    if (sa == 0.0) return Geodesic::make_radial(spec, x, std::cos(alpha) > 0, L);
    if (spec.has_flat_window()) {
        double rho0 = spec.dev_radius_of(x.r);
        Vec2 x0{rho0, 0.0}, v{std::cos(alpha), std::sin(alpha)};
        Vec2 p1 = x0 + L * v;
        double lo = segment_min_radius(x0, p1);
        double hi = std::max(rho0, p1.norm());
        if (lo >= spec.flat_rho_lo && hi <= spec.flat_rho_hi)
            return Geodesic::make_flat_line(spec, x, alpha, L);
    }
    return Geodesic::make_numeric(spec, x, alpha, L, set);
}

Geodesic shoot(const SurfaceSpec& spec, PointPolar x, double alpha, double L,
               const OdeSettings& set) {
    return shoot_intrinsic(spec, spec.intrinsic_of(x), alpha, L, set);
}

PointPolar exp_map(const SurfaceSpec& spec, PointPolar x, Vec2 v, const OdeSettings& set) {
    double L = v.norm();
    if (L == 0) return {x.r, wrap_2pi(x.theta)};
    double alpha = std::atan2(v.y, v.x);
    return shoot(spec, x, alpha, L, set).endpoint();
}

std::optional<double> jacobi_first_zero(const SurfaceSpec& spec, PointPolar x, double alpha,
                                        double s_max, const OdeSettings& set) {
    Geodesic g = shoot(spec, x, alpha, s_max, set);
    return g.jacobi_zero(s_max);
}

}  // namespace mtwcheck
