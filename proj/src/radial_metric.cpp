#include "mtwcheck/radial_metric.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>

namespace mtwcheck {

namespace {

using WarpState = std::array<double, 2>;  // (phi, dphi)

constexpr double strict_curvature_limit = 1e-4;  // 1/10000

struct WarpSystem {
    const std::function<double(double)>* k;
    void operator()(const WarpState& y, WarpState& dy, double r) const {
        dy[0] = y[1];
        dy[1] = -(*k)(r)*y[0];
    }
};

/// Advance the warp ODE from `r` to `r_target` with an adaptive RKF78 step.
/// The step is capped: the bump curvature is flat to all orders at its
/// support edge, which makes embedded error estimates over-optimistic on
/// large steps.
void advance_warp(const std::function<double(double)>& k, WarpState& y, double& r,
                  double r_target, double& dt, double h_max = 0.01) {
    namespace ode = boost::numeric::odeint;
    using stepper_t = ode::runge_kutta_fehlberg78<WarpState>;
    thread_local auto ctrl = ode::make_controlled(1e-15, 1e-13, stepper_t());
    WarpSystem sys{&k};
    int guard = 0;
    while (r < r_target) {
        double step = std::min({dt, r_target - r, h_max});
        ctrl.try_step(sys, y, r, step);
        dt = step;  // odeint leaves its next-step suggestion here
        if (++guard > 10000000 || dt < 1e-15)
            throw CalibrationError("warp integration stalled at r = " + std::to_string(r));
    }
}

/// Tabulate the warp ODE on a uniform grid appended to the segment.
void tabulate_segment(ProfileSegment& seg, const std::function<double(double)>& k,
                      WarpState& y, bool reject_collapse) {
    const std::size_t n = seg.phi.capacity();
    double r = seg.r0;
    double dt = seg.h;
    seg.phi.push_back(y[0]);
    seg.dphi.push_back(y[1]);
    seg.ddphi.push_back(-k(seg.r0) * y[0]);
    for (std::size_t i = 1; i < n; ++i) {
        double rt = seg.r0 + static_cast<double>(i) * seg.h;
        advance_warp(k, y, r, rt, dt);
        if (reject_collapse && y[0] <= 0 && rt > 0)
            throw ProfileCollapseError(rt);
        seg.phi.push_back(y[0]);
        seg.dphi.push_back(y[1]);
        seg.ddphi.push_back(-k(rt) * y[0]);
    }
}

double gk_integrate(const std::function<double(double)>& f, double a, double b,
                    double tol = 1e-12) {
    double err = 0;
    return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, a, b, 15, tol, &err);
}

/// C-infinity monotone step: 0 for u <= 0, 1 for u >= 1.
double smoothstep(double u) {
    if (u <= 0) return 0;
    if (u >= 1) return 1;
    double a = std::exp(-1.0 / u);
    double b = std::exp(-1.0 / (1.0 - u));
    return a / (a + b);
}

double smoothstep_deriv(double u) {
    if (u <= 0 || u >= 1) return 0;
    double a = std::exp(-1.0 / u);
    double b = std::exp(-1.0 / (1.0 - u));
    double da = a / (u * u);
    double db = -b / ((1.0 - u) * (1.0 - u));
    double s = a + b;
    return (da * s - a * (da + db)) / (s * s);
}

}  // namespace

// ---------------------------------------------------------------------------
// RadialProfile
// ---------------------------------------------------------------------------

const ProfileSegment& RadialProfile::segment_at(double r) const {
    for (const auto& seg : segments) {
        if (r < seg.r1) return seg;
    }
    const auto& last = segments.back();
    if (r <= last.r1 * (1 + 1e-12) || r <= last.r1 + 1e-9) return last;
    throw DomainLimitError(r, last.r1);
}

RadialProfile::Eval RadialProfile::eval(double r) const {
    if (r < 0) {
        if (r > -1e-12) r = 0;
        else throw std::invalid_argument("negative radius");
    }
    if (r > r_tab_max) throw DomainLimitError(r, r_tab_max);
    const ProfileSegment& seg = segment_at(r);
    Eval out{};
    switch (seg.kind) {
        case ProfileSegment::Kind::linear: {
            out.phi = seg.lin_a + seg.lin_b * (r - seg.r0);
            out.dphi = seg.lin_b;
            out.ddphi = 0;
            out.k = 0;
            return out;
        }
        case ProfileSegment::Kind::sphere: {
            double w = std::sqrt(seg.delta);
            out.phi = std::sin(w * r) / w;
            out.dphi = std::cos(w * r);
            out.ddphi = -seg.delta * out.phi;
            out.k = seg.delta;
            return out;
        }
        case ProfileSegment::Kind::sampled: {
            double t = (r - seg.r0) / seg.h;
            auto i = static_cast<std::size_t>(t);
            if (i + 2 > seg.phi.size()) i = seg.phi.size() - 2;
            double u = (r - seg.r0 - static_cast<double>(i) * seg.h) / seg.h;
            u = std::clamp(u, 0.0, 1.0);
            auto q = QuinticHermite::fit(seg.h, seg.phi[i], seg.dphi[i], seg.ddphi[i],
                                         seg.phi[i + 1], seg.dphi[i + 1], seg.ddphi[i + 1]);
            q.eval(u, out.phi, out.dphi, out.ddphi);
            if (seg.ddphi_fn) out.ddphi = seg.ddphi_fn(r);
            if (seg.has_model) {
                out.k = seg.model(r);
            } else if (seg.k_fn) {
                out.k = seg.k_fn(r);
            } else {
                out.k = out.phi > 1e-9 ? -out.ddphi / out.phi : 0.0;
            }
            return out;
        }
    }
    throw std::logic_error("unreachable");
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

RadialProfile profile_from_curvature(const std::function<double(double)>& k, double r_max,
                                     double h) {
    if (r_max <= 0 || h <= 0) throw std::invalid_argument("r_max and h must be positive");
    ProfileSegment seg;
    seg.kind = ProfileSegment::Kind::sampled;
    seg.r0 = 0;
    auto n = static_cast<std::size_t>(std::ceil(r_max / h)) + 1;
    seg.h = r_max / static_cast<double>(n - 1);
    seg.r1 = r_max;
    seg.k_fn = k;
    seg.phi.reserve(n);
    seg.dphi.reserve(n);
    seg.ddphi.reserve(n);
    WarpState y{0.0, 1.0};
    tabulate_segment(seg, k, y, /*reject_collapse=*/true);
    RadialProfile prof;
    prof.segments.push_back(std::move(seg));
    prof.r_tab_max = r_max;
    return prof;
}

double calibrate_bump_amplitude(double theta, double tol) {
    if (tol <= 0) tol = 1e-12;
    const double target = 1.0 - theta / pi;
    auto slope_at_edge = [](double amp) {
        std::function<double(double)> k = [amp](double r) { return amp * bump_shape(r); };
        WarpState y{0.0, 1.0};
        double r = 0, dt = 1e-3;
        advance_warp(k, y, r, 1.0, dt);
        return y[1];
    };
    // A * integral(bump * r) approximates the deficit for small amplitudes
    double i0 = gk_integrate([](double r) { return bump_shape(r) * r; }, 0, 1);
    double a0 = (1.0 - target) / i0;
    double a1 = a0 * 1.02 + 1e-12;
    double f0 = slope_at_edge(a0) - target;
    double f1 = slope_at_edge(a1) - target;
    double best_a = std::abs(f0) < std::abs(f1) ? a0 : a1;
    double best_f = std::abs(f0) < std::abs(f1) ? f0 : f1;
    for (int it = 0; it < 80; ++it) {
        if (std::abs(best_f) <= tol) return best_a;
        if (f1 == f0) break;  // at the evaluation noise floor
        double a2 = a1 - f1 * (a1 - a0) / (f1 - f0);
        if (a2 < 0) a2 = 0.5 * a1;
        a0 = a1; f0 = f1;
        a1 = a2; f1 = slope_at_edge(a1) - target;
        if (std::abs(f1) < std::abs(best_f)) { best_a = a1; best_f = f1; }
    }
    if (std::abs(best_f) <= 1e-10) return best_a;
    throw CalibrationError("bump amplitude calibration did not converge for theta = " +
                           std::to_string(theta));
}

namespace {

/// Shared cone core: calibrated bump segment on [0, 1] plus achieved
/// slope/warp at the support edge. Reused bit-for-bit by the capped variant.
struct ConeCore {
    ProfileSegment bump;
    double amplitude;
    double beta;   // dphi at r = 1
    double phi1;   // phi at r = 1
};

ConeCore build_cone_core(double theta, const GridControl& grid) {
    ConeCore core;
    core.amplitude = calibrate_bump_amplitude(theta);
    CurvatureModel model{core.amplitude, 0, 0};
    std::function<double(double)> k = [model](double r) { return model(r); };
    ProfileSegment seg;
    seg.kind = ProfileSegment::Kind::sampled;
    seg.r0 = 0;
    seg.r1 = 1.0;
    auto n = static_cast<std::size_t>(std::llround(1.0 / grid.h_bump)) + 1;
    seg.h = 1.0 / static_cast<double>(n - 1);
    seg.has_model = true;
    seg.model = model;
    seg.phi.reserve(n);
    seg.dphi.reserve(n);
    seg.ddphi.reserve(n);
    WarpState y{0.0, 1.0};
    tabulate_segment(seg, k, y, true);
    core.phi1 = seg.phi.back();
    core.beta = seg.dphi.back();
    core.bump = std::move(seg);
    return core;
}

void set_cone_chart(SurfaceSpec& spec, double theta) {
    spec.theta_deficit = theta;
    spec.chart_offset = wrap_2pi(1.5 * pi + theta);
    spec.slit_width = 2 * theta;
}

}  // namespace

SurfaceSpec make_plane() {
    SurfaceSpec spec;
    spec.kind = "plane";
    spec.topology = Topology::open;
    ProfileSegment seg;
    seg.kind = ProfileSegment::Kind::linear;
    seg.r0 = 0;
    seg.lin_a = 0;
    seg.lin_b = 1;
    spec.profile.segments.push_back(seg);
    spec.beta = 1;
    spec.bump_r_end = 0;
    spec.cone_shift = 0;
    spec.exact_cone_tail = true;
    spec.flat_rho_lo = 0;
    spec.flat_rho_hi = std::numeric_limits<double>::infinity();
    spec.max_curvature = 0;
    return spec;
}

SurfaceSpec make_sphere(double delta) {
    if (delta <= 0) throw std::invalid_argument("sphere curvature must be positive");
    SurfaceSpec spec;
    spec.kind = "sphere";
    spec.topology = Topology::closed;
    spec.delta = delta;
    ProfileSegment seg;
    seg.kind = ProfileSegment::Kind::sphere;
    seg.delta = delta;
    seg.r0 = 0;
    seg.r1 = pi / std::sqrt(delta);
    spec.profile.segments.push_back(seg);
    spec.profile.r_tab_max = seg.r1;
    spec.r_domain_end = seg.r1;
    spec.chart_is_identity = true;
    spec.max_curvature = delta;
    return spec;
}

SurfaceSpec make_flattened_cone(double theta, ConeMode mode, const GridControl& grid) {
    if (!(theta > 0) || !(theta < pi / 2))
        throw std::invalid_argument("theta out of range (0, pi/2)");
    ConeCore core = build_cone_core(theta, grid);
    double maxk = core.amplitude * bump_shape(0.0);
    if (mode == ConeMode::paper_strict && maxk >= strict_curvature_limit)
        throw StrictModeError(maxk);

    SurfaceSpec spec;
    spec.kind = "cone";
    spec.mode = mode;
    spec.topology = Topology::open;
    set_cone_chart(spec, theta);
    spec.bump_amplitude = core.amplitude;
    spec.beta = core.beta;
    spec.max_curvature = maxk;
    spec.bump_r_end = 1.0;
    spec.cone_shift = core.phi1 / core.beta - 1.0;
    spec.exact_cone_tail = true;
    spec.flat_rho_lo = core.phi1 / core.beta;
    spec.flat_rho_hi = std::numeric_limits<double>::infinity();

    spec.profile.segments.push_back(std::move(core.bump));
    ProfileSegment tail;
    tail.kind = ProfileSegment::Kind::linear;
    tail.r0 = 1.0;
    tail.lin_a = core.phi1;
    tail.lin_b = core.beta;
    spec.profile.segments.push_back(tail);
    return spec;
}

SurfaceSpec make_capped_closed(double theta, double cap_radius, double rounding_width,
                               const GridControl& grid) {
    if (!(theta > 0) || !(theta < pi / 2))
        throw std::invalid_argument("theta out of range (0, pi/2)");
    if (!(rounding_width > 0)) throw std::invalid_argument("rounding width must be positive");
    if (cap_radius < 2 * (1 + rounding_width) || cap_radius < 10)
        throw std::invalid_argument("cap radius too small for the rounding band");

    ConeCore core = build_cone_core(theta, grid);
    const double beta = core.beta;
    const double r1 = cap_radius;
    const double w = rounding_width;
    const double phi_r1 = core.phi1 + beta * (r1 - 1.0);
    if (phi_r1 <= w + 1)
        throw std::invalid_argument("rounding band would collapse the warp");

    // band: phi' interpolates from beta to -1 through a smooth monotone step,
    // so phi'' <= 0 and the band curvature is nonnegative
    ProfileSegment band;
    band.kind = ProfileSegment::Kind::sampled;
    band.r0 = r1;
    band.r1 = r1 + w;
    std::size_t n = 4001;
    band.h = w / static_cast<double>(n - 1);
    band.phi.reserve(n);
    band.dphi.reserve(n);
    band.ddphi.reserve(n);
    auto band_dphi = [&](double r) {
        double u = (r - r1) / w;
        return beta + (-1.0 - beta) * smoothstep(u);
    };
    auto band_ddphi = [&](double r) {
        double u = (r - r1) / w;
        return (-1.0 - beta) * smoothstep_deriv(u) / w;
    };
    double phi_acc = phi_r1;
    for (std::size_t i = 0; i < n; ++i) {
        double r = r1 + static_cast<double>(i) * band.h;
        if (i > 0) {
            double lo = r - band.h;
            phi_acc += gk_integrate(band_dphi, lo, r, 1e-15);
        }
        band.phi.push_back(phi_acc);
        band.dphi.push_back(band_dphi(r));
        band.ddphi.push_back(band_ddphi(r));
    }
    band.ddphi_fn = [r1, w, beta](double r) {
        double u = (r - r1) / w;
        return (-1.0 - beta) * smoothstep_deriv(u) / w;
    };
    double phi_band_end = band.phi.back();
    double r_pole = r1 + w + phi_band_end;

    double band_max_k = 0;
    for (std::size_t i = 0; i < n; ++i)
        band_max_k = std::max(band_max_k, -band.ddphi[i] / band.phi[i]);

    SurfaceSpec spec;
    spec.kind = "capped";
    spec.topology = Topology::closed;
    set_cone_chart(spec, theta);
    spec.bump_amplitude = core.amplitude;
    spec.beta = beta;
    spec.cap_radius = cap_radius;
    spec.rounding_width = rounding_width;
    spec.max_curvature = std::max(core.amplitude * bump_shape(0.0), band_max_k);
    spec.bump_r_end = 1.0;
    spec.cone_shift = core.phi1 / beta - 1.0;
    spec.exact_cone_tail = true;
    spec.flat_rho_lo = core.phi1 / beta;
    spec.flat_rho_hi = phi_r1 / beta;
    spec.r_domain_end = r_pole;

    spec.profile.segments.push_back(std::move(core.bump));
    ProfileSegment flat_cone;
    flat_cone.kind = ProfileSegment::Kind::linear;
    flat_cone.r0 = 1.0;
    flat_cone.r1 = r1;
    flat_cone.lin_a = core.phi1;
    flat_cone.lin_b = beta;
    spec.profile.segments.push_back(flat_cone);
    spec.profile.segments.push_back(std::move(band));
    ProfileSegment disk;
    disk.kind = ProfileSegment::Kind::linear;
    disk.r0 = r1 + w;
    disk.r1 = r_pole;
    disk.lin_a = phi_band_end;
    disk.lin_b = -1.0;
    spec.profile.segments.push_back(disk);
    spec.profile.r_tab_max = r_pole;
    return spec;
}

SurfaceSpec perturb_positive(const SurfaceSpec& spec, double eps, const GridControl& grid) {
    if (eps < 0) throw std::invalid_argument("perturbation strength must be nonnegative");
    if (eps == 0) return spec;
    if (spec.kind != "cone")
        throw std::invalid_argument("positive perturbation is defined for open cone surfaces");

    CurvatureModel model{spec.bump_amplitude, eps, 0};
    std::function<double(double)> k = [model](double r) { return model(r); };

    ProfileSegment inner;
    inner.kind = ProfileSegment::Kind::sampled;
    inner.r0 = 0;
    inner.r1 = 1.0;
    auto n_in = static_cast<std::size_t>(std::llround(1.0 / grid.h_bump)) + 1;
    inner.h = 1.0 / static_cast<double>(n_in - 1);
    inner.has_model = true;
    inner.model = model;
    inner.phi.reserve(n_in);
    inner.dphi.reserve(n_in);
    inner.ddphi.reserve(n_in);
    WarpState y{0.0, 1.0};
    tabulate_segment(inner, k, y, true);

    ProfileSegment outer;
    outer.kind = ProfileSegment::Kind::sampled;
    outer.r0 = 1.0;
    outer.r1 = grid.r_tab_max;
    auto n_out = static_cast<std::size_t>(std::ceil((grid.r_tab_max - 1.0) / grid.h_outer)) + 1;
    outer.h = (grid.r_tab_max - 1.0) / static_cast<double>(n_out - 1);
    outer.has_model = true;
    outer.model = model;
    outer.phi.reserve(n_out);
    outer.dphi.reserve(n_out);
    outer.ddphi.reserve(n_out);
    tabulate_segment(outer, k, y, true);

    double beta_end = outer.dphi.back();
    if (beta_end <= 0.01)
        throw std::runtime_error("completeness budget exceeded: perturbed warp slope " +
                                 std::to_string(beta_end) + " at r = " +
                                 std::to_string(grid.r_tab_max));

    SurfaceSpec out;
    out.kind = "perturbed";
    out.mode = spec.mode;
    out.topology = Topology::open;
    set_cone_chart(out, spec.theta_deficit);
    out.bump_amplitude = spec.bump_amplitude;
    out.epsilon = eps;
    out.beta = beta_end;
    out.max_curvature = spec.bump_amplitude * bump_shape(0.0) + eps;
    out.bump_r_end = 1.0;
    out.exact_cone_tail = false;
    out.cone_shift = outer.phi.back() / beta_end - grid.r_tab_max;
    out.profile.segments.push_back(std::move(inner));
    out.profile.segments.push_back(std::move(outer));
    out.profile.r_tab_max = grid.r_tab_max;
    return out;
}

// ---------------------------------------------------------------------------
// Curvature queries
// ---------------------------------------------------------------------------

RadialProfile::Eval SurfaceSpec::metric(double r) const {
    if (topology == Topology::closed && r > r_domain_end) {
        if (r < r_domain_end * (1 + 1e-12))
            r = r_domain_end;
        else
            throw DomainLimitError(r, r_domain_end);
    }
    return profile.eval(r);
}

double gaussian_curvature(const SurfaceSpec& spec, double r) { return spec.metric(r).k; }

double total_positive_curvature(const SurfaceSpec& spec) {
    double total = 0;
    for (const auto& seg : spec.profile.segments) {
        bool maybe_curved = seg.kind != ProfileSegment::Kind::linear;
        if (!maybe_curved) continue;
        double hi = std::min(seg.r1, spec.profile.r_tab_max);
        auto f = [&](double r) {
            auto m = spec.profile.eval(r);
            return std::max(m.k, 0.0) * m.phi;
        };
        total += gk_integrate(f, seg.r0, hi, 1e-11);
    }
    // analytic tail of the psi perturbation beyond the tabulated domain
    if (spec.kind == "perturbed") {
        double R = spec.profile.r_tab_max;
        auto m = spec.profile.eval(R);
        double a_lin = m.phi - m.dphi * R;
        double int_psi = pi / 4 - std::atan(R) / 2 - R / (2 * (1 + R * R));
        double int_rpsi = 1.0 / (2 * (1 + R * R));
        total += spec.epsilon * (a_lin * int_psi + m.dphi * int_rpsi);
    }
    return two_pi * total;
}

// ---------------------------------------------------------------------------
// Chart
// ---------------------------------------------------------------------------

double SurfaceSpec::chart_radius_limit() const {
    if (chart_is_identity) return r_domain_end;
    if (kind == "capped") return cap_radius + cone_shift;
    if (exact_cone_tail) return std::numeric_limits<double>::infinity();
    return profile.eval(profile.r_tab_max).phi / beta;
}

double SurfaceSpec::dev_radius_of(double r) const {
    if (chart_is_identity) return r;
    if (kind == "capped" && r > cap_radius + 1e-9)
        throw DomainLimitError(r, cap_radius);
    if (exact_cone_tail && r >= bump_r_end) return r + cone_shift;
    return metric(r).phi / beta;
}

double SurfaceSpec::intrinsic_of_dev_radius(double rho) const {
    if (rho < 0) throw std::invalid_argument("negative chart radius");
    if (chart_is_identity) {
        if (rho > r_domain_end * (1 + 1e-12)) throw DomainLimitError(rho, r_domain_end);
        return std::min(rho, r_domain_end);
    }
    if (rho > chart_radius_limit() * (1 + 1e-12))
        throw DomainLimitError(rho, chart_radius_limit());
    if (exact_cone_tail && rho >= bump_r_end + cone_shift) return rho - cone_shift;
    // phi is concave with beta <= phi' <= 1, so beta*rho <= r <= rho
    double target = beta * rho;
    double lo = target, hi = std::min(rho, profile.r_tab_max);
    double r = std::min(rho, hi);
    for (int it = 0; it < 100; ++it) {
        auto m = profile.eval(r);
        double f = m.phi - target;
        if (std::abs(f) <= 1e-14 * (1 + target)) return r;
        if (f > 0) hi = r; else lo = r;
        double step = f / m.dphi;
        double next = r - step;
        if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
        r = next;
    }
    return r;
}

PointPolar SurfaceSpec::dev_to_polar(PointDev p) const {
    double rho = std::hypot(p.a, p.b);
    double theta_dev = wrap_2pi(std::atan2(p.b, p.a));
    double u = wrap_2pi(theta_dev - chart_offset);
    if (slit_width > 0) {
        double u_max = two_pi - slit_width;
        if (u > u_max + 1e-12) throw SlitDomainError();
        if (u > u_max) u = u_max;  // identified slit edge
    }
    double theta_int = u / beta;
    if (theta_int >= two_pi) theta_int -= two_pi;
    (void)intrinsic_of_dev_radius(rho);  // validates the radius
    return {rho, theta_int};
}

PointDev SurfaceSpec::polar_to_dev(PointPolar p) const {
    double theta_dev = wrap_2pi(chart_offset + beta * p.theta);
    return {p.r * std::cos(theta_dev), p.r * std::sin(theta_dev)};
}

IntrinsicPos SurfaceSpec::intrinsic_of(PointPolar p) const {
    return {intrinsic_of_dev_radius(p.r), p.theta};
}

PointPolar SurfaceSpec::polar_of(IntrinsicPos p) const {
    return {dev_radius_of(p.r), wrap_2pi(p.theta)};
}

Vec2 SurfaceSpec::frame_from_dev(PointPolar at, Vec2 dev_vec) const {
    double a = wrap_2pi(chart_offset + beta * at.theta);
    Vec2 radial{std::cos(a), std::sin(a)};
    Vec2 circ{-std::sin(a), std::cos(a)};
    return {dev_vec.dot(radial), dev_vec.dot(circ)};
}

Vec2 SurfaceSpec::dev_from_frame(PointPolar at, Vec2 frame_vec) const {
    double a = wrap_2pi(chart_offset + beta * at.theta);
    return {frame_vec.x * std::cos(a) - frame_vec.y * std::sin(a),
            frame_vec.x * std::sin(a) + frame_vec.y * std::cos(a)};
}

}  // namespace mtwcheck
