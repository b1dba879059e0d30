#pragma once

#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtwcheck/numerics.hpp"

namespace mtwcheck {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Warp function hit zero before the requested domain end.
struct ProfileCollapseError : std::runtime_error {
    double radius;
    explicit ProfileCollapseError(double r)
        : std::runtime_error("warp profile collapsed (phi <= 0) at r = " + std::to_string(r)),
          radius(r) {}
};

struct CalibrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// paper-strict construction requires max K < 1/10000 on the bump.
struct StrictModeError : std::runtime_error {
    double max_curvature;
    explicit StrictModeError(double maxk)
        : std::runtime_error("strict mode rejected: max curvature " + std::to_string(maxk) +
                             " >= 1/10000; reduce theta"),
          max_curvature(maxk) {}
};

/// Development point falls in the removed slit sector.
struct SlitDomainError : std::runtime_error {
    SlitDomainError() : std::runtime_error("development point lies inside the removed sector") {}
};

/// Query beyond the tabulated radial domain.
struct DomainLimitError : std::runtime_error {
    double radius;
    explicit DomainLimitError(double r, double rmax)
        : std::runtime_error("radius " + std::to_string(r) + " beyond tabulated domain r_max = " +
                             std::to_string(rmax) + "; rebuild the surface with a larger domain"),
          radius(r) {}
};

// ---------------------------------------------------------------------------
// Curvature models
// ---------------------------------------------------------------------------

/// Compactly supported C-infinity bump profile on [0, 1):
/// b(r) = exp(-1 / (1 - r^2)), extended by zero for r >= 1.
/// Even in r and flat to all orders at r = 1.
inline double bump_shape(double r) {
    double r2 = r * r;
    if (r2 >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - r2));
}

/// Slowly decaying positive perturbation profile psi(r) = (1 + r^2)^-2.
inline double psi_shape(double r) {
    double q = 1.0 + r * r;
    return 1.0 / (q * q);
}

/// Radial Gaussian curvature model k(r) = A * bump(r) + eps * psi(r) + const.
struct CurvatureModel {
    double bump_amp = 0;
    double psi_amp = 0;
    double constant = 0;

    double operator()(double r) const {
        double k = constant;
        if (bump_amp != 0) k += bump_amp * bump_shape(r);
        if (psi_amp != 0) k += psi_amp * psi_shape(r);
        return k;
    }
    bool zero() const { return bump_amp == 0 && psi_amp == 0 && constant == 0; }
};

// ---------------------------------------------------------------------------
// Radial profile: phi(r) with derivatives, piecewise representation
// ---------------------------------------------------------------------------

struct ProfileSegment {
    enum class Kind { linear, sphere, sampled };
    Kind kind = Kind::linear;
    double r0 = 0;
    double r1 = std::numeric_limits<double>::infinity();

    // linear: phi = lin_a + lin_b * (r - r0)
    double lin_a = 0, lin_b = 1;

    // sphere: phi = sin(sqrt(delta) r) / sqrt(delta), r measured from 0
    double delta = 0;

    // sampled: uniform grid, quintic Hermite interpolation
    double h = 0;
    std::vector<double> phi, dphi, ddphi;
    bool has_model = false;
    CurvatureModel model;                       // exact curvature when present
    std::function<double(double)> k_fn;         // user curvature for generic profiles
    std::function<double(double)> ddphi_fn;     // analytic phi'' when available
};

/// Warp function of a radially symmetric metric dr^2 + phi(r)^2 dtheta^2,
/// r = arclength from the center, phi(0) = 0, phi'(0) = 1 on smooth centers.
class RadialProfile {
  public:
    struct Eval {
        double phi, dphi, ddphi, k;
    };

    Eval eval(double r) const;
    double phi(double r) const { return eval(r).phi; }
    double dphi(double r) const { return eval(r).dphi; }
    double curvature(double r) const { return eval(r).k; }

    std::vector<ProfileSegment> segments;
    double r_tab_max = std::numeric_limits<double>::infinity();

  private:
    const ProfileSegment& segment_at(double r) const;
};

// ---------------------------------------------------------------------------
// Surfaces
// ---------------------------------------------------------------------------

enum class Topology { open, closed };
enum class ConeMode { desk, paper_strict };

/// Point in the surface's polar chart: `r` is the development (chart)
/// radius and `theta` the intrinsic angle in [0, 2*pi). On cone-type
/// surfaces the chart radius relates to intrinsic arclength radius by
/// rho = phi(r)/beta; on the sphere the two coincide.
struct PointPolar {
    double r = 0;
    double theta = 0;
};

/// Cartesian development coordinates (a, b).
struct PointDev {
    double a = 0;
    double b = 0;
};

/// Intrinsic polar position used by the integrators: arclength radius
/// plus an unwound (not reduced mod 2*pi) angle.
struct IntrinsicPos {
    double r = 0;
    double theta = 0;
};

class SurfaceSpec {
  public:
    std::string kind;  // plane | sphere | cone | capped | perturbed
    Topology topology = Topology::open;
    ConeMode mode = ConeMode::desk;
    RadialProfile profile;

    double theta_deficit = 0;     // half angle deficit
    double beta = 1;              // asymptotic slope phi'(r) of the cone end
    double delta = 0;             // sphere curvature
    double bump_amplitude = 0;    // calibrated A
    double epsilon = 0;           // psi perturbation strength
    double cap_radius = 0;
    double rounding_width = 0;

    double chart_offset = 0;      // dev angle of the intrinsic theta = 0 ray
    double slit_width = 0;        // removed dev sector width (2 * theta_deficit)
    double bump_r_end = 0;        // intrinsic outer radius of curvature support
    double cone_shift = 0;        // rho(r) = r + cone_shift for r >= bump_r_end
    bool exact_cone_tail = false; // profile is exactly linear beyond bump_r_end
    bool chart_is_identity = false;

    double flat_rho_lo = std::numeric_limits<double>::infinity();
    double flat_rho_hi = -std::numeric_limits<double>::infinity();

    double r_domain_end = std::numeric_limits<double>::infinity();  // pole for closed
    double apex_guard = 1e-3;

    double max_curvature = 0;     // max K over the surface

    // --- profile access -----------------------------------------------------
    RadialProfile::Eval metric(double r_intrinsic) const;

    // --- chart ---------------------------------------------------------------
    double dev_radius_of(double r_intrinsic) const;
    double intrinsic_of_dev_radius(double rho) const;
    double chart_radius_limit() const;

    PointPolar dev_to_polar(PointDev p) const;
    PointDev polar_to_dev(PointPolar p) const;
    IntrinsicPos intrinsic_of(PointPolar p) const;
    PointPolar polar_of(IntrinsicPos p) const;

    /// Development angle of the outward radial direction at intrinsic angle theta.
    double dev_angle_of_intrinsic(double theta_int) const {
        return wrap_2pi(chart_offset + beta * theta_int);
    }

    /// Convert a vector given in development-aligned Cartesian axes at `at`
    /// into the orthonormal frame (radial, circumferential) and back.
    Vec2 frame_from_dev(PointPolar at, Vec2 dev_vec) const;
    Vec2 dev_from_frame(PointPolar at, Vec2 frame_vec) const;

    bool has_flat_window() const { return flat_rho_lo <= flat_rho_hi; }
};

// ---------------------------------------------------------------------------
// Constructors and module operations
// ---------------------------------------------------------------------------

struct GridControl {
    double h_bump = 2.5e-4;   // node spacing inside curvature support [0, 1]
    double h_outer = 2e-2;    // node spacing outside (perturbed tails)
    double r_tab_max = 400;   // tabulated domain for non-flat open tails
};

SurfaceSpec make_plane();
SurfaceSpec make_sphere(double delta);
SurfaceSpec make_flattened_cone(double theta, ConeMode mode = ConeMode::desk,
                                const GridControl& grid = {});
SurfaceSpec make_capped_closed(double theta, double cap_radius = 10000,
                               double rounding_width = 5, const GridControl& grid = {});
SurfaceSpec perturb_positive(const SurfaceSpec& spec, double eps, const GridControl& grid = {});

/// Integrate phi'' = -k phi, phi(0) = 0, phi'(0) = 1 on [0, r_max] and
/// tabulate the solution. Throws ProfileCollapseError if phi hits zero.
RadialProfile profile_from_curvature(const std::function<double(double)>& k, double r_max,
                                     double h = 5e-4);

/// Gaussian curvature K(r) = -phi''/phi at intrinsic radius r.
double gaussian_curvature(const SurfaceSpec& spec, double r);

/// 2*pi * Integral of K_+ phi dr over the whole surface (abs err <= 1e-8).
double total_positive_curvature(const SurfaceSpec& spec);

/// Calibrated bump amplitude for a given deficit: the slope of the warp at
/// the support edge equals 1 - theta/pi.
double calibrate_bump_amplitude(double theta, double tol = 1e-12);

}  // namespace mtwcheck
