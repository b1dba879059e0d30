#pragma once

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include "mtwcheck/radial_metric.hpp"

namespace mtwcheck {

/// Trajectory entered the guarded neighborhood of the center (or of the
/// far pole on closed surfaces).
struct ApexGuardError : std::runtime_error {
    double s;
    double r;
    bool at_pole;
    ApexGuardError(double s_, double r_, bool pole)
        : std::runtime_error(std::string("geodesic entered the guarded region around the ") +
                             (pole ? "pole" : "center") + " at s = " + std::to_string(s_) +
                             ", r = " + std::to_string(r_)),
          s(s_), r(r_), at_pole(pole) {}
};

struct OdeSettings {
    double rtol = 1e-12;
    double atol = 1e-13;
    double h_init = 0.05;

    OdeSettings tightened(double factor) const { return {rtol * factor, atol * factor, h_init}; }
};

/// Arclength-parameterized state in intrinsic polar coordinates.
struct GeodesicState {
    double r = 0;
    double theta = 0;
    double dr = 0;
    double dtheta = 0;
};

struct RadiusCrossing {
    double s = 0;
    double theta = 0;  // unwound intrinsic angle at the crossing
    double u = 0;      // dr/ds at the crossing
};

/// Integration state (r, dr/ds, theta, J, J') with the Clairaut constant
/// held as a parameter; theta is unwound.
using GeoState = std::array<double, 5>;

/// Low-level stored trajectory with cubic-Hermite dense output and
/// checkpointed re-integration for machine-accurate event location.
struct GeodesicTrajectory {
    struct Step {
        double s0, s1;
        GeoState y0, y1, f0, f1;
    };
    std::vector<Step> steps;
    bool early_stopped = false;

    double s_end() const { return steps.empty() ? 0.0 : steps.back().s1; }
    GeoState eval(double s) const;
    const Step& step_containing(double s) const;
};

class Geodesic {
  public:
    enum class Kind { numeric, flat_line, radial };

    static Geodesic make_numeric(const SurfaceSpec& spec, IntrinsicPos start, double alpha,
                                 double L, const OdeSettings& ode);
    static Geodesic make_radial(const SurfaceSpec& spec, IntrinsicPos start, bool outward,
                                double L);
    /// Straight development segment inside the exactly flat window; the
    /// caller is responsible for containment.
    static Geodesic make_flat_line(const SurfaceSpec& spec, IntrinsicPos start, double alpha,
                                   double L);

    Kind kind() const { return kind_; }
    const SurfaceSpec& surface() const { return *spec_; }
    double length() const { return length_; }
    double clairaut() const { return nu_; }
    double initial_angle() const { return alpha_; }
    IntrinsicPos start_intrinsic() const { return start_; }

    GeodesicState state_at(double s) const;
    GeodesicState state_at_refined(double s) const;
    IntrinsicPos intrinsic_at(double s) const;
    IntrinsicPos endpoint_intrinsic() const;
    PointPolar endpoint() const;
    /// Frame angle of the velocity at arclength s (from outward radial, ccw).
    double velocity_angle_at(double s) const;

    double jacobi_at(double s) const;
    bool jacobi_positive() const;
    std::optional<double> jacobi_zero(double s_max) const;

    double min_radius(double* s_at = nullptr) const;
    std::vector<RadiusCrossing> radius_crossings(double level, double s_hi) const;

  private:
    Kind kind_ = Kind::radial;
    const SurfaceSpec* spec_ = nullptr;
    IntrinsicPos start_{};
    double alpha_ = 0;
    double length_ = 0;
    double nu_ = 0;
    OdeSettings ode_{};

    GeodesicTrajectory traj_;           // numeric
    Vec2 flat_x0_{}, flat_v_{};         // flat_line, unrolled chart
    int radial_dir_ = 1;                // radial
    mutable std::shared_ptr<GeodesicTrajectory> radial_jacobi_;

    GeodesicState radial_state(double s) const;
    GeodesicState flat_state(double s) const;
    const GeodesicTrajectory& radial_jacobi() const;
};

/// Integrate the geodesic + Jacobi system from an intrinsic start state.
/// Stops early once r exceeds `stop_beyond_level` moving outward (used by
/// the boundary-value machinery); throws ApexGuardError on guard entry.
GeodesicTrajectory integrate_geodesic(const SurfaceSpec& spec, const GeoState& y0, double nu,
                                      double L, const OdeSettings& ode,
                                      double stop_beyond_level =
                                          std::numeric_limits<double>::infinity());

/// Machine-accurate state at s via re-integration from the enclosing
/// step's checkpoint.
GeoState refined_state(const SurfaceSpec& spec, const GeodesicTrajectory& traj, double nu,
                       double s, const OdeSettings& ode);

/// All crossings of the intrinsic radius level in (0, s_hi], refined by
/// checkpointed Newton iteration.
std::vector<RadiusCrossing> trajectory_radius_crossings(const SurfaceSpec& spec,
                                                        const GeodesicTrajectory& traj,
                                                        double nu, double level, double s_hi,
                                                        const OdeSettings& ode);

// ---------------------------------------------------------------------------
// Module operations
// ---------------------------------------------------------------------------

Geodesic shoot(const SurfaceSpec& spec, PointPolar x, double alpha, double L,
               const OdeSettings& ode = {});
Geodesic shoot_intrinsic(const SurfaceSpec& spec, IntrinsicPos x, double alpha, double L,
                         const OdeSettings& ode = {});

/// Exponential map: v given in the orthonormal frame (radial, circumferential).
PointPolar exp_map(const SurfaceSpec& spec, PointPolar x, Vec2 v, const OdeSettings& ode = {});

/// First zero of the Jacobi field J'' + K J = 0, J(0) = 0, J'(0) = 1 along
/// the geodesic from x at angle alpha, or nullopt if J > 0 on (0, s_max].
std::optional<double> jacobi_first_zero(const SurfaceSpec& spec, PointPolar x, double alpha,
                                        double s_max, const OdeSettings& ode = {});

}  // namespace mtwcheck
