#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "marginlab/loss.hpp"

namespace marginlab {

/// One point of a margin curve for a binary decision on the sphere.
///
/// theta1 is the boundary angle on the target side, theta2 = acos(f(theta1))
/// the boundary angle on the other side (the two boundary logits agree
/// there: f(theta1) = cos(theta2)). theta = theta1 + theta2 is the angle
/// between the class weights and delta_theta = theta2 - theta1 the angular
/// margin between the two boundaries. theta may exceed pi; such points are
/// still traced (no unit-vector pair realizes them, but the curve is
/// well-defined).
struct MarginPoint {
    double theta;
    double delta_theta;
    double theta1;
};

struct MarginCurve {
    LossConfig config;
    std::vector<MarginPoint> points;  // strictly increasing in theta
    std::size_t excluded = 0;         // grid points skipped because |f(theta1)| > 1

    /// CSV "theta_rad,delta_theta_rad,theta1_rad", 12 significant digits,
    /// one row per point, newline-terminated.
    void write_csv(std::ostream& out) const;
};

struct TraceOptions {
    std::size_t samples = 1024;
    double theta1_lo = 0.0;
    // theta1 beyond pi/2 would put theta past pi for every loss here.
    double theta1_hi = kPi / 2;
};

/// theta1 sub-interval of [lo, hi] where f(theta1) stays in [-1, 1], i.e.
/// where the opposing boundary angle exists. Throws std::domain_error with
/// the violated range when the interval is empty.
struct Theta1Domain {
    double lo;
    double hi;
};
Theta1Domain valid_theta1_domain(const LossConfig& config, double lo = 0.0, double hi = kPi / 2);

/// Samples (theta, delta_theta) over a uniform theta1 grid. Grid points
/// with f(theta1) outside [-1, 1] are skipped, not clipped, and counted in
/// `excluded`. Throws std::domain_error when no grid point is valid or when
/// theta(theta1) is not strictly increasing on the valid domain (then the
/// margin is not single-valued in theta; only a vertex at h > 0 inside the
/// window does this).
MarginCurve trace_margin_curve(const LossConfig& config, const TraceOptions& options = {});

/// [min, max] of theta(theta1) = theta1 + acos(f(theta1)) over the valid
/// theta1 domain.
struct ThetaRange {
    double min;
    double max;
};
ThetaRange attainable_theta_range(const LossConfig& config);

/// Angular margin at a given weight angle: solves
/// theta1 + acos(f(theta1)) = theta by bisection (the map is checked to be
/// monotone; tolerance 1e-10 on theta1, at most 200 iterations) and returns
/// acos(f(theta1)) - theta1. ArcFace returns m exactly and Softmax/NormFace
/// return 0 after the range check. Throws std::domain_error when theta is
/// outside the attainable range, reporting that range.
double margin_at_angle(const LossConfig& config, double theta);

enum class Monotonicity { Increasing, Decreasing, Constant, NonMonotone };
std::string to_string(Monotonicity m);

struct MonotonicityReport {
    Monotonicity classification = Monotonicity::Constant;
    std::size_t samples = 0;
    ThetaRange range{0.0, 0.0};  // sampled theta range, capped at pi

    struct Violation {
        double theta_a, margin_a;
        double theta_b, margin_b;
    };
    std::optional<Violation> evidence;  // first offending pair when NonMonotone
};

/// Classifies delta_theta(theta) over the attainable range capped at pi
/// (angles between unit weight vectors cannot exceed pi), sampled uniformly
/// at >= 2 points. Increasing/Decreasing require every consecutive
/// difference to clear 1e-12; Constant requires all of them within 1e-12.
MonotonicityReport monotonicity_report(const LossConfig& config, std::size_t samples = 512);

enum class X2Param { A, H, K };

/// margin_at_angle(base with the chosen hyperparameter shifted by delta,
/// probe_theta) - margin_at_angle(base, probe_theta). base must be
/// X2Softmax and the probe attainable under both configs.
double hyperparameter_effect(const LossConfig& base, X2Param which, double delta,
                             double probe_theta);

}  // namespace marginlab
