#include "marginlab/margin.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace marginlab {

std::string to_string(Monotonicity m) {
    switch (m) {
        case Monotonicity::Increasing: return "increasing";
        case Monotonicity::Decreasing: return "decreasing";
        case Monotonicity::Constant: return "constant";
        case Monotonicity::NonMonotone: return "non-monotone";
    }
    throw std::invalid_argument("unknown Monotonicity");
}

namespace {

bool zero_margin_kind(LossKind kind) {
    return kind == LossKind::Softmax || kind == LossKind::NormFace;
}

// theta(theta1) = theta1 + acos(f(theta1)). The clamp only absorbs the
// last-ulp overshoot of f at the exact domain endpoints.
double curve_theta(const LossConfig& cfg, double theta1) {
    if (zero_margin_kind(cfg.kind)) return 2.0 * theta1;
    return theta1 + std::acos(std::clamp(logit(cfg, theta1), -1.0, 1.0));
}

[[noreturn]] void throw_empty_domain(const LossConfig& cfg, double lo, double hi) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "no valid boundary points for %s on theta1 in [%.6g, %.6g]: "
                  "f(theta1) leaves [-1, 1] everywhere",
                  to_string(cfg.kind).c_str(), lo, hi);
    throw std::domain_error(buf);
}

// Rejects configs whose boundary-angle map theta(theta1) is not strictly
// increasing (then the margin is not a single-valued function of theta).
// Happens only for an X2 vertex at h > 0 with f(h) near 1 inside the window.
void ensure_single_valued(const LossConfig& cfg, const Theta1Domain& dom) {
    if (cfg.kind != LossKind::X2Softmax || cfg.h <= dom.lo) return;
    const std::size_t n = 256;
    double prev = curve_theta(cfg, dom.lo);
    for (std::size_t i = 1; i <= n; ++i) {
        const double t1 = dom.lo + (dom.hi - dom.lo) * static_cast<double>(i) / n;
        const double th = curve_theta(cfg, t1);
        if (th <= prev) {
            throw std::domain_error(
                "margin curve is not single-valued in theta for this config "
                "(theta(theta1) decreases; vertex h > 0 lies inside the window)");
        }
        prev = th;
    }
}

}  // namespace

Theta1Domain valid_theta1_domain(const LossConfig& config, double lo, double hi) {
    config.validate();
    if (!(0.0 <= lo && lo < hi && hi <= kPi)) {
        throw std::invalid_argument("valid_theta1_domain: need 0 <= lo < hi <= pi");
    }
    switch (config.kind) {
        case LossKind::Softmax:
        case LossKind::NormFace:
        case LossKind::ArcFace:
            // cos stays in [-1, 1] (ArcFace through the clamped argument).
            return {lo, hi};
        case LossKind::CosFace: {
            // cos(theta1) - m >= -1  <=>  theta1 <= acos(m - 1).
            if (config.m > 2.0) throw_empty_domain(config, lo, hi);
            const double upper = std::acos(std::max(-1.0, config.m - 1.0));
            if (upper < lo) throw_empty_domain(config, lo, hi);
            return {lo, std::min(hi, upper)};
        }
        case LossKind::X2Softmax: {
            // a(theta1-h)^2 + k >= -1  <=>  |theta1 - h| <= sqrt((1+k)/-a).
            const double half = std::sqrt((1.0 + config.k) / -config.a);
            const double d_lo = std::max(lo, config.h - half);
            const double d_hi = std::min(hi, config.h + half);
            if (!(d_lo < d_hi)) throw_empty_domain(config, lo, hi);
            return {d_lo, d_hi};
        }
    }
    throw std::invalid_argument("unknown LossKind");
}

MarginCurve trace_margin_curve(const LossConfig& config, const TraceOptions& options) {
    config.validate();
    if (options.samples < 2) {
        throw std::invalid_argument("trace_margin_curve: need at least 2 grid samples");
    }
    if (!(0.0 <= options.theta1_lo && options.theta1_lo < options.theta1_hi &&
          options.theta1_hi <= kPi)) {
        throw std::invalid_argument("trace_margin_curve: grid must lie within [0, pi]");
    }

    ensure_single_valued(
        config, valid_theta1_domain(config, options.theta1_lo, options.theta1_hi));

    MarginCurve curve;
    curve.config = config;
    const double lo = options.theta1_lo;
    const double step = (options.theta1_hi - lo) / static_cast<double>(options.samples - 1);
    const bool zero_margin = zero_margin_kind(config.kind);

    for (std::size_t i = 0; i < options.samples; ++i) {
        const double t1 = lo + step * static_cast<double>(i);
        if (zero_margin) {
            // f = cos makes acos(f(theta1)) = theta1 identically; emit the
            // exact values instead of round-tripping through acos(cos()).
            curve.points.push_back({2.0 * t1, 0.0, t1});
            continue;
        }
        const double f = logit(config, t1);
        if (f < -1.0 || f > 1.0) {
            ++curve.excluded;
            continue;
        }
        const double theta2 = std::acos(f);
        curve.points.push_back({t1 + theta2, theta2 - t1, t1});
    }

    if (curve.points.empty()) {
        throw_empty_domain(config, options.theta1_lo, options.theta1_hi);
    }
    return curve;
}

void MarginCurve::write_csv(std::ostream& out) const {
    out << "theta_rad,delta_theta_rad,theta1_rad\n";
    char buf[128];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g\n", p.theta, p.delta_theta,
                      p.theta1);
        out << buf;
    }
}

ThetaRange attainable_theta_range(const LossConfig& config) {
    const auto dom = valid_theta1_domain(config);
    ensure_single_valued(config, dom);
    return {curve_theta(config, dom.lo), curve_theta(config, dom.hi)};
}

double margin_at_angle(const LossConfig& config, double theta) {
    config.validate();
    const auto dom = valid_theta1_domain(config);
    ensure_single_valued(config, dom);
    const ThetaRange range{curve_theta(config, dom.lo), curve_theta(config, dom.hi)};
    if (!(theta >= range.min && theta <= range.max)) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "margin_at_angle: theta %.6g outside attainable range [%.6g, %.6g]",
                      theta, range.min, range.max);
        throw std::domain_error(buf);
    }

    if (zero_margin_kind(config.kind)) return 0.0;
    if (config.kind == LossKind::ArcFace && dom.hi + config.m <= kPi) {
        return config.m;  // acos(cos(theta1 + m)) = theta1 + m on the whole window
    }

    double lo = dom.lo;
    double hi = dom.hi;
    for (int it = 0; it < 200 && (hi - lo) > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (curve_theta(config, mid) < theta) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double theta1 = 0.5 * (lo + hi);
    // At the root, acos(f(theta1)) = theta - theta1, so the margin is
    // theta - 2*theta1; this form avoids re-evaluating acos where it is steep.
    return theta - 2.0 * theta1;
}

MonotonicityReport monotonicity_report(const LossConfig& config, std::size_t samples) {
    if (samples < 2) {
        throw std::invalid_argument("monotonicity_report: need at least 2 samples");
    }
    const auto full = attainable_theta_range(config);
    // Angles between unit weight vectors cannot exceed pi.
    const ThetaRange range{full.min, std::min(full.max, kPi)};
    if (!(range.max > range.min)) {
        throw std::domain_error("monotonicity_report: attainable range below pi is empty");
    }

    MonotonicityReport report;
    report.samples = samples;
    report.range = range;

    const double tol = 1e-12;
    const double step = (range.max - range.min) / static_cast<double>(samples - 1);
    double prev_theta = range.min;
    double prev_margin = margin_at_angle(config, range.min);

    // -1 down, 0 flat, +1 up per consecutive difference.
    int first_class = 0;
    bool have_first = false;
    bool mixed = false;

    for (std::size_t i = 1; i < samples; ++i) {
        const double theta = range.min + step * static_cast<double>(i);
        const double margin = margin_at_angle(config, theta);
        const double diff = margin - prev_margin;
        const int cls = diff > tol ? 1 : (diff < -tol ? -1 : 0);
        if (!have_first) {
            first_class = cls;
            have_first = true;
        } else if (cls != first_class && !mixed) {
            mixed = true;
            report.evidence = {prev_theta, prev_margin, theta, margin};
        }
        prev_theta = theta;
        prev_margin = margin;
    }

    if (mixed) {
        report.classification = Monotonicity::NonMonotone;
    } else if (first_class > 0) {
        report.classification = Monotonicity::Increasing;
    } else if (first_class < 0) {
        report.classification = Monotonicity::Decreasing;
    } else {
        report.classification = Monotonicity::Constant;
    }
    return report;
}

double hyperparameter_effect(const LossConfig& base, X2Param which, double delta,
                             double probe_theta) {
    if (base.kind != LossKind::X2Softmax) {
        throw std::invalid_argument("hyperparameter_effect: base must be X2Softmax");
    }
    LossConfig perturbed = base;
    switch (which) {
        case X2Param::A: perturbed.a += delta; break;
        case X2Param::H: perturbed.h += delta; break;
        case X2Param::K: perturbed.k += delta; break;
    }
    perturbed.validate();
    return margin_at_angle(perturbed, probe_theta) - margin_at_angle(base, probe_theta);
}

}  // namespace marginlab
