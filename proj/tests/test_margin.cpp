#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "marginlab/margin.hpp"

using namespace marginlab;

namespace {

LossConfig x2_best() {
    LossConfig cfg;
    cfg.kind = LossKind::X2Softmax;
    cfg.a = -1.0;
    cfg.h = -0.3;
    cfg.k = 1.0;
    return cfg;
}

LossConfig arcface(double m) {
    LossConfig cfg;
    cfg.kind = LossKind::ArcFace;
    cfg.m = m;
    return cfg;
}

LossConfig cosface(double m) {
    LossConfig cfg;
    cfg.kind = LossKind::CosFace;
    cfg.m = m;
    return cfg;
}

}  // namespace

TEST_CASE("ArcFace margin is the constant m at every traced point") {
    const auto curve = trace_margin_curve(arcface(0.5));
    CHECK(curve.points.size() == 1024);
    CHECK(curve.excluded == 0);
    double lo = 1e9, hi = -1e9;
    for (const auto& p : curve.points) {
        CHECK(std::abs(p.delta_theta - 0.5) < 1e-12);
        lo = std::min(lo, p.delta_theta);
        hi = std::max(hi, p.delta_theta);
    }
    CHECK(hi - lo < 1e-12);
}

TEST_CASE("Softmax and NormFace margins are identically zero") {
    for (auto kind : {LossKind::Softmax, LossKind::NormFace}) {
        LossConfig cfg;
        cfg.kind = kind;
        const auto curve = trace_margin_curve(cfg);
        for (const auto& p : curve.points) {
            CHECK(p.delta_theta == 0.0);
            CHECK(p.theta == 2.0 * p.theta1);
        }
    }
}

TEST_CASE("X2Softmax trace starts at acos(f(0))") {
    const auto curve = trace_margin_curve(x2_best());
    REQUIRE(!curve.points.empty());
    const auto& first = curve.points.front();
    CHECK(first.theta1 == 0.0);
    // acos(0.91) evaluated directly.
    CHECK(first.theta == doctest::Approx(0.42751226494486959).epsilon(1e-12));
    CHECK(first.delta_theta == doctest::Approx(0.42751226494486959).epsilon(1e-12));
}

TEST_CASE("trace skips grid points where f leaves [-1, 1]") {
    const auto curve = trace_margin_curve(x2_best());
    CHECK(curve.excluded > 0);
    CHECK(curve.points.size() + curve.excluded == 1024);
    // f >= -1 requires theta1 <= h + sqrt((1+k)/|a|).
    const double theta1_hi = -0.3 + std::sqrt(2.0);
    for (const auto& p : curve.points) {
        CHECK(p.theta1 <= theta1_hi + 1e-12);
        const double f = logit(curve.config, p.theta1);
        CHECK(f >= -1.0);
        CHECK(f <= 1.0);
    }
}

TEST_CASE("traced points satisfy the defining identities") {
    for (const auto& cfg : {x2_best(), cosface(0.35), arcface(0.5)}) {
        const auto curve = trace_margin_curve(cfg);
        double prev_theta = -1.0;
        for (const auto& p : curve.points) {
            const double f = logit(cfg, p.theta1);
            const double theta2 = std::acos(std::clamp(f, -1.0, 1.0));
            CHECK(std::abs(p.theta - (p.theta1 + theta2)) < 1e-9);
            CHECK(std::abs(p.delta_theta - (theta2 - p.theta1)) < 1e-9);
            // Boundary equality f(theta1) = cos(theta2): both class logits
            // agree on the boundary, and the class-2 parametrization is the
            // same equation with theta1/theta2 exchanged.
            CHECK(std::abs(f - std::cos(p.theta1 + p.delta_theta)) < 1e-12);
            CHECK(p.theta > prev_theta);  // strictly increasing
            prev_theta = p.theta;
            if (f <= std::cos(p.theta1)) CHECK(p.delta_theta >= 0.0);
        }
    }
}

TEST_CASE("margin_at_angle inverts the traced curve") {
    for (const auto& cfg : {x2_best(), cosface(0.35), arcface(0.5)}) {
        const auto curve = trace_margin_curve(cfg);
        for (std::size_t i = 0; i < curve.points.size(); i += 7) {
            const auto& p = curve.points[i];
            CHECK(std::abs(margin_at_angle(cfg, p.theta) - p.delta_theta) < 1e-8);
        }
        const auto& last = curve.points.back();
        CHECK(std::abs(margin_at_angle(cfg, last.theta) - last.delta_theta) < 1e-8);
    }
}

TEST_CASE("margin_at_angle closed forms") {
    CHECK(margin_at_angle(arcface(0.5), 2.0) == 0.5);
    LossConfig soft;
    soft.kind = LossKind::Softmax;
    CHECK(margin_at_angle(soft, 1.0) == 0.0);
}

TEST_CASE("margin_at_angle rejects angles outside the attainable range") {
    const auto cfg = x2_best();
    const auto range = attainable_theta_range(cfg);
    CHECK(range.min == doctest::Approx(0.42751226494486959).epsilon(1e-12));
    CHECK_THROWS_AS(margin_at_angle(cfg, range.min - 0.01), std::domain_error);
    CHECK_THROWS_AS(margin_at_angle(cfg, range.max + 0.01), std::domain_error);
    CHECK_NOTHROW(margin_at_angle(cfg, range.min));
    CHECK_NOTHROW(margin_at_angle(cfg, range.max));
}

TEST_CASE("monotonicity classes for the three margin families") {
    CHECK(monotonicity_report(arcface(0.5)).classification == Monotonicity::Constant);
    CHECK(monotonicity_report(cosface(0.35)).classification == Monotonicity::Decreasing);
    CHECK(monotonicity_report(x2_best()).classification == Monotonicity::Increasing);

    LossConfig soft;
    soft.kind = LossKind::Softmax;
    CHECK(monotonicity_report(soft).classification == Monotonicity::Constant);
}

TEST_CASE("monotonicity report flags a genuinely mixed margin curve") {
    // Vertex at theta1 = 0 with k < 1: the margin first shrinks toward the
    // vertex, then grows again.
    LossConfig cfg;
    cfg.kind = LossKind::X2Softmax;
    cfg.a = -1.0;
    cfg.h = 0.0;
    cfg.k = 0.9;
    const auto report = monotonicity_report(cfg);
    CHECK(report.classification == Monotonicity::NonMonotone);
    REQUIRE(report.evidence.has_value());
    CHECK(report.evidence->theta_a < report.evidence->theta_b);
}

TEST_CASE("X2Softmax margin increases strictly for the stock config") {
    const auto report = monotonicity_report(x2_best());
    CHECK(report.classification == Monotonicity::Increasing);
    // Also strictly increasing along the traced curve.
    const auto curve = trace_margin_curve(x2_best());
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        CHECK(curve.points[i].delta_theta > curve.points[i - 1].delta_theta);
    }
}

TEST_CASE("hyperparameter effects at the probe angle") {
    const auto base = x2_best();
    const double probe = 1.0;

    SUBCASE("larger |a| widens the margin") {
        CHECK(hyperparameter_effect(base, X2Param::A, -0.3, probe) > 0.0);
    }
    SUBCASE("smaller h widens the margin") {
        LossConfig b = base;
        b.h = -0.1;
        CHECK(hyperparameter_effect(b, X2Param::H, -0.4, probe) > 0.0);
    }
    SUBCASE("smaller k widens the margin") {
        CHECK(hyperparameter_effect(base, X2Param::K, -0.3, probe) > 0.0);
    }
    SUBCASE("zero perturbation changes nothing") {
        CHECK(hyperparameter_effect(base, X2Param::A, 0.0, probe) == 0.0);
        CHECK(hyperparameter_effect(base, X2Param::H, 0.0, probe) == 0.0);
        CHECK(hyperparameter_effect(base, X2Param::K, 0.0, probe) == 0.0);
    }
    SUBCASE("base must be X2Softmax") {
        CHECK_THROWS_AS(hyperparameter_effect(arcface(0.5), X2Param::A, -0.1, probe),
                        std::invalid_argument);
    }
    SUBCASE("probe must be attainable under both configs") {
        // k = 0.2 lifts theta_min above the probe.
        CHECK_THROWS_AS(hyperparameter_effect(base, X2Param::K, -0.8, probe),
                        std::domain_error);
    }
}

TEST_CASE("empty valid domain is a domain error naming the range") {
    LossConfig cfg;
    cfg.kind = LossKind::X2Softmax;
    cfg.a = -10.0;
    cfg.h = -1.0;
    cfg.k = 0.0;
    CHECK_THROWS_WITH_AS(trace_margin_curve(cfg), doctest::Contains("[-1, 1]"),
                         std::domain_error);
    CHECK_THROWS_AS(margin_at_angle(cfg, 1.0), std::domain_error);

    CHECK_THROWS_AS(trace_margin_curve(cosface(2.5)), std::domain_error);
}

TEST_CASE("a vertex inside the window makes the curve non-single-valued") {
    LossConfig cfg;
    cfg.kind = LossKind::X2Softmax;
    cfg.a = -1.0;
    cfg.h = 0.3;
    cfg.k = 1.0;
    CHECK_THROWS_AS(trace_margin_curve(cfg), std::domain_error);
    CHECK_THROWS_AS(margin_at_angle(cfg, 1.0), std::domain_error);
}

TEST_CASE("trace rejects bad grids") {
    const auto cfg = x2_best();
    TraceOptions opt;
    opt.samples = 1;
    CHECK_THROWS_AS(trace_margin_curve(cfg, opt), std::invalid_argument);
    opt.samples = 16;
    opt.theta1_lo = 1.0;
    opt.theta1_hi = 0.5;
    CHECK_THROWS_AS(trace_margin_curve(cfg, opt), std::invalid_argument);
    opt.theta1_lo = 0.0;
    opt.theta1_hi = 4.0;
    CHECK_THROWS_AS(trace_margin_curve(cfg, opt), std::invalid_argument);
}

TEST_CASE("margin curve CSV format") {
    TraceOptions opt;
    opt.samples = 8;
    const auto curve = trace_margin_curve(arcface(0.5), opt);
    std::ostringstream out;
    curve.write_csv(out);
    const std::string text = out.str();
    CHECK(text.starts_with("theta_rad,delta_theta_rad,theta1_rad\n"));
    CHECK(text.ends_with("\n"));
    const auto rows = std::count(text.begin(), text.end(), '\n');
    CHECK(rows == 1 + 8);

    // Values survive the 12-digit round trip.
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    double theta = 0, dtheta = 0, theta1 = 0;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf", &theta, &dtheta, &theta1) == 3);
    CHECK(theta == doctest::Approx(curve.points[0].theta).epsilon(1e-11));
    CHECK(dtheta == doctest::Approx(curve.points[0].delta_theta).epsilon(1e-11));
}
