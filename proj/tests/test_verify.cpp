#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "marginlab/rng.hpp"
#include "marginlab/verify.hpp"
#include "support/metric_oracles.hpp"

using namespace marginlab;
using namespace marginlab::testutil;

namespace {

PairScoreSet random_scores(Rng& rng, std::size_t max_each = 50) {
    PairScoreSet s;
    const std::size_t p = 1 + rng.index(max_each);
    const std::size_t n = 1 + rng.index(max_each);
    for (std::size_t i = 0; i < p; ++i) s.positive.push_back(rng.uniform(-1.0, 1.0));
    for (std::size_t i = 0; i < n; ++i) s.negative.push_back(rng.uniform(-1.0, 1.0));
    return s;
}

}  // namespace

TEST_CASE("score_pairs routes cosines by flag") {
    Matrix f = Matrix::from_rows(3, 2, {1.0, 0.0, 1.0, 0.0, 0.0, 1.0});
    const std::vector<VerificationPair> pairs{{0, 1, true}, {0, 2, false}};
    const auto scores = score_pairs(f, pairs);
    REQUIRE(scores.positive.size() == 1);
    REQUIRE(scores.negative.size() == 1);
    CHECK(scores.positive[0] == 1.0);
    CHECK(scores.negative[0] == 0.0);

    const std::vector<VerificationPair> empty;
    const auto none = score_pairs(f, empty);
    CHECK(none.positive.empty());
    CHECK(none.negative.empty());

    const std::vector<VerificationPair> bad{{0, 9, true}};
    CHECK_THROWS_AS(score_pairs(f, bad), std::domain_error);
}

TEST_CASE("make_verification_pairs yields all positives and equal negatives") {
    const std::vector<std::size_t> labels{0, 0, 0, 1, 1, 2};
    const auto pairs = make_verification_pairs(labels, 7);
    std::size_t pos = 0, neg = 0;
    for (const auto& p : pairs) {
        if (p.same) {
            ++pos;
            CHECK(labels[p.i] == labels[p.j]);
        } else {
            ++neg;
            CHECK(labels[p.i] != labels[p.j]);
        }
    }
    CHECK(pos == 3 + 1);  // C(3,2) + C(2,2)
    CHECK(neg == pos);

    const auto again = make_verification_pairs(labels, 7);
    CHECK(again.size() == pairs.size());
    CHECK(again[pairs.size() - 1].i == pairs[pairs.size() - 1].i);

    const std::vector<std::size_t> single{0, 0};
    CHECK_THROWS_AS(make_verification_pairs(single, 7), std::domain_error);
}

TEST_CASE("best_threshold_accuracy examples") {
    SUBCASE("separable") {
        const PairScoreSet s{{0.9, 0.8}, {0.1, 0.2}};
        const auto r = best_threshold_accuracy(s);
        CHECK(r.accuracy == 1.0);
        CHECK(r.threshold > 0.2);
        CHECK(r.threshold <= 0.8);
    }
    SUBCASE("indistinguishable singletons") {
        const PairScoreSet s{{0.5}, {0.5}};
        CHECK(best_threshold_accuracy(s).accuracy == 0.5);
    }
    SUBCASE("mixed set") {
        const PairScoreSet s{{0.9, 0.3}, {0.1, 0.6}};
        const auto r = best_threshold_accuracy(s);
        CHECK(r.accuracy == 0.75);
        // Ties break toward the smallest threshold.
        CHECK(r.threshold == doctest::Approx(0.2));
    }
    SUBCASE("empty list is a domain error") {
        const PairScoreSet s{{}, {0.1}};
        CHECK_THROWS_AS(best_threshold_accuracy(s), std::domain_error);
    }
}

TEST_CASE("tar_at_far examples") {
    SUBCASE("one admissible negative") {
        const PairScoreSet s{{0.9, 0.8, 0.7}, {0.1, 0.2, 0.3}};
        const auto r = tar_at_far(s, 1.0 / 3.0);
        CHECK(r.tar == 1.0);
        CHECK(r.achieved_far <= 1.0 / 3.0);
        CHECK(r.threshold > 0.2);
        CHECK(r.threshold <= 0.3 + 1e-12);
    }
    SUBCASE("positives below all negatives") {
        const PairScoreSet s{{0.1, 0.2}, {0.5, 0.6, 0.7}};
        const auto r = tar_at_far(s, 0.2);  // < 1/3
        CHECK(r.tar == 0.0);
        CHECK(r.achieved_far == 0.0);
        CHECK(r.below_resolution);
    }
    SUBCASE("far = 1 admits everything") {
        const PairScoreSet s{{-0.5, 0.4}, {0.9, 0.95}};
        const auto r = tar_at_far(s, 1.0);
        CHECK(r.tar == 1.0);
        CHECK(r.achieved_far == 1.0);
    }
    SUBCASE("far_target out of range") {
        const PairScoreSet s{{0.5}, {0.1}};
        CHECK_THROWS_AS(tar_at_far(s, 0.0), std::domain_error);
        CHECK_THROWS_AS(tar_at_far(s, 1.5), std::domain_error);
    }
}

TEST_CASE("metrics equal the exhaustive threshold oracles") {
    Rng rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        const auto s = random_scores(rng);
        CHECK(best_threshold_accuracy(s).accuracy == oracle_best_accuracy(s));
        const double far = rng.uniform(0.01, 1.0);
        const auto r = tar_at_far(s, far);
        CHECK(r.tar == oracle_tar_at_far(s, far));
        CHECK(r.achieved_far <= far);
    }
}

TEST_CASE("accuracy is bounded below by the majority class") {
    Rng rng(123);
    for (int trial = 0; trial < 40; ++trial) {
        const auto s = random_scores(rng);
        const double p = static_cast<double>(s.positive.size());
        const double n = static_cast<double>(s.negative.size());
        CHECK(best_threshold_accuracy(s).accuracy >= std::max(p, n) / (p + n));
    }
}

TEST_CASE("tar_at_far is non-decreasing in the budget") {
    Rng rng(321);
    for (int trial = 0; trial < 40; ++trial) {
        const auto s = random_scores(rng);
        double prev = -1.0;
        for (double far : {0.05, 0.1, 0.25, 0.5, 1.0}) {
            const double tar = tar_at_far(s, far).tar;
            CHECK(tar >= prev);
            prev = tar;
        }
    }
}

TEST_CASE("both metrics are rank statistics") {
    Rng rng(555);
    auto squash = [](double x) { return 0.5 * (x + x * x * x); };  // strictly increasing on [-1,1]
    for (int trial = 0; trial < 30; ++trial) {
        const auto s = random_scores(rng);
        PairScoreSet t;
        for (double v : s.positive) t.positive.push_back(squash(v));
        for (double v : s.negative) t.negative.push_back(squash(v));

        CHECK(best_threshold_accuracy(s).accuracy == best_threshold_accuracy(t).accuracy);
        const double far = rng.uniform(0.05, 1.0);
        CHECK(tar_at_far(s, far).tar == tar_at_far(t, far).tar);
    }
}

TEST_CASE("score_histogram examples") {
    SUBCASE("disjoint supports have zero overlap") {
        const PairScoreSet s{{0.8, 0.9}, {-0.8, -0.9}};
        CHECK(score_histogram(s, 16).overlap == 0.0);
    }
    SUBCASE("identical multisets overlap fully") {
        const PairScoreSet s{{0.1, -0.4, 0.7}, {0.1, -0.4, 0.7}};
        CHECK(score_histogram(s, 32).overlap == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("four bins, opposite spikes") {
        const PairScoreSet s{{0.8, 0.8}, {-0.8}};
        CHECK(score_histogram(s, 4).overlap == 0.0);
    }
    SUBCASE("one bin sees everything") {
        const PairScoreSet s{{0.3}, {-0.3}};
        CHECK(score_histogram(s, 1).overlap == doctest::Approx(1.0));
    }
    SUBCASE("score exactly 1.0 lands in the top bin") {
        const PairScoreSet s{{1.0}, {-1.0}};
        const auto h = score_histogram(s, 10);
        CHECK(h.pos_count.back() == 1);
        CHECK(h.neg_count.front() == 1);
    }
    SUBCASE("bins must be positive, lists nonempty") {
        const PairScoreSet s{{0.5}, {0.1}};
        CHECK_THROWS_AS(score_histogram(s, 0), std::invalid_argument);
        const PairScoreSet empty{{}, {}};
        CHECK_THROWS_AS(score_histogram(empty, 4), std::domain_error);
    }
}

TEST_CASE("histogram densities integrate to one") {
    Rng rng(777);
    const auto s = random_scores(rng);
    const auto h = score_histogram(s, 20);
    const double width = 2.0 / 20.0;
    double pos_area = 0.0, neg_area = 0.0;
    for (std::size_t b = 0; b < 20; ++b) {
        pos_area += h.pos_density[b] * width;
        neg_area += h.neg_density[b] * width;
    }
    CHECK(pos_area == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(neg_area == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("scores CSV round trip") {
    const PairScoreSet s{{0.25, -0.5}, {0.125}};
    std::stringstream buffer;
    write_scores_csv(buffer, s);
    const auto back = read_scores_csv(buffer);
    CHECK(back.positive == s.positive);
    CHECK(back.negative == s.negative);

    std::stringstream empty("");
    CHECK_THROWS(read_scores_csv(empty));
}

TEST_CASE("histogram CSV format") {
    const PairScoreSet s{{0.5}, {-0.5}};
    const auto h = score_histogram(s, 4);
    std::ostringstream out;
    h.write_csv(out);
    const std::string text = out.str();
    CHECK(text.starts_with("bin_low,bin_high,pos_density,neg_density\n"));
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}

TEST_CASE("validate rejects out-of-range scores") {
    PairScoreSet s{{1.5}, {0.0}};
    CHECK_THROWS_AS(s.validate(), std::domain_error);
}
