#pragma once

#include <cstdint>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "marginlab/matrix.hpp"

namespace marginlab {

/// Cosine similarities of labeled pairs, split by ground truth.
struct PairScoreSet {
    std::vector<double> positive;
    std::vector<double> negative;

    /// Metric operations need both lists nonempty and all scores in [-1, 1].
    void validate() const;
};

struct VerificationPair {
    std::size_t i, j;
    bool same;
};

/// Cosine of each pair routed by its flag. Scores are clamped into [-1, 1]
/// (dot products of unit rows can overshoot by an ulp). Throws
/// std::domain_error on an out-of-range index.
PairScoreSet score_pairs(const Matrix& features, std::span<const VerificationPair> pairs);

/// Every same-label pair plus an equal number of seeded random
/// different-label pairs.
std::vector<VerificationPair> make_verification_pairs(std::span<const std::size_t> labels,
                                                      std::uint64_t seed);

struct ThresholdAccuracy {
    double accuracy;   // best (TP + TN) / (P + N)
    double threshold;  // smallest maximizer
};

/// Best single-threshold verification accuracy. Candidates are the
/// midpoints of adjacent distinct sorted scores plus the -1/+1 endpoints;
/// a pair is accepted when its score >= threshold. Ties go to the smallest
/// threshold.
ThresholdAccuracy best_threshold_accuracy(const PairScoreSet& scores);

struct TarAtFar {
    double tar;
    double threshold;
    double achieved_far;
    double far_target;
    /// far_target < 1/N admits no negative at all: the threshold sits just
    /// above the highest negative and achieved_far is 0.
    bool below_resolution = false;
};

/// True-accept rate at a false-accept-rate budget. Negatives are sorted
/// descending; with K = floor(far_target * N) admissible false accepts, the
/// threshold is the smallest double above the (K+1)-th highest negative, so
/// achieved_far <= far_target always. far_target must be in (0, 1];
/// far_target = 1 admits every pair.
TarAtFar tar_at_far(const PairScoreSet& scores, double far_target);

struct ScoreHistogram {
    std::vector<double> bin_edges;  // bins + 1 edges, uniform over [-1, 1]
    std::vector<std::size_t> pos_count, neg_count;
    std::vector<double> pos_density, neg_density;  // each normalized to unit area
    double overlap;  // sum of min(pos_density, neg_density) * bin_width

    /// CSV "bin_low,bin_high,pos_density,neg_density".
    void write_csv(std::ostream& out) const;
};

/// Aligned histograms of both score lists with their overlap mass
/// (the confusion region: 0 for disjoint supports, 1 for identical
/// distributions).
ScoreHistogram score_histogram(const PairScoreSet& scores, std::size_t bins);

/// CSV "score,is_positive" with is_positive in {0, 1}.
void write_scores_csv(std::ostream& out, const PairScoreSet& scores);
PairScoreSet read_scores_csv(std::istream& in);

}  // namespace marginlab
