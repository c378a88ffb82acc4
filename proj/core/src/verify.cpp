#include "marginlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "marginlab/geometry.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

void PairScoreSet::validate() const {
    if (positive.empty() || negative.empty()) {
        throw std::domain_error("PairScoreSet: both score lists must be nonempty");
    }
    for (double s : positive) {
        if (!(s >= -1.0 && s <= 1.0)) {
            throw std::domain_error("PairScoreSet: positive score outside [-1, 1]");
        }
    }
    for (double s : negative) {
        if (!(s >= -1.0 && s <= 1.0)) {
            throw std::domain_error("PairScoreSet: negative score outside [-1, 1]");
        }
    }
}

PairScoreSet score_pairs(const Matrix& features, std::span<const VerificationPair> pairs) {
    PairScoreSet out;
    for (const auto& p : pairs) {
        if (p.i >= features.rows() || p.j >= features.rows()) {
            throw std::domain_error("score_pairs: pair index out of range");
        }
        const double score = std::clamp(dot(features.row(p.i), features.row(p.j)), -1.0, 1.0);
        (p.same ? out.positive : out.negative).push_back(score);
    }
    return out;
}

std::vector<VerificationPair> make_verification_pairs(std::span<const std::size_t> labels,
                                                      std::uint64_t seed) {
    std::vector<VerificationPair> pairs;
    const std::size_t n = labels.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (labels[i] == labels[j]) pairs.push_back({i, j, true});
        }
    }
    const std::size_t wanted = pairs.size();
    if (wanted == 0) return pairs;

    Rng rng(seed);
    std::size_t made = 0;
    std::size_t guard = 0;
    const std::size_t guard_max = wanted * 1000 + 1000;
    while (made < wanted && guard < guard_max) {
        ++guard;
        const std::size_t i = rng.index(n);
        const std::size_t j = rng.index(n);
        if (i == j || labels[i] == labels[j]) continue;
        pairs.push_back({i, j, false});
        ++made;
    }
    if (made < wanted) {
        throw std::domain_error("make_verification_pairs: could not sample negative pairs "
                                "(single class?)");
    }
    return pairs;
}

ThresholdAccuracy best_threshold_accuracy(const PairScoreSet& scores) {
    scores.validate();

    std::vector<double> all;
    all.reserve(scores.positive.size() + scores.negative.size());
    all.insert(all.end(), scores.positive.begin(), scores.positive.end());
    all.insert(all.end(), scores.negative.begin(), scores.negative.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    std::vector<double> candidates;
    candidates.push_back(-1.0);
    for (std::size_t i = 0; i + 1 < all.size(); ++i) {
        candidates.push_back(0.5 * (all[i] + all[i + 1]));
    }
    candidates.push_back(1.0);

    const double total = static_cast<double>(scores.positive.size() + scores.negative.size());
    ThresholdAccuracy best{-1.0, 0.0};
    for (double t : candidates) {
        std::size_t correct = 0;
        for (double s : scores.positive) correct += (s >= t);
        for (double s : scores.negative) correct += (s < t);
        const double acc = static_cast<double>(correct) / total;
        if (acc > best.accuracy) best = {acc, t};
    }
    return best;
}

TarAtFar tar_at_far(const PairScoreSet& scores, double far_target) {
    scores.validate();
    if (!(far_target > 0.0 && far_target <= 1.0)) {
        throw std::domain_error("tar_at_far: far_target must be in (0, 1]");
    }

    TarAtFar out;
    out.far_target = far_target;

    std::vector<double> neg = scores.negative;
    std::sort(neg.begin(), neg.end(), std::greater<>());
    const std::size_t n = neg.size();
    const std::size_t admissible =
        static_cast<std::size_t>(std::floor(far_target * static_cast<double>(n)));

    if (admissible >= n) {
        out.threshold = -1.0;  // everything is admitted
    } else {
        // Smallest threshold admitting at most `admissible` negatives: just
        // above the (admissible+1)-th highest negative.
        out.threshold = std::nextafter(neg[admissible], std::numeric_limits<double>::infinity());
        out.below_resolution = (admissible == 0);
    }

    std::size_t accepted_neg = 0;
    for (double s : scores.negative) accepted_neg += (s >= out.threshold);
    std::size_t accepted_pos = 0;
    for (double s : scores.positive) accepted_pos += (s >= out.threshold);

    out.achieved_far = static_cast<double>(accepted_neg) / static_cast<double>(n);
    out.tar = static_cast<double>(accepted_pos) / static_cast<double>(scores.positive.size());
    return out;
}

ScoreHistogram score_histogram(const PairScoreSet& scores, std::size_t bins) {
    scores.validate();
    if (bins == 0) throw std::invalid_argument("score_histogram: bins must be >= 1");

    ScoreHistogram hist;
    hist.bin_edges.resize(bins + 1);
    const double width = 2.0 / static_cast<double>(bins);
    for (std::size_t b = 0; b <= bins; ++b) {
        hist.bin_edges[b] = -1.0 + width * static_cast<double>(b);
    }
    hist.pos_count.assign(bins, 0);
    hist.neg_count.assign(bins, 0);

    auto bin_of = [&](double s) {
        auto b = static_cast<std::size_t>((s + 1.0) / width);
        return std::min(b, bins - 1);  // s = 1.0 goes to the top bin
    };
    for (double s : scores.positive) ++hist.pos_count[bin_of(s)];
    for (double s : scores.negative) ++hist.neg_count[bin_of(s)];

    hist.pos_density.resize(bins);
    hist.neg_density.resize(bins);
    const double p_total = static_cast<double>(scores.positive.size());
    const double n_total = static_cast<double>(scores.negative.size());
    hist.overlap = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        hist.pos_density[b] = static_cast<double>(hist.pos_count[b]) / (p_total * width);
        hist.neg_density[b] = static_cast<double>(hist.neg_count[b]) / (n_total * width);
        hist.overlap += std::min(hist.pos_density[b], hist.neg_density[b]) * width;
    }
    return hist;
}

void ScoreHistogram::write_csv(std::ostream& out) const {
    out << "bin_low,bin_high,pos_density,neg_density\n";
    char buf[128];
    for (std::size_t b = 0; b + 1 < bin_edges.size(); ++b) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g\n", bin_edges[b],
                      bin_edges[b + 1], pos_density[b], neg_density[b]);
        out << buf;
    }
}

void write_scores_csv(std::ostream& out, const PairScoreSet& scores) {
    out << "score,is_positive\n";
    char buf[64];
    for (double s : scores.positive) {
        std::snprintf(buf, sizeof(buf), "%.17g,1\n", s);
        out << buf;
    }
    for (double s : scores.negative) {
        std::snprintf(buf, sizeof(buf), "%.17g,0\n", s);
        out << buf;
    }
}

PairScoreSet read_scores_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("read_scores_csv: missing header");
    }
    PairScoreSet out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        if (!std::getline(row, cell, ',')) {
            throw std::runtime_error("read_scores_csv: malformed row");
        }
        const double score = std::stod(cell);
        if (!std::getline(row, cell, ',')) {
            throw std::runtime_error("read_scores_csv: missing is_positive column");
        }
        const int flag = std::stoi(cell);
        (flag ? out.positive : out.negative).push_back(score);
    }
    return out;
}

}  // namespace marginlab
