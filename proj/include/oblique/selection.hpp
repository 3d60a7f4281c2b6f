#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "oblique/dataset.hpp"
#include "oblique/detector.hpp"
#include "oblique/geometry.hpp"
#include "oblique/rng.hpp"

namespace oblique {

inline constexpr double kIouThreshold = 0.3;
inline constexpr double kConfidenceFloor = 0.3;

// A prediction deemed correct: label equal to a ground-truth object's, IOU at
// least the threshold, confidence at least the floor. The matched truth box
// is the anchor later judgments are made against.
struct CorrectDetection {
    Detection detection;
    std::size_t prediction_index = 0;
    BoundingBox truth_box;
    int truth_label = -1;
    double iou_with_truth = 0.0;
};

// Greedy one-to-one matching by descending IOU among qualifying same-label
// pairs. Ties break on lower prediction index, then lower truth index, so the
// result is deterministic. Output is ordered by prediction index.
inline std::vector<CorrectDetection> filter_correct(const std::vector<Detection>& predictions,
                                                    const std::vector<GroundTruthObject>& truth,
                                                    double iou_threshold = kIouThreshold,
                                                    double confidence_floor = kConfidenceFloor) {
    struct Candidate {
        double iou;
        std::size_t pred;
        std::size_t truth;
    };
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i].confidence < confidence_floor) continue;
        for (std::size_t j = 0; j < truth.size(); ++j) {
            if (predictions[i].label != truth[j].label) continue;
            const double v = iou(predictions[i].box, truth[j].box);
            if (v >= iou_threshold) candidates.push_back({v, i, j});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.pred != b.pred) return a.pred < b.pred;
        return a.truth < b.truth;
    });

    std::vector<bool> pred_used(predictions.size(), false);
    std::vector<bool> truth_used(truth.size(), false);
    std::vector<CorrectDetection> out;
    for (const Candidate& c : candidates) {
        if (pred_used[c.pred] || truth_used[c.truth]) continue;
        pred_used[c.pred] = true;
        truth_used[c.truth] = true;
        out.push_back({predictions[c.pred], c.pred, truth[c.truth].box, truth[c.truth].label,
                       c.iou});
    }
    std::sort(out.begin(), out.end(), [](const CorrectDetection& a, const CorrectDetection& b) {
        return a.prediction_index < b.prediction_index;
    });
    return out;
}

enum class SkipReason {
    kNoCorrectDetections,
    kNoQualifyingPair,
    kPlacementFailure,
};

inline const char* to_string(SkipReason r) {
    switch (r) {
        case SkipReason::kNoCorrectDetections: return "no_correct_detections";
        case SkipReason::kNoQualifyingPair: return "no_qualifying_pair";
        case SkipReason::kPlacementFailure: return "placement_failure";
    }
    return "?";
}

struct SelectionOutcome {
    CorrectDetection target;
    BoundingBox perturb_box;                       // predicted box or placed square
    std::optional<PixelBox> perturb_pixels;        // authoritative for placed squares
    bool perturb_is_object = false;
    std::optional<std::size_t> perturb_prediction_index;
    std::optional<PlacementDirection> direction;   // placed squares only
};

namespace detail {

inline std::optional<SelectionOutcome> sample_pair_where(
    const std::vector<CorrectDetection>& correct, Rng& rng,
    const std::function<bool(const CorrectDetection&, const CorrectDetection&)>& admit) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t t = 0; t < correct.size(); ++t) {
        for (std::size_t p = 0; p < correct.size(); ++p) {
            if (t == p) continue;
            if (overlaps(correct[t].detection.box, correct[p].detection.box)) continue;
            if (!admit(correct[t], correct[p])) continue;
            pairs.emplace_back(t, p);
        }
    }
    if (pairs.empty()) return std::nullopt;
    const auto& [t, p] = pairs[rng.uniform_index(pairs.size())];
    SelectionOutcome out;
    out.target = correct[t];
    out.perturb_box = correct[p].detection.box;
    out.perturb_is_object = true;
    out.perturb_prediction_index = correct[p].prediction_index;
    return out;
}

}  // namespace detail

// Uniform draw over ordered (target, perturb) pairs of distinct correct
// detections whose predicted boxes do not overlap.
inline std::optional<SelectionOutcome> sample_random_pair(
    const std::vector<CorrectDetection>& correct, Rng& rng) {
    return detail::sample_pair_where(correct, rng, [](const auto&, const auto&) { return true; });
}

// The three deliberate selection factors and their fixed thresholds.
enum class DeliberateFactor { kLowConfidence, kLargePerturb, kCloseDistance };

inline const char* to_string(DeliberateFactor f) {
    switch (f) {
        case DeliberateFactor::kLowConfidence: return "low_confidence";
        case DeliberateFactor::kLargePerturb: return "large_perturb";
        case DeliberateFactor::kCloseDistance: return "close_distance";
    }
    return "?";
}

inline DeliberateFactor deliberate_factor_from_string(const std::string& s) {
    if (s == "low_confidence") return DeliberateFactor::kLowConfidence;
    if (s == "large_perturb") return DeliberateFactor::kLargePerturb;
    if (s == "close_distance") return DeliberateFactor::kCloseDistance;
    throw std::invalid_argument("unknown deliberate factor: " + s);
}

inline constexpr double kLowConfidenceBelow = 0.5;
inline constexpr double kLargePerturbAreaAbove = 0.25;
inline constexpr double kCloseDistanceBelow = 0.25;

// Uniform draw over the pairs that satisfy every requested factor. An empty
// factor set degenerates to sample_random_pair.
inline std::optional<SelectionOutcome> sample_deliberate_pair(
    const std::vector<CorrectDetection>& correct, Rng& rng,
    const std::set<DeliberateFactor>& factors) {
    return detail::sample_pair_where(
        correct, rng, [&factors](const CorrectDetection& t, const CorrectDetection& p) {
            if (factors.count(DeliberateFactor::kLowConfidence) &&
                !(t.detection.confidence < kLowConfidenceBelow)) {
                return false;
            }
            if (factors.count(DeliberateFactor::kLargePerturb) &&
                !(p.detection.box.area() > kLargePerturbAreaAbove)) {
                return false;
            }
            if (factors.count(DeliberateFactor::kCloseDistance) &&
                !(min_box_distance(t.detection.box, p.detection.box) < kCloseDistanceBelow)) {
                return false;
            }
            return true;
        });
}

// Uniform target among correct detections, then a square region placed
// beside its predicted box. Placement failure is a skip, not an error.
inline std::optional<SelectionOutcome> sample_arbitrary_region(
    const std::vector<CorrectDetection>& correct, Rng& rng, double side_fraction,
    double distance_fraction, int image_w, int image_h) {
    if (correct.empty()) return std::nullopt;
    const CorrectDetection& target = correct[rng.uniform_index(correct.size())];
    auto placed = place_square_region(target.detection.box, side_fraction, distance_fraction,
                                      image_w, image_h, rng);
    if (!placed) return std::nullopt;
    SelectionOutcome out;
    out.target = target;
    out.perturb_box = placed->box;
    out.perturb_pixels = placed->pixels;
    out.perturb_is_object = false;
    out.direction = placed->direction;
    return out;
}

struct CovariateRecord {
    double target_confidence = 0.0;
    double perturb_area_fraction = 0.0;
    double perturb_target_distance = 0.0;  // normalized, image treated as unit square
    int target_class = -1;
    double target_iou = 0.0;
    bool perturb_is_object = false;
    std::optional<double> target_class_accuracy;
    std::optional<int> intended_class;
    std::optional<double> intended_class_prob;
    bool intended_prob_floored = false;
};

// Derives the analysis covariates for one attack attempt. The intended-class
// probability is read off the target detection's probability vector; a class
// outside the vector's support is floored to the smallest positive double and
// flagged.
inline CovariateRecord compute_covariates(const SelectionOutcome& outcome,
                                          std::optional<int> intended_class,
                                          const std::map<int, double>& class_accuracy) {
    CovariateRecord cov;
    cov.target_confidence = outcome.target.detection.confidence;
    cov.perturb_area_fraction = outcome.perturb_box.area();
    cov.perturb_target_distance = min_box_distance(outcome.target.detection.box, outcome.perturb_box);
    cov.target_class = outcome.target.truth_label;
    cov.target_iou = outcome.target.iou_with_truth;
    cov.perturb_is_object = outcome.perturb_is_object;
    if (auto it = class_accuracy.find(cov.target_class); it != class_accuracy.end()) {
        cov.target_class_accuracy = it->second;
    }
    if (intended_class) {
        cov.intended_class = intended_class;
        const auto& probs = outcome.target.detection.class_probs;
        double p = 0.0;
        if (*intended_class >= 0 && static_cast<std::size_t>(*intended_class) < probs.size()) {
            p = probs[static_cast<std::size_t>(*intended_class)];
        }
        if (p <= 0.0) {
            cov.intended_class_prob = std::numeric_limits<double>::min();
            cov.intended_prob_floored = true;
        } else {
            cov.intended_class_prob = p;
        }
    }
    return cov;
}

}  // namespace oblique
