#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "oblique/detector.hpp"
#include "oblique/geometry.hpp"
#include "oblique/selection.hpp"

namespace oblique {

struct SuccessRecord {
    bool disrupted = false;
    std::optional<bool> intended_class_hit;  // mislabeling only
    std::vector<Detection> post_attack_detections;  // detections touching the anchor box
};

inline bool qualifying_match_exists(const std::vector<Detection>& detections,
                                    const BoundingBox& anchor, int label, double iou_threshold,
                                    double confidence_floor) {
    for (const Detection& d : detections) {
        if (d.label != label) continue;
        if (d.confidence < confidence_floor) continue;
        if (iou(d.box, anchor) >= iou_threshold) return true;
    }
    return false;
}

// Decides whether an attack disrupted its target. The anchor is the
// ground-truth box the target was matched to at selection time; the target
// counts as disrupted when no post-attack detection still matches it under
// the same label / IOU / confidence rule used for correctness. For
// mislabeling, also reports whether some detection near the anchor carries
// the intended class.
inline SuccessRecord judge(const ImageTensor& adversarial, const CorrectDetection& target,
                           AttackMode mode, std::optional<int> intended_class,
                           const DetectorAdapter& adapter, double iou_threshold = kIouThreshold,
                           double confidence_floor = kConfidenceFloor) {
    const std::vector<Detection> post = adapter.predict(adversarial, confidence_floor);

    SuccessRecord record;
    record.disrupted = !qualifying_match_exists(post, target.truth_box, target.truth_label,
                                                iou_threshold, confidence_floor);
    if (mode == AttackMode::kMislabeling && intended_class) {
        record.intended_class_hit = qualifying_match_exists(post, target.truth_box, *intended_class,
                                                            iou_threshold, confidence_floor);
    }
    for (const Detection& d : post) {
        if (iou(d.box, target.truth_box) > 0.0) record.post_attack_detections.push_back(d);
    }
    std::sort(record.post_attack_detections.begin(), record.post_attack_detections.end(),
              [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    if (record.post_attack_detections.size() > 8) record.post_attack_detections.resize(8);
    return record;
}

}  // namespace oblique
