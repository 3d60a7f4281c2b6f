#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "oblique/geometry.hpp"

namespace oblique {

// Image in HWC layout, values in [0, 1].
struct ImageTensor {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    static ImageTensor zeros(int w, int h, int c) {
        ImageTensor t;
        t.width = w;
        t.height = h;
        t.channels = c;
        t.data.assign(static_cast<std::size_t>(w) * h * c, 0.0);
        return t;
    }

    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int x, int y, int c) { return data[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data[index(x, y, c)]; }
    bool same_shape(const ImageTensor& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

struct Detection {
    BoundingBox box;
    int label = -1;
    double confidence = 0.0;          // always equals class_probs[label]
    std::vector<double> class_probs;  // over the real classes, background excluded
};

enum class AttackMode { kVanishing, kMislabeling, kUntargeted };

inline const char* to_string(AttackMode m) {
    switch (m) {
        case AttackMode::kVanishing: return "vanishing";
        case AttackMode::kMislabeling: return "mislabeling";
        case AttackMode::kUntargeted: return "untargeted";
    }
    return "?";
}

inline AttackMode attack_mode_from_string(const std::string& s) {
    if (s == "vanishing") return AttackMode::kVanishing;
    if (s == "mislabeling") return AttackMode::kMislabeling;
    if (s == "untargeted") return AttackMode::kUntargeted;
    throw std::invalid_argument("unknown attack mode: " + s);
}

// The (possibly manipulated) ground truth an attack optimizes against.
struct TargetEntry {
    BoundingBox box;
    int label = -1;
};

struct TargetSpec {
    std::vector<TargetEntry> entries;
    AttackMode mode = AttackMode::kVanishing;
};

// Which of the detector's training-loss components the attack differentiates.
// Components are lowercase names, qualified per stage for multi-stage
// detectors ("rpn.objectness", "det.class").
struct LossSelection {
    std::set<std::string> components;

    bool operator==(const LossSelection&) const = default;
};

struct LossAndGradient {
    double loss = 0.0;
    ImageTensor gradient;  // d loss / d pixel, same shape as the input
};

class DetectorAdapter {
public:
    virtual ~DetectorAdapter() = default;

    virtual std::string kind() const = 0;
    virtual int num_classes() const = 0;

    // Names of the loss components this adapter can differentiate.
    virtual std::set<std::string> loss_components() const = 0;

    // Deterministic; detections with confidence below the floor are excluded.
    virtual std::vector<Detection> predict(const ImageTensor& image,
                                           double confidence_floor) const = 0;

    // Loss of `image` against `target` summed (unweighted) over the selected
    // components, plus its gradient with respect to the pixels. Must leave
    // the model state bit-identical.
    virtual LossAndGradient loss_and_gradient(const ImageTensor& image, const TargetSpec& target,
                                              const LossSelection& selection) const = 0;

    // Hash over the weights and any running statistics; used to verify the
    // state-preservation contract.
    virtual std::uint64_t state_checksum() const = 0;
};

// Per-(model, mode) loss component selection. The untargeted row of every
// model is the full set of its training losses.
class LossTable {
public:
    void register_row(const std::string& model_kind, AttackMode mode, LossSelection selection) {
        rows_[{model_kind, mode}] = std::move(selection);
    }

    bool has_row(const std::string& model_kind, AttackMode mode) const {
        return rows_.count({model_kind, mode}) > 0;
    }

    const LossSelection& selection_for(const std::string& model_kind, AttackMode mode) const {
        auto it = rows_.find({model_kind, mode});
        if (it == rows_.end()) {
            throw std::out_of_range("no loss-selection row for model kind '" + model_kind +
                                    "', mode " + to_string(mode));
        }
        return it->second;
    }

    // Rows for the five reference detector families plus the bundled toy
    // detector (single-stage, same pattern as yolov3).
    static LossTable builtin() {
        using M = AttackMode;
        LossTable t;
        auto row = [&t](const char* kind, M mode, std::initializer_list<const char*> comps) {
            LossSelection s;
            for (const char* c : comps) s.components.insert(c);
            t.register_row(kind, mode, std::move(s));
        };

        row("yolov3", M::kVanishing, {"objectness"});
        row("yolov3", M::kMislabeling, {"class"});
        row("yolov3", M::kUntargeted, {"objectness", "class", "box"});

        row("ssd", M::kVanishing, {"class"});
        row("ssd", M::kMislabeling, {"class"});
        row("ssd", M::kUntargeted, {"class", "box"});

        row("retinanet", M::kVanishing, {"class"});
        row("retinanet", M::kMislabeling, {"class"});
        row("retinanet", M::kUntargeted, {"class", "box"});

        row("faster_rcnn", M::kVanishing, {"rpn.objectness", "det.class"});
        row("faster_rcnn", M::kMislabeling, {"det.class"});
        row("faster_rcnn", M::kUntargeted, {"rpn.objectness", "rpn.box", "det.class", "det.box"});

        row("cascade_rcnn", M::kVanishing,
            {"rpn1.objectness", "rpn2.class", "rpn3.class", "det.class"});
        row("cascade_rcnn", M::kMislabeling, {"rpn2.class", "rpn3.class", "det.class"});
        row("cascade_rcnn", M::kUntargeted,
            {"rpn1.objectness", "rpn1.box", "rpn2.class", "rpn2.box", "rpn3.class", "rpn3.box",
             "det.class", "det.box"});

        row("toy", M::kVanishing, {"objectness"});
        row("toy", M::kMislabeling, {"class"});
        row("toy", M::kUntargeted, {"objectness", "class", "box"});

        return t;
    }

private:
    std::map<std::pair<std::string, AttackMode>, LossSelection> rows_;
};

class AdapterRegistry {
public:
    using Factory = std::function<std::unique_ptr<DetectorAdapter>()>;

    void register_kind(const std::string& kind, Factory factory) {
        factories_[kind] = std::move(factory);
    }

    bool has(const std::string& kind) const { return factories_.count(kind) > 0; }

    std::unique_ptr<DetectorAdapter> create(const std::string& kind) const {
        auto it = factories_.find(kind);
        if (it == factories_.end()) {
            throw std::out_of_range("no adapter registered for model kind '" + kind + "'");
        }
        return it->second();
    }

    std::vector<std::string> kinds() const {
        std::vector<std::string> out;
        for (const auto& [k, f] : factories_) out.push_back(k);
        return out;
    }

private:
    std::map<std::string, Factory> factories_;
};

}  // namespace oblique
