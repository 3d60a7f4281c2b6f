#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oblique/detector.hpp"
#include "oblique/geometry.hpp"
#include "oblique/rng.hpp"

namespace oblique {

// Binary pixel mask shared by all channels; 1 marks the perturbable region.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> inside;

    static Mask from_pixel_box(const PixelBox& box, int image_w, int image_h) {
        Mask m;
        m.width = image_w;
        m.height = image_h;
        m.inside.assign(static_cast<std::size_t>(image_w) * image_h, 0);
        const int x0 = std::clamp(box.x_min, 0, image_w);
        const int x1 = std::clamp(box.x_max, 0, image_w);
        const int y0 = std::clamp(box.y_min, 0, image_h);
        const int y1 = std::clamp(box.y_max, 0, image_h);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                m.inside[static_cast<std::size_t>(y) * image_w + x] = 1;
            }
        }
        return m;
    }

    bool at(int x, int y) const { return inside[static_cast<std::size_t>(y) * width + x] != 0; }

    std::size_t count() const {
        std::size_t n = 0;
        for (std::uint8_t v : inside) n += v;
        return n;
    }
};

struct AttackConfig {
    AttackMode mode = AttackMode::kVanishing;
    int iterations = 10;
    double learning_rate = 0.1;          // per-iteration step, alpha
    std::optional<double> linf_budget;   // max |adv - original| when set
    Mask mask;
};

struct AttackResult {
    ImageTensor adversarial;
    std::vector<double> loss_trace;  // loss at the point each gradient was taken
    int iterations_run = 0;
};

class AttackError : public std::runtime_error {
public:
    explicit AttackError(const std::string& what) : std::runtime_error(what) {}
};

using IterationHook = std::function<void(int iteration, const ImageTensor& current, double loss)>;

// Iterated signed-gradient attack. Targeted modes (vanishing, mislabeling)
// descend the loss against the manipulated target; the untargeted mode
// ascends the loss against the given (unmanipulated) target. Each iteration
// applies the signed step inside the mask only, then the optional l-inf
// projection around the original image, then the clamp to [0, 1]. Pixels
// outside the mask are never written, so they stay bit-identical.
inline AttackResult run_attack(const ImageTensor& image, const TargetSpec& target,
                               const DetectorAdapter& adapter, const AttackConfig& config,
                               const LossSelection& selection, const IterationHook& hook = {}) {
    if (config.iterations <= 0) throw std::invalid_argument("iterations must be positive");
    if (config.learning_rate <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (config.mask.width != image.width || config.mask.height != image.height) {
        throw std::invalid_argument("mask shape does not match the image");
    }
    if (config.linf_budget && *config.linf_budget <= 0.0) {
        throw std::invalid_argument("l-inf budget must be positive when set");
    }
    if (target.mode != config.mode) {
        throw std::invalid_argument("target spec and config disagree on the attack mode");
    }

    const double direction = config.mode == AttackMode::kUntargeted ? 1.0 : -1.0;
    AttackResult result;
    result.adversarial = image;
    result.loss_trace.reserve(static_cast<std::size_t>(config.iterations));

    ImageTensor& x = result.adversarial;
    for (int t = 0; t < config.iterations; ++t) {
        const LossAndGradient lg = adapter.loss_and_gradient(x, target, selection);
        if (!std::isfinite(lg.loss)) {
            throw AttackError("non-finite loss at iteration " + std::to_string(t));
        }
        if (!lg.gradient.same_shape(image)) {
            throw AttackError("adapter returned a gradient of the wrong shape");
        }
        result.loss_trace.push_back(lg.loss);

        for (int y = 0; y < image.height; ++y) {
            for (int xx = 0; xx < image.width; ++xx) {
                if (!config.mask.at(xx, y)) continue;
                for (int c = 0; c < image.channels; ++c) {
                    const std::size_t i = image.index(xx, y, c);
                    const double g = lg.gradient.data[i];
                    if (!std::isfinite(g)) {
                        throw AttackError("non-finite gradient at iteration " + std::to_string(t));
                    }
                    const double step = (g > 0.0) - (g < 0.0);  // sign(0) = 0
                    if (step == 0.0) continue;
                    double v = x.data[i] + direction * config.learning_rate * step;
                    if (config.linf_budget) {
                        const double lo = image.data[i] - *config.linf_budget;
                        const double hi = image.data[i] + *config.linf_budget;
                        v = std::clamp(v, lo, hi);
                    }
                    x.data[i] = std::clamp(v, 0.0, 1.0);
                }
            }
        }
        if (hook) hook(t, x, lg.loss);
        ++result.iterations_run;
    }
    return result;
}

// Convenience overload: the loss selection follows the built-in table row
// for the adapter's model kind and the configured mode.
inline AttackResult run_attack(const ImageTensor& image, const TargetSpec& target,
                               const DetectorAdapter& adapter, const AttackConfig& config) {
    static const LossTable table = LossTable::builtin();
    return run_attack(image, target, adapter, config, table.selection_for(adapter.kind(), config.mode));
}

struct TargetSpecResult {
    TargetSpec spec;
    std::optional<int> intended_class;  // mislabeling only
};

// Builds the manipulated target the attack optimizes against, starting from
// the model's own predictions. Vanishing removes the target entry;
// mislabeling keeps its box and swaps the label (drawn uniformly among the
// other classes when not given); untargeted keeps everything as-is.
inline TargetSpecResult make_target_spec(const std::vector<Detection>& predictions,
                                         std::size_t target_index, AttackMode mode,
                                         std::optional<int> intended_class, Rng& rng) {
    if (target_index >= predictions.size()) {
        throw std::out_of_range("target index out of range");
    }
    TargetSpecResult result;
    result.spec.mode = mode;

    const int original = predictions[target_index].label;
    if (mode == AttackMode::kMislabeling) {
        const int num_classes = static_cast<int>(predictions[target_index].class_probs.size());
        if (intended_class) {
            if (*intended_class == original) {
                throw std::invalid_argument("intended class equals the original label");
            }
            result.intended_class = *intended_class;
        } else {
            if (num_classes < 2) {
                throw std::invalid_argument("mislabeling needs at least two classes");
            }
            int pick = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_classes) - 1));
            if (pick >= original) ++pick;
            result.intended_class = pick;
        }
    }

    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (mode == AttackMode::kVanishing && i == target_index) continue;
        TargetEntry entry{predictions[i].box, predictions[i].label};
        if (mode == AttackMode::kMislabeling && i == target_index) {
            entry.label = *result.intended_class;
        }
        result.spec.entries.push_back(entry);
    }
    return result;
}

}  // namespace oblique
