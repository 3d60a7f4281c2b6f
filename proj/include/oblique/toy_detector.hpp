#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oblique/dataset.hpp"
#include "oblique/detector.hpp"
#include "oblique/rng.hpp"
#include "oblique/selection.hpp"

namespace oblique {

struct ToyTrainConfig {
    int epochs = 500;
    int batch_size = 8;
    double learning_rate = 3e-3;
    double late_lr_factor = 0.3;  // applied to the last 30% of steps
};

class ToyTrainingError : public std::runtime_error {
public:
    explicit ToyTrainingError(const std::string& what) : std::runtime_error(what) {}
};

// Small fully differentiable detector used by the desk-scale experiments.
// The image is divided into a grid of cells; each cell sees a 5x5-cell
// receptive field, average-pooled into 4px blocks, through a shared
// one-hidden-layer head that emits an objectness logit, class logits over
// four classes plus background, and a box encoding. Every cell whose center
// falls inside a target box trains as a positive for it, so duplicate grid
// responses are deliberate and prediction dedupes them. All derivatives,
// including those with respect to the input pixels, are exact.
class ToyDetector {
public:
    static constexpr int kCell = 8;
    static constexpr int kPool = 4;
    static constexpr int kRfCells = 5;
    static constexpr int kHidden = 16;
    static constexpr int kClasses = 4;
    static constexpr int kChannels = 3;
    static constexpr int kOutputs = 1 + (kClasses + 1) + 4;  // obj, classes+bg, box
    static constexpr double kBoxLossScale = 4.0;
    static constexpr std::uint32_t kFormatVersion = 1;

    // pooled blocks per receptive-field side
    static constexpr int kRfBlocks = kRfCells * kCell / kPool;
    static constexpr int kFeatures = kRfBlocks * kRfBlocks * kChannels;

    ToyDetector() = default;

    // Fresh, untrained detector with seeded weights; gradient checks and
    // other diagnostics want one without paying for training.
    static ToyDetector initialized(std::uint64_t seed, int image_size = 48) {
        if (image_size % kCell != 0 || image_size % kPool != 0) {
            throw std::invalid_argument("image size must be a multiple of the cell size");
        }
        ToyDetector d;
        d.seed_ = seed;
        d.image_size_ = image_size;
        d.grid_ = image_size / kCell;
        d.pooled_side_ = image_size / kPool;
        d.init_weights(seed);
        return d;
    }

    int image_size() const { return image_size_; }
    int grid() const { return grid_; }
    std::uint64_t seed() const { return seed_; }

    // ---- inference ----

    std::vector<Detection> predict(const ImageTensor& image, double confidence_floor) const {
        check_image(image);
        const std::vector<double> pooled = pool_image(image);
        struct Raw {
            Detection det;
            int cell;
        };
        std::vector<Raw> raw;
        std::array<double, kOutputs> out;
        std::array<double, kHidden> hidden;
        std::array<double, kFeatures> feat;
        for (int cell = 0; cell < grid_ * grid_; ++cell) {
            gather_features(pooled, cell, feat.data());
            forward_head(feat.data(), hidden.data(), out.data());

            const double obj_p = sigmoid(out[0]);
            if (obj_p < confidence_floor) continue;

            std::array<double, kClasses + 1> probs;
            softmax(out.data() + 1, kClasses + 1, probs.data());
            int label = 0;
            for (int k = 1; k < kClasses; ++k) {
                if (probs[k] > probs[label]) label = k;
            }
            const double conf = probs[label];
            if (conf < confidence_floor) continue;

            const int row = cell / grid_;
            const int col = cell % grid_;
            const double cx = (col + sigmoid(out[kBoxOffset + 0])) / grid_;
            const double cy = (row + sigmoid(out[kBoxOffset + 1])) / grid_;
            const double bw = sigmoid(out[kBoxOffset + 2]);
            const double bh = sigmoid(out[kBoxOffset + 3]);
            BoundingBox box{std::clamp(cx - 0.5 * bw, 0.0, 1.0), std::clamp(cy - 0.5 * bh, 0.0, 1.0),
                            std::clamp(cx + 0.5 * bw, 0.0, 1.0), std::clamp(cy + 0.5 * bh, 0.0, 1.0)};
            if (box.x_max <= box.x_min || box.y_max <= box.y_min) continue;

            Detection det;
            det.box = box;
            det.label = label;
            det.confidence = conf;
            det.class_probs.assign(probs.begin(), probs.begin() + kClasses);
            raw.push_back({std::move(det), cell});
        }

        // label-agnostic greedy suppression of duplicate grid responses
        std::sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) {
            if (a.det.confidence != b.det.confidence) return a.det.confidence > b.det.confidence;
            return a.cell < b.cell;
        });
        std::vector<Detection> kept;
        for (Raw& r : raw) {
            bool suppressed = false;
            for (const Detection& k : kept) {
                if (iou(k.box, r.det.box) > 0.3) {
                    suppressed = true;
                    break;
                }
            }
            if (!suppressed) kept.push_back(std::move(r.det));
        }
        return kept;
    }

    // ---- loss and gradients ----

    struct WeightGrads {
        std::vector<double> w1, b1, w2, b2;
        void resize_like(const ToyDetector& d) {
            w1.assign(d.w1_.size(), 0.0);
            b1.assign(d.b1_.size(), 0.0);
            w2.assign(d.w2_.size(), 0.0);
            b2.assign(d.b2_.size(), 0.0);
        }
        void zero() {
            std::fill(w1.begin(), w1.end(), 0.0);
            std::fill(b1.begin(), b1.end(), 0.0);
            std::fill(w2.begin(), w2.end(), 0.0);
            std::fill(b2.begin(), b2.end(), 0.0);
        }
    };

    double forward_backward(const ImageTensor& image, const TargetSpec& target,
                            const LossSelection& selection, WeightGrads* wgrads,
                            ImageTensor* pixel_grads) const {
        check_image(image);
        const bool use_obj = selection.components.count("objectness") > 0;
        const bool use_cls = selection.components.count("class") > 0;
        const bool use_box = selection.components.count("box") > 0;

        const std::vector<double> pooled = pool_image(image);
        std::vector<double> pooled_grad;
        if (pixel_grads) pooled_grad.assign(pooled.size(), 0.0);

        const auto cell_targets = assign_targets(target);

        double loss = 0.0;
        std::array<double, kFeatures> feat;
        std::array<double, kHidden> hidden;
        std::array<double, kOutputs> out;
        std::array<double, kOutputs> dout;
        std::array<double, kHidden> dhidden;

        for (int cell = 0; cell < grid_ * grid_; ++cell) {
            gather_features(pooled, cell, feat.data());
            forward_head(feat.data(), hidden.data(), out.data());
            dout.fill(0.0);

            const CellTarget& ct = cell_targets[static_cast<std::size_t>(cell)];

            if (use_obj) {
                const double o = out[0];
                const double t = ct.assigned ? 1.0 : 0.0;
                loss += std::max(o, 0.0) - o * t + std::log1p(std::exp(-std::abs(o)));
                dout[0] += sigmoid(o) - t;
            }
            if (ct.assigned && use_cls) {
                std::array<double, kClasses + 1> probs;
                const double lse = softmax(out.data() + 1, kClasses + 1, probs.data());
                loss += lse - out[1 + ct.label];
                for (int k = 0; k < kClasses + 1; ++k) {
                    dout[1 + k] += probs[k] - (k == ct.label ? 1.0 : 0.0);
                }
            }
            if (ct.assigned && use_box) {
                const double targets[4] = {ct.gx, ct.gy, ct.gw, ct.gh};
                for (int k = 0; k < 4; ++k) {
                    const double s = sigmoid(out[kBoxOffset + k]);
                    const double d = s - targets[k];
                    loss += kBoxLossScale * d * d;
                    dout[kBoxOffset + k] += kBoxLossScale * 2.0 * d * s * (1.0 - s);
                }
            }

            const bool any = use_obj || (ct.assigned && (use_cls || use_box));
            if (!any) continue;

            // dhidden = W2^T dout, through tanh
            for (int j = 0; j < kHidden; ++j) {
                double acc = 0.0;
                for (int o = 0; o < kOutputs; ++o) acc += w2_[o * kHidden + j] * dout[o];
                dhidden[j] = acc * (1.0 - hidden[j] * hidden[j]);
            }

            if (wgrads) {
                for (int o = 0; o < kOutputs; ++o) {
                    if (dout[o] == 0.0) continue;
                    double* row = wgrads->w2.data() + o * kHidden;
                    for (int j = 0; j < kHidden; ++j) row[j] += dout[o] * hidden[j];
                    wgrads->b2[o] += dout[o];
                }
                for (int j = 0; j < kHidden; ++j) {
                    if (dhidden[j] == 0.0) continue;
                    double* row = wgrads->w1.data() + j * kFeatures;
                    for (int f = 0; f < kFeatures; ++f) row[f] += dhidden[j] * feat[f];
                    wgrads->b1[j] += dhidden[j];
                }
            }

            if (pixel_grads) {
                // dfeat = W1^T dhidden, scattered back onto the pooled grid
                const int row0 = 2 * (cell / grid_) - 2;  // pooled blocks per cell side = 2
                const int col0 = 2 * (cell % grid_) - 2;
                for (int j = 0; j < kHidden; ++j) {
                    const double dj = dhidden[j];
                    if (dj == 0.0) continue;
                    const double* wrow = w1_.data() + j * kFeatures;
                    int f = 0;
                    for (int by = 0; by < kRfBlocks; ++by) {
                        const int prow = row0 + by;
                        for (int bx = 0; bx < kRfBlocks; ++bx) {
                            const int pcol = col0 + bx;
                            if (prow < 0 || pcol < 0 || prow >= pooled_side_ ||
                                pcol >= pooled_side_) {
                                f += kChannels;
                                continue;
                            }
                            double* cellp =
                                pooled_grad.data() +
                                (static_cast<std::size_t>(prow) * pooled_side_ + pcol) * kChannels;
                            for (int c = 0; c < kChannels; ++c) cellp[c] += dj * wrow[f + c];
                            f += kChannels;
                        }
                    }
                }
            }
        }

        if (pixel_grads) {
            *pixel_grads = ImageTensor::zeros(image.width, image.height, image.channels);
            const double inv = 1.0 / (kPool * kPool);
            for (int prow = 0; prow < pooled_side_; ++prow) {
                for (int pcol = 0; pcol < pooled_side_; ++pcol) {
                    const double* g =
                        pooled_grad.data() +
                        (static_cast<std::size_t>(prow) * pooled_side_ + pcol) * kChannels;
                    for (int y = prow * kPool; y < (prow + 1) * kPool; ++y) {
                        for (int x = pcol * kPool; x < (pcol + 1) * kPool; ++x) {
                            for (int c = 0; c < kChannels; ++c) {
                                pixel_grads->at(x, y, c) = g[c] * inv;
                            }
                        }
                    }
                }
            }
        }
        return loss;
    }

    LossAndGradient loss_and_gradient(const ImageTensor& image, const TargetSpec& target,
                                      const LossSelection& selection) const {
        validate_selection(selection);
        LossAndGradient lg;
        lg.loss = forward_backward(image, target, selection, nullptr, &lg.gradient);
        return lg;
    }

    // ---- training ----

    // Overfits the detector to the given scenes. Scenes must number at least
    // 16 and each must carry at least two mutually non-overlapping objects.
    // Deterministic in (scenes, seed, config). Throws ToyTrainingError when
    // the fixed budget fails to reach 0.9 recall on the training scenes.
    static ToyDetector build_and_overfit(const std::vector<Scene>& scenes, std::uint64_t seed,
                                         const ToyTrainConfig& config = {}) {
        validate_scenes(scenes);
        ToyDetector d;
        d.seed_ = seed;
        d.image_size_ = scenes.front().image.width;
        d.grid_ = d.image_size_ / kCell;
        d.pooled_side_ = d.image_size_ / kPool;
        d.init_weights(seed);

        const LossSelection all{{"objectness", "class", "box"}};
        std::vector<TargetSpec> specs(scenes.size());
        for (std::size_t i = 0; i < scenes.size(); ++i) {
            for (const GroundTruthObject& obj : scenes[i].objects) {
                specs[i].entries.push_back({obj.box, obj.label});
            }
        }

        AdamState adam;
        adam.resize_like(d);
        WeightGrads grads;
        grads.resize_like(d);

        Rng order_rng(derive_seed(seed, {"batch_order"}));
        std::vector<std::size_t> order(scenes.size());
        std::iota(order.begin(), order.end(), 0);

        const long total_steps =
            static_cast<long>(config.epochs) *
            ((scenes.size() + config.batch_size - 1) / config.batch_size);
        long step = 0;
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            order_rng.shuffle(order);
            for (std::size_t begin = 0; begin < order.size();
                 begin += static_cast<std::size_t>(config.batch_size)) {
                const std::size_t end =
                    std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
                grads.zero();
                for (std::size_t i = begin; i < end; ++i) {
                    d.forward_backward(scenes[order[i]].image, specs[order[i]], all, &grads,
                                       nullptr);
                }
                const double scale = 1.0 / static_cast<double>(end - begin);
                double lr = config.learning_rate;
                if (step > (total_steps * 7) / 10) lr *= config.late_lr_factor;
                ++step;
                adam.step(d, grads, scale, lr);
            }
        }

        const double recall = training_recall(d, scenes);
        if (recall < 0.9) {
            throw ToyTrainingError("toy detector missed the recall bar: reached " +
                                   std::to_string(recall) + " after " +
                                   std::to_string(config.epochs) + " epochs");
        }
        return d;
    }

    static double training_recall(const ToyDetector& d, const std::vector<Scene>& scenes) {
        std::size_t matched = 0, total = 0;
        for (const Scene& s : scenes) {
            const auto correct = filter_correct(d.predict(s.image, kConfidenceFloor), s.objects);
            matched += correct.size();
            total += s.objects.size();
        }
        return total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);
    }

    // ---- serialization ----

    void save(const std::filesystem::path& path) const {
        std::vector<unsigned char> payload;
        append_u32(payload, kFormatVersion);
        append_u64(payload, seed_);
        for (int v : {image_size_, kCell, kRfCells, kPool, kHidden, kClasses}) {
            append_u32(payload, static_cast<std::uint32_t>(v));
        }
        for (const std::vector<double>* block : {&w1_, &b1_, &w2_, &b2_}) {
            append_u64(payload, block->size());
            append_doubles(payload, *block);
        }
        const std::uint64_t checksum = fnv1a64_bytes(payload.data(), payload.size());

        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for write: " + path.string());
        out.write("OBTD", 4);
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size()));
        out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
        if (!out) throw std::runtime_error("short write: " + path.string());
    }

    static ToyDetector load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open: " + path.string());
        char magic[4];
        in.read(magic, 4);
        if (in.gcount() != 4 || std::memcmp(magic, "OBTD", 4) != 0) {
            throw std::runtime_error("not a toy detector artifact: " + path.string());
        }
        std::vector<unsigned char> rest((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
        if (rest.size() < sizeof(std::uint64_t)) {
            throw std::runtime_error("truncated artifact: " + path.string());
        }
        std::uint64_t stored_checksum;
        std::memcpy(&stored_checksum, rest.data() + rest.size() - sizeof(std::uint64_t),
                    sizeof(std::uint64_t));
        rest.resize(rest.size() - sizeof(std::uint64_t));
        if (fnv1a64_bytes(rest.data(), rest.size()) != stored_checksum) {
            throw std::runtime_error("artifact checksum mismatch: " + path.string());
        }

        std::size_t pos = 0;
        const std::uint32_t version = read_u32(rest, pos);
        if (version != kFormatVersion) {
            throw std::runtime_error("unsupported artifact version " + std::to_string(version));
        }
        ToyDetector d;
        d.seed_ = read_u64(rest, pos);
        d.image_size_ = static_cast<int>(read_u32(rest, pos));
        const int cell = static_cast<int>(read_u32(rest, pos));
        const int rf = static_cast<int>(read_u32(rest, pos));
        const int pool = static_cast<int>(read_u32(rest, pos));
        const int hidden = static_cast<int>(read_u32(rest, pos));
        const int classes = static_cast<int>(read_u32(rest, pos));
        if (cell != kCell || rf != kRfCells || pool != kPool || hidden != kHidden ||
            classes != kClasses) {
            throw std::runtime_error("artifact architecture mismatch: " + path.string());
        }
        d.grid_ = d.image_size_ / kCell;
        d.pooled_side_ = d.image_size_ / kPool;
        for (std::vector<double>* block : {&d.w1_, &d.b1_, &d.w2_, &d.b2_}) {
            const std::uint64_t count = read_u64(rest, pos);
            block->resize(count);
            if (pos + count * sizeof(double) > rest.size()) {
                throw std::runtime_error("truncated artifact payload: " + path.string());
            }
            std::memcpy(block->data(), rest.data() + pos, count * sizeof(double));
            pos += count * sizeof(double);
        }
        d.check_weight_shapes();
        return d;
    }

    std::uint64_t weights_hash() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const std::vector<double>* block : {&w1_, &b1_, &w2_, &b2_}) {
            h = fnv1a64_bytes(reinterpret_cast<const unsigned char*>(block->data()),
                              block->size() * sizeof(double), h);
        }
        return h;
    }

    static void validate_selection(const LossSelection& selection) {
        if (selection.components.empty()) {
            throw std::invalid_argument("empty loss selection");
        }
        for (const std::string& c : selection.components) {
            if (c != "objectness" && c != "class" && c != "box") {
                throw std::invalid_argument("unknown loss component: " + c);
            }
        }
    }

private:
    static constexpr int kBoxOffset = 1 + kClasses + 1;

    struct CellTarget {
        bool assigned = false;
        int label = 0;
        double gx = 0.5, gy = 0.5, gw = 0.5, gh = 0.5;
    };

    struct AdamState {
        std::vector<double> m_w1, v_w1, m_b1, v_b1, m_w2, v_w2, m_b2, v_b2;
        long t = 0;

        void resize_like(const ToyDetector& d) {
            m_w1.assign(d.w1_.size(), 0.0);
            v_w1.assign(d.w1_.size(), 0.0);
            m_b1.assign(d.b1_.size(), 0.0);
            v_b1.assign(d.b1_.size(), 0.0);
            m_w2.assign(d.w2_.size(), 0.0);
            v_w2.assign(d.w2_.size(), 0.0);
            m_b2.assign(d.b2_.size(), 0.0);
            v_b2.assign(d.b2_.size(), 0.0);
        }

        static void update(std::vector<double>& p, const std::vector<double>& g, double scale,
                           std::vector<double>& m, std::vector<double>& v, long t, double lr) {
            constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
            const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
            const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = g[i] * scale;
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= lr * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + eps);
            }
        }

        void step(ToyDetector& d, const WeightGrads& g, double scale, double lr) {
            ++t;
            update(d.w1_, g.w1, scale, m_w1, v_w1, t, lr);
            update(d.b1_, g.b1, scale, m_b1, v_b1, t, lr);
            update(d.w2_, g.w2, scale, m_w2, v_w2, t, lr);
            update(d.b2_, g.b2, scale, m_b2, v_b2, t, lr);
        }
    };

    static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

    // returns log-sum-exp and fills probs
    static double softmax(const double* logits, int n, double* probs) {
        double mx = logits[0];
        for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
        double sum = 0.0;
        for (int i = 0; i < n; ++i) sum += std::exp(logits[i] - mx);
        for (int i = 0; i < n; ++i) probs[i] = std::exp(logits[i] - mx) / sum;
        return mx + std::log(sum);
    }

    void check_image(const ImageTensor& image) const {
        if (image.width != image_size_ || image.height != image_size_ ||
            image.channels != kChannels) {
            throw std::invalid_argument("image shape does not match the detector");
        }
    }

    void check_weight_shapes() const {
        if (w1_.size() != static_cast<std::size_t>(kHidden) * kFeatures ||
            b1_.size() != static_cast<std::size_t>(kHidden) ||
            w2_.size() != static_cast<std::size_t>(kOutputs) * kHidden ||
            b2_.size() != static_cast<std::size_t>(kOutputs)) {
            throw std::runtime_error("weight blocks have unexpected sizes");
        }
    }

    void init_weights(std::uint64_t seed) {
        Rng rng(derive_seed(seed, {"init"}));
        w1_.resize(static_cast<std::size_t>(kHidden) * kFeatures);
        b1_.assign(kHidden, 0.0);
        w2_.resize(static_cast<std::size_t>(kOutputs) * kHidden);
        b2_.assign(kOutputs, 0.0);
        const double s1 = 1.0 / std::sqrt(static_cast<double>(kFeatures));
        for (double& w : w1_) w = s1 * rng.normal();
        const double s2 = 1.0 / std::sqrt(static_cast<double>(kHidden));
        for (double& w : w2_) w = s2 * rng.normal();
        b2_[0] = -2.0;  // start biased toward background
    }

    // 4px average pooling over the whole image, fixed divisor so border cells
    // keep the same gradient structure.
    std::vector<double> pool_image(const ImageTensor& image) const {
        std::vector<double> pooled(
            static_cast<std::size_t>(pooled_side_) * pooled_side_ * kChannels, 0.0);
        const double inv = 1.0 / (kPool * kPool);
        for (int y = 0; y < image.height; ++y) {
            const int prow = y / kPool;
            for (int x = 0; x < image.width; ++x) {
                const int pcol = x / kPool;
                double* cell =
                    pooled.data() + (static_cast<std::size_t>(prow) * pooled_side_ + pcol) * kChannels;
                for (int c = 0; c < kChannels; ++c) cell[c] += image.at(x, y, c) * inv;
            }
        }
        return pooled;
    }

    void gather_features(const std::vector<double>& pooled, int cell, double* feat) const {
        const int row0 = 2 * (cell / grid_) - 2;
        const int col0 = 2 * (cell % grid_) - 2;
        int f = 0;
        for (int by = 0; by < kRfBlocks; ++by) {
            const int prow = row0 + by;
            for (int bx = 0; bx < kRfBlocks; ++bx) {
                const int pcol = col0 + bx;
                if (prow < 0 || pcol < 0 || prow >= pooled_side_ || pcol >= pooled_side_) {
                    for (int c = 0; c < kChannels; ++c) feat[f++] = 0.0;
                } else {
                    const double* cellp =
                        pooled.data() +
                        (static_cast<std::size_t>(prow) * pooled_side_ + pcol) * kChannels;
                    for (int c = 0; c < kChannels; ++c) feat[f++] = cellp[c];
                }
            }
        }
    }

    void forward_head(const double* feat, double* hidden, double* out) const {
        for (int j = 0; j < kHidden; ++j) {
            const double* row = w1_.data() + static_cast<std::size_t>(j) * kFeatures;
            double acc = b1_[j];
            for (int f = 0; f < kFeatures; ++f) acc += row[f] * feat[f];
            hidden[j] = std::tanh(acc);
        }
        for (int o = 0; o < kOutputs; ++o) {
            const double* row = w2_.data() + static_cast<std::size_t>(o) * kHidden;
            double acc = b2_[o];
            for (int j = 0; j < kHidden; ++j) acc += row[j] * hidden[j];
            out[o] = acc;
        }
    }

    // Cell assignment: an entry claims every cell whose center falls inside
    // its box, plus the cell holding the box center (boxes thinner than a
    // cell may cover no cell center). The first entry wins a collision.
    // Off-center cells regress toward the nearest expressible center, so
    // their duplicates rank behind the primary cell and fall to suppression.
    std::vector<CellTarget> assign_targets(const TargetSpec& target) const {
        std::vector<CellTarget> cells(static_cast<std::size_t>(grid_) * grid_);
        for (const TargetEntry& e : target.entries) {
            if (e.label < 0 || e.label >= kClasses) {
                throw std::invalid_argument("target label out of range: " + std::to_string(e.label));
            }
            const double cx = e.box.center_x();
            const double cy = e.box.center_y();
            const int ccol = std::clamp(static_cast<int>(std::floor(cx * grid_)), 0, grid_ - 1);
            const int crow = std::clamp(static_cast<int>(std::floor(cy * grid_)), 0, grid_ - 1);
            for (int row = 0; row < grid_; ++row) {
                for (int col = 0; col < grid_; ++col) {
                    const double mx = (col + 0.5) / grid_;
                    const double my = (row + 0.5) / grid_;
                    const bool covered = mx >= e.box.x_min && mx <= e.box.x_max &&
                                         my >= e.box.y_min && my <= e.box.y_max;
                    if (!covered && !(row == crow && col == ccol)) continue;
                    CellTarget& ct = cells[static_cast<std::size_t>(row) * grid_ + col];
                    if (ct.assigned) continue;
                    ct.assigned = true;
                    ct.label = e.label;
                    ct.gx = std::clamp(cx * grid_ - col, 0.02, 0.98);
                    ct.gy = std::clamp(cy * grid_ - row, 0.02, 0.98);
                    ct.gw = std::clamp(e.box.width(), 0.02, 0.98);
                    ct.gh = std::clamp(e.box.height(), 0.02, 0.98);
                }
            }
        }
        return cells;
    }

    static void validate_scenes(const std::vector<Scene>& scenes) {
        if (scenes.size() < 16) {
            throw std::invalid_argument("training needs at least 16 scenes");
        }
        const int size = scenes.front().image.width;
        if (size % kCell != 0 || size % kPool != 0) {
            throw std::invalid_argument("image size must be a multiple of the cell size");
        }
        for (const Scene& s : scenes) {
            if (s.image.width != size || s.image.height != size || s.image.channels != kChannels) {
                throw std::invalid_argument("scenes must share one square image shape");
            }
            if (s.objects.size() < 2) {
                throw std::invalid_argument("every scene needs at least two objects");
            }
            for (std::size_t i = 0; i < s.objects.size(); ++i) {
                for (std::size_t j = i + 1; j < s.objects.size(); ++j) {
                    if (overlaps(s.objects[i].box, s.objects[j].box)) {
                        throw std::invalid_argument("scene objects must not overlap");
                    }
                }
            }
        }
    }

    // ---- little-endian helpers ----

    static void append_u32(std::vector<unsigned char>& out, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    static void append_u64(std::vector<unsigned char>& out, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    static void append_doubles(std::vector<unsigned char>& out, const std::vector<double>& v) {
        const std::size_t old = out.size();
        out.resize(old + v.size() * sizeof(double));
        std::memcpy(out.data() + old, v.data(), v.size() * sizeof(double));
    }
    static std::uint32_t read_u32(const std::vector<unsigned char>& in, std::size_t& pos) {
        if (pos + 4 > in.size()) throw std::runtime_error("truncated artifact header");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos++]) << (8 * i);
        return v;
    }
    static std::uint64_t read_u64(const std::vector<unsigned char>& in, std::size_t& pos) {
        if (pos + 8 > in.size()) throw std::runtime_error("truncated artifact header");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[pos++]) << (8 * i);
        return v;
    }
    static std::uint64_t fnv1a64_bytes(const unsigned char* data, std::size_t n,
                                       std::uint64_t h = 0xcbf29ce484222325ull) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= data[i];
            h *= 0x100000001b3ull;
        }
        return h;
    }

    std::uint64_t seed_ = 0;
    int image_size_ = 48;
    int grid_ = 6;
    int pooled_side_ = 12;
    std::vector<double> w1_, b1_, w2_, b2_;
};

class ToyDetectorAdapter : public DetectorAdapter {
public:
    explicit ToyDetectorAdapter(ToyDetector detector) : detector_(std::move(detector)) {}

    std::string kind() const override { return "toy"; }
    int num_classes() const override { return ToyDetector::kClasses; }
    std::set<std::string> loss_components() const override {
        return {"objectness", "class", "box"};
    }
    std::vector<Detection> predict(const ImageTensor& image,
                                   double confidence_floor) const override {
        return detector_.predict(image, confidence_floor);
    }
    LossAndGradient loss_and_gradient(const ImageTensor& image, const TargetSpec& target,
                                      const LossSelection& selection) const override {
        return detector_.loss_and_gradient(image, target, selection);
    }
    std::uint64_t state_checksum() const override { return detector_.weights_hash(); }

    const ToyDetector& detector() const { return detector_; }

private:
    ToyDetector detector_;
};

}  // namespace oblique
