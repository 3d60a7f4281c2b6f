#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "oblique/attack.hpp"
#include "oblique/dataset.hpp"
#include "oblique/detector.hpp"
#include "oblique/evaluation.hpp"
#include "oblique/rng.hpp"
#include "oblique/selection.hpp"

namespace oblique {

using ordered_json = nlohmann::ordered_json;

inline constexpr int kRecordSchemaVersion = 1;

// All floating-point values in record files carry 9 significant digits, so a
// record is bit-stable however it was produced.
inline double round_sig9(double v) {
    if (!std::isfinite(v)) throw std::logic_error("non-finite value in a record");
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::strtod(buf, nullptr);
}

namespace detail {

inline std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

inline ordered_json box_json(const BoundingBox& b) {
    return ordered_json::array(
        {round_sig9(b.x_min), round_sig9(b.y_min), round_sig9(b.x_max), round_sig9(b.y_max)});
}

}  // namespace detail

// "unbounded" or "linf_<budget>", e.g. "linf_0.05".
inline std::optional<double> norm_variant_budget(const std::string& norm) {
    if (norm == "unbounded") return std::nullopt;
    if (norm.rfind("linf_", 0) == 0) {
        const std::string tail = norm.substr(5);
        char* end = nullptr;
        const double v = std::strtod(tail.c_str(), &end);
        if (end != tail.c_str() && *end == '\0' && v > 0.0 && std::isfinite(v)) return v;
    }
    throw std::invalid_argument("unknown norm variant: " + norm);
}

struct ExperimentPlan {
    std::string design;  // randomized | deliberate_factors | arbitrary_region
    std::vector<std::string> models;
    std::vector<AttackMode> attacks;
    std::vector<int> iteration_grid;
    std::vector<std::string> norm_variants;
    int images_per_cell = 0;
    int repetitions = 1;
    std::uint64_t master_seed = 0;
    // deliberate_factors only
    std::vector<std::set<DeliberateFactor>> factor_sets;
    // arbitrary_region only
    std::vector<double> side_fractions;
    std::vector<double> distance_fractions;

    int images_per_repetition() const { return images_per_cell / repetitions; }
};

inline void validate_plan(const ExperimentPlan& p) {
    auto fail = [](const std::string& why) { throw std::invalid_argument("plan: " + why); };
    if (p.design != "randomized" && p.design != "deliberate_factors" &&
        p.design != "arbitrary_region") {
        fail("unknown design '" + p.design + "'");
    }
    if (p.models.empty()) fail("models must be non-empty");
    for (const auto& m : p.models) {
        if (m.empty()) fail("model names must be non-empty");
    }
    if (std::set<std::string>(p.models.begin(), p.models.end()).size() != p.models.size()) {
        fail("duplicate model");
    }
    if (p.attacks.empty()) fail("attacks must be non-empty");
    if (std::set<AttackMode>(p.attacks.begin(), p.attacks.end()).size() != p.attacks.size()) {
        fail("duplicate attack mode");
    }
    if (p.iteration_grid.empty()) fail("iteration_grid must be non-empty");
    for (int t : p.iteration_grid) {
        if (t <= 0) fail("iteration_grid values must be positive");
    }
    if (std::set<int>(p.iteration_grid.begin(), p.iteration_grid.end()).size() !=
        p.iteration_grid.size()) {
        fail("duplicate iteration count");
    }
    if (p.norm_variants.empty()) fail("norm_variants must be non-empty");
    for (const auto& n : p.norm_variants) norm_variant_budget(n);
    if (std::set<std::string>(p.norm_variants.begin(), p.norm_variants.end()).size() !=
        p.norm_variants.size()) {
        fail("duplicate norm variant");
    }
    if (p.images_per_cell <= 0) fail("images_per_cell must be positive");
    if (p.repetitions <= 0) fail("repetitions must be positive");
    if (p.images_per_cell % p.repetitions != 0) {
        fail("images_per_cell must split evenly across repetitions");
    }
    if (p.design == "deliberate_factors") {
        if (p.factor_sets.empty()) fail("deliberate_factors design needs factor_sets");
    } else if (!p.factor_sets.empty()) {
        fail("factor_sets only apply to the deliberate_factors design");
    }
    if (p.design == "arbitrary_region") {
        if (p.side_fractions.empty() || p.distance_fractions.empty()) {
            fail("arbitrary_region design needs side_fractions and distance_fractions");
        }
        for (double s : p.side_fractions) {
            if (!(s > 0.0 && s < 1.0)) fail("side fractions must lie in (0, 1)");
        }
        for (double d : p.distance_fractions) {
            if (!(d > 0.0 && d < 1.0)) fail("distance fractions must lie in (0, 1)");
        }
        if (std::set<double>(p.side_fractions.begin(), p.side_fractions.end()).size() !=
            p.side_fractions.size()) {
            fail("duplicate side fraction");
        }
        if (std::set<double>(p.distance_fractions.begin(), p.distance_fractions.end()).size() !=
            p.distance_fractions.size()) {
            fail("duplicate distance fraction");
        }
    } else if (!p.side_fractions.empty() || !p.distance_fractions.empty()) {
        fail("side/distance fractions only apply to the arbitrary_region design");
    }
}

inline ordered_json plan_to_json(const ExperimentPlan& p) {
    ordered_json j;
    j["schema_version"] = 1;
    j["design"] = p.design;
    j["models"] = p.models;
    j["attacks"] = ordered_json::array();
    for (AttackMode m : p.attacks) j["attacks"].push_back(to_string(m));
    j["iteration_grid"] = p.iteration_grid;
    j["norm_variants"] = p.norm_variants;
    j["images_per_cell"] = p.images_per_cell;
    j["repetitions"] = p.repetitions;
    j["master_seed"] = p.master_seed;
    if (p.design == "deliberate_factors") {
        j["factor_sets"] = ordered_json::array();
        for (const auto& fs : p.factor_sets) {
            ordered_json set = ordered_json::array();
            for (DeliberateFactor f : fs) set.push_back(to_string(f));
            j["factor_sets"].push_back(set);
        }
    }
    if (p.design == "arbitrary_region") {
        j["side_fractions"] = p.side_fractions;
        j["distance_fractions"] = p.distance_fractions;
    }
    return j;
}

inline ExperimentPlan plan_from_json(const ordered_json& j) {
    auto fail = [](const std::string& why) { throw std::invalid_argument("plan: " + why); };
    if (!j.is_object()) fail("top level must be an object");
    static const std::set<std::string> known{
        "schema_version", "design",          "models",          "attacks",
        "iteration_grid", "norm_variants",   "images_per_cell", "repetitions",
        "master_seed",    "factor_sets",     "side_fractions",  "distance_fractions"};
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!known.count(key)) fail("unknown field '" + key + "'");
    }
    for (const char* required : {"schema_version", "design", "models", "attacks",
                                 "iteration_grid", "norm_variants", "images_per_cell",
                                 "repetitions", "master_seed"}) {
        if (!j.contains(required)) fail(std::string("missing field '") + required + "'");
    }
    if (j["schema_version"] != 1) fail("unsupported schema_version");

    ExperimentPlan p;
    p.design = j["design"].get<std::string>();
    p.models = j["models"].get<std::vector<std::string>>();
    for (const auto& a : j["attacks"]) {
        p.attacks.push_back(attack_mode_from_string(a.get<std::string>()));
    }
    p.iteration_grid = j["iteration_grid"].get<std::vector<int>>();
    p.norm_variants = j["norm_variants"].get<std::vector<std::string>>();
    p.images_per_cell = j["images_per_cell"].get<int>();
    p.repetitions = j["repetitions"].get<int>();
    if (j["master_seed"].is_number_integer() && j["master_seed"].get<long long>() < 0) {
        fail("master_seed must be non-negative");
    }
    p.master_seed = j["master_seed"].get<std::uint64_t>();
    if (j.contains("factor_sets")) {
        if (!j["factor_sets"].is_array()) fail("factor_sets must be an array of arrays");
        for (const auto& set_json : j["factor_sets"]) {
            if (!set_json.is_array()) fail("factor_sets must be an array of arrays");
            std::set<DeliberateFactor> fs;
            for (const auto& name : set_json) {
                if (!fs.insert(deliberate_factor_from_string(name.get<std::string>())).second) {
                    fail("duplicate factor within a factor set");
                }
            }
            p.factor_sets.push_back(std::move(fs));
        }
        std::set<std::set<DeliberateFactor>> unique(p.factor_sets.begin(), p.factor_sets.end());
        if (unique.size() != p.factor_sets.size()) fail("duplicate factor set");
    }
    if (j.contains("side_fractions")) {
        p.side_fractions = j["side_fractions"].get<std::vector<double>>();
    }
    if (j.contains("distance_fractions")) {
        p.distance_fractions = j["distance_fractions"].get<std::vector<double>>();
    }
    validate_plan(p);
    return p;
}

inline ExperimentPlan load_plan(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open plan: " + path.string());
    ordered_json j;
    in >> j;
    return plan_from_json(j);
}

// One experimental condition: everything that varies between record files.
struct CellSpec {
    std::string design;
    std::string model;
    AttackMode mode = AttackMode::kVanishing;
    int iterations = 0;
    std::string norm;
    std::set<DeliberateFactor> factors;        // deliberate_factors design
    std::optional<double> side_fraction;       // arbitrary_region design
    std::optional<double> distance_fraction;   // arbitrary_region design

    std::string design_part() const {
        if (design == "randomized") return "rand";
        if (design == "deliberate_factors") {
            if (factors.empty()) return "fs-none";
            std::string out = "fs-";
            bool first = true;
            for (DeliberateFactor f : factors) {
                if (!first) out += '+';
                out += to_string(f);
                first = false;
            }
            return out;
        }
        return "arb-s" + detail::format_g(*side_fraction) + "-d" +
               detail::format_g(*distance_fraction);
    }

    std::string slug() const {
        return model + "__" + to_string(mode) + "__T" + std::to_string(iterations) + "__" + norm +
               "__" + design_part();
    }
};

inline std::vector<CellSpec> enumerate_cells(const ExperimentPlan& plan) {
    std::vector<CellSpec> cells;
    for (const auto& model : plan.models) {
        for (AttackMode mode : plan.attacks) {
            for (int t : plan.iteration_grid) {
                for (const auto& norm : plan.norm_variants) {
                    CellSpec base;
                    base.design = plan.design;
                    base.model = model;
                    base.mode = mode;
                    base.iterations = t;
                    base.norm = norm;
                    if (plan.design == "deliberate_factors") {
                        for (const auto& fs : plan.factor_sets) {
                            CellSpec c = base;
                            c.factors = fs;
                            cells.push_back(std::move(c));
                        }
                    } else if (plan.design == "arbitrary_region") {
                        for (double s : plan.side_fractions) {
                            for (double d : plan.distance_fractions) {
                                CellSpec c = base;
                                c.side_fraction = s;
                                c.distance_fraction = d;
                                cells.push_back(std::move(c));
                            }
                        }
                    } else {
                        cells.push_back(std::move(base));
                    }
                }
            }
        }
    }
    return cells;
}

// Per-class recall of the adapter over the original images, under the same
// 0.3/0.3 matching rule the attacks are judged by. Classes without ground
// truth are omitted.
inline std::map<int, double> compute_class_accuracy(const Dataset& dataset,
                                                    const DetectorAdapter& adapter) {
    std::map<int, std::pair<long, long>> counts;  // label -> (matched, total)
    for (const Scene& scene : dataset.scenes) {
        for (const GroundTruthObject& obj : scene.objects) counts[obj.label].second++;
        const auto correct =
            filter_correct(adapter.predict(scene.image, kConfidenceFloor), scene.objects);
        for (const CorrectDetection& cd : correct) counts[cd.truth_label].first++;
    }
    std::map<int, double> out;
    for (const auto& [label, mt] : counts) {
        if (mt.second > 0) {
            out[label] = static_cast<double>(mt.first) / static_cast<double>(mt.second);
        }
    }
    return out;
}

// Runs selection, attack and judgment for one image in one cell and returns
// the full record. Both the plan runner and single-record replay call this,
// so a record is reproducible from (master seed, cell, image) alone.
inline ordered_json run_one_image(const Scene& scene, const CellSpec& cell,
                                  std::uint64_t master_seed, const DetectorAdapter& adapter,
                                  const LossTable& table,
                                  const std::map<int, double>& class_accuracy, int repetition,
                                  int image_index) {
    const std::uint64_t selection_seed =
        derive_seed(master_seed, {"selection", cell.design, scene.image_id});
    const std::uint64_t intended_seed =
        derive_seed(master_seed, {"intended", cell.design, scene.image_id});

    ordered_json rec;
    rec["schema_version"] = kRecordSchemaVersion;
    rec["key"] = cell.slug() + "#rep" + std::to_string(repetition) + "#img" +
                 std::to_string(image_index);
    rec["image_id"] = scene.image_id;
    rec["image_index"] = image_index;
    rec["repetition"] = repetition;
    rec["design"] = cell.design;
    rec["model"] = cell.model;
    rec["mode"] = to_string(cell.mode);
    rec["iterations"] = cell.iterations;
    rec["norm"] = cell.norm;
    if (cell.design == "deliberate_factors") {
        rec["factors"] = ordered_json::array();
        for (DeliberateFactor f : cell.factors) rec["factors"].push_back(to_string(f));
    }
    if (cell.design == "arbitrary_region") {
        rec["side_fraction"] = round_sig9(*cell.side_fraction);
        rec["distance_fraction"] = round_sig9(*cell.distance_fraction);
    }
    rec["seeds"] = {{"master", master_seed},
                    {"selection", selection_seed},
                    {"intended", intended_seed}};

    auto mark_skip = [&rec](SkipReason reason) {
        rec["status"] = "skip";
        rec["skip_reason"] = to_string(reason);
        rec["selection"] = nullptr;
        rec["covariates"] = nullptr;
        rec["attack"] = nullptr;
        rec["outcome"] = nullptr;
    };

    const std::vector<Detection> predictions = adapter.predict(scene.image, kConfidenceFloor);
    const std::vector<CorrectDetection> correct = filter_correct(predictions, scene.objects);
    if (correct.empty()) {
        mark_skip(SkipReason::kNoCorrectDetections);
        return rec;
    }

    Rng selection_rng(selection_seed);
    std::optional<SelectionOutcome> outcome;
    if (cell.design == "randomized") {
        outcome = sample_random_pair(correct, selection_rng);
        if (!outcome) {
            mark_skip(SkipReason::kNoQualifyingPair);
            return rec;
        }
    } else if (cell.design == "deliberate_factors") {
        outcome = sample_deliberate_pair(correct, selection_rng, cell.factors);
        if (!outcome) {
            mark_skip(SkipReason::kNoQualifyingPair);
            return rec;
        }
    } else {
        outcome = sample_arbitrary_region(correct, selection_rng, *cell.side_fraction,
                                          *cell.distance_fraction, scene.image.width,
                                          scene.image.height);
        if (!outcome) {
            mark_skip(SkipReason::kPlacementFailure);
            return rec;
        }
    }

    Rng intended_rng(intended_seed);
    const TargetSpecResult target = make_target_spec(
        predictions, outcome->target.prediction_index, cell.mode, std::nullopt, intended_rng);

    const PixelBox perturb_pixels =
        outcome->perturb_pixels
            ? *outcome->perturb_pixels
            : rasterize(outcome->perturb_box, scene.image.width, scene.image.height);
    AttackConfig config;
    config.mode = cell.mode;
    config.iterations = cell.iterations;
    config.learning_rate = 1.0 / cell.iterations;
    config.linf_budget = norm_variant_budget(cell.norm);
    config.mask = Mask::from_pixel_box(perturb_pixels, scene.image.width, scene.image.height);

    const AttackResult attacked = run_attack(scene.image, target.spec, adapter, config,
                                             table.selection_for(cell.model, cell.mode));
    const SuccessRecord judged =
        judge(attacked.adversarial, outcome->target, cell.mode, target.intended_class, adapter);
    const CovariateRecord cov =
        compute_covariates(*outcome, target.intended_class, class_accuracy);

    rec["status"] = "ok";
    ordered_json sel;
    sel["target"] = {{"box", detail::box_json(outcome->target.detection.box)},
                     {"label", outcome->target.detection.label},
                     {"confidence", round_sig9(outcome->target.detection.confidence)},
                     {"iou", round_sig9(outcome->target.iou_with_truth)},
                     {"prediction_index", outcome->target.prediction_index}};
    ordered_json perturb;
    perturb["box"] = detail::box_json(outcome->perturb_box);
    perturb["is_object"] = outcome->perturb_is_object;
    perturb["pixels"] = ordered_json::array(
        {perturb_pixels.x_min, perturb_pixels.y_min, perturb_pixels.x_max, perturb_pixels.y_max});
    if (outcome->direction) perturb["direction"] = to_string(*outcome->direction);
    sel["perturb"] = std::move(perturb);
    rec["selection"] = std::move(sel);

    ordered_json cj;
    cj["target_confidence"] = round_sig9(cov.target_confidence);
    cj["perturb_area"] = round_sig9(cov.perturb_area_fraction);
    cj["perturb_distance"] = round_sig9(cov.perturb_target_distance);
    cj["target_class"] = cov.target_class;
    cj["target_iou"] = round_sig9(cov.target_iou);
    if (cov.target_class_accuracy) {
        cj["target_class_accuracy"] = round_sig9(*cov.target_class_accuracy);
    }
    if (cov.intended_class) cj["intended_class"] = *cov.intended_class;
    if (cov.intended_class_prob) cj["intended_class_prob"] = round_sig9(*cov.intended_class_prob);
    cj["intended_prob_floored"] = cov.intended_prob_floored;
    rec["covariates"] = std::move(cj);

    double loss_min = attacked.loss_trace.front(), loss_max = attacked.loss_trace.front();
    for (double l : attacked.loss_trace) {
        loss_min = std::min(loss_min, l);
        loss_max = std::max(loss_max, l);
    }
    rec["attack"] = {{"learning_rate", round_sig9(config.learning_rate)},
                     {"loss_first", round_sig9(attacked.loss_trace.front())},
                     {"loss_last", round_sig9(attacked.loss_trace.back())},
                     {"loss_min", round_sig9(loss_min)},
                     {"loss_max", round_sig9(loss_max)},
                     {"trace_length", attacked.loss_trace.size()}};

    ordered_json oj;
    oj["disrupted"] = judged.disrupted;
    if (judged.intended_class_hit) oj["intended_class_hit"] = *judged.intended_class_hit;
    oj["post_attack_count"] = judged.post_attack_detections.size();
    rec["outcome"] = std::move(oj);
    return rec;
}

// Re-derives one record from its own stored identifiers. The caller compares
// the result against the original.
inline ordered_json replay_record(const ordered_json& record, const Dataset& dataset,
                                  const DetectorAdapter& adapter, const LossTable& table,
                                  const std::map<int, double>& class_accuracy) {
    CellSpec cell;
    cell.design = record.at("design").get<std::string>();
    cell.model = record.at("model").get<std::string>();
    cell.mode = attack_mode_from_string(record.at("mode").get<std::string>());
    cell.iterations = record.at("iterations").get<int>();
    cell.norm = record.at("norm").get<std::string>();
    if (record.contains("factors")) {
        for (const auto& f : record.at("factors")) {
            cell.factors.insert(deliberate_factor_from_string(f.get<std::string>()));
        }
    }
    if (record.contains("side_fraction")) {
        cell.side_fraction = record.at("side_fraction").get<double>();
        cell.distance_fraction = record.at("distance_fraction").get<double>();
    }
    const int image_id = record.at("image_id").get<int>();
    const Scene* scene = nullptr;
    for (const Scene& s : dataset.scenes) {
        if (s.image_id == image_id) scene = &s;
    }
    if (!scene) throw std::invalid_argument("record references unknown image " +
                                            std::to_string(image_id));
    return run_one_image(*scene, cell, record.at("seeds").at("master").get<std::uint64_t>(),
                         adapter, table, class_accuracy, record.at("repetition").get<int>(),
                         record.at("image_index").get<int>());
}

struct RunOptions {
    bool resume = false;
    int workers = 1;
};

struct QuarantineNote {
    std::string cell;
    std::string error;
};

struct RunSummary {
    int cells_total = 0;
    int repetitions_completed = 0;
    int repetitions_resumed = 0;
    long records_written = 0;
    long ok_records = 0;
    long skip_records = 0;
    std::map<std::string, long> skips_by_reason;
    std::vector<QuarantineNote> quarantined;
    std::map<std::string, std::map<int, double>> class_accuracy;  // model -> class -> recall
};

namespace detail {

inline std::filesystem::path cell_dir(const std::filesystem::path& out, const CellSpec& cell) {
    return out / "records" / cell.slug();
}

inline std::string rep_name(int repetition) { return "rep" + std::to_string(repetition); }

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for write: " + tmp.string());
        out << content;
        if (!out) throw std::runtime_error("short write: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

// Runs every cell of the plan against the dataset, appending one record per
// attempted image. Repetitions are the checkpoint unit: each lands in its own
// records file next to a .done marker, and with resume enabled, completed
// repetitions are skipped wholesale. Wall-clock timings go to a sidecar file
// so the record files themselves stay byte-identical across reruns.
inline RunSummary run_plan(const ExperimentPlan& plan, const AdapterRegistry& registry,
                           const Dataset& dataset, const std::filesystem::path& out_dir,
                           const RunOptions& options = {}) {
    validate_plan(plan);
    const int per_rep = plan.images_per_repetition();
    if (per_rep > static_cast<int>(dataset.scenes.size())) {
        throw std::invalid_argument(
            "images per repetition (" + std::to_string(per_rep) +
            ") exceeds dataset size (" + std::to_string(dataset.scenes.size()) + ")");
    }

    std::filesystem::create_directories(out_dir / "records");
    detail::write_text_file(out_dir / "plan.json", plan_to_json(plan).dump(2) + "\n");

    RunSummary summary;
    static const LossTable table = LossTable::builtin();

    // per-model baseline accuracy; a model whose adapter cannot be built
    // quarantines all of its cells
    std::map<std::string, std::map<int, double>> accuracy_by_model;
    std::set<std::string> broken_models;
    std::filesystem::create_directories(out_dir / "class_accuracy");
    for (const auto& model : plan.models) {
        try {
            const auto adapter = registry.create(model);
            const auto accuracy = compute_class_accuracy(dataset, *adapter);
            ordered_json aj;
            for (const auto& [label, acc] : accuracy) {
                aj[std::to_string(label)] = round_sig9(acc);
            }
            detail::write_text_file(out_dir / "class_accuracy" / (model + ".json"),
                                    aj.dump(2) + "\n");
            accuracy_by_model[model] = accuracy;
        } catch (const std::exception& e) {
            broken_models.insert(model);
            summary.quarantined.push_back({"model=" + model, e.what()});
        }
    }
    summary.class_accuracy = accuracy_by_model;

    const std::vector<CellSpec> cells = enumerate_cells(plan);
    summary.cells_total = static_cast<int>(cells.size());

    struct Task {
        const CellSpec* cell;
        int repetition;
    };
    std::vector<Task> tasks;
    for (const CellSpec& cell : cells) {
        if (broken_models.count(cell.model)) continue;
        const auto dir = detail::cell_dir(out_dir, cell);
        std::filesystem::create_directories(dir);
        std::error_code ec;
        std::filesystem::remove(dir / "quarantined.json", ec);  // fresh attempt
        for (int rep = 0; rep < plan.repetitions; ++rep) tasks.push_back({&cell, rep});
    }

    std::mutex mu;  // guards summary and the quarantine set
    std::set<std::string> quarantined_cells;
    std::atomic<std::size_t> next{0};

    auto run_task = [&](const Task& task, const DetectorAdapter& adapter) {
        const CellSpec& cell = *task.cell;
        const auto dir = detail::cell_dir(out_dir, cell);
        const std::string base = detail::rep_name(task.repetition);

        if (options.resume && std::filesystem::exists(dir / (base + ".done"))) {
            std::lock_guard lock(mu);
            ++summary.repetitions_resumed;
            return;
        }

        Rng image_rng(derive_seed(plan.master_seed, {"images", cell.design, task.repetition}));
        std::vector<std::size_t> order(dataset.scenes.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        image_rng.shuffle(order);

        std::string lines, timings;
        long ok = 0, skipped = 0;
        std::map<std::string, long> reasons;
        for (int i = 0; i < per_rep; ++i) {
            const Scene& scene = dataset.scenes[order[static_cast<std::size_t>(i)]];
            const auto start = std::chrono::steady_clock::now();
            const ordered_json rec =
                run_one_image(scene, cell, plan.master_seed, adapter, table,
                              accuracy_by_model.at(cell.model), task.repetition, i);
            const double wall_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count();
            lines += rec.dump();
            lines += '\n';
            ordered_json tj;
            tj["key"] = rec["key"];
            tj["wall_ms"] = wall_ms;
            timings += tj.dump();
            timings += '\n';
            if (rec["status"] == "ok") {
                ++ok;
            } else {
                ++skipped;
                ++reasons[rec["skip_reason"].get<std::string>()];
            }
        }

        detail::write_text_file(dir / (base + ".jsonl"), lines);
        detail::write_text_file(dir / ("timings_" + base + ".jsonl"), timings);
        ordered_json done;
        done["records"] = per_rep;
        detail::write_text_file(dir / (base + ".done"), done.dump() + "\n");

        std::lock_guard lock(mu);
        ++summary.repetitions_completed;
        summary.records_written += per_rep;
        summary.ok_records += ok;
        summary.skip_records += skipped;
        for (const auto& [reason, n] : reasons) summary.skips_by_reason[reason] += n;
    };

    auto worker = [&](bool own_adapters) {
        std::map<std::string, std::unique_ptr<DetectorAdapter>> adapters;
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) break;
            const Task& task = tasks[i];
            const std::string slug = task.cell->slug();
            {
                std::lock_guard lock(mu);
                if (quarantined_cells.count(slug)) continue;
            }
            try {
                auto& adapter = adapters[task.cell->model];
                if (!adapter) adapter = registry.create(task.cell->model);
                (void)own_adapters;
                run_task(task, *adapter);
            } catch (const std::exception& e) {
                std::lock_guard lock(mu);
                if (quarantined_cells.insert(slug).second) {
                    summary.quarantined.push_back({slug, e.what()});
                    ordered_json qj;
                    qj["error"] = e.what();
                    detail::write_text_file(detail::cell_dir(out_dir, *task.cell) /
                                                "quarantined.json",
                                            qj.dump(2) + "\n");
                }
            }
        }
    };

    const int n_workers = std::max(1, options.workers);
    if (n_workers == 1) {
        worker(false);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker, true);
        for (auto& t : pool) t.join();
    }

    ordered_json sj;
    sj["cells_total"] = summary.cells_total;
    sj["repetitions_completed"] = summary.repetitions_completed;
    sj["repetitions_resumed"] = summary.repetitions_resumed;
    sj["records_written"] = summary.records_written;
    sj["ok_records"] = summary.ok_records;
    sj["skip_records"] = summary.skip_records;
    sj["skips_by_reason"] = summary.skips_by_reason;
    sj["quarantined"] = ordered_json::array();
    for (const auto& q : summary.quarantined) {
        sj["quarantined"].push_back({{"cell", q.cell}, {"error", q.error}});
    }
    detail::write_text_file(out_dir / "run_summary.json", sj.dump(2) + "\n");
    return summary;
}

}  // namespace oblique
