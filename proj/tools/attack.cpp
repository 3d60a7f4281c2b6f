#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "oblique/dataset.hpp"
#include "oblique/harness.hpp"
#include "oblique/report.hpp"
#include "oblique/stats.hpp"
#include "oblique/toy_detector.hpp"

namespace fs = std::filesystem;
using oblique::ordered_json;

namespace {

oblique::Dataset load_dataset(const fs::path& dir) {
    return oblique::ingest_dataset(dir / "annotations.json", dir);
}

oblique::AdapterRegistry registry_with_toy(const fs::path& weights) {
    oblique::AdapterRegistry registry;
    registry.register_kind("toy", [weights]() {
        return std::make_unique<oblique::ToyDetectorAdapter>(oblique::ToyDetector::load(weights));
    });
    return registry;
}

int cmd_toy_train(const fs::path& dataset_dir, const fs::path& out, bool make_dataset,
                  int images, std::uint64_t seed) {
    oblique::Dataset ds;
    if (make_dataset) {
        ds = oblique::make_toy_dataset(images, seed);
        oblique::save_dataset(ds, dataset_dir);
    } else {
        ds = load_dataset(dataset_dir);
    }

    const auto detector =
        oblique::ToyDetector::build_and_overfit(ds.scenes, oblique::derive_seed(seed, {"toy_weights"}));
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    detector.save(out);

    ordered_json summary;
    summary["images"] = ds.scenes.size();
    summary["annotations"] = ds.report.annotations_ingested;
    summary["training_recall"] = oblique::ToyDetector::training_recall(detector, ds.scenes);
    summary["weights"] = out.string();
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_eval_baseline(const fs::path& dataset_dir, const fs::path& weights) {
    const oblique::Dataset ds = load_dataset(dataset_dir);
    const oblique::ToyDetectorAdapter adapter(oblique::ToyDetector::load(weights));
    const auto accuracy = oblique::compute_class_accuracy(ds, adapter);

    ordered_json table = ordered_json::object();
    for (const auto& [label, recall] : accuracy) {
        const auto name = ds.categories.find(label);
        table[name == ds.categories.end() ? std::to_string(label) : name->second] = recall;
    }
    ordered_json summary;
    summary["images"] = ds.scenes.size();
    summary["class_recall"] = table;
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_run(const fs::path& plan_file, const fs::path& out_dir, const fs::path& dataset_dir,
            const fs::path& weights, long long seed, bool resume, int workers) {
    oblique::ExperimentPlan plan = oblique::load_plan(plan_file);
    if (seed >= 0) plan.master_seed = static_cast<std::uint64_t>(seed);

    const oblique::Dataset ds = load_dataset(dataset_dir);
    const auto registry = registry_with_toy(weights);

    oblique::RunOptions options;
    options.resume = resume;
    options.workers = workers;
    const oblique::RunSummary run = oblique::run_plan(plan, registry, ds, out_dir, options);

    ordered_json summary;
    summary["cells"] = run.cells_total;
    summary["repetitions_completed"] = run.repetitions_completed;
    summary["repetitions_resumed"] = run.repetitions_resumed;
    summary["records_written"] = run.records_written;
    summary["ok_records"] = run.ok_records;
    summary["skip_records"] = run.skip_records;
    summary["skips_by_reason"] = run.skips_by_reason;
    summary["quarantined"] = ordered_json::array();
    for (const oblique::QuarantineNote& q : run.quarantined) {
        summary["quarantined"].push_back({{"cell", q.cell}, {"error", q.error}});
    }
    summary["out"] = out_dir.string();
    std::cout << summary.dump(2) << "\n";
    return run.quarantined.empty() ? 0 : 2;
}

int cmd_stats(const fs::path& records_dir, const std::string& suite, const fs::path& out_dir) {
    const auto records = oblique::load_records(records_dir);
    const oblique::SuiteReport report =
        oblique::hypothesis_suite(records, oblique::parse_suite_selector(suite));
    const oblique::EmitOutcome outcome = oblique::emit_report(report, out_dir);

    ordered_json summary;
    summary["records"] = records.size();
    summary["tables_emitted"] = outcome.tables.size();
    summary["plots_emitted"] = outcome.plots.size();
    summary["skipped"] = ordered_json::array();
    for (const oblique::SuiteSkip& s : report.skipped) {
        summary["skipped"].push_back(
            {{"hypothesis", s.hypothesis}, {"group", s.group}, {"reason", s.reason}});
    }
    summary["out"] = out_dir.string();
    std::cout << summary.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"intent-obscuring attack experiments on object detectors"};
    app.require_subcommand(1);

    // toy-train
    auto* train = app.add_subcommand("toy-train", "train the toy detector on a synthetic dataset");
    fs::path train_dataset = "data/toy";
    fs::path train_out = "data/toy_weights.bin";
    bool make_dataset = false;
    int train_images = 96;
    std::uint64_t train_seed = 7;
    train->add_option("--dataset", train_dataset, "dataset directory");
    train->add_option("--out", train_out, "weights file to write");
    train->add_flag("--make-dataset", make_dataset, "synthesize the dataset into --dataset first");
    train->add_option("--images", train_images, "images to synthesize with --make-dataset");
    train->add_option("--seed", train_seed, "seed for dataset synthesis and weight init");

    // eval-baseline
    auto* eval = app.add_subcommand("eval-baseline", "per-class recall of a trained detector");
    fs::path eval_dataset = "data/toy";
    fs::path eval_weights = "data/toy_weights.bin";
    eval->add_option("--dataset", eval_dataset, "dataset directory");
    eval->add_option("--weights", eval_weights, "weights file");

    // run
    auto* run = app.add_subcommand("run", "run an experiment plan");
    fs::path run_plan_file, run_out;
    fs::path run_dataset = "data/toy";
    fs::path run_weights = "data/toy_weights.bin";
    long long run_seed = -1;
    bool run_resume = false;
    int run_workers = 1;
    run->add_option("--plan", run_plan_file, "experiment plan file")->required();
    run->add_option("--out", run_out, "output directory for records")->required();
    run->add_option("--dataset", run_dataset, "dataset directory");
    run->add_option("--weights", run_weights, "weights file for the toy model kind");
    run->add_option("--seed", run_seed, "override the plan's master seed");
    run->add_flag("--resume", run_resume, "skip repetitions that already completed");
    run->add_option("--workers", run_workers, "parallel workers");

    // stats
    auto* stats = app.add_subcommand("stats", "fit the hypothesis suites over recorded attacks");
    fs::path stats_records, stats_out;
    std::string stats_suite = "all";
    stats->add_option("--records", stats_records, "records directory from a run")->required();
    stats->add_option("--suite", stats_suite,
                      "all|h1..h10|deliberate|arbitrary|object-vs-region");
    stats->add_option("--out", stats_out, "output directory for tables and plots")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            return cmd_toy_train(train_dataset, train_out, make_dataset, train_images, train_seed);
        }
        if (eval->parsed()) return cmd_eval_baseline(eval_dataset, eval_weights);
        if (run->parsed()) {
            return cmd_run(run_plan_file, run_out, run_dataset, run_weights, run_seed, run_resume,
                           run_workers);
        }
        if (stats->parsed()) return cmd_stats(stats_records, stats_suite, stats_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
