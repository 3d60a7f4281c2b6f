#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oblique/harness.hpp"

namespace oblique {

// ---------------------------------------------------------------------------
// Flat analysis view of one successful attack record.

struct FlatRecord {
    std::string design;
    std::string model;
    std::string mode;
    std::string norm;
    int iterations = 0;
    bool disrupted = false;
    double target_confidence = 0.0;
    double perturb_area = 0.0;
    double perturb_distance = 0.0;
    double target_iou = 0.0;
    int target_class = -1;
    bool perturb_is_object = false;
    std::optional<double> target_class_accuracy;
    std::optional<double> intended_class_prob;
    std::optional<int> num_factors;            // deliberate_factors records
    std::optional<double> side_fraction;       // arbitrary_region records, as requested
    std::optional<double> distance_fraction;   // arbitrary_region records, as requested
};

// Skipped attempts carry no analysis fields and are dropped here.
inline std::optional<FlatRecord> flatten_record(const ordered_json& rec) {
    if (rec.at("status") != "ok") return std::nullopt;
    FlatRecord f;
    f.design = rec.at("design").get<std::string>();
    f.model = rec.at("model").get<std::string>();
    f.mode = rec.at("mode").get<std::string>();
    f.norm = rec.at("norm").get<std::string>();
    f.iterations = rec.at("iterations").get<int>();
    f.disrupted = rec.at("outcome").at("disrupted").get<bool>();
    const auto& cov = rec.at("covariates");
    f.target_confidence = cov.at("target_confidence").get<double>();
    f.perturb_area = cov.at("perturb_area").get<double>();
    f.perturb_distance = cov.at("perturb_distance").get<double>();
    f.target_iou = cov.at("target_iou").get<double>();
    f.target_class = cov.at("target_class").get<int>();
    f.perturb_is_object = rec.at("selection").at("perturb").at("is_object").get<bool>();
    if (cov.contains("target_class_accuracy")) {
        f.target_class_accuracy = cov.at("target_class_accuracy").get<double>();
    }
    if (cov.contains("intended_class_prob")) {
        f.intended_class_prob = cov.at("intended_class_prob").get<double>();
    }
    if (rec.contains("factors")) f.num_factors = static_cast<int>(rec.at("factors").size());
    if (rec.contains("side_fraction")) {
        f.side_fraction = rec.at("side_fraction").get<double>();
        f.distance_fraction = rec.at("distance_fraction").get<double>();
    }
    return f;
}

// Reads every repetition chunk under `records_dir` (timing sidecars excluded).
inline std::vector<FlatRecord> load_records(const std::filesystem::path& records_dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(records_dir)) {
        throw std::runtime_error("records directory not found: " + records_dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(records_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.rfind("timings_", 0) == 0) continue;
        if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<FlatRecord> out;
    for (const auto& path : files) {
        std::ifstream in(path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (auto f = flatten_record(ordered_json::parse(line))) out.push_back(std::move(*f));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Logistic regression via iteratively reweighted least squares.

struct TermFit {
    std::string term;
    double estimate = 0.0;
    double std_error = 0.0;
    double statistic = 0.0;
    double p_value = 1.0;
    double conf_low = 0.0;
    double conf_high = 0.0;
    bool significant = false;
    bool reference = false;  // categorical baseline: estimate 0, blank inference
};

struct LogisticFit {
    bool converged = false;
    bool separation = false;
    bool degenerate = false;
    std::string note;
    int iterations = 0;
    double log_likelihood = 0.0;
    double intercept = 0.0;     // fitted but never emitted
    double intercept_se = 0.0;
    std::vector<TermFit> terms;
};

namespace detail {

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Gauss-Jordan inverse with partial pivoting; false on (near) singularity.
inline bool invert_matrix(std::vector<std::vector<double>>& a,
                          std::vector<std::vector<double>>& inv) {
    const std::size_t n = a.size();
    inv.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
    double scale = 0.0;
    for (const auto& row : a) {
        for (double v : row) scale = std::max(scale, std::abs(v));
    }
    if (scale == 0.0) return false;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        }
        if (std::abs(a[pivot][col]) < 1e-12 * scale) return false;
        std::swap(a[pivot], a[col]);
        std::swap(inv[pivot], inv[col]);
        const double d = a[col][col];
        for (std::size_t c = 0; c < n; ++c) {
            a[col][c] /= d;
            inv[col][c] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double m = a[r][col];
            if (m == 0.0) continue;
            for (std::size_t c = 0; c < n; ++c) {
                a[r][c] -= m * a[col][c];
                inv[r][c] -= m * inv[col][c];
            }
        }
    }
    return true;
}

inline double log_likelihood(const std::vector<std::vector<double>>& x,
                             const std::vector<int>& y, const std::vector<double>& beta) {
    double ll = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double eta = beta[0];
        for (std::size_t j = 0; j < x[i].size(); ++j) eta += beta[j + 1] * x[i][j];
        const double mu = std::clamp(sigmoid(eta), 1e-12, 1.0 - 1e-12);
        ll += y[i] ? std::log(mu) : std::log(1.0 - mu);
    }
    return ll;
}

}  // namespace detail

inline constexpr double kWaldZ = 1.96;
inline constexpr double kSeparationBound = 30.0;  // |log-odds| beyond any real effect

// Maximum-likelihood logistic fit of y on the columns of x (the intercept is
// added internally and reported separately). Convergence is a relative
// log-likelihood change below 1e-10 within 100 iterations.
inline LogisticFit fit_logistic(const std::vector<std::vector<double>>& x,
                                const std::vector<int>& y,
                                const std::vector<std::string>& term_names) {
    const std::size_t n = y.size();
    const std::size_t p = term_names.size();
    if (x.size() != n) throw std::invalid_argument("x and y disagree on the record count");
    for (const auto& row : x) {
        if (row.size() != p) throw std::invalid_argument("design row width mismatch");
    }
    for (int yi : y) {
        if (yi != 0 && yi != 1) throw std::invalid_argument("response must be binary");
    }

    if (p + 1 > 16) throw std::invalid_argument("too many regression terms");

    LogisticFit fit;
    if (n == 0) {
        fit.degenerate = true;
        fit.note = "empty group";
        return fit;
    }
    const long successes = std::count(y.begin(), y.end(), 1);
    if (successes == 0 || successes == static_cast<long>(n)) {
        fit.degenerate = true;
        fit.note = "constant response";
        return fit;
    }

    const std::size_t dim = p + 1;
    std::vector<double> beta(dim, 0.0);
    double prev_ll = detail::log_likelihood(x, y, beta);
    std::vector<std::vector<double>> a(dim, std::vector<double>(dim));
    std::vector<double> rhs(dim);

    for (int iter = 1; iter <= 100; ++iter) {
        fit.iterations = iter;
        for (auto& row : a) std::fill(row.begin(), row.end(), 0.0);
        std::fill(rhs.begin(), rhs.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double eta = beta[0];
            for (std::size_t j = 0; j < p; ++j) eta += beta[j + 1] * x[i][j];
            const double mu = detail::sigmoid(eta);
            const double w = std::max(mu * (1.0 - mu), 1e-10);
            const double z = eta + (y[i] - mu) / w;
            double xi[16];
            xi[0] = 1.0;
            for (std::size_t j = 0; j < p; ++j) xi[j + 1] = x[i][j];
            for (std::size_t r = 0; r < dim; ++r) {
                rhs[r] += w * xi[r] * z;
                for (std::size_t c = r; c < dim; ++c) a[r][c] += w * xi[r] * xi[c];
            }
        }
        for (std::size_t r = 0; r < dim; ++r) {
            for (std::size_t c = 0; c < r; ++c) a[r][c] = a[c][r];
        }
        std::vector<std::vector<double>> a_copy = a, a_inv;
        if (!detail::invert_matrix(a_copy, a_inv)) {
            fit.degenerate = true;
            fit.note = "rank-deficient design";
            return fit;
        }
        for (std::size_t r = 0; r < dim; ++r) {
            double v = 0.0;
            for (std::size_t c = 0; c < dim; ++c) v += a_inv[r][c] * rhs[c];
            beta[r] = v;
        }

        double worst = 0.0;
        for (double b : beta) worst = std::max(worst, std::abs(b));
        if (worst > kSeparationBound) {
            fit.separation = true;
            fit.note = "separation suspected: estimates diverge on the log-odds scale";
            return fit;
        }

        const double ll = detail::log_likelihood(x, y, beta);
        if (std::abs(ll - prev_ll) < 1e-10 * (std::abs(prev_ll) + 1e-10)) {
            fit.converged = true;
            prev_ll = ll;
            break;
        }
        prev_ll = ll;
    }
    fit.log_likelihood = prev_ll;
    if (!fit.converged) fit.note = "no convergence within 100 iterations";

    // The weight floor can stall a divergent fit below the coefficient bound,
    // so also treat a perfect classification as separation.
    bool pure = true;
    for (std::size_t i = 0; i < n && pure; ++i) {
        double eta = beta[0];
        for (std::size_t j = 0; j < p; ++j) eta += beta[j + 1] * x[i][j];
        const double mu = detail::sigmoid(eta);
        pure = y[i] == 1 ? mu > 1.0 - 1e-6 : mu < 1e-6;
    }
    if (pure) {
        fit.converged = false;
        fit.separation = true;
        fit.note = "separation suspected: estimates diverge on the log-odds scale";
        return fit;
    }

    // Wald inference from the observed information at the optimum
    for (auto& row : a) std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double eta = beta[0];
        for (std::size_t j = 0; j < p; ++j) eta += beta[j + 1] * x[i][j];
        const double mu = detail::sigmoid(eta);
        const double w = std::max(mu * (1.0 - mu), 1e-10);
        double xi[16];
        xi[0] = 1.0;
        for (std::size_t j = 0; j < p; ++j) xi[j + 1] = x[i][j];
        for (std::size_t r = 0; r < dim; ++r) {
            for (std::size_t c = r; c < dim; ++c) a[r][c] += w * xi[r] * xi[c];
        }
    }
    for (std::size_t r = 0; r < dim; ++r) {
        for (std::size_t c = 0; c < r; ++c) a[r][c] = a[c][r];
    }
    std::vector<std::vector<double>> a_inv;
    if (!detail::invert_matrix(a, a_inv)) {
        fit.degenerate = true;
        fit.note = "singular information matrix";
        return fit;
    }

    fit.intercept = beta[0];
    fit.intercept_se = std::sqrt(a_inv[0][0]);
    for (std::size_t j = 0; j < p; ++j) {
        TermFit t;
        t.term = term_names[j];
        t.estimate = beta[j + 1];
        t.std_error = std::sqrt(a_inv[j + 1][j + 1]);
        t.statistic = t.estimate / t.std_error;
        t.p_value = std::erfc(std::abs(t.statistic) / std::sqrt(2.0));
        t.conf_low = t.estimate - kWaldZ * t.std_error;
        t.conf_high = t.estimate + kWaldZ * t.std_error;
        t.significant = t.p_value < 0.05;
        fit.terms.push_back(std::move(t));
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Binned success summaries with Wilson intervals.

inline std::pair<double, double> wilson_interval(long successes, long n, double z = kWaldZ) {
    if (n <= 0) throw std::invalid_argument("empty bin");
    const double phat = static_cast<double>(successes) / static_cast<double>(n);
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (phat + z2 / (2.0 * n)) / denom;
    const double half =
        z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * static_cast<double>(n) * n)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct Bin {
    double x_center = 0.0;
    long n = 0;
    long successes = 0;
    double proportion = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

enum class BinScheme { kFixed, kQuantile };

inline std::vector<Bin> binned_summary(const std::vector<double>& x, const std::vector<int>& y,
                                       int bins, BinScheme scheme) {
    if (x.size() != y.size()) throw std::invalid_argument("x and y disagree on the record count");
    if (bins < 1) throw std::invalid_argument("need at least one bin");
    if (x.empty()) return {};

    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

    // bin index per record
    std::vector<int> which(x.size(), -1);
    if (scheme == BinScheme::kFixed) {
        const double lo = x[order.front()], hi = x[order.back()];
        const double width = (hi - lo) / bins;
        for (std::size_t i = 0; i < x.size(); ++i) {
            int b = width > 0.0 ? static_cast<int>((x[i] - lo) / width) : 0;
            which[i] = std::clamp(b, 0, bins - 1);
        }
    } else {
        // quantile edges; duplicate edges collapse so bins hold distinct ranges
        for (int b = 0; b < bins; ++b) {
            const std::size_t from = x.size() * b / bins;
            const std::size_t to = x.size() * (b + 1) / bins;
            for (std::size_t k = from; k < to; ++k) which[order[k]] = b;
        }
        // records tied on x always share a bin: assign by value, lowest bin wins
        std::map<double, int> bin_of_value;
        for (std::size_t k = 0; k < order.size(); ++k) {
            const std::size_t i = order[k];
            auto [it, fresh] = bin_of_value.try_emplace(x[i], which[i]);
            if (!fresh) which[i] = it->second;
        }
    }

    std::map<int, Bin> acc;
    std::map<int, double> x_sum;
    for (std::size_t i = 0; i < x.size(); ++i) {
        Bin& b = acc[which[i]];
        b.n++;
        b.successes += y[i];
        x_sum[which[i]] += x[i];
    }
    std::vector<Bin> out;
    for (auto& [idx, b] : acc) {
        b.x_center = x_sum[idx] / b.n;
        b.proportion = static_cast<double>(b.successes) / b.n;
        std::tie(b.ci_low, b.ci_high) = wilson_interval(b.successes, b.n);
        out.push_back(b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// The hypothesis suite: one fitted table per analysis group.

inline std::string display_model(const std::string& m) {
    if (m == "yolov3") return "YOLOv3";
    if (m == "ssd") return "SSD";
    if (m == "retinanet") return "RetinaNet";
    if (m == "faster_rcnn") return "Faster R-CNN";
    if (m == "cascade_rcnn") return "Cascade R-CNN";
    if (m == "toy") return "Toy";
    return m;
}

inline std::string display_mode(const std::string& m) {
    if (m == "vanishing") return "Vanishing";
    if (m == "mislabeling") return "Mislabeling";
    if (m == "untargeted") return "Untargeted";
    return m;
}

inline int model_rank(const std::string& m) {
    if (m == "yolov3") return 0;
    if (m == "ssd") return 1;
    if (m == "retinanet") return 2;
    if (m == "faster_rcnn") return 3;
    if (m == "cascade_rcnn") return 4;
    return 1000;  // unknown kinds trail in name order
}

inline int mode_rank(const std::string& m) {
    if (m == "vanishing") return 0;
    if (m == "mislabeling") return 1;
    if (m == "untargeted") return 2;
    return 1000;
}

// Data behind one trend plot: a covariate against the binary outcome.
struct PlotSeries {
    std::string covariate;  // slug-safe name
    bool log_x = false;
    std::vector<double> x;
    std::vector<int> y;
};

struct HypothesisTable {
    std::string hypothesis;
    std::string group;
    long n = 0;
    LogisticFit fit;
    std::vector<PlotSeries> series;
};

struct SuiteSkip {
    std::string hypothesis;
    std::string group;  // empty for suite-wide skips
    std::string reason;
};

struct SuiteReport {
    std::vector<HypothesisTable> tables;
    std::vector<SuiteSkip> skipped;
};

inline const std::set<std::string>& all_suites() {
    static const std::set<std::string> s{"h1",  "h2_h3", "h4",  "h5",         "h6_h7",
                                         "h8",  "h9",    "h10", "deliberate", "arbitrary",
                                         "object_vs_region"};
    return s;
}

// CLI spellings: h2/h3 share a table, as do h6/h7.
inline std::set<std::string> parse_suite_selector(const std::string& selector) {
    if (selector == "all") return all_suites();
    std::string key = selector;
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "h2" || key == "h3") key = "h2_h3";
    if (key == "h6" || key == "h7") key = "h6_h7";
    if (!all_suites().count(key)) {
        throw std::invalid_argument("unknown suite selector: " + selector);
    }
    return {key};
}

namespace detail {

using RecordRefs = std::vector<const FlatRecord*>;

inline RecordRefs where(const RecordRefs& in,
                        const std::function<bool(const FlatRecord&)>& keep) {
    RecordRefs out;
    for (const FlatRecord* r : in) {
        if (keep(*r)) out.push_back(r);
    }
    return out;
}

inline RecordRefs at_max_iterations(const RecordRefs& in) {
    int max_t = 0;
    for (const FlatRecord* r : in) max_t = std::max(max_t, r->iterations);
    return where(in, [max_t](const FlatRecord& r) { return r.iterations == max_t; });
}

// groups ordered by the canonical model/mode ranks
inline std::map<std::pair<int, std::string>, RecordRefs> group_by(
    const RecordRefs& in, const std::function<std::string(const FlatRecord&)>& key_of,
    const std::function<int(const std::string&)>& rank_of) {
    std::map<std::pair<int, std::string>, RecordRefs> groups;
    for (const FlatRecord* r : in) {
        const std::string key = key_of(*r);
        groups[{rank_of(key), key}].push_back(r);
    }
    return groups;
}

inline std::vector<int> responses(const RecordRefs& recs) {
    std::vector<int> y;
    y.reserve(recs.size());
    for (const FlatRecord* r : recs) y.push_back(r->disrupted ? 1 : 0);
    return y;
}

// Continuous design: one column per (value extractor), plus every requested
// pairwise interaction appended after the main effects.
struct ContinuousTerm {
    std::string name;
    std::function<double(const FlatRecord&)> value;
};

inline HypothesisTable fit_continuous(const std::string& hypothesis, const std::string& group,
                                      const RecordRefs& recs,
                                      const std::vector<ContinuousTerm>& terms,
                                      const std::vector<std::pair<int, int>>& interactions,
                                      const std::vector<std::pair<std::string, bool>>& plots) {
    HypothesisTable table;
    table.hypothesis = hypothesis;
    table.group = group;
    table.n = static_cast<long>(recs.size());
    std::vector<std::string> names;
    for (const auto& t : terms) names.push_back(t.name);
    for (const auto& [a, b] : interactions) {
        names.push_back(terms[a].name + " * " + terms[b].name);
    }
    std::vector<std::vector<double>> x;
    x.reserve(recs.size());
    for (const FlatRecord* r : recs) {
        std::vector<double> row;
        for (const auto& t : terms) row.push_back(t.value(*r));
        for (const auto& [a, b] : interactions) row.push_back(row[a] * row[b]);
        x.push_back(std::move(row));
    }
    table.fit = fit_logistic(x, responses(recs), names);
    for (std::size_t j = 0; j < plots.size(); ++j) {
        PlotSeries s;
        s.covariate = plots[j].first;
        s.log_x = plots[j].second;
        for (std::size_t i = 0; i < recs.size(); ++i) s.x.push_back(x[i][j]);
        s.y = responses(recs);
        if (s.log_x) {
            for (std::size_t i = 0; i < recs.size(); ++i) s.x[i] = std::exp(s.x[i]);
        }
        table.series.push_back(std::move(s));
    }
    return table;
}

// Categorical design: dummy columns against the first (reference) level; the
// reference row is prepended with a zero estimate and blank inference.
inline HypothesisTable fit_categorical(const std::string& hypothesis, const std::string& group,
                                       const RecordRefs& recs,
                                       const std::function<std::string(const FlatRecord&)>& level_of,
                                       const std::function<int(const std::string&)>& rank_of,
                                       const std::function<std::string(const std::string&)>& display) {
    HypothesisTable table;
    table.hypothesis = hypothesis;
    table.group = group;
    table.n = static_cast<long>(recs.size());

    std::set<std::pair<int, std::string>> ordered;
    for (const FlatRecord* r : recs) {
        const std::string level = level_of(*r);
        ordered.insert({rank_of(level), level});
    }
    std::vector<std::string> levels;
    for (const auto& [rank, level] : ordered) levels.push_back(level);
    if (levels.size() < 2) {
        table.fit.degenerate = true;
        table.fit.note = "single level: nothing to contrast";
        return table;
    }

    std::vector<std::string> names;
    for (std::size_t l = 1; l < levels.size(); ++l) names.push_back(display(levels[l]));
    std::vector<std::vector<double>> x;
    x.reserve(recs.size());
    for (const FlatRecord* r : recs) {
        std::vector<double> row(levels.size() - 1, 0.0);
        const std::string level = level_of(*r);
        for (std::size_t l = 1; l < levels.size(); ++l) {
            if (level == levels[l]) row[l - 1] = 1.0;
        }
        x.push_back(std::move(row));
    }
    table.fit = fit_logistic(x, responses(recs), names);
    if (!table.fit.degenerate && !table.fit.separation) {
        TermFit ref;
        ref.term = display(levels[0]);
        ref.reference = true;
        table.fit.terms.insert(table.fit.terms.begin(), std::move(ref));
    }
    return table;
}

}  // namespace detail

// Reproduces the published regression designs over a set of attack records.
// Hypothesis testing uses unconstrained-norm records whenever any exist, and
// every design except h4 is restricted to the largest iteration budget
// present in its data.
inline SuiteReport hypothesis_suite(const std::vector<FlatRecord>& records,
                                    const std::set<std::string>& suites) {
    using detail::RecordRefs;
    SuiteReport report;
    for (const auto& s : suites) {
        if (!all_suites().count(s)) throw std::invalid_argument("unknown suite: " + s);
    }

    RecordRefs all;
    all.reserve(records.size());
    bool any_unbounded = false;
    for (const FlatRecord& r : records) {
        any_unbounded = any_unbounded || r.norm == "unbounded";
        all.push_back(&r);
    }
    if (any_unbounded) {
        all = detail::where(all, [](const FlatRecord& r) { return r.norm == "unbounded"; });
    }

    const RecordRefs randomized =
        detail::where(all, [](const FlatRecord& r) { return r.design == "randomized"; });
    const RecordRefs deliberate = detail::where(
        all, [](const FlatRecord& r) { return r.design == "deliberate_factors"; });
    const RecordRefs arbitrary = detail::where(
        all, [](const FlatRecord& r) { return r.design == "arbitrary_region"; });

    auto want = [&suites](const std::string& s) { return suites.count(s) > 0; };
    auto skip = [&report](const std::string& hyp, const std::string& group,
                          const std::string& reason) {
        report.skipped.push_back({hyp, group, reason});
    };
    auto add = [&report, &skip](HypothesisTable table) {
        if (table.fit.degenerate || table.fit.separation) {
            skip(table.hypothesis, table.group, table.fit.note);
        }
        report.tables.push_back(std::move(table));
    };
    auto per_model_mode = [&](const std::string& hyp, const RecordRefs& base,
                              const std::function<HypothesisTable(const std::string&,
                                                                  const RecordRefs&)>& fit_one) {
        if (base.empty()) {
            skip(hyp, "", "no records for this design");
            return;
        }
        const RecordRefs top = detail::at_max_iterations(base);
        const auto by_model = detail::group_by(
            top, [](const FlatRecord& r) { return r.model; }, model_rank);
        for (const auto& [mkey, mrecs] : by_model) {
            const auto by_mode = detail::group_by(
                mrecs, [](const FlatRecord& r) { return r.mode; }, mode_rank);
            for (const auto& [akey, arecs] : by_mode) {
                add(fit_one(mkey.second + "__" + akey.second, arecs));
            }
        }
    };

    if (want("h1")) {
        if (randomized.empty()) {
            skip("h1", "", "no randomized records");
        } else {
            const RecordRefs top = detail::at_max_iterations(randomized);
            const auto by_mode = detail::group_by(
                top, [](const FlatRecord& r) { return r.mode; }, mode_rank);
            for (const auto& [key, recs] : by_mode) {
                add(detail::fit_categorical(
                    "h1", key.second, recs, [](const FlatRecord& r) { return r.model; },
                    model_rank, display_model));
            }
        }
    }

    if (want("h2_h3")) {
        if (randomized.empty()) {
            skip("h2_h3", "", "no randomized records");
        } else {
            const RecordRefs top = detail::at_max_iterations(randomized);
            const auto by_model = detail::group_by(
                top, [](const FlatRecord& r) { return r.model; }, model_rank);
            for (const auto& [key, recs] : by_model) {
                add(detail::fit_categorical(
                    "h2_h3", key.second, recs, [](const FlatRecord& r) { return r.mode; },
                    mode_rank, display_mode));
            }
        }
    }

    if (want("h4")) {
        if (randomized.empty()) {
            skip("h4", "", "no randomized records");
        } else {
            const auto by_model = detail::group_by(
                randomized, [](const FlatRecord& r) { return r.model; }, model_rank);
            for (const auto& [mkey, mrecs] : by_model) {
                const auto by_mode = detail::group_by(
                    mrecs, [](const FlatRecord& r) { return r.mode; }, mode_rank);
                for (const auto& [akey, arecs] : by_mode) {
                    std::set<int> distinct;
                    for (const FlatRecord* r : arecs) distinct.insert(r->iterations);
                    const std::string group = mkey.second + "__" + akey.second;
                    if (distinct.size() < 2) {
                        skip("h4", group, "single iteration budget: nothing to contrast");
                        continue;
                    }
                    add(detail::fit_continuous(
                        "h4", group, arecs,
                        {{"log(iterations)",
                          [](const FlatRecord& r) { return std::log(r.iterations); }}},
                        {}, {{"iterations", true}}));
                }
            }
        }
    }

    if (want("h5")) {
        per_model_mode("h5", randomized, [](const std::string& group, const RecordRefs& recs) {
            return detail::fit_continuous(
                "h5", group, recs,
                {{"confidence", [](const FlatRecord& r) { return r.target_confidence; }}}, {},
                {{"confidence", false}});
        });
    }

    if (want("h6_h7")) {
        per_model_mode("h6_h7", randomized, [](const std::string& group, const RecordRefs& recs) {
            return detail::fit_continuous(
                "h6_h7", group, recs,
                {{"distance", [](const FlatRecord& r) { return r.perturb_distance; }},
                 {"size", [](const FlatRecord& r) { return r.perturb_area; }}},
                {{0, 1}}, {{"distance", false}, {"size", false}});
        });
    }

    if (want("h8")) {
        const RecordRefs with_accuracy = detail::where(
            randomized, [](const FlatRecord& r) { return r.target_class_accuracy.has_value(); });
        if (randomized.empty()) {
            skip("h8", "", "no randomized records");
        } else if (with_accuracy.empty()) {
            skip("h8", "", "missing covariate: target_class_accuracy");
        } else {
            per_model_mode("h8", with_accuracy,
                           [](const std::string& group, const RecordRefs& recs) {
                               return detail::fit_continuous(
                                   "h8", group, recs,
                                   {{"accuracy",
                                     [](const FlatRecord& r) { return *r.target_class_accuracy; }},
                                    {"confidence",
                                     [](const FlatRecord& r) { return r.target_confidence; }}},
                                   {{0, 1}}, {{"accuracy", false}});
                           });
        }
    }

    if (want("h9")) {
        const RecordRefs untargeted = detail::where(
            randomized, [](const FlatRecord& r) { return r.mode == "untargeted"; });
        if (untargeted.empty()) {
            skip("h9", "", "no untargeted records");
        } else {
            const RecordRefs top = detail::at_max_iterations(untargeted);
            const auto by_model = detail::group_by(
                top, [](const FlatRecord& r) { return r.model; }, model_rank);
            for (const auto& [key, recs] : by_model) {
                add(detail::fit_continuous(
                    "h9", key.second, recs,
                    {{"bbox_iou_eval", [](const FlatRecord& r) { return r.target_iou; }}}, {},
                    {{"iou", false}}));
            }
        }
    }

    if (want("h10")) {
        const RecordRefs mislabeling = detail::where(randomized, [](const FlatRecord& r) {
            return r.mode == "mislabeling" && r.intended_class_prob.has_value();
        });
        if (mislabeling.empty()) {
            skip("h10", "", "no mislabeling records with an intended-class probability");
        } else {
            const RecordRefs top = detail::at_max_iterations(mislabeling);
            const auto by_model = detail::group_by(
                top, [](const FlatRecord& r) { return r.model; }, model_rank);
            for (const auto& [key, recs] : by_model) {
                add(detail::fit_continuous(
                    "h10", key.second, recs,
                    {{"log(probability)",
                      [](const FlatRecord& r) { return std::log(*r.intended_class_prob); }},
                     {"confidence", [](const FlatRecord& r) { return r.target_confidence; }}},
                    {{0, 1}}, {{"probability", true}}));
            }
        }
    }

    if (want("deliberate")) {
        per_model_mode("deliberate", deliberate,
                       [](const std::string& group, const RecordRefs& recs) {
                           return detail::fit_continuous(
                               "deliberate", group, recs,
                               {{"num_cri",
                                 [](const FlatRecord& r) { return double(*r.num_factors); }}},
                               {}, {{"num_cri", false}});
                       });
    }

    if (want("arbitrary")) {
        per_model_mode("arbitrary", arbitrary, [](const std::string& group,
                                                  const RecordRefs& recs) {
            return detail::fit_continuous(
                "arbitrary", group, recs,
                {{"distance", [](const FlatRecord& r) { return *r.distance_fraction; }},
                 {"length", [](const FlatRecord& r) { return *r.side_fraction; }}},
                {{0, 1}}, {{"distance", false}, {"length", false}});
        });
    }

    if (want("object_vs_region")) {
        RecordRefs combined = randomized;
        combined.insert(combined.end(), arbitrary.begin(), arbitrary.end());
        if (randomized.empty() || arbitrary.empty()) {
            skip("object_vs_region", "",
                 "needs both randomized and arbitrary-region records");
        } else {
            per_model_mode("object_vs_region", combined,
                           [](const std::string& group, const RecordRefs& recs) {
                               return detail::fit_continuous(
                                   "object_vs_region", group, recs,
                                   {{"object",
                                     [](const FlatRecord& r) {
                                         return r.perturb_is_object ? 1.0 : 0.0;
                                     }},
                                    {"distance",
                                     [](const FlatRecord& r) { return r.perturb_distance; }},
                                    {"size", [](const FlatRecord& r) { return r.perturb_area; }}},
                                   {{1, 2}}, {});
                           });
        }
    }

    return report;
}

}  // namespace oblique
