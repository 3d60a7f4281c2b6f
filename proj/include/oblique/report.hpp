#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "oblique/stats.hpp"

namespace oblique {

inline const char* kTableHeader =
    "term,sig,estimate,std.error,statistic,p.value,conf.low,conf.high";

// Three decimals everywhere, like the published tables; negative zero is
// normalized away so "-0.000" never appears.
inline std::string format_stat(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    if (std::string(buf) == "-0.000") return "0.000";
    return buf;
}

// Reference levels keep their zero estimate and blank out every inferential
// column; degenerate or separated fits emit the header alone.
inline std::string table_to_csv(const HypothesisTable& table) {
    std::string out = kTableHeader;
    out += '\n';
    if (table.fit.degenerate || table.fit.separation) return out;
    for (const TermFit& t : table.fit.terms) {
        if (t.reference) {
            out += t.term + ",,0.000,,,,,\n";
            continue;
        }
        out += t.term;
        out += ',';
        out += t.significant ? "*" : "";
        out += ',' + format_stat(t.estimate);
        out += ',' + format_stat(t.std_error);
        out += ',' + format_stat(t.statistic);
        out += ',' + format_stat(t.p_value);
        out += ',' + format_stat(t.conf_low);
        out += ',' + format_stat(t.conf_high);
        out += '\n';
    }
    return out;
}

namespace detail {

// ---- minimal raster canvas written as an uncompressed 24-bit BMP ----

struct Color {
    std::uint8_t r, g, b;
};

inline constexpr Color kWhite{255, 255, 255};
inline constexpr Color kBlack{20, 20, 20};
inline constexpr Color kGray{170, 170, 170};
inline constexpr Color kBlue{36, 70, 160};
inline constexpr Color kRed{180, 50, 44};

class Canvas {
public:
    Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h, kWhite) {}

    int width() const { return w_; }
    int height() const { return h_; }

    void set(int x, int y, Color c) {
        if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
        px_[static_cast<std::size_t>(y) * w_ + x] = c;
    }

    void fill_rect(int x0, int y0, int x1, int y1, Color c) {
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) set(x, y, c);
        }
    }

    void line(int x0, int y0, int x1, int y1, Color c) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    // 5x7 glyphs for the characters %.3g output can contain
    void text(int x, int y, const std::string& s, Color c) {
        for (char ch : s) {
            const char* glyph = glyph_for(ch);
            if (glyph) {
                for (int gy = 0; gy < 7; ++gy) {
                    for (int gx = 0; gx < 5; ++gx) {
                        if (glyph[gy * 5 + gx] == '#') set(x + gx, y + gy, c);
                    }
                }
            }
            x += 6;
        }
    }

    void write_bmp(const std::filesystem::path& path) const {
        const int row_bytes = ((w_ * 3 + 3) / 4) * 4;
        const std::uint32_t data_size = static_cast<std::uint32_t>(row_bytes) * h_;
        const std::uint32_t file_size = 54 + data_size;
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write plot: " + path.string());
        auto u16 = [&out](std::uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };
        auto u32 = [&out](std::uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
        out.write("BM", 2);
        u32(file_size);
        u32(0);
        u32(54);
        u32(40);
        u32(static_cast<std::uint32_t>(w_));
        u32(static_cast<std::uint32_t>(h_));
        u16(1);
        u16(24);
        u32(0);
        u32(data_size);
        u32(2835);
        u32(2835);
        u32(0);
        u32(0);
        std::vector<char> row(static_cast<std::size_t>(row_bytes), 0);
        for (int y = h_ - 1; y >= 0; --y) {  // BMP rows run bottom-up
            for (int x = 0; x < w_; ++x) {
                const Color& c = px_[static_cast<std::size_t>(y) * w_ + x];
                row[static_cast<std::size_t>(x) * 3] = static_cast<char>(c.b);
                row[static_cast<std::size_t>(x) * 3 + 1] = static_cast<char>(c.g);
                row[static_cast<std::size_t>(x) * 3 + 2] = static_cast<char>(c.r);
            }
            out.write(row.data(), row_bytes);
        }
    }

private:
    static const char* glyph_for(char ch) {
        static const std::map<char, const char*> font{
            {'0',
             " ### "
             "#   #"
             "#  ##"
             "# # #"
             "##  #"
             "#   #"
             " ### "},
            {'1',
             "  #  "
             " ##  "
             "  #  "
             "  #  "
             "  #  "
             "  #  "
             " ### "},
            {'2',
             " ### "
             "#   #"
             "    #"
             "   # "
             "  #  "
             " #   "
             "#####"},
            {'3',
             " ### "
             "#   #"
             "    #"
             "  ## "
             "    #"
             "#   #"
             " ### "},
            {'4',
             "   # "
             "  ## "
             " # # "
             "#  # "
             "#####"
             "   # "
             "   # "},
            {'5',
             "#####"
             "#    "
             "#### "
             "    #"
             "    #"
             "#   #"
             " ### "},
            {'6',
             " ### "
             "#    "
             "#    "
             "#### "
             "#   #"
             "#   #"
             " ### "},
            {'7',
             "#####"
             "    #"
             "   # "
             "  #  "
             "  #  "
             "  #  "
             "  #  "},
            {'8',
             " ### "
             "#   #"
             "#   #"
             " ### "
             "#   #"
             "#   #"
             " ### "},
            {'9',
             " ### "
             "#   #"
             "#   #"
             " ####"
             "    #"
             "    #"
             " ### "},
            {'.',
             "     "
             "     "
             "     "
             "     "
             "     "
             " ##  "
             " ##  "},
            {'-',
             "     "
             "     "
             "     "
             " ### "
             "     "
             "     "
             "     "},
            {'+',
             "     "
             "  #  "
             "  #  "
             "#####"
             "  #  "
             "  #  "
             "     "},
            {'e',
             "     "
             "     "
             " ### "
             "#   #"
             "#####"
             "#    "
             " ### "},
        };
        auto it = font.find(ch);
        return it == font.end() ? nullptr : it->second;
    }

    int w_, h_;
    std::vector<Color> px_;
};

inline std::string short_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

}  // namespace detail

// Success proportion against one covariate: quantile-binned points with
// Wilson 95% bars and a univariate logistic trendline (refit on this
// covariate alone, on the log scale when the series says so).
inline void draw_trend_plot(const PlotSeries& series, const std::filesystem::path& path) {
    using detail::Canvas;
    const int kW = 480, kH = 320;
    const int ml = 52, mr = 16, mt = 14, mb = 36;
    Canvas canvas(kW, kH);

    std::vector<double> t(series.x.size());
    for (std::size_t i = 0; i < series.x.size(); ++i) {
        t[i] = series.log_x ? std::log(series.x[i]) : series.x[i];
    }

    std::set<double> distinct(t.begin(), t.end());
    const std::vector<Bin> bins =
        distinct.size() <= 8
            ? binned_summary(t, series.y, static_cast<int>(distinct.size()), BinScheme::kQuantile)
            : binned_summary(t, series.y, 6, BinScheme::kQuantile);

    double t0 = *distinct.begin(), t1 = *distinct.rbegin();
    if (t0 == t1) {
        t0 -= 0.5;
        t1 += 0.5;
    }
    const auto xpix = [&](double v) {
        return ml + static_cast<int>((v - t0) / (t1 - t0) * (kW - ml - mr));
    };
    const auto ypix = [&](double p) {
        return mt + static_cast<int>((1.0 - p) * (kH - mt - mb));
    };

    // frame and y guides at 0, 0.5, 1
    canvas.line(ml, mt, ml, kH - mb, detail::kBlack);
    canvas.line(ml, kH - mb, kW - mr, kH - mb, detail::kBlack);
    for (double gy : {0.0, 0.5, 1.0}) {
        canvas.line(ml - 3, ypix(gy), ml, ypix(gy), detail::kBlack);
        if (gy > 0.0) canvas.line(ml + 1, ypix(gy), kW - mr, ypix(gy), detail::kGray);
        canvas.text(ml - 26, ypix(gy) - 3, detail::short_number(gy), detail::kBlack);
    }
    const double raw_lo = series.log_x ? std::exp(t0) : t0;
    const double raw_hi = series.log_x ? std::exp(t1) : t1;
    canvas.text(ml - 6, kH - mb + 8, detail::short_number(raw_lo), detail::kBlack);
    const std::string hi_label = detail::short_number(raw_hi);
    canvas.text(kW - mr - static_cast<int>(hi_label.size()) * 6, kH - mb + 8, hi_label,
                detail::kBlack);

    // trendline under the points
    const LogisticFit trend = fit_logistic(
        [&] {
            std::vector<std::vector<double>> x;
            for (double v : t) x.push_back({v});
            return x;
        }(),
        series.y, {"x"});
    if (!trend.degenerate && !trend.separation && !trend.terms.empty()) {
        int prev_x = 0, prev_y = 0;
        for (int k = 0; k <= 100; ++k) {
            const double v = t0 + (t1 - t0) * k / 100.0;
            const double p =
                1.0 / (1.0 + std::exp(-(trend.intercept + trend.terms[0].estimate * v)));
            const int cx = xpix(v), cy = ypix(p);
            if (k > 0) canvas.line(prev_x, prev_y, cx, cy, detail::kRed);
            prev_x = cx;
            prev_y = cy;
        }
    }

    for (const Bin& b : bins) {
        const int cx = xpix(b.x_center);
        canvas.line(cx, ypix(b.ci_low), cx, ypix(b.ci_high), detail::kBlue);
        canvas.line(cx - 3, ypix(b.ci_low), cx + 3, ypix(b.ci_low), detail::kBlue);
        canvas.line(cx - 3, ypix(b.ci_high), cx + 3, ypix(b.ci_high), detail::kBlue);
        canvas.fill_rect(cx - 2, ypix(b.proportion) - 2, cx + 2, ypix(b.proportion) + 2,
                         detail::kBlue);
    }

    canvas.write_bmp(path);
}

struct EmitOutcome {
    std::vector<std::filesystem::path> tables;
    std::vector<std::filesystem::path> plots;
};

// Writes one CSV per hypothesis table, one BMP per covariate series, and a
// stats_report.json index of what was emitted and what was skipped and why.
inline EmitOutcome emit_report(const SuiteReport& suite, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    EmitOutcome outcome;
    fs::create_directories(out_dir / "tables");
    fs::create_directories(out_dir / "plots");

    ordered_json index;
    index["emitted"] = ordered_json::array();
    index["skipped"] = ordered_json::array();

    for (const HypothesisTable& table : suite.tables) {
        const std::string base =
            table.group.empty() ? table.hypothesis : table.hypothesis + "__" + table.group;
        const fs::path csv_path = out_dir / "tables" / (base + ".csv");
        std::ofstream(csv_path, std::ios::binary) << table_to_csv(table);
        outcome.tables.push_back(csv_path);
        if (!table.fit.degenerate && !table.fit.separation) {
            ordered_json entry;
            entry["hypothesis"] = table.hypothesis;
            entry["group"] = table.group;
            entry["records"] = table.n;
            entry["file"] = "tables/" + base + ".csv";
            entry["terms"] = table.fit.terms.size();
            index["emitted"].push_back(std::move(entry));
            for (const PlotSeries& series : table.series) {
                const fs::path plot_path =
                    out_dir / "plots" / (base + "__" + series.covariate + ".bmp");
                draw_trend_plot(series, plot_path);
                outcome.plots.push_back(plot_path);
            }
        }
    }
    for (const SuiteSkip& s : suite.skipped) {
        ordered_json entry;
        entry["hypothesis"] = s.hypothesis;
        entry["group"] = s.group;
        entry["reason"] = s.reason;
        index["skipped"].push_back(std::move(entry));
    }
    std::ofstream(out_dir / "stats_report.json", std::ios::binary) << index.dump(2) << "\n";
    return outcome;
}

}  // namespace oblique
