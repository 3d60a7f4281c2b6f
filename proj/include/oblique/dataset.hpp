#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oblique/detector.hpp"
#include "oblique/geometry.hpp"
#include "oblique/rng.hpp"

namespace oblique {

struct GroundTruthObject {
    BoundingBox box;  // normalized
    int label = -1;
};

struct Scene {
    int image_id = 0;
    std::string file_name;
    ImageTensor image;
    std::vector<GroundTruthObject> objects;
};

struct IngestReport {
    int images_ingested = 0;
    int images_missing_file = 0;
    int annotations_ingested = 0;
    int annotations_skipped = 0;
};

struct Dataset {
    std::vector<Scene> scenes;
    std::map<int, std::string> categories;
    IngestReport report;
};

// ---- 8-bit PPM (P6) ----

inline void write_ppm(const std::filesystem::path& path, const ImageTensor& image) {
    if (image.channels != 3) throw std::invalid_argument("write_ppm expects 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at(x, y, c), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error("short write: " + path.string());
}

inline ImageTensor read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") throw std::runtime_error("not a P6 ppm: " + path.string());
    auto next_int = [&in, &path]() {
        // skips whitespace and '#' comment lines
        while (true) {
            int ch = in.peek();
            if (ch == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(ch)) {
                in.get();
            } else {
                break;
            }
        }
        int v;
        if (!(in >> v)) throw std::runtime_error("truncated ppm header: " + path.string());
        return v;
    };
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (maxval != 255) throw std::runtime_error("unsupported ppm maxval: " + path.string());
    in.get();  // single whitespace after maxval
    ImageTensor img = ImageTensor::zeros(w, h, 3);
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw std::runtime_error("truncated ppm payload: " + path.string());
    }
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

// ---- synthetic scenes ----

struct SceneSpec {
    int image_size = 48;
    int min_objects = 2;
    int max_objects = 3;
    int min_side = 10;
    int max_side = 18;
    int min_gap = 3;  // pixels between any two object boxes
};

namespace detail {

inline const double kPalette[4][3] = {
    {0.85, 0.15, 0.12},  // class 0
    {0.15, 0.80, 0.20},  // class 1
    {0.15, 0.25, 0.85},  // class 2
    {0.85, 0.80, 0.15},  // class 3
};

inline double quantize8(double v) {
    return std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

}  // namespace detail

// One scene: a noisy gray field with color-coded rectangles, one color per
// class. Pixels are quantized to the 8-bit grid so an in-memory scene equals
// its own save/ingest round trip.
inline Scene make_scene(int image_id, std::uint64_t seed, const SceneSpec& spec = {}) {
    Rng rng(seed);
    const int n = spec.image_size;
    Scene scene;
    scene.image_id = image_id;
    scene.image = ImageTensor::zeros(n, n, 3);

    const double base = rng.uniform(0.32, 0.44);
    for (double& v : scene.image.data) v = base + 0.015 * rng.normal();

    const int want = rng.uniform_int(spec.min_objects, spec.max_objects);
    std::vector<PixelBox> placed;
    for (int k = 0; k < want; ++k) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            const int w = rng.uniform_int(spec.min_side, spec.max_side);
            const int h = rng.uniform_int(spec.min_side, spec.max_side);
            const int x = rng.uniform_int(1, n - w - 1);
            const int y = rng.uniform_int(1, n - h - 1);
            const PixelBox box{x, y, x + w, y + h};
            bool clear = true;
            for (const PixelBox& other : placed) {
                const PixelBox grown{other.x_min - spec.min_gap, other.y_min - spec.min_gap,
                                     other.x_max + spec.min_gap, other.y_max + spec.min_gap};
                if (box.x_min < grown.x_max && grown.x_min < box.x_max &&
                    box.y_min < grown.y_max && grown.y_min < box.y_max) {
                    clear = false;
                    break;
                }
            }
            if (!clear) continue;

            const int label = static_cast<int>(rng.uniform_index(4));
            double color[3];
            for (int c = 0; c < 3; ++c) {
                color[c] = detail::kPalette[label][c] + rng.uniform(-0.06, 0.06);
            }
            for (int py = box.y_min; py < box.y_max; ++py) {
                for (int px = box.x_min; px < box.x_max; ++px) {
                    for (int c = 0; c < 3; ++c) {
                        scene.image.at(px, py, c) = color[c] + 0.01 * rng.normal();
                    }
                }
            }
            placed.push_back(box);
            scene.objects.push_back({to_normalized(box, n, n), label});
            break;
        }
    }

    for (double& v : scene.image.data) v = detail::quantize8(v);
    return scene;
}

inline Dataset make_toy_dataset(int n_images, std::uint64_t seed, const SceneSpec& spec = {}) {
    Dataset ds;
    for (int i = 0; i < n_images; ++i) {
        Scene s = make_scene(i + 1, derive_seed(seed, {"scene", i}), spec);
        char name[32];
        std::snprintf(name, sizeof(name), "images/%04d.ppm", i + 1);
        s.file_name = name;
        ds.scenes.push_back(std::move(s));
    }
    for (int c = 0; c < 4; ++c) ds.categories[c] = "class_" + std::to_string(c);
    ds.report.images_ingested = n_images;
    for (const Scene& s : ds.scenes) {
        ds.report.annotations_ingested += static_cast<int>(s.objects.size());
    }
    return ds;
}

// ---- annotation I/O (COCO-style json: images / annotations / categories) ----

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    nlohmann::ordered_json root;
    root["images"] = nlohmann::json::array();
    root["annotations"] = nlohmann::json::array();
    root["categories"] = nlohmann::json::array();
    int ann_id = 1;
    for (const Scene& s : ds.scenes) {
        write_ppm(dir / s.file_name, s.image);
        root["images"].push_back({{"id", s.image_id},
                                  {"file_name", s.file_name},
                                  {"width", s.image.width},
                                  {"height", s.image.height}});
        for (const GroundTruthObject& obj : s.objects) {
            const double x = obj.box.x_min * s.image.width;
            const double y = obj.box.y_min * s.image.height;
            const double w = obj.box.width() * s.image.width;
            const double h = obj.box.height() * s.image.height;
            root["annotations"].push_back({{"id", ann_id++},
                                           {"image_id", s.image_id},
                                           {"bbox", {x, y, w, h}},
                                           {"category_id", obj.label}});
        }
    }
    for (const auto& [id, name] : ds.categories) {
        root["categories"].push_back({{"id", id}, {"name", name}});
    }
    std::ofstream out(dir / "annotations.json");
    out << root.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write annotations: " + (dir / "annotations.json").string());
}

// Reads a COCO-style annotation file. Boxes come as [x, y, w, h] in pixels
// and leave normalized. Annotations with non-positive extent or reaching
// outside the image are skipped and counted; images whose raster file is
// missing are excluded and counted.
inline Dataset ingest_dataset(const std::filesystem::path& annotation_file,
                              const std::filesystem::path& image_root) {
    std::ifstream in(annotation_file);
    if (!in) throw std::runtime_error("cannot open: " + annotation_file.string());
    nlohmann::json root = nlohmann::json::parse(in);

    Dataset ds;
    std::map<int, std::size_t> scene_by_id;
    for (const auto& im : root.at("images")) {
        Scene s;
        s.image_id = im.at("id").get<int>();
        s.file_name = im.at("file_name").get<std::string>();
        const auto path = image_root / s.file_name;
        if (!std::filesystem::exists(path)) {
            ds.report.images_missing_file++;
            continue;
        }
        s.image = read_ppm(path);
        const int w = im.at("width").get<int>();
        const int h = im.at("height").get<int>();
        if (w != s.image.width || h != s.image.height) {
            throw std::runtime_error("annotation size disagrees with raster: " + s.file_name);
        }
        scene_by_id[s.image_id] = ds.scenes.size();
        ds.scenes.push_back(std::move(s));
        ds.report.images_ingested++;
    }

    for (const auto& ann : root.at("annotations")) {
        const int image_id = ann.at("image_id").get<int>();
        auto it = scene_by_id.find(image_id);
        if (it == scene_by_id.end()) continue;  // image was excluded
        Scene& s = ds.scenes[it->second];
        const auto& bbox = ann.at("bbox");
        const double x = bbox.at(0).get<double>();
        const double y = bbox.at(1).get<double>();
        const double w = bbox.at(2).get<double>();
        const double h = bbox.at(3).get<double>();
        if (w <= 0.0 || h <= 0.0 || x < 0.0 || y < 0.0 || x + w > s.image.width ||
            y + h > s.image.height) {
            ds.report.annotations_skipped++;
            continue;
        }
        s.objects.push_back({{x / s.image.width, y / s.image.height, (x + w) / s.image.width,
                              (y + h) / s.image.height},
                             ann.at("category_id").get<int>()});
        ds.report.annotations_ingested++;
    }

    if (root.contains("categories")) {
        for (const auto& cat : root.at("categories")) {
            ds.categories[cat.at("id").get<int>()] = cat.at("name").get<std::string>();
        }
    }
    return ds;
}

}  // namespace oblique
