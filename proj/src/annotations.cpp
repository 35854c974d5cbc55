#include <algorithm>
#include <fstream>
#include <sstream>

#include "promptface/dataset.hpp"
#include "promptface/errors.hpp"

namespace promptface {

namespace fs = std::filesystem;

namespace {

std::string where(const fs::path& path, int line) { return path.string() + ":" + std::to_string(line); }

void check_count(const fs::path& path, int line, std::size_t n, const DatasetDescriptor& d) {
    if (static_cast<int>(n) != d.landmark_count) {
        throw DataError(where(path, line) + ": landmark count mismatch: record has " + std::to_string(n) +
                        ", dataset '" + d.id + "' expects " + std::to_string(d.landmark_count));
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path image(p);
    return image.is_absolute() ? image : base / image;
}

std::vector<AnnotationRecord> import_canonical(const fs::path& path, const DatasetDescriptor& d) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open annotation file " + path.string());
    std::vector<AnnotationRecord> out;
    std::string text;
    int line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        AnnotationRecord r;
        r.line = line;
        try {
            const auto j = nlohmann::json::parse(text);
            r.image_path = resolve(path.parent_path(), j.at("image").get<std::string>());
            r.dataset_id = j.value("dataset_id", d.id);
            const auto& b = j.at("bbox");
            r.bbox = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
            for (const auto& p : j.at("points")) {
                r.points.coords.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
                r.points.valid.push_back(p.size() < 3 || p.at(2).get<bool>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where(path, line) + ": malformed record: " + e.what());
        }
        if (r.dataset_id != d.id) {
            throw DataError(where(path, line) + ": record belongs to dataset '" + r.dataset_id +
                            "', not '" + d.id + "'");
        }
        check_count(path, line, r.points.size(), d);
        if (r.bbox.width() <= 0.0 || r.bbox.height() <= 0.0) {
            throw DataError(where(path, line) + ": empty bbox");
        }
        try {
            r.points.validate();
        } catch (const DataError& e) {
            throw DataError(where(path, line) + ": " + e.what());
        }
        out.push_back(std::move(r));
    }
    return out;
}

// One face per line: 2N coordinates, 4 bbox values, 6 attribute flags, image path.
std::vector<AnnotationRecord> import_wflw(const fs::path& path, const DatasetDescriptor& d) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open annotation file " + path.string());
    std::vector<AnnotationRecord> out;
    std::string text;
    int line = 0;
    while (std::getline(in, text)) {
        ++line;
        std::istringstream ss(text);
        std::vector<std::string> tok;
        for (std::string t; ss >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok.size() < 13 || (tok.size() - 11) % 2 != 0) {
            throw DataError(where(path, line) + ": malformed line (" + std::to_string(tok.size()) + " fields)");
        }
        const std::size_t n = (tok.size() - 11) / 2;
        check_count(path, line, n, d);
        std::vector<double> v(tok.size() - 1);
        for (std::size_t i = 0; i + 1 < tok.size(); ++i) {
            try {
                std::size_t used = 0;
                v[i] = std::stod(tok[i], &used);
                if (used != tok[i].size()) throw std::invalid_argument("trailing characters");
            } catch (const std::exception&) {
                throw DataError(where(path, line) + ": field " + std::to_string(i + 1) + " is not a number");
            }
        }
        AnnotationRecord r;
        r.line = line;
        r.dataset_id = d.id;
        for (std::size_t i = 0; i < n; ++i) r.points.coords.push_back({v[2 * i], v[2 * i + 1]});
        r.points.valid.assign(n, true);
        r.bbox = {v[2 * n], v[2 * n + 1], v[2 * n + 2], v[2 * n + 3]};
        if (r.bbox.width() <= 0.0 || r.bbox.height() <= 0.0) {
            throw DataError(where(path, line) + ": empty bbox");
        }
        r.image_path = resolve(path.parent_path(), tok.back());
        out.push_back(std::move(r));
    }
    return out;
}

AnnotationRecord read_pts(const fs::path& path, const DatasetDescriptor& d) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open annotation file " + path.string());
    std::string text;
    int line = 0;
    int declared = -1;
    bool inside = false;
    AnnotationRecord r;
    r.dataset_id = d.id;
    r.line = 1;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (!inside) {
            if (text.rfind("n_points:", 0) == 0) {
                try {
                    declared = std::stoi(text.substr(9));
                } catch (const std::exception&) {
                    throw DataError(where(path, line) + ": malformed n_points");
                }
            } else if (text.find('{') != std::string::npos) {
                inside = true;
            }
            continue;
        }
        if (text.find('}') != std::string::npos) break;
        std::istringstream ss(text);
        double x = 0, y = 0;
        if (!(ss >> x >> y)) throw DataError(where(path, line) + ": malformed point");
        r.points.coords.push_back({x, y});
    }
    if (declared >= 0 && declared != static_cast<int>(r.points.coords.size())) {
        throw DataError(where(path, line) + ": n_points says " + std::to_string(declared) + " but " +
                        std::to_string(r.points.coords.size()) + " points follow");
    }
    check_count(path, 1, r.points.coords.size(), d);
    r.points.valid.assign(r.points.coords.size(), true);

    // No box in this format: a square 1.2x the landmark extent, centered on it.
    double x0 = r.points.coords[0].x, x1 = x0, y0 = r.points.coords[0].y, y1 = y0;
    for (const auto& p : r.points.coords) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    const double half = 0.6 * std::max(x1 - x0, y1 - y0);
    const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
    r.bbox = {cx - half, cy - half, cx + half, cy + half};

    for (const char* ext : {".png", ".jpg", ".jpeg", ".PNG", ".JPG"}) {
        fs::path candidate = path;
        candidate.replace_extension(ext);
        if (fs::exists(candidate)) {
            r.image_path = candidate;
            break;
        }
    }
    if (r.image_path.empty()) {
        r.image_path = path;
        r.image_path.replace_extension(".png");
    }
    return r;
}

std::vector<AnnotationRecord> import_pts(const fs::path& path, const DatasetDescriptor& d) {
    std::vector<AnnotationRecord> out;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(path)) {
            if (e.path().extension() == ".pts") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) out.push_back(read_pts(f, d));
    } else {
        out.push_back(read_pts(path, d));
    }
    return out;
}

}  // namespace

std::vector<AnnotationRecord> import_annotations(const fs::path& path, const std::string& format,
                                                 const DatasetDescriptor& descriptor) {
    if (!fs::exists(path)) throw DataError("annotation path does not exist: " + path.string());
    if (format == "canonical-json") return import_canonical(path, descriptor);
    if (format == "wflw-txt") return import_wflw(path, descriptor);
    if (format == "300w-pts") return import_pts(path, descriptor);
    throw UsageError("unknown annotation format '" + format + "'");
}

void export_canonical(const fs::path& path, const std::vector<AnnotationRecord>& records) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write annotation file " + path.string());
    for (const auto& r : records) {
        nlohmann::json pts = nlohmann::json::array();
        for (std::size_t i = 0; i < r.points.size(); ++i) {
            pts.push_back({r.points.coords[i].x, r.points.coords[i].y, static_cast<bool>(r.points.valid[i])});
        }
        fs::path image = r.image_path;
        const fs::path base = path.parent_path();
        if (!base.empty()) {
            const fs::path rel = image.lexically_relative(base);
            if (!rel.empty() && *rel.begin() != "..") image = rel;
        }
        nlohmann::json j = {{"image", image.string()},
                            {"dataset_id", r.dataset_id},
                            {"bbox", {r.bbox.x0, r.bbox.y0, r.bbox.x1, r.bbox.y1}},
                            {"points", pts}};
        out << j.dump() << '\n';
    }
}

}  // namespace promptface
