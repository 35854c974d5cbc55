#include "promptface/run_config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "promptface/errors.hpp"

namespace promptface {

nlohmann::json to_json(const DatasetSource& d) {
    return {{"path", d.path}, {"format", d.format}, {"descriptor", d.descriptor}};
}

DatasetSource dataset_source_from_json(const nlohmann::json& j) {
    DatasetSource d;
    if (j.is_string()) {
        d.path = j.get<std::string>();
        return d;
    }
    d.path = j.at("path").get<std::string>();
    d.format = j.value("format", d.format);
    if (j.contains("descriptor")) d.descriptor = j.at("descriptor");
    return d;
}

void RunConfig::validate() const {
    if (workers < 1) throw UsageError("--workers must be positive");
    if (n_pre < 0) throw UsageError("--n-pre must be non-negative");
    if (shots < 0) throw UsageError("--shots must be non-negative");
    if (checkpoint_every < 0) throw UsageError("checkpoint interval must be non-negative");
    for (double a : alphas) {
        if (!(a > 0.0) || !std::isfinite(a)) throw UsageError("--alpha values must be positive");
    }
    model.validate();
    train.validate();
}

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json datasets = nlohmann::json::array();
    for (const auto& d : c.datasets) datasets.push_back(to_json(d));
    return {{"command", c.command},
            {"out", c.out},
            {"seed", c.seed},
            {"workers", c.workers},
            {"model", to_json(c.model)},
            {"train", to_json(c.train)},
            {"datasets", datasets},
            {"alphas", c.alphas},
            {"norm", to_string(c.norm)},
            {"checkpoint", c.checkpoint},
            {"points_file", c.points_file},
            {"n_pre", c.n_pre},
            {"shots", c.shots},
            {"checkpoint_every", c.checkpoint_every},
            {"scheme", c.scheme},
            {"count", c.count},
            {"force", c.force},
            {"reports", c.reports}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        c.command = j.value("command", c.command);
        c.out = j.value("out", c.out);
        c.seed = j.value("seed", c.seed);
        c.workers = j.value("workers", c.workers);
        if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
        if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
        if (j.contains("datasets")) {
            for (const auto& d : j.at("datasets")) c.datasets.push_back(dataset_source_from_json(d));
        }
        c.alphas = j.value("alphas", c.alphas);
        if (j.contains("norm")) c.norm = parse_norm_mode(j.at("norm").get<std::string>());
        c.checkpoint = j.value("checkpoint", c.checkpoint);
        c.points_file = j.value("points_file", c.points_file);
        c.n_pre = j.value("n_pre", c.n_pre);
        c.shots = j.value("shots", c.shots);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.scheme = j.value("scheme", c.scheme);
        c.count = j.value("count", c.count);
        c.force = j.value("force", c.force);
        c.reports = j.value("reports", c.reports);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("malformed run config: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

void write_run_config(const std::filesystem::path& path, const RunConfig& c) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json(c).dump(2) << "\n";
}

std::filesystem::path annotation_path(const DatasetSource& source) {
    const std::filesystem::path p(source.path);
    if (std::filesystem::is_directory(p) && source.format == "canonical-json") return p / "annotations.jsonl";
    return p;
}

DatasetDescriptor resolve_descriptor(const DatasetSource& source) {
    if (!source.descriptor.is_null()) return descriptor_from_json(source.descriptor);
    const auto ann = annotation_path(source);
    const auto dir = std::filesystem::is_directory(ann) ? ann : ann.parent_path();
    const auto file = dir / "descriptor.json";
    std::ifstream in(file);
    if (!in) throw UsageError("dataset " + source.path + " has no descriptor; pass one or add " + file.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(file.string() + ": " + e.what());
    }
    return descriptor_from_json(j);
}

TrainingSet load_dataset(const DatasetSource& source, const ModelConfig& model) {
    TrainingSet set;
    set.descriptor = resolve_descriptor(source);
    const auto records = import_annotations(annotation_path(source), source.format, set.descriptor);
    if (records.empty()) throw DataError("dataset " + source.path + " is empty");
    for (const auto& r : records) set.samples.push_back(load_sample(r, model.image_height, model.image_width));
    return set;
}

PointList read_points_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read points file " + path.string());
    PointList pts;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ss(line);
        double x = 0.0, y = 0.0;
        char comma = 0;
        if (!(ss >> x >> comma >> y) || comma != ',' || !std::isfinite(x) || !std::isfinite(y)) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 'x,y'");
        }
        pts.push_back({x, y});
    }
    if (pts.empty()) throw DataError(path.string() + ": no points");
    return pts;
}

void write_points_file(const std::filesystem::path& path, std::span<const Point2> points) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(17);
    for (const auto& p : points) out << p.x << "," << p.y << "\n";
}

}  // namespace promptface
