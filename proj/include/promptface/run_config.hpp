#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptface/dataset.hpp"
#include "promptface/model.hpp"
#include "promptface/training.hpp"

namespace promptface {

/// One dataset on disk. `descriptor` is either {"preset": name, "id": ...} or
/// a full descriptor; when null, a descriptor.json next to the annotations is used.
struct DatasetSource {
    std::string path;
    std::string format = "canonical-json";
    nlohmann::json descriptor;
};

nlohmann::json to_json(const DatasetSource& d);
DatasetSource dataset_source_from_json(const nlohmann::json& j);

/// Everything a command needs. A config file fills it first, command-line
/// flags override single fields, and the merged result is echoed to the
/// output directory.
struct RunConfig {
    std::string command;
    std::string out;
    std::uint64_t seed = 0;
    int workers = 1;
    ModelConfig model;
    TrainConfig train;
    std::vector<DatasetSource> datasets;
    std::vector<double> alphas{0.08, 0.1};
    NormMode norm = NormMode::InterOcular;
    std::string checkpoint;
    std::string points_file;
    int n_pre = 0;
    int shots = 0;
    int checkpoint_every = 0;
    std::string scheme = "A";
    int count = 0;
    bool force = false;
    std::vector<std::string> reports;

    void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Missing keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void write_run_config(const std::filesystem::path& path, const RunConfig& c);

/// Annotation file of a dataset source: the path itself, or annotations.jsonl
/// inside it when it is a directory.
std::filesystem::path annotation_path(const DatasetSource& source);
DatasetDescriptor resolve_descriptor(const DatasetSource& source);

/// Imports and crops every record to the model's input size.
TrainingSet load_dataset(const DatasetSource& source, const ModelConfig& model);

/// Plane points as CSV "x,y" per line; blank lines and '#' comments skipped.
PointList read_points_file(const std::filesystem::path& path);
void write_points_file(const std::filesystem::path& path, std::span<const Point2> points);

}  // namespace promptface
