#include "promptface/checkpoint.hpp"

#include <fstream>

#include "promptface/errors.hpp"

namespace promptface {

nlohmann::json tensor_to_json(const Matrix& m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix tensor_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw DataError("tensor payload does not match its shape");
    }
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
    nlohmann::json j;
    j["format"] = "promptface-checkpoint";
    j["version"] = ckpt.version;
    j["seed"] = ckpt.seed;
    j["model_config"] = to_json(ckpt.model.config());
    nlohmann::json datasets = nlohmann::json::array();
    for (const auto& d : ckpt.model.datasets()) {
        datasets.push_back({{"descriptor", to_json(d.descriptor)}, {"mean_shape", to_json(d.mean_shape)}});
    }
    j["datasets"] = datasets;
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, tensor] : ckpt.model.params()) params[name] = tensor_to_json(tensor);
    j["params"] = params;
    return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (!j.contains("version")) throw DataError("checkpoint has no version field");
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw DataError("unsupported checkpoint version " + std::to_string(version));
        }
        Checkpoint ckpt;
        ckpt.version = version;
        ckpt.seed = j.at("seed").get<std::uint64_t>();
        const ModelConfig config = model_config_from_json(j.at("model_config"));
        std::vector<RegisteredDataset> datasets;
        for (const auto& d : j.at("datasets")) {
            datasets.push_back({descriptor_from_json(d.at("descriptor")), mean_shape_from_json(d.at("mean_shape"))});
        }
        TensorMap params;
        for (const auto& [name, tensor] : j.at("params").items()) params[name] = tensor_from_json(tensor);
        ckpt.model = Model::assemble(config, std::move(params), std::move(datasets));
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << checkpoint_to_json(ckpt).dump();
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace promptface
