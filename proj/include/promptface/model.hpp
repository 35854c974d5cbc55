#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "promptface/autodiff.hpp"
#include "promptface/dataset.hpp"
#include "promptface/geometry.hpp"
#include "promptface/image.hpp"
#include "promptface/prompt_codec.hpp"

namespace promptface {

struct ModelConfig {
    int image_height = 32;
    int image_width = 32;
    int patch_height = 8;
    int patch_width = 8;
    int channels = 32;
    int heads = 4;
    int encoder_depth = 2;
    int decoder_depth = 6;
    int ffn_ratio = 4;
    double tau = 10000.0;

    int patch_rows() const { return image_height / patch_height; }
    int patch_cols() const { return image_width / patch_width; }
    int patch_count() const { return patch_rows() * patch_cols(); }
    int patch_dim() const { return patch_height * patch_width * 3; }
    int head_channels() const { return channels / heads; }
    PromptCodecConfig codec() const { return {channels, tau}; }

    void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Named parameter tensors. Names are stable and double as checkpoint keys.
using TensorMap = std::map<std::string, Matrix>;

/// Cross-attention maps, one (queries x patches) matrix per decoder layer and head.
struct AttentionWeights {
    int layers = 0;
    int heads = 0;
    std::vector<Matrix> maps;

    const Matrix& at(int layer, int head) const { return maps[static_cast<std::size_t>(layer * heads + head)]; }
};

/// Fresh parameters for the network (no alignment embeddings).
TensorMap init_params(const ModelConfig& config, std::uint64_t seed);

/// Multiply-add flops (2 per MAC) of one decoder forward with `queries` prompts.
std::uint64_t decoder_flops(const ModelConfig& config, int queries);

/// Records one forward pass of the network on a Tape. Parameters are bound
/// lazily; with a gradient map, backward() accumulates into it.
class Network {
public:
    Network(const ModelConfig& config, const TensorMap& params, Tape& tape, TensorMap* grads = nullptr);

    Var param(const std::string& name);
    Tape& tape() { return tape_; }

    /// L x C patch embeddings (projection + positional embeddings).
    Var patchify(const Image& image);
    /// Pre-norm self-attention stack over the patch sequence.
    Var encoder(Var x);
    Var msa_block(int layer, Var t, Var prompts);
    Var mca_block(int layer, Var t, Var prompts, Var features, Var positions, std::vector<Matrix>* maps);
    Var ffn_block(const std::string& norm_prefix, const std::string& prefix, Var t);
    /// Queries start at zero; each layer runs MSA, MCA and FFN with residuals.
    Var decoder(Var prompts, Var features, AttentionWeights* attention);
    /// N x 2 crop-relative coordinates in [0, 1].
    Var head(Var t);

    /// Structure prompts for plane points given as an N x 2 node.
    Var prompts(Var plane_points);

private:
    Var linear(Var x, const std::string& prefix);  // x W + b
    Var norm(Var x, const std::string& prefix);

    const ModelConfig& config_;
    const TensorMap& params_;
    Tape& tape_;
    TensorMap* grads_;
    std::map<std::string, Var> bound_;
};

Matrix points_to_matrix(std::span<const Point2> points);
PointList matrix_to_points(const Matrix& m);

struct RegisteredDataset {
    DatasetDescriptor descriptor;
    MeanShape mean_shape;
};

/// Prompts for a registered dataset: mean shape plus alignment embedding, at
/// the given indices (all when empty).
struct DatasetPrompts {
    std::string dataset_id;
    std::vector<int> indices;
};

/// Raw plane points used verbatim (zero-shot queries).
struct PlanePrompts {
    PointList points;
};

using PromptSource = std::variant<DatasetPrompts, PlanePrompts>;

struct Prediction {
    Matrix coords;  // N x 2, crop-relative
    AttentionWeights attention;
};

class Model {
public:
    Model() = default;
    Model(ModelConfig config, std::uint64_t seed);

    /// Rebuilds a model from stored parts; throws DataError when a tensor is
    /// missing or mis-shaped.
    static Model assemble(ModelConfig config, TensorMap params, std::vector<RegisteredDataset> datasets);

    const ModelConfig& config() const { return config_; }
    TensorMap& params() { return params_; }
    const TensorMap& params() const { return params_; }

    /// Adds a dataset with a zero alignment embedding "align.<id>". Throws if
    /// the id is taken or the mean shape size disagrees with the descriptor.
    void register_dataset(const DatasetDescriptor& descriptor, const MeanShape& mean_shape);
    bool has_dataset(const std::string& id) const;
    const RegisteredDataset& dataset(const std::string& id) const;
    const std::vector<RegisteredDataset>& datasets() const { return datasets_; }

    static std::string alignment_name(const std::string& id) { return "align." + id; }

    /// Mean shape + alignment offsets at `indices` (all when empty).
    PointList effective_plane_points(const std::string& id, std::span<const int> indices = {}) const;

    /// Plane points of a prompt source, validated.
    Var build_prompt_points(Network& net, const PromptSource& source) const;

    Prediction predict(const Image& image, const PromptSource& source) const;

private:
    ModelConfig config_;
    TensorMap params_;
    std::vector<RegisteredDataset> datasets_;
};

}  // namespace promptface
