#include "promptface/model.hpp"

#include <cmath>

#include "promptface/errors.hpp"
#include "promptface/rng.hpp"

namespace promptface {

void ModelConfig::validate() const {
    auto fail = [](const std::string& m) { throw UsageError("invalid model config: " + m); };
    if (image_height <= 0 || image_width <= 0 || patch_height <= 0 || patch_width <= 0) {
        fail("image and patch sizes must be positive");
    }
    if (image_height % patch_height != 0 || image_width % patch_width != 0) {
        fail("image size must be a multiple of the patch size");
    }
    if (heads <= 0 || channels <= 0 || channels % heads != 0) fail("channels must divide evenly into heads");
    if (channels % 4 != 0) fail("channels must be a multiple of 4");
    if (encoder_depth < 0) fail("encoder depth must be non-negative");
    if (decoder_depth < 1) fail("decoder depth must be at least 1");
    if (ffn_ratio < 1) fail("ffn ratio must be at least 1");
    codec().validate();
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"image_height", c.image_height}, {"image_width", c.image_width},
            {"patch_height", c.patch_height}, {"patch_width", c.patch_width},
            {"channels", c.channels},         {"heads", c.heads},
            {"encoder_depth", c.encoder_depth}, {"decoder_depth", c.decoder_depth},
            {"ffn_ratio", c.ffn_ratio},       {"tau", c.tau}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.image_height = j.value("image_height", c.image_height);
        c.image_width = j.value("image_width", c.image_width);
        c.patch_height = j.value("patch_height", c.patch_height);
        c.patch_width = j.value("patch_width", c.patch_width);
        c.channels = j.value("channels", c.channels);
        c.heads = j.value("heads", c.heads);
        c.encoder_depth = j.value("encoder_depth", c.encoder_depth);
        c.decoder_depth = j.value("decoder_depth", c.decoder_depth);
        c.ffn_ratio = j.value("ffn_ratio", c.ffn_ratio);
        c.tau = j.value("tau", c.tau);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("malformed model config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

Matrix glorot(Rng& rng, int fan_in, int fan_out) {
    const double sd = std::sqrt(2.0 / (fan_in + fan_out));
    Matrix m(fan_in, fan_out);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * rng.normal();
    return m;
}

Matrix normal(Rng& rng, int rows, int cols, double sd) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * rng.normal();
    return m;
}

void add_norm(TensorMap& p, const std::string& prefix, int c) {
    p[prefix + ".gamma"] = Matrix::Ones(1, c);
    p[prefix + ".beta"] = Matrix::Zero(1, c);
}

void add_linear(TensorMap& p, Rng& rng, const std::string& prefix, int in, int out) {
    p[prefix + ".weight"] = glorot(rng, in, out);
    p[prefix + ".bias"] = Matrix::Zero(1, out);
}

std::string layer_prefix(const char* stack, int i) { return std::string(stack) + "." + std::to_string(i); }

std::string head_name(const std::string& block, const char* w, int z) {
    return block + "." + w + ".h" + std::to_string(z);
}

}  // namespace

TensorMap init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const int c = config.channels;
    const int ch = config.head_channels();
    const int hidden = c * config.ffn_ratio;
    TensorMap p;
    add_linear(p, rng, "patch", config.patch_dim(), c);
    p["pos_embed"] = normal(rng, config.patch_count(), c, 0.02);
    for (int i = 0; i < config.encoder_depth; ++i) {
        const std::string pre = layer_prefix("encoder", i);
        add_norm(p, pre + ".norm1", c);
        for (const char* w : {"q", "k", "v", "o"}) add_linear(p, rng, pre + ".attn." + w, c, c);
        add_norm(p, pre + ".norm2", c);
        add_linear(p, rng, pre + ".ffn.fc1", c, hidden);
        add_linear(p, rng, pre + ".ffn.fc2", hidden, c);
    }
    for (int i = 0; i < config.decoder_depth; ++i) {
        const std::string pre = layer_prefix("decoder", i);
        for (const char* block : {"msa", "mca"}) {
            const std::string b = pre + "." + block;
            add_norm(p, b + ".norm", c);
            for (int z = 0; z < config.heads; ++z) {
                for (const char* w : {"wq", "wk", "wv"}) p[head_name(b, w, z)] = glorot(rng, ch, ch);
            }
            p[b + ".wo"] = glorot(rng, c, c);
        }
        add_norm(p, pre + ".ffn.norm", c);
        add_linear(p, rng, pre + ".ffn.fc1", c, hidden);
        add_linear(p, rng, pre + ".ffn.fc2", hidden, c);
    }
    add_linear(p, rng, "head.fc1", c, c);
    add_linear(p, rng, "head.fc2", c, 2);
    // Every prompt starts at the crop center; early steps cannot saturate the sigmoid.
    p["head.fc2.weight"].setZero();
    return p;
}

std::uint64_t decoder_flops(const ModelConfig& config, int queries) {
    const std::uint64_t n = static_cast<std::uint64_t>(queries);
    const std::uint64_t c = config.channels;
    const std::uint64_t ch = config.head_channels();
    const std::uint64_t l = config.patch_count();
    const std::uint64_t r = config.ffn_ratio;
    const std::uint64_t msa = 6 * n * c * ch + 4 * n * n * c + 2 * n * c * c;
    const std::uint64_t mca = 2 * n * c * ch + 4 * l * c * ch + 4 * n * l * c + 2 * n * c * c;
    const std::uint64_t ffn = 4 * r * n * c * c;
    return static_cast<std::uint64_t>(config.decoder_depth) * (msa + mca + ffn);
}

Network::Network(const ModelConfig& config, const TensorMap& params, Tape& tape, TensorMap* grads)
    : config_(config), params_(params), tape_(tape), grads_(grads) {}

Var Network::param(const std::string& name) {
    if (auto it = bound_.find(name); it != bound_.end()) return it->second;
    const auto pit = params_.find(name);
    if (pit == params_.end()) throw UsageError("missing parameter '" + name + "'");
    Matrix* sink = nullptr;
    if (grads_) sink = &(*grads_)[name];
    const Var v = tape_.parameter(pit->second, sink);
    bound_.emplace(name, v);
    return v;
}

Var Network::linear(Var x, const std::string& prefix) {
    return add_row(matmul(x, param(prefix + ".weight")), param(prefix + ".bias"));
}

Var Network::norm(Var x, const std::string& prefix) {
    return layer_norm(x, param(prefix + ".gamma"), param(prefix + ".beta"));
}

Var Network::patchify(const Image& image) {
    if (image.height != config_.image_height || image.width != config_.image_width) {
        throw DataError("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                        ", model expects " + std::to_string(config_.image_height) + "x" +
                        std::to_string(config_.image_width));
    }
    const int ph = config_.patch_height, pw = config_.patch_width;
    Matrix patches(config_.patch_count(), config_.patch_dim());
    for (int r = 0; r < config_.patch_rows(); ++r) {
        for (int q = 0; q < config_.patch_cols(); ++q) {
            const int row = r * config_.patch_cols() + q;
            int col = 0;
            for (int y = 0; y < ph; ++y) {
                for (int x = 0; x < pw; ++x) {
                    for (int ch = 0; ch < 3; ++ch) patches(row, col++) = image.at(r * ph + y, q * pw + x, ch);
                }
            }
        }
    }
    const Var x = tape_.constant(std::move(patches));
    return add(linear(x, "patch"), param("pos_embed"));
}

Var Network::encoder(Var x) {
    const int ch = config_.head_channels();
    for (int i = 0; i < config_.encoder_depth; ++i) {
        const std::string pre = layer_prefix("encoder", i);
        const Var h = norm(x, pre + ".norm1");
        const Var q = linear(h, pre + ".attn.q");
        const Var k = linear(h, pre + ".attn.k");
        const Var v = linear(h, pre + ".attn.v");
        std::vector<Var> heads;
        for (int z = 0; z < config_.heads; ++z) {
            heads.push_back(attention(slice_cols(q, z * ch, ch), slice_cols(k, z * ch, ch), slice_cols(v, z * ch, ch)));
        }
        x = add(x, linear(concat_cols(heads), pre + ".attn.o"));
        x = ffn_block(pre + ".norm2", pre + ".ffn", x);
        const Matrix& out = x.value();
        if (!out.allFinite()) {
            throw NumericError("non-finite activation in encoder layer " + std::to_string(i));
        }
    }
    return x;
}

Var Network::ffn_block(const std::string& norm_prefix, const std::string& prefix, Var t) {
    const Var h = gelu(linear(norm(t, norm_prefix), prefix + ".fc1"));
    return add(t, linear(h, prefix + ".fc2"));
}

Var Network::msa_block(int layer, Var t, Var prompts) {
    const std::string b = layer_prefix("decoder", layer) + ".msa";
    const int ch = config_.head_channels();
    const Var h = norm(t, b + ".norm");
    std::vector<Var> heads;
    for (int z = 0; z < config_.heads; ++z) {
        const Var tz = slice_cols(h, z * ch, ch);
        const Var qk_in = add(tz, slice_cols(prompts, z * ch, ch));
        const Var k = matmul(qk_in, param(head_name(b, "wk", z)));
        const Var q = matmul(qk_in, param(head_name(b, "wq", z)));
        const Var v = matmul(tz, param(head_name(b, "wv", z)));
        heads.push_back(attention(q, k, v));
    }
    return add(t, matmul(concat_cols(heads), param(b + ".wo")));
}

Var Network::mca_block(int layer, Var t, Var prompts, Var features, Var positions, std::vector<Matrix>* maps) {
    if (features.rows() != positions.rows()) {
        throw UsageError("cross attention: feature and positional embedding lengths differ");
    }
    const std::string b = layer_prefix("decoder", layer) + ".mca";
    const int ch = config_.head_channels();
    const Var h = norm(t, b + ".norm");
    std::vector<Var> heads;
    for (int z = 0; z < config_.heads; ++z) {
        const Var fz = slice_cols(features, z * ch, ch);
        const Var k = matmul(add(fz, slice_cols(positions, z * ch, ch)), param(head_name(b, "wk", z)));
        const Var q = matmul(add(slice_cols(h, z * ch, ch), slice_cols(prompts, z * ch, ch)),
                             param(head_name(b, "wq", z)));
        const Var v = matmul(fz, param(head_name(b, "wv", z)));
        Matrix* map = nullptr;
        if (maps) map = &maps->emplace_back();
        heads.push_back(attention(q, k, v, map));
    }
    return add(t, matmul(concat_cols(heads), param(b + ".wo")));
}

Var Network::decoder(Var prompts, Var features, AttentionWeights* attention) {
    if (prompts.cols() != config_.channels) throw UsageError("prompt width differs from model channels");
    if (attention) {
        attention->layers = config_.decoder_depth;
        attention->heads = config_.heads;
        attention->maps.clear();
    }
    const Var positions = param("pos_embed");
    Var t = tape_.constant(Matrix::Zero(prompts.rows(), config_.channels));
    for (int i = 0; i < config_.decoder_depth; ++i) {
        t = msa_block(i, t, prompts);
        t = mca_block(i, t, prompts, features, positions, attention ? &attention->maps : nullptr);
        t = ffn_block(layer_prefix("decoder", i) + ".ffn.norm", layer_prefix("decoder", i) + ".ffn", t);
    }
    return t;
}

Var Network::head(Var t) {
    return sigmoid(linear(gelu(linear(t, "head.fc1")), "head.fc2"));
}

Var Network::prompts(Var plane_points) { return encode_prompts(plane_points, config_.codec()); }

Matrix points_to_matrix(std::span<const Point2> points) {
    Matrix m(static_cast<Eigen::Index>(points.size()), 2);
    for (std::size_t i = 0; i < points.size(); ++i) {
        m(static_cast<Eigen::Index>(i), 0) = points[i].x;
        m(static_cast<Eigen::Index>(i), 1) = points[i].y;
    }
    return m;
}

PointList matrix_to_points(const Matrix& m) {
    PointList out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = {m(i, 0), m(i, 1)};
    return out;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(config), params_(init_params(config, seed)) {}

Model Model::assemble(ModelConfig config, TensorMap params, std::vector<RegisteredDataset> datasets) {
    config.validate();
    const TensorMap reference = init_params(config, 0);
    for (const auto& [name, tensor] : reference) {
        const auto it = params.find(name);
        if (it == params.end()) throw DataError("checkpoint lacks parameter '" + name + "'");
        if (it->second.rows() != tensor.rows() || it->second.cols() != tensor.cols()) {
            throw DataError("checkpoint parameter '" + name + "' has the wrong shape");
        }
    }
    Model m;
    m.config_ = config;
    for (auto& d : datasets) {
        m.register_dataset(d.descriptor, d.mean_shape);
        const auto it = params.find(alignment_name(d.descriptor.id));
        if (it == params.end()) throw DataError("checkpoint lacks alignment for '" + d.descriptor.id + "'");
        if (it->second.rows() != d.descriptor.landmark_count || it->second.cols() != 2) {
            throw DataError("alignment embedding of '" + d.descriptor.id + "' has the wrong shape");
        }
    }
    for (auto& [name, tensor] : params) m.params_[name] = std::move(tensor);
    return m;
}

void Model::register_dataset(const DatasetDescriptor& descriptor, const MeanShape& mean_shape) {
    descriptor.validate();
    if (has_dataset(descriptor.id)) throw DataError("dataset '" + descriptor.id + "' is already registered");
    if (static_cast<int>(mean_shape.size()) != descriptor.landmark_count) {
        throw DataError("mean shape of '" + descriptor.id + "' has " + std::to_string(mean_shape.size()) +
                        " points, descriptor declares " + std::to_string(descriptor.landmark_count));
    }
    datasets_.push_back({descriptor, mean_shape});
    datasets_.back().mean_shape.dataset_id = descriptor.id;
    params_[alignment_name(descriptor.id)] = Matrix::Zero(descriptor.landmark_count, 2);
}

bool Model::has_dataset(const std::string& id) const {
    for (const auto& d : datasets_) {
        if (d.descriptor.id == id) return true;
    }
    return false;
}

const RegisteredDataset& Model::dataset(const std::string& id) const {
    for (const auto& d : datasets_) {
        if (d.descriptor.id == id) return d;
    }
    throw DataError("unknown dataset '" + id + "'");
}

namespace {

std::vector<int> resolve_indices(std::span<const int> indices, int n) {
    std::vector<int> idx(indices.begin(), indices.end());
    if (idx.empty()) {
        idx.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[i] = i;
    }
    for (int i : idx) {
        if (i < 0 || i >= n) throw DataError("landmark index " + std::to_string(i) + " out of range");
    }
    return idx;
}

}  // namespace

PointList Model::effective_plane_points(const std::string& id, std::span<const int> indices) const {
    const auto& d = dataset(id);
    const auto idx = resolve_indices(indices, d.descriptor.landmark_count);
    const Matrix& align = params_.at(alignment_name(id));
    PointList out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back({d.mean_shape.points[i].x + align(i, 0), d.mean_shape.points[i].y + align(i, 1)});
    return out;
}

Var Model::build_prompt_points(Network& net, const PromptSource& source) const {
    if (const auto* plane = std::get_if<PlanePrompts>(&source)) {
        if (plane->points.empty()) throw UsageError("at least one plane point is required");
        for (const auto& p : plane->points) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DataError("plane point is not finite");
        }
        return net.tape().constant(points_to_matrix(plane->points));
    }
    const auto& dp = std::get<DatasetPrompts>(source);
    const auto& d = dataset(dp.dataset_id);
    const auto idx = resolve_indices(dp.indices, d.descriptor.landmark_count);
    PointList mean;
    mean.reserve(idx.size());
    for (int i : idx) mean.push_back(d.mean_shape.points[i]);
    const Var offsets = gather_rows(net.param(alignment_name(dp.dataset_id)), idx);
    return add(net.tape().constant(points_to_matrix(mean)), offsets);
}

Prediction Model::predict(const Image& image, const PromptSource& source) const {
    Tape tape;
    Network net(config_, params_, tape);
    const Var points = build_prompt_points(net, source);
    const Var features = net.encoder(net.patchify(image));
    Prediction out;
    const Var t = net.decoder(net.prompts(points), features, &out.attention);
    out.coords = net.head(t).value();
    return out;
}

}  // namespace promptface
