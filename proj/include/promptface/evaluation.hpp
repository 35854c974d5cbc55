#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "promptface/dataset.hpp"
#include "promptface/metrics.hpp"
#include "promptface/model.hpp"

namespace promptface {

/// Crop-relative points mapped into the sample's source pixels.
PointList to_source_pixels(const Sample& sample, std::span<const Point2> crop_points);
LandmarkSet to_source_pixels(const Sample& sample, const LandmarkSet& crop_landmarks);

/// Full-prompt inference on every sample, in order. Samples are sharded over
/// `workers` threads; results do not depend on the worker count.
std::vector<PointList> predict_samples(const Model& model, std::span<const Sample> samples,
                                       const PromptSource& source, int workers = 1);

/// Per-sample NMEs in source pixels, then the report.
MetricReport score_predictions(std::span<const PointList> predicted, std::span<const Sample> samples,
                               const DatasetDescriptor& descriptor, NormMode norm, std::span<const double> alphas);

/// Evaluates a registered dataset with its mean shape plus alignment, or any
/// dataset at `plane_points` when given. An unregistered dataset without
/// plane points is a DataError.
MetricReport evaluate_dataset(const Model& model, const DatasetDescriptor& descriptor,
                              std::span<const Sample> samples, NormMode norm, std::span<const double> alphas,
                              const PointList* plane_points = nullptr, int workers = 1);

/// Landmarks at arbitrary plane points, with the cross-attention maps.
std::vector<Prediction> zero_shot_predict(const Model& model, std::span<const Point2> plane_points,
                                          std::span<const Image> images);

struct TransferResult {
    PointList plane_points;
    AffineFit fit;
};

/// Maps `new_shape` onto the plane of registered dataset `trained_id` through
/// the affine fit of the corresponding pairs (new index, trained index).
TransferResult cross_scheme_transfer(const Model& model, const std::string& trained_id, const MeanShape& new_shape,
                                     std::span<const std::pair<int, int>> correspondences);

/// Affine least-squares map between flattened point sets, features with a
/// trailing bias column.
struct LinearProbe {
    Matrix weights;  // (2 * n_in + 1) x (2 * n_out)

    static LinearProbe fit(std::span<const PointList> inputs, std::span<const PointList> labels);
    PointList apply(std::span<const Point2> input) const;
};

struct LinearProbeResult {
    LinearProbe probe;
    PointList scratch;
    MetricReport report;  // inter-ocular, test split
};

/// Predicts at an `n_pre`-point scratch shape, fits the probe on the train
/// split's labels and scores the test split. The train split needs at least
/// 2 * n_pre + 1 fully labeled samples.
LinearProbeResult linear_probe_eval(const Model& model, const DatasetDescriptor& descriptor, int n_pre,
                                    std::span<const Sample> train, std::span<const Sample> test,
                                    std::uint64_t seed, int workers = 1);

struct ProbeSummary {
    int n_pre = 0;
    std::vector<double> nme_percent;
    double mean = 0.0;
    double stddev = 0.0;

    /// "inter-ocular NME (N_pre=10): 5.12 ± 0.34"
    std::string format() const;
};

ProbeSummary summarize_probe(int n_pre, std::vector<double> nme_percent);

/// Layer/head-indexed cross-attention maps as JSON.
nlohmann::json attention_to_json(const AttentionWeights& w);
void write_attention(const std::filesystem::path& path, const AttentionWeights& w);

}  // namespace promptface
