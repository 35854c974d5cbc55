#include "promptface/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

#include <Eigen/QR>

#include "promptface/errors.hpp"

namespace promptface {

PointList to_source_pixels(const Sample& sample, std::span<const Point2> crop_points) {
    const Box& b = sample.source_box;
    PointList out;
    out.reserve(crop_points.size());
    for (const auto& p : crop_points) out.push_back({b.x0 + p.x * b.width(), b.y0 + p.y * b.height()});
    return out;
}

LandmarkSet to_source_pixels(const Sample& sample, const LandmarkSet& crop_landmarks) {
    return LandmarkSet(to_source_pixels(sample, crop_landmarks.coords), crop_landmarks.valid);
}

std::vector<PointList> predict_samples(const Model& model, std::span<const Sample> samples,
                                       const PromptSource& source, int workers) {
    std::vector<PointList> out(samples.size());
    auto run = [&](std::size_t i) { out[i] = matrix_to_points(model.predict(samples[i].image, source).coords); };
    if (workers <= 1 || samples.size() <= 1) {
        for (std::size_t i = 0; i < samples.size(); ++i) run(i);
        return out;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = static_cast<std::size_t>(w); i < samples.size(); i += static_cast<std::size_t>(workers)) run(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

MetricReport score_predictions(std::span<const PointList> predicted, std::span<const Sample> samples,
                               const DatasetDescriptor& descriptor, NormMode norm, std::span<const double> alphas) {
    if (predicted.size() != samples.size()) throw UsageError("prediction and sample counts differ");
    std::vector<std::string> ids;
    std::vector<double> nmes;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        const LandmarkSet target = to_source_pixels(s, s.landmarks);
        const PointList pred = to_source_pixels(s, predicted[i]);
        const double d = normalization_distance(target, descriptor.norm, norm, s.source_box);
        ids.push_back(s.source);
        nmes.push_back(sample_nme(pred, target, d));
    }
    return make_report(descriptor.id, norm, std::move(ids), std::move(nmes), alphas);
}

MetricReport evaluate_dataset(const Model& model, const DatasetDescriptor& descriptor,
                              std::span<const Sample> samples, NormMode norm, std::span<const double> alphas,
                              const PointList* plane_points, int workers) {
    PromptSource source;
    if (plane_points) {
        source = PlanePrompts{*plane_points};
    } else if (model.has_dataset(descriptor.id)) {
        source = DatasetPrompts{descriptor.id, {}};
    } else {
        throw DataError("dataset '" + descriptor.id + "' is not registered in the checkpoint and no plane points were given");
    }
    const auto predicted = predict_samples(model, samples, source, workers);
    return score_predictions(predicted, samples, descriptor, norm, alphas);
}

std::vector<Prediction> zero_shot_predict(const Model& model, std::span<const Point2> plane_points,
                                          std::span<const Image> images) {
    const PlanePrompts source{PointList(plane_points.begin(), plane_points.end())};
    std::vector<Prediction> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(model.predict(img, source));
    return out;
}

TransferResult cross_scheme_transfer(const Model& model, const std::string& trained_id, const MeanShape& new_shape,
                                     std::span<const std::pair<int, int>> correspondences) {
    const PointList trained = model.effective_plane_points(trained_id);
    PointList src, dst;
    for (const auto& [n, t] : correspondences) {
        if (n < 0 || n >= static_cast<int>(new_shape.size()) || t < 0 || t >= static_cast<int>(trained.size())) {
            throw UsageError("correspondence (" + std::to_string(n) + ", " + std::to_string(t) + ") out of range");
        }
        src.push_back(new_shape.points[static_cast<std::size_t>(n)]);
        dst.push_back(trained[static_cast<std::size_t>(t)]);
    }
    TransferResult r{{}, fit_affine_alignment(src, dst)};
    for (const auto& p : new_shape.points) r.plane_points.push_back(r.fit.transform.apply(p));
    return r;
}

namespace {

Eigen::RowVectorXd flatten_with_bias(std::span<const Point2> pts) {
    Eigen::RowVectorXd row(2 * static_cast<Eigen::Index>(pts.size()) + 1);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        row(2 * static_cast<Eigen::Index>(i)) = pts[i].x;
        row(2 * static_cast<Eigen::Index>(i) + 1) = pts[i].y;
    }
    row(row.size() - 1) = 1.0;
    return row;
}

}  // namespace

LinearProbe LinearProbe::fit(std::span<const PointList> inputs, std::span<const PointList> labels) {
    if (inputs.empty() || inputs.size() != labels.size()) throw UsageError("probe inputs and labels differ in count");
    const auto n_in = static_cast<Eigen::Index>(inputs.front().size());
    const auto n_out = static_cast<Eigen::Index>(labels.front().size());
    const auto rows = static_cast<Eigen::Index>(inputs.size());
    Eigen::MatrixXd x(rows, 2 * n_in + 1);
    Eigen::MatrixXd y(rows, 2 * n_out);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& in = inputs[static_cast<std::size_t>(r)];
        const auto& lab = labels[static_cast<std::size_t>(r)];
        if (static_cast<Eigen::Index>(in.size()) != n_in || static_cast<Eigen::Index>(lab.size()) != n_out) {
            throw DataError("probe sample " + std::to_string(r) + " has inconsistent point counts");
        }
        x.row(r) = flatten_with_bias(in);
        for (Eigen::Index k = 0; k < n_out; ++k) {
            y(r, 2 * k) = lab[static_cast<std::size_t>(k)].x;
            y(r, 2 * k + 1) = lab[static_cast<std::size_t>(k)].y;
        }
    }
    if (rows < x.cols()) {
        throw NumericError("linear probe needs at least " + std::to_string(x.cols()) + " training samples, got " +
                           std::to_string(rows));
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < x.cols()) {
        throw NumericError("linear probe design is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                           std::to_string(x.cols()) + ")");
    }
    LinearProbe p;
    p.weights = qr.solve(y);
    return p;
}

PointList LinearProbe::apply(std::span<const Point2> input) const {
    const Eigen::RowVectorXd row = flatten_with_bias(input);
    if (row.size() != weights.rows()) throw UsageError("probe input has the wrong number of points");
    const Eigen::RowVectorXd out = row * weights;
    PointList pts;
    for (Eigen::Index k = 0; k + 1 < out.size(); k += 2) pts.push_back({out(k), out(k + 1)});
    return pts;
}

LinearProbeResult linear_probe_eval(const Model& model, const DatasetDescriptor& descriptor, int n_pre,
                                    std::span<const Sample> train, std::span<const Sample> test,
                                    std::uint64_t seed, int workers) {
    if (n_pre < 1) throw UsageError("n_pre must be positive");
    if (train.size() < static_cast<std::size_t>(2 * n_pre + 1)) {
        throw UsageError("linear probe with n_pre=" + std::to_string(n_pre) + " needs at least " +
                         std::to_string(2 * n_pre + 1) + " training samples, got " + std::to_string(train.size()));
    }
    if (test.empty()) throw UsageError("linear probe needs a non-empty test split");
    LinearProbeResult r;
    r.scratch = generate_scratch_shape(static_cast<std::size_t>(n_pre), kPlaneBox, seed);
    const PlanePrompts source{r.scratch};
    const auto train_pred = predict_samples(model, train, source, workers);
    std::vector<PointList> labels;
    for (const auto& s : train) {
        if (s.landmarks.valid_count() != s.landmarks.size()) {
            throw DataError("linear probe needs fully labeled training samples; " + s.source + " has missing points");
        }
        labels.push_back(s.landmarks.coords);
    }
    r.probe = LinearProbe::fit(train_pred, labels);
    const auto test_pred = predict_samples(model, test, source, workers);
    std::vector<PointList> mapped;
    for (const auto& p : test_pred) mapped.push_back(r.probe.apply(p));
    const double alpha = 0.1;
    r.report = score_predictions(mapped, test, descriptor, NormMode::InterOcular, std::span<const double>(&alpha, 1));
    return r;
}

std::string ProbeSummary::format() const {
    char buf[128];
    std::snprintf(buf, sizeof buf, "inter-ocular NME (N_pre=%d): %.2f ± %.2f", n_pre, mean, stddev);
    return buf;
}

ProbeSummary summarize_probe(int n_pre, std::vector<double> nme_percent) {
    if (nme_percent.empty()) throw UsageError("no probe runs to summarize");
    ProbeSummary s;
    s.n_pre = n_pre;
    s.nme_percent = std::move(nme_percent);
    const double n = static_cast<double>(s.nme_percent.size());
    for (double v : s.nme_percent) s.mean += v;
    s.mean /= n;
    double var = 0.0;
    for (double v : s.nme_percent) var += (v - s.mean) * (v - s.mean);
    s.stddev = s.nme_percent.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    return s;
}

nlohmann::json attention_to_json(const AttentionWeights& w) {
    nlohmann::json maps = nlohmann::json::array();
    for (int l = 0; l < w.layers; ++l) {
        for (int h = 0; h < w.heads; ++h) {
            const Matrix& m = w.at(l, h);
            maps.push_back({{"layer", l},
                            {"head", h},
                            {"rows", m.rows()},
                            {"cols", m.cols()},
                            {"data", std::vector<double>(m.data(), m.data() + m.size())}});
        }
    }
    return {{"layers", w.layers}, {"heads", w.heads}, {"maps", maps}};
}

void write_attention(const std::filesystem::path& path, const AttentionWeights& w) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << attention_to_json(w).dump() << "\n";
}

}  // namespace promptface
