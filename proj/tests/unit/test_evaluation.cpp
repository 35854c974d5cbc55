#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "promptface/errors.hpp"
#include "promptface/evaluation.hpp"
#include "promptface/run_config.hpp"
#include "promptface/synth.hpp"
#include "promptface/training.hpp"
#include "support.hpp"

using namespace promptface;
using namespace promptface::test;
namespace fs = std::filesystem;

namespace {

ModelConfig eval_model() {
    ModelConfig m;
    m.image_height = m.image_width = 32;
    m.patch_height = m.patch_width = 16;
    m.channels = 16;
    m.heads = 2;
    m.encoder_depth = 1;
    m.decoder_depth = 2;
    return m;
}

TrainingSet synth_set(SynthScheme scheme, int count, std::uint64_t seed) {
    auto ds = synth_generate(scheme, count, seed);
    return {ds.descriptor, std::move(ds.samples)};
}

// Untrained network with a non-degenerate head, so outputs depend on prompts.
Model generic_model(const TrainingSet& set, std::uint64_t seed) {
    Model model = prepare_model(eval_model(), std::span(&set, 1), seed);
    Rng rng(seed + 1);
    model.params()["head.fc2.weight"] = random_matrix(rng, 16, 2, 0.3);
    model.params()[Model::alignment_name(set.descriptor.id)] = random_matrix(rng, set.descriptor.landmark_count, 2, 0.05);
    return model;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("promptface_eval_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

double loop_auc(std::vector<double> e, double alpha) {
    double area = 0.0;
    for (double v : e) area += std::max(0.0, alpha - v);
    return area / (static_cast<double>(e.size()) * alpha);
}

}  // namespace

TEST_CASE("nme worked values") {
    const LandmarkSet target(PointList{{0.0, 0.0}, {1.0, 0.0}});
    const PointList same = target.coords;
    CHECK(sample_nme(same, target, 1.0) == 0.0);
    const PointList shifted{{0.03, 0.0}, {1.0, -0.03}};
    CHECK(sample_nme(shifted, target, 1.0) * 100.0 == doctest::Approx(3.0).epsilon(1e-12));

    NormalizationSpec none;
    const Box box{10.0, 20.0, 14.0, 29.0};
    CHECK(normalization_distance(target, none, NormMode::Box, box) == doctest::Approx(6.0));
    CHECK_THROWS_AS(normalization_distance(target, none, NormMode::InterOcular, box), DataError);
}

TEST_CASE("nme ignores invalid landmarks") {
    const LandmarkSet target(PointList{{0.0, 0.0}, {1.0, 0.0}, {5.0, 5.0}}, {true, true, false});
    const PointList pred{{0.0, 0.1}, {1.0, 0.1}, {-40.0, 7.0}};
    CHECK(sample_nme(pred, target, 2.0) == doctest::Approx(0.05));
}

TEST_CASE("nme is invariant under a common rigid motion") {
    const DatasetDescriptor d = descriptor_preset("synth-a");
    Rng rng(11);
    PointList truth, pred;
    for (int i = 0; i < d.landmark_count; ++i) {
        truth.push_back({rng.uniform(0, 30), rng.uniform(0, 30)});
        pred.push_back({truth.back().x + rng.normal(), truth.back().y + rng.normal()});
    }
    const double c = std::cos(0.7), s = std::sin(0.7);
    auto move = [&](PointList p) {
        for (auto& q : p) q = {c * q.x - s * q.y + 4.0, s * q.x + c * q.y - 9.0};
        return p;
    };
    const LandmarkSet t0(truth), t1(move(truth));
    const double e0 = sample_nme(pred, t0, normalization_distance(t0, d.norm, NormMode::InterOcular, {}));
    const double e1 = sample_nme(move(pred), t1, normalization_distance(t1, d.norm, NormMode::InterOcular, {}));
    CHECK(std::abs(e0 - e1) < 1e-12);
    const double p0 = sample_nme(pred, t0, normalization_distance(t0, d.norm, NormMode::InterPupil, {}));
    const double p1 = sample_nme(move(pred), t1, normalization_distance(t1, d.norm, NormMode::InterPupil, {}));
    CHECK(std::abs(p0 - p1) < 1e-12);
}

TEST_CASE("failure rate and auc worked values") {
    const std::vector<double> zeros(5, 0.0);
    CHECK(failure_rate(zeros, 0.1) == 0.0);
    CHECK(auc(CEDCurve(zeros), 0.1) == 1.0);

    const std::vector<double> worked{0.05, 0.2};
    CHECK(failure_rate(worked, 0.1) == 50.0);
    CHECK(auc(CEDCurve(worked), 0.1) == doctest::Approx(0.25).epsilon(1e-12));

    const std::vector<double> boundary(4, 0.1);
    CHECK(failure_rate(boundary, 0.1) == 0.0);

    const std::vector<double> above{0.11, 0.5, 0.2};
    CHECK(failure_rate(above, 0.1) == 100.0);
    CHECK(auc(CEDCurve(above), 0.1) == 0.0);
}

TEST_CASE("ced curve values and breakpoints") {
    const std::vector<double> e{0.3, 0.1, 0.1, 0.2};
    const CEDCurve f(e);
    CHECK(f(0.0) == 0.0);
    CHECK(f(0.1) == 0.5);
    CHECK(f(0.15) == 0.5);
    CHECK(f(0.3) == 1.0);
    const auto b = f.breakpoints();
    REQUIRE(b.size() == 3);
    CHECK(b[0] == std::pair{0.1, 0.5});
    CHECK(b[1] == std::pair{0.2, 0.75});
    CHECK(b[2] == std::pair{0.3, 1.0});
}

TEST_CASE("fr and auc depend only on the error multiset") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> e;
        for (int i = 0; i < 40; ++i) e.push_back(rng.uniform(0.0, 0.25));
        const double fr = failure_rate(e, 0.1), a = auc(CEDCurve(e), 0.1);
        rng.shuffle(e);
        CHECK(failure_rate(e, 0.1) == fr);
        CHECK(auc(CEDCurve(e), 0.1) == a);
        CHECK(a <= 1.0);
        CHECK(a >= 0.0);
        CHECK(std::abs(a - loop_auc(e, 0.1)) < 1e-12);
    }
}

TEST_CASE("report recomputation and serialization") {
    Rng rng(13);
    std::vector<double> e;
    std::vector<std::string> ids;
    for (int i = 0; i < 25; ++i) {
        e.push_back(rng.uniform(0.0, 0.2));
        ids.push_back("s" + std::to_string(i));
    }
    const std::vector<double> alphas{0.08, 0.1};
    const MetricReport r = make_report("synth-a", NormMode::InterOcular, ids, e, alphas);
    double mean = 0.0;
    for (double v : e) mean += v;
    CHECK(std::abs(r.nme_percent - 100.0 * mean / 25.0) < 1e-12);
    for (std::size_t k = 0; k < alphas.size(); ++k) {
        CHECK(r.fr_percent[k] == failure_rate(r.per_sample, alphas[k]));
        CHECK(r.auc[k] == auc(CEDCurve(r.per_sample), alphas[k]));
    }

    const fs::path dir = scratch_dir("report");
    write_report(dir / "report.json", r);
    const MetricReport back = read_report(dir / "report.json");
    CHECK(back.per_sample == r.per_sample);
    CHECK(back.sample_ids == r.sample_ids);
    CHECK(back.nme_percent == r.nme_percent);
    CHECK(back.auc == r.auc);
    CHECK(back.fr_percent == r.fr_percent);

    const CEDCurve curve(e);
    write_ced_csv(dir / "ced.csv", curve);
    CHECK(read_ced_csv(dir / "ced.csv") == curve.breakpoints());
}

TEST_CASE("oracle predictor scores zero error") {
    const TrainingSet set = synth_set(SynthScheme::A, 12, 14);
    std::vector<PointList> oracle;
    for (const auto& s : set.samples) oracle.push_back(s.landmarks.coords);
    const std::vector<double> alphas{0.1};
    const MetricReport r = score_predictions(oracle, set.samples, set.descriptor, NormMode::InterOcular, alphas);
    CHECK(r.nme_percent == 0.0);
    CHECK(r.auc[0] == 1.0);
    CHECK(r.fr_percent[0] == 0.0);
}

TEST_CASE("uniform noise matches its analytic expected error") {
    // E|u| for u uniform on the square [-1, 1]^2.
    const double mean_length = (std::sqrt(2.0) + std::log(1.0 + std::sqrt(2.0))) / 3.0;
    const double sigma = 0.4;
    const TrainingSet set = synth_set(SynthScheme::A, 400, 15);
    Rng rng(16);
    std::vector<PointList> noisy;
    double expected = 0.0;
    for (const auto& s : set.samples) {
        PointList p = s.landmarks.coords;
        for (auto& q : p) {
            q.x += rng.uniform(-sigma, sigma) / s.box_width();
            q.y += rng.uniform(-sigma, sigma) / s.box_height();
        }
        noisy.push_back(std::move(p));
        const LandmarkSet px = to_source_pixels(s, s.landmarks);
        expected += mean_length * sigma / normalization_distance(px, set.descriptor.norm, NormMode::InterOcular, {});
    }
    expected = 100.0 * expected / static_cast<double>(set.samples.size());
    const std::vector<double> alphas{0.1};
    const MetricReport r = score_predictions(noisy, set.samples, set.descriptor, NormMode::InterOcular, alphas);
    CHECK(std::abs(r.nme_percent - expected) <= 0.05 * expected);
}

TEST_CASE("zero-shot at the effective plane points equals the dataset path") {
    const TrainingSet set = synth_set(SynthScheme::A, 3, 17);
    const Model model = generic_model(set, 18);
    const PointList plane = model.effective_plane_points(set.descriptor.id);
    std::vector<Image> images;
    for (const auto& s : set.samples) images.push_back(s.image);
    const auto zs = zero_shot_predict(model, plane, images);
    const auto standard = predict_samples(model, set.samples, DatasetPrompts{set.descriptor.id, {}});
    REQUIRE(zs.size() == standard.size());
    for (std::size_t i = 0; i < zs.size(); ++i) {
        const PointList z = matrix_to_points(zs[i].coords);
        for (std::size_t k = 0; k < z.size(); ++k) {
            CHECK(z[k].x == standard[i][k].x);
            CHECK(z[k].y == standard[i][k].y);
        }
    }

    const std::vector<double> alphas{0.1};
    const MetricReport a = evaluate_dataset(model, set.descriptor, set.samples, NormMode::InterOcular, alphas);
    const MetricReport b =
        evaluate_dataset(model, set.descriptor, set.samples, NormMode::InterOcular, alphas, &plane);
    CHECK(a.per_sample == b.per_sample);

    // Sharding over workers does not change predictions.
    CHECK(predict_samples(model, set.samples, DatasetPrompts{set.descriptor.id, {}}, 2) == standard);
}

TEST_CASE("zero-shot accepts a single point") {
    const TrainingSet set = synth_set(SynthScheme::A, 1, 19);
    const Model model = generic_model(set, 20);
    const PointList one{{0.1, -0.2}};
    const auto p = zero_shot_predict(model, one, std::span(&set.samples[0].image, 1));
    REQUIRE(p.size() == 1);
    CHECK(p[0].coords.rows() == 1);
    CHECK(p[0].attention.layers == 2);
    CHECK(p[0].attention.at(0, 0).rows() == 1);
    const auto j = attention_to_json(p[0].attention);
    CHECK(j["maps"].size() == 4);
}

TEST_CASE("unregistered dataset without plane points is rejected") {
    const TrainingSet a = synth_set(SynthScheme::A, 1, 21);
    const TrainingSet b = synth_set(SynthScheme::B, 1, 22);
    const Model model = generic_model(a, 23);
    const std::vector<double> alphas{0.1};
    CHECK_THROWS_AS(evaluate_dataset(model, b.descriptor, b.samples, NormMode::InterOcular, alphas), DataError);
}

TEST_CASE("cross-scheme transfer on exact data") {
    const TrainingSet set = synth_set(SynthScheme::A, 2, 24);
    const Model model = generic_model(set, 25);
    const PointList trained = model.effective_plane_points(set.descriptor.id);
    std::vector<std::pair<int, int>> identity;
    for (int i = 0; i < static_cast<int>(trained.size()); ++i) identity.emplace_back(i, i);

    const MeanShape same{trained, "copy"};
    const TransferResult t = cross_scheme_transfer(model, set.descriptor.id, same, identity);
    for (std::size_t k = 0; k < trained.size(); ++k) {
        CHECK(std::abs(t.plane_points[k].x - trained[k].x) < 1e-12);
        CHECK(std::abs(t.plane_points[k].y - trained[k].y) < 1e-12);
    }

    MeanShape moved{trained, "moved"};
    for (auto& p : moved.points) p = {p.x + 3.5, p.y - 1.25};
    const TransferResult m = cross_scheme_transfer(model, set.descriptor.id, moved, identity);
    CHECK(m.fit.residual < 1e-20);
    for (std::size_t k = 0; k < trained.size(); ++k) {
        CHECK(std::abs(m.plane_points[k].x - trained[k].x) < 1e-12);
        CHECK(std::abs(m.plane_points[k].y - trained[k].y) < 1e-12);
    }
}

TEST_CASE("linear probe recovers identity and affine maps") {
    Rng rng(26);
    const int n_in = 4, n_out = 3, rows = 30;
    std::vector<PointList> inputs, same, mapped;
    Matrix w = random_matrix(rng, 2 * n_in + 1, 2 * n_out);
    for (int r = 0; r < rows; ++r) {
        PointList in;
        for (int k = 0; k < n_in; ++k) in.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
        Eigen::RowVectorXd x(2 * n_in + 1);
        for (int k = 0; k < n_in; ++k) {
            x(2 * k) = in[static_cast<std::size_t>(k)].x;
            x(2 * k + 1) = in[static_cast<std::size_t>(k)].y;
        }
        x(2 * n_in) = 1.0;
        const Eigen::RowVectorXd y = x * w;
        PointList out;
        for (int k = 0; k < n_out; ++k) out.push_back({y(2 * k), y(2 * k + 1)});
        inputs.push_back(in);
        same.push_back(in);
        mapped.push_back(out);
    }
    const LinearProbe id = LinearProbe::fit(inputs, same);
    const LinearProbe lin = LinearProbe::fit(inputs, mapped);
    CHECK((lin.weights - w).cwiseAbs().maxCoeff() < 1e-9);
    for (int r = 0; r < rows; ++r) {
        const PointList a = id.apply(inputs[static_cast<std::size_t>(r)]);
        const PointList b = lin.apply(inputs[static_cast<std::size_t>(r)]);
        for (int k = 0; k < n_in; ++k) CHECK(distance(a[static_cast<std::size_t>(k)], inputs[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)]) < 1e-9);
        for (int k = 0; k < n_out; ++k) CHECK(distance(b[static_cast<std::size_t>(k)], mapped[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)]) < 1e-9);
    }

    const std::vector<PointList> few(inputs.begin(), inputs.begin() + 5);
    const std::vector<PointList> few_labels(mapped.begin(), mapped.begin() + 5);
    CHECK_THROWS_AS(LinearProbe::fit(few, few_labels), NumericError);

    std::vector<PointList> flat = inputs;
    for (auto& in : flat) in[1] = in[0];
    CHECK_THROWS_AS(LinearProbe::fit(flat, mapped), NumericError);
}

TEST_CASE("linear probe evaluation end to end") {
    const TrainingSet train = synth_set(SynthScheme::A, 12, 27);
    const TrainingSet test = synth_set(SynthScheme::A, 5, 28);
    const Model model = generic_model(train, 29);
    const LinearProbeResult r = linear_probe_eval(model, train.descriptor, 3, train.samples, test.samples, 30);
    CHECK(r.scratch.size() == 3);
    CHECK(r.report.count() == 5);
    CHECK(std::isfinite(r.report.nme_percent));
    CHECK(r.probe.weights.rows() == 7);
    CHECK(r.probe.weights.cols() == 40);

    const std::span<const Sample> too_few(train.samples.data(), 6);
    CHECK_THROWS_AS(linear_probe_eval(model, train.descriptor, 3, too_few, test.samples, 30), UsageError);
}

TEST_CASE("probe summary over seeds") {
    const ProbeSummary s = summarize_probe(10, {1.0, 2.0, 3.0});
    CHECK(s.mean == doctest::Approx(2.0));
    CHECK(s.stddev == doctest::Approx(1.0));
    CHECK(s.format() == "inter-ocular NME (N_pre=10): 2.00 ± 1.00");
    CHECK_THROWS_AS(summarize_probe(10, {}), UsageError);
}

TEST_CASE("points file and run config round trip") {
    const fs::path dir = scratch_dir("config");
    const PointList pts{{0.25, -0.5}, {1.0 / 3.0, 0.1}};
    write_points_file(dir / "p.csv", pts);
    CHECK(read_points_file(dir / "p.csv") == pts);
    {
        std::ofstream f(dir / "q.csv");
        f << "# plane points\n\n0.5,0.25\n  -1,1\n";
    }
    const PointList q = read_points_file(dir / "q.csv");
    REQUIRE(q.size() == 2);
    CHECK(q[1].x == -1.0);
    {
        std::ofstream f(dir / "bad.csv");
        f << "0.5;0.25\n";
    }
    CHECK_THROWS_AS(read_points_file(dir / "bad.csv"), DataError);

    RunConfig c;
    c.command = "train";
    c.out = (dir / "run").string();
    c.seed = 99;
    c.model = eval_model();
    c.train.epochs = 7;
    c.train.milestones = {5};
    c.alphas = {0.1};
    c.datasets.push_back({"data", "canonical-json", nullptr});
    write_run_config(dir / "cfg.json", c);
    const RunConfig back = load_run_config(dir / "cfg.json");
    CHECK(back.seed == 99);
    CHECK(back.model.patch_height == 16);
    CHECK(back.train.epochs == 7);
    CHECK(back.train.milestones == std::vector<int>{5});
    CHECK(back.alphas == std::vector<double>{0.1});
    REQUIRE(back.datasets.size() == 1);
    CHECK(back.datasets[0].path == "data");

    const RunConfig partial = run_config_from_json({{"seed", 3}});
    CHECK(partial.seed == 3);
    CHECK(partial.train.batch_size == TrainConfig{}.batch_size);
}
