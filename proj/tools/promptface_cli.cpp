#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "plots.hpp"
#include "promptface/checkpoint.hpp"
#include "promptface/errors.hpp"
#include "promptface/evaluation.hpp"
#include "promptface/image.hpp"
#include "promptface/run_config.hpp"
#include "promptface/synth.hpp"
#include "promptface/training.hpp"

namespace fs = std::filesystem;
using namespace promptface;

namespace {

struct FlagState {
    std::vector<std::string> datasets;
    std::string format;
    std::string preset;
    std::string norm;
    std::vector<double> alphas;
    int image_size = 0;
    int patch = 0;
};

void write_json(const fs::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

fs::path prepare_out(const RunConfig& cfg, bool must_be_empty) {
    if (cfg.out.empty()) throw UsageError("--out is required");
    const fs::path out(cfg.out);
    if (must_be_empty && fs::exists(out) && !fs::is_empty(out) && !cfg.force) {
        throw UsageError("output directory " + out.string() + " is not empty (use --force)");
    }
    fs::create_directories(out);
    write_run_config(out / "resolved_config.json", cfg);
    return out;
}

Model load_model(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) throw UsageError("--checkpoint is required");
    return load_checkpoint(cfg.checkpoint).model;
}

const DatasetSource& first_dataset(const RunConfig& cfg) {
    if (cfg.datasets.empty()) throw UsageError("--dataset is required");
    return cfg.datasets.front();
}

nlohmann::json predictions_to_json(const std::vector<Sample>& samples, const std::vector<PointList>& predicted) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        nlohmann::json crop = nlohmann::json::array(), px = nlohmann::json::array();
        for (const auto& p : predicted[i]) crop.push_back({p.x, p.y});
        for (const auto& p : to_source_pixels(samples[i], predicted[i])) px.push_back({p.x, p.y});
        arr.push_back({{"sample", samples[i].source}, {"crop", crop}, {"source_pixels", px}});
    }
    return arr;
}

void write_metrics(const fs::path& out, const MetricReport& report) {
    write_report(out / "report.json", report);
    write_ced_csv(out / "ced.csv", CEDCurve(report.per_sample));
}

int cmd_synth(const RunConfig& cfg) {
    if (cfg.count < 1) throw UsageError("--count must be positive");
    const SynthScheme scheme = parse_scheme(cfg.scheme);
    const fs::path out = prepare_out(cfg, true);
    const auto ds = synth_generate(scheme, cfg.count, cfg.seed, cfg.model.image_height, cfg.model.image_width);
    fs::create_directories(out / "images");
    std::vector<AnnotationRecord> records;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.png", i);
        const fs::path img = out / "images" / name;
        write_image(img, s.image);
        AnnotationRecord r;
        r.image_path = img;
        r.dataset_id = ds.descriptor.id;
        r.bbox = {0.0, 0.0, static_cast<double>(s.image.width), static_cast<double>(s.image.height)};
        PointList px;
        for (const auto& p : s.landmarks.coords) px.push_back({p.x * s.image.width, p.y * s.image.height});
        r.points = LandmarkSet(std::move(px), s.landmarks.valid);
        records.push_back(std::move(r));
    }
    export_canonical(out / "annotations.jsonl", records);
    write_json(out / "descriptor.json", to_json(ds.descriptor));
    std::cout << "wrote " << records.size() << " samples (" << ds.descriptor.id << ") to " << out.string() << "\n";
    return 0;
}

std::vector<TrainingSet> load_sets(const RunConfig& cfg) {
    if (cfg.datasets.empty()) throw UsageError("--dataset is required");
    std::vector<TrainingSet> sets;
    for (const auto& d : cfg.datasets) sets.push_back(load_dataset(d, cfg.model));
    return sets;
}

void write_plane_points(const fs::path& out, const Model& model) {
    for (const auto& d : model.datasets()) {
        write_points_file(out / ("plane_points_" + d.descriptor.id + ".csv"),
                          model.effective_plane_points(d.descriptor.id));
    }
}

Trainer::EpochCallback epoch_logger(const fs::path& out, const RunConfig& cfg, const Model& model,
                                    std::ofstream& log) {
    return [&, out](const EpochRecord& r) {
        log << to_json(r).dump() << "\n";
        log.flush();
        std::cout << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.mean_loss << "\n";
        if (cfg.checkpoint_every > 0 && (r.epoch + 1) % cfg.checkpoint_every == 0) {
            save_checkpoint(out / ("checkpoint_e" + std::to_string(r.epoch + 1) + ".json"), {model, cfg.seed});
        }
    };
}

int cmd_train(const RunConfig& cfg) {
    const fs::path out = prepare_out(cfg, false);
    const auto sets = load_sets(cfg);
    Model model = prepare_model(cfg.model, sets, cfg.seed);
    std::ofstream log(out / "epochs.jsonl");
    Trainer trainer(model, cfg.train);
    trainer.fit(sets, epoch_logger(out, cfg, model, log));
    save_checkpoint(out / "checkpoint.json", {model, cfg.seed});
    write_plane_points(out, model);
    return 0;
}

int cmd_fewshot(const RunConfig& cfg) {
    const fs::path out = prepare_out(cfg, false);
    const Model base = load_model(cfg);
    RunConfig data_cfg = cfg;
    data_cfg.model = base.config();
    TrainingSet shots = load_dataset(first_dataset(cfg), data_cfg.model);
    if (cfg.shots > 0) {
        if (static_cast<std::size_t>(cfg.shots) > shots.samples.size()) {
            throw DataError("--shots " + std::to_string(cfg.shots) + " exceeds the " +
                            std::to_string(shots.samples.size()) + " available samples");
        }
        shots.samples.resize(static_cast<std::size_t>(cfg.shots));
    }
    std::ofstream log(out / "epochs.jsonl");
    Model tuned;
    const auto logger = [&](const EpochRecord& r) {
        log << to_json(r).dump() << "\n";
        std::cout << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.mean_loss << "\n";
    };
    tuned = fewshot_finetune(base, shots, cfg.train, logger);
    save_checkpoint(out / "checkpoint.json", {tuned, cfg.seed});
    write_plane_points(out, tuned);
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    const fs::path out = prepare_out(cfg, false);
    const Model model = load_model(cfg);
    const TrainingSet set = load_dataset(first_dataset(cfg), model.config());
    PromptSource source = DatasetPrompts{set.descriptor.id, {}};
    if (!cfg.points_file.empty()) {
        source = PlanePrompts{read_points_file(cfg.points_file)};
    } else if (!model.has_dataset(set.descriptor.id)) {
        throw DataError("dataset '" + set.descriptor.id +
                        "' is not registered in the checkpoint; pass --points-file for a zero-shot evaluation");
    }
    const auto predicted = predict_samples(model, set.samples, source, cfg.workers);
    const MetricReport report = score_predictions(predicted, set.samples, set.descriptor, cfg.norm, cfg.alphas);
    write_metrics(out, report);
    write_json(out / "predictions.json", predictions_to_json(set.samples, predicted));
    tools::render_overlays(out / "overlays.png", set.samples, predicted, true);
    std::cout << "NME " << report.nme_percent << "% over " << report.count() << " samples (" << to_string(cfg.norm)
              << ")\n";
    return 0;
}

int cmd_zeroshot(const RunConfig& cfg) {
    const fs::path out = prepare_out(cfg, false);
    const Model model = load_model(cfg);
    PointList points;
    if (!cfg.points_file.empty()) {
        points = read_points_file(cfg.points_file);
    } else if (cfg.n_pre > 0) {
        points = generate_scratch_shape(static_cast<std::size_t>(cfg.n_pre), kPlaneBox, cfg.seed);
    } else {
        throw UsageError("zeroshot needs --points-file or --n-pre");
    }
    write_points_file(out / "plane_points.csv", points);
    const TrainingSet set = load_dataset(first_dataset(cfg), model.config());
    std::vector<Image> images;
    for (const auto& s : set.samples) images.push_back(s.image);
    const auto preds = zero_shot_predict(model, points, images);
    std::vector<PointList> predicted;
    nlohmann::json attention = nlohmann::json::array();
    for (std::size_t i = 0; i < preds.size(); ++i) {
        predicted.push_back(matrix_to_points(preds[i].coords));
        nlohmann::json a = attention_to_json(preds[i].attention);
        a["sample"] = set.samples[i].source;
        attention.push_back(std::move(a));
    }
    write_json(out / "predictions.json", predictions_to_json(set.samples, predicted));
    write_json(out / "attention.json", attention);
    const bool labeled = points.size() == static_cast<std::size_t>(set.descriptor.landmark_count);
    tools::render_overlays(out / "overlays.png", set.samples, predicted, labeled);
    if (labeled) {
        const MetricReport report = score_predictions(predicted, set.samples, set.descriptor, cfg.norm, cfg.alphas);
        write_metrics(out, report);
        std::cout << "NME " << report.nme_percent << "% over " << report.count() << " samples\n";
    } else {
        std::cout << "predicted " << points.size() << " points on " << set.samples.size() << " images\n";
    }
    return 0;
}

int cmd_plot(const RunConfig& cfg) {
    if (cfg.reports.empty()) throw UsageError("plot needs at least one --report");
    const fs::path out = prepare_out(cfg, false);
    std::vector<tools::CedSeries> series;
    double x_max = cfg.alphas.empty() ? 0.0 : *std::max_element(cfg.alphas.begin(), cfg.alphas.end());
    for (const auto& path : cfg.reports) {
        tools::CedSeries s;
        s.label = fs::path(path).parent_path().filename().string();
        if (s.label.empty() || s.label == ".") s.label = fs::path(path).stem().string();
        if (fs::path(path).extension() == ".csv") {
            s.points = read_ced_csv(path);
        } else {
            const MetricReport r = read_report(path);
            s.points = CEDCurve(r.per_sample).breakpoints();
        }
        series.push_back(std::move(s));
    }
    if (!(x_max > 0.0)) x_max = 0.1;
    tools::render_ced_plot(out / "ced.png", series, x_max);
    std::cout << "wrote " << (out / "ced.png").string() << "\n";
    return 0;
}

std::string scan_config(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return argv[i + 1];
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return {};
}

void add_common(CLI::App* sub, RunConfig& cfg, std::string& config_path) {
    sub->add_option("--config", config_path, "JSON run config; flags override its values");
    sub->add_option("--out", cfg.out, "Output directory");
    sub->add_option("--seed", cfg.seed, "Random seed");
    sub->add_option("--workers", cfg.workers, "Worker threads");
}

void add_model_flags(CLI::App* sub, RunConfig& cfg, FlagState& flags) {
    sub->add_option("--image-size", flags.image_size, "Square input size in pixels");
    sub->add_option("--patch", flags.patch, "Square patch size in pixels");
    sub->add_option("--channels", cfg.model.channels, "Feature channels C");
    sub->add_option("--heads", cfg.model.heads, "Attention heads");
    sub->add_option("--encoder-depth", cfg.model.encoder_depth, "Encoder blocks");
    sub->add_option("--decoder-depth", cfg.model.decoder_depth, "Decoder layers");
}

void add_train_flags(CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--epochs", cfg.train.epochs, "Training epochs");
    sub->add_option("--lr", cfg.train.base_lr, "Base learning rate");
    sub->add_option("--milestones", cfg.train.milestones, "Epochs at which the rate decays")->delimiter(',');
    sub->add_option("--warmup", cfg.train.warmup_epochs, "Linear warmup epochs");
    sub->add_option("--batch-size", cfg.train.batch_size, "Samples per batch");
    sub->add_option("--mask-ratio", cfg.train.mask_ratio, "Fraction of mean-shape points masked per sample");
    sub->add_option("--anchors", cfg.train.anchors, "Anchor count override");
    sub->add_flag("--freeze-alignment", cfg.train.freeze_alignment, "Keep alignment embeddings at zero");
    sub->add_flag("--augment", cfg.train.augment, "Enable augmentation");
}

void add_dataset_flags(CLI::App* sub, FlagState& flags, bool repeatable) {
    auto* opt = sub->add_option("--dataset", flags.datasets, "Annotation file or dataset directory");
    if (!repeatable) opt->expected(1);
    sub->add_option("--format", flags.format, "Annotation format: canonical-json, wflw-txt, 300w-pts");
    sub->add_option("--preset", flags.preset, "Descriptor preset: synth-a, synth-b, wflw, 300w");
}

void add_metric_flags(CLI::App* sub, FlagState& flags) {
    sub->add_option("--alpha", flags.alphas, "Failure threshold as a fraction (repeatable)");
    sub->add_option("--norm", flags.norm, "Normalization: ocular, pupil or box");
}

void apply_flags(RunConfig& cfg, const FlagState& flags) {
    if (flags.image_size > 0) cfg.model.image_height = cfg.model.image_width = flags.image_size;
    if (flags.patch > 0) cfg.model.patch_height = cfg.model.patch_width = flags.patch;
    if (!flags.datasets.empty()) {
        cfg.datasets.clear();
        for (const auto& p : flags.datasets) {
            DatasetSource d;
            d.path = p;
            if (!flags.format.empty()) d.format = flags.format;
            if (!flags.preset.empty()) d.descriptor = {{"preset", flags.preset}};
            cfg.datasets.push_back(std::move(d));
        }
    } else if (!flags.format.empty() || !flags.preset.empty()) {
        for (auto& d : cfg.datasets) {
            if (!flags.format.empty()) d.format = flags.format;
            if (!flags.preset.empty()) d.descriptor = {{"preset", flags.preset}};
        }
    }
    if (!flags.alphas.empty()) cfg.alphas = flags.alphas;
    if (!flags.norm.empty()) cfg.norm = parse_norm_mode(flags.norm);
    cfg.train.seed = cfg.seed;
    cfg.train.workers = cfg.workers;
}

int run(int argc, char** argv) {
    const std::string config_file = scan_config(argc, argv);
    RunConfig cfg = config_file.empty() ? RunConfig{} : load_run_config(config_file);
    std::string config_path = config_file;
    FlagState flags;

    CLI::App app{"Structure-prompt face alignment"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "Render a synthetic dataset");
    add_common(synth, cfg, config_path);
    synth->add_option("--scheme", cfg.scheme, "Landmark scheme: A or B");
    synth->add_option("--count", cfg.count, "Number of faces");
    synth->add_option("--image-size", flags.image_size, "Square image size in pixels");
    synth->add_flag("--force", cfg.force, "Allow a non-empty output directory");

    auto* train = app.add_subcommand("train", "Train from scratch on one or more datasets");
    add_common(train, cfg, config_path);
    add_model_flags(train, cfg, flags);
    add_train_flags(train, cfg);
    add_dataset_flags(train, flags, true);
    train->add_option("--checkpoint-every", cfg.checkpoint_every, "Save a checkpoint every N epochs");

    auto* fewshot = app.add_subcommand("fewshot", "Fine-tune a checkpoint on K samples of a new scheme");
    add_common(fewshot, cfg, config_path);
    add_train_flags(fewshot, cfg);
    add_dataset_flags(fewshot, flags, false);
    fewshot->add_option("--checkpoint", cfg.checkpoint, "Pretrained checkpoint");
    fewshot->add_option("--shots", cfg.shots, "Use the first K samples (0 = all)");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled dataset");
    add_common(eval, cfg, config_path);
    add_dataset_flags(eval, flags, false);
    add_metric_flags(eval, flags);
    eval->add_option("--checkpoint", cfg.checkpoint, "Checkpoint to evaluate");
    eval->add_option("--points-file", cfg.points_file, "Plane points CSV for a zero-shot evaluation");

    auto* zeroshot = app.add_subcommand("zeroshot", "Predict landmarks at arbitrary plane points");
    add_common(zeroshot, cfg, config_path);
    add_dataset_flags(zeroshot, flags, false);
    add_metric_flags(zeroshot, flags);
    zeroshot->add_option("--checkpoint", cfg.checkpoint, "Checkpoint to query");
    zeroshot->add_option("--points-file", cfg.points_file, "Plane points CSV, one x,y per line");
    zeroshot->add_option("--n-pre", cfg.n_pre, "Random scratch shape with this many points");

    auto* plot = app.add_subcommand("plot", "Render CED curves from reports or CED CSV files");
    add_common(plot, cfg, config_path);
    plot->add_option("--report", cfg.reports, "Metric report JSON or CED CSV (repeatable)");
    add_metric_flags(plot, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    CLI::App* sub = app.get_subcommands().front();
    cfg.command = sub->get_name();
    apply_flags(cfg, flags);
    cfg.validate();

    if (sub == synth) return cmd_synth(cfg);
    if (sub == train) return cmd_train(cfg);
    if (sub == fewshot) return cmd_fewshot(cfg);
    if (sub == eval) return cmd_eval(cfg);
    if (sub == zeroshot) return cmd_zeroshot(cfg);
    return cmd_plot(cfg);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << e.tag() << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "E_DATA: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "E_INTERNAL: " << e.what() << "\n";
        return 1;
    }
}
