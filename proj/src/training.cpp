#include "promptface/training.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <memory>
#include <thread>

#include "promptface/errors.hpp"

namespace promptface {

void TrainConfig::validate() const {
    auto fail = [](const std::string& m) { throw UsageError("invalid training config: " + m); };
    if (epochs < 0) fail("epochs must be non-negative");
    if (!(base_lr >= 0.0)) fail("learning rate must be non-negative");
    for (std::size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] < 0 || milestones[i] >= std::max(epochs, 1)) fail("milestones must lie in [0, epochs)");
        if (i > 0 && milestones[i] <= milestones[i - 1]) fail("milestones must be strictly increasing");
    }
    if (warmup_epochs < 0) fail("warmup epochs must be non-negative");
    if (!(decay > 0.0)) fail("decay factor must be positive");
    if (weight_decay < 0.0) fail("weight decay must be non-negative");
    if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) fail("masking ratio must lie in [0, 1)");
    if (anchors < 0) fail("anchor count must be non-negative");
    if (batch_size < 1) fail("batch size must be positive");
    if (workers < 1) fail("workers must be positive");
    augmentation.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"base_lr", c.base_lr},
            {"milestones", c.milestones},
            {"decay", c.decay},
            {"warmup_epochs", c.warmup_epochs},
            {"weight_decay", c.weight_decay},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"mask_ratio", c.mask_ratio},
            {"anchors", c.anchors},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"freeze_alignment", c.freeze_alignment},
            {"augment", c.augment},
            {"augmentation", to_json(c.augmentation)},
            {"workers", c.workers}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.base_lr = j.value("base_lr", c.base_lr);
        c.milestones = j.value("milestones", c.milestones);
        c.decay = j.value("decay", c.decay);
        c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.adam_eps = j.value("adam_eps", c.adam_eps);
        c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
        c.anchors = j.value("anchors", c.anchors);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        c.freeze_alignment = j.value("freeze_alignment", c.freeze_alignment);
        c.augment = j.value("augment", c.augment);
        if (j.contains("augmentation")) c.augmentation = augmentation_from_json(j.at("augmentation"));
        c.workers = j.value("workers", c.workers);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("malformed training config: ") + e.what());
    }
    c.validate();
    return c;
}

double lr_schedule(int epoch, const TrainConfig& config) {
    double lr = config.base_lr;
    if (epoch < config.warmup_epochs) lr *= static_cast<double>(epoch + 1) / config.warmup_epochs;
    for (int m : config.milestones) {
        if (epoch >= m) lr *= config.decay;
    }
    return lr;
}

double l1_landmark_loss(std::span<const Matrix> predicted, std::span<const Matrix> target,
                        std::span<const std::vector<bool>> validity) {
    if (predicted.size() != target.size() || predicted.size() != validity.size()) {
        throw UsageError("loss inputs disagree on batch size");
    }
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < predicted.size(); ++j) {
        const Matrix& p = predicted[j];
        const Matrix& t = target[j];
        if (p.rows() != t.rows() || p.cols() != 2 || t.cols() != 2 ||
            static_cast<Eigen::Index>(validity[j].size()) != p.rows()) {
            throw UsageError("loss inputs disagree on anchor count");
        }
        for (Eigen::Index k = 0; k < p.rows(); ++k) {
            if (!validity[j][static_cast<std::size_t>(k)]) continue;
            total += std::abs(p(k, 0) - t(k, 0)) + std::abs(p(k, 1) - t(k, 1));
            ++count;
        }
    }
    if (count == 0) throw DataError("batch has no valid anchors");
    return total / static_cast<double>(count);
}

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

bool AdamW::decays(const std::string& name) {
    auto ends_with = [&](const std::string& suffix) {
        return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (name.rfind("align.", 0) == 0 || name == "pos_embed") return false;
    if (ends_with(".bias") || ends_with(".gamma") || ends_with(".beta")) return false;
    return true;
}

void AdamW::step(TensorMap& params, const TensorMap& grads, double lr, const std::set<std::string>& frozen) {
    ++t_;
    for (const auto& [name, g] : grads) {
        if (g.size() == 0 || frozen.count(name)) continue;
        Matrix& p = params.at(name);
        Matrix& m = m_[name];
        Matrix& v = v_[name];
        if (m.size() == 0) {
            m = Matrix::Zero(p.rows(), p.cols());
            v = Matrix::Zero(p.rows(), p.cols());
        }
        const long t = ++param_steps_[name];
        if (weight_decay_ > 0.0 && decays(name)) p *= (1.0 - lr * weight_decay_);
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }
}

Model prepare_model(const ModelConfig& config, std::span<const TrainingSet> sets, std::uint64_t seed) {
    Model model(config, seed);
    for (const auto& set : sets) {
        if (set.samples.empty()) throw DataError("dataset '" + set.descriptor.id + "' has no samples");
        std::vector<LandmarkSet> shapes;
        shapes.reserve(set.samples.size());
        for (const auto& s : set.samples) shapes.push_back(s.landmarks);
        model.register_dataset(set.descriptor, compute_mean_shape(shapes, set.descriptor.id));
    }
    return model;
}

int resolve_anchor_count(const TrainConfig& config, std::span<const TrainingSet> sets) {
    if (sets.empty()) throw UsageError("no training datasets");
    int smallest = sets.front().descriptor.landmark_count;
    int largest = smallest;
    for (const auto& s : sets) {
        smallest = std::min(smallest, s.descriptor.landmark_count);
        largest = std::max(largest, s.descriptor.landmark_count);
    }
    if (config.anchors > 0) {
        if (config.anchors > smallest) {
            throw UsageError("anchor count " + std::to_string(config.anchors) + " exceeds the smallest scheme (" +
                             std::to_string(smallest) + " landmarks)");
        }
        return config.anchors;
    }
    return std::min(anchor_count_for_ratio(largest, config.mask_ratio), smallest);
}

namespace {

Var sample_loss(Network& net, const Model& model, const StepItem& item, double scale) {
    const Sample& s = *item.sample;
    if (s.dataset_id != item.plan.dataset_id) {
        throw DataError("sample " + s.source + " belongs to '" + s.dataset_id + "', plan to '" +
                        item.plan.dataset_id + "'");
    }
    const Var points = model.build_prompt_points(net, DatasetPrompts{item.plan.dataset_id, item.plan.indices});
    const Var features = net.encoder(net.patchify(s.image));
    const Var pred = net.head(net.decoder(net.prompts(points), features, nullptr));
    const auto n = static_cast<Eigen::Index>(item.plan.indices.size());
    Matrix target = Matrix::Zero(n, 2);
    std::vector<char> mask_storage(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        const int idx = item.plan.indices[static_cast<std::size_t>(k)];
        if (idx < 0 || idx >= static_cast<int>(s.landmarks.size())) throw DataError("anchor index out of range");
        mask_storage[static_cast<std::size_t>(k)] = s.landmarks.valid[idx];
        if (s.landmarks.valid[idx]) {
            target(k, 0) = s.landmarks.coords[idx].x;
            target(k, 1) = s.landmarks.coords[idx].y;
        }
    }
    std::unique_ptr<bool[]> mask(new bool[static_cast<std::size_t>(n)]);
    for (Eigen::Index k = 0; k < n; ++k) mask[k] = mask_storage[static_cast<std::size_t>(k)] != 0;
    return masked_l1_sum(pred, target, std::span<const bool>(mask.get(), static_cast<std::size_t>(n)), scale);
}

double run_sample(const Model& model, const StepItem& item, double scale, TensorMap* grads) {
    Tape tape;
    Network net(model.config(), model.params(), tape, grads);
    const Var loss = sample_loss(net, model, item, scale);
    if (grads) tape.backward(loss);
    return loss.value()(0, 0);
}

}  // namespace

double batch_loss(const Model& model, std::span<const StepItem> items, TensorMap* grads, int workers) {
    std::size_t valid = 0;
    for (const auto& it : items) {
        for (int idx : it.plan.indices) {
            if (idx >= 0 && idx < static_cast<int>(it.sample->landmarks.size()) && it.sample->landmarks.valid[idx]) {
                ++valid;
            }
        }
    }
    if (valid == 0) throw DataError("batch has no valid anchors");
    const double scale = 1.0 / static_cast<double>(valid);

    if (workers <= 1 || items.size() <= 1) {
        double total = 0.0;
        for (const auto& it : items) total += run_sample(model, it, scale, grads);
        return total;
    }

    std::vector<double> losses(items.size(), 0.0);
    std::vector<TensorMap> per_sample(grads ? items.size() : 0);
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = static_cast<std::size_t>(w); i < items.size(); i += static_cast<std::size_t>(workers)) {
                    losses[i] = run_sample(model, items[i], scale, grads ? &per_sample[i] : nullptr);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        total += losses[i];
        if (!grads) continue;
        for (auto& [name, g] : per_sample[i]) {
            Matrix& dst = (*grads)[name];
            if (dst.size() == 0) dst = Matrix::Zero(g.rows(), g.cols());
            dst += g;
        }
    }
    return total;
}

nlohmann::json to_json(const EpochRecord& r) {
    return {{"epoch", r.epoch}, {"lr", r.lr}, {"mean_loss", r.mean_loss}, {"wall_seconds", r.wall_seconds}};
}

Trainer::Trainer(Model& model, TrainConfig config)
    : model_(model),
      config_(std::move(config)),
      optimizer_(config_.beta1, config_.beta2, config_.adam_eps, config_.weight_decay) {
    config_.validate();
    if (config_.freeze_alignment) {
        for (const auto& d : model_.datasets()) frozen_.insert(Model::alignment_name(d.descriptor.id));
    }
}

double Trainer::train_step(std::span<const StepItem> items, double lr) {
    grads_.clear();
    const double loss = batch_loss(model_, items, &grads_, config_.workers);
    if (!std::isfinite(loss)) {
        std::string where;
        for (const auto& it : items) where += (where.empty() ? "" : ", ") + it.sample->source;
        throw NumericError("non-finite loss in batch [" + where + "]");
    }
    optimizer_.step(model_.params(), grads_, lr, frozen_);
    return loss;
}

EpochRecord Trainer::run_epoch(int epoch, std::span<const TrainingSet> sets) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<DatasetDescriptor> registry;
    std::vector<int> sizes;
    for (const auto& s : sets) {
        registry.push_back(s.descriptor);
        sizes.push_back(static_cast<int>(s.samples.size()));
    }
    const int anchors = resolve_anchor_count(config_, sets);
    const auto batches = make_batches(registry, sizes, config_.batch_size, anchors,
                                      Rng::derive(config_.seed, 0xba7c4, static_cast<std::uint64_t>(epoch)).bits());
    const double lr = lr_schedule(epoch, config_);
    double total = 0.0;
    std::vector<Sample> augmented;
    std::vector<StepItem> items;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        const Batch& batch = batches[b];
        augmented.clear();
        augmented.reserve(batch.size());
        items.clear();
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const auto& entry = batch[i];
            const TrainingSet& set = sets[static_cast<std::size_t>(entry.dataset)];
            const Sample* sample = &set.samples[static_cast<std::size_t>(entry.sample)];
            if (config_.augment) {
                Rng rng = Rng::derive(config_.seed ^ config_.augmentation.seed, static_cast<std::uint64_t>(epoch),
                                      (static_cast<std::uint64_t>(entry.dataset) << 32) |
                                          static_cast<std::uint64_t>(entry.sample));
                augmented.push_back(augment(*sample, config_.augmentation, rng, &set.descriptor));
                sample = &augmented.back();
            }
            items.push_back({sample, entry.plan});
        }
        total += train_step(items, lr);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.mean_loss = batches.empty() ? 0.0 : total / static_cast<double>(batches.size());
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

std::vector<EpochRecord> Trainer::fit(std::span<const TrainingSet> sets, const EpochCallback& on_epoch) {
    std::vector<EpochRecord> log;
    for (int e = 0; e < config_.epochs; ++e) {
        log.push_back(run_epoch(e, sets));
        if (on_epoch) on_epoch(log.back());
    }
    return log;
}

Model fewshot_finetune(const Model& pretrained, const TrainingSet& shots, const TrainConfig& config,
                       const Trainer::EpochCallback& on_epoch) {
    if (shots.samples.empty()) throw DataError("few-shot transfer needs at least one sample");
    std::vector<LandmarkSet> shapes;
    for (const auto& s : shots.samples) {
        if (static_cast<int>(s.landmarks.size()) != shots.descriptor.landmark_count) {
            throw DataError("few-shot sample " + s.source + " has " + std::to_string(s.landmarks.size()) +
                            " landmarks, expected " + std::to_string(shots.descriptor.landmark_count));
        }
        shapes.push_back(s.landmarks);
    }
    Model model = pretrained;
    model.register_dataset(shots.descriptor, compute_mean_shape(shapes, shots.descriptor.id));
    Trainer trainer(model, config);
    trainer.fit(std::span<const TrainingSet>(&shots, 1), on_epoch);
    return model;
}

}  // namespace promptface
