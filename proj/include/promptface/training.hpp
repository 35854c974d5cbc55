#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptface/augment.hpp"
#include "promptface/batching.hpp"
#include "promptface/dataset.hpp"
#include "promptface/masking.hpp"
#include "promptface/model.hpp"

namespace promptface {

struct TrainConfig {
    int epochs = 100;
    double base_lr = 1e-4;
    std::vector<int> milestones{80, 90};
    int warmup_epochs = 0;  // linear ramp to base_lr over the first epochs
    double decay = 0.1;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double mask_ratio = 0.75;
    int anchors = 0;  // > 0 overrides the ratio
    int batch_size = 16;
    std::uint64_t seed = 0;
    bool freeze_alignment = false;
    bool augment = false;
    AugmentationConfig augmentation;
    int workers = 1;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Piecewise-constant step schedule: base_lr * decay^(milestones passed),
/// scaled by (epoch + 1) / warmup_epochs during warmup.
double lr_schedule(int epoch, const TrainConfig& config);

/// Mean over valid (sample, anchor) pairs of |dx| + |dy|. Invalid anchors are
/// excluded from the denominator; a batch with none valid is an error.
double l1_landmark_loss(std::span<const Matrix> predicted, std::span<const Matrix> target,
                        std::span<const std::vector<bool>> validity);

/// Decoupled weight decay Adam. Parameters without a gradient this step are
/// left untouched, moments included.
class AdamW {
public:
    AdamW(double beta1, double beta2, double eps, double weight_decay);

    void step(TensorMap& params, const TensorMap& grads, double lr, const std::set<std::string>& frozen = {});

    /// Names exempt from weight decay: norms, biases, embeddings.
    static bool decays(const std::string& name);

    long steps() const { return t_; }
    TensorMap& first_moment() { return m_; }
    TensorMap& second_moment() { return v_; }

private:
    double beta1_, beta2_, eps_, weight_decay_;
    long t_ = 0;
    TensorMap m_, v_;
    std::map<std::string, long> param_steps_;
};

struct TrainingSet {
    DatasetDescriptor descriptor;
    std::vector<Sample> samples;
};

/// Model with a fresh network and every set registered under the mean shape
/// of its own samples.
Model prepare_model(const ModelConfig& config, std::span<const TrainingSet> sets, std::uint64_t seed);

/// Anchor count shared by all datasets in a run: the override when set, else
/// round((1 - ratio) * N_D) of the largest scheme, capped by the smallest.
int resolve_anchor_count(const TrainConfig& config, std::span<const TrainingSet> sets);

/// One sample of a batch, ready for the network.
struct StepItem {
    const Sample* sample = nullptr;
    MaskPlan plan;
};

/// Batch loss and, when `grads` is set, its gradient summed in item order.
/// With workers > 1 samples run in parallel and are reduced in the same order.
double batch_loss(const Model& model, std::span<const StepItem> items, TensorMap* grads, int workers = 1);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double wall_seconds = 0.0;
};

nlohmann::json to_json(const EpochRecord& r);

class Trainer {
public:
    Trainer(Model& model, TrainConfig config);

    /// One AdamW step at `lr`; returns the pre-step loss. Non-finite loss
    /// throws NumericError naming the batch's samples.
    double train_step(std::span<const StepItem> items, double lr);

    EpochRecord run_epoch(int epoch, std::span<const TrainingSet> sets);

    using EpochCallback = std::function<void(const EpochRecord&)>;
    std::vector<EpochRecord> fit(std::span<const TrainingSet> sets, const EpochCallback& on_epoch = {});

    const TensorMap& last_gradients() const { return grads_; }
    const TrainConfig& config() const { return config_; }

private:
    Model& model_;
    TrainConfig config_;
    AdamW optimizer_;
    TensorMap grads_;
    std::set<std::string> frozen_;
};

/// Registers `shots` as a new dataset (mean shape from its K samples, zero
/// alignment embedding) on a copy of `pretrained` and fine-tunes everything.
Model fewshot_finetune(const Model& pretrained, const TrainingSet& shots, const TrainConfig& config,
                       const Trainer::EpochCallback& on_epoch = {});

}  // namespace promptface
