#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "akgnet/data.hpp"
#include "akgnet/losses.hpp"
#include "akgnet/model.hpp"

namespace akgnet::trainer {

struct NonFiniteLoss : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Mode { transductive, inductive };
Mode mode_from_string(const std::string& name);
std::string to_string(Mode mode);

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 12;
    int epochs = 60;
    losses::LossWeights weights;
    int warmup_epochs = 5;  // epochs before L_st joins the objective
    std::uint64_t seed = 0;
    int eval_every = 5;
    double grad_clip = 5.0;  // global-norm clip; <= 0 disables
    bool augment = true;
    double holdout_fraction = 0.2;  // inductive eval split

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    losses::LossReport losses;
    double eval_dice = -1.0;     // -1 when not evaluated this epoch
    double eval_jaccard = -1.0;
};

struct History {
    std::vector<EpochRecord> epochs;
    double best_dice = -1.0;
    int best_epoch = -1;

    void save_jsonl(const std::filesystem::path& file) const;
};

class Trainer {
public:
    Trainer(model::AkgNet net, TrainConfig config, attr::AttributeParser parser);

    /// One adaptive-moment step on the trainable parameters; the attribute
    /// encoder is untouched. L_st joins the objective once epoch >=
    /// warmup_epochs. Throws NonFiniteLoss naming the offending term.
    losses::LossReport train_step(const std::vector<const data::ImageTextSample*>& batch,
                                  int epoch);

    /// Transductive mode trains and evaluates on the whole pool; inductive
    /// mode holds out a split for evaluation. Writes per-step JSONL logs
    /// plus best/last checkpoints when run_dir is given. Deterministic
    /// under config.seed.
    History fit(const std::vector<data::ImageTextSample>& dataset, Mode mode,
                std::optional<std::filesystem::path> run_dir = std::nullopt);

    model::AkgNet& net() { return net_; }
    const TrainConfig& config() const { return config_; }

private:
    torch::Tensor batch_images(const std::vector<const data::ImageTextSample*>& batch) const;

    model::AkgNet net_;
    TrainConfig config_;
    attr::AttributeParser parser_;
    torch::optim::Adam optimizer_;
    std::mt19937 rng_;
    long global_step_ = 0;
    std::ofstream* step_log_ = nullptr;  // owned by fit() while running
};

}  // namespace akgnet::trainer
