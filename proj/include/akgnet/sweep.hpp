#pragma once

#include <optional>
#include <string>
#include <vector>

#include "akgnet/eval.hpp"
#include "akgnet/trainer.hpp"

namespace akgnet::eval {

/// One swept parameter and its values. Numeric parameters: delta, alpha,
/// lambda_c, lambda_a, lambda_st, lr. Toggles (values 0/1): la (attribute
/// loss), aica (cross-attention fusion), art (attribute description vs raw
/// text input), lst (self-training loss).
struct SweepSpec {
    std::string param;
    std::vector<double> values;
};

SweepSpec parse_sweep_spec(const std::string& grid);  // "delta=0.5,0.7,0.9"

/// One trained run per grid cell from a shared seed and identical
/// initialization. Inductive mode trains on a split and scores the
/// holdout; transductive trains and scores the whole pool. When out_dir
/// is set, emits results.tsv, results.md and a Dice/Jaccard line plot.
std::vector<SweepRow> ablation_sweep(const trainer::TrainConfig& base_train,
                                     const model::ModelConfig& base_model,
                                     const attr::AttributeParser& parser,
                                     const std::vector<data::ImageTextSample>& dataset,
                                     trainer::Mode mode, const SweepSpec& spec,
                                     std::optional<std::filesystem::path> out_dir = std::nullopt);

}  // namespace akgnet::eval
