#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace akgnet::losses {

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LossWeights {
    double lambda_c = 1.0;
    double lambda_a = 0.9;
    double lambda_st = 1.0;
    double alpha = 0.5;  // mask-guided feature gate threshold
    double delta = 0.7;  // self-training confidence threshold
    double tau = 0.5;    // coarse mask threshold

    void validate() const;  // throws std::invalid_argument
};

struct LossReport {
    double l_c = 0.0;
    double l_a = 0.0;
    double l_st = 0.0;
    double l_total = 0.0;
    double pseudo_label_coverage = 0.0;  // fraction of pixels with pseudo-label 1

    std::string to_json_line(long step) const;
};

/// 1 - (2*sum(sigmoid(P)*Y) + eps) / (sum(sigmoid(P)) + sum(Y) + eps),
/// eps = 1e-6, averaged over the batch. P carries logits.
torch::Tensor dice_loss(const torch::Tensor& logits, const torch::Tensor& target);

/// 0.5 * BCE(sigmoid(P), Y) + 0.5 * dice_loss(P, Y); BCE is a pixel mean.
torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& target);

/// L_c = seg_loss against the coarse mask.
torch::Tensor coarse_loss(const torch::Tensor& logits, const torch::Tensor& coarse_mask);

/// Sum over the M heads of softmax cross-entropy, mean over the batch.
/// `targets` is B x M (long); `head_mask[m] == false` drops head m
/// (ablation hook).
torch::Tensor attribute_loss(const std::vector<torch::Tensor>& attr_logits,
                             const torch::Tensor& targets,
                             const std::vector<bool>& head_mask = {});

/// Detached binary pseudo-labels 1[sigmoid(P) > delta].
torch::Tensor pseudo_labels(const torch::Tensor& logits, double delta);

/// L_st = seg_loss(P, pseudo_labels(P, delta)); the label branch carries
/// no gradient.
torch::Tensor self_training_loss(const torch::Tensor& logits, double delta);

torch::Tensor total_loss(const torch::Tensor& l_c, const torch::Tensor& l_a,
                         const torch::Tensor& l_st, const LossWeights& weights);

}  // namespace akgnet::losses
