#include "akgnet/losses.hpp"

#include <nlohmann/json.hpp>

namespace akgnet::losses {

namespace {

constexpr double kDiceEps = 1e-6;

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b) {
    if (!a.sizes().equals(b.sizes()))
        throw ShapeMismatch("shape mismatch: " + std::string(torch::str(a.sizes())) + " vs " +
                            std::string(torch::str(b.sizes())));
}

void check_threshold(double v, const char* name) {
    if (v <= 0.0 || v >= 1.0)
        throw std::invalid_argument(std::string(name) + " must be strictly inside (0,1)");
}

}  // namespace

void LossWeights::validate() const {
    if (lambda_c < 0 || lambda_a < 0 || lambda_st < 0)
        throw std::invalid_argument("loss weights must be non-negative");
    check_threshold(alpha, "alpha");
    check_threshold(delta, "delta");
    check_threshold(tau, "tau");
}

std::string LossReport::to_json_line(long step) const {
    nlohmann::json j = {{"step", step},
                        {"l_c", l_c},
                        {"l_a", l_a},
                        {"l_st", l_st},
                        {"l_total", l_total},
                        {"coverage", pseudo_label_coverage}};
    return j.dump();
}

torch::Tensor dice_loss(const torch::Tensor& logits, const torch::Tensor& target) {
    check_same_shape(logits, target);
    const auto batch = logits.dim() == 4 ? logits.size(0) : 1;
    auto p = torch::sigmoid(logits).reshape({batch, -1});
    auto y = target.reshape({batch, -1});
    auto intersection = (p * y).sum(1);
    auto dice = (2.0 * intersection + kDiceEps) / (p.sum(1) + y.sum(1) + kDiceEps);
    return (1.0 - dice).mean();
}

torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& target) {
    check_same_shape(logits, target);
    auto bce = torch::binary_cross_entropy_with_logits(logits, target);
    return 0.5 * bce + 0.5 * dice_loss(logits, target);
}

torch::Tensor coarse_loss(const torch::Tensor& logits, const torch::Tensor& coarse_mask) {
    return seg_loss(logits, coarse_mask);
}

torch::Tensor attribute_loss(const std::vector<torch::Tensor>& attr_logits,
                             const torch::Tensor& targets, const std::vector<bool>& head_mask) {
    const auto m_heads = static_cast<long>(attr_logits.size());
    if (targets.dim() != 2 || targets.size(1) != m_heads)
        throw ShapeMismatch("targets must be B x M");
    auto total = torch::zeros({}, attr_logits.empty() ? torch::kFloat : attr_logits[0].options());
    for (long m = 0; m < m_heads; ++m) {
        if (!head_mask.empty() && !head_mask[m]) continue;
        auto t = targets.select(1, m);
        const auto width = attr_logits[m].size(1);
        if ((t < 0).any().item<bool>() || (t >= width).any().item<bool>())
            throw std::out_of_range("attribute target out of range for head " +
                                    std::to_string(m + 1));
        total = total + torch::nn::functional::cross_entropy(attr_logits[m], t);
    }
    return total;
}

torch::Tensor pseudo_labels(const torch::Tensor& logits, double delta) {
    check_threshold(delta, "delta");
    return (torch::sigmoid(logits.detach()) > delta).to(logits.scalar_type());
}

torch::Tensor self_training_loss(const torch::Tensor& logits, double delta) {
    return seg_loss(logits, pseudo_labels(logits, delta));
}

torch::Tensor total_loss(const torch::Tensor& l_c, const torch::Tensor& l_a,
                         const torch::Tensor& l_st, const LossWeights& weights) {
    weights.validate();
    return weights.lambda_c * l_c + weights.lambda_a * l_a + weights.lambda_st * l_st;
}

}  // namespace akgnet::losses
