#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "akgnet/data.hpp"
#include "akgnet/model.hpp"

namespace akgnet::eval {

struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingGroundTruth : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SampleScore {
    std::string id;
    double dice = 0.0;
    double jaccard = 0.0;
};

struct EvalResult {
    double dice = 0.0;     // mean over samples
    double jaccard = 0.0;  // mean over samples
    int n_samples = 0;
    std::vector<SampleScore> per_sample;
};

/// 2|A∩B| / (|A|+|B|); two empty masks score 1.
double dice_metric(const torch::Tensor& pred, const torch::Tensor& gt);
/// |A∩B| / |A∪B|; two empty masks score 1.
double jaccard_metric(const torch::Tensor& pred, const torch::Tensor& gt);

/// Binarize sigmoid(P) > alpha per sample and average both metrics against
/// the ground-truth masks.
EvalResult evaluate(model::AkgNet& net, const std::vector<data::ImageTextSample>& dataset,
                    double alpha = 0.5, bool keep_per_sample = false);

/// Score the coarse masks themselves as predictions (the "CM only" row).
EvalResult evaluate_coarse(const std::vector<data::ImageTextSample>& dataset,
                           bool keep_per_sample = false);

struct SweepRow {
    std::string label;
    double value = 0.0;
    EvalResult result;
};

void write_results_tsv(const std::filesystem::path& file, const std::vector<SweepRow>& rows);
void write_results_markdown(const std::filesystem::path& file, const std::vector<SweepRow>& rows,
                            const std::string& title);
/// PNG line chart of Dice (and Jaccard) against the swept value.
void plot_sweep(const std::filesystem::path& file, const std::vector<SweepRow>& rows,
                const std::string& x_label);

/// Grey image + red mask boundary overlay, for qualitative inspection.
void write_overlay(const std::filesystem::path& file, const torch::Tensor& image,
                   const torch::Tensor& mask);

}  // namespace akgnet::eval
