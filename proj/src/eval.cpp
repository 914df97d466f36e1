#include "akgnet/eval.hpp"

#include <algorithm>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace akgnet::eval {

namespace {

std::pair<double, double> overlap_counts(const torch::Tensor& pred, const torch::Tensor& gt) {
    if (!pred.sizes().equals(gt.sizes()))
        throw ShapeMismatch("mask shape mismatch: " + std::string(torch::str(pred.sizes())) +
                            " vs " + std::string(torch::str(gt.sizes())));
    auto a = pred > 0.5;
    auto b = gt > 0.5;
    const double inter = (a & b).sum().item<double>();
    const double total = a.sum().item<double>() + b.sum().item<double>();
    return {inter, total};
}

}  // namespace

double dice_metric(const torch::Tensor& pred, const torch::Tensor& gt) {
    const auto [inter, total] = overlap_counts(pred, gt);
    if (total == 0.0) return 1.0;  // both empty
    return 2.0 * inter / total;
}

double jaccard_metric(const torch::Tensor& pred, const torch::Tensor& gt) {
    const auto [inter, total] = overlap_counts(pred, gt);
    const double uni = total - inter;
    if (uni == 0.0) return 1.0;
    return inter / uni;
}

namespace {

EvalResult aggregate(const std::vector<data::ImageTextSample>& dataset,
                     const std::function<torch::Tensor(size_t)>& predict, bool keep_per_sample) {
    EvalResult result;
    for (size_t i = 0; i < dataset.size(); ++i) {
        if (!dataset[i].has_gt())
            throw MissingGroundTruth("sample " + dataset[i].id + " has no ground-truth mask");
        const auto pred = predict(i);
        SampleScore score{dataset[i].id, dice_metric(pred, dataset[i].gt_mask),
                          jaccard_metric(pred, dataset[i].gt_mask)};
        result.dice += score.dice;
        result.jaccard += score.jaccard;
        if (keep_per_sample) result.per_sample.push_back(score);
        ++result.n_samples;
    }
    if (result.n_samples > 0) {
        result.dice /= result.n_samples;
        result.jaccard /= result.n_samples;
    }
    return result;
}

}  // namespace

EvalResult evaluate(model::AkgNet& net, const std::vector<data::ImageTextSample>& dataset,
                    double alpha, bool keep_per_sample) {
    torch::NoGradGuard no_grad;
    net->eval();
    const bool attr_input = net->config().attr_input;

    // batched forward, cached per-sample binarized predictions
    std::vector<torch::Tensor> preds(dataset.size());
    const size_t chunk = 16;
    for (size_t start = 0; start < dataset.size(); start += chunk) {
        const size_t end = std::min(start + chunk, dataset.size());
        std::vector<torch::Tensor> images;
        std::vector<std::string> texts;
        for (size_t i = start; i < end; ++i) {
            images.push_back(dataset[i].image);
            texts.push_back(attr_input ? dataset[i].attr_description.text : dataset[i].raw_text);
        }
        auto bundle = net->forward(torch::stack(images), texts, alpha);
        auto binary = (torch::sigmoid(bundle.mask_logits) > alpha).to(torch::kFloat);
        for (size_t i = start; i < end; ++i)
            preds[i] = binary[i - start];
    }
    net->train();
    return aggregate(dataset, [&](size_t i) { return preds[i]; }, keep_per_sample);
}

EvalResult evaluate_coarse(const std::vector<data::ImageTextSample>& dataset,
                           bool keep_per_sample) {
    return aggregate(dataset, [&](size_t i) { return dataset[i].coarse_mask; }, keep_per_sample);
}

// ---------------------------------------------------------------------
// reporting
// ---------------------------------------------------------------------

void write_results_tsv(const std::filesystem::path& file, const std::vector<SweepRow>& rows) {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os << "label\tvalue\tdice\tjaccard\tn_samples\n";
    for (const auto& r : rows)
        os << r.label << '\t' << r.value << '\t' << r.result.dice << '\t' << r.result.jaccard
           << '\t' << r.result.n_samples << '\n';
}

void write_results_markdown(const std::filesystem::path& file, const std::vector<SweepRow>& rows,
                            const std::string& title) {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os << "# " << title << "\n\n| label | value | Dice | Jaccard | n |\n"
       << "|---|---|---|---|---|\n";
    for (const auto& r : rows)
        os << "| " << r.label << " | " << r.value << " | " << r.result.dice << " | "
           << r.result.jaccard << " | " << r.result.n_samples << " |\n";
}

void plot_sweep(const std::filesystem::path& file, const std::vector<SweepRow>& rows,
                const std::string& x_label) {
    const int w = 640, h = 480, margin = 60;
    cv::Mat canvas(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
    cv::rectangle(canvas, {margin, margin}, {w - margin, h - margin}, {0, 0, 0}, 1);
    if (!rows.empty()) {
        double x_min = rows.front().value, x_max = rows.back().value;
        for (const auto& r : rows) {
            x_min = std::min(x_min, r.value);
            x_max = std::max(x_max, r.value);
        }
        if (x_max == x_min) x_max = x_min + 1.0;
        auto px = [&](double v) {
            return margin + static_cast<int>((v - x_min) / (x_max - x_min) * (w - 2 * margin));
        };
        auto py = [&](double metric) {
            return h - margin - static_cast<int>(metric * (h - 2 * margin));
        };
        auto draw_series = [&](const cv::Scalar& color, auto value_of) {
            for (size_t i = 0; i + 1 < rows.size(); ++i)
                cv::line(canvas, {px(rows[i].value), py(value_of(rows[i]))},
                         {px(rows[i + 1].value), py(value_of(rows[i + 1]))}, color, 2);
            for (const auto& r : rows)
                cv::circle(canvas, {px(r.value), py(value_of(r))}, 4, color, cv::FILLED);
        };
        draw_series({60, 60, 220}, [](const SweepRow& r) { return r.result.dice; });
        draw_series({180, 120, 40}, [](const SweepRow& r) { return r.result.jaccard; });
        for (const auto& r : rows)
            cv::putText(canvas, r.label, {px(r.value) - 15, h - margin + 20},
                        cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0});
    }
    cv::putText(canvas, x_label, {w / 2 - 40, h - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0});
    cv::putText(canvas, "Dice", {w - margin + 5, margin + 15}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                {60, 60, 220});
    cv::putText(canvas, "Jaccard", {w - margin + 5, margin + 35}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                {180, 120, 40});
    for (int i = 0; i <= 4; ++i) {
        const int y = h - margin - i * (h - 2 * margin) / 4;
        cv::putText(canvas, cv::format("%.2f", i / 4.0), {margin - 40, y + 4},
                    cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0});
        cv::line(canvas, {margin - 4, y}, {margin, y}, {0, 0, 0}, 1);
    }
    if (!cv::imwrite(file.string(), canvas))
        throw std::runtime_error("cannot write plot " + file.string());
}

void write_overlay(const std::filesystem::path& file, const torch::Tensor& image,
                   const torch::Tensor& mask) {
    auto img8 = (image.squeeze(0).clamp(0, 1) * 255.0f).to(torch::kUInt8).contiguous();
    cv::Mat grey(static_cast<int>(img8.size(0)), static_cast<int>(img8.size(1)), CV_8UC1,
                 img8.data_ptr<uint8_t>());
    cv::Mat color;
    cv::cvtColor(grey, color, cv::COLOR_GRAY2BGR);
    auto m8 = (mask.squeeze(0) > 0.5).to(torch::kUInt8).mul(255).contiguous();
    cv::Mat mask_mat(static_cast<int>(m8.size(0)), static_cast<int>(m8.size(1)), CV_8UC1,
                     m8.data_ptr<uint8_t>());
    std::vector<std::vector<cv::Point>> contours;
    cv::findContours(mask_mat, contours, cv::RETR_EXTERNAL, cv::CHAIN_APPROX_SIMPLE);
    cv::drawContours(color, contours, -1, {0, 0, 255}, 1);
    if (!cv::imwrite(file.string(), color))
        throw std::runtime_error("cannot write overlay " + file.string());
}

}  // namespace akgnet::eval
