#include "akgnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "akgnet/eval.hpp"

namespace akgnet::trainer {

Mode mode_from_string(const std::string& name) {
    if (name == "transductive") return Mode::transductive;
    if (name == "inductive") return Mode::inductive;
    throw std::invalid_argument("mode must be transductive or inductive, got " + name);
}

std::string to_string(Mode mode) {
    return mode == Mode::transductive ? "transductive" : "inductive";
}

void TrainConfig::validate() const {
    if (lr <= 0) throw std::invalid_argument("lr must be positive");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (warmup_epochs < 0) throw std::invalid_argument("warmup_epochs must be >= 0");
    if (holdout_fraction <= 0 || holdout_fraction >= 1)
        throw std::invalid_argument("holdout_fraction must be in (0,1)");
    weights.validate();
}

void History::save_jsonl(const std::filesystem::path& file) const {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    for (const auto& e : epochs) {
        os << "{\"epoch\":" << e.epoch << ",\"l_c\":" << e.losses.l_c
           << ",\"l_a\":" << e.losses.l_a << ",\"l_st\":" << e.losses.l_st
           << ",\"l_total\":" << e.losses.l_total
           << ",\"coverage\":" << e.losses.pseudo_label_coverage;
        if (e.eval_dice >= 0)
            os << ",\"dice\":" << e.eval_dice << ",\"jaccard\":" << e.eval_jaccard;
        os << "}\n";
    }
}

Trainer::Trainer(model::AkgNet net, TrainConfig config, attr::AttributeParser parser)
    : net_(std::move(net)),
      config_(config),
      parser_(std::move(parser)),
      optimizer_(net_->trainable_parameters(),
                 torch::optim::AdamOptions(config.lr).betas({0.9, 0.999})),
      rng_(static_cast<std::uint32_t>(config.seed)) {
    config_.validate();
}

torch::Tensor Trainer::batch_images(const std::vector<const data::ImageTextSample*>& batch) const {
    std::vector<torch::Tensor> images;
    images.reserve(batch.size());
    for (const auto* s : batch) images.push_back(s->image);
    return torch::stack(images);
}

losses::LossReport Trainer::train_step(const std::vector<const data::ImageTextSample*>& batch,
                                       int epoch) {
    if (batch.empty()) throw std::invalid_argument("batch must be non-empty");
    const auto& w = config_.weights;
    const bool attr_input = net_->config().attr_input;

    std::vector<std::string> texts;
    std::vector<long> target_vals;
    for (const auto* s : batch) {
        texts.push_back(attr_input ? s->attr_description.text : s->raw_text);
        for (int m = 0; m < attr::kNumAttributes; ++m)
            target_vals.push_back(s->attr_labels.categories[m]);
    }
    auto targets = torch::tensor(target_vals, torch::kLong)
                       .reshape({static_cast<long>(batch.size()), attr::kNumAttributes});
    std::vector<torch::Tensor> coarse;
    for (const auto* s : batch) coarse.push_back(s->coarse_mask);
    auto coarse_batch = torch::stack(coarse);

    auto bundle = net_->forward(batch_images(batch), texts, w.alpha);

    auto l_c = losses::coarse_loss(bundle.mask_logits, coarse_batch);
    auto l_a = losses::attribute_loss(bundle.attr_logits, targets);
    const bool st_active = epoch >= config_.warmup_epochs && w.lambda_st > 0;
    auto l_st = st_active ? losses::self_training_loss(bundle.mask_logits, w.delta)
                          : torch::zeros({});
    auto total = losses::total_loss(l_c, l_a, l_st, w);

    losses::LossReport report;
    report.l_c = l_c.item<double>();
    report.l_a = l_a.item<double>();
    report.l_st = l_st.item<double>();
    report.l_total = total.item<double>();
    report.pseudo_label_coverage =
        losses::pseudo_labels(bundle.mask_logits, w.delta).mean().item<double>();

    const std::pair<const char*, double> terms[] = {
        {"l_c", report.l_c}, {"l_a", report.l_a}, {"l_st", report.l_st}};
    for (const auto& [name, value] : terms) {
        if (!std::isfinite(value))
            throw NonFiniteLoss(std::string(name) + " is non-finite at step " +
                                std::to_string(global_step_));
    }

    optimizer_.zero_grad();
    total.backward();
    if (config_.grad_clip > 0)
        torch::nn::utils::clip_grad_norm_(net_->trainable_parameters(), config_.grad_clip);
    optimizer_.step();

    if (step_log_) *step_log_ << report.to_json_line(global_step_) << '\n';
    ++global_step_;
    return report;
}

History Trainer::fit(const std::vector<data::ImageTextSample>& dataset, Mode mode,
                     std::optional<std::filesystem::path> run_dir) {
    if (dataset.empty()) throw std::invalid_argument("dataset must be non-empty");
    torch::manual_seed(config_.seed);
    rng_.seed(static_cast<std::uint32_t>(config_.seed));

    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);

    std::vector<size_t> train_idx, eval_idx;
    if (mode == Mode::inductive) {
        const size_t n_eval = std::max<size_t>(1, static_cast<size_t>(
                                                      dataset.size() * config_.holdout_fraction));
        train_idx.assign(order.begin(), order.end() - n_eval);
        eval_idx.assign(order.end() - n_eval, order.end());
        if (train_idx.empty()) throw std::invalid_argument("dataset too small for a holdout");
    } else {
        train_idx = order;
        eval_idx = order;
    }
    bool can_eval = true;
    for (size_t i : eval_idx) can_eval &= dataset[i].has_gt();
    std::vector<data::ImageTextSample> eval_set;
    if (can_eval)
        for (size_t i : eval_idx) eval_set.push_back(dataset[i]);

    std::ofstream step_log;
    if (run_dir) {
        std::filesystem::create_directories(*run_dir);
        step_log.open(*run_dir / "train_log.jsonl");
        step_log_ = &step_log;
    }

    History history;
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng_);
        losses::LossReport epoch_mean;
        int n_batches = 0;
        for (size_t start = 0; start < train_idx.size(); start += config_.batch_size) {
            const size_t end = std::min(start + config_.batch_size, train_idx.size());
            std::vector<data::ImageTextSample> augmented;
            std::vector<const data::ImageTextSample*> batch;
            for (size_t i = start; i < end; ++i) {
                const auto& s = dataset[train_idx[i]];
                if (config_.augment)
                    augmented.push_back(data::augment_sample(s, rng_, parser_));
                else
                    batch.push_back(&s);
            }
            for (const auto& s : augmented) batch.push_back(&s);
            const auto report = train_step(batch, epoch);
            epoch_mean.l_c += report.l_c;
            epoch_mean.l_a += report.l_a;
            epoch_mean.l_st += report.l_st;
            epoch_mean.l_total += report.l_total;
            epoch_mean.pseudo_label_coverage += report.pseudo_label_coverage;
            ++n_batches;
        }
        if (n_batches > 0) {
            epoch_mean.l_c /= n_batches;
            epoch_mean.l_a /= n_batches;
            epoch_mean.l_st /= n_batches;
            epoch_mean.l_total /= n_batches;
            epoch_mean.pseudo_label_coverage /= n_batches;
        }

        EpochRecord record;
        record.epoch = epoch;
        record.losses = epoch_mean;
        const bool eval_now = can_eval && (config_.eval_every > 0) &&
                              ((epoch + 1) % config_.eval_every == 0 || epoch + 1 == config_.epochs);
        if (eval_now) {
            const auto result = eval::evaluate(net_, eval_set, config_.weights.alpha);
            record.eval_dice = result.dice;
            record.eval_jaccard = result.jaccard;
            if (result.dice > history.best_dice) {
                history.best_dice = result.dice;
                history.best_epoch = epoch;
                if (run_dir) model::save_checkpoint(*run_dir / "best.pt", net_);
            }
        }
        history.epochs.push_back(record);
    }

    if (run_dir) {
        model::save_checkpoint(*run_dir / "last.pt", net_);
        history.save_jsonl(*run_dir / "history.jsonl");
        if (can_eval) {
            std::ofstream ids(*run_dir / "eval_ids.txt");
            for (const auto& s : eval_set) ids << s.id << '\n';
            std::vector<eval::SweepRow> rows;
            rows.push_back({"last", static_cast<double>(config_.epochs),
                            eval::evaluate(net_, eval_set, config_.weights.alpha)});
            if (history.best_epoch >= 0 &&
                std::filesystem::exists(*run_dir / "best.pt")) {
                auto best_net = model::load_checkpoint(*run_dir / "best.pt");
                rows.push_back({"best", static_cast<double>(history.best_epoch),
                                eval::evaluate(best_net, eval_set, config_.weights.alpha)});
            }
            eval::write_results_tsv(*run_dir / "metrics.tsv", rows);
        }
    }
    step_log_ = nullptr;
    return history;
}

}  // namespace akgnet::trainer
