#include "akgnet/sweep.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace akgnet::eval {

namespace {

void apply_param(const std::string& param, double value, trainer::TrainConfig& train,
                 model::ModelConfig& model) {
    if (param == "delta") train.weights.delta = value;
    else if (param == "alpha") train.weights.alpha = value;
    else if (param == "lambda_c") train.weights.lambda_c = value;
    else if (param == "lambda_a") train.weights.lambda_a = value;
    else if (param == "lambda_st") train.weights.lambda_st = value;
    else if (param == "lr") train.lr = value;
    else if (param == "la") train.weights.lambda_a = value > 0.5 ? train.weights.lambda_a : 0.0;
    else if (param == "lst") train.weights.lambda_st = value > 0.5 ? train.weights.lambda_st : 0.0;
    else if (param == "aica") model.use_aica = value > 0.5;
    else if (param == "art") model.attr_input = value > 0.5;
    else throw std::invalid_argument("unknown sweep parameter: " + param);
}

}  // namespace

SweepSpec parse_sweep_spec(const std::string& grid) {
    const auto eq = grid.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("grid must look like param=v1,v2,...: " + grid);
    SweepSpec spec;
    spec.param = grid.substr(0, eq);
    std::string rest = grid.substr(eq + 1);
    size_t start = 0;
    while (start <= rest.size()) {
        const auto comma = rest.find(',', start);
        const auto field = rest.substr(start, comma == std::string::npos ? comma : comma - start);
        if (field.empty()) throw std::invalid_argument("empty value in grid: " + grid);
        spec.values.push_back(std::stod(field));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (spec.values.empty()) throw std::invalid_argument("grid has no values: " + grid);
    return spec;
}

std::vector<SweepRow> ablation_sweep(const trainer::TrainConfig& base_train,
                                     const model::ModelConfig& base_model,
                                     const attr::AttributeParser& parser,
                                     const std::vector<data::ImageTextSample>& dataset,
                                     trainer::Mode mode, const SweepSpec& spec,
                                     std::optional<std::filesystem::path> out_dir) {
    // shared deterministic split so every cell sees the same data
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937 rng(static_cast<std::uint32_t>(base_train.seed));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<data::ImageTextSample> train_set, test_set;
    if (mode == trainer::Mode::inductive) {
        const size_t n_eval = std::max<size_t>(
            1, static_cast<size_t>(dataset.size() * base_train.holdout_fraction));
        if (n_eval >= dataset.size())
            throw std::invalid_argument("dataset too small for an inductive sweep");
        const size_t n_train = dataset.size() - n_eval;
        for (size_t i = 0; i < n_train; ++i) train_set.push_back(dataset[order[i]]);
        for (size_t i = n_train; i < dataset.size(); ++i) test_set.push_back(dataset[order[i]]);
    } else {
        train_set = dataset;
        test_set = dataset;
    }

    std::vector<SweepRow> rows;
    for (const double value : spec.values) {
        auto train_cfg = base_train;
        auto model_cfg = base_model;
        apply_param(spec.param, value, train_cfg, model_cfg);
        train_cfg.eval_every = 0;  // score once after training

        torch::manual_seed(base_train.seed);
        model::AkgNet net(model_cfg, parser.taxonomy());
        trainer::Trainer tr(net, train_cfg, parser);
        tr.fit(train_set, trainer::Mode::transductive);

        SweepRow row;
        row.label = spec.param + "=" + std::to_string(value).substr(0, 5);
        row.value = value;
        row.result = evaluate(tr.net(), test_set, train_cfg.weights.alpha);
        rows.push_back(std::move(row));
    }

    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        write_results_tsv(*out_dir / "results.tsv", rows);
        write_results_markdown(*out_dir / "results.md", rows, "Sweep over " + spec.param);
        plot_sweep(*out_dir / "results.png", rows, spec.param);
    }
    return rows;
}

}  // namespace akgnet::eval
