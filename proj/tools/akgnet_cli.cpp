// Command-line entry point: gen-data, parse-attrs, train, eval, sweep.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include <CLI11.hpp>

#include "akgnet/config.hpp"
#include "akgnet/data.hpp"
#include "akgnet/eval.hpp"
#include "akgnet/sweep.hpp"
#include "akgnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace akgnet;

namespace {

struct CommonFlags {
    std::string config_file;
    std::vector<std::string> overrides;  // key=value
    std::string taxonomy_file;
    std::string alias_file;

    config::RunConfig resolve() const {
        config::RunConfig cfg;
        if (!config_file.empty()) cfg = config::RunConfig::load(config_file);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("--set expects key=value, got " + kv);
            cfg.apply(kv.substr(0, eq), kv.substr(eq + 1));
        }
        return cfg;
    }

    attr::AttributeParser make_parser() const {
        auto taxonomy = taxonomy_file.empty() ? attr::AttributeTaxonomy::qata_default()
                                              : attr::AttributeTaxonomy::load(taxonomy_file);
        attr::AttributeParser parser(taxonomy);
        if (!alias_file.empty()) parser.load_aliases(alias_file);
        return parser;
    }
};

fs::path resolve_out(const std::string& out) {
    fs::path p(out);
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("AKGNET_OUT")) return fs::path(root) / p;
    return p;
}

std::vector<data::ImageTextSample> load_dataset(const fs::path& dir,
                                                const attr::AttributeParser& parser,
                                                const config::RunConfig& cfg) {
    data::BaselineSaliency backend;
    std::optional<fs::path> mask_dir;
    if (fs::exists(dir / "masks")) mask_dir = dir / "masks";
    return data::ingest_qata(dir / "images", dir / "texts.tsv", parser, backend,
                             cfg.train.weights.tau, cfg.model.height, cfg.model.width, mask_dir);
}

int cmd_gen_data(const CommonFlags& common, int n, std::uint64_t seed, const std::string& out) {
    auto cfg = common.resolve();
    const auto parser = common.make_parser();
    const auto samples = data::synth_generate(seed, n, cfg.gen, parser, nullptr,
                                              cfg.train.weights.tau);
    const auto out_dir = resolve_out(out);
    data::write_dataset(samples, out_dir);
    cfg.gen.save(out_dir / "gen_config.txt");
    std::cout << "wrote " << samples.size() << " samples to " << out_dir.string() << "\n";
    return 0;
}

int cmd_parse_attrs(const CommonFlags& common, const std::string& in, const std::string& out) {
    const auto parser = common.make_parser();
    std::ifstream is(in);
    if (!is) throw std::runtime_error("cannot read " + in);
    std::ostringstream buffer;
    const auto errors = attr::parse_tsv_stream(parser, is, buffer);
    if (out == "-") {
        std::cout << buffer.str();
    } else {
        std::ofstream os(resolve_out(out));
        if (!os) throw std::runtime_error("cannot write " + out);
        os << buffer.str();
    }
    for (const auto& e : errors)
        std::cerr << "unparseable row " << e.sample_id << ": " << e.message << "\n";
    return errors.empty() ? 0 : 1;
}

int cmd_train(const CommonFlags& common, const std::string& data_dir, const std::string& out,
              const std::string& mode_name) {
    auto cfg = common.resolve();
    const auto parser = common.make_parser();
    const auto mode = trainer::mode_from_string(mode_name);
    const auto dataset = load_dataset(data_dir, parser, cfg);
    if (dataset.empty()) throw std::runtime_error("no samples under " + data_dir);

    const auto run_dir = resolve_out(out);
    fs::create_directories(run_dir);
    cfg.save(run_dir / "config.txt");

    torch::manual_seed(cfg.train.seed);
    model::AkgNet net(cfg.model, parser.taxonomy());
    trainer::Trainer tr(net, cfg.train, parser);
    const auto history = tr.fit(dataset, mode, run_dir);

    if (!history.epochs.empty()) {
        const auto& last = history.epochs.back();
        std::cout << "final l_total " << last.losses.l_total;
        if (last.eval_dice >= 0) std::cout << ", dice " << last.eval_dice;
        std::cout << "\n";
    }
    std::cout << "run directory: " << run_dir.string() << "\n";
    return 0;
}

int cmd_eval(const CommonFlags& common, const std::string& ckpt, const std::string& data_dir,
             const std::string& out, const std::string& ids_file) {
    auto cfg = common.resolve();
    const auto parser = common.make_parser();
    auto net = model::load_checkpoint(ckpt);
    cfg.model = net->config();  // ingest at the checkpoint's resolution
    auto dataset = load_dataset(data_dir, parser, cfg);
    if (!ids_file.empty()) {
        std::ifstream is(ids_file);
        if (!is) throw std::runtime_error("cannot read " + ids_file);
        std::set<std::string> keep;
        std::string id;
        while (std::getline(is, id))
            if (!id.empty()) keep.insert(id);
        std::erase_if(dataset, [&](const auto& s) { return !keep.count(s.id); });
    }
    const auto result = eval::evaluate(net, dataset, cfg.train.weights.alpha);
    std::vector<eval::SweepRow> rows{{"eval", cfg.train.weights.alpha, result}};
    if (out == "-") {
        std::cout << "dice\t" << result.dice << "\njaccard\t" << result.jaccard << "\nn\t"
                  << result.n_samples << "\n";
    } else {
        eval::write_results_tsv(resolve_out(out), rows);
    }
    return 0;
}

int cmd_sweep(const CommonFlags& common, const std::string& data_dir, const std::string& grid,
              const std::string& out, const std::string& mode_name) {
    auto cfg = common.resolve();
    const auto parser = common.make_parser();
    const auto spec = eval::parse_sweep_spec(grid);
    const auto dataset = load_dataset(data_dir, parser, cfg);
    if (dataset.empty()) throw std::runtime_error("no samples under " + data_dir);
    const auto out_dir = resolve_out(out);
    fs::create_directories(out_dir);
    cfg.save(out_dir / "config.txt");
    const auto rows = eval::ablation_sweep(cfg.train, cfg.model, parser, dataset,
                                           trainer::mode_from_string(mode_name), spec, out_dir);
    for (const auto& r : rows)
        std::cout << r.label << "\tdice " << r.result.dice << "\tjaccard " << r.result.jaccard
                  << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AKGNet: unsupervised lung-infected-area segmentation from image-text pairs"};
    app.require_subcommand(1);

    CommonFlags common;
    app.add_option("--config", common.config_file, "key-value config file");
    app.add_option("--set", common.overrides, "override a config key (key=value)");
    app.add_option("--taxonomy", common.taxonomy_file, "attribute taxonomy file");
    app.add_option("--aliases", common.alias_file, "spelling alias TSV");

    int n = 0;
    std::uint64_t seed = 0;
    std::string out = "-", data_dir, mode = "inductive", ckpt, grid, in_file, ids_file;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--n", n, "number of samples")->required();
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--out", out, "output directory")->required();

    auto* parse = app.add_subcommand("parse-attrs", "batch attribute extraction to TSV");
    parse->add_option("--in", in_file, "input TSV (sample_id, raw_text)")->required();
    parse->add_option("--out", out, "output TSV ('-' for stdout)");

    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out, "run directory")->required();
    train->add_option("--mode", mode, "transductive or inductive");

    auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint");
    evalc->add_option("--ckpt", ckpt, "checkpoint file")->required();
    evalc->add_option("--data", data_dir, "dataset directory")->required();
    evalc->add_option("--out", out, "metrics TSV ('-' for stdout)");
    evalc->add_option("--ids", ids_file, "restrict to sample ids listed in this file");

    auto* sweep = app.add_subcommand("sweep", "ablation / hyperparameter sweep");
    sweep->add_option("--data", data_dir, "dataset directory")->required();
    sweep->add_option("--grid", grid, "param=v1,v2,... (delta, lambda_*, la, aica, art, lst)")
        ->required();
    sweep->add_option("--out", out, "output directory")->required();
    sweep->add_option("--mode", mode, "transductive or inductive");

    for (auto* sub : {gen, parse, train, evalc, sweep})
        sub->fallthrough();  // accept --config/--set after the subcommand

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            if (n < 1) {
                std::cerr << "error: --n must be >= 1\n";
                return 2;
            }
            return cmd_gen_data(common, n, seed, out);
        }
        if (parse->parsed()) return cmd_parse_attrs(common, in_file, out);
        if (train->parsed()) return cmd_train(common, data_dir, out, mode);
        if (evalc->parsed()) return cmd_eval(common, ckpt, data_dir, out, ids_file);
        if (sweep->parsed()) return cmd_sweep(common, data_dir, grid, out, mode);
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const data::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
