#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "akgnet/data.hpp"
#include "akgnet/eval.hpp"
#include "test_util.hpp"

using namespace akgnet;

namespace {

struct ConstantBackend : data::SaliencyBackend {
    torch::Tensor logits;
    torch::Tensor score(const torch::Tensor&) const override { return logits; }
};

data::GeneratorConfig small_gen() {
    data::GeneratorConfig g;
    g.height = 64;
    g.width = 64;
    return g;
}

}  // namespace

TEST_CASE("coarse mask thresholding at the boundary") {
    ConstantBackend backend;
    backend.logits = torch::zeros({1, 16, 16});
    auto image = torch::rand({1, 16, 16});
    // sigmoid(0) = 0.5 is not strictly greater than tau = 0.5
    CHECK(data::coarse_mask(image, backend, 0.5).sum().item<double>() == 0.0);
}

TEST_CASE("coarse mask reproduces a saturated disk") {
    const int n = 32;
    auto yy = torch::arange(n).reshape({n, 1}).expand({n, n}).to(torch::kFloat);
    auto xx = torch::arange(n).reshape({1, n}).expand({n, n}).to(torch::kFloat);
    auto disk = ((yy - 16).pow(2) + (xx - 16).pow(2) < 64).to(torch::kFloat);
    ConstantBackend backend;
    backend.logits = (disk * 20.0 - 10.0).unsqueeze(0);
    auto mask = data::coarse_mask(torch::rand({1, n, n}), backend, 0.5);
    CHECK(torch::equal(mask, disk.unsqueeze(0)));
    // strictly binary
    CHECK(((mask == 0.0) | (mask == 1.0)).all().item<bool>());
}

TEST_CASE("coarse mask validates inputs") {
    ConstantBackend backend;
    backend.logits = torch::zeros({1, 8, 8});
    CHECK_THROWS_AS(data::coarse_mask(torch::rand({1, 16, 16}), backend, 0.5),
                    data::ShapeMismatch);
    CHECK_THROWS_AS(data::coarse_mask(torch::rand({1, 8, 8}), backend, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(data::coarse_mask(torch::rand({1, 8, 8}), backend, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(data::coarse_mask(torch::rand({3, 8, 8}), backend, 0.5),
                    data::ShapeMismatch);
}

TEST_CASE("raising tau never adds positive pixels") {
    attr::AttributeParser parser;
    data::BaselineSaliency backend;
    const auto sample = data::synth_one(7, small_gen(), parser);
    double prev = 1e18;
    for (double tau : {0.3, 0.4, 0.5, 0.6, 0.7, 0.8}) {
        const double count =
            data::coarse_mask(sample.image, backend, tau).sum().item<double>();
        CHECK(count <= prev);
        prev = count;
    }
}

TEST_CASE("coarse mask is a pure function of its inputs") {
    attr::AttributeParser parser;
    data::BaselineSaliency backend;
    const auto sample = data::synth_one(3, small_gen(), parser);
    auto a = data::coarse_mask(sample.image, backend, 0.5);
    auto b = data::coarse_mask(sample.image, backend, 0.5);
    CHECK(torch::equal(a, b));
}

TEST_CASE("generation is deterministic under the seed") {
    attr::AttributeParser parser;
    const auto a = data::synth_generate(42, 5, small_gen(), parser);
    const auto b = data::synth_generate(42, 5, small_gen(), parser);
    REQUIRE(a.size() == 5);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(torch::equal(a[i].image, b[i].image));
        CHECK(torch::equal(a[i].gt_mask, b[i].gt_mask));
        CHECK(torch::equal(a[i].coarse_mask, b[i].coarse_mask));
        CHECK(a[i].raw_text == b[i].raw_text);
        CHECK(a[i].attr_labels == b[i].attr_labels);
    }
    const auto c = data::synth_generate(43, 5, small_gen(), parser);
    CHECK(!torch::equal(a[0].image, c[0].image));
}

TEST_CASE("generated samples satisfy the field invariants") {
    attr::AttributeParser parser;
    const auto samples = data::synth_generate(1, 20, small_gen(), parser);
    for (const auto& s : samples) {
        CHECK(s.image.sizes() == torch::IntArrayRef({1, 64, 64}));
        CHECK(s.image.min().item<double>() >= 0.0);
        CHECK(s.image.max().item<double>() <= 1.0);
        CHECK(((s.coarse_mask == 0.0) | (s.coarse_mask == 1.0)).all().item<bool>());
        CHECK(((s.gt_mask == 0.0) | (s.gt_mask == 1.0)).all().item<bool>());
        CHECK(s.has_gt());
        // text fields agree with the stored labels
        CHECK(parser.parse_description(s.raw_text) == s.attr_labels);
        CHECK(parser.parse_attribute_description(s.attr_description.text) == s.attr_labels);
    }
}

TEST_CASE("forced labels place one blob in the upper-left zone") {
    attr::AttributeParser parser;
    const attr::AttributeLabels forced{{0, 0, 1, 6}};  // unilateral, one, upper-left
    const auto s = data::synth_one(0, small_gen(), parser, forced);
    CHECK(s.attr_labels == forced);
    CHECK(parser.parse_description(s.raw_text) == forced);
    CHECK(data::count_components(s.gt_mask) == 1);
    CHECK(data::labels_from_mask(s.gt_mask, parser.taxonomy()) == forced);
    // every ground-truth pixel lies in the left half
    auto cols = s.gt_mask.squeeze(0).sum(0);
    CHECK(cols.slice(0, 32, 64).sum().item<double>() == 0.0);
}

TEST_CASE("ground truth component count always matches the count attribute") {
    attr::AttributeParser parser;
    const auto samples = data::synth_generate(123, 1000, small_gen(), parser);
    for (const auto& s : samples) {
        CHECK(data::count_components(s.gt_mask) == s.attr_labels.categories[1] + 1);
        // full geometric consistency: side, count and zones re-derive from the mask
        CHECK(data::labels_from_mask(s.gt_mask, parser.taxonomy()) == s.attr_labels);
    }
}

TEST_CASE("baseline coarse masks overlap ground truth with Dice >= 0.5") {
    attr::AttributeParser parser;
    const auto samples = data::synth_generate(77, 100, small_gen(), parser);
    const auto result = eval::evaluate_coarse(samples);
    CHECK(result.n_samples == 100);
    CHECK(result.dice >= 0.5);
}

TEST_CASE("generator rejects unrealizable requests") {
    attr::AttributeParser parser;
    auto g = small_gen();
    g.max_blobs = 2;
    // four areas with max_blobs = 2
    CHECK_THROWS_AS(data::synth_one(0, g, parser, attr::AttributeLabels{{1, 3, 1, 1}}),
                    data::ConfigError);
    // bilateral sides but only one area
    CHECK_THROWS_AS(data::synth_one(0, small_gen(), parser, attr::AttributeLabels{{1, 0, 1, 1}}),
                    data::ConfigError);
    // "no" on both sides cannot host any blob
    CHECK_THROWS_AS(data::synth_one(0, small_gen(), parser, attr::AttributeLabels{{0, 0, 6, 6}}),
                    data::ConfigError);
    auto g7 = small_gen();
    g7.max_blobs = 7;
    CHECK_THROWS_AS(data::synth_one(0, g7, parser), data::ConfigError);
    CHECK_THROWS_AS(data::synth_generate(0, 0, small_gen(), parser), data::ConfigError);
}

TEST_CASE("count_components sees diagonal connectivity") {
    auto m = torch::zeros({1, 8, 8});
    m[0][1][1] = 1;
    m[0][2][2] = 1;  // diagonal neighbor, same component
    m[0][6][6] = 1;
    CHECK(data::count_components(m) == 2);
}

TEST_CASE("generator config round trips through its file format") {
    testutil::ScratchDir dir("gen_cfg");
    auto g = small_gen();
    g.noise_sigma = 0.05;
    g.distractor_rate = 0.25;
    g.save(dir.path / "gen.txt");
    const auto loaded = data::GeneratorConfig::load(dir.path / "gen.txt");
    CHECK(loaded.height == 64);
    CHECK(loaded.width == 64);
    CHECK(loaded.noise_sigma == doctest::Approx(0.05));
    CHECK(loaded.distractor_rate == doctest::Approx(0.25));

    std::ofstream(dir.path / "bad.txt") << "mystery = 3\n";
    CHECK_THROWS_AS(data::GeneratorConfig::load(dir.path / "bad.txt"), data::ConfigError);
    CHECK_THROWS_AS(data::GeneratorConfig::load(dir.path / "missing.txt"), data::ConfigError);
}

TEST_CASE("png io round trips a binary mask exactly") {
    testutil::ScratchDir dir("png_io");
    auto mask = (torch::rand({1, 32, 32}) > 0.5).to(torch::kFloat);
    data::save_png(dir.path / "m.png", mask);
    auto back = data::load_png(dir.path / "m.png");
    CHECK(torch::equal((back > 0.5).to(torch::kFloat), mask));
    CHECK_THROWS_AS(data::load_png(dir.path / "nothing.png"), data::MissingFile);
}

TEST_CASE("dataset write and ingest round trip") {
    testutil::ScratchDir dir("dataset_rt");
    attr::AttributeParser parser;
    data::BaselineSaliency backend;
    const auto samples = data::synth_generate(5, 6, small_gen(), parser);
    data::write_dataset(samples, dir.path / "d");

    const auto loaded =
        data::ingest_qata(dir.path / "d" / "images", dir.path / "d" / "texts.tsv", parser,
                          backend, 0.5, 64, 64, dir.path / "d" / "masks");
    REQUIRE(loaded.size() == samples.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].id == samples[i].id);
        CHECK(loaded[i].attr_labels == samples[i].attr_labels);
        CHECK(loaded[i].has_gt());
        CHECK(torch::equal(loaded[i].gt_mask, samples[i].gt_mask));
        // 8-bit quantization may flip borderline pixels; demand near-identity
        CHECK(eval::dice_metric(loaded[i].coarse_mask, samples[i].coarse_mask) >= 0.95);
    }

    // without a mask dir the ground truth is absent
    const auto no_gt = data::ingest_qata(dir.path / "d" / "images",
                                         dir.path / "d" / "texts.tsv", parser, backend, 0.5,
                                         64, 64);
    CHECK(!no_gt.front().has_gt());
}

TEST_CASE("ingest error contracts") {
    testutil::ScratchDir dir("ingest_err");
    attr::AttributeParser parser;
    data::BaselineSaliency backend;

    // empty directory -> empty list
    std::filesystem::create_directories(dir.path / "empty");
    CHECK(data::ingest_qata(dir.path / "empty", dir.path / "none.tsv", parser, backend, 0.5,
                            64, 64)
              .empty());

    // image without a text row
    std::filesystem::create_directories(dir.path / "images");
    data::save_png(dir.path / "images" / "s1.png", torch::rand({1, 64, 64}));
    std::ofstream(dir.path / "texts.tsv") << "";
    try {
        data::ingest_qata(dir.path / "images", dir.path / "texts.tsv", parser, backend, 0.5,
                          64, 64);
        FAIL("expected MissingFile");
    } catch (const data::MissingFile& e) {
        CHECK(std::string(e.what()).find("s1") != std::string::npos);
    }

    // unparseable text names the sample id
    std::ofstream(dir.path / "texts.tsv") << "s1\tcomplete gibberish here\n";
    try {
        data::ingest_qata(dir.path / "images", dir.path / "texts.tsv", parser, backend, 0.5,
                          64, 64);
        FAIL("expected ParseError");
    } catch (const attr::ParseError& e) {
        CHECK(std::string(e.what()).find("sample s1") != std::string::npos);
    }

    // missing mask file
    std::ofstream(dir.path / "texts.tsv")
        << "s1\tUnilateral pulmonary infection, one infected area, upper left lung.\n";
    std::filesystem::create_directories(dir.path / "masks");
    CHECK_THROWS_AS(data::ingest_qata(dir.path / "images", dir.path / "texts.tsv", parser,
                                      backend, 0.5, 64, 64, dir.path / "masks"),
                    data::MissingFile);
}

TEST_CASE("augmentation keeps text and labels consistent") {
    attr::AttributeParser parser;
    const auto sample = data::synth_one(9, small_gen(), parser);
    std::mt19937 rng(4);
    for (int i = 0; i < 25; ++i) {
        const auto aug = data::augment_sample(sample, rng, parser);
        CHECK(aug.image.sizes() == sample.image.sizes());
        CHECK(aug.image.min().item<double>() >= 0.0);
        CHECK(aug.image.max().item<double>() <= 1.0);
        CHECK(((aug.coarse_mask == 0.0) | (aug.coarse_mask == 1.0)).all().item<bool>());
        CHECK(parser.parse_description(aug.raw_text) == aug.attr_labels);
        CHECK(parser.parse_attribute_description(aug.attr_description.text) == aug.attr_labels);
        // count and laterality are rotation/flip invariant
        CHECK(aug.attr_labels.categories[1] == sample.attr_labels.categories[1]);
        CHECK(aug.attr_labels.categories[0] == sample.attr_labels.categories[0]);
    }

    // identical rng state gives identical augmentation
    std::mt19937 r1(11), r2(11);
    const auto a = data::augment_sample(sample, r1, parser);
    const auto b = data::augment_sample(sample, r2, parser);
    CHECK(torch::equal(a.image, b.image));
    CHECK(a.raw_text == b.raw_text);
}

TEST_CASE("horizontal flips swap the per-side position attributes") {
    attr::AttributeParser parser;
    const attr::AttributeLabels forced{{0, 0, 1, 6}};  // upper-left only
    const auto sample = data::synth_one(2, small_gen(), parser, forced);
    // scan rng seeds until the horizontal-flip branch fires without the vertical one
    for (std::uint32_t seed = 0; seed < 64; ++seed) {
        std::mt19937 probe(seed);
        data::augment_sample(sample, probe, parser);
        std::mt19937 rng(seed);
        const auto aug = data::augment_sample(sample, rng, parser);
        if (aug.attr_labels.categories[2] == 6 && aug.attr_labels.categories[3] == 1) {
            // the blob is now on the image-right side
            auto cols = aug.gt_mask.squeeze(0).sum(0);
            CHECK(cols.slice(0, 0, 28).sum().item<double>() == 0.0);
            return;
        }
    }
    FAIL("no seed triggered a pure horizontal flip");
}
