#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "akgnet/attr_text.hpp"
#include "test_util.hpp"

using namespace akgnet::attr;

TEST_CASE("default taxonomy matches the four-attribute schema") {
    const auto tax = AttributeTaxonomy::qata_default();
    REQUIRE(tax.attributes.size() == 4);
    CHECK(tax.num_values(0) == 2);
    CHECK(tax.num_values(1) == 6);
    CHECK(tax.num_values(2) == 7);
    CHECK(tax.num_values(3) == 7);
    CHECK(tax.attributes[0].values == std::vector<std::string>{"unilateral", "bilateral"});
    CHECK(tax.attributes[1].values ==
          std::vector<std::string>{"one", "two", "three", "four", "five", "six"});
    const std::vector<std::string> positions = {"all",          "upper",        "middle",
                                                "lower",        "upper middle", "middle lower",
                                                "no"};
    CHECK(tax.attributes[2].values == positions);
    CHECK(tax.attributes[3].values == positions);
    CHECK_NOTHROW(tax.validate());
    CHECK(tax.value_index(0, "bilateral") == 1);
    CHECK(tax.value_index(2, "middle lower") == 5);
    CHECK(tax.value_index(2, "nonsense") == -1);
}

TEST_CASE("taxonomy validation rejects malformed schemas") {
    auto tax = AttributeTaxonomy::qata_default();
    tax.attributes.pop_back();
    CHECK_THROWS_AS(tax.validate(), std::invalid_argument);

    auto dup = AttributeTaxonomy::qata_default();
    dup.attributes[1].values[1] = "one";  // duplicate
    CHECK_THROWS_AS(dup.validate(), std::invalid_argument);

    auto bad_id = AttributeTaxonomy::qata_default();
    bad_id.attributes[2].id = 9;
    CHECK_THROWS_AS(bad_id.validate(), std::invalid_argument);
}

TEST_CASE("taxonomy file round trip") {
    testutil::ScratchDir dir("attr_tax");
    const auto tax = AttributeTaxonomy::qata_default();
    tax.save(dir.path / "tax.txt");
    const auto loaded = AttributeTaxonomy::load(dir.path / "tax.txt");
    REQUIRE(loaded.attributes.size() == tax.attributes.size());
    for (int m = 0; m < kNumAttributes; ++m) {
        CHECK(loaded.attributes[m].id == tax.attributes[m].id);
        CHECK(loaded.attributes[m].values == tax.attributes[m].values);
    }
}

TEST_CASE("clinical sentence parses to the documented categories") {
    AttributeParser parser;
    const auto labels = parser.parse_description(
        "Bilateral pulmonary infection, three infected areas, "
        "middle lower left lung and upper middle right lung.");
    CHECK(labels.categories[0] == 1);  // bilateral
    CHECK(labels.categories[1] == 2);  // three
    CHECK(labels.categories[2] == 5);  // middle lower
    CHECK(labels.categories[3] == 4);  // upper middle
}

TEST_CASE("single-side sentences map the absent side to 'no'") {
    AttributeParser parser;
    const auto labels = parser.parse_description(
        "Unilateral pulmonary infection, one infected area, upper left lung.");
    CHECK(labels == AttributeLabels{{0, 0, 1, 6}});

    const auto right_only = parser.parse_description(
        "Unilateral pulmonary infection, two infected areas, all right lung.");
    CHECK(right_only == AttributeLabels{{0, 1, 6, 0}});
}

TEST_CASE("'all ... and all ...' sentence parses on both sides") {
    AttributeParser parser;
    const auto labels = parser.parse_description(
        "Bilateral pulmonary infection, two infected areas, "
        "all left lung and all right lung.");
    CHECK(labels == AttributeLabels{{1, 1, 0, 0}});
}

TEST_CASE("'all of the left lung' phrasing is tolerated") {
    AttributeParser parser;
    const auto labels = parser.parse_description(
        "Unilateral pulmonary infection, one infected area, all of the left lung.");
    CHECK(labels == AttributeLabels{{0, 0, 0, 6}});
}

TEST_CASE("parsing is case-insensitive and whitespace-tolerant") {
    AttributeParser parser;
    const auto a = parser.parse_description(
        "BILATERAL PULMONARY INFECTION,  THREE INFECTED AREAS ,   "
        "middle LOWER left lung AND upper MIDDLE right lung.");
    CHECK(a == AttributeLabels{{1, 2, 5, 4}});
}

TEST_CASE("parsing is deterministic") {
    AttributeParser parser;
    const std::string text =
        "Bilateral pulmonary infection, four infected areas, "
        "lower left lung and middle right lung.";
    CHECK(parser.parse_description(text) == parser.parse_description(text));
}

TEST_CASE("exhaustive 588-combination round trip through both renderers") {
    AttributeParser parser;
    int combos = 0;
    for (int a1 = 0; a1 < 2; ++a1)
        for (int a2 = 0; a2 < 6; ++a2)
            for (int a3 = 0; a3 < 7; ++a3)
                for (int a4 = 0; a4 < 7; ++a4) {
                    const AttributeLabels labels{{a1, a2, a3, a4}};
                    const auto text = parser.render_text(labels);
                    CHECK(parser.parse_description(text) == labels);
                    const auto desc = parser.to_attribute_description(labels);
                    CHECK(parser.parse_attribute_description(desc.text) == labels);
                    ++combos;
                }
    CHECK(combos == 2 * 6 * 7 * 7);
}

TEST_CASE("compact description formatting") {
    AttributeParser parser;
    CHECK(parser.to_attribute_description({{1, 2, 5, 4}}).text ==
          "Bilateral, three, middle lower, upper middle.");
    CHECK(parser.to_attribute_description({{0, 0, 6, 1}}).text ==
          "Unilateral, one, no, upper.");
    const auto desc = parser.to_attribute_description({{1, 3, 0, 0}});
    CHECK(!desc.tokens.empty());
    CHECK(desc.tokens.back() == ".");
}

TEST_CASE("render_text keeps both sides explicit when both are 'no'") {
    AttributeParser parser;
    const auto text = parser.render_text({{0, 0, 6, 6}});
    CHECK(text.find("no left lung") != std::string::npos);
    CHECK(text.find("no right lung") != std::string::npos);
    CHECK(parser.parse_description(text) == AttributeLabels{{0, 0, 6, 6}});
}

TEST_CASE("render_text uses the singular for one infected area") {
    AttributeParser parser;
    CHECK(parser.render_text({{0, 0, 1, 6}}).find("one infected area,") != std::string::npos);
    CHECK(parser.render_text({{1, 4, 1, 2}}).find("five infected areas,") != std::string::npos);
}

TEST_CASE("encode_targets emits one-hot vectors") {
    AttributeParser parser;
    const auto onehots = parser.encode_targets({{1, 2, 5, 6}});
    CHECK(onehots[0] == std::vector<float>{0, 1});
    CHECK(onehots[1] == std::vector<float>{0, 0, 1, 0, 0, 0});
    CHECK(onehots[2][5] == 1.0f);
    CHECK(onehots[3][6] == 1.0f);
    for (int m = 0; m < kNumAttributes; ++m) {
        float sum = 0;
        for (float v : onehots[m]) sum += v;
        CHECK(sum == 1.0f);
    }
    CHECK_THROWS_AS(parser.encode_targets({{0, 9, 0, 0}}), std::out_of_range);
}

TEST_CASE("unknown words raise UnparseableClause with the clause index") {
    AttributeParser parser;
    try {
        parser.parse_description(
            "Trilateral pulmonary infection, one infected area, upper left lung.");
        FAIL("expected UnparseableClause");
    } catch (const UnparseableClause& e) {
        CHECK(e.clause_index == 1);
        CHECK(std::string(e.what()).find("trilateral") != std::string::npos);
    }
    try {
        parser.parse_description(
            "Bilateral pulmonary infection, seven infected areas, "
            "upper left lung and upper right lung.");
        FAIL("expected UnparseableClause");
    } catch (const UnparseableClause& e) {
        CHECK(e.clause_index == 2);
    }
    try {
        parser.parse_description(
            "Bilateral pulmonary infection, two infected areas, sideways left lung.");
        FAIL("expected UnparseableClause");
    } catch (const UnparseableClause& e) {
        CHECK(e.clause_index == 3);
    }
}

TEST_CASE("clause 3 must name at least one side") {
    AttributeParser parser;
    CHECK_THROWS_AS(parser.parse_description(
                        "Bilateral pulmonary infection, two infected areas, upper lung."),
                    UnparseableClause);
}

TEST_CASE("missing clauses are reported with the count found") {
    AttributeParser parser;
    try {
        parser.parse_description("Bilateral pulmonary infection.");
        FAIL("expected MissingClause");
    } catch (const MissingClause& e) {
        CHECK(e.n_found == 1);
    }
    try {
        parser.parse_description("");
        FAIL("expected MissingClause");
    } catch (const MissingClause& e) {
        CHECK(e.n_found == 0);
    }
    CHECK_THROWS_AS(parser.parse_description(
                        "Bilateral pulmonary infection, one infected area, upper left lung, "
                        "and more."),
                    UnparseableClause);
}

TEST_CASE("compact parser requires exactly four fields") {
    AttributeParser parser;
    CHECK_THROWS_AS(parser.parse_attribute_description("Bilateral, three."), MissingClause);
    CHECK_THROWS_AS(parser.parse_attribute_description("Bilateral, three, upper, wild."),
                    UnparseableClause);
}

TEST_CASE("default alias table corrects common misspellings") {
    AttributeParser parser;
    const auto labels = parser.parse_description(
        "Bilaterial pulmonary infectoin, three infeced areas, "
        "midle lowr left lung and uper midle right lung.");
    CHECK(labels == AttributeLabels{{1, 2, 5, 4}});
}

TEST_CASE("custom aliases via add_alias and a TSV file") {
    AttributeParser parser;
    parser.add_alias("binary", "bilateral");
    CHECK(parser.parse_description(
              "Binary pulmonary infection, one infected area, upper left lung.")
              .categories[0] == 1);

    testutil::ScratchDir dir("attr_alias");
    {
        std::ofstream os(dir.path / "aliases.tsv");
        os << "# fixes\nthre\tthree\n";
    }
    AttributeParser p2;
    p2.load_aliases(dir.path / "aliases.tsv");
    CHECK(p2.parse_description(
              "Bilateral pulmonary infection, thre infected areas, "
              "upper left lung and lower right lung.")
              .categories[1] == 2);
    CHECK_THROWS(p2.load_aliases(dir.path / "missing.tsv"));
}

TEST_CASE("tokenize lowercases words and keeps separators") {
    const auto toks = tokenize("Bilateral, three areas.");
    REQUIRE(toks.size() == 5);
    CHECK(toks[0] == "bilateral");
    CHECK(toks[1] == ",");
    CHECK(toks[4] == ".");
}

TEST_CASE("batch TSV parsing emits category columns and collects row errors") {
    AttributeParser parser;
    std::istringstream in(
        "s1\tBilateral pulmonary infection, three infected areas, "
        "middle lower left lung and upper middle right lung.\n"
        "s2\tnot a parseable description at all\n"
        "s3\tUnilateral pulmonary infection, one infected area, upper left lung.\n"
        "no_tab_here\n");
    std::ostringstream out;
    const auto errors = parse_tsv_stream(parser, in, out);
    REQUIRE(errors.size() == 2);
    CHECK(errors[0].sample_id == "s2");
    CHECK(errors[1].sample_id == "line 4");

    std::istringstream rows(out.str());
    std::string line;
    std::getline(rows, line);
    CHECK(line == "s1\t1\t2\t5\t4\tBilateral, three, middle lower, upper middle.");
    std::getline(rows, line);
    CHECK(line == "s3\t0\t0\t1\t6\tUnilateral, one, upper, no.");
    CHECK(!std::getline(rows, line));
}
