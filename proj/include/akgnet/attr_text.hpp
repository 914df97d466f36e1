#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace akgnet::attr {

inline constexpr int kNumAttributes = 4;

struct AttributeDef {
    int id = 0;  // 1-based
    std::string description;
    std::vector<std::string> values;
};

/// The four-attribute categorical schema: laterality, count of infected
/// areas, and per-side (left/right) location within the lung.
struct AttributeTaxonomy {
    std::vector<AttributeDef> attributes;

    static AttributeTaxonomy qata_default();
    static AttributeTaxonomy load(const std::filesystem::path& file);
    void save(const std::filesystem::path& file) const;
    std::string to_string() const;

    /// index of `value` within attribute `attr` (0-based attr), -1 if absent
    int value_index(int attr, std::string_view value) const;
    const std::string& value_name(int attr, int category) const;
    int num_values(int attr) const { return static_cast<int>(attributes.at(attr).values.size()); }

    void validate() const;  // throws std::invalid_argument on malformed taxonomy
};

/// One category index per attribute, categories[m] in [0, a_m).
struct AttributeLabels {
    std::array<int, kNumAttributes> categories{};
    bool operator==(const AttributeLabels&) const = default;
};

/// Compact attribute sentence, e.g. "Bilateral, three, middle lower, upper middle."
struct AttributeDescription {
    std::string text;
    std::vector<std::string> tokens;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnparseableClause : ParseError {
    UnparseableClause(int clause_index, std::string clause_text, const std::string& what);
    int clause_index;  // 1-based
    std::string clause_text;
};
struct MissingClause : ParseError {
    explicit MissingClause(int n_found);
    int n_found;
};

/// Lowercase word tokens; "," and "." kept as standalone tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Rule-based parser over the three-clause clinical sentence style:
/// clause 1 carries the laterality adjective, clause 2 the leading number
/// word, clause 3 per-side position phrases joined by "and". A side absent
/// from clause 3 maps to the "no" category. Matching is case-insensitive
/// and whitespace-tolerant; misspellings are handled by an alias table.
class AttributeParser {
public:
    explicit AttributeParser(AttributeTaxonomy taxonomy = AttributeTaxonomy::qata_default());

    const AttributeTaxonomy& taxonomy() const { return taxonomy_; }

    AttributeLabels parse_description(std::string_view raw_text) const;
    AttributeLabels parse_attribute_description(std::string_view compact_text) const;

    AttributeDescription to_attribute_description(const AttributeLabels& labels) const;
    /// Inverse of parse_description: renders a full clinical sentence that
    /// re-parses to `labels`. Sides with category "no" are omitted unless
    /// both are "no".
    std::string render_text(const AttributeLabels& labels) const;

    std::array<std::vector<float>, kNumAttributes> encode_targets(const AttributeLabels& labels) const;

    void check_labels(const AttributeLabels& labels) const;  // throws std::out_of_range

    void add_alias(const std::string& misspelling, const std::string& corrected);
    void load_aliases(const std::filesystem::path& file);  // TSV: wrong<TAB>right

private:
    std::string normalize_token(const std::string& tok) const;
    int match_position_phrase(int attr, const std::vector<std::string>& words,
                              int clause_index, const std::string& clause) const;

    AttributeTaxonomy taxonomy_;
    std::map<std::string, std::string> aliases_;
};

struct BatchRowError {
    std::string sample_id;
    std::string message;
};

/// Batch mode over a two-column TSV (sample_id, raw_text); emits
/// (sample_id, c1, c2, c3, c4, attribute_description) rows for every
/// parseable input row and collects per-row errors for the rest.
std::vector<BatchRowError> parse_tsv_stream(const AttributeParser& parser,
                                            std::istream& in, std::ostream& out);

}  // namespace akgnet::attr
