#include "akgnet/attr_text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace akgnet::attr {

namespace {

const std::vector<std::string> kPositionValues = {
    "all", "upper", "middle", "lower", "upper middle", "middle lower", "no"};

// Words that may appear in a clause without carrying category information.
const std::set<std::string> kGlueClause1 = {"pulmonary", "lung", "infection"};
const std::set<std::string> kGlueClause2 = {"infected", "area", "areas"};
const std::set<std::string> kGlueClause3 = {"lung", "lungs", "of", "the"};

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(s.substr(start));
            break;
        }
        parts.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

}  // namespace

AttributeTaxonomy AttributeTaxonomy::qata_default() {
    AttributeTaxonomy t;
    t.attributes = {
        {1, "unilateral or bilateral of lung infection", {"unilateral", "bilateral"}},
        {2, "number of infected areas", {"one", "two", "three", "four", "five", "six"}},
        {3, "location of the infected area in the left part", kPositionValues},
        {4, "location of the infected area in the right part", kPositionValues},
    };
    return t;
}

void AttributeTaxonomy::validate() const {
    if (static_cast<int>(attributes.size()) != kNumAttributes)
        throw std::invalid_argument("taxonomy must define exactly 4 attributes");
    for (int m = 0; m < kNumAttributes; ++m) {
        const auto& a = attributes[m];
        if (a.id != m + 1)
            throw std::invalid_argument("attribute ids must be 1..4 in order");
        if (a.values.empty())
            throw std::invalid_argument("attribute " + std::to_string(a.id) + " has no values");
        std::set<std::string> seen(a.values.begin(), a.values.end());
        if (seen.size() != a.values.size())
            throw std::invalid_argument("duplicate value in attribute " + std::to_string(a.id));
    }
}

int AttributeTaxonomy::value_index(int attr, std::string_view value) const {
    const auto& vals = attributes.at(attr).values;
    const auto it = std::find(vals.begin(), vals.end(), value);
    return it == vals.end() ? -1 : static_cast<int>(it - vals.begin());
}

const std::string& AttributeTaxonomy::value_name(int attr, int category) const {
    return attributes.at(attr).values.at(category);
}

std::string AttributeTaxonomy::to_string() const {
    std::ostringstream os;
    for (const auto& a : attributes) {
        os << a.id << '\n' << a.description << '\n';
        for (size_t i = 0; i < a.values.size(); ++i)
            os << (i ? ", " : "") << a.values[i];
        os << "\n\n";
    }
    return os.str();
}

void AttributeTaxonomy::save(const std::filesystem::path& file) const {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write taxonomy file: " + file.string());
    os << to_string();
}

AttributeTaxonomy AttributeTaxonomy::load(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read taxonomy file: " + file.string());
    AttributeTaxonomy t;
    std::string line;
    std::vector<std::string> block;
    auto flush = [&] {
        if (block.empty()) return;
        if (block.size() != 3)
            throw std::runtime_error("taxonomy block must have 3 lines (id, description, values)");
        AttributeDef def;
        def.id = std::stoi(block[0]);
        def.description = block[1];
        for (auto& v : split(block[2], ',')) {
            auto t2 = trim(v);
            if (!t2.empty()) def.values.push_back(to_lower(t2));
        }
        t.attributes.push_back(std::move(def));
        block.clear();
    };
    while (std::getline(is, line)) {
        auto l = trim(line);
        if (l.empty()) flush();
        else block.push_back(l);
    }
    flush();
    t.validate();
    return t;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isalpha(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else {
            if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
            if (c == ',' || c == '.') tokens.emplace_back(1, c);
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

UnparseableClause::UnparseableClause(int index, std::string text, const std::string& what)
    : ParseError("clause " + std::to_string(index) + " (\"" + text + "\"): " + what),
      clause_index(index),
      clause_text(std::move(text)) {}

MissingClause::MissingClause(int found)
    : ParseError("expected 3 comma-separated clauses, found " + std::to_string(found)),
      n_found(found) {}

AttributeParser::AttributeParser(AttributeTaxonomy taxonomy) : taxonomy_(std::move(taxonomy)) {
    taxonomy_.validate();
    // default corrections for misspellings seen in QaTa-style descriptions
    aliases_ = {
        {"bilaterial", "bilateral"}, {"unilaterial", "unilateral"},
        {"infectoin", "infection"},  {"infecion", "infection"},
        {"infeced", "infected"},     {"midle", "middle"},
        {"uper", "upper"},           {"lowr", "lower"},
    };
}

void AttributeParser::add_alias(const std::string& misspelling, const std::string& corrected) {
    aliases_[to_lower(misspelling)] = to_lower(corrected);
}

void AttributeParser::load_aliases(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read alias file: " + file.string());
    std::string line;
    while (std::getline(is, line)) {
        auto l = trim(line);
        if (l.empty() || l[0] == '#') continue;
        auto tab = l.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("alias line is not TSV: " + l);
        add_alias(trim(l.substr(0, tab)), trim(l.substr(tab + 1)));
    }
}

std::string AttributeParser::normalize_token(const std::string& tok) const {
    const auto it = aliases_.find(tok);
    return it == aliases_.end() ? tok : it->second;
}

void AttributeParser::check_labels(const AttributeLabels& labels) const {
    for (int m = 0; m < kNumAttributes; ++m) {
        if (labels.categories[m] < 0 || labels.categories[m] >= taxonomy_.num_values(m))
            throw std::out_of_range("attribute " + std::to_string(m + 1) + " category " +
                                    std::to_string(labels.categories[m]) + " out of range");
    }
}

int AttributeParser::match_position_phrase(int attr, const std::vector<std::string>& words,
                                           int clause_index, const std::string& clause) const {
    // drop glue, keep category-bearing words in order
    std::vector<std::string> kept;
    for (const auto& w : words) {
        if (kGlueClause3.count(w)) continue;
        kept.push_back(w);
    }
    if (kept.empty())
        throw UnparseableClause(clause_index, clause, "no position phrase for a mentioned side");
    const int idx = taxonomy_.value_index(attr, join_words(kept));
    if (idx < 0)
        throw UnparseableClause(clause_index, clause,
                                "unknown position phrase \"" + join_words(kept) + "\"");
    return idx;
}

AttributeLabels AttributeParser::parse_description(std::string_view raw_text) const {
    if (trim(raw_text).empty()) throw MissingClause(0);
    auto clauses = split(raw_text, ',');
    // drop a trailing empty fragment from a terminal comma
    while (!clauses.empty() && trim(clauses.back()).empty()) clauses.pop_back();
    if (clauses.size() < 3) throw MissingClause(static_cast<int>(clauses.size()));
    if (clauses.size() > 3)
        throw UnparseableClause(4, trim(clauses[3]), "unexpected extra clause");

    AttributeLabels labels;

    // clause 1: laterality adjective
    {
        const std::string clause = trim(clauses[0]);
        auto words = tokenize(clause);
        int found = -1;
        for (auto& w : words) {
            w = normalize_token(w);
            const int idx = taxonomy_.value_index(0, w);
            if (idx >= 0) {
                if (found >= 0 && found != idx)
                    throw UnparseableClause(1, clause, "conflicting laterality words");
                found = idx;
            } else if (!kGlueClause1.count(w)) {
                throw UnparseableClause(1, clause, "unknown word \"" + w + "\"");
            }
        }
        if (found < 0) throw UnparseableClause(1, clause, "no laterality word");
        labels.categories[0] = found;
    }

    // clause 2: leading number word
    {
        const std::string clause = trim(clauses[1]);
        auto words = tokenize(clause);
        int found = -1;
        for (auto& w : words) {
            w = normalize_token(w);
            const int idx = taxonomy_.value_index(1, w);
            if (idx >= 0) {
                if (found >= 0)
                    throw UnparseableClause(2, clause, "more than one number word");
                found = idx;
            } else if (!kGlueClause2.count(w)) {
                throw UnparseableClause(2, clause, "unknown word \"" + w + "\"");
            }
        }
        if (found < 0) throw UnparseableClause(2, clause, "no number word");
        labels.categories[1] = found;
    }

    // clause 3: per-side position phrases joined by "and"
    {
        const std::string clause = trim(clauses[2]);
        auto words = tokenize(clause);
        for (auto& w : words) w = normalize_token(w);
        while (!words.empty() && words.back() == ".") words.pop_back();

        std::vector<std::vector<std::string>> phrases(1);
        for (auto& w : words) {
            if (w == "and") phrases.emplace_back();
            else phrases.back().push_back(w);
        }
        int left = -1, right = -1;
        for (const auto& phrase : phrases) {
            if (phrase.empty())
                throw UnparseableClause(3, clause, "empty position phrase");
            std::vector<std::string> pos_words;
            int side = -1;  // 0 = left, 1 = right
            for (const auto& w : phrase) {
                if (w == "left" || w == "right") {
                    if (side >= 0) throw UnparseableClause(3, clause, "phrase names two sides");
                    side = (w == "right");
                } else {
                    pos_words.push_back(w);
                }
            }
            if (side < 0) throw UnparseableClause(3, clause, "phrase names no side");
            int& slot = side == 0 ? left : right;
            if (slot >= 0) throw UnparseableClause(3, clause, "side mentioned twice");
            slot = match_position_phrase(side == 0 ? 2 : 3, pos_words, 3, clause);
        }
        labels.categories[2] = left >= 0 ? left : taxonomy_.value_index(2, "no");
        labels.categories[3] = right >= 0 ? right : taxonomy_.value_index(3, "no");
        if (left < 0 && right < 0)
            throw UnparseableClause(3, clause, "no side mentioned");
    }
    return labels;
}

AttributeLabels AttributeParser::parse_attribute_description(std::string_view compact_text) const {
    auto fields = split(compact_text, ',');
    while (!fields.empty() && trim(fields.back()).empty()) fields.pop_back();
    if (static_cast<int>(fields.size()) != kNumAttributes)
        throw MissingClause(static_cast<int>(fields.size()));
    AttributeLabels labels;
    for (int m = 0; m < kNumAttributes; ++m) {
        auto words = tokenize(fields[m]);
        for (auto& w : words) w = normalize_token(w);
        while (!words.empty() && words.back() == ".") words.pop_back();
        const std::string value = join_words(words);
        const int idx = taxonomy_.value_index(m, value);
        if (idx < 0)
            throw UnparseableClause(m + 1, trim(fields[m]),
                                    "not a value of attribute " + std::to_string(m + 1));
        labels.categories[m] = idx;
    }
    return labels;
}

AttributeDescription AttributeParser::to_attribute_description(const AttributeLabels& labels) const {
    check_labels(labels);
    std::string text;
    for (int m = 0; m < kNumAttributes; ++m) {
        const std::string& v = taxonomy_.value_name(m, labels.categories[m]);
        text += m == 0 ? capitalize(v) : ", " + v;
    }
    text += ".";
    return {text, tokenize(text)};
}

std::string AttributeParser::render_text(const AttributeLabels& labels) const {
    check_labels(labels);
    const std::string& side = taxonomy_.value_name(0, labels.categories[0]);
    const std::string& count = taxonomy_.value_name(1, labels.categories[1]);
    const std::string& left = taxonomy_.value_name(2, labels.categories[2]);
    const std::string& right = taxonomy_.value_name(3, labels.categories[3]);

    std::string text = capitalize(side) + " pulmonary infection, " + count + " infected " +
                       (labels.categories[1] == 0 ? "area" : "areas") + ", ";
    std::vector<std::string> phrases;
    if (left != "no") phrases.push_back(left + " left lung");
    if (right != "no") phrases.push_back(right + " right lung");
    if (phrases.empty()) {
        // both sides "no": keep the sides explicit so the sentence round-trips
        phrases = {"no left lung", "no right lung"};
    }
    for (size_t i = 0; i < phrases.size(); ++i)
        text += (i ? " and " : "") + phrases[i];
    return text + ".";
}

std::array<std::vector<float>, kNumAttributes> AttributeParser::encode_targets(
    const AttributeLabels& labels) const {
    check_labels(labels);
    std::array<std::vector<float>, kNumAttributes> onehots;
    for (int m = 0; m < kNumAttributes; ++m) {
        onehots[m].assign(taxonomy_.num_values(m), 0.0f);
        onehots[m][labels.categories[m]] = 1.0f;
    }
    return onehots;
}

std::vector<BatchRowError> parse_tsv_stream(const AttributeParser& parser,
                                            std::istream& in, std::ostream& out) {
    std::vector<BatchRowError> errors;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            errors.push_back({"line " + std::to_string(lineno), "row is not two-column TSV"});
            continue;
        }
        const std::string id = trim(line.substr(0, tab));
        const std::string raw = trim(line.substr(tab + 1));
        try {
            const auto labels = parser.parse_description(raw);
            const auto desc = parser.to_attribute_description(labels);
            out << id;
            for (int m = 0; m < kNumAttributes; ++m) out << '\t' << labels.categories[m];
            out << '\t' << desc.text << '\n';
        } catch (const ParseError& e) {
            errors.push_back({id, e.what()});
        }
    }
    return errors;
}

}  // namespace akgnet::attr
