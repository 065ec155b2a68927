#include "xlmeta/textdata.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace xlmeta::text {

namespace {

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

bool is_space_byte(unsigned char c) {
    return std::isspace(c) != 0;
}

std::string trim_copy(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space_byte(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space_byte(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace

int TaskSpec::label_index(std::string_view label) const {
    const std::string needle = ascii_lower(label);
    for (std::size_t i = 0; i < label_names.size(); ++i) {
        if (ascii_lower(label_names[i]) == needle) return static_cast<int>(i);
    }
    return -1;
}

TaskSpec TaskSpec::stress() {
    return {1, "binary_stress", {"not stress", "stress"}, "Dreaddit"};
}

TaskSpec TaskSpec::depression() {
    return {2, "binary_depression", {"not depression", "depression"}, "DepSeverity"};
}

TaskSpec TaskSpec::depression_severity() {
    return {3, "depression_severity", {"minimum", "mild", "moderate", "severe"}, "DepSeverity"};
}

TaskSpec TaskSpec::suicide() {
    return {4, "suicide_ideation", {"not suicide", "suicide"}, "SDCNL"};
}

TaskSpec TaskSpec::by_id(int task_id) {
    switch (task_id) {
        case 1: return stress();
        case 2: return depression();
        case 3: return depression_severity();
        case 4: return suicide();
        default:
            throw ConfigError("task_id must be in {1,2,3,4}, got " + std::to_string(task_id));
    }
}

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        case Split::Unassigned: return "unassigned";
    }
    return "unassigned";
}

std::vector<Example> Corpus::subset(Split split, std::optional<std::string> language) const {
    std::vector<Example> out;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (splits[i] != split) continue;
        if (language && examples[i].language != *language) continue;
        out.push_back(examples[i]);
    }
    return out;
}

std::vector<std::string> Corpus::languages() const {
    std::set<std::string> seen;
    for (const auto& ex : examples) seen.insert(ex.language);
    return {seen.begin(), seen.end()};
}

Corpus load_corpus(const std::filesystem::path& path, const TaskSpec& task) {
    std::ifstream in(path);
    if (!in) throw IngestError("corpus: cannot open " + path.string());
    Corpus corpus;
    corpus.task = task;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_copy(line).empty()) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw IngestError("corpus " + path.string() + " line " + std::to_string(line_no) +
                              ": " + e.what());
        }
        for (const char* field : {"id", "text", "label", "language"}) {
            if (!record.contains(field) || !record[field].is_string()) {
                throw IngestError("corpus " + path.string() + " line " + std::to_string(line_no) +
                                  ": missing string field '" + field + "'");
            }
        }
        Example ex;
        ex.id = record["id"].get<std::string>();
        ex.text = record["text"].get<std::string>();
        ex.language = record["language"].get<std::string>();
        ex.silver = record.value("silver", false);
        if (!seen_ids.insert(ex.id).second) {
            throw IngestError("corpus: duplicate id '" + ex.id + "'");
        }
        if (trim_copy(ex.text).empty()) {
            throw IngestError("corpus: empty text for id '" + ex.id + "'");
        }
        const std::string label = record["label"].get<std::string>();
        ex.label = task.label_index(label);
        if (ex.label < 0) {
            throw IngestError("corpus: unknown label '" + label + "' for id '" + ex.id +
                              "' (task " + std::to_string(task.task_id) + ")");
        }
        corpus.examples.push_back(std::move(ex));
        corpus.splits.push_back(Split::Unassigned);
    }
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("corpus: cannot open " + path.string() + " for writing");
    for (const auto& ex : corpus.examples) {
        nlohmann::json record = {
            {"id", ex.id},
            {"text", ex.text},
            {"label", corpus.task.label_names.at(static_cast<std::size_t>(ex.label))},
            {"language", ex.language},
        };
        if (ex.silver) record["silver"] = true;
        out << record.dump() << '\n';
    }
}

void write_split_sidecar(const Corpus& corpus, const std::filesystem::path& path) {
    nlohmann::json sidecar = nlohmann::json::object();
    for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
        sidecar[corpus.examples[i].id] = split_name(corpus.splits[i]);
    }
    std::ofstream out(path);
    if (!out) throw DataError("sidecar: cannot open " + path.string() + " for writing");
    out << sidecar.dump(2) << '\n';
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string piece;
    auto flush = [&] {
        std::size_t b = 0, e = piece.size();
        auto is_punct = [](unsigned char c) { return std::ispunct(c) != 0; };
        while (b < e && is_punct(static_cast<unsigned char>(piece[b]))) ++b;
        while (e > b && is_punct(static_cast<unsigned char>(piece[e - 1]))) --e;
        if (e > b) tokens.push_back(piece.substr(b, e - b));
        piece.clear();
    };
    for (char c : text) {
        if (is_space_byte(static_cast<unsigned char>(c))) {
            flush();
        } else {
            piece.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    flush();
    if (tokens.empty()) tokens.emplace_back("<empty>");
    return tokens;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

FeatureVector featurize(const std::vector<std::string>& tokens, std::uint32_t vocab) {
    if (vocab == 0 || (vocab & (vocab - 1)) != 0) {
        throw ContractError("featurize: vocab size must be a power of two, got " +
                            std::to_string(vocab));
    }
    FeatureVector fv;
    fv.vocab = vocab;
    fv.token_ids.reserve(tokens.size());
    for (const auto& tok : tokens) {
        fv.token_ids.push_back(static_cast<std::uint32_t>(fnv1a64(tok) & (vocab - 1)));
    }
    return fv;
}

FeatureVector featurize_text(std::string_view text, std::uint32_t vocab) {
    return featurize(tokenize(text), vocab);
}

void split_corpus(Corpus& corpus, double train, double val, double test, std::uint64_t seed) {
    if (train <= 0 || val <= 0 || test <= 0 || std::abs(train + val + test - 1.0) > 1e-9) {
        throw ContractError("split_corpus: fractions must be positive and sum to 1");
    }
    std::map<std::pair<std::string, int>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
        cells[{corpus.examples[i].language, corpus.examples[i].label}].push_back(i);
    }
    for (auto& [key, members] : cells) {
        if (members.size() < 3) {
            throw SplitError("split_corpus: cell (" + key.first + ", " +
                             corpus.task.label_names.at(static_cast<std::size_t>(key.second)) +
                             ") has only " + std::to_string(members.size()) +
                             " examples; need at least 3");
        }
        std::mt19937_64 rng(seed ^ fnv1a64(key.first + "|" + std::to_string(key.second)));
        std::shuffle(members.begin(), members.end(), rng);

        // Largest-remainder apportionment over {train, val, test}.
        const double fractions[3] = {train, val, test};
        const auto n = static_cast<double>(members.size());
        std::size_t counts[3];
        double remainders[3];
        std::size_t assigned = 0;
        for (int p = 0; p < 3; ++p) {
            const double exact = fractions[p] * n;
            counts[p] = static_cast<std::size_t>(exact);
            remainders[p] = exact - static_cast<double>(counts[p]);
            assigned += counts[p];
        }
        std::array<int, 3> order = {0, 1, 2};
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return remainders[a] > remainders[b]; });
        for (std::size_t leftover = members.size() - assigned, i = 0; i < leftover; ++i) {
            ++counts[order[i % 3]];
        }

        std::size_t cursor = 0;
        const Split parts[3] = {Split::Train, Split::Val, Split::Test};
        for (int p = 0; p < 3; ++p) {
            for (std::size_t i = 0; i < counts[p]; ++i) {
                corpus.splits[members[cursor++]] = parts[p];
            }
        }
    }
}

namespace {

// Class-balanced quota: floor(total/C) each, remainder to the classes whose
// names sort first lexicographically.
std::vector<std::size_t> class_quota(std::size_t total, const TaskSpec& task) {
    const std::size_t c = task.n_classes();
    std::vector<std::size_t> quota(c, total / c);
    std::size_t rem = total % c;
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return task.label_names[a] < task.label_names[b];
    });
    for (std::size_t i = 0; i < rem; ++i) ++quota[order[i]];
    return quota;
}

std::vector<Example> draw_balanced(const std::vector<Example>& pool,
                                   const std::set<std::string>& exclude_ids,
                                   std::size_t total, const TaskSpec& task,
                                   std::mt19937_64& rng, const char* what) {
    std::vector<std::vector<std::size_t>> by_class(task.n_classes());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (exclude_ids.count(pool[i].id)) continue;
        by_class[static_cast<std::size_t>(pool[i].label)].push_back(i);
    }
    const auto quota = class_quota(total, task);
    std::vector<Example> drawn;
    for (std::size_t c = 0; c < quota.size(); ++c) {
        if (by_class[c].size() < quota[c]) {
            throw SamplingError(std::string(what) + ": class '" + task.label_names[c] +
                                "' needs " + std::to_string(quota[c]) + " examples but pool has " +
                                std::to_string(by_class[c].size()));
        }
        std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
        for (std::size_t i = 0; i < quota[c]; ++i) {
            drawn.push_back(pool[by_class[c][i]]);
        }
    }
    return drawn;
}

}  // namespace

Episode sample_support_query(const std::vector<Example>& pool_support,
                             const std::vector<Example>& pool_query,
                             std::size_t shots, std::size_t query_size,
                             const TaskSpec& task, std::uint64_t seed) {
    if (shots == 0 || query_size == 0) {
        throw ContractError("sample_support_query: shots and query_size must be >= 1");
    }
    std::mt19937_64 rng(seed);
    Episode episode;
    episode.support = draw_balanced(pool_support, {}, shots, task, rng, "support");
    std::set<std::string> taken;
    for (const auto& ex : episode.support) taken.insert(ex.id);
    episode.query = draw_balanced(pool_query, taken, query_size, task, rng, "query");
    return episode;
}

Corpus derive_binary_depression(const Corpus& severity) {
    if (severity.task.task_id != 3) {
        throw ContractError("derive_binary_depression: input must be the 4-class severity corpus");
    }
    Corpus out;
    out.task = TaskSpec::depression();
    out.examples = severity.examples;
    out.splits = severity.splits;
    for (auto& ex : out.examples) {
        // "at least mild depression" is the positive class
        ex.label = ex.label >= 1 ? 1 : 0;
    }
    return out;
}

}  // namespace xlmeta::text
