#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xlmeta/textdata.hpp"

namespace xlmeta::eval {

// Prediction value for generations that matched no verbalizer string.
// Counts as incorrect everywhere; never coerced to a class.
constexpr int kUnparsed = -1;

// Unweighted mean of per-class F1. A class with no gold and no predicted
// instances contributes 0.
double macro_f1(const std::vector<int>& predictions, const std::vector<int>& golds,
                std::size_t n_classes);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& golds);

struct RunResult {
    int task_id = 0;
    std::string method;   // fine-tune | meta | self-train | domain-adapt | icl
    std::string setting;  // strategy / shot / stage tag
    std::uint64_t seed = 0;
    std::vector<int> predictions;
    std::vector<int> golds;
    std::size_t unparsed = 0;  // icl only
};

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;  // sample std; 0 for a single run
    int n_runs = 0;
};

using GroupKey = std::vector<std::string>;
using Report = std::map<GroupKey, Aggregate>;

Report aggregate(const std::vector<std::pair<GroupKey, double>>& runs);

enum class Metric { MacroF1, Accuracy };

// Groups by (task_id, method, setting).
Report aggregate_runs(const std::vector<RunResult>& results, Metric metric);

// CSV grid: one row per (row, subrow), one column per col key; missing cells
// stay empty. Matches the setting x model x strategy layout of the reports.
std::string render_grid_csv(const Report& cells, const std::vector<std::string>& rows,
                            const std::vector<std::string>& subrows,
                            const std::vector<std::string>& cols);

void write_report_csv(const Report& report, const std::vector<std::string>& key_names,
                      const std::filesystem::path& path);
void write_report_json(const Report& report, const std::vector<std::string>& key_names,
                       const std::filesystem::path& path);

// Synthetic "translated" language pair: same class-conditional structure,
// disjoint surface vocabulary except for a small shared slice.
struct SyntheticLanguagePair {
    std::vector<std::string> source_tokens;
    std::vector<std::string> target_tokens;  // target_tokens[i] translates source_tokens[i]
    std::vector<std::vector<std::size_t>> class_tokens;  // indicative indices per class
    std::vector<std::size_t> common_tokens;
    double margin = 0.0;

    std::string to_target(const std::string& source_token) const;
    std::string to_source(const std::string& target_token) const;
    std::string translate_text(const std::string& text, bool to_target_language) const;
};

struct SyntheticOptions {
    std::size_t examples_per_class = 150;
    std::size_t tokens_per_example = 20;
    // Fraction of the vocabulary whose surface form is shared between the two
    // languages (loanwords / code-switching); drives weak zero-shot transfer.
    double shared_fraction = 0.1;
    std::string source_language = "en";
    std::string target_language = "sw";
};

struct SyntheticPair {
    SyntheticLanguagePair mapping;
    text::Corpus source;
    text::Corpus target;
};

SyntheticPair make_synthetic_pair(std::uint64_t seed, std::size_t vocab_size,
                                  std::size_t classes, double margin,
                                  const SyntheticOptions& opts = {});

}  // namespace xlmeta::eval
