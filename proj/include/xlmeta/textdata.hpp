#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xlmeta/error.hpp"

namespace xlmeta::text {

struct Example {
    std::string id;
    std::string text;
    int label = -1;
    std::string language;  // BCP-47-style tag: "en", "sw", "ar", ...
    bool silver = false;   // label came from a model prediction, not annotation
};

struct TaskSpec {
    int task_id = 0;
    std::string name;
    std::vector<std::string> label_names;  // class index = position
    std::string dataset;

    std::size_t n_classes() const { return label_names.size(); }
    // Case-insensitive lookup; returns -1 if the label is unknown.
    int label_index(std::string_view label) const;

    static TaskSpec stress();               // Task 1, Dreaddit
    static TaskSpec depression();           // Task 2, DepSeverity (binary)
    static TaskSpec depression_severity();  // Task 3, DepSeverity (4-class)
    static TaskSpec suicide();              // Task 4, SDCNL
    static TaskSpec by_id(int task_id);
};

enum class Split { Train, Val, Test, Unassigned };

std::string split_name(Split s);

struct Corpus {
    TaskSpec task;
    std::vector<Example> examples;
    std::vector<Split> splits;  // parallel to examples; Unassigned until split_corpus

    std::vector<Example> subset(Split split,
                                std::optional<std::string> language = std::nullopt) const;
    std::vector<std::string> languages() const;
};

// JSON Lines ingestion: one object per record with fields id/text/label/language.
Corpus load_corpus(const std::filesystem::path& path, const TaskSpec& task);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
void write_split_sidecar(const Corpus& corpus, const std::filesystem::path& path);

// Lowercase, split on whitespace, strip edge punctuation; never returns an
// empty list (all-punctuation input collapses to the "<empty>" sentinel).
std::vector<std::string> tokenize(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes);

struct FeatureVector {
    std::vector<std::uint32_t> token_ids;
    std::uint32_t vocab = 0;
};

constexpr std::uint32_t kDefaultVocab = 1u << 15;

// Hashing trick: token id = fnv1a64(token) mod vocab. vocab must be a power of two.
FeatureVector featurize(const std::vector<std::string>& tokens, std::uint32_t vocab);
FeatureVector featurize_text(std::string_view text, std::uint32_t vocab);

// Stratified by (language, label); deterministic for a fixed seed.
void split_corpus(Corpus& corpus, double train, double val, double test, std::uint64_t seed);

struct Episode {
    std::vector<Example> support;
    std::vector<Example> query;
};

// Class-balanced sampling without replacement; when the two pools overlap the
// drawn support and query are disjoint by example id.
Episode sample_support_query(const std::vector<Example>& pool_support,
                             const std::vector<Example>& pool_query,
                             std::size_t shots, std::size_t query_size,
                             const TaskSpec& task, std::uint64_t seed);

// Task 2 view of a Task 3 corpus: {mild, moderate, severe} -> depression.
Corpus derive_binary_depression(const Corpus& severity);

}  // namespace xlmeta::text
