#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "xlmeta/classifier.hpp"

namespace xlmeta::meta {

using text::Episode;
using text::Example;
using text::TaskSpec;

struct MetaConfig {
    double alpha = 0.1;        // inner-loop lr
    double beta = 0.05;        // outer-loop lr
    std::size_t shots = 32;    // |S|
    std::size_t query_size = 32;
    int inner_steps = 1;
    std::size_t task_batch = 4;  // episodes per outer step
    std::size_t outer_steps = 500;
    std::uint64_t seed = 0;
    bool first_order = true;

    void validate() const;
};

enum class Stage { MetaTrain, MetaAdapt };

std::string stage_name(Stage s);

struct StageSpec {
    Stage stage = Stage::MetaTrain;
    std::vector<std::string> support_languages;
    std::vector<std::string> query_languages;

    static StageSpec meta_train(std::vector<std::string> source, std::string target);
    static StageSpec meta_adapt(std::string target);
};

enum class Choice { ZeroShot, FewShot };

struct TrainingChoice {
    Choice choice = Choice::ZeroShot;
    std::size_t k_target_labeled = 0;  // 0 under ZeroShot
};

using LanguagePools = std::map<std::string, std::vector<Example>>;

// `count` episodes; each draws its support from one stage-permitted support
// language and its query from one stage-permitted query language.
std::vector<Episode> generate_episodes(const LanguagePools& support_pools,
                                       const LanguagePools& query_pools,
                                       const StageSpec& stage, const MetaConfig& cfg,
                                       std::size_t count, const TaskSpec& task,
                                       std::uint64_t seed_offset = 0);

// Generic first-order machinery, shared by the classifier path and the
// closed-form oracles in the tests.
using LossFn = std::function<model::LossGrads(const ad::ParamSet&)>;

struct EpisodeLoss {
    LossFn support_loss;
    LossFn query_loss;
};

// theta' = theta - alpha * grad(support loss), iterated `steps` times.
// alpha == 0 leaves theta untouched (useful as a collapse check).
ad::ParamSet inner_adapt_generic(const ad::ParamSet& theta, const LossFn& support_loss,
                                 double alpha, int steps);

// One outer step: adapt per episode, evaluate query gradients at the adapted
// parameters, sum in episode order, apply with lr beta.
struct OuterStepStats {
    double mean_support_loss = 0.0;
    double mean_query_loss = 0.0;
};

ad::ParamSet outer_update_generic(const ad::ParamSet& theta,
                                  const std::vector<EpisodeLoss>& episodes,
                                  double alpha, int inner_steps, double beta,
                                  OuterStepStats* stats = nullptr);

ad::ParamSet inner_adapt(const model::TextClassifier& model,
                         const std::vector<Example>& support, double alpha, int steps);

model::TextClassifier outer_update(const model::TextClassifier& model,
                                   const std::vector<Episode>& episodes,
                                   const MetaConfig& cfg,
                                   OuterStepStats* stats = nullptr);

struct MetaCorpora {
    std::vector<std::string> source_languages;
    std::string target_language;
    LanguagePools source_val;    // per source language, validation split
    LanguagePools target_train;  // gold-labeled target train split
    std::vector<Example> target_silver;  // optional, from self_train
};

struct TraceRow {
    std::size_t outer_step = 0;
    std::string stage;
    double mean_support_loss = 0.0;
    double mean_query_loss = 0.0;
};

struct MetaResult {
    model::TextClassifier model;
    std::vector<TraceRow> trace;
};

void write_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path);

// The two-stage episodic loop. Expects `base` to already be fine-tuned on the
// source language. Under ZeroShot the target-side pools are silver-labeled
// examples when available, otherwise source-language surrogates; under FewShot
// they are the first k_target_labeled gold target examples (seeded draw).
MetaResult meta_train(const model::TextClassifier& base, const TrainingChoice& choice,
                      const std::vector<StageSpec>& stages, const MetaCorpora& corpora,
                      const MetaConfig& cfg);

// Pseudo-labeling loop: predict on unlabeled target text, keep confident
// predictions as silver labels, run meta-adapt updates on them, and keep the
// checkpoint that scores best on the source-language validation set.
model::TextClassifier self_train(const model::TextClassifier& model,
                                 const std::vector<Example>& unlabeled_target,
                                 int rounds, double threshold, const MetaConfig& cfg,
                                 const std::vector<Example>& source_val,
                                 const TaskSpec& task);

struct DomainAdaptResult {
    std::map<std::string, std::size_t> instances_used;  // per aux language
    double fine_tune_macro_f1 = 0.0;
    double meta_macro_f1 = 0.0;
};

// Train on auxiliary languages capped at `instances` examples each (512, 1024
// or 2048; smaller corpora fall back to all available) and evaluate both the
// fine-tuned and the meta-trained variant on the target test set. The first
// aux language feeds the support side of the meta episodes.
DomainAdaptResult domain_adapt_train(const model::TextClassifier& base,
                                     const std::vector<std::pair<std::string, std::vector<Example>>>& aux,
                                     const std::vector<Example>& target_test,
                                     std::size_t instances, const MetaConfig& cfg,
                                     const model::TrainConfig& tune_cfg,
                                     const TaskSpec& task);

struct EpisodeAudit {
    std::size_t checked = 0;
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Language-placement audit plus zero-shot hygiene (no gold target labels).
EpisodeAudit audit_episodes(const std::vector<Episode>& episodes, const StageSpec& stage,
                            const std::string& target_language, Choice choice);

}  // namespace xlmeta::meta
