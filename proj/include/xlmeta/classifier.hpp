#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xlmeta/autodiff.hpp"
#include "xlmeta/params.hpp"
#include "xlmeta/textdata.hpp"

namespace xlmeta::model {

// Bag-of-embeddings text classifier: mean-pooled token embeddings followed by
// a linear head. Parameters: "embeddings" (V x d), "head_weight" (d x C),
// "head_bias" (1 x C).
struct TextClassifier {
    std::uint32_t vocab = text::kDefaultVocab;
    std::size_t dim = 64;
    std::size_t n_classes = 2;
    ad::ParamSet params;

    // Seeded uniform(-0.05, 0.05) embeddings, zero head (initial loss == ln C).
    static TextClassifier init(std::uint32_t vocab, std::size_t dim,
                               std::size_t n_classes, std::uint64_t seed);
};

struct TrainConfig {
    double lr = 0.1;
    int epochs = 10;
    int batch_size = 16;
    std::uint64_t seed = 0;
    double weight_decay = 0.0;
};

struct ForwardGraph {
    ad::Tape tape;
    std::map<std::string, ad::Var> param_vars;
    ad::Var logits;
};

ForwardGraph forward_logits(const ad::ParamSet& params,
                            const std::vector<text::FeatureVector>& batch);

ad::Var loss_nll(ad::Tape& tape, ad::Var logits, std::vector<std::size_t> labels);

struct LossGrads {
    double loss = 0.0;
    ad::GradMap grads;
};

LossGrads loss_and_grads(const ad::ParamSet& params,
                         const std::vector<text::FeatureVector>& batch,
                         const std::vector<std::size_t>& labels);

// Featurize-and-forward helpers over raw examples.
std::vector<text::FeatureVector> featurize_batch(const std::vector<text::Example>& examples,
                                                 std::uint32_t vocab);
LossGrads example_loss_and_grads(const ad::ParamSet& params,
                                 const std::vector<text::Example>& examples,
                                 std::uint32_t vocab);

struct FineTuneResult {
    TextClassifier model;
    std::vector<double> epoch_losses;
};

// Mini-batch SGD over seeded-shuffled epochs; the input model is untouched.
FineTuneResult fine_tune(const TextClassifier& model,
                         const std::vector<text::Example>& train,
                         const TrainConfig& cfg);

// Argmax over logits, ties broken toward the lowest class index.
std::vector<int> predict(const TextClassifier& model,
                         const std::vector<text::Example>& examples);
std::vector<std::vector<double>> predict_proba(const TextClassifier& model,
                                               const std::vector<text::Example>& examples);

}  // namespace xlmeta::model
