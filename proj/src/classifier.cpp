#include "xlmeta/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace xlmeta::model {

using ad::ParamSet;
using ad::Tensor;
using ad::Var;

namespace {

// 53-bit uniform in [0, 1); stable across platforms, unlike
// std::uniform_real_distribution.
double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

TextClassifier TextClassifier::init(std::uint32_t vocab, std::size_t dim,
                                    std::size_t n_classes, std::uint64_t seed) {
    TextClassifier m;
    m.vocab = vocab;
    m.dim = dim;
    m.n_classes = n_classes;
    std::mt19937_64 rng(seed);
    Tensor emb = Tensor::zeros({vocab, dim});
    for (double& v : emb.data) v = (unit_uniform(rng) * 2.0 - 1.0) * 0.05;
    m.params.values.emplace("embeddings", std::move(emb));
    m.params.values.emplace("head_weight", Tensor::zeros({dim, n_classes}));
    m.params.values.emplace("head_bias", Tensor::zeros({1, n_classes}));
    return m;
}

ForwardGraph forward_logits(const ParamSet& params,
                            const std::vector<text::FeatureVector>& batch) {
    if (batch.empty()) throw ContractError("forward_logits: empty batch");
    ForwardGraph g;
    const Var emb = g.tape.input(params.values.at("embeddings"));
    const Var head = g.tape.input(params.values.at("head_weight"));
    const Var bias = g.tape.input(params.values.at("head_bias"));
    g.param_vars = {{"embeddings", emb}, {"head_weight", head}, {"head_bias", bias}};

    std::vector<std::vector<std::size_t>> bags;
    bags.reserve(batch.size());
    for (const auto& fv : batch) {
        std::vector<std::size_t> bag(fv.token_ids.begin(), fv.token_ids.end());
        bags.push_back(std::move(bag));
    }
    const Var pooled = g.tape.gather_mean(emb, std::move(bags));
    const Var scores = g.tape.matmul(pooled, head);
    // bias broadcast via ones(B x 1) * bias(1 x C)
    const Var ones = g.tape.input(Tensor::ones({batch.size(), 1}));
    const Var bias_rows = g.tape.matmul(ones, bias);
    g.logits = g.tape.add(scores, bias_rows);
    return g;
}

Var loss_nll(ad::Tape& tape, Var logits, std::vector<std::size_t> labels) {
    return tape.nll(tape.log_softmax(logits), std::move(labels));
}

LossGrads loss_and_grads(const ParamSet& params,
                         const std::vector<text::FeatureVector>& batch,
                         const std::vector<std::size_t>& labels) {
    ForwardGraph g = forward_logits(params, batch);
    const Var loss = loss_nll(g.tape, g.logits, labels);
    const auto node_grads = g.tape.backward(loss);
    LossGrads out;
    out.loss = g.tape.value(loss).data[0];
    for (const auto& [name, var] : g.param_vars) {
        out.grads.emplace(name, node_grads[static_cast<std::size_t>(var.id)]);
    }
    return out;
}

std::vector<text::FeatureVector> featurize_batch(const std::vector<text::Example>& examples,
                                                 std::uint32_t vocab) {
    std::vector<text::FeatureVector> batch;
    batch.reserve(examples.size());
    for (const auto& ex : examples) {
        batch.push_back(text::featurize_text(ex.text, vocab));
    }
    return batch;
}

LossGrads example_loss_and_grads(const ParamSet& params,
                                 const std::vector<text::Example>& examples,
                                 std::uint32_t vocab) {
    std::vector<std::size_t> labels;
    labels.reserve(examples.size());
    for (const auto& ex : examples) labels.push_back(static_cast<std::size_t>(ex.label));
    return loss_and_grads(params, featurize_batch(examples, vocab), labels);
}

FineTuneResult fine_tune(const TextClassifier& model,
                         const std::vector<text::Example>& train,
                         const TrainConfig& cfg) {
    if (train.empty()) throw ContractError("fine_tune: empty training set");
    if (cfg.epochs < 1) throw ContractError("fine_tune: epochs must be >= 1");
    if (cfg.lr <= 0) throw ContractError("fine_tune: lr must be positive");
    if (cfg.batch_size < 1) throw ContractError("fine_tune: batch_size must be >= 1");

    FineTuneResult result;
    result.model = model;
    ParamSet& params = result.model.params;
    const auto features = featurize_batch(train, model.vocab);
    std::vector<std::size_t> labels;
    for (const auto& ex : train) labels.push_back(static_cast<std::size_t>(ex.label));

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<text::FeatureVector> batch;
            std::vector<std::size_t> batch_labels;
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(features[order[i]]);
                batch_labels.push_back(labels[order[i]]);
            }
            LossGrads lg = loss_and_grads(params, batch, batch_labels);
            if (cfg.weight_decay > 0) {
                for (auto& [name, g] : lg.grads) {
                    const Tensor& p = params.values.at(name);
                    for (std::size_t i = 0; i < g.data.size(); ++i) {
                        g.data[i] += cfg.weight_decay * p.data[i];
                    }
                }
            }
            params = ad::sgd_step(params, lg.grads, cfg.lr);
            epoch_loss += lg.loss;
            ++n_batches;
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(n_batches));
    }
    return result;
}

std::vector<std::vector<double>> predict_proba(const TextClassifier& model,
                                               const std::vector<text::Example>& examples) {
    if (examples.empty()) return {};
    ForwardGraph g = forward_logits(model.params, featurize_batch(examples, model.vocab));
    const Var logp = g.tape.log_softmax(g.logits);
    const Tensor& lp = g.tape.value(logp);
    std::vector<std::vector<double>> probs(examples.size(),
                                           std::vector<double>(model.n_classes));
    for (std::size_t i = 0; i < examples.size(); ++i) {
        for (std::size_t c = 0; c < model.n_classes; ++c) {
            probs[i][c] = std::exp(lp.at(i, c));
        }
    }
    return probs;
}

std::vector<int> predict(const TextClassifier& model,
                         const std::vector<text::Example>& examples) {
    if (examples.empty()) return {};
    ForwardGraph g = forward_logits(model.params, featurize_batch(examples, model.vocab));
    const Tensor& logits = g.tape.value(g.logits);
    std::vector<int> out(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c) {
            if (logits.at(i, c) > logits.at(i, best)) best = c;
        }
        out[i] = static_cast<int>(best);
    }
    return out;
}

}  // namespace xlmeta::model
