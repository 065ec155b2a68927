#include "xlmeta/metalearn.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "xlmeta/eval.hpp"

namespace xlmeta::meta {

using ad::ParamSet;
using ad::Tensor;

namespace {

// splitmix64; decorrelates per-episode seeds drawn from one base seed
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace

void MetaConfig::validate() const {
    if (alpha <= 0 || beta <= 0) {
        throw ConfigError("meta config: alpha and beta must be positive");
    }
    if (shots < 1 || query_size < 1) {
        throw ConfigError("meta config: shots and query_size must be >= 1");
    }
    if (inner_steps < 1) throw ConfigError("meta config: inner_steps must be >= 1");
    if (task_batch < 1) throw ConfigError("meta config: task_batch must be >= 1");
}

std::string stage_name(Stage s) {
    return s == Stage::MetaTrain ? "meta-train" : "meta-adapt";
}

StageSpec StageSpec::meta_train(std::vector<std::string> source, std::string target) {
    return {Stage::MetaTrain, std::move(source), {std::move(target)}};
}

StageSpec StageSpec::meta_adapt(std::string target) {
    return {Stage::MetaAdapt, {target}, {target}};
}

std::vector<Episode> generate_episodes(const LanguagePools& support_pools,
                                       const LanguagePools& query_pools,
                                       const StageSpec& stage, const MetaConfig& cfg,
                                       std::size_t count, const TaskSpec& task,
                                       std::uint64_t seed_offset) {
    auto check_pools = [](const LanguagePools& pools, const std::vector<std::string>& allowed,
                          const char* side) {
        if (pools.empty()) {
            throw ConfigError(std::string("generate_episodes: no ") + side + " pools");
        }
        for (const auto& [lang, pool] : pools) {
            if (std::find(allowed.begin(), allowed.end(), lang) == allowed.end()) {
                throw ConfigError(std::string("generate_episodes: ") + side + " language '" +
                                  lang + "' not permitted by the stage");
            }
            if (pool.empty()) {
                throw ConfigError(std::string("generate_episodes: empty ") + side +
                                  " pool for language '" + lang + "'");
            }
        }
    };
    check_pools(support_pools, stage.support_languages, "support");
    check_pools(query_pools, stage.query_languages, "query");

    std::vector<std::string> support_langs, query_langs;
    for (const auto& [lang, _] : support_pools) support_langs.push_back(lang);
    for (const auto& [lang, _] : query_pools) query_langs.push_back(lang);

    std::vector<Episode> episodes;
    episodes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = mix_seed(cfg.seed, seed_offset + i);
        std::mt19937_64 pick(seed);
        const auto& support_pool = support_pools.at(support_langs[pick() % support_langs.size()]);
        const auto& query_pool = query_pools.at(query_langs[pick() % query_langs.size()]);
        episodes.push_back(text::sample_support_query(support_pool, query_pool, cfg.shots,
                                                      cfg.query_size, task, seed));
    }
    return episodes;
}

ParamSet inner_adapt_generic(const ParamSet& theta, const LossFn& support_loss,
                             double alpha, int steps) {
    if (steps < 1) throw ContractError("inner_adapt: steps must be >= 1");
    if (alpha < 0) throw ContractError("inner_adapt: alpha must be non-negative");
    if (alpha == 0) return theta;
    ParamSet adapted = theta;
    for (int s = 0; s < steps; ++s) {
        adapted = ad::sgd_step(adapted, support_loss(adapted).grads, alpha);
    }
    return adapted;
}

ParamSet outer_update_generic(const ParamSet& theta,
                              const std::vector<EpisodeLoss>& episodes,
                              double alpha, int inner_steps, double beta,
                              OuterStepStats* stats) {
    if (episodes.empty()) throw ContractError("outer_update: no episodes");
    if (beta <= 0) throw ContractError("outer_update: beta must be positive");

    ad::GradMap total;
    double support_loss_sum = 0.0;
    double query_loss_sum = 0.0;
    for (const auto& episode : episodes) {
        support_loss_sum += episode.support_loss(theta).loss;
        const ParamSet adapted =
            inner_adapt_generic(theta, episode.support_loss, alpha, inner_steps);
        // first-order: the query gradient is taken at theta' and applied to theta
        model::LossGrads query = episode.query_loss(adapted);
        query_loss_sum += query.loss;
        for (auto& [name, g] : query.grads) {
            auto it = total.find(name);
            if (it == total.end()) {
                total.emplace(name, std::move(g));
            } else {
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    it->second.data[i] += g.data[i];
                }
            }
        }
    }
    if (stats) {
        stats->mean_support_loss = support_loss_sum / static_cast<double>(episodes.size());
        stats->mean_query_loss = query_loss_sum / static_cast<double>(episodes.size());
    }
    return ad::sgd_step(theta, total, beta);
}

namespace {

LossFn example_loss_fn(std::vector<Example> examples, std::uint32_t vocab) {
    return [examples = std::move(examples), vocab](const ParamSet& params) {
        return model::example_loss_and_grads(params, examples, vocab);
    };
}

std::vector<EpisodeLoss> bind_episodes(const std::vector<Episode>& episodes,
                                       std::uint32_t vocab) {
    std::vector<EpisodeLoss> bound;
    bound.reserve(episodes.size());
    for (const auto& episode : episodes) {
        bound.push_back({example_loss_fn(episode.support, vocab),
                         example_loss_fn(episode.query, vocab)});
    }
    return bound;
}

}  // namespace

ParamSet inner_adapt(const model::TextClassifier& model,
                     const std::vector<Example>& support, double alpha, int steps) {
    return inner_adapt_generic(model.params, example_loss_fn(support, model.vocab),
                               alpha, steps);
}

model::TextClassifier outer_update(const model::TextClassifier& model,
                                   const std::vector<Episode>& episodes,
                                   const MetaConfig& cfg, OuterStepStats* stats) {
    model::TextClassifier out = model;
    out.params = outer_update_generic(model.params, bind_episodes(episodes, model.vocab),
                                      cfg.alpha, cfg.inner_steps, cfg.beta, stats);
    return out;
}

namespace {

struct StagePools {
    LanguagePools support;
    LanguagePools query;
    StageSpec spec;
};

// Resolve the target-side pool according to the training choice.
std::vector<Example> target_pool(const TrainingChoice& choice, const MetaCorpora& corpora,
                                 const MetaConfig& cfg) {
    if (choice.choice == Choice::FewShot) {
        auto it = corpora.target_train.find(corpora.target_language);
        if (it == corpora.target_train.end() || it->second.empty()) {
            throw ConfigError("meta_train: few-shot choice requires gold target examples");
        }
        std::vector<Example> pool = it->second;
        std::mt19937_64 rng(mix_seed(cfg.seed, 0x746172676574ull));
        std::shuffle(pool.begin(), pool.end(), rng);
        if (choice.k_target_labeled > 0 && choice.k_target_labeled < pool.size()) {
            pool.resize(choice.k_target_labeled);
        }
        return pool;
    }
    // zero-shot: silver labels only; no gold target labels may enter episodes
    return corpora.target_silver;
}

StagePools resolve_stage(const StageSpec& spec, const TrainingChoice& choice,
                         const MetaCorpora& corpora, const MetaConfig& cfg) {
    StagePools out;
    out.spec = spec;
    const std::vector<Example> target = target_pool(choice, corpora, cfg);
    const bool surrogate = target.empty();  // zero-shot without silver labels

    auto target_side = [&]() -> LanguagePools {
        if (!surrogate) return {{corpora.target_language, target}};
        // fall back to source-language queries so the loop can still run
        return corpora.source_val;
    };
    auto fix_langs = [&](const std::vector<std::string>& langs) {
        if (!surrogate) return langs;
        return corpora.source_languages;
    };

    if (spec.stage == Stage::MetaTrain) {
        out.support = corpora.source_val;
        out.query = target_side();
        out.spec.query_languages = fix_langs(spec.query_languages);
    } else {
        out.support = target_side();
        out.query = target_side();
        out.spec.support_languages = fix_langs(spec.support_languages);
        out.spec.query_languages = fix_langs(spec.query_languages);
    }
    return out;
}

}  // namespace

MetaResult meta_train(const model::TextClassifier& base, const TrainingChoice& choice,
                      const std::vector<StageSpec>& stages, const MetaCorpora& corpora,
                      const MetaConfig& cfg) {
    cfg.validate();
    if (choice.choice == Choice::ZeroShot && choice.k_target_labeled != 0) {
        throw ConfigError("meta_train: zero-shot choice forbids gold target labels");
    }
    MetaResult result;
    result.model = base;
    const text::TaskSpec task = text::TaskSpec::by_id(base.n_classes == 4 ? 3 : 1);

    std::uint64_t episode_counter = 0;
    for (const auto& stage : stages) {
        const StagePools pools = resolve_stage(stage, choice, corpora, cfg);
        for (std::size_t step = 0; step < cfg.outer_steps; ++step) {
            const auto episodes =
                generate_episodes(pools.support, pools.query, pools.spec, cfg,
                                  cfg.task_batch, task, episode_counter);
            episode_counter += cfg.task_batch;
            OuterStepStats stats;
            result.model = outer_update(result.model, episodes, cfg, &stats);
            result.trace.push_back({step, stage_name(stage.stage),
                                    stats.mean_support_loss, stats.mean_query_loss});
        }
    }
    return result;
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("trace: cannot open " + path.string() + " for writing");
    out << "outer_step,stage,mean_support_loss,mean_query_loss\n";
    for (const auto& row : trace) {
        out << row.outer_step << ',' << row.stage << ',' << row.mean_support_loss << ','
            << row.mean_query_loss << '\n';
    }
}

namespace {

// Split the silver pool into support/query halves when the strict balanced
// sampler cannot be satisfied; never throws for a non-empty pool.
std::vector<Episode> lenient_episodes(const std::vector<Example>& silver,
                                      const MetaConfig& cfg, std::uint64_t seed) {
    std::vector<Episode> episodes;
    if (silver.size() < 2) return episodes;
    std::vector<Example> pool = silver;
    for (std::size_t i = 0; i < cfg.task_batch; ++i) {
        std::mt19937_64 rng(mix_seed(seed, i));
        std::shuffle(pool.begin(), pool.end(), rng);
        const std::size_t half = pool.size() / 2;
        Episode episode;
        episode.support.assign(pool.begin(),
                               pool.begin() + static_cast<std::ptrdiff_t>(
                                                  std::min(half, cfg.shots)));
        episode.query.assign(pool.begin() + static_cast<std::ptrdiff_t>(half),
                             pool.begin() + static_cast<std::ptrdiff_t>(
                                                half + std::min(pool.size() - half,
                                                                cfg.query_size)));
        episodes.push_back(std::move(episode));
    }
    return episodes;
}

}  // namespace

model::TextClassifier self_train(const model::TextClassifier& model,
                                 const std::vector<Example>& unlabeled_target,
                                 int rounds, double threshold, const MetaConfig& cfg,
                                 const std::vector<Example>& source_val,
                                 const TaskSpec& task) {
    if (threshold < 0.5 || threshold >= 1.0) {
        throw ContractError("self_train: threshold must be in [0.5, 1)");
    }
    if (rounds < 1) throw ContractError("self_train: rounds must be >= 1");
    if (unlabeled_target.empty()) throw ContractError("self_train: no unlabeled data");

    auto validation_f1 = [&](const model::TextClassifier& m) {
        if (source_val.empty()) return 0.0;
        std::vector<int> golds;
        for (const auto& ex : source_val) golds.push_back(ex.label);
        return eval::macro_f1(model::predict(m, source_val), golds, task.n_classes());
    };

    model::TextClassifier current = model;
    model::TextClassifier best = model;
    double best_f1 = validation_f1(model);

    for (int round = 0; round < rounds; ++round) {
        const auto probs = model::predict_proba(current, unlabeled_target);
        std::vector<Example> silver;
        for (std::size_t i = 0; i < unlabeled_target.size(); ++i) {
            const auto max_it = std::max_element(probs[i].begin(), probs[i].end());
            if (*max_it >= threshold) {
                Example ex = unlabeled_target[i];
                ex.label = static_cast<int>(max_it - probs[i].begin());
                ex.silver = true;
                silver.push_back(std::move(ex));
            }
        }
        if (silver.empty()) {
            if (round == 0) {
                throw SelfTrainError(
                    "self_train: no example cleared the confidence threshold in round 1; "
                    "lower the threshold");
            }
            break;
        }

        std::vector<Episode> episodes;
        try {
            const StageSpec adapt = StageSpec::meta_adapt(silver.front().language);
            episodes = generate_episodes({{silver.front().language, silver}},
                                         {{silver.front().language, silver}}, adapt, cfg,
                                         cfg.task_batch, task,
                                         static_cast<std::uint64_t>(round) * cfg.task_batch);
        } catch (const DataError&) {
            episodes = lenient_episodes(silver, cfg, mix_seed(cfg.seed, 0x73696c766572ull + round));
        } catch (const ConfigError&) {
            episodes = lenient_episodes(silver, cfg, mix_seed(cfg.seed, 0x73696c766572ull + round));
        }
        if (episodes.empty()) continue;

        for (std::size_t step = 0; step < cfg.outer_steps; ++step) {
            current = outer_update(current, episodes, cfg);
        }
        const double f1 = validation_f1(current);
        if (f1 >= best_f1) {
            best_f1 = f1;
            best = current;
        }
    }
    return best;
}

DomainAdaptResult domain_adapt_train(
    const model::TextClassifier& base,
    const std::vector<std::pair<std::string, std::vector<Example>>>& aux,
    const std::vector<Example>& target_test, std::size_t instances,
    const MetaConfig& cfg, const model::TrainConfig& tune_cfg, const TaskSpec& task) {
    if (instances != 512 && instances != 1024 && instances != 2048) {
        throw ConfigError("domain_adapt_train: instances must be one of {512, 1024, 2048}");
    }
    if (aux.empty()) throw ConfigError("domain_adapt_train: no auxiliary corpora");

    DomainAdaptResult result;
    std::vector<std::pair<std::string, std::vector<Example>>> capped;
    for (const auto& [lang, pool] : aux) {
        std::vector<Example> truncated = pool;
        std::mt19937_64 rng(mix_seed(cfg.seed, text::fnv1a64(lang)));
        std::shuffle(truncated.begin(), truncated.end(), rng);
        // smaller corpora fall back to everything available
        if (truncated.size() > instances) truncated.resize(instances);
        result.instances_used[lang] = truncated.size();
        capped.emplace_back(lang, std::move(truncated));
    }

    std::vector<int> golds;
    for (const auto& ex : target_test) golds.push_back(ex.label);

    // fine-tuning variant: pooled auxiliary data
    std::vector<Example> pooled;
    for (const auto& [_, examples] : capped) {
        pooled.insert(pooled.end(), examples.begin(), examples.end());
    }
    const auto tuned = model::fine_tune(base, pooled, tune_cfg);
    result.fine_tune_macro_f1 =
        eval::macro_f1(model::predict(tuned.model, target_test), golds, task.n_classes());

    // meta variant: first aux language on the support side, the rest as queries
    LanguagePools support = {{capped.front().first, capped.front().second}};
    LanguagePools query;
    std::vector<std::string> query_langs;
    for (std::size_t i = capped.size() > 1 ? 1 : 0; i < capped.size(); ++i) {
        query[capped[i].first] = capped[i].second;
        query_langs.push_back(capped[i].first);
    }
    StageSpec spec{Stage::MetaTrain, {capped.front().first}, query_langs};

    model::TextClassifier meta_model = base;
    std::uint64_t episode_counter = 0;
    for (std::size_t step = 0; step < cfg.outer_steps; ++step) {
        const auto episodes = generate_episodes(support, query, spec, cfg, cfg.task_batch,
                                                task, episode_counter);
        episode_counter += cfg.task_batch;
        meta_model = outer_update(meta_model, episodes, cfg);
    }
    result.meta_macro_f1 =
        eval::macro_f1(model::predict(meta_model, target_test), golds, task.n_classes());
    return result;
}

EpisodeAudit audit_episodes(const std::vector<Episode>& episodes, const StageSpec& stage,
                            const std::string& target_language, Choice choice) {
    EpisodeAudit audit;
    auto in = [](const std::vector<std::string>& langs, const std::string& lang) {
        return std::find(langs.begin(), langs.end(), lang) != langs.end();
    };
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        ++audit.checked;
        const auto& episode = episodes[i];
        for (const auto& ex : episode.support) {
            if (!in(stage.support_languages, ex.language)) {
                audit.violations.push_back("episode " + std::to_string(i) + ": support example '" +
                                           ex.id + "' has language '" + ex.language + "'");
            }
        }
        for (const auto& ex : episode.query) {
            if (!in(stage.query_languages, ex.language)) {
                audit.violations.push_back("episode " + std::to_string(i) + ": query example '" +
                                           ex.id + "' has language '" + ex.language + "'");
            }
        }
        if (choice == Choice::ZeroShot) {
            auto flag_gold = [&](const std::vector<Example>& side, const char* name) {
                for (const auto& ex : side) {
                    if (ex.language == target_language && !ex.silver) {
                        audit.violations.push_back("episode " + std::to_string(i) + ": gold " +
                                                   target_language + " label in " + name +
                                                   " ('" + ex.id + "')");
                    }
                }
            };
            flag_gold(episode.support, "support");
            flag_gold(episode.query, "query");
        }
    }
    return audit;
}

}  // namespace xlmeta::meta
