#include "xlmeta/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "xlmeta/classifier.hpp"
#include "xlmeta/eval.hpp"
#include "xlmeta/icl.hpp"
#include "xlmeta/metalearn.hpp"
#include "xlmeta/textdata.hpp"

namespace xlmeta::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ExperimentConfig {
    int task_id = 1;
    std::vector<std::string> source_languages = {"en"};
    std::string target_language = "sw";
    std::map<std::string, std::string> corpora_paths;  // language -> jsonl
    std::string prompt_dir = "resources/prompts";
    std::string output_root = "out";
    std::uint32_t vocab = text::kDefaultVocab;
    std::size_t dim = 32;
    double split_train = 0.8, split_val = 0.1, split_test = 0.1;

    model::TrainConfig train;
    meta::MetaConfig meta_cfg;
    std::string choice_mode = "few-shot";
    std::size_t k_target_labeled = 128;

    int self_train_rounds = 3;
    double self_train_threshold = 0.8;

    std::vector<std::string> aux_languages = {"en", "ar"};
    std::size_t instances = 1024;

    std::string icl_strategy = "english";
    std::string icl_mode = "examples_only";
    std::size_t icl_k = 4;
    std::string icl_backend = "mock";
    std::string icl_separator = "\n\n";
    double icl_temperature = 0.0;
    std::string icl_base_url;
    std::string icl_model;
    std::size_t icl_max_chars = 4000;
    std::string api_key_env = "LLM_API_KEY";

    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

    std::size_t synth_vocab = 2000;
    std::size_t synth_classes = 2;
    double synth_margin = 0.8;
    std::size_t synth_examples_per_class = 150;
    std::size_t synth_tokens_per_example = 20;
    double synth_shared_fraction = 0.1;

    fs::path config_path;
    std::string raw_bytes;
};

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

ExperimentConfig load_config(const fs::path& path) {
    ExperimentConfig cfg;
    cfg.config_path = path;
    cfg.raw_bytes = read_file(path);
    json doc;
    try {
        doc = json::parse(cfg.raw_bytes);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }

    try {
        cfg.task_id = doc.value("task_id", cfg.task_id);
        if (doc.contains("languages")) {
            const auto& langs = doc["languages"];
            cfg.source_languages =
                langs.value("source", cfg.source_languages);
            cfg.target_language = langs.value("target", cfg.target_language);
        }
        if (doc.contains("paths")) {
            const auto& paths = doc["paths"];
            if (paths.contains("corpora")) {
                cfg.corpora_paths =
                    paths["corpora"].get<std::map<std::string, std::string>>();
            }
            cfg.prompt_dir = paths.value("prompts", cfg.prompt_dir);
            cfg.output_root = paths.value("output", cfg.output_root);
        }
        cfg.vocab = doc.value("vocab", cfg.vocab);
        cfg.dim = doc.value("dim", cfg.dim);
        if (doc.contains("split")) {
            cfg.split_train = doc["split"].value("train", cfg.split_train);
            cfg.split_val = doc["split"].value("val", cfg.split_val);
            cfg.split_test = doc["split"].value("test", cfg.split_test);
        }
        if (doc.contains("train")) {
            const auto& t = doc["train"];
            cfg.train.lr = t.value("lr", cfg.train.lr);
            cfg.train.epochs = t.value("epochs", cfg.train.epochs);
            cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
            cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
        }
        if (doc.contains("meta")) {
            const auto& m = doc["meta"];
            cfg.meta_cfg.alpha = m.value("alpha", cfg.meta_cfg.alpha);
            cfg.meta_cfg.beta = m.value("beta", cfg.meta_cfg.beta);
            cfg.meta_cfg.shots = m.value("shots", cfg.meta_cfg.shots);
            cfg.meta_cfg.query_size = m.value("query_size", cfg.meta_cfg.shots);
            cfg.meta_cfg.inner_steps = m.value("inner_steps", cfg.meta_cfg.inner_steps);
            cfg.meta_cfg.task_batch = m.value("task_batch", cfg.meta_cfg.task_batch);
            cfg.meta_cfg.outer_steps = m.value("outer_steps", cfg.meta_cfg.outer_steps);
            cfg.meta_cfg.first_order = m.value("first_order", cfg.meta_cfg.first_order);
        }
        if (doc.contains("choice")) {
            cfg.choice_mode = doc["choice"].value("mode", cfg.choice_mode);
            cfg.k_target_labeled =
                doc["choice"].value("k_target_labeled", cfg.k_target_labeled);
        }
        if (doc.contains("self_train")) {
            cfg.self_train_rounds = doc["self_train"].value("rounds", cfg.self_train_rounds);
            cfg.self_train_threshold =
                doc["self_train"].value("threshold", cfg.self_train_threshold);
        }
        if (doc.contains("domain_adapt")) {
            cfg.aux_languages = doc["domain_adapt"].value("aux", cfg.aux_languages);
            cfg.instances = doc["domain_adapt"].value("instances", cfg.instances);
        }
        if (doc.contains("icl")) {
            const auto& i = doc["icl"];
            cfg.icl_strategy = i.value("strategy", cfg.icl_strategy);
            cfg.icl_mode = i.value("mode", cfg.icl_mode);
            cfg.icl_k = i.value("k", cfg.icl_k);
            cfg.icl_backend = i.value("backend", cfg.icl_backend);
            cfg.icl_separator = i.value("separator", cfg.icl_separator);
            cfg.icl_temperature = i.value("temperature", cfg.icl_temperature);
            cfg.icl_base_url = i.value("base_url", cfg.icl_base_url);
            cfg.icl_model = i.value("model", cfg.icl_model);
            cfg.icl_max_chars = i.value("max_chars", cfg.icl_max_chars);
            cfg.api_key_env = i.value("api_key_env", cfg.api_key_env);
        }
        cfg.seeds = doc.value("seeds", cfg.seeds);
        if (doc.contains("synth")) {
            const auto& s = doc["synth"];
            cfg.synth_vocab = s.value("vocab_size", cfg.synth_vocab);
            cfg.synth_classes = s.value("classes", cfg.synth_classes);
            cfg.synth_margin = s.value("margin", cfg.synth_margin);
            cfg.synth_examples_per_class =
                s.value("examples_per_class", cfg.synth_examples_per_class);
            cfg.synth_tokens_per_example =
                s.value("tokens_per_example", cfg.synth_tokens_per_example);
            cfg.synth_shared_fraction =
                s.value("shared_fraction", cfg.synth_shared_fraction);
        }
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }

    if (cfg.seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() !=
        cfg.seeds.size()) {
        throw ConfigError("config: seeds must be distinct");
    }
    return cfg;
}

fs::path out_dir(const ExperimentConfig& cfg) {
    const auto hash = text::fnv1a64(cfg.raw_bytes);
    std::ostringstream name;
    name << std::hex << hash;
    fs::path dir = fs::path(cfg.output_root) / name.str();
    fs::create_directories(dir);
    return dir;
}

struct Data {
    text::TaskSpec task;
    std::map<std::string, text::Corpus> corpora;  // split already applied

    std::vector<text::Example> pool(const std::string& language, text::Split split) const {
        auto it = corpora.find(language);
        if (it == corpora.end()) {
            throw ConfigError("no corpus configured for language '" + language + "'");
        }
        return it->second.subset(split, language);
    }
};

Data load_data(const ExperimentConfig& cfg) {
    Data data;
    data.task = text::TaskSpec::by_id(cfg.task_id);
    if (cfg.corpora_paths.empty()) {
        throw ConfigError("config: paths.corpora is required for this command");
    }
    for (const auto& [lang, path] : cfg.corpora_paths) {
        if (!fs::exists(path)) {
            throw ConfigError("config: corpus path does not exist: " + path);
        }
        text::Corpus corpus = text::load_corpus(path, data.task);
        text::split_corpus(corpus, cfg.split_train, cfg.split_val, cfg.split_test,
                           cfg.seeds.front());
        data.corpora.emplace(lang, std::move(corpus));
    }
    return data;
}

struct RunRow {
    std::string method;
    std::string setting;
    std::uint64_t seed = 0;
    std::string metric;
    double value = 0.0;
    std::size_t unparsed = 0;
};

void write_runs(const ExperimentConfig& cfg, const fs::path& dir,
                const std::vector<RunRow>& rows) {
    json out = json::array();
    std::vector<std::pair<eval::GroupKey, double>> grouped;
    for (const auto& row : rows) {
        out.push_back({{"task", cfg.task_id},
                       {"method", row.method},
                       {"setting", row.setting},
                       {"seed", row.seed},
                       {"metric", row.metric},
                       {"value", row.value},
                       {"unparsed", row.unparsed}});
        grouped.push_back(
            {{std::to_string(cfg.task_id), row.method, row.setting, row.metric}, row.value});
    }
    std::ofstream runs(dir / "runs.json");
    runs << out.dump(2) << '\n';
    const auto report = eval::aggregate(grouped);
    eval::write_report_csv(report, {"task", "method", "setting", "metric"},
                           dir / "metrics.csv");
    eval::write_report_json(report, {"task", "method", "setting", "metric"},
                            dir / "metrics.json");
}

std::vector<text::Example> pooled(const Data& data, const std::vector<std::string>& langs,
                                  text::Split split) {
    std::vector<text::Example> out;
    for (const auto& lang : langs) {
        auto part = data.pool(lang, split);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

std::vector<int> golds_of(const std::vector<text::Example>& examples) {
    std::vector<int> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(ex.label);
    return out;
}

model::TextClassifier fit_base(const ExperimentConfig& cfg, const Data& data,
                               std::uint64_t seed) {
    auto base = model::TextClassifier::init(cfg.vocab, cfg.dim, data.task.n_classes(), seed);
    model::TrainConfig train = cfg.train;
    train.seed = seed;
    const auto source_train = pooled(data, cfg.source_languages, text::Split::Train);
    return model::fine_tune(base, source_train, train).model;
}

meta::MetaCorpora assemble_meta_corpora(const ExperimentConfig& cfg, const Data& data) {
    meta::MetaCorpora corpora;
    corpora.source_languages = cfg.source_languages;
    corpora.target_language = cfg.target_language;
    for (const auto& lang : cfg.source_languages) {
        corpora.source_val[lang] = data.pool(lang, text::Split::Val);
    }
    corpora.target_train[cfg.target_language] =
        data.pool(cfg.target_language, text::Split::Train);
    return corpora;
}

meta::TrainingChoice choice_of(const ExperimentConfig& cfg) {
    if (cfg.choice_mode == "zero-shot") return {meta::Choice::ZeroShot, 0};
    if (cfg.choice_mode == "few-shot") {
        return {meta::Choice::FewShot, cfg.k_target_labeled};
    }
    throw ConfigError("config: choice.mode must be zero-shot or few-shot");
}

int cmd_synth_gen(const ExperimentConfig& cfg) {
    eval::SyntheticOptions opts;
    opts.examples_per_class = cfg.synth_examples_per_class;
    opts.tokens_per_example = cfg.synth_tokens_per_example;
    opts.shared_fraction = cfg.synth_shared_fraction;
    opts.source_language = cfg.source_languages.front();
    opts.target_language = cfg.target_language;
    const auto pair = eval::make_synthetic_pair(cfg.seeds.front(), cfg.synth_vocab,
                                                cfg.synth_classes, cfg.synth_margin, opts);
    const fs::path dir = out_dir(cfg);
    text::save_corpus(pair.source, dir / ("synthetic." + opts.source_language + ".jsonl"));
    text::save_corpus(pair.target, dir / ("synthetic." + opts.target_language + ".jsonl"));
    std::cout << "wrote " << (dir / ("synthetic." + opts.source_language + ".jsonl")).string()
              << " and " << (dir / ("synthetic." + opts.target_language + ".jsonl")).string()
              << '\n';
    return 0;
}

int cmd_prep(const ExperimentConfig& cfg) {
    const Data data = load_data(cfg);
    const fs::path dir = out_dir(cfg);
    for (const auto& [lang, corpus] : data.corpora) {
        text::write_split_sidecar(corpus, dir / ("splits." + lang + ".json"));
    }
    std::cout << "prepared " << data.corpora.size() << " corpora under " << dir.string()
              << '\n';
    return 0;
}

int cmd_train_baseline(const ExperimentConfig& cfg) {
    const Data data = load_data(cfg);
    const fs::path dir = out_dir(cfg);
    const auto target_test = data.pool(cfg.target_language, text::Split::Test);
    const auto golds = golds_of(target_test);
    std::vector<RunRow> rows;
    for (std::uint64_t seed : cfg.seeds) {
        const auto tuned = fit_base(cfg, data, seed);
        const double f1 = eval::macro_f1(model::predict(tuned, target_test), golds,
                                         data.task.n_classes());
        rows.push_back({"fine-tune", "source-only", seed, "macro_f1", f1, 0});
        if (seed == cfg.seeds.front()) {
            ad::save_checkpoint(tuned.params, dir / "baseline.ckpt");
        }
    }
    write_runs(cfg, dir, rows);
    return 0;
}

int cmd_meta_train(const ExperimentConfig& cfg) {
    const Data data = load_data(cfg);
    const fs::path dir = out_dir(cfg);
    const auto target_test = data.pool(cfg.target_language, text::Split::Test);
    const auto golds = golds_of(target_test);
    const auto corpora = assemble_meta_corpora(cfg, data);
    const auto choice = choice_of(cfg);
    const std::vector<meta::StageSpec> stages = {
        meta::StageSpec::meta_train(cfg.source_languages, cfg.target_language),
        meta::StageSpec::meta_adapt(cfg.target_language),
    };
    std::vector<RunRow> rows;
    for (std::uint64_t seed : cfg.seeds) {
        auto base = fit_base(cfg, data, seed);
        meta::MetaConfig mc = cfg.meta_cfg;
        mc.seed = seed;
        const auto result = meta::meta_train(base, choice, stages, corpora, mc);
        const double f1 = eval::macro_f1(model::predict(result.model, target_test), golds,
                                         data.task.n_classes());
        rows.push_back({"meta", cfg.choice_mode, seed, "macro_f1", f1, 0});
        if (seed == cfg.seeds.front()) {
            ad::save_checkpoint(result.model.params, dir / "meta.ckpt");
            meta::write_trace_csv(result.trace, dir / "meta_loss.csv");
        }
    }
    write_runs(cfg, dir, rows);
    return 0;
}

int cmd_self_train(const ExperimentConfig& cfg) {
    const Data data = load_data(cfg);
    const fs::path dir = out_dir(cfg);
    const auto target_test = data.pool(cfg.target_language, text::Split::Test);
    const auto golds = golds_of(target_test);
    const auto unlabeled = data.pool(cfg.target_language, text::Split::Train);
    const auto source_val = pooled(data, cfg.source_languages, text::Split::Val);
    std::vector<RunRow> rows;
    for (std::uint64_t seed : cfg.seeds) {
        auto base = fit_base(cfg, data, seed);
        meta::MetaConfig mc = cfg.meta_cfg;
        mc.seed = seed;
        const auto refined =
            meta::self_train(base, unlabeled, cfg.self_train_rounds,
                             cfg.self_train_threshold, mc, source_val, data.task);
        const double f1 = eval::macro_f1(model::predict(refined, target_test), golds,
                                         data.task.n_classes());
        rows.push_back({"self-train", "zero-shot", seed, "macro_f1", f1, 0});
        if (seed == cfg.seeds.front()) {
            ad::save_checkpoint(refined.params, dir / "self_train.ckpt");
        }
    }
    write_runs(cfg, dir, rows);
    return 0;
}

int cmd_domain_adapt(const ExperimentConfig& cfg) {
    const Data data = load_data(cfg);
    const fs::path dir = out_dir(cfg);
    const auto target_test = data.pool(cfg.target_language, text::Split::Test);
    std::vector<RunRow> rows;
    for (std::uint64_t seed : cfg.seeds) {
        auto base = model::TextClassifier::init(cfg.vocab, cfg.dim, data.task.n_classes(),
                                                seed);
        std::vector<std::pair<std::string, std::vector<text::Example>>> aux;
        for (const auto& lang : cfg.aux_languages) {
            aux.emplace_back(lang, data.pool(lang, text::Split::Train));
        }
        meta::MetaConfig mc = cfg.meta_cfg;
        mc.seed = seed;
        model::TrainConfig tc = cfg.train;
        tc.seed = seed;
        const auto result = meta::domain_adapt_train(base, aux, target_test, cfg.instances,
                                                     mc, tc, data.task);
        const std::string cap = "@" + std::to_string(cfg.instances);
        rows.push_back({"domain-adapt", "fine-tune" + cap, seed, "macro_f1",
                        result.fine_tune_macro_f1, 0});
        rows.push_back(
            {"domain-adapt", "meta" + cap, seed, "macro_f1", result.meta_macro_f1, 0});
        if (seed == cfg.seeds.front()) {
            json used;
            for (const auto& [lang, n] : result.instances_used) used[lang] = n;
            std::ofstream(dir / "instances_used.json") << used.dump(2) << '\n';
        }
    }
    write_runs(cfg, dir, rows);
    return 0;
}

icl::DemoSet draw_demos(const std::vector<text::Example>& pool, std::size_t k,
                        std::uint64_t seed) {
    icl::DemoSet demos;
    if (k == 0) return demos;
    if (pool.size() < k) {
        throw SamplingError("icl: demo pool has " + std::to_string(pool.size()) +
                            " examples, need " + std::to_string(k));
    }
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < k; ++i) {
        demos.demos.emplace_back(pool[order[i]], pool[order[i]].label);
    }
    return demos;
}

int cmd_icl_run(const ExperimentConfig& cfg) {
    const Data data = load_data(cfg);
    const fs::path dir = out_dir(cfg);
    const auto strategy = icl::strategy_from_name(cfg.icl_strategy);
    const auto mode = cfg.icl_mode == "instruction_demo" ? icl::FewShotMode::InstructionDemo
                                                         : icl::FewShotMode::ExamplesOnly;
    auto built = icl::build_strategy_prompt(data.task, strategy, mode, cfg.prompt_dir);
    built.prompt.separator = cfg.icl_separator;

    const auto demo_pool = data.pool(built.demo_language, text::Split::Train);
    // English prompting evaluates English test examples; the other two
    // strategies evaluate the target language.
    const std::string test_language =
        strategy == icl::Strategy::English ? built.demo_language : cfg.target_language;
    const auto test_pool = data.pool(test_language, text::Split::Test);
    const auto golds = golds_of(test_pool);

    std::unique_ptr<icl::ChatClient> client;
    if (cfg.icl_backend == "live") {
        icl::ChatClientConfig cc;
        cc.base_url = cfg.icl_base_url;
        cc.model = cfg.icl_model;
        cc.temperature = cfg.icl_temperature;
        cc.api_key_env = cfg.api_key_env;
        client = std::make_unique<icl::ChatClient>(cc);
    } else if (cfg.icl_backend != "mock") {
        throw ConfigError("config: icl.backend must be 'mock' or 'live'");
    }

    std::vector<std::size_t> shot_counts = {0};
    if (cfg.icl_k > 0) shot_counts.push_back(cfg.icl_k);

    icl::TokenOverlapScorer mock;
    std::vector<RunRow> rows;
    for (std::uint64_t seed : cfg.seeds) {
        for (std::size_t k : shot_counts) {
            const auto demos = draw_demos(demo_pool, k, seed);
            std::vector<int> predictions;
            std::size_t unparsed = 0;
            std::size_t truncated_count = 0;
            for (const auto& ex : test_pool) {
                text::Example test_ex = ex;
                bool truncated = false;
                test_ex.text = icl::truncate_middle(ex.text, cfg.icl_max_chars, &truncated);
                if (truncated) ++truncated_count;
                int predicted;
                if (client) {
                    const auto prompt =
                        icl::render_generation_prompt(built.prompt, demos, test_ex);
                    predicted = icl::predict_via_generation(*client, prompt,
                                                            built.prompt.verbalizer);
                } else {
                    predicted = icl::predict_argmax(
                        mock, icl::render_few_shot(built.prompt, demos, test_ex));
                }
                if (predicted == icl::kUnparsed) ++unparsed;
                predictions.push_back(predicted);
            }
            const double acc = eval::accuracy(predictions, golds);
            const std::string setting =
                (k == 0 ? std::string("zero-shot") : "few-shot-k" + std::to_string(k)) +
                "/" + cfg.icl_strategy + "/" + cfg.icl_mode;
            rows.push_back({"icl", setting, seed, "accuracy", acc, unparsed});
            if (truncated_count > 0) {
                std::cerr << "note: " << truncated_count
                          << " test inputs truncated to fit the context budget\n";
            }
        }
    }
    write_runs(cfg, dir, rows);
    return 0;
}

int cmd_report(const ExperimentConfig& cfg, const std::vector<std::string>& extra_inputs) {
    std::vector<fs::path> inputs;
    inputs.push_back(out_dir(cfg));
    for (const auto& p : extra_inputs) inputs.emplace_back(p);

    std::vector<std::pair<eval::GroupKey, double>> grouped;
    for (const auto& input : inputs) {
        const fs::path runs_path = fs::is_directory(input) ? input / "runs.json" : input;
        if (!fs::exists(runs_path)) {
            throw DataError("report: no runs file at " + runs_path.string());
        }
        json rows;
        std::ifstream(runs_path) >> rows;
        for (const auto& row : rows) {
            grouped.push_back({{row["task"].is_string()
                                    ? row["task"].get<std::string>()
                                    : std::to_string(row["task"].get<int>()),
                                row["method"].get<std::string>(),
                                row["setting"].get<std::string>(),
                                row["metric"].get<std::string>()},
                               row["value"].get<double>()});
        }
    }
    const auto report = eval::aggregate(grouped);
    const fs::path dir = out_dir(cfg);
    eval::write_report_csv(report, {"task", "method", "setting", "metric"},
                           dir / "report.csv");
    eval::write_report_json(report, {"task", "method", "setting", "metric"},
                            dir / "report.json");
    std::cout << "report written to " << (dir / "report.csv").string() << '\n';
    return 0;
}

}  // namespace

std::filesystem::path output_dir_for_config(const std::filesystem::path& config_path) {
    return out_dir(load_config(config_path));
}

int run_command(const std::vector<std::string>& argv) {
    CLI::App app{"cross-lingual meta-learning and in-context-learning experiments"};
    app.require_subcommand(1);

    std::string config_file;
    std::vector<std::string> report_inputs;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::size_t> outer_steps_override;
    std::optional<std::size_t> instances_override;
    std::optional<std::string> strategy_override;
    std::optional<std::string> backend_override;
    std::optional<std::size_t> k_override;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_file, "experiment config JSON")->required();
        sub->add_option("--seed", seed_override, "run a single seed instead of the list");
        sub->add_option("--outer-steps", outer_steps_override, "override meta.outer_steps");
        return sub;
    };
    CLI::App* prep = add_common(app.add_subcommand("prep", "split corpora and write sidecars"));
    CLI::App* baseline =
        add_common(app.add_subcommand("train-baseline", "source-only fine-tuned baseline"));
    CLI::App* metatrain =
        add_common(app.add_subcommand("meta-train", "episodic meta-training and adaptation"));
    CLI::App* selftrain =
        add_common(app.add_subcommand("self-train", "silver-label self-training"));
    CLI::App* domain =
        add_common(app.add_subcommand("domain-adapt", "capped-instance domain adaptation"));
    domain->add_option("--instances", instances_override, "override domain_adapt.instances");
    CLI::App* iclrun =
        add_common(app.add_subcommand("icl-run", "prompt-based classification"));
    iclrun->add_option("--icl-k", k_override, "override icl.k");
    iclrun->add_option("--icl-strategy", strategy_override, "override icl.strategy");
    iclrun->add_option("--icl-backend", backend_override, "override icl.backend");
    CLI::App* report =
        add_common(app.add_subcommand("report", "aggregate runs into a report"));
    report->add_option("--inputs", report_inputs,
                       "extra run directories or runs.json files to merge");
    CLI::App* synth =
        add_common(app.add_subcommand("synth-gen", "generate a synthetic language pair"));

    try {
        std::vector<const char*> cargv;
        cargv.push_back("xlmeta");
        for (const auto& arg : argv) cargv.push_back(arg.c_str());
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        ExperimentConfig cfg = load_config(config_file);
        if (seed_override) {
            cfg.seeds = {*seed_override};
            std::cerr << "override: seeds = [" << *seed_override << "]\n";
        }
        if (outer_steps_override) {
            cfg.meta_cfg.outer_steps = *outer_steps_override;
            std::cerr << "override: meta.outer_steps = " << *outer_steps_override << '\n';
        }
        if (instances_override) {
            cfg.instances = *instances_override;
            std::cerr << "override: domain_adapt.instances = " << *instances_override << '\n';
        }
        if (k_override) {
            cfg.icl_k = *k_override;
            std::cerr << "override: icl.k = " << *k_override << '\n';
        }
        if (strategy_override) {
            cfg.icl_strategy = *strategy_override;
            std::cerr << "override: icl.strategy = " << *strategy_override << '\n';
        }
        if (backend_override) {
            cfg.icl_backend = *backend_override;
            std::cerr << "override: icl.backend = " << *backend_override << '\n';
        }

        if (app.got_subcommand(prep)) return cmd_prep(cfg);
        if (app.got_subcommand(baseline)) return cmd_train_baseline(cfg);
        if (app.got_subcommand(metatrain)) return cmd_meta_train(cfg);
        if (app.got_subcommand(selftrain)) return cmd_self_train(cfg);
        if (app.got_subcommand(domain)) return cmd_domain_adapt(cfg);
        if (app.got_subcommand(iclrun)) return cmd_icl_run(cfg);
        if (app.got_subcommand(report)) return cmd_report(cfg, report_inputs);
        if (app.got_subcommand(synth)) return cmd_synth_gen(cfg);
        std::cerr << "error: unknown subcommand\n" << app.help();
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const TransportError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace xlmeta::cli
