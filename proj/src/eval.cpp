#include "xlmeta/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace xlmeta::eval {

namespace {

void check_lengths(const std::vector<int>& predictions, const std::vector<int>& golds) {
    if (predictions.empty() || predictions.size() != golds.size()) {
        throw ContractError("metric: predictions (" + std::to_string(predictions.size()) +
                            ") and golds (" + std::to_string(golds.size()) +
                            ") must be non-empty and equal length");
    }
}

}  // namespace

double macro_f1(const std::vector<int>& predictions, const std::vector<int>& golds,
                std::size_t n_classes) {
    check_lengths(predictions, golds);
    std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i];
        const int g = golds[i];
        if (g < 0 || static_cast<std::size_t>(g) >= n_classes) {
            throw ContractError("macro_f1: gold label " + std::to_string(g) + " out of range");
        }
        if (p != kUnparsed && (p < 0 || static_cast<std::size_t>(p) >= n_classes)) {
            throw ContractError("macro_f1: prediction " + std::to_string(p) + " out of range");
        }
        if (p == g) {
            ++tp[static_cast<std::size_t>(g)];
        } else {
            ++fn[static_cast<std::size_t>(g)];
            // kUnparsed predicts no class at all: a miss, not a false positive
            if (p >= 0 && static_cast<std::size_t>(p) < n_classes) {
                ++fp[static_cast<std::size_t>(p)];
            }
        }
    }
    double total = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
        total += denom > 0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
    }
    return total / static_cast<double>(n_classes);
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& golds) {
    check_lengths(predictions, golds);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == golds[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

Report aggregate(const std::vector<std::pair<GroupKey, double>>& runs) {
    std::map<GroupKey, std::vector<double>> grouped;
    for (const auto& [key, value] : runs) grouped[key].push_back(value);
    Report report;
    for (const auto& [key, values] : grouped) {
        if (values.empty()) throw ContractError("aggregate: empty group");
        Aggregate agg;
        agg.n_runs = static_cast<int>(values.size());
        agg.mean = std::accumulate(values.begin(), values.end(), 0.0) /
                   static_cast<double>(values.size());
        if (values.size() > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
            agg.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
        }
        report.emplace(key, agg);
    }
    return report;
}

Report aggregate_runs(const std::vector<RunResult>& results, Metric metric) {
    std::vector<std::pair<GroupKey, double>> runs;
    for (const auto& r : results) {
        int max_label = 0;
        for (int g : r.golds) max_label = std::max(max_label, g);
        const double value = metric == Metric::MacroF1
                                 ? macro_f1(r.predictions, r.golds,
                                            static_cast<std::size_t>(max_label) + 1)
                                 : accuracy(r.predictions, r.golds);
        runs.push_back({{std::to_string(r.task_id), r.method, r.setting}, value});
    }
    return aggregate(runs);
}

std::string render_grid_csv(const Report& cells, const std::vector<std::string>& rows,
                            const std::vector<std::string>& subrows,
                            const std::vector<std::string>& cols) {
    std::ostringstream out;
    out << "setting,model";
    for (const auto& col : cols) out << ',' << col;
    out << '\n';
    for (const auto& row : rows) {
        for (const auto& sub : subrows) {
            out << row << ',' << sub;
            for (const auto& col : cols) {
                out << ',';
                auto it = cells.find({row, sub, col});
                if (it != cells.end()) out << it->second.mean;
            }
            out << '\n';
        }
    }
    return out.str();
}

void write_report_csv(const Report& report, const std::vector<std::string>& key_names,
                      const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("report: cannot open " + path.string() + " for writing");
    for (const auto& name : key_names) out << name << ',';
    out << "mean,std,n_runs\n";
    for (const auto& [key, agg] : report) {
        if (key.size() != key_names.size()) {
            throw ContractError("report: key arity does not match column names");
        }
        for (const auto& part : key) out << part << ',';
        out << agg.mean << ',' << agg.stddev << ',' << agg.n_runs << '\n';
    }
}

void write_report_json(const Report& report, const std::vector<std::string>& key_names,
                       const std::filesystem::path& path) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [key, agg] : report) {
        nlohmann::json row;
        for (std::size_t i = 0; i < key_names.size(); ++i) row[key_names[i]] = key[i];
        row["mean"] = agg.mean;
        row["std"] = agg.stddev;
        row["n_runs"] = agg.n_runs;
        rows.push_back(std::move(row));
    }
    std::ofstream out(path);
    if (!out) throw DataError("report: cannot open " + path.string() + " for writing");
    out << rows.dump(2) << '\n';
}

std::string SyntheticLanguagePair::to_target(const std::string& source_token) const {
    for (std::size_t i = 0; i < source_tokens.size(); ++i) {
        if (source_tokens[i] == source_token) return target_tokens[i];
    }
    return source_token;
}

std::string SyntheticLanguagePair::to_source(const std::string& target_token) const {
    for (std::size_t i = 0; i < target_tokens.size(); ++i) {
        if (target_tokens[i] == target_token) return source_tokens[i];
    }
    return target_token;
}

std::string SyntheticLanguagePair::translate_text(const std::string& text,
                                                  bool to_target_language) const {
    std::ostringstream out;
    bool first = true;
    for (const auto& tok : text::tokenize(text)) {
        if (!first) out << ' ';
        first = false;
        out << (to_target_language ? to_target(tok) : to_source(tok));
    }
    return out.str();
}

SyntheticPair make_synthetic_pair(std::uint64_t seed, std::size_t vocab_size,
                                  std::size_t classes, double margin,
                                  const SyntheticOptions& opts) {
    if (margin <= 0.0 || margin > 1.0) {
        throw ContractError("make_synthetic_pair: margin must be in (0, 1]");
    }
    if (vocab_size < 4 * classes) {
        throw ContractError("make_synthetic_pair: vocabulary too small");
    }
    text::TaskSpec task;
    if (classes == 2) {
        task = text::TaskSpec::stress();
    } else if (classes == 4) {
        task = text::TaskSpec::depression_severity();
    } else {
        throw ConfigError("make_synthetic_pair: classes must be 2 or 4");
    }

    std::mt19937_64 rng(seed);
    SyntheticPair pair;
    auto& mapping = pair.mapping;
    mapping.margin = margin;
    mapping.source_tokens.reserve(vocab_size);
    for (std::size_t i = 0; i < vocab_size; ++i) {
        mapping.source_tokens.push_back("w" + std::to_string(i));
    }

    // First half of the vocabulary is class-neutral; the rest splits evenly
    // into per-class indicative sets.
    const std::size_t common_count = vocab_size / 2;
    for (std::size_t i = 0; i < common_count; ++i) mapping.common_tokens.push_back(i);
    mapping.class_tokens.assign(classes, {});
    for (std::size_t i = common_count; i < vocab_size; ++i) {
        mapping.class_tokens[(i - common_count) % classes].push_back(i);
    }

    // Bijective token mapping; a shared slice keeps its surface form, the rest
    // is renamed through a random permutation.
    std::vector<std::size_t> perm(vocab_size);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<bool> shared(vocab_size, false);
    const auto shared_count =
        static_cast<std::size_t>(opts.shared_fraction * static_cast<double>(vocab_size));
    std::vector<std::size_t> shared_pick(vocab_size);
    std::iota(shared_pick.begin(), shared_pick.end(), std::size_t{0});
    std::shuffle(shared_pick.begin(), shared_pick.end(), rng);
    for (std::size_t i = 0; i < shared_count; ++i) shared[shared_pick[i]] = true;
    mapping.target_tokens.resize(vocab_size);
    for (std::size_t i = 0; i < vocab_size; ++i) {
        mapping.target_tokens[i] =
            shared[i] ? mapping.source_tokens[i] : "q" + std::to_string(perm[i]);
    }

    auto sample_text = [&](std::size_t cls, bool target_language) {
        std::ostringstream out;
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        for (std::size_t t = 0; t < opts.tokens_per_example; ++t) {
            std::size_t idx;
            if (coin(rng) < margin) {
                const auto& pool = mapping.class_tokens[cls];
                idx = pool[rng() % pool.size()];
            } else {
                idx = mapping.common_tokens[rng() % mapping.common_tokens.size()];
            }
            if (t) out << ' ';
            out << (target_language ? mapping.target_tokens[idx] : mapping.source_tokens[idx]);
        }
        return out.str();
    };

    auto build_corpus = [&](const std::string& language, bool target_language,
                            const std::string& id_prefix) {
        text::Corpus corpus;
        corpus.task = task;
        std::size_t counter = 0;
        for (std::size_t cls = 0; cls < classes; ++cls) {
            for (std::size_t i = 0; i < opts.examples_per_class; ++i) {
                text::Example ex;
                ex.id = id_prefix + std::to_string(counter++);
                ex.text = sample_text(cls, target_language);
                ex.label = static_cast<int>(cls);
                ex.language = language;
                corpus.examples.push_back(std::move(ex));
                corpus.splits.push_back(text::Split::Unassigned);
            }
        }
        return corpus;
    };

    pair.source = build_corpus(opts.source_language, false, "src-");
    pair.target = build_corpus(opts.target_language, true, "tgt-");
    return pair;
}

}  // namespace xlmeta::eval
