#include "xlmeta/icl.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace xlmeta::icl {

namespace {

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
    if (needle.empty()) return 0;
    std::size_t count = 0;
    for (std::size_t pos = haystack.find(needle); pos != std::string::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++count;
    }
    return count;
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos;
         pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
    return s;
}

std::string normalize(const std::string& s) {
    std::string lowered;
    lowered.reserve(s.size());
    for (char c : s) {
        lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    std::size_t b = 0, e = lowered.size();
    auto trimmable = [&](std::size_t i) {
        const auto c = static_cast<unsigned char>(lowered[i]);
        return std::isspace(c) != 0 || std::ispunct(c) != 0;
    };
    while (b < e && trimmable(b)) ++b;
    while (e > b && trimmable(e - 1)) --e;
    return lowered.substr(b, e - b);
}

}  // namespace

void Template::validate() const {
    if (mask_token.empty()) throw ContractError("template: empty mask token");
    const std::size_t n = count_occurrences(body, mask_token);
    if (n != 1) {
        throw ContractError("template: expected exactly one '" + mask_token + "', found " +
                            std::to_string(n));
    }
}

void Verbalizer::validate() const {
    if (labels.empty()) throw ContractError("verbalizer: no labels");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].empty()) {
            throw ContractError("verbalizer: empty string for class " + std::to_string(i));
        }
        for (std::size_t j = i + 1; j < labels.size(); ++j) {
            if (labels[i] == labels[j]) {
                throw ContractError("verbalizer: duplicate string '" + labels[i] + "'");
            }
        }
    }
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Swahili: return "swahili";
        case Strategy::CrossLingual: return "cross-lingual";
        case Strategy::English: return "english";
    }
    return "english";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "swahili") return Strategy::Swahili;
    if (name == "cross-lingual") return Strategy::CrossLingual;
    if (name == "english") return Strategy::English;
    throw ConfigError("unknown prompt strategy '" + name + "'");
}

std::string instantiate(const Prompt& prompt, const Example& x, int y) {
    prompt.tmpl.validate();
    if (y < 0 || static_cast<std::size_t>(y) >= prompt.verbalizer.labels.size()) {
        throw ContractError("instantiate: label " + std::to_string(y) +
                            " not in verbalizer domain");
    }
    std::string s = replace_all(prompt.tmpl.body, "{x}", x.text);
    return replace_all(std::move(s), prompt.tmpl.mask_token,
                       prompt.verbalizer.labels[static_cast<std::size_t>(y)]);
}

Rendered render_zero_shot(const Prompt& prompt, const Example& x_test) {
    return render_few_shot(prompt, DemoSet{}, x_test);
}

Rendered render_few_shot(const Prompt& prompt, const DemoSet& demos, const Example& x_test) {
    std::string prefix;
    if (!prompt.instruction.empty()) {
        prefix = prompt.instruction + prompt.separator;
    }
    for (const auto& [demo, label] : demos.demos) {
        prefix += instantiate(prompt, demo, label) + prompt.separator;
    }
    Rendered rendered;
    rendered.reserve(prompt.verbalizer.labels.size());
    for (std::size_t y = 0; y < prompt.verbalizer.labels.size(); ++y) {
        rendered.push_back({static_cast<int>(y), prompt.verbalizer.labels[y],
                            prefix + instantiate(prompt, x_test, static_cast<int>(y))});
    }
    return rendered;
}

std::string render_generation_prompt(const Prompt& prompt, const DemoSet& demos,
                                     const Example& x_test) {
    prompt.tmpl.validate();
    std::string out;
    if (!prompt.instruction.empty()) {
        out += prompt.instruction + prompt.separator;
    }
    for (const auto& [demo, label] : demos.demos) {
        out += instantiate(prompt, demo, label) + prompt.separator;
    }
    out += replace_all(prompt.tmpl.body, "{x}", x_test.text);
    return out;
}

PromptResource load_prompt_resource(const std::filesystem::path& path, const TaskSpec& task) {
    std::ifstream in(path);
    if (!in) throw ConfigError("prompt resource: cannot open " + path.string());

    enum class Section { None, Template, Verbalizer, Instruction, Mask };
    Section section = Section::None;
    std::vector<std::string> template_lines, instruction_lines;
    std::vector<std::pair<std::string, std::string>> entries;
    std::string mask_token;
    std::string line;
    while (std::getline(in, line)) {
        if (line == "[TEMPLATE]") { section = Section::Template; continue; }
        if (line == "[VERBALIZER]") { section = Section::Verbalizer; continue; }
        if (line == "[INSTRUCTION]") { section = Section::Instruction; continue; }
        if (line == "[MASK]") { section = Section::Mask; continue; }
        switch (section) {
            case Section::None:
                break;
            case Section::Template:
                template_lines.push_back(line);
                break;
            case Section::Instruction:
                instruction_lines.push_back(line);
                break;
            case Section::Mask:
                if (!line.empty()) mask_token = line;
                break;
            case Section::Verbalizer: {
                if (line.empty()) break;
                const std::size_t eq = line.find('=');
                if (eq == std::string::npos) {
                    throw ConfigError("prompt resource " + path.string() +
                                      ": verbalizer line without '=': " + line);
                }
                entries.emplace_back(line.substr(0, eq), line.substr(eq + 1));
                break;
            }
        }
    }

    auto join = [](const std::vector<std::string>& lines) {
        std::string out;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (i) out += '\n';
            out += lines[i];
        }
        // section padding lines are not part of the text
        while (!out.empty() && out.back() == '\n') out.pop_back();
        while (!out.empty() && out.front() == '\n') out.erase(out.begin());
        return out;
    };

    PromptResource res;
    res.tmpl.body = join(template_lines);
    if (!mask_token.empty()) res.tmpl.mask_token = mask_token;
    res.instruction = join(instruction_lines);
    res.verbalizer.labels.assign(task.n_classes(), "");
    for (const auto& [label_name, verbal] : entries) {
        const int idx = task.label_index(label_name);
        if (idx < 0) {
            throw ConfigError("prompt resource " + path.string() + ": unknown label '" +
                              label_name + "' for task " + std::to_string(task.task_id));
        }
        res.verbalizer.labels[static_cast<std::size_t>(idx)] = verbal;
    }
    res.tmpl.validate();
    res.verbalizer.validate();
    return res;
}

StrategyPrompt build_strategy_prompt(const TaskSpec& task, Strategy strategy,
                                     FewShotMode mode,
                                     const std::filesystem::path& resource_dir) {
    const std::string template_lang = strategy == Strategy::Swahili ? "sw" : "en";
    const auto path =
        resource_dir / ("task" + std::to_string(task.task_id) + "." + template_lang + ".txt");
    const PromptResource res = load_prompt_resource(path, task);

    StrategyPrompt out;
    out.prompt.tmpl = res.tmpl;
    out.prompt.verbalizer = res.verbalizer;
    out.prompt.strategy = strategy;
    out.demo_language = strategy == Strategy::English ? "en" : "sw";
    if (mode == FewShotMode::InstructionDemo) {
        if (res.instruction.empty()) {
            throw ConfigError("prompt resource " + path.string() +
                              ": no INSTRUCTION section for instruction-demo mode");
        }
        out.prompt.instruction = res.instruction;
    }
    return out;
}

int predict_argmax(ScoringBackend& backend, const Rendered& rendered) {
    if (rendered.empty()) throw ContractError("predict_argmax: no candidates");
    int best_label = -1;
    double best_score = 0.0;
    // strict > keeps ties at the lowest label index
    for (const auto& candidate : rendered) {
        const double s = backend.score(candidate.full, candidate.verbalized);
        if (best_label == -1 || s > best_score) {
            best_score = s;
            best_label = candidate.label;
        }
    }
    return best_label;
}

int match_completion(const std::string& completion, const Verbalizer& verbalizer) {
    const std::string norm = normalize(completion);
    for (std::size_t y = 0; y < verbalizer.labels.size(); ++y) {
        if (norm == normalize(verbalizer.labels[y])) return static_cast<int>(y);
    }
    // whole-word containment, in label order
    const auto completion_tokens = text::tokenize(norm);
    for (std::size_t y = 0; y < verbalizer.labels.size(); ++y) {
        const auto label_tokens = text::tokenize(normalize(verbalizer.labels[y]));
        if (label_tokens.size() > completion_tokens.size()) continue;
        for (std::size_t start = 0;
             start + label_tokens.size() <= completion_tokens.size(); ++start) {
            if (std::equal(label_tokens.begin(), label_tokens.end(),
                           completion_tokens.begin() + static_cast<std::ptrdiff_t>(start))) {
                return static_cast<int>(y);
            }
        }
    }
    return kUnparsed;
}

int predict_via_generation(GenerationBackend& backend, const std::string& prompt,
                           const Verbalizer& verbalizer) {
    return match_completion(backend.generate(prompt), verbalizer);
}

double TokenOverlapScorer::score(const std::string& prompt, const std::string& candidate) {
    const auto prompt_tokens = text::tokenize(prompt);
    const auto candidate_tokens = text::tokenize(candidate);
    double overlap = 0;
    for (const auto& c : candidate_tokens) {
        overlap += static_cast<double>(
            std::count(prompt_tokens.begin(), prompt_tokens.end(), c));
    }
    return overlap;
}

ChatClient::ChatClient(ChatClientConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty()) throw ConfigError("chat client: base_url is required");
}

std::string ChatClient::generate(const std::string& prompt) {
    nlohmann::json request = {
        {"model", cfg_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", cfg_.temperature},
    };
    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::string last_error;
    int backoff_ms = cfg_.backoff_initial_ms;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
        httplib::Client client(cfg_.base_url);
        client.set_read_timeout(cfg_.timeout_s, 0);
        client.set_connection_timeout(cfg_.timeout_s, 0);
        auto response = client.Post(cfg_.path, headers, request.dump(), "application/json");
        if (!response) {
            last_error = "no response from " + cfg_.base_url;
            continue;
        }
        if (response->status == 429 || response->status >= 500) {
            last_error = "HTTP " + std::to_string(response->status);
            continue;
        }
        if (response->status != 200) {
            throw TransportError("chat client: HTTP " + std::to_string(response->status));
        }
        try {
            const auto body = nlohmann::json::parse(response->body);
            return body.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("chat client: malformed response: ") + e.what());
        }
    }
    throw TransportError("chat client: retries exhausted (" + last_error + ")");
}

std::string truncate_middle(const std::string& str, std::size_t max_chars, bool* truncated) {
    static constexpr const char* kEllipsis = " ... ";
    if (truncated) *truncated = false;
    if (str.size() <= max_chars) return str;
    if (truncated) *truncated = true;
    const std::size_t ellipsis_len = std::char_traits<char>::length(kEllipsis);
    if (max_chars <= ellipsis_len) return str.substr(0, max_chars);
    const std::size_t keep = max_chars - ellipsis_len;
    const std::size_t head = (keep + 1) / 2;
    const std::size_t tail = keep - head;
    return str.substr(0, head) + kEllipsis + str.substr(str.size() - tail);
}

}  // namespace xlmeta::icl
