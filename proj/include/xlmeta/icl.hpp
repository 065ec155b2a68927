#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xlmeta/textdata.hpp"

namespace xlmeta::icl {

using text::Example;
using text::TaskSpec;

// Prompt skeleton. `{x}` is the input-text slot; the mask token marks where
// the verbalized label goes. Table-style templates name their mask after the
// task target ([Stress], [Depression], [Suicide]), so the token is part of
// the template rather than hard-coded.
struct Template {
    std::string body;
    std::string mask_token = "[Mask]";

    void validate() const;  // exactly one mask occurrence
};

// Class index -> label string, in task label order.
struct Verbalizer {
    std::vector<std::string> labels;

    void validate() const;  // total, non-empty, pairwise distinct
};

enum class Strategy { Swahili, CrossLingual, English };
enum class FewShotMode { ExamplesOnly, InstructionDemo };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct Prompt {
    Template tmpl;
    Verbalizer verbalizer;
    Strategy strategy = Strategy::English;
    std::string separator = "\n\n";  // [sep]; chosen empirically, configurable
    std::string instruction;         // prepended in instruction-demo mode
};

struct DemoSet {
    std::vector<std::pair<Example, int>> demos;

    std::size_t k() const { return demos.size(); }
};

// Fill the template with x.text and the verbalized label.
std::string instantiate(const Prompt& prompt, const Example& x, int y);

struct Candidate {
    int label = 0;
    std::string verbalized;  // v(label)
    std::string full;        // instruction + demos + instantiated test segment
};

using Rendered = std::vector<Candidate>;  // one entry per candidate label, in label order

Rendered render_zero_shot(const Prompt& prompt, const Example& x_test);

// demo_1 [sep] ... [sep] demo_k [sep] test; k = 0 collapses to zero-shot.
Rendered render_few_shot(const Prompt& prompt, const DemoSet& demos, const Example& x_test);

// Prompt for generation backends: demos are fully instantiated but the test
// segment keeps its mask token as the answer slot.
std::string render_generation_prompt(const Prompt& prompt, const DemoSet& demos,
                                     const Example& x_test);

// Prompt resource file: named sections TEMPLATE, VERBALIZER (label=string per
// line), INSTRUCTION (optional), MASK (optional override of the mask token).
struct PromptResource {
    Template tmpl;
    Verbalizer verbalizer;
    std::string instruction;
};

// The task supplies the label order for the VERBALIZER section.
PromptResource load_prompt_resource(const std::filesystem::path& path, const TaskSpec& task);

struct StrategyPrompt {
    Prompt prompt;
    std::string demo_language;  // where demonstrations must come from
};

// Swahili: sw template/verbalizer/demos. CrossLingual: en template and
// verbalizer, sw demos. English: en everything. Resources are files named
// task<N>.<lang>.txt under resource_dir.
StrategyPrompt build_strategy_prompt(const TaskSpec& task, Strategy strategy,
                                     FewShotMode mode,
                                     const std::filesystem::path& resource_dir);

struct ScoringBackend {
    virtual ~ScoringBackend() = default;
    virtual double score(const std::string& prompt, const std::string& candidate) = 0;
};

struct GenerationBackend {
    virtual ~GenerationBackend() = default;
    virtual std::string generate(const std::string& prompt) = 0;
};

// Label with maximal score; ties go to the lowest label index.
int predict_argmax(ScoringBackend& backend, const Rendered& rendered);

constexpr int kUnparsed = -1;

// Normalize the completion and match it against the verbalizer: exact match
// first, then whole-word containment. No match -> kUnparsed.
int match_completion(const std::string& completion, const Verbalizer& verbalizer);
int predict_via_generation(GenerationBackend& backend, const std::string& prompt,
                           const Verbalizer& verbalizer);

// Deterministic mock: counts how many occurrences of the candidate's tokens
// appear in the prompt string.
struct TokenOverlapScorer final : ScoringBackend {
    double score(const std::string& prompt, const std::string& candidate) override;
};

struct ChatClientConfig {
    std::string base_url;  // e.g. http://localhost:8080
    std::string path = "/v1/chat/completions";
    std::string model;
    double temperature = 0.0;
    std::string api_key_env = "LLM_API_KEY";
    int max_retries = 3;
    int backoff_initial_ms = 500;  // doubles per retry
    int timeout_s = 30;
};

// Generic chat-completion HTTP+JSON client. The API key is read from the
// configured environment variable and never logged.
struct ChatClient final : GenerationBackend {
    explicit ChatClient(ChatClientConfig cfg);
    std::string generate(const std::string& prompt) override;

private:
    ChatClientConfig cfg_;
};

// Middle-out truncation for inputs that exceed a backend's context budget;
// keeps the head and tail of the text.
std::string truncate_middle(const std::string& str, std::size_t max_chars,
                            bool* truncated = nullptr);

}  // namespace xlmeta::icl
