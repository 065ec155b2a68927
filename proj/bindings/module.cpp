#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "xlmeta/cli.hpp"
#include "xlmeta/eval.hpp"
#include "xlmeta/icl.hpp"
#include "xlmeta/metalearn.hpp"

namespace py = pybind11;
using namespace xlmeta;

PYBIND11_MODULE(xlmeta_core, m) {
    m.doc() = "cross-lingual meta-learning and in-context-learning core";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<DataError>(m, "DataError");
    py::register_exception<ContractError>(m, "ContractError");

    py::class_<text::Example>(m, "Example")
        .def(py::init([](std::string id, std::string text_, int label, std::string language) {
                 return text::Example{std::move(id), std::move(text_), label,
                                      std::move(language), false};
             }),
             py::arg("id"), py::arg("text"), py::arg("label"), py::arg("language"))
        .def_readwrite("id", &text::Example::id)
        .def_readwrite("text", &text::Example::text)
        .def_readwrite("label", &text::Example::label)
        .def_readwrite("language", &text::Example::language)
        .def_readwrite("silver", &text::Example::silver);

    py::class_<text::TaskSpec>(m, "TaskSpec")
        .def_static("by_id", &text::TaskSpec::by_id)
        .def_readonly("task_id", &text::TaskSpec::task_id)
        .def_readonly("name", &text::TaskSpec::name)
        .def_readonly("label_names", &text::TaskSpec::label_names)
        .def("n_classes", &text::TaskSpec::n_classes)
        .def("label_index", [](const text::TaskSpec& t, const std::string& s) {
            return t.label_index(s);
        });

    m.def("tokenize", [](const std::string& s) { return text::tokenize(s); });
    m.def("fnv1a64", [](const std::string& s) { return text::fnv1a64(s); });
    m.def("featurize_text", [](const std::string& s, std::uint32_t vocab) {
        return text::featurize_text(s, vocab).token_ids;
    });

    m.def("macro_f1", &eval::macro_f1, py::arg("predictions"), py::arg("golds"),
          py::arg("n_classes"));
    m.def("accuracy", &eval::accuracy, py::arg("predictions"), py::arg("golds"));
    m.attr("UNPARSED") = eval::kUnparsed;

    py::class_<model::TextClassifier>(m, "TextClassifier")
        .def_static("init", &model::TextClassifier::init, py::arg("vocab"), py::arg("dim"),
                    py::arg("n_classes"), py::arg("seed"))
        .def_readonly("vocab", &model::TextClassifier::vocab)
        .def_readonly("dim", &model::TextClassifier::dim)
        .def_readonly("n_classes", &model::TextClassifier::n_classes)
        .def("predict", [](const model::TextClassifier& clf,
                           const std::vector<text::Example>& examples) {
            return model::predict(clf, examples);
        })
        .def("predict_proba", [](const model::TextClassifier& clf,
                                 const std::vector<text::Example>& examples) {
            return model::predict_proba(clf, examples);
        });

    m.def(
        "fine_tune",
        [](const model::TextClassifier& clf, const std::vector<text::Example>& train,
           double lr, int epochs, int batch_size, std::uint64_t seed) {
            model::TrainConfig cfg;
            cfg.lr = lr;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.seed = seed;
            auto result = model::fine_tune(clf, train, cfg);
            return py::make_tuple(result.model, result.epoch_losses);
        },
        py::arg("model"), py::arg("train"), py::arg("lr") = 0.1, py::arg("epochs") = 10,
        py::arg("batch_size") = 16, py::arg("seed") = 0);

    m.def(
        "make_synthetic_pair",
        [](std::uint64_t seed, std::size_t vocab_size, std::size_t classes, double margin,
           std::size_t examples_per_class) {
            eval::SyntheticOptions opts;
            opts.examples_per_class = examples_per_class;
            auto pair = eval::make_synthetic_pair(seed, vocab_size, classes, margin, opts);
            return py::make_tuple(pair.source.examples, pair.target.examples);
        },
        py::arg("seed"), py::arg("vocab_size"), py::arg("classes"), py::arg("margin"),
        py::arg("examples_per_class") = 150);

    m.def(
        "render_prompt",
        [](int task_id, const std::string& strategy, const std::string& resource_dir,
           const std::vector<std::pair<text::Example, int>>& demos,
           const text::Example& test, bool instruction_demo) {
            const auto task = text::TaskSpec::by_id(task_id);
            const auto built = icl::build_strategy_prompt(
                task, icl::strategy_from_name(strategy),
                instruction_demo ? icl::FewShotMode::InstructionDemo
                                 : icl::FewShotMode::ExamplesOnly,
                resource_dir);
            icl::DemoSet demo_set;
            demo_set.demos = demos;
            std::vector<std::pair<int, std::string>> out;
            for (const auto& cand : icl::render_few_shot(built.prompt, demo_set, test)) {
                out.emplace_back(cand.label, cand.full);
            }
            return out;
        },
        py::arg("task_id"), py::arg("strategy"), py::arg("resource_dir"), py::arg("demos"),
        py::arg("test"), py::arg("instruction_demo") = false);

    m.def("match_completion", [](const std::string& completion,
                                 const std::vector<std::string>& labels) {
        icl::Verbalizer verbalizer{labels};
        verbalizer.validate();
        return icl::match_completion(completion, verbalizer);
    });

    m.def("run_cli", &cli::run_command, py::arg("argv"),
          "Run a CLI subcommand; returns the process exit code.");
}
