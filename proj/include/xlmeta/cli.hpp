#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace xlmeta::cli {

// Subcommands: prep, train-baseline, meta-train, self-train, domain-adapt,
// icl-run, report, synth-gen. Each reads a JSON experiment config and writes
// its artifacts under <output>/<config-hash>/ so reruns overwrite
// deterministically. Exit codes: 0 ok, 2 config error, 3 data error,
// 4 backend/transport error.
int run_command(const std::vector<std::string>& argv);

// Output directory for a config file: <output>/<fnv1a64 hex of config bytes>.
std::filesystem::path output_dir_for_config(const std::filesystem::path& config_path);

}  // namespace xlmeta::cli
