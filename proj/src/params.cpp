#include "xlmeta/params.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace xlmeta::ad {

namespace {

constexpr char kMagic[8] = {'X', 'L', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint: truncated file");
    return v;
}

}  // namespace

ParamSet sgd_step(const ParamSet& params, const GradMap& grads, double lr) {
    if (lr <= 0.0) {
        throw ContractError("sgd_step: learning rate must be positive, got " + std::to_string(lr));
    }
    ParamSet out = params;
    for (auto& [name, tensor] : out.values) {
        auto it = grads.find(name);
        if (it == grads.end()) {
            throw ContractError("sgd_step: missing gradient for parameter '" + name + "'");
        }
        const Tensor& g = it->second;
        if (!g.same_shape(tensor)) {
            throw DimensionError("sgd_step: gradient shape " + g.shape_str() +
                                 " != parameter shape " + tensor.shape_str() +
                                 " for '" + name + "'");
        }
        for (std::size_t i = 0; i < tensor.data.size(); ++i) {
            tensor.data[i] -= lr * g.data[i];
        }
    }
    return out;
}

void save_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot open " + path.string() + " for writing");
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::uint64_t>(params.values.size()));
    for (const auto& [name, tensor] : params.values) {
        write_pod(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod(out, static_cast<std::uint32_t>(tensor.shape.size()));
        for (std::size_t dim : tensor.shape) {
            write_pod(out, static_cast<std::uint64_t>(dim));
        }
        out.write(reinterpret_cast<const char*>(tensor.data.data()),
                  static_cast<std::streamsize>(tensor.data.size() * sizeof(double)));
    }
    if (!out) throw DataError("checkpoint: write failed for " + path.string());
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("checkpoint: bad magic in " + path.string());
    }
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kVersion) {
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    }
    ParamSet params;
    const auto count = read_pod<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto ndim = read_pod<std::uint32_t>(in);
        std::vector<std::size_t> shape(ndim);
        std::size_t total = 1;
        for (auto& dim : shape) {
            dim = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
            total *= dim;
        }
        std::vector<double> data(total);
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(total * sizeof(double)));
        if (!in) throw DataError("checkpoint: truncated tensor '" + name + "'");
        params.values.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return params;
}

}  // namespace xlmeta::ad
