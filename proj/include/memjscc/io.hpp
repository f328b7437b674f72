#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "memjscc/nn.hpp"

namespace memjscc::io {

// Checkpoint container: one line of compact JSON (metadata + parameter
// names/shapes in order) followed by the raw little-endian f64 parameter data.
inline void save_checkpoint(const std::filesystem::path& path, nlohmann::json meta,
                            const nn::ParamStore& params) {
    nlohmann::json plist = nlohmann::json::array();
    for (int i = 0; i < params.count(); ++i) {
        const auto& v = params.value(i);
        plist.push_back({{"name", params.name(i)}, {"rows", v.rows()}, {"cols", v.cols()}});
    }
    meta["params"] = std::move(plist);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot write " + path.string());
    f << meta.dump() << "\n";
    for (int i = 0; i < params.count(); ++i) {
        const auto& v = params.value(i);
        f.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(static_cast<std::size_t>(v.size()) * sizeof(double)));
    }
}

// Loads the metadata and fills `params` (which must already contain the same
// parameter names/shapes, e.g. from rebuilding the architecture in the meta).
inline nlohmann::json load_checkpoint(const std::filesystem::path& path, nn::ParamStore& params) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    std::string header;
    std::getline(f, header);
    nlohmann::json meta = nlohmann::json::parse(header);
    const auto& plist = meta.at("params");
    if (static_cast<int>(plist.size()) != params.count())
        throw std::runtime_error("load_checkpoint: parameter count mismatch");
    for (int i = 0; i < params.count(); ++i) {
        const auto& pj = plist.at(static_cast<std::size_t>(i));
        if (pj.at("name").get<std::string>() != params.name(i))
            throw std::runtime_error("load_checkpoint: parameter name mismatch at " + params.name(i));
        auto& v = params.value(i);
        if (pj.at("rows").get<Eigen::Index>() != v.rows() ||
            pj.at("cols").get<Eigen::Index>() != v.cols())
            throw std::runtime_error("load_checkpoint: shape mismatch at " + params.name(i));
        f.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(static_cast<std::size_t>(v.size()) * sizeof(double)));
        if (!f) throw std::runtime_error("load_checkpoint: truncated data");
    }
    return meta;
}

inline nlohmann::json peek_checkpoint_meta(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("peek_checkpoint_meta: cannot open " + path.string());
    std::string header;
    std::getline(f, header);
    return nlohmann::json::parse(header);
}

}  // namespace memjscc::io
