// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dataset manifests: a JSON array of
//   {"path": "...", "true_rank": R, "class": "dense", "alpha": a, "seed": s}
// with paths relative to the manifest's directory.

#include "frappe/error.hpp"
#include "frappe/synth.hpp"
#include "frappe/tensor.hpp"
#include "frappe/tensor_io.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace frappe {

struct ManifestEntry {
    /// As written in the manifest.
    std::string path;
    /// `path` resolved against the manifest directory.
    std::filesystem::path resolved;
    std::size_t true_rank = 0;
    SynthClass klass = SynthClass::dense;
    double alpha = 0.0;
    std::uint64_t seed = 0;
};

/// Tensors below this density are stored in COO form.
inline constexpr double kCooWriteDensity = 0.5;

/// Writes every tensor plus `manifest.json` into `dir`; returns the manifest path.
inline std::filesystem::path write_dataset(const std::filesystem::path& dir, std::span<const LabeledTensor> data) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
    nlohmann::json manifest = nlohmann::json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "tensor_%05zu.tns", i);
        const auto& lt = data[i];
        if (density(lt.tensor) < kCooWriteDensity) {
            write_tensor((dir / name).string(), to_coo(lt.tensor));
        } else {
            write_tensor((dir / name).string(), lt.tensor);
        }
        manifest.push_back({{"path", name},
                            {"true_rank", lt.true_rank},
                            {"class", std::string(to_string(lt.recipe.klass))},
                            {"alpha", lt.recipe.noise_alpha},
                            {"seed", lt.recipe.seed}});
    }
    const auto path = dir / "manifest.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << manifest.dump(1) << '\n';
    return path;
}

[[nodiscard]] inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    std::vector<ManifestEntry> out;
    try {
        const auto j = nlohmann::json::parse(in);
        if (!j.is_array()) throw ParseError(path.string() + ": manifest must be a JSON array", 0);
        const auto base = path.parent_path();
        for (const auto& e : j) {
            ManifestEntry m;
            m.path = e.at("path").get<std::string>();
            m.resolved = base / m.path;
            m.true_rank = e.at("true_rank").get<std::size_t>();
            if (m.true_rank < 1) throw ParseError(path.string() + ": true_rank must be >= 1", 0);
            m.klass = synth_class_from_string(e.value("class", std::string("dense")));
            m.alpha = e.value("alpha", 0.0);
            m.seed = e.value("seed", std::uint64_t{0});
            out.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": malformed manifest: " + e.what(), 0);
    } catch (const InvalidArgument& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
    return out;
}

}  // namespace frappe
