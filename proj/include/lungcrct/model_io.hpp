#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lungcrct/classifier.hpp"
#include "lungcrct/config.hpp"
#include "lungcrct/pipeline.hpp"

namespace lungcrct::io {

/// Versioned binary container: magic "LUNGCRCT", u32 version, u32 kind, the
/// config text, then named tensors (name, rank, u64 dims, little-endian f64
/// values). Integers are little-endian too.
struct Container {
    enum class Kind : std::uint32_t { Model = 1, Classifier = 2 };
    Kind kind = Kind::Model;
    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

inline constexpr std::uint32_t kContainerVersion = 1;

void write_container(const std::filesystem::path& path, const Container& c);
/// Throws FormatError on a bad magic, version, truncation or trailing bytes.
Container read_container(const std::filesystem::path& path);

/// Stores the trained networks together with the run configuration.
void save_model(const std::filesystem::path& path, const pipeline::Model& model, const config::RunConfig& run);
/// Rebuilds the networks from the stored config and restores every tensor.
pipeline::Model load_model(const std::filesystem::path& path, config::RunConfig* run = nullptr);

void save_classifier(const std::filesystem::path& path, const pipeline::Classifier& clf, const config::RunConfig& run);
pipeline::Classifier load_classifier(const std::filesystem::path& path);

}  // namespace lungcrct::io
