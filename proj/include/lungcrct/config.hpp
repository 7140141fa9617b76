#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lungcrct/classifier.hpp"
#include "lungcrct/phantom.hpp"
#include "lungcrct/pipeline.hpp"

namespace lungcrct::config {

/// phantom: sampled in memory; image-dir: class subfolders; dataset: a
/// directory with manifest.csv and train/test rows.
enum class DataSource { Phantom, ImageDir, Dataset };

struct DataConfig {
    DataSource source = DataSource::Phantom;
    std::string path;  // image-dir root or dataset directory
    std::size_t n = 360;
    bool balanced = true;
    std::size_t extent = 64;
    double crop_fraction = 180.0 / 256.0;
    std::size_t per_class_train = 80;
    std::size_t per_class_test = 40;
    std::uint64_t seed = 7;
};

struct RunConfig {
    DataConfig data;
    phantom::PhantomScm scm;  // thresholds come from calibration, not from the file
    std::uint64_t calibration_seed = 20240101;
    std::size_t calibration_draws = 100000;
    pipeline::TrainConfig train;
    pipeline::ClassifierConfig classifier;
    double eval_fraction = 0.3;

    /// Cross-field checks (extent shared by data and CVAE, and so on).
    void validate() const;
};

/// INI text with [data], [phantom], [cvae], [gae], [train], [classifier] and
/// [eval] sections. Unknown sections or keys and malformed values throw
/// ArgumentError. Missing keys keep their defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Every key with its effective value; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& config);

/// The calibrated phantom SCM described by the config.
phantom::PhantomScm phantom_scm(const RunConfig& config);
/// Train and test sets for the configured data source.
std::pair<phantom::Dataset, phantom::Dataset> load_splits(const RunConfig& config);

}  // namespace lungcrct::config
