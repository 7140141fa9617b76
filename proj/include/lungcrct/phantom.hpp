#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lungcrct/causal.hpp"
#include "lungcrct/image.hpp"

namespace lungcrct::phantom {

/// Node order used for the factor graph: tumor, lymph, angio, label.
inline constexpr std::size_t kTumor = 0, kLymph = 1, kAngio = 2, kLabel = 3;
inline const std::array<const char*, 4> kNodeNames{"tumor", "lymph", "angio", "Y"};

struct Factors {
    double tumor = 0, lymph = 0, angio = 0;
};

struct Nuisance {
    double rotation = 0;    // radians
    double shift_x = 0;     // fraction of the half-width
    double shift_y = 0;
    double brightness = 1;  // multiplicative
    double lung_width = 1;  // multiplicative on the lung semi-axis
};

struct PhantomScm {
    double angio_from_tumor = 0.8;
    double lymph_from_tumor = 0.6;
    double lymph_from_angio = 0.3;
    double noise = 0.2;
    /// Severity score weights; label = number of thresholds the score exceeds.
    double score_tumor = 1.0, score_lymph = 1.0, score_angio = 1.0;
    std::array<double, 2> thresholds{0.0, 0.0};

    /// Default SCM with tertile thresholds frozen from `draws` samples.
    static PhantomScm calibrated(std::uint64_t seed = 20240101, std::size_t draws = 100000);
    void calibrate(std::uint64_t seed, std::size_t draws);

    Factors sample_factors(std::mt19937_64& rng) const;
    double score(const Factors& f) const;
    int label(const Factors& f) const;
    /// tumor -> lymph, tumor -> angio, angio -> lymph, and every factor -> Y.
    causal::BinaryGraph truth() const;
};

Nuisance sample_nuisance(std::mt19937_64& rng);

/// Renders one phantom slice. Throws ArgumentError unless extent is 32, 64 or 128.
image::Image render(const Factors& f, const Nuisance& n, std::size_t extent);

struct Dataset {
    std::vector<image::Image> images;
    std::vector<int> labels;
    std::vector<std::string> names;
    /// Hidden ground truth, present for phantoms only.
    std::vector<Factors> factors;
    std::vector<Nuisance> nuisance;

    std::size_t size() const { return images.size(); }
    bool has_truth() const { return !factors.empty(); }
    std::array<std::size_t, 3> class_counts() const;
    /// [n,1,H,W] tensor of all images.
    Tensor tensor() const;
    Dataset subset(const std::vector<std::size_t>& indices) const;
};

/// n phantom samples. With `balanced`, samples are drawn until every class
/// holds n/3 of them (n must then be divisible by 3).
Dataset sample_phantom(std::size_t n, const PhantomScm& scm, std::size_t extent, std::uint64_t seed,
                       bool balanced = false);

struct LoadReport {
    std::size_t loaded = 0;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

/// Class-labelled subfolders of PGM/PNG images. Folder names "0"/"1"/"2" or
/// containing normal / benign (or bengin) / malignant map to labels 0/1/2.
Dataset load_image_dir(const std::filesystem::path& root, std::size_t extent,
                       double crop_fraction = 180.0 / 256.0, LoadReport* report = nullptr);

/// Exactly `per_class_train` of each class in train; the rest (at most
/// `per_class_test` per class when given) in test.
std::pair<Dataset, Dataset> stratified_split(const Dataset& data, std::size_t per_class_train,
                                             std::uint64_t seed,
                                             std::optional<std::size_t> per_class_test = std::nullopt);

/// PGM files plus manifest.csv (file, label, split, factors, nuisance), one
/// block of rows per named split.
void write_dataset(const std::filesystem::path& dir,
                   const std::vector<std::pair<std::string, Dataset>>& splits);
/// Reads a directory written by write_dataset; `split` filters rows when non-empty.
Dataset read_dataset(const std::filesystem::path& dir, const std::string& split = "");

}  // namespace lungcrct::phantom
