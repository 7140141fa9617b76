#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "lungcrct/errors.hpp"
#include "lungcrct/phantom.hpp"
#include "support/oracles.hpp"

using namespace lungcrct;
using namespace lungcrct::phantom;
namespace fs = std::filesystem;

namespace {

double mean_intensity(const image::Image& img) {
    return std::accumulate(img.pixels.begin(), img.pixels.end(), 0.0) / static_cast<double>(img.pixels.size());
}

const PhantomScm& scm() {
    static const PhantomScm s = PhantomScm::calibrated();
    return s;
}

}  // namespace

TEST_CASE("zero factors render only anatomy") {
    const image::Image img = render({}, {}, 64);
    double peak = 0;
    for (double p : img.pixels) peak = std::max(peak, p);
    CHECK(peak < 0.3);
    // the tumor site is on the right lung, away from the mediastinal ring
    Factors f;
    f.tumor = 1.0;
    const image::Image with = render(f, {}, 64);
    CHECK(mean_intensity(with) > mean_intensity(img));
}

TEST_CASE("rendering is deterministic and bounded") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
        const Factors f = scm().sample_factors(rng);
        const Nuisance n = sample_nuisance(rng);
        const image::Image a = render(f, n, 64);
        CHECK(a == render(f, n, 64));
        for (double p : a.pixels) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
    }
}

TEST_CASE("mean intensity is monotone in each factor") {
    for (int which = 0; which < 3; ++which) {
        double prev = -1;
        for (int k = 0; k <= 10; ++k) {
            Factors f{0.2, 0.2, 0.2};
            (which == 0 ? f.tumor : which == 1 ? f.lymph : f.angio) = k / 10.0;
            const double m = mean_intensity(render(f, {}, 64));
            CHECK(m > prev);
            prev = m;
        }
    }
}

TEST_CASE("truth graph is the factor DAG with every factor feeding Y") {
    const auto g = scm().truth();
    testing::Adjacency adj(4, std::vector<bool>(4, false));
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) adj[i][j] = g(i, j);
    CHECK_FALSE(testing::has_cycle(adj));
    CHECK(g(kTumor, kLymph));
    CHECK(g(kTumor, kAngio));
    CHECK(g(kAngio, kLymph));
    for (std::size_t j = 0; j < 3; ++j) CHECK(g(j, kLabel));
    for (std::size_t j = 0; j < 4; ++j) CHECK_FALSE(g(kLabel, j));
}

TEST_CASE("every class holds at least a tenth of the samples") {
    const Dataset d = sample_phantom(1000, scm(), 32, 5);
    const auto counts = d.class_counts();
    for (auto c : counts) CHECK(c >= 100);
    CHECK(d.has_truth());
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.labels[i] == scm().label(d.factors[i]));
}

TEST_CASE("same seed gives the same dataset") {
    const Dataset a = sample_phantom(30, scm(), 32, 11);
    const Dataset b = sample_phantom(30, scm(), 32, 11);
    const Dataset c = sample_phantom(30, scm(), 32, 12);
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);
    CHECK_FALSE(a.images == c.images);
    // prefixes agree because each draw has its own stream
    const Dataset shorter = sample_phantom(10, scm(), 32, 11);
    CHECK(std::equal(shorter.images.begin(), shorter.images.end(), a.images.begin()));
}

TEST_CASE("balanced sampling and the stratified split") {
    const Dataset d = sample_phantom(600, scm(), 32, 7, true);
    CHECK(d.class_counts() == std::array<std::size_t, 3>{200, 200, 200});
    auto [train, test] = stratified_split(d, 80, 9, 40);
    CHECK(train.size() == 240);
    CHECK(test.size() == 120);
    CHECK(train.class_counts() == std::array<std::size_t, 3>{80, 80, 80});
    CHECK(test.class_counts() == std::array<std::size_t, 3>{40, 40, 40});
    std::set<std::string> names(train.names.begin(), train.names.end());
    for (const auto& n : test.names) CHECK(names.count(n) == 0);
    auto [train2, test2] = stratified_split(d, 80, 9, 40);
    CHECK(train2.names == train.names);
    CHECK(test2.names == test.names);
    CHECK_THROWS_AS(stratified_split(d, 201, 9), DataError);
    CHECK_THROWS_AS(sample_phantom(10, scm(), 32, 1, true), ArgumentError);
}

TEST_CASE("unsupported extents are rejected") {
    CHECK_THROWS_AS(render({}, {}, 48), ArgumentError);
    CHECK_THROWS_AS(sample_phantom(3, scm(), 48, 1), ArgumentError);
}

TEST_CASE("datasets round-trip through disk") {
    const fs::path dir = fs::temp_directory_path() / "lungcrct_test_phantom";
    fs::remove_all(dir);
    const Dataset d = sample_phantom(12, scm(), 32, 21);
    auto [train, test] = stratified_split(d, 1, 3);
    write_dataset(dir, {{"train", train}, {"test", test}});
    const Dataset back = read_dataset(dir, "train");
    CHECK(back.size() == train.size());
    CHECK(back.labels == train.labels);
    CHECK(back.has_truth());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back.factors[i].tumor == train.factors[i].tumor);
        for (std::size_t p = 0; p < back.images[i].pixels.size(); ++p)
            CHECK(std::abs(back.images[i].pixels[p] - train.images[i].pixels[p]) <= 0.5 / 255 + 1e-12);
    }
    CHECK(read_dataset(dir).size() == d.size());
    CHECK_THROWS_AS(read_dataset(dir, "val"), DataError);
    CHECK_THROWS_AS(read_dataset(dir / "nope"), DataError);
}

TEST_CASE("image folders load with class-name mapping") {
    const fs::path root = fs::temp_directory_path() / "lungcrct_test_folders";
    fs::remove_all(root);
    const std::array<const char*, 3> folders{"Normal cases", "Bengin cases", "Malignant cases"};
    for (std::size_t c = 0; c < 3; ++c) {
        fs::create_directories(root / folders[c]);
        for (int k = 0; k < 2; ++k)
            image::write_png(root / folders[c] / ("s" + std::to_string(k) + ".png"),
                             image::Image(100, 120, 0.1 * static_cast<double>(c + 1)));
    }
    std::ofstream(root / folders[0] / "broken.png") << "x";
    LoadReport report;
    const Dataset d = load_image_dir(root, 32, 180.0 / 256.0, &report);
    CHECK(d.size() == 6);
    CHECK(report.loaded == 6);
    CHECK(report.skipped == 1);
    CHECK(d.class_counts() == std::array<std::size_t, 3>{2, 2, 2});
    CHECK(d.images[5].height == 32);
    CHECK(d.images[5].at(3, 3) == doctest::Approx(0.3).epsilon(0.01));
    CHECK_FALSE(d.has_truth());
    const Dataset again = load_image_dir(root, 32);
    CHECK(again.images == d.images);

    fs::remove_all(root / folders[2]);
    CHECK_THROWS_AS(load_image_dir(root, 32), DataError);
}
