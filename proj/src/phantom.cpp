#include "lungcrct/phantom.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "lungcrct/errors.hpp"

namespace lungcrct::phantom {

namespace fs = std::filesystem;

void PhantomScm::calibrate(std::uint64_t seed, std::size_t draws) {
    if (draws < 3) throw ArgumentError("phantom: calibration needs at least 3 draws");
    std::mt19937_64 rng(seed);
    std::vector<double> scores(draws);
    for (auto& s : scores) s = score(sample_factors(rng));
    std::sort(scores.begin(), scores.end());
    thresholds = {scores[draws / 3], scores[(2 * draws) / 3]};
}

PhantomScm PhantomScm::calibrated(std::uint64_t seed, std::size_t draws) {
    PhantomScm scm;
    scm.calibrate(seed, draws);
    return scm;
}

Factors PhantomScm::sample_factors(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    Factors f;
    f.tumor = u(rng);
    f.angio = angio_from_tumor * f.tumor + noise * n(rng);
    f.lymph = lymph_from_tumor * f.tumor + lymph_from_angio * f.angio + noise * n(rng);
    return f;
}

double PhantomScm::score(const Factors& f) const {
    return score_tumor * f.tumor + score_lymph * f.lymph + score_angio * f.angio;
}

int PhantomScm::label(const Factors& f) const {
    const double s = score(f);
    return (s > thresholds[0]) + (s > thresholds[1]);
}

causal::BinaryGraph PhantomScm::truth() const {
    causal::BinaryGraph g(4);
    if (lymph_from_tumor != 0) g.set(kTumor, kLymph);
    if (angio_from_tumor != 0) g.set(kTumor, kAngio);
    if (lymph_from_angio != 0) g.set(kAngio, kLymph);
    if (score_tumor != 0) g.set(kTumor, kLabel);
    if (score_lymph != 0) g.set(kLymph, kLabel);
    if (score_angio != 0) g.set(kAngio, kLabel);
    return g;
}

Nuisance sample_nuisance(std::mt19937_64& rng) {
    auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    Nuisance n;
    n.rotation = u(-0.15, 0.15);
    n.shift_x = u(-0.06, 0.06);
    n.shift_y = u(-0.06, 0.06);
    n.brightness = u(0.85, 1.15);
    n.lung_width = u(0.9, 1.1);
    return n;
}

image::Image render(const Factors& f, const Nuisance& n, std::size_t extent) {
    if (extent != 32 && extent != 64 && extent != 128)
        throw ArgumentError("phantom: extent must be 32, 64 or 128, got " + std::to_string(extent));
    const double t = std::max(0.0, f.tumor), l = std::max(0.0, f.lymph), a = std::max(0.0, f.angio);
    const double ct = std::cos(n.rotation), st = std::sin(n.rotation);
    const double blob_sigma = 0.04 + 0.10 * t;
    const double kTumorX = 0.42, kTumorY = -0.18;

    image::Image img(extent, extent);
    for (std::size_t r = 0; r < extent; ++r)
        for (std::size_t c = 0; c < extent; ++c) {
            // pixel centre in [-1,1], mapped back through the pose nuisance
            const double px = (static_cast<double>(c) + 0.5) / static_cast<double>(extent) * 2 - 1 - n.shift_x;
            const double py = (static_cast<double>(r) + 0.5) / static_cast<double>(extent) * 2 - 1 - n.shift_y;
            const double x = ct * px + st * py, y = -st * px + ct * py;

            double v = 0.04;
            for (double side : {-1.0, 1.0}) {
                const double dx = (x - side * 0.45) / (0.32 * n.lung_width), dy = y / 0.62;
                const double m = dx * dx + dy * dy;
                v += 0.2 / (1 + std::exp(-(1 - m) * 14));
            }
            if (t > 0) {
                const double dx = x - kTumorX, dy = y - kTumorY;
                v += 0.7 * t * std::exp(-(dx * dx + dy * dy) / (2 * blob_sigma * blob_sigma));
            }
            if (l > 0) {
                const double dx = x, dy = y - 0.1;
                const double ring = std::sqrt(dx * dx + dy * dy) - 0.17;
                v += 0.55 * l * std::exp(-ring * ring / (2 * 0.035 * 0.035));
            }
            if (a > 0) {
                const double dx = x - kTumorX, dy = y - kTumorY;
                const double rad = std::sqrt(dx * dx + dy * dy), theta = std::atan2(dy, dx);
                const double spokes = std::pow(0.5 + 0.5 * std::cos(8 * theta), 4);
                const double shell = std::exp(-(rad - 0.22) * (rad - 0.22) / (2 * 0.07 * 0.07));
                v += 0.45 * a * spokes * shell;
            }
            img.at(r, c) = std::clamp(v * n.brightness, 0.0, 1.0);
        }
    return img;
}

std::array<std::size_t, 3> Dataset::class_counts() const {
    std::array<std::size_t, 3> c{0, 0, 0};
    for (int y : labels) ++c.at(static_cast<std::size_t>(y));
    return c;
}

Tensor Dataset::tensor() const {
    if (images.empty()) throw DataError("dataset is empty");
    const std::size_t h = images[0].height, w = images[0].width;
    Tensor t({images.size(), 1, h, w});
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].height != h || images[i].width != w)
            throw ShapeError("dataset: images differ in size");
        std::copy(images[i].pixels.begin(), images[i].pixels.end(), t.data() + i * h * w);
    }
    return t;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    for (std::size_t i : indices) {
        if (i >= size()) throw ArgumentError("dataset subset: index out of range");
        out.images.push_back(images[i]);
        out.labels.push_back(labels[i]);
        out.names.push_back(names[i]);
        if (has_truth()) {
            out.factors.push_back(factors[i]);
            out.nuisance.push_back(nuisance[i]);
        }
    }
    return out;
}

Dataset sample_phantom(std::size_t n, const PhantomScm& scm, std::size_t extent, std::uint64_t seed,
                       bool balanced) {
    if (n < 1) throw ArgumentError("phantom: n must be at least 1");
    if (balanced && n % 3 != 0) throw ArgumentError("phantom: balanced sampling needs n divisible by 3");
    render({}, {}, extent);  // validates extent before any work

    Dataset d;
    std::array<std::size_t, 3> quota{n / 3, n / 3, n / 3};
    for (std::uint64_t draw = 0; d.size() < n; ++draw) {
        if (draw > 1000 * n) throw DataError("phantom: balanced sampling did not fill every class");
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(draw), static_cast<std::uint32_t>(draw >> 32)};
        std::mt19937_64 rng(seq);
        const Factors f = scm.sample_factors(rng);
        const Nuisance nu = sample_nuisance(rng);
        const int y = scm.label(f);
        if (balanced) {
            if (quota[static_cast<std::size_t>(y)] == 0) continue;
            --quota[static_cast<std::size_t>(y)];
        }
        char name[32];
        std::snprintf(name, sizeof name, "phantom_%05zu", d.size());
        d.images.push_back(render(f, nu, extent));
        d.labels.push_back(y);
        d.names.emplace_back(name);
        d.factors.push_back(f);
        d.nuisance.push_back(nu);
    }
    return d;
}

namespace {

int class_of_folder(const std::string& name) {
    std::string s = name;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "0" || s.find("normal") != std::string::npos) return 0;
    if (s == "1" || s.find("benign") != std::string::npos || s.find("bengin") != std::string::npos) return 1;
    if (s == "2" || s.find("malignant") != std::string::npos) return 2;
    return -1;
}

}  // namespace

Dataset load_image_dir(const fs::path& root, std::size_t extent, double crop_fraction, LoadReport* report) {
    if (!fs::is_directory(root)) throw DataError("not a directory: " + root.string());
    LoadReport local;
    LoadReport& rep = report ? *report : local;

    std::map<int, fs::path> folders;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const int cls = class_of_folder(entry.path().filename().string());
        if (cls < 0) {
            rep.warnings.push_back("ignoring folder " + entry.path().filename().string());
            continue;
        }
        if (folders.count(cls))
            throw DataError("two folders map to class " + std::to_string(cls) + " under " + root.string());
        folders[cls] = entry.path();
    }

    Dataset d;
    for (int cls = 0; cls < 3; ++cls) {
        if (!folders.count(cls)) throw DataError("no folder for class " + std::to_string(cls) + " in " + root.string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(folders[cls]))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        std::size_t got = 0;
        for (const auto& f : files) {
            try {
                d.images.push_back(image::preprocess(image::read_image(f), extent, crop_fraction));
            } catch (const FormatError& e) {
                ++rep.skipped;
                rep.warnings.push_back(e.what());
                continue;
            }
            d.labels.push_back(cls);
            d.names.push_back(folders[cls].filename().string() + "/" + f.filename().string());
            ++got;
            ++rep.loaded;
        }
        if (got == 0) throw DataError("class " + std::to_string(cls) + " has no readable images");
    }
    return d;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& data, std::size_t per_class_train, std::uint64_t seed,
                                             std::optional<std::size_t> per_class_test) {
    std::array<std::vector<std::size_t>, 3> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) by_class.at(static_cast<std::size_t>(data.labels[i])).push_back(i);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> train, test;
    for (std::size_t c = 0; c < 3; ++c) {
        auto& idx = by_class[c];
        if (idx.size() < per_class_train)
            throw DataError("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                            " samples, fewer than the " + std::to_string(per_class_train) + " requested");
        std::shuffle(idx.begin(), idx.end(), rng);
        train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_class_train));
        std::size_t rest = idx.size() - per_class_train;
        if (per_class_test) rest = std::min(rest, *per_class_test);
        test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(per_class_train),
                    idx.begin() + static_cast<std::ptrdiff_t>(per_class_train + rest));
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {data.subset(train), data.subset(test)};
}

namespace {

constexpr const char* kManifestHeader = "# lungcrct manifest v1";
constexpr const char* kManifestColumns =
    "file,label,split,tumor,lymph,angio,rotation,shift_x,shift_y,brightness,lung_width";

}  // namespace

void write_dataset(const fs::path& dir, const std::vector<std::pair<std::string, Dataset>>& splits) {
    fs::create_directories(dir);
    std::ofstream manifest(dir / "manifest.csv");
    if (!manifest) throw DataError("cannot write " + (dir / "manifest.csv").string());
    manifest << kManifestHeader << '\n' << kManifestColumns << '\n';
    manifest.precision(17);
    for (const auto& [split, data] : splits)
        for (std::size_t i = 0; i < data.size(); ++i) {
            std::string file = split + "_" + data.names[i] + ".pgm";
            std::replace(file.begin(), file.end(), '/', '_');
            image::write_pgm(dir / file, data.images[i]);
            manifest << file << ',' << data.labels[i] << ',' << split;
            if (data.has_truth()) {
                const auto& f = data.factors[i];
                const auto& n = data.nuisance[i];
                manifest << ',' << f.tumor << ',' << f.lymph << ',' << f.angio << ',' << n.rotation << ','
                         << n.shift_x << ',' << n.shift_y << ',' << n.brightness << ',' << n.lung_width;
            } else {
                manifest << ",,,,,,,,";
            }
            manifest << '\n';
        }
    if (!manifest) throw DataError("cannot write " + (dir / "manifest.csv").string());
}

Dataset read_dataset(const fs::path& dir, const std::string& split) {
    std::ifstream in(dir / "manifest.csv");
    if (!in) throw DataError("no manifest.csv in " + dir.string());
    std::string line;
    Dataset d;
    bool any_truth = false, all_truth = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || line.rfind("file,", 0) == 0) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        while (cells.size() < 11) cells.emplace_back();
        if (!split.empty() && cells[2] != split) continue;
        int label = -1;
        try {
            label = std::stoi(cells[1]);
        } catch (const std::exception&) {
        }
        if (label < 0 || label > 2)
            throw DataError("manifest line " + std::to_string(lineno) + ": bad label '" + cells[1] + "'");
        try {
            d.images.push_back(image::read_image(dir / cells[0]));
        } catch (const FormatError& e) {
            throw DataError(std::string("manifest line ") + std::to_string(lineno) + ": " + e.what());
        }
        d.labels.push_back(label);
        d.names.push_back(fs::path(cells[0]).stem().string());
        if (!cells[3].empty()) {
            any_truth = true;
            try {
                Factors f{std::stod(cells[3]), std::stod(cells[4]), std::stod(cells[5])};
                Nuisance n{std::stod(cells[6]), std::stod(cells[7]), std::stod(cells[8]), std::stod(cells[9]),
                           std::stod(cells[10])};
                d.factors.push_back(f);
                d.nuisance.push_back(n);
            } catch (const std::exception&) {
                throw DataError("manifest line " + std::to_string(lineno) + ": bad factor values");
            }
        } else {
            all_truth = false;
        }
    }
    if (d.size() == 0)
        throw DataError("manifest in " + dir.string() + " lists no images" + (split.empty() ? "" : " for split " + split));
    if (any_truth && !all_truth) throw DataError("manifest mixes rows with and without factors");
    return d;
}

}  // namespace lungcrct::phantom
