#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lungcrct/config.hpp"
#include "lungcrct/errors.hpp"
#include "lungcrct/model_io.hpp"
#include "lungcrct/phantom.hpp"
#include "lungcrct/pipeline.hpp"

using namespace lungcrct;
using namespace lungcrct::pipeline;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny() {
    TrainConfig c;
    c.cvae.extent = 32;
    c.cvae.encoder_convs = {{3, 3, 2}, {4, 3, 2}};
    c.cvae.encoder_dense = {6};
    c.cvae.decoder_dense = {6};
    c.cvae.decoder_convs = {{3, 3, 2}};
    c.cvae.output_kernel = 3;
    c.schedule.epochs = 6;
    c.schedule.stage_b_start = 2;
    c.schedule.stage_c_start = 4;
    c.variation_subset = 6;
    return c;
}

struct Data {
    Tensor images;
    std::vector<int> labels;
};

const Data& data() {
    static const Data d = [] {
        const auto set = phantom::sample_phantom(24, phantom::PhantomScm::calibrated(1, 3000), 32, 3, true);
        return Data{set.tensor(), set.labels};
    }();
    return d;
}

}  // namespace

TEST_CASE("stage weights switch exactly at the boundaries") {
    StageSchedule s;
    CHECK(s.at(0) == StageWeights{1, 0.5, 0, 0});
    CHECK(s.at(49) == StageWeights{1, 0.5, 0, 0});
    CHECK(s.at(50) == StageWeights{1, 1, 1, 0});
    CHECK(s.at(99) == StageWeights{1, 1, 1, 0});
    CHECK(s.at(100) == StageWeights{1, 1, 1, 1});
    CHECK(s.at(449) == StageWeights{1, 1, 1, 1});
    s.stage_b_start = 120;
    CHECK_THROWS_AS(s.validate(), ArgumentError);
    s.stage_b_start = 50;
    s.stage_c[2] = -1;
    CHECK_THROWS_AS(s.validate(), ArgumentError);
}

TEST_CASE("training reports one finite row per epoch with nondecreasing rho") {
    Model m(tiny());
    const auto report = train_lungcrct(m, data().images, data().labels);
    REQUIRE(report.rows.size() == 6);
    double rho = 0;
    for (const auto& r : report.rows) {
        CHECK(std::isfinite(r.h));
        CHECK(std::isfinite(r.total));
        CHECK(r.rho >= rho);
        rho = r.rho;
    }
    CHECK(report.adjacency.shape() == Shape{4, 4});
    for (std::size_t j = 0; j < 3; ++j) CHECK(report.adjacency.at(3, j) == 0.0);

    std::ostringstream csv;
    report.write_csv(csv);
    CHECK(csv.str().rfind("# lungcrct train-report v1", 0) == 0);
}

TEST_CASE("identical configs give bit-identical runs") {
    Model a(tiny()), b(tiny());
    const auto ra = train_lungcrct(a, data().images, data().labels);
    const auto rb = train_lungcrct(b, data().images, data().labels);
    for (std::size_t i = 0; i < ra.rows.size(); ++i) {
        CHECK(ra.rows[i].total == rb.rows[i].total);
        CHECK(ra.rows[i].h == rb.rows[i].h);
    }
    CHECK(ra.adjacency == rb.adjacency);
}

TEST_CASE("zero-weighted terms do not reach the CVAE") {
    // Stage A only: the dCor and variation weights are zero, so tau and the
    // histogram cannot change anything.
    TrainConfig c = tiny();
    c.schedule.stage_b_start = c.schedule.stage_c_start = 6;
    TrainConfig other = c;
    other.tau = 0.25;
    other.histogram.bins = 9;
    Model a(c), b(other);
    train_lungcrct(a, data().images, data().labels);
    train_lungcrct(b, data().images, data().labels);
    const auto pa = a.cvae.named_parameters(), pb = b.cvae.named_parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second.value() == pb[i].second.value());
}

TEST_CASE("with phi2 = 0 the adjacency stays exactly zero") {
    TrainConfig c = tiny();
    for (auto* w : {&c.schedule.stage_a, &c.schedule.stage_b, &c.schedule.stage_c}) (*w)[1] = 0.0;
    Model m(c);
    const auto report = train_lungcrct(m, data().images, data().labels);
    for (double v : report.adjacency.values()) CHECK(v == 0.0);
}

TEST_CASE("training input errors") {
    Model m(tiny());
    std::vector<int> bad = data().labels;
    bad[0] = 5;
    CHECK_THROWS_AS(train_lungcrct(m, data().images, bad), DataError);
    bad.pop_back();
    CHECK_THROWS_AS(train_lungcrct(m, data().images, bad), ShapeError);
    TrainConfig c = tiny();
    c.gae.d = 5;
    CHECK_THROWS_AS(Model{c}, ArgumentError);
}

TEST_CASE("config defaults, round trip and strictness") {
    const config::RunConfig def;
    CHECK(def.train.schedule.epochs == 450);
    CHECK(def.train.lr_adjacency == 0.007);
    CHECK(def.train.lr_gae == 0.002);
    CHECK(def.train.lr_encoder == 0.001);
    CHECK(def.train.lr_decoder == 0.0007);
    CHECK(def.train.tau == 1.5);
    CHECK(def.train.v == 0.001);
    CHECK(def.train.auglag.alpha == 0.6);
    CHECK(def.train.auglag.rho == 0.1);
    CHECK(def.train.auglag.beta == 1.01);
    CHECK(def.train.auglag.gamma == 0.9);
    CHECK(def.eval_fraction == 0.3);

    config::RunConfig c;
    c.train.tau = 0.1 + 0.2;  // not exactly representable in short form
    c.data.n = 90;
    c.train.cvae.encoder_convs[1].kernel = 5;
    c.classifier.hidden = {8, 4};
    const std::string text = config::format_config(c);
    const config::RunConfig back = config::parse_config(text);
    CHECK(config::format_config(back) == text);
    CHECK(back.train.tau == c.train.tau);
    CHECK(back.train.cvae.encoder_convs[1].kernel == 5);

    CHECK(config::parse_config("").train.schedule.epochs == 450);
    CHECK(config::parse_config("[train]\nepochs = 12\n").train.schedule.epochs == 12);
    CHECK_THROWS_AS(config::parse_config("[train]\nepoch = 12\n"), ArgumentError);
    CHECK_THROWS_AS(config::parse_config("[nope]\nx = 1\n"), ArgumentError);
    CHECK_THROWS_AS(config::parse_config("[train]\nepochs = twelve\n"), ArgumentError);
    CHECK_THROWS_AS(config::parse_config("[gae]\nconstraint = spectral\n"), ArgumentError);
    CHECK_THROWS_AS(config::parse_config("[data]\nextent = 48\n"), ArgumentError);
    CHECK_THROWS_AS(config::load_config("/nonexistent/run.ini"), DataError);
}

TEST_CASE("model container round trip") {
    const fs::path dir = fs::temp_directory_path() / "lungcrct_test_io";
    fs::create_directories(dir);
    config::RunConfig run;
    run.data.extent = 32;
    run.train = tiny();
    Model m(run.train);
    train_lungcrct(m, data().images, data().labels);
    io::save_model(dir / "model.bin", m, run);

    config::RunConfig stored;
    const Model back = io::load_model(dir / "model.bin", &stored);
    CHECK(stored.train.schedule.epochs == 6);
    const auto pa = m.cvae.named_parameters(), pb = back.cvae.named_parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second.value() == pb[i].second.value());
    CHECK(back.gae.adjacency_value() == m.gae.adjacency_value());

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u;
    for (int t = 0; t < 20; ++t) {
        Tensor x({1, 1, 32, 32});
        for (auto& v : x.values()) v = u(rng);
        CHECK(back.encode_means(x) == m.encode_means(x));
        const Tensor z = cvae::standard_normal({1, 8}, rng);
        CHECK(back.cvae.decode(constant(z)).value() == m.cvae.decode(constant(z)).value());
        const Tensor q = cvae::standard_normal({1, 4}, rng);
        CHECK(back.gae.predict(q) == m.gae.predict(q));
    }

    // truncation and a foreign header are clean errors
    std::ifstream in(dir / "model.bin", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream(dir / "short.bin", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 9));
    CHECK_THROWS_AS(io::load_model(dir / "short.bin"), FormatError);
    std::string wrong = bytes;
    wrong[8] = 7;  // version
    std::ofstream(dir / "version.bin", std::ios::binary).write(wrong.data(), static_cast<std::streamsize>(wrong.size()));
    CHECK_THROWS_AS(io::load_model(dir / "version.bin"), FormatError);
    wrong = bytes;
    wrong[0] = 'X';
    std::ofstream(dir / "magic.bin", std::ios::binary).write(wrong.data(), static_cast<std::streamsize>(wrong.size()));
    CHECK_THROWS_AS(io::load_model(dir / "magic.bin"), FormatError);
    CHECK_THROWS_AS(io::load_classifier(dir / "model.bin"), FormatError);
}

TEST_CASE("classifier container round trip") {
    const fs::path dir = fs::temp_directory_path() / "lungcrct_test_io";
    fs::create_directories(dir);
    std::mt19937_64 rng(6);
    Tensor x = cvae::standard_normal({40, 3}, rng);
    std::vector<int> y(40);
    for (std::size_t i = 0; i < 40; ++i) y[i] = x.at(i, 0) > 0;
    ClassifierConfig cc;
    cc.epochs = 3;
    const Classifier clf = train_classifier(x, y, cc);
    config::RunConfig run;
    io::save_classifier(dir / "clf.bin", clf, run);
    const Classifier back = io::load_classifier(dir / "clf.bin");
    CHECK(back.predict(x) == clf.predict(x));
}
