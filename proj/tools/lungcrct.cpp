#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "lungcrct/causal.hpp"
#include "lungcrct/classifier.hpp"
#include "lungcrct/config.hpp"
#include "lungcrct/errors.hpp"
#include "lungcrct/model_io.hpp"
#include "lungcrct/phantom.hpp"
#include "lungcrct/pipeline.hpp"
#include "lungcrct/plot.hpp"

namespace fs = std::filesystem;
using namespace lungcrct;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw DataError("cannot write " + p.string());
    return f;
}

void write_text(const fs::path& p, const std::string& text) { open_out(p) << text; }

fs::path prepare_out(const std::string& out) {
    if (out.empty()) throw ArgumentError("--out is required");
    fs::create_directories(out);
    return out;
}

image::Image image_for_model(const std::string& path, const config::RunConfig& run) {
    const image::Image img = image::read_image(path);
    const std::size_t e = run.data.extent;
    if (img.height == e && img.width == e) return img;
    return image::preprocess(img, e, run.data.crop_fraction);
}

Tensor as_batch(const image::Image& img) {
    Tensor t({1, 1, img.height, img.width});
    std::copy(img.pixels.begin(), img.pixels.end(), t.data());
    return t;
}

image::Image as_image(const Tensor& batch, std::size_t i) {
    const std::size_t h = batch.dim(2), w = batch.dim(3);
    image::Image img(h, w);
    std::copy(batch.data() + i * h * w, batch.data() + (i + 1) * h * w, img.pixels.begin());
    return img;
}

void write_series(const fs::path& dir, const std::string& name, const std::vector<double>& values) {
    auto f = open_out(dir / (name + ".csv"));
    f << "# lungcrct series v1\nepoch," << name << '\n';
    f.precision(17);
    for (std::size_t i = 0; i < values.size(); ++i) f << i << ',' << values[i] << '\n';
    if (!values.empty()) image::write_pgm(dir / (name + ".pgm"), image::line_plot(values));
}

std::vector<std::string> node_names(std::size_t d) {
    std::vector<std::string> n;
    for (std::size_t i = 0; i + 1 < d; ++i) n.push_back("z_cs" + std::to_string(i));
    n.push_back("Y");
    return n;
}

phantom::Dataset read_data_dir(const std::string& dir, const std::string& split, const config::RunConfig& run) {
    if (fs::exists(fs::path(dir) / "manifest.csv")) return phantom::read_dataset(dir, split);
    return phantom::load_image_dir(dir, run.data.extent, run.data.crop_fraction);
}

// ---------------------------------------------------------------------------

int cmd_phantom_gen(std::size_t n, std::size_t extent, std::uint64_t seed, std::size_t per_class_train,
                    bool balanced, const std::string& config_path, const std::string& out) {
    config::RunConfig run = config_path.empty() ? config::RunConfig{} : config::load_config(config_path);
    const auto scm = config::phantom_scm(run);
    const auto all = phantom::sample_phantom(n, scm, extent, seed, balanced);
    auto [train, test] = phantom::stratified_split(all, per_class_train, seed);
    const fs::path dir = prepare_out(out);
    phantom::write_dataset(dir, {{"train", train}, {"test", test}});
    auto truth = open_out(dir / "truth.csv");
    truth << "# lungcrct graph v1 nodes=tumor,lymph,angio,Y\n";
    causal::write_graph_csv(truth, scm.truth());
    const auto c = all.class_counts();
    std::cout << "wrote " << all.size() << " images (" << train.size() << " train, " << test.size()
              << " test; classes " << c[0] << '/' << c[1] << '/' << c[2] << ") to " << dir.string() << '\n';
    return kOk;
}

int cmd_train(const std::string& config_path, const std::string& out, bool quiet) {
    const config::RunConfig run = config::load_config(config_path);
    const fs::path dir = prepare_out(out);
    write_text(dir / "config.ini", config::format_config(run));
    auto [train, test] = config::load_splits(run);
    phantom::write_dataset(dir / "data", {{"train", train}, {"test", test}});
    if (run.data.source == config::DataSource::Phantom) {
        auto truth = open_out(dir / "truth.csv");
        truth << "# lungcrct graph v1 nodes=tumor,lymph,angio,Y\n";
        causal::write_graph_csv(truth, config::phantom_scm(run).truth());
    }

    pipeline::Model model(run.train);
    const auto report = pipeline::train_lungcrct(model, train.tensor(), train.labels, [&](const pipeline::EpochRow& r) {
        if (!quiet && (r.epoch % 10 == 0 || r.epoch + 1 == run.train.schedule.epochs))
            std::fprintf(stderr, "epoch %4zu  total %.4f  L1 %.4f  L2 %.4f  L3 %.4f  L4 %.4f  h %.2e  rho %.3f\n",
                         r.epoch, r.total, r.l1, r.l2, r.l3, r.l4, r.h, r.rho);
        return true;
    });
    io::save_model(dir / "model.bin", model, run);
    {
        auto f = open_out(dir / "train_report.csv");
        report.write_csv(f);
    }

    std::vector<double> total, l1, l2, l3, l4;
    for (const auto& r : report.rows) {
        total.push_back(r.total);
        l1.push_back(r.l1);
        l2.push_back(r.l2);
        l3.push_back(r.l3);
        l4.push_back(r.l4);
    }
    write_series(dir, "loss_total", total);
    write_series(dir, "loss_l1", l1);
    write_series(dir, "loss_l2", l2);
    write_series(dir, "loss_l3", l3);
    write_series(dir, "loss_l4", l4);

    auto adj = open_out(dir / "adjacency.csv");
    adj << "# lungcrct adjacency v1\n";
    causal::write_matrix_csv(adj, report.adjacency);
    std::cout << "trained " << report.rows.size() << " epochs in " << report.seconds << " s; outputs in "
              << dir.string() << '\n';
    return kOk;
}

int cmd_eval_causal(const std::string& model_path, const std::string& truth_path, std::optional<double> fraction,
                    const std::string& out) {
    config::RunConfig run;
    const pipeline::Model model = io::load_model(model_path, &run);
    const double f = fraction.value_or(run.eval_fraction);
    const auto a = model.gae.adjacency_matrix();
    const auto g = causal::binarize(a, f);

    std::ostringstream weighted, binary;
    causal::write_matrix_csv(weighted, a.weights);
    causal::write_graph_csv(binary, g);
    std::cout << "# weighted adjacency\n" << weighted.str() << "# binarized (fraction " << f << ")\n" << binary.str();

    std::optional<int> shd;
    if (!truth_path.empty()) {
        std::ifstream in(truth_path);
        if (!in) throw DataError("cannot read " + truth_path);
        const auto truth = causal::read_graph_csv(in);
        if (truth.d != g.d)
            throw DataError("truth graph has " + std::to_string(truth.d) + " nodes, the model has " +
                            std::to_string(g.d));
        shd = causal::shd(g, truth, true);
        std::cout << "shd " << *shd << '\n';
    }
    if (!out.empty()) {
        const fs::path dir = prepare_out(out);
        open_out(dir / "adjacency_weighted.csv") << "# lungcrct adjacency v1\n" << weighted.str();
        open_out(dir / "adjacency_binary.csv") << "# lungcrct graph v1 fraction=" << f << '\n' << binary.str();
        if (shd) open_out(dir / "shd.txt") << *shd << '\n';
    }
    return kOk;
}

int cmd_vary(const std::string& model_path, const std::string& image_path, std::size_t cs_index, std::size_t steps,
             std::optional<std::pair<double, double>> range, const std::string& data_dir, const std::string& out) {
    config::RunConfig run;
    const pipeline::Model model = io::load_model(model_path, &run);
    const auto& cc = run.train.cvae;
    if (cs_index >= cc.latent_causal)
        throw ArgumentError("--cs-index " + std::to_string(cs_index) + " is not a causal latent; only z_cs0..z_cs" +
                            std::to_string(cc.latent_causal - 1) + " can be swept (non-causal latents are excluded)");
    if (steps < 1) throw ArgumentError("--steps must be >= 1");
    const std::size_t column = cc.latent_non_causal + cs_index;

    if (!range) {
        if (data_dir.empty()) throw ArgumentError("give --range lo,hi or --data to take the latent's min-max");
        const auto data = read_data_dir(data_dir, "train", run);
        const Tensor mu = model.encode_means(data.tensor());
        double lo = mu.at(0, column), hi = lo;
        for (std::size_t i = 0; i < mu.dim(0); ++i) {
            lo = std::min(lo, mu.at(i, column));
            hi = std::max(hi, mu.at(i, column));
        }
        range = std::pair(lo, hi);
    }
    const image::Image original = image_for_model(image_path, run);
    const Tensor z0 = model.encode_means(as_batch(original));
    Tensor zs({steps, z0.dim(1)});
    std::vector<double> values(steps);
    for (std::size_t s = 0; s < steps; ++s) {
        values[s] = steps == 1 ? range->first
                               : range->first + (range->second - range->first) * static_cast<double>(s) /
                                                    static_cast<double>(steps - 1);
        std::copy(z0.data(), z0.data() + z0.dim(1), zs.data() + s * z0.dim(1));
        zs.at(s, column) = values[s];
    }
    const Tensor decoded = model.cvae.decode(constant(zs)).value();

    const fs::path dir = prepare_out(out);
    image::write_pgm(dir / "original.pgm", original);
    std::vector<image::Image> row;
    auto csv = open_out(dir / "sweep.csv");
    csv << "# lungcrct sweep v1 latent=z_cs" << cs_index << "\nstep,value,file\n";
    csv.precision(17);
    for (std::size_t s = 0; s < steps; ++s) {
        char name[32];
        std::snprintf(name, sizeof name, "step_%02zu.pgm", s);
        row.push_back(as_image(decoded, s));
        image::write_pgm(dir / name, row.back());
        csv << s << ',' << values[s] << ',' << name << '\n';
    }
    row.push_back(original);
    image::write_pgm(dir / "sweep.pgm", image::tile(row, row.size()));
    std::cout << "swept z_cs" << cs_index << " over [" << range->first << ", " << range->second << "] in " << steps
              << " steps; outputs in " << dir.string() << '\n';
    return kOk;
}

int cmd_intervene(const std::string& model_path, const std::string& image_path, const std::string& node,
                  double value, int label, const std::string& out) {
    config::RunConfig run;
    const pipeline::Model model = io::load_model(model_path, &run);
    const std::size_t k = run.train.cvae.latent_causal, off = run.train.cvae.latent_non_causal;
    const auto names = node_names(k + 1);
    std::size_t index = names.size();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (node == names[i] || node == std::to_string(i)) index = i;
    if (index == names.size()) throw ArgumentError("unknown --node '" + node + "'; use 0.." + std::to_string(k - 1));
    if (index == k) throw ArgumentError("the label Y cannot be intervened on");
    if (label < 0 || label > 2) throw ArgumentError("--label must be 0, 1 or 2");

    const image::Image original = image_for_model(image_path, run);
    const Tensor z = model.encode_means(as_batch(original));
    const Tensor q = model.gae_input(z, {label});
    const auto graph = causal::binarize(model.gae.adjacency_matrix(), run.eval_fraction);
    const auto after =
        causal::intervene_propagate(q.values(), index, value, model.gae.predictor(), graph, std::optional<std::size_t>(k));

    Tensor z_after = z;
    for (std::size_t j = 0; j < k; ++j) z_after.at(0, off + j) = after[j];
    Tensor both({2, z.dim(1)});
    std::copy(z.data(), z.data() + z.size(), both.data());
    std::copy(z_after.data(), z_after.data() + z.size(), both.data() + z.size());
    const Tensor decoded = model.cvae.decode(constant(both)).value();

    const fs::path dir = prepare_out(out);
    const image::Image pre = as_image(decoded, 0), post = as_image(decoded, 1);
    image::write_pgm(dir / "pre.pgm", pre);
    image::write_pgm(dir / "post.pgm", post);
    image::write_pgm(dir / "pair.pgm", image::tile({pre, post}, 2));
    auto csv = open_out(dir / "intervention.csv");
    csv << "# lungcrct intervention v1 do(" << names[index] << "=" << value << ")\nnode,before,after,role\n";
    csv.precision(17);
    const auto desc = causal::descendants(graph, index);
    for (std::size_t i = 0; i < after.size(); ++i) {
        const bool d = std::find(desc.begin(), desc.end(), i) != desc.end();
        csv << names[i] << ',' << q[i] << ',' << after[i] << ',' << (i == index ? "clamped" : d ? "descendant" : "fixed")
            << '\n';
    }
    std::cout << "do(" << names[index] << " = " << value << ") changed " << desc.size()
              << " descendant(s); outputs in " << dir.string() << '\n';
    return kOk;
}

int cmd_classify(const std::string& model_path, const std::string& train_dir, const std::string& test_dir,
                 const std::string& train_split, const std::string& test_split, const std::string& out) {
    config::RunConfig run;
    const pipeline::Model model = io::load_model(model_path, &run);
    const auto train = read_data_dir(train_dir, train_split, run);
    const auto test = read_data_dir(test_dir, test_split, run);
    const Tensor z_train = model.causal_part(model.encode_means(train.tensor()));
    const Tensor z_test = model.causal_part(model.encode_means(test.tensor()));
    const auto y_train = pipeline::malignant_labels(train.labels);
    const auto y_test = pipeline::malignant_labels(test.labels);

    const auto clf = pipeline::train_classifier(z_train, y_train, run.classifier);
    const auto scores = clf.predict(z_test);
    const auto m = pipeline::metrics(scores, y_test);
    const auto roc = pipeline::roc_curve(scores, y_test);

    const fs::path dir = prepare_out(out);
    write_text(dir / "config.ini", config::format_config(run));
    io::save_classifier(dir / "classifier.bin", clf, run);
    {
        auto f = open_out(dir / "metrics.csv");
        m.write_csv(f);
        auto r = open_out(dir / "roc.csv");
        pipeline::write_roc_csv(r, roc);
    }
    std::vector<double> fpr, tpr;
    for (const auto& p : roc) {
        fpr.push_back(p.fpr);
        tpr.push_back(p.tpr);
    }
    image::write_pgm(dir / "roc.pgm", image::xy_plot(fpr, tpr, 240, 240, true));
    std::ostringstream cm;
    cm << "              pred 0  pred 1\n"
       << "true 0 (non)  " << m.confusion.tn << "  " << m.confusion.fp << '\n'
       << "true 1 (mal)  " << m.confusion.fn << "  " << m.confusion.tp << '\n';
    write_text(dir / "confusion.txt", cm.str());

    std::printf("accuracy %.4f  macro P %.4f  macro R %.4f  macro F1 %.4f  AUC %.4f\n", m.accuracy, m.macro_precision,
                m.macro_recall, m.macro_f1, m.auc);
    std::printf("sensitivity %.4f  specificity %.4f  NPV %.4f\n%s", m.sensitivity, m.specificity, m.npv,
                cm.str().c_str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LungCRCT: causal representation learning for lung CT"};
    app.require_subcommand(1);

    std::string out, config_path, model_path, image_path, truth_path, data_dir, train_dir, test_dir;
    std::string train_split = "train", test_split = "test", node;
    std::size_t n = 360, extent = 64, per_class_train = 80, cs_index = 0, steps = 6;
    std::uint64_t seed = 7;
    bool unbalanced = false, quiet = false;
    std::optional<double> fraction;
    std::vector<double> range;
    double value = 0;
    int label = 0;

    auto* gen = app.add_subcommand("phantom-gen", "Sample a phantom dataset with hidden factors");
    gen->add_option("--n", n, "Number of images")->capture_default_str();
    gen->add_option("--extent", extent, "Image side (32, 64 or 128)")->capture_default_str();
    gen->add_option("--seed", seed, "Sampling seed")->capture_default_str();
    gen->add_option("--per-class-train", per_class_train, "Training images per class")->capture_default_str();
    gen->add_flag("--unbalanced", unbalanced, "Draw classes at their natural rates");
    gen->add_option("--config", config_path, "Config file for SCM overrides")->check(CLI::ExistingFile);
    gen->add_option("--out", out, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Train the CVAE and GAE");
    train->add_option("--config", config_path, "Run config (INI)")->required();
    train->add_option("--out", out, "Output directory")->required();
    train->add_flag("--quiet", quiet, "No per-epoch progress");

    auto* eval = app.add_subcommand("eval-causal", "Binarise the learned graph and compare it with a truth graph");
    eval->add_option("--model", model_path, "model.bin from train")->required();
    eval->add_option("--truth", truth_path, "Truth graph CSV");
    eval->add_option("--fraction", fraction, "Share of candidate edges kept (default from config, 0.3)");
    eval->add_option("--out", out, "Optional output directory");

    auto* vary = app.add_subcommand("vary", "Decode a sweep of one causal latent");
    vary->add_option("--model", model_path)->required();
    vary->add_option("--image", image_path)->required();
    vary->add_option("--cs-index", cs_index, "Causal latent index")->capture_default_str();
    vary->add_option("--steps", steps)->capture_default_str();
    vary->add_option("--range", range, "lo,hi")->delimiter(',')->expected(2);
    vary->add_option("--data", data_dir, "Dataset for the latent's min-max range");
    vary->add_option("--out", out)->required();

    auto* intervene = app.add_subcommand("intervene", "do() on one causal latent, propagated through the GAE");
    intervene->add_option("--model", model_path)->required();
    intervene->add_option("--image", image_path)->required();
    intervene->add_option("--node", node, "Causal latent index or name (z_cs0..)")->required();
    intervene->add_option("--value", value)->required();
    intervene->add_option("--label", label, "Label of the image (0, 1, 2)")->capture_default_str();
    intervene->add_option("--out", out)->required();

    auto* classify = app.add_subcommand("classify", "Train and evaluate the malignancy classifier on causal latents");
    classify->add_option("--model", model_path)->required();
    classify->add_option("--train-data", train_dir)->required();
    classify->add_option("--test-data", test_dir)->required();
    classify->add_option("--train-split", train_split)->capture_default_str();
    classify->add_option("--test-split", test_split)->capture_default_str();
    classify->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*gen) return cmd_phantom_gen(n, extent, seed, per_class_train, !unbalanced, config_path, out);
        if (*train) return cmd_train(config_path, out, quiet);
        if (*eval) return cmd_eval_causal(model_path, truth_path, fraction, out);
        if (*vary) {
            std::optional<std::pair<double, double>> r;
            if (!range.empty()) r = std::pair(range[0], range[1]);
            return cmd_vary(model_path, image_path, cs_index, steps, r, data_dir, out);
        }
        if (*intervene) return cmd_intervene(model_path, image_path, node, value, label, out);
        if (*classify) return cmd_classify(model_path, train_dir, test_dir, train_split, test_split, out);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const InfeasibleError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const Error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
