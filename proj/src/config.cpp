#include "lungcrct/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lungcrct/errors.hpp"

namespace lungcrct::config {

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& want) {
    throw ArgumentError("config: " + key + " = '" + value + "' is not " + want);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, v, "a number");
    return out;
}

std::string fmt(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string fmt_list(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s;
}

std::string fmt_weights(const pipeline::StageWeights& w) {
    return fmt(w[0]) + ", " + fmt(w[1]) + ", " + fmt(w[2]) + ", " + fmt(w[3]);
}

std::string fmt_convs(const std::vector<cvae::ConvSpec>& convs) {
    std::string s;
    for (std::size_t i = 0; i < convs.size(); ++i)
        s += (i ? ", " : "") + std::to_string(convs[i].filters) + ":" + std::to_string(convs[i].kernel) + ":" +
             std::to_string(convs[i].stride);
    return s;
}

struct Entry {
    std::string comment;
    std::function<std::string()> get;
    std::function<void(const std::string& key, const std::string& value)> set;
};

/// section -> ordered (key, entry)
using Registry = std::vector<std::pair<std::string, std::vector<std::pair<std::string, Entry>>>>;

Entry size_entry(std::size_t& x, std::string comment) {
    return {std::move(comment), [&x] { return std::to_string(x); },
            [&x](const std::string& k, const std::string& v) { x = parse_number<std::size_t>(k, v); }};
}
Entry u64_entry(std::uint64_t& x, std::string comment) {
    return {std::move(comment), [&x] { return std::to_string(x); },
            [&x](const std::string& k, const std::string& v) { x = parse_number<std::uint64_t>(k, v); }};
}
Entry real_entry(double& x, std::string comment) {
    return {std::move(comment), [&x] { return fmt(x); },
            [&x](const std::string& k, const std::string& v) { x = parse_number<double>(k, v); }};
}
Entry bool_entry(bool& x, std::string comment) {
    return {std::move(comment), [&x] { return std::string(x ? "true" : "false"); },
            [&x](const std::string& k, const std::string& v) {
                if (v == "true") x = true;
                else if (v == "false") x = false;
                else bad(k, v, "true or false");
            }};
}
Entry list_entry(std::vector<std::size_t>& x, std::string comment) {
    return {std::move(comment), [&x] { return fmt_list(x); },
            [&x](const std::string& k, const std::string& v) {
                x.clear();
                for (const auto& item : split_list(v)) x.push_back(parse_number<std::size_t>(k, item));
            }};
}
Entry weights_entry(pipeline::StageWeights& x, std::string comment) {
    return {std::move(comment), [&x] { return fmt_weights(x); },
            [&x](const std::string& k, const std::string& v) {
                const auto items = split_list(v);
                if (items.size() != 4) bad(k, v, "four comma-separated weights");
                for (std::size_t i = 0; i < 4; ++i) x[i] = parse_number<double>(k, items[i]);
            }};
}
Entry convs_entry(std::vector<cvae::ConvSpec>& x, std::string comment) {
    return {std::move(comment), [&x] { return fmt_convs(x); },
            [&x](const std::string& k, const std::string& v) {
                x.clear();
                for (const auto& item : split_list(v)) {
                    const auto a = item.find(':'), b = item.rfind(':');
                    if (a == std::string::npos || a == b) bad(k, v, "a list of filters:kernel:stride");
                    x.push_back({parse_number<std::size_t>(k, trim(item.substr(0, a))),
                                 parse_number<std::size_t>(k, trim(item.substr(a + 1, b - a - 1))),
                                 parse_number<std::size_t>(k, trim(item.substr(b + 1)))});
                }
            }};
}
template <class E>
Entry enum_entry(E& x, std::vector<std::pair<std::string, E>> names, std::string comment) {
    auto get = [&x, names] {
        for (const auto& [n, e] : names)
            if (e == x) return n;
        return std::string("?");
    };
    auto set = [&x, names](const std::string& k, const std::string& v) {
        std::string options;
        for (const auto& [n, e] : names) {
            if (n == v) {
                x = e;
                return;
            }
            options += (options.empty() ? "" : " or ") + n;
        }
        bad(k, v, options);
    };
    return {std::move(comment), get, set};
}

Registry registry(RunConfig& c) {
    auto& d = c.data;
    auto& t = c.train;
    auto& cv = t.cvae;
    auto& g = t.gae;
    auto& s = t.schedule;
    auto& cl = c.classifier;
    return {
        {"data",
         {{"source", enum_entry(d.source, {{"phantom", DataSource::Phantom}, {"image-dir", DataSource::ImageDir},
                                             {"dataset", DataSource::Dataset}},
                                "phantom, image-dir or dataset")},
          {"path", {"image-dir root, or a dataset directory holding manifest.csv", [&d] { return d.path; },
                    [&d](const std::string&, const std::string& v) { d.path = v; }}},
          {"n", size_entry(d.n, "phantom samples drawn before the split")},
          {"balanced", bool_entry(d.balanced, "phantom: equal class counts (n divisible by 3)")},
          {"extent", size_entry(d.extent, "square image side; also the CVAE input extent")},
          {"crop_fraction", real_entry(d.crop_fraction, "image-dir: centre crop after resizing to 256")},
          {"per_class_train", size_entry(d.per_class_train, "training images per class")},
          {"per_class_test", size_entry(d.per_class_test, "test images per class (at most)")},
          {"seed", u64_entry(d.seed, "phantom sampling and split seed")}}},
        {"phantom",
         {{"angio_from_tumor", real_entry(c.scm.angio_from_tumor, "")},
          {"lymph_from_tumor", real_entry(c.scm.lymph_from_tumor, "")},
          {"lymph_from_angio", real_entry(c.scm.lymph_from_angio, "")},
          {"noise", real_entry(c.scm.noise, "")},
          {"calibration_seed", u64_entry(c.calibration_seed, "tertile thresholds of the severity score")},
          {"calibration_draws", size_entry(c.calibration_draws, "")}}},
        {"cvae",
         {{"channels", size_entry(cv.channels, "")},
          {"padding", enum_entry(cv.padding, {{"same", Padding::Same}, {"valid", Padding::Valid}}, "")},
          {"encoder_convs", convs_entry(cv.encoder_convs, "filters:kernel:stride per layer")},
          {"encoder_dense", list_entry(cv.encoder_dense, "")},
          {"decoder_dense", list_entry(cv.decoder_dense, "")},
          {"decoder_convs", convs_entry(cv.decoder_convs, "transposed, before the output layer")},
          {"output_kernel", size_entry(cv.output_kernel, "")},
          {"output_stride", size_entry(cv.output_stride, "")},
          {"latent_non_causal", size_entry(cv.latent_non_causal, "")},
          {"latent_causal", size_entry(cv.latent_causal, "")},
          {"v", real_entry(t.v, "latent penalty weight")},
          {"reconstruction", enum_entry(t.reconstruction, {{"mean", cvae::Reduction::Mean}, {"sum", cvae::Reduction::Sum}},
                                        "BCE over pixels: mean or sum")}}},
        {"gae",
         {{"hidden", size_entry(g.hidden, "per-variable hidden width")},
          {"embed_dim", size_entry(g.embed_dim, "")},
          {"hidden_layers", size_entry(g.hidden_layers, "")},
          {"constraint", enum_entry(t.constraint, {{"logdet", causal::Constraint::LogDet},
                                                   {"trace_exp", causal::Constraint::TraceExp}}, "")},
          {"s", real_entry(t.auglag.s, "logdet scale")},
          {"lambda1", real_entry(t.lambda1, "L1 weight on the adjacency")},
          {"weight_decay", real_entry(t.gae_weight_decay, "L2 on f1/f2 weights; 0 is the reference setting")},
          {"label_scale", real_entry(t.label_scale, "labels enter the GAE as y * label_scale")}}},
        {"train",
         {{"epochs", size_entry(s.epochs, "")},
          {"stage_b_start", size_entry(s.stage_b_start, "")},
          {"stage_c_start", size_entry(s.stage_c_start, "")},
          {"weights_a", weights_entry(s.stage_a, "phi1..phi4 before stage_b_start")},
          {"weights_b", weights_entry(s.stage_b, "")},
          {"weights_c", weights_entry(s.stage_c, "")},
          {"lr_encoder", real_entry(t.lr_encoder, "")},
          {"lr_decoder", real_entry(t.lr_decoder, "")},
          {"lr_adjacency", real_entry(t.lr_adjacency, "")},
          {"lr_gae", real_entry(t.lr_gae, "")},
          {"tau", real_entry(t.tau, "")},
          {"dcor_squared", bool_entry(t.dcor_squared, "train on R^2 instead of R")},
          {"alpha", real_entry(t.auglag.alpha, "")},
          {"rho", real_entry(t.auglag.rho, "")},
          {"beta", real_entry(t.auglag.beta, "")},
          {"gamma", real_entry(t.auglag.gamma, "")},
          {"variation_subset", size_entry(t.variation_subset, "")},
          {"histogram_bins", size_entry(t.histogram.bins, "")},
          {"seed", u64_entry(t.seed, "")}}},
        {"classifier",
         {{"hidden", list_entry(cl.hidden, "")},
          {"epochs", size_entry(cl.epochs, "")},
          {"batch_size", size_entry(cl.batch_size, "")},
          {"learning_rate", real_entry(cl.learning_rate, "")},
          {"bn_epsilon", real_entry(cl.bn_epsilon, "")},
          {"bn_momentum", real_entry(cl.bn_momentum, "")},
          {"seed", u64_entry(cl.seed, "")}}},
        {"eval", {{"fraction", real_entry(c.eval_fraction, "share of candidate edges kept when binarising")}}},
    };
}

void sync(RunConfig& c) {
    c.train.cvae.extent = c.data.extent;
    c.train.gae.d = c.train.cvae.latent_causal + 1;
    c.classifier.input_dim = c.train.cvae.latent_causal;
}

}  // namespace

void RunConfig::validate() const {
    if (train.cvae.extent != data.extent) throw ArgumentError("config: cvae extent differs from data.extent");
    if (data.source != DataSource::Phantom && data.path.empty())
        throw ArgumentError("config: data.source = image-dir or dataset needs data.path");
    if (data.source == DataSource::Phantom && data.balanced && data.n % 3 != 0)
        throw ArgumentError("config: balanced phantom sampling needs n divisible by 3");
    if (!(eval_fraction > 0 && eval_fraction <= 1)) throw ArgumentError("config: eval.fraction must lie in (0, 1]");
    if (data.per_class_train < 1) throw ArgumentError("config: per_class_train must be >= 1");
    train.validate();
    classifier.validate();
    if (classifier.input_dim != train.cvae.latent_causal)
        throw ArgumentError("config: classifier input must match the causal latent count");
}

RunConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ArgumentError(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
    }
    RunConfig c;
    auto reg = registry(c);
    for (const auto& [section, keys] : tree) {
        if (keys.empty() && !keys.data().empty())
            throw ArgumentError("config: key '" + section + "' outside a section");
        auto sec = std::find_if(reg.begin(), reg.end(), [&](const auto& s) { return s.first == section; });
        if (sec == reg.end()) throw ArgumentError("config: unknown section [" + section + "]");
        for (const auto& [key, node] : keys) {
            auto e = std::find_if(sec->second.begin(), sec->second.end(), [&](const auto& p) { return p.first == key; });
            if (e == sec->second.end()) throw ArgumentError("config: unknown key " + section + "." + key);
            e->second.set(section + "." + key, trim(node.data()));
        }
    }
    sync(c);
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string format_config(const RunConfig& config) {
    RunConfig c = config;
    auto reg = registry(c);
    std::string out = "# lungcrct config v1\n";
    for (const auto& [section, keys] : reg) {
        out += "\n[" + section + "]\n";
        for (const auto& [key, e] : keys) {
            if (!e.comment.empty()) out += "# " + e.comment + "\n";
            out += key + " = " + e.get() + "\n";
        }
    }
    return out;
}

phantom::PhantomScm phantom_scm(const RunConfig& config) {
    phantom::PhantomScm scm = config.scm;
    scm.calibrate(config.calibration_seed, config.calibration_draws);
    return scm;
}

std::pair<phantom::Dataset, phantom::Dataset> load_splits(const RunConfig& config) {
    const auto& d = config.data;
    switch (d.source) {
        case DataSource::Phantom: {
            const auto all = phantom::sample_phantom(d.n, phantom_scm(config), d.extent, d.seed, d.balanced);
            return phantom::stratified_split(all, d.per_class_train, d.seed, d.per_class_test);
        }
        case DataSource::ImageDir: {
            phantom::LoadReport report;
            const auto all = phantom::load_image_dir(d.path, d.extent, d.crop_fraction, &report);
            return phantom::stratified_split(all, d.per_class_train, d.seed, d.per_class_test);
        }
        case DataSource::Dataset: {
            auto train = phantom::read_dataset(d.path, "train");
            auto test = phantom::read_dataset(d.path, "test");
            for (const auto* set : {&train, &test})
                for (const auto& img : set->images)
                    if (img.height != d.extent || img.width != d.extent)
                        throw DataError("dataset " + d.path + " holds " + std::to_string(img.height) + "x" +
                                        std::to_string(img.width) + " images, config extent is " +
                                        std::to_string(d.extent));
            return {std::move(train), std::move(test)};
        }
    }
    throw ArgumentError("config: unknown data source");
}

}  // namespace lungcrct::config
