#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lungcrct/causal.hpp"
#include "lungcrct/classifier.hpp"
#include "lungcrct/config.hpp"
#include "lungcrct/dependence.hpp"
#include "lungcrct/errors.hpp"
#include "lungcrct/model_io.hpp"
#include "lungcrct/phantom.hpp"
#include "lungcrct/pipeline.hpp"
#include "lungcrct/variation.hpp"

namespace py = pybind11;
using namespace lungcrct;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> flat(const Array& a) { return {a.data(), a.data() + a.size()}; }

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, flat(a));
}

Array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

Tensor square(const Array& a, const char* what) {
    if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw ShapeError(std::string(what) + " must be a square matrix");
    return to_tensor(a);
}

causal::BinaryGraph to_graph(const py::array_t<bool, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw ShapeError("graph must be a square matrix");
    causal::BinaryGraph g(static_cast<std::size_t>(a.shape(0)));
    for (std::size_t i = 0; i < g.d; ++i)
        for (std::size_t j = 0; j < g.d; ++j) g.set(i, j, a.at(i, j));
    return g;
}

py::array_t<bool> from_graph(const causal::BinaryGraph& g) {
    py::array_t<bool> out({g.d, g.d});
    for (std::size_t i = 0; i < g.d; ++i)
        for (std::size_t j = 0; j < g.d; ++j) out.mutable_at(i, j) = g(i, j);
    return out;
}

// [n,H,W] or [n,1,H,W] -> [n,1,H,W]
Tensor image_batch(const Array& a) {
    Tensor t = to_tensor(a);
    if (t.rank() == 3) return t.reshaped({t.dim(0), 1, t.dim(1), t.dim(2)});
    if (t.rank() != 4 || t.dim(1) != 1) throw ShapeError("images must be [n,H,W] or [n,1,H,W]");
    return t;
}

py::dict metrics_dict(const pipeline::MetricsRecord& m) {
    py::dict d;
    d["accuracy"] = m.accuracy;
    d["macro_precision"] = m.macro_precision;
    d["macro_recall"] = m.macro_recall;
    d["macro_f1"] = m.macro_f1;
    d["auc"] = m.auc;
    d["sensitivity"] = m.sensitivity;
    d["specificity"] = m.specificity;
    d["npv"] = m.npv;
    d["tn"] = m.confusion.tn;
    d["fp"] = m.confusion.fp;
    d["fn"] = m.confusion.fn;
    d["tp"] = m.confusion.tp;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "LungCRCT native core";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<ArgumentError>(m, "ArgumentError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<InfeasibleError>(m, "InfeasibleError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

    m.def("dcor", [](const Array& x, const Array& y) { return dependence::dcor(flat(x), flat(y)); }, py::arg("x"),
          py::arg("y"), "Distance correlation of two equal-length samples.");
    m.def("dcor_squared", [](const Array& x, const Array& y) { return dependence::dcor_squared(flat(x), flat(y)); },
          py::arg("x"), py::arg("y"));
    m.def("knn_mi", [](const Array& x, const Array& y, std::size_t k) { return dependence::knn_mi(flat(x), flat(y), k); },
          py::arg("x"), py::arg("y"), py::arg("k") = 5, "Kraskov k-NN mutual information in nats.");
    m.def("shannon_entropy",
          [](const Array& v, std::size_t bins) { return variation::shannon_entropy(flat(v), {bins}); },
          py::arg("values"), py::arg("bins") = 5, "Histogram entropy in bits over [min, max].");

    m.def("h_logdet", [](const Array& w, double s) { return causal::h_logdet(square(w, "w"), s); }, py::arg("w"),
          py::arg("s") = 1.0);
    m.def("h_trace_exp", [](const Array& w) { return causal::h_trace_exp(square(w, "w")); }, py::arg("w"));
    m.def(
        "binarize",
        [](const Array& w, double fraction, bool label_blacklist) {
            const Tensor t = square(w, "weights");
            auto a = label_blacklist ? causal::AdjacencyMatrix::with_label_blacklist(t.dim(0))
                                     : causal::AdjacencyMatrix::zeros(t.dim(0));
            a.weights = t;
            return from_graph(causal::binarize(a, fraction));
        },
        py::arg("weights"), py::arg("fraction") = 0.3, py::arg("label_blacklist") = true,
        "Keeps the largest |w| among allowed off-diagonal entries.");
    m.def("shd",
          [](const py::array_t<bool>& a, const py::array_t<bool>& b, bool match) {
              return causal::shd(to_graph(a), to_graph(b), match);
          },
          py::arg("g1"), py::arg("g2"), py::arg("match_permutations") = false);
    m.def("is_acyclic", [](const py::array_t<bool>& g) { return causal::is_acyclic(to_graph(g)); });

    m.def("roc_auc", &pipeline::roc_auc, py::arg("scores"), py::arg("labels"));
    m.def("metrics",
          [](const std::vector<double>& s, const std::vector<int>& y, double t) {
              return metrics_dict(pipeline::metrics(s, y, t));
          },
          py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);

    m.def(
        "sample_phantom",
        [](std::size_t n, std::size_t extent, std::uint64_t seed, bool balanced) {
            const auto data = phantom::sample_phantom(n, phantom::PhantomScm::calibrated(), extent, seed, balanced);
            py::array_t<double> factors({data.size(), std::size_t{3}});
            for (std::size_t i = 0; i < data.size(); ++i) {
                factors.mutable_at(i, 0) = data.factors[i].tumor;
                factors.mutable_at(i, 1) = data.factors[i].lymph;
                factors.mutable_at(i, 2) = data.factors[i].angio;
            }
            const Tensor t = data.tensor();
            py::dict d;
            d["images"] = to_array(t.reshaped({t.dim(0), t.dim(2), t.dim(3)}));
            d["labels"] = data.labels;
            d["factors"] = factors;
            return d;
        },
        py::arg("n"), py::arg("extent") = 64, py::arg("seed") = 7, py::arg("balanced") = true,
        "Phantom images [n,H,W], labels and hidden (tumor, lymph, angio) factors.");
    m.def("phantom_truth", [] { return from_graph(phantom::PhantomScm{}.truth()); },
          "Ground-truth graph over (tumor, lymph, angio, Y).");

    m.def("default_config", [] { return config::format_config(config::RunConfig{}); });
    m.def("normalize_config", [](const std::string& text) { return config::format_config(config::parse_config(text)); },
          py::arg("text"), "Parses INI text and prints every key with its effective value.");

    py::class_<pipeline::Model>(m, "Model")
        .def_static(
            "load", [](const std::string& path) { return io::load_model(path); }, py::arg("path"))
        .def_static(
            "from_config",
            [](const std::string& text) { return pipeline::Model(config::parse_config(text).train); },
            py::arg("text"), "Untrained model built from INI text.")
        .def_property_readonly("latent_non_causal",
                               [](const pipeline::Model& mdl) { return mdl.config.cvae.latent_non_causal; })
        .def_property_readonly("latent_causal",
                               [](const pipeline::Model& mdl) { return mdl.config.cvae.latent_causal; })
        .def("encode_means", [](const pipeline::Model& mdl, const Array& x) { return to_array(mdl.encode_means(image_batch(x))); },
             py::arg("images"))
        .def("decode",
             [](const pipeline::Model& mdl, const Array& z) { return to_array(mdl.cvae.decode(constant(to_tensor(z))).value()); },
             py::arg("z"))
        .def("adjacency", [](const pipeline::Model& mdl) { return to_array(mdl.gae.adjacency_matrix().weights); })
        .def(
            "train",
            [](pipeline::Model& mdl, const Array& images, const std::vector<int>& labels) {
                const Tensor batch = image_batch(images);
                pipeline::TrainReport report;
                {
                    py::gil_scoped_release release;
                    report = pipeline::train_lungcrct(mdl, batch, labels);
                }
                py::list rows;
                for (const auto& r : report.rows) {
                    py::dict d;
                    d["epoch"] = r.epoch;
                    d["total"] = r.total;
                    d["l1"] = r.l1;
                    d["l2"] = r.l2;
                    d["l3"] = r.l3;
                    d["l4"] = r.l4;
                    d["h"] = r.h;
                    d["rho"] = r.rho;
                    rows.append(d);
                }
                return rows;
            },
            py::arg("images"), py::arg("labels"),
            "Runs the staged schedule in place; returns one dict per epoch.");
}
