#include "lungcrct/model_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "lungcrct/errors.hpp"

namespace lungcrct::io {

namespace {

constexpr std::array<char, 8> kMagic{'L', 'U', 'N', 'G', 'C', 'R', 'C', 'T'};

template <class T>
void put(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.append(bytes, sizeof(T));
}

class Reader {
public:
    Reader(std::string data, std::string where) : data_(std::move(data)), where_(std::move(where)) {}

    template <class T>
    T get() {
        need(sizeof(T));
        char bytes[sizeof(T)];
        std::memcpy(bytes, data_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, bytes, sizeof(T));
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }
    [[noreturn]] void fail(const std::string& what) const { throw FormatError(where_ + ": " + what); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) fail("truncated file");
    }
    std::string data_, where_;
    std::size_t pos_ = 0;
};

void restore(const std::vector<std::pair<std::string, Var>>& params, const Container& c, const std::string& where) {
    std::map<std::string, const Tensor*> stored;
    for (const auto& [name, t] : c.tensors) stored[name] = &t;
    if (stored.size() != params.size())
        throw FormatError(where + ": holds " + std::to_string(stored.size()) + " tensors, the model has " +
                          std::to_string(params.size()));
    for (const auto& [name, var] : params) {
        auto it = stored.find(name);
        if (it == stored.end()) throw FormatError(where + ": missing tensor " + name);
        if (it->second->shape() != var.shape())
            throw FormatError(where + ": tensor " + name + " has shape " + shape_str(it->second->shape()) +
                              ", expected " + shape_str(var.shape()));
    }
    for (auto [name, var] : params) var.mutable_value() = *stored[name];
}

}  // namespace

void write_container(const std::filesystem::path& path, const Container& c) {
    std::string out(kMagic.begin(), kMagic.end());
    put<std::uint32_t>(out, kContainerVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.kind));
    put<std::uint64_t>(out, c.config_text.size());
    out += c.config_text;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& [name, t] : c.tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) put<std::uint64_t>(out, d);
        for (double v : t.values()) put<double>(out, v);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("cannot write " + path.string());
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    Reader r(std::string(std::istreambuf_iterator<char>(f), {}), path.string());
    if (r.bytes(kMagic.size()) != std::string(kMagic.begin(), kMagic.end())) r.fail("not a lungcrct container");
    const auto version = r.get<std::uint32_t>();
    if (version != kContainerVersion)
        r.fail("container version " + std::to_string(version) + " is not supported (expected " +
               std::to_string(kContainerVersion) + ")");
    Container c;
    const auto kind = r.get<std::uint32_t>();
    if (kind != 1 && kind != 2) r.fail("unknown container kind " + std::to_string(kind));
    c.kind = static_cast<Container::Kind>(kind);
    c.config_text = r.bytes(r.get<std::uint64_t>());
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.bytes(r.get<std::uint32_t>());
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) r.fail("tensor " + name + " has implausible rank " + std::to_string(rank));
        Shape shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = r.get<std::uint64_t>();
            if (d > (std::size_t{1} << 32)) r.fail("tensor " + name + " has implausible extent");
            numel *= d;
        }
        std::vector<double> values(numel);
        for (auto& v : values) v = r.get<double>();
        c.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    if (!r.done()) r.fail("trailing bytes after the last tensor");
    return c;
}

void save_model(const std::filesystem::path& path, const pipeline::Model& model, const config::RunConfig& run) {
    config::RunConfig stored = run;
    stored.train = model.config;
    Container c;
    c.kind = Container::Kind::Model;
    c.config_text = config::format_config(stored);
    for (const auto& [name, v] : model.cvae.named_parameters()) c.tensors.emplace_back(name, v.value());
    for (const auto& [name, v] : model.gae.named_parameters()) c.tensors.emplace_back(name, v.value());
    write_container(path, c);
}

pipeline::Model load_model(const std::filesystem::path& path, config::RunConfig* run) {
    const Container c = read_container(path);
    if (c.kind != Container::Kind::Model) throw FormatError(path.string() + ": not a model container");
    config::RunConfig cfg;
    try {
        cfg = config::parse_config(c.config_text);
    } catch (const ArgumentError& e) {
        throw FormatError(path.string() + ": stored config is invalid: " + e.what());
    }
    pipeline::Model model(cfg.train);
    auto params = model.cvae.named_parameters();
    for (auto& p : model.gae.named_parameters()) params.push_back(p);
    restore(params, c, path.string());
    if (run) *run = cfg;
    return model;
}

void save_classifier(const std::filesystem::path& path, const pipeline::Classifier& clf, const config::RunConfig& run) {
    config::RunConfig stored = run;
    stored.classifier = clf.config();
    Container c;
    c.kind = Container::Kind::Classifier;
    c.config_text = config::format_config(stored);
    for (const auto& [name, v] : clf.named_parameters()) c.tensors.emplace_back(name, v.value());
    write_container(path, c);
}

pipeline::Classifier load_classifier(const std::filesystem::path& path) {
    const Container c = read_container(path);
    if (c.kind != Container::Kind::Classifier) throw FormatError(path.string() + ": not a classifier container");
    config::RunConfig cfg;
    try {
        cfg = config::parse_config(c.config_text);
    } catch (const ArgumentError& e) {
        throw FormatError(path.string() + ": stored config is invalid: " + e.what());
    }
    pipeline::Classifier clf(cfg.classifier);
    restore(clf.named_parameters(), c, path.string());
    return clf;
}

}  // namespace lungcrct::io
