#include "vbcm/model_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace vbcm {

using nlohmann::json;

namespace {

json mlp_to_json(const Mlp& m) {
    json layers = json::array();
    for (const auto& l : m.layers()) {
        json rows = json::array();
        for (std::size_t o = 0; o < l.out; ++o) {
            json row = json::array();
            for (std::size_t i = 0; i < l.in; ++i) row.push_back(l.w(o, i));
            rows.push_back(std::move(row));
        }
        layers.push_back({{"in", l.in}, {"out", l.out}, {"weights", std::move(rows)}, {"bias", l.bias}});
    }
    return {{"shape", m.shape()},
            {"hidden_activation", "sigmoid"},
            {"output_activation", "softmax"},
            {"layers", std::move(layers)}};
}

Mlp mlp_from_json(const json& j) {
    if (j.value("hidden_activation", "") != "sigmoid" || j.value("output_activation", "") != "softmax") {
        throw ModelFormatError("unsupported MLP activations");
    }
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    Mlp m(shape);
    const auto& layers = j.at("layers");
    if (layers.size() != m.layers().size()) throw ModelFormatError("MLP layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& layer = m.layers()[l];
        const auto& jl = layers[l];
        if (jl.at("in").get<std::size_t>() != layer.in || jl.at("out").get<std::size_t>() != layer.out) {
            throw ModelFormatError("MLP layer " + std::to_string(l) + " shape mismatch");
        }
        const auto& rows = jl.at("weights");
        if (rows.size() != layer.out) throw ModelFormatError("MLP weight rows mismatch");
        for (std::size_t o = 0; o < layer.out; ++o) {
            const auto row = rows[o].get<std::vector<double>>();
            if (row.size() != layer.in) throw ModelFormatError("MLP weight columns mismatch");
            for (std::size_t i = 0; i < layer.in; ++i) layer.w(o, i) = row[i];
        }
        layer.bias = jl.at("bias").get<std::vector<double>>();
        if (layer.bias.size() != layer.out) throw ModelFormatError("MLP bias size mismatch");
    }
    return m;
}

}  // namespace

std::string model_to_json(const ModelFile& m) {
    const ParamStore& p = m.params;
    json alpha = json::array();
    for (const auto& [key, v] : p.alphas()) {
        alpha.push_back({{"query", key.first}, {"doc", key.second}, {"value", v}});
    }
    json gamma = json::array();
    for (const auto& [key, v] : p.gammas()) {
        gamma.push_back({{"rank", key.rank}, {"prev", key.prev}, {"value", v}});
    }
    json sigma = json::array();
    for (const auto& [doc, v] : p.sigmas()) sigma.push_back({{"doc", doc}, {"value", v}});

    json j = {{"version", kModelFormatVersion},
              {"kind", std::string(model_kind_name(p.kind()))},
              {"estimator", m.estimator == Estimator::Regression ? "regression" : "standard"},
              {"alpha", std::move(alpha)},
              {"gamma", std::move(gamma)},
              {"sigma", std::move(sigma)}};
    if (m.mlp) j["mlp"] = mlp_to_json(*m.mlp);
    return j.dump() + "\n";
}

ModelFile model_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ModelFormatError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (!j.is_object() || !j.contains("version")) throw ModelFormatError("model file has no version");
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion) {
            throw ModelFormatError("model file version " + std::to_string(version) +
                                   " is not supported (expected " +
                                   std::to_string(kModelFormatVersion) + ")");
        }
        ModelFile m;
        m.params = ParamStore(parse_model_kind(j.at("kind").get<std::string>()));
        const std::string est = j.value("estimator", "standard");
        if (est == "regression") {
            m.estimator = Estimator::Regression;
        } else if (est != "standard") {
            throw ModelFormatError("unknown estimator '" + est + "'");
        }
        for (const auto& a : j.at("alpha")) {
            m.params.set_alpha(a.at("query").get<std::string>(), a.at("doc").get<std::string>(),
                               a.at("value").get<double>());
        }
        for (const auto& g : j.at("gamma")) {
            m.params.set_gamma({g.at("rank").get<int>(), g.at("prev").get<int>()},
                               g.at("value").get<double>());
        }
        for (const auto& s : j.at("sigma")) {
            m.params.set_sigma(s.at("doc").get<std::string>(), s.at("value").get<double>());
        }
        if (j.contains("mlp")) m.mlp = mlp_from_json(j.at("mlp"));
        return m;
    } catch (const ModelFormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw ModelFormatError(std::string("invalid model file: ") + e.what());
    }
}

void save_model(const std::string& path, const ModelFile& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelFormatError("cannot write '" + path + "'");
    out << model_to_json(m);
}

ModelFile load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelFormatError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace vbcm
