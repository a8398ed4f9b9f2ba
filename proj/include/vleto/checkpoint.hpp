#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "vleto/nn.hpp"

namespace vleto {

// Parameter checkpoints are JSON with hex-encoded doubles so that a dump and
// reload round-trips bit-exactly.

inline std::string double_to_hex(double v) {
    static const char* digits = "0123456789abcdef";
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    std::string s(16, '0');
    for (int i = 0; i < 16; ++i)
        s[15 - i] = digits[(bits >> (4 * i)) & 0xF];
    return s;
}

inline double hex_to_double(const std::string& s) {
    if (s.size() != 16)
        throw IngestError("checkpoint: expected 16 hex digits, got '" + s + "'");
    std::uint64_t bits = 0;
    for (char ch : s) {
        bits <<= 4;
        if (ch >= '0' && ch <= '9') bits |= static_cast<std::uint64_t>(ch - '0');
        else if (ch >= 'a' && ch <= 'f') bits |= static_cast<std::uint64_t>(ch - 'a' + 10);
        else if (ch >= 'A' && ch <= 'F') bits |= static_cast<std::uint64_t>(ch - 'A' + 10);
        else throw IngestError("checkpoint: bad hex digit '" + std::string(1, ch) + "'");
    }
    return std::bit_cast<double>(bits);
}

inline nlohmann::json matrix_to_hex_json(const Matrix& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    nlohmann::json values = nlohmann::json::array();
    for (double v : m.data()) values.push_back(double_to_hex(v));
    j["values"] = std::move(values);
    return j;
}

inline Matrix matrix_from_hex_json(const nlohmann::json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto& values = j.at("values");
    if (values.size() != m.size())
        throw IngestError("checkpoint: value count does not match shape");
    for (std::size_t i = 0; i < m.size(); ++i)
        m.data()[i] = hex_to_double(values[i].get<std::string>());
    return m;
}

inline nlohmann::json checkpoint_to_json(const DenseNet& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const Layer& layer = net.layer(l);
        nlohmann::json j;
        j["activation"] = layer.act == Activation::ReLU ? "relu" : "identity";
        j["weight"] = matrix_to_hex_json(layer.weight);
        j["bias"] = matrix_to_hex_json(layer.bias);
        layers.push_back(std::move(j));
    }
    return nlohmann::json{{"layers", std::move(layers)}};
}

inline DenseNet checkpoint_from_json(const nlohmann::json& j) {
    std::vector<Layer> layers;
    for (const auto& lj : j.at("layers")) {
        Layer l;
        const std::string act = lj.at("activation").get<std::string>();
        if (act == "relu") l.act = Activation::ReLU;
        else if (act == "identity") l.act = Activation::Identity;
        else throw IngestError("checkpoint: unknown activation '" + act + "'");
        l.weight = matrix_from_hex_json(lj.at("weight"));
        l.bias = matrix_from_hex_json(lj.at("bias"));
        layers.push_back(std::move(l));
    }
    return DenseNet::from_layers(std::move(layers));
}

inline void save_checkpoint(const DenseNet& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IngestError("checkpoint: cannot open '" + path + "' for writing");
    out << checkpoint_to_json(net).dump(2) << "\n";
}

inline DenseNet load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("checkpoint: cannot open '" + path + "'");
    nlohmann::json j;
    in >> j;
    return checkpoint_from_json(j);
}

}  // namespace vleto
