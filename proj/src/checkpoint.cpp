#include "emkken/checkpoint.hpp"

#include <cstring>
#include <map>

#include "emkken/errors.hpp"
#include "emkken/io_util.hpp"
#include "nlohmann/json.hpp"

namespace emkken::io {

namespace {

void append_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<const Parameter*>& params) {
    const bool f32 = precision() == Precision::f32;
    const std::size_t elem = f32 ? 4 : 8;

    nlohmann::json header;
    header["dtype"] = f32 ? "f32" : "f64";
    nlohmann::json tensors;  // object keys sort, so emit order is stable
    std::string payload;
    std::size_t offset = 0;
    // payload laid out in name order to match the header
    std::map<std::string, const Parameter*> by_name;
    for (const Parameter* p : params) {
        if (by_name.count(p->name)) throw ContractError("duplicate parameter name " + p->name);
        by_name[p->name] = p;
    }
    for (const auto& [name, p] : by_name) {
        tensors[name] = {{"shape", p->value.shape()}, {"offset", offset}};
        const std::size_t nbytes = p->value.size() * elem;
        payload.resize(offset + nbytes);
        if (f32) {
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                const float v = static_cast<float>(p->value[i]);
                std::memcpy(payload.data() + offset + i * 4, &v, 4);
            }
        } else {
            std::memcpy(payload.data() + offset, p->value.data(), nbytes);
        }
        offset += nbytes;
    }
    header["tensors"] = tensors;

    const std::string header_text = header.dump();
    std::string blob;
    append_u64_le(blob, header_text.size());
    blob += header_text;
    blob += payload;
    write_atomic(path, blob);
}

void load_checkpoint(const std::string& path, const std::vector<Parameter*>& params) {
    auto bytes = read_bytes(path);
    if (bytes.size() < 8) throw ParseError("checkpoint too short: " + path);
    const std::uint64_t header_len = read_u64_le(bytes.data());
    if (8 + header_len > bytes.size()) throw ParseError("checkpoint header overruns file: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bad checkpoint header: " + std::string(e.what()));
    }
    const bool f32 = header.at("dtype").get<std::string>() == "f32";
    const std::size_t elem = f32 ? 4 : 8;
    const unsigned char* payload = bytes.data() + 8 + header_len;
    const std::size_t payload_len = bytes.size() - 8 - header_len;
    const auto& tensors = header.at("tensors");

    for (Parameter* p : params) {
        if (!tensors.contains(p->name)) throw SchemaError("checkpoint missing tensor " + p->name);
        const auto& entry = tensors.at(p->name);
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        if (shape != p->value.shape())
            throw SchemaError("checkpoint tensor " + p->name + " has shape " + shape_str(shape) + ", expected " +
                              shape_str(p->value.shape()));
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t nbytes = p->value.size() * elem;
        if (offset + nbytes > payload_len) throw ParseError("checkpoint payload overrun for " + p->name);
        if (f32) {
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                float v;
                std::memcpy(&v, payload + offset + i * 4, 4);
                p->value[i] = static_cast<double>(v);
            }
        } else {
            std::memcpy(p->value.data(), payload + offset, nbytes);
        }
    }
}

}  // namespace emkken::io
