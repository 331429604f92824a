#include "histoforge/tensor_file.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace histoforge {

using json = nlohmann::json;

namespace {
constexpr char kMagic[8] = {'H', 'F', 'W', 'T', '0', '0', '0', '1'};
constexpr std::size_t kAlign = 64;

std::size_t aligned(std::size_t offset) { return (offset + kAlign - 1) / kAlign * kAlign; }
}  // namespace

std::size_t NamedTensor::element_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

void TensorFile::add(const std::string& name, std::vector<std::int64_t> shape,
                     std::vector<float> values) {
    NamedTensor t{std::move(shape), std::move(values)};
    if (t.element_count() != t.values.size())
        throw TensorFileError("tensor " + name + ": shape does not match value count");
    tensors[name] = std::move(t);
}

const NamedTensor& TensorFile::require(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw TensorFileError("missing tensor: " + name);
    return it->second;
}

const NamedTensor& TensorFile::require(const std::string& name,
                                       const std::vector<std::int64_t>& shape) const {
    const NamedTensor& t = require(name);
    if (t.shape != shape) {
        auto fmt = [](const std::vector<std::int64_t>& s) {
            std::string out = "[";
            for (std::size_t i = 0; i < s.size(); ++i)
                out += (i ? "," : "") + std::to_string(s[i]);
            return out + "]";
        };
        throw TensorFileError("tensor " + name + ": expected shape " + fmt(shape) + ", got " +
                              fmt(t.shape));
    }
    return t;
}

void TensorFile::write(const std::filesystem::path& path) const {
    json header = json::object();
    std::size_t offset = 0;
    for (const auto& [name, tensor] : tensors) {
        offset = aligned(offset);
        header[name] = {{"shape", tensor.shape}, {"offset", offset}, {"dtype", "f32"}};
        offset += tensor.values.size() * sizeof(float);
    }
    if (!meta.empty()) header["__meta__"] = meta;
    std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw TensorFileError("cannot open for writing: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    std::uint32_t len = static_cast<std::uint32_t>(header_text.size());
    char len_bytes[4];
    for (int i = 0; i < 4; ++i) len_bytes[i] = static_cast<char>((len >> (8 * i)) & 0xff);
    out.write(len_bytes, 4);
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

    std::size_t written = 0;
    for (const auto& [name, tensor] : tensors) {
        std::size_t pad = aligned(written) - written;
        for (std::size_t i = 0; i < pad; ++i) out.put('\0');
        written += pad;
        out.write(reinterpret_cast<const char*>(tensor.values.data()),
                  static_cast<std::streamsize>(tensor.values.size() * sizeof(float)));
        written += tensor.values.size() * sizeof(float);
    }
    if (!out) throw TensorFileError("write failed: " + path.string());
}

TensorFile TensorFile::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TensorFileError("cannot open: " + path.string());
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw TensorFileError("bad magic in " + path.string());
    unsigned char len_bytes[4];
    if (!in.read(reinterpret_cast<char*>(len_bytes), 4))
        throw TensorFileError("truncated header length in " + path.string());
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(len_bytes[i]) << (8 * i);
    std::string header_text(len, '\0');
    if (!in.read(header_text.data(), len))
        throw TensorFileError("truncated header in " + path.string());

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw TensorFileError("invalid JSON header in " + path.string() + ": " + e.what());
    }

    std::vector<char> payload((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());

    TensorFile file;
    for (const auto& [name, entry] : header.items()) {
        if (name == "__meta__") {
            for (const auto& [k, v] : entry.items()) file.meta[k] = v.get<std::string>();
            continue;
        }
        if (!entry.is_object() || !entry.contains("shape") || !entry.contains("offset") ||
            !entry.contains("dtype"))
            throw TensorFileError("tensor " + name + ": malformed header entry");
        if (entry.at("dtype").get<std::string>() != "f32")
            throw TensorFileError("tensor " + name + ": unsupported dtype " +
                                  entry.at("dtype").get<std::string>());
        NamedTensor tensor;
        tensor.shape = entry.at("shape").get<std::vector<std::int64_t>>();
        for (auto d : tensor.shape)
            if (d <= 0) throw TensorFileError("tensor " + name + ": non-positive dimension");
        std::size_t offset = entry.at("offset").get<std::size_t>();
        std::size_t bytes = tensor.element_count() * sizeof(float);
        if (offset % kAlign != 0)
            throw TensorFileError("tensor " + name + ": offset not 64-byte aligned");
        if (offset + bytes > payload.size())
            throw TensorFileError("tensor " + name + ": payload truncated");
        tensor.values.resize(tensor.element_count());
        std::memcpy(tensor.values.data(), payload.data() + offset, bytes);
        for (std::size_t i = 0; i < tensor.values.size(); ++i)
            if (!std::isfinite(tensor.values[i]))
                throw TensorFileError("tensor " + name + ": non-finite value at index " +
                                      std::to_string(i));
        file.tensors[name] = std::move(tensor);
    }
    return file;
}

}  // namespace histoforge
