#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace histoforge {

/// Container format for weights and features:
///   8-byte magic "HFWT0001"
///   4-byte little-endian header length
///   JSON header: tensor name -> {shape: [..], offset: int, dtype: "f32"},
///     plus an optional "__meta__" object for non-tensor settings
///   raw little-endian f32 payload; offsets are payload-relative and
///   64-byte aligned.
class TensorFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NamedTensor {
    std::vector<std::int64_t> shape;
    std::vector<float> values;

    std::size_t element_count() const;
};

class TensorFile {
public:
    std::map<std::string, NamedTensor> tensors;
    std::map<std::string, std::string> meta;  // flat string map under "__meta__"

    void add(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> values);

    const NamedTensor& require(const std::string& name) const;
    const NamedTensor& require(const std::string& name,
                               const std::vector<std::int64_t>& shape) const;

    /// Throws TensorFileError naming the offending tensor on truncation,
    /// bad magic, shape/size mismatch, or non-finite values.
    static TensorFile read(const std::filesystem::path& path);
    void write(const std::filesystem::path& path) const;
};

}  // namespace histoforge
