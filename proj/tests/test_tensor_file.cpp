#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "histoforge/tensor_file.hpp"

using namespace histoforge;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
    fs::path dir = fs::temp_directory_path() / "hf_tensor_file_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TensorFile sample_file() {
    TensorFile f;
    f.add("alpha", {2, 3}, {1.0f, -2.5f, 3.25f, 0.0f, 1e-30f, 6.5f});
    f.add("beta.bias", {4}, {0.1f, 0.2f, 0.3f, 0.4f});
    f.meta = {{"purpose", "test"}, {"dim", "3"}};
    return f;
}

}  // namespace

TEST_CASE("write then read reproduces tensors bit-exactly plus meta") {
    fs::path p = temp_file("roundtrip.hfwt");
    TensorFile f = sample_file();
    f.write(p);
    TensorFile g = TensorFile::read(p);
    REQUIRE(g.tensors.size() == 2);
    for (const auto& [name, t] : f.tensors) {
        const NamedTensor& u = g.tensors.at(name);
        CHECK(u.shape == t.shape);
        REQUIRE(u.values.size() == t.values.size());
        for (std::size_t i = 0; i < t.values.size(); ++i)
            CHECK(std::memcmp(&u.values[i], &t.values[i], sizeof(float)) == 0);
    }
    CHECK(g.meta == f.meta);
}

TEST_CASE("container writes are byte-stable across reruns") {
    fs::path p1 = temp_file("stable1.hfwt");
    fs::path p2 = temp_file("stable2.hfwt");
    sample_file().write(p1);
    sample_file().write(p2);
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("file layout: magic, aligned offsets") {
    fs::path p = temp_file("layout.hfwt");
    sample_file().write(p);
    std::vector<char> bytes = slurp(p);
    REQUIRE(bytes.size() > 12);
    CHECK(std::memcmp(bytes.data(), "HFWT0001", 8) == 0);
    std::uint32_t header_len;
    std::memcpy(&header_len, bytes.data() + 8, 4);
    std::string header(bytes.data() + 12, bytes.data() + 12 + header_len);
    CHECK(header.find("\"alpha\"") != std::string::npos);
    CHECK(header.find("__meta__") != std::string::npos);
}

TEST_CASE("add rejects shape/value mismatch, require names the tensor") {
    TensorFile f;
    CHECK_THROWS_AS(f.add("bad", {2, 2}, {1.0f}), TensorFileError);
    f.add("ok", {2}, {1.0f, 2.0f});
    CHECK_THROWS_WITH_AS(f.require("ghost"), doctest::Contains("ghost"), TensorFileError);
    CHECK_THROWS_WITH_AS(f.require("ok", {3}), doctest::Contains("ok"), TensorFileError);
    CHECK(f.require("ok", {2}).values[1] == 2.0f);
}

TEST_CASE("bad magic is rejected") {
    fs::path p = temp_file("badmagic.hfwt");
    sample_file().write(p);
    std::vector<char> bytes = slurp(p);
    bytes[0] = 'X';
    dump(p, bytes);
    CHECK_THROWS_WITH_AS(TensorFile::read(p), doctest::Contains("magic"), TensorFileError);
}

TEST_CASE("truncated payload is rejected naming the tensor") {
    fs::path p = temp_file("trunc.hfwt");
    sample_file().write(p);
    std::vector<char> bytes = slurp(p);
    bytes.resize(bytes.size() - 8);
    dump(p, bytes);
    CHECK_THROWS_AS(TensorFile::read(p), TensorFileError);
}

TEST_CASE("truncated header is rejected") {
    fs::path p = temp_file("trunchdr.hfwt");
    sample_file().write(p);
    std::vector<char> bytes = slurp(p);
    bytes.resize(20);
    dump(p, bytes);
    CHECK_THROWS_WITH_AS(TensorFile::read(p), doctest::Contains("header"), TensorFileError);
}

TEST_CASE("NaN and infinity in the payload are rejected naming the tensor") {
    fs::path p = temp_file("nan.hfwt");
    TensorFile f;
    f.add("weights.w1", {2}, {1.0f, 2.0f});
    f.write(p);
    std::vector<char> bytes = slurp(p);
    float nan = std::nanf("");
    std::memcpy(bytes.data() + bytes.size() - 4, &nan, 4);
    dump(p, bytes);
    CHECK_THROWS_WITH_AS(TensorFile::read(p), doctest::Contains("weights.w1"), TensorFileError);

    f.tensors.clear();
    f.add("weights.w1", {2}, {1.0f, 2.0f});
    f.write(p);
    bytes = slurp(p);
    float inf = std::numeric_limits<float>::infinity();
    std::memcpy(bytes.data() + bytes.size() - 8, &inf, 4);
    dump(p, bytes);
    CHECK_THROWS_WITH_AS(TensorFile::read(p), doctest::Contains("weights.w1"), TensorFileError);
}

TEST_CASE("empty container and missing file") {
    fs::path p = temp_file("empty.hfwt");
    TensorFile f;
    f.write(p);
    TensorFile g = TensorFile::read(p);
    CHECK(g.tensors.empty());
    CHECK_THROWS_AS(TensorFile::read(temp_file("does_not_exist.hfwt")), TensorFileError);
}
