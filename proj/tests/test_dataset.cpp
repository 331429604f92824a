#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "histoforge/dataset.hpp"
#include "histoforge/image.hpp"

using namespace histoforge;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
    fs::path dir = fs::temp_directory_path() / "hf_dataset_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_tiny_png(const fs::path& p, std::uint8_t shade = 128) {
    fs::create_directories(p.parent_path());
    ImageTensor img(4, 4, shade);
    save_png(img, p);
}

// In-memory manifest with `n` samples of one class; no files needed for
// split logic tests.
DatasetManifest synthetic_manifest(const std::vector<std::pair<ClassLabel, int>>& classes) {
    DatasetManifest m;
    for (auto [label, n] : classes)
        for (int i = 0; i < n; ++i) {
            SampleRecord r;
            r.sample_id = std::string(to_string(label)) + "_" + std::to_string(i);
            r.path = "/none/" + r.sample_id + ".png";
            r.class_label = label;
            r.magnification = 40;
            m.records.push_back(r);
        }
    return m;
}

struct SplitSizes {
    int train, val, test;
};

SplitSizes sizes_for_class(const SplitManifest& s, const DatasetManifest& m, ClassLabel label) {
    SplitSizes out{0, 0, 0};
    auto count = [&](const std::vector<std::string>& ids, int SplitSizes::*field) {
        for (const auto& id : ids)
            if (m.find(id) && m.find(id)->class_label == label) ++(out.*field);
    };
    count(s.train, &SplitSizes::train);
    count(s.validation, &SplitSizes::val);
    count(s.test, &SplitSizes::test);
    return out;
}

}  // namespace

TEST_CASE("scan_dataset walks a BreakHis-style tree and infers labels") {
    fs::path root = fresh_dir("scan");
    write_tiny_png(root / "benign" / "SOB" / "adenosis" / "case1" / "40x" / "SOB_B_A-14-22549AB-40-001.png");
    write_tiny_png(root / "benign" / "SOB" / "fibroadenoma" / "case2" / "40x" / "SOB_B_F-14-21998AB-40-005.png");
    write_tiny_png(root / "malignant" / "SOB" / "ductal_carcinooma" / "case3" / "40x" / "SOB_M_DC-14-2523-40-010.png");
    write_tiny_png(root / "malignant" / "SOB" / "lobular_carcinoma" / "case4" / "40x" / "SOB_M_LC-14-12204-40-020.png");
    write_tiny_png(root / "malignant" / "SOB" / "mucinous_carcinoma" / "case5" / "40x" / "SOB_M_MC-14-10926-40-004.png");
    write_tiny_png(root / "malignant" / "SOB" / "papillary_carcinoma" / "case6" / "40x" / "SOB_M_PC-14-9146-40-007.png");
    // Other magnification: skipped silently (not at 40x).
    write_tiny_png(root / "malignant" / "SOB" / "ductal_carcinoma" / "case3" / "100x" / "SOB_M_DC-14-2523-100-010.png");

    DatasetManifest m = scan_dataset(root, 40);
    CHECK(m.records.size() == 6);
    auto counts = m.class_counts();
    CHECK(counts[ClassLabel::Benign] == 2);
    CHECK(counts[ClassLabel::DuctalCarcinoma] == 1);
    CHECK(counts[ClassLabel::PapillaryCarcinoma] == 1);
    // Lexicographic path order regardless of directory traversal order.
    for (std::size_t i = 1; i < m.records.size(); ++i)
        CHECK(m.records[i - 1].path < m.records[i].path);
    for (const auto& r : m.records) CHECK(r.magnification == 40);
    // sample_id is unique and filesystem-safe.
    std::set<std::string> ids;
    for (const auto& r : m.records) ids.insert(r.sample_id);
    CHECK(ids.size() == 6);
    for (const auto& id : ids) CHECK(id.find('/') == std::string::npos);
}

TEST_CASE("unreadable and unclassifiable files produce warnings, not records") {
    fs::path root = fresh_dir("warn");
    write_tiny_png(root / "benign" / "40x" / "ok-40-001.png");
    {
        std::ofstream bad(root / "benign" / "40x" / "corrupt-40-002.png");
        bad << "not a png";
    }
    write_tiny_png(root / "mystery" / "40x" / "unlabeled-40-003.png");

    DatasetManifest m = scan_dataset(root, 40);
    CHECK(m.records.size() == 1);
    CHECK(m.warnings.size() == 2);
}

TEST_CASE("split sizing reproduces the published per-class train counts") {
    // Full-corpus class sizes at 40x and their expected train/val/test split.
    struct Row {
        ClassLabel label;
        int n, train, val, test;
    };
    const std::vector<Row> rows = {
        {ClassLabel::Benign, 625, 400, 100, 125},
        {ClassLabel::DuctalCarcinoma, 864, 553, 138, 173},
        {ClassLabel::LobularCarcinoma, 156, 100, 25, 31},
        {ClassLabel::MucinousCarcinoma, 205, 132, 32, 41},
        {ClassLabel::PapillaryCarcinoma, 145, 93, 23, 29},
    };
    std::vector<std::pair<ClassLabel, int>> sizes;
    for (const auto& r : rows) sizes.emplace_back(r.label, r.n);
    DatasetManifest m = synthetic_manifest(sizes);
    SplitManifest s = stratified_split(m, 1234);
    for (const auto& r : rows) {
        SplitSizes got = sizes_for_class(s, m, r.label);
        CHECK(got.train == r.train);
        CHECK(got.val == r.val);
        CHECK(got.test == r.test);
    }
    CHECK(s.train.size() + s.validation.size() + s.test.size() == m.records.size());
}

TEST_CASE("tiny classes keep at least one validation sample") {
    DatasetManifest m = synthetic_manifest({{ClassLabel::Benign, 5},
                                            {ClassLabel::DuctalCarcinoma, 3},
                                            {ClassLabel::LobularCarcinoma, 4},
                                            {ClassLabel::MucinousCarcinoma, 10},
                                            {ClassLabel::PapillaryCarcinoma, 10}});
    SplitManifest s = stratified_split(m, 7);
    SplitSizes five = sizes_for_class(s, m, ClassLabel::Benign);
    CHECK(five.test == 1);   // round-half-up(1.0)
    CHECK(five.val == 1);    // floor-based but floored at 1
    CHECK(five.train == 3);
    SplitSizes three = sizes_for_class(s, m, ClassLabel::DuctalCarcinoma);
    CHECK(three.test == 1);
    CHECK(three.val == 1);
    CHECK(three.train == 1);
}

TEST_CASE("classes below 3 samples are rejected naming the class") {
    DatasetManifest m = synthetic_manifest({{ClassLabel::Benign, 2},
                                            {ClassLabel::DuctalCarcinoma, 10}});
    CHECK_THROWS_WITH_AS(stratified_split(m, 0), doctest::Contains("Benign"),
                         std::runtime_error);
}

TEST_CASE("splits are disjoint, exhaustive and seed-deterministic") {
    DatasetManifest m = synthetic_manifest({{ClassLabel::Benign, 37},
                                            {ClassLabel::DuctalCarcinoma, 21},
                                            {ClassLabel::LobularCarcinoma, 13},
                                            {ClassLabel::MucinousCarcinoma, 8},
                                            {ClassLabel::PapillaryCarcinoma, 5}});
    SplitManifest first = stratified_split(m, 99);
    for (int rerun = 0; rerun < 100; ++rerun) {
        SplitManifest s = stratified_split(m, 99);
        CHECK(s.train == first.train);
        CHECK(s.validation == first.validation);
        CHECK(s.test == first.test);
    }
    std::set<std::string> all;
    for (const auto& id : first.train) all.insert(id);
    for (const auto& id : first.validation) all.insert(id);
    for (const auto& id : first.test) all.insert(id);
    CHECK(all.size() == m.records.size());  // disjoint and exhaustive

    SplitManifest other = stratified_split(m, 100);
    CHECK(other.train != first.train);  // the seed actually matters
}

TEST_CASE("manifest and split CSVs round-trip") {
    fs::path dir = fresh_dir("csv");
    DatasetManifest m = synthetic_manifest({{ClassLabel::Benign, 6},
                                            {ClassLabel::MucinousCarcinoma, 4}});
    write_manifest_csv(m, dir / "manifest.csv");
    DatasetManifest back = read_manifest_csv(dir / "manifest.csv");
    REQUIRE(back.records.size() == m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) CHECK(back.records[i] == m.records[i]);

    SplitManifest s = stratified_split(m, 3);
    write_split_csv(m, s, dir / "splits.csv");
    SplitTable table = read_split_csv(dir / "splits.csv");
    CHECK(table.manifest.records.size() == m.records.size());
    CHECK(table.assignment.size() == m.records.size());
    int train_n = 0;
    for (const auto& [id, split] : table.assignment)
        if (split == Split::Train) ++train_n;
    CHECK(train_n == static_cast<int>(s.train.size()));

    // Header line is the documented schema.
    std::ifstream in(dir / "splits.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "sample_id,path,class,magnification,split");
}
