#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "histoforge/labels.hpp"

namespace histoforge {

struct SampleRecord {
    std::string sample_id;
    std::string path;
    ClassLabel class_label;
    int magnification;

    bool operator==(const SampleRecord&) const = default;
};

struct DatasetManifest {
    std::vector<SampleRecord> records;
    std::vector<std::string> warnings;

    std::map<ClassLabel, int> class_counts() const;
    const SampleRecord* find(const std::string& sample_id) const;
};

enum class Split { Train, Validation, Test };

std::string_view to_string(Split split);

struct SplitManifest {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
    // train/val/test fractions; fixed 0.64/0.16/0.20 by construction.
    double train_frac = 0.64;
    double val_frac = 0.16;
    double test_frac = 0.20;
};

/// Walk `root` and collect one record per readable image at the requested
/// magnification. Ordering is lexicographic by path regardless of traversal
/// order. Files whose class or magnification cannot be derived, and files
/// that fail to decode, are skipped with a warning.
DatasetManifest scan_dataset(const std::filesystem::path& root, int magnification);

/// Per-class stratified split. Test takes round-half-up(0.20 n); validation
/// takes max(1, floor(0.20 (n - test))); the remainder trains. Shuffling is
/// driven only by `seed`, so identical inputs give identical splits.
/// Throws if any class has fewer than 3 samples.
SplitManifest stratified_split(const DatasetManifest& manifest, std::uint64_t seed);

// CSV persistence. Manifest format: `sample_id,path,class,magnification,split`
// with split left empty until a SplitManifest is merged in.
void write_manifest_csv(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest_csv(const std::filesystem::path& path);

void write_split_csv(const DatasetManifest& manifest, const SplitManifest& split,
                     const std::filesystem::path& path);
/// Reads a split CSV back into manifest + per-sample split assignment.
struct SplitTable {
    DatasetManifest manifest;
    std::map<std::string, Split> assignment;
};
SplitTable read_split_csv(const std::filesystem::path& path);

}  // namespace histoforge
