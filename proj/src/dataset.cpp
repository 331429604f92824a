#include "histoforge/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "histoforge/image.hpp"
#include "histoforge/rng.hpp"

namespace histoforge {

namespace fs = std::filesystem;

std::map<ClassLabel, int> DatasetManifest::class_counts() const {
    std::map<ClassLabel, int> counts;
    for (const auto& rec : records) counts[rec.class_label]++;
    return counts;
}

const SampleRecord* DatasetManifest::find(const std::string& sample_id) const {
    for (const auto& rec : records)
        if (rec.sample_id == sample_id) return &rec;
    return nullptr;
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    return "";
}

namespace {

const std::set<std::string> kImageExtensions = {".png", ".jpg", ".jpeg", ".tif",
                                                ".tiff", ".bmp"};

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

/// BreakHis trees carry the magnification either as a folder ("40X") or in
/// the file code ("...-40-001.png").
bool matches_magnification(const std::string& rel_path, int magnification) {
    std::string p = lower(rel_path);
    std::string folder = std::to_string(magnification) + "x";
    std::istringstream segs(p);
    std::string seg;
    while (std::getline(segs, seg, '/'))
        if (seg == folder) return true;
    return p.find("-" + std::to_string(magnification) + "-") != std::string::npos;
}

std::string make_sample_id(const std::string& rel_path) {
    std::string id = rel_path;
    if (auto dot = id.rfind('.'); dot != std::string::npos) id.resize(dot);
    std::replace(id.begin(), id.end(), '/', '_');
    std::replace(id.begin(), id.end(), '\\', '_');
    return id;
}

}  // namespace

DatasetManifest scan_dataset(const fs::path& root, int magnification) {
    if (magnification != 40 && magnification != 100 && magnification != 200 &&
        magnification != 400)
        throw std::invalid_argument("magnification must be one of 40/100/200/400, got " +
                                    std::to_string(magnification));
    if (!fs::exists(root)) throw std::runtime_error("dataset root does not exist: " + root.string());

    DatasetManifest manifest;
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        if (kImageExtensions.count(lower(entry.path().extension().string())))
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::set<std::string> seen_ids;
    for (const auto& file : files) {
        std::string rel = fs::relative(file, root).generic_string();
        if (!matches_magnification(rel, magnification)) continue;
        auto label = class_from_path(rel);
        if (!label) {
            manifest.warnings.push_back("class not derivable from path, skipped: " + rel);
            continue;
        }
        if (!is_readable_image(file)) {
            manifest.warnings.push_back("unreadable image, skipped: " + rel);
            continue;
        }
        std::string id = make_sample_id(rel);
        if (!seen_ids.insert(id).second)
            throw std::runtime_error("duplicate sample_id: " + id);
        manifest.records.push_back({id, file.generic_string(), *label, magnification});
    }
    return manifest;
}

SplitManifest stratified_split(const DatasetManifest& manifest, std::uint64_t seed) {
    std::map<ClassLabel, std::vector<std::string>> by_class;
    for (const auto& rec : manifest.records) by_class[rec.class_label].push_back(rec.sample_id);

    for (const auto& [label, ids] : by_class)
        if (ids.size() < 3)
            throw std::runtime_error("class " + std::string(to_string(label)) + " has only " +
                                     std::to_string(ids.size()) + " samples; need at least 3");

    SplitManifest split;
    split.seed = seed;
    RngStream base(seed);
    for (auto& [label, ids] : by_class) {
        std::sort(ids.begin(), ids.end());
        RngStream stream = base.derive("split").derive(to_string(label));
        stream.shuffle(ids);
        long n = static_cast<long>(ids.size());
        long n_test = static_cast<long>(std::floor(0.20 * n + 0.5));
        long n_val = std::max<long>(1, static_cast<long>(std::floor(0.20 * (n - n_test))));
        for (long i = 0; i < n; ++i) {
            if (i < n_test)
                split.test.push_back(ids[i]);
            else if (i < n_test + n_val)
                split.validation.push_back(ids[i]);
            else
                split.train.push_back(ids[i]);
        }
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

namespace {

void write_rows(std::ostream& out, const DatasetManifest& manifest,
                const std::map<std::string, Split>* assignment) {
    out << "sample_id,path,class,magnification,split\n";
    for (const auto& rec : manifest.records) {
        out << rec.sample_id << ',' << rec.path << ',' << to_string(rec.class_label) << ','
            << rec.magnification << ',';
        if (assignment) out << to_string(assignment->at(rec.sample_id));
        out << '\n';
    }
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::istringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

}  // namespace

void write_manifest_csv(const DatasetManifest& manifest, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    write_rows(out, manifest, nullptr);
}

DatasetManifest read_manifest_csv(const fs::path& path) {
    return read_split_csv(path).manifest;
}

void write_split_csv(const DatasetManifest& manifest, const SplitManifest& split,
                     const fs::path& path) {
    std::map<std::string, Split> assignment;
    for (const auto& id : split.train) assignment[id] = Split::Train;
    for (const auto& id : split.validation) assignment[id] = Split::Validation;
    for (const auto& id : split.test) assignment[id] = Split::Test;
    if (assignment.size() != manifest.records.size())
        throw std::runtime_error("split does not cover the manifest exactly");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    write_rows(out, manifest, &assignment);
}

SplitTable read_split_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    SplitTable table;
    std::string line;
    if (!std::getline(in, line) || split_line(line).size() != 5)
        throw std::runtime_error("bad CSV header in " + path.string());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto fields = split_line(line);
        if (fields.size() != 5)
            throw std::runtime_error("bad CSV row in " + path.string() + ": " + line);
        auto label = parse_class_label(fields[2]);
        if (!label) throw std::runtime_error("unknown class in CSV: " + fields[2]);
        table.manifest.records.push_back(
            {fields[0], fields[1], *label, std::stoi(fields[3])});
        if (fields[4] == "train")
            table.assignment[fields[0]] = Split::Train;
        else if (fields[4] == "validation")
            table.assignment[fields[0]] = Split::Validation;
        else if (fields[4] == "test")
            table.assignment[fields[0]] = Split::Test;
        else if (!fields[4].empty())
            throw std::runtime_error("unknown split value: " + fields[4]);
    }
    return table;
}

}  // namespace histoforge
