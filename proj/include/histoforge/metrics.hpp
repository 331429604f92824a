#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace histoforge {

struct ConfusionMatrix {
    std::vector<std::vector<long>> counts;  // rows = true class, cols = predicted
    std::vector<std::string> class_names;

    int num_classes() const { return static_cast<int>(counts.size()); }
    long total() const;
    long trace() const;
};

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& labels,
                          int num_classes, std::vector<std::string> class_names = {});

/// One-vs-rest per-class metrics. Zero-denominator cases yield 0 with the
/// metric name recorded in `flags` rather than an error.
struct ClassMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double specificity = 0;
    double fpr = 0;
    double fnr = 0;
    double lift = 0;
    long support = 0;
    std::vector<std::string> flags;
};

ClassMetrics class_metrics(const ConfusionMatrix& cm, int k);

struct Averages {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

struct EvaluationReport {
    ConfusionMatrix confusion;
    std::map<std::string, ClassMetrics> per_class;
    double accuracy = 0;
    Averages macro;
    Averages weighted;
    std::map<std::string, std::string> metadata;
};

/// Accuracy, per-class metrics, and macro (unweighted mean) / weighted
/// (support-weighted mean) aggregates. Throws when the matrix is empty.
EvaluationReport aggregate(const ConfusionMatrix& cm);

void write_report_json(const EvaluationReport& report, const std::filesystem::path& path);
std::string report_to_json(const EvaluationReport& report);
/// Human-readable per-class table.
std::string format_report_table(const EvaluationReport& report);

}  // namespace histoforge
