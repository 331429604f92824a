#include "histoforge/metrics.hpp"

#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "histoforge/labels.hpp"

namespace histoforge {

using json = nlohmann::json;

long ConfusionMatrix::total() const {
    long sum = 0;
    for (const auto& row : counts)
        for (long v : row) sum += v;
    return sum;
}

long ConfusionMatrix::trace() const {
    long sum = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) sum += counts[i][i];
    return sum;
}

ConfusionMatrix confusion(const std::vector<int>& predictions, const std::vector<int>& labels,
                          int num_classes, std::vector<std::string> class_names) {
    if (predictions.size() != labels.size())
        throw std::invalid_argument("predictions and labels must have equal length");
    ConfusionMatrix cm;
    cm.counts.assign(num_classes, std::vector<long>(num_classes, 0));
    if (class_names.empty())
        for (int k = 0; k < num_classes; ++k)
            cm.class_names.push_back(k < kNumClasses ? std::string(kClassNames[k])
                                                     : "class" + std::to_string(k));
    else
        cm.class_names = std::move(class_names);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes || predictions[i] < 0 ||
            predictions[i] >= num_classes)
            throw std::out_of_range("class index out of range at position " + std::to_string(i));
        cm.counts[labels[i]][predictions[i]]++;
    }
    return cm;
}

ClassMetrics class_metrics(const ConfusionMatrix& cm, int k) {
    const int n = cm.num_classes();
    if (k < 0 || k >= n) throw std::out_of_range("class index out of range");
    long tp = cm.counts[k][k];
    long fn = 0, fp = 0;
    for (int j = 0; j < n; ++j) {
        if (j != k) {
            fn += cm.counts[k][j];
            fp += cm.counts[j][k];
        }
    }
    long total = cm.total();
    long tn = total - tp - fp - fn;

    ClassMetrics m;
    m.support = tp + fn;
    auto ratio = [&](long num, long den, const char* flag) {
        if (den == 0) {
            m.flags.push_back(flag);
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    m.precision = ratio(tp, tp + fp, "precision");
    m.recall = ratio(tp, tp + fn, "recall");
    m.f1 = (m.precision + m.recall) > 0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : (m.flags.push_back("f1"), 0.0);
    m.specificity = ratio(tn, tn + fp, "specificity");
    m.fpr = ratio(fp, fp + tn, "fpr");
    m.fnr = ratio(fn, fn + tp, "fnr");
    // lift = precision / prevalence
    if (total == 0 || tp + fn == 0) {
        m.flags.push_back("lift");
    } else {
        double prevalence = static_cast<double>(tp + fn) / static_cast<double>(total);
        m.lift = m.precision / prevalence;
    }
    return m;
}

EvaluationReport aggregate(const ConfusionMatrix& cm) {
    long total = cm.total();
    if (total == 0) throw std::invalid_argument("empty confusion matrix");
    EvaluationReport report;
    report.confusion = cm;
    report.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);

    const int n = cm.num_classes();
    double support_sum = 0;
    for (int k = 0; k < n; ++k) {
        ClassMetrics m = class_metrics(cm, k);
        report.macro.precision += m.precision / n;
        report.macro.recall += m.recall / n;
        report.macro.f1 += m.f1 / n;
        report.weighted.precision += m.precision * m.support;
        report.weighted.recall += m.recall * m.support;
        report.weighted.f1 += m.f1 * m.support;
        support_sum += static_cast<double>(m.support);
        report.per_class[cm.class_names[k]] = std::move(m);
    }
    report.weighted.precision /= support_sum;
    report.weighted.recall /= support_sum;
    report.weighted.f1 /= support_sum;
    return report;
}

namespace {
json metrics_json(const ClassMetrics& m) {
    return {{"precision", m.precision}, {"recall", m.recall},      {"f1", m.f1},
            {"specificity", m.specificity}, {"fpr", m.fpr},        {"fnr", m.fnr},
            {"lift", m.lift},           {"support", m.support},    {"flags", m.flags}};
}
}  // namespace

std::string report_to_json(const EvaluationReport& report) {
    json j;
    j["classes"] = report.confusion.class_names;
    j["confusion"] = report.confusion.counts;
    json per_class = json::object();
    for (const auto& [name, m] : report.per_class) per_class[name] = metrics_json(m);
    j["per_class"] = per_class;
    j["accuracy"] = report.accuracy;
    j["macro"] = {{"precision", report.macro.precision},
                  {"recall", report.macro.recall},
                  {"f1", report.macro.f1}};
    j["weighted"] = {{"precision", report.weighted.precision},
                     {"recall", report.weighted.recall},
                     {"f1", report.weighted.f1}};
    j["metadata"] = report.metadata;
    return j.dump(2);
}

void write_report_json(const EvaluationReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << report_to_json(report) << '\n';
}

std::string format_report_table(const EvaluationReport& report) {
    std::ostringstream out;
    out << "class                 prec   recall f1     spec   fpr    fnr    lift   support\n";
    for (const auto& [name, m] : report.per_class) {
        char line[256];
        std::snprintf(line, sizeof(line),
                      "%-21s %-6.2f %-6.2f %-6.2f %-6.2f %-6.2f %-6.2f %-6.2f %ld\n",
                      name.c_str(), m.precision, m.recall, m.f1, m.specificity, m.fpr, m.fnr,
                      m.lift, m.support);
        out << line;
    }
    char tail[256];
    std::snprintf(tail, sizeof(tail),
                  "accuracy %.4f | macro P/R/F1 %.4f/%.4f/%.4f | weighted P/R/F1 "
                  "%.4f/%.4f/%.4f\n",
                  report.accuracy, report.macro.precision, report.macro.recall, report.macro.f1,
                  report.weighted.precision, report.weighted.recall, report.weighted.f1);
    out << tail;
    return out.str();
}

}  // namespace histoforge
