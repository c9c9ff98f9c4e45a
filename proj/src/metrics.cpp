#include "merc/metrics.hpp"

#include <cmath>
#include <sstream>

#include "merc/params.hpp"

namespace merc {

double population_std(const std::vector<double>& values) {
    if (values.empty()) throw MetricsError("population_std of empty list");
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size()));
}

Metrics compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred, int n_classes) {
    if (y_true.empty()) throw MetricsError("no samples");
    if (y_true.size() != y_pred.size())
        throw MetricsError("length mismatch: " + std::to_string(y_true.size()) + " vs " +
                           std::to_string(y_pred.size()));
    Metrics m;
    m.total = static_cast<long>(y_true.size());
    m.confusion.assign(n_classes, std::vector<long>(n_classes, 0));
    for (size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] < 0 || y_true[i] >= n_classes || y_pred[i] < 0 || y_pred[i] >= n_classes)
            throw MetricsError("class id out of range at sample " + std::to_string(i));
        m.confusion[y_true[i]][y_pred[i]]++;
    }
    long correct = 0;
    for (int c = 0; c < n_classes; ++c) correct += m.confusion[c][c];
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);

    m.per_class.resize(n_classes);
    double weighted_f1_sum = 0;
    long support_sum = 0;
    std::vector<double> f1_present;
    for (int c = 0; c < n_classes; ++c) {
        long tp = m.confusion[c][c], fp = 0, fn = 0;
        for (int o = 0; o < n_classes; ++o) {
            if (o == c) continue;
            fp += m.confusion[o][c];
            fn += m.confusion[c][o];
        }
        ClassMetrics& cm = m.per_class[c];
        cm.support = tp + fn;
        cm.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        cm.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        cm.f1 = (cm.precision + cm.recall > 0) ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
        weighted_f1_sum += static_cast<double>(cm.support) * cm.f1;
        support_sum += cm.support;
        if (cm.support > 0) f1_present.push_back(cm.f1 * 100.0);
    }
    m.weighted_f1 = weighted_f1_sum / static_cast<double>(support_sum);
    m.class_score_std = f1_present.empty() ? 0.0 : population_std(f1_present);
    return m;
}

std::string metrics_report_json(const Metrics& m, const std::vector<std::string>& labels) {
    std::ostringstream os;
    os << "{\n";
    os << "  \"accuracy\": " << format_g17(m.accuracy) << ",\n";
    os << "  \"weighted_f1\": " << format_g17(m.weighted_f1) << ",\n";
    os << "  \"labels\": [";
    for (size_t i = 0; i < labels.size(); ++i) os << (i ? ", " : "") << '"' << labels[i] << '"';
    os << "],\n";
    os << "  \"per_class\": {";
    for (size_t c = 0; c < m.per_class.size(); ++c) {
        const auto& cm = m.per_class[c];
        os << (c ? ",\n    " : "\n    ");
        os << '"' << (c < labels.size() ? labels[c] : std::to_string(c)) << "\": {\"precision\": "
           << format_g17(cm.precision) << ", \"recall\": " << format_g17(cm.recall)
           << ", \"f1\": " << format_g17(cm.f1) << ", \"support\": " << cm.support << '}';
    }
    os << "\n  },\n";
    os << "  \"confusion\": [";
    for (size_t r = 0; r < m.confusion.size(); ++r) {
        os << (r ? ", " : "") << '[';
        for (size_t c = 0; c < m.confusion[r].size(); ++c) os << (c ? ", " : "") << m.confusion[r][c];
        os << ']';
    }
    os << "],\n";
    os << "  \"class_score_std\": " << format_g17(m.class_score_std) << ",\n";
    os << "  \"total\": " << m.total << "\n";
    os << "}\n";
    return os.str();
}

}  // namespace merc
