#pragma once

#include <string>
#include <vector>

#include "merc/common.hpp"

namespace merc {

struct ClassMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    long support = 0;
};

struct Metrics {
    double accuracy = 0;
    double weighted_f1 = 0;
    std::vector<ClassMetrics> per_class;        // indexed by class id
    std::vector<std::vector<long>> confusion;   // rows = actual, cols = predicted
    double class_score_std = 0;                 // population std of per-class f1, percent scale
    long total = 0;
};

/// Population (divide-by-n) standard deviation.
double population_std(const std::vector<double>& values);

/// Weighted metrics over integer class ids in [0, n_classes). Per-class f1
/// is 0 where precision+recall is 0; class_score_std covers classes with
/// nonzero support.
Metrics compute_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred, int n_classes);

/// Deterministic report text (fixed key order, 17-significant-digit reals).
std::string metrics_report_json(const Metrics& m, const std::vector<std::string>& labels);

}  // namespace merc
