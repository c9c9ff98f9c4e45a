#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "json.hpp"
#include "merc/metrics.hpp"
#include "merc/rng.hpp"

using namespace merc;

TEST_CASE("hand-derived example: weighted F1 and accuracy of 2/3") {
    Metrics m = compute_metrics({0, 0, 1}, {0, 1, 1}, 2);
    // class 0: tp=1 fp=0 fn=1 -> p=1, r=1/2, f1=2/3; class 1: tp=1 fp=1 fn=0 -> p=1/2, r=1, f1=2/3
    CHECK(m.per_class[0].f1 == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(m.per_class[1].f1 == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(m.weighted_f1 == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(m.accuracy == doctest::Approx(2.0 / 3).epsilon(1e-15));
    CHECK(m.per_class[0].support == 2);
    CHECK(m.per_class[1].support == 1);
}

TEST_CASE("perfect predictions") {
    Metrics m = compute_metrics({0, 1, 2, 2, 1}, {0, 1, 2, 2, 1}, 3);
    CHECK(m.accuracy == 1.0);
    CHECK(m.weighted_f1 == 1.0);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(m.confusion[r][c] == (r == c ? (r == 0 ? 1 : 2) : 0));
    CHECK(m.class_score_std == 0.0);
}

TEST_CASE("population std reproduces the published per-class spread") {
    // per-class scores of the strongest model row; the reported spread is
    // population-normalized
    const std::vector<double> row = {68.90, 78.12, 66.48, 58.33, 79.66, 62.01};
    const double sd = population_std(row);
    CHECK(std::fabs(sd - 7.83) <= 0.1);
    // sample (n-1) normalization does NOT reproduce it
    double mean = 0;
    for (double v : row) mean += v;
    mean /= row.size();
    double ss = 0;
    for (double v : row) ss += (v - mean) * (v - mean);
    CHECK(std::fabs(std::sqrt(ss / (row.size() - 1)) - 7.83) > 0.1);
}

TEST_CASE("metrics identities on random predictions") {
    RngStream rng(RngPurpose::datagen, 55);
    const int n_classes = 5;
    std::vector<int> y_true, y_pred;
    for (int i = 0; i < 500; ++i) {
        y_true.push_back(static_cast<int>(rng.uniform_int(n_classes)));
        y_pred.push_back(static_cast<int>(rng.uniform_int(n_classes)));
    }
    Metrics m = compute_metrics(y_true, y_pred, n_classes);

    long total = 0;
    double weighted_recall = 0;
    for (int c = 0; c < n_classes; ++c) {
        long row_sum = 0;
        for (int o = 0; o < n_classes; ++o) row_sum += m.confusion[c][o];
        CHECK(row_sum == m.per_class[c].support);
        total += row_sum;
        weighted_recall += m.per_class[c].recall * m.per_class[c].support;
    }
    CHECK(total == m.total);
    CHECK(m.accuracy == doctest::Approx(weighted_recall / total).epsilon(1e-12));
}

TEST_CASE("degenerate inputs raise metrics errors") {
    CHECK_THROWS_AS(compute_metrics({}, {}, 3), MetricsError);
    CHECK_THROWS_AS(compute_metrics({0, 1}, {0}, 3), MetricsError);
    CHECK_THROWS_AS(compute_metrics({0, 3}, {0, 1}, 3), MetricsError);
}

TEST_CASE("report text is deterministic, valid JSON, and carries the named fields") {
    Metrics m = compute_metrics({0, 0, 1, 2}, {0, 1, 1, 2}, 3);
    const std::vector<std::string> labels = {"a", "b", "c"};
    const std::string text = metrics_report_json(m, labels);
    CHECK(text == metrics_report_json(m, labels));

    auto j = nlohmann::json::parse(text);
    CHECK(j.at("accuracy").get<double>() == m.accuracy);
    CHECK(j.at("weighted_f1").get<double>() == m.weighted_f1);
    CHECK(j.at("class_score_std").get<double>() == m.class_score_std);
    CHECK(j.at("total").get<long>() == 4);
    CHECK(j.at("per_class").at("a").at("support").get<long>() == 2);
    CHECK(j.at("per_class").at("b").at("precision").get<double>() == m.per_class[1].precision);
    CHECK(j.at("confusion").size() == 3);
    CHECK(j.at("confusion")[0][1].get<long>() == 1);
}
