#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <vector>

#include <graphscore/error.hpp>
#include <graphscore/metrics.hpp>
#include <graphscore/rng.hpp>

using namespace graphscore;

namespace {

CostFields uniform_fields(std::size_t n, double cl, double r, double lgd = 0.75, double fp = 5.0) {
    CostFields f;
    f.credit_line.assign(n, cl);
    f.profit.assign(n, r);
    f.loss_given_default = lgd;
    f.alt_fp_cost = fp;
    return f;
}

// Cost-minimizing threshold by trying every candidate, highest wins ties.
std::pair<double, double> brute_min_cost(const std::vector<double>& scores,
                                         const std::vector<std::int8_t>& labels,
                                         const CostFields& fields) {
    std::set<double> candidates(scores.begin(), scores.end());
    candidates.insert(std::nextafter(*candidates.rbegin(), std::numeric_limits<double>::infinity()));
    double best_cost = std::numeric_limits<double>::infinity();
    double best_threshold = 0.0;
    for (double t : candidates) {
        std::vector<std::int8_t> hard(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) hard[i] = scores[i] >= t ? 1 : 0;
        const double c = total_cost(hard, labels, fields);
        if (c < best_cost || (c == best_cost && t > best_threshold)) {
            best_cost = c;
            best_threshold = t;
        }
    }
    return {best_cost, best_threshold};
}

} // namespace

TEST_CASE("auc matches pair counting by hand") {
    CHECK(auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
    CHECK(auc({0.9, 0.1, 0.8, 0.2}, {1, 0, 1, 0}) == doctest::Approx(1.0));
    CHECK(auc({0.1, 0.9, 0.2, 0.8}, {1, 0, 1, 0}) == doctest::Approx(0.0));
    CHECK(auc({0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0}) == doctest::Approx(0.5));
}

TEST_CASE("auc handles ties with midranks") {
    // positive pair wins: 0.5 vs 0.2 and 0.8 vs both; tie 0.5 vs 0.5 counts half
    CHECK(auc({0.5, 0.5, 0.2, 0.8}, {1, 0, 0, 1}) == doctest::Approx(0.875));
    // complement identity under score negation
    const std::vector<double> s = {0.3, 0.7, 0.7, 0.1, 0.5, 0.3};
    const std::vector<std::int8_t> y = {0, 1, 0, 0, 1, 1};
    std::vector<double> neg(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) neg[i] = -s[i];
    CHECK(auc(s, y) + auc(neg, y) == doctest::Approx(1.0));
}

TEST_CASE("auc input validation") {
    try {
        auc({0.1, 0.2}, {1, 1});
        FAIL("expected SingleClassLabels");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::SingleClassLabels);
    }
    try {
        auc({0.1, 0.2}, {1, 2});
        FAIL("expected InvalidArgument");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InvalidArgument);
    }
    try {
        auc({0.1, 0.2, 0.3}, {1, 0});
        FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ShapeMismatch);
    }
}

TEST_CASE("four-example cost matches hand summation") {
    // Cl = (100, 200, 100, 200), L_gd = 0.75, r = 10, C^a_FP = 5.
    // Missed defaulter #0: 100 * 0.75 = 75. Caught defaulter #1: 0.
    // Declined good payer #2: 10 + 5 = 15. Approved good payer #3: 0.
    CostFields f;
    f.credit_line = {100.0, 200.0, 100.0, 200.0};
    f.profit = {10.0, 10.0, 10.0, 10.0};
    f.loss_given_default = 0.75;
    f.alt_fp_cost = 5.0;
    const std::vector<std::int8_t> y = {1, 1, 0, 0};

    CHECK(total_cost({0, 1, 1, 0}, y, f) == 90.0);
    CHECK(total_cost({0, 0, 0, 0}, y, f) == 75.0 + 150.0);     // every defaulter missed
    CHECK(total_cost({1, 1, 1, 1}, y, f) == 15.0 + 15.0);      // every good payer declined
    CHECK(total_cost({1, 1, 0, 0}, y, f) == 0.0);              // perfect decisions
}

TEST_CASE("cost field validation") {
    const std::vector<std::int8_t> y = {1, 0};
    auto f = uniform_fields(2, 100.0, 10.0);
    f.loss_given_default = 0.0;
    CHECK_THROWS_AS(total_cost({0, 0}, y, f), Error);
    f = uniform_fields(2, 100.0, 10.0);
    f.loss_given_default = 1.5;
    CHECK_THROWS_AS(total_cost({0, 0}, y, f), Error);
    f = uniform_fields(2, 100.0, 10.0);
    f.alt_fp_cost = -1.0;
    CHECK_THROWS_AS(total_cost({0, 0}, y, f), Error);
    f = uniform_fields(2, 100.0, 10.0);
    f.credit_line[0] = 0.0;
    CHECK_THROWS_AS(total_cost({0, 0}, y, f), Error);
    f = uniform_fields(2, 100.0, 10.0);
    f.profit[1] = -2.0;
    CHECK_THROWS_AS(total_cost({0, 0}, y, f), Error);
    f = uniform_fields(3, 100.0, 10.0);
    CHECK_THROWS_AS(total_cost({0, 0}, y, f), Error);
    f = uniform_fields(2, 100.0, 10.0);
    CHECK_THROWS_AS(total_cost({0, 2}, y, f), Error);
}

TEST_CASE("perfect classifier reaches auc 1 and savings 1") {
    const std::vector<double> s = {0.9, 0.2, 0.8, 0.1, 0.95, 0.3};
    const std::vector<std::int8_t> y = {1, 0, 1, 0, 1, 0};
    const auto rep = savings(s, y, uniform_fields(6, 100.0, 10.0), 0.5);
    CHECK(rep.auc == 1.0);
    CHECK(rep.cost == 0.0);
    CHECK(rep.savings == 1.0);
    CHECK(rep.n_examples == 6);
    CHECK(rep.n_positive == 3);
    CHECK(rep.loss_given_default == 0.75);
    CHECK(rep.alt_fp_cost == 5.0);
}

TEST_CASE("matching the costless class yields savings 0") {
    const std::vector<std::int8_t> y = {1, 0, 0, 0};
    auto f = uniform_fields(4, 100.0, 10.0);
    // all-0 costs 75, all-1 costs 45: the costless class is all-1 here
    f.credit_line = {100.0, 100.0, 100.0, 100.0};
    const auto all0 = total_cost({0, 0, 0, 0}, y, f);
    const auto all1 = total_cost({1, 1, 1, 1}, y, f);
    CHECK(all0 == 75.0);
    CHECK(all1 == 45.0);
    // scores above threshold everywhere reproduce the all-1 prediction
    const auto rep = savings({0.9, 0.9, 0.9, 0.9}, y, f, 0.5);
    CHECK(rep.cost == all1);
    CHECK(rep.costless_cost == all1);
    CHECK(rep.savings == 0.0);
}

TEST_CASE("savings validates the fixed threshold") {
    const std::vector<double> s = {0.2, 0.8};
    const std::vector<std::int8_t> y = {0, 1};
    const auto f = uniform_fields(2, 100.0, 10.0);
    for (double t : {0.0, 1.0, -0.5, 1.5}) {
        try {
            savings(s, y, f, t);
            FAIL("expected InvalidArgument");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::InvalidArgument);
        }
    }
}

TEST_CASE("degenerate populations are rejected") {
    const auto f2 = uniform_fields(2, 100.0, 10.0);
    try {
        savings({0.2, 0.8}, {0, 0}, f2, 0.5); // all-0 prediction costs nothing
        FAIL("expected DegenerateCost");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::DegenerateCost);
    }
    try {
        savings({0.2, 0.8}, {1, 1}, f2, 0.5); // all-1 prediction costs nothing
        FAIL("expected DegenerateCost");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::DegenerateCost);
    }
}

TEST_CASE("savings_min_cost matches exhaustive threshold search") {
    Rng rng(20240817);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 8 + rng.below(40);
        std::vector<double> scores(n);
        std::vector<std::int8_t> labels(n);
        CostFields f;
        f.loss_given_default = 0.75;
        f.alt_fp_cost = 5.0;
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            // coarse score grid so tie groups appear regularly
            scores[i] = static_cast<double>(rng.below(8)) / 8.0;
            labels[i] = static_cast<std::int8_t>(rng.uniform() < 0.35 ? 1 : 0);
            f.credit_line.push_back(20.0 + 400.0 * rng.uniform());
            f.profit.push_back(2.0 + 30.0 * rng.uniform());
            if (labels[i] == 1) has_pos = true;
            else has_neg = true;
        }
        if (!has_pos || !has_neg) continue;

        const auto [best_cost, best_threshold] = brute_min_cost(scores, labels, f);
        const auto rep = savings_min_cost(scores, labels, f);
        CHECK(rep.cost == doctest::Approx(best_cost).epsilon(1e-12));
        CHECK(rep.threshold == best_threshold);
        CHECK(rep.cost <= rep.costless_cost); // never worse than a constant prediction
    }
}

TEST_CASE("savings_min_cost can choose to reject nobody") {
    // The only defaulter is tiny, so flagging anyone costs more than missing it.
    const std::vector<double> s = {0.2, 0.9};
    const std::vector<std::int8_t> y = {1, 0};
    CostFields f;
    f.credit_line = {1.0, 500.0};
    f.profit = {10.0, 10.0};
    f.loss_given_default = 0.75;
    f.alt_fp_cost = 5.0;
    const auto rep = savings_min_cost(s, y, f);
    CHECK(rep.cost == 0.75);
    CHECK(rep.threshold > 0.9);
    CHECK(rep.savings == 0.0);
}

TEST_CASE("permutation importance isolates the informative column") {
    Rng rng(77);
    const std::size_t n = 80;
    std::vector<std::int8_t> labels(n);
    std::vector<double> sig(n), noise1(n), noise2(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = static_cast<std::int8_t>(i % 3 == 0 ? 1 : 0);
        sig[i] = static_cast<double>(labels[i]);
        noise1[i] = rng.uniform();
        noise2[i] = rng.uniform();
    }
    FeatureMatrix x;
    x.append_column("sig", sig);
    x.append_column("noise1", noise1);
    x.append_column("noise2", noise2);

    const ScoreFn predict = [](const FeatureMatrix& m) { return m.cols[m.column_index("sig")]; };
    const auto imp = permutation_importance(predict, x, labels, 3, 2024);

    REQUIRE(imp.size() == 3);
    CHECK(imp[0].name == "sig");
    CHECK(imp[0].importance > 0.3);
    // the predictor ignores the noise columns entirely
    CHECK(imp[1].importance == 0.0);
    CHECK(imp[2].importance == 0.0);
    // tied importances keep column order
    CHECK(imp[1].name == "noise1");
    CHECK(imp[2].name == "noise2");

    const auto again = permutation_importance(predict, x, labels, 3, 2024);
    for (std::size_t i = 0; i < imp.size(); ++i) {
        CHECK(imp[i].name == again[i].name);
        CHECK(imp[i].importance == again[i].importance);
    }
}

TEST_CASE("permutation importance validates inputs") {
    FeatureMatrix x;
    x.append_column("a", {0.1, 0.2});
    const std::vector<std::int8_t> y = {1, 0};
    const ScoreFn predict = [](const FeatureMatrix& m) { return m.cols[0]; };
    CHECK_THROWS_AS(permutation_importance(predict, x, y, 0, 1), Error);
    CHECK_THROWS_AS(permutation_importance(ScoreFn{}, x, y, 1, 1), Error);
    CHECK_THROWS_AS(permutation_importance(predict, x, {1, 0, 1}, 1, 1), Error);
}
