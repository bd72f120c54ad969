#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "realism/error.hpp"
#include "realism/evaluation.hpp"
#include "support/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

using namespace realism;
using realism::testing::Gaussian;
using realism::testing::TempDir;

namespace {

std::vector<LabelRecord> binary_records(std::size_t images, std::size_t labels_per_image) {
    std::vector<LabelRecord> out;
    for (std::size_t i = 0; i < images; ++i) {
        for (std::size_t k = 0; k < labels_per_image; ++k) {
            out.push_back({"img" + std::to_string(i), static_cast<int>((i + k) % 2), 1});
        }
    }
    return out;
}

std::set<std::string> ids_of(const std::vector<LabelRecord>& records) {
    std::set<std::string> ids;
    for (const auto& r : records) ids.insert(r.image_id);
    return ids;
}

RealismModel identity_model() {
    RealismModel m;
    m.layer_names = {"L"};
    m.weights = {1.0};
    m.intercept = 0.0;
    m.feature_means = {0.0};
    m.feature_stds = {1.0};
    m.degenerate = {false};
    m.meta.dataset = "train";
    return m;
}

} // namespace

TEST_CASE("ten images at fraction 0.1 leave one test image") {
    auto records = binary_records(10, 1);
    auto s = split(records, SplitSpec{0.1, 3});
    CHECK(s.test.size() == 1);
    CHECK(s.train.size() == 9);
}

TEST_CASE("split sizes at the scale of the published ProGAN split") {
    auto records = binary_records(2010, 1);
    // 1787 train / 223 test is 11.1 % held out; a 0.1 fraction holds out 201.
    auto tenth = split(records, SplitSpec{0.1, 1});
    CHECK(tenth.test.size() == 201);
    CHECK(tenth.train.size() == 1809);
    auto published = split(records, SplitSpec{223.0 / 2010.0, 1});
    CHECK(published.train.size() == 1787);
    CHECK(published.test.size() == 223);
}

TEST_CASE("split keeps all labels of an image on one side and is deterministic") {
    auto records = binary_records(57, 5);
    for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
        auto s = split(records, SplitSpec{0.1, seed});
        auto again = split(records, SplitSpec{0.1, seed});
        CHECK(s.train == again.train);
        CHECK(s.test == again.test);
        const auto train_ids = ids_of(s.train), test_ids = ids_of(s.test);
        CHECK(test_ids.size() == 6); // round-half-up(5.7)
        for (const auto& id : test_ids) CHECK_FALSE(train_ids.contains(id));
        CHECK(s.train.size() + s.test.size() == records.size());
        CHECK(s.test.size() == 30);
    }
    CHECK(ids_of(split(records, SplitSpec{0.1, 1}).test) != ids_of(split(records, SplitSpec{0.1, 2}).test));
}

TEST_CASE("split rounds half up") {
    auto records = binary_records(25, 1);
    CHECK(split(records, SplitSpec{0.1, 0}).test.size() == 3); // 2.5 -> 3
    CHECK(split(records, SplitSpec{0.14, 0}).test.size() == 4); // 3.5 -> 4
}

TEST_CASE("split errors") {
    CHECK_THROWS_AS(split({}, SplitSpec{}), Error);
    auto few = binary_records(4, 3);
    try {
        (void)split(few, SplitSpec{0.1, 0});
        FAIL("expected too-few-images");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::too_few_images);
    }
    CHECK_THROWS_AS(split(binary_records(10, 1), SplitSpec{1.0, 0}), Error);
}

TEST_CASE("stratified split balances classes") {
    std::vector<LabelRecord> records;
    for (int i = 0; i < 100; ++i) records.push_back({"r" + std::to_string(i), 1, 1});
    for (int i = 0; i < 50; ++i) records.push_back({"f" + std::to_string(i), 0, 1});
    auto s = split(records, SplitSpec{0.2, 4, true});
    REQUIRE(s.test.size() == 30);
    const auto real = std::count_if(s.test.begin(), s.test.end(), [](const auto& r) { return r.votes_real == 1; });
    CHECK(real == 20);
}

TEST_CASE("binary accuracy") {
    std::vector<int> a{1, 0, 1}, b{1, 0, 1}, c{0, 1, 0}, d{1, 0, 0};
    CHECK(binary_accuracy(a, b) == 1.0);
    CHECK(binary_accuracy(a, c) == 0.0);
    CHECK(binary_accuracy(a, d) == doctest::Approx(0.6667).epsilon(1e-4));
    CHECK_THROWS_AS(binary_accuracy(a, std::vector<int>{1}), Error);
    CHECK_THROWS_AS(binary_accuracy(std::vector<int>{}, std::vector<int>{}), Error);
}

TEST_CASE("average ranks share tied positions") {
    CHECK(average_ranks(std::vector<double>{1, 1, 3, 4}) == std::vector<double>{1.5, 1.5, 3, 4});
    CHECK(average_ranks(std::vector<double>{5, 2, 5, 5}) == std::vector<double>{3, 1, 3, 3});
}

TEST_CASE("Spearman's rho") {
    std::vector<double> x{0.5, 1.0, 2.0, 3.5, 7.0}, sq, neg;
    for (double v : x) sq.push_back(v * v), neg.push_back(-v);
    CHECK(spearman_rho(x, sq) == 1.0);
    CHECK(spearman_rho(x, neg) == -1.0);
    CHECK(spearman_rho(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 1, 3, 4}) ==
          doctest::Approx(0.9487).epsilon(1e-3));
    CHECK(std::abs(spearman_rho(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 1, 3, 4}) -
                   4.5 / std::sqrt(22.5)) < 1e-15);
    CHECK_THROWS_AS(spearman_rho(x, std::vector<double>(5, 1.0)), Error);
    CHECK_THROWS_AS(spearman_rho(std::vector<double>{1}, std::vector<double>{1}), Error);
    CHECK_THROWS_AS(spearman_rho(x, std::vector<double>{1, 2}), Error);
}

TEST_CASE("property: Spearman invariances") {
    Gaussian g(41);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + g.engine().below(60);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = std::round(4.0 * g()) / 2.0; // coarse values force ties
            y[i] = x[i] + g();
        }
        if (std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) == x.end()) continue;
        const double rho = spearman_rho(x, y);
        CHECK(rho >= -1.0);
        CHECK(rho <= 1.0);
        CHECK(std::abs(spearman_rho(y, x) - rho) <= 1e-12);
        CHECK(std::abs(spearman_rho(x, x) - 1.0) <= 1e-12);
        std::vector<double> fx(n), fy(n);
        for (std::size_t i = 0; i < n; ++i) fx[i] = std::exp(x[i]) + 3.0, fy[i] = std::atan(y[i]) * 7.0 - 1.0;
        CHECK(std::abs(spearman_rho(fx, fy) - rho) <= 1e-12);
    }
}

TEST_CASE("label files of both formats round-trip") {
    TempDir tmp("labels");
    LabelSet binary{LabelFormat::binary, {{"a", 1, 1}, {"a", 0, 1}, {"b", 1, 1}}};
    LabelSet spectrum{LabelFormat::spectrum, {{"a", 3, 5}, {"b", 0, 5}}};
    write_labels_csv(tmp.path() / "b.csv", binary);
    write_labels_csv(tmp.path() / "s.csv", spectrum);
    auto b = read_labels_csv(tmp.path() / "b.csv");
    auto s = read_labels_csv(tmp.path() / "s.csv");
    CHECK(b.format == LabelFormat::binary);
    CHECK(b.records == binary.records);
    CHECK(s.format == LabelFormat::spectrum);
    CHECK(s.records == spectrum.records);
    CHECK(s.records[0].score() == 0.6);

    std::ofstream(tmp.path() / "bad.csv") << "image_id,label\na,2\n";
    CHECK_THROWS_AS(read_labels_csv(tmp.path() / "bad.csv"), Error);
    std::ofstream(tmp.path() / "bad2.csv") << "image_id,votes_real,raters\na,6,5\n";
    CHECK_THROWS_AS(read_labels_csv(tmp.path() / "bad2.csv"), Error);
    std::ofstream(tmp.path() / "bad3.csv") << "id,foo\na,1\n";
    CHECK_THROWS_AS(read_labels_csv(tmp.path() / "bad3.csv"), Error);
}

TEST_CASE("evaluate counts every human label row") {
    FeatureTable features{{"L"}, {{"a", {2.0}}, {"b", {-2.0}}, {"c", {0.5}}}};
    auto model = identity_model();
    std::vector<LabelRecord> labels{{"a", 1, 1}, {"a", 0, 1}, {"b", 0, 1}, {"c", 1, 1}};
    auto report = evaluate(model, features, labels, EvalMode::binary, "test");
    CHECK(report.n_test == 4);
    CHECK(report.correct == 3);
    CHECK(report.binary_accuracy == 0.75);
    CHECK_FALSE(report.spearman_rho.has_value());
    REQUIRE(report.predictions.size() == 3);
    CHECK(report.predictions[0].raters == 2);

    std::vector<LabelRecord> spectrum{{"a", 5, 5}, {"b", 1, 5}, {"c", 3, 5}};
    auto sr = evaluate(model, features, spectrum, EvalMode::spectrum, "test");
    REQUIRE(sr.spearman_rho.has_value());
    CHECK(*sr.spearman_rho == doctest::Approx(1.0));
    CHECK(sr.n_test == 15);
    CHECK(sr.correct == 5 + 4 + 3);
}

TEST_CASE("evaluate rejects unknown images and mismatched layers") {
    FeatureTable features{{"L"}, {{"a", {2.0}}}};
    std::vector<LabelRecord> labels{{"zzz", 1, 1}};
    try {
        (void)evaluate(identity_model(), features, labels, EvalMode::binary, "t");
        FAIL("expected id-mismatch");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::id_mismatch);
    }
    FeatureTable other{{"M"}, {{"a", {2.0}}}};
    std::vector<LabelRecord> ok{{"a", 1, 1}};
    CHECK_THROWS_AS(evaluate(identity_model(), other, ok, EvalMode::binary, "t"), Error);
}

TEST_CASE("reports render as key/value lines and a train-by-test table") {
    std::vector<EvalReport> reports;
    auto make = [](std::string train, std::string test, EvalMode mode, double acc, std::optional<double> rho) {
        EvalReport r;
        r.train_dataset = std::move(train);
        r.test_dataset = std::move(test);
        r.mode = mode;
        r.binary_accuracy = acc;
        r.spearman_rho = rho;
        return r;
    };
    reports.push_back(make("ProGAN", "ProGAN Test", EvalMode::binary, 0.65, std::nullopt));
    reports.push_back(make("ProGAN", "StyleGAN Test", EvalMode::binary, 0.647, std::nullopt));
    reports.push_back(make("ProGAN", "ProGAN Test", EvalMode::spectrum, 0.1, 0.45));
    reports.push_back(make("StyleGAN", "StyleGAN Test", EvalMode::spectrum, 0.1, 0.31));
    const auto table = format_table(reports);
    std::istringstream lines(table);
    std::string l1, l2, l3, l4;
    std::getline(lines, l1);
    std::getline(lines, l2);
    std::getline(lines, l3);
    std::getline(lines, l4);
    CHECK(l1.find("Binary Accuracy") != std::string::npos);
    CHECK(l1.find("Spearman's rho") != std::string::npos);
    CHECK(l2.find("Trained on") == 0);
    CHECK(l3.find("ProGAN") == 0);
    CHECK(l3.find("65.0%") != std::string::npos);
    CHECK(l3.find("64.7%") != std::string::npos);
    CHECK(l3.find("0.45") != std::string::npos);
    CHECK(l4.find("StyleGAN") == 0);
    CHECK(l4.find("0.31") != std::string::npos);
    // The accuracy from a spectrum-only cell is still shown.
    CHECK(l4.find("10.0%") != std::string::npos);

    std::ostringstream kv;
    write_report(kv, std::span(reports.data(), 1));
    CHECK(kv.str().find("report.0.binary_accuracy = 0.65\n") != std::string::npos);
    CHECK(kv.str().find("report.0.mode = binary\n") != std::string::npos);
}
