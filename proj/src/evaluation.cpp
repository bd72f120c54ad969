#include "realism/evaluation.hpp"

#include "realism/csv.hpp"
#include "realism/error.hpp"
#include "realism/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace realism {

namespace fs = std::filesystem;

LabelSet read_labels_csv(const fs::path& path) {
    auto csv = read_csv(path);
    LabelSet set;
    if (csv.header == std::vector<std::string>{"image_id", "label"}) {
        set.format = LabelFormat::binary;
    } else if (csv.header == std::vector<std::string>{"image_id", "votes_real", "raters"}) {
        set.format = LabelFormat::spectrum;
    } else {
        throw Error(ErrorCategory::bad_csv,
                    path.string() + ": header must be image_id,label or image_id,votes_real,raters");
    }
    set.records.reserve(csv.rows.size());
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& f = csv.rows[r];
        const auto line = csv.line_numbers[r];
        if (f[0].empty()) throw Error(ErrorCategory::bad_csv, path.string() + ":" + std::to_string(line) + ": empty id");
        LabelRecord rec{f[0], 0, 1};
        if (set.format == LabelFormat::binary) {
            const auto label = parse_int_field(f[1], path, line);
            if (label != 0 && label != 1) {
                throw Error(ErrorCategory::bad_csv, path.string() + ":" + std::to_string(line) + ": label must be 0 or 1");
            }
            rec.votes_real = static_cast<int>(label);
        } else {
            const auto votes = parse_int_field(f[1], path, line);
            const auto raters = parse_int_field(f[2], path, line);
            if (raters < 1 || votes < 0 || votes > raters || raters > 1'000'000) {
                throw Error(ErrorCategory::bad_csv,
                            path.string() + ":" + std::to_string(line) + ": need 0 <= votes_real <= raters, raters >= 1");
            }
            rec.votes_real = static_cast<int>(votes);
            rec.raters = static_cast<int>(raters);
        }
        set.records.push_back(std::move(rec));
    }
    return set;
}

void write_labels_csv(const fs::path& path, const LabelSet& labels) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCategory::io, "cannot open " + path.string() + " for writing");
    if (labels.format == LabelFormat::binary) {
        out << "image_id,label\n";
        for (const auto& r : labels.records) {
            if (r.raters != 1) throw Error(ErrorCategory::bad_csv, "binary label file needs one rater per row");
            out << r.image_id << ',' << r.votes_real << '\n';
        }
    } else {
        out << "image_id,votes_real,raters\n";
        for (const auto& r : labels.records) out << r.image_id << ',' << r.votes_real << ',' << r.raters << '\n';
    }
    if (!out) throw Error(ErrorCategory::io, "write failed: " + path.string());
}

namespace {

void shuffle(std::vector<std::string>& items, SplitMix64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[rng.below(i)]);
    }
}

} // namespace

Split split(std::span<const LabelRecord> records, const SplitSpec& spec) {
    if (records.empty()) throw Error(ErrorCategory::empty_input, "no label records to split");
    if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
        throw Error(ErrorCategory::bad_config, "test fraction must lie strictly between 0 and 1");
    }
    std::map<std::string, std::pair<long long, long long>> votes; // id -> (real votes, raters)
    for (const auto& r : records) {
        auto& v = votes[r.image_id];
        v.first += r.votes_real;
        v.second += r.raters;
    }
    const std::size_t n_images = votes.size();
    const auto n_test = static_cast<std::size_t>(std::floor(spec.test_fraction * n_images + 0.5));
    if (n_test == 0 || n_test >= n_images) {
        throw Error(ErrorCategory::too_few_images,
                    std::to_string(n_images) + " distinct images cannot be split with test fraction " +
                        format_double(spec.test_fraction, 6));
    }

    SplitMix64 rng(spec.seed);
    std::set<std::string> test_ids;
    if (!spec.stratified) {
        std::vector<std::string> ids;
        ids.reserve(n_images);
        for (const auto& [id, v] : votes) ids.push_back(id);
        shuffle(ids, rng);
        test_ids.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
    } else {
        std::vector<std::string> classes[2];
        for (const auto& [id, v] : votes) classes[2 * v.first >= v.second ? 1 : 0].push_back(id);
        // Largest-remainder apportionment of n_test across the two classes.
        std::size_t quota[2];
        double frac[2];
        for (int c = 0; c < 2; ++c) {
            const double exact = spec.test_fraction * classes[c].size();
            quota[c] = static_cast<std::size_t>(std::floor(exact));
            frac[c] = exact - quota[c];
        }
        while (quota[0] + quota[1] < n_test) {
            int c = frac[1] > frac[0] ? 1 : 0;
            if (quota[c] >= classes[c].size()) c = 1 - c;
            ++quota[c];
            frac[c] = -1.0;
        }
        for (int c = 0; c < 2; ++c) {
            shuffle(classes[c], rng);
            test_ids.insert(classes[c].begin(), classes[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
        }
    }

    Split out;
    for (const auto& r : records) (test_ids.contains(r.image_id) ? out.test : out.train).push_back(r);
    return out;
}

double binary_accuracy(std::span<const int> predictions, std::span<const int> truth) {
    if (predictions.size() != truth.size()) {
        throw Error(ErrorCategory::dimension_mismatch, "prediction and truth lists differ in length");
    }
    if (predictions.empty()) throw Error(ErrorCategory::empty_input, "accuracy of an empty list");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) correct += predictions[i] == truth[i];
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i + 1;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        // Positions i..j-1 hold ranks i+1..j.
        const double rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
        i = j;
    }
    return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(ErrorCategory::dimension_mismatch, "correlation inputs differ in length");
    if (x.size() < 2) throw Error(ErrorCategory::empty_input, "correlation needs at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCategory::constant_input, "correlation of a constant list");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(ErrorCategory::dimension_mismatch, "correlation inputs differ in length");
    if (x.size() < 2) throw Error(ErrorCategory::empty_input, "correlation needs at least two points");
    auto rx = average_ranks(x);
    auto ry = average_ranks(y);
    return pearson(rx, ry);
}

EvalReport evaluate(const RealismModel& model, const FeatureTable& features, std::span<const LabelRecord> labels,
                    EvalMode mode, const std::string& test_dataset) {
    check_layers(model, features.layers);
    if (labels.empty()) throw Error(ErrorCategory::empty_input, "no labels to evaluate against");
    std::unordered_map<std::string, const FeatureVector*> by_id;
    for (const auto& row : features.rows) by_id.emplace(row.image_id, &row);

    EvalReport report;
    report.train_dataset = model.meta.dataset;
    report.test_dataset = test_dataset;
    report.mode = mode;

    std::unordered_map<std::string, std::size_t> slot;
    for (const auto& rec : labels) {
        auto it = by_id.find(rec.image_id);
        if (it == by_id.end()) {
            throw Error(ErrorCategory::id_mismatch, "labelled image " + rec.image_id + " has no feature row");
        }
        auto [pos, inserted] = slot.emplace(rec.image_id, report.predictions.size());
        if (inserted) {
            const double p = predict_proba(model, *it->second);
            report.predictions.push_back({rec.image_id, p, label_from_probability(p), 0, 0});
        }
        auto& pred = report.predictions[pos->second];
        pred.votes_real += rec.votes_real;
        pred.raters += rec.raters;
        // Each rater's vote is one human label.
        report.n_test += static_cast<std::size_t>(rec.raters);
        report.correct += static_cast<std::size_t>(pred.label == 1 ? rec.votes_real : rec.raters - rec.votes_real);
    }
    report.binary_accuracy = static_cast<double>(report.correct) / static_cast<double>(report.n_test);

    if (mode == EvalMode::spectrum) {
        std::vector<double> model_scores, human_scores;
        for (const auto& p : report.predictions) {
            model_scores.push_back(p.probability);
            human_scores.push_back(static_cast<double>(p.votes_real) / p.raters);
        }
        report.spearman_rho = spearman_rho(model_scores, human_scores);
    }
    return report;
}

void write_report(std::ostream& out, std::span<const EvalReport> reports) {
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        const std::string p = "report." + std::to_string(i) + ".";
        out << p << "train_dataset = " << r.train_dataset << '\n'
            << p << "test_dataset = " << r.test_dataset << '\n'
            << p << "mode = " << (r.mode == EvalMode::binary ? "binary" : "spectrum") << '\n'
            << p << "n_test = " << r.n_test << '\n'
            << p << "n_images = " << r.predictions.size() << '\n'
            << p << "correct = " << r.correct << '\n'
            << p << "binary_accuracy = " << format_double(r.binary_accuracy, 9) << '\n';
        if (r.spearman_rho) out << p << "spearman_rho = " << format_double(*r.spearman_rho, 9) << '\n';
        for (const auto& pred : r.predictions) {
            out << p << "prediction." << pred.image_id << " = " << format_double(pred.probability, 9) << ' '
                << pred.label << ' ' << pred.votes_real << '/' << pred.raters << '\n';
        }
    }
}

namespace {

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s + ' ' : s + std::string(width - s.size(), ' ');
}

} // namespace

std::string format_table(std::span<const EvalReport> reports) {
    std::vector<std::string> trains, tests;
    auto note = [](std::vector<std::string>& v, const std::string& s) {
        if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
    };
    std::map<std::pair<std::string, std::string>, std::string> accuracy, rho;
    for (const auto& r : reports) {
        note(trains, r.train_dataset);
        note(tests, r.test_dataset);
        const auto key = std::make_pair(r.train_dataset, r.test_dataset);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * r.binary_accuracy);
        // A binary-mode report is authoritative for accuracy.
        if (r.mode == EvalMode::binary || !accuracy.contains(key)) accuracy[key] = buf;
        if (r.spearman_rho) {
            std::snprintf(buf, sizeof buf, "%.2f", *r.spearman_rho);
            rho[key] = buf;
        }
    }
    std::size_t first = std::string("Trained on").size();
    for (const auto& t : trains) first = std::max(first, t.size());
    first += 2;
    std::size_t col = 8;
    for (const auto& t : tests) col = std::max(col, t.size() + 2);
    const std::size_t group = col * tests.size();

    std::ostringstream out;
    out << pad("", first) << pad("Binary Accuracy", group) << "Spearman's rho\n";
    out << pad("Trained on", first);
    for (const auto& t : tests) out << pad(t, col);
    for (std::size_t i = 0; i < tests.size(); ++i) {
        out << (i + 1 == tests.size() ? tests[i] : pad(tests[i], col));
    }
    out << '\n';
    for (const auto& train : trains) {
        out << pad(train, first);
        for (const auto& t : tests) {
            auto it = accuracy.find({train, t});
            out << pad(it == accuracy.end() ? "-" : it->second, col);
        }
        for (std::size_t i = 0; i < tests.size(); ++i) {
            auto it = rho.find({train, tests[i]});
            const std::string cell = it == rho.end() ? "-" : it->second;
            out << (i + 1 == tests.size() ? cell : pad(cell, col));
        }
        out << '\n';
    }
    return out.str();
}

} // namespace realism
