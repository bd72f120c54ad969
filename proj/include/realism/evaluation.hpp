#pragma once

#include "realism/features.hpp"
#include "realism/regression.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace realism {

/// Human judgments for one image: `votes_real` of `raters` said "real".
/// A binary label file row is a record with raters == 1.
struct LabelRecord {
    std::string image_id;
    int votes_real = 0;
    int raters = 1;

    double score() const noexcept { return static_cast<double>(votes_real) / raters; }
    friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

enum class LabelFormat { binary, spectrum };

struct LabelSet {
    LabelFormat format = LabelFormat::binary;
    std::vector<LabelRecord> records;
};

/// `image_id,label` (binary) or `image_id,votes_real,raters` (spectrum),
/// selected by the header.
LabelSet read_labels_csv(const std::filesystem::path& path);
void write_labels_csv(const std::filesystem::path& path, const LabelSet& labels);

struct SplitSpec {
    double test_fraction = 0.1;
    std::uint64_t seed = 0;
    /// Keep the proportion of majority-real and majority-fake images equal on
    /// both sides.
    bool stratified = false;
};

struct Split {
    std::vector<LabelRecord> train;
    std::vector<LabelRecord> test;
};

/// Image-level split: round-half-up(test_fraction * distinct images) images go
/// to the test side together with all their records. Distinct image ids are
/// sorted, then Fisher-Yates shuffled with SplitMix64(seed); the first images
/// of the shuffled order form the test side. Records keep their input order.
Split split(std::span<const LabelRecord> records, const SplitSpec& spec);

double binary_accuracy(std::span<const int> predictions, std::span<const int> truth);

/// Ranks 1..n with tied values sharing the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of tie-averaged ranks.
double spearman_rho(std::span<const double> x, std::span<const double> y);

enum class EvalMode { binary, spectrum };

struct ImagePrediction {
    std::string image_id;
    double probability = 0.0;
    int label = 0;
    int votes_real = 0;
    int raters = 0;
};

struct EvalReport {
    std::string train_dataset;
    std::string test_dataset;
    EvalMode mode = EvalMode::binary;
    /// Human label rows scored (each rater's vote is one row).
    std::size_t n_test = 0;
    std::size_t correct = 0;
    double binary_accuracy = 0.0;
    std::optional<double> spearman_rho;
    /// Per image, in order of first appearance in the labels.
    std::vector<ImagePrediction> predictions;
};

/// Binary mode: accuracy of the thresholded model over every human label row.
/// Spectrum mode additionally reports Spearman's rho between the model
/// probability and the per-image mean human score.
EvalReport evaluate(const RealismModel& model, const FeatureTable& features,
                    std::span<const LabelRecord> labels, EvalMode mode, const std::string& test_dataset);

/// Key/value report, one `report.<i>.<field> = value` line per field.
void write_report(std::ostream& out, std::span<const EvalReport> reports);

/// Aligned text grid: one row per training set, accuracy columns then
/// Spearman columns, one per test set.
std::string format_table(std::span<const EvalReport> reports);

} // namespace realism
