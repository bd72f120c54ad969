#pragma once

#include "realism/features.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace realism {

/// One training row. `target` is 0 or 1 for a single human label, or a vote
/// fraction in [0, 1] when labels are aggregated per image.
struct TrainRow {
    std::vector<double> features;
    double target = 0.0;
    double weight = 1.0;
};

struct TrainSet {
    std::vector<std::string> layers;
    std::vector<TrainRow> rows;
};

struct Standardization {
    std::vector<double> means;
    /// Population standard deviations; 1 for degenerate dimensions.
    std::vector<double> stds;
    std::vector<bool> degenerate;

    std::vector<double> apply(std::span<const double> raw) const;
};

/// Column-wise z-scoring with the population (N) denominator. A column with
/// (numerically) zero variance keeps std = 1 and is flagged, so it is only
/// shifted by its mean.
Standardization fit_standardization(std::span<const std::vector<double>> features);

struct StandardizedFeatures {
    std::vector<std::vector<double>> values;
    Standardization stats;
};
StandardizedFeatures standardize(std::span<const std::vector<double>> features);

/// Mean weighted negative log-likelihood of a logistic model plus
/// (lambda / 2) * |w|^2; the intercept is not penalised. Parameters are laid
/// out as (w_1 .. w_m, intercept).
class LogisticObjective {
public:
    LogisticObjective(std::span<const std::vector<double>> features, std::span<const double> targets,
                      std::span<const double> weights, double lambda);

    std::size_t dimension() const noexcept { return dim_; }
    double value(std::span<const double> params) const;
    std::vector<double> gradient(std::span<const double> params) const;
    /// Row-major (m+1) x (m+1).
    std::vector<double> hessian(std::span<const double> params) const;

private:
    std::span<const std::vector<double>> features_;
    std::span<const double> targets_;
    std::span<const double> weights_;
    double lambda_;
    double weight_total_ = 0.0;
    std::size_t dim_;
};

struct FitOptions {
    double lambda = 1e-4;
    double tolerance = 1e-8;
    int max_iterations = 500;
    std::string dataset = "unnamed";
    std::uint64_t seed = 0;
    /// "rows" (one row per human label) or "mean" (per-image vote fractions).
    std::string label_mode = "rows";
};

struct TrainMeta {
    std::string dataset;
    std::uint64_t seed = 0;
    double lambda = 0.0;
    int iterations = 0;
    bool converged = false;
    double gradient_norm = 0.0;
    std::string label_mode;
    std::size_t rows = 0;

    friend bool operator==(const TrainMeta&, const TrainMeta&) = default;
};

struct RealismModel {
    std::vector<std::string> layer_names;
    /// Coefficients on standardized features.
    std::vector<double> weights;
    double intercept = 0.0;
    std::vector<double> feature_means;
    std::vector<double> feature_stds;
    std::vector<bool> degenerate;
    TrainMeta meta;

    std::size_t dimension() const noexcept { return weights.size(); }
    double logit(std::span<const double> raw_features) const;
    /// Coefficients and intercept expressed on the raw (unstandardized) features.
    std::vector<double> raw_weights() const;
    double raw_intercept() const;

    friend bool operator==(const RealismModel&, const RealismModel&) = default;
};

/// Penalised maximum-likelihood fit by damped Newton iterations on
/// standardized features. Rows are put into a canonical order first, so the
/// result is bit-identical under any permutation of the input rows. A model
/// that hits max_iterations is still returned with meta.converged = false.
RealismModel fit(const TrainSet& train, const FitOptions& options = {});

/// 1 / (1 + e^-t), evaluated without overflow and clamped to the open unit
/// interval: the result is at least DBL_MIN and at most 1 - 2^-53.
double sigmoid(double t);

double predict_proba(const RealismModel& model, const FeatureVector& fv);

/// Threshold at one half; exactly 0.5 counts as real (1).
int label_from_probability(double probability);
int predict_label(const RealismModel& model, const FeatureVector& fv);

/// Throws layer_mismatch unless `layers` names the model's layers in order.
void check_layers(const RealismModel& model, std::span<const std::string> layers);

void save_model(const std::filesystem::path& path, const RealismModel& model);
RealismModel load_model(const std::filesystem::path& path);

} // namespace realism
