#include "realism/regression.hpp"

#include "realism/error.hpp"
#include "realism/layers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cfloat>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

namespace realism {

namespace {

// log(1 + e^t) without overflow.
double softplus(double t) {
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double dot_with_intercept(std::span<const double> x, std::span<const double> params) {
    double t = params.back();
    for (std::size_t j = 0; j < x.size(); ++j) t += params[j] * x[j];
    return t;
}

double inf_norm(std::span<const double> v) {
    double n = 0.0;
    for (double x : v) n = std::max(n, std::abs(x));
    return n;
}

} // namespace

double sigmoid(double t) {
    double p;
    if (t >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-t));
    } else {
        const double e = std::exp(t);
        p = e / (1.0 + e);
    }
    return std::clamp(p, DBL_MIN, 1.0 - 0x1.0p-53);
}

std::vector<double> Standardization::apply(std::span<const double> raw) const {
    if (raw.size() != means.size()) {
        throw Error(ErrorCategory::layer_mismatch, "feature vector has " + std::to_string(raw.size()) +
                                                       " values, expected " + std::to_string(means.size()));
    }
    std::vector<double> out(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) out[j] = (raw[j] - means[j]) / stds[j];
    return out;
}

Standardization fit_standardization(std::span<const std::vector<double>> features) {
    if (features.empty()) throw Error(ErrorCategory::empty_input, "cannot standardize zero rows");
    const std::size_t m = features.front().size();
    const double n = static_cast<double>(features.size());
    Standardization s{std::vector<double>(m, 0.0), std::vector<double>(m, 1.0), std::vector<bool>(m, false)};
    for (const auto& row : features) {
        if (row.size() != m) throw Error(ErrorCategory::layer_mismatch, "ragged feature rows");
        for (std::size_t j = 0; j < m; ++j) s.means[j] += row[j];
    }
    for (auto& mean : s.means) mean /= n;
    std::vector<double> var(m, 0.0);
    for (const auto& row : features) {
        for (std::size_t j = 0; j < m; ++j) {
            const double d = row[j] - s.means[j];
            var[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < m; ++j) {
        const double sd = std::sqrt(var[j] / n);
        if (sd <= 1e-12 * std::max(1.0, std::abs(s.means[j]))) {
            s.degenerate[j] = true;
        } else {
            s.stds[j] = sd;
        }
    }
    return s;
}

StandardizedFeatures standardize(std::span<const std::vector<double>> features) {
    StandardizedFeatures out{{}, fit_standardization(features)};
    out.values.reserve(features.size());
    for (const auto& row : features) out.values.push_back(out.stats.apply(row));
    return out;
}

LogisticObjective::LogisticObjective(std::span<const std::vector<double>> features,
                                     std::span<const double> targets, std::span<const double> weights,
                                     double lambda)
    : features_(features), targets_(targets), weights_(weights), lambda_(lambda),
      dim_(features.empty() ? 1 : features.front().size() + 1) {
    if (features.size() != targets.size() || features.size() != weights.size()) {
        throw Error(ErrorCategory::dimension_mismatch, "features, targets and weights differ in length");
    }
    if (features.empty()) throw Error(ErrorCategory::empty_input, "objective over zero rows");
    weight_total_ = std::accumulate(weights.begin(), weights.end(), 0.0);
}

double LogisticObjective::value(std::span<const double> params) const {
    double nll = 0.0;
    for (std::size_t i = 0; i < features_.size(); ++i) {
        const double t = dot_with_intercept(features_[i], params);
        nll += weights_[i] * (softplus(t) - targets_[i] * t);
    }
    double penalty = 0.0;
    for (std::size_t j = 0; j + 1 < dim_; ++j) penalty += params[j] * params[j];
    return nll / weight_total_ + 0.5 * lambda_ * penalty;
}

std::vector<double> LogisticObjective::gradient(std::span<const double> params) const {
    std::vector<double> g(dim_, 0.0);
    for (std::size_t i = 0; i < features_.size(); ++i) {
        const auto& x = features_[i];
        const double r = weights_[i] * (sigmoid(dot_with_intercept(x, params)) - targets_[i]);
        for (std::size_t j = 0; j < x.size(); ++j) g[j] += r * x[j];
        g.back() += r;
    }
    for (std::size_t j = 0; j < dim_; ++j) g[j] /= weight_total_;
    for (std::size_t j = 0; j + 1 < dim_; ++j) g[j] += lambda_ * params[j];
    return g;
}

std::vector<double> LogisticObjective::hessian(std::span<const double> params) const {
    std::vector<double> h(dim_ * dim_, 0.0);
    std::vector<double> xt(dim_, 1.0);
    for (std::size_t i = 0; i < features_.size(); ++i) {
        const auto& x = features_[i];
        std::copy(x.begin(), x.end(), xt.begin());
        const double p = sigmoid(dot_with_intercept(x, params));
        const double c = weights_[i] * p * (1.0 - p);
        for (std::size_t a = 0; a < dim_; ++a) {
            for (std::size_t b = a; b < dim_; ++b) h[a * dim_ + b] += c * xt[a] * xt[b];
        }
    }
    for (std::size_t a = 0; a < dim_; ++a) {
        for (std::size_t b = a; b < dim_; ++b) {
            h[a * dim_ + b] /= weight_total_;
            h[b * dim_ + a] = h[a * dim_ + b];
        }
    }
    for (std::size_t j = 0; j + 1 < dim_; ++j) h[j * dim_ + j] += lambda_;
    return h;
}

RealismModel fit(const TrainSet& train, const FitOptions& options) {
    if (train.rows.empty()) throw Error(ErrorCategory::empty_input, "training set is empty");
    if (!(options.lambda >= 0.0) || !(options.tolerance > 0.0) || options.max_iterations < 1) {
        throw Error(ErrorCategory::bad_config, "lambda must be >= 0, tolerance > 0, max_iterations >= 1");
    }
    const std::size_t m = train.layers.size();
    double positive = 0.0, negative = 0.0;
    for (const auto& row : train.rows) {
        if (row.features.size() != m) {
            throw Error(ErrorCategory::layer_mismatch, "training row has " + std::to_string(row.features.size()) +
                                                           " features for " + std::to_string(m) + " layers");
        }
        if (!(row.target >= 0.0 && row.target <= 1.0) || !(row.weight > 0.0)) {
            throw Error(ErrorCategory::bad_config, "targets must lie in [0,1] and weights be positive");
        }
        positive += row.weight * row.target;
        negative += row.weight * (1.0 - row.target);
    }
    if (positive <= 0.0 || negative <= 0.0) {
        throw Error(ErrorCategory::single_class, "training labels contain only one class");
    }

    // Canonical row order makes every floating-point sum independent of input order.
    std::vector<std::size_t> order(train.rows.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ra = train.rows[a];
        const auto& rb = train.rows[b];
        if (ra.features != rb.features) return ra.features < rb.features;
        if (ra.target != rb.target) return ra.target < rb.target;
        return ra.weight < rb.weight;
    });
    std::vector<std::vector<double>> raw;
    std::vector<double> targets, weights;
    raw.reserve(order.size());
    for (auto i : order) {
        raw.push_back(train.rows[i].features);
        targets.push_back(train.rows[i].target);
        weights.push_back(train.rows[i].weight);
    }
    auto standardized = standardize(raw);
    LogisticObjective objective(standardized.values, targets, weights, options.lambda);

    const std::size_t dim = m + 1;
    std::vector<double> params(dim, 0.0);
    double loss = objective.value(params);
    auto grad = objective.gradient(params);
    int iterations = 0;
    bool converged = inf_norm(grad) < options.tolerance;

    while (!converged && iterations < options.max_iterations) {
        ++iterations;
        const auto h = objective.hessian(params);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> hm(
            h.data(), static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
        Eigen::Map<const Eigen::VectorXd> gv(grad.data(), static_cast<Eigen::Index>(dim));

        // Levenberg damping only kicks in when the Hessian is (numerically) singular.
        Eigen::VectorXd step;
        double damping = 0.0;
        for (;;) {
            Eigen::MatrixXd a = hm;
            a.diagonal().array() += damping;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
            if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
                step = -ldlt.solve(gv);
                if (step.allFinite()) break;
            }
            damping = damping == 0.0 ? 1e-10 : damping * 10.0;
            if (damping > 1e10) break;
        }
        if (step.size() == 0 || !step.allFinite()) step = -gv;

        const double slope = gv.dot(step);
        double scale = 1.0;
        std::vector<double> trial(dim);
        bool moved = false;
        for (int halvings = 0; halvings < 60; ++halvings, scale *= 0.5) {
            for (std::size_t j = 0; j < dim; ++j) trial[j] = params[j] + scale * step[static_cast<Eigen::Index>(j)];
            const double trial_loss = objective.value(trial);
            if (trial_loss <= loss + 1e-4 * scale * slope) {
                params = trial;
                loss = trial_loss;
                moved = true;
                break;
            }
        }
        grad = objective.gradient(params);
        converged = inf_norm(grad) < options.tolerance;
        if (!moved) break;
    }

    RealismModel model;
    model.layer_names = train.layers;
    model.weights.assign(params.begin(), params.end() - 1);
    model.intercept = params.back();
    model.feature_means = standardized.stats.means;
    model.feature_stds = standardized.stats.stds;
    model.degenerate = standardized.stats.degenerate;
    model.meta = TrainMeta{options.dataset, options.seed,       options.lambda,    iterations,
                           converged,       inf_norm(grad), options.label_mode, train.rows.size()};
    return model;
}

double RealismModel::logit(std::span<const double> raw_features) const {
    if (raw_features.size() != weights.size()) {
        throw Error(ErrorCategory::layer_mismatch, "feature vector has " + std::to_string(raw_features.size()) +
                                                       " values, model expects " + std::to_string(weights.size()));
    }
    double t = intercept;
    for (std::size_t j = 0; j < weights.size(); ++j) {
        t += weights[j] * ((raw_features[j] - feature_means[j]) / feature_stds[j]);
    }
    return t;
}

std::vector<double> RealismModel::raw_weights() const {
    std::vector<double> out(weights.size());
    for (std::size_t j = 0; j < weights.size(); ++j) out[j] = weights[j] / feature_stds[j];
    return out;
}

double RealismModel::raw_intercept() const {
    double b = intercept;
    for (std::size_t j = 0; j < weights.size(); ++j) b -= weights[j] * feature_means[j] / feature_stds[j];
    return b;
}

double predict_proba(const RealismModel& model, const FeatureVector& fv) {
    return sigmoid(model.logit(fv.values));
}

int label_from_probability(double probability) { return probability >= 0.5 ? 1 : 0; }

int predict_label(const RealismModel& model, const FeatureVector& fv) {
    return label_from_probability(predict_proba(model, fv));
}

void check_layers(const RealismModel& model, std::span<const std::string> layers) {
    bool ok = layers.size() == model.layer_names.size();
    for (std::size_t j = 0; ok && j < layers.size(); ++j) ok = same_layer(layers[j], model.layer_names[j]);
    if (!ok) {
        std::string want, got;
        for (const auto& l : model.layer_names) want += (want.empty() ? "" : ",") + l;
        for (const auto& l : layers) got += (got.empty() ? "" : ",") + l;
        throw Error(ErrorCategory::layer_mismatch, "model layers [" + want + "] vs features [" + got + "]");
    }
}

namespace {

constexpr std::string_view kModelFormat = "realism-model-1";

std::string exact(double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g 0x%016" PRIx64, v, std::bit_cast<std::uint64_t>(v));
    return buf;
}

double parse_exact(const std::string& key, const std::string& text) {
    auto pos = text.find("0x");
    if (pos == std::string::npos) throw Error(ErrorCategory::bad_header, "model field " + key + " lacks hex bits");
    std::uint64_t bits = 0;
    if (std::sscanf(text.c_str() + pos, "0x%" SCNx64, &bits) != 1) {
        throw Error(ErrorCategory::bad_header, "model field " + key + " has malformed hex bits");
    }
    return std::bit_cast<double>(bits);
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%" SCNu64 "%c", &v, &tail) != 1) {
        throw Error(ErrorCategory::bad_header, "model field " + key + " is not an unsigned integer: " + text);
    }
    return v;
}

} // namespace

void save_model(const std::filesystem::path& path, const RealismModel& model) {
    const std::size_t m = model.weights.size();
    if (model.layer_names.size() != m || model.feature_means.size() != m || model.feature_stds.size() != m ||
        model.degenerate.size() != m) {
        throw Error(ErrorCategory::layer_mismatch, "model fields disagree in length");
    }
    for (const auto& s : {model.meta.dataset, model.meta.label_mode}) {
        if (s.find_first_of("\r\n") != std::string::npos) {
            throw Error(ErrorCategory::bad_config, "model metadata contains a line break");
        }
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCategory::io, "cannot open " + path.string() + " for writing");
    out << "format = " << kModelFormat << '\n';
    std::string layers;
    for (const auto& l : model.layer_names) layers += (layers.empty() ? "" : ",") + l;
    out << "layers = " << layers << '\n';
    out << "intercept = " << exact(model.intercept) << '\n';
    for (std::size_t j = 0; j < m; ++j) out << "weight." << j << " = " << exact(model.weights[j]) << '\n';
    for (std::size_t j = 0; j < m; ++j) out << "mean." << j << " = " << exact(model.feature_means[j]) << '\n';
    for (std::size_t j = 0; j < m; ++j) out << "std." << j << " = " << exact(model.feature_stds[j]) << '\n';
    for (std::size_t j = 0; j < m; ++j) out << "degenerate." << j << " = " << (model.degenerate[j] ? 1 : 0) << '\n';
    out << "dataset = " << model.meta.dataset << '\n'
        << "seed = " << model.meta.seed << '\n'
        << "lambda = " << exact(model.meta.lambda) << '\n'
        << "iterations = " << model.meta.iterations << '\n'
        << "converged = " << (model.meta.converged ? 1 : 0) << '\n'
        << "gradient_norm = " << exact(model.meta.gradient_norm) << '\n'
        << "label_mode = " << model.meta.label_mode << '\n'
        << "rows = " << model.meta.rows << '\n';
    if (!out) throw Error(ErrorCategory::io, "write failed: " + path.string());
}

RealismModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::io, "cannot open " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find(" = ");
        if (eq == std::string::npos) {
            throw Error(ErrorCategory::bad_header, path.string() + ": malformed line: " + line);
        }
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw Error(ErrorCategory::bad_header, path.string() + ": missing field " + key);
        return it->second;
    };
    if (get("format") != kModelFormat) throw Error(ErrorCategory::bad_magic, path.string() + ": unknown model format");

    RealismModel model;
    model.layer_names = parse_layer_list(get("layers"));
    const std::size_t m = model.layer_names.size();
    model.intercept = parse_exact("intercept", get("intercept"));
    for (std::size_t j = 0; j < m; ++j) {
        const auto idx = std::to_string(j);
        model.weights.push_back(parse_exact("weight." + idx, get("weight." + idx)));
        model.feature_means.push_back(parse_exact("mean." + idx, get("mean." + idx)));
        const double sd = parse_exact("std." + idx, get("std." + idx));
        if (!(sd > 0.0)) throw Error(ErrorCategory::bad_header, path.string() + ": non-positive std." + idx);
        model.feature_stds.push_back(sd);
        model.degenerate.push_back(parse_unsigned("degenerate." + idx, get("degenerate." + idx)) != 0);
    }
    model.meta.dataset = get("dataset");
    model.meta.seed = parse_unsigned("seed", get("seed"));
    model.meta.lambda = parse_exact("lambda", get("lambda"));
    model.meta.iterations = static_cast<int>(parse_unsigned("iterations", get("iterations")));
    model.meta.converged = parse_unsigned("converged", get("converged")) != 0;
    model.meta.gradient_norm = parse_exact("gradient_norm", get("gradient_norm"));
    model.meta.label_mode = get("label_mode");
    model.meta.rows = parse_unsigned("rows", get("rows"));
    return model;
}

} // namespace realism
