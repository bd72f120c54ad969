#include "realism/cli.hpp"

#include "realism/csv.hpp"
#include "realism/error.hpp"
#include "realism/evaluation.hpp"
#include "realism/features.hpp"
#include "realism/layers.hpp"
#include "realism/parallel.hpp"
#include "realism/reference_pool.hpp"
#include "realism/regression.hpp"
#include "realism/tensor_io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <unordered_map>

namespace realism {

namespace fs = std::filesystem;

std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::io, "cannot open config file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t number = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++number;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCategory::bad_config, path + ":" + std::to_string(number) + ": expected key=value");
        }
        auto key = trim(line.substr(0, eq));
        if (key.empty()) throw Error(ErrorCategory::bad_config, path + ":" + std::to_string(number) + ": empty key");
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

namespace {

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw Error(ErrorCategory::bad_config, "missing required option --" + what);
    if (!fs::is_regular_file(path)) throw Error(ErrorCategory::io, what + " file not found: " + path);
}

void require_dir(const std::string& path, const std::string& what) {
    if (path.empty()) throw Error(ErrorCategory::bad_config, "missing required option --" + what);
    if (!fs::is_directory(path)) throw Error(ErrorCategory::io, what + " directory not found: " + path);
}

void require_output(const std::string& path, const std::string& what) {
    if (path.empty()) throw Error(ErrorCategory::bad_config, "missing required option --" + what);
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty() && !fs::is_directory(parent)) {
        throw Error(ErrorCategory::io, "output directory does not exist: " + parent.string());
    }
}

std::vector<std::string> resolve_layers(const std::string& text) {
    return text.empty() ? default_layers() : parse_layer_list(text);
}

std::string join(const std::vector<std::string>& items, const char* sep = ",") {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : sep) + s;
    return out;
}

fs::path pool_path(const fs::path& dir, const std::string& layer) {
    auto path = dir / (layer + ".pool");
    if (!fs::exists(path)) {
        if (auto alias = layer_alias(layer)) {
            if (fs::exists(dir / (*alias + ".pool"))) return dir / (*alias + ".pool");
        }
    }
    return path;
}

/// Fills options the command line left unset from the config file.
void apply_config(CLI::App& sub, const std::map<std::string, std::string>& config) {
    for (CLI::Option* opt : sub.get_options()) {
        if (opt->count() > 0 || opt->get_lnames().empty()) continue;
        auto it = config.find(opt->get_lnames().front());
        if (it == config.end()) continue;
        if (opt->get_type_size() == 0) {
            // Flag: accept the usual truthy spellings.
            const auto& v = it->second;
            if (v == "1" || v == "true" || v == "yes" || v == "on") opt->add_result("true");
            else if (v == "0" || v == "false" || v == "no" || v == "off") opt->add_result("false");
            else throw Error(ErrorCategory::bad_config, "flag " + it->first + " needs a boolean value, got " + v);
        } else {
            opt->add_result(it->second);
        }
        try {
            opt->run_callback();
        } catch (const CLI::ParseError& e) {
            throw Error(ErrorCategory::bad_config, "config key " + it->first + ": " + e.what());
        }
    }
}

struct BuildRefArgs {
    std::string bundles, layers, out;
    std::size_t cap = kDefaultPoolCap;
    std::uint64_t seed = 0;
    bool location_matched = false;
    unsigned threads = 0;
};

struct FeaturizeArgs {
    std::string bundles, pools, layers, out, aggregation = "sum";
    unsigned threads = 0;
};

struct SplitArgs {
    std::string labels, train_out, test_out;
    double frac = 0.1;
    std::uint64_t seed = 0;
    bool stratified = false;
};

struct TrainArgs {
    std::string features, labels, out, aggregate = "rows", dataset;
    double lambda = 1e-4, tol = 1e-8;
    int max_iter = 500;
    std::uint64_t seed = 0;
};

struct PredictArgs {
    std::string model, features, out;
};

struct EvaluateArgs {
    std::vector<std::string> models, features, labels, spectrum_labels, test_names;
    std::string mode = "binary", out, table;
};

int cmd_build_ref(const BuildRefArgs& a, std::ostream& out, std::ostream& err) {
    require_dir(a.bundles, "bundles");
    if (a.out.empty()) throw Error(ErrorCategory::bad_config, "missing required option --out");
    const auto layers = resolve_layers(a.layers);
    const unsigned threads = resolve_threads(a.threads);
    err << "config: build-ref bundles=" << a.bundles << " layers=" << join(layers) << " cap=" << a.cap
        << " seed=" << a.seed << " location_matched=" << (a.location_matched ? 1 : 0) << " threads=" << threads
        << " out=" << a.out << '\n';

    const auto ids = list_bundle_ids(a.bundles);
    if (ids.empty()) throw Error(ErrorCategory::empty_input, "no image bundles under " + a.bundles);
    // Constructing the sources checks every layer file before anything is built.
    std::vector<BundleDirSource> sources;
    sources.reserve(layers.size());
    for (const auto& layer : layers) sources.emplace_back(a.bundles, ids, layer);

    PoolConfig config{a.cap, a.seed, a.location_matched};
    std::vector<ReferencePool> pools(layers.size());
    parallel_for(layers.size(), threads,
                 [&](std::size_t j) { pools[j] = build_pool(sources[j], layers[j], config); });

    fs::create_directories(a.out);
    for (std::size_t j = 0; j < layers.size(); ++j) {
        const auto path = fs::path(a.out) / (layers[j] + ".pool");
        save_pool(path, pools[j]);
        out << layers[j] << ' ' << pools[j].size() << ' ' << pools[j].channels() << ' ' << path.string() << '\n';
    }
    err << "built " << layers.size() << " reference pools from " << ids.size() << " images\n";
    return 0;
}

int cmd_featurize(const FeaturizeArgs& a, std::ostream& out, std::ostream& err) {
    require_dir(a.bundles, "bundles");
    require_dir(a.pools, "pools");
    require_output(a.out, "out");
    const auto layers = resolve_layers(a.layers);
    FeatureOptions options;
    if (a.aggregation == "sum") options.aggregation = Aggregation::sum;
    else if (a.aggregation == "mean") options.aggregation = Aggregation::mean;
    else throw Error(ErrorCategory::bad_config, "aggregation must be sum or mean");
    const unsigned threads = resolve_threads(a.threads);
    err << "config: featurize bundles=" << a.bundles << " pools=" << a.pools << " layers=" << join(layers)
        << " aggregation=" << a.aggregation << " threads=" << threads << " out=" << a.out << '\n';

    std::vector<ReferencePool> pools;
    for (const auto& layer : layers) {
        const auto path = pool_path(a.pools, layer);
        if (!fs::exists(path)) throw Error(ErrorCategory::io, "missing pool file " + path.string());
        pools.push_back(load_pool(path));
    }
    const auto ids = list_bundle_ids(a.bundles);
    if (ids.empty()) throw Error(ErrorCategory::empty_input, "no image bundles under " + a.bundles);
    for (const auto& id : ids) {
        for (const auto& layer : layers) {
            const auto path = bundle_tensor_path(a.bundles, id, layer);
            if (!fs::exists(path)) throw Error(ErrorCategory::io, "missing layer file " + path.string());
        }
    }

    FeatureTable table{layers, std::vector<FeatureVector>(ids.size())};
    parallel_for(ids.size(), threads, [&](std::size_t i) {
        table.rows[i] = featurize(read_bundle(a.bundles, ids[i], layers), pools, options);
    });
    write_features_csv(a.out, table);
    out << "featurized " << ids.size() << ' ' << a.out << '\n';
    err << "wrote features for " << ids.size() << " images\n";
    return 0;
}

int cmd_split(const SplitArgs& a, std::ostream& out, std::ostream& err) {
    require_file(a.labels, "labels");
    require_output(a.train_out, "train-out");
    require_output(a.test_out, "test-out");
    err << "config: split labels=" << a.labels << " frac=" << format_double(a.frac, 17) << " seed=" << a.seed
        << " stratified=" << (a.stratified ? 1 : 0) << '\n';
    const auto labels = read_labels_csv(a.labels);
    const auto parts = split(labels.records, SplitSpec{a.frac, a.seed, a.stratified});
    write_labels_csv(a.train_out, LabelSet{labels.format, parts.train});
    write_labels_csv(a.test_out, LabelSet{labels.format, parts.test});
    out << "train_records=" << parts.train.size() << " test_records=" << parts.test.size() << '\n';
    return 0;
}

TrainSet build_train_set(const FeatureTable& features, const LabelSet& labels, const std::string& aggregate) {
    std::unordered_map<std::string, const FeatureVector*> by_id;
    for (const auto& row : features.rows) by_id.emplace(row.image_id, &row);
    auto lookup = [&](const std::string& id) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(ErrorCategory::id_mismatch, "labelled image " + id + " has no feature row");
        return it->second;
    };
    TrainSet train{features.layers, {}};
    if (aggregate == "rows") {
        for (const auto& rec : labels.records) {
            const auto* fv = lookup(rec.image_id);
            for (int k = 0; k < rec.raters; ++k) {
                train.rows.push_back({fv->values, k < rec.votes_real ? 1.0 : 0.0, 1.0});
            }
        }
    } else if (aggregate == "mean") {
        std::vector<std::string> order;
        std::unordered_map<std::string, std::pair<long long, long long>> votes;
        for (const auto& rec : labels.records) {
            lookup(rec.image_id);
            auto [it, inserted] = votes.emplace(rec.image_id, std::make_pair(0LL, 0LL));
            if (inserted) order.push_back(rec.image_id);
            it->second.first += rec.votes_real;
            it->second.second += rec.raters;
        }
        for (const auto& id : order) {
            const auto [real, raters] = votes[id];
            train.rows.push_back({lookup(id)->values, static_cast<double>(real) / static_cast<double>(raters), 1.0});
        }
    } else {
        throw Error(ErrorCategory::bad_config, "aggregate-labels must be rows or mean");
    }
    return train;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    require_file(a.features, "features");
    require_file(a.labels, "labels");
    require_output(a.out, "out");
    const std::string dataset = a.dataset.empty() ? fs::path(a.labels).stem().string() : a.dataset;
    err << "config: train features=" << a.features << " labels=" << a.labels << " lambda=" << format_double(a.lambda, 17)
        << " tol=" << format_double(a.tol, 17) << " max_iter=" << a.max_iter << " aggregate=" << a.aggregate
        << " dataset=" << dataset << " seed=" << a.seed << " out=" << a.out << '\n';
    const auto features = read_features_csv(a.features);
    const auto labels = read_labels_csv(a.labels);
    const auto train = build_train_set(features, labels, a.aggregate);
    FitOptions options;
    options.lambda = a.lambda;
    options.tolerance = a.tol;
    options.max_iterations = a.max_iter;
    options.dataset = dataset;
    options.seed = a.seed;
    options.label_mode = a.aggregate;
    const auto model = fit(train, options);
    if (!model.meta.converged) {
        err << "warning: fit did not converge after " << model.meta.iterations
            << " iterations; gradient norm " << format_double(model.meta.gradient_norm, 6) << '\n';
    }
    save_model(a.out, model);
    out << "trained rows=" << model.meta.rows << " iterations=" << model.meta.iterations
        << " converged=" << (model.meta.converged ? 1 : 0)
        << " gradient_norm=" << format_double(model.meta.gradient_norm, 6) << '\n';
    return 0;
}

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
    require_file(a.model, "model");
    require_file(a.features, "features");
    if (!a.out.empty()) require_output(a.out, "out");
    err << "config: predict model=" << a.model << " features=" << a.features
        << " out=" << (a.out.empty() ? "-" : a.out) << '\n';
    const auto model = load_model(a.model);
    const auto features = read_features_csv(a.features);
    check_layers(model, features.layers);
    std::ostringstream text;
    text << "image_id,probability,label\n";
    for (const auto& row : features.rows) {
        const double p = predict_proba(model, row);
        text << row.image_id << ',' << format_double(p, 9) << ',' << label_from_probability(p) << '\n';
    }
    if (a.out.empty()) {
        out << text.str();
    } else {
        std::ofstream file(a.out, std::ios::trunc);
        if (!(file << text.str())) throw Error(ErrorCategory::io, "write failed: " + a.out);
    }
    return 0;
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
    if (a.models.empty()) throw Error(ErrorCategory::bad_config, "missing required option --model");
    if (a.features.empty()) throw Error(ErrorCategory::bad_config, "missing required option --features");
    if (a.features.size() != a.labels.size()) {
        throw Error(ErrorCategory::bad_config, "--features and --labels must be given the same number of times");
    }
    if (!a.spectrum_labels.empty() && a.spectrum_labels.size() != a.features.size()) {
        throw Error(ErrorCategory::bad_config, "--spectrum-labels must pair with --features");
    }
    if (!a.test_names.empty() && a.test_names.size() != a.features.size()) {
        throw Error(ErrorCategory::bad_config, "--test-name must pair with --features");
    }
    if (a.mode != "binary" && a.mode != "spectrum" && a.mode != "both") {
        throw Error(ErrorCategory::bad_config, "mode must be binary, spectrum or both");
    }
    for (const auto& m : a.models) require_file(m, "model");
    for (const auto& f : a.features) require_file(f, "features");
    for (const auto& l : a.labels) require_file(l, "labels");
    for (const auto& l : a.spectrum_labels) require_file(l, "spectrum-labels");
    if (!a.out.empty()) require_output(a.out, "out");
    if (!a.table.empty()) require_output(a.table, "table");

    std::vector<std::string> names = a.test_names;
    if (names.empty()) {
        for (const auto& l : a.labels) names.push_back(fs::path(l).stem().string());
    }
    err << "config: evaluate models=" << join(a.models) << " features=" << join(a.features)
        << " labels=" << join(a.labels) << " mode=" << a.mode << " tests=" << join(names) << '\n';

    std::vector<RealismModel> models;
    for (const auto& m : a.models) models.push_back(load_model(m));
    std::vector<FeatureTable> tables;
    std::vector<LabelSet> binary_labels, spectrum_labels;
    for (std::size_t i = 0; i < a.features.size(); ++i) {
        tables.push_back(read_features_csv(a.features[i]));
        binary_labels.push_back(read_labels_csv(a.labels[i]));
        spectrum_labels.push_back(a.spectrum_labels.empty() ? binary_labels.back()
                                                            : read_labels_csv(a.spectrum_labels[i]));
    }

    std::vector<EvalReport> reports;
    for (const auto& model : models) {
        for (std::size_t i = 0; i < tables.size(); ++i) {
            if (a.mode == "binary" || a.mode == "both") {
                reports.push_back(evaluate(model, tables[i], binary_labels[i].records, EvalMode::binary, names[i]));
            }
            if (a.mode == "spectrum" || a.mode == "both") {
                reports.push_back(
                    evaluate(model, tables[i], spectrum_labels[i].records, EvalMode::spectrum, names[i]));
            }
        }
    }

    const auto table = format_table(reports);
    if (a.out.empty()) {
        write_report(out, reports);
    } else {
        std::ofstream file(a.out, std::ios::trunc);
        write_report(file, reports);
        if (!file) throw Error(ErrorCategory::io, "write failed: " + a.out);
    }
    if (!a.table.empty()) {
        std::ofstream file(a.table, std::ios::trunc);
        if (!(file << table)) throw Error(ErrorCategory::io, "write failed: " + a.table);
    }
    err << table;
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sample-level image realism scoring", "realism"};
    app.set_version_flag("--version", kVersion);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "flat key=value file supplying option defaults");

    BuildRefArgs build_args;
    auto* build = app.add_subcommand("build-ref", "build per-layer reference pools from training bundles");
    build->add_option("--bundles", build_args.bundles, "bundle directory (<dir>/<image_id>/<layer>.atn)");
    build->add_option("--layers", build_args.layers, "comma-separated layer names (default: 7 Inception-V3 layers)");
    build->add_option("--cap", build_args.cap, "maximum vectors per layer")->check(CLI::PositiveNumber);
    build->add_option("--seed", build_args.seed, "subsampling seed");
    build->add_flag("--location-matched", build_args.location_matched, "keep one reference set per spatial location");
    build->add_option("--threads", build_args.threads, "worker threads (0 = REALISM_THREADS or auto)");
    build->add_option("--out", build_args.out, "output directory for <layer>.pool files");

    FeaturizeArgs feat_args;
    auto* feat = app.add_subcommand("featurize", "compute nearest-neighbour distance features");
    feat->add_option("--bundles", feat_args.bundles, "bundle directory of the images to score");
    feat->add_option("--pools", feat_args.pools, "directory of <layer>.pool files");
    feat->add_option("--layers", feat_args.layers, "comma-separated layer names");
    feat->add_option("--aggregation", feat_args.aggregation, "sum (default) or mean over spatial locations");
    feat->add_option("--threads", feat_args.threads, "worker threads (0 = REALISM_THREADS or auto)");
    feat->add_option("--out", feat_args.out, "feature CSV to write");

    SplitArgs split_args;
    auto* split_cmd = app.add_subcommand("split", "split labels into train and test sets by image");
    split_cmd->add_option("--labels", split_args.labels, "label CSV");
    split_cmd->add_option("--frac", split_args.frac, "fraction of images held out for testing");
    split_cmd->add_option("--seed", split_args.seed, "shuffle seed");
    split_cmd->add_flag("--stratified", split_args.stratified, "balance majority-real/fake images across sides");
    split_cmd->add_option("--train-out", split_args.train_out, "training label CSV to write");
    split_cmd->add_option("--test-out", split_args.test_out, "test label CSV to write");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "fit the logistic realism model");
    train->add_option("--features", train_args.features, "feature CSV");
    train->add_option("--labels", train_args.labels, "label CSV");
    train->add_option("--lambda", train_args.lambda, "L2 penalty on the weights")->check(CLI::NonNegativeNumber);
    train->add_option("--tol", train_args.tol, "gradient infinity-norm tolerance")->check(CLI::PositiveNumber);
    train->add_option("--max-iter", train_args.max_iter, "iteration limit")->check(CLI::PositiveNumber);
    train->add_option("--aggregate-labels", train_args.aggregate, "rows (one row per label) or mean (per image)");
    train->add_option("--dataset", train_args.dataset, "dataset name recorded in the model (default: label file stem)");
    train->add_option("--seed", train_args.seed, "seed recorded in the model provenance");
    train->add_option("--out", train_args.out, "model file to write");

    PredictArgs predict_args;
    auto* predict = app.add_subcommand("predict", "score feature vectors with a trained model");
    predict->add_option("--model", predict_args.model, "model file");
    predict->add_option("--features", predict_args.features, "feature CSV");
    predict->add_option("--out", predict_args.out, "prediction CSV (default: standard output)");

    EvaluateArgs eval_args;
    auto* eval = app.add_subcommand("evaluate", "binary accuracy and Spearman correlation against human labels");
    eval->add_option("--model", eval_args.models, "model file (repeatable)");
    eval->add_option("--features", eval_args.features, "feature CSV of a test set (repeatable)");
    eval->add_option("--labels", eval_args.labels, "label CSV paired with --features (repeatable)");
    eval->add_option("--spectrum-labels", eval_args.spectrum_labels, "spectrum label CSV paired with --features");
    eval->add_option("--test-name", eval_args.test_names, "test set name paired with --features");
    eval->add_option("--mode", eval_args.mode, "binary, spectrum or both");
    eval->add_option("--out", eval_args.out, "key/value report file (default: standard output)");
    eval->add_option("--table", eval_args.table, "text table file");

    auto* version = app.add_subcommand("version", "print the version");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << e.what() << '\n';
        return 2;
    }

    try {
        if (version->parsed()) {
            out << "realism " << kVersion << '\n';
            return 0;
        }
        const auto subs = app.get_subcommands();
        if (subs.empty()) {
            err << "error: usage: a subcommand is required (build-ref, featurize, split, train, predict, evaluate, "
                   "version)\n";
            return 2;
        }
        if (!config_path.empty()) apply_config(*subs.front(), read_config_file(config_path));

        if (build->parsed()) return cmd_build_ref(build_args, out, err);
        if (feat->parsed()) return cmd_featurize(feat_args, out, err);
        if (split_cmd->parsed()) return cmd_split(split_args, out, err);
        if (train->parsed()) return cmd_train(train_args, out, err);
        if (predict->parsed()) return cmd_predict(predict_args, out, err);
        if (eval->parsed()) return cmd_evaluate(eval_args, out, err);
    } catch (const Error& e) {
        err << "error: " << category_name(e.category()) << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

} // namespace realism
