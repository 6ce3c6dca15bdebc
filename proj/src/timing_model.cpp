#include "caps/timing_model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

using nlohmann::json;

namespace caps {

namespace {

constexpr const char* kFormatName = "caps-model-set";
constexpr int kFormatVersion = 1;
constexpr double kMinPrediction = 0.001;

double median_of(std::vector<double> values) {
    const size_t n = values.size();
    if (n == 0)
        return 0.0;
    std::sort(values.begin(), values.end());
    if (n % 2 == 1)
        return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

// Exact greedy least-squares split on the sign pseudo-residuals. Targets
// are -1/0/+1, so prefix sums are integer-exact and the search result does
// not depend on row order. Ties resolve to the lowest feature index, then
// the lowest threshold, by scanning in that order and requiring strictly
// better gain.
SplitChoice best_split(std::span<const TrainSample> rows, const std::vector<double>& sign_target,
                       const std::vector<int>& node_rows, int min_samples_leaf,
                       std::vector<int>& scratch) {
    SplitChoice best;
    const int n = static_cast<int>(node_rows.size());
    if (n < 2 * min_samples_leaf)
        return best;

    double total = 0.0;
    for (int idx : node_rows)
        total += sign_target[static_cast<size_t>(idx)];
    const double parent_score = total * total / n;

    scratch = node_rows;
    for (int feature = 0; feature < FeatureVector::kCount; ++feature) {
        std::sort(scratch.begin(), scratch.end(), [&](int a, int b) {
            const double va = rows[static_cast<size_t>(a)].first[feature];
            const double vb = rows[static_cast<size_t>(b)].first[feature];
            if (va != vb)
                return va < vb;
            return a < b;
        });

        double left_sum = 0.0;
        for (int pos = 1; pos < n; ++pos) {
            left_sum += sign_target[static_cast<size_t>(scratch[static_cast<size_t>(pos - 1)])];
            const double prev = rows[static_cast<size_t>(scratch[static_cast<size_t>(pos - 1)])]
                                    .first[feature];
            const double next =
                rows[static_cast<size_t>(scratch[static_cast<size_t>(pos)])].first[feature];
            if (prev == next)
                continue;
            if (pos < min_samples_leaf || n - pos < min_samples_leaf)
                continue;
            const double threshold = 0.5 * (prev + next);
            if (!(prev < threshold))
                continue; // adjacent representable values; no separating midpoint
            const double right_sum = total - left_sum;
            const double gain =
                left_sum * left_sum / pos + right_sum * right_sum / (n - pos) - parent_score;
            if (gain > best.gain) {
                best.found = true;
                best.feature = feature;
                best.threshold = threshold;
                best.gain = gain;
            }
        }
    }
    return best;
}

struct TreeBuilder {
    std::span<const TrainSample> rows;
    const std::vector<double>& sign_target;
    const std::vector<double>& residual;
    const Hyperparams& params;
    RegressionTree tree;
    std::vector<int> scratch;

    int build(std::vector<int>&& node_rows, int depth) {
        SplitChoice split;
        if (depth < params.max_depth)
            split = best_split(rows, sign_target, node_rows, params.min_samples_leaf, scratch);

        const int index = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        if (!split.found) {
            std::vector<double> leaf_residuals;
            leaf_residuals.reserve(node_rows.size());
            for (int idx : node_rows)
                leaf_residuals.push_back(residual[static_cast<size_t>(idx)]);
            tree.nodes[static_cast<size_t>(index)].value = median_of(std::move(leaf_residuals));
            return index;
        }

        std::vector<int> left_rows;
        std::vector<int> right_rows;
        for (int idx : node_rows) {
            if (rows[static_cast<size_t>(idx)].first[split.feature] < split.threshold)
                left_rows.push_back(idx);
            else
                right_rows.push_back(idx);
        }
        if (left_rows.empty() || right_rows.empty()) {
            // Cannot happen for thresholds strictly between two values; keep
            // the node a leaf rather than emit an empty child.
            std::vector<double> leaf_residuals;
            node_rows = left_rows.empty() ? std::move(right_rows) : std::move(left_rows);
            leaf_residuals.reserve(node_rows.size());
            for (int idx : node_rows)
                leaf_residuals.push_back(residual[static_cast<size_t>(idx)]);
            tree.nodes[static_cast<size_t>(index)].value = median_of(std::move(leaf_residuals));
            return index;
        }
        node_rows.clear();

        tree.nodes[static_cast<size_t>(index)].feature = split.feature;
        tree.nodes[static_cast<size_t>(index)].threshold = split.threshold;
        const int left = build(std::move(left_rows), depth + 1);
        tree.nodes[static_cast<size_t>(index)].left = left;
        const int right = build(std::move(right_rows), depth + 1);
        tree.nodes[static_cast<size_t>(index)].right = right;
        return index;
    }
};

std::vector<int> subsample_rows(size_t n, double fraction, uint64_t seed, int round) {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    if (fraction >= 1.0)
        return all;
    const size_t keep = std::max<size_t>(1, static_cast<size_t>(fraction * static_cast<double>(n)));
    std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(round + 1));
    for (size_t i = 0; i < keep; ++i) {
        std::uniform_int_distribution<size_t> dist(i, n - 1);
        std::swap(all[i], all[dist(rng)]);
    }
    all.resize(keep);
    std::sort(all.begin(), all.end());
    return all;
}

json tree_to_json(const RegressionTree& tree) {
    json nodes = json::array();
    for (const TreeNode& n : tree.nodes) {
        if (n.is_leaf())
            nodes.push_back(json{{"v", n.value}});
        else
            nodes.push_back(json{{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}});
    }
    return nodes;
}

RegressionTree tree_from_json(const json& nodes) {
    if (!nodes.is_array() || nodes.empty())
        throw std::runtime_error("model file: tree must be a non-empty node array");
    RegressionTree tree;
    tree.nodes.reserve(nodes.size());
    for (const json& n : nodes) {
        TreeNode node;
        if (n.contains("v")) {
            node.value = n.at("v").get<double>();
        } else {
            node.feature = n.at("f").get<int>();
            node.threshold = n.at("t").get<double>();
            node.left = n.at("l").get<int>();
            node.right = n.at("r").get<int>();
            if (node.feature < 0 || node.feature >= FeatureVector::kCount)
                throw std::runtime_error("model file: split feature index out of range");
            if (!std::isfinite(node.threshold))
                throw std::runtime_error("model file: split threshold is not finite");
        }
        tree.nodes.push_back(node);
    }

    // Walk from the root: every node must be visited exactly once and every
    // path must end in a leaf.
    const int count = static_cast<int>(tree.nodes.size());
    std::vector<char> seen(static_cast<size_t>(count), 0);
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const int at = stack.back();
        stack.pop_back();
        if (at < 0 || at >= count)
            throw std::runtime_error("model file: tree child index out of range");
        if (seen[static_cast<size_t>(at)])
            throw std::runtime_error("model file: tree topology is not a tree");
        seen[static_cast<size_t>(at)] = 1;
        const TreeNode& node = tree.nodes[static_cast<size_t>(at)];
        if (!node.is_leaf()) {
            stack.push_back(node.left);
            stack.push_back(node.right);
        }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        throw std::runtime_error("model file: tree contains unreachable nodes");
    return tree;
}

} // namespace

FeatureVector FeatureVector::make(double E, double h, double L, int width, double bitrate_kbps) {
    if (width < 2)
        throw std::invalid_argument("feature vector: width must be at least 2 pixels");
    if (!(bitrate_kbps > 0.0))
        throw std::invalid_argument("feature vector: bitrate must be positive");
    return FeatureVector{E, h, L, std::log(static_cast<double>(width)), std::log(bitrate_kbps)};
}

double RegressionTree::eval(const FeatureVector& fv) const {
    const TreeNode* node = &nodes[0];
    while (!node->is_leaf()) {
        const int next = fv[node->feature] < node->threshold ? node->left : node->right;
        node = &nodes[static_cast<size_t>(next)];
    }
    return node->value;
}

TreeEnsemble train_ensemble(std::span<const TrainSample> rows, const Hyperparams& params) {
    if (rows.size() < static_cast<size_t>(2 * params.min_samples_leaf))
        throw std::invalid_argument("train_ensemble: need at least " +
                                    std::to_string(2 * params.min_samples_leaf) + " rows, got " +
                                    std::to_string(rows.size()));
    if (params.max_depth < 1 || params.n_trees < 0 || params.min_samples_leaf < 1 ||
        !(params.learning_rate > 0.0) || !(params.subsample > 0.0) || params.subsample > 1.0)
        throw std::invalid_argument("train_ensemble: invalid hyperparameters");
    std::vector<double> targets;
    targets.reserve(rows.size());
    for (const TrainSample& row : rows) {
        for (int f = 0; f < FeatureVector::kCount; ++f)
            if (!std::isfinite(row.first[f]))
                throw std::invalid_argument("train_ensemble: non-finite feature value");
        if (!(row.second > 0.0) || !std::isfinite(row.second))
            throw std::invalid_argument("train_ensemble: targets must be positive and finite");
        targets.push_back(row.second);
    }

    TreeEnsemble ensemble;
    ensemble.hyperparams = params;
    ensemble.learning_rate = params.learning_rate;
    ensemble.base_score = median_of(targets);

    std::vector<double> prediction(rows.size(), ensemble.base_score);
    std::vector<double> residual(rows.size());
    for (size_t i = 0; i < rows.size(); ++i)
        residual[i] = targets[i] - prediction[i];

    std::vector<double> sign_target(rows.size());
    for (int round = 0; round < params.n_trees; ++round) {
        double max_abs = 0.0;
        for (double r : residual)
            max_abs = std::max(max_abs, std::abs(r));
        if (max_abs == 0.0)
            break;

        for (size_t i = 0; i < rows.size(); ++i)
            sign_target[i] = residual[i] > 0.0 ? 1.0 : (residual[i] < 0.0 ? -1.0 : 0.0);

        TreeBuilder builder{rows, sign_target, residual, params, {}, {}};
        builder.build(subsample_rows(rows.size(), params.subsample, params.seed, round), 0);
        RegressionTree tree = std::move(builder.tree);

        for (size_t i = 0; i < rows.size(); ++i) {
            prediction[i] += params.learning_rate * tree.eval(rows[i].first);
            residual[i] = targets[i] - prediction[i];
        }
        ensemble.trees.push_back(std::move(tree));
    }
    return ensemble;
}

double predict(const TreeEnsemble& ensemble, const FeatureVector& fv) {
    double out = ensemble.base_score;
    for (const RegressionTree& tree : ensemble.trees)
        out += ensemble.learning_rate * tree.eval(fv);
    return std::max(out, kMinPrediction);
}

const char* TrainingDataset::csv_header() { return "E,h,L,width,bitrate_kbps,preset,time_seconds"; }

TrainingDataset TrainingDataset::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("training dataset: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("training dataset: empty file " + path.string());
    if (line != csv_header())
        throw std::runtime_error("training dataset: unexpected header '" + line + "' in " +
                                 path.string());

    TrainingDataset out;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::istringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ','))
            fields.push_back(field);
        if (fields.size() != 7)
            throw std::runtime_error("training dataset: line " + std::to_string(line_no) +
                                     ": expected 7 fields");
        TrainingRow row;
        const double E = std::stod(fields[0]);
        const double h = std::stod(fields[1]);
        const double L = std::stod(fields[2]);
        row.width = std::stoi(fields[3]);
        const double bitrate = std::stod(fields[4]);
        row.preset = std::stoi(fields[5]);
        row.time_seconds = std::stod(fields[6]);
        row.features = FeatureVector::make(E, h, L, row.width, bitrate);
        if (!(row.time_seconds > 0.0))
            throw std::runtime_error("training dataset: line " + std::to_string(line_no) +
                                     ": observed time must be positive");
        out.rows.push_back(row);
    }
    return out;
}

void TrainingDataset::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("training dataset: cannot write " + path.string());
    out << csv_header() << "\n";
    out.precision(17);
    for (const TrainingRow& row : rows) {
        out << row.features.E << ',' << row.features.h << ',' << row.features.L << ','
            << row.width << ',' << std::exp(row.features.log_b) << ',' << row.preset << ','
            << row.time_seconds << "\n";
    }
}

bool ModelSet::supports(int width) const {
    return std::find(resolutions.begin(), resolutions.end(), width) != resolutions.end();
}

std::string ModelSet::supported_list() const {
    std::string out;
    for (size_t i = 0; i < resolutions.size(); ++i) {
        if (i)
            out += ", ";
        out += std::to_string(resolutions[i]);
    }
    return out;
}

const TreeEnsemble& ModelSet::at(int width, int preset) const {
    auto it = models.find({width, preset});
    if (it == models.end())
        throw std::out_of_range("model set: no model for width " + std::to_string(width) +
                                " preset " + std::to_string(preset) +
                                "; supported resolutions: " + supported_list());
    return it->second;
}

ModelSet train_model_set(const TrainingDataset& dataset, std::vector<int> resolutions,
                         int preset_min, int preset_max, const Hyperparams& params) {
    if (preset_min > preset_max)
        throw std::invalid_argument("train_model_set: preset range is empty");
    if (resolutions.empty()) {
        for (const TrainingRow& row : dataset.rows)
            resolutions.push_back(row.width);
        std::sort(resolutions.begin(), resolutions.end());
        resolutions.erase(std::unique(resolutions.begin(), resolutions.end()), resolutions.end());
    } else {
        std::sort(resolutions.begin(), resolutions.end());
        resolutions.erase(std::unique(resolutions.begin(), resolutions.end()), resolutions.end());
    }
    if (resolutions.empty())
        throw std::invalid_argument("train_model_set: no resolutions to train");

    ModelSet set;
    set.preset_min = preset_min;
    set.preset_max = preset_max;
    set.resolutions = resolutions;

    for (int width : resolutions) {
        for (int preset = preset_min; preset <= preset_max; ++preset) {
            std::vector<TrainSample> group;
            for (const TrainingRow& row : dataset.rows)
                if (row.width == width && row.preset == preset)
                    group.emplace_back(row.features, row.time_seconds);
            try {
                set.models.emplace(std::make_pair(width, preset),
                                   train_ensemble(group, params));
            } catch (const std::exception& e) {
                throw std::runtime_error("training failed for group (width=" +
                                         std::to_string(width) + ", preset=" +
                                         std::to_string(preset) + "): " + e.what());
            }
        }
    }
    return set;
}

std::map<int, double> predict_all_presets(const ModelSet& models, const FeatureVector& fv,
                                          int width) {
    if (!models.supports(width))
        throw std::out_of_range("predict_all_presets: width " + std::to_string(width) +
                                " has no models; supported resolutions: " +
                                models.supported_list());
    std::map<int, double> out;
    for (int preset = models.preset_min; preset <= models.preset_max; ++preset)
        out[preset] = predict(models.at(width, preset), fv);
    return out;
}

std::string serialize_model_set(const ModelSet& models) {
    json doc;
    doc["format"] = kFormatName;
    doc["version"] = kFormatVersion;
    doc["conventions"] = {
        {"log_base", "e"}, {"bitrate_unit", "kbps"}, {"resolution_unit", "width_pixels"}};
    doc["features"] = {"E", "h", "L", "log_r", "log_b"};
    doc["preset_min"] = models.preset_min;
    doc["preset_max"] = models.preset_max;
    doc["resolutions"] = models.resolutions;

    json entries = json::array();
    for (const auto& [key, ensemble] : models.models) {
        json trees = json::array();
        for (const RegressionTree& tree : ensemble.trees)
            trees.push_back(tree_to_json(tree));
        entries.push_back(json{{"width", key.first},
                               {"preset", key.second},
                               {"base_score", ensemble.base_score},
                               {"learning_rate", ensemble.learning_rate},
                               {"hyperparams",
                                {{"n_trees", ensemble.hyperparams.n_trees},
                                 {"max_depth", ensemble.hyperparams.max_depth},
                                 {"learning_rate", ensemble.hyperparams.learning_rate},
                                 {"min_samples_leaf", ensemble.hyperparams.min_samples_leaf},
                                 {"subsample", ensemble.hyperparams.subsample},
                                 {"seed", ensemble.hyperparams.seed}}},
                               {"trees", std::move(trees)}});
    }
    doc["models"] = std::move(entries);
    return doc.dump(1);
}

ModelSet load_model_set(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("model file: not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("format", "") != kFormatName)
        throw std::runtime_error("model file: unrecognized format");
    if (doc.value("version", -1) != kFormatVersion)
        throw std::runtime_error("model file: unsupported version " +
                                 std::to_string(doc.value("version", -1)) + ", expected " +
                                 std::to_string(kFormatVersion));

    ModelSet set;
    try {
        set.preset_min = doc.at("preset_min").get<int>();
        set.preset_max = doc.at("preset_max").get<int>();
        set.resolutions = doc.at("resolutions").get<std::vector<int>>();
        if (set.preset_min > set.preset_max)
            throw std::runtime_error("model file: empty preset range");

        for (const json& entry : doc.at("models")) {
            TreeEnsemble ensemble;
            const int width = entry.at("width").get<int>();
            const int preset = entry.at("preset").get<int>();
            ensemble.base_score = entry.at("base_score").get<double>();
            ensemble.learning_rate = entry.at("learning_rate").get<double>();
            const json& hp = entry.at("hyperparams");
            ensemble.hyperparams.n_trees = hp.at("n_trees").get<int>();
            ensemble.hyperparams.max_depth = hp.at("max_depth").get<int>();
            ensemble.hyperparams.learning_rate = hp.at("learning_rate").get<double>();
            ensemble.hyperparams.min_samples_leaf = hp.at("min_samples_leaf").get<int>();
            ensemble.hyperparams.subsample = hp.at("subsample").get<double>();
            ensemble.hyperparams.seed = hp.at("seed").get<uint64_t>();
            for (const json& tree : entry.at("trees"))
                ensemble.trees.push_back(tree_from_json(tree));
            if (!set.models.emplace(std::make_pair(width, preset), std::move(ensemble)).second)
                throw std::runtime_error("model file: duplicate model for width " +
                                         std::to_string(width) + " preset " +
                                         std::to_string(preset));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("model file: malformed document: ") + e.what());
    }

    const size_t expected = static_cast<size_t>(set.preset_max - set.preset_min + 1) *
                            set.resolutions.size();
    if (set.models.size() != expected)
        throw std::runtime_error("model file: expected " + std::to_string(expected) +
                                 " models, found " + std::to_string(set.models.size()));
    for (int width : set.resolutions)
        for (int preset = set.preset_min; preset <= set.preset_max; ++preset)
            if (!set.models.count({width, preset}))
                throw std::runtime_error("model file: missing model for width " +
                                         std::to_string(width) + " preset " +
                                         std::to_string(preset));
    return set;
}

void save_model_set_file(const ModelSet& models, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("model file: cannot write " + path.string());
    out << serialize_model_set(models);
}

ModelSet load_model_set_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("model file: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_model_set(ss.str());
}

double mean_absolute_error(std::span<const double> truth, std::span<const double> predicted) {
    if (truth.size() != predicted.size() || truth.empty())
        throw std::invalid_argument("mean_absolute_error: size mismatch");
    double sum = 0.0;
    for (size_t i = 0; i < truth.size(); ++i)
        sum += std::abs(truth[i] - predicted[i]);
    return sum / static_cast<double>(truth.size());
}

double r_squared(std::span<const double> truth, std::span<const double> predicted) {
    if (truth.size() != predicted.size() || truth.empty())
        throw std::invalid_argument("r_squared: size mismatch");
    double mean = 0.0;
    for (double t : truth)
        mean += t;
    mean /= static_cast<double>(truth.size());
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        ss_res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
    }
    if (ss_tot == 0.0)
        return ss_res == 0.0 ? 1.0 : 0.0;
    return 1.0 - ss_res / ss_tot;
}

} // namespace caps
