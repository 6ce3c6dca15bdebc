#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace caps {

/// Model input: complexity features plus log-scaled resolution and bitrate.
/// Logs are natural; bitrate is in kilobits per second before the log.
struct FeatureVector {
    double E = 0.0;
    double h = 0.0;
    double L = 0.0;
    double log_r = 0.0;
    double log_b = 0.0;

    static constexpr int kCount = 5;
    static FeatureVector make(double E, double h, double L, int width, double bitrate_kbps);

    double operator[](int i) const {
        const std::array<const double*, kCount> f{&E, &h, &L, &log_r, &log_b};
        return *f[static_cast<size_t>(i)];
    }
};

/// One node of a regression tree. Split nodes route x[feature] < threshold
/// to the left child; leaves carry the value in seconds.
struct TreeNode {
    int feature = -1; // < 0 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes; // preorder, root at 0

    double eval(const FeatureVector& fv) const;
};

struct Hyperparams {
    int n_trees = 200;
    int max_depth = 4;
    double learning_rate = 0.1;
    int min_samples_leaf = 5;
    double subsample = 1.0;
    uint64_t seed = 7;
};

/// Boosted ensemble for one (resolution, preset) pair. Prediction is
/// base_score + learning_rate * sum of tree outputs.
struct TreeEnsemble {
    double base_score = 0.0;
    double learning_rate = 0.1;
    Hyperparams hyperparams;
    std::vector<RegressionTree> trees;
};

using TrainSample = std::pair<FeatureVector, double>;

/// Fits gradient boosting for MAE loss: sign pseudo-residuals, exact
/// greedy least-squares splits, median leaf values. Training MAE never
/// exceeds the constant-median baseline.
TreeEnsemble train_ensemble(std::span<const TrainSample> rows, const Hyperparams& params);

/// Deterministic ensemble evaluation, clamped below at 1 ms.
double predict(const TreeEnsemble& ensemble, const FeatureVector& fv);

struct TrainingRow {
    FeatureVector features;
    int width = 0;
    int preset = 0;
    double time_seconds = 0.0;
};

/// Rows of (features, resolution, preset, observed time) as produced by the
/// measurement harness. CSV header: E,h,L,width,bitrate_kbps,preset,time_seconds
struct TrainingDataset {
    std::vector<TrainingRow> rows;

    static TrainingDataset load_csv(const std::filesystem::path& path);
    void save_csv(const std::filesystem::path& path) const;
    static const char* csv_header();
};

/// Boosted models keyed by (resolution width, preset). Holds exactly
/// (preset_max - preset_min + 1) * resolutions.size() ensembles.
struct ModelSet {
    int preset_min = 0;
    int preset_max = 8;
    std::vector<int> resolutions; // sorted distinct widths
    std::map<std::pair<int, int>, TreeEnsemble> models;

    const TreeEnsemble& at(int width, int preset) const;
    bool supports(int width) const;
    std::string supported_list() const;
};

/// Trains one ensemble per (resolution, preset). Resolutions defaults to
/// the distinct widths present in the dataset when the list is empty.
ModelSet train_model_set(const TrainingDataset& dataset, std::vector<int> resolutions,
                         int preset_min, int preset_max, const Hyperparams& params);

/// Predicted seconds for every preset in the supported range of `models`.
std::map<int, double> predict_all_presets(const ModelSet& models, const FeatureVector& fv,
                                          int width);

/// Versioned, human-diffable model document (JSON). Round trips are
/// lossless: predictions after load are bit-identical.
std::string serialize_model_set(const ModelSet& models);
ModelSet load_model_set(const std::string& text);
void save_model_set_file(const ModelSet& models, const std::filesystem::path& path);
ModelSet load_model_set_file(const std::filesystem::path& path);

double mean_absolute_error(std::span<const double> truth, std::span<const double> predicted);
double r_squared(std::span<const double> truth, std::span<const double> predicted);

} // namespace caps
