#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ammrg/diseases.hpp"
#include "ammrg/numerics.hpp"
#include "ammrg/roi_masking.hpp"

namespace ammrg::classifier {

/// Multi-label logistic head: probs = sigmoid(W f + b), one row of W per disease.
struct LinearClassifier {
    Mat64 weights;
    Vec64 bias;

    static LinearClassifier zeros(std::size_t classes, std::size_t dim);

    std::size_t classes() const noexcept { return weights.rows(); }
    std::size_t dim() const noexcept { return weights.cols(); }
    bool operator==(const LinearClassifier&) const = default;
};

struct TrainConfig {
    double learning_rate = 5e-5;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
};

struct Sample {
    Vec64 feature;
    LabelVector labels;
};

struct TrainResult {
    LinearClassifier classifier;
    /// Mean loss before training, then after every epoch.
    std::vector<double> loss_trace;
};

struct Gradient {
    Mat64 weights;
    Vec64 bias;
};

inline constexpr double kProbClamp = 1e-12;

double sigmoid(double x);

Vec64 predict_probs(const LinearClassifier& clf, const Vec64& feature);

/// -sum_j [y_j log p_j + (1 - y_j) log(1 - p_j)], probabilities clamped to [1e-12, 1 - 1e-12].
double bce_loss(const Vec64& probs, const LabelVector& labels);

/// Mean of bce_loss over the dataset.
double mean_loss(const LinearClassifier& clf, std::span<const Sample> data);

/// Analytic gradient of mean_loss with respect to weights and bias.
Gradient loss_gradient(const LinearClassifier& clf, std::span<const Sample> data);

/// Full-batch gradient descent on mean_loss. Parameters start at small
/// seeded Gaussian values (std 1e-2).
TrainResult train(std::span<const Sample> data, const TrainConfig& config);

LabelVector predict_labels(const LinearClassifier& clf, const Vec64& feature, double threshold = 0.5);

/// Per-patch scores max(0, <W_class, f_p>).
std::vector<double> patch_scores(const LinearClassifier& clf, const Mat64& patch_features, std::size_t class_id);

/// Class activation map: patch scores min-max normalized over patches and
/// broadcast to each patch's pixel block. Equal scores give an all-zero map.
roi::ActivationMap linear_cam(const LinearClassifier& clf, const Mat64& patch_features, std::size_t class_id,
                              std::size_t grid_rows = roi::kImageSize / roi::kPatchSize,
                              std::size_t grid_cols = roi::kImageSize / roi::kPatchSize,
                              std::size_t patch_size = roi::kPatchSize);

/// "AMMRGCLF" | u16 version=1 | u32 classes | u32 dim | weights (row-major f64) | bias (f64)
std::vector<std::uint8_t> encode_classifier(const LinearClassifier& clf);
LinearClassifier decode_classifier(std::span<const std::uint8_t> data);
void save_classifier(const LinearClassifier& clf, const std::filesystem::path& path);
LinearClassifier load_classifier(const std::filesystem::path& path);

} // namespace ammrg::classifier
