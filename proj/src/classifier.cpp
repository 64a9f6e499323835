#include "ammrg/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ammrg/binary_io.hpp"
#include "ammrg/errors.hpp"

namespace ammrg::classifier {

namespace {

constexpr std::string_view kMagic = "AMMRGCLF";
constexpr std::uint16_t kVersion = 1;

void check_labels_fit(const LinearClassifier& clf) {
    if (clf.classes() > kDiseaseCount) throw DimensionError("classifier has more classes than label slots");
}

} // namespace

LinearClassifier LinearClassifier::zeros(std::size_t classes, std::size_t dim) {
    return {Mat64(classes, dim), Vec64(classes)};
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Vec64 predict_probs(const LinearClassifier& clf, const Vec64& feature) {
    if (feature.dim() != clf.dim()) {
        throw DimensionError("predict_probs: feature dim " + std::to_string(feature.dim()) + " != classifier dim " +
                             std::to_string(clf.dim()));
    }
    Vec64 logits = matvec(clf.weights, feature);
    for (std::size_t j = 0; j < logits.dim(); ++j) logits[j] = sigmoid(logits[j] + clf.bias[j]);
    return logits;
}

double bce_loss(const Vec64& probs, const LabelVector& labels) {
    if (probs.dim() > kDiseaseCount) throw DimensionError("bce_loss: more probabilities than label slots");
    double loss = 0.0;
    for (std::size_t j = 0; j < probs.dim(); ++j) {
        const double p = std::clamp(probs[j], kProbClamp, 1.0 - kProbClamp);
        loss -= labels.test(j) ? std::log(p) : std::log1p(-p);
    }
    return loss;
}

double mean_loss(const LinearClassifier& clf, std::span<const Sample> data) {
    if (data.empty()) throw InvalidArgument("mean_loss: empty dataset");
    double total = 0.0;
    for (const auto& s : data) total += bce_loss(predict_probs(clf, s.feature), s.labels);
    return total / static_cast<double>(data.size());
}

Gradient loss_gradient(const LinearClassifier& clf, std::span<const Sample> data) {
    if (data.empty()) throw InvalidArgument("loss_gradient: empty dataset");
    check_labels_fit(clf);
    Gradient g{Mat64(clf.classes(), clf.dim()), Vec64(clf.classes())};
    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (const auto& s : data) {
        const Vec64 probs = predict_probs(clf, s.feature);
        for (std::size_t j = 0; j < clf.classes(); ++j) {
            const double residual = (probs[j] - (s.labels.test(j) ? 1.0 : 0.0)) * inv_n;
            g.bias[j] += residual;
            axpy(residual, s.feature.view(), g.weights.row(j));
        }
    }
    return g;
}

TrainResult train(std::span<const Sample> data, const TrainConfig& config) {
    if (data.empty()) throw InvalidArgument("train: empty dataset");
    if (!(config.learning_rate >= 0.0)) throw InvalidArgument("train: learning_rate must be >= 0");
    const std::size_t dim = data.front().feature.dim();
    for (const auto& s : data) {
        if (s.feature.dim() != dim) throw DimensionError("train: inconsistent feature dimensions");
    }

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> init(0.0, 1e-2);
    LinearClassifier clf = LinearClassifier::zeros(kDiseaseCount, dim);
    for (std::size_t j = 0; j < kDiseaseCount; ++j) {
        for (std::size_t i = 0; i < dim; ++i) clf.weights(j, i) = init(rng);
    }

    TrainResult result;
    result.loss_trace.reserve(config.epochs + 1);
    result.loss_trace.push_back(mean_loss(clf, data));
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const Gradient g = loss_gradient(clf, data);
        for (std::size_t j = 0; j < clf.classes(); ++j) {
            axpy(-config.learning_rate, g.weights.row(j), clf.weights.row(j));
            clf.bias[j] -= config.learning_rate * g.bias[j];
        }
        const double loss = mean_loss(clf, data);
        if (!std::isfinite(loss)) throw NumericError("train: loss diverged at epoch " + std::to_string(epoch + 1));
        result.loss_trace.push_back(loss);
    }
    result.classifier = std::move(clf);
    return result;
}

LabelVector predict_labels(const LinearClassifier& clf, const Vec64& feature, double threshold) {
    check_labels_fit(clf);
    const Vec64 probs = predict_probs(clf, feature);
    LabelVector out;
    for (std::size_t j = 0; j < probs.dim(); ++j) out.set(j, probs[j] > threshold);
    return out;
}

std::vector<double> patch_scores(const LinearClassifier& clf, const Mat64& patch_features, std::size_t class_id) {
    if (class_id >= clf.classes()) throw InvalidArgument("class_id " + std::to_string(class_id) + " out of range");
    if (patch_features.cols() != clf.dim()) throw DimensionError("patch feature width differs from classifier dim");
    std::vector<double> scores(patch_features.rows());
    const auto w = clf.weights.row(class_id);
    for (std::size_t p = 0; p < scores.size(); ++p) scores[p] = std::max(0.0, dot(w, patch_features.row(p)));
    return scores;
}

roi::ActivationMap linear_cam(const LinearClassifier& clf, const Mat64& patch_features, std::size_t class_id,
                              std::size_t grid_rows, std::size_t grid_cols, std::size_t patch_size) {
    if (patch_features.rows() != grid_rows * grid_cols) {
        throw DimensionError("linear_cam: expected " + std::to_string(grid_rows * grid_cols) + " patch rows");
    }
    std::vector<double> scores = patch_scores(clf, patch_features, class_id);
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    const double min = *lo;
    const double range = *hi - *lo;
    for (double& s : scores) s = range > 0.0 ? (s - min) / range : 0.0;

    roi::ActivationMap map;
    map.height = grid_rows * patch_size;
    map.width = grid_cols * patch_size;
    map.values.resize(map.height * map.width);
    for (std::size_t y = 0; y < map.height; ++y) {
        for (std::size_t x = 0; x < map.width; ++x) {
            map.values[y * map.width + x] = scores[(y / patch_size) * grid_cols + x / patch_size];
        }
    }
    return map;
}

std::vector<std::uint8_t> encode_classifier(const LinearClassifier& clf) {
    io::ByteWriter w;
    w.bytes(kMagic);
    w.u16(kVersion);
    w.u32(static_cast<std::uint32_t>(clf.classes()));
    w.u32(static_cast<std::uint32_t>(clf.dim()));
    for (double v : clf.weights.data()) w.f64(v);
    for (double v : clf.bias) w.f64(v);
    return w.buffer();
}

LinearClassifier decode_classifier(std::span<const std::uint8_t> data) {
    io::ByteReader r(data);
    if (data.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) throw ParseError("bad classifier magic", 0);
    const std::size_t version_at = r.offset();
    if (r.u16() != kVersion) throw ParseError("unsupported classifier version", version_at);
    const std::size_t classes = r.u32();
    const std::size_t dim = r.u32();
    const std::size_t expected = (classes * dim + classes) * sizeof(double);
    if (r.remaining() != expected) {
        throw TruncationError("classifier payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                                  std::to_string(expected),
                              r.offset());
    }
    std::vector<double> weights(classes * dim);
    for (auto& v : weights) v = r.f64();
    std::vector<double> bias(classes);
    for (auto& v : bias) v = r.f64();
    try {
        return {Mat64(classes, dim, std::move(weights)), Vec64(std::move(bias))};
    } catch (const NumericError& e) {
        throw ParseError(std::string("classifier parameters: ") + e.what(), 18);
    }
}

void save_classifier(const LinearClassifier& clf, const std::filesystem::path& path) {
    io::write_file(path, encode_classifier(clf));
}

LinearClassifier load_classifier(const std::filesystem::path& path) {
    return decode_classifier(io::read_file(path));
}

} // namespace ammrg::classifier
