#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ammrg/classifier.hpp"
#include "ammrg/diseases.hpp"
#include "ammrg/encoders.hpp"
#include "ammrg/hopfield.hpp"
#include "ammrg/memory_bank.hpp"
#include "ammrg/metrics.hpp"
#include "ammrg/roi_masking.hpp"

namespace ammrg::pipeline {

/// Which associative memories feed report assembly.
enum class Ablation { none, visual, report, both };

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view s);

struct PipelineConfig {
    std::uint64_t seed = 0;
    std::size_t n_diseases = kDiseaseCount;
    std::size_t patch_size = roi::kPatchSize;
    std::size_t image_size = roi::kImageSize;
    std::size_t channels = 3;
    double beta = 4.0;
    std::size_t cap_per_disease = bank::kDefaultCapPerDisease;
    std::size_t report_memory_size = bank::kDefaultReportMemorySize;
    double tau = roi::kDefaultTau;
    std::optional<std::size_t> top_k;
    hopfield::Mode mode = hopfield::Mode::cccp;
    std::size_t d_out = 4096;
    /// Association steps per query. One step is the attention-style update.
    std::size_t hopfield_iters = 1;
    double hopfield_tolerance = 1e-6;
    double step_size = 0.01;
    double train_lr = 0.05;
    std::size_t train_epochs = 300;
    std::size_t n_cases = 64;
    Ablation ablation = Ablation::both;

    std::filesystem::path corpus_dir;
    std::filesystem::path classifier_path;
    std::filesystem::path visual_bank_path;
    std::filesystem::path report_bank_path;
    std::filesystem::path out_dir;

    /// Throws InvalidArgument on out-of-range values.
    void validate() const;

    hopfield::HopfieldConfig hopfield() const;
    std::size_t grid() const { return image_size / patch_size; }
};

/// Apply `key = value` assignments; '#' starts a comment. Unknown keys and
/// malformed values throw InvalidArgument naming the line.
void apply_config_text(PipelineConfig& config, std::string_view text);
void apply_config_file(PipelineConfig& config, const std::filesystem::path& path);
void apply_config_value(PipelineConfig& config, std::string_view key, std::string_view value);

// ---------------------------------------------------------------------------
// Synthetic corpus

struct SyntheticCase {
    std::string id;
    roi::ImageTensor image;
    LabelVector labels;
    std::string report;
};

/// Ground-truth sentence used for disease `d` in synthetic reports.
std::string_view finding_sentence(std::size_t d);
/// Sentence assembled when nothing is predicted positive.
inline constexpr std::string_view kNoFindingsSentence = "no acute findings.";

/// Patch indices (row-major on the patch grid) where disease `d` plants its
/// texture. Empty for the no-finding label.
std::vector<std::size_t> disease_patches(std::size_t d, std::size_t grid);

struct CorpusOptions {
    std::size_t n_cases = 64;
    std::uint64_t seed = 0;
    std::size_t n_diseases = kDiseaseCount;
    std::size_t image_size = roi::kImageSize;
    std::size_t patch_size = roi::kPatchSize;
    std::size_t channels = 3;
    /// When set, only these diseases ever appear.
    std::optional<LabelVector> allowed;
};

/// Noise background plus a disease-specific texture at each positive
/// disease's patches. Reports name exactly the positive diseases.
std::vector<SyntheticCase> generate_corpus(const CorpusOptions& options);

/// Diseases whose name occurs as a whole-token phrase in `text`.
LabelVector extract_labels(std::string_view text);

/// Corpus directory: ids.txt, reports.txt, labels.csv (one row per case) and images/<id>.img.
void save_corpus(const std::vector<SyntheticCase>& corpus, const std::filesystem::path& dir);
std::vector<SyntheticCase> load_corpus(const std::filesystem::path& dir);

std::string format_labels(const LabelVector& labels);
LabelVector parse_labels(std::string_view row);

// ---------------------------------------------------------------------------
// Stage 1: classifier, activation maps and RoI mining

/// Region mined for one (case, predicted disease) pair.
struct MinedRegion {
    std::size_t case_index = 0;
    std::size_t disease = 0;
    roi::RoiSelection selection;
};

struct Stage1Result {
    classifier::LinearClassifier classifier;
    std::vector<double> loss_trace;
    std::vector<Mat64> patch_features;
    std::vector<Vec64> pooled;
    std::vector<LabelVector> predicted;
    std::vector<MinedRegion> regions;
    std::vector<bank::VisualCandidate> visual_candidates;
};

encoders::PatchEncoder make_patch_encoder(const PipelineConfig& config);
encoders::SentenceEncoder make_sentence_encoder(const PipelineConfig& config);

/// Train the classifier on standardized pooled features and fold the
/// standardization back into the returned weights.
classifier::TrainResult train_classifier(const std::vector<Vec64>& pooled, const std::vector<LabelVector>& labels,
                                         const PipelineConfig& config);

/// Candidates from one case: CAM -> RoI -> mask -> encode, for every disease in `diseases`.
std::vector<bank::VisualCandidate> mine_case(const SyntheticCase& c, std::size_t case_index, const Mat64& features,
                                             const classifier::LinearClassifier& clf, const LabelVector& diseases,
                                             const encoders::PatchEncoder& encoder, const PipelineConfig& config,
                                             std::vector<MinedRegion>* regions = nullptr);

/// Trains a classifier unless `pretrained` is given.
Stage1Result run_stage1(const std::vector<SyntheticCase>& corpus, const PipelineConfig& config,
                        const classifier::LinearClassifier* pretrained = nullptr);

/// One report-memory candidate per ground-truth sentence.
std::vector<bank::ReportMemoryEntry> report_candidates(const std::vector<SyntheticCase>& corpus,
                                                       const encoders::SentenceEncoder& encoder);

struct Banks {
    bank::VisualBank visual;
    bank::ReportMemory report;
};

Banks build_banks(const std::vector<SyntheticCase>& corpus, const Stage1Result& stage1, const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Stage 2: associative enhancement and report assembly

struct GeneratedReport {
    std::string id;
    std::string text;
    LabelVector predicted;
    /// Frobenius norm of the enhanced feature block (0 when ablated to none).
    double enhanced_norm = 0.0;
};

/// Disease query for `d`: patch features pooled with the class's CAM scores
/// (plain mean pooling when every score is zero).
Vec64 disease_query(const classifier::LinearClassifier& clf, const Mat64& patch_features, std::size_t d);

/// Map from the visual feature space into sentence space. The image of a
/// feature scores against each class's prototype sentence exactly as the
/// classifier's (bias-free) logit for that class.
Mat64 report_bridge(const classifier::LinearClassifier& clf, const bank::ReportMemory& memory);

std::vector<GeneratedReport> run_stage2(const std::vector<SyntheticCase>& corpus, const Stage1Result& stage1,
                                        const Banks& banks, const PipelineConfig& config, Ablation ablation);

struct EvaluationRow {
    Ablation ablation = Ablation::both;
    metrics::NlgScores nlg;
    metrics::CeScores ce;
    std::size_t visual_bank_size = 0;
    std::size_t report_memory_size = 0;
};

EvaluationRow evaluate(const std::vector<SyntheticCase>& corpus, const std::vector<GeneratedReport>& generated);

struct PipelineRun {
    Stage1Result stage1;
    Banks banks;
    std::vector<std::pair<Ablation, std::vector<GeneratedReport>>> reports;
    std::vector<EvaluationRow> rows;
};

/// Full flow for each requested ablation, sharing stage 1 and the banks.
PipelineRun run_pipeline(const std::vector<SyntheticCase>& corpus, const PipelineConfig& config,
                         const std::vector<Ablation>& ablations);

// ---------------------------------------------------------------------------
// Stored-pattern recovery task used by the beta sweep

struct RecoveryTask {
    std::size_t dim = 64;
    std::size_t patterns = 16;
    std::size_t trials = 100;
    double max_pairwise_cosine = 0.3;
    double noise_sigma = 0.05;
    /// Pattern norm. With norm^2 = 2 sqrt(dim) the scaled score of a pattern
    /// against itself is 2 beta, which puts the retrieval transition inside
    /// the swept beta range.
    double pattern_norm = 4.0;
    double success_cosine = 0.99;
    std::size_t max_iters = 32;
    std::uint64_t seed = 0;
};

/// Unit-norm patterns with pairwise cosine <= max_cos, by rejection sampling.
std::vector<Vec64> separated_unit_patterns(std::size_t count, std::size_t dim, double max_cos, std::uint64_t seed);

struct RecoveryResult {
    double accuracy = 0.0;
    double mean_cosine = 0.0;
};

RecoveryResult recovery_accuracy(const RecoveryTask& task, double beta);

} // namespace ammrg::pipeline
