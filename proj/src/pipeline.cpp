#include "ammrg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <array>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <mutex>
#include <thread>

#include "ammrg/errors.hpp"
#include "ammrg/text.hpp"

namespace ammrg::pipeline {

namespace {

constexpr std::array<std::string_view, kDiseaseCount> kFindingSentences = {
    "there is mild bibasilar atelectasis.",
    "the heart is enlarged consistent with cardiomegaly.",
    "focal consolidation is seen in the right lower lobe.",
    "there is mild interstitial edema.",
    "the mediastinal contour shows enlarged cardiomediastinum.",
    "an old healed rib fracture is noted.",
    "a rounded lung lesion is present in the left upper zone.",
    "patchy lung opacity is seen at the left base.",
    "no finding of acute cardiopulmonary disease.",
    "a small right pleural effusion is present.",
    "there is pleural other thickening along the lateral wall.",
    "the appearance may reflect early pneumonia.",
    "a small apical pneumothorax is identified.",
    "support devices are in standard position.",
};

enum Stream : std::uint64_t {
    kStreamPatchEncoder = 1,
    kStreamSentenceEncoder = 2,
    kStreamVisualValue = 3,
    kStreamReportValue = 4,
    kStreamClassifier = 5,
    kStreamTextures = 6,
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed ^ (stream * 0x9e3779b97f4a7c15ULL);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw InvalidArgument("config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "'");
    }
    return out;
}

/// Runs body(i) for i in [0, n) over the available hardware threads.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
    const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

Mat64 gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
    std::vector<double> data(rows * cols);
    for (double& v : data) v = gauss(rng);
    return Mat64(rows, cols, std::move(data));
}

/// Solves A X = B for symmetric positive definite A by Cholesky factorization.
Mat64 solve_spd(Mat64 a, Mat64 b) {
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= a(j, k) * a(j, k);
        if (!(diag > 1e-12)) throw NumericError("report prototypes are linearly dependent");
        a(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= a(i, k) * a(j, k);
            a(i, j) = v / a(j, j);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) axpy(-a(i, k), b.row(k), b.row(i));
        for (double& v : b.row(i)) v /= a(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) axpy(-a(k, i), b.row(k), b.row(i));
        for (double& v : b.row(i)) v /= a(i, i);
    }
    return b;
}

std::string generic_sentence(std::size_t d) { return "findings suggest " + lowercase(kDiseaseNames[d]) + "."; }

} // namespace

std::string_view to_string(Ablation a) {
    switch (a) {
    case Ablation::none: return "none";
    case Ablation::visual: return "visual";
    case Ablation::report: return "report";
    case Ablation::both: return "both";
    }
    return "both";
}

Ablation parse_ablation(std::string_view s) {
    if (s == "none") return Ablation::none;
    if (s == "visual") return Ablation::visual;
    if (s == "report") return Ablation::report;
    if (s == "both") return Ablation::both;
    throw InvalidArgument("unknown ablation '" + std::string(s) + "' (expected none|visual|report|both)");
}

void PipelineConfig::validate() const {
    if (n_diseases < 1 || n_diseases > kDiseaseCount) throw InvalidArgument("n_diseases must be in 1..14");
    if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0)
        throw InvalidArgument("image_size must be a positive multiple of patch_size");
    if (channels == 0) throw InvalidArgument("channels must be positive");
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be finite and >= 0");
    if (cap_per_disease < 1) throw InvalidArgument("cap_per_disease must be >= 1");
    if (report_memory_size < 1) throw InvalidArgument("report_memory_size must be >= 1");
    if (!(tau >= 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie in [0, 1)");
    if (top_k && *top_k < 1) throw InvalidArgument("top_k must be >= 1");
    if (d_out < 1) throw InvalidArgument("d_out must be >= 1");
    if (hopfield_iters < 1) throw InvalidArgument("hopfield_iters must be >= 1");
    if (!(hopfield_tolerance > 0.0)) throw InvalidArgument("hopfield_tolerance must be > 0");
    if (!(step_size > 0.0)) throw InvalidArgument("step_size must be > 0");
    if (!(train_lr >= 0.0)) throw InvalidArgument("train_lr must be >= 0");
    if (n_cases < 1) throw InvalidArgument("n_cases must be >= 1");
}

hopfield::HopfieldConfig PipelineConfig::hopfield() const {
    hopfield::HopfieldConfig h;
    h.beta = beta;
    h.mode = mode;
    h.step_size = step_size;
    h.max_iters = hopfield_iters;
    h.tolerance = hopfield_tolerance;
    return h;
}

void apply_config_value(PipelineConfig& c, std::string_view key, std::string_view value) {
    const auto u64 = [&] { return parse_number<std::uint64_t>(key, value); };
    const auto size = [&] { return static_cast<std::size_t>(parse_number<std::uint64_t>(key, value)); };
    const auto real = [&] { return parse_number<double>(key, value); };

    if (key == "seed") c.seed = u64();
    else if (key == "n_diseases") c.n_diseases = size();
    else if (key == "patch_size") c.patch_size = size();
    else if (key == "image_size") c.image_size = size();
    else if (key == "channels") c.channels = size();
    else if (key == "beta") c.beta = real();
    else if (key == "cap_per_disease") c.cap_per_disease = size();
    else if (key == "report_memory_size") c.report_memory_size = size();
    else if (key == "tau") c.tau = real();
    else if (key == "top_k") {
        if (value == "none" || value == "0") c.top_k.reset();
        else c.top_k = size();
    } else if (key == "mode") {
        if (value == "cccp") c.mode = hopfield::Mode::cccp;
        else if (value == "gradient") c.mode = hopfield::Mode::gradient;
        else throw InvalidArgument("config key 'mode': expected cccp or gradient");
    } else if (key == "d_out") c.d_out = size();
    else if (key == "hopfield_iters") c.hopfield_iters = size();
    else if (key == "hopfield_tolerance") c.hopfield_tolerance = real();
    else if (key == "step_size") c.step_size = real();
    else if (key == "train_lr") c.train_lr = real();
    else if (key == "train_epochs") c.train_epochs = size();
    else if (key == "n_cases") c.n_cases = size();
    else if (key == "ablation") c.ablation = parse_ablation(value);
    else if (key == "corpus_dir") c.corpus_dir = std::string(value);
    else if (key == "classifier_path") c.classifier_path = std::string(value);
    else if (key == "visual_bank_path") c.visual_bank_path = std::string(value);
    else if (key == "report_bank_path") c.report_bank_path = std::string(value);
    else if (key == "out_dir") c.out_dir = std::string(value);
    else throw InvalidArgument("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(PipelineConfig& config, std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw InvalidArgument("config line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(std::string_view(stripped).substr(0, eq));
        const std::string value = trim(std::string_view(stripped).substr(eq + 1));
        try {
            apply_config_value(config, key, value);
        } catch (const InvalidArgument& e) {
            throw InvalidArgument("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void apply_config_file(PipelineConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    apply_config_text(config, buf.str());
}

// ---------------------------------------------------------------------------

std::string_view finding_sentence(std::size_t d) {
    if (d >= kDiseaseCount) throw InvalidArgument("disease index out of range");
    return kFindingSentences[d];
}

std::vector<std::size_t> disease_patches(std::size_t d, std::size_t grid) {
    if (d >= kDiseaseCount) throw InvalidArgument("disease index out of range");
    if (d == kNoFinding) return {};
    if (grid < 12) throw InvalidArgument("synthetic disease layout needs a patch grid of at least 12x12");
    const std::size_t q = d < kNoFinding ? d : d - 1;
    const std::size_t row = 1 + (q % 6) * 2;
    const std::size_t col = 1 + (q / 6) * 4;
    return {row * grid + col, row * grid + col + 1};
}

std::vector<SyntheticCase> generate_corpus(const CorpusOptions& o) {
    if (o.n_cases < 1) throw InvalidArgument("generate_corpus: n_cases must be >= 1");
    if (o.n_diseases < 1 || o.n_diseases > kDiseaseCount) throw InvalidArgument("generate_corpus: bad n_diseases");
    if (o.patch_size == 0 || o.image_size % o.patch_size != 0)
        throw InvalidArgument("generate_corpus: image_size must be a multiple of patch_size");
    const std::size_t grid = o.image_size / o.patch_size;
    const std::size_t p = o.patch_size;
    const std::size_t patch_values = p * p * o.channels;

    // Each disease gets a fixed binary texture around mid-grey.
    std::mt19937_64 tex_rng(derive_seed(o.seed, kStreamTextures));
    std::bernoulli_distribution coin(0.5);
    std::vector<std::vector<double>> textures(kDiseaseCount, std::vector<double>(patch_values));
    for (auto& t : textures)
        for (double& v : t) v = coin(tex_rng) ? 0.9 : 0.1;

    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> background(0.0, 0.25);
    std::uniform_real_distribution<double> amplitude(0.75, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<SyntheticCase> corpus;
    corpus.reserve(o.n_cases);
    for (std::size_t i = 0; i < o.n_cases; ++i) {
        LabelVector labels;
        for (std::size_t d = 0; d < o.n_diseases; ++d) {
            if (d == kNoFinding) continue;
            const std::size_t q = d < kNoFinding ? d : d - 1;
            const double prevalence = 0.12 + 0.18 * static_cast<double>((q * 5) % 13) / 12.0;
            const bool positive = unit(rng) < prevalence;
            if (positive && (!o.allowed || o.allowed->test(d))) labels.set(d);
        }
        if (labels.none() && kNoFinding < o.n_diseases && (!o.allowed || o.allowed->test(kNoFinding))) {
            labels.set(kNoFinding);
        }

        std::vector<double> pixels(o.image_size * o.image_size * o.channels);
        for (double& v : pixels) v = background(rng);
        for (std::size_t d = 0; d < kDiseaseCount; ++d) {
            if (!labels.test(d)) continue;
            const double a = amplitude(rng);
            for (std::size_t patch : disease_patches(d, grid)) {
                const std::size_t y0 = (patch / grid) * p;
                const std::size_t x0 = (patch % grid) * p;
                std::size_t k = 0;
                for (std::size_t y = y0; y < y0 + p; ++y)
                    for (std::size_t x = x0; x < x0 + p; ++x)
                        for (std::size_t c = 0; c < o.channels; ++c)
                            pixels[(y * o.image_size + x) * o.channels + c] = a * textures[d][k++];
            }
        }

        std::vector<std::string> sentences;
        for (std::size_t d = 0; d < kDiseaseCount; ++d)
            if (labels.test(d)) sentences.emplace_back(kFindingSentences[d]);
        if (sentences.empty()) sentences.emplace_back(kNoFindingsSentence);

        char id[32];
        std::snprintf(id, sizeof id, "case%04zu", i);
        corpus.push_back({id, roi::ImageTensor(o.image_size, o.image_size, o.channels, std::move(pixels)), labels,
                          text::join(sentences, " ")});
    }
    return corpus;
}

LabelVector extract_labels(std::string_view report) {
    const auto tokens = text::tokenize(report);
    LabelVector out;
    for (std::size_t d = 0; d < kDiseaseCount; ++d) {
        const auto name = text::tokenize(kDiseaseNames[d]);
        const auto it = std::search(tokens.begin(), tokens.end(), name.begin(), name.end());
        if (it != tokens.end()) out.set(d);
    }
    return out;
}

std::string format_labels(const LabelVector& labels) {
    std::string out;
    for (std::size_t d = 0; d < kDiseaseCount; ++d) {
        if (d) out += ',';
        out += labels.test(d) ? '1' : '0';
    }
    return out;
}

LabelVector parse_labels(std::string_view row) {
    LabelVector out;
    std::size_t d = 0;
    std::size_t start = 0;
    while (true) {
        const auto comma = row.find(',', start);
        const std::string field = trim(row.substr(start, comma == std::string_view::npos ? row.npos : comma - start));
        if (d >= kDiseaseCount) throw InvalidArgument("label row has more than 14 fields");
        if (field == "1") out.set(d);
        else if (field != "0") throw InvalidArgument("label field must be 0 or 1, got '" + field + "'");
        ++d;
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    if (d != kDiseaseCount) throw InvalidArgument("label row has " + std::to_string(d) + " fields, expected 14");
    return out;
}

void save_corpus(const std::vector<SyntheticCase>& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    std::ofstream ids(dir / "ids.txt");
    std::ofstream reports(dir / "reports.txt");
    std::ofstream labels(dir / "labels.csv");
    for (const auto& c : corpus) {
        ids << c.id << '\n';
        reports << c.report << '\n';
        labels << format_labels(c.labels) << '\n';
        roi::save_raster(roi::to_raster(c.image), dir / "images" / (c.id + ".img"));
    }
    if (!ids || !reports || !labels) throw Error("failed writing corpus to " + dir.string());
}

std::vector<SyntheticCase> load_corpus(const std::filesystem::path& dir) {
    auto read_lines = [&](const char* name) {
        std::ifstream in(dir / name);
        if (!in) throw Error("cannot open " + (dir / name).string());
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
        return lines;
    };
    const auto ids = read_lines("ids.txt");
    const auto reports = read_lines("reports.txt");
    const auto labels = read_lines("labels.csv");
    if (ids.size() != reports.size() || ids.size() != labels.size()) {
        throw InvalidArgument("corpus files disagree on the number of cases");
    }
    std::vector<SyntheticCase> corpus;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        corpus.push_back({ids[i], roi::image_from_raster(roi::load_raster(dir / "images" / (ids[i] + ".img"))),
                          parse_labels(labels[i]), reports[i]});
    }
    if (corpus.empty()) throw InvalidArgument("corpus at " + dir.string() + " is empty");
    return corpus;
}

// ---------------------------------------------------------------------------

encoders::PatchEncoder make_patch_encoder(const PipelineConfig& config) {
    return encoders::PatchEncoder(derive_seed(config.seed, kStreamPatchEncoder), config.channels, config.patch_size);
}

encoders::SentenceEncoder make_sentence_encoder(const PipelineConfig& config) {
    return encoders::SentenceEncoder(derive_seed(config.seed, kStreamSentenceEncoder));
}

classifier::TrainResult train_classifier(const std::vector<Vec64>& pooled, const std::vector<LabelVector>& labels,
                                         const PipelineConfig& config) {
    if (pooled.empty() || pooled.size() != labels.size()) throw InvalidArgument("train_classifier: bad dataset");
    const std::size_t dim = pooled.front().dim();
    const double n = static_cast<double>(pooled.size());
    std::vector<double> mean(dim, 0.0);
    std::vector<double> scale(dim, 0.0);
    for (const auto& f : pooled) axpy(1.0 / n, f.view(), mean);
    for (const auto& f : pooled)
        for (std::size_t i = 0; i < dim; ++i) scale[i] += (f[i] - mean[i]) * (f[i] - mean[i]) / n;
    for (double& s : scale) s = std::sqrt(s) + 1e-12;

    std::vector<classifier::Sample> samples;
    samples.reserve(pooled.size());
    for (std::size_t k = 0; k < pooled.size(); ++k) {
        std::vector<double> z(dim);
        for (std::size_t i = 0; i < dim; ++i) z[i] = (pooled[k][i] - mean[i]) / scale[i];
        samples.push_back({Vec64(std::move(z)), labels[k]});
    }
    classifier::TrainConfig tc;
    tc.learning_rate = config.train_lr;
    tc.epochs = config.train_epochs;
    tc.seed = derive_seed(config.seed, kStreamClassifier);
    auto result = classifier::train(samples, tc);

    // sigmoid(W z + b) with z = (f - mean) / scale  ==  sigmoid(W' f + b').
    auto& clf = result.classifier;
    for (std::size_t j = 0; j < clf.classes(); ++j) {
        double shift = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            clf.weights(j, i) /= scale[i];
            shift += clf.weights(j, i) * mean[i];
        }
        clf.bias[j] -= shift;
    }
    return result;
}

std::vector<bank::VisualCandidate> mine_case(const SyntheticCase& c, std::size_t case_index, const Mat64& features,
                                             const classifier::LinearClassifier& clf, const LabelVector& diseases,
                                             const encoders::PatchEncoder& encoder, const PipelineConfig& config,
                                             std::vector<MinedRegion>* regions) {
    std::vector<bank::VisualCandidate> out;
    const std::size_t grid = config.grid();
    for (std::size_t d = 0; d < config.n_diseases; ++d) {
        if (!diseases.test(d)) continue;
        const auto cam = classifier::linear_cam(clf, features, d, grid, grid, config.patch_size);
        const auto means = roi::patch_means(cam, config.patch_size);
        auto selection = roi::select_roi(means, config.tau, config.top_k);
        const auto picked = selection.selected_indices();
        if (picked.empty()) continue;
        const auto masked = roi::apply_mask(c.image, selection);
        const Mat64 masked_features = encoder.encode_patches(masked);
        for (std::size_t p : picked) {
            bank::VisualCandidate cand;
            cand.entry.feature = masked_features.row_vec(p);
            cand.entry.disease_id = static_cast<std::uint8_t>(d);
            cand.entry.source_image_id = c.id;
            cand.entry.patch_index = static_cast<std::uint16_t>(p);
            cand.activation = means.means[p];
            out.push_back(std::move(cand));
        }
        if (regions) regions->push_back({case_index, d, std::move(selection)});
    }
    return out;
}

Stage1Result run_stage1(const std::vector<SyntheticCase>& corpus, const PipelineConfig& config,
                        const classifier::LinearClassifier* pretrained) {
    config.validate();
    if (corpus.empty()) throw InvalidArgument("run_stage1: empty corpus");
    const auto encoder = make_patch_encoder(config);

    Stage1Result r;
    r.patch_features.resize(corpus.size());
    r.pooled.resize(corpus.size());
    parallel_for(corpus.size(), [&](std::size_t i) {
        r.patch_features[i] = encoder.encode_patches(corpus[i].image);
        r.pooled[i] = encoder.pooled(r.patch_features[i]);
    });

    if (pretrained) {
        if (pretrained->dim() != encoder.dim() || pretrained->classes() != kDiseaseCount) {
            throw DimensionError("run_stage1: classifier shape does not match the patch encoder");
        }
        r.classifier = *pretrained;
    } else {
        std::vector<LabelVector> labels;
        labels.reserve(corpus.size());
        for (const auto& c : corpus) labels.push_back(c.labels);
        auto trained = train_classifier(r.pooled, labels, config);
        r.classifier = std::move(trained.classifier);
        r.loss_trace = std::move(trained.loss_trace);
    }

    for (std::size_t i = 0; i < corpus.size(); ++i) {
        r.predicted.push_back(classifier::predict_labels(r.classifier, r.pooled[i]));
        auto cands = mine_case(corpus[i], i, r.patch_features[i], r.classifier, r.predicted.back(), encoder, config,
                               &r.regions);
        std::move(cands.begin(), cands.end(), std::back_inserter(r.visual_candidates));
    }
    return r;
}

std::vector<bank::ReportMemoryEntry> report_candidates(const std::vector<SyntheticCase>& corpus,
                                                       const encoders::SentenceEncoder& encoder) {
    std::vector<bank::ReportMemoryEntry> out;
    for (const auto& c : corpus) {
        for (auto& sentence : text::split_sentences(c.report)) {
            bank::ReportMemoryEntry e;
            e.feature = encoder.encode_sentence(sentence);
            e.disease_labels = extract_labels(sentence);
            e.sentence_text = std::move(sentence);
            e.source_report_id = c.id;
            out.push_back(std::move(e));
        }
    }
    return out;
}

Banks build_banks(const std::vector<SyntheticCase>& corpus, const Stage1Result& stage1, const PipelineConfig& config) {
    Banks b;
    b.visual = bank::build_visual_bank(stage1.visual_candidates, config.cap_per_disease);
    b.report = bank::build_report_memory(report_candidates(corpus, make_sentence_encoder(config)),
                                         config.report_memory_size);
    return b;
}

// ---------------------------------------------------------------------------

Vec64 disease_query(const classifier::LinearClassifier& clf, const Mat64& patch_features, std::size_t d) {
    const auto scores = classifier::patch_scores(clf, patch_features, d);
    double total = 0.0;
    for (double s : scores) total += s;
    std::vector<double> q(patch_features.cols(), 0.0);
    for (std::size_t p = 0; p < patch_features.rows(); ++p) {
        const double w = total > 0.0 ? scores[p] / total : 1.0 / static_cast<double>(patch_features.rows());
        if (w != 0.0) axpy(w, patch_features.row(p), q);
    }
    return Vec64(std::move(q));
}

Mat64 report_bridge(const classifier::LinearClassifier& clf, const bank::ReportMemory& memory) {
    // Prototype per class: normalized sum of the sentences tagged with it.
    std::vector<std::size_t> present;
    std::vector<Vec64> prototypes;
    for (std::size_t c = 0; c < std::min(clf.classes(), kDiseaseCount); ++c) {
        std::vector<double> acc(memory.dim, 0.0);
        for (const auto& e : memory.entries)
            if (e.disease_labels.test(c)) axpy(1.0, e.feature.view(), acc);
        const double n = norm(std::span<const double>(acc));
        if (n == 0.0) continue;
        for (double& v : acc) v /= n;
        present.push_back(c);
        prototypes.push_back(Vec64(std::move(acc)));
    }
    Mat64 bridge(memory.dim, clf.dim());
    if (present.empty()) return bridge;

    // Dual basis: <bridge q, prototype_c> equals the class-c logit exactly.
    const std::size_t k = present.size();
    Mat64 gram(k, k);
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) gram(a, b) = dot(prototypes[a], prototypes[b]);
    Mat64 rhs(k, clf.dim());
    for (std::size_t a = 0; a < k; ++a) {
        const auto w = clf.weights.row(present[a]);
        std::copy(w.begin(), w.end(), rhs.row(a).begin());
    }
    const Mat64 coeffs = solve_spd(std::move(gram), std::move(rhs));
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t i = 0; i < memory.dim; ++i) {
            const double p = prototypes[a][i];
            if (p != 0.0) axpy(p, coeffs.row(a), bridge.row(i));
        }
    return bridge;
}

std::vector<GeneratedReport> run_stage2(const std::vector<SyntheticCase>& corpus, const Stage1Result& stage1,
                                        const Banks& banks, const PipelineConfig& config, Ablation ablation) {
    config.validate();
    if (stage1.patch_features.size() != corpus.size()) throw InvalidArgument("run_stage2: stage 1 does not match corpus");
    const bool use_visual = ablation == Ablation::visual || ablation == Ablation::both;
    const bool use_report = ablation == Ablation::report || ablation == Ablation::both;
    const auto& clf = stage1.classifier;

    std::optional<hopfield::PatternMatrix> visual;
    std::optional<hopfield::PatternMatrix> report;
    hopfield::HopfieldProjections visual_proj;
    hopfield::HopfieldProjections report_proj;
    std::array<std::size_t, kDiseaseCount> visual_support{};
    if (use_visual) {
        if (banks.visual.size() == 0) throw EmptyMemoryError("visual bank is empty");
        visual.emplace(bank::as_pattern_matrix(banks.visual));
        visual_proj.value_proj = gaussian_matrix(config.d_out, banks.visual.dim, derive_seed(config.seed, kStreamVisualValue));
        for (const auto& e : banks.visual.entries) ++visual_support[e.disease_id];
    }
    if (use_report) {
        if (banks.report.size() == 0) throw EmptyMemoryError("report memory is empty");
        report.emplace(bank::as_pattern_matrix(banks.report));
        report_proj.query_proj = report_bridge(clf, banks.report);
        report_proj.value_proj = gaussian_matrix(config.d_out, banks.report.dim, derive_seed(config.seed, kStreamReportValue));
    }
    const hopfield::Branches branches = use_visual && use_report ? hopfield::Branches::both
                                        : use_visual            ? hopfield::Branches::visual_only
                                                                : hopfield::Branches::report_only;
    const auto hcfg = config.hopfield();

    std::vector<GeneratedReport> out(corpus.size());
    parallel_for(corpus.size(), [&](std::size_t i) {
        GeneratedReport g;
        g.id = corpus[i].id;
        const Vec64 probs = classifier::predict_probs(clf, stage1.pooled[i]);
        std::vector<double> score(probs.begin(), probs.end());

        hopfield::EnhancedBatch batch;
        if (use_visual || use_report) {
            std::vector<Vec64> queries;
            queries.reserve(config.n_diseases);
            for (std::size_t d = 0; d < config.n_diseases; ++d)
                queries.push_back(disease_query(clf, stage1.patch_features[i], d));
            // Placeholders keep the unused branch out of the computation.
            const hopfield::PatternMatrix& vm = visual ? *visual : *report;
            const hopfield::PatternMatrix& rm = report ? *report : *visual;
            const hopfield::DualMemory dual{vm, rm, use_visual ? visual_proj : report_proj,
                                            use_report ? report_proj : visual_proj};
            batch = hopfield::batch_enhance_detailed(queries, dual, hcfg, branches, config.n_diseases);
            g.enhanced_norm = norm(batch.features.data());
        }

        if (use_visual) {
            // Visual attention on regions stored for the same disease, beyond that
            // disease's share of the bank, can raise the classifier score but not lower it.
            for (std::size_t d = 0; d < config.n_diseases; ++d) {
                if (visual_support[d] == 0 || visual_support[d] == banks.visual.size()) continue;
                double mass = 0.0;
                const auto& alpha = batch.visual[d].weights;
                for (std::size_t j = 0; j < banks.visual.size(); ++j)
                    if (banks.visual.entries[j].disease_id == d) mass += alpha[j];
                const double share = static_cast<double>(visual_support[d]) / static_cast<double>(banks.visual.size());
                const double lift = std::clamp((mass - share) / (1.0 - share), 0.0, 1.0);
                score[d] = std::max(score[d], 0.5 * (score[d] + lift));
            }
        }

        std::vector<std::string> sentences;
        for (std::size_t d = 0; d < config.n_diseases; ++d) {
            if (!(score[d] > 0.5)) continue;
            g.predicted.set(d);
            std::string sentence;
            if (use_report) {
                // Highest-weight stored sentence among those tagged with d.
                const auto& alpha = batch.report[d].weights;
                std::optional<std::size_t> best;
                for (std::size_t j = 0; j < banks.report.size(); ++j) {
                    if (!banks.report.entries[j].disease_labels.test(d)) continue;
                    if (!best || alpha[j] > alpha[*best]) best = j;
                }
                sentence = best ? banks.report.entries[*best].sentence_text : generic_sentence(d);
            } else {
                sentence = generic_sentence(d);
            }
            if (std::find(sentences.begin(), sentences.end(), sentence) == sentences.end())
                sentences.push_back(std::move(sentence));
        }
        if (sentences.empty()) sentences.emplace_back(kNoFindingsSentence);
        g.text = text::join(sentences, " ");
        out[i] = std::move(g);
    });
    return out;
}

EvaluationRow evaluate(const std::vector<SyntheticCase>& corpus, const std::vector<GeneratedReport>& generated) {
    if (corpus.size() != generated.size()) throw DimensionError("evaluate: generated count differs from corpus");
    std::vector<metrics::TokenizedReport> cand;
    std::vector<metrics::TokenizedReport> ref;
    std::vector<LabelVector> predicted;
    std::vector<LabelVector> truth;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        cand.push_back(text::tokenize(generated[i].text));
        ref.push_back(text::tokenize(corpus[i].report));
        predicted.push_back(extract_labels(generated[i].text));
        truth.push_back(corpus[i].labels);
    }
    EvaluationRow row;
    row.nlg = metrics::nlg_scores(cand, ref);
    row.ce = metrics::ce_scores(predicted, truth);
    return row;
}

PipelineRun run_pipeline(const std::vector<SyntheticCase>& corpus, const PipelineConfig& config,
                         const std::vector<Ablation>& ablations) {
    PipelineRun run;
    run.stage1 = run_stage1(corpus, config);
    run.banks = build_banks(corpus, run.stage1, config);
    for (Ablation a : ablations) {
        auto generated = run_stage2(corpus, run.stage1, run.banks, config, a);
        EvaluationRow row = evaluate(corpus, generated);
        row.ablation = a;
        row.visual_bank_size = run.banks.visual.size();
        row.report_memory_size = run.banks.report.size();
        run.rows.push_back(row);
        run.reports.emplace_back(a, std::move(generated));
    }
    return run;
}

// ---------------------------------------------------------------------------

std::vector<Vec64> separated_unit_patterns(std::size_t count, std::size_t dim, double max_cos, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Vec64> out;
    std::size_t attempts = 0;
    while (out.size() < count) {
        if (++attempts > 100000) throw InvalidArgument("separated_unit_patterns: separation not achievable");
        std::vector<double> v(dim);
        for (double& x : v) x = gauss(rng);
        const double n = norm(std::span<const double>(v));
        for (double& x : v) x /= n;
        Vec64 cand(std::move(v));
        const bool ok = std::all_of(out.begin(), out.end(), [&](const Vec64& p) { return dot(p, cand) <= max_cos; });
        if (ok) out.push_back(std::move(cand));
    }
    return out;
}

RecoveryResult recovery_accuracy(const RecoveryTask& task, double beta) {
    const auto unit = separated_unit_patterns(task.patterns, task.dim, task.max_pairwise_cosine, task.seed);
    std::vector<Vec64> scaled;
    for (const auto& u : unit) scaled.push_back(task.pattern_norm * u);
    const hopfield::PatternMatrix memory(Mat64::from_rows(scaled));

    hopfield::HopfieldConfig cfg;
    cfg.beta = beta;
    cfg.mode = hopfield::Mode::cccp;
    cfg.max_iters = task.max_iters;

    std::mt19937_64 rng(task.seed + 1);
    std::normal_distribution<double> noise(0.0, task.noise_sigma);
    std::size_t hits = 0;
    double cos_total = 0.0;
    for (std::size_t t = 0; t < task.trials; ++t) {
        const std::size_t k = rng() % task.patterns;
        std::vector<double> q(task.dim);
        for (std::size_t i = 0; i < task.dim; ++i) q[i] = task.pattern_norm * (unit[k][i] + noise(rng));
        const auto result = hopfield::retrieve(Vec64(std::move(q)), memory, cfg);
        const double c = cosine(result.updated, scaled[k]);
        cos_total += c;
        if (c >= task.success_cosine) ++hits;
    }
    return {static_cast<double>(hits) / static_cast<double>(task.trials),
            cos_total / static_cast<double>(task.trials)};
}

} // namespace ammrg::pipeline
