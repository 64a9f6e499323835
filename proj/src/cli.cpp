#include "ammrg/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "ammrg/errors.hpp"
#include "ammrg/pipeline.hpp"
#include "ammrg/text.hpp"

namespace ammrg::cli {

namespace {

using Json = nlohmann::ordered_json;
using namespace ammrg::pipeline;

/// Bad flag values or config contents; reported with the usage exit code.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Overrides {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> values;
};

void add_common(CLI::App* app, Overrides& ov) {
    app->add_option("--config", ov.config_path, "key = value config file")->check(CLI::ExistingFile);
    app->add_option_function<std::string>(
        "--seed", [&ov](const std::string& v) { ov.values.emplace_back("seed", v); }, "seed for all randomness");
    app->add_option_function<std::vector<std::string>>(
           "--set",
           [&ov](const std::vector<std::string>& items) {
               for (const auto& item : items) {
                   const auto eq = item.find('=');
                   if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value, got " + item);
                   ov.values.emplace_back(item.substr(0, eq), item.substr(eq + 1));
               }
           },
           "override any config key (repeatable)")
        ->allow_extra_args(false);
}

void add_override(CLI::App* app, Overrides& ov, const std::string& flag, const std::string& key,
                  const std::string& help) {
    app->add_option_function<std::string>(
        flag, [&ov, key](const std::string& v) { ov.values.emplace_back(key, v); }, help);
}

PipelineConfig resolve(const Overrides& ov) {
    PipelineConfig config;
    try {
        if (!ov.config_path.empty()) apply_config_file(config, ov.config_path);
        for (const auto& [key, value] : ov.values) apply_config_value(config, key, value);
        config.validate();
    } catch (const ammrg::Error& e) {
        throw UsageError(e.what());
    }
    return config;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw Error("failed writing " + path.string());
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
std::vector<T> parse_values(const std::string& list, const char* what) {
    std::vector<T> out;
    for (const auto& item : split_list(list)) {
        std::istringstream in(item);
        T v{};
        if (!(in >> v) || !in.eof()) throw UsageError(std::string("bad ") + what + " value '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
    return out;
}

Json labels_json(const LabelVector& labels) {
    Json arr = Json::array();
    for (std::size_t d = 0; d < kDiseaseCount; ++d)
        if (labels.test(d)) arr.push_back(d);
    return arr;
}

void add_metrics(Json& rec, const metrics::NlgScores& nlg) {
    rec["bleu1"] = nlg.bleu1;
    rec["bleu2"] = nlg.bleu2;
    rec["bleu3"] = nlg.bleu3;
    rec["bleu4"] = nlg.bleu4;
    rec["rouge_l"] = nlg.rouge_l;
    rec["cider"] = nlg.cider;
}

void add_ce(Json& rec, const metrics::CeScores& ce) {
    rec["ce_precision"] = ce.precision;
    rec["ce_recall"] = ce.recall;
    rec["ce_f1"] = ce.f1;
}

Json row_json(const char* command, const EvaluationRow& row) {
    Json rec;
    rec["command"] = command;
    rec["ablation"] = to_string(row.ablation);
    rec["visual_bank_size"] = row.visual_bank_size;
    rec["report_memory_size"] = row.report_memory_size;
    add_metrics(rec, row.nlg);
    add_ce(rec, row.ce);
    return rec;
}

std::vector<SyntheticCase> corpus_for(const PipelineConfig& config, const std::string& dir) {
    if (!dir.empty()) return load_corpus(dir);
    if (!config.corpus_dir.empty()) return load_corpus(config.corpus_dir);
    CorpusOptions o;
    o.n_cases = config.n_cases;
    o.seed = config.seed;
    o.n_diseases = config.n_diseases;
    o.image_size = config.image_size;
    o.patch_size = config.patch_size;
    o.channels = config.channels;
    return generate_corpus(o);
}

std::optional<classifier::LinearClassifier> classifier_for(const PipelineConfig& config, const std::string& path) {
    if (!path.empty()) return classifier::load_classifier(path);
    if (!config.classifier_path.empty()) return classifier::load_classifier(config.classifier_path);
    return std::nullopt;
}

Banks banks_for(const std::vector<SyntheticCase>& corpus, const Stage1Result& stage1, const PipelineConfig& config) {
    Banks banks = build_banks(corpus, stage1, config);
    if (!config.visual_bank_path.empty()) {
        auto loaded = bank::load_bank(config.visual_bank_path);
        auto* v = std::get_if<bank::VisualBank>(&loaded);
        if (!v) throw InvalidArgument(config.visual_bank_path.string() + " is not a visual bank");
        banks.visual = std::move(*v);
    }
    if (!config.report_bank_path.empty()) {
        auto loaded = bank::load_bank(config.report_bank_path);
        auto* r = std::get_if<bank::ReportMemory>(&loaded);
        if (!r) throw InvalidArgument(config.report_bank_path.string() + " is not a report memory");
        banks.report = std::move(*r);
    }
    return banks;
}

// ---------------------------------------------------------------------------

struct GenCorpusArgs {
    Overrides ov;
    std::string out;
};

void cmd_gen_corpus(const GenCorpusArgs& a, std::ostream& out) {
    const auto config = resolve(a.ov);
    const auto corpus = corpus_for(config, "");
    save_corpus(corpus, a.out);
    std::vector<std::size_t> counts(kDiseaseCount, 0);
    for (const auto& c : corpus)
        for (std::size_t d = 0; d < kDiseaseCount; ++d) counts[d] += c.labels.test(d);
    Json rec;
    rec["command"] = "gen-corpus";
    rec["cases"] = corpus.size();
    rec["out"] = a.out;
    rec["label_counts"] = counts;
    out << rec.dump() << '\n';
}

struct TrainArgs {
    Overrides ov;
    std::string corpus;
    std::string out;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
    const auto config = resolve(a.ov);
    const auto corpus = corpus_for(config, a.corpus);
    const auto encoder = make_patch_encoder(config);
    std::vector<Vec64> pooled;
    std::vector<LabelVector> labels;
    for (const auto& c : corpus) {
        pooled.push_back(encoder.pooled(encoder.encode_patches(c.image)));
        labels.push_back(c.labels);
    }
    const auto result = train_classifier(pooled, labels, config);
    classifier::save_classifier(result.classifier, a.out);
    std::vector<LabelVector> predicted;
    for (const auto& f : pooled) predicted.push_back(classifier::predict_labels(result.classifier, f));
    const auto ce = metrics::ce_scores(predicted, labels);

    Json rec;
    rec["command"] = "train";
    rec["cases"] = corpus.size();
    rec["epochs"] = config.train_epochs;
    rec["learning_rate"] = config.train_lr;
    rec["loss_initial"] = result.loss_trace.front();
    rec["loss_final"] = result.loss_trace.back();
    rec["train_micro_f1"] = ce.f1;
    rec["out"] = a.out;
    out << rec.dump() << '\n';
}

struct CamArgs {
    Overrides ov;
    std::string classifier;
    std::string image;
    std::size_t class_id = 0;
    std::string out;
};

void cmd_cam(const CamArgs& a, std::ostream& out) {
    const auto config = resolve(a.ov);
    const auto clf = classifier::load_classifier(a.classifier);
    if (a.class_id >= clf.classes()) throw UsageError("--class must be below " + std::to_string(clf.classes()));
    const auto image = roi::image_from_raster(roi::load_raster(a.image));
    const auto encoder = make_patch_encoder(config);
    const Mat64 features = encoder.encode_patches(image);
    const std::size_t rows = image.height() / config.patch_size;
    const std::size_t cols = image.width() / config.patch_size;
    const auto cam = classifier::linear_cam(clf, features, a.class_id, rows, cols, config.patch_size);
    const auto means = roi::patch_means(cam, config.patch_size);
    if (!a.out.empty()) roi::save_raster(roi::to_raster(cam), a.out);

    const auto scores = classifier::patch_scores(clf, features, a.class_id);
    Json rec;
    rec["command"] = "cam";
    rec["class"] = a.class_id;
    rec["grid"] = {rows, cols};
    rec["argmax_patch"] = std::max_element(scores.begin(), scores.end()) - scores.begin();
    rec["patch_means"] = means.means;
    if (!a.out.empty()) rec["out"] = a.out;
    out << rec.dump() << '\n';
}

struct MaskArgs {
    Overrides ov;
    std::string image;
    std::string map;
    std::string out;
};

void cmd_mask(const MaskArgs& a, std::ostream& out) {
    const auto config = resolve(a.ov);
    const auto image = roi::image_from_raster(roi::load_raster(a.image));
    const auto map = roi::map_from_raster(roi::load_raster(a.map));
    if (map.height != image.height() || map.width != image.width()) {
        throw DimensionError("mask: activation map and image sizes differ");
    }
    const auto selection = roi::select_roi(roi::patch_means(map, config.patch_size), config.tau, config.top_k);
    const auto masked = roi::apply_mask(image, selection);
    roi::save_raster(roi::to_raster(masked), a.out);

    const auto picked = selection.selected_indices();
    Json rec;
    rec["command"] = "mask";
    rec["tau"] = config.tau;
    rec["top_k"] = config.top_k ? Json(*config.top_k) : Json(nullptr);
    rec["selected"] = picked;
    rec["kept_fraction"] = static_cast<double>(picked.size()) / static_cast<double>(selection.selected.size());
    rec["out"] = a.out;
    out << rec.dump() << '\n';
}

struct BuildBankArgs {
    Overrides ov;
    std::string kind;
    std::string corpus;
    std::string classifier;
    std::string out;
};

void cmd_build_bank(const BuildBankArgs& a, std::ostream& out) {
    const auto config = resolve(a.ov);
    const auto corpus = corpus_for(config, a.corpus);
    Json rec;
    rec["command"] = "build-bank";
    rec["kind"] = a.kind;
    std::vector<std::size_t> per_disease(kDiseaseCount, 0);
    if (a.kind == "visual") {
        const auto pretrained = classifier_for(config, a.classifier);
        const auto stage1 = run_stage1(corpus, config, pretrained ? &*pretrained : nullptr);
        auto visual = bank::build_visual_bank(stage1.visual_candidates, config.cap_per_disease);
        for (const auto& e : visual.entries) ++per_disease[e.disease_id];
        rec["candidates"] = stage1.visual_candidates.size();
        rec["entries"] = visual.size();
        rec["dim"] = visual.dim;
        bank::save_bank(std::move(visual), a.out);
    } else {
        const auto candidates = report_candidates(corpus, make_sentence_encoder(config));
        auto report = bank::build_report_memory(candidates, config.report_memory_size);
        for (const auto& e : report.entries)
            for (std::size_t d = 0; d < kDiseaseCount; ++d) per_disease[d] += e.disease_labels.test(d);
        rec["candidates"] = candidates.size();
        rec["entries"] = report.size();
        rec["dim"] = report.dim;
        bank::save_bank(std::move(report), a.out);
    }
    rec["per_disease"] = per_disease;
    rec["out"] = a.out;
    out << rec.dump() << '\n';
}

struct RetrieveArgs {
    Overrides ov;
    std::string bank;
    std::string query;
    std::optional<std::size_t> entry;
    double noise = 0.0;
    std::size_t top = 5;
    std::size_t max_iters = 32;
};

void cmd_retrieve(const RetrieveArgs& a, std::ostream& out) {
    const auto config = resolve(a.ov);
    if (a.query.empty() == !a.entry) throw UsageError("retrieve needs exactly one of --query or --entry");
    if (!(a.noise >= 0.0)) throw UsageError("--noise must be >= 0");
    const auto loaded = bank::load_bank(a.bank);
    const auto memory = std::visit([](const auto& b) { return bank::as_pattern_matrix(b); }, loaded);

    std::vector<double> q;
    if (a.entry) {
        if (*a.entry >= memory.count()) throw UsageError("--entry out of range");
        const auto p = memory.pattern(*a.entry);
        q.assign(p.begin(), p.end());
        std::mt19937_64 rng(config.seed);
        std::normal_distribution<double> gauss(0.0, a.noise);
        if (a.noise > 0.0)
            for (double& v : q) v += gauss(rng);
    } else {
        std::ifstream in(a.query);
        if (!in) throw Error("cannot open " + a.query);
        std::string tok;
        while (in >> tok) {
            for (const auto& item : split_list(tok)) {
                try {
                    q.push_back(std::stod(item));
                } catch (const std::exception&) {
                    throw InvalidArgument("query file: bad number '" + item + "'");
                }
            }
        }
    }
    auto hcfg = config.hopfield();
    hcfg.max_iters = a.max_iters;
    const auto result = hopfield::retrieve(Vec64(std::move(q)), memory, hcfg);

    std::vector<std::size_t> order(result.weights.dim());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return result.weights[x] > result.weights[y]; });
    order.resize(std::min(order.size(), a.top));

    Json top = Json::array();
    for (std::size_t j : order) {
        Json hit;
        hit["index"] = j;
        hit["weight"] = result.weights[j];
        if (const auto* v = std::get_if<bank::VisualBank>(&loaded)) {
            const auto& e = v->entries[j];
            hit["disease"] = e.disease_id;
            hit["source"] = e.source_image_id;
            hit["patch"] = e.patch_index;
        } else {
            const auto& e = std::get<bank::ReportMemory>(loaded).entries[j];
            hit["labels"] = labels_json(e.disease_labels);
            hit["source"] = e.source_report_id;
            hit["text"] = e.sentence_text;
        }
        top.push_back(std::move(hit));
    }
    Json rec;
    rec["command"] = "retrieve";
    rec["iterations"] = result.iterations;
    rec["energy_initial"] = result.energy_trace.front();
    rec["energy_final"] = result.energy_trace.back();
    rec["top"] = std::move(top);
    out << rec.dump() << '\n';
}

struct PipelineArgs {
    Overrides ov;
    std::string corpus;
    std::string classifier;
    std::string ablate;
    std::string out_dir;
};

std::vector<Ablation> parse_ablations(const std::string& list, Ablation fallback) {
    if (list.empty()) return {fallback};
    if (list == "all") return {Ablation::none, Ablation::visual, Ablation::report, Ablation::both};
    std::vector<Ablation> out;
    try {
        for (const auto& item : split_list(list)) out.push_back(parse_ablation(item));
    } catch (const ammrg::Error& e) {
        throw UsageError(e.what());
    }
    if (out.empty()) throw UsageError("empty --ablate list");
    return out;
}

void cmd_pipeline(const PipelineArgs& a, std::ostream& out) {
    const auto config = resolve(a.ov);
    const auto ablations = parse_ablations(a.ablate, config.ablation);
    const auto corpus = corpus_for(config, a.corpus);
    const auto pretrained = classifier_for(config, a.classifier);

    const auto stage1 = run_stage1(corpus, config, pretrained ? &*pretrained : nullptr);
    const auto banks = banks_for(corpus, stage1, config);
    const std::filesystem::path out_dir = a.out_dir.empty() ? config.out_dir : std::filesystem::path(a.out_dir);
    for (Ablation ab : ablations) {
        const auto generated = run_stage2(corpus, stage1, banks, config, ab);
        EvaluationRow row = evaluate(corpus, generated);
        row.ablation = ab;
        row.visual_bank_size = banks.visual.size();
        row.report_memory_size = banks.report.size();
        Json rec = row_json("pipeline", row);
        rec["cases"] = corpus.size();
        if (!out_dir.empty()) {
            std::vector<std::string> lines;
            for (const auto& g : generated) lines.push_back(g.text);
            const auto path = out_dir / ("reports_" + std::string(to_string(ab)) + ".txt");
            write_lines(path, lines);
            rec["reports"] = path.string();
        }
        out << rec.dump() << '\n';
    }
}

struct EvaluateArgs {
    Overrides ov;
    std::string candidates;
    std::string references;
    std::string pred_labels;
    std::string true_labels;
};

void cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
    resolve(a.ov);
    if (a.pred_labels.empty() != a.true_labels.empty()) {
        throw UsageError("--pred-labels and --true-labels must be given together");
    }
    std::vector<metrics::TokenizedReport> cand;
    std::vector<metrics::TokenizedReport> ref;
    for (const auto& l : read_lines(a.candidates)) cand.push_back(text::tokenize(l));
    for (const auto& l : read_lines(a.references)) ref.push_back(text::tokenize(l));
    Json rec;
    rec["command"] = "evaluate";
    rec["count"] = cand.size();
    add_metrics(rec, metrics::nlg_scores(cand, ref));
    if (!a.pred_labels.empty()) {
        std::vector<LabelVector> pred;
        std::vector<LabelVector> truth;
        for (const auto& l : read_lines(a.pred_labels)) pred.push_back(parse_labels(l));
        for (const auto& l : read_lines(a.true_labels)) truth.push_back(parse_labels(l));
        add_ce(rec, metrics::ce_scores(pred, truth));
    }
    out << rec.dump() << '\n';
}

struct SweepArgs {
    Overrides ov;
    std::string param;
    std::string values;
    std::string corpus;
    bool with_pipeline = false;
    std::size_t trials = 100;
};

void cmd_sweep(const SweepArgs& a, std::ostream& out) {
    const auto config = resolve(a.ov);
    if (a.param == "beta") {
        const auto betas = parse_values<double>(a.values.empty() ? "0.5,1,2,4,8,16" : a.values, "beta");
        for (double b : betas)
            if (!(b >= 0.0)) throw UsageError("beta values must be >= 0");
        RecoveryTask task;
        task.seed = config.seed;
        task.trials = a.trials;
        std::optional<std::vector<SyntheticCase>> corpus;
        std::optional<Stage1Result> stage1;
        std::optional<Banks> banks;
        if (a.with_pipeline) {
            corpus = corpus_for(config, a.corpus);
            stage1 = run_stage1(*corpus, config);
            banks = build_banks(*corpus, *stage1, config);
        }
        for (double b : betas) {
            const auto r = recovery_accuracy(task, b);
            Json rec;
            rec["command"] = "sweep";
            rec["param"] = "beta";
            rec["value"] = b;
            rec["recovery_accuracy"] = r.accuracy;
            rec["recovery_mean_cosine"] = r.mean_cosine;
            if (a.with_pipeline) {
                PipelineConfig c = config;
                c.beta = b;
                const auto row = evaluate(*corpus, run_stage2(*corpus, *stage1, *banks, c, Ablation::both));
                add_metrics(rec, row.nlg);
                add_ce(rec, row.ce);
            }
            out << rec.dump() << '\n';
        }
        return;
    }

    const bool cap = a.param == "cap";
    const auto values = parse_values<std::size_t>(
        a.values.empty() ? (cap ? "100,250,500,750,1000" : "500,1000,3000,6000,8000,10000") : a.values, a.param.c_str());
    for (std::size_t v : values)
        if (v < 1) throw UsageError(a.param + " values must be >= 1");
    const auto corpus = corpus_for(config, a.corpus);
    const auto stage1 = run_stage1(corpus, config);
    for (std::size_t v : values) {
        PipelineConfig c = config;
        (cap ? c.cap_per_disease : c.report_memory_size) = v;
        const auto banks = build_banks(corpus, stage1, c);
        EvaluationRow row = evaluate(corpus, run_stage2(corpus, stage1, banks, c, Ablation::both));
        row.visual_bank_size = banks.visual.size();
        row.report_memory_size = banks.report.size();
        Json rec = row_json("sweep", row);
        rec["param"] = a.param;
        rec["value"] = v;
        out << rec.dump() << '\n';
    }
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Associative-memory report generation on synthetic radiographs", "ammrg"};
    app.require_subcommand(1);
    app.fallthrough(false);

    GenCorpusArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic corpus directory");
    add_common(gen_cmd, gen.ov);
    gen_cmd->add_option("--out", gen.out, "output directory")->required();
    add_override(gen_cmd, gen.ov, "--n-cases", "n_cases", "number of cases");
    add_override(gen_cmd, gen.ov, "--n-diseases", "n_diseases", "diseases that may appear (first n)");
    add_override(gen_cmd, gen.ov, "--image-size", "image_size", "image side in pixels");
    add_override(gen_cmd, gen.ov, "--patch-size", "patch_size", "patch side in pixels");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Train the multi-label classifier");
    add_common(train_cmd, train.ov);
    train_cmd->add_option("--corpus", train.corpus, "corpus directory (default: generate)");
    train_cmd->add_option("--out", train.out, "classifier file")->required();
    add_override(train_cmd, train.ov, "--lr", "train_lr", "learning rate");
    add_override(train_cmd, train.ov, "--epochs", "train_epochs", "full-batch epochs");
    add_override(train_cmd, train.ov, "--n-cases", "n_cases", "cases when generating");

    CamArgs cam;
    auto* cam_cmd = app.add_subcommand("cam", "Class activation map for one image");
    add_common(cam_cmd, cam.ov);
    cam_cmd->add_option("--classifier", cam.classifier, "classifier file")->required();
    cam_cmd->add_option("--image", cam.image, "image raster")->required();
    cam_cmd->add_option("--class", cam.class_id, "class index")->required();
    cam_cmd->add_option("--out", cam.out, "write the map as a raster");

    MaskArgs mask;
    auto* mask_cmd = app.add_subcommand("mask", "Zero every patch outside the region of interest");
    add_common(mask_cmd, mask.ov);
    mask_cmd->add_option("--image", mask.image, "image raster")->required();
    mask_cmd->add_option("--map", mask.map, "single-channel activation raster")->required();
    mask_cmd->add_option("--out", mask.out, "masked image raster")->required();
    add_override(mask_cmd, mask.ov, "--tau", "tau", "patch-mean threshold");
    add_override(mask_cmd, mask.ov, "--top-k", "top_k", "keep at most k patches");

    BuildBankArgs bb;
    auto* bb_cmd = app.add_subcommand("build-bank", "Build a visual bank or report memory");
    add_common(bb_cmd, bb.ov);
    bb_cmd->add_option("--kind", bb.kind, "visual or report")->required()->check(CLI::IsMember({"visual", "report"}));
    bb_cmd->add_option("--corpus", bb.corpus, "corpus directory (default: generate)");
    bb_cmd->add_option("--classifier", bb.classifier, "trained classifier (visual; default: train)");
    bb_cmd->add_option("--out", bb.out, "bank file")->required();
    add_override(bb_cmd, bb.ov, "--cap", "cap_per_disease", "visual entries per disease");
    add_override(bb_cmd, bb.ov, "--report-size", "report_memory_size", "report memory size");
    add_override(bb_cmd, bb.ov, "--tau", "tau", "patch-mean threshold");
    add_override(bb_cmd, bb.ov, "--top-k", "top_k", "keep at most k patches per region");
    add_override(bb_cmd, bb.ov, "--n-cases", "n_cases", "cases when generating");

    RetrieveArgs ret;
    auto* ret_cmd = app.add_subcommand("retrieve", "Associative retrieval against a bank file");
    add_common(ret_cmd, ret.ov);
    ret_cmd->add_option("--bank", ret.bank, "bank file")->required();
    ret_cmd->add_option("--query", ret.query, "file of query numbers");
    ret_cmd->add_option("--entry", ret.entry, "query with a stored entry");
    ret_cmd->add_option("--noise", ret.noise, "Gaussian noise added to --entry");
    ret_cmd->add_option("--top", ret.top, "entries to report")->check(CLI::PositiveNumber);
    ret_cmd->add_option("--max-iters", ret.max_iters, "update steps")->check(CLI::PositiveNumber);
    add_override(ret_cmd, ret.ov, "--beta", "beta", "inverse temperature");
    add_override(ret_cmd, ret.ov, "--mode", "mode", "cccp or gradient");
    add_override(ret_cmd, ret.ov, "--step-size", "step_size", "gradient step size");

    PipelineArgs pipe;
    auto* pipe_cmd = app.add_subcommand("pipeline", "Run both stages and score the generated reports");
    add_common(pipe_cmd, pipe.ov);
    pipe_cmd->add_option("--corpus", pipe.corpus, "corpus directory (default: generate)");
    pipe_cmd->add_option("--classifier", pipe.classifier, "trained classifier (default: train)");
    pipe_cmd->add_option("--ablate", pipe.ablate, "none|visual|report|both, a comma list, or all");
    pipe_cmd->add_option("--out", pipe.out_dir, "directory for generated reports");
    add_override(pipe_cmd, pipe.ov, "--n-cases", "n_cases", "cases when generating");
    add_override(pipe_cmd, pipe.ov, "--beta", "beta", "inverse temperature");
    add_override(pipe_cmd, pipe.ov, "--cap", "cap_per_disease", "visual entries per disease");
    add_override(pipe_cmd, pipe.ov, "--report-size", "report_memory_size", "report memory size");
    add_override(pipe_cmd, pipe.ov, "--tau", "tau", "patch-mean threshold");
    add_override(pipe_cmd, pipe.ov, "--d-out", "d_out", "value projection width");

    EvaluateArgs ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "Score candidate reports against references");
    add_common(ev_cmd, ev.ov);
    ev_cmd->add_option("--candidates", ev.candidates, "one report per line")->required()->check(CLI::ExistingFile);
    ev_cmd->add_option("--references", ev.references, "one report per line")->required()->check(CLI::ExistingFile);
    ev_cmd->add_option("--pred-labels", ev.pred_labels, "predicted 0/1 label rows")->check(CLI::ExistingFile);
    ev_cmd->add_option("--true-labels", ev.true_labels, "reference 0/1 label rows")->check(CLI::ExistingFile);

    SweepArgs sw;
    auto* sw_cmd = app.add_subcommand("sweep", "Vary one parameter and emit a row per value");
    add_common(sw_cmd, sw.ov);
    sw_cmd->add_option("--param", sw.param, "beta, cap or report-size")
        ->required()
        ->check(CLI::IsMember({"beta", "cap", "report-size"}));
    sw_cmd->add_option("--values", sw.values, "comma-separated values");
    sw_cmd->add_option("--corpus", sw.corpus, "corpus directory (default: generate)");
    sw_cmd->add_flag("--pipeline", sw.with_pipeline, "beta: also score the full pipeline");
    sw_cmd->add_option("--trials", sw.trials, "beta: recovery trials")->check(CLI::PositiveNumber);
    add_override(sw_cmd, sw.ov, "--n-cases", "n_cases", "cases when generating");
    add_override(sw_cmd, sw.ov, "--beta", "beta", "inverse temperature for cap and report-size sweeps");
    add_override(sw_cmd, sw.ov, "--d-out", "d_out", "value projection width");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (gen_cmd->parsed()) cmd_gen_corpus(gen, out);
        else if (train_cmd->parsed()) cmd_train(train, out);
        else if (cam_cmd->parsed()) cmd_cam(cam, out);
        else if (mask_cmd->parsed()) cmd_mask(mask, out);
        else if (bb_cmd->parsed()) cmd_build_bank(bb, out);
        else if (ret_cmd->parsed()) cmd_retrieve(ret, out);
        else if (pipe_cmd->parsed()) cmd_pipeline(pipe, out);
        else if (ev_cmd->parsed()) cmd_evaluate(ev, out);
        else if (sw_cmd->parsed()) cmd_sweep(sw, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    out.flush();
    return kExitOk;
}

} // namespace ammrg::cli
