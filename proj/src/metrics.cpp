#include "ammrg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ammrg/errors.hpp"
#include "ammrg/numerics.hpp"

namespace ammrg::metrics {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const TokenizedReport& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                          tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

void require_parallel(std::size_t a, std::size_t b, const char* what) {
    if (a == 0) throw InvalidArgument(std::string(what) + ": empty corpus");
    if (a != b) throw DimensionError(std::string(what) + ": candidate and reference counts differ");
}

} // namespace

double bleu(std::span<const TokenizedReport> candidates, std::span<const TokenizedReport> references,
            std::size_t n) {
    require_parallel(candidates.size(), references.size(), "bleu");
    if (n < 1 || n > 4) throw InvalidArgument("bleu: order must be in 1..4");

    double log_precision = 0.0;
    std::size_t orders = 0;
    for (std::size_t k = 1; k <= n; ++k) {
        std::size_t matched = 0;
        std::size_t total = 0;
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto cand = ngram_counts(candidates[i], k);
            const auto ref = ngram_counts(references[i], k);
            for (const auto& [gram, count] : cand) {
                total += count;
                const auto it = ref.find(gram);
                if (it != ref.end()) matched += std::min(count, it->second);
            }
        }
        if (total == 0) continue;
        if (matched == 0) return 0.0;
        log_precision += std::log(static_cast<double>(matched) / static_cast<double>(total));
        ++orders;
    }
    if (orders == 0) return 0.0;

    std::size_t c = 0;
    std::size_t r = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        c += candidates[i].size();
        r += references[i].size();
    }
    const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
    return bp * std::exp(log_precision / static_cast<double>(orders));
}

std::size_t lcs_length(const TokenizedReport& a, const TokenizedReport& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const TokenizedReport& candidate, const TokenizedReport& reference) {
    if (candidate.empty() || reference.empty()) throw InvalidArgument("rouge_l: empty token sequence");
    const double lcs = static_cast<double>(lcs_length(candidate, reference));
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(reference.size());
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

double rouge_l(std::span<const TokenizedReport> candidates, std::span<const TokenizedReport> references) {
    require_parallel(candidates.size(), references.size(), "rouge_l");
    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) total += rouge_l(candidates[i], references[i]);
    return total / static_cast<double>(candidates.size());
}

double cider(std::span<const TokenizedReport> candidates, std::span<const TokenizedReport> references) {
    require_parallel(candidates.size(), references.size(), "cider");
    constexpr std::size_t kMaxOrder = 4;
    const double log_docs = std::log(static_cast<double>(references.size()));

    double total = 0.0;
    for (std::size_t k = 1; k <= kMaxOrder; ++k) {
        std::vector<NgramCounts> ref_counts;
        ref_counts.reserve(references.size());
        std::map<std::vector<std::string>, std::size_t> df;
        for (const auto& ref : references) {
            ref_counts.push_back(ngram_counts(ref, k));
            for (const auto& entry : ref_counts.back()) ++df[entry.first];
        }
        auto idf = [&](const std::vector<std::string>& gram) {
            const auto it = df.find(gram);
            const double d = it == df.end() ? 1.0 : static_cast<double>(it->second);
            return log_docs - std::log(d);
        };

        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const auto cand = ngram_counts(candidates[i], k);
            const auto& ref = ref_counts[i];
            std::set<std::vector<std::string>> keys;
            for (const auto& e : cand) keys.insert(e.first);
            for (const auto& e : ref) keys.insert(e.first);
            std::vector<double> cv;
            std::vector<double> rv;
            for (const auto& gram : keys) {
                const double w = idf(gram);
                const auto ci = cand.find(gram);
                const auto ri = ref.find(gram);
                cv.push_back(ci == cand.end() ? 0.0 : static_cast<double>(ci->second) * w);
                rv.push_back(ri == ref.end() ? 0.0 : static_cast<double>(ri->second) * w);
            }
            total += cosine(std::span<const double>(cv), std::span<const double>(rv));
        }
    }
    return 10.0 * total / static_cast<double>(kMaxOrder * candidates.size());
}

CeScores ce_scores(std::span<const LabelVector> predicted, std::span<const LabelVector> truth) {
    if (predicted.size() != truth.size()) throw DimensionError("ce_scores: prediction and truth counts differ");
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        tp += (predicted[i] & truth[i]).count();
        fp += (predicted[i] & ~truth[i]).count();
        fn += (~predicted[i] & truth[i]).count();
    }
    CeScores s;
    s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

NlgScores nlg_scores(std::span<const TokenizedReport> candidates, std::span<const TokenizedReport> references) {
    NlgScores s;
    s.bleu1 = bleu(candidates, references, 1);
    s.bleu2 = bleu(candidates, references, 2);
    s.bleu3 = bleu(candidates, references, 3);
    s.bleu4 = bleu(candidates, references, 4);
    s.rouge_l = rouge_l(candidates, references);
    s.cider = cider(candidates, references);
    return s;
}

} // namespace ammrg::metrics
