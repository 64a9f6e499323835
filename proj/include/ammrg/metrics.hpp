#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ammrg/diseases.hpp"

namespace ammrg::metrics {

using TokenizedReport = std::vector<std::string>;

/// Corpus BLEU with uniform weights over orders 1..n, clipped counts against a
/// single reference, and brevity penalty exp(1 - r/c) when c < r. Orders for
/// which the candidate corpus has no n-grams at all are left out of the
/// geometric mean.
double bleu(std::span<const TokenizedReport> candidates, std::span<const TokenizedReport> references,
            std::size_t n);

std::size_t lcs_length(const TokenizedReport& a, const TokenizedReport& b);

/// LCS F-measure for one pair.
double rouge_l(const TokenizedReport& candidate, const TokenizedReport& reference);
/// Mean rouge_l over pairs.
double rouge_l(std::span<const TokenizedReport> candidates, std::span<const TokenizedReport> references);

/// Plain CIDEr (no length penalty): 10 * mean over n = 1..4 of the TF-IDF
/// cosine between candidate and reference n-gram vectors, averaged over pairs.
/// Document frequencies come from the reference corpus; unseen n-grams take df = 1.
double cider(std::span<const TokenizedReport> candidates, std::span<const TokenizedReport> references);

struct CeScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Micro-averaged over every label slot; any 0/0 ratio is reported as 0.
CeScores ce_scores(std::span<const LabelVector> predicted, std::span<const LabelVector> truth);

struct NlgScores {
    double bleu1 = 0.0;
    double bleu2 = 0.0;
    double bleu3 = 0.0;
    double bleu4 = 0.0;
    double rouge_l = 0.0;
    double cider = 0.0;
};

NlgScores nlg_scores(std::span<const TokenizedReport> candidates, std::span<const TokenizedReport> references);

} // namespace ammrg::metrics
