#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ammrg/diseases.hpp"
#include "ammrg/hopfield.hpp"
#include "ammrg/numerics.hpp"

namespace ammrg::bank {

struct VisualBankEntry {
    Vec64 feature;
    std::uint8_t disease_id = 0;
    std::string source_image_id;
    std::uint16_t patch_index = 0;

    bool operator==(const VisualBankEntry&) const = default;
};

/// A visual entry before selection, carrying the activation score it is ranked by.
struct VisualCandidate {
    VisualBankEntry entry;
    double activation = 0.0;
};

struct ReportMemoryEntry {
    Vec64 feature;
    std::string sentence_text;
    LabelVector disease_labels;
    std::string source_report_id;

    bool operator==(const ReportMemoryEntry&) const = default;
};

struct VisualBank {
    std::size_t dim = 0;
    std::vector<VisualBankEntry> entries;

    std::size_t size() const noexcept { return entries.size(); }
    bool operator==(const VisualBank&) const = default;
};

struct ReportMemory {
    std::size_t dim = 0;
    std::vector<ReportMemoryEntry> entries;

    std::size_t size() const noexcept { return entries.size(); }
    bool operator==(const ReportMemory&) const = default;
};

using AnyBank = std::variant<VisualBank, ReportMemory>;

inline constexpr std::size_t kDefaultCapPerDisease = 500;
inline constexpr std::size_t kDefaultReportMemorySize = 6000;

/// Keep at most `cap_per_disease` candidates per disease, highest activation
/// first; ties go to the smaller (source_image_id, patch_index). Output is
/// grouped by ascending disease id, rank order within each group.
VisualBank build_visual_bank(std::span<const VisualCandidate> candidates,
                             std::size_t cap_per_disease = kDefaultCapPerDisease);

/// Largest-remainder apportionment of min(total, sum(counts)) seats over
/// `counts`. Leftover seats go by descending remainder, lower index first on ties.
std::vector<std::size_t> largest_remainder(std::span<const std::size_t> counts, std::size_t total);

/// Apportionment group of a report entry: its lowest positive label, or
/// kDiseaseCount when it has none.
std::size_t apportionment_group(const LabelVector& labels);

/// Proportional per-disease quotas summing to min(total_size, candidates);
/// the first `quota` entries of each group survive, in source order.
ReportMemory build_report_memory(std::span<const ReportMemoryEntry> candidates,
                                 std::size_t total_size = kDefaultReportMemorySize);

/// Binary encoding (little endian):
///   header  "AMMRGBNK" | u16 version=1 | u8 kind (0 visual, 1 report) | u32 dim | u64 count
///   visual  u8 disease_id | u32+bytes image id | u16 patch_index | dim x f32
///   report  u16 label bits | u32+bytes sentence | u32+bytes report id | dim x f32
std::vector<std::uint8_t> encode_bank(const AnyBank& bank);
AnyBank decode_bank(std::span<const std::uint8_t> data);

void save_bank(const AnyBank& bank, const std::filesystem::path& path);
AnyBank load_bank(const std::filesystem::path& path);

/// Rows in storage order, optionally restricted to one disease (visual:
/// disease_id match; report: label bit set). Throws EmptyMemoryError when
/// nothing is selected.
hopfield::PatternMatrix as_pattern_matrix(const VisualBank& bank, std::optional<std::size_t> disease = {});
hopfield::PatternMatrix as_pattern_matrix(const ReportMemory& bank, std::optional<std::size_t> disease = {});

} // namespace ammrg::bank
