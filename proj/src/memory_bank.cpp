#include "ammrg/memory_bank.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "ammrg/binary_io.hpp"
#include "ammrg/errors.hpp"

namespace ammrg::bank {

namespace {

constexpr std::string_view kMagic = "AMMRGBNK";
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kKindVisual = 0;
constexpr std::uint8_t kKindReport = 1;

template <typename Entry>
std::size_t common_dim(std::span<const Entry> entries, const char* what) {
    if (entries.empty()) return 0;
    const std::size_t dim = entries.front().feature.dim();
    for (const auto& e : entries) {
        if (e.feature.dim() != dim) {
            throw DimensionError(std::string(what) + ": entries have mixed feature dimensions");
        }
    }
    return dim;
}

void write_feature(io::ByteWriter& w, const Vec64& feature) {
    for (double x : feature) w.f32(static_cast<float>(x));
}

Vec64 read_feature(io::ByteReader& r, std::size_t dim) {
    const std::size_t at = r.offset();
    std::vector<double> values(dim);
    for (auto& v : values) {
        const float f = r.f32();
        if (!std::isfinite(f)) throw ParseError("non-finite feature value", at);
        v = static_cast<double>(f);
    }
    return Vec64(std::move(values));
}

hopfield::PatternMatrix stack(std::vector<double> data, std::size_t rows, std::size_t dim) {
    if (rows == 0) throw EmptyMemoryError("no bank entries match the selection");
    return hopfield::PatternMatrix(Mat64(rows, dim, std::move(data)));
}

} // namespace

VisualBank build_visual_bank(std::span<const VisualCandidate> candidates, std::size_t cap_per_disease) {
    if (cap_per_disease < 1) throw InvalidArgument("cap_per_disease must be >= 1");

    VisualBank bank;
    std::array<std::vector<const VisualCandidate*>, kDiseaseCount> groups;
    std::size_t dim = candidates.empty() ? 0 : candidates.front().entry.feature.dim();
    for (const auto& c : candidates) {
        if (c.entry.disease_id >= kDiseaseCount) throw InvalidArgument("visual candidate has invalid disease_id");
        if (c.entry.feature.dim() != dim) throw DimensionError("visual candidates have mixed feature dimensions");
        groups[c.entry.disease_id].push_back(&c);
    }
    bank.dim = dim;

    for (auto& group : groups) {
        std::stable_sort(group.begin(), group.end(), [](const VisualCandidate* a, const VisualCandidate* b) {
            if (a->activation != b->activation) return a->activation > b->activation;
            if (a->entry.source_image_id != b->entry.source_image_id)
                return a->entry.source_image_id < b->entry.source_image_id;
            return a->entry.patch_index < b->entry.patch_index;
        });
        const std::size_t keep = std::min(cap_per_disease, group.size());
        for (std::size_t i = 0; i < keep; ++i) bank.entries.push_back(group[i]->entry);
    }
    return bank;
}

std::vector<std::size_t> largest_remainder(std::span<const std::size_t> counts, std::size_t total) {
    const std::size_t supply = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    std::vector<std::size_t> quotas(counts.size(), 0);
    if (supply == 0) return quotas;
    const std::size_t seats = std::min(total, supply);

    // Exact integer shares: seats * count / supply as quotient + remainder.
    std::vector<std::size_t> remainders(counts.size());
    std::size_t assigned = 0;
    for (std::size_t g = 0; g < counts.size(); ++g) {
        const unsigned __int128 num = static_cast<unsigned __int128>(seats) * counts[g];
        quotas[g] = static_cast<std::size_t>(num / supply);
        remainders[g] = static_cast<std::size_t>(num % supply);
        assigned += quotas[g];
    }
    std::vector<std::size_t> order(counts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
    for (std::size_t i = 0; assigned < seats; ++i, ++assigned) {
        ++quotas[order[i]];
    }
    return quotas;
}

std::size_t apportionment_group(const LabelVector& labels) {
    for (std::size_t d = 0; d < kDiseaseCount; ++d) {
        if (labels.test(d)) return d;
    }
    return kDiseaseCount;
}

ReportMemory build_report_memory(std::span<const ReportMemoryEntry> candidates, std::size_t total_size) {
    if (total_size < 1) throw InvalidArgument("report memory total_size must be >= 1");

    ReportMemory memory;
    memory.dim = common_dim(candidates, "report candidates");

    std::vector<std::size_t> counts(kDiseaseCount + 1, 0);
    for (const auto& c : candidates) {
        if (c.sentence_text.empty()) throw InvalidArgument("report candidate has empty sentence_text");
        ++counts[apportionment_group(c.disease_labels)];
    }
    const auto quotas = largest_remainder(counts, total_size);

    std::vector<std::size_t> taken(counts.size(), 0);
    for (const auto& c : candidates) {
        const std::size_t g = apportionment_group(c.disease_labels);
        if (taken[g] < quotas[g]) {
            ++taken[g];
            memory.entries.push_back(c);
        }
    }
    return memory;
}

std::vector<std::uint8_t> encode_bank(const AnyBank& any) {
    io::ByteWriter w;
    w.bytes(kMagic);
    w.u16(kVersion);
    std::visit(
        [&](const auto& bank) {
            using T = std::decay_t<decltype(bank)>;
            constexpr bool visual = std::is_same_v<T, VisualBank>;
            w.u8(visual ? kKindVisual : kKindReport);
            w.u32(static_cast<std::uint32_t>(bank.dim));
            w.u64(bank.entries.size());
            for (const auto& e : bank.entries) {
                if (e.feature.dim() != bank.dim) throw DimensionError("bank entry dimension differs from bank dim");
                if constexpr (visual) {
                    w.u8(e.disease_id);
                    w.str(e.source_image_id);
                    w.u16(e.patch_index);
                } else {
                    w.u16(static_cast<std::uint16_t>(e.disease_labels.to_ulong()));
                    w.str(e.sentence_text);
                    w.str(e.source_report_id);
                }
                write_feature(w, e.feature);
            }
        },
        any);
    return w.buffer();
}

AnyBank decode_bank(std::span<const std::uint8_t> data) {
    io::ByteReader r(data);
    if (data.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
        throw ParseError("bad bank magic", 0);
    }
    const std::size_t version_at = r.offset();
    if (r.u16() != kVersion) throw ParseError("unsupported bank version", version_at);
    const std::size_t kind_at = r.offset();
    const std::uint8_t kind = r.u8();
    if (kind != kKindVisual && kind != kKindReport) throw ParseError("unknown bank kind", kind_at);
    const std::size_t dim = r.u32();
    const std::uint64_t count = r.u64();

    auto read_entries = [&](auto& bank, auto&& read_one) {
        bank.dim = dim;
        for (std::uint64_t i = 0; i < count; ++i) {
            if (r.remaining() == 0) {
                throw TruncationError("bank payload holds " + std::to_string(i) + " of " + std::to_string(count) +
                                          " declared entries",
                                      r.offset());
            }
            bank.entries.push_back(read_one());
        }
        if (r.remaining() != 0) {
            throw ParseError("trailing bytes after " + std::to_string(count) + " declared entries", r.offset());
        }
    };

    if (kind == kKindVisual) {
        VisualBank bank;
        read_entries(bank, [&] {
            VisualBankEntry e;
            const std::size_t at = r.offset();
            e.disease_id = r.u8();
            if (e.disease_id >= kDiseaseCount) throw ParseError("disease_id out of range", at);
            e.source_image_id = r.str();
            e.patch_index = r.u16();
            e.feature = read_feature(r, dim);
            return e;
        });
        return bank;
    }
    ReportMemory memory;
    read_entries(memory, [&] {
        ReportMemoryEntry e;
        const std::size_t at = r.offset();
        const std::uint16_t bits = r.u16();
        if (bits >> kDiseaseCount) throw ParseError("label bits beyond the disease range", at);
        e.disease_labels = LabelVector(bits);
        const std::size_t text_at = r.offset();
        e.sentence_text = r.str();
        if (e.sentence_text.empty()) throw ParseError("empty sentence_text", text_at);
        e.source_report_id = r.str();
        e.feature = read_feature(r, dim);
        return e;
    });
    return memory;
}

void save_bank(const AnyBank& bank, const std::filesystem::path& path) {
    io::write_file(path, encode_bank(bank));
}

AnyBank load_bank(const std::filesystem::path& path) { return decode_bank(io::read_file(path)); }

hopfield::PatternMatrix as_pattern_matrix(const VisualBank& bank, std::optional<std::size_t> disease) {
    std::vector<double> data;
    std::size_t rows = 0;
    for (const auto& e : bank.entries) {
        if (disease && e.disease_id != *disease) continue;
        data.insert(data.end(), e.feature.begin(), e.feature.end());
        ++rows;
    }
    return stack(std::move(data), rows, bank.dim);
}

hopfield::PatternMatrix as_pattern_matrix(const ReportMemory& bank, std::optional<std::size_t> disease) {
    std::vector<double> data;
    std::size_t rows = 0;
    for (const auto& e : bank.entries) {
        if (disease && (*disease >= kDiseaseCount || !e.disease_labels.test(*disease))) continue;
        data.insert(data.end(), e.feature.begin(), e.feature.end());
        ++rows;
    }
    return stack(std::move(data), rows, bank.dim);
}

} // namespace ammrg::bank
