#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <string_view>

namespace ammrg {

inline constexpr std::size_t kDiseaseCount = 14;

/// The fourteen observation labels of the chest X-ray labeler, in index order.
inline constexpr std::array<std::string_view, kDiseaseCount> kDiseaseNames = {
    "Atelectasis",     "Cardiomegaly",  "Consolidation",  "Edema",
    "Enlarged Cardiomediastinum",       "Fracture",       "Lung Lesion",
    "Lung Opacity",    "No Finding",    "Pleural Effusion", "Pleural Other",
    "Pneumonia",       "Pneumothorax",  "Support Devices",
};

inline constexpr std::size_t kNoFinding = 8;

using LabelVector = std::bitset<kDiseaseCount>;

} // namespace ammrg
