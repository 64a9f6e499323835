#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "ammrg/numerics.hpp"
#include "ammrg/roi_masking.hpp"

namespace ammrg::encoders {

inline constexpr std::size_t kFeatureDim = 768;

/// Seeded Gaussian random projection of flattened patches (stand-in for a
/// vision backbone). Entries ~ N(0, 1/sqrt(patch_size^2 * channels)).
class PatchEncoder {
public:
    explicit PatchEncoder(std::uint64_t seed, std::size_t channels = 3, std::size_t patch_size = roi::kPatchSize,
                          std::size_t dim = kFeatureDim);

    /// One row per patch, row-major over the patch grid. Linear in the image.
    Mat64 encode_patches(const roi::ImageTensor& image) const;

    /// Mean of the patch rows.
    Vec64 pooled(const Mat64& patch_features) const;

    std::size_t dim() const noexcept { return projection_.rows(); }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t patch_size() const noexcept { return patch_size_; }
    const Mat64& projection() const noexcept { return projection_; }

private:
    std::size_t channels_;
    std::size_t patch_size_;
    Mat64 projection_;
};

/// Signed feature hashing over a bag of tokens, L2-normalized.
class SentenceEncoder {
public:
    explicit SentenceEncoder(std::uint64_t hash_seed = 0, std::size_t dim = kFeatureDim);

    /// Throws InvalidArgument when the text has no tokens.
    Vec64 encode_sentence(std::string_view text) const;

    std::size_t dim() const noexcept { return dim_; }

private:
    std::uint64_t seed_;
    std::size_t dim_;
};

} // namespace ammrg::encoders
