#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace ammrg::roi {

inline constexpr std::size_t kPatchSize = 16;
inline constexpr std::size_t kImageSize = 224;

/// H x W x C image, channel-interleaved row-major, pixels in [0, 1].
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
    ImageTensor(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> pixels);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t channels() const noexcept { return channels_; }

    double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels_[(y * width_ + x) * channels_ + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels_[(y * width_ + x) * channels_ + c]; }

    std::span<const double> pixels() const noexcept { return pixels_; }

    bool operator==(const ImageTensor&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> pixels_;
};

/// Per-pixel relevance field.
struct ActivationMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    bool operator==(const ActivationMap&) const = default;
};

/// Min-max rescale to [0, 1]. A constant map becomes all zeros.
ActivationMap normalize(const ActivationMap& map);

/// Mean activation of each patch, row-major over the patch grid.
struct PatchMeans {
    std::size_t patch_size = kPatchSize;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::vector<double> means;

    std::size_t count() const noexcept { return means.size(); }
};

PatchMeans patch_means(const ActivationMap& map, std::size_t patch_size = kPatchSize);

struct RoiSelection {
    std::size_t patch_size = kPatchSize;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::vector<bool> selected;
    std::vector<double> means;
    double tau = 0.5;
    std::optional<std::size_t> top_k;

    std::vector<std::size_t> selected_indices() const;
    bool operator==(const RoiSelection&) const = default;
};

inline constexpr double kDefaultTau = 0.5;

/// Patches with mean strictly above tau; with top_k, additionally restricted
/// to the k largest means (ties broken by row-major index).
RoiSelection select_roi(const PatchMeans& means, double tau = kDefaultTau, std::optional<std::size_t> top_k = {});

/// Copies selected patches verbatim and zeroes everything else.
ImageTensor apply_mask(const ImageTensor& image, const RoiSelection& selection);

/// Raster interchange file: "AMMRGIMG" | u32 H | u32 W | u32 C | H*W*C little-endian f32, HWC order.
struct Raster {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<double> values;
};

std::vector<std::uint8_t> encode_raster(const Raster& raster);
Raster decode_raster(std::span<const std::uint8_t> data);
void save_raster(const Raster& raster, const std::filesystem::path& path);
Raster load_raster(const std::filesystem::path& path);

Raster to_raster(const ImageTensor& image);
Raster to_raster(const ActivationMap& map);
ImageTensor image_from_raster(Raster raster);
ActivationMap map_from_raster(Raster raster);

} // namespace ammrg::roi
