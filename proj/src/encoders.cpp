#include "ammrg/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ammrg/errors.hpp"
#include "ammrg/text.hpp"

namespace ammrg::encoders {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t token_hash(std::string_view token, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
    for (char c : token) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h ^ splitmix64(seed));
}

} // namespace

PatchEncoder::PatchEncoder(std::uint64_t seed, std::size_t channels, std::size_t patch_size, std::size_t dim)
    : channels_(channels), patch_size_(patch_size) {
    if (channels == 0 || patch_size == 0 || dim == 0) throw InvalidArgument("PatchEncoder: sizes must be positive");
    const std::size_t in_dim = patch_size * patch_size * channels;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(in_dim)));
    std::vector<double> data(dim * in_dim);
    for (double& v : data) v = gauss(rng);
    projection_ = Mat64(dim, in_dim, std::move(data));
}

Mat64 PatchEncoder::encode_patches(const roi::ImageTensor& image) const {
    if (image.channels() != channels_ || image.height() % patch_size_ != 0 || image.width() % patch_size_ != 0) {
        throw DimensionError("encode_patches: image " + std::to_string(image.height()) + "x" +
                             std::to_string(image.width()) + "x" + std::to_string(image.channels()) +
                             " does not tile into " + std::to_string(patch_size_) + "-pixel patches with " +
                             std::to_string(channels_) + " channels");
    }
    const std::size_t rows = image.height() / patch_size_;
    const std::size_t cols = image.width() / patch_size_;
    std::vector<std::size_t> live;
    std::vector<double> flat;
    flat.reserve(rows * cols * projection_.cols());
    for (std::size_t gr = 0; gr < rows; ++gr) {
        for (std::size_t gc = 0; gc < cols; ++gc) {
            const std::size_t start = flat.size();
            bool any = false;
            for (std::size_t y = gr * patch_size_; y < (gr + 1) * patch_size_; ++y)
                for (std::size_t x = gc * patch_size_; x < (gc + 1) * patch_size_; ++x)
                    for (std::size_t c = 0; c < channels_; ++c) {
                        flat.push_back(image.at(y, x, c));
                        any = any || flat.back() != 0.0;
                    }
            // A zero patch maps to a zero row; masked images are mostly zeros.
            if (any) live.push_back(gr * cols + gc);
            else flat.resize(start);
        }
    }
    Mat64 out(rows * cols, dim());
    if (live.empty()) return out;
    const Mat64 projected = matmul_transposed(Mat64(live.size(), projection_.cols(), std::move(flat)), projection_);
    for (std::size_t k = 0; k < live.size(); ++k) {
        const auto src = projected.row(k);
        std::copy(src.begin(), src.end(), out.row(live[k]).begin());
    }
    return out;
}

Vec64 PatchEncoder::pooled(const Mat64& patch_features) const {
    if (patch_features.rows() == 0) throw DimensionError("pooled: no patches");
    std::vector<double> acc(patch_features.cols(), 0.0);
    for (std::size_t p = 0; p < patch_features.rows(); ++p) axpy(1.0, patch_features.row(p), acc);
    const double inv = 1.0 / static_cast<double>(patch_features.rows());
    for (double& v : acc) v *= inv;
    return Vec64(std::move(acc));
}

SentenceEncoder::SentenceEncoder(std::uint64_t hash_seed, std::size_t dim) : seed_(hash_seed), dim_(dim) {
    if (dim == 0) throw InvalidArgument("SentenceEncoder: dim must be positive");
}

Vec64 SentenceEncoder::encode_sentence(std::string_view sentence) const {
    const auto tokens = text::tokenize(sentence);
    if (tokens.empty()) throw InvalidArgument("encode_sentence: no tokens in input");
    std::vector<double> v(dim_, 0.0);
    for (const auto& t : tokens) {
        const std::uint64_t h = token_hash(t, seed_);
        v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    }
    const double n = norm(std::span<const double>(v));
    // Exact cancellation between colliding tokens leaves a zero vector.
    if (n > 0.0) {
        for (double& x : v) x /= n;
    }
    return Vec64(std::move(v));
}

} // namespace ammrg::encoders
