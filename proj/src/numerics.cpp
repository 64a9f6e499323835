#include "ammrg/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ammrg/errors.hpp"

namespace ammrg {

namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* op) {
    if (a != b) {
        throw DimensionError(std::string(op) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                             std::to_string(b) + ")");
    }
}

} // namespace

void require_finite(std::span<const double> values, const char* context) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericError(std::string(context) + ": non-finite value at index " + std::to_string(i));
        }
    }
}

Vec64::Vec64(std::size_t dim, double fill) : data_(dim, fill) {
    require_finite(data_, "Vec64");
}

Vec64::Vec64(std::vector<double> data) : data_(std::move(data)) {
    require_finite(data_, "Vec64");
}

Vec64::Vec64(std::initializer_list<double> init) : data_(init) {
    require_finite(data_, "Vec64");
}

Mat64::Mat64(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    require_finite(data_, "Mat64");
}

Mat64::Mat64(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw DimensionError("Mat64: data length " + std::to_string(data_.size()) + " != " +
                             std::to_string(rows) + "x" + std::to_string(cols));
    }
    require_finite(data_, "Mat64");
}

Mat64 Mat64::identity(std::size_t n) {
    Mat64 m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Mat64 Mat64::from_rows(std::span<const Vec64> rows) {
    if (rows.empty()) return {};
    const std::size_t cols = rows.front().dim();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
        require_same_dim(r.dim(), cols, "Mat64::from_rows");
        data.insert(data.end(), r.begin(), r.end());
    }
    return Mat64(rows.size(), cols, std::move(data));
}

Vec64 Mat64::row_vec(std::size_t r) const {
    auto s = row(r);
    return Vec64(std::vector<double>(s.begin(), s.end()));
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) throw DimensionError("log_sum_exp: empty vector");
    const double mx = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - mx);
    return mx + std::log(acc);
}

double log_sum_exp(const Vec64& v) { return log_sum_exp(v.view()); }

Vec64 softmax(std::span<const double> v) {
    if (v.empty()) throw DimensionError("softmax: empty vector");
    const double mx = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        total += out[i];
    }
    for (double& x : out) x /= total;
    return Vec64(std::move(out));
}

Vec64 softmax(const Vec64& v) { return softmax(v.view()); }

double dot(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a.size(), b.size(), "dot");
    const std::size_t n = a.size();
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 += a[i] * b[i];
        acc1 += a[i + 1] * b[i + 1];
        acc2 += a[i + 2] * b[i + 2];
        acc3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) acc0 += a[i] * b[i];
    return (acc0 + acc1) + (acc2 + acc3);
}

double dot(const Vec64& a, const Vec64& b) { return dot(a.view(), b.view()); }

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }
double norm(const Vec64& v) { return norm(v.view()); }

double cosine(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a.size(), b.size(), "cosine");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

double cosine(const Vec64& a, const Vec64& b) { return cosine(a.view(), b.view()); }

Vec64 matvec(const Mat64& a, std::span<const double> v) {
    require_same_dim(a.cols(), v.size(), "matvec");
    std::vector<double> out(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) out[r] = dot(a.row(r), v);
    return Vec64(std::move(out));
}

Mat64 matmul_transposed(const Mat64& a, const Mat64& b) {
    require_same_dim(a.cols(), b.cols(), "matmul_transposed");
    constexpr std::size_t kBlock = 8;
    Mat64 out(a.rows(), b.rows());
    for (std::size_t i0 = 0; i0 < a.rows(); i0 += kBlock) {
        const std::size_t i1 = std::min(a.rows(), i0 + kBlock);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto brow = b.row(j);
            for (std::size_t i = i0; i < i1; ++i) out(i, j) = dot(a.row(i), brow);
        }
    }
    return out;
}

Vec64 matvec(const Mat64& a, const Vec64& v) { return matvec(a, v.view()); }

Mat64 matmul(const Mat64& a, const Mat64& b) {
    require_same_dim(a.cols(), b.rows(), "matmul");
    std::vector<double> out(a.rows() * b.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* orow = out.data() + i * b.cols();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return Mat64(a.rows(), b.cols(), std::move(out));
}

Mat64 transpose(const Mat64& a) {
    Mat64 t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
    return t;
}

Vec64 operator+(const Vec64& a, const Vec64& b) {
    require_same_dim(a.dim(), b.dim(), "operator+");
    std::vector<double> out(a.dim());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return Vec64(std::move(out));
}

Vec64 operator-(const Vec64& a, const Vec64& b) {
    require_same_dim(a.dim(), b.dim(), "operator-");
    std::vector<double> out(a.dim());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return Vec64(std::move(out));
}

Vec64 operator*(double s, const Vec64& v) {
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x *= s;
    return Vec64(std::move(out));
}

void axpy(double s, std::span<const double> b, std::span<double> a) {
    require_same_dim(a.size(), b.size(), "axpy");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

Vec64 concat(const Vec64& a, const Vec64& b) {
    std::vector<double> out;
    out.reserve(a.dim() + b.dim());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return Vec64(std::move(out));
}

} // namespace ammrg
