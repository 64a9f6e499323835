#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace ammrg {

/// Dense vector of doubles. Every element is checked for finiteness on
/// construction; mutation goes through operator[] and is the caller's
/// responsibility afterwards.
class Vec64 {
public:
    Vec64() = default;
    explicit Vec64(std::size_t dim, double fill = 0.0);
    explicit Vec64(std::vector<double> data);
    Vec64(std::initializer_list<double> init);

    std::size_t dim() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<const double> view() const noexcept { return data_; }
    std::span<double> view() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }
    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }

    bool operator==(const Vec64&) const = default;

private:
    std::vector<double> data_;
};

/// Row-major dense matrix of doubles.
class Mat64 {
public:
    Mat64() = default;
    Mat64(std::size_t rows, std::size_t cols, double fill = 0.0);
    Mat64(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Mat64 identity(std::size_t n);
    static Mat64 from_rows(std::span<const Vec64> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    Vec64 row_vec(std::size_t r) const;

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    bool operator==(const Mat64&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Throws NumericError naming `context` if any value is NaN or infinite.
void require_finite(std::span<const double> values, const char* context);

/// max(v) + log(sum(exp(v - max(v)))).
double log_sum_exp(std::span<const double> v);
double log_sum_exp(const Vec64& v);

Vec64 softmax(std::span<const double> v);
Vec64 softmax(const Vec64& v);

double dot(std::span<const double> a, std::span<const double> b);
double dot(const Vec64& a, const Vec64& b);
double norm(std::span<const double> v);
double norm(const Vec64& v);

/// Cosine similarity; 0 when either side has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);
double cosine(const Vec64& a, const Vec64& b);

Vec64 matvec(const Mat64& a, std::span<const double> v);
Vec64 matvec(const Mat64& a, const Vec64& v);
Mat64 matmul(const Mat64& a, const Mat64& b);
/// a * b^T; row i of the result equals matvec(b, a.row(i)) exactly.
Mat64 matmul_transposed(const Mat64& a, const Mat64& b);
Mat64 transpose(const Mat64& a);

Vec64 operator+(const Vec64& a, const Vec64& b);
Vec64 operator-(const Vec64& a, const Vec64& b);
Vec64 operator*(double s, const Vec64& v);

/// a += s * b
void axpy(double s, std::span<const double> b, std::span<double> a);

/// Concatenation [a; b].
Vec64 concat(const Vec64& a, const Vec64& b);

} // namespace ammrg
