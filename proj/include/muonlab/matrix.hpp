#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "muonlab/errors.hpp"

namespace muonlab {

/// Heap buffer of doubles. Like std::vector<double>, but dense kernels that
/// overwrite every element can allocate without the zero fill.
class DoubleBuffer {
public:
    struct Uninit {};

    DoubleBuffer() = default;
    explicit DoubleBuffer(std::size_t n) : size_(n), data_(n ? new double[n]() : nullptr) {}
    DoubleBuffer(std::size_t n, Uninit) : size_(n), data_(n ? new double[n] : nullptr) {}
    DoubleBuffer(const DoubleBuffer& o)
        : size_(o.size_), data_(o.size_ ? new double[o.size_] : nullptr) {
        std::copy(o.begin(), o.end(), data_.get());
    }
    DoubleBuffer(DoubleBuffer&& o) noexcept
        : size_(std::exchange(o.size_, 0)), data_(std::move(o.data_)) {}
    DoubleBuffer& operator=(const DoubleBuffer& o) {
        if (this != &o) *this = DoubleBuffer(o);
        return *this;
    }
    DoubleBuffer& operator=(DoubleBuffer&& o) noexcept {
        size_ = std::exchange(o.size_, 0);
        data_ = std::move(o.data_);
        return *this;
    }

    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }
    double* data() { return data_.get(); }
    const double* data() const { return data_.get(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double* begin() { return data_.get(); }
    double* end() { return data_.get() + size_; }
    const double* begin() const { return data_.get(); }
    const double* end() const { return data_.get() + size_; }

private:
    std::size_t size_ = 0;
    std::unique_ptr<double[]> data_;
};

/// Dense row-major matrix of doubles. The universal carrier for weights,
/// gradients, momentum and polar factors.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    /// Contents unspecified; every element must be written before being read.
    static Matrix uninitialized(std::size_t rows, std::size_t cols);
    static Matrix identity(std::size_t n);
    static Matrix diag(std::span<const double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    DoubleBuffer& raw() { return data_; }
    const DoubleBuffer& raw() const { return data_; }

    Matrix transposed() const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const;

private:
    Matrix(std::size_t rows, std::size_t cols, DoubleBuffer::Uninit tag)
        : rows_(rows), cols_(cols), data_(rows * cols, tag) {}

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    DoubleBuffer data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// Standard matrix product, a.cols must equal b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T without forming the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& m);
double max_abs(const Matrix& m);

void require_finite(const Matrix& m, const std::string& who);

// --- Binary matrix format ---------------------------------------------------
// Little-endian header: magic "MLAB", u32 version=1, u32 rows, u32 cols,
// u8 dtype (0 = f32, 1 = f64), then row-major payload.

enum class MatrixDtype : std::uint8_t { F32 = 0, F64 = 1 };

void save_matrix(const Matrix& m, const std::string& path,
                 MatrixDtype dtype = MatrixDtype::F64);
Matrix load_matrix(const std::string& path);

void write_matrix_stream(const Matrix& m, std::string& out, MatrixDtype dtype);
Matrix read_matrix_stream(const std::string& buf, std::size_t& offset);

}  // namespace muonlab
