#include "muonlab/matrix.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

namespace muonlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(rows * cols, DoubleBuffer::Uninit{}) {
    if (data.size() != rows_ * cols_) {
        throw DimensionError("Matrix: data length " + std::to_string(data.size()) +
                             " does not match shape " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
    }
    std::copy(data.begin(), data.end(), data_.begin());
}

Matrix Matrix::uninitialized(std::size_t rows, std::size_t cols) {
    return Matrix(rows, cols, DoubleBuffer::Uninit{});
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diag(std::span<const double> values) {
    Matrix m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t = uninitialized(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) throw DimensionError("Matrix +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (!same_shape(other)) throw DimensionError("Matrix -=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

namespace {

Matrix gemm(const Matrix& a, const Matrix& b, bool trans_a, bool trans_b) {
    const std::size_t m = trans_a ? a.cols() : a.rows();
    const std::size_t k = trans_a ? a.rows() : a.cols();
    const std::size_t kb = trans_b ? b.cols() : b.rows();
    const std::size_t n = trans_b ? b.rows() : b.cols();
    if (k != kb) {
        throw DimensionError("matmul: inner dimensions " + std::to_string(k) + " and " +
                             std::to_string(kb) + " do not agree");
    }
    if (m == 0 || n == 0 || k == 0) return Matrix(m, n);
    // dgemm with beta = 0 writes every output entry, so skip the zero fill.
    Matrix c = Matrix::uninitialized(m, n);
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
                static_cast<int>(n), static_cast<int>(k), 1.0, a.data(),
                static_cast<int>(a.cols()), b.data(), static_cast<int>(b.cols()), 0.0,
                c.data(), static_cast<int>(n));
    return c;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) { return gemm(a, b, false, false); }
Matrix matmul_tn(const Matrix& a, const Matrix& b) { return gemm(a, b, true, false); }
Matrix matmul_nt(const Matrix& a, const Matrix& b) { return gemm(a, b, false, true); }

double frobenius_norm(const Matrix& m) {
    // Two-pass scaled sum to avoid overflow on adversarial inputs.
    double scale = max_abs(m);
    if (scale == 0.0) return 0.0;
    double acc = 0.0;
    for (double v : m.raw()) {
        const double x = v / scale;
        acc += x * x;
    }
    return scale * std::sqrt(acc);
}

double max_abs(const Matrix& m) {
    double best = 0.0;
    for (double v : m.raw()) best = std::max(best, std::abs(v));
    return best;
}

void require_finite(const Matrix& m, const std::string& who) {
    if (!m.all_finite()) throw NumericError(who + ": non-finite entries in input");
}

namespace {

constexpr char kMagic[4] = {'M', 'L', 'A', 'B'};

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    b[0] = static_cast<char>(v & 0xff);
    b[1] = static_cast<char>((v >> 8) & 0xff);
    b[2] = static_cast<char>((v >> 16) & 0xff);
    b[3] = static_cast<char>((v >> 24) & 0xff);
    out.append(b, 4);
}

std::uint32_t get_u32(const std::string& buf, std::size_t off) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off])) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 1])) << 8) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 2])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + 3])) << 24);
}

}  // namespace

void write_matrix_stream(const Matrix& m, std::string& out, MatrixDtype dtype) {
    out.append(kMagic, 4);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    out.push_back(static_cast<char>(dtype));
    if (dtype == MatrixDtype::F64) {
        const char* p = reinterpret_cast<const char*>(m.data());
        out.append(p, m.size() * sizeof(double));
    } else {
        std::vector<float> f(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) f[i] = static_cast<float>(m.data()[i]);
        out.append(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(float));
    }
}

Matrix read_matrix_stream(const std::string& buf, std::size_t& offset) {
    if (offset + 17 > buf.size())
        throw IoError("matrix format: truncated header at offset " + std::to_string(offset));
    if (std::memcmp(buf.data() + offset, kMagic, 4) != 0)
        throw IoError("matrix format: bad magic at offset " + std::to_string(offset));
    const std::uint32_t version = get_u32(buf, offset + 4);
    if (version != 1)
        throw IoError("matrix format: unsupported version " + std::to_string(version));
    const std::uint32_t rows = get_u32(buf, offset + 8);
    const std::uint32_t cols = get_u32(buf, offset + 12);
    const auto dtype = static_cast<MatrixDtype>(buf[offset + 16]);
    offset += 17;
    const std::size_t count = static_cast<std::size_t>(rows) * cols;
    const std::size_t elem = dtype == MatrixDtype::F64 ? sizeof(double) : sizeof(float);
    if (dtype != MatrixDtype::F32 && dtype != MatrixDtype::F64)
        throw IoError("matrix format: unknown dtype at offset " + std::to_string(offset - 1));
    if (offset + count * elem > buf.size())
        throw IoError("matrix format: truncated payload at offset " + std::to_string(offset));
    Matrix m(rows, cols);
    if (dtype == MatrixDtype::F64) {
        std::memcpy(m.data(), buf.data() + offset, count * sizeof(double));
    } else {
        std::vector<float> f(count);
        std::memcpy(f.data(), buf.data() + offset, count * sizeof(float));
        for (std::size_t i = 0; i < count; ++i) m.data()[i] = f[i];
    }
    offset += count * elem;
    return m;
}

void save_matrix(const Matrix& m, const std::string& path, MatrixDtype dtype) {
    std::string buf;
    write_matrix_stream(m, buf, dtype);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed: " + path);
}

Matrix load_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t offset = 0;
    Matrix m = read_matrix_stream(buf, offset);
    if (offset != buf.size())
        throw IoError("matrix format: trailing bytes in " + path);
    return m;
}

}  // namespace muonlab
