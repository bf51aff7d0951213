#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "glymph/error.hpp"

namespace glymph {

/// Dense multi-dimensional array of real values with an optional gradient
/// buffer of the same shape. Rank-4 tensors are laid out batch, channel,
/// height, width in row-major order; lower ranks drop leading axes.
template <typename Scalar>
class Tensor {
public:
  using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    values_ = Buffer::Zero(checked_count(shape_));
  }

  Tensor(std::vector<int> shape, std::initializer_list<Scalar> init)
      : shape_(std::move(shape)) {
    const Eigen::Index n = checked_count(shape_);
    if (static_cast<Eigen::Index>(init.size()) != n)
      fail(ErrorKind::Shape, "initializer size does not match tensor shape");
    values_.resize(n);
    Eigen::Index i = 0;
    for (Scalar v : init) values_[i++] = v;
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, Scalar v) {
    Tensor t(std::move(shape));
    t.values_.setConstant(v);
    return t;
  }

  /// Uninitialized storage for outputs that are fully overwritten.
  static Tensor uninit(std::vector<int> shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.values_.resize(checked_count(t.shape_));
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  Eigen::Index size() const { return values_.size(); }

  Buffer& values() { return values_; }
  const Buffer& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& operator[](Eigen::Index i) { return values_[i]; }
  Scalar operator[](Eigen::Index i) const { return values_[i]; }

  Scalar& at(int i) { return values_[i]; }
  Scalar& at(int i, int j) { return values_[static_cast<Eigen::Index>(i) * shape_[1] + j]; }
  Scalar at(int i, int j) const { return values_[static_cast<Eigen::Index>(i) * shape_[1] + j]; }
  Scalar& at(int a, int b, int c) {
    return values_[(static_cast<Eigen::Index>(a) * shape_[1] + b) * shape_[2] + c];
  }
  Scalar at(int a, int b, int c) const {
    return values_[(static_cast<Eigen::Index>(a) * shape_[1] + b) * shape_[2] + c];
  }
  Scalar& at(int a, int b, int c, int d) {
    return values_[((static_cast<Eigen::Index>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  Scalar at(int a, int b, int c, int d) const {
    return values_[((static_cast<Eigen::Index>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool has_grad() const { return grad_.has_value(); }

  Buffer& grad() {
    if (!grad_) fail(ErrorKind::Value, "tensor has no gradient buffer");
    return *grad_;
  }
  const Buffer& grad() const {
    if (!grad_) fail(ErrorKind::Value, "tensor has no gradient buffer");
    return *grad_;
  }

  /// Allocates (zero-filled) the gradient buffer if absent.
  Buffer& ensure_grad() {
    if (!grad_) grad_.emplace(Buffer::Zero(values_.size()));
    return *grad_;
  }

  void zero_grad() {
    if (grad_) grad_->setZero();
  }

  void drop_grad() { grad_.reset(); }

  bool all_finite() const {
    for (Eigen::Index i = 0; i < values_.size(); ++i)
      if (!std::isfinite(static_cast<double>(values_[i]))) return false;
    return true;
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
  }

private:
  static Eigen::Index checked_count(const std::vector<int>& shape) {
    Eigen::Index n = 1;
    for (int e : shape) {
      if (e <= 0) fail(ErrorKind::Shape, "tensor extents must be positive");
      n *= e;
    }
    return n;
  }

  std::vector<int> shape_;
  Buffer values_;
  std::optional<Buffer> grad_;
};

inline Eigen::Index shape_count(const std::vector<int>& shape) {
  Eigen::Index n = 1;
  for (int e : shape) n *= e;
  return n;
}

// ---------------------------------------------------------------------------
// GLT1 tensor file format: magic "GLT1", version u16, rank u8, extents u32,
// then IEEE-754 single precision values, everything little-endian, row-major.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class ByteReader {
public:
  ByteReader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}

  bool take(void* dst, std::size_t count) {
    if (pos_ + count > n_) return false;
    std::memcpy(dst, p_ + pos_, count);
    pos_ += count;
    return true;
  }

  bool u16(std::uint16_t& v) {
    unsigned char b[2];
    if (!take(b, 2)) return false;
    v = static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    return true;
  }

  bool u32(std::uint32_t& v) {
    unsigned char b[4];
    if (!take(b, 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
  }

  bool f32(float& v) {
    std::uint32_t bits;
    if (!u32(bits)) return false;
    std::memcpy(&v, &bits, 4);
    return true;
  }

  std::size_t remaining() const { return n_ - pos_; }

private:
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline constexpr std::uint16_t kGltVersion = 1;

template <typename Scalar>
std::string encode_glt(const Tensor<Scalar>& t) {
  std::string out;
  out.reserve(7 + 4 * t.shape().size() + 4 * static_cast<std::size_t>(t.size()));
  out += "GLT1";
  detail::put_u16(out, kGltVersion);
  out.push_back(static_cast<char>(t.rank()));
  for (int e : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(e));
  for (Eigen::Index i = 0; i < t.size(); ++i)
    detail::put_f32(out, static_cast<float>(t[i]));
  return out;
}

template <typename Scalar>
Tensor<Scalar> decode_glt(const unsigned char* bytes, std::size_t count, const std::string& where) {
  detail::ByteReader r(bytes, count);
  char magic[4];
  if (!r.take(magic, 4) || std::memcmp(magic, "GLT1", 4) != 0)
    fail(ErrorKind::IoBadMagic, where + ": not a GLT1 tensor file");
  std::uint16_t version = 0;
  if (!r.u16(version)) fail(ErrorKind::IoCorrupt, where + ": truncated GLT1 header");
  if (version != kGltVersion)
    fail(ErrorKind::IoVersion, where + ": unsupported GLT1 version " + std::to_string(version));
  unsigned char rank = 0;
  if (!r.take(&rank, 1)) fail(ErrorKind::IoCorrupt, where + ": truncated GLT1 header");
  std::vector<int> shape(rank);
  Eigen::Index n = 1;
  for (int i = 0; i < rank; ++i) {
    std::uint32_t e = 0;
    if (!r.u32(e)) fail(ErrorKind::IoCorrupt, where + ": truncated GLT1 extents");
    if (e == 0 || e > (1u << 24)) fail(ErrorKind::IoCorrupt, where + ": implausible GLT1 extent");
    shape[i] = static_cast<int>(e);
    n *= shape[i];
  }
  if (r.remaining() != 4 * static_cast<std::size_t>(n))
    fail(ErrorKind::IoCorrupt, where + ": GLT1 payload size mismatch");
  Tensor<Scalar> t(shape);
  for (Eigen::Index i = 0; i < n; ++i) {
    float v = 0.0f;
    r.f32(v);
    t[i] = static_cast<Scalar>(v);
  }
  return t;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingArtifact, "cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Value, "cannot open file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Value, "short write: " + path);
}

template <typename Scalar>
void write_glt(const Tensor<Scalar>& t, const std::string& path) {
  write_file_bytes(path, encode_glt(t));
}

template <typename Scalar>
Tensor<Scalar> read_glt(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  return decode_glt<Scalar>(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                            path);
}

} // namespace glymph
