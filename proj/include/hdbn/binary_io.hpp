#pragma once

// Little-endian binary blobs used for checkpoints and canonical datasets.
// Readers parse from an in-memory buffer so a truncated file fails before
// any state is handed back to the caller.

#include "hdbn/numerics.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace hdbn {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BinaryWriter {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void i64(std::int64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void boolean(bool v) { u32(v ? 1u : 0u); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void magic(const char (&tag)[9]) { raw(tag, 8); }
  void mat(const Mat& m) {
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void vec(const Vec& v) {
    u64(static_cast<std::uint64_t>(v.size()));
    raw(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
  }
  void ints(const std::vector<int>& v) {
    u64(v.size());
    for (int x : v) i64(x);
  }

  const std::vector<char>& buffer() const { return buf_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
  }

 private:
  void raw(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<char> buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::vector<char> buf) : buf_(std::move(buf)) {}

  static BinaryReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return BinaryReader(std::move(buf));
  }

  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  std::int64_t i64() { return pod<std::int64_t>(); }
  double f64() { return pod<double>(); }
  bool boolean() { return u32() != 0; }
  std::string str() {
    const auto n = count(1);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void expect_magic(const char (&tag)[9]) {
    need(8);
    if (std::memcmp(buf_.data() + pos_, tag, 8) != 0) {
      throw FormatError(std::string("bad magic: expected '") + tag + "'");
    }
    pos_ += 8;
  }
  Mat mat() {
    const auto rows = u64();
    const auto cols = u64();
    if (cols != 0 && rows > (buf_.size() / sizeof(double)) / cols) throw FormatError("truncated matrix");
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    copy(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    return m;
  }
  Vec vec() {
    const auto n = count(sizeof(double));
    Vec v(static_cast<Eigen::Index>(n));
    copy(v.data(), sizeof(double) * n);
    return v;
  }
  std::vector<int> ints() {
    const auto n = count(sizeof(std::int64_t));
    std::vector<int> v(n);
    for (auto& x : v) x = static_cast<int>(i64());
    return v;
  }

  bool at_end() const { return pos_ == buf_.size(); }
  void expect_end() const {
    if (!at_end()) throw FormatError("trailing bytes after payload");
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError("truncated file");
  }
  // Reads an element count and checks that the payload can possibly fit.
  std::size_t count(std::size_t elem_size) {
    const auto n = u64();
    if (n > (buf_.size() - pos_) / elem_size) throw FormatError("truncated file");
    return static_cast<std::size_t>(n);
  }
  void copy(void* dst, std::size_t n) {
    need(n);
    if (n > 0) std::memcpy(dst, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T pod() {
    T v;
    copy(&v, sizeof v);
    return v;
  }

  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace hdbn
