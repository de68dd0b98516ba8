#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "lhz/diffcore/errors.hpp"

namespace lhz::env::detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof v);
  }
  void put_tag(const char (&tag)[5]) { buf_.append(tag, 4); }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& s) : s_(s) {}

  template <typename T>
  T get() {
    T v{};
    if (pos_ + sizeof v > s_.size()) throw ContractError("snapshot truncated");
    std::memcpy(&v, s_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  void expect_tag(const char (&tag)[5]) {
    if (s_.size() < pos_ + 4 || s_.compare(pos_, 4, tag, 4) != 0) {
      throw ContractError("snapshot has the wrong environment tag");
    }
    pos_ += 4;
  }
  void expect_end() const {
    if (pos_ != s_.size()) throw ContractError("snapshot has trailing bytes");
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace lhz::env::detail
