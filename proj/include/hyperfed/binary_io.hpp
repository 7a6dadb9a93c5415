#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "hyperfed/errors.hpp"
#include "hyperfed/tensor.hpp"

namespace hyperfed {

// Little-endian byte buffer writer shared by the dataset and checkpoint
// formats.
class ByteWriter {
 public:
  void bytes(std::string_view raw) { buf_.insert(buf_.end(), raw.begin(), raw.end()); }

  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char tmp[sizeof(T)];
    std::memcpy(tmp, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(tmp[i], tmp[sizeof(T) - 1 - i]);
    }
    buf_.insert(buf_.end(), tmp, tmp + sizeof(T));
  }

  // u32 rank, u32 extents, f32 values.
  void tensor(const Tensor<float>& t) {
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : t.data()) put<float>(v);
  }

  const std::vector<char>& buffer() const { return buf_; }
  std::vector<char> release() { return std::move(buf_); }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const char> data) : data_(data) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view out(data_.data() + pos_, n);
    pos_ += n;
    return out;
  }

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    need(sizeof(T));
    char tmp[sizeof(T)];
    std::memcpy(tmp, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(tmp[i], tmp[sizeof(T) - 1 - i]);
    }
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, tmp, sizeof(T));
    return value;
  }

  Tensor<float> tensor() {
    const auto rank = get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw FormatError("tensor block has invalid rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = get<std::uint32_t>();
      if (d == 0) throw FormatError("tensor block has a zero extent");
      count *= d;
      if (count > remaining() / sizeof(float) + 1) throw FormatError("tensor block exceeds file size");
    }
    need(count * sizeof(float));
    std::vector<float> values(count);
    for (auto& v : values) v = get<float>();
    return Tensor<float>(std::move(shape), std::move(values));
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("unexpected end of data (truncated file?)");
  }

  std::span<const char> data_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes);

}  // namespace hyperfed
