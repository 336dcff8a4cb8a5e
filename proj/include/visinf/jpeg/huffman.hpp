#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace visinf::jpeg {

class JpegError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Canonical Huffman table as carried by a DHT segment, with decode lookups.
struct HuffmanTable {
  static constexpr int kFastBits = 9;

  std::array<std::uint8_t, 16> counts{};  // number of codes of length 1..16
  std::vector<std::uint8_t> symbols;

  std::array<std::int32_t, 18> maxcode{};
  std::array<std::int32_t, 17> valoffset{};
  // (length << 8) | symbol for codes no longer than kFastBits, 0 otherwise.
  std::array<std::uint16_t, 1 << kFastBits> fast{};

  void build() {
    fast.fill(0);
    std::int32_t code = 0;
    std::size_t k = 0;
    for (int len = 1; len <= 16; ++len) {
      valoffset[len] = static_cast<std::int32_t>(k) - code;
      const int n = counts[len - 1];
      for (int i = 0; i < n; ++i, ++code, ++k) {
        if (k >= symbols.size()) throw JpegError("Huffman table: symbol count mismatch");
        if (len <= kFastBits) {
          const int shift = kFastBits - len;
          const int base = code << shift;
          for (int fill = 0; fill < (1 << shift); ++fill) {
            fast[base + fill] = static_cast<std::uint16_t>((len << 8) | symbols[k]);
          }
        }
      }
      if (code > (1 << len)) throw JpegError("Huffman table: code space overflow");
      maxcode[len] = n ? code - 1 : -1;
      code <<= 1;
    }
    maxcode[17] = std::numeric_limits<std::int32_t>::max();
  }
};

// MSB-first bit reader over entropy-coded data. Removes 0xFF00 byte stuffing
// and stops at the first marker, after which it feeds zero bits. Reading any
// of those fake bits means the segment ended early.
class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> data, std::size_t pos) : data_(data), pos_(pos) {}

  std::size_t position() const { return pos_; }

  std::uint32_t peek(int n) {
    if (bits_ < n) fill();
    return static_cast<std::uint32_t>(acc_ >> (64 - n));
  }

  void skip(int n) {
    acc_ <<= n;
    bits_ -= n;
    if (bits_ < fake_bits_) throw JpegError("premature end of entropy-coded data");
  }

  std::uint32_t get(int n) {
    if (n == 0) return 0;
    const auto v = peek(n);
    skip(n);
    return v;
  }

  int decode(const HuffmanTable& table) {
    const auto look = table.fast[peek(HuffmanTable::kFastBits)];
    if (look) {
      skip(look >> 8);
      return look & 0xFF;
    }
    const auto window = peek(16);
    for (int len = HuffmanTable::kFastBits + 1; len <= 16; ++len) {
      const auto code = static_cast<std::int32_t>(window >> (16 - len));
      if (code <= table.maxcode[len]) {
        skip(len);
        return table.symbols[static_cast<std::size_t>(code + table.valoffset[len])];
      }
    }
    throw JpegError("corrupt entropy stream: invalid Huffman code");
  }

  // Reads `s` magnitude bits and sign-extends per the JPEG EXTEND procedure.
  int receive_extend(int s) {
    if (s == 0) return 0;
    const int v = static_cast<int>(get(s));
    return v < (1 << (s - 1)) ? v - (1 << s) + 1 : v;
  }

  // Drops buffered bits and consumes the expected RSTn marker.
  void restart(int expected) {
    acc_ = 0;
    bits_ = 0;
    fake_bits_ = 0;
    while (pos_ + 1 < data_.size()) {
      if (data_[pos_] == 0xFF && data_[pos_ + 1] == 0xFF) {
        ++pos_;
        continue;
      }
      if (data_[pos_] == 0xFF && data_[pos_ + 1] != 0x00) break;
      ++pos_;
    }
    if (pos_ + 1 >= data_.size()) throw JpegError("premature end of data: missing restart marker");
    const int marker = data_[pos_ + 1];
    if (marker != 0xD0 + (expected & 7)) {
      throw JpegError("corrupt entropy stream: expected RST" + std::to_string(expected & 7));
    }
    pos_ += 2;
    at_marker_ = false;
  }

  // Repositions at `pos` (just after a restart marker).
  void reset(std::size_t pos) {
    pos_ = pos;
    acc_ = 0;
    bits_ = 0;
    fake_bits_ = 0;
    at_marker_ = false;
  }

 private:
  void fill() {
    while (bits_ <= 56) {
      std::uint8_t byte = 0;
      if (!at_marker_ && pos_ < data_.size()) {
        byte = data_[pos_];
        if (byte == 0xFF) {
          const std::uint8_t next = pos_ + 1 < data_.size() ? data_[pos_ + 1] : 0xD9;
          if (next == 0x00) {
            pos_ += 2;
          } else {
            at_marker_ = true;
            byte = 0;
            fake_bits_ += 8;
          }
        } else {
          ++pos_;
        }
      } else {
        fake_bits_ += 8;
      }
      acc_ |= static_cast<std::uint64_t>(byte) << (56 - bits_);
      bits_ += 8;
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_;
  std::uint64_t acc_{0};
  int bits_{0};
  int fake_bits_{0};
  bool at_marker_{false};
};

}  // namespace visinf::jpeg
