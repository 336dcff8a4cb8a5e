#pragma once

// Baseline sequential JPEG decoding with region-of-interest and early-stop
// support. Output is bit-compatible with libjpeg-turbo's default decode path
// (islow IDCT, fancy chroma upsampling, fixed-point BT.601 color transform).
//
// Partial decoding: baseline scans are a single sequential entropy stream
// with differentially coded DC terms, so every MCU up to the last one the
// region touches is Huffman-decoded. Dequantization, IDCT, upsampling and
// color conversion run only for blocks the region needs. When the stream
// carries restart markers, whole restart intervals ahead of the region are
// skipped by scanning for the markers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "visinf/image.hpp"
#include "visinf/jpeg/huffman.hpp"
#include "visinf/jpeg/idct.hpp"

namespace visinf::jpeg {

enum class Subsampling { k444, k422, k420 };

inline const char* to_string(Subsampling s) {
  switch (s) {
    case Subsampling::k444: return "444";
    case Subsampling::k422: return "422";
    case Subsampling::k420: return "420";
  }
  return "?";
}

struct QuantTable {
  std::array<std::uint16_t, 64> natural{};
  bool present{false};
};

struct ComponentInfo {
  int id{0};
  int h{1};
  int v{1};
  int quant_index{0};
  int dc_table{0};
  int ac_table{0};
};

struct JpegHeader {
  int width{0};
  int height{0};
  int components{0};
  Subsampling subsampling{Subsampling::k444};
  std::array<QuantTable, 4> quant_tables{};
  std::array<std::optional<HuffmanTable>, 4> dc_tables{};
  std::array<std::optional<HuffmanTable>, 4> ac_tables{};
  int restart_interval{0};  // MCUs per interval, 0 = none
  std::vector<ComponentInfo> comps;
  std::size_t scan_offset{0};  // first byte of entropy-coded data

  int max_h() const {
    int m = 1;
    for (const auto& c : comps) m = std::max(m, c.h);
    return m;
  }
  int max_v() const {
    int m = 1;
    for (const auto& c : comps) m = std::max(m, c.v);
    return m;
  }
  int mcu_width() const { return 8 * max_h(); }
  int mcu_height() const { return 8 * max_v(); }
  int mcus_x() const { return (width + mcu_width() - 1) / mcu_width(); }
  int mcus_y() const { return (height + mcu_height() - 1) / mcu_height(); }
};

// Pixel rectangle [left, right) x [top, bottom) in decoded-image coordinates.
struct RoiSpec {
  int left{0};
  int top{0};
  int right{0};
  int bottom{0};

  int width() const { return right - left; }
  int height() const { return bottom - top; }
  bool operator==(const RoiSpec&) const = default;
};

// Work counters for one decode call.
struct DecodeStats {
  std::int64_t mcus_entropy_decoded{0};
  std::int64_t blocks_entropy_decoded{0};
  std::int64_t idct_blocks{0};
  std::int64_t restart_intervals_skipped{0};
  int mcu_rows_touched{0};
};

namespace detail {

inline int read_u16(std::span<const std::uint8_t> b, std::size_t pos) {
  if (pos + 1 >= b.size()) throw JpegError("truncated stream");
  return (b[pos] << 8) | b[pos + 1];
}

inline const char* sof_name(int marker) {
  switch (marker) {
    case 0xC2: return "SOF2 (progressive DCT)";
    case 0xC3: return "SOF3 (lossless)";
    case 0xC5: return "SOF5 (differential sequential)";
    case 0xC6: return "SOF6 (differential progressive)";
    case 0xC7: return "SOF7 (differential lossless)";
    case 0xC9: return "SOF9 (arithmetic sequential)";
    case 0xCA: return "SOF10 (arithmetic progressive)";
    case 0xCB: return "SOF11 (arithmetic lossless)";
    case 0xCD: return "SOF13 (arithmetic differential sequential)";
    case 0xCE: return "SOF14 (arithmetic differential progressive)";
    case 0xCF: return "SOF15 (arithmetic differential lossless)";
    default: return "unknown";
  }
}

}  // namespace detail

// Parses markers up to and including SOS. Rejects progressive, lossless and
// arithmetic-coded frames.
inline JpegHeader parse_headers(std::span<const std::uint8_t> bytes) {
  using detail::read_u16;
  if (bytes.size() < 2 || bytes[0] != 0xFF || bytes[1] != 0xD8) throw JpegError("missing SOI");

  JpegHeader hdr;
  bool have_frame = false;
  std::size_t pos = 2;
  while (true) {
    while (pos < bytes.size() && bytes[pos] != 0xFF) ++pos;  // tolerate garbage between segments
    while (pos < bytes.size() && bytes[pos] == 0xFF) ++pos;  // fill bytes
    if (pos >= bytes.size()) throw JpegError("truncated stream: no SOS marker");
    const int marker = bytes[pos++];

    if (marker == 0xD9) throw JpegError("premature EOI before scan");
    if (marker >= 0xD0 && marker <= 0xD7) continue;
    if (marker == 0x01) continue;

    const int len = read_u16(bytes, pos);
    if (len < 2 || pos + len > bytes.size()) throw JpegError("truncated stream: segment overruns data");
    const std::size_t seg = pos + 2;
    const std::size_t seg_end = pos + len;

    switch (marker) {
      case 0xC0:
      case 0xC1: {
        if (have_frame) throw JpegError("multiple SOF markers");
        if (len < 8) throw JpegError("truncated stream: short SOF");
        if (bytes[seg] != 8) throw JpegError("unsupported sample precision " + std::to_string(bytes[seg]));
        hdr.height = read_u16(bytes, seg + 1);
        hdr.width = read_u16(bytes, seg + 3);
        hdr.components = bytes[seg + 5];
        if (hdr.width <= 0 || hdr.height <= 0) throw JpegError("invalid image dimensions");
        if (hdr.components != 1 && hdr.components != 3) {
          throw JpegError("unsupported component count " + std::to_string(hdr.components));
        }
        if (static_cast<std::size_t>(len) < 8u + 3u * hdr.components) throw JpegError("truncated stream: short SOF");
        for (int i = 0; i < hdr.components; ++i) {
          ComponentInfo c;
          c.id = bytes[seg + 6 + 3 * i];
          c.h = bytes[seg + 7 + 3 * i] >> 4;
          c.v = bytes[seg + 7 + 3 * i] & 15;
          c.quant_index = bytes[seg + 8 + 3 * i];
          if (c.h < 1 || c.h > 2 || c.v < 1 || c.v > 2) throw JpegError("unsupported sampling factors");
          if (c.quant_index > 3) throw JpegError("invalid quantization table index");
          hdr.comps.push_back(c);
        }
        if (hdr.components == 1) {
          // A single-component scan is non-interleaved: its MCU is one block.
          hdr.comps[0].h = hdr.comps[0].v = 1;
          hdr.subsampling = Subsampling::k444;
        } else {
          const auto& y = hdr.comps[0];
          const bool chroma_1x1 = hdr.comps[1].h == 1 && hdr.comps[1].v == 1 && hdr.comps[2].h == 1 &&
                                  hdr.comps[2].v == 1;
          if (!chroma_1x1) throw JpegError("unsupported sampling factors: chroma must be 1x1");
          if (y.h == 1 && y.v == 1) {
            hdr.subsampling = Subsampling::k444;
          } else if (y.h == 2 && y.v == 1) {
            hdr.subsampling = Subsampling::k422;
          } else if (y.h == 2 && y.v == 2) {
            hdr.subsampling = Subsampling::k420;
          } else {
            throw JpegError("unsupported sampling factors " + std::to_string(y.h) + "x" + std::to_string(y.v));
          }
        }
        have_frame = true;
        break;
      }
      case 0xC2: case 0xC3: case 0xC5: case 0xC6: case 0xC7:
      case 0xC9: case 0xCA: case 0xCB: case 0xCD: case 0xCE: case 0xCF:
        throw JpegError(std::string("unsupported marker ") + detail::sof_name(marker));
      case 0xCC:
        throw JpegError("unsupported marker DAC (arithmetic coding)");
      case 0xC4: {
        std::size_t p = seg;
        while (p < seg_end) {
          const int tc = bytes[p] >> 4;
          const int th = bytes[p] & 15;
          if (tc > 1 || th > 3) throw JpegError("invalid Huffman table id");
          if (p + 17 > seg_end) throw JpegError("truncated stream: short DHT");
          HuffmanTable t;
          std::size_t total = 0;
          for (int i = 0; i < 16; ++i) {
            t.counts[i] = bytes[p + 1 + i];
            total += t.counts[i];
          }
          p += 17;
          if (total > 256 || p + total > seg_end) throw JpegError("truncated stream: short DHT");
          t.symbols.assign(bytes.begin() + static_cast<std::ptrdiff_t>(p),
                           bytes.begin() + static_cast<std::ptrdiff_t>(p + total));
          p += total;
          t.build();
          (tc == 0 ? hdr.dc_tables : hdr.ac_tables)[th] = std::move(t);
        }
        break;
      }
      case 0xDB: {
        std::size_t p = seg;
        while (p < seg_end) {
          const int pq = bytes[p] >> 4;
          const int tq = bytes[p] & 15;
          if (tq > 3) throw JpegError("invalid quantization table id");
          const std::size_t need = pq ? 129 : 65;
          if (p + need > seg_end) throw JpegError("truncated stream: short DQT");
          auto& q = hdr.quant_tables[tq];
          for (int i = 0; i < 64; ++i) {
            q.natural[kZigzag[i]] =
                pq ? static_cast<std::uint16_t>(read_u16(bytes, p + 1 + 2 * i)) : bytes[p + 1 + i];
          }
          q.present = true;
          p += need;
        }
        break;
      }
      case 0xDD:
        if (len < 4) throw JpegError("truncated stream: short DRI");
        hdr.restart_interval = read_u16(bytes, seg);
        break;
      case 0xDA: {
        if (!have_frame) throw JpegError("SOS before SOF");
        const int ns = bytes[seg];
        if (ns != hdr.components) throw JpegError("unsupported non-interleaved multi-scan image");
        if (static_cast<std::size_t>(len) < 6u + 2u * ns) throw JpegError("truncated stream: short SOS");
        for (int i = 0; i < ns; ++i) {
          const int cid = bytes[seg + 1 + 2 * i];
          const int tables = bytes[seg + 2 + 2 * i];
          auto it = std::find_if(hdr.comps.begin(), hdr.comps.end(), [&](const auto& c) { return c.id == cid; });
          if (it == hdr.comps.end()) throw JpegError("SOS references unknown component");
          it->dc_table = tables >> 4;
          it->ac_table = tables & 15;
          if (it->dc_table > 3 || it->ac_table > 3) throw JpegError("invalid Huffman table selector");
        }
        for (const auto& c : hdr.comps) {
          if (!hdr.quant_tables[c.quant_index].present) throw JpegError("missing quantization table");
          if (!hdr.dc_tables[c.dc_table] || !hdr.ac_tables[c.ac_table]) throw JpegError("missing Huffman table");
        }
        hdr.scan_offset = seg_end;
        return hdr;
      }
      default:
        break;  // APPn, COM and friends
    }
    pos = seg_end;
  }
}

namespace detail {

// Luma-space window -> sample-space range a component must reconstruct.
// Fancy upsampling reads one neighbouring sample on each side.
struct SampleRange {
  int lo{0};
  int hi{-1};  // inclusive
};

inline SampleRange needed_samples(int lo, int hi_excl, int ratio, int extent, bool fancy) {
  if (hi_excl <= lo) return {};
  if (ratio == 1) return {lo, hi_excl - 1};
  const int a = lo / 2 - (fancy ? 1 : 0);
  const int b = (hi_excl - 1) / 2 + (fancy ? 1 : 0);
  return {std::max(a, 0), std::min(b, extent - 1)};
}

struct Plane {
  int stride{0};      // padded width in samples
  int rows{0};        // padded height in samples
  int width{0};       // logical (downsampled) width
  int height{0};      // logical (downsampled) height
  int ratio_x{1};
  int ratio_y{1};
  std::unique_ptr<std::uint8_t[]> data;
  SampleRange need_x;
  SampleRange need_y;

  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * stride + x]; }
};

// Horizontal-and-vertical fancy (triangle) upsampling, sample for output
// pixel (x, y) in luma coordinates. Neighbour indices clamp to the logical
// plane, reproducing libjpeg's edge replication.
inline int upsample(const Plane& p, int y, int x) {
  if (p.ratio_x == 1 && p.ratio_y == 1) return p.at(y, x);
  const bool fancy_x = p.ratio_x == 2 && p.width > 2;
  const int cx = x / p.ratio_x;
  const int cy = y / p.ratio_y;

  if (p.ratio_y == 1) {
    if (!fancy_x) return p.at(cy, cx);
    if ((x & 1) == 0) {
      const int left = std::max(cx - 1, 0);
      return (3 * p.at(cy, cx) + p.at(cy, left) + 1) >> 2;
    }
    const int right = std::min(cx + 1, p.width - 1);
    return (3 * p.at(cy, cx) + p.at(cy, right) + 2) >> 2;
  }

  // ratio_y == 2, ratio_x == 2
  if (!fancy_x) return p.at(cy, cx);
  const int far_y = (y & 1) == 0 ? std::max(cy - 1, 0) : std::min(cy + 1, p.height - 1);
  const auto colsum = [&](int c) { return 3 * p.at(cy, c) + p.at(far_y, c); };
  if ((x & 1) == 0) {
    const int left = std::max(cx - 1, 0);
    return (3 * colsum(cx) + colsum(left) + 8) >> 4;
  }
  const int right = std::min(cx + 1, p.width - 1);
  return (3 * colsum(cx) + colsum(right) + 7) >> 4;
}

// Fixed-point YCbCr -> RGB tables (16 fractional bits, round half up).
struct ColorTables {
  std::array<int, 256> cr_r{};
  std::array<int, 256> cb_b{};
  std::array<std::int32_t, 256> cr_g{};
  std::array<std::int32_t, 256> cb_g{};

  ColorTables() {
    constexpr int kScaleBits = 16;
    constexpr std::int32_t kHalf = 1 << (kScaleBits - 1);
    const auto fix = [](double v) { return static_cast<std::int32_t>(v * (1 << kScaleBits) + 0.5); };
    for (int i = 0; i < 256; ++i) {
      const std::int32_t x = i - 128;
      cr_r[i] = (fix(1.40200) * x + kHalf) >> kScaleBits;
      cb_b[i] = (fix(1.77200) * x + kHalf) >> kScaleBits;
      cr_g[i] = -fix(0.71414) * x;
      cb_g[i] = -fix(0.34414) * x + kHalf;
    }
  }

  static const ColorTables& instance() {
    static const ColorTables tables;
    return tables;
  }
};

inline std::uint8_t clamp8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

}  // namespace detail

// Decodes `roi` of a baseline JPEG. Pixels are identical to the same region
// of a full decode. `stats` (optional) receives work counters.
inline Image decode_region(std::span<const std::uint8_t> bytes, const RoiSpec& roi, DecodeStats* stats = nullptr) {
  const JpegHeader hdr = parse_headers(bytes);
  if (roi.left < 0 || roi.top < 0 || roi.right > hdr.width || roi.bottom > hdr.height || roi.left >= roi.right ||
      roi.top >= roi.bottom) {
    throw JpegError("region of interest outside image");
  }
  DecodeStats local;
  DecodeStats& st = stats ? *stats : local;
  st = {};

  Image out(roi.width(), roi.height());
  if (out.width == 0 || out.height == 0) return out;

  const int hmax = hdr.max_h();
  const int vmax = hdr.max_v();
  const int mcus_x = hdr.mcus_x();
  const int mcus_y = hdr.mcus_y();
  const int ncomp = hdr.components;

  std::vector<detail::Plane> planes(static_cast<std::size_t>(ncomp));
  // Needed block ranges per component.
  std::vector<std::array<int, 4>> need_blocks(static_cast<std::size_t>(ncomp));  // bx0, bx1, by0, by1 (inclusive)
  int last_mcu_row = 0;
  int first_mcu_row = mcus_y;
  for (int c = 0; c < ncomp; ++c) {
    const auto& ci = hdr.comps[static_cast<std::size_t>(c)];
    auto& p = planes[static_cast<std::size_t>(c)];
    p.ratio_x = hmax / ci.h;
    p.ratio_y = vmax / ci.v;
    p.width = (hdr.width * ci.h + hmax - 1) / hmax;
    p.height = (hdr.height * ci.v + vmax - 1) / vmax;
    p.stride = mcus_x * ci.h * 8;
    p.rows = mcus_y * ci.v * 8;
    p.data.reset(new std::uint8_t[static_cast<std::size_t>(p.stride) * p.rows]);
    // libjpeg enables triangle upsampling only when the plane is wider than 2.
    const bool fancy = p.width > 2;
    p.need_x = detail::needed_samples(roi.left, roi.right, p.ratio_x, p.width, fancy);
    p.need_y = detail::needed_samples(roi.top, roi.bottom, p.ratio_y, p.height, fancy);
    auto& nb = need_blocks[static_cast<std::size_t>(c)];
    nb = {p.need_x.lo / 8, p.need_x.hi / 8, p.need_y.lo / 8, p.need_y.hi / 8};
    last_mcu_row = std::max(last_mcu_row, nb[3] / ci.v);
    first_mcu_row = std::min(first_mcu_row, nb[2] / ci.v);
  }
  int last_mcu_col = 0;
  for (int c = 0; c < ncomp; ++c) {
    last_mcu_col = std::max(last_mcu_col, need_blocks[static_cast<std::size_t>(c)][1] / hdr.comps[static_cast<std::size_t>(c)].h);
  }
  // Entropy decoding stops after the last MCU any component needs.
  const std::int64_t last_mcu = static_cast<std::int64_t>(last_mcu_row) * mcus_x + last_mcu_col;
  const std::int64_t first_needed_mcu = static_cast<std::int64_t>(first_mcu_row) * mcus_x;

  BitReader reader(bytes, hdr.scan_offset);
  std::int64_t mcu = 0;
  const int ri = hdr.restart_interval;
  if (ri > 0 && first_needed_mcu >= ri) {
    const std::int64_t skip_intervals = first_needed_mcu / ri;
    std::size_t p = hdr.scan_offset;
    std::int64_t seen = 0;
    while (seen < skip_intervals) {
      if (p + 1 >= bytes.size()) throw JpegError("premature end of data: missing restart marker");
      if (bytes[p] == 0xFF) {
        const int m = bytes[p + 1];
        if (m >= 0xD0 && m <= 0xD7) {
          if (m != 0xD0 + static_cast<int>(seen & 7)) throw JpegError("corrupt entropy stream: restart marker out of sequence");
          ++seen;
          p += 2;
          continue;
        }
        if (m != 0x00 && m != 0xFF) throw JpegError("premature end of entropy-coded data");
      }
      ++p;
    }
    reader.reset(p);
    mcu = skip_intervals * ri;
    st.restart_intervals_skipped = skip_intervals;
  }

  std::array<int, 4> dc_pred{};
  std::array<std::int16_t, 64> coef;
  int restarts_seen = static_cast<int>(ri > 0 ? mcu / ri : 0);
  int prev_row = -1;

  for (; mcu <= last_mcu; ++mcu) {
    if (ri > 0 && mcu > 0 && mcu % ri == 0 && mcu / ri > restarts_seen) {
      reader.restart(restarts_seen);
      ++restarts_seen;
      dc_pred.fill(0);
    }
    const int my = static_cast<int>(mcu / mcus_x);
    const int mx = static_cast<int>(mcu % mcus_x);
    if (my != prev_row) {
      ++st.mcu_rows_touched;
      prev_row = my;
    }
    for (int c = 0; c < ncomp; ++c) {
      const auto& ci = hdr.comps[static_cast<std::size_t>(c)];
      const auto& dc_tab = *hdr.dc_tables[static_cast<std::size_t>(ci.dc_table)];
      const auto& ac_tab = *hdr.ac_tables[static_cast<std::size_t>(ci.ac_table)];
      const auto& nb = need_blocks[static_cast<std::size_t>(c)];
      auto& plane = planes[static_cast<std::size_t>(c)];
      for (int by = 0; by < ci.v; ++by) {
        for (int bx = 0; bx < ci.h; ++bx) {
          const int gbx = mx * ci.h + bx;
          const int gby = my * ci.v + by;
          const bool wanted = gbx >= nb[0] && gbx <= nb[1] && gby >= nb[2] && gby <= nb[3];

          const int t = reader.decode(dc_tab);
          if (t > 11) throw JpegError("corrupt entropy stream: bad DC magnitude");
          dc_pred[static_cast<std::size_t>(c)] += reader.receive_extend(t);
          if (wanted) {
            coef.fill(0);
            coef[0] = static_cast<std::int16_t>(dc_pred[static_cast<std::size_t>(c)]);
          }
          for (int k = 1; k < 64;) {
            const int rs = reader.decode(ac_tab);
            const int r = rs >> 4;
            const int s = rs & 15;
            if (s == 0) {
              if (r != 15) break;
              k += 16;
              continue;
            }
            k += r;
            if (k > 63) throw JpegError("corrupt entropy stream: coefficient index overflow");
            const int v = reader.receive_extend(s);
            if (wanted) coef[kZigzag[static_cast<std::size_t>(k)]] = static_cast<std::int16_t>(v);
            ++k;
          }
          ++st.blocks_entropy_decoded;
          if (wanted) {
            idct_islow(coef, hdr.quant_tables[static_cast<std::size_t>(ci.quant_index)].natural,
                       plane.data.get() + static_cast<std::size_t>(gby) * 8 * plane.stride + gbx * 8,
                       static_cast<std::size_t>(plane.stride));
            ++st.idct_blocks;
          }
        }
      }
    }
    ++st.mcus_entropy_decoded;
  }

  const auto& tables = detail::ColorTables::instance();
  for (int y = roi.top; y < roi.bottom; ++y) {
    std::uint8_t* o = out.row(y - roi.top);
    for (int x = roi.left; x < roi.right; ++x, o += 3) {
      const int luma = detail::upsample(planes[0], y, x);
      if (ncomp == 1) {
        o[0] = o[1] = o[2] = static_cast<std::uint8_t>(luma);
        continue;
      }
      const int cb = detail::upsample(planes[1], y, x);
      const int cr = detail::upsample(planes[2], y, x);
      o[0] = detail::clamp8(luma + tables.cr_r[static_cast<std::size_t>(cr)]);
      o[1] = detail::clamp8(luma + static_cast<int>((tables.cb_g[static_cast<std::size_t>(cb)] +
                                                     tables.cr_g[static_cast<std::size_t>(cr)]) >> 16));
      o[2] = detail::clamp8(luma + tables.cb_b[static_cast<std::size_t>(cb)]);
    }
  }
  return out;
}

inline Image decode_full(std::span<const std::uint8_t> bytes, DecodeStats* stats = nullptr) {
  const auto hdr = parse_headers(bytes);
  return decode_region(bytes, RoiSpec{0, 0, hdr.width, hdr.height}, stats);
}

inline Image decode_roi(std::span<const std::uint8_t> bytes, const RoiSpec& roi, DecodeStats* stats = nullptr) {
  return decode_region(bytes, roi, stats);
}

// Early stop: the top `n_rows` rows at full width.
inline Image decode_rows(std::span<const std::uint8_t> bytes, int n_rows, DecodeStats* stats = nullptr) {
  const auto hdr = parse_headers(bytes);
  if (n_rows < 0 || n_rows > hdr.height) throw JpegError("row count outside image");
  if (n_rows == 0) {
    if (stats) *stats = {};
    Image empty;
    empty.width = hdr.width;
    return empty;
  }
  return decode_region(bytes, RoiSpec{0, 0, hdr.width, n_rows}, stats);
}

// Source-space crop window for "resize short side to `target`, then centre
// crop target x target". Bounds are widened outward to whole pixels.
struct CropWindow {
  int left{0};
  int right{0};
  int top{0};
  int bottom{0};

  RoiSpec roi() const { return {left, top, right, bottom}; }
  bool operator==(const CropWindow&) const = default;
};

inline CropWindow compute_crop_window(int height, int width, int target) {
  if (target <= 0) throw std::invalid_argument("target must be positive");
  if (std::min(height, width) < target) throw std::invalid_argument("image smaller than crop target");
  const int short_side = std::min(height, width);
  const double resize = static_cast<double>(target) / short_side;
  const int resized_w = static_cast<int>(std::lround(width * resize));
  const int resized_h = static_cast<int>(std::lround(height * resize));
  const int l = (resized_w - target) / 2;
  const int t = (resized_h - target) / 2;
  const int r = l + target;
  const int b = t + target;
  const double scale = static_cast<double>(short_side) / target;
  CropWindow w;
  w.left = static_cast<int>(std::floor(l * scale));
  w.top = static_cast<int>(std::floor(t * scale));
  w.right = std::min(width, static_cast<int>(std::ceil(r * scale)));
  w.bottom = std::min(height, static_cast<int>(std::ceil(b * scale)));
  return w;
}

// Smallest `mcu`-aligned rectangle containing `roi`, clamped to the image.
inline RoiSpec macroblock_align(const RoiSpec& roi, int mcu, int width, int height) {
  if (mcu != 8 && mcu != 16) throw std::invalid_argument("macroblock size must be 8 or 16");
  RoiSpec out;
  out.left = roi.left / mcu * mcu;
  out.top = roi.top / mcu * mcu;
  out.right = std::min(width, (roi.right + mcu - 1) / mcu * mcu);
  out.bottom = std::min(height, (roi.bottom + mcu - 1) / mcu * mcu);
  return out;
}

}  // namespace visinf::jpeg
