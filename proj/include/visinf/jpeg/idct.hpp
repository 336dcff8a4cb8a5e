#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>

namespace visinf::jpeg {

// Zigzag scan position -> natural (row-major) coefficient index.
inline constexpr std::array<std::uint8_t, 64> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,  12, 19, 26, 33, 40, 48,
    41, 34, 27, 20, 13, 6,  7,  14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23,
    30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

namespace detail {

inline constexpr int kConstBits = 13;
inline constexpr int kPass1Bits = 2;

inline constexpr std::int32_t kFix_0_298631336 = 2446;
inline constexpr std::int32_t kFix_0_390180644 = 3196;
inline constexpr std::int32_t kFix_0_541196100 = 4433;
inline constexpr std::int32_t kFix_0_765366865 = 6270;
inline constexpr std::int32_t kFix_0_899976223 = 7373;
inline constexpr std::int32_t kFix_1_175875602 = 9633;
inline constexpr std::int32_t kFix_1_501321110 = 12299;
inline constexpr std::int32_t kFix_1_847759065 = 15137;
inline constexpr std::int32_t kFix_1_961570560 = 16069;
inline constexpr std::int32_t kFix_2_053119869 = 16819;
inline constexpr std::int32_t kFix_2_562915447 = 20995;
inline constexpr std::int32_t kFix_3_072711026 = 25172;

constexpr std::int32_t descale(std::int32_t x, int n) { return (x + (1 << (n - 1))) >> n; }

inline std::uint8_t clamp_sample(std::int32_t v) {
  return static_cast<std::uint8_t>(std::clamp(v + 128, 0, 255));
}

}  // namespace detail

// Accurate integer inverse DCT (the LL&M factorization with 13-bit
// constants used by libjpeg's islow method), fused with dequantization.
// `coef` is in natural order; output is 8 rows of 8 samples at `out` with
// the given row stride.
inline void idct_islow(const std::array<std::int16_t, 64>& coef, const std::array<std::uint16_t, 64>& quant,
                       std::uint8_t* out, std::size_t stride) {
  using namespace detail;
  std::array<std::int32_t, 64> ws;

  for (int col = 0; col < 8; ++col) {
    const auto in = [&](int row) { return std::int32_t(coef[row * 8 + col]) * quant[row * 8 + col]; };
    if (coef[8 + col] == 0 && coef[16 + col] == 0 && coef[24 + col] == 0 && coef[32 + col] == 0 &&
        coef[40 + col] == 0 && coef[48 + col] == 0 && coef[56 + col] == 0) {
      const std::int32_t dc = in(0) * (1 << kPass1Bits);
      for (int row = 0; row < 8; ++row) ws[row * 8 + col] = dc;
      continue;
    }

    std::int32_t z2 = in(2);
    std::int32_t z3 = in(6);
    std::int32_t z1 = (z2 + z3) * kFix_0_541196100;
    std::int32_t tmp2 = z1 + z3 * -kFix_1_847759065;
    std::int32_t tmp3 = z1 + z2 * kFix_0_765366865;

    z2 = in(0);
    z3 = in(4);
    std::int32_t tmp0 = (z2 + z3) * (1 << kConstBits);
    std::int32_t tmp1 = (z2 - z3) * (1 << kConstBits);

    const std::int32_t tmp10 = tmp0 + tmp3;
    const std::int32_t tmp13 = tmp0 - tmp3;
    const std::int32_t tmp11 = tmp1 + tmp2;
    const std::int32_t tmp12 = tmp1 - tmp2;

    tmp0 = in(7);
    tmp1 = in(5);
    tmp2 = in(3);
    tmp3 = in(1);

    z1 = tmp0 + tmp3;
    z2 = tmp1 + tmp2;
    z3 = tmp0 + tmp2;
    std::int32_t z4 = tmp1 + tmp3;
    const std::int32_t z5 = (z3 + z4) * kFix_1_175875602;

    tmp0 *= kFix_0_298631336;
    tmp1 *= kFix_2_053119869;
    tmp2 *= kFix_3_072711026;
    tmp3 *= kFix_1_501321110;
    z1 *= -kFix_0_899976223;
    z2 *= -kFix_2_562915447;
    z3 *= -kFix_1_961570560;
    z4 *= -kFix_0_390180644;
    z3 += z5;
    z4 += z5;
    tmp0 += z1 + z3;
    tmp1 += z2 + z4;
    tmp2 += z2 + z3;
    tmp3 += z1 + z4;

    constexpr int s = kConstBits - kPass1Bits;
    ws[0 * 8 + col] = descale(tmp10 + tmp3, s);
    ws[7 * 8 + col] = descale(tmp10 - tmp3, s);
    ws[1 * 8 + col] = descale(tmp11 + tmp2, s);
    ws[6 * 8 + col] = descale(tmp11 - tmp2, s);
    ws[2 * 8 + col] = descale(tmp12 + tmp1, s);
    ws[5 * 8 + col] = descale(tmp12 - tmp1, s);
    ws[3 * 8 + col] = descale(tmp13 + tmp0, s);
    ws[4 * 8 + col] = descale(tmp13 - tmp0, s);
  }

  for (int row = 0; row < 8; ++row) {
    const std::int32_t* w = &ws[row * 8];
    std::uint8_t* o = out + row * stride;

    std::int32_t z2 = w[2];
    std::int32_t z3 = w[6];
    std::int32_t z1 = (z2 + z3) * kFix_0_541196100;
    std::int32_t tmp2 = z1 + z3 * -kFix_1_847759065;
    std::int32_t tmp3 = z1 + z2 * kFix_0_765366865;

    std::int32_t tmp0 = (w[0] + w[4]) * (1 << kConstBits);
    std::int32_t tmp1 = (w[0] - w[4]) * (1 << kConstBits);

    const std::int32_t tmp10 = tmp0 + tmp3;
    const std::int32_t tmp13 = tmp0 - tmp3;
    const std::int32_t tmp11 = tmp1 + tmp2;
    const std::int32_t tmp12 = tmp1 - tmp2;

    tmp0 = w[7];
    tmp1 = w[5];
    tmp2 = w[3];
    tmp3 = w[1];

    z1 = tmp0 + tmp3;
    z2 = tmp1 + tmp2;
    z3 = tmp0 + tmp2;
    std::int32_t z4 = tmp1 + tmp3;
    const std::int32_t z5 = (z3 + z4) * kFix_1_175875602;

    tmp0 *= kFix_0_298631336;
    tmp1 *= kFix_2_053119869;
    tmp2 *= kFix_3_072711026;
    tmp3 *= kFix_1_501321110;
    z1 *= -kFix_0_899976223;
    z2 *= -kFix_2_562915447;
    z3 *= -kFix_1_961570560;
    z4 *= -kFix_0_390180644;
    z3 += z5;
    z4 += z5;
    tmp0 += z1 + z3;
    tmp1 += z2 + z4;
    tmp2 += z2 + z3;
    tmp3 += z1 + z4;

    constexpr int s = kConstBits + kPass1Bits + 3;
    o[0] = clamp_sample(descale(tmp10 + tmp3, s));
    o[7] = clamp_sample(descale(tmp10 - tmp3, s));
    o[1] = clamp_sample(descale(tmp11 + tmp2, s));
    o[6] = clamp_sample(descale(tmp11 - tmp2, s));
    o[2] = clamp_sample(descale(tmp12 + tmp1, s));
    o[5] = clamp_sample(descale(tmp12 - tmp1, s));
    o[3] = clamp_sample(descale(tmp13 + tmp0, s));
    o[4] = clamp_sample(descale(tmp13 - tmp0, s));
  }
}

}  // namespace visinf::jpeg
