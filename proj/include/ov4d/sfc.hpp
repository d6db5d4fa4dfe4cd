// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0
//
// 3D space-filling curves used to linearize voxel indices.
#pragma once

#include "ov4d/core.hpp"

#include <cstdint>

namespace ov4d {

enum class Curve { Morton, Hilbert };

inline constexpr int kMaxCurveBits = 21; // 3*21 = 63 code bits

namespace detail {

// Spread the low 21 bits of x so they occupy every third bit.
inline uint64_t spread_bits3(uint64_t x) {
    x &= 0x1FFFFF;
    x = (x | x << 32) & 0x1F00000000FFFFull;
    x = (x | x << 16) & 0x1F0000FF0000FFull;
    x = (x | x << 8)  & 0x100F00F00F00F00Full;
    x = (x | x << 4)  & 0x10C30C30C30C30C3ull;
    x = (x | x << 2)  & 0x1249249249249249ull;
    return x;
}

inline void check_curve_range(const VoxelIndex& idx, int bits) {
    if (bits < 1 || bits > kMaxCurveBits)
        throw std::out_of_range("curve: bits must be in [1, 21]");
    const int64_t limit = int64_t(1) << bits;
    for (int i = 0; i < 3; ++i)
        if (idx[i] < 0 || idx[i] >= limit)
            throw std::out_of_range("curve: coordinate outside 2^bits cube");
}

} // namespace detail

// Morton (Z-order) code: bit 3b of the result is bit b of x, 3b+1 of y, 3b+2 of z.
inline uint64_t morton_code(const VoxelIndex& idx, int bits) {
    detail::check_curve_range(idx, bits);
    return detail::spread_bits3(uint64_t(idx[0])) |
           detail::spread_bits3(uint64_t(idx[1])) << 1 |
           detail::spread_bits3(uint64_t(idx[2])) << 2;
}

// 3D Hilbert index via Skilling's transposed-coordinates transform.
// Programming the Hilbert curve, J. Skilling, 2004, AIP Conf. Proc. 707, 381.
inline uint64_t hilbert_code(const VoxelIndex& idx, int bits) {
    detail::check_curve_range(idx, bits);
    uint64_t X[3] = {uint64_t(idx[0]), uint64_t(idx[1]), uint64_t(idx[2])};

    const uint64_t M = uint64_t(1) << (bits - 1);
    // Inverse undo
    for (uint64_t Q = M; Q > 1; Q >>= 1) {
        const uint64_t P = Q - 1;
        for (int i = 0; i < 3; ++i) {
            if (X[i] & Q) {
                X[0] ^= P;
            } else {
                const uint64_t t = (X[0] ^ X[i]) & P;
                X[0] ^= t;
                X[i] ^= t;
            }
        }
    }
    // Gray encode
    X[1] ^= X[0];
    X[2] ^= X[1];
    uint64_t t = 0;
    for (uint64_t Q = M; Q > 1; Q >>= 1)
        if (X[2] & Q) t ^= Q - 1;
    for (int i = 0; i < 3; ++i) X[i] ^= t;

    // Interleave the transposed coordinates, x's bit first per output triple.
    uint64_t code = 0;
    for (int b = bits - 1; b >= 0; --b)
        for (int i = 0; i < 3; ++i)
            code = code << 1 | (X[i] >> b & 1);
    return code;
}

inline uint64_t curve_code(Curve curve, const VoxelIndex& idx, int bits) {
    return curve == Curve::Morton ? morton_code(idx, bits) : hilbert_code(idx, bits);
}

// Smallest b with 2^b >= n; curve bit width for a grid with max dimension n.
inline int bits_for_dims(const std::array<int, 3>& dims) {
    int max_dim = 1;
    for (int d : dims) max_dim = d > max_dim ? d : max_dim;
    int bits = 1;
    while ((int64_t(1) << bits) < max_dim) ++bits;
    return bits;
}

} // namespace ov4d
