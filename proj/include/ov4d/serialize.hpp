// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0
//
// Point-stream serialization along space-filling curves: magnitude-weighted
// seed sampling, curve ordering, window partitioning, and the multi-stream
// merge / re-serialize / split-back permutation.
#pragma once

#include "ov4d/gaussian.hpp"
#include "ov4d/rng.hpp"
#include "ov4d/sfc.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

namespace ov4d {

// A set of voxel indices carried through serialization. payload_refs are
// opaque per-point handles that every permutation must preserve.
struct PointStream {
    std::array<int, 3> dims{1, 1, 1};    // shared grid dims, bounds all indices
    int stream_id = 0;
    std::vector<VoxelIndex> indices;
    std::vector<uint64_t> payload_refs;

    std::size_t size() const { return indices.size(); }
};

// Permutation sorting a stream's points by curve code. perm[rank] = original
// position of the point at serialized rank.
struct SerializationOrder {
    Curve curve = Curve::Hilbert;
    std::vector<std::size_t> perm;

    std::size_t size() const { return perm.size(); }
};

// [begin, end) range of serialized ranks.
struct Window {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool operator==(const Window&) const = default;
};

// Samples k distinct voxels, probability proportional to the Euclidean norm
// of the voxel feature. If fewer than k voxels have nonzero magnitude, all of
// them are returned. Deterministic given seed.
inline PointStream seed_points(const FeatureGrid& grid, int k, uint64_t seed,
                               int stream_id = 0) {
    if (k <= 0) throw std::invalid_argument("seed_points: k must be > 0");

    const std::size_t n = grid.geometry.voxel_count();
    std::vector<double> weight(n, 0.0);
    std::size_t nonzero = 0;
    for (std::size_t v = 0; v < n; ++v) {
        double sq = 0.0;
        for (std::size_t c = 0; c < grid.embedding_dim; ++c) {
            const double f = grid.features[v * grid.embedding_dim + c];
            sq += f * f;
        }
        if (sq > 0.0) {
            weight[v] = std::sqrt(sq);
            ++nonzero;
        }
    }
    const std::size_t want = std::min<std::size_t>(std::size_t(k), nonzero);

    // Fenwick tree over weights; sampling without replacement zeroes the pick.
    std::vector<double> tree(n + 1, 0.0);
    auto add = [&](std::size_t i, double delta) {
        for (std::size_t j = i + 1; j <= n; j += j & (~j + 1)) tree[j] += delta;
    };
    auto prefix_search = [&](double target) {
        std::size_t step = 1;
        while (step * 2 <= n) step *= 2;
        std::size_t pos = 0;
        for (; step > 0; step /= 2) {
            if (pos + step <= n && tree[pos + step] < target) {
                pos += step;
                target -= tree[pos];
            }
        }
        return pos; // first index whose cumulative weight exceeds target
    };
    double total = 0.0;
    for (std::size_t v = 0; v < n; ++v)
        if (weight[v] > 0.0) {
            add(v, weight[v]);
            total += weight[v];
        }

    CounterRng rng(seed);
    PointStream out;
    out.dims = grid.geometry.dims;
    out.stream_id = stream_id;
    out.indices.reserve(want);
    out.payload_refs.reserve(want);
    for (std::size_t i = 0; i < want; ++i) {
        const double u = rng.next_double() * total;
        std::size_t v = prefix_search(u);
        // Rounding can land on an already-taken voxel; step to the next live one.
        while (v < n && weight[v] == 0.0) ++v;
        while (v > 0 && (v >= n || weight[v] == 0.0)) --v;
        out.indices.push_back(grid.geometry.unlinear(v));
        out.payload_refs.push_back(uint64_t(v));
        total -= weight[v];
        add(v, -weight[v]);
        weight[v] = 0.0;
    }
    return out;
}

// Stable sort of points by curve code ascending; ties keep original order.
inline SerializationOrder serialize(const PointStream& stream, Curve curve) {
    const int bits = bits_for_dims(stream.dims);
    std::vector<uint64_t> codes(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i)
        codes[i] = curve_code(curve, stream.indices[i], bits);

    SerializationOrder order;
    order.curve = curve;
    order.perm.resize(stream.size());
    std::iota(order.perm.begin(), order.perm.end(), std::size_t(0));
    std::stable_sort(order.perm.begin(), order.perm.end(),
                     [&](std::size_t a, std::size_t b) { return codes[a] < codes[b]; });
    return order;
}

// Consecutive chunks of size k_w along the serialized order; the last window
// may be smaller. Windows partition all points.
inline std::vector<Window> windows(const SerializationOrder& order, std::size_t k_w) {
    if (k_w < 1) throw std::invalid_argument("windows: k_w must be >= 1");
    std::vector<Window> out;
    for (std::size_t b = 0; b < order.size(); b += k_w)
        out.push_back({b, std::min(b + k_w, order.size())});
    return out;
}

// Identifies a point of the original stream list by list slot and position.
struct StreamPos {
    std::size_t stream_slot = 0;
    std::size_t pos = 0;

    bool operator==(const StreamPos&) const = default;
};

struct SmsaRegroup {
    PointStream merged;             // concatenation, stream 0 first
    std::vector<StreamPos> origin;  // merged position -> source slot/pos
    SerializationOrder order;       // over merged positions
    std::vector<Window> windows;    // over the unified serialized order
};

// Merge all streams, re-serialize jointly with a single curve, window the
// unified order. origin[] is the split-back map; split_back() applies it.
// Stream sizes may differ arbitrarily, including empty streams.
inline SmsaRegroup smsa_regroup(const std::vector<PointStream>& streams, Curve curve,
                                std::size_t k_w) {
    SmsaRegroup r;
    if (!streams.empty()) r.merged.dims = streams.front().dims;
    for (std::size_t s = 0; s < streams.size(); ++s) {
        if (streams[s].dims != r.merged.dims)
            throw ShapeError("smsa_regroup: streams do not share one geometry");
        for (std::size_t i = 0; i < streams[s].size(); ++i) {
            r.merged.indices.push_back(streams[s].indices[i]);
            r.merged.payload_refs.push_back(
                i < streams[s].payload_refs.size() ? streams[s].payload_refs[i] : 0);
            r.origin.push_back({s, i});
        }
    }
    r.order = serialize(r.merged, curve);
    r.windows = windows(r.order, k_w);
    return r;
}

// Restores the original streams from the unified serialized order.
inline std::vector<PointStream> split_back(const SmsaRegroup& r,
                                           const std::vector<PointStream>& originals) {
    std::vector<PointStream> out(originals.size());
    for (std::size_t s = 0; s < originals.size(); ++s) {
        out[s].dims = originals[s].dims;
        out[s].stream_id = originals[s].stream_id;
        out[s].indices.resize(originals[s].size());
        out[s].payload_refs.resize(originals[s].size());
    }
    for (std::size_t rank = 0; rank < r.order.size(); ++rank) {
        const std::size_t merged_pos = r.order.perm[rank];
        const StreamPos& sp = r.origin[merged_pos];
        out[sp.stream_slot].indices[sp.pos] = r.merged.indices[merged_pos];
        out[sp.stream_slot].payload_refs[sp.pos] = r.merged.payload_refs[merged_pos];
    }
    return out;
}

} // namespace ov4d
