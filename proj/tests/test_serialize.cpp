// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0

#include "ov4d/serialize.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

using namespace ov4d;

namespace {

FeatureGrid grid_with_magnitudes(const std::vector<double>& mags,
                                 std::array<int, 3> dims) {
    FeatureGrid g;
    g.geometry = {{0, 0, 0}, {1, 1, 1}, dims};
    g.embedding_dim = 1;
    g.occupancy.assign(g.geometry.voxel_count(), 1.0);
    g.features = mags;
    return g;
}

PointStream stream_of(std::array<int, 3> dims, std::vector<VoxelIndex> indices,
                      int stream_id = 0) {
    PointStream s;
    s.dims = dims;
    s.stream_id = stream_id;
    s.indices = std::move(indices);
    s.payload_refs.resize(s.indices.size());
    std::iota(s.payload_refs.begin(), s.payload_refs.end(), uint64_t(stream_id) << 32);
    return s;
}

// ---------------------------------------------------------------- sampling

TEST(SeedPoints, SingleNonzeroVoxelAlwaysPicked) {
    auto g = grid_with_magnitudes({0, 0, 0, 5, 0, 0, 0, 0}, {2, 2, 2});
    for (uint64_t seed : {0ull, 1ull, 99ull}) {
        const auto s = seed_points(g, 1, seed);
        ASSERT_EQ(s.size(), 1u);
        EXPECT_EQ(s.indices[0], g.geometry.unlinear(3));
    }
}

TEST(SeedPoints, AllVoxelsWhenKCoversEverything) {
    auto g = grid_with_magnitudes(std::vector<double>(27, 1.0), {3, 3, 3});
    const auto s = seed_points(g, 27, 7);
    ASSERT_EQ(s.size(), 27u);
    std::set<uint64_t> unique(s.payload_refs.begin(), s.payload_refs.end());
    EXPECT_EQ(unique.size(), 27u); // without replacement
}

TEST(SeedPoints, KLargerThanSupportReturnsAllNonzero) {
    auto g = grid_with_magnitudes({1, 0, 2, 0, 0, 3, 0, 0}, {2, 2, 2});
    const auto s = seed_points(g, 100, 3);
    EXPECT_EQ(s.size(), 3u);
}

TEST(SeedPoints, RejectsNonPositiveK) {
    auto g = grid_with_magnitudes({1, 1, 1, 1, 1, 1, 1, 1}, {2, 2, 2});
    EXPECT_THROW(seed_points(g, 0, 1), std::invalid_argument);
    EXPECT_THROW(seed_points(g, -2, 1), std::invalid_argument);
}

TEST(SeedPoints, DeterministicGivenSeed) {
    std::vector<double> mags(64);
    for (std::size_t i = 0; i < mags.size(); ++i) mags[i] = double(i % 7) + 0.5;
    auto g = grid_with_magnitudes(mags, {4, 4, 4});
    const auto a = seed_points(g, 10, 42);
    const auto b = seed_points(g, 10, 42);
    EXPECT_EQ(a.indices, b.indices);
    const auto c = seed_points(g, 10, 43);
    EXPECT_NE(a.indices, c.indices);
}

TEST(SeedPoints, SelectionFrequencyTracksMagnitude) {
    // Two voxels with 9:1 magnitudes; empirical pick rate within 3 sigma.
    auto g = grid_with_magnitudes({9, 1}, {2, 1, 1});
    int picks_heavy = 0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        const auto s = seed_points(g, 1, uint64_t(t));
        picks_heavy += s.payload_refs[0] == 0;
    }
    const double p = double(picks_heavy) / trials;
    const double sigma = std::sqrt(0.9 * 0.1 / trials);
    EXPECT_NEAR(p, 0.9, 3 * sigma);
}

// ------------------------------------------------------------ serialization

TEST(Serialize, SortedStreamGetsIdentity) {
    // Indices along ascending Morton codes.
    auto s = stream_of({4, 4, 4}, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 1}});
    const auto order = serialize(s, Curve::Morton);
    EXPECT_EQ(order.perm, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Serialize, ReversedStreamGetsReversal) {
    auto s = stream_of({4, 4, 4}, {{1, 1, 1}, {0, 1, 0}, {1, 0, 0}, {0, 0, 0}});
    const auto order = serialize(s, Curve::Morton);
    EXPECT_EQ(order.perm, (std::vector<std::size_t>{3, 2, 1, 0}));
}

TEST(Serialize, CodesNondecreasingAlongPermutation) {
    CounterRng rng(5);
    for (Curve curve : {Curve::Morton, Curve::Hilbert}) {
        std::vector<VoxelIndex> idx;
        for (int i = 0; i < 300; ++i)
            idx.push_back({int(rng.next_below(16)), int(rng.next_below(16)),
                           int(rng.next_below(16))});
        const auto s = stream_of({16, 16, 16}, idx);
        const auto order = serialize(s, curve);
        uint64_t prev = 0;
        for (std::size_t r = 0; r < order.size(); ++r) {
            const uint64_t code = curve_code(curve, s.indices[order.perm[r]], 4);
            EXPECT_GE(code, prev);
            prev = code;
        }
        // Permutation property: sorted image is 0..n-1.
        auto sorted = order.perm;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
    }
}

TEST(Serialize, PermutationComposedWithInverseIsIdentity) {
    CounterRng rng(7);
    std::vector<VoxelIndex> idx;
    for (int i = 0; i < 200; ++i)
        idx.push_back(
            {int(rng.next_below(16)), int(rng.next_below(16)), int(rng.next_below(16))});
    const auto s = stream_of({16, 16, 16}, idx);
    const auto order = serialize(s, Curve::Hilbert);
    std::vector<std::size_t> inverse(order.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank)
        inverse[order.perm[rank]] = rank;
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        EXPECT_EQ(order.perm[inverse[pos]], pos);
}

TEST(Serialize, TiesBrokenByOriginalPosition) {
    auto s = stream_of({4, 4, 4}, {{2, 2, 2}, {1, 1, 1}, {2, 2, 2}});
    const auto order = serialize(s, Curve::Hilbert);
    // Duplicate (2,2,2) entries must stay in original relative order.
    const auto first = std::find(order.perm.begin(), order.perm.end(), 0u);
    const auto second = std::find(order.perm.begin(), order.perm.end(), 2u);
    EXPECT_LT(first - order.perm.begin(), second - order.perm.begin());
}

// ---------------------------------------------------------------- windows

TEST(Windows, SplitsIntoChunksWithSmallerTail) {
    SerializationOrder order;
    order.perm.resize(5);
    std::iota(order.perm.begin(), order.perm.end(), std::size_t(0));
    const auto w = windows(order, 2);
    ASSERT_EQ(w.size(), 3u);
    EXPECT_EQ(w[0].size(), 2u);
    EXPECT_EQ(w[1].size(), 2u);
    EXPECT_EQ(w[2].size(), 1u);
}

TEST(Windows, SingleWindowWhenSmall) {
    SerializationOrder order;
    order.perm.resize(3);
    const auto w = windows(order, 8);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0].size(), 3u);
}

TEST(Windows, PaperConfigurationEightWindows) {
    SerializationOrder order;
    order.perm.resize(8192);
    const auto w = windows(order, 1024);
    ASSERT_EQ(w.size(), 8u);
    for (const auto& win : w) EXPECT_EQ(win.size(), 1024u);
}

TEST(Windows, PartitionCoversEachPointOnce) {
    SerializationOrder order;
    order.perm.resize(777);
    const auto w = windows(order, 64);
    std::vector<int> covered(777, 0);
    for (const auto& win : w)
        for (std::size_t r = win.begin; r < win.end; ++r) ++covered[r];
    for (int c : covered) EXPECT_EQ(c, 1);
}

// ------------------------------------------------------------ SMSA regroup

TEST(SmsaRegroup, SingleStreamMatchesPlainSerialize) {
    CounterRng rng(11);
    std::vector<VoxelIndex> idx;
    for (int i = 0; i < 100; ++i)
        idx.push_back(
            {int(rng.next_below(8)), int(rng.next_below(8)), int(rng.next_below(8))});
    const auto s = stream_of({8, 8, 8}, idx);
    const auto r = smsa_regroup({s}, Curve::Hilbert, 16);
    const auto direct = serialize(s, Curve::Hilbert);
    EXPECT_EQ(r.order.perm, direct.perm);
    EXPECT_EQ(r.windows, windows(direct, 16));
    const auto back = split_back(r, {s});
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].indices, s.indices);
    EXPECT_EQ(back[0].payload_refs, s.payload_refs);
}

TEST(SmsaRegroup, InterleavedStreamsShareWindows) {
    // Stream A at even x, stream B at odd x along one row: their Morton codes
    // interleave, so windows of size 4 must mix streams.
    std::vector<VoxelIndex> a, b;
    for (int x = 0; x < 8; x += 2) a.push_back({x, 0, 0});
    for (int x = 1; x < 8; x += 2) b.push_back({x, 0, 0});
    const auto r = smsa_regroup(
        {stream_of({8, 8, 8}, a, 0), stream_of({8, 8, 8}, b, 1)}, Curve::Morton, 4);
    bool mixed = false;
    for (const auto& win : r.windows) {
        std::set<std::size_t> slots;
        for (std::size_t rank = win.begin; rank < win.end; ++rank)
            slots.insert(r.origin[r.order.perm[rank]].stream_slot);
        if (slots.size() > 1) mixed = true;
    }
    EXPECT_TRUE(mixed);
}

TEST(SmsaRegroup, RoundTripRestoresStreamsExactly) {
    CounterRng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<PointStream> streams;
        const std::size_t num_streams = 1 + rng.next_below(4);
        for (std::size_t s = 0; s < num_streams; ++s) {
            std::vector<VoxelIndex> idx;
            const std::size_t count = rng.next_below(200);
            for (std::size_t i = 0; i < count; ++i)
                idx.push_back({int(rng.next_below(16)), int(rng.next_below(16)),
                               int(rng.next_below(16))});
            streams.push_back(stream_of({16, 16, 16}, idx, int(s)));
        }
        const auto r = smsa_regroup(streams, Curve::Hilbert, 32);
        const auto back = split_back(r, streams);
        ASSERT_EQ(back.size(), streams.size());
        for (std::size_t s = 0; s < streams.size(); ++s) {
            EXPECT_EQ(back[s].indices, streams[s].indices);
            EXPECT_EQ(back[s].payload_refs, streams[s].payload_refs);
        }
    }
}

TEST(SmsaRegroup, HandlesEmptyAndLopsidedStreams) {
    for (std::size_t big : {std::size_t(1), std::size_t(512), std::size_t(8192)}) {
        CounterRng rng(big);
        std::vector<VoxelIndex> idx;
        for (std::size_t i = 0; i < big; ++i)
            idx.push_back({int(rng.next_below(32)), int(rng.next_below(32)),
                           int(rng.next_below(32))});
        std::vector<PointStream> streams = {stream_of({32, 32, 32}, {}, 0),
                                            stream_of({32, 32, 32}, idx, 1)};
        const auto r = smsa_regroup(streams, Curve::Hilbert, 1024);
        EXPECT_EQ(r.merged.size(), big);
        const auto back = split_back(r, streams);
        EXPECT_TRUE(back[0].indices.empty());
        EXPECT_EQ(back[1].indices, streams[1].indices);
    }
}

TEST(SmsaRegroup, RejectsMismatchedGeometries) {
    const auto a = stream_of({8, 8, 8}, {{0, 0, 0}});
    const auto b = stream_of({4, 4, 4}, {{0, 0, 0}});
    EXPECT_THROW(smsa_regroup({a, b}, Curve::Morton, 4), ShapeError);
}

TEST(Windows, RejectsZeroWidth) {
    SerializationOrder order;
    order.perm.resize(4);
    EXPECT_THROW(windows(order, 0), std::invalid_argument);
}

} // namespace
