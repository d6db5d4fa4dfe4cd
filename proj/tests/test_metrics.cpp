// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0

#include "ov4d/metrics.hpp"

#include "oracle_metrics.hpp"
#include "ov4d/rng.hpp"

#include <gtest/gtest.h>

using namespace ov4d;

namespace {

LabelSpec spec4() {
    LabelSpec s;
    s.classes = {"free", "road", "car", "person"};
    s.thing_flags = {false, false, true, true};
    s.free_class = 0;
    return s;
}

TrackedSequence empty_seq(std::array<int, 3> dims, int frames,
                          const LabelSpec& spec = spec4()) {
    TrackedSequence seq;
    seq.labels = spec;
    GridGeometry geom{{0, 0, 0}, {1, 1, 1}, dims};
    for (int f = 0; f < frames; ++f) {
        seq.frames.push_back(PanopticGrid::empty(geom, spec.free_class));
        seq.timestamps.push_back(f);
    }
    return seq;
}

// Random sequences small enough for the brute-force oracle.
TrackedSequence random_seq(CounterRng& rng, std::array<int, 3> dims, int frames,
                           int max_instances, bool random_visibility) {
    TrackedSequence seq = empty_seq(dims, frames);
    const std::size_t n = seq.geometry().voxel_count();
    for (auto& g : seq.frames) {
        for (std::size_t v = 0; v < n; ++v) {
            g.semantics[v] = uint16_t(rng.next_below(4));
            if (seq.labels.is_thing(g.semantics[v]))
                g.instances[v] = uint32_t(rng.next_below(uint64_t(max_instances) + 1));
            if (random_visibility) g.visibility[v] = rng.next_below(4) != 0;
        }
    }
    return seq;
}

void expect_reports_equal(const MetricReport& got, const oracle::Report& want) {
    // Bit-exact: counts are integers and ratio accumulation order is shared.
    EXPECT_EQ(got.aq, want.aq);
    EXPECT_EQ(got.aq1, want.aq1);
    EXPECT_EQ(got.stq, want.stq);
    EXPECT_EQ(got.stq1, want.stq1);
    EXPECT_EQ(got.miou_all, want.miou_all);
    EXPECT_EQ(got.miou_things, want.miou_things);
    EXPECT_EQ(got.miou_stuff, want.miou_stuff);
    EXPECT_EQ(got.binary_iou, want.binary_iou);
    ASSERT_EQ(got.per_class_iou.size(), want.per_class_iou.size());
    for (std::size_t c = 0; c < got.per_class_iou.size(); ++c) {
        if (std::isnan(want.per_class_iou[c])) EXPECT_TRUE(std::isnan(got.per_class_iou[c]));
        else EXPECT_EQ(got.per_class_iou[c], want.per_class_iou[c]);
    }
}

// ------------------------------------------------------------- masked_pair

TEST(MaskedPair, AllVisibleIsIdentity) {
    auto gt = empty_seq({3, 3, 2}, 2);
    gt.frames[0].semantics[4] = 2;
    gt.frames[0].instances[4] = 1;
    auto pred = gt;
    const auto [mg, mp] = masked_pair(gt, pred);
    EXPECT_EQ(mg, gt);
    EXPECT_EQ(mp, pred);
}

TEST(MaskedPair, NothingVisibleNothingCounted) {
    auto gt = empty_seq({2, 2, 1}, 1);
    auto pred = gt;
    for (auto& v : gt.frames[0].visibility) v = 0;
    pred.frames[0].semantics[0] = 2;
    pred.frames[0].instances[0] = 5;
    const auto [mg, mp] = masked_pair(gt, pred);
    const auto conf = semantic_confusion(mg, mp);
    for (int64_t c : conf) EXPECT_EQ(c, 0);
}

TEST(MaskedPair, InvisiblePredOccupancyIgnoredEverywhere) {
    auto gt = empty_seq({2, 2, 1}, 1);
    gt.frames[0].semantics[0] = 2;
    gt.frames[0].instances[0] = 1;
    auto pred = gt;
    // Occupy an extra voxel in pred; first run with it visible, then invisible.
    pred.frames[0].semantics[3] = 2;
    pred.frames[0].instances[3] = 1;
    const auto visible_report = stq_report(gt, pred);
    gt.frames[0].visibility[3] = 0;
    const auto masked_report = stq_report(gt, pred);
    EXPECT_LT(visible_report.aq, 1.0);
    EXPECT_EQ(masked_report.aq, 1.0); // the false positive is invisible
    EXPECT_EQ(masked_report.binary_iou, 1.0);
}

TEST(MaskedPair, RejectsShapeMismatch) {
    auto gt = empty_seq({2, 2, 1}, 1);
    auto pred = empty_seq({2, 2, 2}, 1);
    EXPECT_THROW(masked_pair(gt, pred), ShapeError);
    auto pred2 = empty_seq({2, 2, 1}, 2);
    EXPECT_THROW(masked_pair(gt, pred2), ShapeError);
}

// --------------------------------------------------------------- confusion

TEST(Confusion, PerfectPredictionIsDiagonal) {
    CounterRng rng(1);
    auto gt = random_seq(rng, {4, 4, 1}, 2, 3, false);
    const auto conf = semantic_confusion(gt, gt);
    const std::size_t C = gt.labels.num_classes();
    int64_t off_diag = 0;
    for (std::size_t a = 0; a < C; ++a)
        for (std::size_t b = 0; b < C; ++b)
            if (a != b) off_diag += conf[a * C + b];
    EXPECT_EQ(off_diag, 0);
    int64_t total = 0;
    for (int64_t c : conf) total += c;
    EXPECT_EQ(total, int64_t(gt.geometry().voxel_count()) * 2);
}

TEST(Confusion, SingleVisibleVoxelSingleEntry) {
    auto gt = empty_seq({2, 2, 1}, 1);
    auto pred = gt;
    for (std::size_t v = 1; v < 4; ++v) gt.frames[0].visibility[v] = 0;
    gt.frames[0].semantics[0] = 2;
    pred.frames[0].semantics[0] = 3;
    const auto [mg, mp] = masked_pair(gt, pred);
    const auto conf = semantic_confusion(mg, mp);
    const std::size_t C = 4;
    for (std::size_t a = 0; a < C; ++a)
        for (std::size_t b = 0; b < C; ++b)
            EXPECT_EQ(conf[a * C + b], (a == 2 && b == 3) ? 1 : 0);
}

TEST(Confusion, MatchesTripleLoopOracle) {
    CounterRng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        auto gt = random_seq(rng, {4, 4, 1}, 2, 2, true);
        auto pred = random_seq(rng, {4, 4, 1}, 2, 2, false);
        const auto [mg, mp] = masked_pair(gt, pred);
        const auto conf = semantic_confusion(mg, mp);
        // independent recount
        const std::size_t C = 4;
        std::vector<int64_t> expect(C * C, 0);
        for (int f = 0; f < 2; ++f)
            for (int z = 0; z < 1; ++z)
                for (int y = 0; y < 4; ++y)
                    for (int x = 0; x < 4; ++x) {
                        const std::size_t v = gt.geometry().linear({x, y, z});
                        if (!gt.frames[f].visibility[v]) continue;
                        ++expect[gt.frames[f].semantics[v] * C +
                                 pred.frames[f].semantics[v]];
                    }
        EXPECT_EQ(conf, expect);
    }
}

// -------------------------------------------------------------------- miou

TEST(Miou, PerfectIsOne) {
    CounterRng rng(3);
    auto gt = random_seq(rng, {4, 4, 2}, 2, 3, false);
    const auto conf = semantic_confusion(gt, gt);
    EXPECT_DOUBLE_EQ(miou(conf, gt.labels, ClassSubset::All), 1.0);
}

TEST(Miou, TotalDisagreementIsZero) {
    auto gt = empty_seq({3, 3, 1}, 1);
    auto pred = gt;
    for (std::size_t v = 0; v < 9; ++v) {
        gt.frames[0].semantics[v] = 1;
        pred.frames[0].semantics[v] = 2;
        pred.frames[0].instances[v] = 1;
    }
    const auto conf = semantic_confusion(gt, pred);
    EXPECT_DOUBLE_EQ(miou(conf, gt.labels, ClassSubset::All), 0.0);
}

TEST(Miou, MeanOfTwoClassIous) {
    // Class 1: IoU 0.5 (2 TP, 2 FN); class 2: IoU 0.25 (1 TP, 3 FP).
    const LabelSpec spec = spec4();
    Confusion conf(16, 0);
    conf[1 * 4 + 1] = 2;
    conf[1 * 4 + 0] = 2; // gt 1 predicted free -> FN for class 1
    conf[2 * 4 + 2] = 1;
    conf[0 * 4 + 2] = 3; // gt free predicted 2 -> FP for class 2
    EXPECT_DOUBLE_EQ(miou(conf, spec, ClassSubset::All), 0.375);
}

TEST(Miou, UnsupportedClassesDropped) {
    const LabelSpec spec = spec4();
    Confusion conf(16, 0);
    conf[1 * 4 + 1] = 10; // only class 1 supported
    EXPECT_DOUBLE_EQ(miou(conf, spec, ClassSubset::All), 1.0);
    EXPECT_DOUBLE_EQ(miou(conf, spec, ClassSubset::Things), 0.0); // nothing qualifies
}

// -------------------------------------------------------------- binary IoU

TEST(BinaryIou, IdenticalOccupancy) {
    CounterRng rng(4);
    auto gt = random_seq(rng, {3, 3, 2}, 2, 2, false);
    EXPECT_DOUBLE_EQ(binary_iou(gt, gt), 1.0);
}

TEST(BinaryIou, DisjointOccupancy) {
    auto gt = empty_seq({2, 1, 1}, 1);
    auto pred = gt;
    gt.frames[0].semantics[0] = 1;
    pred.frames[0].semantics[1] = 1;
    EXPECT_DOUBLE_EQ(binary_iou(gt, pred), 0.0);
}

TEST(BinaryIou, SetArithmetic) {
    // gt occupies 4, pred 6, 3 shared -> 3/7.
    auto gt = empty_seq({8, 1, 1}, 1);
    auto pred = gt;
    for (int x = 0; x < 4; ++x) gt.frames[0].semantics[x] = 1;
    for (int x = 1; x < 7; ++x) pred.frames[0].semantics[x] = 1;
    EXPECT_DOUBLE_EQ(binary_iou(gt, pred), 3.0 / 7.0);
}

// ---------------------------------------------------------------------- AQ

TubeSet tubes_of(const TrackedSequence& seq, const TrackedSequence& vis,
                 TubeMask mask = TubeMask::None) {
    return build_tubes(seq, vis, mask);
}

TEST(Aq, PerfectTubes) {
    CounterRng rng(5);
    auto gt = random_seq(rng, {4, 4, 2}, 3, 3, false);
    const auto t = tubes_of(gt, gt);
    EXPECT_DOUBLE_EQ(aq(t, t), 1.0);
}

TEST(Aq, NoPredictions) {
    auto gt = empty_seq({2, 2, 1}, 1);
    gt.frames[0].semantics[0] = 2;
    gt.frames[0].instances[0] = 1;
    auto pred = empty_seq({2, 2, 1}, 1);
    EXPECT_DOUBLE_EQ(aq(tubes_of(gt, gt), tubes_of(pred, gt)), 0.0);
}

TEST(Aq, EmptyGtEdgeCases) {
    auto gt = empty_seq({2, 2, 1}, 1);
    auto pred = empty_seq({2, 2, 1}, 1);
    EXPECT_DOUBLE_EQ(aq(tubes_of(gt, gt), tubes_of(pred, gt)), 1.0);
    pred.frames[0].semantics[0] = 2;
    pred.frames[0].instances[0] = 9;
    EXPECT_DOUBLE_EQ(aq(tubes_of(gt, gt), tubes_of(pred, gt)), 0.0);
}

TEST(Aq, SplitInstancePenalty) {
    // One 4-voxel gt instance; pred splits it into two 2-voxel halves:
    // AQ = (1/4) * (2*(2/4) + 2*(2/4)) = 0.5.
    auto gt = empty_seq({4, 1, 1}, 1);
    auto pred = gt;
    for (int x = 0; x < 4; ++x) {
        gt.frames[0].semantics[x] = 2;
        gt.frames[0].instances[x] = 1;
        pred.frames[0].semantics[x] = 2;
        pred.frames[0].instances[x] = x < 2 ? 1 : 2;
    }
    EXPECT_DOUBLE_EQ(aq(tubes_of(gt, gt), tubes_of(pred, gt)), 0.5);
}

TEST(Aq, FalsePositiveInFreeSpacePenalized) {
    // gt {A}; pred {A, B} with B visible free space: AQ = 1 * (1/2) = 0.5.
    auto gt = empty_seq({2, 1, 1}, 1);
    gt.frames[0].semantics[0] = 2;
    gt.frames[0].instances[0] = 1;
    auto pred = gt;
    pred.frames[0].semantics[1] = 2;
    pred.frames[0].instances[1] = 1;
    EXPECT_DOUBLE_EQ(aq(tubes_of(gt, gt), tubes_of(pred, gt)), 0.5);
    // Flawed variant masks the free-space voxel away: AQ = 1.
    EXPECT_DOUBLE_EQ(aq(tubes_of(gt, gt, TubeMask::GtOccupied),
                        tubes_of(pred, gt, TubeMask::GtOccupied)),
                     1.0);
}

TEST(Aq, InvariantToPredIdRelabeling) {
    CounterRng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        auto gt = random_seq(rng, {4, 4, 2}, 2, 3, true);
        auto pred = random_seq(rng, {4, 4, 2}, 2, 3, false);
        const auto [mg, mp] = masked_pair(gt, pred);
        const double before = aq(tubes_of(mg, mg), tubes_of(mp, mg));
        auto relabeled = mp;
        for (auto& g : relabeled.frames)
            for (auto& id : g.instances)
                if (id != kNoInstance) id = id * 7 + 3; // injective
        const double after = aq(tubes_of(mg, mg), tubes_of(relabeled, mg));
        EXPECT_DOUBLE_EQ(before, after);
    }
}

TEST(Aq, IgnoresPredictedClassLabels) {
    // Swapping thing classes with instance labels fixed leaves AQ unchanged.
    CounterRng rng(7);
    auto gt = random_seq(rng, {4, 4, 2}, 2, 3, false);
    auto pred = random_seq(rng, {4, 4, 2}, 2, 3, false);
    const double before = stq_report(gt, pred).aq;
    auto swapped = pred;
    for (auto& g : swapped.frames)
        for (auto& c : g.semantics) {
            if (c == 2) c = 3;
            else if (c == 3) c = 2;
        }
    EXPECT_DOUBLE_EQ(stq_report(gt, swapped).aq, before);
}

TEST(Aq, DropsForeignInstancesOnStuff) {
    auto gt = empty_seq({2, 1, 1}, 1);
    gt.frames[0].semantics[0] = 2;
    gt.frames[0].instances[0] = 1;
    auto pred = gt;
    // Foreign data: instance ID on a stuff voxel must not form a tube.
    pred.frames[0].semantics[1] = 1;
    pred.frames[0].instances[1] = 2;
    const auto tubes = tubes_of(pred, gt);
    EXPECT_EQ(tubes.num_instances(), 1u);
    EXPECT_EQ(tubes.dropped, 1);
}

// --------------------------------------------------------------------- AQ1

TEST(Aq1, SingleFrameEqualsAq) {
    CounterRng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        auto gt = random_seq(rng, {4, 4, 2}, 1, 3, true);
        auto pred = random_seq(rng, {4, 4, 2}, 1, 3, false);
        const auto r = stq_report(gt, pred);
        EXPECT_DOUBLE_EQ(r.aq, r.aq1);
    }
}

TEST(Aq1, IdSwitchForgiven) {
    // Perfect per-frame masks, new ID in frame 2: AQ < 1, AQ1 == 1.
    auto gt = empty_seq({2, 2, 1}, 2);
    for (int f = 0; f < 2; ++f) {
        gt.frames[f].semantics[0] = 2;
        gt.frames[f].instances[0] = 1;
    }
    auto pred = gt;
    pred.frames[1].instances[0] = 2;
    const auto r = stq_report(gt, pred);
    EXPECT_LT(r.aq, 1.0);
    EXPECT_DOUBLE_EQ(r.aq1, 1.0);
}

TEST(Aq1, EmptyPredictionsScoreZero) {
    auto gt = empty_seq({2, 2, 1}, 2);
    gt.frames[0].semantics[0] = 2;
    gt.frames[0].instances[0] = 1;
    const auto pred = empty_seq({2, 2, 1}, 2);
    const auto r = stq_report(gt, pred);
    EXPECT_DOUBLE_EQ(r.aq1, 0.0);
}

TEST(Aq1, AtLeastAqOnPerfectMasks) {
    // Tracking errors only: per-frame masks equal gt, IDs permuted per frame.
    CounterRng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        auto gt = random_seq(rng, {4, 4, 1}, 3, 3, false);
        auto pred = gt;
        for (auto& g : pred.frames) {
            const uint64_t offset = rng.next_below(3);
            for (auto& id : g.instances)
                if (id != kNoInstance) id = uint32_t((id + offset) % 4 + 1);
        }
        const auto r = stq_report(gt, pred);
        EXPECT_DOUBLE_EQ(r.aq1, 1.0);
        EXPECT_GE(r.aq1, r.aq);
    }
}

// ------------------------------------------------------------------ report

TEST(StqReport, PerfectPrediction) {
    CounterRng rng(10);
    auto gt = random_seq(rng, {4, 4, 2}, 3, 3, true);
    const auto r = stq_report(gt, gt);
    EXPECT_DOUBLE_EQ(r.stq, 1.0);
    EXPECT_DOUBLE_EQ(r.aq, 1.0);
    EXPECT_DOUBLE_EQ(r.stq1, 1.0);
    EXPECT_DOUBLE_EQ(r.aq1, 1.0);
    EXPECT_DOUBLE_EQ(r.miou_all, 1.0);
    EXPECT_DOUBLE_EQ(r.binary_iou, 1.0);
}

TEST(StqReport, GeometricMeanIdentity) {
    CounterRng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto gt = random_seq(rng, {4, 4, 2}, 2, 3, true);
        auto pred = random_seq(rng, {4, 4, 2}, 2, 3, false);
        const auto r = stq_report(gt, pred);
        EXPECT_NEAR(r.stq, std::sqrt(r.miou_all * r.aq), 1e-12);
        EXPECT_NEAR(r.stq1, std::sqrt(r.miou_all * r.aq1), 1e-12);
    }
}

TEST(StqReport, FlawedHidesFreeSpaceFalsePositive) {
    auto gt = empty_seq({2, 1, 1}, 1);
    gt.frames[0].semantics[0] = 2;
    gt.frames[0].instances[0] = 1;
    auto pred = gt;
    pred.frames[0].semantics[1] = 2;
    pred.frames[0].instances[1] = 1;
    EXPECT_DOUBLE_EQ(stq_report(gt, pred, false).aq, 0.5);
    EXPECT_DOUBLE_EQ(stq_report(gt, pred, true).aq, 1.0);
}

TEST(StqReport, FlawedNeverBelowCorrected) {
    CounterRng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        auto gt = random_seq(rng, {4, 4, 2}, 2, 3, true);
        auto pred = random_seq(rng, {4, 4, 2}, 2, 3, false);
        const auto corrected = stq_report(gt, pred, false);
        const auto flawed = stq_report(gt, pred, true);
        EXPECT_GE(flawed.aq, corrected.aq - 1e-15);
        EXPECT_GE(flawed.aq1, corrected.aq1 - 1e-15);
    }
}

TEST(StqReport, MatchesBruteForceOracle) {
    CounterRng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const int frames = 1 + int(rng.next_below(3));
        auto gt = random_seq(rng, {6, 6, 2}, frames, 4, true);
        auto pred = random_seq(rng, {6, 6, 2}, frames, 4, false);
        for (const bool flawed : {false, true}) {
            const auto got = stq_report(gt, pred, flawed);
            const auto want = oracle::evaluate(gt, pred, flawed);
            expect_reports_equal(got, want);
        }
    }
}

TEST(StqReport, AqAlwaysInUnitInterval) {
    CounterRng rng(14);
    for (int trial = 0; trial < 50; ++trial) {
        auto gt = random_seq(rng, {5, 5, 1}, 2, 5, true);
        auto pred = random_seq(rng, {5, 5, 1}, 2, 5, false);
        const auto r = stq_report(gt, pred);
        EXPECT_GE(r.aq, 0.0);
        EXPECT_LE(r.aq, 1.0);
        EXPECT_GE(r.aq1, 0.0);
        EXPECT_LE(r.aq1, 1.0);
    }
}

TEST(StqReport, InstanceRelabelKeepsMiou) {
    CounterRng rng(15);
    auto gt = random_seq(rng, {4, 4, 1}, 2, 3, false);
    auto pred = random_seq(rng, {4, 4, 1}, 2, 3, false);
    const auto before = stq_report(gt, pred);
    auto relabeled = pred;
    for (auto& g : relabeled.frames)
        for (auto& id : g.instances)
            if (id != kNoInstance) id += 17;
    const auto after = stq_report(gt, relabeled);
    EXPECT_DOUBLE_EQ(before.miou_all, after.miou_all);
    EXPECT_DOUBLE_EQ(before.miou_things, after.miou_things);
    EXPECT_DOUBLE_EQ(before.miou_stuff, after.miou_stuff);
}

TEST(ReportText, SortedKeysAndStableFormat) {
    auto gt = empty_seq({2, 1, 1}, 1);
    gt.frames[0].semantics[0] = 1;
    const auto r = stq_report(gt, gt);
    const std::string text = report_to_text(r);
    EXPECT_NE(text.find("aq = 1\n"), std::string::npos);
    EXPECT_NE(text.find("iou_class_001 = 1\n"), std::string::npos);
    // keys sorted ascending
    EXPECT_LT(text.find("aq ="), text.find("binary_iou ="));
    EXPECT_LT(text.find("binary_iou ="), text.find("stq ="));
    EXPECT_EQ(report_to_text(r), text);
}

} // namespace
