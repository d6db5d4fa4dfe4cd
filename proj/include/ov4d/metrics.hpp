// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0
//
// Segmentation-and-tracking quality for panoptic voxel sequences:
//
//   STQ = sqrt(SQ * AQ)
//   AQ  = (1/|I_G|) sum_{i in I_G} (1/|G_i|) sum_{j in I_P}
//             |G_i n P_j| * |G_i n P_j| / |G_i u P_j|
//
// SQ is the class mIoU of the semantic prediction; AQ the soft-weighted tube
// IoU over instance tubes (sets of (voxel, timestep) pairs per instance ID).
// AQ1/STQ1 are the single-frame variants where every (instance, frame) pair
// counts as a distinct instance. Everything is evaluated on camera-visible
// voxels only. The "flawed" variant reproduces implementations that intersect
// every tube with the ground-truth-occupied mask, which hides false positives
// in known free space.
//
// All counts are 64-bit integers; ratios are accumulated in ascending
// instance-ID order so results are bit-reproducible.
#pragma once

#include "ov4d/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace ov4d {

// ---------------------------------------------------------------- tube sets

// Entries of one side's instance tubes, flattened and sorted by (frame,
// voxel). Built only from visible, thing-class, instance-labeled voxels.
struct TubeSet {
    struct Entry {
        uint64_t key;       // frame * voxel_count + linear voxel
        uint32_t instance;
    };
    std::vector<Entry> entries;            // ascending by key
    std::map<uint32_t, int64_t> sizes;     // |G_i| per instance ID
    int64_t dropped = 0;                   // foreign instance IDs on stuff/free voxels

    std::size_t num_instances() const { return sizes.size(); }
};

enum class TubeMask { None, GtOccupied };

// Builds the tube set of `seq`. Visibility always comes from `vis_from` (the
// ground truth side). With TubeMask::GtOccupied entries are additionally
// restricted to voxels occupied (non-free) in `vis_from`, reproducing the
// flawed metric variant.
inline TubeSet build_tubes(const TrackedSequence& seq, const TrackedSequence& vis_from,
                           TubeMask mask = TubeMask::None) {
    TubeSet out;
    const std::size_t n = seq.geometry().voxel_count();
    const LabelSpec& spec = seq.labels;
    for (std::size_t f = 0; f < seq.num_frames(); ++f) {
        const PanopticGrid& g = seq.frames[f];
        const PanopticGrid& vg = vis_from.frames[f];
        for (std::size_t v = 0; v < n; ++v) {
            if (!vg.visibility[v]) continue;
            const uint32_t id = g.instances[v];
            if (id == kNoInstance) continue;
            if (!spec.is_thing(g.semantics[v])) {
                ++out.dropped;
                continue;
            }
            if (mask == TubeMask::GtOccupied && vg.semantics[v] == spec.free_class)
                continue;
            out.entries.push_back({uint64_t(f) * n + v, id});
            ++out.sizes[id];
        }
    }
    return out;
}

// Relabels every (instance, frame) pair to a fresh unique ID, turning tracked
// tubes into single-frame instances. Fresh IDs follow (frame, id) order so
// downstream accumulation order is canonical.
inline TubeSet per_frame_relabel(const TubeSet& tubes, std::size_t voxel_count) {
    TubeSet out;
    out.dropped = tubes.dropped;
    std::map<std::pair<uint64_t, uint32_t>, uint32_t> fresh; // (frame, id) -> new id
    for (const auto& e : tubes.entries)
        fresh.emplace(std::make_pair(e.key / voxel_count, e.instance), 0u);
    uint32_t next = 1;
    for (auto& [key, id] : fresh) id = next++;
    out.entries.reserve(tubes.entries.size());
    for (const auto& e : tubes.entries) {
        const uint32_t id = fresh.at({e.key / voxel_count, e.instance});
        out.entries.push_back({e.key, id});
        ++out.sizes[id];
    }
    return out;
}

// Association quality per the weighted tube-IoU formula. An empty ground
// truth scores 1 against an empty prediction and 0 otherwise.
inline double aq(const TubeSet& gt, const TubeSet& pred) {
    if (gt.sizes.empty()) return pred.sizes.empty() ? 1.0 : 0.0;

    // Dense indices in ascending-ID order fix the accumulation order.
    std::vector<uint32_t> gt_ids, pred_ids;
    std::map<uint32_t, std::size_t> gt_idx, pred_idx;
    for (const auto& kv : gt.sizes) {
        gt_idx[kv.first] = gt_ids.size();
        gt_ids.push_back(kv.first);
    }
    for (const auto& kv : pred.sizes) {
        pred_idx[kv.first] = pred_ids.size();
        pred_ids.push_back(kv.first);
    }

    // Pairwise intersections by merge-join over the key-sorted entries.
    std::map<std::pair<std::size_t, std::size_t>, int64_t> inter;
    std::size_t a = 0, b = 0;
    while (a < gt.entries.size() && b < pred.entries.size()) {
        if (gt.entries[a].key < pred.entries[b].key) {
            ++a;
        } else if (gt.entries[a].key > pred.entries[b].key) {
            ++b;
        } else {
            ++inter[{gt_idx.at(gt.entries[a].instance),
                     pred_idx.at(pred.entries[b].instance)}];
            ++a;
            ++b;
        }
    }

    double total = 0.0;
    for (std::size_t i = 0; i < gt_ids.size(); ++i) {
        const int64_t gsize = gt.sizes.at(gt_ids[i]);
        double inner = 0.0;
        for (std::size_t j = 0; j < pred_ids.size(); ++j) {
            const auto it = inter.find({i, j});
            if (it == inter.end()) continue;
            const int64_t isz = it->second;
            const int64_t usz = gsize + pred.sizes.at(pred_ids[j]) - isz;
            inner += double(isz) * (double(isz) / double(usz));
        }
        total += inner / double(gsize);
    }
    return total / double(gt_ids.size());
}

// Single-frame association quality: aq after splitting both sides per frame.
inline double aq1(const TubeSet& gt, const TubeSet& pred, std::size_t voxel_count) {
    return aq(per_frame_relabel(gt, voxel_count), per_frame_relabel(pred, voxel_count));
}

// --------------------------------------------------------------- semantics

using Confusion = std::vector<int64_t>; // C x C row-major, row = gt class

inline void check_compatible(const TrackedSequence& gt, const TrackedSequence& pred) {
    if (gt.num_frames() != pred.num_frames())
        throw ShapeError("metrics: frame count mismatch");
    if (gt.num_frames() == 0) throw ShapeError("metrics: empty sequences");
    if (gt.geometry() != pred.geometry())
        throw ShapeError("metrics: geometry mismatch");
    if (gt.labels != pred.labels) throw ShapeError("metrics: label spec mismatch");
}

// Restricts both sequences to ground-truth-visible voxels: prediction
// visibility is replaced by the ground truth's and invisible voxels are
// neutralized to free space on both sides.
inline std::pair<TrackedSequence, TrackedSequence> masked_pair(
    const TrackedSequence& gt, const TrackedSequence& pred) {
    check_compatible(gt, pred);
    TrackedSequence mg = gt, mp = pred;
    const std::size_t n = gt.geometry().voxel_count();
    for (std::size_t f = 0; f < gt.num_frames(); ++f) {
        mp.frames[f].visibility = mg.frames[f].visibility;
        for (std::size_t v = 0; v < n; ++v) {
            if (mg.frames[f].visibility[v]) continue;
            for (PanopticGrid* g : {&mg.frames[f], &mp.frames[f]}) {
                g->semantics[v] = gt.labels.free_class;
                g->instances[v] = kNoInstance;
            }
        }
    }
    return {std::move(mg), std::move(mp)};
}

// C x C counts over visible voxels, entry (gt class, pred class), all frames.
inline Confusion semantic_confusion(const TrackedSequence& gt,
                                    const TrackedSequence& pred) {
    check_compatible(gt, pred);
    const std::size_t C = gt.labels.num_classes();
    Confusion m(C * C, 0);
    const std::size_t n = gt.geometry().voxel_count();
    for (std::size_t f = 0; f < gt.num_frames(); ++f) {
        const auto& gg = gt.frames[f];
        const auto& pg = pred.frames[f];
        for (std::size_t v = 0; v < n; ++v)
            if (gg.visibility[v]) ++m[std::size_t(gg.semantics[v]) * C + pg.semantics[v]];
    }
    return m;
}

enum class ClassSubset { All, Things, Stuff };

// Per-class IoU from a confusion matrix; NaN for classes with no support
// (TP + FP + FN == 0) and for the free class.
inline std::vector<double> per_class_iou(const Confusion& m, const LabelSpec& spec) {
    const std::size_t C = spec.num_classes();
    std::vector<double> iou(C, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < C; ++c) {
        if (c == spec.free_class) continue;
        int64_t tp = m[c * C + c], fp = 0, fn = 0;
        for (std::size_t o = 0; o < C; ++o) {
            if (o == c) continue;
            fp += m[o * C + c];
            fn += m[c * C + o];
        }
        if (tp + fp + fn > 0) iou[c] = double(tp) / double(tp + fp + fn);
    }
    return iou;
}

// Mean IoU over the subset's supported classes; free is always excluded.
// Returns 0 when no class qualifies.
inline double miou(const Confusion& m, const LabelSpec& spec, ClassSubset subset) {
    const auto iou = per_class_iou(m, spec);
    double sum = 0.0;
    int64_t count = 0;
    for (std::size_t c = 0; c < iou.size(); ++c) {
        if (std::isnan(iou[c])) continue;
        if (subset == ClassSubset::Things && !spec.is_thing(uint16_t(c))) continue;
        if (subset == ClassSubset::Stuff && !spec.is_stuff(uint16_t(c))) continue;
        sum += iou[c];
        ++count;
    }
    return count == 0 ? 0.0 : sum / double(count);
}

// IoU between the occupied (non-free) voxel sets, visible voxels only.
// Identical empty occupancies score 1.
inline double binary_iou(const TrackedSequence& gt, const TrackedSequence& pred) {
    check_compatible(gt, pred);
    const uint16_t free_c = gt.labels.free_class;
    int64_t inter = 0, uni = 0;
    const std::size_t n = gt.geometry().voxel_count();
    for (std::size_t f = 0; f < gt.num_frames(); ++f) {
        const auto& gg = gt.frames[f];
        const auto& pg = pred.frames[f];
        for (std::size_t v = 0; v < n; ++v) {
            if (!gg.visibility[v]) continue;
            const bool go = gg.semantics[v] != free_c;
            const bool po = pg.semantics[v] != free_c;
            inter += go && po;
            uni += go || po;
        }
    }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

// ------------------------------------------------------------------ report

struct MetricReport {
    double stq = 0.0, aq = 0.0, stq1 = 0.0, aq1 = 0.0;
    double miou_all = 0.0, miou_things = 0.0, miou_stuff = 0.0;
    double binary_iou = 0.0;
    std::vector<double> per_class_iou; // NaN where undefined
    Confusion confusion;
    int64_t dropped_instance_voxels = 0;
};

// Full evaluation of one prediction against ground truth. With flawed=true
// the tubes feeding AQ/AQ1 are intersected with the ground-truth-occupied
// mask; semantic metrics are unaffected.
inline MetricReport stq_report(const TrackedSequence& gt_in,
                               const TrackedSequence& pred_in, bool flawed = false) {
    auto [gt, pred] = masked_pair(gt_in, pred_in);

    MetricReport r;
    r.confusion = semantic_confusion(gt, pred);
    r.per_class_iou = per_class_iou(r.confusion, gt.labels);
    r.miou_all = miou(r.confusion, gt.labels, ClassSubset::All);
    r.miou_things = miou(r.confusion, gt.labels, ClassSubset::Things);
    r.miou_stuff = miou(r.confusion, gt.labels, ClassSubset::Stuff);
    r.binary_iou = binary_iou(gt, pred);

    const TubeMask mask = flawed ? TubeMask::GtOccupied : TubeMask::None;
    const TubeSet gt_tubes = build_tubes(gt, gt, mask);
    const TubeSet pred_tubes = build_tubes(pred, gt, mask);
    r.dropped_instance_voxels = gt_tubes.dropped + pred_tubes.dropped;

    const std::size_t n = gt.geometry().voxel_count();
    r.aq = aq(gt_tubes, pred_tubes);
    r.aq1 = aq1(gt_tubes, pred_tubes, n);
    r.stq = std::sqrt(r.miou_all * r.aq);
    r.stq1 = std::sqrt(r.miou_all * r.aq1);
    return r;
}

// Flat `key = value` map, keys sorted, for diffable CI output. Classes with
// undefined IoU are omitted.
inline std::string report_to_text(const MetricReport& r) {
    std::map<std::string, double> kv;
    kv["aq"] = r.aq;
    kv["aq1"] = r.aq1;
    kv["binary_iou"] = r.binary_iou;
    kv["miou_all"] = r.miou_all;
    kv["miou_stuff"] = r.miou_stuff;
    kv["miou_things"] = r.miou_things;
    kv["stq"] = r.stq;
    kv["stq1"] = r.stq1;
    for (std::size_t c = 0; c < r.per_class_iou.size(); ++c) {
        if (std::isnan(r.per_class_iou[c])) continue;
        char key[32];
        std::snprintf(key, sizeof key, "iou_class_%03zu", c);
        kv[key] = r.per_class_iou[c];
    }
    std::ostringstream os;
    for (const auto& [k, v] : kv) {
        char val[40];
        std::snprintf(val, sizeof val, "%.17g", v);
        os << k << " = " << val << "\n";
    }
    return os.str();
}

} // namespace ov4d
