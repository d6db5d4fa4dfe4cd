// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0
//
// Inference-time conversion of raw query outputs into panoptic grids. Queries
// are scored by their maximum class score s_q; per voxel the dominant query
// maximizes s_q * m_{q,x}. Unified mode takes that argmax jointly over all
// surviving queries; split mode computes stuff and instance winners
// independently and lets the instance winner override the stuff one.
#pragma once

#include "ov4d/grid.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace ov4d {

enum class QueryKind : uint8_t { Instance = 0, Stuff = 1 };

// Raw decoder output for one frame: per-query class scores and per-voxel
// mask scores. Instance queries carry a persistent track ID.
struct QueryOutput {
    std::size_t num_classes = 0;
    std::array<int, 3> dims{};             // target geometry
    std::vector<double> class_scores;      // Q x C
    std::vector<QueryKind> kinds;          // per query
    std::vector<uint32_t> track_ids;       // per query, 0 for stuff queries
    std::vector<double> mask_scores;       // Q x (X*Y*Z), each in [0, 1]

    std::size_t num_queries() const { return kinds.size(); }
    std::size_t voxel_count() const {
        return std::size_t(dims[0]) * dims[1] * dims[2];
    }
    const double* mask(std::size_t q) const {
        return mask_scores.data() + q * voxel_count();
    }
    const double* scores(std::size_t q) const {
        return class_scores.data() + q * num_classes;
    }
};

inline void validate_query_output(const QueryOutput& out) {
    const std::size_t q = out.num_queries();
    if (out.class_scores.size() != q * out.num_classes ||
        out.track_ids.size() != q || out.mask_scores.size() != q * out.voxel_count())
        throw ShapeError("query output: array sizes inconsistent");
    for (std::size_t i = 0; i < q; ++i)
        if (out.kinds[i] == QueryKind::Stuff && out.track_ids[i] != 0)
            throw std::invalid_argument("query output: stuff query carries a track id");
    for (double s : out.class_scores)
        if (!(s >= 0.0 && s <= 1.0))
            throw std::invalid_argument("query output: class score outside [0, 1]");
    for (double m : out.mask_scores)
        if (!(m >= 0.0 && m <= 1.0))
            throw std::invalid_argument("query output: mask score outside [0, 1]");
}

// s_q: the maximum class score of query q.
inline double query_score(const QueryOutput& out, std::size_t q) {
    double best = 0.0;
    for (std::size_t c = 0; c < out.num_classes; ++c)
        best = std::max(best, out.scores(q)[c]);
    return best;
}

enum class AggregateMode { Unified, Split };

struct AggregateConfig {
    double threshold = 0.3;       // survivors need s_q >= threshold
    double mask_threshold = 0.5;  // a winner claims a voxel iff s_q*m >= 0.5*this
    AggregateMode mode = AggregateMode::Split;
};

// Argmax class of a query restricted to its kind: instance queries pick among
// thing classes, stuff queries among stuff classes; free is never produced.
// Ties and the no-candidate case fall back to the lowest eligible index.
namespace detail {
inline uint16_t query_class(const QueryOutput& out, std::size_t q, const LabelSpec& spec) {
    const bool thing = out.kinds[q] == QueryKind::Instance;
    double best = -1.0;
    uint16_t best_c = spec.free_class;
    for (std::size_t c = 0; c < out.num_classes; ++c) {
        if (c == spec.free_class) continue;
        if (spec.is_thing(uint16_t(c)) != thing) continue;
        if (out.scores(q)[c] > best) {
            best = out.scores(q)[c];
            best_c = uint16_t(c);
        }
    }
    return best_c;
}
} // namespace detail

// Converts one frame of query outputs into a panoptic grid.
inline PanopticGrid aggregate(const QueryOutput& out, const GridGeometry& geom,
                              const LabelSpec& spec, const AggregateConfig& cfg = {}) {
    validate_query_output(out);
    if (out.dims != geom.dims) throw ShapeError("aggregate: geometry dims mismatch");
    if (out.num_classes != spec.num_classes())
        throw ShapeError("aggregate: class count mismatch");
    if (cfg.threshold < 0.0 || cfg.threshold > 1.0)
        throw std::invalid_argument("aggregate: threshold must be in [0, 1]");

    PanopticGrid grid = PanopticGrid::empty(geom, spec.free_class);
    const std::size_t n = geom.voxel_count();

    // Filter inactive queries once.
    std::vector<std::size_t> survivors;
    std::vector<double> s;
    for (std::size_t q = 0; q < out.num_queries(); ++q) {
        const double sq = query_score(out, q);
        if (sq >= cfg.threshold) {
            survivors.push_back(q);
            s.push_back(sq);
        }
    }

    const double voxel_floor = 0.5 * cfg.mask_threshold;
    for (std::size_t v = 0; v < n; ++v) {
        std::size_t best_inst = SIZE_MAX, best_stuff = SIZE_MAX, best_any = SIZE_MAX;
        double v_inst = -1.0, v_stuff = -1.0, v_any = -1.0;
        for (std::size_t i = 0; i < survivors.size(); ++i) {
            const std::size_t q = survivors[i];
            const double val = s[i] * out.mask(q)[v];
            if (val > v_any) {
                v_any = val;
                best_any = q;
            }
            if (out.kinds[q] == QueryKind::Instance) {
                if (val > v_inst) {
                    v_inst = val;
                    best_inst = q;
                }
            } else if (val > v_stuff) {
                v_stuff = val;
                best_stuff = q;
            }
        }

        std::size_t winner = SIZE_MAX;
        if (cfg.mode == AggregateMode::Unified) {
            if (best_any != SIZE_MAX && v_any >= voxel_floor) winner = best_any;
        } else {
            if (best_stuff != SIZE_MAX && v_stuff >= voxel_floor) winner = best_stuff;
            if (best_inst != SIZE_MAX && v_inst >= voxel_floor) winner = best_inst;
        }
        if (winner == SIZE_MAX) continue;

        // A taxonomy without classes of the winner's kind leaves the voxel free.
        const uint16_t cls = detail::query_class(out, winner, spec);
        if (cls == spec.free_class) continue;
        grid.semantics[v] = cls;
        grid.instances[v] =
            out.kinds[winner] == QueryKind::Instance ? out.track_ids[winner] : kNoInstance;
    }
    return grid;
}

// Aggregates each frame, then relabels instance IDs so no ID repeats across
// frames (the per-frame baseline's input convention).
inline TrackedSequence per_frame_ids(const std::vector<QueryOutput>& frames,
                                     const GridGeometry& geom, const LabelSpec& spec,
                                     const AggregateConfig& cfg = {}) {
    TrackedSequence seq;
    seq.labels = spec;
    uint32_t next_id = 1;
    for (std::size_t f = 0; f < frames.size(); ++f) {
        PanopticGrid g = aggregate(frames[f], geom, spec, cfg);
        std::map<uint32_t, uint32_t> remap;
        for (auto& id : g.instances) {
            if (id == kNoInstance) continue;
            const auto [it, inserted] = remap.emplace(id, next_id);
            if (inserted) ++next_id;
            id = it->second;
        }
        seq.frames.push_back(std::move(g));
        seq.timestamps.push_back(int64_t(f));
    }
    return seq;
}

} // namespace ov4d
