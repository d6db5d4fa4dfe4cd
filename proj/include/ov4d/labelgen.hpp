// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0
//
// Ground-truth instance label generation: thing-class voxels take the ID of
// the intersecting same-class box; voxels intersected by none or several
// boxes take the closest box's ID (center-to-center distance).
#pragma once

#include "ov4d/grid.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace ov4d {

struct BoxAnnotation {
    Vec3 center;            // meters
    Vec3 size;              // full extents (l, w, h), meters
    double yaw = 0.0;       // radians about z
    uint16_t class_id = 0;  // a thing class
    uint32_t instance_id = 0;
    int64_t timestep = 0;
};

// True iff p, rotated by -yaw about the box center, lies within the
// half-size extents on each axis. `margin` inflates each half-extent.
inline bool point_in_box(const Vec3& p, const BoxAnnotation& box, double margin = 0.0) {
    const Vec3 d = p - box.center;
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const double lx = c * d.x + s * d.y;
    const double ly = -s * d.x + c * d.y;
    return std::abs(lx) <= 0.5 * box.size.x + margin &&
           std::abs(ly) <= 0.5 * box.size.y + margin &&
           std::abs(d.z) <= 0.5 * box.size.z + margin;
}

struct AssignConfig {
    double box_margin = 0.0;  // meters added to each half-extent
    double max_distance = std::numeric_limits<double>::infinity(); // nearest-box cap
};

struct AssignStats {
    int64_t assigned = 0;
    int64_t unmatched = 0; // thing voxels left at instance 0 (no same-class box)
};

// Fills instance IDs of every thing-class voxel from box annotations. Frames
// are matched to boxes via timestamps. Existing instance IDs are recomputed,
// which makes the operation idempotent; stuff and free voxels are untouched.
inline TrackedSequence assign_instances(const TrackedSequence& semantic_seq,
                                        const std::vector<BoxAnnotation>& boxes,
                                        const AssignConfig& cfg = {},
                                        AssignStats* stats = nullptr) {
    validate_sequence(semantic_seq);
    TrackedSequence out = semantic_seq;
    const GridGeometry& geom = out.geometry();
    const std::size_t n = geom.voxel_count();
    AssignStats local;

    for (std::size_t f = 0; f < out.num_frames(); ++f) {
        PanopticGrid& g = out.frames[f];
        std::vector<const BoxAnnotation*> frame_boxes;
        for (const auto& b : boxes)
            if (b.timestep == out.timestamps[f]) frame_boxes.push_back(&b);

        for (std::size_t v = 0; v < n; ++v) {
            if (!out.labels.is_thing(g.semantics[v])) continue;
            const Vec3 center = voxel_center(geom, geom.unlinear(v));

            const BoxAnnotation* best = nullptr;
            double best_dist = std::numeric_limits<double>::infinity();
            bool best_inside = false;
            for (const BoxAnnotation* b : frame_boxes) {
                if (b->class_id != g.semantics[v]) continue;
                const bool inside = point_in_box(center, *b, cfg.box_margin);
                const double dist = (center - b->center).norm();
                // Intersecting boxes always beat non-intersecting ones.
                if (inside != best_inside ? inside : dist < best_dist) {
                    best = b;
                    best_dist = dist;
                    best_inside = inside;
                }
            }
            if (best && (best_inside || best_dist <= cfg.max_distance)) {
                g.instances[v] = best->instance_id;
                ++local.assigned;
            } else {
                g.instances[v] = kNoInstance;
                ++local.unmatched;
            }
        }
    }
    if (stats) *stats = local;
    return out;
}

} // namespace ov4d
