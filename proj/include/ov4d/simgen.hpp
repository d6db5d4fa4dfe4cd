// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic 4D scenes: boxes moving over stuff regions on a
// desk-scale grid, plus targeted corruptions for metric behavior tests.
#pragma once

#include "ov4d/grid.hpp"
#include "ov4d/labelgen.hpp"
#include "ov4d/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ov4d {

struct SceneObject {
    uint16_t class_id = 0;          // a thing class
    Vec3 size;                      // box extents, meters
    struct Pose {
        int64_t frame = 0;
        Vec3 center;
        double yaw = 0.0;
    };
    std::vector<Pose> trajectory;   // one pose per frame the object exists in
};

struct StuffRegion {
    uint16_t class_id = 0;          // a stuff class
    Vec3 min, max;                  // axis-aligned, meters
};

// Simple visibility carve: voxels are visible iff the horizontal bearing from
// `apex` lies within +-half_angle of `azimuth` (radians).
struct Frustum {
    Vec3 apex;
    double azimuth = 0.0;
    double half_angle = 0.0;
};

struct SceneScript {
    GridGeometry geometry;
    LabelSpec labels;
    int64_t frames = 1;
    uint64_t seed = 0;
    std::vector<SceneObject> objects;
    std::vector<StuffRegion> stuff;
    std::optional<Frustum> frustum;
};

struct RenderResult {
    TrackedSequence sequence;
    std::vector<BoxAnnotation> boxes;
};

// Renders the script: stuff regions first, then objects in script order (a
// later object wins overlaps), everything else free. Instance IDs come from
// assign_instances over the generated boxes, so the ground truth is
// self-consistent with the label generator. Object k gets instance ID k+1.
inline RenderResult render(const SceneScript& script) {
    validate_geometry(script.geometry);
    validate_label_spec(script.labels);
    if (script.frames < 1) throw std::invalid_argument("render: frames must be >= 1");

    RenderResult out;
    out.sequence.labels = script.labels;
    const std::size_t n = script.geometry.voxel_count();

    for (int64_t f = 0; f < script.frames; ++f) {
        PanopticGrid g = PanopticGrid::empty(script.geometry, script.labels.free_class);

        for (const auto& region : script.stuff) {
            for (std::size_t v = 0; v < n; ++v) {
                const Vec3 c = voxel_center(script.geometry, script.geometry.unlinear(v));
                if (c.x >= region.min.x && c.x <= region.max.x && c.y >= region.min.y &&
                    c.y <= region.max.y && c.z >= region.min.z && c.z <= region.max.z)
                    g.semantics[v] = region.class_id;
            }
        }

        for (std::size_t k = 0; k < script.objects.size(); ++k) {
            const auto& obj = script.objects[k];
            const auto pose = std::find_if(
                obj.trajectory.begin(), obj.trajectory.end(),
                [&](const SceneObject::Pose& p) { return p.frame == f; });
            if (pose == obj.trajectory.end()) continue;
            BoxAnnotation box;
            box.center = pose->center;
            box.size = obj.size;
            box.yaw = pose->yaw;
            box.class_id = obj.class_id;
            box.instance_id = uint32_t(k + 1);
            box.timestep = f;
            out.boxes.push_back(box);
            for (std::size_t v = 0; v < n; ++v) {
                const Vec3 c = voxel_center(script.geometry, script.geometry.unlinear(v));
                if (point_in_box(c, box)) g.semantics[v] = obj.class_id;
            }
        }

        if (script.frustum) {
            constexpr double pi = 3.14159265358979323846;
            const auto& fr = *script.frustum;
            for (std::size_t v = 0; v < n; ++v) {
                const Vec3 c = voxel_center(script.geometry, script.geometry.unlinear(v));
                const double bearing = std::atan2(c.y - fr.apex.y, c.x - fr.apex.x);
                double delta = std::fmod(bearing - fr.azimuth, 2 * pi);
                if (delta > pi) delta -= 2 * pi;
                if (delta < -pi) delta += 2 * pi;
                g.visibility[v] = std::abs(delta) <= fr.half_angle ? 1 : 0;
            }
        }

        out.sequence.frames.push_back(std::move(g));
        out.sequence.timestamps.push_back(f);
    }

    out.sequence = assign_instances(out.sequence, out.boxes);
    return out;
}

// ------------------------------------------------------------- corruptions

// id_switch: swaps instance IDs a and b from `frame` onward.
// drop_frame: erases one instance in one frame (voxels become free).
// jitter_mask: removes boundary voxels of an instance with probability prob.
// spawn_fp: adds false-positive voxels in known-free visible space; by
//           default they extend an existing instance (fresh=true spawns a new
//           instance ID instead).
struct CorruptOp {
    enum class Kind { IdSwitch, DropFrame, JitterMask, SpawnFp } kind;
    std::optional<uint32_t> id_a;      // id_switch / drop_frame / jitter / spawn
    std::optional<uint32_t> id_b;      // id_switch only
    std::optional<int64_t> frame;      // op-specific; default per op
    double prob = 0.5;                 // jitter_mask
    int count = 1;                     // spawn_fp voxels per affected frame
    bool fresh = false;                // spawn_fp: new instance instead of extending
};

inline CorruptOp::Kind corrupt_kind_from_name(const std::string& name) {
    if (name == "id_switch") return CorruptOp::Kind::IdSwitch;
    if (name == "drop_frame") return CorruptOp::Kind::DropFrame;
    if (name == "jitter_mask") return CorruptOp::Kind::JitterMask;
    if (name == "spawn_fp") return CorruptOp::Kind::SpawnFp;
    throw std::invalid_argument("corrupt: unknown op '" + name + "'");
}

namespace detail {

// Total voxel count per instance over all frames, ascending ID.
inline std::map<uint32_t, int64_t> instance_volumes(const TrackedSequence& seq) {
    std::map<uint32_t, int64_t> vol;
    for (const auto& g : seq.frames)
        for (const uint32_t id : g.instances)
            if (id != kNoInstance) ++vol[id];
    return vol;
}

inline uint32_t largest_instance(const TrackedSequence& seq) {
    uint32_t best = kNoInstance;
    int64_t best_vol = -1;
    for (const auto& [id, vol] : instance_volumes(seq))
        if (vol > best_vol) {
            best = id;
            best_vol = vol;
        }
    return best;
}

inline bool has_free_neighbor(const PanopticGrid& g, const LabelSpec& spec,
                              std::size_t v) {
    const auto idx = g.geometry.unlinear(v);
    for (int a = 0; a < 3; ++a)
        for (int d : {-1, 1}) {
            VoxelIndex nb = idx;
            nb[a] += d;
            if (!g.geometry.contains(nb)) continue;
            if (g.semantics[g.geometry.linear(nb)] == spec.free_class) return true;
        }
    return false;
}

} // namespace detail

// Applies the ops in order, deterministically under `seed`. An empty op list
// returns the sequence unchanged.
inline TrackedSequence corrupt(const TrackedSequence& seq,
                               const std::vector<CorruptOp>& ops, uint64_t seed) {
    TrackedSequence out = seq;
    CounterRng rng(seed);
    const std::size_t n = out.frames.empty() ? 0 : out.geometry().voxel_count();

    for (const auto& op : ops) {
        switch (op.kind) {
            case CorruptOp::Kind::IdSwitch: {
                uint32_t a = op.id_a.value_or(kNoInstance);
                uint32_t b = op.id_b.value_or(kNoInstance);
                if (a == kNoInstance || b == kNoInstance) {
                    // Default: the two most voluminous instances.
                    std::vector<std::pair<int64_t, uint32_t>> ranked;
                    for (const auto& [id, vol] : detail::instance_volumes(out))
                        ranked.push_back({vol, id});
                    std::sort(ranked.rbegin(), ranked.rend());
                    if (ranked.size() < 2)
                        throw std::invalid_argument("id_switch: needs two instances");
                    a = ranked[0].second;
                    b = ranked[1].second;
                }
                const int64_t from = op.frame.value_or(int64_t(out.num_frames()) / 2);
                for (std::size_t f = 0; f < out.num_frames(); ++f) {
                    if (int64_t(f) < from) continue;
                    for (auto& id : out.frames[f].instances) {
                        if (id == a) id = b;
                        else if (id == b) id = a;
                    }
                }
                break;
            }
            case CorruptOp::Kind::DropFrame: {
                const uint32_t id = op.id_a.value_or(detail::largest_instance(out));
                const int64_t frame = op.frame.value_or(int64_t(out.num_frames()) / 2);
                if (frame < 0 || frame >= int64_t(out.num_frames()))
                    throw std::invalid_argument("drop_frame: frame out of range");
                PanopticGrid& g = out.frames[frame];
                for (std::size_t v = 0; v < n; ++v)
                    if (g.instances[v] == id) {
                        g.semantics[v] = out.labels.free_class;
                        g.instances[v] = kNoInstance;
                    }
                break;
            }
            case CorruptOp::Kind::JitterMask: {
                const uint32_t id = op.id_a.value_or(detail::largest_instance(out));
                for (auto& g : out.frames) {
                    std::vector<std::size_t> boundary;
                    for (std::size_t v = 0; v < n; ++v)
                        if (g.instances[v] == id &&
                            detail::has_free_neighbor(g, out.labels, v))
                            boundary.push_back(v);
                    for (std::size_t v : boundary)
                        if (rng.next_double() < op.prob) {
                            g.semantics[v] = out.labels.free_class;
                            g.instances[v] = kNoInstance;
                        }
                }
                break;
            }
            case CorruptOp::Kind::SpawnFp: {
                uint32_t id = op.id_a.value_or(detail::largest_instance(out));
                uint16_t cls = 0;
                uint32_t fresh_id = 0;
                if (op.fresh) {
                    fresh_id = 1;
                    for (const auto& [iid, vol] : detail::instance_volumes(out))
                        fresh_id = std::max(fresh_id, iid + 1);
                }
                for (std::size_t f = 0; f < out.num_frames(); ++f) {
                    if (op.frame && int64_t(f) != *op.frame) continue;
                    PanopticGrid& g = out.frames[f];
                    // Class and presence of the host instance in this frame.
                    bool present = false;
                    for (std::size_t v = 0; v < n && !present; ++v)
                        if (g.instances[v] == id) {
                            cls = g.semantics[v];
                            present = true;
                        }
                    if (!present && !op.fresh) continue;
                    if (!present && op.fresh) {
                        // Any thing class for the fresh instance.
                        for (uint16_t c = 0; c < out.labels.num_classes(); ++c)
                            if (out.labels.is_thing(c)) {
                                cls = c;
                                break;
                            }
                    }
                    std::vector<std::size_t> free_visible;
                    for (std::size_t v = 0; v < n; ++v)
                        if (g.visibility[v] && g.semantics[v] == out.labels.free_class)
                            free_visible.push_back(v);
                    for (int k = 0; k < op.count && !free_visible.empty(); ++k) {
                        const std::size_t pick = rng.next_below(free_visible.size());
                        const std::size_t v = free_visible[pick];
                        free_visible.erase(free_visible.begin() + pick);
                        g.semantics[v] = cls;
                        g.instances[v] = op.fresh ? fresh_id : id;
                    }
                }
                break;
            }
        }
    }
    return out;
}

} // namespace ov4d
