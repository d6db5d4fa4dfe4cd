// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0
//
// Voxel grid geometry, label taxonomy, and the panoptic containers shared by
// every other component. Linear voxel order is row-major with x fastest:
// lin = (z * Y + y) * X + x.
#pragma once

#include "ov4d/core.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ov4d {

inline constexpr uint32_t kNoInstance = 0; // real instance IDs start at 1
inline constexpr std::size_t kMaxClasses = 65535;

struct GridGeometry {
    Vec3 origin;                 // meters, lower corner of voxel (0,0,0)
    Vec3 voxel_size;             // meters per axis, all components > 0
    std::array<int, 3> dims{};   // voxel counts, all >= 1

    std::size_t voxel_count() const {
        return std::size_t(dims[0]) * dims[1] * dims[2];
    }

    bool contains(const VoxelIndex& idx) const {
        return idx[0] >= 0 && idx[0] < dims[0] && idx[1] >= 0 && idx[1] < dims[1] &&
               idx[2] >= 0 && idx[2] < dims[2];
    }

    std::size_t linear(const VoxelIndex& idx) const {
        return (std::size_t(idx[2]) * dims[1] + idx[1]) * dims[0] + idx[0];
    }

    VoxelIndex unlinear(std::size_t lin) const {
        const int x = int(lin % dims[0]);
        const int y = int((lin / dims[0]) % dims[1]);
        const int z = int(lin / (std::size_t(dims[0]) * dims[1]));
        return {x, y, z};
    }

    bool operator==(const GridGeometry&) const = default;
};

inline void validate_geometry(const GridGeometry& g) {
    if (g.voxel_size.x <= 0 || g.voxel_size.y <= 0 || g.voxel_size.z <= 0)
        throw std::invalid_argument("grid: voxel_size components must be > 0");
    if (g.dims[0] < 1 || g.dims[1] < 1 || g.dims[2] < 1)
        throw std::invalid_argument("grid: dims must be >= 1");
}

// Center of the voxel at `idx`: origin + (idx + 0.5) * voxel_size.
inline Vec3 voxel_center(const GridGeometry& geom, const VoxelIndex& idx) {
    if (!geom.contains(idx))
        throw std::out_of_range("voxel_center: index outside grid dims");
    return geom.origin + Vec3{(idx[0] + 0.5) * geom.voxel_size.x,
                              (idx[1] + 0.5) * geom.voxel_size.y,
                              (idx[2] + 0.5) * geom.voxel_size.z};
}

// Inverse of voxel_center up to flooring; returns nullopt outside the grid.
inline std::optional<VoxelIndex> point_to_index(const GridGeometry& geom, const Vec3& p) {
    const Vec3 rel = p - geom.origin;
    const VoxelIndex idx = {int(std::floor(rel.x / geom.voxel_size.x)),
                            int(std::floor(rel.y / geom.voxel_size.y)),
                            int(std::floor(rel.z / geom.voxel_size.z))};
    if (!geom.contains(idx)) return std::nullopt;
    return idx;
}

struct LabelSpec {
    std::vector<std::string> classes;    // dense indices 0..C-1
    std::vector<bool> thing_flags;       // per class
    uint16_t free_class = 0;             // never a thing class
    std::optional<uint16_t> unknown_class;

    std::size_t num_classes() const { return classes.size(); }
    bool is_thing(uint16_t c) const { return c < thing_flags.size() && thing_flags[c]; }
    bool is_stuff(uint16_t c) const { return !is_thing(c) && c != free_class; }

    bool operator==(const LabelSpec&) const = default;
};

inline void validate_label_spec(const LabelSpec& s) {
    if (s.classes.empty() || s.classes.size() != s.thing_flags.size())
        throw std::invalid_argument("label spec: classes/thing_flags size mismatch");
    if (s.classes.size() > kMaxClasses)
        throw std::invalid_argument("label spec: too many classes");
    if (s.free_class >= s.classes.size() || s.thing_flags[s.free_class])
        throw std::invalid_argument("label spec: free_class must be a valid non-thing class");
    if (s.unknown_class && *s.unknown_class >= s.classes.size())
        throw std::invalid_argument("label spec: unknown_class out of range");
}

// One timestep of panoptic state. All three arrays are voxel-linear.
struct PanopticGrid {
    GridGeometry geometry;
    std::vector<uint16_t> semantics;  // class index per voxel
    std::vector<uint32_t> instances;  // 0 = no instance
    std::vector<uint8_t> visibility;  // camera mask, nonzero = visible

    static PanopticGrid empty(const GridGeometry& geom, uint16_t fill_class,
                              bool visible = true) {
        validate_geometry(geom);
        PanopticGrid g;
        g.geometry = geom;
        g.semantics.assign(geom.voxel_count(), fill_class);
        g.instances.assign(geom.voxel_count(), kNoInstance);
        g.visibility.assign(geom.voxel_count(), visible ? 1 : 0);
        return g;
    }

    bool operator==(const PanopticGrid&) const = default;
};

struct Violation {
    std::size_t voxel = 0;   // linear index
    std::string rule;
};

// Returns every invariant breach as data; an empty list means the grid is valid.
inline std::vector<Violation> validate(const PanopticGrid& grid, const LabelSpec& spec) {
    std::vector<Violation> out;
    const std::size_t n = grid.geometry.voxel_count();
    if (grid.semantics.size() != n || grid.instances.size() != n ||
        grid.visibility.size() != n) {
        out.push_back({0, "array sizes do not match geometry voxel count"});
        return out;
    }
    for (std::size_t v = 0; v < n; ++v) {
        const uint16_t c = grid.semantics[v];
        if (c >= spec.num_classes()) {
            out.push_back({v, "semantic class out of range"});
            continue;
        }
        if (grid.instances[v] != kNoInstance && !spec.is_thing(c))
            out.push_back({v, c == spec.free_class
                                  ? "instance ID on free-class voxel"
                                  : "instance ID on stuff-class voxel"});
    }
    return out;
}

// Ordered frames over one geometry and label taxonomy.
struct TrackedSequence {
    std::vector<PanopticGrid> frames;
    std::vector<int64_t> timestamps;   // strictly increasing
    LabelSpec labels;

    std::size_t num_frames() const { return frames.size(); }
    const GridGeometry& geometry() const { return frames.at(0).geometry; }

    bool operator==(const TrackedSequence&) const = default;
};

inline void validate_sequence(const TrackedSequence& seq) {
    if (seq.frames.size() != seq.timestamps.size())
        throw std::invalid_argument("sequence: frames/timestamps size mismatch");
    validate_label_spec(seq.labels);
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        if (seq.frames[i].geometry != seq.frames[0].geometry)
            throw ShapeError("sequence: frames do not share one geometry");
        if (i > 0 && seq.timestamps[i] <= seq.timestamps[i - 1])
            throw std::invalid_argument("sequence: timestamps not strictly increasing");
    }
}

} // namespace ov4d
