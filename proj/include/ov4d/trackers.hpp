// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0
//
// Classical tracking-association baselines over per-frame instance
// predictions: per-frame fresh IDs, voxel-IoU matching, cosine-similarity
// matching, and box tracking with a constant-velocity Kalman filter. All of
// them rewrite instance IDs only; per-frame masks are never modified.
#pragma once

#include "ov4d/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

namespace ov4d {

inline constexpr double kForbidden = std::numeric_limits<double>::infinity();

// Minimum-cost one-to-one assignment (Jonker-Volgenant shortest augmenting
// path, O(n^3)). Infinite entries are forbidden pairs; the result has maximum
// feasible cardinality and minimum total cost among those. Pairs are
// (row, column).
inline std::vector<std::pair<std::size_t, std::size_t>> hungarian(
    const std::vector<std::vector<double>>& cost) {
    const std::size_t rows = cost.size();
    const std::size_t cols = rows ? cost[0].size() : 0;
    if (rows == 0 || cols == 0) return {};
    for (const auto& row : cost)
        if (row.size() != cols) throw ShapeError("hungarian: ragged cost matrix");

    // Pad to square; shift finite costs to be nonnegative; forbidden/dummy
    // entries get a sentinel large enough never to beat a finite assignment.
    const std::size_t n = std::max(rows, cols);
    double lo = 0.0, hi = 0.0;
    for (const auto& row : cost)
        for (double c : row)
            if (std::isfinite(c)) {
                lo = std::min(lo, c);
                hi = std::max(hi, c);
            }
    const double big = (hi - lo + 1.0) * double(n + 1);
    std::vector<std::vector<double>> a(n, std::vector<double>(n, big));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            if (std::isfinite(cost[r][c])) a[r][c] = cost[r][c] - lo;

    // JV with 1-based potentials; row_of[c] = row assigned to column c.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> row_of(n + 1, 0);
    for (std::size_t r = 1; r <= n; ++r) {
        row_of[0] = r;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
        std::vector<std::size_t> prev(n + 1, 0);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = row_of[j0];
            double delta = std::numeric_limits<double>::infinity();
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    prev[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (row_of[j0] != 0);
        for (; j0 != 0;) {
            const std::size_t j1 = prev[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
        }
    }

    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t c = 1; c <= n; ++c) {
        const std::size_t r = row_of[c];
        if (r == 0 || r > rows || c > cols) continue;
        if (!std::isfinite(cost[r - 1][c - 1])) continue; // forbidden
        out.push_back({r - 1, c - 1});
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Axis-aligned box, min/max corners in meters.
struct Aabb {
    Vec3 min, max;

    double volume() const {
        return std::max(0.0, max.x - min.x) * std::max(0.0, max.y - min.y) *
               std::max(0.0, max.z - min.z);
    }
};

inline double aabb_iou(const Aabb& a, const Aabb& b) {
    const Aabb inter = {{std::max(a.min.x, b.min.x), std::max(a.min.y, b.min.y),
                         std::max(a.min.z, b.min.z)},
                        {std::min(a.max.x, b.max.x), std::min(a.max.y, b.max.y),
                         std::min(a.max.z, b.max.z)}};
    const double vi = inter.volume();
    const double vu = a.volume() + b.volume() - vi;
    return vu > 0.0 ? vi / vu : 0.0;
}

// Tight bounding box of the voxel centers, padded by half a voxel per side.
inline Aabb box_from_instance(const std::vector<std::size_t>& voxels,
                              const GridGeometry& geom) {
    if (voxels.empty()) throw std::invalid_argument("box_from_instance: empty voxel set");
    Vec3 mn = {std::numeric_limits<double>::infinity(),
               std::numeric_limits<double>::infinity(),
               std::numeric_limits<double>::infinity()};
    Vec3 mx = mn * -1.0;
    for (std::size_t v : voxels) {
        const Vec3 c = voxel_center(geom, geom.unlinear(v));
        for (int a = 0; a < 3; ++a) {
            mn[a] = std::min(mn[a], c[a]);
            mx[a] = std::max(mx[a], c[a]);
        }
    }
    const Vec3 half = geom.voxel_size * 0.5;
    return {mn - half, mx + half};
}

// One frame's instance observations.
struct FrameInstances {
    struct Instance {
        uint32_t id = 0;
        uint16_t class_id = 0;
        std::vector<std::size_t> voxels;          // linear indices, sorted
        std::optional<std::vector<double>> embedding; // mean feature, for cosine
        Aabb box;
    };
    std::vector<Instance> instances;
};

// Extracts per-instance observations from one grid. `features` may supply a
// voxel-linear feature field whose per-instance mean becomes the embedding.
inline FrameInstances frame_instances(const PanopticGrid& grid, const LabelSpec& spec,
                                      const std::vector<double>* features = nullptr,
                                      std::size_t feature_dim = 0) {
    std::map<uint32_t, FrameInstances::Instance> by_id;
    const std::size_t n = grid.geometry.voxel_count();
    for (std::size_t v = 0; v < n; ++v) {
        const uint32_t id = grid.instances[v];
        if (id == kNoInstance || !spec.is_thing(grid.semantics[v])) continue;
        auto& inst = by_id[id];
        inst.id = id;
        inst.class_id = grid.semantics[v];
        inst.voxels.push_back(v);
    }
    FrameInstances out;
    for (auto& [id, inst] : by_id) {
        inst.box = box_from_instance(inst.voxels, grid.geometry);
        if (features && feature_dim > 0) {
            std::vector<double> mean(feature_dim, 0.0);
            for (std::size_t v : inst.voxels)
                for (std::size_t c = 0; c < feature_dim; ++c)
                    mean[c] += (*features)[v * feature_dim + c];
            for (auto& m : mean) m /= double(inst.voxels.size());
            inst.embedding = std::move(mean);
        }
        out.instances.push_back(std::move(inst));
    }
    return out;
}

// Maps current-frame instance IDs to output track IDs.
using IdMapping = std::map<uint32_t, uint32_t>;

inline double voxel_iou(const std::vector<std::size_t>& a,
                        const std::vector<std::size_t>& b) {
    std::size_t inter = 0, ia = 0, ib = 0;
    while (ia < a.size() && ib < b.size()) {
        if (a[ia] < b[ib]) ++ia;
        else if (a[ia] > b[ib]) ++ib;
        else { ++inter; ++ia; ++ib; }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return uni ? double(inter) / double(uni) : 0.0;
}

// Hungarian on 1 - voxel IoU; pairs below min_iou are forbidden. `prev` carries
// the already-assigned output IDs; unmatched current instances get fresh IDs
// from next_id.
inline IdMapping iou_match(const FrameInstances& prev, const FrameInstances& cur,
                           double min_iou, uint32_t& next_id) {
    std::vector<std::vector<double>> cost(
        prev.instances.size(), std::vector<double>(cur.instances.size(), kForbidden));
    for (std::size_t r = 0; r < prev.instances.size(); ++r)
        for (std::size_t c = 0; c < cur.instances.size(); ++c) {
            const double iou = voxel_iou(prev.instances[r].voxels, cur.instances[c].voxels);
            if (iou >= min_iou && iou > 0.0) cost[r][c] = 1.0 - iou;
        }
    IdMapping map;
    for (const auto& [r, c] : hungarian(cost))
        map[cur.instances[c].id] = prev.instances[r].id;
    for (const auto& inst : cur.instances)
        if (!map.count(inst.id)) map[inst.id] = next_id++;
    return map;
}

inline double cosine_similarity(const std::vector<double>& a,
                                const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double d = std::sqrt(na) * std::sqrt(nb);
    return d > 0.0 ? dot / d : 0.0;
}

// Hungarian on 1 - cosine similarity; class-mismatched pairs and pairs below
// min_sim are forbidden. Embeddings are required on both sides.
inline IdMapping cosine_match(const FrameInstances& prev, const FrameInstances& cur,
                              double min_sim, uint32_t& next_id) {
    for (const auto& list : {&prev, &cur})
        for (const auto& inst : list->instances)
            if (!inst.embedding)
                throw std::invalid_argument("cosine_match: missing embeddings");
    std::vector<std::vector<double>> cost(
        prev.instances.size(), std::vector<double>(cur.instances.size(), kForbidden));
    for (std::size_t r = 0; r < prev.instances.size(); ++r)
        for (std::size_t c = 0; c < cur.instances.size(); ++c) {
            if (prev.instances[r].class_id != cur.instances[c].class_id) continue;
            const double sim = cosine_similarity(*prev.instances[r].embedding,
                                                 *cur.instances[c].embedding);
            if (sim >= min_sim) cost[r][c] = 1.0 - sim;
        }
    IdMapping map;
    for (const auto& [r, c] : hungarian(cost))
        map[cur.instances[c].id] = prev.instances[r].id;
    for (const auto& inst : cur.instances)
        if (!map.count(inst.id)) map[inst.id] = next_id++;
    return map;
}

// ------------------------------------------------------------ Kalman tracker

struct KalmanParams {
    double process_pos = 0.1;   // m^2 per frame
    double process_size = 0.05;
    double process_vel = 0.5;   // m^2 / frame^2
    double measure_pos = 0.1;
    double measure_size = 0.05;
    double init_pos = 0.5;
    double init_size = 0.5;
    double init_vel = 2.0;
};

struct TrackerParams {
    double min_iou = 0.25;
    double min_sim = 0.5;
    int max_misses = 2;
    KalmanParams kalman;
};

namespace detail {

// Constant-velocity state per axis pair (position, velocity) plus a static
// size filter. With diagonal noise and the block-diagonal transition, each
// (pos_a, vel_a) pair and each size_a evolve independently, so the filter
// runs as three 2x2 blocks and three scalars.
struct KalmanTrack {
    uint32_t id = 0;
    Vec3 pos, vel, size;
    // 2x2 covariance per axis for (pos, vel): [p00 p01; p01 p11]
    std::array<std::array<double, 3>, 3> pcov{};
    Vec3 scov; // size variance per axis
    int age = 0;
    int misses = 0;

    static KalmanTrack spawn(uint32_t id, const Aabb& box, const KalmanParams& kp) {
        KalmanTrack t;
        t.id = id;
        t.pos = (box.min + box.max) * 0.5;
        t.size = box.max - box.min;
        t.vel = {0, 0, 0};
        for (int a = 0; a < 3; ++a) t.pcov[a] = {kp.init_pos, 0.0, kp.init_vel};
        t.scov = {kp.init_size, kp.init_size, kp.init_size};
        return t;
    }

    void predict(const KalmanParams& kp) {
        for (int a = 0; a < 3; ++a) {
            pos[a] += vel[a];
            auto& c = pcov[a]; // [p, q; q, r] -> F C F^T + Q with F = [1 1; 0 1]
            const double p = c[0], q = c[1], r = c[2];
            c[0] = p + 2 * q + r + kp.process_pos;
            c[1] = q + r;
            c[2] = r + kp.process_vel;
            scov[a] += kp.process_size;
        }
    }

    void update(const Aabb& box, const KalmanParams& kp) {
        const Vec3 mpos = (box.min + box.max) * 0.5;
        const Vec3 msize = box.max - box.min;
        for (int a = 0; a < 3; ++a) {
            auto& c = pcov[a];
            const double s = c[0] + kp.measure_pos;
            const double k0 = c[0] / s, k1 = c[1] / s;
            const double innov = mpos[a] - pos[a];
            pos[a] += k0 * innov;
            vel[a] += k1 * innov;
            const double p = c[0], q = c[1], r = c[2];
            c[0] = (1 - k0) * p;
            c[1] = (1 - k0) * q;
            c[2] = r - k1 * q;

            const double ss = scov[a] + kp.measure_size;
            const double ks = scov[a] / ss;
            size[a] += ks * (msize[a] - size[a]);
            scov[a] *= 1 - ks;
        }
        misses = 0;
        ++age;
    }

    Aabb predicted_box() const {
        const Vec3 half = size * 0.5;
        return {pos - half, pos + half};
    }
};

} // namespace detail

// Snapshot of a live track, exposed for diagnostics and tests.
struct TrackSnapshot {
    uint32_t id = 0;
    Vec3 position, velocity, size;
    int age = 0;
    int misses = 0;
};

// AB3DMOT-style box tracking: per frame predict, associate greedily by
// descending box IoU above min_iou, update matched tracks, spawn tracks for
// unmatched detections, retire tracks after max_misses consecutive misses.
// Returns the ID mapping per frame; `final_tracks` receives the tracks still
// alive after the last frame.
inline std::vector<IdMapping> kalman_track(const std::vector<FrameInstances>& frames,
                                           const TrackerParams& params = {},
                                           std::vector<TrackSnapshot>* final_tracks =
                                               nullptr) {
    std::vector<detail::KalmanTrack> tracks;
    uint32_t next_id = 1;
    std::vector<IdMapping> out;

    for (const auto& frame : frames) {
        for (auto& t : tracks) t.predict(params.kalman);

        // Greedy association by descending IoU.
        struct Cand {
            double iou;
            std::size_t track, det;
        };
        std::vector<Cand> cands;
        for (std::size_t ti = 0; ti < tracks.size(); ++ti)
            for (std::size_t di = 0; di < frame.instances.size(); ++di) {
                const double iou =
                    aabb_iou(tracks[ti].predicted_box(), frame.instances[di].box);
                if (iou >= params.min_iou) cands.push_back({iou, ti, di});
            }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.iou != b.iou) return a.iou > b.iou;
            return std::tie(a.track, a.det) < std::tie(b.track, b.det);
        });

        std::vector<bool> track_used(tracks.size(), false);
        std::vector<bool> det_used(frame.instances.size(), false);
        IdMapping map;
        for (const auto& c : cands) {
            if (track_used[c.track] || det_used[c.det]) continue;
            track_used[c.track] = true;
            det_used[c.det] = true;
            tracks[c.track].update(frame.instances[c.det].box, params.kalman);
            map[frame.instances[c.det].id] = tracks[c.track].id;
        }
        for (std::size_t di = 0; di < frame.instances.size(); ++di) {
            if (det_used[di]) continue;
            auto t = detail::KalmanTrack::spawn(next_id++, frame.instances[di].box,
                                                params.kalman);
            map[frame.instances[di].id] = t.id;
            tracks.push_back(std::move(t));
            track_used.push_back(true);
        }
        for (std::size_t ti = 0; ti < tracks.size(); ++ti)
            if (!track_used[ti]) ++tracks[ti].misses;
        std::erase_if(tracks, [&](const detail::KalmanTrack& t) {
            return t.misses > params.max_misses;
        });

        out.push_back(std::move(map));
    }
    if (final_tracks) {
        final_tracks->clear();
        for (const auto& t : tracks)
            final_tracks->push_back({t.id, t.pos, t.vel, t.size, t.age, t.misses});
    }
    return out;
}

// ---------------------------------------------------------------- pipelines

enum class TrackerMethod { PerFrame, Iou, Cosine, Ab3dmot };

// Applies an association baseline to a sequence, rewriting instance IDs only.
// `features` optionally supplies per-frame voxel-linear feature fields for
// cosine matching.
inline TrackedSequence apply_tracker(const TrackedSequence& seq, TrackerMethod method,
                                     const TrackerParams& params = {},
                                     const std::vector<std::vector<double>>* features =
                                         nullptr,
                                     std::size_t feature_dim = 0) {
    validate_sequence(seq);
    if (method == TrackerMethod::Cosine &&
        (!features || features->size() != seq.num_frames()))
        throw std::invalid_argument("tracker: cosine matching needs per-frame features");

    std::vector<FrameInstances> frames;
    for (std::size_t f = 0; f < seq.num_frames(); ++f)
        frames.push_back(frame_instances(
            seq.frames[f], seq.labels, features ? &(*features)[f] : nullptr, feature_dim));

    std::vector<IdMapping> maps(seq.num_frames());
    uint32_t next_id = 1;
    switch (method) {
        case TrackerMethod::PerFrame:
            for (std::size_t f = 0; f < frames.size(); ++f)
                for (const auto& inst : frames[f].instances)
                    maps[f][inst.id] = next_id++;
            break;
        case TrackerMethod::Iou:
        case TrackerMethod::Cosine: {
            FrameInstances prev;
            for (std::size_t f = 0; f < frames.size(); ++f) {
                if (f == 0) {
                    for (const auto& inst : frames[f].instances)
                        maps[f][inst.id] = next_id++;
                } else {
                    maps[f] = method == TrackerMethod::Iou
                                  ? iou_match(prev, frames[f], params.min_iou, next_id)
                                  : cosine_match(prev, frames[f], params.min_sim, next_id);
                }
                // Carry forward the relabeled observations.
                prev = frames[f];
                for (auto& inst : prev.instances) inst.id = maps[f].at(inst.id);
            }
            break;
        }
        case TrackerMethod::Ab3dmot:
            maps = kalman_track(frames, params);
            break;
    }

    TrackedSequence out = seq;
    for (std::size_t f = 0; f < out.num_frames(); ++f)
        for (auto& id : out.frames[f].instances)
            if (id != kNoInstance) {
                const auto it = maps[f].find(id);
                id = it == maps[f].end() ? kNoInstance : it->second;
            }
    return out;
}

} // namespace ov4d
