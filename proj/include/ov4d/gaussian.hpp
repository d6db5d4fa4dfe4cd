// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0
//
// Gaussian-to-voxel splatting. Occupancy is the complement of the product of
// per-Gaussian miss probabilities using the unnormalized exponential; features
// are the opacity-and-PDF-weighted embedding mean scaled by occupancy:
//
//   o(x) = 1 - prod_j (1 - exp(-1/2 * ||x - mu_j||^2_{Sigma_j^-1}))
//   f(x) = o(x) * sum_j(a_j G_j(x) e_j) / sum_j(a_j G_j(x))
//
// with G_j the full normalized 3D Gaussian PDF.
#pragma once

#include "ov4d/grid.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace ov4d {

inline constexpr double kScaleFloor = 1e-3;   // meters; keeps Sigma positive definite
inline constexpr double kDenomFloor = 1e-12;  // below this, f(x) is the zero vector
inline constexpr double kDefaultTruncationSigma = 3.0;
inline constexpr double kQuatNormTol = 1e-6;

struct Gaussian {
    Vec3 center;                  // meters
    Vec3 scale;                   // per-axis standard deviations, meters
    Quat rotation;                // unit quaternion
    double opacity = 1.0;         // in (0, 1]
    std::vector<double> embedding;
};

struct GaussianSet {
    std::vector<Gaussian> gaussians;
    std::size_t embedding_dim = 0;

    std::size_t size() const { return gaussians.size(); }
};

inline void validate_gaussian(const Gaussian& g, std::size_t embedding_dim) {
    if (!g.center.finite() || !g.scale.finite())
        throw std::domain_error("gaussian: non-finite center or scale");
    if (std::abs(g.rotation.norm() - 1.0) > kQuatNormTol)
        throw std::invalid_argument("gaussian: quaternion norm deviates from 1");
    if (g.opacity <= 0.0 || g.opacity > 1.0)
        throw std::invalid_argument("gaussian: opacity must be in (0, 1]");
    if (g.embedding.size() != embedding_dim)
        throw ShapeError("gaussian: embedding dimension mismatch");
}

inline void validate_set(const GaussianSet& set) {
    for (const auto& g : set.gaussians) validate_gaussian(g, set.embedding_dim);
}

namespace detail {

// Per-Gaussian factors cached for repeated evaluation. Mahalanobis distance
// uses Sigma = R diag(s^2) R^T, so ||d||^2_{Sigma^-1} = ||diag(1/s) R^T d||^2.
struct PreparedGaussian {
    Vec3 center;
    Vec3 inv_scale;
    Mat3 rot;          // R
    double pdf_norm;   // (2*pi)^(-3/2) / (sx*sy*sz)
    double opacity;
    const double* embedding;
    Vec3 sigma_diag_sqrt; // sqrt of diag(Sigma), world-axis ellipsoid extents

    double mahalanobis_sq(const Vec3& x) const {
        const Vec3 local = rot.mul_transposed(x - center);
        const Vec3 u = local.cwise_mul(inv_scale);
        return u.dot(u);
    }
};

inline PreparedGaussian prepare(const Gaussian& g) {
    PreparedGaussian p;
    p.center = g.center;
    const Vec3 s = {std::max(g.scale.x, kScaleFloor), std::max(g.scale.y, kScaleFloor),
                    std::max(g.scale.z, kScaleFloor)};
    p.inv_scale = {1.0 / s.x, 1.0 / s.y, 1.0 / s.z};
    const double qn = g.rotation.norm();
    const Quat q = {g.rotation.w / qn, g.rotation.x / qn, g.rotation.y / qn,
                    g.rotation.z / qn};
    p.rot = q.to_matrix();
    constexpr double two_pi_pow = 15.749609945722419; // (2*pi)^(3/2)
    p.pdf_norm = 1.0 / (two_pi_pow * s.x * s.y * s.z);
    p.opacity = g.opacity;
    p.embedding = g.embedding.data();
    for (int a = 0; a < 3; ++a) {
        double var = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double sk = k == 0 ? s.x : (k == 1 ? s.y : s.z);
            var += p.rot(a, k) * p.rot(a, k) * sk * sk;
        }
        p.sigma_diag_sqrt[a] = std::sqrt(var);
    }
    return p;
}

} // namespace detail

// Normalized 3D Gaussian PDF N(x | mu, Sigma).
inline double gaussian_pdf(const Gaussian& g, const Vec3& x) {
    if (!x.finite()) throw std::domain_error("gaussian_pdf: non-finite point");
    validate_gaussian(g, g.embedding.size());
    const auto p = detail::prepare(g);
    return p.pdf_norm * std::exp(-0.5 * p.mahalanobis_sq(x));
}

// Occupancy at a point per the product formula; empty set gives 0.
inline double occupancy_at(const GaussianSet& set, const Vec3& x) {
    double miss = 1.0;
    for (const auto& g : set.gaussians) {
        const auto p = detail::prepare(g);
        miss *= 1.0 - std::exp(-0.5 * p.mahalanobis_sq(x));
    }
    return 1.0 - miss;
}

// Feature at a point: occupancy times the weighted embedding mean. Returns
// the zero vector when the weight sum underflows kDenomFloor.
inline std::vector<double> feature_at(const GaussianSet& set, const Vec3& x) {
    std::vector<double> num(set.embedding_dim, 0.0);
    double den = 0.0;
    double miss = 1.0;
    for (const auto& g : set.gaussians) {
        const auto p = detail::prepare(g);
        const double m2 = p.mahalanobis_sq(x);
        miss *= 1.0 - std::exp(-0.5 * m2);
        const double w = p.opacity * p.pdf_norm * std::exp(-0.5 * m2);
        den += w;
        for (std::size_t c = 0; c < set.embedding_dim; ++c)
            num[c] += w * p.embedding[c];
    }
    if (den < kDenomFloor) return std::vector<double>(set.embedding_dim, 0.0);
    const double occ = 1.0 - miss;
    for (auto& v : num) v *= occ / den;
    return num;
}

// Dense per-voxel occupancy and features over one geometry.
struct FeatureGrid {
    GridGeometry geometry;
    std::size_t embedding_dim = 0;
    std::vector<double> occupancy;  // voxel-linear, in [0, 1]
    std::vector<double> features;   // voxel-linear x embedding_dim

    double* feature(std::size_t v) { return features.data() + v * embedding_dim; }
    const double* feature(std::size_t v) const {
        return features.data() + v * embedding_dim;
    }
};

// Splats a Gaussian set onto a voxel grid. In truncated mode a Gaussian
// contributes only to voxels with Mahalanobis distance <= truncation_sigma
// (pass infinity for dense evaluation). Gaussians accumulate in ascending
// index order per voxel, so results are deterministic.
inline FeatureGrid splat(const GaussianSet& set, const GridGeometry& geom,
                         double truncation_sigma = kDefaultTruncationSigma) {
    validate_geometry(geom);
    if (!(truncation_sigma > 0.0))
        throw std::invalid_argument("splat: truncation_sigma must be > 0");
    validate_set(set);

    const std::size_t n = geom.voxel_count();
    const std::size_t C = set.embedding_dim;
    FeatureGrid out;
    out.geometry = geom;
    out.embedding_dim = C;
    out.occupancy.assign(n, 0.0);
    out.features.assign(n * C, 0.0);

    std::vector<double> miss(n, 1.0);
    std::vector<double> den(n, 0.0);
    std::vector<double>& num = out.features; // accumulate in place

    const bool dense = std::isinf(truncation_sigma);
    const double t2 = truncation_sigma * truncation_sigma;

    const int X = geom.dims[0], Y = geom.dims[1], Z = geom.dims[2];
    for (const auto& g : set.gaussians) {
        const auto p = detail::prepare(g);

        int lo[3] = {0, 0, 0}, hi[3] = {X - 1, Y - 1, Z - 1};
        if (!dense) {
            // Bounding box of the truncation ellipsoid in voxel indices.
            for (int a = 0; a < 3; ++a) {
                const double r = truncation_sigma * p.sigma_diag_sqrt[a];
                const double vs = geom.voxel_size[a];
                const double c0 = (p.center[a] - r - geom.origin[a]) / vs - 0.5;
                const double c1 = (p.center[a] + r - geom.origin[a]) / vs - 0.5;
                lo[a] = std::max(0, int(std::ceil(c0)));
                hi[a] = std::min(geom.dims[a] - 1, int(std::floor(c1)));
            }
            if (lo[0] > hi[0] || lo[1] > hi[1] || lo[2] > hi[2]) continue;
        }

        for (int z = lo[2]; z <= hi[2]; ++z) {
            for (int y = lo[1]; y <= hi[1]; ++y) {
                const std::size_t row = (std::size_t(z) * Y + y) * X;
                for (int x = lo[0]; x <= hi[0]; ++x) {
                    const Vec3 c = {geom.origin.x + (x + 0.5) * geom.voxel_size.x,
                                    geom.origin.y + (y + 0.5) * geom.voxel_size.y,
                                    geom.origin.z + (z + 0.5) * geom.voxel_size.z};
                    const double m2 = p.mahalanobis_sq(c);
                    if (!dense && m2 > t2) continue;
                    const std::size_t v = row + x;
                    const double e = std::exp(-0.5 * m2);
                    miss[v] *= 1.0 - e;
                    const double w = p.opacity * p.pdf_norm * e;
                    den[v] += w;
                    double* f = num.data() + v * C;
                    for (std::size_t cc = 0; cc < C; ++cc) f[cc] += w * p.embedding[cc];
                }
            }
        }
    }

    for (std::size_t v = 0; v < n; ++v) {
        const double occ = 1.0 - miss[v];
        out.occupancy[v] = occ;
        double* f = num.data() + v * C;
        if (den[v] < kDenomFloor || occ == 0.0) {
            for (std::size_t cc = 0; cc < C; ++cc) f[cc] = 0.0;
        } else {
            const double scale = occ / den[v];
            for (std::size_t cc = 0; cc < C; ++cc) f[cc] *= scale;
        }
    }
    return out;
}

// Concatenates hierarchical streams, stream 0 first.
inline GaussianSet merge_streams(const std::vector<GaussianSet>& sets) {
    GaussianSet out;
    if (!sets.empty()) out.embedding_dim = sets.front().embedding_dim;
    for (const auto& s : sets) {
        if (s.embedding_dim != out.embedding_dim)
            throw ShapeError("merge_streams: embedding dimension mismatch");
        out.gaussians.insert(out.gaussians.end(), s.gaussians.begin(), s.gaussians.end());
    }
    return out;
}

} // namespace ov4d
