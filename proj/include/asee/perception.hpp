#pragma once

// Point-cloud processing chain that turns the two side-camera clouds into a
// filtered surface normal under the probe tip:
//
//   crop_z -> cap_points (per camera) -> fuse -> box_crop_probe
//   -> voxel_downsample -> statistical_outlier_removal -> local_normals
//   -> region_normal -> MovingAverageFilter::smooth

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "asee/depth_camera.hpp"
#include "asee/geometry.hpp"
#include "asee/kdtree.hpp"

namespace asee {

struct Box3 {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();

    bool contains(const Vec3& p) const { return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all(); }
    bool valid() const { return (lo.array() <= hi.array()).all(); }
};

struct PipelineConfig {
    double z_min = 0.02;
    double z_max = 0.25;
    std::size_t per_camera_cap = 35000;
    // Probe body and mount in the probe tip frame; everything behind the tip
    // within the mount footprint.
    Box3 probe_box{Vec3(-0.025, -0.04, -0.16), Vec3(0.025, 0.04, -0.02)};
    double voxel_size = 0.005;
    std::size_t sor_k = 20;
    double sor_std_mult = 2.0;
    std::size_t normal_k = 30;
    double region_x = 0.10;
    double region_y = 0.10;
    std::size_t ma_window = 7;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(0.0 < z_min && z_min < z_max)) throw InvalidArgument("crop range must satisfy 0 < z_min < z_max");
        if (per_camera_cap < 1 || sor_k < 1 || normal_k < 3 || ma_window < 1)
            throw InvalidArgument("caps, neighbour counts and window must be >= 1 (normal_k >= 3)");
        if (!(voxel_size > 0.0)) throw InvalidArgument("voxel_size must be positive");
        if (!probe_box.valid()) throw InvalidArgument("probe box bounds are inverted");
        if (!(region_x > 0.0 && region_y > 0.0)) throw InvalidArgument("region sides must be positive");
    }
};

/// Surface normal in the probe tip frame, z >= 0.
struct NormalEstimate {
    Vec3 normal = Vec3::UnitZ();
    std::size_t support_count = 0;
    double timestamp = 0.0;
};

inline PointCloud crop_z(const PointCloud& c, double z_min, double z_max) {
    if (!(z_min < z_max)) throw InvalidArgument("crop_z: min must be below max");
    PointCloud out;
    out.frame_id = c.frame_id;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double z = c.points[i].z();
        if (z >= z_min && z <= z_max) {
            out.points.push_back(c.points[i]);
            if (c.has_normals()) out.normals.push_back(c.normals[i]);
        }
    }
    return out;
}

/// Uniform random subset of `cap` points without replacement; input order
/// is preserved among the survivors.
inline PointCloud cap_points(const PointCloud& c, std::size_t cap, std::uint64_t seed) {
    if (cap < 1) throw InvalidArgument("cap_points: cap must be >= 1");
    if (c.size() <= cap) return c;
    std::vector<std::size_t> idx(c.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first `cap` slots become the sample.
    for (std::size_t i = 0; i < cap; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    PointCloud out;
    out.frame_id = c.frame_id;
    out.points.reserve(cap);
    for (auto i : idx) {
        out.points.push_back(c.points[i]);
        if (c.has_normals()) out.normals.push_back(c.normals[i]);
    }
    return out;
}

/// cam1 points followed by cam2 points mapped into the cam1 frame.
inline PointCloud fuse(const PointCloud& cam1, const PointCloud& cam2, const RigidTransform& cam2_to_cam1) {
    PointCloud out = cam1;
    const PointCloud moved = transform_cloud(cam2_to_cam1, cam2);
    out.points.insert(out.points.end(), moved.points.begin(), moved.points.end());
    if (cam1.has_normals() && cam2.has_normals()) out.normals.insert(out.normals.end(), moved.normals.begin(), moved.normals.end());
    else out.normals.clear();
    out.frame_id = cam1.frame_id;
    return out;
}

/// Removes points whose probe-frame coordinates fall inside `probe_box`.
inline PointCloud box_crop_probe(const PointCloud& c, const Box3& probe_box, const RigidTransform& cloud_to_probe) {
    if (!probe_box.valid()) throw InvalidArgument("box_crop_probe: inverted box");
    const Mat3 r = cloud_to_probe.rotation_matrix();
    const Vec3 t = cloud_to_probe.translation();
    PointCloud out;
    out.frame_id = c.frame_id;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (probe_box.contains(r * c.points[i] + t)) continue;
        out.points.push_back(c.points[i]);
        if (c.has_normals()) out.normals.push_back(c.normals[i]);
    }
    return out;
}

using VoxelKey = std::array<std::int64_t, 3>;

inline VoxelKey voxel_key(const Vec3& p, double voxel) {
    return {static_cast<std::int64_t>(std::floor(p.x() / voxel)), static_cast<std::int64_t>(std::floor(p.y() / voxel)),
            static_cast<std::int64_t>(std::floor(p.z() / voxel))};
}

namespace detail {

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& k) const {
        std::uint64_t h = 0x9E3779B97F4A7C15ULL;
        for (auto v : k) h = (h ^ static_cast<std::uint64_t>(v)) * 0xBF58476D1CE4E5B9ULL;
        return static_cast<std::size_t>(h ^ (h >> 31));
    }
};

} // namespace detail

namespace detail {

// Centroid accumulation keyed by voxel; points are summed in arrival order.
class VoxelAccumulator {
public:
    VoxelAccumulator(double voxel, std::size_t expected) : voxel_(voxel) { slot_.reserve(expected / 4 + 16); }

    void add(const Vec3& p) {
        const VoxelKey k = voxel_key(p, voxel_);
        const auto [it, fresh] = slot_.try_emplace(k, cells_.size());
        if (fresh) {
            cells_.push_back({k, p, 1});
        } else {
            cells_[it->second].sum += p;
            ++cells_[it->second].n;
        }
    }

    PointCloud finish(std::string frame_id) && {
        std::sort(cells_.begin(), cells_.end(), [](const Cell& a, const Cell& b) { return a.key < b.key; });
        PointCloud out;
        out.frame_id = std::move(frame_id);
        out.points.reserve(cells_.size());
        for (const auto& cell : cells_) out.points.push_back(cell.sum / static_cast<double>(cell.n));
        return out;
    }

private:
    struct Cell {
        VoxelKey key;
        Vec3 sum;
        std::size_t n;
    };
    double voxel_;
    std::vector<Cell> cells_;
    std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> slot_;
};

} // namespace detail

/// One centroid per occupied voxel, ordered by voxel key. Points are summed
/// in input order within a voxel.
inline PointCloud voxel_downsample(const PointCloud& c, double voxel) {
    if (!(voxel > 0.0)) throw InvalidArgument("voxel_downsample: voxel must be positive");
    detail::VoxelAccumulator acc(voxel, c.size());
    for (const auto& p : c.points) acc.add(p);
    return std::move(acc).finish(c.frame_id);
}

/// Per-point mean distance to the k nearest other points.
inline std::vector<double> mean_knn_distances(const PointCloud& c, std::size_t k) {
    const KdTree tree(c.points);
    std::vector<double> mean(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto nn = tree.knn(c.points[i], k, i);
        double sum = 0.0;
        for (const auto& n : nn) sum += std::sqrt(n.dist2);
        mean[i] = sum / static_cast<double>(nn.size());
    }
    return mean;
}

namespace detail {

// mean + std_mult * sample standard deviation of the per-point statistic.
inline double sor_threshold(const std::vector<double>& mean, double std_mult) {
    double sum = 0.0, sq = 0.0;
    for (double m : mean) {
        sum += m;
        sq += m * m;
    }
    const double n = static_cast<double>(mean.size());
    const double mu = sum / n;
    const double var = std::max(0.0, (sq - sum * sum / n) / (n - 1.0));
    return mu + std_mult * std::sqrt(var);
}

} // namespace detail

/// Drops points whose mean k-NN distance exceeds mean + std_mult * stddev
/// of that statistic over the cloud (sample standard deviation).
inline PointCloud statistical_outlier_removal(const PointCloud& c, std::size_t k, double std_mult) {
    if (k < 1 || c.size() <= k) throw InvalidArgument("statistical_outlier_removal: need more than k points");
    const auto mean = mean_knn_distances(c, k);
    const double threshold = detail::sor_threshold(mean, std_mult);

    PointCloud out;
    out.frame_id = c.frame_id;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (mean[i] > threshold) continue;
        out.points.push_back(c.points[i]);
        if (c.has_normals()) out.normals.push_back(c.normals[i]);
    }
    return out;
}

inline bool normal_valid(const Vec3& n) { return n.allFinite(); }

/// PCA normal of a neighbourhood; NaN when the points span fewer than two
/// dimensions.
inline Vec3 pca_normal(const std::vector<Vec3>& pts) {
    Vec3 mean = Vec3::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& p : pts) {
        const Vec3 d = p - mean;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(pts.size());
    const Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    const Vec3 ev = es.eigenvalues();  // ascending
    if (!(ev(1) > 1e-12 * std::max(ev(2), std::numeric_limits<double>::min())) || ev(2) <= 0.0)
        return Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
    return es.eigenvectors().col(0).normalized();
}

/// Per-point PCA normals over the k nearest points (the point included).
/// Degenerate neighbourhoods yield a NaN normal.
inline PointCloud local_normals(const PointCloud& c, std::size_t k) {
    if (k < 3 || c.size() <= k) throw InvalidArgument("local_normals: need |c| > k >= 3");
    const KdTree tree(c.points);
    PointCloud out;
    out.frame_id = c.frame_id;
    out.points = c.points;
    out.normals.resize(c.size());
    std::vector<Vec3> nbhd;
    nbhd.reserve(k);
    for (std::size_t i = 0; i < c.size(); ++i) {
        nbhd.clear();
        for (const auto& n : tree.knn(c.points[i], k)) nbhd.push_back(c.points[n.index]);
        out.normals[i] = pca_normal(nbhd);
    }
    return out;
}

namespace detail {

/// local_normals(statistical_outlier_removal(c, sor_k, m), normal_k) with
/// normals estimated only for surviving points that pass `want` (others get
/// NaN). Removal only deletes entries from each (dist2, index)-ordered
/// neighbour list, so when the pre-removal list is long enough its
/// surviving prefix is exactly the post-removal neighbourhood.
template <class Want>
PointCloud denoise_and_estimate(const PointCloud& c, std::size_t sor_k, double std_mult, std::size_t normal_k,
                                Want&& want) {
    if (sor_k < 1 || c.size() <= sor_k) throw InvalidArgument("statistical_outlier_removal: need more than k points");
    const KdTree tree(c.points);
    const std::size_t kq = sor_k + 1;
    const bool reuse = normal_k <= kq;
    std::vector<Neighbor> lists;
    if (reuse) lists.reserve(c.size() * kq);
    std::vector<double> mean(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto nn = tree.knn(c.points[i], kq);
        double sum = 0.0;
        std::size_t taken = 0;
        for (const auto& n : nn) {
            if (n.index == i) continue;
            sum += std::sqrt(n.dist2);
            if (++taken == sor_k) break;
        }
        mean[i] = sum / static_cast<double>(taken);
        if (reuse) {
            lists.insert(lists.end(), nn.begin(), nn.end());
            lists.resize((i + 1) * kq, Neighbor{std::numeric_limits<double>::infinity(), c.size()});
        }
    }
    const double threshold = sor_threshold(mean, std_mult);

    constexpr auto kDropped = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> remap(c.size(), kDropped);
    PointCloud out;
    out.frame_id = c.frame_id;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (mean[i] > threshold) continue;
        remap[i] = out.points.size();
        out.points.push_back(c.points[i]);
    }
    if (normal_k < 3 || out.size() <= normal_k) throw InvalidArgument("local_normals: need |c| > k >= 3");

    out.normals.assign(out.size(), Vec3::Constant(std::numeric_limits<double>::quiet_NaN()));
    std::optional<KdTree> survivors;
    std::vector<Vec3> nbhd;
    nbhd.reserve(normal_k);
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (remap[i] == kDropped || !want(c.points[i])) continue;
        nbhd.clear();
        if (reuse) {
            for (std::size_t j = i * kq; j < (i + 1) * kq && nbhd.size() < normal_k; ++j) {
                const std::size_t idx = lists[j].index;
                if (idx < c.size() && remap[idx] != kDropped) nbhd.push_back(c.points[idx]);
            }
        }
        if (nbhd.size() < normal_k) {
            if (!survivors) survivors.emplace(out.points);
            nbhd.clear();
            for (const auto& n : survivors->knn(c.points[i], normal_k)) nbhd.push_back(out.points[n.index]);
        }
        out.normals[remap[i]] = pca_normal(nbhd);
    }
    return out;
}

} // namespace detail

/// Sign convention applied to raw estimator output: keep z >= 0.
inline Vec3 canonicalize_sign(const Vec3& n) { return n.z() < 0.0 ? Vec3(-n) : n; }

/// Averages normals of points whose probe-frame (x, y) fall in the
/// region_x by region_y rectangle centred under the tip.
inline NormalEstimate region_normal(const PointCloud& c, double region_x, double region_y,
                                    const RigidTransform& cloud_to_probe, double timestamp = 0.0) {
    if (!c.has_normals() || c.normals.size() != c.size()) throw InvalidArgument("region_normal: cloud lacks normals");
    const Mat3 r = cloud_to_probe.rotation_matrix();
    Vec3 sum = Vec3::Zero();
    std::size_t count = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (!normal_valid(c.normals[i])) continue;
        const Vec3 p = r * c.points[i] + cloud_to_probe.translation();
        if (std::abs(p.x()) > 0.5 * region_x || std::abs(p.y()) > 0.5 * region_y) continue;
        sum += canonicalize_sign(r * c.normals[i]);
        ++count;
    }
    if (count == 0) throw NoSupport("region_normal: no points in the averaging region");
    const double len = sum.norm();
    if (!(len > 0.0)) throw NoSupport("region_normal: normals cancel");
    return {sum / len, count, timestamp};
}

/// Component-wise moving average of recent normals, re-normalized.
class MovingAverageFilter {
public:
    explicit MovingAverageFilter(std::size_t window = 7) : window_(window) {
        if (window_ < 1) throw InvalidArgument("moving average window must be >= 1");
    }

    NormalEstimate smooth(const NormalEstimate& n) {
        history_.push_back(n.normal);
        if (history_.size() > window_) history_.pop_front();
        Vec3 sum = Vec3::Zero();
        for (const auto& h : history_) sum += h;
        sum /= static_cast<double>(history_.size());
        NormalEstimate out = n;
        out.normal = sum.norm() > 0.0 ? Vec3(sum.normalized()) : n.normal;
        return out;
    }

    void reset() { history_.clear(); }
    std::size_t window() const { return window_; }
    std::size_t size() const { return history_.size(); }

private:
    std::size_t window_;
    std::deque<Vec3> history_;
};

/// Fixed transforms the pipeline needs.
struct RigExtrinsics {
    RigidTransform cam2_to_cam1;
    RigidTransform cam1_to_probe;
};

struct PipelineResult {
    PointCloud processed;  // cam1 frame, with normals
    NormalEstimate raw;
    NormalEstimate smoothed;
};

namespace detail {

/// crop_z -> fuse -> box_crop_probe -> voxel_downsample in a single pass,
/// for inputs the per-camera cap leaves untouched. Same arithmetic and
/// summation order as the staged functions.
inline PointCloud crop_fuse_voxelize(const PointCloud& cam1, const PointCloud& cam2, const PipelineConfig& cfg,
                                     const RigExtrinsics& ext) {
    const Mat3 r21 = ext.cam2_to_cam1.rotation_matrix();
    const Vec3 t21 = ext.cam2_to_cam1.translation();
    const Mat3 rp = ext.cam1_to_probe.rotation_matrix();
    const Vec3 tp = ext.cam1_to_probe.translation();
    VoxelAccumulator acc(cfg.voxel_size, cam1.size() + cam2.size());
    auto keep = [&](const Vec3& p) {
        if (!cfg.probe_box.contains(rp * p + tp)) acc.add(p);
    };
    for (const auto& p : cam1.points)
        if (p.z() >= cfg.z_min && p.z() <= cfg.z_max) keep(p);
    for (const auto& p : cam2.points)
        if (p.z() >= cfg.z_min && p.z() <= cfg.z_max) keep(r21 * p + t21);
    return std::move(acc).finish(cam1.frame_id);
}

} // namespace detail

/// Runs every stage up to the processed cloud (no normal averaging). With
/// `region_only`, normals are estimated only for points that region
/// averaging will read; the rest carry NaN normals.
inline PointCloud process_clouds(const PointCloud& cam1, const PointCloud& cam2, const PipelineConfig& cfg,
                                 const RigExtrinsics& ext, bool region_only = false) {
    cfg.validate();
    PointCloud fused;
    if (cam1.size() <= cfg.per_camera_cap && cam2.size() <= cfg.per_camera_cap) {
        fused = detail::crop_fuse_voxelize(cam1, cam2, cfg, ext);
    } else {
        const PointCloud c1 = cap_points(crop_z(cam1, cfg.z_min, cfg.z_max), cfg.per_camera_cap, cfg.seed);
        const PointCloud c2 = cap_points(crop_z(cam2, cfg.z_min, cfg.z_max), cfg.per_camera_cap, cam2_seed(cfg.seed));
        fused = fuse(c1, c2, ext.cam2_to_cam1);
        fused = box_crop_probe(fused, cfg.probe_box, ext.cam1_to_probe);
        fused = voxel_downsample(fused, cfg.voxel_size);
    }
    if (fused.size() <= std::max(cfg.sor_k, cfg.normal_k))
        throw NoSupport("pipeline: too few points after voxel filtering");
    const Mat3 r = ext.cam1_to_probe.rotation_matrix();
    const Vec3 t = ext.cam1_to_probe.translation();
    auto in_region = [&](const Vec3& p) {
        const Vec3 q = r * p + t;
        return !region_only || (std::abs(q.x()) <= 0.5 * cfg.region_x && std::abs(q.y()) <= 0.5 * cfg.region_y);
    };
    try {
        return detail::denoise_and_estimate(fused, cfg.sor_k, cfg.sor_std_mult, cfg.normal_k, in_region);
    } catch (const InvalidArgument&) {
        throw NoSupport("pipeline: too few points after outlier removal");
    }
}

inline PipelineResult run_pipeline(const PointCloud& cam1, const PointCloud& cam2, const PipelineConfig& cfg,
                                   const RigExtrinsics& ext, MovingAverageFilter& filter, double timestamp = 0.0) {
    PipelineResult r;
    r.processed = process_clouds(cam1, cam2, cfg, ext);
    r.raw = region_normal(r.processed, cfg.region_x, cfg.region_y, ext.cam1_to_probe, timestamp);
    r.smoothed = filter.smooth(r.raw);
    return r;
}

} // namespace asee
