#include <gtest/gtest.h>

#include "asee/calibration.hpp"
#include "asee/depth_camera.hpp"
#include "asee/perception.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace asee;

namespace {

PointCloud cloud_of(std::vector<Vec3> pts) {
    PointCloud c;
    c.points = std::move(pts);
    return c;
}

// Probe-frame plane `gap` beyond the tip, tilted by `tilt_deg` about probe
// x; returns the rig clouds, the extrinsics and the expected estimate.
struct PlaneCapture {
    PointCloud cam1, cam2;
    RigExtrinsics ext;
    Vec3 expected;
};

PlaneCapture capture_plane(double tilt_deg, double noise, std::uint64_t seed, double gap = 0.005) {
    const RigGeometry rig;
    const Eigen::AngleAxisd tilt(deg2rad(tilt_deg), Vec3::UnitX());
    const Vec3 outward = tilt * Vec3(0, 0, -1);
    const SurfaceModel s{Plane{Vec3(0, 0, gap), outward}, {}};
    PlaneCapture pc;
    pc.ext = {static_extrinsic(rig), rig.probe_from_cam1()};
    auto [a, b] = render_rig(s, rig.probe_from_cam1(), pc.ext.cam2_to_cam1, PinholeIntrinsics{}, noise, seed);
    pc.cam1 = std::move(a);
    pc.cam2 = std::move(b);
    pc.expected = -outward;
    return pc;
}

} // namespace

// ---- individual stages --------------------------------------------------------

TEST(CropZ, Examples) {
    const auto out = crop_z(cloud_of({Vec3(0, 0, 0.01), Vec3(0, 0, 0.10), Vec3(0, 0, 0.30)}), 0.02, 0.25);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out.points[0].z(), 0.10);
    EXPECT_TRUE(crop_z(PointCloud{}, 0.02, 0.25).empty());
    EXPECT_THROW(crop_z(PointCloud{}, 0.3, 0.2), InvalidArgument);
}

TEST(CropZ, MatchesBruteForce) {
    std::mt19937_64 rng(1);
    std::vector<Vec3> pts;
    for (int i = 0; i < 1000; ++i)
        pts.emplace_back(asee::test::uniform(rng, 0, .5), asee::test::uniform(rng, 0, .5), asee::test::uniform(rng, 0, .5));
    EXPECT_TRUE(oracle::same_points(crop_z(cloud_of(pts), 0.02, 0.25).points, oracle::crop_z(pts, 0.02, 0.25)));
}

TEST(CapPoints, Examples) {
    std::mt19937_64 rng(2);
    std::vector<Vec3> small(100), big(70000);
    for (auto& p : small) p = asee::test::random_vec(rng);
    for (auto& p : big) p = asee::test::random_vec(rng);
    EXPECT_TRUE(oracle::same_points(cap_points(cloud_of(small), 35000, 1).points, small));
    const auto a = cap_points(cloud_of(big), 35000, 7);
    ASSERT_EQ(a.size(), 35000u);
    EXPECT_TRUE(oracle::membership(a.points, big));
    EXPECT_TRUE(oracle::same_points(a.points, cap_points(cloud_of(big), 35000, 7).points));
    EXPECT_FALSE(oracle::same_points(a.points, cap_points(cloud_of(big), 35000, 8).points));
}

TEST(Fuse, Examples) {
    std::mt19937_64 rng(3);
    std::vector<Vec3> a(20), b(30);
    for (auto& p : a) p = asee::test::random_vec(rng);
    for (auto& p : b) p = asee::test::random_vec(rng);
    const auto t = asee::test::random_transform(rng);
    EXPECT_TRUE(oracle::same_points(fuse(cloud_of(a), PointCloud{}, t).points, a));
    auto cat = a;
    cat.insert(cat.end(), b.begin(), b.end());
    EXPECT_TRUE(oracle::same_points(fuse(cloud_of(a), cloud_of(b), RigidTransform::identity()).points, cat));
}

TEST(Fuse, PlaneFromTwoPosesStaysOnPlane) {
    const auto pc = capture_plane(0.0, 0.0, 1);
    const auto fused = fuse(pc.cam1, pc.cam2, pc.ext.cam2_to_cam1);
    ASSERT_EQ(fused.size(), pc.cam1.size() + pc.cam2.size());
    for (const auto& p : fused.points) EXPECT_NEAR(pc.ext.cam1_to_probe.apply(p).z(), 0.005, 1e-9);
}

TEST(BoxCrop, Examples) {
    const Box3 box{Vec3(-1, -1, -1), Vec3(1, 1, 1)};
    const auto outside = cloud_of({Vec3(2, 0, 0), Vec3(0, 0, 5)});
    EXPECT_EQ(box_crop_probe(outside, box, {}).size(), 2u);
    const auto inside = cloud_of({Vec3(0.5, 0, 0), Vec3(0, 0.9, -0.9)});
    EXPECT_TRUE(box_crop_probe(inside, box, {}).empty());
    EXPECT_THROW(box_crop_probe(inside, Box3{Vec3(1, 1, 1), Vec3(0, 0, 0)}, {}), InvalidArgument);
}

TEST(BoxCrop, MatchesBruteForce) {
    std::mt19937_64 rng(4);
    std::vector<Vec3> pts(2000);
    for (auto& p : pts) p = asee::test::random_vec(rng, 0.1);
    const Box3 box{Vec3(-0.05, -0.08, -0.1), Vec3(0.05, 0.08, 0.02)};
    const auto t = asee::test::random_transform(rng, 0.02);
    EXPECT_TRUE(oracle::same_points(box_crop_probe(cloud_of(pts), box, t).points,
                                    oracle::box_crop(pts, box.lo, box.hi, t.matrix())));
}

TEST(Voxel, Examples) {
    const auto two = voxel_downsample(cloud_of({Vec3(0.0011, 0.0011, 0.0011), Vec3(0.0021, 0.0011, 0.0011)}), 0.005);
    ASSERT_EQ(two.size(), 1u);
    EXPECT_LE((two.points[0] - Vec3(0.0016, 0.0011, 0.0011)).norm(), 1e-15);
    std::vector<Vec3> line;
    for (int i = 0; i < 20; ++i) line.emplace_back(0.0025 + 0.01 * i, 0.001, 0.001);
    EXPECT_EQ(voxel_downsample(cloud_of(line), 0.005).size(), 20u);
    EXPECT_THROW(voxel_downsample(cloud_of(line), 0.0), InvalidArgument);
}

TEST(Voxel, MatchesBruteForce) {
    std::mt19937_64 rng(5);
    std::vector<Vec3> pts(500);
    for (auto& p : pts) p = asee::test::random_vec(rng, 0.02);
    EXPECT_TRUE(oracle::same_points(voxel_downsample(cloud_of(pts), 0.005).points, oracle::voxel_centroids(pts, 0.005)));
}

namespace {

std::vector<Vec3> grid_with_outlier() {
    std::vector<Vec3> pts;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) pts.emplace_back(0.005 * i, 0.005 * j, 0.1);
    pts.emplace_back(0.0225, 0.0225, 0.6);
    return pts;
}

} // namespace

TEST(Sor, RemovesExactlyTheFarPoint) {
    const auto pts = grid_with_outlier();
    const auto out = statistical_outlier_removal(cloud_of(pts), 8, 2.0);
    ASSERT_EQ(out.size(), 100u);
    for (const auto& p : out.points) EXPECT_EQ(p.z(), 0.1);
    EXPECT_TRUE(oracle::same_points(out.points, oracle::sor(pts, 8, 2.0)));
}

TEST(Sor, GenerousThresholdKeepsEverything) {
    auto pts = grid_with_outlier();
    pts.pop_back();
    EXPECT_EQ(statistical_outlier_removal(cloud_of(pts), 8, 10.0).size(), pts.size());
}

TEST(Sor, SecondPassTrimsOnlyGridCorners) {
    // With the outlier gone the spread collapses, and the four corners
    // (sparsest neighbourhoods) fall outside mean + 2 sigma.
    const auto once = statistical_outlier_removal(cloud_of(grid_with_outlier()), 8, 2.0);
    const auto twice = statistical_outlier_removal(once, 8, 2.0);
    EXPECT_TRUE(oracle::same_points(twice.points, oracle::sor(once.points, 8, 2.0)));
    ASSERT_EQ(twice.size(), once.size() - 4);
    auto corner = [](const Vec3& p) {
        return (p.x() == 0.0 || p.x() == 0.005 * 9) && (p.y() == 0.0 || p.y() == 0.005 * 9);
    };
    for (const auto& p : twice.points) EXPECT_FALSE(corner(p));
}

TEST(Sor, MatchesBruteForceOnRandomClouds) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const auto pts = oracle::random_cloud(rng, 300 + 50 * trial);
        EXPECT_TRUE(oracle::same_points(statistical_outlier_removal(cloud_of(pts), 20, 2.0).points,
                                        oracle::sor(pts, 20, 2.0)));
    }
}

// ---- normals -----------------------------------------------------------------

TEST(LocalNormals, PlaneGivesAxisNormals) {
    std::mt19937_64 rng(7);
    std::vector<Vec3> pts(400);
    for (auto& p : pts) p = Vec3(asee::test::uniform(rng, -.05, .05), asee::test::uniform(rng, -.05, .05), 0.0);
    const auto c = local_normals(cloud_of(pts), 30);
    for (const auto& n : c.normals) EXPECT_LE(std::abs(std::abs(n.z()) - 1.0), 1e-6);
}

TEST(LocalNormals, SphereNormalsAreRadial) {
    std::mt19937_64 rng(8);
    std::vector<Vec3> pts(20000);
    for (auto& p : pts) p = 0.1 * asee::test::random_unit(rng);
    const auto c = local_normals(cloud_of(pts), 30);
    double worst = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double a = angle_between(c.normals[i], c.points[i]);
        worst = std::max(worst, std::min(a, 180.0 - a));
    }
    EXPECT_LE(worst, 2.0);
}

TEST(LocalNormals, CollinearNeighbourhoodIsInvalid) {
    EXPECT_FALSE(normal_valid(pca_normal({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)})));
    EXPECT_TRUE(normal_valid(pca_normal({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)})));
}

TEST(LocalNormals, MatchesSvdOracle) {
    std::mt19937_64 rng(9);
    const auto pts = oracle::random_cloud(rng, 400);
    const auto c = local_normals(cloud_of(pts), 12);
    for (std::size_t i = 0; i < pts.size(); i += 7) {
        const Vec3 want = oracle::pca_normal_at(pts, i, 12);
        EXPECT_NEAR(std::abs(c.normals[i].dot(want)), 1.0, 1e-9);
    }
}

TEST(RegionNormal, SignCanonicalization) {
    PointCloud c = cloud_of({Vec3::Zero()});
    c.normals = {Vec3(0, 0, -1)};
    EXPECT_EQ(region_normal(c, 0.1, 0.1, {}).normal, Vec3(0, 0, 1));
    c.normals = {Vec3(0, 0, 1)};
    EXPECT_EQ(region_normal(c, 0.1, 0.1, {}).normal, Vec3(0, 0, 1));
    c.points = {Vec3(1, 0, 0)};
    EXPECT_THROW(region_normal(c, 0.1, 0.1, {}), NoSupport);
}

TEST(RegionNormal, FlippingInputsChangesNothingAndZIsNonNegative) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 10000; ++trial) {
        PointCloud c;
        for (int i = 0; i < 5; ++i) {
            c.points.push_back(asee::test::random_vec(rng, 0.01));
            Vec3 n = asee::test::random_unit(rng);
            n.z() = std::abs(n.z()) + 0.05;  // a consistent hemisphere, randomly flipped below
            if (asee::test::uniform(rng, 0, 1) < 0.5) n = -n;
            c.normals.push_back(n.normalized());
        }
        const auto a = region_normal(c, 1.0, 1.0, {});
        EXPECT_GE(a.normal.z(), 0.0);
        for (auto& n : c.normals) n = -n;
        EXPECT_EQ(region_normal(c, 1.0, 1.0, {}).normal, a.normal);
    }
}

TEST(MovingAverage, Examples) {
    MovingAverageFilter f(7);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(f.smooth({Vec3(0, 0, 1), 1, 0.0}).normal, Vec3(0, 0, 1));

    MovingAverageFilter one(1);
    const Vec3 v = Vec3(0.3, 0.1, 0.9).normalized();
    EXPECT_EQ(one.smooth({v, 1, 0.0}).normal, v);
    EXPECT_THROW(MovingAverageFilter(0), InvalidArgument);
}

TEST(MovingAverage, MatchesRunningMean) {
    const Vec3 tilted = Vec3(std::sin(deg2rad(20)), 0, std::cos(deg2rad(20)));
    std::vector<Vec3> inputs(5, tilted);
    for (int i = 0; i < 12; ++i) inputs.push_back(Vec3::UnitZ());
    MovingAverageFilter f(7);
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        const auto out = f.smooth({inputs[t], 1, 0.0}).normal;
        Vec3 sum = Vec3::Zero();
        const std::size_t from = t + 1 >= 7 ? t + 1 - 7 : 0;
        for (std::size_t i = from; i <= t; ++i) sum += inputs[i];
        EXPECT_LE((out - sum.normalized()).norm(), 1e-12);
        EXPECT_NEAR(out.norm(), 1.0, 1e-9);
    }
}

// ---- whole chain ------------------------------------------------------------------

TEST(Pipeline, FlatPlaneNoiseless) {
    const auto pc = capture_plane(0.0, 0.0, 2);
    MovingAverageFilter f;
    const auto r = run_pipeline(pc.cam1, pc.cam2, PipelineConfig{}, pc.ext, f);
    EXPECT_LE(angle_between(r.smoothed.normal, Vec3::UnitZ()), 0.1);
}

TEST(Pipeline, TiltedPlaneNoiseless) {
    const auto pc = capture_plane(15.0, 0.0, 3);
    MovingAverageFilter f;
    const auto r = run_pipeline(pc.cam1, pc.cam2, PipelineConfig{}, pc.ext, f);
    EXPECT_LE(angle_between(r.raw.normal, pc.expected), 0.5);
}

TEST(Pipeline, TiltedPlaneNoisy) {
    const auto pc = capture_plane(10.0, 0.0005, 4);
    MovingAverageFilter f;
    const auto r = run_pipeline(pc.cam1, pc.cam2, PipelineConfig{}, pc.ext, f);
    EXPECT_LE(angle_between(r.raw.normal, pc.expected), 1.5);
}

TEST(Pipeline, Deterministic) {
    const auto pc = capture_plane(10.0, 0.0005, 5);
    MovingAverageFilter f1, f2;
    const auto a = run_pipeline(pc.cam1, pc.cam2, PipelineConfig{}, pc.ext, f1);
    const auto b = run_pipeline(pc.cam1, pc.cam2, PipelineConfig{}, pc.ext, f2);
    EXPECT_TRUE(oracle::same_points(a.processed.points, b.processed.points));
    EXPECT_EQ(a.smoothed.normal, b.smoothed.normal);
}

TEST(Pipeline, EmptyInputHasNoSupport) {
    MovingAverageFilter f;
    const RigGeometry rig;
    EXPECT_THROW(run_pipeline(PointCloud{}, PointCloud{}, PipelineConfig{}, {static_extrinsic(rig), rig.probe_from_cam1()}, f),
                 NoSupport);
}

TEST(Pipeline, SinglePassMatchesStagedStages) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto pc = capture_plane(5.0 * static_cast<double>(seed), 0.001, seed);
        PipelineConfig cfg;
        const auto fast = detail::crop_fuse_voxelize(pc.cam1, pc.cam2, cfg, pc.ext);
        auto staged = fuse(crop_z(pc.cam1, cfg.z_min, cfg.z_max), crop_z(pc.cam2, cfg.z_min, cfg.z_max),
                           pc.ext.cam2_to_cam1);
        staged = voxel_downsample(box_crop_probe(staged, cfg.probe_box, pc.ext.cam1_to_probe), cfg.voxel_size);
        EXPECT_TRUE(oracle::same_points(fast.points, staged.points));
    }
}

TEST(Pipeline, CappedPathKeepsCapMembership) {
    // More points than the cap forces the staged path.
    const auto pc = capture_plane(0.0, 0.0005, 6);
    PipelineConfig cfg;
    cfg.per_camera_cap = 5000;
    const auto c1 = cap_points(crop_z(pc.cam1, cfg.z_min, cfg.z_max), cfg.per_camera_cap, cfg.seed);
    EXPECT_EQ(c1.size(), 5000u);
    EXPECT_TRUE(oracle::membership(c1.points, pc.cam1.points));
    EXPECT_NO_THROW(process_clouds(pc.cam1, pc.cam2, cfg, pc.ext));
}

TEST(Pipeline, SharedQueryMatchesSeparateStages) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 6; ++trial) {
        const auto c = cloud_of(oracle::random_cloud(rng, 600));
        for (std::size_t nk : {8u, 21u, 30u}) {
            const auto fused = detail::denoise_and_estimate(c, 20, 2.0, nk, [](const Vec3&) { return true; });
            const auto staged = local_normals(statistical_outlier_removal(c, 20, 2.0), nk);
            ASSERT_TRUE(oracle::same_points(fused.points, staged.points));
            for (std::size_t i = 0; i < fused.size(); ++i) {
                if (!normal_valid(staged.normals[i])) {
                    EXPECT_FALSE(normal_valid(fused.normals[i]));
                    continue;
                }
                EXPECT_EQ(fused.normals[i], staged.normals[i]);
            }
        }
    }
}

TEST(Pipeline, StagesOnlyRemovePoints) {
    const auto pc = capture_plane(12.0, 0.001, 7);
    PipelineConfig cfg;
    const auto cropped = crop_z(pc.cam1, cfg.z_min, cfg.z_max);
    EXPECT_TRUE(oracle::membership(cropped.points, pc.cam1.points));
    const auto capped = cap_points(cropped, 1000, 3);
    EXPECT_TRUE(oracle::membership(capped.points, cropped.points));
    const auto fused = fuse(cropped, crop_z(pc.cam2, cfg.z_min, cfg.z_max), pc.ext.cam2_to_cam1);
    const auto boxed = box_crop_probe(fused, cfg.probe_box, pc.ext.cam1_to_probe);
    EXPECT_TRUE(oracle::membership(boxed.points, fused.points));
    const auto vox = voxel_downsample(boxed, cfg.voxel_size);
    const auto denoised = statistical_outlier_removal(vox, cfg.sor_k, cfg.sor_std_mult);
    EXPECT_TRUE(oracle::membership(denoised.points, vox.points));
    const auto normals = local_normals(denoised, cfg.normal_k);
    EXPECT_TRUE(oracle::same_points(normals.points, denoised.points));
}

TEST(Pipeline, NormalStagesAreRotationEquivariant) {
    // The voxel grid is axis-aligned, so equivariance is checked from the
    // voxelized cloud onward: outlier removal, normals, region averaging.
    const auto pc = capture_plane(8.0, 0.0005, 8);
    PipelineConfig cfg;
    const auto vox = detail::crop_fuse_voxelize(pc.cam1, pc.cam2, cfg, pc.ext);
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        const RigidTransform rot(asee::test::random_rotation(rng), Vec3::Zero());
        const auto a = local_normals(statistical_outlier_removal(vox, cfg.sor_k, cfg.sor_std_mult), cfg.normal_k);
        const auto b = local_normals(statistical_outlier_removal(transform_cloud(rot, vox), cfg.sor_k, cfg.sor_std_mult),
                                     cfg.normal_k);
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            const Vec3 ra = rot.rotate(a.normals[i]);
            EXPECT_LE(std::min((ra - b.normals[i]).norm(), (ra + b.normals[i]).norm()), 1e-6);
        }
        const auto na = region_normal(a, cfg.region_x, cfg.region_y, pc.ext.cam1_to_probe);
        const auto nb = region_normal(b, cfg.region_x, cfg.region_y, pc.ext.cam1_to_probe * rot.inverse());
        EXPECT_LE((na.normal - nb.normal).norm(), 1e-6);
    }
}
