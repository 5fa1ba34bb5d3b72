#include "tpslam/slam.hpp"
#include "tpslam/synthetic.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace tpslam;

namespace {

SyntheticScene tiny_scene() {
  return SyntheticScene::parse(IniDocument::parse_string(R"(
[scene]
bounds = -1 -1 -1 1 1 1
[camera]
fx = 20
fy = 20
cx = 11.5
cy = 8.5
width = 24
height = 18
[orbit]
radius = 0.9
height = 0.2
frames = 6
arc_start_deg = 0
arc_end_deg = 20
[sphere]
center = 0 0 0
radius = 0.3
)"));
}

SlamOptions fast_options() {
  SlamOptions o;
  o.map_iters = 2;
  o.first_frame_iters = 3;
  o.track_iters = 2;
  o.map_rays = 64;
  o.track_rays = 32;
  o.n_strat = 8;
  o.n_imp = 4;
  o.map_every = 2;
  o.window = 4;
  o.seed = 5;
  return o;
}

std::vector<FrameRecord> frames_of(const SyntheticScene& s) {
  std::vector<FrameRecord> out;
  for (int i = 0; i < s.orbit.frames; ++i) out.push_back(render_view(s, s.orbit.pose(i)));
  return out;
}

}  // namespace

TEST(SelectWindow, RecentTwoPlusRandomDistinct) {
  std::mt19937_64 rng(1);
  for (std::size_t k : {1u, 2u, 3u, 7u, 30u}) {
    for (int w : {3, 5, 20}) {
      const auto sel = select_window(k, w, rng);
      std::set<std::size_t> uniq(sel.begin(), sel.end());
      EXPECT_EQ(uniq.size(), sel.size());
      EXPECT_TRUE(std::is_sorted(sel.begin(), sel.end()));
      // W - 1 keyframes, the current frame is the W-th member
      EXPECT_EQ(sel.size(), std::min<std::size_t>(k, std::size_t(w - 1)));
      EXPECT_TRUE(uniq.count(k - 1));
      if (k >= 2) EXPECT_TRUE(uniq.count(k - 2));
      for (auto i : sel) EXPECT_LT(i, k);
    }
  }
}

TEST(SelectWindow, SeededDraw) {
  std::mt19937_64 a(42), b(42);
  EXPECT_EQ(select_window(50, 20, a), select_window(50, 20, b));
}

TEST(Slam, KeyframesEveryKthFrameAndFrozenFirstPose) {
  const SyntheticScene s = tiny_scene();
  const auto frames = frames_of(s);
  Slam<float> slam(fast_options(), s.bounds, s.camera);
  std::vector<Phase> phases;
  slam.set_loss_callback([&](const LossEvent& e) { phases.push_back(e.phase); });
  for (const auto& f : frames) slam.process(f);
  ASSERT_EQ(slam.poses().size(), frames.size());
  std::vector<std::size_t> ids;
  for (const auto& k : slam.keyframes()) ids.push_back(k.frame_id);
  EXPECT_EQ(ids, (std::vector<std::size_t>{0, 2, 4}));
  // frame 0 is anchored at its ground truth and never moved by mapping
  EXPECT_EQ(slam.poses()[0].params, frames[0].gt_pose->params);
  // 3 init iterations, 2 tracking iterations on each of 5 frames, 2 mapping runs of 2
  EXPECT_EQ(std::count(phases.begin(), phases.end(), Phase::Init), 3);
  EXPECT_EQ(std::count(phases.begin(), phases.end(), Phase::Track), 10);
  EXPECT_EQ(std::count(phases.begin(), phases.end(), Phase::Map), 4);
}

TEST(Slam, IdentityAnchorWithoutGroundTruth) {
  const SyntheticScene s = tiny_scene();
  auto frames = frames_of(s);
  SlamOptions o = fast_options();
  o.first_pose_from_gt = false;
  Slam<float> slam(o, s.bounds, s.camera);
  slam.process(frames[0]);
  EXPECT_EQ(slam.poses()[0].params, CameraPose<double>::identity().params);
}

TEST(Slam, DeterministicForFixedSeed) {
  const SyntheticScene s = tiny_scene();
  const auto frames = frames_of(s);
  auto run = [&](std::uint64_t seed) {
    SlamOptions o = fast_options();
    o.seed = seed;
    Slam<float> slam(o, s.bounds, s.camera);
    for (const auto& f : frames) slam.process(f);
    return std::make_pair(slam.poses(), slam.field().planes().values());
  };
  const auto a = run(5), b = run(5), c = run(6);
  ASSERT_EQ(a.first.size(), b.first.size());
  for (std::size_t i = 0; i < a.first.size(); ++i) EXPECT_EQ(a.first[i].params, b.first[i].params);
  EXPECT_EQ(a.second, b.second);
  EXPECT_NE(a.second, c.second);
}

TEST(Slam, FrozenMapPosesAreUntouchedByMapping) {
  const SyntheticScene s = tiny_scene();
  const auto frames = frames_of(s);
  SlamOptions o = fast_options();
  o.freeze_map_poses = true;
  Slam<float> slam(o, s.bounds, s.camera);
  std::vector<CameraPose<double>> after_tracking;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    slam.process(frames[i]);
    after_tracking.push_back(slam.poses().back());
  }
  // later mapping runs include frames 0 and 2 in their window but leave the poses alone
  for (std::size_t i = 0; i < frames.size(); ++i) {
    EXPECT_EQ(slam.poses()[i].params, after_tracking[i].params);
  }
}

TEST(Slam, RejectsMismatchedFrameSize) {
  const SyntheticScene s = tiny_scene();
  Slam<float> slam(fast_options(), s.bounds, s.camera);
  FrameRecord f;
  f.width = 10;
  f.height = 10;
  f.rgb.assign(300, 0.f);
  f.depth.assign(100, 1.f);
  EXPECT_THROW(slam.process(f), DatasetError);
}

TEST(Slam, FirstFrameWithoutDepthFails) {
  const SyntheticScene s = tiny_scene();
  FrameRecord f = render_view(s, s.orbit.pose(0));
  std::fill(f.depth.begin(), f.depth.end(), 0.f);
  Slam<float> slam(fast_options(), s.bounds, s.camera);
  EXPECT_THROW(slam.process(f), DatasetError);
}

TEST(Slam, TrackingReducesPoseOffsetOnFittedMap) {
  const SyntheticScene s = SyntheticScene::parse(IniDocument::parse_string(R"(
[scene]
bounds = -1 -1 -1 1 1 1
[camera]
fx = 32
fy = 32
cx = 19.5
cy = 14.5
width = 40
height = 30
[orbit]
radius = 0.9
height = 0.3
frames = 2
arc_start_deg = 0
arc_end_deg = 4
[sphere]
center = -0.1 -0.1 0
radius = 0.25
[box]
center = 0.2 0.25 -0.1
half_extents = 0.15 0.12 0.2
)"));
  SlamOptions o;
  o.field.coarse_resolution = 0.2;
  o.field.fine_geometry_resolution = 0.1;
  o.field.fine_appearance_resolution = 0.1;
  o.field.channels = 8;
  o.first_frame_iters = 200;
  o.map_rays = 400;
  o.map_valid_depth_only = true;
  o.track_rays = 200;
  o.track_iters = 100;
  o.lr_track_translation = 0.003;
  o.lr_track_rotation = 0.002;
  Slam<float> slam(o, s.bounds, s.camera);
  slam.process(render_view(s, s.orbit.pose(0)));
  const FrameRecord f1 = render_view(s, s.orbit.pose(1));
  const CameraPose<double> gt = *f1.gt_pose;
  CameraPose<double> seed = gt;
  seed.params[4] += 0.04;
  seed.params[6] -= 0.02;
  const auto p = slam.track(f1, 1, seed);
  const double before = (seed.translation() - gt.translation()).norm();
  const double after = (p.translation() - gt.translation()).norm();
  EXPECT_LT(after, 0.5 * before);
}
