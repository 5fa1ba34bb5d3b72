#include "tpslam/config.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace tpslam;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string field_of(const std::string& text) {
  try {
    RunConfig::parse(IniDocument::parse_string(text));
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST(RunConfig, DefaultsMatchPublishedValues) {
  const RunConfig c;
  const SlamOptions& o = c.slam;
  EXPECT_EQ(o.truncation, 0.06);
  EXPECT_EQ(o.field.coarse_resolution, 0.24);
  EXPECT_EQ(o.field.fine_geometry_resolution, 0.06);
  EXPECT_EQ(o.field.fine_appearance_resolution, 0.03);
  EXPECT_EQ(o.field.channels, 32);
  EXPECT_EQ(o.field.hidden, 32);
  EXPECT_EQ(o.n_strat, 32);
  EXPECT_EQ(o.n_imp, 8);
  EXPECT_EQ(o.map_iters, 15);
  EXPECT_EQ(o.track_iters, 8);
  EXPECT_EQ(o.map_rays, 4000);
  EXPECT_EQ(o.track_rays, 2000);
  EXPECT_EQ(o.map_every, 4);
  EXPECT_EQ(o.window, 20);
  EXPECT_EQ(o.lr_decoders, 0.001);
  EXPECT_EQ(o.lr_planes, 0.005);
  EXPECT_EQ(o.lr_map_pose, 0.001);
  EXPECT_EQ(o.lr_track_rotation, 0.001);
  EXPECT_EQ(o.lr_track_translation, 0.001);
  EXPECT_EQ(o.outlier_factor, 10.0);
  EXPECT_EQ(o.map_weights.free_space, 5);
  EXPECT_EQ(o.map_weights.trunc_middle, 200);
  EXPECT_EQ(o.map_weights.trunc_tail, 10);
  EXPECT_EQ(o.map_weights.depth, 0.1);
  EXPECT_EQ(o.map_weights.color, 5);
  EXPECT_EQ(o.track_weights.free_space, 10);
  EXPECT_EQ(o.track_weights.trunc_middle, 200);
  EXPECT_EQ(o.track_weights.trunc_tail, 50);
  EXPECT_EQ(o.track_weights.depth, 1);
  EXPECT_EQ(o.track_weights.color, 5);
  EXPECT_EQ(c.mesh_voxel, 0.01);
  EXPECT_EQ(c.eval_threshold, 0.05);
}

TEST(RunConfig, DefaultsDumpMatchesGoldenFile) {
  EXPECT_EQ(RunConfig{}.serialize(), read_file(TPSLAM_SOURCE_DIR "/data/defaults.cfg"));
}

TEST(RunConfig, EmptyDocumentIsDefault) {
  EXPECT_EQ(RunConfig::parse(IniDocument::parse_string("")).serialize(), RunConfig{}.serialize());
}

TEST(RunConfig, RoundTripNonDefault) {
  const std::string text = R"(
[dataset]
path = /data/seq
type = synthetic
max_frames = 12
[scene]
bounds = -1 -2 -3 1.5 2.5 3.25
[camera]
fx = 517.3
fy = 516.5
cx = 318.6
cy = 255.3
width = 640
height = 480
depth_scale = 5000
[field]
channels = 16
fine_appearance_resolution = 0.04
[sampling]
truncation = 0.05
n_strat = 48
[mapping]
iters = 60
valid_depth_only = true
w_color = 2.5
[tracking]
iters = 200
lr_translation = 0.01
lr_rotation = 0.002
lr_final_scale = 0.25
[ablation]
shared_planes = true
fine_only = true
combine = sum
no_importance = true
single_trunc_loss = true
freeze_map_poses = true
no_color = true
[run]
seed = 7
first_pose = identity
log_level = debug
mesh_voxel = 0.02
)";
  const RunConfig a = RunConfig::parse(IniDocument::parse_string(text));
  EXPECT_EQ(a.slam.seed, 7u);
  EXPECT_EQ(a.slam.field.levels, LevelMode::FineOnly);
  EXPECT_FALSE(a.slam.first_pose_from_gt);
  EXPECT_FALSE(a.slam.use_color);
  ASSERT_TRUE(a.bounds.has_value());
  EXPECT_EQ(a.bounds->max.z(), 3.25);
  const RunConfig b = RunConfig::parse(IniDocument::parse_string(a.serialize()));
  EXPECT_EQ(b.serialize(), a.serialize());
  EXPECT_EQ(b.camera, a.camera);
  EXPECT_EQ(b.slam.track_lr_final_scale, 0.25);
}

TEST(RunConfig, ErrorsNameTheField) {
  EXPECT_EQ(field_of("[sampling]\ntruncation = 0\n"), "sampling.truncation");
  EXPECT_EQ(field_of("[sampling]\ntruncation = -0.1\n"), "sampling.truncation");
  EXPECT_EQ(field_of("[field]\nfine_geometry_resolution = 0.5\n"), "field.fine_geometry_resolution");
  EXPECT_EQ(field_of("[field]\ncoarse_resolution = 0\n"), "field.coarse_resolution");
  EXPECT_EQ(field_of("[mapping]\niters = 0\n"), "mapping.iters");
  EXPECT_EQ(field_of("[tracking]\niters = 0\n"), "tracking.iters");
  EXPECT_EQ(field_of("[scene]\nbounds = 0 0 0 1 -1 1\n"), "scene.bounds");
  EXPECT_EQ(field_of("[scene]\nbounds = 0 0 0 1\n"), "scene.bounds");
  EXPECT_EQ(field_of("[mapping]\nitres = 3\n"), "mapping.itres");
  EXPECT_EQ(field_of("[bogus]\n"), "bogus");
  EXPECT_EQ(field_of("[run]\nseed = x\n"), "run.seed");
  EXPECT_EQ(field_of("[ablation]\ncoarse_only = true\nfine_only = true\n"), "ablation.coarse_only");
  EXPECT_EQ(field_of("[mapping]\nvalid_depth_only = maybe\n"), "mapping.valid_depth_only");
  EXPECT_EQ(field_of("[tracking]\nlr_final_scale = 1.5\n"), "tracking.lr_final_scale");
}

TEST(RunConfig, DatasetPathRelativeToConfigFile) {
  const auto dir = std::filesystem::temp_directory_path() / "tpslam_cfg";
  std::filesystem::create_directories(dir);
  const auto path = dir / "run.cfg";
  std::ofstream(path) << "[dataset]\npath = seq\n";
  const RunConfig c = RunConfig::load(path.string());
  EXPECT_EQ(std::filesystem::path(c.dataset_path), (dir / "seq").lexically_normal());
  std::filesystem::remove_all(dir);
}
