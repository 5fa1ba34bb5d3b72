#pragma once

// Binary scene snapshot: "ESLM" magic, version, field options, camera,
// feature planes (float32, one H x W x C block per stored plane), decoder
// weights, log(beta) and keyframe poses (float64). Little-endian.

#include "tpslam/renderer.hpp"
#include "tpslam/scene_field.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace tpslam {

inline constexpr char kCheckpointMagic[4] = {'E', 'S', 'L', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct KeyframePose {
  std::uint64_t frame_id = 0;
  double timestamp = 0;
  CameraPose<double> pose;
  bool operator==(const KeyframePose&) const = default;
};

template <class T>
struct Checkpoint {
  SceneField<T> field;
  CameraIntrinsics camera;
  double truncation = 0.06;
  std::vector<KeyframePose> keyframes;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

class BinWriter {
 public:
  explicit BinWriter(std::ostream& os) : os_(os) {}
  template <class V>
  void put(V v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), std::streamsize(n)); }

 private:
  std::ostream& os_;
};

class BinReader {
 public:
  BinReader(std::istream& is, std::string source) : is_(is), source_(std::move(source)) {}
  template <class V>
  V get() {
    V v{};
    bytes(&v, sizeof v);
    return v;
  }
  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), std::streamsize(n));
    if (!is_) throw DatasetError(source_ + ": truncated checkpoint");
  }
  [[noreturn]] void fail(const std::string& what) const { throw DatasetError(source_ + ": " + what); }

 private:
  std::istream& is_;
  std::string source_;
};

inline std::uint32_t option_flags(const FieldOptions& o) {
  return (o.shared_planes ? 1u : 0u) | (std::uint32_t(o.levels) << 1) | (std::uint32_t(o.combine) << 3);
}

}  // namespace detail

template <class T>
void write_checkpoint(std::ostream& os, const SceneField<T>& field, const CameraIntrinsics& K,
                      double truncation, const std::vector<KeyframePose>& keyframes) {
  detail::BinWriter w(os);
  w.bytes(kCheckpointMagic, 4);
  w.put(kCheckpointVersion);
  const Bounds& b = field.bounds();
  for (int a = 0; a < 3; ++a) w.put(b.min[a]);
  for (int a = 0; a < 3; ++a) w.put(b.max[a]);
  const FieldOptions& o = field.options();
  w.put(o.coarse_resolution);
  w.put(o.fine_geometry_resolution);
  w.put(o.fine_appearance_resolution);
  w.put(std::uint32_t(o.channels));
  w.put(std::uint32_t(o.hidden));
  w.put(detail::option_flags(o));
  w.put(K.fx);
  w.put(K.fy);
  w.put(K.cx);
  w.put(K.cy);
  w.put(std::uint32_t(K.width));
  w.put(std::uint32_t(K.height));
  w.put(K.depth_scale);
  w.put(truncation);
  // planes: count, then per stored plane H, W, C and the values
  const auto& layouts = field.planes().layouts();
  std::vector<const PlaneLayout*> stored;
  for (const auto& l : layouts) {
    if (l.empty()) continue;
    bool dup = false;
    for (const auto* s : stored) dup = dup || s->offset == l.offset;
    if (!dup) stored.push_back(&l);
  }
  w.put(std::uint32_t(stored.size()));
  const auto& values = field.planes().values();
  std::vector<float> buf;
  for (const auto* l : stored) {
    w.put(std::uint32_t(l->rows));
    w.put(std::uint32_t(l->cols));
    w.put(std::uint32_t(l->channels));
    buf.resize(l->size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = float(values[l->offset + i]);
    w.bytes(buf.data(), buf.size() * sizeof(float));
  }
  const auto& dec = field.decoders();
  w.put(std::uint64_t(dec.size()));
  for (T v : dec) w.put(double(v));
  w.put(double(field.log_beta()));
  w.put(std::uint64_t(keyframes.size()));
  for (const auto& k : keyframes) {
    w.put(k.frame_id);
    w.put(k.timestamp);
    for (double p : k.pose.params) w.put(p);
  }
  if (!os) throw Error("failed writing checkpoint");
}

template <class T>
void save_checkpoint(const std::string& path, const SceneField<T>& field, const CameraIntrinsics& K,
                     double truncation, const std::vector<KeyframePose>& keyframes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  write_checkpoint(os, field, K, truncation, keyframes);
}

template <class T>
Checkpoint<T> read_checkpoint(std::istream& is, const std::string& source = "checkpoint") {
  detail::BinReader r(is, source);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) r.fail("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  Bounds b;
  for (int a = 0; a < 3; ++a) b.min[a] = r.get<double>();
  for (int a = 0; a < 3; ++a) b.max[a] = r.get<double>();
  FieldOptions o;
  o.coarse_resolution = r.get<double>();
  o.fine_geometry_resolution = r.get<double>();
  o.fine_appearance_resolution = r.get<double>();
  o.channels = int(r.get<std::uint32_t>());
  o.hidden = int(r.get<std::uint32_t>());
  const auto flags = r.get<std::uint32_t>();
  o.shared_planes = flags & 1u;
  o.levels = LevelMode((flags >> 1) & 3u);
  o.combine = CombineMode((flags >> 3) & 1u);
  if (((flags >> 1) & 3u) > 2u || (flags >> 4) != 0) r.fail("unknown option flags");
  Checkpoint<T> c;
  c.camera.fx = r.get<double>();
  c.camera.fy = r.get<double>();
  c.camera.cx = r.get<double>();
  c.camera.cy = r.get<double>();
  c.camera.width = int(r.get<std::uint32_t>());
  c.camera.height = int(r.get<std::uint32_t>());
  c.camera.depth_scale = r.get<double>();
  c.truncation = r.get<double>();
  c.field = SceneField<T>(b, o);
  auto& values = c.field.planes().values();
  std::vector<const PlaneLayout*> stored;
  for (const auto& l : c.field.planes().layouts()) {
    if (l.empty()) continue;
    bool dup = false;
    for (const auto* s : stored) dup = dup || s->offset == l.offset;
    if (!dup) stored.push_back(&l);
  }
  if (r.get<std::uint32_t>() != stored.size()) r.fail("plane count does not match the options");
  std::vector<float> buf;
  for (const auto* l : stored) {
    const int rows = int(r.get<std::uint32_t>()), cols = int(r.get<std::uint32_t>()),
              ch = int(r.get<std::uint32_t>());
    if (rows != l->rows || cols != l->cols || ch != l->channels) r.fail("plane shape mismatch");
    buf.resize(l->size());
    r.bytes(buf.data(), buf.size() * sizeof(float));
    for (std::size_t i = 0; i < buf.size(); ++i) values[l->offset + i] = T(buf[i]);
  }
  auto& dec = c.field.decoders();
  if (r.get<std::uint64_t>() != dec.size()) r.fail("decoder size mismatch");
  for (auto& v : dec) v = T(r.get<double>());
  c.field.log_beta() = T(r.get<double>());
  const auto n = r.get<std::uint64_t>();
  if (n > (1ull << 32)) r.fail("implausible keyframe count");
  c.keyframes.resize(n);
  for (auto& k : c.keyframes) {
    k.frame_id = r.get<std::uint64_t>();
    k.timestamp = r.get<double>();
    for (auto& p : k.pose.params) p = r.get<double>();
  }
  return c;
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open " + path);
  return read_checkpoint<T>(is, path);
}

}  // namespace tpslam
