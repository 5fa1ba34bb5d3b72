#pragma once

// TSDF volume sampling, marching cubes, mesh cleanup, visibility culling and PLY I/O.

#include "tpslam/frame.hpp"
#include "tpslam/mc_tables.hpp"
#include "tpslam/renderer.hpp"
#include "tpslam/scene_field.hpp"

#include <Eigen/Geometry>

#include <cstring>
#include <fstream>
#include <map>
#include <unordered_map>
#include <vector>

namespace tpslam {

struct TriMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<std::array<std::uint8_t, 3>> colors;  // empty or one per vertex

  bool empty() const { return faces.empty(); }

  Eigen::Vector3d normal(std::size_t f) const {
    const auto& t = faces[f];
    return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
  }
  double face_area(std::size_t f) const { return 0.5 * normal(f).norm(); }
  Eigen::Vector3d centroid(std::size_t f) const {
    const auto& t = faces[f];
    return (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
  }
  double area() const {
    double a = 0;
    for (std::size_t f = 0; f < faces.size(); ++f) a += face_area(f);
    return a;
  }
};

/// Node-sampled scalar grid over a box: value(i, j, k) at min + (i, j, k) * voxel.
struct TsdfVolume {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double voxel = 0.01;
  std::array<int, 3> dims{0, 0, 0};
  std::vector<float> values;

  std::size_t index(int i, int j, int k) const {
    return (std::size_t(k) * dims[1] + j) * dims[0] + i;
  }
  float at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Eigen::Vector3d position(int i, int j, int k) const {
    return origin + voxel * Eigen::Vector3d(i, j, k);
  }
};

inline std::array<int, 3> volume_dims(const Bounds& b, double voxel) {
  const Eigen::Vector3d e = b.extent();
  return {grid_nodes(e.x(), voxel), grid_nodes(e.y(), voxel), grid_nodes(e.z(), voxel)};
}

/// Samples `fn(p)` at every grid node, parallel over z slices.
template <class Fn>
TsdfVolume sample_volume(const Bounds& b, double voxel, Fn&& fn, int chunks = 0) {
  if (!(voxel > 0)) throw ConfigError("mesh.voxel", "must be positive");
  TsdfVolume v;
  v.origin = b.min;
  v.voxel = voxel;
  v.dims = volume_dims(b, voxel);
  v.values.resize(std::size_t(v.dims[0]) * v.dims[1] * v.dims[2]);
  parallel_chunks(std::size_t(v.dims[2]), chunks > 0 ? chunks : worker_count(),
                  [&](int, std::size_t k0, std::size_t k1) {
                    for (std::size_t k = k0; k < k1; ++k) {
                      for (int j = 0; j < v.dims[1]; ++j) {
                        for (int i = 0; i < v.dims[0]; ++i) {
                          v.values[v.index(i, j, int(k))] = float(fn(v.position(i, j, int(k))));
                        }
                      }
                    }
                  });
  return v;
}

/// Decoded TSDF of the field at every grid node. Nodes past the box edge are clamped to it.
template <class T>
TsdfVolume fill_volume(const SceneField<T>& field, double voxel, int chunks = 0) {
  const Bounds& b = field.bounds();
  const int workers = chunks > 0 ? chunks : worker_count();
  std::vector<DecodeScratch<T>> scratch(std::size_t(workers), DecodeScratch<T>(field.options()));
  // one scratch per z-slice chunk: chunk c owns scratch[c]
  TsdfVolume v;
  v.origin = b.min;
  v.voxel = voxel;
  v.dims = volume_dims(b, voxel);
  if (!(voxel > 0)) throw ConfigError("mesh.voxel", "must be positive");
  v.values.resize(std::size_t(v.dims[0]) * v.dims[1] * v.dims[2]);
  parallel_chunks(std::size_t(v.dims[2]), workers, [&](int c, std::size_t k0, std::size_t k1) {
    auto& s = scratch[std::size_t(c)];
    for (std::size_t k = k0; k < k1; ++k) {
      for (int j = 0; j < v.dims[1]; ++j) {
        for (int i = 0; i < v.dims[0]; ++i) {
          const Eigen::Vector3d p = v.position(i, j, int(k)).cwiseMin(b.max);
          v.values[v.index(i, j, int(k))] = float(decode_tsdf(field, Vec3<T>(p.cast<T>()), s));
        }
      }
    }
  });
  return v;
}

/// Merges vertices closer than `tol` and drops faces that are degenerate
/// (repeated index or area below 1e-12) as well as unreferenced vertices.
inline TriMesh clean_mesh(const TriMesh& in, double tol = 1e-7) {
  struct KeyHash {
    std::size_t operator()(const std::array<std::int64_t, 3>& k) const {
      return std::size_t(CounterRng::key(std::uint64_t(k[0]), std::uint64_t(k[1]), std::uint64_t(k[2])));
    }
  };
  std::unordered_map<std::array<std::int64_t, 3>, int, KeyHash> cells;
  std::vector<int> remap(in.vertices.size());
  std::vector<Eigen::Vector3d> verts;
  std::vector<std::array<std::uint8_t, 3>> cols;
  for (std::size_t i = 0; i < in.vertices.size(); ++i) {
    const Eigen::Vector3d& p = in.vertices[i];
    const std::array<std::int64_t, 3> key{std::llround(p.x() / tol), std::llround(p.y() / tol),
                                          std::llround(p.z() / tol)};
    int found = -1;
    // neighbouring cells catch pairs split by the rounding boundary
    for (int dx = -1; dx <= 1 && found < 0; ++dx)
      for (int dy = -1; dy <= 1 && found < 0; ++dy)
        for (int dz = -1; dz <= 1 && found < 0; ++dz) {
          auto it = cells.find({key[0] + dx, key[1] + dy, key[2] + dz});
          if (it != cells.end() && (verts[it->second] - p).norm() <= tol) found = it->second;
        }
    if (found < 0) {
      found = int(verts.size());
      verts.push_back(p);
      if (!in.colors.empty()) cols.push_back(in.colors[i]);
      cells.emplace(key, found);
    }
    remap[i] = found;
  }
  TriMesh out;
  std::vector<int> used(verts.size(), -1);
  for (const auto& f : in.faces) {
    const std::array<int, 3> t{remap[f[0]], remap[f[1]], remap[f[2]]};
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    if (0.5 * (verts[t[1]] - verts[t[0]]).cross(verts[t[2]] - verts[t[0]]).norm() <= 1e-12) continue;
    std::array<int, 3> g;
    for (int c = 0; c < 3; ++c) {
      if (used[t[c]] < 0) {
        used[t[c]] = int(out.vertices.size());
        out.vertices.push_back(verts[t[c]]);
        if (!cols.empty()) out.colors.push_back(cols[t[c]]);
      }
      g[c] = used[t[c]];
    }
    out.faces.push_back(g);
  }
  return out;
}

/// Isosurface of the volume with normals pointing toward increasing value.
/// Vertices on shared cube edges are shared between faces.
inline TriMesh marching_cubes(const TsdfVolume& v, double iso = 0.0) {
  TriMesh mesh;
  const auto [nx, ny, nz] = v.dims;
  if (nx < 2 || ny < 2 || nz < 2) return mesh;
  // edge id = 3 * node index + axis
  std::unordered_map<std::uint64_t, int> edge_vertex;
  auto vertex_on = [&](int i, int j, int k, int axis) {
    const std::uint64_t key = 3 * std::uint64_t(v.index(i, j, k)) + std::uint64_t(axis);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    int i1 = i, j1 = j, k1 = k;
    (axis == 0 ? i1 : axis == 1 ? j1 : k1) += 1;
    const double a = v.at(i, j, k) - iso, b = v.at(i1, j1, k1) - iso;
    const double t = std::clamp(a / (a - b), 0.0, 1.0);
    const Eigen::Vector3d p = v.position(i, j, k) + t * (v.position(i1, j1, k1) - v.position(i, j, k));
    const int id = int(mesh.vertices.size());
    mesh.vertices.push_back(p);
    edge_vertex.emplace(key, id);
    return id;
  };
  for (int k = 0; k + 1 < nz; ++k) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& o = mc::kCorners[c];
          if (v.at(i + o[0], j + o[1], k + o[2]) < iso) config |= 1 << c;
        }
        if (mc::kEdgeTable[config] == 0) continue;
        int ids[12];
        for (int e = 0; e < 12; ++e) {
          if (!(mc::kEdgeTable[config] & (1 << e))) continue;
          const auto& a = mc::kCorners[mc::kEdges[e][0]];
          const auto& b = mc::kCorners[mc::kEdges[e][1]];
          const int axis = a[0] != b[0] ? 0 : a[1] != b[1] ? 1 : 2;
          ids[e] = vertex_on(i + std::min(a[0], b[0]), j + std::min(a[1], b[1]),
                             k + std::min(a[2], b[2]), axis);
        }
        const auto& row = mc::kTriTable[config];
        for (int t = 0; t + 2 < mc::kTriTableWidth && row[t] >= 0; t += 3) {
          mesh.faces.push_back({ids[row[t]], ids[row[t + 1]], ids[row[t + 2]]});
        }
      }
    }
  }
  return clean_mesh(mesh);
}

/// Vertex colors from the appearance decoder.
template <class T>
void color_vertices(TriMesh& mesh, const SceneField<T>& field) {
  mesh.colors.resize(mesh.vertices.size());
  DecodeScratch<T> s(field.options());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Eigen::Vector3d p = mesh.vertices[i].cwiseMax(field.bounds().min).cwiseMin(field.bounds().max);
    const auto c = decode_color(field, Vec3<T>(p.cast<T>()), s);
    for (int k = 0; k < 3; ++k) {
      mesh.colors[i][k] = std::uint8_t(std::lround(std::clamp(double(c[k]), 0.0, 1.0) * 255.0));
    }
  }
}

/// A posed depth observation used for culling.
struct CullView {
  CameraPose<double> pose;
  const FrameRecord* frame = nullptr;
};

/// Whether `p` is in front of the camera, projects inside the image, and lies
/// no farther than the measured depth there plus `tolerance`.
inline bool visible_in(const Eigen::Vector3d& p, const CullView& view, const CameraIntrinsics& K,
                       double tolerance) {
  const Eigen::Vector3d c = view.pose.inverse() * p;
  if (!(c.z() > 1e-9)) return false;
  const auto px = K.project<double>(c);
  const int u = int(std::lround(px[0])), v = int(std::lround(px[1]));
  if (u < 0 || v < 0 || u >= K.width || v >= K.height) return false;
  const double d = view.frame->depth_at(u, v);
  return d > 0 && c.z() <= d + tolerance;
}

/// Keeps the faces whose centroid is visible in at least one view.
inline TriMesh cull_mesh(const TriMesh& mesh, const std::vector<CullView>& views,
                         const CameraIntrinsics& K, double tolerance, int chunks = 0) {
  std::vector<char> keep(mesh.faces.size(), 0);
  parallel_chunks(mesh.faces.size(), chunks > 0 ? chunks : worker_count(),
                  [&](int, std::size_t b, std::size_t e) {
                    for (std::size_t f = b; f < e; ++f) {
                      const Eigen::Vector3d c = mesh.centroid(f);
                      for (const auto& v : views) {
                        if (visible_in(c, v, K, tolerance)) {
                          keep[f] = 1;
                          break;
                        }
                      }
                    }
                  });
  TriMesh out = mesh;
  out.faces.clear();
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    if (keep[f]) out.faces.push_back(mesh.faces[f]);
  }
  return clean_mesh(out, 0.0);
}

/// Number of edges not shared by exactly two faces.
inline std::size_t boundary_edge_count(const TriMesh& mesh) {
  std::map<std::pair<int, int>, int> edges;
  for (const auto& f : mesh.faces) {
    for (int c = 0; c < 3; ++c) {
      const int a = f[c], b = f[(c + 1) % 3];
      ++edges[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::size_t bad = 0;
  for (const auto& [e, n] : edges) bad += n != 2;
  return bad;
}

/// Binary little-endian PLY: float32 xyz, optional uchar rgb, uchar count + int32 indices.
inline void write_ply(const std::string& path, const TriMesh& mesh) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path);
  const bool color = mesh.colors.size() == mesh.vertices.size() && !mesh.vertices.empty();
  os << "ply\nformat binary_little_endian 1.0\n";
  os << "element vertex " << mesh.vertices.size() << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  if (color) os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  os << "element face " << mesh.faces.size() << "\n";
  os << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const float xyz[3] = {float(mesh.vertices[i].x()), float(mesh.vertices[i].y()),
                          float(mesh.vertices[i].z())};
    os.write(reinterpret_cast<const char*>(xyz), sizeof xyz);
    if (color) os.write(reinterpret_cast<const char*>(mesh.colors[i].data()), 3);
  }
  for (const auto& f : mesh.faces) {
    const std::uint8_t n = 3;
    os.write(reinterpret_cast<const char*>(&n), 1);
    const std::int32_t idx[3] = {f[0], f[1], f[2]};
    os.write(reinterpret_cast<const char*>(idx), sizeof idx);
  }
  if (!os) throw Error("failed writing " + path);
}

/// Reads the binary PLY layout written by write_ply (colors optional).
inline TriMesh read_ply(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open " + path);
  std::string line;
  std::size_t nv = 0, nf = 0;
  bool color = false, binary = false, in_vertex = false;
  int vertex_props = 0;
  while (std::getline(is, line)) {
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      binary = fmt == "binary_little_endian";
    } else if (word == "element") {
      std::string kind;
      ls >> kind;
      in_vertex = kind == "vertex";
      (in_vertex ? nv : nf) = 0;
      if (in_vertex) ls >> nv;
      else ls >> nf;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      if (name == "red") color = true;
      ++vertex_props;
    }
  }
  if (!binary) throw DatasetError(path + ": only binary_little_endian PLY is supported");
  if (vertex_props != (color ? 6 : 3)) throw DatasetError(path + ": unsupported vertex layout");
  TriMesh mesh;
  mesh.vertices.resize(nv);
  if (color) mesh.colors.resize(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    float xyz[3];
    is.read(reinterpret_cast<char*>(xyz), sizeof xyz);
    mesh.vertices[i] = {xyz[0], xyz[1], xyz[2]};
    if (color) is.read(reinterpret_cast<char*>(mesh.colors[i].data()), 3);
  }
  mesh.faces.resize(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    std::uint8_t n = 0;
    is.read(reinterpret_cast<char*>(&n), 1);
    if (n != 3) throw DatasetError(path + ": non-triangle face");
    std::int32_t idx[3];
    is.read(reinterpret_cast<char*>(idx), sizeof idx);
    for (int c = 0; c < 3; ++c) {
      if (idx[c] < 0 || std::size_t(idx[c]) >= nv) throw DatasetError(path + ": index out of range");
    }
    mesh.faces[f] = {idx[0], idx[1], idx[2]};
  }
  if (!is) throw DatasetError(path + ": truncated file");
  return mesh;
}

}  // namespace tpslam
