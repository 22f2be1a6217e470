#pragma once

// Scenes as signed distance grids with a floor height and a walkable mask.

#include "dip/action.hpp"
#include "dip/kinematics.hpp"
#include "dip/log.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dip {

class SceneFormatError : public std::runtime_error {
 public:
  SceneFormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Values are stored x-fastest: index = i + nx * (j + ny * k).
struct SdfGrid {
  int nx = 2;
  int ny = 2;
  int nz = 2;
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;
  std::vector<float> values;

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(nx) * (static_cast<std::size_t>(j) +
                                            static_cast<std::size_t>(ny) * static_cast<std::size_t>(k));
  }
  float at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 node(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }

  void validate() const {
    if (nx < 2 || ny < 2 || nz < 2) throw SceneError("sdf grid needs at least 2 nodes per axis");
    if (!(spacing > 0.0) || !std::isfinite(spacing)) throw SceneError("sdf grid spacing must be > 0");
    if (!origin.allFinite()) throw SceneError("sdf grid origin must be finite");
    if (values.size() != cell_count()) throw SceneError("sdf grid value count mismatch");
    for (float v : values) {
      if (!std::isfinite(v)) throw SceneError("sdf grid contains non-finite values");
    }
  }
};

struct SdfSample {
  double value = 0.0;
  Vec3 gradient = Vec3::Zero();
};

struct SceneField {
  SdfGrid sdf;
  double floor_height = 0.0;
  std::vector<std::uint8_t> walkable;  // nx * ny, x-fastest

  void validate() const {
    sdf.validate();
    if (!std::isfinite(floor_height)) throw SceneError("floor height must be finite");
    if (walkable.size() != static_cast<std::size_t>(sdf.nx) * static_cast<std::size_t>(sdf.ny)) {
      throw SceneError("walkable mask dims do not match the sdf xy lattice");
    }
  }

  bool walkable_at(int i, int j) const {
    return walkable[static_cast<std::size_t>(i) + static_cast<std::size_t>(sdf.nx) * static_cast<std::size_t>(j)] != 0;
  }

  /// Walkability of the lattice column nearest to p. Points more than half a
  /// cell outside the grid are not walkable.
  bool is_walkable(const Vec3& p) const {
    const double u = (p.x() - sdf.origin.x()) / sdf.spacing;
    const double v = (p.y() - sdf.origin.y()) / sdf.spacing;
    const int i = static_cast<int>(std::lround(u));
    const int j = static_cast<int>(std::lround(v));
    if (i < 0 || j < 0 || i >= sdf.nx || j >= sdf.ny) return false;
    return walkable_at(i, j);
  }
};

/// Target joints for a sub-task, e.g. the pelvis for locomotion.
struct GoalJoint {
  int joint = 0;
  Vec3 position = Vec3::Zero();
};

struct GoalSpec {
  std::vector<GoalJoint> joints;
  Action action = Action::kLocomotion;

  void validate(int joint_count = kJointCount) const {
    if (joints.empty()) throw SceneError("goal needs at least one target joint");
    for (const auto& g : joints) {
      if (g.joint < 0 || g.joint >= joint_count) {
        throw SceneError("goal joint index " + std::to_string(g.joint) + " out of range");
      }
      if (!g.position.allFinite()) throw SceneError("goal position must be finite");
    }
  }
};

/// Trilinear interpolation with the query point clamped to the grid box. The
/// gradient is the exact derivative of the interpolant (zero along axes where
/// the point was clamped).
inline SdfSample sdf_query(const SdfGrid& g, const Vec3& p) {
  double f[3];
  int c[3];
  bool inside[3];
  const int n[3] = {g.nx, g.ny, g.nz};
  for (int a = 0; a < 3; ++a) {
    double u = (p[a] - g.origin[a]) / g.spacing;
    inside[a] = u >= 0.0 && u <= n[a] - 1;
    u = std::clamp(u, 0.0, static_cast<double>(n[a] - 1));
    c[a] = std::min(static_cast<int>(std::floor(u)), n[a] - 2);
    f[a] = u - c[a];
  }
  double v[2][2][2];
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) v[dx][dy][dz] = g.at(c[0] + dx, c[1] + dy, c[2] + dz);

  const double fx = f[0], fy = f[1], fz = f[2];
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  const double c00 = lerp(v[0][0][0], v[1][0][0], fx);
  const double c10 = lerp(v[0][1][0], v[1][1][0], fx);
  const double c01 = lerp(v[0][0][1], v[1][0][1], fx);
  const double c11 = lerp(v[0][1][1], v[1][1][1], fx);
  const double c0 = lerp(c00, c10, fy);
  const double c1 = lerp(c01, c11, fy);

  SdfSample out;
  out.value = lerp(c0, c1, fz);

  const double dx00 = v[1][0][0] - v[0][0][0];
  const double dx10 = v[1][1][0] - v[0][1][0];
  const double dx01 = v[1][0][1] - v[0][0][1];
  const double dx11 = v[1][1][1] - v[0][1][1];
  const double gx = lerp(lerp(dx00, dx10, fy), lerp(dx01, dx11, fy), fz);
  const double gy = lerp(c10 - c00, c11 - c01, fz);
  const double gz = c1 - c0;
  out.gradient = Vec3(inside[0] ? gx : 0.0, inside[1] ? gy : 0.0, inside[2] ? gz : 0.0) / g.spacing;
  return out;
}

inline SdfSample sdf_query(const SceneField& scene, const Vec3& p) { return sdf_query(scene.sdf, p); }

struct BoxObstacle {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();
};

struct SphereObstacle {
  Vec3 center = Vec3::Zero();
  double radius = 0.5;
};

struct ObstacleSpec {
  std::vector<BoxObstacle> boxes;
  std::vector<SphereObstacle> spheres;
  Vec3 bounds_min = Vec3(-5.0, -5.0, 0.0);
  Vec3 bounds_max = Vec3(5.0, 5.0, 2.5);
  double spacing = 0.1;
  double floor_height = 0.0;
};

inline constexpr double kEmptySceneDistance = 1000.0;
inline constexpr double kWalkableClearance = 2.0;

inline double box_sdf(const BoxObstacle& b, const Vec3& p) {
  const Vec3 q = (p - b.center).cwiseAbs() - 0.5 * b.size;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

inline double sphere_sdf(const SphereObstacle& s, const Vec3& p) { return (p - s.center).norm() - s.radius; }

inline double obstacles_sdf(const ObstacleSpec& spec, const Vec3& p) {
  double d = kEmptySceneDistance;
  for (const auto& b : spec.boxes) d = std::min(d, box_sdf(b, p));
  for (const auto& s : spec.spheres) d = std::min(d, sphere_sdf(s, p));
  return d;
}

namespace scene_detail {

inline bool intervals_overlap(double a0, double a1, double b0, double b1) { return a0 <= b1 && b0 <= a1; }

inline bool column_blocked(const ObstacleSpec& spec, double x, double y) {
  const double lo = spec.floor_height;
  const double hi = spec.floor_height + kWalkableClearance;
  for (const auto& b : spec.boxes) {
    const Vec3 h = 0.5 * b.size;
    if (std::abs(x - b.center.x()) <= h.x() && std::abs(y - b.center.y()) <= h.y() &&
        intervals_overlap(b.center.z() - h.z(), b.center.z() + h.z(), lo, hi)) {
      return true;
    }
  }
  for (const auto& s : spec.spheres) {
    const double d2 = (x - s.center.x()) * (x - s.center.x()) + (y - s.center.y()) * (y - s.center.y());
    if (d2 > s.radius * s.radius) continue;
    const double half = std::sqrt(s.radius * s.radius - d2);
    if (intervals_overlap(s.center.z() - half, s.center.z() + half, lo, hi)) return true;
  }
  return false;
}

}  // namespace scene_detail

/// Walkable mask from the stored grid: a column is walkable when every node
/// between the floor and floor + 2.0 lies outside all solids.
inline std::vector<std::uint8_t> derive_walkable(const SdfGrid& g, double floor_height) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(g.nx) * static_cast<std::size_t>(g.ny), 1);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      for (int k = 0; k < g.nz; ++k) {
        const double z = g.origin.z() + k * g.spacing;
        if (z < floor_height || z > floor_height + kWalkableClearance) continue;
        if (g.at(i, j, k) <= 0.0f) {
          mask[static_cast<std::size_t>(i) + static_cast<std::size_t>(g.nx) * static_cast<std::size_t>(j)] = 0;
          break;
        }
      }
    }
  }
  return mask;
}

/// Samples the exact union SDF of the obstacles on a lattice covering the bounds.
inline SceneField bake_boxes(const ObstacleSpec& spec) {
  if (!(spec.spacing > 0.0)) throw SceneError("bake: spacing must be > 0");
  const Vec3 extent = spec.bounds_max - spec.bounds_min;
  if ((extent.array() <= 0.0).any()) throw SceneError("bake: empty bounds");
  auto inside_bounds = [&](const Vec3& lo, const Vec3& hi) {
    return (lo.array() >= spec.bounds_min.array()).all() && (hi.array() <= spec.bounds_max.array()).all();
  };
  double smallest = std::numeric_limits<double>::infinity();
  for (const auto& b : spec.boxes) {
    if (!inside_bounds(b.center - 0.5 * b.size, b.center + 0.5 * b.size)) {
      throw SceneError("bake: box extends outside the bounds");
    }
    smallest = std::min(smallest, b.size.minCoeff());
  }
  for (const auto& s : spec.spheres) {
    const Vec3 r = Vec3::Constant(s.radius);
    if (!inside_bounds(s.center - r, s.center + r)) throw SceneError("bake: sphere extends outside the bounds");
    smallest = std::min(smallest, 2.0 * s.radius);
  }
  if (smallest < 3.0 * spec.spacing) {
    warn("bake: spacing " + std::to_string(spec.spacing) +
         " gives fewer than 3 cells across the smallest obstacle");
  }

  SceneField scene;
  SdfGrid& g = scene.sdf;
  g.nx = static_cast<int>(std::floor(extent.x() / spec.spacing + 1e-9)) + 1;
  g.ny = static_cast<int>(std::floor(extent.y() / spec.spacing + 1e-9)) + 1;
  g.nz = static_cast<int>(std::floor(extent.z() / spec.spacing + 1e-9)) + 1;
  g.nx = std::max(g.nx, 2);
  g.ny = std::max(g.ny, 2);
  g.nz = std::max(g.nz, 2);
  g.origin = spec.bounds_min;
  g.spacing = spec.spacing;
  g.values.resize(g.cell_count());
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) g.values[g.index(i, j, k)] = static_cast<float>(obstacles_sdf(spec, g.node(i, j, k)));

  scene.floor_height = spec.floor_height;
  scene.walkable.assign(static_cast<std::size_t>(g.nx) * static_cast<std::size_t>(g.ny), 1);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const Vec3 p = g.node(i, j, 0);
      if (scene_detail::column_blocked(spec, p.x(), p.y())) {
        scene.walkable[static_cast<std::size_t>(i) + static_cast<std::size_t>(g.nx) * static_cast<std::size_t>(j)] = 0;
      }
    }
  }
  return scene;
}

// ---------------------------------------------------------------------------
// DIPS1 file format.

namespace scene_detail {

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void append_le_float(std::string& out, float f) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
  if constexpr (std::endian::native == std::endian::big) {
    bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
  }
  char bytes[4];
  std::memcpy(bytes, &bits, 4);
  out.append(bytes, 4);
}

inline float read_le_float(const char* p) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, p, 4);
  if constexpr (std::endian::native == std::endian::big) {
    bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) | (bits >> 24);
  }
  return std::bit_cast<float>(bits);
}

}  // namespace scene_detail

inline std::string serialize_scene(const SceneField& scene) {
  scene.validate();
  const SdfGrid& g = scene.sdf;
  using scene_detail::format_real;
  std::string out = "DIPS1\n";
  out += "dims " + std::to_string(g.nx) + " " + std::to_string(g.ny) + " " + std::to_string(g.nz) + "\n";
  out += "origin " + format_real(g.origin.x()) + " " + format_real(g.origin.y()) + " " +
         format_real(g.origin.z()) + "\n";
  out += "spacing " + format_real(g.spacing) + "\n";
  out += "floor " + format_real(scene.floor_height) + "\n";
  out += "walkable 1\n";
  out.reserve(out.size() + 4 * g.values.size() + scene.walkable.size());
  for (float v : g.values) scene_detail::append_le_float(out, v);
  for (auto w : scene.walkable) out.push_back(w != 0 ? '\1' : '\0');
  return out;
}

inline SceneField parse_scene(const std::string& bytes) {
  std::size_t pos = 0;
  auto next_line = [&](const char* what) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw SceneFormatError(std::string("missing header line '") + what + "'", pos);
    std::string line = bytes.substr(pos, nl - pos);
    const std::size_t start = pos;
    pos = nl + 1;
    return std::pair{line, start};
  };
  auto expect_key = [](const std::string& line, std::size_t at, const std::string& key) {
    std::istringstream ls(line);
    std::string k;
    ls >> k;
    if (k != key) throw SceneFormatError("expected '" + key + "' header, found '" + k + "'", at);
    return ls;
  };

  {
    auto [magic, at] = next_line("DIPS1");
    if (magic != "DIPS1") throw SceneFormatError("bad magic '" + magic.substr(0, 16) + "'", at);
  }
  SceneField scene;
  SdfGrid& g = scene.sdf;
  auto read_reals = [](std::istringstream& ls, std::size_t count, std::size_t at, const char* key) {
    std::vector<double> vals;
    std::string tok;
    while (ls >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') throw SceneFormatError(std::string("malformed number in '") + key + "'", at);
      vals.push_back(v);
    }
    if (vals.size() != count) throw SceneFormatError(std::string("wrong field count in '") + key + "'", at);
    return vals;
  };
  {
    auto [line, at] = next_line("dims");
    auto ls = expect_key(line, at, "dims");
    long long n[3];
    if (!(ls >> n[0] >> n[1] >> n[2])) throw SceneFormatError("malformed dims", at);
    std::string extra;
    if (ls >> extra) throw SceneFormatError("malformed dims", at);
    for (long long v : n) {
      if (v < 2 || v > 100000) throw SceneFormatError("dims out of range", at);
    }
    g.nx = static_cast<int>(n[0]);
    g.ny = static_cast<int>(n[1]);
    g.nz = static_cast<int>(n[2]);
  }
  {
    auto [line, at] = next_line("origin");
    auto ls = expect_key(line, at, "origin");
    auto v = read_reals(ls, 3, at, "origin");
    g.origin = Vec3(v[0], v[1], v[2]);
  }
  {
    auto [line, at] = next_line("spacing");
    auto ls = expect_key(line, at, "spacing");
    g.spacing = read_reals(ls, 1, at, "spacing")[0];
    if (!(g.spacing > 0.0)) throw SceneFormatError("spacing must be > 0", at);
  }
  {
    auto [line, at] = next_line("floor");
    auto ls = expect_key(line, at, "floor");
    scene.floor_height = read_reals(ls, 1, at, "floor")[0];
  }
  bool has_walkable = false;
  {
    auto [line, at] = next_line("walkable");
    auto ls = expect_key(line, at, "walkable");
    std::string flag;
    ls >> flag;
    if (flag != "0" && flag != "1") throw SceneFormatError("walkable flag must be 0 or 1", at);
    has_walkable = flag == "1";
  }

  const std::size_t n_values = g.cell_count();
  const std::size_t n_mask = has_walkable ? static_cast<std::size_t>(g.nx) * static_cast<std::size_t>(g.ny) : 0;
  const std::size_t expected = pos + 4 * n_values + n_mask;
  if (bytes.size() != expected) {
    throw SceneFormatError("payload length mismatch: expected " + std::to_string(expected) +
                               " bytes, file has " + std::to_string(bytes.size()),
                           std::min(bytes.size(), expected));
  }
  g.values.resize(n_values);
  for (std::size_t i = 0; i < n_values; ++i) {
    g.values[i] = scene_detail::read_le_float(bytes.data() + pos + 4 * i);
    if (!std::isfinite(g.values[i])) throw SceneFormatError("non-finite sdf value", pos + 4 * i);
  }
  pos += 4 * n_values;
  if (has_walkable) {
    scene.walkable.resize(n_mask);
    for (std::size_t i = 0; i < n_mask; ++i) {
      const auto b = static_cast<unsigned char>(bytes[pos + i]);
      if (b > 1) throw SceneFormatError("walkable byte must be 0 or 1", pos + i);
      scene.walkable[i] = b;
    }
  } else {
    scene.walkable = derive_walkable(g, scene.floor_height);
  }
  return scene;
}

inline void save_scene(const SceneField& scene, const std::string& path) {
  const std::string bytes = serialize_scene(scene);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SceneError("cannot write scene '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw SceneError("failed writing scene '" + path + "'");
}

inline SceneField load_scene(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SceneError("cannot open scene '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_scene(bytes);
}

/// A scene seen from a local motion frame: queries take local points and
/// return local gradients. The local frame differs from the world by a
/// rotation about z and a translation.
class SceneView {
 public:
  explicit SceneView(const SceneField& scene, RigidTransform local_to_world = {})
      : scene_(&scene), to_world_(local_to_world) {}

  const SceneField& scene() const { return *scene_; }
  const RigidTransform& local_to_world() const { return to_world_; }

  SdfSample sdf(const Vec3& p_local) const {
    SdfSample s = sdf_query(*scene_, to_world_.apply(p_local));
    s.gradient = to_world_.R.transpose() * s.gradient;
    return s;
  }

  double floor_height() const { return scene_->floor_height - to_world_.t.z(); }

  bool walkable(const Vec3& p_local) const { return scene_->is_walkable(to_world_.apply(p_local)); }

 private:
  const SceneField* scene_;
  RigidTransform to_world_;
};

}  // namespace dip
