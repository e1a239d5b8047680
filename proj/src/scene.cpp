#include "ct/scene.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ct {

namespace {

using nlohmann::json;

void require(bool cond, const std::string& field, const std::string& what) {
  if (!cond) throw ConfigError("scene config: field '" + field + "' " + what);
}

void check_color(const Vec3d& c, const std::string& field) {
  require(c.x >= 0.0 && c.x <= 1.0 && c.y >= 0.0 && c.y <= 1.0 && c.z >= 0.0 && c.z <= 1.0, field,
          "must have components in [0,1]");
}

void check_inside_bounds(const Vec3d& p, const SceneConfig& cfg, const std::string& field) {
  require(p.x >= cfg.bounds_min.x && p.x <= cfg.bounds_max.x && p.y >= cfg.bounds_min.y &&
              p.y <= cfg.bounds_max.y && p.z >= cfg.bounds_min.z && p.z <= cfg.bounds_max.z,
          field, "must lie inside bounds");
}

}  // namespace

DynamicScene build_scene(const SceneConfig& config) {
  const auto& c = config;
  require(c.schema_version == 1, "schema_version", "must be 1");
  require(c.bounds_min.x < c.bounds_max.x && c.bounds_min.y < c.bounds_max.y &&
              c.bounds_min.z < c.bounds_max.z,
          "bounds", "must have min < max per axis");
  check_color(c.background_color, "background_color");

  for (std::size_t i = 0; i < c.blobs.size(); ++i) {
    const auto& b = c.blobs[i];
    std::string f = "blobs[" + std::to_string(i) + "]";
    require(b.sigma.x > 0.0 && b.sigma.y > 0.0 && b.sigma.z > 0.0, f + ".sigma",
            "must be positive");
    require(b.amplitude >= 0.0, f + ".amplitude", "must be nonnegative");
    check_color(b.color, f + ".color");
    check_inside_bounds(b.center, c, f + ".center");
  }
  for (std::size_t i = 0; i < c.slabs.size(); ++i) {
    const auto& s = c.slabs[i];
    std::string f = "slabs[" + std::to_string(i) + "]";
    require(s.lo.x < s.hi.x && s.lo.y < s.hi.y && s.lo.z < s.hi.z, f, "must have lo < hi");
    require(s.softness > 0.0, f + ".softness", "must be positive");
    require(s.amplitude >= 0.0, f + ".amplitude", "must be nonnegative");
    check_color(s.color, f + ".color");
    check_inside_bounds(s.lo, c, f + ".lo");
    check_inside_bounds(s.hi, c, f + ".hi");
  }

  const auto& a = c.actor;
  require(a.joint_count >= 1, "actor.joint_count", "must be >= 1");
  require(a.key_times.size() >= 2, "actor.key_times", "needs at least 2 samples");
  require(a.key_times.front() == 0.0 && a.key_times.back() == 1.0, "actor.key_times",
          "must cover [0,1]");
  for (std::size_t i = 1; i < a.key_times.size(); ++i)
    require(a.key_times[i] > a.key_times[i - 1], "actor.key_times", "must be strictly increasing");
  require(a.key_joints.size() == a.key_times.size(), "actor.key_joints",
          "must have one entry per key time");
  for (std::size_t t = 0; t < a.key_joints.size(); ++t) {
    require(static_cast<int>(a.key_joints[t].size()) == a.joint_count,
            "actor.key_joints[" + std::to_string(t) + "]", "must have joint_count positions");
    for (const auto& j : a.key_joints[t])
      check_inside_bounds(j, c, "actor.key_joints[" + std::to_string(t) + "]");
  }
  require(!a.bones.empty(), "actor.bones", "must be nonempty");
  require(a.bone_radius.size() == a.bones.size() && a.bone_amplitude.size() == a.bones.size() &&
              a.bone_color.size() == a.bones.size(),
          "actor.bone_*", "must match bone count");
  for (std::size_t i = 0; i < a.bones.size(); ++i) {
    std::string f = "actor.bones[" + std::to_string(i) + "]";
    require(a.bones[i].first >= 0 && a.bones[i].first < a.joint_count && a.bones[i].second >= 0 &&
                a.bones[i].second < a.joint_count,
            f, "references an invalid joint");
    require(a.bone_radius[i] > 0.0, f + ".radius", "must be positive");
    require(a.bone_amplitude[i] >= 0.0, f + ".amplitude", "must be nonnegative");
    check_color(a.bone_color[i], f + ".color");
  }

  return DynamicScene{config};
}

// ---------------------------------------------------------------------------
// presets

namespace {

ActorConfig default_actor() {
  ActorConfig a;
  a.joint_count = 13;
  // 0 head, 1/2 shoulders, 3/4 elbows, 5/6 wrists, 7/8 hips, 9/10 knees,
  // 11/12 ankles (left = negative x).
  // stance with one foot forward and the torso slightly twisted, so the
  // skeleton carries depth spread and camera pose stays well-conditioned
  auto base = std::vector<Vec3d>{
      {0.00, 0.80, -0.06},  {-0.28, 0.52, 0.08}, {0.28, 0.52, -0.10}, {-0.58, 0.28, 0.14},
      {0.58, 0.28, -0.16},  {-0.66, 0.02, 0.20}, {0.66, 0.02, -0.22}, {-0.17, -0.18, 0.05},
      {0.17, -0.18, -0.05}, {-0.20, -0.64, 0.16}, {0.20, -0.64, -0.14}, {-0.22, -1.10, 0.28},
      {0.22, -1.10, -0.24}};

  a.key_times = {0.0, 0.25, 0.5, 0.75, 1.0};
  a.key_joints.assign(5, base);

  // Left arm waves up and reaches forward over the clip, right arm swings
  // back, small hip sway and head bob; deliberately asymmetric so channel
  // swaps are visible.
  auto& k = a.key_joints;
  k[1][3] = {-0.62, 0.46, 0.22};  k[1][5] = {-0.74, 0.40, 0.34};
  k[2][3] = {-0.60, 0.62, 0.28};  k[2][5] = {-0.70, 0.90, 0.44};
  k[3][3] = {-0.50, 0.72, 0.20};  k[3][5] = {-0.52, 1.12, 0.26};
  k[4][3] = {-0.40, 0.78, 0.12};  k[4][5] = {-0.30, 1.24, 0.10};
  k[1][4] = {0.60, 0.24, -0.22};  k[1][6] = {0.70, 0.10, -0.34};
  k[2][4] = {0.62, 0.20, -0.28};  k[2][6] = {0.74, 0.16, -0.44};
  k[3][4] = {0.60, 0.26, -0.20};  k[3][6] = {0.68, 0.06, -0.28};
  k[4][4] = {0.58, 0.30, -0.12};  k[4][6] = {0.64, 0.00, -0.14};
  for (int t = 1; t < 5; ++t) {
    double sway = 0.05 * std::sin(t * M_PI / 2.0);
    for (int j : {0, 1, 2, 7, 8}) {
      k[t][j].x += sway;
      k[t][j].z += 0.4 * sway;
    }
    k[t][0].y += 0.03 * std::sin(t * M_PI / 2.0);
  }

  a.bones = {{0, 0}, {0, 1}, {0, 2}, {1, 2}, {1, 3}, {3, 5}, {2, 4}, {4, 6},
             {1, 7}, {2, 8}, {7, 8}, {7, 9}, {9, 11}, {8, 10}, {10, 12}};
  return a;
}

void style_actor(ActorConfig& a, double limb_radius, double torso_radius, double amplitude,
                 const Vec3d& color_a, const Vec3d& color_b) {
  std::size_t n = a.bones.size();
  a.bone_radius.assign(n, limb_radius);
  a.bone_amplitude.assign(n, amplitude);
  a.bone_color.assign(n, color_a);
  // head sphere and torso bones a bit thicker
  a.bone_radius[0] = torso_radius * 1.15;
  for (std::size_t i : {std::size_t(3), std::size_t(8), std::size_t(9), std::size_t(10)})
    a.bone_radius[i] = torso_radius;
  for (std::size_t i = 1; i < n; i += 2) a.bone_color[i] = color_b;
}

}  // namespace

SceneConfig preset_scene_config(const std::string& name) {
  SceneConfig c;
  c.schema_version = 1;
  c.name = name;
  c.bounds_min = {-4.5, -1.7, -9.5};
  c.bounds_max = {4.5, 5.3, 3.1};
  c.actor = default_actor();

  // Room shell shared by both presets: floor, back wall, two side walls.
  auto floor_slab = SlabPrim{{-4.4, -1.45, -9.4}, {4.4, -1.15, 3.0}, 0.08, 40.0, {}};
  auto back_wall = SlabPrim{{-4.4, -1.65, 2.60}, {4.4, 5.2, 2.95}, 0.08, 40.0, {}};
  auto left_wall = SlabPrim{{-4.40, -1.65, -9.4}, {-4.05, 5.2, 3.0}, 0.08, 40.0, {}};
  auto right_wall = SlabPrim{{4.05, -1.65, -9.4}, {4.40, 5.2, 3.0}, 0.08, 40.0, {}};

  if (name == "scene_a") {
    c.background_color = {0.05, 0.07, 0.10};
    floor_slab.color = {0.45, 0.42, 0.38};
    back_wall.color = {0.25, 0.30, 0.36};
    left_wall.color = {0.30, 0.26, 0.22};
    right_wall.color = {0.22, 0.28, 0.24};
    c.slabs = {floor_slab, back_wall, left_wall, right_wall};
    c.blobs = {{{-2.2, -0.55, 1.2}, {0.50, 0.55, 0.50}, 25.0, {0.70, 0.25, 0.20}},
               {{2.0, -0.75, 0.8}, {0.40, 0.40, 0.40}, 25.0, {0.20, 0.55, 0.70}}};
    style_actor(c.actor, 0.13, 0.15, 60.0, {0.80, 0.62, 0.45}, {0.62, 0.40, 0.30});
  } else if (name == "scene_b") {
    c.background_color = {0.55, 0.52, 0.45};
    floor_slab.color = {0.78, 0.72, 0.60};
    back_wall.color = {0.62, 0.55, 0.48};
    left_wall.color = {0.38, 0.58, 0.40};
    right_wall.color = {0.58, 0.42, 0.52};
    c.slabs = {floor_slab, back_wall, left_wall, right_wall};
    c.blobs = {{{1.8, 0.35, 1.6}, {0.45, 0.45, 0.45}, 22.0, {0.85, 0.75, 0.25}},
               {{-1.9, -0.80, 0.2}, {0.35, 0.50, 0.35}, 25.0, {0.30, 0.35, 0.75}},
               {{-3.0, 0.90, 1.8}, {0.40, 0.40, 0.40}, 22.0, {0.25, 0.60, 0.35}}};
    style_actor(c.actor, 0.16, 0.18, 40.0, {0.32, 0.38, 0.60}, {0.45, 0.50, 0.68});
  } else {
    throw ConfigError("unknown scene preset '" + name + "'");
  }
  return c;
}

DynamicScene build_preset(const std::string& name) {
  return build_scene(preset_scene_config(name));
}

// ---------------------------------------------------------------------------
// JSON I/O

namespace {

json vec_to_json(const Vec3d& v) { return json::array({v.x, v.y, v.z}); }

Vec3d vec_from_json(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError("scene config: field '" + field + "' must be a 3-array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

std::string scene_config_to_json(const SceneConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["name"] = c.name;
  j["bounds"] = {{"min", vec_to_json(c.bounds_min)}, {"max", vec_to_json(c.bounds_max)}};
  j["background_color"] = vec_to_json(c.background_color);
  j["blobs"] = json::array();
  for (const auto& b : c.blobs)
    j["blobs"].push_back({{"center", vec_to_json(b.center)},
                          {"sigma", vec_to_json(b.sigma)},
                          {"amplitude", b.amplitude},
                          {"color", vec_to_json(b.color)}});
  j["slabs"] = json::array();
  for (const auto& s : c.slabs)
    j["slabs"].push_back({{"lo", vec_to_json(s.lo)},
                          {"hi", vec_to_json(s.hi)},
                          {"softness", s.softness},
                          {"amplitude", s.amplitude},
                          {"color", vec_to_json(s.color)}});
  json actor;
  actor["joint_count"] = c.actor.joint_count;
  actor["key_times"] = c.actor.key_times;
  actor["key_joints"] = json::array();
  for (const auto& frame : c.actor.key_joints) {
    json f = json::array();
    for (const auto& p : frame) f.push_back(vec_to_json(p));
    actor["key_joints"].push_back(f);
  }
  actor["bones"] = json::array();
  for (const auto& [a, b] : c.actor.bones) actor["bones"].push_back(json::array({a, b}));
  actor["bone_radius"] = c.actor.bone_radius;
  actor["bone_amplitude"] = c.actor.bone_amplitude;
  actor["bone_color"] = json::array();
  for (const auto& col : c.actor.bone_color) actor["bone_color"].push_back(vec_to_json(col));
  j["actor"] = std::move(actor);
  return j.dump(2);
}

SceneConfig parse_scene_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("scene config: invalid JSON: ") + e.what());
  }
  auto need = [&](const char* field) -> const json& {
    if (!j.contains(field)) throw ConfigError(std::string("scene config: missing field '") + field + "'");
    return j.at(field);
  };
  SceneConfig c;
  c.schema_version = need("schema_version").get<int>();
  c.name = j.value("name", "");
  const auto& bounds = need("bounds");
  c.bounds_min = vec_from_json(bounds.at("min"), "bounds.min");
  c.bounds_max = vec_from_json(bounds.at("max"), "bounds.max");
  c.background_color = vec_from_json(need("background_color"), "background_color");
  for (const auto& jb : j.value("blobs", json::array())) {
    GaussianBlobPrim b;
    b.center = vec_from_json(jb.at("center"), "blobs.center");
    b.sigma = vec_from_json(jb.at("sigma"), "blobs.sigma");
    b.amplitude = jb.at("amplitude").get<double>();
    b.color = vec_from_json(jb.at("color"), "blobs.color");
    c.blobs.push_back(b);
  }
  for (const auto& js : j.value("slabs", json::array())) {
    SlabPrim s;
    s.lo = vec_from_json(js.at("lo"), "slabs.lo");
    s.hi = vec_from_json(js.at("hi"), "slabs.hi");
    s.softness = js.at("softness").get<double>();
    s.amplitude = js.at("amplitude").get<double>();
    s.color = vec_from_json(js.at("color"), "slabs.color");
    c.slabs.push_back(s);
  }
  const auto& ja = need("actor");
  c.actor.joint_count = ja.at("joint_count").get<int>();
  c.actor.key_times = ja.at("key_times").get<std::vector<double>>();
  for (const auto& frame : ja.at("key_joints")) {
    std::vector<Vec3d> f;
    for (const auto& p : frame) f.push_back(vec_from_json(p, "actor.key_joints"));
    c.actor.key_joints.push_back(std::move(f));
  }
  for (const auto& jb : ja.at("bones")) {
    if (!jb.is_array() || jb.size() != 2)
      throw ConfigError("scene config: field 'actor.bones' entries must be index pairs");
    c.actor.bones.emplace_back(jb[0].get<int>(), jb[1].get<int>());
  }
  c.actor.bone_radius = ja.at("bone_radius").get<std::vector<double>>();
  c.actor.bone_amplitude = ja.at("bone_amplitude").get<std::vector<double>>();
  for (const auto& col : ja.at("bone_color"))
    c.actor.bone_color.push_back(vec_from_json(col, "actor.bone_color"));
  return c;
}

SceneConfig load_scene_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_scene_config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scene_config_json(ss.str());
}

void save_scene_config(const SceneConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("save_scene_config: cannot open " + path);
  out << scene_config_to_json(cfg) << "\n";
}

}  // namespace ct
