#include "geoflow/serialization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace geoflow {

std::string format_double(double value) {
  char buf[64];
  // integral values print without an exponent ("30", not "3e+01")
  if (value == std::floor(value) && std::abs(value) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%.0f", value);
    if (std::strtod(buf, nullptr) == value) return buf;
  }
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  return buf;
}

void reject_unknown_keys(const Json& obj,
                         const std::vector<std::string>& allowed,
                         const std::string& context) {
  if (!obj.is_object()) {
    throw ConfigError(context + ": expected an object");
  }
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const auto& a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError(context + ": unknown key '" + key + "'");
    }
  }
}

Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // e.byte is a 1-based offset into the input
    std::size_t line = 1;
    const std::size_t limit = std::min<std::size_t>(
        e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (text[i] == '\n') ++line;
    }
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + e.what());
  }
}

Json read_json_file(const std::string& path) {
  return parse_json_text(read_text_file(path), path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

namespace {

Json intrinsics_to_json(const Intrinsics& k) {
  return Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx},
              {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

Intrinsics intrinsics_from_json(const Json& j) {
  reject_unknown_keys(j, {"fx", "fy", "cx", "cy", "width", "height"},
                      "intrinsics");
  Intrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  return k;
}

double require_finite(const Json& v, const char* what) {
  if (!v.is_number()) {
    throw ConfigError(std::string(what) + ": expected a number");
  }
  const double d = v.get<double>();
  if (!std::isfinite(d)) {
    throw ConfigError(std::string(what) + ": non-finite value");
  }
  return d;
}

}  // namespace

Json scene_to_json(const std::vector<GeometryFrame>& frames) {
  if (frames.empty()) throw ConfigError("scene_to_json: no frames");
  const int h = frames.front().height;
  const int w = frames.front().width;
  for (const auto& f : frames) {
    if (f.height != h || f.width != w) {
      throw ConfigError("scene_to_json: frames disagree on grid size");
    }
    if (static_cast<int>(f.depth.size()) != h * w ||
        static_cast<int>(f.point_map.size()) != h * w) {
      throw ConfigError("scene_to_json: grid arrays have wrong size");
    }
    if (f.flow && static_cast<int>(f.flow->size()) != h * w) {
      throw ConfigError("scene_to_json: flow array has wrong size");
    }
  }
  Json doc;
  doc["format_version"] = kSceneFormatVersion;
  doc["num_frames"] = static_cast<int>(frames.size());
  doc["height"] = h;
  doc["width"] = w;
  doc["intrinsics"] = intrinsics_to_json(frames.front().intrinsics);
  Json frame_list = Json::array();
  for (const auto& f : frames) {
    Json jf;
    Json rot = Json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) rot.push_back(f.pose.rotation(r, c));
    }
    jf["rotation"] = std::move(rot);
    jf["translation"] = Json::array(
        {f.pose.translation.x(), f.pose.translation.y(),
         f.pose.translation.z()});
    Json depth = Json::array();
    for (double d : f.depth) {
      if (std::isnan(d)) {
        depth.push_back(nullptr);
      } else if (std::isfinite(d)) {
        depth.push_back(d);
      } else {
        throw ConfigError("scene_to_json: infinite depth entry");
      }
    }
    jf["depth"] = std::move(depth);
    Json pts = Json::array();
    for (const Vec3& p : f.point_map) {
      pts.push_back(p.x());
      pts.push_back(p.y());
      pts.push_back(p.z());
    }
    jf["point_map"] = std::move(pts);
    if (f.flow) {
      Json fl = Json::array();
      for (const Vec3& p : *f.flow) {
        fl.push_back(p.x());
        fl.push_back(p.y());
        fl.push_back(p.z());
      }
      jf["flow"] = std::move(fl);
    }
    frame_list.push_back(std::move(jf));
  }
  doc["frames"] = std::move(frame_list);
  return doc;
}

std::vector<GeometryFrame> scene_from_json(const Json& doc) {
  reject_unknown_keys(
      doc,
      {"format_version", "num_frames", "height", "width", "intrinsics",
       "frames"},
      "scene");
  if (doc.at("format_version").get<int>() != kSceneFormatVersion) {
    throw ConfigError("scene: unsupported format_version");
  }
  const int n = doc.at("num_frames").get<int>();
  const int h = doc.at("height").get<int>();
  const int w = doc.at("width").get<int>();
  if (n <= 0 || h <= 0 || w <= 0) {
    throw ConfigError("scene: non-positive dimensions");
  }
  const Intrinsics k = intrinsics_from_json(doc.at("intrinsics"));
  const Json& frame_list = doc.at("frames");
  if (!frame_list.is_array() || static_cast<int>(frame_list.size()) != n) {
    throw ConfigError("scene: frame count mismatch");
  }
  std::vector<GeometryFrame> frames;
  frames.reserve(n);
  for (const Json& jf : frame_list) {
    reject_unknown_keys(
        jf, {"rotation", "translation", "depth", "point_map", "flow"},
        "scene frame");
    GeometryFrame f;
    f.height = h;
    f.width = w;
    f.intrinsics = k;
    const Json& rot = jf.at("rotation");
    if (rot.size() != 9) throw ConfigError("scene: rotation needs 9 entries");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        f.pose.rotation(r, c) = require_finite(rot[3 * r + c], "rotation");
      }
    }
    const Json& tr = jf.at("translation");
    if (tr.size() != 3) throw ConfigError("scene: translation needs 3");
    for (int i = 0; i < 3; ++i) {
      f.pose.translation[i] = require_finite(tr[i], "translation");
    }
    const Json& depth = jf.at("depth");
    if (static_cast<int>(depth.size()) != h * w) {
      throw ConfigError("scene: depth size mismatch");
    }
    f.depth.reserve(h * w);
    for (const Json& d : depth) {
      if (d.is_null()) {
        f.depth.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        f.depth.push_back(require_finite(d, "depth"));
      }
    }
    const Json& pts = jf.at("point_map");
    if (static_cast<int>(pts.size()) != 3 * h * w) {
      throw ConfigError("scene: point_map size mismatch");
    }
    f.point_map.resize(h * w);
    for (int i = 0; i < h * w; ++i) {
      for (int c = 0; c < 3; ++c) {
        f.point_map[i][c] = require_finite(pts[3 * i + c], "point_map");
      }
    }
    if (jf.contains("flow")) {
      const Json& fl = jf.at("flow");
      if (static_cast<int>(fl.size()) != 3 * h * w) {
        throw ConfigError("scene: flow size mismatch");
      }
      std::vector<Vec3> flow(h * w);
      for (int i = 0; i < h * w; ++i) {
        for (int c = 0; c < 3; ++c) {
          flow[i][c] = require_finite(fl[3 * i + c], "flow");
        }
      }
      f.flow = std::move(flow);
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

void save_scene(const std::string& path,
                const std::vector<GeometryFrame>& frames) {
  write_text_file(path, scene_to_json(frames).dump(2) + "\n");
}

std::vector<GeometryFrame> load_scene(const std::string& path) {
  return scene_from_json(read_json_file(path));
}

Json checkpoint_to_json(const Checkpoint& ckpt) {
  Json doc;
  doc["format_version"] = ckpt.format_version;
  doc["architecture"] = Json{{"type", "tanh_mlp_velocity"},
                             {"latent_dim", ckpt.latent_dim},
                             {"cond_dim", ckpt.cond_dim},
                             {"hidden_dim", ckpt.hidden_dim}};
  Json params = Json::array();
  for (Eigen::Index i = 0; i < ckpt.params.size(); ++i) {
    params.push_back(format_double(ckpt.params[i]));
  }
  doc["params"] = std::move(params);
  doc["iteration"] = ckpt.iteration;
  doc["seed"] = ckpt.seed;
  doc["config"] = ckpt.config;
  return doc;
}

Checkpoint checkpoint_from_json(const Json& doc) {
  reject_unknown_keys(
      doc,
      {"format_version", "architecture", "params", "iteration", "seed",
       "config"},
      "checkpoint");
  Checkpoint ckpt;
  ckpt.format_version = doc.at("format_version").get<int>();
  if (ckpt.format_version != kCheckpointFormatVersion) {
    throw ConfigError("checkpoint: unsupported format_version");
  }
  const Json& arch = doc.at("architecture");
  reject_unknown_keys(arch, {"type", "latent_dim", "cond_dim", "hidden_dim"},
                      "checkpoint architecture");
  if (arch.at("type").get<std::string>() != "tanh_mlp_velocity") {
    throw ConfigError("checkpoint: unknown architecture type");
  }
  ckpt.latent_dim = arch.at("latent_dim").get<int>();
  ckpt.cond_dim = arch.at("cond_dim").get<int>();
  ckpt.hidden_dim = arch.at("hidden_dim").get<int>();
  const Json& params = doc.at("params");
  if (!params.is_array()) throw ConfigError("checkpoint: params not an array");
  ckpt.params.resize(static_cast<Eigen::Index>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].is_string()) {
      throw ConfigError("checkpoint: params entries must be decimal strings");
    }
    const std::string& s = params[i].get_ref<const std::string&>();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) {
      throw ConfigError("checkpoint: bad parameter value '" + s + "'");
    }
    ckpt.params[static_cast<Eigen::Index>(i)] = v;
  }
  ckpt.iteration = doc.at("iteration").get<int>();
  ckpt.seed = doc.at("seed").get<std::uint64_t>();
  ckpt.config = doc.at("config");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_text_file(path, checkpoint_to_json(ckpt).dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(read_json_file(path));
}

}  // namespace geoflow
