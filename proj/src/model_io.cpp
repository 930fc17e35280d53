#include <json.hpp>

#include <fstream>
#include <sstream>

#include "mixed/rigid_body.hpp"

namespace mixed {

namespace {

using nlohmann::json;

Eigen::Vector3d vec3(const json& j, const char* key, const Eigen::Vector3d& fallback, const std::string& who) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw ModelError(who + ": '" + key + "' must be a 3-vector");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

Eigen::Matrix3d rpy_rotation(const Eigen::Vector3d& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

JointType parse_joint(const std::string& s, const std::string& who) {
  if (s == "fixed") return JointType::Fixed;
  if (s == "revolute") return JointType::Revolute;
  if (s == "prismatic") return JointType::Prismatic;
  if (s == "planar") return JointType::Planar;
  if (s == "floating") return JointType::Floating;
  throw ModelError(who + ": unknown joint type '" + s + "'");
}

Eigen::Matrix3d parse_inertia(const json& link, const std::string& who) {
  Eigen::Matrix3d I = Eigen::Matrix3d::Zero();
  if (!link.contains("inertia")) return I;
  const auto& a = link.at("inertia");
  // [ixx, iyy, izz, ixy, ixz, iyz]
  if (!a.is_array() || a.size() != 6) throw ModelError(who + ": 'inertia' must list ixx iyy izz ixy ixz iyz");
  I << a[0], a[3], a[4], a[3], a[1], a[5], a[4], a[5], a[2];
  return I;
}

}  // namespace

RobotModel RobotModel::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelError(std::string("model file is not valid JSON: ") + e.what());
  }

  RobotModel model;
  try {
    model.set_name(doc.value("name", std::string("model")));
    model.set_gravity(vec3(doc, "gravity", model.gravity(), "model"));
    const auto& links = doc.at("links");
    if (!links.is_array() || links.empty()) throw ModelError("model: 'links' must be a non-empty array");
    for (const auto& l : links) {
      Body b;
      b.name = l.at("name").get<std::string>();
      const std::string who = "link '" + b.name + "'";
      if (l.contains("parent") && !l.at("parent").is_null()) {
        const auto parent = l.at("parent").get<std::string>();
        b.parent = -2;
        for (int i = 0; i < model.num_bodies(); ++i)
          if (model.body(i).name == parent) b.parent = i;
        if (b.parent == -2) throw ModelError(who + ": parent '" + parent + "' must be listed earlier");
      }
      b.joint = parse_joint(l.value("joint", std::string("revolute")), who);
      b.axis = vec3(l, "axis", Eigen::Vector3d::UnitZ(), who);
      b.tree_origin = vec3(l, "origin", Eigen::Vector3d::Zero(), who);
      b.tree_rotation = rpy_rotation(vec3(l, "rpy", Eigen::Vector3d::Zero(), who));
      b.mass = l.value("mass", 0.0);
      b.com = vec3(l, "com", Eigen::Vector3d::Zero(), who);
      b.inertia = parse_inertia(l, who);
      model.add_body(std::move(b));
    }
    if (doc.contains("frames")) {
      for (const auto& f : doc.at("frames")) {
        Frame fr;
        fr.name = f.at("name").get<std::string>();
        const std::string who = "frame '" + fr.name + "'";
        const auto link = f.at("link").get<std::string>();
        fr.body = -1;
        for (int i = 0; i < model.num_bodies(); ++i)
          if (model.body(i).name == link) fr.body = i;
        if (fr.body < 0) throw ModelError(who + ": unknown link '" + link + "'");
        fr.offset = vec3(f, "offset", Eigen::Vector3d::Zero(), who);
        fr.rotation = rpy_rotation(vec3(f, "rpy", Eigen::Vector3d::Zero(), who));
        model.add_frame(std::move(fr));
      }
    }
  } catch (const json::exception& e) {
    throw ModelError(std::string("model file: ") + e.what());
  }
  model.finalize();
  return model;
}

RobotModel RobotModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_json_text(ss.str());
  } catch (const ModelError& e) {
    throw ModelError(path + ": " + e.what());
  }
}

}  // namespace mixed
