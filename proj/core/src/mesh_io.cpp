#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "calib/error.hpp"
#include "calib/kinematics.hpp"
#include "json.hpp"

namespace calib {

namespace fs = std::filesystem;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int parse_face_index(const std::string& token, int vertex_count, int line) {
  // "7", "7/1", "7//3", "7/1/3"; negative indices count from the end.
  const std::string head = token.substr(0, token.find('/'));
  int idx = 0;
  try {
    size_t used = 0;
    idx = std::stoi(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParseError,
                "OBJ line " + std::to_string(line) + ": bad face index '" +
                    token + "'");
  }
  if (idx < 0) idx = vertex_count + idx + 1;
  if (idx < 1 || idx > vertex_count) {
    throw Error(ErrorCode::kParseError,
                "OBJ line " + std::to_string(line) + ": face index out of range");
  }
  return idx - 1;
}

}  // namespace

TriangleMesh parse_obj(const std::string& text) {
  TriangleMesh mesh;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::istringstream ls(raw);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) {
        throw Error(ErrorCode::kParseError,
                    "OBJ line " + std::to_string(line) + ": bad vertex");
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      const int n = static_cast<int>(mesh.vertices.size());
      while (ls >> tok) poly.push_back(parse_face_index(tok, n, line));
      if (poly.size() < 3) {
        throw Error(ErrorCode::kParseError,
                    "OBJ line " + std::to_string(line) + ": face needs 3 vertices");
      }
      for (size_t k = 1; k + 1 < poly.size(); ++k) {
        mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
      }
    }
  }
  mesh.validate();
  return mesh;
}

TriangleMesh load_obj(const std::string& path) { return parse_obj(read_text(path)); }

void save_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << std::setprecision(17);
  for (const Vec3& v : mesh.vertices) {
    out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  }
  for (const auto& t : mesh.triangles) {
    out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  }
}

RobotModel load_robot(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
  if (j.value("convention", std::string()) != "mdh_craig") {
    throw Error(ErrorCode::kConventionMismatch,
                path + ": robot convention must be \"mdh_craig\"");
  }
  const fs::path dir = fs::path(path).parent_path();
  RobotModel model;
  try {
    for (const auto& jl : j.at("links")) {
      LinkSpec link;
      link.name = jl.at("name").get<std::string>();
      link.mdh.alpha_prev = jl.at("alpha_prev").get<double>();
      link.mdh.a_prev = jl.at("a_prev").get<double>();
      link.mdh.d = jl.at("d").get<double>();
      link.mdh.theta_offset = jl.at("theta_offset").get<double>();
      link.joint_type = joint_type_from_string(jl.at("joint_type").get<std::string>());
      if (jl.contains("mesh") && !jl["mesh"].is_null()) {
        link.mesh = load_obj((dir / jl["mesh"].get<std::string>()).string());
      }
      model.links.push_back(std::move(link));
    }
    model.eef_link_index = j.at("eef_link_index").get<int>();
    if (j.contains("eef_offset")) {
      const auto& o = j["eef_offset"];
      if (!o.is_array() || o.size() != 3) {
        throw Error(ErrorCode::kParseError, "eef_offset must be [x,y,z]");
      }
      model.eef_offset = Vec3(o[0].get<double>(), o[1].get<double>(), o[2].get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
  model.validate();
  return model;
}

void save_robot(const std::string& path, const RobotModel& model) {
  const fs::path dir = fs::path(path).parent_path();
  fs::create_directories(dir / "meshes");
  nlohmann::ordered_json j;
  j["convention"] = "mdh_craig";
  j["links"] = nlohmann::ordered_json::array();
  for (const LinkSpec& l : model.links) {
    const std::string rel = "meshes/" + l.name + ".obj";
    save_obj((dir / rel).string(), l.mesh);
    nlohmann::ordered_json jl;
    jl["name"] = l.name;
    jl["alpha_prev"] = l.mdh.alpha_prev;
    jl["a_prev"] = l.mdh.a_prev;
    jl["d"] = l.mdh.d;
    jl["theta_offset"] = l.mdh.theta_offset;
    jl["joint_type"] = to_string(l.joint_type);
    jl["mesh"] = rel;
    j["links"].push_back(jl);
  }
  j["eef_link_index"] = model.eef_link_index;
  j["eef_offset"] = {model.eef_offset.x(), model.eef_offset.y(), model.eef_offset.z()};
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace calib
