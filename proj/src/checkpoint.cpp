#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "rbb/errors.hpp"
#include "rbb/gnn.hpp"

namespace rbb {

namespace {

using nlohmann::json;

constexpr const char* kFormatName = "rbb-gnn-checkpoint";

const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) throw Error(ErrorCode::kMissingField, std::string("checkpoint field '") + name + "'");
  return *it;
}

int int_field(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_number_integer()) throw Error(ErrorCode::kSyntax, std::string("'") + name + "' must be an integer");
  return v.get<int>();
}

}  // namespace

std::string serialize_model(const GnnModel& model) {
  json doc;
  doc["format"] = kFormatName;
  doc["version"] = kCheckpointVersion;
  doc["hidden"] = model.config().hidden;
  doc["rounds"] = model.config().rounds;
  doc["shared_processor"] = model.config().shared_processor;
  doc["node_features"] = kNodeFeatures;
  doc["edge_features"] = kEdgeFeatures;
  json params = json::array();
  for (const auto& [name, m] : model.named_parameters()) {
    json p;
    p["name"] = name;
    p["shape"] = {m->rows(), m->cols()};
    p["data"] = std::vector<double>(m->data(), m->data() + m->size());
    params.push_back(std::move(p));
  }
  doc["parameters"] = std::move(params);
  return doc.dump() + "\n";
}

GnnModel deserialize_model(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSyntax, std::string("checkpoint: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kSyntax, "checkpoint must be a JSON object");
  static const char* known[] = {"format", "version", "hidden", "rounds", "shared_processor",
                                "node_features", "edge_features", "parameters"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw Error(ErrorCode::kUnknownField, "checkpoint field '" + key + "'");
    }
  }
  if (field(doc, "format") != kFormatName) throw Error(ErrorCode::kSyntax, "not an rbb model checkpoint");
  if (int_field(doc, "version") != kCheckpointVersion) {
    throw Error(ErrorCode::kUnsupportedFeature, "checkpoint version " + field(doc, "version").dump());
  }
  if (int_field(doc, "node_features") != kNodeFeatures || int_field(doc, "edge_features") != kEdgeFeatures) {
    throw Error(ErrorCode::kShapeMismatch, "checkpoint feature widths differ from this build");
  }
  GnnConfig config;
  config.hidden = int_field(doc, "hidden");
  config.rounds = int_field(doc, "rounds");
  const json& shared = field(doc, "shared_processor");
  if (!shared.is_boolean()) throw Error(ErrorCode::kSyntax, "'shared_processor' must be a boolean");
  config.shared_processor = shared.get<bool>();

  std::vector<std::pair<std::string, Matrix>> parts;
  const json& params = field(doc, "parameters");
  if (!params.is_array()) throw Error(ErrorCode::kSyntax, "'parameters' must be an array");
  for (const json& p : params) {
    const json& name = field(p, "name");
    const json& shape = field(p, "shape");
    const json& data = field(p, "data");
    if (!name.is_string() || !shape.is_array() || shape.size() != 2 || !data.is_array()) {
      throw Error(ErrorCode::kSyntax, "malformed parameter entry");
    }
    auto rows = shape[0].get<Eigen::Index>();
    auto cols = shape[1].get<Eigen::Index>();
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
      throw Error(ErrorCode::kShapeMismatch, "parameter '" + name.get<std::string>() + "' data length");
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!data[i].is_number()) throw Error(ErrorCode::kSyntax, "non-numeric parameter value");
      m.data()[i] = data[i].get<double>();
    }
    parts.emplace_back(name.get<std::string>(), std::move(m));
  }
  return model_from_parts(config, std::move(parts));
}

void save_model(const GnnModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write '" + path + "'");
  out << serialize_model(model);
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path + "'");
}

GnnModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return deserialize_model(text.str());
}

}  // namespace rbb
