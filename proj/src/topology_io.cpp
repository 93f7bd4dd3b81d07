#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rbb/errors.hpp"
#include "rbb/workbench.hpp"

namespace rbb {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw Error(ErrorCode::kUnknownField, where + " field '" + key + "'");
  }
}

const json& required(const json& obj, const char* name, const std::string& where) {
  auto it = obj.find(name);
  if (it == obj.end()) throw Error(ErrorCode::kMissingField, where + " field '" + name + "'");
  return *it;
}

int as_int(const json& v, const std::string& what) {
  if (!v.is_number_integer()) throw Error(ErrorCode::kSyntax, what + " must be an integer");
  return v.get<int>();
}

double as_number(const json& v, const std::string& what) {
  if (!v.is_number()) throw Error(ErrorCode::kSyntax, what + " must be a number");
  return v.get<double>();
}

void check_links(const TopologySpec& spec) {
  std::set<int> ids;
  for (const TopologyNode& n : spec.nodes) {
    if (!ids.insert(n.id).second) throw Error(ErrorCode::kSyntax, "duplicate node id " + std::to_string(n.id));
  }
  for (std::size_t i = 0; i < spec.links.size(); ++i) {
    const TopologyLink& l = spec.links[i];
    for (int end : {l.from, l.to}) {
      if (ids.count(end) == 0) {
        throw Error(ErrorCode::kBadReference, "link " + std::to_string(i) + " references missing node id " +
                                                  std::to_string(end));
      }
    }
    if (!(l.capacity > 0.0) || !std::isfinite(l.capacity)) {
      throw Error(ErrorCode::kNonPositiveCapacity, "link " + std::to_string(i) + " capacity");
    }
    if (l.weight && (!(*l.weight >= kMinWeight) || !std::isfinite(*l.weight))) {
      throw Error(ErrorCode::kInvalidParameters, "link " + std::to_string(i) + " weight");
    }
  }
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Whitespace tokens with parentheses split out as their own tokens.
std::vector<std::string> tokens(const std::string& line) {
  std::string spaced;
  for (char c : line) {
    if (c == '(' || c == ')') {
      spaced += ' ';
      spaced += c;
      spaced += ' ';
    } else {
      spaced += c;
    }
  }
  std::istringstream in(spaced);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

double sndlib_number(const std::string& token, int line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size()) {
    throw Error(ErrorCode::kSyntax, "line " + std::to_string(line_no) + ": expected a number, got '" + token + "'");
  }
  return v;
}

}  // namespace

TopologySpec parse_topology_json(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSyntax, std::string("topology: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kSyntax, "topology must be a JSON object");
  reject_unknown(doc, {"name", "nodes", "links"}, "topology");
  TopologySpec spec;
  const json& name = required(doc, "name", "topology");
  if (!name.is_string()) throw Error(ErrorCode::kSyntax, "'name' must be a string");
  spec.name = name.get<std::string>();

  const json& nodes = required(doc, "nodes", "topology");
  if (!nodes.is_array()) throw Error(ErrorCode::kSyntax, "'nodes' must be an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const json& n = nodes[i];
    std::string where = "node " + std::to_string(i);
    if (!n.is_object()) throw Error(ErrorCode::kSyntax, where + " must be an object");
    reject_unknown(n, {"id", "label"}, where);
    TopologyNode node;
    node.id = as_int(required(n, "id", where), where + " id");
    if (auto it = n.find("label"); it != n.end()) {
      if (!it->is_string()) throw Error(ErrorCode::kSyntax, where + " label must be a string");
      node.label = it->get<std::string>();
    }
    spec.nodes.push_back(std::move(node));
  }

  const json& links = required(doc, "links", "topology");
  if (!links.is_array()) throw Error(ErrorCode::kSyntax, "'links' must be an array");
  for (std::size_t i = 0; i < links.size(); ++i) {
    const json& l = links[i];
    std::string where = "link " + std::to_string(i);
    if (!l.is_object()) throw Error(ErrorCode::kSyntax, where + " must be an object");
    reject_unknown(l, {"from", "to", "capacity", "directed", "weight"}, where);
    TopologyLink link;
    link.from = as_int(required(l, "from", where), where + " from");
    link.to = as_int(required(l, "to", where), where + " to");
    if (auto it = l.find("capacity"); it != l.end()) link.capacity = as_number(*it, where + " capacity");
    if (auto it = l.find("directed"); it != l.end()) {
      if (!it->is_boolean()) throw Error(ErrorCode::kSyntax, where + " directed must be a boolean");
      link.directed = it->get<bool>();
    }
    if (auto it = l.find("weight"); it != l.end()) link.weight = as_number(*it, where + " weight");
    spec.links.push_back(link);
  }
  check_links(spec);
  return spec;
}

std::string serialize_topology_json(const TopologySpec& spec) {
  json doc;
  doc["name"] = spec.name;
  json nodes = json::array();
  for (const TopologyNode& n : spec.nodes) {
    json j{{"id", n.id}};
    if (!n.label.empty()) j["label"] = n.label;
    nodes.push_back(std::move(j));
  }
  json links = json::array();
  for (const TopologyLink& l : spec.links) {
    json j{{"from", l.from}, {"to", l.to}, {"capacity", l.capacity}, {"directed", l.directed}};
    if (l.weight) j["weight"] = *l.weight;
    links.push_back(std::move(j));
  }
  doc["nodes"] = std::move(nodes);
  doc["links"] = std::move(links);
  return doc.dump(1) + "\n";
}

TopologySpec parse_sndlib_native(const std::string& text) {
  TopologySpec spec;
  std::map<std::string, int> node_ids;
  std::set<std::pair<int, int>> linked;
  std::string section;
  bool saw_nodes = false, saw_links = false;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::kSyntax, "line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == '?') continue;
    std::vector<std::string> t = tokens(line);
    if (section.empty()) {
      if (t.size() != 2 || t[1] != "(") fail("expected 'SECTION (' but got '" + line + "'");
      section = t[0];
      if (section == "NODES") {
        saw_nodes = true;
      } else if (section == "LINKS") {
        if (!saw_nodes) fail("LINKS before NODES");
        saw_links = true;
      } else if (section != "META" && section != "DEMANDS" && section != "ADMISSIBLE_PATHS") {
        throw Error(ErrorCode::kUnsupportedFeature, "line " + std::to_string(line_no) + ": section " + section);
      }
      continue;
    }
    if (t.size() == 1 && t[0] == ")") {
      section.clear();
      continue;
    }
    if (section == "NODES") {
      // name [( longitude latitude )]
      if (!(t.size() == 1 || (t.size() == 5 && t[1] == "(" && t[4] == ")"))) fail("malformed node '" + line + "'");
      if (node_ids.count(t[0]) != 0) fail("duplicate node " + t[0]);
      int id = static_cast<int>(spec.nodes.size());
      node_ids[t[0]] = id;
      spec.nodes.push_back({id, t[0]});
    } else if (section == "LINKS") {
      // id ( source target ) pre_cap pre_cost routing_cost setup_cost ( {module_cap module_cost}* )
      if (t.size() < 11 || t[1] != "(" || t[4] != ")" || t[9] != "(" || t.back() != ")") {
        fail("malformed link '" + line + "'");
      }
      auto endpoint = [&](const std::string& name) {
        auto it = node_ids.find(name);
        if (it == node_ids.end()) {
          throw Error(ErrorCode::kBadReference, "line " + std::to_string(line_no) + ": unknown node " + name);
        }
        return it->second;
      };
      int a = endpoint(t[2]);
      int b = endpoint(t[3]);
      if (!linked.insert({std::min(a, b), std::max(a, b)}).second) {
        throw Error(ErrorCode::kUnsupportedFeature,
                    "line " + std::to_string(line_no) + ": parallel links between " + t[2] + " and " + t[3]);
      }
      double pre_installed = sndlib_number(t[5], line_no);
      for (int i = 6; i <= 8; ++i) sndlib_number(t[static_cast<std::size_t>(i)], line_no);
      std::size_t module_tokens = t.size() - 11;
      if (module_tokens % 2 != 0) fail("module list needs capacity/cost pairs");
      double capacity = module_tokens > 0 ? sndlib_number(t[10], line_no) : pre_installed;
      if (!(capacity > 0.0)) {
        throw Error(ErrorCode::kUnsupportedFeature,
                    "line " + std::to_string(line_no) + ": link " + t[0] + " has no capacity module");
      }
      spec.links.push_back({a, b, capacity, false, std::nullopt});
    }
    // META, DEMANDS and ADMISSIBLE_PATHS bodies are skipped.
  }
  if (!section.empty()) throw Error(ErrorCode::kSyntax, "section " + section + " is not closed");
  if (!saw_nodes || !saw_links) throw Error(ErrorCode::kSyntax, "NODES and LINKS sections are required");
  return spec;
}

TopologySpec load_topology(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  std::string s = text.str();
  std::size_t first = s.find_first_not_of(" \t\r\n");
  TopologySpec spec = first != std::string::npos && s[first] == '{' ? parse_topology_json(s) : parse_sndlib_native(s);
  if (spec.name.empty()) {
    std::size_t slash = path.find_last_of('/');
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    spec.name = base.substr(0, base.find('.'));
  }
  return spec;
}

Graph to_graph(const TopologySpec& spec, double uniform_capacity) {
  std::map<int, int> position;
  for (std::size_t i = 0; i < spec.nodes.size(); ++i) position[spec.nodes[i].id] = static_cast<int>(i);
  GraphSpec g{spec.name, static_cast<int>(spec.nodes.size()), {}};
  for (std::size_t i = 0; i < spec.links.size(); ++i) {
    const TopologyLink& l = spec.links[i];
    auto from = position.find(l.from);
    auto to = position.find(l.to);
    if (from == position.end() || to == position.end()) {
      throw Error(ErrorCode::kBadReference, "link " + std::to_string(i) + " references a missing node id");
    }
    g.links.push_back({from->second, to->second, uniform_capacity > 0.0 ? uniform_capacity : l.capacity, l.directed});
  }
  return build_graph(g);
}

std::optional<WeightVector> preset_weights(const TopologySpec& spec) {
  std::vector<double> w;
  for (const TopologyLink& l : spec.links) {
    if (!l.weight) return std::nullopt;
    w.push_back(*l.weight);
    if (!l.directed) w.push_back(*l.weight);
  }
  return WeightVector(std::move(w));
}

}  // namespace rbb
