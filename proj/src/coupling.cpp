#include "structmarl/coupling.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace structmarl {
namespace {

const char* kGraphNames[3] = {"state", "obs", "reward"};

const std::vector<Edge>& graph_edges(const CouplingGraphs& g, int which) {
  switch (which) {
    case 0: return g.state;
    case 1: return g.obs;
    default: return g.reward;
  }
}

std::string edge_str(const char* graph, Edge e) {
  std::ostringstream out;
  out << graph << " edge (" << e.first << "," << e.second << ")";
  return out.str();
}

std::vector<Edge> sorted_unique(std::vector<Edge> edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

}  // namespace

ValidationReport validate(const CouplingGraphs& g) {
  ValidationReport report;
  if (g.n_agents <= 0) {
    report.errors.push_back("n_agents must be positive");
    return report;
  }
  for (int which = 0; which < 3; ++which) {
    const char* name = kGraphNames[which];
    std::map<Edge, int> seen;
    for (const Edge& e : graph_edges(g, which)) {
      if (e.first < 1 || e.first > g.n_agents || e.second < 1 ||
          e.second > g.n_agents) {
        report.errors.push_back(edge_str(name, e) + " out of range [1," +
                                std::to_string(g.n_agents) + "]");
        continue;
      }
      if (e.first == e.second) {
        report.notes.push_back(edge_str(name, e) +
                               " is a self-edge (implied; deduplicated)");
      }
      if (++seen[e] == 2) {
        report.notes.push_back(edge_str(name, e) + " duplicated");
      }
    }
  }
  return report;
}

IndexSets derive_index_sets(const CouplingGraphs& g) {
  const ValidationReport report = validate(g);
  if (!report.ok()) {
    throw std::invalid_argument("invalid coupling graphs: " +
                                report.errors.front());
  }
  IndexSets idx;
  idx.i_s.resize(g.n_agents);
  idx.i_o.resize(g.n_agents);
  idx.i_r.resize(g.n_agents);
  for (int i = 1; i <= g.n_agents; ++i) {
    idx.i_s[i - 1].insert(i);
    idx.i_o[i - 1].insert(i);
    idx.i_r[i - 1].insert(i);
  }
  for (const Edge& e : g.state) idx.i_s[e.second - 1].insert(e.first);
  for (const Edge& e : g.obs) idx.i_o[e.second - 1].insert(e.first);
  for (const Edge& e : g.reward) idx.i_r[e.second - 1].insert(e.first);
  return idx;
}

std::vector<Edge> transpose_edges(const std::vector<Edge>& edges) {
  std::vector<Edge> out;
  out.reserve(edges.size());
  for (const Edge& e : edges) out.emplace_back(e.second, e.first);
  return sorted_unique(std::move(out));
}

TimeVaryingIndexSets repeat_index_sets(const IndexSets& idx, int horizon) {
  if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");
  return TimeVaryingIndexSets(horizon + 1, idx);
}

namespace {

std::vector<Edge> edges_from_json(const nlohmann::json& node,
                                  const char* name) {
  if (!node.is_array()) {
    throw std::invalid_argument(std::string("coupling JSON: '") + name +
                                "' must be an array of [src,dst] pairs");
  }
  std::vector<Edge> edges;
  edges.reserve(node.size());
  for (const auto& pair : node) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
        !pair[1].is_number_integer()) {
      throw std::invalid_argument(std::string("coupling JSON: '") + name +
                                  "' entries must be [src,dst] integer pairs");
    }
    edges.emplace_back(pair[0].get<int>(), pair[1].get<int>());
  }
  return edges;
}

}  // namespace

CouplingGraphs coupling_from_json(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  if (!doc.is_object() || !doc.contains("n_agents") ||
      !doc["n_agents"].is_number_integer()) {
    throw std::invalid_argument(
        "coupling JSON: expected object with integer 'n_agents'");
  }
  CouplingGraphs g;
  g.n_agents = doc["n_agents"].get<int>();
  g.state = edges_from_json(doc.value("state", nlohmann::json::array()), "state");
  g.obs = edges_from_json(doc.value("obs", nlohmann::json::array()), "obs");
  g.reward =
      edges_from_json(doc.value("reward", nlohmann::json::array()), "reward");
  return g;
}

CouplingGraphs load_coupling(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw std::runtime_error("cannot open coupling file: " + file.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return coupling_from_json(buf.str());
}

std::string coupling_to_json(const CouplingGraphs& g) {
  // Canonical form: sorted deduplicated edges, alphabetical keys, 2-space
  // indent, trailing newline. load -> save is byte-stable on such files.
  nlohmann::json doc;
  doc["n_agents"] = g.n_agents;
  const char* names[3] = {"state", "obs", "reward"};
  for (int which = 0; which < 3; ++which) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Edge& e : sorted_unique(graph_edges(g, which))) {
      arr.push_back({e.first, e.second});
    }
    doc[names[which]] = std::move(arr);
  }
  return doc.dump(2) + "\n";
}

void save_coupling(const CouplingGraphs& g,
                   const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write coupling file: " + file.string());
  }
  out << coupling_to_json(g);
}

}  // namespace structmarl
