#include "spdelab/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace spdelab {

std::string role_name(VertexRole r) {
  switch (r) {
    case VertexRole::star: return "star";
    case VertexRole::up: return "up";
    case VertexRole::noise: return "noise";
    case VertexRole::internal: return "internal";
  }
  throw std::logic_error("unknown role");
}

VertexRole role_from_name(const std::string& s) {
  if (s == "star") return VertexRole::star;
  if (s == "up") return VertexRole::up;
  if (s == "noise") return VertexRole::noise;
  if (s == "internal") return VertexRole::internal;
  throw std::invalid_argument("unknown vertex role: " + s);
}

int LabeledMultigraph::star_index() const {
  for (std::size_t i = 0; i < vertices.size(); ++i)
    if (vertices[i].role == VertexRole::star) return static_cast<int>(i);
  return -1;
}

std::vector<int> LabeledMultigraph::up_set() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < vertices.size(); ++i)
    if (vertices[i].role == VertexRole::up) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> LabeledMultigraph::noise_set() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < vertices.size(); ++i)
    if (vertices[i].role == VertexRole::noise) out.push_back(static_cast<int>(i));
  return out;
}

int LabeledMultigraph::vertex_index(const std::string& id) const {
  for (std::size_t i = 0; i < vertices.size(); ++i)
    if (vertices[i].id == id) return static_cast<int>(i);
  throw std::invalid_argument("no vertex with id " + id);
}

std::vector<std::string> LabeledMultigraph::validate() const {
  std::vector<std::string> v;
  const int n = static_cast<int>(vertices.size());
  auto vname = [&](int i) { return vertices[i].id; };

  int stars = 0;
  for (const auto& vx : vertices)
    if (vx.role == VertexRole::star) ++stars;
  if (stars != 1) v.push_back("exactly one star vertex required");
  const int star = star_index();

  std::vector<int> outdeg(n, 0), indeg(n, 0);
  for (const auto& e : edges) {
    if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n) {
      v.push_back("edge endpoint out of range");
      continue;
    }
    if (e.from == e.to) v.push_back("loopless: self-loop at " + vname(e.from));
    ++outdeg[e.from];
    ++indeg[e.to];
  }

  for (int i = 0; i < n; ++i) {
    if (outdeg[i] + indeg[i] == 0)
      v.push_back("isolated vertex " + vname(i) + " (needs an incident edge)");
    if (vertices[i].role == VertexRole::noise && indeg[i] > 0)
      v.push_back("noise vertex " + vname(i) + " must have only outgoing edges");
  }

  // Weak connectivity.
  if (n > 0) {
    std::vector<int> comp(n, -1);
    std::vector<int> stack{0};
    comp[0] = 0;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (const auto& e : edges) {
        int w = -1;
        if (e.from == u) w = e.to;
        if (e.to == u) w = e.from;
        if (w >= 0 && comp[w] < 0) {
          comp[w] = 0;
          stack.push_back(w);
        }
      }
    }
    for (int i = 0; i < n; ++i)
      if (comp[i] < 0) v.push_back("graph not weakly connected at " + vname(i));
  }

  if (star >= 0) {
    std::set<int> star_out;
    for (const auto& e : edges) {
      if (e.from == star) {
        star_out.insert(e.to);
        if (vertices[e.to].role != VertexRole::up)
          v.push_back("star has an outgoing edge to non-up vertex " + vname(e.to));
      }
      if (e.to == star && e.r > 0)
        v.push_back("no edge incoming to star may have r > 0 (edge from " +
                    vname(e.from) + ")");
    }
    for (int u : up_set())
      if (!star_out.count(u))
        v.push_back("up vertex " + vname(u) + " not connected from star");
    if (up_set().empty()) v.push_back("non-empty up set required");
    if (noise_set().empty()) v.push_back("non-empty noise set required");
  }

  // Edges among up+star must have r = 0.
  auto in_up_star = [&](int i) {
    return i == star || vertices[i].role == VertexRole::up;
  };
  for (const auto& e : edges)
    if (in_up_star(e.from) && in_up_star(e.to) && e.r != 0)
      v.push_back("edge " + vname(e.from) + "->" + vname(e.to) +
                  " among up/star vertices must have r = 0");

  // At most one r<0 edge incident per vertex.
  std::vector<int> neg(n, 0);
  for (const auto& e : edges)
    if (e.r < 0) {
      ++neg[e.from];
      ++neg[e.to];
    }
  for (int i = 0; i < n; ++i)
    if (neg[i] > 1)
      v.push_back("more than one r<0 edge incident to " + vname(i));

  // Among parallel edges at most one nonzero r, and then r > 0.
  std::map<std::pair<int, int>, std::vector<int>> par;
  for (std::size_t i = 0; i < edges.size(); ++i)
    par[{edges[i].from, edges[i].to}].push_back(static_cast<int>(i));
  for (const auto& [key, idx] : par) {
    if (idx.size() < 2) continue;
    int nonzero = 0;
    bool bad_sign = false;
    for (int i : idx)
      if (edges[i].r != 0) {
        ++nonzero;
        if (edges[i].r < 0) bad_sign = true;
      }
    if (nonzero > 1)
      v.push_back("parallel edges " + vname(key.first) + "->" + vname(key.second) +
                  ": at most one can have nonzero value r_e");
    else if (nonzero == 1 && bad_sign)
      v.push_back("parallel edges " + vname(key.first) + "->" + vname(key.second) +
                  ": the nonzero r must be positive");
  }

  return v;
}

ContractedGraph contract_graph(const LabeledMultigraph& g, const Contraction& gamma) {
  auto noise = g.noise_set();
  if (gamma.n_vertices() != static_cast<int>(noise.size()))
    throw std::invalid_argument("contract_graph: contraction vertex set must equal V_diamond");
  std::string why;
  if (!gamma.valid(&why)) throw std::invalid_argument("contract_graph: " + why);

  const int n = static_cast<int>(g.vertices.size());
  ContractedGraph cg;
  cg.map.assign(n, -1);

  // Non-noise vertices map to themselves (in original order), then one vertex
  // per block.
  for (int i = 0; i < n; ++i) {
    if (g.vertices[i].role == VertexRole::noise) continue;
    cg.map[i] = cg.n++;
    cg.is_up.push_back(g.vertices[i].role == VertexRole::up);
    cg.is_noise.push_back(false);
    cg.is_flag_image.push_back(false);
    cg.preimage_size.push_back(1);
    if (g.vertices[i].role == VertexRole::star) cg.star = cg.map[i];
  }
  for (int b = 0; b < gamma.n_blocks(); ++b) {
    int id = cg.n++;
    for (int v : gamma.blocks[b]) cg.map[noise[v]] = id;
    cg.is_up.push_back(false);
    cg.is_noise.push_back(true);
    cg.is_flag_image.push_back(gamma.flagged[b]);
    cg.preimage_size.push_back(static_cast<int>(gamma.blocks[b].size()));
  }

  // Merge parallel edges after mapping.
  std::map<std::pair<int, int>, ContractedGraph::Edge> merged;
  for (const auto& e : g.edges) {
    auto key = std::make_pair(cg.map[e.from], cg.map[e.to]);
    auto it = merged.find(key);
    if (it == merged.end()) {
      merged[key] = {key.first, key.second, e.a, e.r};
    } else {
      auto& m = it->second;
      m.a += e.a;
      if (e.r != 0) {
        if (m.r != 0)
          throw std::invalid_argument(
              "contract_graph: merging would combine two edges with nonzero r");
        if (e.r < 0)
          throw std::invalid_argument(
              "contract_graph: merging a negative-r edge into a parallel bundle");
        m.r = e.r;
      }
    }
  }
  for (const auto& [key, e] : merged) cg.edges.push_back(e);
  std::sort(cg.edges.begin(), cg.edges.end(), [](const auto& a, const auto& b) {
    if (a.from != b.from) return a.from < b.from;
    return a.to < b.to;
  });
  return cg;
}

namespace {

std::vector<int> mask_to_set(unsigned mask, int n) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (mask & (1u << i)) out.push_back(i);
  return out;
}

}  // namespace

IntegrabilityReport check_integrability(const ContractedGraph& cg,
                                        const ScalingSpec& scaling,
                                        const std::vector<double>& edge_a) {
  if (edge_a.size() != cg.edges.size())
    throw std::invalid_argument("check_integrability: one label per contracted edge");
  if (cg.n > 16) throw std::invalid_argument("check_integrability: size cap is 16 vertices");
  const double snorm = scaling.s_norm_order();
  IntegrabilityReport rep;

  auto& c1 = rep.conditions[0];
  c1.description = "a_e + (r_e ^ 0) < |s| per edge";
  c1.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cg.edges.size(); ++i) {
    double lhs = edge_a[i] + std::min(cg.edges[i].r, 0);
    double slack = snorm - lhs;
    if (slack < c1.min_slack) c1.min_slack = slack;
    if (slack <= 0.0 && c1.pass) {
      c1.pass = false;
      c1.witness = {cg.edges[i].from, cg.edges[i].to};
    }
  }

  auto& c2 = rep.conditions[1];
  c2.description = "sum over internal edges < (|V|-1)|s| for subsets away from star";
  c2.min_slack = std::numeric_limits<double>::infinity();
  auto& c3 = rep.conditions[2];
  c3.description = "star subsets: internal + outgoing-positive corrections < (|V|-1)|s|";
  c3.min_slack = std::numeric_limits<double>::infinity();
  auto& c4 = rep.conditions[3];
  c4.description = "incident-edge sums > |V||s| for subsets away from star";
  c4.min_slack = std::numeric_limits<double>::infinity();

  const unsigned full = 1u << cg.n;
  for (unsigned mask = 1; mask < full; ++mask) {
    const bool has_star = cg.star >= 0 && (mask & (1u << cg.star));
    const int card = __builtin_popcount(mask);

    if (!has_star && card >= 3) {
      double lhs = 0.0;
      for (std::size_t i = 0; i < cg.edges.size(); ++i) {
        bool f_in = mask & (1u << cg.edges[i].from);
        bool t_in = mask & (1u << cg.edges[i].to);
        if (f_in && t_in) lhs += edge_a[i];
      }
      double slack = (card - 1) * snorm - lhs;
      if (slack < c2.min_slack) c2.min_slack = slack;
      if (slack <= 0.0 && c2.pass) {
        c2.pass = false;
        c2.witness = mask_to_set(mask, cg.n);
      }
    }

    if (has_star && card >= 2) {
      double lhs = 0.0;
      for (std::size_t i = 0; i < cg.edges.size(); ++i) {
        const auto& e = cg.edges[i];
        bool f_in = mask & (1u << e.from);
        bool t_in = mask & (1u << e.to);
        if (f_in && t_in) lhs += edge_a[i];
        if (e.r > 0) {
          if (f_in) lhs += edge_a[i] + e.r - 1;
          if (t_in) lhs -= e.r;
        }
      }
      double slack = (card - 1) * snorm - lhs;
      if (slack < c3.min_slack) c3.min_slack = slack;
      if (slack <= 0.0 && c3.pass) {
        c3.pass = false;
        c3.witness = mask_to_set(mask, cg.n);
      }
    }

    if (!has_star && card >= 1) {
      double lhs = 0.0;
      for (std::size_t i = 0; i < cg.edges.size(); ++i) {
        const auto& e = cg.edges[i];
        bool f_in = mask & (1u << e.from);
        bool t_in = mask & (1u << e.to);
        if (!f_in && !t_in) continue;
        const bool down_pos = t_in && e.r > 0;
        if (!down_pos) lhs += edge_a[i];
        if (f_in && e.r > 0) lhs += e.r;
        if (down_pos) lhs -= e.r - 1;
      }
      double slack = lhs - card * snorm;
      if (slack < c4.min_slack) c4.min_slack = slack;
      if (slack <= 0.0 && c4.pass) {
        c4.pass = false;
        c4.witness = mask_to_set(mask, cg.n);
      }
    }
  }
  return rep;
}

std::vector<double> improved_labels(const ContractedGraph& cg,
                                    const ScalingSpec& scaling) {
  const double snorm = scaling.s_norm_order();
  std::vector<double> out;
  out.reserve(cg.edges.size());
  for (const auto& e : cg.edges) {
    double a = e.a;
    if (cg.is_noise[e.from]) {
      const int pre = cg.preimage_size[e.from];
      if (cg.is_flag_image[e.from])
        a += (1.0 - pre) * snorm / 2.0;
      else
        a += (1.0 - pre / 2.0) * snorm;
    }
    out.push_back(a);
  }
  return out;
}

std::optional<double> max_kappa(const ContractedGraph& cg, const Contraction& gamma,
                                const ScalingSpec& scaling, std::string* note) {
  const double snorm = scaling.s_norm_order();
  const double beta = (gamma.n_vertices() - 2.0 * gamma.n_blocks() + gamma.flag_count()) *
                      snorm / 2.0;
  auto tilde = improved_labels(cg, scaling);
  auto base = check_integrability(cg, scaling, tilde);
  if (!base.all_pass()) {
    if (note) *note = "improved labels violate the power-counting conditions";
    return std::nullopt;
  }

  bool any_edge = false;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t ei = 0; ei < cg.edges.size(); ++ei) {
    if (!cg.is_noise[cg.edges[ei].from]) continue;
    any_edge = true;
    // All conditions are affine in a perturbation of label ei; collect the
    // binding (upper-bound) slacks.
    double kmax = std::numeric_limits<double>::infinity();
    const auto& e = cg.edges[ei];
    // condition 1 on this edge
    kmax = std::min(kmax, snorm - (tilde[ei] + std::min(e.r, 0)));
    const unsigned full = 1u << cg.n;
    for (unsigned mask = 1; mask < full; ++mask) {
      const bool has_star = cg.star >= 0 && (mask & (1u << cg.star));
      const int card = __builtin_popcount(mask);
      bool f_in = mask & (1u << e.from);
      bool t_in = mask & (1u << e.to);

      if (!has_star && card >= 3 && f_in && t_in) {
        double lhs = 0.0;
        for (std::size_t i = 0; i < cg.edges.size(); ++i) {
          bool a_in = mask & (1u << cg.edges[i].from);
          bool b_in = mask & (1u << cg.edges[i].to);
          if (a_in && b_in) lhs += tilde[i];
        }
        kmax = std::min(kmax, (card - 1) * snorm - lhs);
      }
      if (has_star && card >= 2) {
        double coeff = 0.0;
        if (f_in && t_in) coeff += 1.0;
        if (e.r > 0 && f_in) coeff += 1.0;
        if (coeff > 0.0) {
          double lhs = 0.0;
          for (std::size_t i = 0; i < cg.edges.size(); ++i) {
            const auto& d = cg.edges[i];
            bool a_in = mask & (1u << d.from);
            bool b_in = mask & (1u << d.to);
            if (a_in && b_in) lhs += tilde[i];
            if (d.r > 0) {
              if (a_in) lhs += tilde[i] + d.r - 1;
              if (b_in) lhs -= d.r;
            }
          }
          kmax = std::min(kmax, ((card - 1) * snorm - lhs) / coeff);
        }
      }
      // condition 4 only improves with larger labels: no upper bound.
    }
    best = std::max(best, kmax);
  }
  if (!any_edge) {
    if (note) *note = "no contracted edge is rooted at a noise vertex";
    return std::nullopt;
  }
  double kappa = std::min(best, beta);
  if (kappa < 0.0) kappa = 0.0;
  if (note && kappa == beta) *note = "capped by the beta_gamma bracket";
  return kappa;
}

ExponentReport exponents(const LabeledMultigraph& g, const Contraction& gamma,
                         const ContractedGraph& cg, const ScalingSpec& scaling) {
  const double snorm = scaling.s_norm_order();
  ExponentReport rep;

  double sum_a = 0.0;
  for (const auto& e : g.edges) sum_a += e.a;

  int hat_not_star_not_up = 0;
  for (int v = 0; v < cg.n; ++v)
    if (v != cg.star && !cg.is_up[v]) ++hat_not_star_not_up;
  const double flags = gamma.flag_count();
  rep.alpha = (hat_not_star_not_up - flags / 2.0) * snorm - sum_a;
  rep.beta = (gamma.n_vertices() - 2.0 * gamma.n_blocks() + flags) * snorm / 2.0;

  int plain = 0;  // |V_barstar \ (V_up cup V_diamond)| on the original graph
  for (const auto& v : g.vertices)
    if (v.role == VertexRole::internal) ++plain;
  rep.alpha_tilde =
      (plain + gamma.n_vertices() / 2.0 + flags / 2.0) * snorm - sum_a;

  rep.a_tilde = improved_labels(cg, scaling);
  rep.raw_check = check_integrability(cg, scaling);
  rep.improved_check = check_integrability(cg, scaling, rep.a_tilde);
  std::string note;
  rep.kappa_sup = max_kappa(cg, gamma, scaling, &note);
  rep.kappa_note = note;
  return rep;
}

// --- JSON -------------------------------------------------------------------

GraphCase load_graph_case(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  GraphCase c;
  c.name = j.value("name", "unnamed");
  c.scaling = ScalingSpec(j.value("d", 1));

  for (const auto& v : j.at("vertices")) {
    GraphVertex gv;
    gv.id = v.at("id").get<std::string>();
    gv.role = role_from_name(v.at("role").get<std::string>());
    gv.measure = v.value("measure", "grid");
    c.graph.vertices.push_back(gv);
  }
  for (const auto& e : j.at("edges")) {
    GraphEdge ge;
    ge.from = c.graph.vertex_index(e.at("from").get<std::string>());
    ge.to = c.graph.vertex_index(e.at("to").get<std::string>());
    ge.a = e.at("a").get<double>();
    ge.r = e.value("r", 0);
    ge.kernel = e.value("kernel", "K");
    c.graph.edges.push_back(ge);
  }

  auto noise = c.graph.noise_set();
  std::map<std::string, int> noise_pos;
  for (std::size_t i = 0; i < noise.size(); ++i)
    noise_pos[c.graph.vertices[noise[i]].id] = static_cast<int>(i);
  for (std::size_t i = 0; i < noise.size(); ++i)
    c.contraction.vertices.push_back(
        {0, static_cast<int>(i), 0});

  if (j.contains("contraction")) {
    for (const auto& b : j.at("contraction").at("blocks")) {
      std::vector<int> blk;
      for (const auto& id : b.at("vertices"))
        blk.push_back(noise_pos.at(id.get<std::string>()));
      c.contraction.blocks.push_back(blk);
      bool odd = blk.size() % 2 == 1;
      c.contraction.flagged.push_back(b.value("flagged", odd));
    }
  } else {
    for (std::size_t i = 0; i < noise.size(); ++i) {
      c.contraction.blocks.push_back({static_cast<int>(i)});
      c.contraction.flagged.push_back(true);
    }
  }
  c.contraction.canonicalize();

  if (j.contains("expect")) {
    const auto& ex = j.at("expect");
    if (ex.contains("pass")) c.expect_pass = ex.at("pass").get<bool>();
    if (ex.contains("conditions"))
      c.expect_conditions = ex.at("conditions").get<std::vector<bool>>();
    if (ex.contains("alpha")) c.expect_alpha = ex.at("alpha").get<double>();
    if (ex.contains("beta")) c.expect_beta = ex.at("beta").get<double>();
  }
  return c;
}

std::string exponent_report_to_json(const GraphCase& c, const ExponentReport& rep) {
  nlohmann::json j;
  j["name"] = c.name;
  j["alpha"] = rep.alpha;
  j["beta"] = rep.beta;
  j["alpha_tilde"] = rep.alpha_tilde;
  j["a_tilde"] = rep.a_tilde;
  if (rep.kappa_sup)
    j["kappa_sup"] = *rep.kappa_sup;
  else
    j["kappa_sup"] = nullptr;
  if (!rep.kappa_note.empty()) j["kappa_note"] = rep.kappa_note;
  auto dump_check = [](const IntegrabilityReport& r) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& cond : r.conditions) {
      nlohmann::json e;
      e["pass"] = cond.pass;
      e["min_slack"] = cond.min_slack;
      e["witness"] = cond.witness;
      arr.push_back(e);
    }
    return arr;
  };
  j["raw_check"] = dump_check(rep.raw_check);
  j["improved_check"] = dump_check(rep.improved_check);
  j["improved_pass"] = rep.improved_check.all_pass();
  return j.dump(2);
}

}  // namespace spdelab
