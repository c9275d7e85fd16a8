#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spdelab/contractions.hpp"
#include "spdelab/domain.hpp"

namespace spdelab {

enum class VertexRole { star, up, noise, internal };

std::string role_name(VertexRole r);
VertexRole role_from_name(const std::string& s);

struct GraphVertex {
  std::string id;
  VertexRole role = VertexRole::internal;
  std::string measure;  // measure id for integrated vertices (informational)
};

struct GraphEdge {
  int from = 0;
  int to = 0;
  double a = 0.0;
  int r = 0;
  std::string kernel;
};

/// Directed labelled multigraph with a distinguished star vertex, the set of
/// test-function vertices reachable from star, and noise vertices with only
/// outgoing edges.
struct LabeledMultigraph {
  std::vector<GraphVertex> vertices;
  std::vector<GraphEdge> edges;

  int star_index() const;
  std::vector<int> up_set() const;
  std::vector<int> noise_set() const;
  int vertex_index(const std::string& id) const;

  /// Structural and label checks; every violation is reported as data.
  std::vector<std::string> validate() const;
};

/// Simple graph obtained by identifying noise vertices along the blocks of a
/// contraction and merging parallel edges (labels added; at most one merged
/// edge may carry a nonzero r, which survives).
struct ContractedGraph {
  int n = 0;                       // |V hat|
  int star = -1;
  std::vector<int> map;            // original vertex -> contracted vertex
  std::vector<bool> is_up;         // per contracted vertex
  std::vector<bool> is_noise;      // image of V_diamond
  std::vector<bool> is_flag_image; // image of F_gamma
  std::vector<int> preimage_size;  // |i_gamma^{-1}(v)| for noise images, else 1

  struct Edge {
    int from = 0;
    int to = 0;
    double a = 0.0;
    int r = 0;
  };
  std::vector<Edge> edges;
};

ContractedGraph contract_graph(const LabeledMultigraph& g, const Contraction& gamma);

struct ConditionResult {
  bool pass = true;
  double min_slack = 0.0;                 // distance to the threshold, signed
  std::vector<int> witness;               // first violating subset (contracted ids)
  std::string description;
};

struct IntegrabilityReport {
  std::array<ConditionResult, 4> conditions;
  bool all_pass() const {
    for (const auto& c : conditions)
      if (!c.pass) return false;
    return true;
  }
};

/// Evaluate the four power-counting conditions on a contracted graph with
/// the given edge labels (pass improved labels to reproduce the shifted
/// check). Strict inequalities; equality counts as failure with zero slack.
IntegrabilityReport check_integrability(const ContractedGraph& cg,
                                        const ScalingSpec& scaling,
                                        const std::vector<double>& edge_a);

inline IntegrabilityReport check_integrability(const ContractedGraph& cg,
                                               const ScalingSpec& scaling) {
  std::vector<double> a;
  for (const auto& e : cg.edges) a.push_back(e.a);
  return check_integrability(cg, scaling, a);
}

/// Label shifts moving the eps^{beta} prefactor into the kernels.
std::vector<double> improved_labels(const ContractedGraph& cg, const ScalingSpec& scaling);

struct ExponentReport {
  double alpha = 0.0;
  double beta = 0.0;
  double alpha_tilde = 0.0;
  std::vector<double> a_tilde;          // improved labels per contracted edge
  std::optional<double> kappa_sup;
  std::string kappa_note;
  IntegrabilityReport raw_check;        // labels as given
  IntegrabilityReport improved_check;   // improved labels
};

ExponentReport exponents(const LabeledMultigraph& g, const Contraction& gamma,
                         const ContractedGraph& cg, const ScalingSpec& scaling);

/// Largest kappa (capped by the beta_gamma bracket) such that the improved
/// labels with one noise-rooted edge increased by kappa still satisfy every
/// condition strictly; nullopt with a reason when no admissible edge exists.
std::optional<double> max_kappa(const ContractedGraph& cg, const Contraction& gamma,
                                const ScalingSpec& scaling, std::string* note = nullptr);

// --- JSON corpus ------------------------------------------------------------

struct GraphCase {
  std::string name;
  LabeledMultigraph graph;
  Contraction contraction;
  ScalingSpec scaling;
  // Optional recorded expectations (empty = not asserted).
  std::optional<bool> expect_pass;                 // improved-label check
  std::optional<std::vector<bool>> expect_conditions;
  std::optional<double> expect_alpha;
  std::optional<double> expect_beta;
};

GraphCase load_graph_case(const std::string& json_text);
std::string exponent_report_to_json(const GraphCase& c, const ExponentReport& rep);

}  // namespace spdelab
