#pragma once

#include <string>
#include <vector>

#include "spdelab/domain.hpp"

namespace spdelab {

/// Vertex of a contraction hypergraph. For product contractions the pair
/// (factor, pos) identifies which integral the slot came from; standalone
/// vertex sets use factor = 0 and consecutive positions.
struct ContractionVertex {
  int factor = 0;
  int pos = 0;
  int label = 0;  // noise component

  bool operator==(const ContractionVertex&) const = default;
  bool operator<(const ContractionVertex& o) const {
    if (factor != o.factor) return factor < o.factor;
    return pos < o.pos;
  }
};

/// Contraction gamma = (V, E_gamma, F_gamma): a partition of the ordered
/// vertex set into blocks with a flag subset F containing at least every
/// block of odd cardinality. Blocks hold vertex indices into `vertices`,
/// sorted; blocks themselves are ordered by minimal vertex.
struct Contraction {
  std::vector<ContractionVertex> vertices;
  std::vector<std::vector<int>> blocks;
  std::vector<bool> flagged;  // parallel to blocks

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_blocks() const { return static_cast<int>(blocks.size()); }
  int flag_count() const;

  std::vector<int> block_labels(int b) const;

  void canonicalize();
  bool valid(std::string* why = nullptr) const;

  /// Compact text form, e.g. "{(1,1)(2,2)}*{(1,2)}" with '*' marking
  /// F-membership.
  std::string to_string() const;

  bool operator==(const Contraction&) const = default;
};

/// All contractions of a labelled vertex set: every set partition, with every
/// admissible flag set (odd blocks forced into F, even blocks free).
std::vector<Contraction> enumerate_contractions(
    const std::vector<ContractionVertex>& vertices, int cap = 8);

/// Contractions appearing in the chaos expansion of a product of multiple
/// integrals with label vectors K^(1),...,K^(n): blocks are transversal
/// (at most one vertex per factor) and F is exactly the odd blocks.
std::vector<Contraction> enumerate_product_contractions(
    const std::vector<std::vector<int>>& label_vectors, int cap = 8);

/// gamma \ e: remove one block (by index), keeping order of the rest.
Contraction remove_component(const Contraction& gamma, int block_index);

}  // namespace spdelab
