#include "spdelab/contractions.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace spdelab {

int Contraction::flag_count() const {
  int c = 0;
  for (bool f : flagged) c += f ? 1 : 0;
  return c;
}

std::vector<int> Contraction::block_labels(int b) const {
  std::vector<int> out;
  for (int v : blocks[b]) out.push_back(vertices[v].label);
  return out;
}

void Contraction::canonicalize() {
  for (auto& b : blocks) std::sort(b.begin(), b.end());
  std::vector<int> order(blocks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [this](int a, int b) { return blocks[a][0] < blocks[b][0]; });
  std::vector<std::vector<int>> nb;
  std::vector<bool> nf;
  for (int i : order) {
    nb.push_back(blocks[i]);
    nf.push_back(flagged[i]);
  }
  blocks = std::move(nb);
  flagged = std::move(nf);
}

bool Contraction::valid(std::string* why) const {
  std::vector<int> seen(vertices.size(), 0);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].empty()) {
      if (why) *why = "empty block";
      return false;
    }
    for (int v : blocks[b]) {
      if (v < 0 || v >= n_vertices() || seen[v]++) {
        if (why) *why = "blocks do not partition the vertex set";
        return false;
      }
    }
    if (blocks[b].size() % 2 == 1 && !flagged[b]) {
      if (why) *why = "odd block outside F";
      return false;
    }
  }
  for (int v = 0; v < n_vertices(); ++v)
    if (!seen[v]) {
      if (why) *why = "uncovered vertex";
      return false;
    }
  if (flagged.size() != blocks.size()) {
    if (why) *why = "flag vector size mismatch";
    return false;
  }
  return true;
}

std::string Contraction::to_string() const {
  std::ostringstream os;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    os << "{";
    for (int v : blocks[b])
      os << "(" << vertices[v].factor + 1 << "," << vertices[v].pos + 1 << ")";
    os << "}";
    if (flagged[b]) os << "*";
  }
  return os.str();
}

namespace {

/// Enumerate set partitions of {0..n-1} in restricted-growth-string order.
void for_each_partition(int n, const std::function<void(const std::vector<std::vector<int>>&)>& fn) {
  std::vector<int> rgs(n, 0);
  std::vector<int> maxv(n, 0);
  // Iterative restricted growth string enumeration.
  for (;;) {
    int nb = 0;
    for (int i = 0; i < n; ++i) nb = std::max(nb, rgs[i] + 1);
    std::vector<std::vector<int>> blocks(nb);
    for (int i = 0; i < n; ++i) blocks[rgs[i]].push_back(i);
    fn(blocks);
    // advance
    int i = n - 1;
    while (i > 0 && rgs[i] == maxv[i - 1] + 1) --i;
    if (i == 0) break;
    ++rgs[i];
    maxv[i] = std::max(maxv[i - 1], rgs[i]);
    for (int j = i + 1; j < n; ++j) {
      rgs[j] = 0;
      maxv[j] = maxv[i];
    }
  }
}

}  // namespace

std::vector<Contraction> enumerate_contractions(
    const std::vector<ContractionVertex>& vertices, int cap) {
  const int n = static_cast<int>(vertices.size());
  if (n > cap) throw std::invalid_argument("enumerate_contractions: vertex cap exceeded");
  if (n == 0) return {};

  std::vector<Contraction> out;
  for_each_partition(n, [&](const std::vector<std::vector<int>>& blocks) {
    // Flag choices: odd blocks forced, even blocks free.
    std::vector<int> even_blocks;
    for (std::size_t b = 0; b < blocks.size(); ++b)
      if (blocks[b].size() % 2 == 0) even_blocks.push_back(static_cast<int>(b));
    const int ne = static_cast<int>(even_blocks.size());
    for (int mask = 0; mask < (1 << ne); ++mask) {
      Contraction g;
      g.vertices = vertices;
      g.blocks = blocks;
      g.flagged.assign(blocks.size(), false);
      for (std::size_t b = 0; b < blocks.size(); ++b)
        if (blocks[b].size() % 2 == 1) g.flagged[b] = true;
      for (int e = 0; e < ne; ++e)
        if (mask & (1 << e)) g.flagged[even_blocks[e]] = true;
      g.canonicalize();
      out.push_back(std::move(g));
    }
  });

  std::sort(out.begin(), out.end(), [](const Contraction& a, const Contraction& b) {
    return a.to_string() < b.to_string();
  });
  return out;
}

std::vector<Contraction> enumerate_product_contractions(
    const std::vector<std::vector<int>>& label_vectors, int cap) {
  std::vector<ContractionVertex> vertices;
  for (std::size_t i = 0; i < label_vectors.size(); ++i)
    for (std::size_t j = 0; j < label_vectors[i].size(); ++j)
      vertices.push_back({static_cast<int>(i), static_cast<int>(j),
                          label_vectors[i][j]});
  const int n = static_cast<int>(vertices.size());
  if (n > cap)
    throw std::invalid_argument("enumerate_product_contractions: vertex cap exceeded");
  if (n == 0) return {};

  std::vector<Contraction> out;
  for_each_partition(n, [&](const std::vector<std::vector<int>>& blocks) {
    for (const auto& b : blocks) {
      std::vector<int> factors;
      for (int v : b) factors.push_back(vertices[v].factor);
      std::sort(factors.begin(), factors.end());
      if (std::adjacent_find(factors.begin(), factors.end()) != factors.end())
        return;  // two slots of the same factor in one block: not transversal
    }
    Contraction g;
    g.vertices = vertices;
    g.blocks = blocks;
    g.flagged.assign(blocks.size(), false);
    for (std::size_t b = 0; b < blocks.size(); ++b)
      g.flagged[b] = blocks[b].size() % 2 == 1;  // F = exactly the odd blocks
    g.canonicalize();
    out.push_back(std::move(g));
  });

  std::sort(out.begin(), out.end(), [](const Contraction& a, const Contraction& b) {
    return a.to_string() < b.to_string();
  });
  return out;
}

Contraction remove_component(const Contraction& gamma, int block_index) {
  if (block_index < 0 || block_index >= gamma.n_blocks())
    throw std::invalid_argument("remove_component: no such block");
  // Vertices of the removed block disappear; remaining vertex indices are
  // remapped but keep their order and identity.
  std::vector<bool> removed(gamma.vertices.size(), false);
  for (int v : gamma.blocks[block_index]) removed[v] = true;
  std::vector<int> remap(gamma.vertices.size(), -1);
  Contraction out;
  for (std::size_t v = 0; v < gamma.vertices.size(); ++v) {
    if (!removed[v]) {
      remap[v] = static_cast<int>(out.vertices.size());
      out.vertices.push_back(gamma.vertices[v]);
    }
  }
  for (int b = 0; b < gamma.n_blocks(); ++b) {
    if (b == block_index) continue;
    std::vector<int> nb;
    for (int v : gamma.blocks[b]) nb.push_back(remap[v]);
    out.blocks.push_back(std::move(nb));
    out.flagged.push_back(gamma.flagged[b]);
  }
  return out;
}

}  // namespace spdelab
