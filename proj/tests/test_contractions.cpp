#include <doctest.h>

#include <algorithm>
#include <set>

#include "spdelab/contractions.hpp"
#include "spdelab/rng.hpp"

using namespace spdelab;

namespace {

std::vector<ContractionVertex> plain_vertices(int n) {
  std::vector<ContractionVertex> v;
  for (int i = 0; i < n; ++i) v.push_back({0, i, 0});
  return v;
}

/// Independent brute-force count of product contractions: iterate all
/// partitions encoded as assignment vectors and filter.
long long brute_force_product_count(const std::vector<int>& sizes) {
  std::vector<std::pair<int, int>> verts;
  for (std::size_t i = 0; i < sizes.size(); ++i)
    for (int j = 0; j < sizes[i]; ++j) verts.push_back({static_cast<int>(i), j});
  const int n = static_cast<int>(verts.size());

  long long count = 0;
  std::vector<int> assign(n, 0);
  std::function<void(int, int)> rec = [&](int i, int maxb) {
    if (i == n) {
      // transversality: no block with two vertices of the same factor
      for (int b = 0; b < maxb; ++b) {
        std::set<int> factors;
        for (int v = 0; v < n; ++v)
          if (assign[v] == b) {
            if (factors.count(verts[v].first)) return;
            factors.insert(verts[v].first);
          }
      }
      ++count;
      return;
    }
    for (int b = 0; b <= maxb; ++b) {
      assign[i] = b;
      rec(i + 1, std::max(maxb, b + 1));
    }
  };
  rec(0, 0);
  return count;
}

}  // namespace

TEST_CASE("enumerate_contractions counts") {
  CHECK(enumerate_contractions(plain_vertices(1)).size() == 1);
  CHECK(enumerate_contractions(plain_vertices(2)).size() == 3);
  CHECK(enumerate_contractions(plain_vertices(3)).size() == 8);
  CHECK_THROWS(enumerate_contractions(plain_vertices(9)));
}

TEST_CASE("contraction structural invariants") {
  for (int n : {1, 2, 3, 4, 5}) {
    auto all = enumerate_contractions(plain_vertices(n));
    for (const auto& g : all) {
      std::string why;
      CHECK(g.valid(&why));
      int covered = 0;
      for (int b = 0; b < g.n_blocks(); ++b) {
        covered += static_cast<int>(g.blocks[b].size());
        if (g.blocks[b].size() % 2 == 1) CHECK(g.flagged[b]);
      }
      CHECK(covered == n);
    }
    // determinism: a second enumeration is identical
    auto again = enumerate_contractions(plain_vertices(n));
    REQUIRE(again.size() == all.size());
    for (std::size_t i = 0; i < all.size(); ++i)
      CHECK(again[i].to_string() == all[i].to_string());
  }
}

TEST_CASE("product contraction counts") {
  CHECK(enumerate_product_contractions({{0, 0, 0}}).size() == 1);
  CHECK(enumerate_product_contractions({{0, 0}, {0, 0, 0}}).size() == 13);
  CHECK(enumerate_product_contractions({{0}, {0}, {0}}).size() == 5);
  CHECK(enumerate_product_contractions({{0}, {0}}).size() == 2);
}

TEST_CASE("product contractions match brute force for all shapes up to 6") {
  std::vector<std::vector<int>> shapes = {
      {1},       {2},       {3},    {1, 1},    {2, 1},    {2, 2},   {3, 1},
      {3, 2},    {3, 3},    {4, 1}, {4, 2},    {1, 1, 1}, {2, 1, 1}, {2, 2, 1},
      {2, 2, 2}, {3, 2, 1}, {1, 1, 1, 1},      {2, 1, 1, 1},        {2, 2, 1, 1},
      {1, 1, 1, 1, 1},      {2, 1, 1, 1, 1},   {1, 1, 1, 1, 1, 1}};
  for (const auto& shape : shapes) {
    std::vector<std::vector<int>> labels;
    for (int m : shape) labels.push_back(std::vector<int>(m, 0));
    auto got = enumerate_product_contractions(labels);
    CHECK_MESSAGE(static_cast<long long>(got.size()) == brute_force_product_count(shape),
                  "shape size mismatch");
    // F is exactly the odd blocks
    for (const auto& g : got)
      for (int b = 0; b < g.n_blocks(); ++b)
        CHECK(g.flagged[b] == (g.blocks[b].size() % 2 == 1));
  }
}

TEST_CASE("remove_component") {
  auto all = enumerate_contractions(plain_vertices(3));

  SUBCASE("removing the unique block of a single-block contraction") {
    for (const auto& g : all) {
      if (g.n_blocks() != 1) continue;
      Contraction r = remove_component(g, 0);
      CHECK(r.n_vertices() == 0);
      CHECK(r.n_blocks() == 0);
    }
  }

  SUBCASE("pair+singleton: removing the pair leaves the singleton") {
    for (const auto& g : all) {
      if (g.n_blocks() != 2) continue;
      int pair = g.blocks[0].size() == 2 ? 0 : 1;
      if (g.blocks[pair].size() != 2) continue;
      Contraction r = remove_component(g, pair);
      CHECK(r.n_vertices() == 1);
      CHECK(r.n_blocks() == 1);
      CHECK(r.blocks[0].size() == 1);
    }
  }

  SUBCASE("order and flags of the remaining blocks survive") {
    Rng rng(23);
    auto all5 = enumerate_contractions(plain_vertices(5));
    for (int trial = 0; trial < 200; ++trial) {
      const auto& g = all5[rng.next_u64() % all5.size()];
      if (g.n_blocks() < 2) continue;
      int b = static_cast<int>(rng.next_u64() % g.n_blocks());
      Contraction r = remove_component(g, b);
      std::string why;
      CHECK(r.valid(&why));
      int k = 0;
      for (int bb = 0; bb < g.n_blocks(); ++bb) {
        if (bb == b) continue;
        CHECK(r.flagged[k] == g.flagged[bb]);
        CHECK(r.blocks[k].size() == g.blocks[bb].size());
        ++k;
      }
    }
  }

  CHECK_THROWS(remove_component(all[0], 99));
}

TEST_CASE("text serialization marks flags") {
  auto prods = enumerate_product_contractions({{0}, {0}});
  REQUIRE(prods.size() == 2);
  // one of them is the pair without flag, one is both singletons flagged
  bool saw_pair = false, saw_singles = false;
  for (const auto& g : prods) {
    std::string s = g.to_string();
    if (g.n_blocks() == 1) {
      CHECK(s == "{(1,1)(2,1)}");
      saw_pair = true;
    } else {
      CHECK(s == "{(1,1)}*{(2,1)}*");
      saw_singles = true;
    }
  }
  CHECK(saw_pair);
  CHECK(saw_singles);
}
