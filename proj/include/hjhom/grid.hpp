#pragma once
#include <array>
#include <cstddef>
#include <vector>

#include "hjhom/error.hpp"
#include "hjhom/vec.hpp"

namespace hjhom {

// Node-centered rectilinear grid, dim 1..3. `extent` counts cells per axis;
// a periodic axis identifies node index extent with node 0, so it carries
// `extent` distinct nodes while a bounded axis carries extent+1.
struct Grid {
  int dim = 1;
  Vec origin = vzero;
  Vec h = {1.0, 1.0, 1.0};
  Idx extent = {1, 1, 1};
  std::array<bool, 3> periodic = {false, false, false};

  int nodes(int axis) const { return periodic[axis] ? extent[axis] : extent[axis] + 1; }

  std::size_t node_count() const {
    std::size_t n = 1;
    for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(nodes(a));
    return n;
  }

  // Row-major with axis 0 fastest; inactive axes are pinned to index 0.
  std::size_t lin(const Idx& i) const {
    std::size_t s = static_cast<std::size_t>(dim > 2 ? i[2] : 0);
    s = s * static_cast<std::size_t>(dim > 1 ? nodes(1) : 1) + static_cast<std::size_t>(dim > 1 ? i[1] : 0);
    s = s * static_cast<std::size_t>(nodes(0)) + static_cast<std::size_t>(i[0]);
    return s;
  }

  Idx unlin(std::size_t s) const {
    Idx i{0, 0, 0};
    i[0] = static_cast<int>(s % static_cast<std::size_t>(nodes(0)));
    s /= static_cast<std::size_t>(nodes(0));
    if (dim > 1) {
      i[1] = static_cast<int>(s % static_cast<std::size_t>(nodes(1)));
      s /= static_cast<std::size_t>(nodes(1));
    }
    if (dim > 2) i[2] = static_cast<int>(s);
    return i;
  }

  Vec coord(const Idx& i) const {
    Vec x = vzero;
    for (int a = 0; a < dim; ++a) x[a] = origin[a] + h[a] * i[a];
    return x;
  }

  double period(int axis) const { return h[axis] * extent[axis]; }

  int wrap(int i, int axis) const {
    const int e = extent[axis];
    int r = i % e;
    return r < 0 ? r + e : r;
  }

  // Neighbor index along `axis` in direction `step` (+-1); false when the
  // neighbor falls off a bounded axis.
  bool neighbor(const Idx& i, int axis, int step, Idx& out) const {
    out = i;
    int j = i[axis] + step;
    if (periodic[axis]) {
      out[axis] = wrap(j, axis);
      return true;
    }
    if (j < 0 || j > extent[axis]) return false;
    out[axis] = j;
    return true;
  }

  void validate() const {
    if (dim < 1 || dim > 3) fail(Err::GridTooSmall, "grid dim must be 1..3");
    for (int a = 0; a < dim; ++a) {
      if (h[a] <= 0.0) fail(Err::GridTooSmall, "grid spacing must be positive");
      if (extent[a] < 3) fail(Err::GridTooSmall, "grid needs at least 3 cells per active axis");
    }
  }

  bool same_layout(const Grid& o) const {
    if (dim != o.dim) return false;
    for (int a = 0; a < dim; ++a)
      if (extent[a] != o.extent[a] || periodic[a] != o.periodic[a] ||
          h[a] != o.h[a] || origin[a] != o.origin[a])
        return false;
    return true;
  }
};

Grid make_grid(int dim, Vec origin, Vec h, Idx cells, std::array<bool, 3> periodic);
Grid make_grid_1d(double origin, double h, int cells, bool periodic);

// Visit nodes in storage order (axis 0 fastest); f(Idx, linear index).
template <class F>
void for_each_node(const Grid& g, F&& f) {
  const int n0 = g.nodes(0);
  const int n1 = g.dim > 1 ? g.nodes(1) : 1;
  const int n2 = g.dim > 2 ? g.nodes(2) : 1;
  std::size_t s = 0;
  for (int k = 0; k < n2; ++k)
    for (int j = 0; j < n1; ++j)
      for (int i = 0; i < n0; ++i) f(Idx{i, j, k}, s++);
}

} // namespace hjhom
