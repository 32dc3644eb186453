#include "hjhom/grid.hpp"

namespace hjhom {

Grid make_grid(int dim, Vec origin, Vec h, Idx cells, std::array<bool, 3> periodic) {
  Grid g;
  g.dim = dim;
  for (int a = 0; a < 3; ++a) {
    if (a < dim) {
      g.origin[a] = origin[a];
      g.h[a] = h[a];
      g.extent[a] = cells[a];
      g.periodic[a] = periodic[a];
    } else {
      g.origin[a] = 0.0;
      g.h[a] = 1.0;
      g.extent[a] = 1;
      g.periodic[a] = false;
    }
  }
  g.validate();
  return g;
}

Grid make_grid_1d(double origin, double h, int cells, bool periodic) {
  return make_grid(1, Vec{origin, 0, 0}, Vec{h, 1, 1}, Idx{cells, 1, 1}, {periodic, false, false});
}

} // namespace hjhom
