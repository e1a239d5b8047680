#include "oracles/transport_lp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ct::oracle {

namespace {

struct Cell {
  int i, j;
  double alloc;
};

constexpr double kReducedCostTol = 1e-11;

}  // namespace

double transport_lp(std::vector<double> a, std::vector<double> b, std::vector<double> cost) {
  std::size_t n_in = a.size(), m_in = b.size();
  if (cost.size() != n_in * m_in) throw std::invalid_argument("transport_lp: cost size mismatch");

  // normalize and drop empty bins; remember original indices for the cost
  double sa = std::accumulate(a.begin(), a.end(), 0.0);
  double sb = std::accumulate(b.begin(), b.end(), 0.0);
  if (sa <= 0.0 || sb <= 0.0) throw std::invalid_argument("transport_lp: empty marginals");
  std::vector<int> rows, cols;
  for (std::size_t i = 0; i < n_in; ++i)
    if (a[i] > 0.0) rows.push_back(static_cast<int>(i));
  for (std::size_t j = 0; j < m_in; ++j)
    if (b[j] > 0.0) cols.push_back(static_cast<int>(j));
  int n = static_cast<int>(rows.size()), m = static_cast<int>(cols.size());
  std::vector<double> ra(static_cast<std::size_t>(n)), cb(static_cast<std::size_t>(m));
  for (int i = 0; i < n; ++i)
    ra[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])] / sa;
  for (int j = 0; j < m; ++j)
    cb[static_cast<std::size_t>(j)] = b[static_cast<std::size_t>(cols[static_cast<std::size_t>(j)])] / sb;
  auto C = [&](int i, int j) {
    return cost[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)]) * m_in +
                static_cast<std::size_t>(cols[static_cast<std::size_t>(j)])];
  };

  // northwest-corner initial basic feasible solution
  std::vector<Cell> basis;
  {
    std::vector<double> rrem = ra, crem = cb;
    int i = 0, j = 0;
    while (true) {
      double alloc = std::min(rrem[static_cast<std::size_t>(i)], crem[static_cast<std::size_t>(j)]);
      basis.push_back({i, j, alloc});
      rrem[static_cast<std::size_t>(i)] -= alloc;
      crem[static_cast<std::size_t>(j)] -= alloc;
      if (i == n - 1 && j == m - 1) break;
      if (rrem[static_cast<std::size_t>(i)] <= crem[static_cast<std::size_t>(j)] && i + 1 < n)
        ++i;
      else if (j + 1 < m)
        ++j;
      else
        ++i;
    }
  }

  std::vector<int> in_basis(static_cast<std::size_t>(n) * m, -1);
  auto rebuild_index = [&]() {
    std::fill(in_basis.begin(), in_basis.end(), -1);
    for (std::size_t k = 0; k < basis.size(); ++k)
      in_basis[static_cast<std::size_t>(basis[k].i) * m + basis[k].j] = static_cast<int>(k);
  };
  rebuild_index();

  std::vector<double> u(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(m));
  std::vector<std::vector<int>> row_cells(static_cast<std::size_t>(n)),
      col_cells(static_cast<std::size_t>(m));

  const int max_pivots = 200000;
  for (int pivot = 0; pivot < max_pivots; ++pivot) {
    // potentials from the basis tree (u[0] = 0); nodes are rows, then cols+n
    for (auto& rc : row_cells) rc.clear();
    for (auto& cc : col_cells) cc.clear();
    for (std::size_t k = 0; k < basis.size(); ++k) {
      row_cells[static_cast<std::size_t>(basis[k].i)].push_back(static_cast<int>(k));
      col_cells[static_cast<std::size_t>(basis[k].j)].push_back(static_cast<int>(k));
    }
    std::vector<char> udone(static_cast<std::size_t>(n), 0), vdone(static_cast<std::size_t>(m), 0);
    std::vector<int> stack{0};
    u[0] = 0.0;
    udone[0] = 1;
    while (!stack.empty()) {
      int node = stack.back();
      stack.pop_back();
      if (node < n) {
        for (int k : row_cells[static_cast<std::size_t>(node)]) {
          int j = basis[static_cast<std::size_t>(k)].j;
          if (!vdone[static_cast<std::size_t>(j)]) {
            v[static_cast<std::size_t>(j)] = C(node, j) - u[static_cast<std::size_t>(node)];
            vdone[static_cast<std::size_t>(j)] = 1;
            stack.push_back(n + j);
          }
        }
      } else {
        int j = node - n;
        for (int k : col_cells[static_cast<std::size_t>(j)]) {
          int i = basis[static_cast<std::size_t>(k)].i;
          if (!udone[static_cast<std::size_t>(i)]) {
            u[static_cast<std::size_t>(i)] = C(i, j) - v[static_cast<std::size_t>(j)];
            udone[static_cast<std::size_t>(i)] = 1;
            stack.push_back(i);
          }
        }
      }
    }
    for (char d : udone)
      if (!d) throw std::runtime_error("transport_lp: basis not connected");
    for (char d : vdone)
      if (!d) throw std::runtime_error("transport_lp: basis not connected");

    // entering cell: first with negative reduced cost (Bland's rule)
    int ei = -1, ej = -1;
    for (int i = 0; i < n && ei < 0; ++i)
      for (int j = 0; j < m; ++j) {
        if (in_basis[static_cast<std::size_t>(i) * m + j] >= 0) continue;
        if (C(i, j) - u[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)] <
            -kReducedCostTol) {
          ei = i;
          ej = j;
          break;
        }
      }
    if (ei < 0) break;  // optimal

    // unique cycle: path from row ei to col ej through basis edges
    std::vector<int> parent_edge(static_cast<std::size_t>(n + m), -1);
    std::vector<int> parent_node(static_cast<std::size_t>(n + m), -1);
    std::vector<char> seen(static_cast<std::size_t>(n + m), 0);
    std::vector<int> queue{ei};
    seen[static_cast<std::size_t>(ei)] = 1;
    for (std::size_t qh = 0; qh < queue.size(); ++qh) {
      int node = queue[qh];
      if (node == n + ej) break;
      if (node < n) {
        for (int k : row_cells[static_cast<std::size_t>(node)]) {
          int nxt = n + basis[static_cast<std::size_t>(k)].j;
          if (!seen[static_cast<std::size_t>(nxt)]) {
            seen[static_cast<std::size_t>(nxt)] = 1;
            parent_edge[static_cast<std::size_t>(nxt)] = k;
            parent_node[static_cast<std::size_t>(nxt)] = node;
            queue.push_back(nxt);
          }
        }
      } else {
        for (int k : col_cells[static_cast<std::size_t>(node - n)]) {
          int nxt = basis[static_cast<std::size_t>(k)].i;
          if (!seen[static_cast<std::size_t>(nxt)]) {
            seen[static_cast<std::size_t>(nxt)] = 1;
            parent_edge[static_cast<std::size_t>(nxt)] = k;
            parent_node[static_cast<std::size_t>(nxt)] = node;
            queue.push_back(nxt);
          }
        }
      }
    }
    if (!seen[static_cast<std::size_t>(n + ej)])
      throw std::runtime_error("transport_lp: no cycle found");

    // walk back collecting the path cells; signs alternate, entering is +
    std::vector<int> path_cells;
    int node = n + ej;
    while (node != ei) {
      path_cells.push_back(parent_edge[static_cast<std::size_t>(node)]);
      node = parent_node[static_cast<std::size_t>(node)];
    }
    std::reverse(path_cells.begin(), path_cells.end());

    double theta = 1e300;
    int leaving = -1;
    for (std::size_t t = 0; t < path_cells.size(); ++t) {
      if (t % 2 != 0) continue;  // minus positions along the path
      double alloc = basis[static_cast<std::size_t>(path_cells[t])].alloc;
      if (alloc < theta - 1e-15) {
        theta = alloc;
        leaving = path_cells[t];
      }
    }
    if (leaving < 0) throw std::runtime_error("transport_lp: unbounded pivot");

    for (std::size_t t = 0; t < path_cells.size(); ++t) {
      if (t % 2 == 0)
        basis[static_cast<std::size_t>(path_cells[t])].alloc -= theta;
      else
        basis[static_cast<std::size_t>(path_cells[t])].alloc += theta;
    }
    basis[static_cast<std::size_t>(leaving)] = {ei, ej, theta};
    rebuild_index();
    if (pivot == max_pivots - 1) throw std::runtime_error("transport_lp: pivot limit reached");
  }

  double total = 0.0;
  for (const auto& c : basis) total += c.alloc * C(c.i, c.j);
  return total;
}

double w1_1d(std::vector<double> a, std::vector<double> b, const std::vector<double>& pos) {
  if (a.size() != b.size() || a.size() != pos.size())
    throw std::invalid_argument("w1_1d: size mismatch");
  double sa = std::accumulate(a.begin(), a.end(), 0.0);
  double sb = std::accumulate(b.begin(), b.end(), 0.0);
  double cdfa = 0.0, cdfb = 0.0, total = 0.0;
  for (std::size_t k = 0; k + 1 < pos.size(); ++k) {
    cdfa += a[k] / sa;
    cdfb += b[k] / sb;
    total += std::abs(cdfa - cdfb) * (pos[k + 1] - pos[k]);
  }
  return total;
}

}  // namespace ct::oracle
