#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace advclust::detail {

/// Min-cost assignment on a square cost matrix (potentials method, O(m^3)).
/// Returns row -> column.
inline std::vector<int> min_cost_assignment(const std::vector<std::vector<long long>>& cost) {
  const int m = static_cast<int>(cost.size());
  constexpr long long kInf = std::numeric_limits<long long>::max() / 4;

  std::vector<long long> u(m + 1, 0), v(m + 1, 0);
  std::vector<int> match(m + 1, 0), way(m + 1, 0);  // match[col] = row (1-based)

  for (int i = 1; i <= m; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<long long> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      long long delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const long long cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(m, -1);
  for (int j = 1; j <= m; ++j)
    if (match[j] > 0) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace advclust::detail
