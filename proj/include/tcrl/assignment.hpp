#pragma once

#include "tcrl/core.hpp"

#include <vector>

namespace tcrl {

/// Minimum-cost assignment of every row to a distinct column (rows <= cols),
/// solved exactly with the Hungarian method in O(rows^2 cols). Returns the
/// column chosen for each row.
std::vector<int> min_cost_assignment(const Matrix& cost);

/// Maximum-weight variant.
std::vector<int> max_weight_assignment(const Matrix& weight);

}  // namespace tcrl
