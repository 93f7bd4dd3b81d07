#pragma once

#include <vector>

#include "rbb/gnn.hpp"

namespace rbb::detail {

/// ReLU, second layer and (if present) normalization applied to a first-layer
/// pre-activation.
Var mlp_tail(const BoundMlp& mlp, Var pre);

/// Edge update from first-layer projections of the previous edge and node
/// latents: pre[j] = b1 + edge[ie[j]] + recv[ir[j]] + send[is[j]].
Var edge_update_from_projections(const BoundMlp& mlp, Var edge_proj, std::vector<int> ie, Var recv_proj,
                                 std::vector<int> ir, Var send_proj, std::vector<int> is);

/// Node update from incoming-edge sums and a projection of the previous node
/// latents: pre[j] = agg[j] W1a^T + b1 + node[in[j]].
Var node_update_from_projections(const BoundMlp& mlp, Var agg, Var node_proj, std::vector<int> in);

std::vector<int> iota(int count);

/// Encode, all rounds, and a decode of the final round only.
Var forward_final(const BoundModel& model, const GraphBatch& batch, Var edge_features);

}  // namespace rbb::detail
