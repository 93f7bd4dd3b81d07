// All-pairs soft routing. The sparse engine exploits that a pair's query
// indicators can only influence latents within t hops of its endpoints after
// t rounds; everything else equals the state of a query-free "baseline" run
// that is computed once and shared by all pairs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>

#include "gnn_internal.hpp"
#include "rbb/errors.hpp"
#include "rbb/gnn.hpp"

namespace rbb {

namespace {

using diff::concat_rows;
using diff::linear_block;

// Nodes (A_t) and edges (E_t) whose latents differ from the baseline after
// round t, for t = 0..T. E_0 is empty because edge features ignore the query.
struct PairPlan {
  PairQuery query;
  std::vector<std::vector<int>> nodes;
  std::vector<std::vector<int>> edges;
};

PairPlan plan_pair(const Graph& g, PairQuery q, int rounds) {
  PairPlan plan;
  plan.query = q;
  std::vector<char> active(static_cast<std::size_t>(g.node_count()), 0);
  active[static_cast<std::size_t>(q.source)] = 1;
  active[static_cast<std::size_t>(q.destination)] = 1;
  plan.nodes.push_back({std::min(q.source, q.destination), std::max(q.source, q.destination)});
  plan.edges.emplace_back();
  for (int t = 1; t <= rounds; ++t) {
    std::vector<int> edges;
    std::vector<char> next = active;
    for (const EdgeTriple& e : g.edges()) {
      bool s = active[static_cast<std::size_t>(e.sender)] != 0;
      if (s || active[static_cast<std::size_t>(e.receiver)] != 0) edges.push_back(e.edge_index);
      if (s) next[static_cast<std::size_t>(e.receiver)] = 1;
    }
    std::vector<int> nodes;
    for (int i = 0; i < g.node_count(); ++i) {
      if (next[static_cast<std::size_t>(i)] != 0) nodes.push_back(i);
    }
    active = std::move(next);
    plan.edges.push_back(std::move(edges));
    plan.nodes.push_back(std::move(nodes));
  }
  return plan;
}

// Query-free run. Index t holds projections of the round t-1 state used by
// round t, and the round t edge latents.
struct Baseline {
  std::vector<Var> pe, pr, ps, pn, edges;
  Var decoded;

  std::vector<Var*> all() {
    std::vector<Var*> out;
    for (auto* v : {&pe, &pr, &ps, &pn, &edges}) {
      for (Var& x : *v) {
        if (x.tape() != nullptr) out.push_back(&x);
      }
    }
    out.push_back(&decoded);
    return out;
  }
};

Baseline run_baseline(const BoundModel& bm, const Graph& g, Var weights) {
  Tape& tape = *weights.tape();
  const int h = bm.model->config().hidden;
  const int rounds = bm.model->config().rounds;
  std::vector<int> recv, send;
  for (const EdgeTriple& e : g.edges()) {
    recv.push_back(e.receiver);
    send.push_back(e.sender);
  }
  Baseline b;
  for (auto* v : {&b.pe, &b.pr, &b.ps, &b.pn, &b.edges}) v->resize(static_cast<std::size_t>(rounds) + 1);
  Var nodes = apply_mlp(bm.node_encoder, tape.constant(Matrix::Zero(g.node_count(), kNodeFeatures)));
  Var edges = apply_mlp(bm.edge_encoder, weights);
  for (int t = 1; t <= rounds; ++t) {
    auto blk = static_cast<std::size_t>(bm.model->block_for_round(t));
    const BoundMlp& fe = bm.edge_update[blk];
    const BoundMlp& fv = bm.node_update[blk];
    auto ut = static_cast<std::size_t>(t);
    b.pe[ut] = linear_block(edges, fe.w1, 0);
    b.pr[ut] = linear_block(nodes, fe.w1, h);
    b.ps[ut] = linear_block(nodes, fe.w1, 2 * h);
    edges = detail::edge_update_from_projections(fe, b.pe[ut], detail::iota(g.edge_count()), b.pr[ut], recv,
                                                 b.ps[ut], send);
    b.edges[ut] = edges;
    if (t < rounds) {
      b.pn[ut] = linear_block(nodes, fv.w1, h);
      Var agg = diff::segment_sum(edges, detail::iota(g.edge_count()), recv, g.node_count());
      nodes = detail::node_update_from_projections(fv, agg, b.pn[ut], detail::iota(g.node_count()));
    }
  }
  b.decoded = decode(bm, edges);
  return b;
}

// Baseline values placed on a chunk tape, as constants or as gradient sinks.
Baseline import_baseline(Tape& tape, Baseline& base, bool trainable) {
  Baseline out = base;
  for (Var* v : out.all()) {
    const Matrix& value = v->value();
    *v = trainable ? tape.variable_ref(value) : tape.constant_ref(value);
  }
  return out;
}

struct ChunkResult {
  Var decoded;                        // active final-round edges, one row each
  std::vector<std::pair<int, int>> owner;  // (chunk pair, edge) per decoded row
};

ChunkResult run_chunk(Tape& tape, const BoundModel& bm, const Graph& g, std::span<const PairPlan> plans,
                      const Baseline& imp) {
  const int h = bm.model->config().hidden;
  const int rounds = bm.model->config().rounds;
  const int n = g.node_count();
  const int ne = g.edge_count();
  const int m = static_cast<int>(plans.size());
  auto cell = [](int pair, int count, int item) { return static_cast<std::size_t>(pair * count + item); };

  // Round 0: only the endpoints differ from the baseline.
  std::vector<int> node_row(static_cast<std::size_t>(m * n), -1);
  Matrix features = Matrix::Zero(2 * m, kNodeFeatures);
  int rows = 0;
  for (int j = 0; j < m; ++j) {
    for (int i : plans[static_cast<std::size_t>(j)].nodes[0]) {
      const PairQuery& q = plans[static_cast<std::size_t>(j)].query;
      features(rows, 0) = i == q.source ? 1.0 : 0.0;
      features(rows, 1) = i == q.destination ? 1.0 : 0.0;
      node_row[cell(j, n, i)] = rows++;
    }
  }
  Var nodes = apply_mlp(bm.node_encoder, tape.constant(std::move(features)));
  Var edges;
  std::vector<int> edge_row(static_cast<std::size_t>(m * ne), -1);
  std::vector<std::pair<int, int>> owner;

  for (int t = 1; t <= rounds; ++t) {
    auto ut = static_cast<std::size_t>(t);
    auto blk = static_cast<std::size_t>(bm.model->block_for_round(t));
    const BoundMlp& fe = bm.edge_update[blk];
    const BoundMlp& fv = bm.node_update[blk];
    const int node_off = static_cast<int>(nodes.rows());
    const int edge_off = t == 1 ? 0 : static_cast<int>(edges.rows());
    Var src_r = concat_rows(linear_block(nodes, fe.w1, h), imp.pr[ut]);
    Var src_s = concat_rows(linear_block(nodes, fe.w1, 2 * h), imp.ps[ut]);
    Var src_e = t == 1 ? imp.pe[ut] : concat_rows(linear_block(edges, fe.w1, 0), imp.pe[ut]);

    std::vector<int> ie, ir, is;
    std::vector<int> next_edge_row(static_cast<std::size_t>(m * ne), -1);
    owner.clear();
    for (int j = 0; j < m; ++j) {
      for (int k : plans[static_cast<std::size_t>(j)].edges[ut]) {
        const EdgeTriple& e = g.edge(k);
        int pe = edge_row[cell(j, ne, k)];
        int pr = node_row[cell(j, n, e.receiver)];
        int ps = node_row[cell(j, n, e.sender)];
        next_edge_row[cell(j, ne, k)] = static_cast<int>(ie.size());
        owner.emplace_back(j, k);
        ie.push_back(pe >= 0 ? pe : edge_off + k);
        ir.push_back(pr >= 0 ? pr : node_off + e.receiver);
        is.push_back(ps >= 0 ? ps : node_off + e.sender);
      }
    }
    const int edge_rows = static_cast<int>(ie.size());
    Var next_edges = detail::edge_update_from_projections(fe, src_e, std::move(ie), src_r, std::move(ir), src_s,
                                                          std::move(is));

    if (t < rounds) {
      Var all_edges = concat_rows(next_edges, imp.edges[ut]);
      std::vector<int> source, segment, in;
      std::vector<int> next_node_row(static_cast<std::size_t>(m * n), -1);
      int r = 0;
      for (int j = 0; j < m; ++j) {
        for (int i : plans[static_cast<std::size_t>(j)].nodes[ut]) {
          for (EdgeId k : g.in_edges(i)) {
            int er = next_edge_row[cell(j, ne, k)];
            source.push_back(er >= 0 ? er : edge_rows + k);
            segment.push_back(r);
          }
          int pn = node_row[cell(j, n, i)];
          in.push_back(pn >= 0 ? pn : node_off + i);
          next_node_row[cell(j, n, i)] = r++;
        }
      }
      Var agg = diff::segment_sum(all_edges, std::move(source), std::move(segment), r);
      Var src_n = concat_rows(linear_block(nodes, fv.w1, h), imp.pn[ut]);
      nodes = detail::node_update_from_projections(fv, agg, src_n, std::move(in));
      node_row = std::move(next_node_row);
    }
    edges = next_edges;
    edge_row = std::move(next_edge_row);
  }
  return ChunkResult{decode(bm, edges), std::move(owner)};
}

// Pair ranges [begin, end) with roughly `target` evaluated edge rows each.
std::vector<std::pair<int, int>> make_chunks(const std::vector<int>& cost, int target) {
  std::vector<std::pair<int, int>> out;
  int begin = 0;
  long acc = 0;
  for (int i = 0; i < static_cast<int>(cost.size()); ++i) {
    acc += cost[static_cast<std::size_t>(i)];
    if (acc >= target) {
      out.emplace_back(begin, i + 1);
      begin = i + 1;
      acc = 0;
    }
  }
  if (begin < static_cast<int>(cost.size())) out.emplace_back(begin, static_cast<int>(cost.size()));
  return out;
}

std::vector<PairQuery> all_queries(const Graph& g) {
  std::vector<PairQuery> out;
  for (int i = 0; i < g.pair_count(); ++i) {
    auto [u, v] = g.pair_at(i);
    out.push_back({u, v});
  }
  return out;
}

Matrix weight_column(const Graph& g, const WeightVector& w) {
  validate_weights(g, w);
  Matrix col(g.edge_count(), 1);
  for (int k = 0; k < g.edge_count(); ++k) col(k, 0) = w[static_cast<std::size_t>(k)];
  return col;
}

void check_options(const AllPairsOptions& opts) {
  if (opts.chunk_rows < 1) throw Error(ErrorCode::kInvalidParameters, "chunk_rows must be positive");
}

void check_seed(const Matrix& seed, const Graph& g) {
  if (seed.rows() != g.pair_count() || seed.cols() != g.edge_count()) {
    throw Error(ErrorCode::kShapeMismatch, "seed must be pair_count x edge_count");
  }
}

// --- sparse engines ----------------------------------------------------------

// Baseline run, per-pair plans and chunking shared by the sparse engines.
class SparseSetup {
 public:
  SparseSetup(const GnnModel& model, const Graph& g, const WeightVector& w, const AllPairsOptions& opts,
              bool with_gradient)
      : model_(model), g_(g), base_bound_(base_tape_, model, false) {
    Matrix col = weight_column(g, w);
    weights_ = with_gradient ? base_tape_.variable(std::move(col)) : base_tape_.constant(std::move(col));
    base_ = run_baseline(base_bound_, g, weights_);
    std::vector<int> cost;
    for (const PairQuery& q : all_queries(g)) {
      plans_.push_back(plan_pair(g, q, model.config().rounds));
      cost.push_back(static_cast<int>(plans_.back().edges.back().size()));
    }
    chunks_ = make_chunks(cost, opts.chunk_rows);
  }

 protected:
  std::span<const PairPlan> chunk_plans(int b, int e) const {
    return std::span<const PairPlan>(plans_).subspan(static_cast<std::size_t>(b), static_cast<std::size_t>(e - b));
  }

  // Pulls gradients accumulated on the baseline values (aligned with
  // Baseline::all()) back to the weights.
  std::vector<double> weight_gradient(std::vector<Matrix> acc) {
    std::vector<Var*> targets = base_.all();
    std::vector<std::pair<Var, Matrix>> seeds;
    for (std::size_t i = 0; i < targets.size(); ++i) seeds.emplace_back(*targets[i], std::move(acc[i]));
    base_tape_.backward(seeds);
    Matrix gw = base_tape_.grad(weights_);
    return std::vector<double>(gw.data(), gw.data() + gw.size());
  }

  const GnnModel& model_;
  const Graph& g_;
  Tape base_tape_;
  BoundModel base_bound_;
  Var weights_;
  Baseline base_;
  std::vector<PairPlan> plans_;
  std::vector<std::pair<int, int>> chunks_;
};

class SparseEngine : SparseSetup {
 public:
  using SparseSetup::SparseSetup;

  Matrix forward() {
    Matrix p(g_.pair_count(), g_.edge_count());
    const Matrix& fallback = base_.decoded.value();
    for (auto [b, e] : chunks_) {
      Tape tape;
      BoundModel bm(tape, model_, false);
      Baseline imp = import_baseline(tape, base_, false);
      ChunkResult r = run_chunk(tape, bm, g_, chunk_plans(b, e), imp);
      for (int j = b; j < e; ++j) p.row(j) = fallback.col(0).transpose();
      const Matrix& d = r.decoded.value();
      for (std::size_t i = 0; i < r.owner.size(); ++i) {
        p(b + r.owner[i].first, r.owner[i].second) = d(static_cast<Eigen::Index>(i), 0);
      }
    }
    return p;
  }

  std::vector<double> backward(const Matrix& seed) {
    std::vector<Matrix> acc;
    for (Var* v : base_.all()) acc.push_back(Matrix::Zero(v->rows(), v->cols()));
    Matrix& dec_acc = acc.back();

    for (auto [b, e] : chunks_) {
      Tape tape;
      BoundModel bm(tape, model_, false);
      Baseline imp = import_baseline(tape, base_, true);
      ChunkResult r = run_chunk(tape, bm, g_, chunk_plans(b, e), imp);
      Matrix local = seed.middleRows(b, e - b);
      Matrix s(static_cast<Eigen::Index>(r.owner.size()), 1);
      for (std::size_t i = 0; i < r.owner.size(); ++i) {
        auto [j, k] = r.owner[i];
        s(static_cast<Eigen::Index>(i), 0) = local(j, k);
        local(j, k) = 0.0;
      }
      dec_acc += local.colwise().sum().transpose();
      std::pair<Var, Matrix> seeds[] = {{r.decoded, std::move(s)}};
      tape.backward(seeds);
      std::vector<Var*> imported = imp.all();
      for (std::size_t i = 0; i + 1 < imported.size(); ++i) acc[i] += tape.grad(*imported[i]);
    }
    return weight_gradient(std::move(acc));
  }
};

// --- single-precision sparse engine --------------------------------------------
//
// Same computation as run_chunk in float, with an explicit reverse pass.
// Parameters are constants here, so only input gradients are formed. Row
// sources are encoded as code >= 0 for a row of the chunk's own state and
// code < 0 for row -(code + 1) of the baseline.

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int baseline_code(int index) { return -(index + 1); }

struct TailF {
  MatF w2, b2, gain, bias;
};

TailF tail_f(const Mlp& m) {
  return TailF{m.w2.cast<float>(), m.b2.cast<float>(), m.ln_gain.cast<float>(), m.ln_bias.cast<float>()};
}

struct TailTrace {
  Mask mask;
  MatF xhat;
  Eigen::VectorXf inv_std;

  std::size_t bytes() const {
    return static_cast<std::size_t>(mask.size()) + sizeof(float) * static_cast<std::size_t>(xhat.size() + inv_std.size());
  }
};

// ReLU, second layer and layer normalization applied to `pre` in place.
void tail_forward(const TailF& m, MatF& pre, TailTrace* trace) {
  if (trace != nullptr) trace->mask = (pre.array() > 0.0f).cast<std::uint8_t>();
  MatF z = pre.cwiseMax(0.0f) * m.w2.transpose();
  z.rowwise() += m.b2.row(0);
  Eigen::VectorXf inv_std(z.rows());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    float mu = z.row(r).mean();
    z.row(r).array() -= mu;
    float var = z.row(r).squaredNorm() / static_cast<float>(z.cols());
    inv_std(r) = 1.0f / std::sqrt(var + static_cast<float>(diff::kLayerNormEpsilon));
    z.row(r) *= inv_std(r);
  }
  if (trace != nullptr) {
    trace->xhat = z;
    trace->inv_std = std::move(inv_std);
  }
  pre = z.array().rowwise() * m.gain.row(0).array();
  pre.rowwise() += m.bias.row(0);
}

// d(loss)/d(pre) from d(loss)/d(output).
MatF tail_backward(const TailF& m, const TailTrace& tr, const MatF& dy) {
  MatF dxhat = dy.array().rowwise() * m.gain.row(0).array();
  Eigen::VectorXf mean_d = dxhat.rowwise().mean();
  Eigen::VectorXf mean_dx = dxhat.cwiseProduct(tr.xhat).rowwise().mean();
  MatF dz = dxhat;
  dz.colwise() -= mean_d;
  dz -= (tr.xhat.array().colwise() * mean_dx.array()).matrix();
  dz = dz.array().colwise() * tr.inv_std.array();
  MatF da = dz * m.w2;
  return da.array() * tr.mask.cast<float>();
}

struct BlockF {
  MatF node_proj;  // [W1 receiver part; W1 sender part; node W1 own part], 3H x H
  MatF edge_proj;  // edge W1 edge part
  MatF agg_proj;   // node W1 aggregate part
  MatF edge_b1, node_b1;
  TailF edge_tail, node_tail;
};

struct ParamsF {
  MatF enc_w1, enc_b1;
  TailF enc_tail;
  std::vector<BlockF> blocks;
  MatF dec_w1, dec_b1, dec_w2;
  float dec_b2 = 0.0f;
};

ParamsF params_f(const GnnModel& model) {
  const Eigen::Index h = model.config().hidden;
  ParamsF p;
  p.enc_w1 = model.node_encoder().w1.cast<float>();
  p.enc_b1 = model.node_encoder().b1.cast<float>();
  p.enc_tail = tail_f(model.node_encoder());
  for (int b = 0; b < model.block_count(); ++b) {
    const Mlp& fe = model.edge_update(b);
    const Mlp& fv = model.node_update(b);
    BlockF blk;
    blk.node_proj.resize(3 * h, h);
    blk.node_proj.topRows(h) = fe.w1.middleCols(h, h).cast<float>();
    blk.node_proj.middleRows(h, h) = fe.w1.middleCols(2 * h, h).cast<float>();
    blk.node_proj.bottomRows(h) = fv.w1.middleCols(h, h).cast<float>();
    blk.edge_proj = fe.w1.leftCols(h).cast<float>();
    blk.agg_proj = fv.w1.leftCols(h).cast<float>();
    blk.edge_b1 = fe.b1.cast<float>();
    blk.node_b1 = fv.b1.cast<float>();
    blk.edge_tail = tail_f(fe);
    blk.node_tail = tail_f(fv);
    p.blocks.push_back(std::move(blk));
  }
  p.dec_w1 = model.decoder().w1.cast<float>();
  p.dec_b1 = model.decoder().b1.cast<float>();
  p.dec_w2 = model.decoder().w2.cast<float>();
  p.dec_b2 = static_cast<float>(model.decoder().b2(0, 0));
  return p;
}

struct RoundTrace {
  int prev_nodes = 0;
  int prev_edges = 0;
  std::vector<int> ie, ir, is;
  TailTrace edge;
  bool has_nodes = false;
  std::vector<int> agg_source, agg_segment, in;
  TailTrace node;
};

struct ChunkTrace {
  std::vector<RoundTrace> rounds;  // index t-1 for round t
  Mask dec_mask;
  Eigen::VectorXf prob;
  std::vector<std::pair<int, int>> owner;

  std::size_t bytes() const {
    std::size_t n = static_cast<std::size_t>(dec_mask.size()) + sizeof(float) * static_cast<std::size_t>(prob.size());
    for (const auto& r : rounds) {
      n += r.edge.bytes() + r.node.bytes() +
           sizeof(int) * (r.ie.size() * 3 + r.agg_source.size() * 2 + r.in.size());
    }
    return n;
  }
};

// Baseline values in float, indexed like Baseline.
struct BaselineF {
  std::vector<MatF> pe, pr, ps, pn, edges;
  MatF decoded;
};

class SingleEngine : SparseSetup {
 public:
  SingleEngine(const GnnModel& model, const Graph& g, const WeightVector& w, const AllPairsOptions& opts,
               bool with_gradient)
      : SparseSetup(model, g, w, opts, with_gradient), params_(params_f(model)), budget_(opts.activation_budget) {
    auto convert = [](const std::vector<Var>& v) {
      std::vector<MatF> out(v.size());
      for (std::size_t t = 0; t < v.size(); ++t) {
        if (v[t].tape() != nullptr) out[t] = v[t].value().cast<float>();
      }
      return out;
    };
    bf_.pe = convert(base_.pe);
    bf_.pr = convert(base_.pr);
    bf_.ps = convert(base_.ps);
    bf_.pn = convert(base_.pn);
    bf_.edges = convert(base_.edges);
    bf_.decoded = base_.decoded.value().cast<float>();
  }

  Matrix forward() {
    Matrix p(g_.pair_count(), g_.edge_count());
    std::size_t stored = 0;
    traces_.clear();
    traces_.resize(chunks_.size());
    for (std::size_t c = 0; c < chunks_.size(); ++c) {
      auto [b, e] = chunks_[c];
      ChunkTrace tr = run(chunk_plans(b, e));
      for (int j = b; j < e; ++j) p.row(j) = bf_.decoded.col(0).transpose().cast<double>();
      for (std::size_t i = 0; i < tr.owner.size(); ++i) {
        p(b + tr.owner[i].first, tr.owner[i].second) = static_cast<double>(tr.prob(static_cast<Eigen::Index>(i)));
      }
      stored += tr.bytes();
      if (stored <= budget_) traces_[c] = std::move(tr);
    }
    return p;
  }

  std::vector<double> backward(const Matrix& seed) {
    BaselineF grads;
    auto zeros_like = [](const std::vector<MatF>& v) {
      std::vector<MatF> out(v.size());
      for (std::size_t t = 0; t < v.size(); ++t) out[t] = MatF::Zero(v[t].rows(), v[t].cols());
      return out;
    };
    grads.pe = zeros_like(bf_.pe);
    grads.pr = zeros_like(bf_.pr);
    grads.ps = zeros_like(bf_.ps);
    grads.pn = zeros_like(bf_.pn);
    grads.edges = zeros_like(bf_.edges);
    Eigen::VectorXd dec_acc = Eigen::VectorXd::Zero(g_.edge_count());

    for (std::size_t c = 0; c < chunks_.size(); ++c) {
      auto [b, e] = chunks_[c];
      ChunkTrace tr = traces_[c].rounds.empty() ? run(chunk_plans(b, e)) : std::move(traces_[c]);
      Matrix local = seed.middleRows(b, e - b);
      Eigen::VectorXf s(static_cast<Eigen::Index>(tr.owner.size()));
      for (std::size_t i = 0; i < tr.owner.size(); ++i) {
        auto [j, k] = tr.owner[i];
        s(static_cast<Eigen::Index>(i)) = static_cast<float>(local(j, k));
        local(j, k) = 0.0;
      }
      dec_acc += local.colwise().sum().transpose();
      reverse(tr, s, grads);
    }
    traces_.clear();

    std::vector<Matrix> acc;
    auto put = [&](const std::vector<Var>& vars, const std::vector<MatF>& g) {
      for (std::size_t t = 0; t < vars.size(); ++t) {
        if (vars[t].tape() != nullptr) acc.push_back(g[t].cast<double>());
      }
    };
    // Same order as Baseline::all().
    put(base_.pe, grads.pe);
    put(base_.pr, grads.pr);
    put(base_.ps, grads.ps);
    put(base_.pn, grads.pn);
    put(base_.edges, grads.edges);
    acc.push_back(dec_acc);
    return weight_gradient(std::move(acc));
  }

 private:
  ChunkTrace run(std::span<const PairPlan> plans) const {
    const Eigen::Index h = model_.config().hidden;
    const int rounds = model_.config().rounds;
    const int n = g_.node_count();
    const int ne = g_.edge_count();
    const int m = static_cast<int>(plans.size());
    auto cell = [](int pair, int count, int item) { return static_cast<std::size_t>(pair * count + item); };

    ChunkTrace tr;
    std::vector<int> node_row(static_cast<std::size_t>(m * n), -1);
    MatF x = MatF::Zero(2 * m, kNodeFeatures);
    int rows = 0;
    for (int j = 0; j < m; ++j) {
      const PairQuery& q = plans[static_cast<std::size_t>(j)].query;
      for (int i : plans[static_cast<std::size_t>(j)].nodes[0]) {
        x(rows, 0) = i == q.source ? 1.0f : 0.0f;
        x(rows, 1) = i == q.destination ? 1.0f : 0.0f;
        node_row[cell(j, n, i)] = rows++;
      }
    }
    MatF nodes = x * params_.enc_w1.transpose();
    nodes.rowwise() += params_.enc_b1.row(0);
    tail_forward(params_.enc_tail, nodes, nullptr);

    MatF edges;
    std::vector<int> edge_row(static_cast<std::size_t>(m * ne), -1);
    for (int t = 1; t <= rounds; ++t) {
      auto ut = static_cast<std::size_t>(t);
      const BlockF& blk = params_.blocks[static_cast<std::size_t>(model_.block_for_round(t))];
      RoundTrace rt;
      rt.prev_nodes = static_cast<int>(nodes.rows());
      rt.prev_edges = t == 1 ? 0 : static_cast<int>(edges.rows());
      rt.has_nodes = t < rounds;
      MatF p3 = nodes * (rt.has_nodes ? blk.node_proj : MatF(blk.node_proj.topRows(2 * h))).transpose();
      MatF pe;
      if (t > 1) pe = edges * blk.edge_proj.transpose();

      std::vector<int> next_edge_row(static_cast<std::size_t>(m * ne), -1);
      for (int j = 0; j < m; ++j) {
        for (int k : plans[static_cast<std::size_t>(j)].edges[ut]) {
          const EdgeTriple& ed = g_.edge(k);
          int a = edge_row[cell(j, ne, k)];
          int r = node_row[cell(j, n, ed.receiver)];
          int s = node_row[cell(j, n, ed.sender)];
          next_edge_row[cell(j, ne, k)] = static_cast<int>(rt.ie.size());
          if (t == rounds) tr.owner.emplace_back(j, k);
          rt.ie.push_back(a >= 0 ? a : baseline_code(k));
          rt.ir.push_back(r >= 0 ? r : baseline_code(ed.receiver));
          rt.is.push_back(s >= 0 ? s : baseline_code(ed.sender));
        }
      }
      const auto edge_rows = static_cast<Eigen::Index>(rt.ie.size());
      MatF pre(edge_rows, h);
      for (Eigen::Index j = 0; j < edge_rows; ++j) {
        auto uj = static_cast<std::size_t>(j);
        auto row = pre.row(j);
        row = blk.edge_b1.row(0);
        int a = rt.ie[uj], r = rt.ir[uj], s = rt.is[uj];
        if (a >= 0) {
          row += pe.row(a);
        } else {
          row += bf_.pe[ut].row(-a - 1);
        }
        if (r >= 0) {
          row += p3.row(r).head(h);
        } else {
          row += bf_.pr[ut].row(-r - 1);
        }
        if (s >= 0) {
          row += p3.row(s).segment(h, h);
        } else {
          row += bf_.ps[ut].row(-s - 1);
        }
      }
      tail_forward(blk.edge_tail, pre, &rt.edge);
      edges = std::move(pre);

      if (rt.has_nodes) {
        std::vector<int> next_node_row(static_cast<std::size_t>(m * n), -1);
        int r = 0;
        for (int j = 0; j < m; ++j) {
          for (int i : plans[static_cast<std::size_t>(j)].nodes[ut]) {
            for (EdgeId k : g_.in_edges(i)) {
              int er = next_edge_row[cell(j, ne, k)];
              rt.agg_source.push_back(er >= 0 ? er : baseline_code(k));
              rt.agg_segment.push_back(r);
            }
            int pn = node_row[cell(j, n, i)];
            rt.in.push_back(pn >= 0 ? pn : baseline_code(i));
            next_node_row[cell(j, n, i)] = r++;
          }
        }
        MatF agg = MatF::Zero(r, h);
        for (std::size_t q = 0; q < rt.agg_source.size(); ++q) {
          int src = rt.agg_source[q];
          if (src >= 0) {
            agg.row(rt.agg_segment[q]) += edges.row(src);
          } else {
            agg.row(rt.agg_segment[q]) += bf_.edges[ut].row(-src - 1);
          }
        }
        MatF npre = agg * blk.agg_proj.transpose();
        for (Eigen::Index j = 0; j < r; ++j) {
          int own = rt.in[static_cast<std::size_t>(j)];
          npre.row(j) += blk.node_b1.row(0);
          if (own >= 0) {
            npre.row(j) += p3.row(own).segment(2 * h, h);
          } else {
            npre.row(j) += bf_.pn[ut].row(-own - 1);
          }
        }
        tail_forward(blk.node_tail, npre, &rt.node);
        nodes = std::move(npre);
        node_row = std::move(next_node_row);
      }
      edge_row = std::move(next_edge_row);
      tr.rounds.push_back(std::move(rt));
    }

    MatF d = edges * params_.dec_w1.transpose();
    d.rowwise() += params_.dec_b1.row(0);
    tr.dec_mask = (d.array() > 0.0f).cast<std::uint8_t>();
    Eigen::VectorXf logit = d.cwiseMax(0.0f) * params_.dec_w2.row(0).transpose();
    tr.prob = logit.unaryExpr([this](float v) {
      float z = v + params_.dec_b2;
      return z >= 0.0f ? 1.0f / (1.0f + std::exp(-z)) : std::exp(z) / (1.0f + std::exp(z));
    });
    return tr;
  }

  void reverse(const ChunkTrace& tr, const Eigen::VectorXf& seed, BaselineF& grads) const {
    const Eigen::Index h = model_.config().hidden;
    const int rounds = model_.config().rounds;
    Eigen::VectorXf dlogit = seed.array() * tr.prob.array() * (1.0f - tr.prob.array());
    MatF dd = (dlogit * params_.dec_w2.row(0)).array() * tr.dec_mask.cast<float>();
    MatF d_edges = dd * params_.dec_w1;
    MatF d_nodes;

    for (int t = rounds; t >= 1; --t) {
      auto ut = static_cast<std::size_t>(t);
      const RoundTrace& rt = tr.rounds[ut - 1];
      const BlockF& blk = params_.blocks[static_cast<std::size_t>(model_.block_for_round(t))];
      MatF dp3 = MatF::Zero(rt.prev_nodes, rt.has_nodes ? 3 * h : 2 * h);
      MatF dpe = MatF::Zero(rt.prev_edges, h);

      if (rt.has_nodes) {
        MatF dpre = tail_backward(blk.node_tail, rt.node, d_nodes);
        MatF dagg = dpre * blk.agg_proj;
        for (Eigen::Index j = 0; j < dpre.rows(); ++j) {
          int own = rt.in[static_cast<std::size_t>(j)];
          if (own >= 0) {
            dp3.row(own).segment(2 * h, h) += dpre.row(j);
          } else {
            grads.pn[ut].row(-own - 1) += dpre.row(j);
          }
        }
        for (std::size_t q = 0; q < rt.agg_source.size(); ++q) {
          int src = rt.agg_source[q];
          if (src >= 0) {
            d_edges.row(src) += dagg.row(rt.agg_segment[q]);
          } else {
            grads.edges[ut].row(-src - 1) += dagg.row(rt.agg_segment[q]);
          }
        }
      }

      MatF dpre = tail_backward(blk.edge_tail, rt.edge, d_edges);
      for (Eigen::Index j = 0; j < dpre.rows(); ++j) {
        auto uj = static_cast<std::size_t>(j);
        int a = rt.ie[uj], r = rt.ir[uj], s = rt.is[uj];
        if (a >= 0) {
          dpe.row(a) += dpre.row(j);
        } else {
          grads.pe[ut].row(-a - 1) += dpre.row(j);
        }
        if (r >= 0) {
          dp3.row(r).head(h) += dpre.row(j);
        } else {
          grads.pr[ut].row(-r - 1) += dpre.row(j);
        }
        if (s >= 0) {
          dp3.row(s).segment(h, h) += dpre.row(j);
        } else {
          grads.ps[ut].row(-s - 1) += dpre.row(j);
        }
      }
      if (t > 1) {
        d_nodes = dp3 * blk.node_proj.topRows(dp3.cols());
        d_edges = dpe * blk.edge_proj;
      }
    }
  }

  ParamsF params_;
  std::size_t budget_;
  BaselineF bf_;
  std::vector<ChunkTrace> traces_;
};

// --- dense engine ------------------------------------------------------------

class DenseEngine {
 public:
  DenseEngine(const GnnModel& model, const Graph& g, const WeightVector& w, const AllPairsOptions& opts)
      : model_(model), g_(g), w_(w), weights_(weight_column(g, w)), queries_(all_queries(g)) {
    int per_chunk = std::max(1, opts.chunk_rows / std::max(1, g.edge_count()));
    for (int b = 0; b < g.pair_count(); b += per_chunk) chunks_.emplace_back(b, std::min(g.pair_count(), b + per_chunk));
  }

  Matrix forward() {
    Matrix p(g_.pair_count(), g_.edge_count());
    for (auto [b, e] : chunks_) {
      Tape tape;
      Var out = run(tape, b, e, false).first;
      p.middleRows(b, e - b) = diff::reshape(out, e - b, g_.edge_count()).value();
    }
    return p;
  }

  std::vector<double> backward(const Matrix& seed) {
    Matrix gw = Matrix::Zero(g_.edge_count(), 1);
    for (auto [b, e] : chunks_) {
      Tape tape;
      auto [out, w] = run(tape, b, e, true);
      Matrix s = seed.middleRows(b, e - b);
      std::pair<Var, Matrix> seeds[] = {{out, Eigen::Map<const Matrix>(s.data(), out.rows(), 1)}};
      tape.backward(seeds);
      gw += tape.grad(w);
    }
    return std::vector<double>(gw.data(), gw.data() + gw.size());
  }

 private:
  std::pair<Var, Var> run(Tape& tape, int b, int e, bool with_gradient) {
    GraphBatch batch;
    std::vector<int> tile;
    for (int i = b; i < e; ++i) {
      batch.append(g_, w_, queries_[static_cast<std::size_t>(i)]);
      for (int k = 0; k < g_.edge_count(); ++k) tile.push_back(k);
    }
    BoundModel bm(tape, model_, false);
    Var w = with_gradient ? tape.variable_ref(weights_) : tape.constant_ref(weights_);
    Var out = detail::forward_final(bm, batch, diff::gather_rows(w, std::move(tile)));
    return {out, w};
  }

  const GnnModel& model_;
  const Graph& g_;
  const WeightVector& w_;
  Matrix weights_;
  std::vector<PairQuery> queries_;
  std::vector<std::pair<int, int>> chunks_;
};

}  // namespace

Matrix predict_all_pairs(const GnnModel& model, const Graph& g, const WeightVector& w) {
  return predict_all_pairs(model, g, w, AllPairsOptions{});
}

Matrix predict_all_pairs(const GnnModel& model, const Graph& g, const WeightVector& w, const AllPairsOptions& opts) {
  check_options(opts);
  switch (opts.engine) {
    case AllPairsEngine::kSparse:
      return SparseEngine(model, g, w, opts, false).forward();
    case AllPairsEngine::kDense:
      return DenseEngine(model, g, w, opts).forward();
    case AllPairsEngine::kSparseSingle:
      return SingleEngine(model, g, w, AllPairsOptions{opts.engine, opts.chunk_rows, 0}, false).forward();
  }
  throw Error(ErrorCode::kInvalidParameters, "unknown all-pairs engine");
}

AllPairsGradient all_pairs_vjp(const GnnModel& model, const Graph& g, const WeightVector& w,
                               const std::function<Matrix(const Matrix&)>& seed_fn) {
  return all_pairs_vjp(model, g, w, seed_fn, AllPairsOptions{});
}

namespace {

template <class Engine>
AllPairsGradient run_vjp(Engine&& engine, const Graph& g, const std::function<Matrix(const Matrix&)>& seed_fn) {
  AllPairsGradient out;
  out.probabilities = engine.forward();
  Matrix seed = seed_fn(out.probabilities);
  check_seed(seed, g);
  out.weight_gradient = engine.backward(seed);
  return out;
}

}  // namespace

AllPairsGradient all_pairs_vjp(const GnnModel& model, const Graph& g, const WeightVector& w,
                               const std::function<Matrix(const Matrix&)>& seed_fn, const AllPairsOptions& opts) {
  check_options(opts);
  switch (opts.engine) {
    case AllPairsEngine::kSparse:
      return run_vjp(SparseEngine(model, g, w, opts, true), g, seed_fn);
    case AllPairsEngine::kDense:
      return run_vjp(DenseEngine(model, g, w, opts), g, seed_fn);
    case AllPairsEngine::kSparseSingle:
      return run_vjp(SingleEngine(model, g, w, opts, true), g, seed_fn);
  }
  throw Error(ErrorCode::kInvalidParameters, "unknown all-pairs engine");
}

}  // namespace rbb
