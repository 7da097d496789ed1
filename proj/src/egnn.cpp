#include "equiflow/egnn.hpp"

#include <cmath>
#include <stdexcept>

namespace equiflow {

namespace {

// mlp with SiLU hidden activations; `activate_last` selects the output style
Var run_mlp(ParamBinding& bind, const std::vector<int>& w, const std::vector<int>& b, Var x,
            bool activate_last) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    x = linear(x, bind[w[i]], bind[b[i]]);
    if (activate_last || i + 1 < w.size()) x = silu(x);
  }
  return x;
}

Tensor offdiag_mask(std::int64_t n) {
  Tensor mask(Shape{n, n, 1});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) mask.at({i, j, 0}) = i == j ? 0.0 : 1.0;
  return mask;
}

}  // namespace

void EgnnConfig::validate() const {
  if (num_layers < 1 || hidden_width < 1 || mlp_depth < 1)
    throw std::invalid_argument("egnn: layers/width/depth must be >= 1");
  if (num_output_sets < 1 || num_out_channels < 1 || refs_per_set < 1 ||
      num_position_channels < 1 || params_per_atom < 0)
    throw std::invalid_argument("egnn: output structure must be positive");
  if (!(distance_epsilon > 0)) throw std::invalid_argument("egnn: distance_epsilon must be > 0");
}

Egnn::Mlp Egnn::make_mlp(ParamStore& store, const std::string& prefix, int in, int hidden,
                         int out, Rng& rng, bool zero_last) {
  Mlp mlp;
  int cur = in;
  for (int layer = 0; layer < cfg_.mlp_depth; ++layer) {
    const bool last = layer + 1 == cfg_.mlp_depth;
    const int width = last ? out : hidden;
    const std::string stem = prefix + ".l" + std::to_string(layer);
    Tensor w = (last && zero_last) ? Tensor::zeros(Shape{cur, width})
                                   : trunc_normal_init(rng, Shape{cur, width}, cur);
    mlp.w.push_back(store.add(stem + ".w", std::move(w)));
    mlp.b.push_back(store.add(stem + ".b", Tensor::zeros(Shape{width})));
    cur = width;
  }
  return mlp;
}

Egnn::Egnn(const EgnnConfig& cfg, ParamStore& store, const std::string& prefix, Rng& init_rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int h = cfg_.hidden_width;
  const int c = cfg_.num_position_channels;
  const int edge_in = 2 * h + c * c;
  for (int l = 0; l < cfg_.num_layers; ++l) {
    Layer layer;
    const std::string stem = prefix + ".layer" + std::to_string(l);
    layer.edge = make_mlp(store, stem + ".edge", edge_in, h, h, init_rng, false);
    layer.node = make_mlp(store, stem + ".node", 2 * h, h, h, init_rng, false);
    layer.pos_w = store.add(stem + ".pos.w", trunc_normal_init(init_rng, Shape{h, c}, h));
    layer.pos_b = store.add(stem + ".pos.b", Tensor::zeros(Shape{c}));
    layers_.push_back(layer);
  }
  const int g = cfg_.num_output_sets * cfg_.num_out_channels * cfg_.refs_per_set;
  const int p = cfg_.num_output_sets * cfg_.num_out_channels * cfg_.params_per_atom;
  ref_w_ = store.add(prefix + ".ref.w", Tensor::zeros(Shape{h, g * c}));
  ref_b_ = store.add(prefix + ".ref.b", Tensor::zeros(Shape{g * c}));
  par_w_ = store.add(prefix + ".par.w", Tensor::zeros(Shape{h, p}));
  par_b_ = store.add(prefix + ".par.b", Tensor::zeros(Shape{p}));
}

ConditionerOutput Egnn::forward(Tape& tape, ParamBinding& bind,
                                const std::vector<Var>& channels) const {
  const int c = cfg_.num_position_channels;
  if (static_cast<int>(channels.size()) != c)
    throw std::invalid_argument("egnn: expected " + std::to_string(c) + " position channels");
  const Shape in_shape = channels[0].shape();
  const std::int64_t batch = in_shape[0], n = in_shape[1], d = in_shape[2];
  const int hw = cfg_.hidden_width;
  const double inv_deg = 1.0 / static_cast<double>(n - 1);

  std::vector<Var> stacked;
  for (Var ch : channels) stacked.push_back(reshape(ch, Shape{batch, n, 1, d}));
  Var xch = c == 1 ? stacked[0] : concat(stacked, 2);  // (B, n, C, d)

  Var mask = tape.constant(offdiag_mask(n));
  Var h = tape.constant(Tensor::zeros(Shape{batch, n, hw}));

  Var m_last{}, unit_last{}, d2_last{};
  for (const Layer& layer : layers_) {
    // geometry at the current positions
    Var xi = reshape(xch, Shape{batch, n, 1, c, d});
    Var xj = reshape(xch, Shape{batch, 1, n, c, d});
    Var diff = sub(xi, xj);                                     // (B,n,n,C,d)
    Var d2 = sum_axis(square(diff), -1, false);                 // (B,n,n,C)
    Var norm = sqrt(add_scalar(d2, 1e-16));
    Var unit = div(diff, reshape(add_scalar(norm, cfg_.distance_epsilon),
                                 Shape{batch, n, n, c, 1}));    // (B,n,n,C,d)
    Var d2_cross{};
    if (c == 1) {
      d2_cross = d2;  // (B,n,n,1)
    } else {
      Var ai = reshape(xch, Shape{batch, n, 1, c, 1, d});
      Var aj = reshape(xch, Shape{batch, 1, n, 1, c, d});
      Var dc = sum_axis(square(sub(ai, aj)), -1, false);        // (B,n,n,C,C)
      d2_cross = reshape(dc, Shape{batch, n, n, c * c});
    }

    Var hi = broadcast_to(reshape(h, Shape{batch, n, 1, hw}), Shape{batch, n, n, hw});
    Var hj = broadcast_to(reshape(h, Shape{batch, 1, n, hw}), Shape{batch, n, n, hw});
    Var edge_in = concat({hi, hj, d2_cross}, -1);
    Var m = run_mlp(bind, layer.edge.w, layer.edge.b, edge_in, true);  // (B,n,n,H)

    Var agg = sum_axis(mul(m, mask), 2, false);                        // (B,n,H)
    Var node_out = run_mlp(bind, layer.node.w, layer.node.b, concat({h, agg}, -1), false);
    h = add(h, node_out);

    Var wpos = mul(linear(m, bind[layer.pos_w], bind[layer.pos_b]), mask);  // (B,n,n,C)
    Var delta = sum_axis(mul(reshape(wpos, Shape{batch, n, n, c, 1}), unit), 2, false);
    xch = add(xch, scale(delta, inv_deg));                             // (B,n,C,d)

    m_last = m;
    unit_last = unit;
    d2_last = d2;
  }

  const int m_sets = cfg_.num_output_sets * cfg_.num_out_channels;
  const int u = cfg_.refs_per_set;
  const int g = m_sets * u;

  // learned per-edge weights for reference offsets, plus fixed distance
  // kernels per reference index so the offsets are non-degenerate at init
  Var ref_w = linear(m_last, bind[ref_w_], bind[ref_b_]);  // (B,n,n,G*C)
  std::vector<Var> offset_parts;
  offset_parts.push_back(tape.constant(Tensor::zeros(Shape{batch, n, n, 1, c})));
  for (int j = 1; j < u; ++j) {
    const double s = static_cast<double>(j * j);
    Var kernel = exp(scale(d2_last, -1.0 / s));  // (B,n,n,C)
    offset_parts.push_back(reshape(kernel, Shape{batch, n, n, 1, c}));
  }
  Var offs = concat(offset_parts, 3);  // (B,n,n,u,C)
  if (m_sets > 1) {
    offs = reshape(offs, Shape{batch, n, n, 1, u * c});
    offs = broadcast_to(offs, Shape{batch, n, n, m_sets, u * c});
  }
  offs = reshape(offs, Shape{batch, n, n, g * c});

  Var total = mul(add(ref_w, offs), mask);  // (B,n,n,G*C)
  Var weighted = mul(reshape(total, Shape{batch, n, n, g, c, 1}),
                     reshape(unit_last, Shape{batch, n, n, 1, c, d}));
  Var combo = sum_axis(sum_axis(weighted, 4, false), 2, false);  // (B,n,G,d)
  Var anchor = slice(xch, 2, 0, 1);                              // (B,n,1,d)
  Var references = add(anchor, scale(combo, inv_deg));           // (B,n,G,d)

  Var stabilized = softmax_last(h);
  Var params = linear(stabilized, bind[par_w_], bind[par_b_]);   // (B,n,M*T*P)

  return ConditionerOutput{references, params};
}

}  // namespace equiflow
