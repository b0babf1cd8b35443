#include "sdsa/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace sdsa::model {

AwarenessLevel level_from_int(int level) {
  switch (level) {
    case 1: return AwarenessLevel::level1;
    case 2: return AwarenessLevel::level2;
    case 3: return AwarenessLevel::level3;
    default: throw ConfigError("awareness level must be 1, 2 or 3, got " + std::to_string(level));
  }
}

int to_int(AwarenessLevel level) noexcept { return static_cast<int>(level); }

std::vector<std::string> feature_layout(AwarenessLevel level) {
  std::vector<std::string> names = {"t_air_c", "srad_mj",   "precip_mm", "moisture_frac",
                                    "gpp",     "clay_frac", "om_pct"};
  if (level == AwarenessLevel::level2) {
    names.emplace_back("lat");
    names.emplace_back("lon");
  }
  return names;
}

ModelConfig ModelConfig::for_level(AwarenessLevel level, std::size_t hidden_dim,
                                   std::size_t n_layers, std::size_t att_dim) {
  ModelConfig cfg;
  cfg.level = level;
  cfg.input_dim = feature_layout(level).size();
  cfg.hidden_dim = hidden_dim;
  cfg.n_layers = n_layers;
  cfg.att_dim = att_dim;
  return cfg;
}

void ModelConfig::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || n_layers == 0 || att_dim == 0) {
    throw ConfigError("model config: all dimensions must be positive");
  }
  const std::size_t expected = feature_layout(level).size();
  if (input_dim != expected) {
    throw ConfigError("model config: level " + std::to_string(to_int(level)) + " expects " +
                      std::to_string(expected) + " input features, got " +
                      std::to_string(input_dim));
  }
}

// ---------------------------------------------------------------------------
// ModelParams

namespace {

template <typename P, typename F>
void visit_spans(P& p, F&& f) {
  for (auto& l : p.layers) {
    f(l.w_z.span()); f(l.w_r.span()); f(l.w_h.span());
    f(l.u_z.span()); f(l.u_r.span()); f(l.u_h.span());
    f(l.b_z.span()); f(l.b_r.span()); f(l.b_h.span());
  }
  f(p.attention.w_a.span()); f(p.attention.b_a.span()); f(p.attention.v_a.span());
  f(p.w_f.span()); f(p.b_f.span()); f(p.w_y.span()); f(p.b_y.span());
}

template <typename View, typename P>
std::vector<View> make_blocks(P& p) {
  std::vector<View> out;
  auto mat = [&](const std::string& name, auto& m, BlockGroup g) {
    out.push_back(View{name, m.span(), m.rows(), m.cols(), false, g});
  };
  auto vec = [&](const std::string& name, auto& v, bool bias, BlockGroup g) {
    out.push_back(View{name, v.span(), 1, v.size(), bias, g});
  };
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    const std::string pre = "gru" + std::to_string(i) + ".";
    mat(pre + "w_z", l.w_z, BlockGroup::encoder);
    mat(pre + "w_r", l.w_r, BlockGroup::encoder);
    mat(pre + "w_h", l.w_h, BlockGroup::encoder);
    mat(pre + "u_z", l.u_z, BlockGroup::encoder);
    mat(pre + "u_r", l.u_r, BlockGroup::encoder);
    mat(pre + "u_h", l.u_h, BlockGroup::encoder);
    vec(pre + "b_z", l.b_z, true, BlockGroup::encoder);
    vec(pre + "b_r", l.b_r, true, BlockGroup::encoder);
    vec(pre + "b_h", l.b_h, true, BlockGroup::encoder);
  }
  mat("attention.w_a", p.attention.w_a, BlockGroup::attention);
  vec("attention.b_a", p.attention.b_a, true, BlockGroup::attention);
  vec("attention.v_a", p.attention.v_a, false, BlockGroup::attention);
  mat("flux.w_f", p.w_f, BlockGroup::head);
  vec("flux.b_f", p.b_f, true, BlockGroup::head);
  vec("yield.w_y", p.w_y, false, BlockGroup::head);
  vec("yield.b_y", p.b_y, true, BlockGroup::head);
  return out;
}

}  // namespace

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t H = cfg.hidden_dim;
  ModelParams p;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::size_t in = l == 0 ? cfg.input_dim : H;
    GruLayerParams layer;
    layer.w_z = nd::Mat(H, in);
    layer.w_r = nd::Mat(H, in);
    layer.w_h = nd::Mat(H, in);
    layer.u_z = nd::Mat(H, H);
    layer.u_r = nd::Mat(H, H);
    layer.u_h = nd::Mat(H, H);
    layer.b_z = nd::Vec(H);
    layer.b_r = nd::Vec(H);
    layer.b_h = nd::Vec(H);
    p.layers.push_back(std::move(layer));
  }
  p.attention.w_a = nd::Mat(cfg.att_dim, H);
  p.attention.b_a = nd::Vec(cfg.att_dim);
  p.attention.v_a = nd::Vec(cfg.att_dim);
  p.w_f = nd::Mat(2, H);
  p.b_f = nd::Vec(2);
  p.w_y = nd::Vec(H);
  p.b_y = nd::Vec(1);
  return p;
}

std::vector<BlockView> ModelParams::blocks() { return make_blocks<BlockView>(*this); }

std::vector<ConstBlockView> ModelParams::blocks() const {
  return make_blocks<ConstBlockView>(*this);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  visit_spans(*this, [&](std::span<const double> s) { n += s.size(); });
  return n;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  visit_spans(*this, [&](std::span<const double> s) { out.insert(out.end(), s.begin(), s.end()); });
  return out;
}

void ModelParams::assign_flat(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeError("assign_flat: expected " + std::to_string(parameter_count()) +
                     " values, got " + std::to_string(flat.size()));
  }
  std::size_t off = 0;
  visit_spans(*this, [&](std::span<double> s) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), s.size(), s.begin());
    off += s.size();
  });
}

void ModelParams::set_zero() {
  visit_spans(*this, [](std::span<double> s) { std::fill(s.begin(), s.end(), 0.0); });
}

void ModelParams::add(const ModelParams& other) {
  std::vector<std::span<const double>> src;
  visit_spans(other, [&](std::span<const double> s) { src.push_back(s); });
  std::size_t k = 0;
  visit_spans(*this, [&](std::span<double> s) {
    if (k >= src.size() || src[k].size() != s.size()) {
      throw ShapeError("ModelParams::add: shape mismatch");
    }
    const double* o = src[k++].data();
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += o[i];
  });
  if (k != src.size()) throw ShapeError("ModelParams::add: shape mismatch");
}

void ModelParams::scale(double factor) {
  visit_spans(*this, [&](std::span<double> s) {
    for (double& v : s) v *= factor;
  });
}

std::uint64_t ModelParams::fingerprint() const {
  // Four independent multiply-xor lanes keep this cheap next to a forward pass.
  std::uint64_t lanes[4] = {0x9e3779b97f4a7c15ULL, 0xbf58476d1ce4e5b9ULL, 0x94d049bb133111ebULL,
                            0x2545f4914f6cdd1dULL};
  std::size_t k = 0;
  visit_spans(*this, [&](std::span<const double> s) {
    for (double v : s) {
      std::uint64_t& h = lanes[k++ & 3];
      h = (h ^ std::bit_cast<std::uint64_t>(v)) * 0x100000001b3ULL;
    }
  });
  std::uint64_t h = k;
  for (std::uint64_t lane : lanes) h = nd::mix64(h ^ lane);
  return h;
}

void ModelParams::check_shapes(const ModelConfig& cfg) const {
  const std::size_t H = cfg.hidden_dim;
  auto mat_ok = [](const nd::Mat& m, std::size_t r, std::size_t c) {
    return m.rows() == r && m.cols() == c && m.size() == r * c;
  };
  bool ok = layers.size() == cfg.n_layers;
  for (std::size_t l = 0; ok && l < layers.size(); ++l) {
    const auto& g = layers[l];
    const std::size_t in = l == 0 ? cfg.input_dim : H;
    ok = mat_ok(g.w_z, H, in) && mat_ok(g.w_r, H, in) && mat_ok(g.w_h, H, in) &&
         mat_ok(g.u_z, H, H) && mat_ok(g.u_r, H, H) && mat_ok(g.u_h, H, H) &&
         g.b_z.size() == H && g.b_r.size() == H && g.b_h.size() == H;
  }
  ok = ok && mat_ok(attention.w_a, cfg.att_dim, H) && attention.b_a.size() == cfg.att_dim &&
       attention.v_a.size() == cfg.att_dim && mat_ok(w_f, 2, H) && b_f.size() == 2 &&
       w_y.size() == H && b_y.size() == 1;
  if (!ok) throw ShapeError("model parameters do not match the model config");
}

ModelParams init_params(const ModelConfig& cfg, const nd::RngStream& rng) {
  ModelParams p = ModelParams::zeros(cfg);
  for (auto& block : p.blocks()) {
    if (block.is_bias) continue;
    // Vectors (v_a, w_y) act as 1 × n matrices: fan_in = n, fan_out = 1.
    const double fan_in = static_cast<double>(block.cols);
    const double fan_out = static_cast<double>(block.rows);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    nd::RngStream s = nd::derive_stream(rng, "init:" + block.name);
    for (double& v : block.values) v = s.uniform(-bound, bound);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Reference single-step operations

nd::Vec gru_cell_forward(const nd::Vec& x, const nd::Vec& h_prev, const GruLayerParams& layer) {
  const std::size_t H = layer.b_z.size();
  if (h_prev.size() != H || layer.w_z.cols() != x.size() || layer.u_z.cols() != H) {
    throw ShapeError("gru_cell_forward: x has length " + std::to_string(x.size()) +
                     ", h_prev has length " + std::to_string(h_prev.size()) + ", W is " +
                     layer.w_z.shape_string() + ", U is " + layer.u_z.shape_string());
  }
  const nd::Vec zero(H);
  auto gate = [&](const nd::Mat& w, const nd::Mat& u, const nd::Vec& hh, const nd::Vec& b) {
    nd::Vec a = nd::affine(w, x, b);
    const nd::Vec uh = nd::affine(u, hh, zero);
    for (std::size_t i = 0; i < H; ++i) a[i] += uh[i];
    return a;
  };
  nd::Vec z = gate(layer.w_z, layer.u_z, h_prev, layer.b_z);
  nd::Vec r = gate(layer.w_r, layer.u_r, h_prev, layer.b_r);
  for (auto& v : z) v = nd::sigmoid(v);
  for (auto& v : r) v = nd::sigmoid(v);
  nd::Vec rh(H);
  for (std::size_t i = 0; i < H; ++i) rh[i] = r[i] * h_prev[i];
  nd::Vec htil = gate(layer.w_h, layer.u_h, rh, layer.b_h);
  nd::Vec out(H);
  for (std::size_t i = 0; i < H; ++i) {
    htil[i] = nd::tanh_act(htil[i]);
    out[i] = (1.0 - z[i]) * h_prev[i] + z[i] * htil[i];
  }
  return out;
}

AttentionResult attention_pool(const std::vector<nd::Vec>& hidden, const AttentionParams& att) {
  if (hidden.empty()) throw DomainError("attention_pool: no timesteps");
  const std::size_t H = hidden.front().size();
  nd::Vec scores(hidden.size());
  for (std::size_t t = 0; t < hidden.size(); ++t) {
    nd::Vec u = nd::affine(att.w_a, hidden[t], att.b_a);
    for (auto& v : u) v = nd::tanh_act(v);
    scores[t] = nd::dot(att.v_a.span(), u.span());
  }
  AttentionResult out;
  out.weights = nd::stable_softmax(scores);
  out.context = nd::Vec(H);
  for (std::size_t t = 0; t < hidden.size(); ++t)
    for (std::size_t i = 0; i < H; ++i) out.context[i] += out.weights[t] * hidden[t][i];
  return out;
}

PredictionGrad PredictionGrad::zeros(std::size_t n_days) {
  PredictionGrad g;
  g.d_ra.assign(n_days, 0.0);
  g.d_rh.assign(n_days, 0.0);
  return g;
}

// ---------------------------------------------------------------------------
// Sequence forward

namespace {

void transpose_into(const nd::Mat& m, double* out) {
  const std::size_t R = m.rows(), C = m.cols();
  const double* src = m.data();
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c * R + r] = src[r * C + c];
}

}  // namespace

Prediction forward(const ModelConfig& cfg, const nd::Mat& inputs, const ModelParams& params,
                   ForwardCache& cache) {
  cfg.validate();
  if (inputs.cols() != cfg.input_dim) {
    throw ConfigError("forward: input has " + std::to_string(inputs.cols()) +
                      " features but the level " + std::to_string(to_int(cfg.level)) +
                      " layout expects " + std::to_string(cfg.input_dim));
  }
  if (inputs.rows() == 0) throw DomainError("forward: empty sequence");
  params.check_shapes(cfg);

  const std::size_t T = inputs.rows();
  const std::size_t I = cfg.input_dim;
  const std::size_t H = cfg.hidden_dim;
  const std::size_t A = cfg.att_dim;
  const std::size_t L = cfg.n_layers;

  cache.valid = false;
  cache.n_days = T;
  cache.input_dim = I;
  cache.hidden_dim = H;
  cache.att_dim = A;
  cache.inputs.assign(inputs.span().begin(), inputs.span().end());
  cache.h.resize(L);
  cache.z.resize(L);
  cache.r.resize(L);
  cache.htil.resize(L);
  const std::size_t max_in = std::max(I, H);
  cache.transposed.resize(3 * max_in * H + 3 * H * H);
  cache.proj.resize(3 * T * H);

  std::vector<double> rh(H);
  for (std::size_t l = 0; l < L; ++l) {
    const GruLayerParams& layer = params.layers[l];
    const std::size_t in = l == 0 ? I : H;
    const double* X = l == 0 ? cache.inputs.data() : cache.h[l - 1].data();

    double* wt_z = cache.transposed.data();
    double* wt_r = wt_z + in * H;
    double* wt_h = wt_r + in * H;
    double* ut_z = wt_h + in * H;
    double* ut_r = ut_z + H * H;
    double* ut_h = ut_r + H * H;
    transpose_into(layer.w_z, wt_z);
    transpose_into(layer.w_r, wt_r);
    transpose_into(layer.w_h, wt_h);
    transpose_into(layer.u_z, ut_z);
    transpose_into(layer.u_r, ut_r);
    transpose_into(layer.u_h, ut_h);

    // Input-side projections do not depend on the recurrence.
    double* pz = cache.proj.data();
    double* pr = pz + T * H;
    double* ph = pr + T * H;
    std::fill(cache.proj.begin(), cache.proj.end(), 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double* x = X + t * in;
      nd::gemv_transposed_acc(wt_z, in, H, x, pz + t * H);
      nd::gemv_transposed_acc(wt_r, in, H, x, pr + t * H);
      nd::gemv_transposed_acc(wt_h, in, H, x, ph + t * H);
    }

    auto& Hs = cache.h[l];
    auto& Zs = cache.z[l];
    auto& Rs = cache.r[l];
    auto& Ns = cache.htil[l];
    Hs.resize(T * H);
    Zs.resize(T * H);
    Rs.resize(T * H);
    Ns.resize(T * H);

    const double* bz = layer.b_z.data();
    const double* br = layer.b_r.data();
    const double* bh = layer.b_h.data();
    for (std::size_t t = 0; t < T; ++t) {
      double* z = Zs.data() + t * H;
      double* r = Rs.data() + t * H;
      double* n = Ns.data() + t * H;
      double* h = Hs.data() + t * H;
      std::copy_n(pz + t * H, H, z);
      std::copy_n(pr + t * H, H, r);
      std::copy_n(ph + t * H, H, n);
      if (t > 0) {
        const double* hp = Hs.data() + (t - 1) * H;
        nd::gemv_transposed_acc(ut_z, H, H, hp, z);
        nd::gemv_transposed_acc(ut_r, H, H, hp, r);
        for (std::size_t i = 0; i < H; ++i) {
          z[i] += bz[i];
          r[i] += br[i];
        }
        nd::sigmoid_inplace(z, H);
        nd::sigmoid_inplace(r, H);
        for (std::size_t i = 0; i < H; ++i) rh[i] = r[i] * hp[i];
        nd::gemv_transposed_acc(ut_h, H, H, rh.data(), n);
        for (std::size_t i = 0; i < H; ++i) n[i] += bh[i];
        nd::tanh_inplace(n, H);
        for (std::size_t i = 0; i < H; ++i) h[i] = (1.0 - z[i]) * hp[i] + z[i] * n[i];
      } else {
        for (std::size_t i = 0; i < H; ++i) {
          z[i] += bz[i];
          r[i] += br[i];
          n[i] += bh[i];
        }
        nd::sigmoid_inplace(z, H);
        nd::sigmoid_inplace(r, H);
        nd::tanh_inplace(n, H);
        for (std::size_t i = 0; i < H; ++i) h[i] = z[i] * n[i];
      }
    }
  }

  const auto& top = cache.h[L - 1];

  // Attention pooling.
  cache.u.assign(T * A, 0.0);
  double* wa_t = cache.transposed.data();
  transpose_into(params.attention.w_a, wa_t);
  std::vector<double> scores(T);
  const double* ba = params.attention.b_a.data();
  const double* va = params.attention.v_a.data();
  for (std::size_t t = 0; t < T; ++t) {
    double* u = cache.u.data() + t * A;
    nd::gemv_transposed_acc(wa_t, H, A, top.data() + t * H, u);
    for (std::size_t k = 0; k < A; ++k) u[k] += ba[k];
    nd::tanh_inplace(u, A);
    double s = 0.0;
    for (std::size_t k = 0; k < A; ++k) s += va[k] * u[k];
    scores[t] = s;
  }
  const nd::Vec w = nd::stable_softmax(std::span<const double>(scores));
  cache.weights.assign(w.begin(), w.end());
  cache.context.assign(H, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double wt = cache.weights[t];
    const double* h = top.data() + t * H;
    for (std::size_t i = 0; i < H; ++i) cache.context[i] += wt * h[i];
  }

  // Heads.
  Prediction pred;
  pred.ra_hat.resize(T);
  pred.rh_hat.resize(T);
  const double* wf_ra = params.w_f.data();
  const double* wf_rh = params.w_f.data() + H;
  for (std::size_t t = 0; t < T; ++t) {
    const double* h = top.data() + t * H;
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < H; ++i) {
      a += wf_ra[i] * h[i];
      b += wf_rh[i] * h[i];
    }
    pred.ra_hat[t] = a + params.b_f[0];
    pred.rh_hat[t] = b + params.b_f[1];
  }
  pred.yield_hat = nd::dot(params.w_y.span(), cache.context) + params.b_y[0];
  pred.attention_weights = cache.weights;

  cache.params_fingerprint = params.fingerprint();
  cache.valid = true;
  return pred;
}

Prediction forward(const ModelConfig& cfg, const nd::Mat& inputs, const ModelParams& params) {
  ForwardCache cache;
  return forward(cfg, inputs, params, cache);
}

// ---------------------------------------------------------------------------
// Backward

void backward(const ForwardCache& cache, const ModelParams& params, const PredictionGrad& upstream,
              ModelParams& grads, BackwardWorkspace& ws) {
  if (!cache.valid) throw UsageError("backward: forward cache is empty");
  const std::size_t T = cache.n_days;
  const std::size_t H = cache.hidden_dim;
  const std::size_t A = cache.att_dim;
  const std::size_t L = cache.h.size();
  if (params.layers.size() != L || params.w_y.size() != H || params.attention.b_a.size() != A ||
      params.layers.front().w_z.cols() != cache.input_dim) {
    throw UsageError("backward: cache shape does not match the parameters");
  }
  if (cache.params_fingerprint != params.fingerprint()) {
    throw UsageError("backward: cache was produced with different parameters");
  }
  if (upstream.d_ra.size() != T || upstream.d_rh.size() != T) {
    throw UsageError("backward: upstream gradient covers " + std::to_string(upstream.d_ra.size()) +
                     " days, cache holds " + std::to_string(T));
  }
  if (grads.layers.size() != L || grads.w_y.size() != H || grads.attention.b_a.size() != A) {
    throw ShapeError("backward: gradient accumulator shaped differently from parameters");
  }

  const auto& top = cache.h[L - 1];
  ws.d_top.assign(T * H, 0.0);

  // Flux head.
  const double* wf_ra = params.w_f.data();
  const double* wf_rh = params.w_f.data() + H;
  double* gwf_ra = grads.w_f.data();
  double* gwf_rh = grads.w_f.data() + H;
  for (std::size_t t = 0; t < T; ++t) {
    const double ga = upstream.d_ra[t];
    const double gb = upstream.d_rh[t];
    if (ga == 0.0 && gb == 0.0) continue;
    const double* h = top.data() + t * H;
    double* dh = ws.d_top.data() + t * H;
    for (std::size_t i = 0; i < H; ++i) {
      gwf_ra[i] += ga * h[i];
      gwf_rh[i] += gb * h[i];
      dh[i] += wf_ra[i] * ga + wf_rh[i] * gb;
    }
    grads.b_f[0] += ga;
    grads.b_f[1] += gb;
  }

  // Yield head and attention.
  const double dy = upstream.d_yield;
  if (dy != 0.0) {
    for (std::size_t i = 0; i < H; ++i) grads.w_y[i] += dy * cache.context[i];
    grads.b_y[0] += dy;

    ws.tmp.assign(T, 0.0);  // dα_t
    double mean_da = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double* h = top.data() + t * H;
      double da = 0.0;
      for (std::size_t i = 0; i < H; ++i) da += dy * params.w_y[i] * h[i];
      ws.tmp[t] = da;
      mean_da += cache.weights[t] * da;
    }
    std::vector<double> dpre(A);
    const double* va = params.attention.v_a.data();
    for (std::size_t t = 0; t < T; ++t) {
      const double alpha = cache.weights[t];
      const double* h = top.data() + t * H;
      double* dh = ws.d_top.data() + t * H;
      for (std::size_t i = 0; i < H; ++i) dh[i] += alpha * dy * params.w_y[i];
      const double ds = alpha * (ws.tmp[t] - mean_da);
      const double* u = cache.u.data() + t * A;
      for (std::size_t k = 0; k < A; ++k) {
        grads.attention.v_a[k] += ds * u[k];
        dpre[k] = ds * va[k] * (1.0 - u[k] * u[k]);
        grads.attention.b_a[k] += dpre[k];
      }
      nd::outer_acc(dpre.data(), A, h, H, grads.attention.w_a.data());
      nd::gemv_t_acc(params.attention.w_a.data(), A, H, dpre.data(), dh);
    }
  }

  // GRU layers, top to bottom.
  ws.da_z.resize(T * H);
  ws.da_r.resize(T * H);
  ws.da_h.resize(T * H);
  ws.carry.assign(H, 0.0);
  ws.dhp.resize(H);
  ws.d_rh.resize(H);
  ws.rh_prev.assign(T * H, 0.0);
  for (std::size_t li = L; li-- > 0;) {
    const GruLayerParams& layer = params.layers[li];
    GruLayerParams& g = grads.layers[li];
    const std::size_t in = li == 0 ? cache.input_dim : H;
    const double* X = li == 0 ? cache.inputs.data() : cache.h[li - 1].data();
    const auto& Hs = cache.h[li];
    const auto& Zs = cache.z[li];
    const auto& Rs = cache.r[li];
    const auto& Ns = cache.htil[li];
    std::fill(ws.carry.begin(), ws.carry.end(), 0.0);

    for (std::size_t t = T; t-- > 0;) {
      const double* ext = ws.d_top.data() + t * H;
      const double* z = Zs.data() + t * H;
      const double* r = Rs.data() + t * H;
      const double* n = Ns.data() + t * H;
      const double* hp = t > 0 ? Hs.data() + (t - 1) * H : nullptr;
      double* daz = ws.da_z.data() + t * H;
      double* dar = ws.da_r.data() + t * H;
      double* dah = ws.da_h.data() + t * H;

      for (std::size_t i = 0; i < H; ++i) {
        const double dh = ext[i] + ws.carry[i];
        const double prev = hp ? hp[i] : 0.0;
        dah[i] = dh * z[i] * (1.0 - n[i] * n[i]);
        daz[i] = dh * (n[i] - prev) * z[i] * (1.0 - z[i]);
        ws.dhp[i] = dh * (1.0 - z[i]);
      }
      if (hp) {
        std::fill(ws.d_rh.begin(), ws.d_rh.end(), 0.0);
        nd::gemv_t_acc(layer.u_h.data(), H, H, dah, ws.d_rh.data());
        double* rhp = ws.rh_prev.data() + t * H;
        for (std::size_t i = 0; i < H; ++i) {
          dar[i] = ws.d_rh[i] * hp[i] * r[i] * (1.0 - r[i]);
          ws.dhp[i] += ws.d_rh[i] * r[i];
          rhp[i] = r[i] * hp[i];
        }
        nd::gemv_t_acc(layer.u_z.data(), H, H, daz, ws.dhp.data());
        nd::gemv_t_acc(layer.u_r.data(), H, H, dar, ws.dhp.data());
      } else {
        std::fill(dar, dar + H, 0.0);
      }
      std::copy(ws.dhp.begin(), ws.dhp.end(), ws.carry.begin());
    }

    // Weight gradients are sums of outer products over time; h_{t-1} is row
    // t-1 of the layer output and the t = 0 terms vanish.
    for (std::size_t t = 0; t < T; ++t) {
      const double* daz = ws.da_z.data() + t * H;
      const double* dar = ws.da_r.data() + t * H;
      const double* dah = ws.da_h.data() + t * H;
      for (std::size_t i = 0; i < H; ++i) {
        g.b_z[i] += daz[i];
        g.b_r[i] += dar[i];
        g.b_h[i] += dah[i];
      }
    }
    if (T > 1) {
      nd::gemm_tn_acc(ws.da_z.data() + H, H, Hs.data(), H, T - 1, H, H, g.u_z.data());
      nd::gemm_tn_acc(ws.da_r.data() + H, H, Hs.data(), H, T - 1, H, H, g.u_r.data());
      nd::gemm_tn_acc(ws.da_h.data() + H, H, ws.rh_prev.data() + H, H, T - 1, H, H,
                      g.u_h.data());
    }
    nd::gemm_tn_acc(ws.da_z.data(), H, X, in, T, H, in, g.w_z.data());
    nd::gemm_tn_acc(ws.da_r.data(), H, X, in, T, H, in, g.w_r.data());
    nd::gemm_tn_acc(ws.da_h.data(), H, X, in, T, H, in, g.w_h.data());

    // Gradient flowing to the layer below.
    if (li > 0) {
      ws.d_below.assign(T * in, 0.0);
      for (std::size_t t = 0; t < T; ++t) {
        double* dx = ws.d_below.data() + t * in;
        nd::gemv_t_acc(layer.w_z.data(), H, in, ws.da_z.data() + t * H, dx);
        nd::gemv_t_acc(layer.w_r.data(), H, in, ws.da_r.data() + t * H, dx);
        nd::gemv_t_acc(layer.w_h.data(), H, in, ws.da_h.data() + t * H, dx);
      }
    }
    if (li > 0) ws.d_top.swap(ws.d_below);
  }
}

ModelParams backward(const ForwardCache& cache, const ModelParams& params,
                     const PredictionGrad& upstream) {
  ModelParams grads = params;
  grads.set_zero();
  BackwardWorkspace ws;
  backward(cache, params, upstream, grads, ws);
  return grads;
}

}  // namespace sdsa::model
