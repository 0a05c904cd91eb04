// Licensed under the Apache License 2.0 (see LICENSE file).

#include "tsync/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tsync/binary_io.hpp"
#include "tsync/errors.hpp"
#include "tsync/rng.hpp"

namespace tsync::embed {
namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

// Activations kept for the backward pass.
struct Trace {
  std::vector<std::vector<double>> inputs;  // input to layer l
  std::vector<std::vector<double>> pre;     // affine output of layer l
  std::vector<double> unnormalized;
  double norm = 1.0;
  std::vector<double> out;
};

template <typename T>
void forward(const EmbeddingModel& model, std::span<const T> x, Trace& tr) {
  if (x.size() != model.input_dim())
    throw ArgumentError("frame has " + std::to_string(x.size()) + " features, model expects " +
                        std::to_string(model.input_dim()));
  const std::size_t nl = model.layers.size();
  tr.inputs.resize(nl);
  tr.pre.resize(nl);
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t l = 0; l < nl; ++l) {
    const Layer& layer = model.layers[l];
    tr.inputs[l] = std::move(h);
    const auto& in = tr.inputs[l];
    std::vector<double> z(layer.out_dim());
    for (std::size_t o = 0; o < z.size(); ++o) {
      auto w = layer.weights.row(o);
      double s = layer.bias[o];
      for (std::size_t i = 0; i < in.size(); ++i) s += w[i] * in[i];
      z[o] = s;
    }
    tr.pre[l] = z;
    if (layer.leaky)
      for (double& v : z) v = v > 0.0 ? v : kLeakySlope * v;
    h = std::move(z);
  }
  h[0] += kNormEpsilon;
  double sq = 0.0;
  for (double v : h) sq += v * v;
  tr.norm = std::sqrt(sq);
  tr.out.resize(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) tr.out[i] = h[i] / tr.norm;
  tr.unnormalized = std::move(h);
}

void backward(const EmbeddingModel& model, const Trace& tr, std::span<const double> d_out,
              Gradients& grad) {
  // Through y = u / |u|: du = (dy - y (y . dy)) / |u|.
  const double proj = std::inner_product(tr.out.begin(), tr.out.end(), d_out.begin(), 0.0);
  std::vector<double> dz(tr.out.size());
  for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = (d_out[i] - tr.out[i] * proj) / tr.norm;

  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const Layer& layer = model.layers[l];
    if (layer.leaky)
      for (std::size_t o = 0; o < dz.size(); ++o)
        if (tr.pre[l][o] <= 0.0) dz[o] *= kLeakySlope;
    const auto& in = tr.inputs[l];
    auto& gw = grad.weights[l];
    auto& gb = grad.bias[l];
    for (std::size_t o = 0; o < dz.size(); ++o) {
      gb[o] += dz[o];
      auto row = gw.row(o);
      for (std::size_t i = 0; i < in.size(); ++i) row[i] += dz[o] * in[i];
    }
    if (l == 0) break;
    std::vector<double> dh(layer.in_dim(), 0.0);
    for (std::size_t o = 0; o < dz.size(); ++o) {
      auto w = layer.weights.row(o);
      for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += w[i] * dz[o];
    }
    dz = std::move(dh);
  }
}

template <typename T>
double triplet_step(const EmbeddingModel& model, std::span<const T> a, std::span<const T> p,
                    std::span<const T> n, double margin, Gradients& grad) {
  Trace ta, tp, tn;
  forward(model, a, ta);
  forward(model, p, tp);
  forward(model, n, tn);
  const double loss = triplet_loss(ta.out, tp.out, tn.out, margin);
  if (loss <= 0.0) return 0.0;
  const std::size_t d = ta.out.size();
  std::vector<double> ga(d), gp(d), gn(d);
  for (std::size_t i = 0; i < d; ++i) {
    ga[i] = 2.0 * (tn.out[i] - tp.out[i]);
    gp[i] = -2.0 * (ta.out[i] - tp.out[i]);
    gn[i] = 2.0 * (ta.out[i] - tn.out[i]);
  }
  backward(model, ta, ga, grad);
  backward(model, tp, gp, grad);
  backward(model, tn, gn, grad);
  return loss;
}

template <typename T>
double dist_impl(std::span<const T> x, std::span<const T> y) {
  if (x.size() != y.size()) throw ArgumentError("descriptor dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

void EmbeddingModel::validate() const {
  if (layers.empty()) throw ArgumentError("model has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    if (layer.bias.size() != layer.out_dim()) throw ArgumentError("bias size mismatch in layer " + std::to_string(l));
    if (l > 0 && layer.in_dim() != layers[l - 1].out_dim())
      throw ArgumentError("layer " + std::to_string(l) + " does not chain");
    for (double w : layer.weights.data())
      if (!std::isfinite(w)) throw ArgumentError("non-finite weight in layer " + std::to_string(l));
    for (double b : layer.bias)
      if (!std::isfinite(b)) throw ArgumentError("non-finite bias in layer " + std::to_string(l));
  }
}

EmbeddingModel make_model(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                          std::uint64_t seed) {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0)
    throw ArgumentError("model dimensions must be positive");
  Rng rng(seed);
  auto layer = [&](std::size_t in, std::size_t out, bool leaky) {
    Layer l{MatrixD(out, in), std::vector<double>(out, 0.0), leaky};
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& w : l.weights.data()) w = uniform_real(rng, -bound, bound);
    return l;
  };
  EmbeddingModel m;
  m.layers.push_back(layer(input_dim, hidden_dim, true));
  m.layers.push_back(layer(hidden_dim, output_dim, false));
  snap_to_float(m);
  return m;
}

EmbeddingModel identity_model(std::size_t dim) {
  Layer l{MatrixD(dim, dim, 0.0), std::vector<double>(dim, 0.0), false};
  for (std::size_t i = 0; i < dim; ++i) l.weights(i, i) = 1.0;
  return EmbeddingModel{{std::move(l)}};
}

void snap_to_float(EmbeddingModel& model) {
  for (auto& layer : model.layers) {
    for (double& w : layer.weights.data()) w = static_cast<float>(w);
    for (double& b : layer.bias) b = static_cast<float>(b);
  }
}

std::vector<double> embed(const EmbeddingModel& model, std::span<const float> features) {
  Trace tr;
  forward(model, features, tr);
  return tr.out;
}

std::vector<double> embed(const EmbeddingModel& model, std::span<const double> features) {
  Trace tr;
  forward(model, features, tr);
  return tr.out;
}

DescriptorSeq embed_sequence(const EmbeddingModel& model, const MatrixF& frames, std::size_t stride) {
  if (stride == 0) throw ArgumentError("stride must be positive");
  const std::size_t n = (frames.rows() + stride - 1) / stride;
  DescriptorSeq seq{MatrixF(n, model.output_dim()), static_cast<std::uint32_t>(stride)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = embed(model, frames.row(i * stride));
    auto out = seq.values.row(i);
    for (std::size_t c = 0; c < d.size(); ++c) out[c] = static_cast<float>(d[c]);
  }
  return seq;
}

double distance(std::span<const double> x, std::span<const double> y) { return dist_impl(x, y); }
double distance(std::span<const float> x, std::span<const float> y) { return dist_impl(x, y); }

double triplet_loss(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                    double margin) {
  if (a.size() != p.size() || a.size() != n.size()) throw ArgumentError("descriptor dimensions differ");
  double ap = 0.0, an = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ap += (a[i] - p[i]) * (a[i] - p[i]);
    an += (a[i] - n[i]) * (a[i] - n[i]);
  }
  const double v = margin + ap - an;
  return v > 0.0 || std::isnan(v) ? v : 0.0;
}

// ---------------------------------------------------------------------------

std::span<const float> FrameStore::get(const FrameRef& ref) const {
  auto it = journeys_.find(ref.journey);
  if (it == journeys_.end()) throw DataError("unknown journey '" + ref.journey + "'");
  if (ref.frame >= it->second->rows())
    throw DataError("frame " + std::to_string(ref.frame) + " out of range for journey '" + ref.journey + "'");
  return it->second->row(ref.frame);
}

bool FrameStore::contains(const FrameRef& ref) const {
  auto it = journeys_.find(ref.journey);
  return it != journeys_.end() && ref.frame < it->second->rows();
}

Gradients::Gradients(const EmbeddingModel& model) {
  for (const auto& l : model.layers) {
    weights.emplace_back(l.out_dim(), l.in_dim(), 0.0);
    bias.emplace_back(l.out_dim(), 0.0);
  }
}

void Gradients::clear() {
  for (auto& w : weights) std::fill(w.data().begin(), w.data().end(), 0.0);
  for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
}

double accumulate_triplet_gradient(const EmbeddingModel& model, std::span<const float> a,
                                   std::span<const float> p, std::span<const float> n,
                                   double margin, Gradients& grad) {
  return triplet_step(model, a, p, n, margin, grad);
}

double accumulate_triplet_gradient(const EmbeddingModel& model, std::span<const double> a,
                                   std::span<const double> p, std::span<const double> n,
                                   double margin, Gradients& grad) {
  return triplet_step(model, a, p, n, margin, grad);
}

std::vector<double> train(EmbeddingModel& model, const std::vector<TripletLabel>& labels,
                          const FrameStore& frames, const TrainConfig& cfg) {
  if (labels.empty()) throw ArgumentError("training needs at least one label");
  if (!(cfg.margin > 0.0)) throw ArgumentError("margin must be positive");
  if (!(cfg.learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  if (cfg.batch_size == 0) throw ArgumentError("batch size must be positive");
  model.validate();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& l = labels[i];
    for (const FrameRef* r : {&l.anchor, &l.positive, &l.negative})
      if (!frames.contains(*r))
        throw DataError("label " + std::to_string(i) + " references unknown frame " + r->journey +
                        ":" + std::to_string(r->frame));
  }

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  Gradients grad(model);
  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, 0, i - 1)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      grad.clear();
      for (std::size_t b = start; b < end; ++b) {
        const auto& l = labels[order[b]];
        epoch_loss += triplet_step(model, frames.get(l.anchor), frames.get(l.positive),
                                   frames.get(l.negative), cfg.margin, grad);
      }
      const double step = cfg.learning_rate / static_cast<double>(end - start);
      for (std::size_t li = 0; li < model.layers.size(); ++li) {
        auto& w = model.layers[li].weights.data();
        const auto& gw = grad.weights[li].data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * gw[i];
        auto& b = model.layers[li].bias;
        for (std::size_t i = 0; i < b.size(); ++i) b[i] -= step * grad.bias[li][i];
      }
    }
    epoch_loss /= static_cast<double>(labels.size());
    if (!std::isfinite(epoch_loss))
      throw NumericalError("training diverged in epoch " + std::to_string(epoch));
    history.push_back(epoch_loss);
  }
  snap_to_float(model);
  try {
    model.validate();
  } catch (const ArgumentError& e) {
    throw NumericalError(std::string("training produced invalid weights: ") + e.what());
  }
  return history;
}

// ---------------------------------------------------------------------------

void write_checkpoint(const EmbeddingModel& model, const std::string& path) {
  model.validate();
  io::BinaryWriter w(path);
  w.magic("TSMD");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& layer : model.layers) {
    w.u32(static_cast<std::uint32_t>(layer.weights.rows()));
    w.u32(static_cast<std::uint32_t>(layer.weights.cols()));
    for (double v : layer.weights.data()) w.f32(static_cast<float>(v));
    for (double v : layer.bias) w.f32(static_cast<float>(v));
  }
  w.finish();
}

EmbeddingModel read_checkpoint(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("TSMD");
  if (const auto v = r.u32(); v != kCheckpointVersion) r.fail("unsupported version " + std::to_string(v));
  const std::uint32_t count = r.u32();
  if (count == 0 || count > 64) r.fail("implausible layer count " + std::to_string(count));
  EmbeddingModel model;
  for (std::uint32_t l = 0; l < count; ++l) {
    const std::uint32_t rows = r.u32(), cols = r.u32();
    if (rows == 0 || cols == 0 || rows > (1u << 16) || cols > (1u << 16)) r.fail("bad layer shape");
    Layer layer{MatrixD(rows, cols), std::vector<double>(rows), false};
    for (double& v : layer.weights.data()) v = r.f32();
    for (double& v : layer.bias) v = r.f32();
    model.layers.push_back(std::move(layer));
  }
  r.expect_eof();
  // The file carries no activation flags: every layer but the last is leaky.
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) model.layers[l].leaky = true;
  try {
    model.validate();
  } catch (const ArgumentError& e) {
    throw DataError(path + ": " + e.what());
  }
  return model;
}

void write_descriptors(const DescriptorSeq& seq, const std::string& path) {
  io::BinaryWriter w(path);
  w.magic("TSEM");
  w.u32(static_cast<std::uint32_t>(seq.values.rows()));
  w.u32(static_cast<std::uint32_t>(seq.values.cols()));
  w.u32(seq.stride);
  for (float v : seq.values.data()) w.f32(v);
  w.finish();
}

DescriptorSeq read_descriptors(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("TSEM");
  const std::uint32_t n = r.u32(), d = r.u32(), stride = r.u32();
  if (d == 0 || stride == 0) r.fail("bad descriptor header");
  DescriptorSeq seq{MatrixF(n, d), stride};
  for (float& v : seq.values.data()) {
    v = r.f32();
    if (!std::isfinite(v)) r.fail("non-finite descriptor value");
  }
  r.expect_eof();
  return seq;
}

}  // namespace tsync::embed
