#include "mapfil/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mapfil/rng.hpp"

namespace mapfil {

using nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;

PolicyConfig PolicyConfig::reduced() {
  PolicyConfig c;
  c.conv = {{3, 3, 1, true}, {4, 3, 1, false}};
  c.dense = {6};
  return c;
}

void to_json(json& j, const PolicyConfig& c) {
  j = json::object();
  j["conv"] = json::array();
  for (const auto& s : c.conv)
    j["conv"].push_back({{"filters", s.filters}, {"kernel", s.kernel}, {"stride", s.stride}, {"pool_after", s.pool_after}});
  j["dense"] = c.dense;
}

void from_json(const json& j, PolicyConfig& c) {
  PolicyConfig d;
  if (j.contains("conv")) {
    d.conv.clear();
    for (const auto& s : j.at("conv")) {
      ConvSpec spec;
      spec.filters = s.at("filters").get<int>();
      spec.kernel = s.value("kernel", 3);
      spec.stride = s.value("stride", 1);
      spec.pool_after = s.value("pool_after", false);
      d.conv.push_back(spec);
    }
  }
  if (j.contains("dense")) d.dense = j.at("dense").get<std::vector<int>>();
  c = d;
}

namespace {

struct ConvGeometry {
  int in_c, in_h, in_w;
  int out_h, out_w;        // after convolution
  int pooled_h, pooled_w;  // after optional pooling (== out when no pool)
  int kernel, stride, pad;
  bool pool;
  int filters;
};

struct Geometry {
  std::vector<ConvGeometry> conv;
  int flat = 0;                      // flattened conv output size
  std::vector<int> dense_in, dense_out;  // includes the head
};

Geometry geometry_of(const PolicyConfig& config) {
  if (config.conv.empty()) throw std::invalid_argument("policy config needs at least one conv layer");
  Geometry g;
  int c = kChannels, h = kFov, w = kFov;
  for (std::size_t i = 0; i < config.conv.size(); ++i) {
    const ConvSpec& s = config.conv[i];
    if (s.filters < 1 || s.kernel < 1 || s.stride < 1)
      throw std::invalid_argument("conv layer " + std::to_string(i) + " has a non-positive size");
    ConvGeometry cg{};
    cg.in_c = c;
    cg.in_h = h;
    cg.in_w = w;
    cg.kernel = s.kernel;
    cg.stride = s.stride;
    cg.pad = s.kernel / 2;
    cg.out_h = (h + 2 * cg.pad - s.kernel) / s.stride + 1;
    cg.out_w = (w + 2 * cg.pad - s.kernel) / s.stride + 1;
    cg.pool = s.pool_after;
    cg.filters = s.filters;
    if (cg.out_h < 1 || cg.out_w < 1) throw std::invalid_argument("conv layer " + std::to_string(i) + " collapses the input");
    cg.pooled_h = cg.pool ? cg.out_h / 2 : cg.out_h;
    cg.pooled_w = cg.pool ? cg.out_w / 2 : cg.out_w;
    if (cg.pooled_h < 1 || cg.pooled_w < 1)
      throw std::invalid_argument("pooling after conv layer " + std::to_string(i) + " collapses the input");
    g.conv.push_back(cg);
    c = s.filters;
    h = cg.pooled_h;
    w = cg.pooled_w;
  }
  g.flat = c * h * w;
  int in = g.flat + kGoalVecSize;
  for (int width : config.dense) {
    if (width < 1) throw std::invalid_argument("dense layer width must be positive");
    g.dense_in.push_back(in);
    g.dense_out.push_back(width);
    in = width;
  }
  g.dense_in.push_back(in);
  g.dense_out.push_back(kNumActions);
  return g;
}

std::pair<int, int> layer_shape(const Geometry& g, std::size_t layer) {
  if (layer < g.conv.size()) {
    const auto& c = g.conv[layer];
    return {c.filters, c.in_c * c.kernel * c.kernel};
  }
  const std::size_t d = layer - g.conv.size();
  return {g.dense_out[d], g.dense_in[d]};
}

std::size_t layer_count(const Geometry& g) { return g.conv.size() + g.dense_out.size(); }

// Rows: (channel, ki, kj); columns: (sample, out row, out col).
void im2col(const MatrixXd& x, const ConvGeometry& g, int batch, MatrixXd& cols) {
  const int k = g.kernel, rows = g.in_c * k * k;
  const int out_hw = g.out_h * g.out_w, in_hw = g.in_h * g.in_w;
  cols.resize(rows, Eigen::Index(batch) * out_hw);
  for (int b = 0; b < batch; ++b)
    for (int oh = 0; oh < g.out_h; ++oh)
      for (int ow = 0; ow < g.out_w; ++ow) {
        double* dst = cols.col(Eigen::Index(b) * out_hw + oh * g.out_w + ow).data();
        for (int ki = 0; ki < k; ++ki) {
          const int ih = oh * g.stride - g.pad + ki;
          for (int kj = 0; kj < k; ++kj) {
            const int iw = ow * g.stride - g.pad + kj;
            const bool inside = ih >= 0 && ih < g.in_h && iw >= 0 && iw < g.in_w;
            const double* src = inside ? x.col(Eigen::Index(b) * in_hw + ih * g.in_w + iw).data() : nullptr;
            for (int c = 0; c < g.in_c; ++c) dst[c * k * k + ki * k + kj] = inside ? src[c] : 0.0;
          }
        }
      }
}

void col2im(const MatrixXd& cols, const ConvGeometry& g, int batch, MatrixXd& dx) {
  const int k = g.kernel;
  const int out_hw = g.out_h * g.out_w, in_hw = g.in_h * g.in_w;
  dx.setZero(g.in_c, Eigen::Index(batch) * in_hw);
  for (int b = 0; b < batch; ++b)
    for (int oh = 0; oh < g.out_h; ++oh)
      for (int ow = 0; ow < g.out_w; ++ow) {
        const double* src = cols.col(Eigen::Index(b) * out_hw + oh * g.out_w + ow).data();
        for (int ki = 0; ki < k; ++ki) {
          const int ih = oh * g.stride - g.pad + ki;
          if (ih < 0 || ih >= g.in_h) continue;
          for (int kj = 0; kj < k; ++kj) {
            const int iw = ow * g.stride - g.pad + kj;
            if (iw < 0 || iw >= g.in_w) continue;
            double* dst = dx.col(Eigen::Index(b) * in_hw + ih * g.in_w + iw).data();
            for (int c = 0; c < g.in_c; ++c) dst[c] += src[c * k * k + ki * k + kj];
          }
        }
      }
}

struct ConvCache {
  MatrixXd cols;
  MatrixXd pre;                      // pre-activation
  std::vector<Eigen::Index> argmax;  // pooled element -> linear index into pre
};

struct Trace {
  std::vector<ConvCache> conv;
  std::vector<MatrixXd> dense_in;
  std::vector<MatrixXd> dense_pre;
};

struct Input {
  MatrixXd x;      // kChannels x (batch * 81)
  MatrixXd goals;  // 3 x batch
};

template <class Get>
Input gather(int batch, Get&& observation_at) {
  Input in;
  in.x.resize(kChannels, Eigen::Index(batch) * kFovCells);
  in.goals.resize(kGoalVecSize, batch);
  for (int b = 0; b < batch; ++b) {
    const Observation& o = observation_at(b);
    for (int c = 0; c < kChannels; ++c)
      for (int p = 0; p < kFovCells; ++p) in.x(c, Eigen::Index(b) * kFovCells + p) = o.channels[c * kFovCells + p];
    for (int i = 0; i < kGoalVecSize; ++i) in.goals(i, b) = o.goal_vector[i];
  }
  return in;
}

MatrixXd run(const Weights& w, const Geometry& g, const Input& in, int batch, Trace* trace) {
  MatrixXd x = in.x;
  if (trace) trace->conv.resize(g.conv.size());
  ConvCache local;
  for (std::size_t l = 0; l < g.conv.size(); ++l) {
    const ConvGeometry& cg = g.conv[l];
    ConvCache& cache = trace ? trace->conv[l] : local;
    im2col(x, cg, batch, cache.cols);
    cache.pre.noalias() = w.layers[l].weight * cache.cols;
    cache.pre.colwise() += w.layers[l].bias;
    MatrixXd act = cache.pre.cwiseMax(0.0);
    if (cg.pool) {
      const int out_hw = cg.out_h * cg.out_w, pooled_hw = cg.pooled_h * cg.pooled_w;
      MatrixXd pooled(cg.filters, Eigen::Index(batch) * pooled_hw);
      if (trace) cache.argmax.assign(std::size_t(pooled.size()), 0);
      for (int b = 0; b < batch; ++b)
        for (int ph = 0; ph < cg.pooled_h; ++ph)
          for (int pw = 0; pw < cg.pooled_w; ++pw) {
            const Eigen::Index dst = Eigen::Index(b) * pooled_hw + ph * cg.pooled_w + pw;
            for (int f = 0; f < cg.filters; ++f) {
              Eigen::Index best = -1;
              double best_v = 0.0;
              for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                  const Eigen::Index src = Eigen::Index(b) * out_hw + (2 * ph + i) * cg.out_w + (2 * pw + j);
                  const double v = act(f, src);
                  if (best < 0 || v > best_v) {
                    best = src;
                    best_v = v;
                  }
                }
              pooled(f, dst) = best_v;
              if (trace) cache.argmax[std::size_t(dst * cg.filters + f)] = best * cg.filters + f;
            }
          }
      x = std::move(pooled);
    } else {
      x = std::move(act);
    }
  }

  // Flatten per sample in (channel, row, col) order, then append the goal vector.
  const ConvGeometry& last = g.conv.back();
  const int hw = last.pooled_h * last.pooled_w;
  MatrixXd h(g.flat + kGoalVecSize, batch);
  for (int b = 0; b < batch; ++b) {
    for (int f = 0; f < last.filters; ++f)
      for (int p = 0; p < hw; ++p) h(f * hw + p, b) = x(f, Eigen::Index(b) * hw + p);
    h.block(g.flat, b, kGoalVecSize, 1) = in.goals.col(b);
  }

  const std::size_t first_dense = g.conv.size();
  const std::size_t dense_layers = g.dense_out.size();
  if (trace) {
    trace->dense_in.resize(dense_layers);
    trace->dense_pre.resize(dense_layers);
  }
  for (std::size_t d = 0; d < dense_layers; ++d) {
    const Layer& layer = w.layers[first_dense + d];
    MatrixXd z = layer.weight * h;
    z.colwise() += layer.bias;
    if (trace) trace->dense_in[d] = std::move(h);
    if (d + 1 == dense_layers) {
      if (trace) trace->dense_pre[d] = z;
      return z;
    }
    h = z.cwiseMax(0.0);
    if (trace) trace->dense_pre[d] = std::move(z);
  }
  return h;  // unreachable: the head is always present
}

constexpr int kChunk = 128;

Logits column_logits(const MatrixXd& z, int b) {
  Logits l;
  for (int k = 0; k < kNumActions; ++k) l[k] = z(k, b);
  return l;
}

}  // namespace

void validate_config(const PolicyConfig& config) { geometry_of(config); }

std::size_t Weights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += std::size_t(l.weight.size() + l.bias.size());
  return n;
}

bool Weights::operator==(const Weights& other) const {
  if (!(config == other.config) || layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer &a = layers[i], &b = other.layers[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() || a.bias.size() != b.bias.size())
      return false;
    if (!(a.weight.array() == b.weight.array()).all() || !(a.bias.array() == b.bias.array()).all()) return false;
  }
  return true;
}

namespace {

void check_shapes(const Weights& weights, const Geometry& g) {
  if (weights.layers.size() != layer_count(g))
    throw ShapeMismatch("expected " + std::to_string(layer_count(g)) + " layers, got " +
                        std::to_string(weights.layers.size()));
  for (std::size_t i = 0; i < weights.layers.size(); ++i) {
    const auto [rows, cols] = layer_shape(g, i);
    const Layer& l = weights.layers[i];
    if (l.weight.rows() != rows || l.weight.cols() != cols || l.bias.size() != rows)
      throw ShapeMismatch("layer " + std::to_string(i) + " is " + std::to_string(l.weight.rows()) + "x" +
                          std::to_string(l.weight.cols()) + ", expected " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
}

}  // namespace

void check_weights(const Weights& weights) {
  check_shapes(weights, geometry_of(weights.config));
  for (std::size_t i = 0; i < weights.layers.size(); ++i) {
    const Layer& l = weights.layers[i];
    if (!l.weight.allFinite() || !l.bias.allFinite())
      throw std::invalid_argument("layer " + std::to_string(i) + " has non-finite parameters");
  }
}

Weights zero_weights(const PolicyConfig& config) {
  const Geometry g = geometry_of(config);
  Weights w{config, {}};
  for (std::size_t i = 0; i < layer_count(g); ++i) {
    const auto [rows, cols] = layer_shape(g, i);
    w.layers.push_back({MatrixXd::Zero(rows, cols), VectorXd::Zero(rows)});
  }
  return w;
}

Weights init_policy(const PolicyConfig& config, std::uint64_t seed) {
  Weights w = zero_weights(config);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    Rng rng(derive_seed(seed, {0x1a7e5, i}));
    MatrixXd& m = w.layers[i].weight;
    const double scale = std::sqrt(2.0 / double(m.cols()));
    // Row-major fill so the draw order does not depend on storage order.
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scale * rng.normal();
  }
  return w;
}

Logits forward(const Weights& weights, const Observation& observation) {
  return forward_batch(weights, std::span<const Observation>(&observation, 1)).front();
}

std::vector<Logits> forward_batch(const Weights& weights, std::span<const Observation> observations) {
  const Geometry g = geometry_of(weights.config);
  check_shapes(weights, g);
  std::vector<Logits> out;
  out.reserve(observations.size());
  for (std::size_t start = 0; start < observations.size(); start += kChunk) {
    const int batch = int(std::min<std::size_t>(kChunk, observations.size() - start));
    const Input in = gather(batch, [&](int b) -> const Observation& { return observations[start + b]; });
    const MatrixXd z = run(weights, g, in, batch, nullptr);
    for (int b = 0; b < batch; ++b) out.push_back(column_logits(z, b));
  }
  return out;
}

ActionDistribution softmax_with_temperature(const Logits& logits, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("temperature must be positive and finite");
  for (double l : logits)
    if (!std::isfinite(l)) throw std::invalid_argument("softmax of non-finite logits");
  const double top = *std::max_element(logits.begin(), logits.end());
  ActionDistribution p;
  double total = 0.0;
  for (int k = 0; k < kNumActions; ++k) {
    p[k] = std::exp((logits[k] - top) / tau);
    total += p[k];
  }
  for (double& v : p) v /= total;
  return p;
}

double mse_loss(const ActionDistribution& dist, Action target) {
  const int t = index_of(target);
  double s = 0.0;
  for (int k = 0; k < kNumActions; ++k) {
    const double d = dist[k] - (k == t ? 1.0 : 0.0);
    s += d * d;
  }
  return s / kNumActions;
}

int argmax(const Logits& values) {
  return int(std::max_element(values.begin(), values.end()) - values.begin());
}

namespace {

// Sum (not mean) of per-sample gradients over one chunk, added into `acc`.
double accumulate_chunk(const Weights& w, const Geometry& g, std::span<const Sample* const> chunk,
                        std::vector<Layer>& acc) {
  const int batch = int(chunk.size());
  const Input in = gather(batch, [&](int b) -> const Observation& { return chunk[b]->observation; });
  Trace trace;
  const MatrixXd z = run(w, g, in, batch, &trace);

  double loss = 0.0;
  MatrixXd dz(kNumActions, batch);
  for (int b = 0; b < batch; ++b) {
    const ActionDistribution p = softmax_with_temperature(column_logits(z, b), 1.0);
    const Action target = chunk[b]->expert_action;
    loss += mse_loss(p, target);
    const int t = index_of(target);
    std::array<double, kNumActions> dp;
    double dot = 0.0;
    for (int k = 0; k < kNumActions; ++k) {
      dp[k] = 2.0 * (p[k] - (k == t ? 1.0 : 0.0)) / kNumActions;
      dot += p[k] * dp[k];
    }
    for (int k = 0; k < kNumActions; ++k) dz(k, b) = p[k] * (dp[k] - dot);
  }

  const std::size_t first_dense = g.conv.size();
  MatrixXd dh;
  for (std::size_t d = g.dense_out.size(); d-- > 0;) {
    Layer& a = acc[first_dense + d];
    if (d + 1 != g.dense_out.size()) dz = dh.cwiseProduct((trace.dense_pre[d].array() > 0.0).cast<double>().matrix());
    a.weight.noalias() += dz * trace.dense_in[d].transpose();
    a.bias += dz.rowwise().sum();
    dh.noalias() = w.layers[first_dense + d].weight.transpose() * dz;
  }

  // Unflatten, dropping the goal-vector rows.
  const ConvGeometry& last = g.conv.back();
  const int hw = last.pooled_h * last.pooled_w;
  MatrixXd dx(last.filters, Eigen::Index(batch) * hw);
  for (int b = 0; b < batch; ++b)
    for (int f = 0; f < last.filters; ++f)
      for (int p = 0; p < hw; ++p) dx(f, Eigen::Index(b) * hw + p) = dh(f * hw + p, b);

  for (std::size_t l = g.conv.size(); l-- > 0;) {
    const ConvGeometry& cg = g.conv[l];
    const ConvCache& cache = trace.conv[l];
    MatrixXd dact;
    if (cg.pool) {
      dact.setZero(cg.filters, Eigen::Index(batch) * cg.out_h * cg.out_w);
      for (Eigen::Index i = 0; i < dx.size(); ++i) dact.data()[cache.argmax[std::size_t(i)]] += dx.data()[i];
    } else {
      dact = std::move(dx);
    }
    const MatrixXd dpre = dact.cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix());
    acc[l].weight.noalias() += dpre * cache.cols.transpose();
    acc[l].bias += dpre.rowwise().sum();
    if (l > 0) {
      const MatrixXd dcols = w.layers[l].weight.transpose() * dpre;
      col2im(dcols, cg, batch, dx);
    }
  }
  return loss;
}

Gradients backward_ptrs(const Weights& weights, const Geometry& g, std::span<const Sample* const> batch) {
  if (batch.empty()) throw std::invalid_argument("backward needs a nonempty batch");
  Gradients grads;
  grads.layers = zero_weights(weights.config).layers;
  double loss = 0.0;
  for (std::size_t start = 0; start < batch.size(); start += kChunk) {
    const std::size_t n = std::min<std::size_t>(kChunk, batch.size() - start);
    loss += accumulate_chunk(weights, g, batch.subspan(start, n), grads.layers);
  }
  const double inv = 1.0 / double(batch.size());
  for (auto& l : grads.layers) {
    l.weight *= inv;
    l.bias *= inv;
  }
  grads.loss = loss * inv;
  return grads;
}

}  // namespace

Gradients backward(const Weights& weights, std::span<const Sample> batch) {
  check_weights(weights);
  const Geometry g = geometry_of(weights.config);
  std::vector<const Sample*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  return backward_ptrs(weights, g, ptrs);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"initial_lr", c.initial_lr}, {"decay_factor", c.decay_factor}, {"decay_every", c.decay_every},
           {"epochs", c.epochs},         {"batch_size", c.batch_size},     {"seed", c.seed},
           {"beta1", c.beta1},           {"beta2", c.beta2},               {"adam_epsilon", c.adam_epsilon}};
}

void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.initial_lr = j.value("initial_lr", d.initial_lr);
  c.decay_factor = j.value("decay_factor", d.decay_factor);
  c.decay_every = j.value("decay_every", d.decay_every);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_epsilon = j.value("adam_epsilon", d.adam_epsilon);
}

double learning_rate(const TrainConfig& config, int epoch) {
  return config.initial_lr * std::pow(config.decay_factor, epoch / config.decay_every);
}

TrainResult train(std::span<const Sample> dataset, const PolicyConfig& policy_config, const TrainConfig& tc,
                  const EpochCallback& on_epoch) {
  if (dataset.empty()) throw std::invalid_argument("training needs a nonempty dataset");
  if (!(tc.initial_lr > 0.0)) throw std::invalid_argument("initial learning rate must be positive");
  if (tc.epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (tc.batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (tc.decay_every < 1) throw std::invalid_argument("decay interval must be at least 1");

  const Geometry g = geometry_of(policy_config);
  TrainResult result{init_policy(policy_config, tc.seed), {}};
  Weights& w = result.weights;
  std::vector<Layer> m = zero_weights(policy_config).layers, v = m;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const Sample*> batch;
  long long step_count = 0;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng rng(derive_seed(tc.seed, {0x5b0ff1e, std::uint64_t(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const double lr = learning_rate(tc, epoch);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(tc.batch_size)) {
      const std::size_t n = std::min<std::size_t>(std::size_t(tc.batch_size), order.size() - start);
      batch.clear();
      for (std::size_t i = 0; i < n; ++i) batch.push_back(&dataset[order[start + i]]);
      const auto diverged = [&] {
        return TrainingDiverged("loss became non-finite at epoch " + std::to_string(epoch) +
                                ", batch starting at sample " + std::to_string(start) + " (lr " +
                                std::to_string(lr) + ")");
      };
      Gradients grads;
      try {
        grads = backward_ptrs(w, g, batch);
      } catch (const std::invalid_argument&) {
        throw diverged();  // the logits overflowed
      }
      if (!std::isfinite(grads.loss)) throw diverged();
      total += grads.loss * double(n);

      ++step_count;
      const double c1 = 1.0 - std::pow(tc.beta1, double(step_count));
      const double c2 = 1.0 - std::pow(tc.beta2, double(step_count));
      auto adam = [&](auto& param, auto& mo, auto& ve, const auto& grad) {
        mo = tc.beta1 * mo + (1.0 - tc.beta1) * grad;
        ve = tc.beta2 * ve + (1.0 - tc.beta2) * grad.cwiseProduct(grad);
        param.array() -= lr * (mo.array() / c1) / ((ve.array() / c2).sqrt() + tc.adam_epsilon);
      };
      for (std::size_t l = 0; l < w.layers.size(); ++l) {
        adam(w.layers[l].weight, m[l].weight, v[l].weight, grads.layers[l].weight);
        adam(w.layers[l].bias, m[l].bias, v[l].bias, grads.layers[l].bias);
      }
    }
    const double mean = total / double(dataset.size());
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  for (std::size_t l = 0; l < w.layers.size(); ++l)
    if (!w.layers[l].weight.allFinite() || !w.layers[l].bias.allFinite())
      throw TrainingDiverged("parameters of layer " + std::to_string(l) + " became non-finite");
  return result;
}

double greedy_accuracy(const Weights& weights, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  std::vector<Observation> obs;
  obs.reserve(samples.size());
  for (const auto& s : samples) obs.push_back(s.observation);
  const auto logits = forward_batch(weights, obs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (argmax(logits[i]) == index_of(samples[i].expert_action)) ++hits;
  return double(hits) / double(samples.size());
}

json weights_to_json(const Weights& weights) {
  check_weights(weights);
  json layers = json::array();
  const std::size_t conv = weights.config.conv.size();
  for (std::size_t i = 0; i < weights.layers.size(); ++i) {
    const Layer& l = weights.layers[i];
    std::vector<double> flat;
    flat.reserve(std::size_t(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat.push_back(l.weight(r, c));
    layers.push_back({{"kind", i < conv ? "conv" : "dense"},
                      {"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"weight", flat},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return json{{"format", "mapfil-policy"},
              {"version", kWeightsVersion},
              {"config", weights.config},
              {"parameter_count", weights.parameter_count()},
              {"layers", layers}};
}

Weights weights_from_json(const json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != "mapfil-policy") throw WeightsFormatError("not a policy weight file");
    const int version = j.at("version").get<int>();
    if (version != kWeightsVersion)
      throw WeightsFormatError("unsupported weight file version " + std::to_string(version) + " (expected " +
                               std::to_string(kWeightsVersion) + ")");
    Weights w = zero_weights(j.at("config").get<PolicyConfig>());
    const json& layers = j.at("layers");
    if (!layers.is_array() || layers.size() != w.layers.size())
      throw WeightsFormatError("weight file has " + std::to_string(layers.size()) + " layers, config needs " +
                               std::to_string(w.layers.size()));
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
      Layer& l = w.layers[i];
      const auto flat = layers[i].at("weight").get<std::vector<double>>();
      const auto bias = layers[i].at("bias").get<std::vector<double>>();
      if (layers[i].at("rows").get<Eigen::Index>() != l.weight.rows() ||
          layers[i].at("cols").get<Eigen::Index>() != l.weight.cols() || flat.size() != std::size_t(l.weight.size()) ||
          bias.size() != std::size_t(l.bias.size()))
        throw WeightsFormatError("layer " + std::to_string(i) + " has the wrong length");
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
      for (std::size_t b = 0; b < bias.size(); ++b) l.bias[Eigen::Index(b)] = bias[b];
    }
    if (j.contains("parameter_count") && j.at("parameter_count").get<std::size_t>() != w.parameter_count())
      throw WeightsFormatError("parameter count does not match the layers");
    check_weights(w);
    return w;
  } catch (const WeightsFormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw WeightsFormatError(std::string("malformed weight file: ") + e.what());
  }
}

void save_weights(const std::filesystem::path& path, const Weights& weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << weights_to_json(weights).dump() << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Weights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw WeightsFormatError(path.string() + ": " + e.what());
  }
  return weights_from_json(j);
}

}  // namespace mapfil
