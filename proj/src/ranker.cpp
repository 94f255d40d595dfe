#include "recallforge/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

#include "recallforge/common.hpp"
#include "recallforge/parallel.hpp"
#include "recallforge/rng.hpp"
#include "recallforge/xxhash64.hpp"

namespace recallforge {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * (1.0 / 9007199254740992.0);
}

double normal01(std::mt19937_64& gen) {
  // Box-Muller; hand-rolled because std::normal_distribution's stream is
  // implementation-defined.
  const double u1 = std::max(uniform01(gen), 1e-300);
  const double u2 = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void fc_forward(const double* x, std::size_t n, std::size_t in, std::size_t out, const double* w,
                const double* b, double* z) {
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x + r * in;
    double* zr = z + r * out;
    for (std::size_t j = 0; j < out; ++j) zr[j] = b[j];
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      const double* wrow = w + i * out;
      for (std::size_t j = 0; j < out; ++j) zr[j] += xv * wrow[j];
    }
  }
}

void fc_backward(const double* x, const double* w, const double* dz, std::size_t n, std::size_t in,
                 std::size_t out, double* dw, double* db, double* dx) {
  std::fill(dw, dw + in * out, 0.0);
  std::fill(db, db + out, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x + r * in;
    const double* dzr = dz + r * out;
    for (std::size_t j = 0; j < out; ++j) db[j] += dzr[j];
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      double* dwrow = dw + i * out;
      for (std::size_t j = 0; j < out; ++j) dwrow[j] += xv * dzr[j];
    }
    if (dx != nullptr) {
      double* dxr = dx + r * in;
      for (std::size_t i = 0; i < in; ++i) {
        const double* wrow = w + i * out;
        double acc = 0.0;
        for (std::size_t j = 0; j < out; ++j) acc += dzr[j] * wrow[j];
        dxr[i] = acc;
      }
    }
  }
}

struct BnCache {
  std::vector<double> xhat;
  std::vector<double> inv_std;
};

void bn_forward(const double* z, std::size_t n, std::size_t o, const std::vector<double>& gamma,
                const std::vector<double>& beta, std::vector<double>& run_mean,
                std::vector<double>& run_var, bool batch_stats, double* y, BnCache& cache) {
  cache.xhat.resize(n * o);
  cache.inv_std.resize(o);
  std::vector<double> mean(o, 0.0);
  if (batch_stats) {
    std::vector<double> var(o, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const double* zr = z + r * o;
      for (std::size_t j = 0; j < o; ++j) mean[j] += zr[j];
    }
    const double nd = static_cast<double>(n);
    for (std::size_t j = 0; j < o; ++j) mean[j] /= nd;
    for (std::size_t r = 0; r < n; ++r) {
      const double* zr = z + r * o;
      for (std::size_t j = 0; j < o; ++j) {
        const double d = zr[j] - mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < o; ++j) {
      var[j] /= nd;
      cache.inv_std[j] = 1.0 / std::sqrt(var[j] + kBnEps);
      run_mean[j] = (1.0 - kBnMomentum) * run_mean[j] + kBnMomentum * mean[j];
      const double unbiased = n > 1 ? var[j] * nd / (nd - 1.0) : var[j];
      run_var[j] = (1.0 - kBnMomentum) * run_var[j] + kBnMomentum * unbiased;
    }
  } else {
    mean = run_mean;
    for (std::size_t j = 0; j < o; ++j) cache.inv_std[j] = 1.0 / std::sqrt(run_var[j] + kBnEps);
  }
  for (std::size_t r = 0; r < n; ++r) {
    const double* zr = z + r * o;
    double* xr = cache.xhat.data() + r * o;
    double* yr = y + r * o;
    for (std::size_t j = 0; j < o; ++j) {
      xr[j] = (zr[j] - mean[j]) * cache.inv_std[j];
      yr[j] = gamma[j] * xr[j] + beta[j];
    }
  }
}

void bn_backward(const BnCache& cache, std::size_t n, std::size_t o,
                 const std::vector<double>& gamma, const double* dy, bool batch_stats, double* dz,
                 double* dgamma, double* dbeta) {
  std::fill(dgamma, dgamma + o, 0.0);
  std::fill(dbeta, dbeta + o, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* dyr = dy + r * o;
    const double* xr = cache.xhat.data() + r * o;
    for (std::size_t j = 0; j < o; ++j) {
      dgamma[j] += dyr[j] * xr[j];
      dbeta[j] += dyr[j];
    }
  }
  if (!batch_stats) {
    for (std::size_t r = 0; r < n; ++r) {
      const double* dyr = dy + r * o;
      double* dzr = dz + r * o;
      for (std::size_t j = 0; j < o; ++j) dzr[j] = dyr[j] * gamma[j] * cache.inv_std[j];
    }
    return;
  }
  const double nd = static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* dyr = dy + r * o;
    const double* xr = cache.xhat.data() + r * o;
    double* dzr = dz + r * o;
    for (std::size_t j = 0; j < o; ++j) {
      // dgamma[j] is sum(dy * xhat), dbeta[j] is sum(dy), reused here.
      dzr[j] = gamma[j] * cache.inv_std[j] *
               (dyr[j] - dbeta[j] / nd - xr[j] * dgamma[j] / nd);
    }
  }
}

struct Grads {
  std::vector<double> w1, b1, gamma1, beta1;
  std::vector<double> w2, b2, gamma2, beta2;
  std::vector<double> w3, b3;
};

Grads make_grads() {
  Grads g;
  g.w1.resize(RankerModel::kIn * RankerModel::kH1);
  g.b1.resize(RankerModel::kH1);
  g.gamma1.resize(RankerModel::kH1);
  g.beta1.resize(RankerModel::kH1);
  g.w2.resize(RankerModel::kH1 * RankerModel::kH2);
  g.b2.resize(RankerModel::kH2);
  g.gamma2.resize(RankerModel::kH2);
  g.beta2.resize(RankerModel::kH2);
  g.w3.resize(RankerModel::kH2);
  g.b3.resize(1);
  return g;
}

struct TensorRef {
  const char* name;
  std::vector<double>* param;
  std::vector<double>* grad;
};

std::vector<TensorRef> param_tensors(RankerModel& m, Grads& g) {
  return {
      {"w1", &m.w1, &g.w1},         {"b1", &m.b1, &g.b1},
      {"bn1_gamma", &m.gamma1, &g.gamma1}, {"bn1_beta", &m.beta1, &g.beta1},
      {"w2", &m.w2, &g.w2},         {"b2", &m.b2, &g.b2},
      {"bn2_gamma", &m.gamma2, &g.gamma2}, {"bn2_beta", &m.beta2, &g.beta2},
      {"w3", &m.w3, &g.w3},         {"b3", &m.b3, &g.b3},
  };
}

struct Batch {
  std::vector<double> x;  // n x 16
  std::vector<double> y;  // n
  std::size_t n = 0;
};

// Forward pass and (optionally) backward pass over one batch. Returns the
// mean logit BCE. batch_stats switches batch-norm between batch statistics
// (updating the running ones) and the frozen running statistics; gen drives
// dropout and must be non-null iff dropout is on.
double net_pass(RankerModel& m, const Batch& batch, bool batch_stats, bool use_dropout,
                std::mt19937_64* gen, Grads* grads) {
  constexpr std::size_t I = RankerModel::kIn;
  constexpr std::size_t H1 = RankerModel::kH1;
  constexpr std::size_t H2 = RankerModel::kH2;
  const std::size_t n = batch.n;

  std::vector<double> z1(n * H1), y1(n * H1), h1(n * H1);
  std::vector<double> z2(n * H2), y2(n * H2), h2(n * H2);
  std::vector<double> z3(n);
  std::vector<double> drop1, drop2;
  BnCache bn1, bn2;

  fc_forward(batch.x.data(), n, I, H1, m.w1.data(), m.b1.data(), z1.data());
  bn_forward(z1.data(), n, H1, m.gamma1, m.beta1, m.run_mean1, m.run_var1, batch_stats, y1.data(),
             bn1);
  for (std::size_t i = 0; i < n * H1; ++i) h1[i] = y1[i] > 0.0 ? y1[i] : 0.0;
  if (use_dropout) {
    drop1.resize(n * H1);
    const double keep = 1.0 - m.dropout1;
    for (std::size_t i = 0; i < n * H1; ++i) {
      drop1[i] = uniform01(*gen) < m.dropout1 ? 0.0 : 1.0 / keep;
      h1[i] *= drop1[i];
    }
  }

  fc_forward(h1.data(), n, H1, H2, m.w2.data(), m.b2.data(), z2.data());
  bn_forward(z2.data(), n, H2, m.gamma2, m.beta2, m.run_mean2, m.run_var2, batch_stats, y2.data(),
             bn2);
  for (std::size_t i = 0; i < n * H2; ++i) h2[i] = y2[i] > 0.0 ? y2[i] : 0.0;
  if (use_dropout) {
    drop2.resize(n * H2);
    const double keep = 1.0 - m.dropout2;
    for (std::size_t i = 0; i < n * H2; ++i) {
      drop2[i] = uniform01(*gen) < m.dropout2 ? 0.0 : 1.0 / keep;
      h2[i] *= drop2[i];
    }
  }

  fc_forward(h2.data(), n, H2, 1, m.w3.data(), m.b3.data(), z3.data());

  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double z = z3[r];
    loss += std::max(z, 0.0) - z * batch.y[r] + std::log1p(std::exp(-std::abs(z)));
  }
  loss /= static_cast<double>(n);
  if (grads == nullptr) return loss;

  std::vector<double> dz3(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double sig = 1.0 / (1.0 + std::exp(-z3[r]));
    dz3[r] = (sig - batch.y[r]) / static_cast<double>(n);
  }

  std::vector<double> dh2(n * H2), dz2(n * H2), dh1(n * H1), dz1(n * H1);
  fc_backward(h2.data(), m.w3.data(), dz3.data(), n, H2, 1, grads->w3.data(), grads->b3.data(),
              dh2.data());
  if (use_dropout) {
    for (std::size_t i = 0; i < n * H2; ++i) dh2[i] *= drop2[i];
  }
  for (std::size_t i = 0; i < n * H2; ++i) {
    if (y2[i] <= 0.0) dh2[i] = 0.0;
  }
  bn_backward(bn2, n, H2, m.gamma2, dh2.data(), batch_stats, dz2.data(), grads->gamma2.data(),
              grads->beta2.data());
  fc_backward(h1.data(), m.w2.data(), dz2.data(), n, H1, H2, grads->w2.data(), grads->b2.data(),
              dh1.data());
  if (use_dropout) {
    for (std::size_t i = 0; i < n * H1; ++i) dh1[i] *= drop1[i];
  }
  for (std::size_t i = 0; i < n * H1; ++i) {
    if (y1[i] <= 0.0) dh1[i] = 0.0;
  }
  bn_backward(bn1, n, H1, m.gamma1, dh1.data(), batch_stats, dz1.data(), grads->gamma1.data(),
              grads->beta1.data());
  fc_backward(batch.x.data(), m.w1.data(), dz1.data(), n, I, H1, grads->w1.data(),
              grads->b1.data(), nullptr);
  return loss;
}

void he_init(RankerModel& m, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  auto fill = [&gen](std::vector<double>& w, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : w) v = (2.0 * uniform01(gen) - 1.0) * limit;
  };
  fill(m.w1, RankerModel::kIn);
  fill(m.w2, RankerModel::kH1);
  fill(m.w3, RankerModel::kH2);
}

void round_through_f32(RankerModel& m) {
  auto narrow = [](std::vector<double>& v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  };
  narrow(m.w1);
  narrow(m.b1);
  narrow(m.gamma1);
  narrow(m.beta1);
  narrow(m.run_mean1);
  narrow(m.run_var1);
  narrow(m.w2);
  narrow(m.b2);
  narrow(m.gamma2);
  narrow(m.beta2);
  narrow(m.run_mean2);
  narrow(m.run_var2);
  narrow(m.w3);
  narrow(m.b3);
}

}  // namespace

RankerModel RankerModel::zeros() {
  RankerModel m;
  m.w1.assign(kIn * kH1, 0.0);
  m.b1.assign(kH1, 0.0);
  m.gamma1.assign(kH1, 0.0);
  m.beta1.assign(kH1, 0.0);
  m.run_mean1.assign(kH1, 0.0);
  m.run_var1.assign(kH1, 1.0);
  m.w2.assign(kH1 * kH2, 0.0);
  m.b2.assign(kH2, 0.0);
  m.gamma2.assign(kH2, 0.0);
  m.beta2.assign(kH2, 0.0);
  m.run_mean2.assign(kH2, 0.0);
  m.run_var2.assign(kH2, 1.0);
  m.w3.assign(kH2, 0.0);
  m.b3.assign(1, 0.0);
  return m;
}

RankerModel train(const FeatureMatrix& features, const std::vector<std::uint8_t>& labels,
                  const TrainConfig& cfg, TrainLog* log) {
  const std::size_t n = features.rows;
  if (n < 2) throw std::invalid_argument("train: need at least two examples");
  if (labels.size() != n) throw std::invalid_argument("train: labels do not match feature rows");
  if (features.data.size() != n * kFeatureCount) throw std::invalid_argument("train: bad shape");
  if (cfg.patience >= cfg.max_epochs) {
    throw std::invalid_argument("train: patience must be below max epochs");
  }
  bool any_pos = false, any_neg = false;
  for (std::uint8_t l : labels) (l != 0 ? any_pos : any_neg) = true;
  if (!any_pos || !any_neg) {
    throw std::invalid_argument("train: both label classes must be present");
  }

  // Deterministic 80/20 split: order examples by hashed index, validation
  // takes the smallest-key fifth.
  const std::uint64_t split_seed = derive_seed(cfg.seed, 0xA11CE5ULL);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char buf[8];
    for (int b = 0; b < 8; ++b) {
      buf[b] = static_cast<unsigned char>((static_cast<std::uint64_t>(i) >> (8 * b)) & 0xff);
    }
    keys[i] = xxhash64(buf, sizeof(buf), split_seed);
  }
  std::sort(order.begin(), order.end(), [&keys](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return keys[a] < keys[b];
    return a < b;
  });
  const std::size_t n_val = std::max<std::size_t>(1, n / 5);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  const std::size_t n_train = train_idx.size();

  RankerModel model = RankerModel::zeros();
  model.train_mode = true;
  for (double& v : model.gamma1) v = 1.0;
  for (double& v : model.gamma2) v = 1.0;
  he_init(model, derive_seed(cfg.seed, 1));

  Grads grads = make_grads();
  auto tensors = param_tensors(model, grads);
  std::vector<std::vector<double>> adam_m, adam_v;
  for (const TensorRef& t : tensors) {
    adam_m.emplace_back(t.param->size(), 0.0);
    adam_v.emplace_back(t.param->size(), 0.0);
  }

  auto gather = [&features, &labels](const std::vector<std::size_t>& idx, std::size_t lo,
                                     std::size_t hi) {
    Batch b;
    b.n = hi - lo;
    b.x.resize(b.n * kFeatureCount);
    b.y.resize(b.n);
    for (std::size_t r = 0; r < b.n; ++r) {
      const float* src = features.row(idx[lo + r]);
      for (std::size_t c = 0; c < kFeatureCount; ++c) {
        b.x[r * kFeatureCount + c] = static_cast<double>(src[c]);
      }
      b.y[r] = labels[idx[lo + r]] != 0 ? 1.0 : 0.0;
    }
    return b;
  };

  auto eval_loss = [&](const std::vector<std::size_t>& idx) {
    double acc = 0.0;
    for (std::size_t lo = 0; lo < idx.size(); lo += cfg.infer_batch) {
      const std::size_t hi = std::min(idx.size(), lo + cfg.infer_batch);
      const Batch b = gather(idx, lo, hi);
      acc += net_pass(model, b, false, false, nullptr, nullptr) * static_cast<double>(b.n);
    }
    return acc / static_cast<double>(idx.size());
  };

  std::mt19937_64 gen(derive_seed(cfg.seed, 2));
  RankerModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t stale = 0;
  std::size_t step = 0;
  std::vector<std::size_t> sched = train_idx;

  std::size_t epoch = 0;
  for (epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = 0; i + 1 < sched.size(); ++i) {
      const std::size_t j = i + bounded_draw(gen, sched.size() - i);
      std::swap(sched[i], sched[j]);
    }
    double epoch_loss = 0.0;
    for (std::size_t lo = 0; lo < n_train; lo += cfg.train_batch) {
      const std::size_t hi = std::min(n_train, lo + cfg.train_batch);
      const Batch b = gather(sched, lo, hi);
      const double batch_loss = net_pass(model, b, true, true, &gen, &grads);
      epoch_loss += batch_loss * static_cast<double>(b.n);
      ++step;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      for (std::size_t t = 0; t < tensors.size(); ++t) {
        std::vector<double>& p = *tensors[t].param;
        const std::vector<double>& g = *tensors[t].grad;
        for (std::size_t e = 0; e < p.size(); ++e) {
          adam_m[t][e] = cfg.adam_beta1 * adam_m[t][e] + (1.0 - cfg.adam_beta1) * g[e];
          adam_v[t][e] = cfg.adam_beta2 * adam_v[t][e] + (1.0 - cfg.adam_beta2) * g[e] * g[e];
          const double mh = adam_m[t][e] / bc1;
          const double vh = adam_v[t][e] / bc2;
          p[e] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_epsilon);
        }
      }
    }
    epoch_loss /= static_cast<double>(n_train);
    const double val_loss = eval_loss(val_idx);
    if (log != nullptr) {
      log->train_losses.push_back(epoch_loss);
      log->val_losses.push_back(val_loss);
    }
    if (val_loss < best_val) {
      best_val = val_loss;
      best = model;
      best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
      if (stale >= cfg.patience) break;
    }
  }

  best.train_mode = false;
  round_through_f32(best);
  if (log != nullptr) {
    log->best_epoch = best_epoch;
    log->epochs_run = std::min(epoch, cfg.max_epochs);
  }
  return best;
}

std::vector<double> predict(const RankerModel& model, const FeatureMatrix& features,
                            unsigned threads) {
  if (model.train_mode) throw std::invalid_argument("predict: model must be in eval mode");
  if (features.data.size() != features.rows * kFeatureCount) {
    throw std::invalid_argument("predict: feature width must be 16");
  }
  constexpr std::size_t I = RankerModel::kIn;
  constexpr std::size_t H1 = RankerModel::kH1;
  constexpr std::size_t H2 = RankerModel::kH2;

  // Eval batch-norm is a per-unit affine map; fold it once.
  std::vector<double> scale1(H1), shift1(H1), scale2(H2), shift2(H2);
  for (std::size_t j = 0; j < H1; ++j) {
    scale1[j] = model.gamma1[j] / std::sqrt(model.run_var1[j] + kBnEps);
    shift1[j] = model.beta1[j] - model.run_mean1[j] * scale1[j];
  }
  for (std::size_t j = 0; j < H2; ++j) {
    scale2[j] = model.gamma2[j] / std::sqrt(model.run_var2[j] + kBnEps);
    shift2[j] = model.beta2[j] - model.run_mean2[j] * scale2[j];
  }

  std::vector<double> out(features.rows);
  parallel_for(features.rows, threads, [&](std::size_t lo, std::size_t hi) {
    std::vector<double> x(I), a1(H1), a2(H2);
    for (std::size_t r = lo; r < hi; ++r) {
      const float* src = features.row(r);
      for (std::size_t c = 0; c < I; ++c) x[c] = static_cast<double>(src[c]);
      for (std::size_t j = 0; j < H1; ++j) {
        double z = model.b1[j];
        for (std::size_t i = 0; i < I; ++i) z += x[i] * model.w1[i * H1 + j];
        const double y = scale1[j] * z + shift1[j];
        a1[j] = y > 0.0 ? y : 0.0;
      }
      for (std::size_t j = 0; j < H2; ++j) {
        double z = model.b2[j];
        for (std::size_t i = 0; i < H1; ++i) z += a1[i] * model.w2[i * H2 + j];
        const double y = scale2[j] * z + shift2[j];
        a2[j] = y > 0.0 ? y : 0.0;
      }
      double z3 = model.b3[0];
      for (std::size_t i = 0; i < H2; ++i) z3 += a2[i] * model.w3[i];
      const double p = 1.0 / (1.0 + std::exp(-z3));
      out[r] = std::clamp(p, 1e-12, 1.0 - 1e-12);
    }
  });
  return out;
}

double gradient_check(std::uint64_t seed) {
  constexpr std::size_t kBatch = 32;
  RankerModel model = RankerModel::zeros();
  for (double& v : model.gamma1) v = 1.0;
  for (double& v : model.gamma2) v = 1.0;
  he_init(model, derive_seed(seed, 11));

  std::mt19937_64 gen(derive_seed(seed, 12));
  // Randomized frozen statistics so the batch-norm affine path is nontrivial.
  for (std::size_t j = 0; j < RankerModel::kH1; ++j) {
    model.run_mean1[j] = 0.1 * normal01(gen);
    model.run_var1[j] = 0.5 + uniform01(gen);
  }
  for (std::size_t j = 0; j < RankerModel::kH2; ++j) {
    model.run_mean2[j] = 0.1 * normal01(gen);
    model.run_var2[j] = 0.5 + uniform01(gen);
  }
  Batch batch;
  batch.n = kBatch;
  batch.x.resize(kBatch * RankerModel::kIn);
  batch.y.resize(kBatch);
  for (double& v : batch.x) v = normal01(gen);
  for (double& v : batch.y) v = static_cast<double>(gen() & 1);

  Grads grads = make_grads();
  net_pass(model, batch, false, false, nullptr, &grads);
  auto tensors = param_tensors(model, grads);

  constexpr double kH = 1e-4;
  constexpr std::size_t kProbesPerTensor = 48;
  double max_rel = 0.0;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    std::vector<double>& p = *tensors[t].param;
    const std::vector<double>& g = *tensors[t].grad;
    std::mt19937_64 pick(derive_seed(seed, 13, t));
    const std::size_t probes = std::min(p.size(), kProbesPerTensor);
    for (std::size_t q = 0; q < probes; ++q) {
      const std::size_t e = p.size() <= kProbesPerTensor ? q : bounded_draw(pick, p.size());
      const double saved = p[e];
      p[e] = saved + kH;
      const double up = net_pass(model, batch, false, false, nullptr, nullptr);
      p[e] = saved - kH;
      const double down = net_pass(model, batch, false, false, nullptr, nullptr);
      p[e] = saved;
      const double numeric = (up - down) / (2.0 * kH);
      const double denom = std::max({std::abs(numeric), std::abs(g[e]), 1e-6});
      max_rel = std::max(max_rel, std::abs(numeric - g[e]) / denom);
    }
  }
  return max_rel;
}

namespace {

void write_tensor(std::ostream& os, const std::string& name, std::size_t rows, std::size_t cols,
                  const std::vector<double>& v) {
  write_u16_le(os, static_cast<std::uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64_le(os, rows);
  write_u64_le(os, cols);
  for (double x : v) write_f32_le(os, static_cast<float>(x));
}

struct RawTensor {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;
};

}  // namespace

void write_model(const std::string& path, const RankerModel& model, const FeatureScaler& scaler) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open for writing: " + path);
  os.write("RFNN", 4);
  write_u16_le(os, 1);
  write_u16_le(os, 16);
  write_tensor(os, "w1", RankerModel::kIn, RankerModel::kH1, model.w1);
  write_tensor(os, "b1", 1, RankerModel::kH1, model.b1);
  write_tensor(os, "bn1_gamma", 1, RankerModel::kH1, model.gamma1);
  write_tensor(os, "bn1_beta", 1, RankerModel::kH1, model.beta1);
  write_tensor(os, "bn1_mean", 1, RankerModel::kH1, model.run_mean1);
  write_tensor(os, "bn1_var", 1, RankerModel::kH1, model.run_var1);
  write_tensor(os, "w2", RankerModel::kH1, RankerModel::kH2, model.w2);
  write_tensor(os, "b2", 1, RankerModel::kH2, model.b2);
  write_tensor(os, "bn2_gamma", 1, RankerModel::kH2, model.gamma2);
  write_tensor(os, "bn2_beta", 1, RankerModel::kH2, model.beta2);
  write_tensor(os, "bn2_mean", 1, RankerModel::kH2, model.run_mean2);
  write_tensor(os, "bn2_var", 1, RankerModel::kH2, model.run_var2);
  write_tensor(os, "w3", RankerModel::kH2, 1, model.w3);
  write_tensor(os, "b3", 1, 1, model.b3);
  std::vector<double> mins(scaler.mins.begin(), scaler.mins.end());
  std::vector<double> maxs(scaler.maxs.begin(), scaler.maxs.end());
  write_tensor(os, "scaler_min", 1, kFeatureCount, mins);
  write_tensor(os, "scaler_max", 1, kFeatureCount, maxs);
  if (!os) throw InputError("short write: " + path);
}

void read_model(const std::string& path, RankerModel* model, FeatureScaler* scaler) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "RFNN") throw InputError("bad RFNN magic: " + path);
  if (read_u16_le(is) != 1) throw InputError("unsupported RFNN version: " + path);
  const std::uint16_t count = read_u16_le(is);
  std::map<std::string, RawTensor> tensors;
  for (std::uint16_t t = 0; t < count; ++t) {
    const std::uint16_t name_len = read_u16_le(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw InputError("truncated RFNN tensor name: " + path);
    RawTensor raw;
    raw.rows = read_u64_le(is);
    raw.cols = read_u64_le(is);
    raw.v.resize(raw.rows * raw.cols);
    for (double& x : raw.v) x = static_cast<double>(read_f32_le(is));
    tensors.emplace(std::move(name), std::move(raw));
  }
  auto fetch = [&tensors, &path](const std::string& name, std::size_t rows, std::size_t cols) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw InputError("RFNN tensor missing: " + name + " in " + path);
    if (it->second.rows != rows || it->second.cols != cols) {
      throw InputError("RFNN tensor has wrong shape: " + name + " in " + path);
    }
    return it->second.v;
  };
  RankerModel m = RankerModel::zeros();
  m.w1 = fetch("w1", RankerModel::kIn, RankerModel::kH1);
  m.b1 = fetch("b1", 1, RankerModel::kH1);
  m.gamma1 = fetch("bn1_gamma", 1, RankerModel::kH1);
  m.beta1 = fetch("bn1_beta", 1, RankerModel::kH1);
  m.run_mean1 = fetch("bn1_mean", 1, RankerModel::kH1);
  m.run_var1 = fetch("bn1_var", 1, RankerModel::kH1);
  m.w2 = fetch("w2", RankerModel::kH1, RankerModel::kH2);
  m.b2 = fetch("b2", 1, RankerModel::kH2);
  m.gamma2 = fetch("bn2_gamma", 1, RankerModel::kH2);
  m.beta2 = fetch("bn2_beta", 1, RankerModel::kH2);
  m.run_mean2 = fetch("bn2_mean", 1, RankerModel::kH2);
  m.run_var2 = fetch("bn2_var", 1, RankerModel::kH2);
  m.w3 = fetch("w3", RankerModel::kH2, 1);
  m.b3 = fetch("b3", 1, 1);
  m.train_mode = false;
  const std::vector<double> mins = fetch("scaler_min", 1, kFeatureCount);
  const std::vector<double> maxs = fetch("scaler_max", 1, kFeatureCount);
  FeatureScaler sc;
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    sc.mins[c] = static_cast<float>(mins[c]);
    sc.maxs[c] = static_cast<float>(maxs[c]);
  }
  if (model != nullptr) *model = m;
  if (scaler != nullptr) *scaler = sc;
}

}  // namespace recallforge
