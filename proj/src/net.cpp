#include "puffline/net.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace puffline {

namespace {

// Fixed chunk size for within-batch parallelism. Chunk boundaries depend only
// on the batch size, and chunk results are reduced in index order, so results
// are bit-identical for any thread count.
constexpr int kChunkSize = 8;

void parallel_chunks(int n_chunks, const std::function<void(int)>& body) {
  if (n_chunks <= 0) return;
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int n_threads = static_cast<int>(
      std::min<unsigned>(hw, static_cast<unsigned>(n_chunks)));
  if (n_threads <= 1) {
    for (int i = 0; i < n_chunks; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      try {
        for (int i = next.fetch_add(1); i < n_chunks; i = next.fetch_add(1)) {
          body(i);
        }
      } catch (...) {
        std::scoped_lock lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Keeps probabilities strictly inside (0,1) even for saturating logits.
double sigmoid_prob(double x) {
  return std::clamp(sigmoid(x), 1e-12, 1.0 - 1e-12);
}

inline Eigen::ArrayXXd inner_act(const Eigen::ArrayXXd& z,
                                 NetConfig::InnerActivation a) {
  if (a == NetConfig::InnerActivation::Tanh) return z.tanh();
  return 1.0 / (1.0 + (-z).exp());
}

// Derivative expressed through the activated value.
inline Eigen::ArrayXXd inner_act_deriv(const Eigen::ArrayXXd& a,
                                       NetConfig::InnerActivation act) {
  if (act == NetConfig::InnerActivation::Tanh) return 1.0 - a.square();
  return a * (1.0 - a);
}

// A(t, j*c + ch) = X(t + j, ch); turns a valid convolution into a gemm.
void im2col(const Eigen::MatrixXd& x, int kernel, Eigen::MatrixXd& a) {
  const Eigen::Index len = x.rows() - kernel + 1;
  const Eigen::Index c = x.cols();
  a.resize(len, kernel * c);
  for (int j = 0; j < kernel; ++j) {
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      a.col(j * c + ch) = x.col(ch).segment(j, len);
    }
  }
}

// Scatter-add of the im2col gradient back onto the convolution input.
void col2im_add(const Eigen::MatrixXd& da, int kernel, Eigen::MatrixXd& dx) {
  const Eigen::Index len = da.rows();
  const Eigen::Index c = dx.cols();
  for (int j = 0; j < kernel; ++j) {
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      dx.col(ch).segment(j, len) += da.col(j * c + ch);
    }
  }
}

struct ConvCache {
  Eigen::MatrixXd a1, z1, a2, z2, a3, z3;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> arg1, arg2;
};

struct ChunkCache {
  std::vector<ConvCache> conv;
  // LSTM step t occupies rows [t*b, (t+1)*b) of the stacked matrices.
  Eigen::MatrixXd comb;    // (T*b) x (c3 + H), [x_t | h_{t-1}]
  Eigen::MatrixXd gates;   // (T*b) x 4H, activated [i f g o]
  Eigen::MatrixXd cells;   // (T*b) x H
  Eigen::MatrixXd cell_act;  // (T*b) x H
  Eigen::MatrixXd h_final;   // b x H (pre-dropout)
  Eigen::MatrixXd h_drop;    // b x H
  Eigen::VectorXd logits;
};

using BatchView = std::vector<const Eigen::MatrixXd*>;

void conv_relu_pool(const Eigen::MatrixXd& in, const Eigen::MatrixXd& w,
                    const Eigen::VectorXd& b, int kernel, Eigen::MatrixXd& a,
                    Eigen::MatrixXd& z, Eigen::MatrixXd& pooled,
                    Eigen::Matrix<std::uint8_t, Eigen::Dynamic,
                                  Eigen::Dynamic>* argmax) {
  im2col(in, kernel, a);
  z.noalias() = a * w;
  z.rowwise() += b.transpose();
  const Eigen::MatrixXd h = z.cwiseMax(0.0);
  if (argmax == nullptr) {
    pooled = h;
    return;
  }
  const Eigen::Index rows = h.rows() / 2;
  pooled.resize(rows, h.cols());
  argmax->resize(rows, h.cols());
  for (Eigen::Index f = 0; f < h.cols(); ++f) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double top = h(2 * r, f);
      const double bot = h(2 * r + 1, f);
      if (top >= bot) {
        pooled(r, f) = top;
        (*argmax)(r, f) = 0;
      } else {
        pooled(r, f) = bot;
        (*argmax)(r, f) = 1;
      }
    }
  }
}

// Forward for samples [first, first + count) of the batch. Probabilities are
// written into probs at the global sample positions. masks, when non-null,
// holds one scaled dropout row per batch sample.
void forward_chunk(const PuffModel& m, const Eigen::MatrixXd& w_comb,
                   const BatchView& batch, int first, int count,
                   const Eigen::MatrixXd* masks, ChunkCache* cache_out,
                   Eigen::VectorXd& probs) {
  const NetConfig& nc = m.config;
  const int steps = nc.lstm_steps();
  const int c3 = nc.conv3_filters;
  const int h_dim = nc.lstm_cells;
  const int b = count;

  ChunkCache cache;
  cache.conv.resize(b);
  cache.comb.resize(static_cast<Eigen::Index>(steps) * b, c3 + h_dim);
  cache.gates.resize(static_cast<Eigen::Index>(steps) * b, 4 * h_dim);
  cache.cells.resize(static_cast<Eigen::Index>(steps) * b, h_dim);
  cache.cell_act.resize(static_cast<Eigen::Index>(steps) * b, h_dim);

  for (int s = 0; s < b; ++s) {
    const Eigen::MatrixXd& x = *batch[static_cast<std::size_t>(first + s)];
    ConvCache& cc = cache.conv[s];
    Eigen::MatrixXd p1, p2, h3;
    conv_relu_pool(x, m.conv1_w, m.conv1_b, nc.conv1_kernel, cc.a1, cc.z1, p1,
                   &cc.arg1);
    conv_relu_pool(p1, m.conv2_w, m.conv2_b, nc.conv2_kernel, cc.a2, cc.z2, p2,
                   &cc.arg2);
    conv_relu_pool(p2, m.conv3_w, m.conv3_b, nc.conv3_kernel, cc.a3, cc.z3, h3,
                   nullptr);
    // h3 feeds the LSTM input slots of every step.
    for (int t = 0; t < steps; ++t) {
      cache.comb.block(static_cast<Eigen::Index>(t) * b + s, 0, 1, c3) =
          h3.row(t);
    }
  }

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(b, h_dim);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(b, h_dim);
  for (int t = 0; t < steps; ++t) {
    auto comb_t = cache.comb.middleRows(static_cast<Eigen::Index>(t) * b, b);
    comb_t.rightCols(h_dim) = h;
    Eigen::MatrixXd z = comb_t * w_comb;
    z.rowwise() += m.lstm_b.transpose();
    auto gates_t = cache.gates.middleRows(static_cast<Eigen::Index>(t) * b, b);
    gates_t.leftCols(h_dim) =
        z.leftCols(h_dim).unaryExpr([](double v) { return sigmoid(v); });
    gates_t.middleCols(h_dim, h_dim) =
        z.middleCols(h_dim, h_dim).unaryExpr([](double v) { return sigmoid(v); });
    gates_t.middleCols(2 * h_dim, h_dim) =
        inner_act(z.middleCols(2 * h_dim, h_dim).array(),
                  nc.lstm_inner_activation)
            .matrix();
    gates_t.rightCols(h_dim) =
        z.rightCols(h_dim).unaryExpr([](double v) { return sigmoid(v); });

    c.array() = gates_t.middleCols(h_dim, h_dim).array() * c.array() +
                gates_t.leftCols(h_dim).array() *
                    gates_t.middleCols(2 * h_dim, h_dim).array();
    cache.cells.middleRows(static_cast<Eigen::Index>(t) * b, b) = c;
    const Eigen::ArrayXXd ca = inner_act(c.array(), nc.lstm_inner_activation);
    cache.cell_act.middleRows(static_cast<Eigen::Index>(t) * b, b) =
        ca.matrix();
    h.array() = gates_t.rightCols(h_dim).array() * ca;
  }
  cache.h_final = h;

  if (masks != nullptr) {
    cache.h_drop =
        (h.array() * masks->middleRows(first, b).array()).matrix();
  } else {
    cache.h_drop = h;
  }

  cache.logits = cache.h_drop * m.fc_w;
  cache.logits.array() += m.fc_b;
  for (int s = 0; s < b; ++s) {
    probs(first + s) = sigmoid_prob(cache.logits(s));
  }

  if (cache_out != nullptr) *cache_out = std::move(cache);
}

// Backpropagation for one chunk; fills grads (zero-initialized by caller).
void backward_chunk(const PuffModel& m, const Eigen::MatrixXd& w_comb,
                    const ChunkCache& cache, const std::vector<int>& labels,
                    int first, int count, const Eigen::MatrixXd* masks,
                    const Eigen::VectorXd& probs, double inv_batch,
                    PuffModel& grads) {
  const NetConfig& nc = m.config;
  const int steps = nc.lstm_steps();
  const int c3 = nc.conv3_filters;
  const int h_dim = nc.lstm_cells;
  const int b = count;

  Eigen::VectorXd dlogit(b);
  for (int s = 0; s < b; ++s) {
    const double target =
        labels[static_cast<std::size_t>(first + s)] > 0 ? 1.0 : 0.0;
    dlogit(s) = (probs(first + s) - target) * inv_batch;
  }

  grads.fc_w.noalias() += cache.h_drop.transpose() * dlogit;
  grads.fc_b += dlogit.sum();

  Eigen::MatrixXd dh = dlogit * m.fc_w.transpose();
  if (masks != nullptr) {
    dh.array() *= masks->middleRows(first, b).array();
  }

  Eigen::MatrixXd dz_all(static_cast<Eigen::Index>(steps) * b, 4 * h_dim);
  Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(b, h_dim);
  std::vector<Eigen::MatrixXd> dx_rows(
      static_cast<std::size_t>(steps));  // b x c3 per step
  for (int t = steps - 1; t >= 0; --t) {
    const auto gates_t =
        cache.gates.middleRows(static_cast<Eigen::Index>(t) * b, b);
    const auto ca = cache.cell_act.middleRows(
        static_cast<Eigen::Index>(t) * b, b);
    const auto gi = gates_t.leftCols(h_dim).array();
    const auto gf = gates_t.middleCols(h_dim, h_dim).array();
    const auto gg = gates_t.middleCols(2 * h_dim, h_dim).array();
    const auto go = gates_t.rightCols(h_dim).array();

    dc.array() += dh.array() * go *
                  inner_act_deriv(ca.array(), nc.lstm_inner_activation);
    const Eigen::ArrayXXd d_out = dh.array() * ca.array();
    const Eigen::ArrayXXd d_in = dc.array() * gg;
    const Eigen::ArrayXXd d_cand = dc.array() * gi;
    Eigen::ArrayXXd d_forget;
    if (t > 0) {
      const auto c_prev = cache.cells.middleRows(
          static_cast<Eigen::Index>(t - 1) * b, b);
      d_forget = dc.array() * c_prev.array();
    } else {
      d_forget = Eigen::ArrayXXd::Zero(b, h_dim);
    }

    auto dz_t = dz_all.middleRows(static_cast<Eigen::Index>(t) * b, b);
    dz_t.leftCols(h_dim) = (d_in * gi * (1.0 - gi)).matrix();
    dz_t.middleCols(h_dim, h_dim) = (d_forget * gf * (1.0 - gf)).matrix();
    dz_t.middleCols(2 * h_dim, h_dim) =
        (d_cand * inner_act_deriv(gg, nc.lstm_inner_activation)).matrix();
    dz_t.rightCols(h_dim) = (d_out * go * (1.0 - go)).matrix();

    const Eigen::MatrixXd dcomb = dz_t * w_comb.transpose();
    dx_rows[static_cast<std::size_t>(t)] = dcomb.leftCols(c3);
    dh = dcomb.rightCols(h_dim);
    dc.array() *= gf;
  }

  const Eigen::MatrixXd dw_comb = cache.comb.transpose() * dz_all;
  grads.lstm_wx += dw_comb.topRows(c3);
  grads.lstm_wh += dw_comb.bottomRows(h_dim);
  grads.lstm_b += dz_all.colwise().sum().transpose();

  for (int s = 0; s < b; ++s) {
    const ConvCache& cc = cache.conv[s];
    Eigen::MatrixXd dh3(steps, c3);
    for (int t = 0; t < steps; ++t) {
      dh3.row(t) = dx_rows[static_cast<std::size_t>(t)].row(s);
    }

    const Eigen::MatrixXd dz3 =
        ((cc.z3.array() > 0.0).cast<double>() * dh3.array()).matrix();
    grads.conv3_w.noalias() += cc.a3.transpose() * dz3;
    grads.conv3_b += dz3.colwise().sum().transpose();

    const Eigen::MatrixXd da3 = dz3 * m.conv3_w.transpose();
    Eigen::MatrixXd dp2 =
        Eigen::MatrixXd::Zero(nc.pool2_len(), nc.conv2_filters);
    col2im_add(da3, nc.conv3_kernel, dp2);

    Eigen::MatrixXd dh2 =
        Eigen::MatrixXd::Zero(nc.conv2_len(), nc.conv2_filters);
    for (Eigen::Index f = 0; f < dp2.cols(); ++f) {
      for (Eigen::Index r = 0; r < dp2.rows(); ++r) {
        dh2(2 * r + cc.arg2(r, f), f) += dp2(r, f);
      }
    }

    const Eigen::MatrixXd dz2 =
        ((cc.z2.array() > 0.0).cast<double>() * dh2.array()).matrix();
    grads.conv2_w.noalias() += cc.a2.transpose() * dz2;
    grads.conv2_b += dz2.colwise().sum().transpose();

    const Eigen::MatrixXd da2 = dz2 * m.conv2_w.transpose();
    Eigen::MatrixXd dp1 =
        Eigen::MatrixXd::Zero(nc.pool1_len(), nc.conv1_filters);
    col2im_add(da2, nc.conv2_kernel, dp1);

    Eigen::MatrixXd dh1 =
        Eigen::MatrixXd::Zero(nc.conv1_len(), nc.conv1_filters);
    for (Eigen::Index f = 0; f < dp1.cols(); ++f) {
      for (Eigen::Index r = 0; r < dp1.rows(); ++r) {
        dh1(2 * r + cc.arg1(r, f), f) += dp1(r, f);
      }
    }

    const Eigen::MatrixXd dz1 =
        ((cc.z1.array() > 0.0).cast<double>() * dh1.array()).matrix();
    grads.conv1_w.noalias() += cc.a1.transpose() * dz1;
    grads.conv1_b += dz1.colwise().sum().transpose();
  }
}

Eigen::MatrixXd combined_lstm_weights(const PuffModel& m) {
  Eigen::MatrixXd w(m.lstm_wx.rows() + m.lstm_wh.rows(), m.lstm_wx.cols());
  w.topRows(m.lstm_wx.rows()) = m.lstm_wx;
  w.bottomRows(m.lstm_wh.rows()) = m.lstm_wh;
  return w;
}

void validate_batch_shapes(const NetConfig& nc, const BatchView& batch) {
  for (const auto* x : batch) {
    if (x->rows() != nc.input_len || x->cols() != nc.input_channels) {
      throw std::invalid_argument("forward: window shape mismatch");
    }
  }
}

Eigen::VectorXd forward_view(const PuffModel& m, const BatchView& batch,
                             const Eigen::MatrixXd* masks) {
  const int n = static_cast<int>(batch.size());
  Eigen::VectorXd probs(n);
  if (n == 0) return probs;
  validate_batch_shapes(m.config, batch);
  const Eigen::MatrixXd w_comb = combined_lstm_weights(m);
  const int n_chunks = (n + kChunkSize - 1) / kChunkSize;
  parallel_chunks(n_chunks, [&](int chunk) {
    const int first = chunk * kChunkSize;
    const int count = std::min(kChunkSize, n - first);
    forward_chunk(m, w_comb, batch, first, count, masks, nullptr, probs);
  });
  return probs;
}

BackwardResult forward_backward_view(const PuffModel& m,
                                     const BatchView& batch,
                                     const std::vector<int>& labels,
                                     const Eigen::MatrixXd* masks) {
  const int n = static_cast<int>(batch.size());
  if (labels.size() != batch.size()) {
    throw std::invalid_argument("forward_backward: label count mismatch");
  }
  BackwardResult result;
  result.grads = PuffModel::zeros(m.config);
  result.probs.resize(n);
  if (n == 0) return result;
  validate_batch_shapes(m.config, batch);

  const Eigen::MatrixXd w_comb = combined_lstm_weights(m);
  const int n_chunks = (n + kChunkSize - 1) / kChunkSize;
  const double inv_batch = 1.0 / n;

  std::vector<PuffModel> chunk_grads(static_cast<std::size_t>(n_chunks));
  std::vector<double> chunk_loss(static_cast<std::size_t>(n_chunks), 0.0);

  parallel_chunks(n_chunks, [&](int chunk) {
    const int first = chunk * kChunkSize;
    const int count = std::min(kChunkSize, n - first);
    ChunkCache cache;
    forward_chunk(m, w_comb, batch, first, count, masks, &cache, result.probs);
    chunk_grads[static_cast<std::size_t>(chunk)] = PuffModel::zeros(m.config);
    backward_chunk(m, w_comb, cache, labels, first, count, masks, result.probs,
                   inv_batch, chunk_grads[static_cast<std::size_t>(chunk)]);
    double loss = 0.0;
    for (int s = 0; s < count; ++s) {
      loss += loss_bce(result.probs(first + s),
                       labels[static_cast<std::size_t>(first + s)]);
    }
    chunk_loss[static_cast<std::size_t>(chunk)] = loss;
  });

  // Ordered reduction keeps results independent of thread scheduling.
  double total_loss = 0.0;
  auto dst = tensor_refs(result.grads);
  for (int chunk = 0; chunk < n_chunks; ++chunk) {
    total_loss += chunk_loss[static_cast<std::size_t>(chunk)];
    auto src = tensor_refs(chunk_grads[static_cast<std::size_t>(chunk)]);
    for (std::size_t t = 0; t < dst.size(); ++t) {
      Eigen::Map<Eigen::VectorXd>(dst[t].data, dst[t].size) +=
          Eigen::Map<const Eigen::VectorXd>(src[t].data, src[t].size);
    }
  }
  result.mean_loss = total_loss / n;
  return result;
}

BatchView make_view(const Batch& batch) {
  BatchView view;
  view.reserve(batch.size());
  for (const auto& b : batch) view.push_back(&b);
  return view;
}

}  // namespace

void NetConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) {
      throw std::invalid_argument(std::string("NetConfig: ") + what +
                                  " must be >= 1");
    }
  };
  positive(input_len, "input_len");
  positive(input_channels, "input_channels");
  positive(conv1_filters, "conv1_filters");
  positive(conv1_kernel, "conv1_kernel");
  positive(conv2_filters, "conv2_filters");
  positive(conv2_kernel, "conv2_kernel");
  positive(conv3_filters, "conv3_filters");
  positive(conv3_kernel, "conv3_kernel");
  positive(lstm_cells, "lstm_cells");
  if (conv1_len() < 2 || conv2_len() < 2 || lstm_steps() < 1) {
    throw std::invalid_argument("NetConfig: input too short for the layers");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("NetConfig: dropout_rate outside [0,1)");
  }
}

std::string NetConfig::manifest() const {
  char buf[256];
  std::snprintf(
      buf, sizeof(buf),
      "In(%dx%d)-Conv(%dx%d)-Pool(2)-Conv(%dx%d)-Pool(2)-Conv(%dx%d)-"
      "LSTM(%d,%s)-Drop(%g)-FC(1)",
      input_len, input_channels, conv1_filters, conv1_kernel, conv2_filters,
      conv2_kernel, conv3_filters, conv3_kernel, lstm_cells,
      lstm_inner_activation == InnerActivation::Tanh ? "tanh" : "sigmoid",
      dropout_rate);
  return buf;
}

NetConfig NetConfig::from_manifest(const std::string& manifest) {
  NetConfig nc;
  const char* fmt =
      "In(%dx%d)-Conv(%dx%d)-Pool(2)-Conv(%dx%d)-Pool(2)-Conv(%dx%d)-"
      "LSTM(%d,%15[a-z])-Drop(%lf)-FC(%d)";
  char act[16] = {0};
  int fc = 0;
  const int n = std::sscanf(
      manifest.c_str(), fmt, &nc.input_len, &nc.input_channels,
      &nc.conv1_filters, &nc.conv1_kernel, &nc.conv2_filters, &nc.conv2_kernel,
      &nc.conv3_filters, &nc.conv3_kernel, &nc.lstm_cells, act,
      &nc.dropout_rate, &fc);
  if (n != 12 || fc != 1) {
    throw std::runtime_error("load_model: unrecognized architecture manifest");
  }
  if (std::strcmp(act, "tanh") == 0) {
    nc.lstm_inner_activation = InnerActivation::Tanh;
  } else if (std::strcmp(act, "sigmoid") == 0) {
    nc.lstm_inner_activation = InnerActivation::Sigmoid;
  } else {
    throw std::runtime_error("load_model: unknown LSTM activation");
  }
  nc.validate();
  return nc;
}

PuffModel PuffModel::zeros(const NetConfig& config) {
  config.validate();
  PuffModel m;
  m.config = config;
  m.conv1_w = Eigen::MatrixXd::Zero(
      config.conv1_kernel * config.input_channels, config.conv1_filters);
  m.conv1_b = Eigen::VectorXd::Zero(config.conv1_filters);
  m.conv2_w = Eigen::MatrixXd::Zero(
      config.conv2_kernel * config.conv1_filters, config.conv2_filters);
  m.conv2_b = Eigen::VectorXd::Zero(config.conv2_filters);
  m.conv3_w = Eigen::MatrixXd::Zero(
      config.conv3_kernel * config.conv2_filters, config.conv3_filters);
  m.conv3_b = Eigen::VectorXd::Zero(config.conv3_filters);
  m.lstm_wx = Eigen::MatrixXd::Zero(config.conv3_filters,
                                    4 * config.lstm_cells);
  m.lstm_wh = Eigen::MatrixXd::Zero(config.lstm_cells, 4 * config.lstm_cells);
  m.lstm_b = Eigen::VectorXd::Zero(4 * config.lstm_cells);
  m.fc_w = Eigen::VectorXd::Zero(config.lstm_cells);
  m.fc_b = 0.0;
  return m;
}

PuffModel PuffModel::glorot(const NetConfig& config, Rng& rng) {
  PuffModel m = zeros(config);
  auto fill = [&rng](Eigen::MatrixXd& w) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = rng.uniform(-limit, limit);
    }
  };
  fill(m.conv1_w);
  fill(m.conv2_w);
  fill(m.conv3_w);
  fill(m.lstm_wx);
  fill(m.lstm_wh);
  {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(m.fc_w.size() + 1));
    for (Eigen::Index i = 0; i < m.fc_w.size(); ++i) {
      m.fc_w(i) = rng.uniform(-limit, limit);
    }
  }
  // Forget-gate bias starts at +1 so early cell state is preserved.
  m.lstm_b.segment(config.lstm_cells, config.lstm_cells).setOnes();
  return m;
}

bool PuffModel::all_finite() const {
  for (const auto& t : tensor_refs(*this)) {
    for (std::ptrdiff_t i = 0; i < t.size; ++i) {
      if (!std::isfinite(t.data[i])) return false;
    }
  }
  return true;
}

namespace {

template <typename Ref, typename Model>
std::vector<Ref> enumerate_tensors(Model& m) {
  auto mat = [](const char* name, auto& w) {
    return Ref{name,
               {static_cast<int>(w.rows()), static_cast<int>(w.cols())},
               w.data(),
               static_cast<std::ptrdiff_t>(w.size())};
  };
  auto vec = [](const char* name, auto& v) {
    return Ref{name,
               {static_cast<int>(v.size())},
               v.data(),
               static_cast<std::ptrdiff_t>(v.size())};
  };
  return {
      mat("conv1_w", m.conv1_w), vec("conv1_b", m.conv1_b),
      mat("conv2_w", m.conv2_w), vec("conv2_b", m.conv2_b),
      mat("conv3_w", m.conv3_w), vec("conv3_b", m.conv3_b),
      mat("lstm_wx", m.lstm_wx), mat("lstm_wh", m.lstm_wh),
      vec("lstm_b", m.lstm_b),   vec("fc_w", m.fc_w),
      Ref{"fc_b", {1}, &m.fc_b, 1},
  };
}

}  // namespace

std::vector<TensorRef> tensor_refs(PuffModel& m) {
  return enumerate_tensors<TensorRef>(m);
}

std::vector<ConstTensorRef> tensor_refs(const PuffModel& m) {
  return enumerate_tensors<ConstTensorRef>(m);
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) {
    throw std::invalid_argument("TrainConfig: learning_rate <= 0");
  }
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs < 1");
  if (!(rmsprop_decay > 0.0 && rmsprop_decay < 1.0)) {
    throw std::invalid_argument("TrainConfig: rmsprop_decay outside (0,1)");
  }
  if (rmsprop_epsilon <= 0.0) {
    throw std::invalid_argument("TrainConfig: rmsprop_epsilon <= 0");
  }
}

Eigen::VectorXd forward(const PuffModel& model, const Batch& batch,
                        bool training, Rng* rng) {
  const BatchView view = make_view(batch);
  if (!training || model.config.dropout_rate <= 0.0) {
    return forward_view(model, view, nullptr);
  }
  if (rng == nullptr) {
    throw std::invalid_argument("forward: training mode requires an rng");
  }
  const double keep = 1.0 - model.config.dropout_rate;
  Eigen::MatrixXd masks(batch.size(), model.config.lstm_cells);
  for (Eigen::Index i = 0; i < masks.rows(); ++i) {
    for (Eigen::Index j = 0; j < masks.cols(); ++j) {
      masks(i, j) = rng->uniform01() < keep ? 1.0 / keep : 0.0;
    }
  }
  return forward_view(model, view, &masks);
}

double loss_bce(double prob, int label) {
  const double p = std::clamp(prob, 1e-7, 1.0 - 1e-7);
  return label > 0 ? -std::log(p) : -std::log(1.0 - p);
}

BackwardResult forward_backward(const PuffModel& model, const Batch& batch,
                                const std::vector<int>& labels,
                                const Eigen::MatrixXd* dropout_masks) {
  return forward_backward_view(model, make_view(batch), labels, dropout_masks);
}

void rmsprop_step(PuffModel& params, const PuffModel& grads, PuffModel& state,
                  const TrainConfig& config) {
  auto p = tensor_refs(params);
  auto g = tensor_refs(grads);
  auto s = tensor_refs(state);
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (p[t].size != g[t].size || p[t].size != s[t].size) {
      throw std::invalid_argument("rmsprop_step: shape mismatch");
    }
    for (std::ptrdiff_t i = 0; i < p[t].size; ++i) {
      const double grad = g[t].data[i];
      double& acc = s[t].data[i];
      acc = config.rmsprop_decay * acc +
            (1.0 - config.rmsprop_decay) * grad * grad;
      p[t].data[i] -=
          config.learning_rate * grad /
          (std::sqrt(acc) + config.rmsprop_epsilon);
    }
  }
}

TrainResult train(const std::vector<Window>& windows, const TrainConfig& tc,
                  const NetConfig& nc) {
  nc.validate();
  tc.validate();
  bool has_pos = false, has_neg = false;
  for (const auto& w : windows) {
    if (w.label == kLabelPositive) has_pos = true;
    if (w.label == kLabelNegative) has_neg = true;
  }
  if (!has_pos || !has_neg) {
    throw std::invalid_argument("train: need at least one window per class");
  }

  Rng init_rng(derive_seed(tc.seed, "net-init"));
  TrainResult result{PuffModel::glorot(nc, init_rng), {}};
  PuffModel state = PuffModel::zeros(nc);

  const int n = static_cast<int>(windows.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  const double keep = 1.0 - nc.dropout_rate;
  BatchView batch_view;
  std::vector<int> batch_labels;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng rng(derive_seed(tc.seed, "epoch", static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i) {
      std::swap(order[static_cast<std::size_t>(i)],
                order[rng.uniform_index(static_cast<std::uint64_t>(i) + 1)]);
    }

    double loss_sum = 0.0;
    for (int start = 0; start < n; start += tc.batch_size) {
      const int b = std::min(tc.batch_size, n - start);
      batch_view.clear();
      batch_labels.clear();
      for (int s = 0; s < b; ++s) {
        const Window& w =
            windows[static_cast<std::size_t>(order[start + s])];
        batch_view.push_back(&w.data);
        batch_labels.push_back(w.label);
      }
      Eigen::MatrixXd masks;
      const Eigen::MatrixXd* mask_ptr = nullptr;
      if (nc.dropout_rate > 0.0) {
        masks.resize(b, nc.lstm_cells);
        for (int i = 0; i < b; ++i) {
          for (int j = 0; j < nc.lstm_cells; ++j) {
            masks(i, j) = rng.uniform01() < keep ? 1.0 / keep : 0.0;
          }
        }
        mask_ptr = &masks;
      }
      BackwardResult fb =
          forward_backward_view(result.model, batch_view, batch_labels,
                                mask_ptr);
      rmsprop_step(result.model, fb.grads, state, tc);
      loss_sum += fb.mean_loss * b;
    }
    result.epoch_losses.push_back(loss_sum / n);
  }
  return result;
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) {
    throw std::runtime_error("load_model: truncated file");
  }
  return static_cast<std::uint32_t>(buf[0]) |
         (static_cast<std::uint32_t>(buf[1]) << 8) |
         (static_cast<std::uint32_t>(buf[2]) << 16) |
         (static_cast<std::uint32_t>(buf[3]) << 24);
}

void write_f32(std::ofstream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

float read_f32(std::ifstream& in) {
  const std::uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

constexpr char kMagic[4] = {'P', 'U', 'F', 'F'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void save_model(const PuffModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out.write(kMagic, 4);
  write_u32(out, kFormatVersion);
  const std::string manifest = model.config.manifest();
  write_u32(out, static_cast<std::uint32_t>(manifest.size()));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));

  const auto refs = tensor_refs(model);
  write_u32(out, static_cast<std::uint32_t>(refs.size()));
  for (const auto& t : refs) {
    write_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (int d : t.dims) write_u32(out, static_cast<std::uint32_t>(d));
    if (t.dims.size() == 2) {
      // Row-major on disk.
      const int rows = t.dims[0], cols = t.dims[1];
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          write_f32(out, static_cast<float>(
                             t.data[static_cast<std::ptrdiff_t>(c) * rows + r]));
        }
      }
    } else {
      for (std::ptrdiff_t i = 0; i < t.size; ++i) {
        write_f32(out, static_cast<float>(t.data[i]));
      }
    }
  }
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

PuffModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("load_model: bad magic");
  }
  const std::uint32_t version = read_u32(in);
  if (version != kFormatVersion) {
    throw std::runtime_error("load_model: unsupported format version");
  }
  const std::uint32_t manifest_len = read_u32(in);
  if (manifest_len > 4096) {
    throw std::runtime_error("load_model: implausible manifest length");
  }
  std::string manifest(manifest_len, '\0');
  if (!in.read(manifest.data(), manifest_len)) {
    throw std::runtime_error("load_model: truncated file");
  }

  PuffModel model = PuffModel::zeros(NetConfig::from_manifest(manifest));
  auto refs = tensor_refs(model);
  const std::uint32_t n_tensors = read_u32(in);
  if (n_tensors != refs.size()) {
    throw std::runtime_error("load_model: unexpected tensor count");
  }
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::uint32_t name_len = read_u32(in);
    if (name_len > 256) {
      throw std::runtime_error("load_model: implausible tensor name");
    }
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw std::runtime_error("load_model: truncated file");
    }
    auto it = std::find_if(refs.begin(), refs.end(),
                           [&](const TensorRef& r) { return r.name == name; });
    if (it == refs.end()) {
      throw std::runtime_error("load_model: unknown tensor " + name);
    }
    const std::uint32_t rank = read_u32(in);
    if (rank != it->dims.size()) {
      throw std::runtime_error("load_model: rank mismatch for " + name);
    }
    for (std::uint32_t d = 0; d < rank; ++d) {
      if (read_u32(in) != static_cast<std::uint32_t>(it->dims[d])) {
        throw std::runtime_error(
            "load_model: shape disagrees with manifest for " + name);
      }
    }
    if (rank == 2) {
      const int rows = it->dims[0], cols = it->dims[1];
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          it->data[static_cast<std::ptrdiff_t>(c) * rows + r] =
              static_cast<double>(read_f32(in));
        }
      }
    } else {
      for (std::ptrdiff_t k = 0; k < it->size; ++k) {
        it->data[k] = static_cast<double>(read_f32(in));
      }
    }
  }
  return model;
}

PuffModel quantize_to_f32(const PuffModel& model) {
  PuffModel out = model;
  for (auto& t : tensor_refs(out)) {
    for (std::ptrdiff_t i = 0; i < t.size; ++i) {
      t.data[i] = static_cast<double>(static_cast<float>(t.data[i]));
    }
  }
  return out;
}

}  // namespace puffline
