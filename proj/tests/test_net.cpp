#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "puffline/net.hpp"
#include "puffline/rng.hpp"

using namespace puffline;

namespace {

NetConfig mini_config(int input_len) {
  NetConfig nc;
  nc.input_len = input_len;
  nc.input_channels = 3;
  nc.conv1_filters = 2;
  nc.conv1_kernel = 5;
  nc.conv2_filters = 4;
  nc.conv2_kernel = 3;
  nc.conv3_filters = 8;
  nc.conv3_kernel = 3;
  nc.lstm_cells = 8;
  return nc;
}

Batch random_batch(const NetConfig& nc, int n, Rng& rng) {
  Batch batch;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd x(nc.input_len, nc.input_channels);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = rng.normal();
    batch.push_back(std::move(x));
  }
  return batch;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("layer length trace for the default architecture") {
  const NetConfig nc;
  CHECK(nc.input_len == 225);
  CHECK(nc.conv1_len() == 221);
  CHECK(nc.pool1_len() == 110);
  CHECK(nc.conv2_len() == 108);
  CHECK(nc.pool2_len() == 54);
  CHECK(nc.lstm_steps() == 52);
}

TEST_CASE("manifest round trip") {
  NetConfig nc = mini_config(34);
  nc.lstm_inner_activation = NetConfig::InnerActivation::Sigmoid;
  const NetConfig back = NetConfig::from_manifest(nc.manifest());
  CHECK(back.input_len == nc.input_len);
  CHECK(back.input_channels == nc.input_channels);
  CHECK(back.conv1_filters == nc.conv1_filters);
  CHECK(back.conv3_kernel == nc.conv3_kernel);
  CHECK(back.lstm_cells == nc.lstm_cells);
  CHECK(back.dropout_rate == nc.dropout_rate);
  CHECK(back.lstm_inner_activation == nc.lstm_inner_activation);
}

TEST_CASE("all-zero model outputs exactly one half") {
  const NetConfig nc = mini_config(20);
  const PuffModel model = PuffModel::zeros(nc);
  Rng rng(1);
  const Eigen::VectorXd probs = forward(model, random_batch(nc, 3, rng));
  for (Eigen::Index i = 0; i < probs.size(); ++i) CHECK(probs(i) == 0.5);
}

TEST_CASE("identical batch rows give identical outputs") {
  const NetConfig nc = mini_config(34);
  Rng rng(2);
  PuffModel model = PuffModel::glorot(nc, rng);
  Batch batch = random_batch(nc, 12, rng);
  batch[10] = batch[2];
  const Eigen::VectorXd probs = forward(model, batch);
  CHECK(probs(10) == probs(2));
}

TEST_CASE("inference is deterministic and dropout-free") {
  NetConfig nc;  // full architecture
  Rng rng(3);
  const PuffModel model = PuffModel::glorot(nc, rng);
  const Batch batch = random_batch(nc, 5, rng);
  const Eigen::VectorXd a = forward(model, batch, false, nullptr);
  const Eigen::VectorXd b = forward(model, batch, false, nullptr);
  REQUIRE(a.size() == b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) CHECK(a(i) == b(i));
}

TEST_CASE("outputs stay strictly inside (0,1) for extreme weights") {
  const NetConfig nc = mini_config(20);
  PuffModel model = PuffModel::zeros(nc);
  model.fc_b = 1e5;
  Rng rng(4);
  Eigen::VectorXd probs = forward(model, random_batch(nc, 2, rng));
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    CHECK(probs(i) > 0.0);
    CHECK(probs(i) < 1.0);
  }
  model.fc_b = -1e5;
  probs = forward(model, random_batch(nc, 2, rng));
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    CHECK(probs(i) > 0.0);
    CHECK(probs(i) < 1.0);
  }
}

TEST_CASE("loss_bce matches the direct formula") {
  CHECK(loss_bce(0.5, +1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(loss_bce(1.0 - 1e-9, +1) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(loss_bce(1e-9, -1) == doctest::Approx(0.0).epsilon(1e-6));
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const double p = rng.uniform01();
    const int label = rng.uniform01() < 0.5 ? +1 : -1;
    const double clipped = std::clamp(p, 1e-7, 1.0 - 1e-7);
    const double y = label > 0 ? 1.0 : 0.0;
    const double expected =
        -(y * std::log(clipped) + (1.0 - y) * std::log(1.0 - clipped));
    CHECK(loss_bce(p, label) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  const std::vector<int> labels{+1, -1, +1};
  for (const int input_len : {20, 34}) {
    for (const auto act : {NetConfig::InnerActivation::Tanh,
                           NetConfig::InnerActivation::Sigmoid}) {
      NetConfig nc = mini_config(input_len);
      nc.lstm_inner_activation = act;
      for (std::uint64_t draw = 0; draw < 2; ++draw) {
        Rng rng(derive_seed(100, "gradcheck", static_cast<std::uint64_t>(input_len), draw));
        PuffModel model = PuffModel::glorot(nc, rng);
        const Batch batch = random_batch(nc, 3, rng);

        const BackwardResult result =
            forward_backward(model, batch, labels, nullptr);
        CHECK(result.mean_loss ==
              doctest::Approx(oracle::mean_bce_reference(result.probs, labels))
                  .epsilon(1e-12));

        auto loss = [&]() {
          return oracle::mean_bce_reference(
              forward(model, batch, false, nullptr), labels);
        };
        const double err =
            oracle::max_grad_rel_error(model, result.grads, loss, 1e-4);
        CHECK(err < 1e-4);
      }
    }
  }
}

TEST_CASE("FC gradient vanishes when predictions match labels") {
  const NetConfig nc = mini_config(20);
  Rng rng(8);
  PuffModel model = PuffModel::glorot(nc, rng);
  model.fc_b = 40.0;  // saturates every probability at the positive label
  const Batch batch = random_batch(nc, 3, rng);
  const BackwardResult result =
      forward_backward(model, batch, {+1, +1, +1}, nullptr);
  CHECK(result.grads.fc_w.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(std::abs(result.grads.fc_b) < 1e-9);
}

TEST_CASE("dropout-masked units receive zero gradient") {
  const NetConfig nc = mini_config(34);
  Rng rng(9);
  PuffModel model = PuffModel::glorot(nc, rng);
  const Batch batch = random_batch(nc, 2, rng);
  Eigen::MatrixXd masks(2, nc.lstm_cells);
  masks.setConstant(2.0);  // scaled keep at rate 0.5
  masks(0, 1) = 0.0;
  masks(1, 1) = 0.0;
  masks(0, 5) = 0.0;
  masks(1, 5) = 0.0;
  const BackwardResult result =
      forward_backward(model, batch, {+1, -1}, &masks);
  CHECK(result.grads.fc_w(1) == 0.0);
  CHECK(result.grads.fc_w(5) == 0.0);
  CHECK(result.grads.fc_w(0) != 0.0);
}

TEST_CASE("inverted dropout preserves the activation expectation") {
  NetConfig nc = mini_config(34);
  PuffModel model = PuffModel::zeros(nc);
  const int h = nc.lstm_cells;
  // Push the gates so the final hidden state is a known nonzero constant.
  model.lstm_b.segment(0, h).setConstant(5.0);        // input gate ~ 1
  model.lstm_b.segment(h, h).setConstant(-5.0);       // forget gate ~ 0
  model.lstm_b.segment(2 * h, h).setConstant(5.0);    // candidate ~ 1
  model.lstm_b.segment(3 * h, h).setConstant(5.0);    // output gate ~ 1
  model.fc_w(0) = 1.0;

  Rng data_rng(10);
  const Batch batch = random_batch(nc, 100, data_rng);
  const Eigen::VectorXd clean = forward(model, batch, false, nullptr);
  const double h0 = std::log(clean(0) / (1.0 - clean(0)));
  REQUIRE(h0 > 0.1);

  Rng drop_rng(11);
  double sum = 0.0;
  long n = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const Eigen::VectorXd probs = forward(model, batch, true, &drop_rng);
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
      sum += std::log(probs(i) / (1.0 - probs(i)));
      ++n;
    }
  }
  const double mean_logit = sum / static_cast<double>(n);
  CHECK(mean_logit / h0 == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("rmsprop closed-form first step and zero-gradient fixed point") {
  const NetConfig nc = mini_config(20);
  TrainConfig tc;
  PuffModel params = PuffModel::zeros(nc);
  PuffModel state = PuffModel::zeros(nc);
  PuffModel grads = PuffModel::zeros(nc);
  for (auto& t : tensor_refs(grads)) {
    for (std::ptrdiff_t i = 0; i < t.size; ++i) t.data[i] = 1.0;
  }

  rmsprop_step(params, grads, state, tc);
  const double expected = 1e-3 / (std::sqrt(0.1) + 1e-8);
  for (const auto& t : tensor_refs(params)) {
    for (std::ptrdiff_t i = 0; i < t.size; ++i) {
      CHECK(t.data[i] == doctest::Approx(-expected).epsilon(1e-12));
    }
  }
  for (const auto& t : tensor_refs(state)) {
    for (std::ptrdiff_t i = 0; i < t.size; ++i) {
      CHECK(t.data[i] == doctest::Approx(0.1).epsilon(1e-12));
    }
  }

  const PuffModel before = params;
  PuffModel zero_grads = PuffModel::zeros(nc);
  rmsprop_step(params, zero_grads, state, tc);
  // s decays but g = 0 leaves parameters untouched.
  CHECK(params.conv1_w == before.conv1_w);
  CHECK(params.fc_b == before.fc_b);
}

TEST_CASE("rmsprop update magnitude converges to the learning rate") {
  const NetConfig nc = mini_config(20);
  TrainConfig tc;
  PuffModel params = PuffModel::zeros(nc);
  PuffModel state = PuffModel::zeros(nc);
  PuffModel grads = PuffModel::zeros(nc);
  grads.fc_b = 1.0;
  double prev = params.fc_b;
  double step = 0.0;
  for (int i = 0; i < 400; ++i) {
    rmsprop_step(params, grads, state, tc);
    step = prev - params.fc_b;
    prev = params.fc_b;
  }
  CHECK(step == doctest::Approx(tc.learning_rate).epsilon(1e-6));
}

namespace {

std::vector<Window> toy_training_set(int n_per_class, std::uint64_t seed) {
  std::vector<Window> windows;
  Rng rng(seed);
  for (int i = 0; i < 2 * n_per_class; ++i) {
    Window w;
    w.data.resize(225, 6);
    const bool positive = i % 2 == 0;
    for (Eigen::Index r = 0; r < 225; ++r) {
      for (Eigen::Index c = 0; c < 6; ++c) {
        double v = 0.2 * rng.normal();
        if (positive) {
          v += 5.0 * std::sin(2.0 * M_PI * 3.0 * static_cast<double>(r) / 50.0 +
                              static_cast<double>(c));
        }
        w.data(r, c) = v;
      }
    }
    w.label = positive ? kLabelPositive : kLabelNegative;
    w.end_epoch_s = static_cast<double>(i);
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace

TEST_CASE("training separates an easy synthetic set") {
  const auto windows = toy_training_set(24, 42);
  TrainConfig tc;
  tc.seed = 7;
  const TrainResult result = train(windows, tc);
  REQUIRE(result.epoch_losses.size() == 10);
  CHECK(result.epoch_losses.back() < result.epoch_losses.front());

  Batch batch;
  std::vector<int> labels;
  for (const auto& w : windows) {
    batch.push_back(w.data);
    labels.push_back(w.label);
  }
  const Eigen::VectorXd probs = forward(result.model, batch);
  long correct = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const int pred = probs(i) >= 0.5 ? +1 : -1;
    if (pred == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  const double accuracy =
      static_cast<double>(correct) / static_cast<double>(probs.size());
  CHECK(accuracy >= 0.95);
  CHECK(result.model.all_finite());
}

TEST_CASE("training is bit-deterministic under a fixed seed") {
  NetConfig nc = mini_config(34);
  const auto full = toy_training_set(16, 5);
  // Shrink the windows to the mini architecture.
  std::vector<Window> windows;
  for (const auto& w : full) {
    Window m;
    m.data = w.data.topLeftCorner(34, 3);
    m.label = w.label;
    windows.push_back(std::move(m));
  }
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 99;
  const TrainResult a = train(windows, tc, nc);
  const TrainResult b = train(windows, tc, nc);
  const auto ta = tensor_refs(a.model);
  const auto tb = tensor_refs(b.model);
  for (std::size_t t = 0; t < ta.size(); ++t) {
    for (std::ptrdiff_t i = 0; i < ta[t].size; ++i) {
      CHECK(ta[t].data[i] == tb[t].data[i]);
    }
  }
  CHECK(a.epoch_losses == b.epoch_losses);
}

TEST_CASE("training rejects a single-class set") {
  auto windows = toy_training_set(4, 3);
  for (auto& w : windows) w.label = kLabelPositive;
  TrainConfig tc;
  CHECK_THROWS_AS(train(windows, tc, mini_config(20)), std::invalid_argument);
}

TEST_CASE("model serialization round trip is byte-exact") {
  const NetConfig nc = mini_config(20);
  Rng rng(12);
  const PuffModel model = PuffModel::glorot(nc, rng);
  const std::string p1 = temp_path("puffline_model_a.puff");
  const std::string p2 = temp_path("puffline_model_b.puff");
  save_model(model, p1);
  const PuffModel loaded = load_model(p1);
  save_model(loaded, p2);
  CHECK(read_file(p1) == read_file(p2));

  // Loaded parameters equal the f32-quantized originals.
  const PuffModel quant = quantize_to_f32(model);
  const auto tq = tensor_refs(quant);
  const auto tl = tensor_refs(loaded);
  for (std::size_t t = 0; t < tq.size(); ++t) {
    for (std::ptrdiff_t i = 0; i < tq[t].size; ++i) {
      CHECK(tl[t].data[i] == tq[t].data[i]);
    }
  }
}

TEST_CASE("zero model round trip still outputs one half") {
  const NetConfig nc = mini_config(20);
  const std::string path = temp_path("puffline_model_zero.puff");
  save_model(PuffModel::zeros(nc), path);
  const PuffModel loaded = load_model(path);
  Rng rng(14);
  const Eigen::VectorXd probs = forward(loaded, random_batch(nc, 2, rng));
  CHECK(probs(0) == 0.5);
  CHECK(probs(1) == 0.5);
}

TEST_CASE("load_model rejects corrupted input") {
  const NetConfig nc = mini_config(20);
  Rng rng(15);
  const std::string path = temp_path("puffline_model_c.puff");
  save_model(PuffModel::glorot(nc, rng), path);
  const std::string good = read_file(path);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    const std::string bad_path = temp_path("puffline_model_badmagic.puff");
    std::ofstream(bad_path, std::ios::binary) << bad;
    CHECK_THROWS_AS(load_model(bad_path), std::runtime_error);
  }
  SUBCASE("truncated file") {
    const std::string bad_path = temp_path("puffline_model_trunc.puff");
    std::ofstream(bad_path, std::ios::binary)
        << good.substr(0, good.size() / 2);
    CHECK_THROWS_AS(load_model(bad_path), std::runtime_error);
  }
  SUBCASE("shape disagrees with manifest") {
    std::string bad = good;
    const auto pos = bad.find("conv1_w");
    REQUIRE(pos != std::string::npos);
    // rank (4 bytes) follows the name; dims[0] follows the rank.
    const std::size_t dim_pos = pos + 7 + 4;
    bad[dim_pos] = static_cast<char>(bad[dim_pos] + 1);
    const std::string bad_path = temp_path("puffline_model_badshape.puff");
    std::ofstream(bad_path, std::ios::binary) << bad;
    CHECK_THROWS_AS(load_model(bad_path), std::runtime_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_model(temp_path("puffline_does_not_exist.puff")),
                    std::runtime_error);
  }
}
