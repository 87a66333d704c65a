#include <catch_amalgamated.hpp>

#include <cmath>

#include "asd/error.hpp"
#include "asd/model.hpp"
#include "asd/rng.hpp"
#include "gradcheck.hpp"

using namespace asd;
using namespace asd::model;
using Catch::Approx;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Rows drawn around a low-dimensional structure so the autoencoder has something to learn.
Matrix structured_rows(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  const Matrix basis = random_matrix(3, cols, seed);
  const Matrix codes = random_matrix(rows, 3, seed + 1);
  return codes * basis + random_matrix(rows, cols, seed + 2, 0.1);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an asd::Error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("default topology matches the 640-128x3-8 autoencoder") {
  const auto topo = default_topology();
  REQUIRE(topo.size() == 8);
  const int dims[] = {640, 128, 128, 128, 8, 128, 128, 128, 640};
  for (std::size_t i = 0; i < topo.size(); ++i) {
    CHECK(topo[i].in_dim == dims[i]);
    CHECK(topo[i].out_dim == dims[i + 1]);
    const bool last = i + 1 == topo.size();
    CHECK(topo[i].has_bn == !last);
    CHECK(topo[i].activation == (last ? Activation::None : Activation::Relu));
  }
}

TEST_CASE("init: shapes, Glorot bounds, determinism") {
  const auto a = init(13711);
  const auto b = init(13711);
  const auto c = init(13591);
  CHECK(a == b);
  CHECK(!(a == c));
  CHECK(a.layers[0].weight.rows() == 640);
  CHECK(a.layers[0].weight.cols() == 128);
  CHECK(a.layers[3].weight.cols() == 8);
  for (const auto& l : a.layers) {
    const double bound = std::sqrt(6.0 / (l.spec.in_dim + l.spec.out_dim));
    CHECK(l.weight.cwiseAbs().maxCoeff() <= bound);
    CHECK(l.weight.cwiseAbs().maxCoeff() > 0.9 * bound);
    CHECK(l.bias.isZero(0.0));
    if (l.spec.has_bn) {
      CHECK((l.gamma.array() == 1.0).all());
      CHECK(l.beta.isZero(0.0));
      CHECK(l.running_mean.isZero(0.0));
      CHECK((l.running_var.array() == 1.0).all());
    } else {
      CHECK(l.gamma.size() == 0);
    }
  }
  CHECK(a.step == 0);
  CHECK(a.seed == 13711);
}

TEST_CASE("forward: eval is pure, train updates running statistics") {
  auto state = init(1);
  const Matrix x = random_matrix(16, 640, 2);
  const auto before = state;
  const Matrix e1 = forward(state, x, Mode::Eval);
  const Matrix e2 = forward(state, x, Mode::Eval);
  CHECK(e1 == e2);
  CHECK(state == before);
  CHECK(reconstruct(state, x) == e1);

  forward(state, x, Mode::Train);
  CHECK(!(state == before));
  // Running stats move 10% of the way toward the batch statistics.
  const Matrix z = x * before.layers[0].weight;
  const RowVector mu = z.colwise().mean();
  const RowVector var = (z.rowwise() - mu).array().square().colwise().mean();
  CHECK((state.layers[0].running_mean - 0.1 * mu).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((state.layers[0].running_var - (0.9 * RowVector::Ones(128) + 0.1 * var)).cwiseAbs().maxCoeff() < 1e-12);
  for (const auto& l : state.layers)
    if (l.spec.has_bn) CHECK(l.running_var.minCoeff() > 0.0);

  CHECK(code_of([&] { forward(state, x.topRows(1), Mode::Train); }) == ErrorCode::Precondition);
  CHECK_NOTHROW(forward(state, x.topRows(1), Mode::Eval));
}

TEST_CASE("untrained network on standardized input has MSE near 1") {
  const auto state = init(13711);
  const Matrix x = random_matrix(256, 640, 77);
  const double loss = mse(x, reconstruct(state, x));
  CHECK(loss > 0.5);
  CHECK(loss < 1.5);
}

TEST_CASE("non-finite activations are reported") {
  auto state = init(5);
  Matrix x = random_matrix(4, 640, 1);
  x(2, 3) = std::nan("");
  CHECK(code_of([&] { forward(state, x, Mode::Eval); }) == ErrorCode::NonFiniteActivation);
  CHECK(code_of([&] { loss_and_gradients(state, x); }) == ErrorCode::NonFiniteActivation);
}

TEST_CASE("loss_and_gradients: exact reconstruction gives zero loss and gradients") {
  const int widths[] = {4, 4};
  auto state = init(1, chain_topology(widths));
  state.layers[0].weight = Matrix::Identity(4, 4);
  const auto r = loss_and_gradients(state, random_matrix(6, 4, 3));
  CHECK(r.mse == 0.0);
  CHECK(r.grads[0].weight.isZero(0.0));
  CHECK(r.grads[0].bias.isZero(0.0));
}

TEST_CASE("loss_and_gradients: doubling the residual quadruples the loss") {
  const int widths[] = {5, 5};
  auto state = init(1, chain_topology(widths));
  state.layers[0].weight.setZero();
  const Matrix x = random_matrix(7, 5, 8);
  const double l1 = loss_and_gradients(state, x).mse;
  const double l2 = loss_and_gradients(state, 2.0 * x).mse;
  CHECK(l2 == 4.0 * l1);
  CHECK(l1 == Approx(x.squaredNorm() / 35.0).epsilon(1e-14));
}

TEST_CASE("loss_and_gradients does not mutate the state and its stats match train mode") {
  auto state = init(3);
  const Matrix x = random_matrix(8, 640, 4);
  const auto before = state;
  const auto r = loss_and_gradients(state, x);
  CHECK(state == before);
  apply_batch_stats(state, r.stats);
  auto via_forward = before;
  forward(via_forward, x, Mode::Train);
  for (std::size_t i = 0; i < state.layers.size(); ++i) {
    CHECK(state.layers[i].running_mean == via_forward.layers[i].running_mean);
    CHECK(state.layers[i].running_var == via_forward.layers[i].running_var);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = asd::testing::tiny_net_check(seed);
    CAPTURE(seed);
    CHECK(g.parameters == 12 * 4 + 4 * 2 + 2 * 4 + 4 * 12 + (4 + 2 + 4 + 12) + 2 * (4 + 2 + 4));
    CHECK(g.max_rel_error < 1e-4);
  }
}

TEST_CASE("adam_step: zero gradients, sign property, determinism") {
  TrainConfig cfg;
  auto state = init(9);
  const auto before = state;
  adam_step(state, zero_gradients(state.layers), cfg);
  CHECK(state.step == 1);
  for (std::size_t i = 0; i < state.layers.size(); ++i) CHECK(state.layers[i].weight == before.layers[i].weight);

  auto fresh = init(9);
  const Matrix x = random_matrix(16, 640, 10);
  const auto grads = loss_and_gradients(fresh, x).grads;
  auto twin = fresh;
  adam_step(fresh, grads, cfg);
  adam_step(twin, grads, cfg);
  CHECK(fresh == twin);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < fresh.layers.size(); ++i)
    for (Eigen::Index j = 0; j < grads[i].weight.size(); ++j) {
      const double g = grads[i].weight.data()[j];
      if (std::abs(g) <= 1e-3) continue;
      const double delta = fresh.layers[i].weight.data()[j] - before.layers[i].weight.data()[j];
      REQUIRE(std::abs(delta + cfg.learning_rate * (g > 0 ? 1.0 : -1.0)) < 1e-6);
      ++checked;
    }
  CHECK(checked > 100);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epochs = 0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidConfig);
  cfg = {};
  cfg.batch_size = 0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidConfig);
  cfg = {};
  cfg.learning_rate = 0.0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("train: loss decreases and runs are reproducible") {
  const Matrix rows = structured_rows(300, 640, 21);
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.batch_size = 64;
  const auto a = train(rows, cfg);
  REQUIRE(a.epoch_loss.size() == 100);
  CHECK(a.epoch_loss.back() < a.epoch_loss.front());
  CHECK(a.state.step == 100 * 5);

  cfg.epochs = 3;
  const auto b = train(rows, cfg);
  const auto c = train(rows, cfg);
  CHECK(b.epoch_loss == c.epoch_loss);
  CHECK(b.state == c.state);
  cfg.seed = 13591;
  CHECK(train(rows, cfg).epoch_loss != b.epoch_loss);
}

TEST_CASE("train: partial final batch kept with two rows, dropped with one") {
  const int widths[] = {6, 3, 6};
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  CHECK(train(structured_rows(9, 6, 1), cfg, chain_topology(widths)).state.step == 2 * 2);
  CHECK(train(structured_rows(10, 6, 1), cfg, chain_topology(widths)).state.step == 2 * 3);
  CHECK(train(structured_rows(3, 6, 1), cfg, chain_topology(widths)).state.step == 2 * 1);
  CHECK(code_of([&] { train(structured_rows(1, 6, 1), cfg, chain_topology(widths)); }) == ErrorCode::InsufficientData);
  CHECK(code_of([&] { train(structured_rows(8, 5, 1), cfg, chain_topology(widths)); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("eval-mode output is independent of batch composition") {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  const auto trained = train(structured_rows(100, 640, 5), cfg).state;
  const Matrix batch = structured_rows(20, 640, 6);
  const Matrix together = reconstruct(trained, batch);
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    const Matrix alone = reconstruct(trained, batch.row(i));
    REQUIRE((alone.row(0) - together.row(i)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("mse is non-negative and zero only for exact reconstruction") {
  const Matrix a = random_matrix(3, 4, 1);
  CHECK(mse(a, a) == 0.0);
  Matrix b = a;
  b(1, 2) += 1e-3;
  CHECK(mse(a, b) > 0.0);
  CHECK(code_of([&] { mse(a, a.leftCols(3)); }) == ErrorCode::ShapeMismatch);
}
