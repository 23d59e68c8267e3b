#include <doctest.h>

#include "advforge/model.hpp"
#include "advforge/train.hpp"

#include <random>

using namespace advforge;

namespace {

Model linear_model(int in, int classes, std::uint64_t seed = 1) {
  return Model("lin", "mlp", {in}, classes, {LayerSpec::make_dense(classes)}, seed);
}

Model mlp_model(std::uint64_t seed = 7) {
  return Model("mlp", "mlp", {1, 8, 8}, 4,
               {LayerSpec::make_flatten(), LayerSpec::make_dense(16), LayerSpec::make_relu(),
                LayerSpec::make_dense(4)},
               seed);
}

Model cnn_model(std::uint64_t seed = 9) {
  return Model("cnn", "cnn", {1, 8, 8}, 4,
               {LayerSpec::make_conv2d(3, 3, 1, 1), LayerSpec::make_relu(),
                LayerSpec::make_maxpool2d(2), LayerSpec::make_flatten(),
                LayerSpec::make_dense(4)},
               seed);
}

Tensor random_image(const std::vector<int>& shape, std::mt19937_64& rng) {
  Tensor t(shape);
  std::uniform_int_distribution<int> pix(0, 255);
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = pix(rng);
  return t;
}

// Central finite difference of the objective along one pixel.
double central_difference(const Model& model, const Tensor& image, const Objective& obj,
                          Eigen::Index coord, double h) {
  auto value = [&](double delta) {
    Tensor x = image;
    x[coord] += delta;
    const Tensor logits = model.forward(x);
    if (obj.kind == Objective::Kind::loss_true_class)
      return softmax_cross_entropy(logits, obj.label);
    return logits[obj.hot_label] - logits[obj.label];
  };
  return (value(h) - value(-h)) / (2.0 * h);
}

void check_gradient_fd(const Model& model, const Objective& obj, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor image = random_image(model.input_shape(), rng);
  Tensor grad = model.input_gradient(image, obj);
  std::uniform_int_distribution<Eigen::Index> coord(0, image.size() - 1);
  int checked = 0;
  for (int i = 0; i < 120 && checked < 100; ++i) {
    const Eigen::Index c = coord(rng);
    const double fd = central_difference(model, image, obj, c, 1e-3);
    const double rel = std::abs(grad[c] - fd) / std::max(1e-8, std::abs(fd));
    CHECK(rel < 1e-4);
    ++checked;
  }
  CHECK(checked >= 100);
}

}  // namespace

TEST_CASE("forward: zero weights give zero logits") {
  Model m = linear_model(3, 2);
  for (Layer& l : m.layers()) {
    l.weight.data().setZero();
    l.bias.data().setZero();
  }
  Tensor img = Tensor::from_vector({10, 20, 30});
  const Tensor logits = m.forward(img);
  CHECK(logits.size() == 2);
  CHECK(logits.data().abs().maxCoeff() == 0.0);
}

TEST_CASE("forward: hand matrix multiply through the 1/255 input scaling") {
  Model m = linear_model(2, 2);
  // W = [[1,0],[0,2]], b = 0, row-major {out, in}
  m.layers()[0].weight.data() << 1, 0, 0, 2;
  m.layers()[0].bias.data().setZero();
  const Tensor logits = m.forward(Tensor::from_vector({3, 5}));
  CHECK(logits[0] == doctest::Approx(3.0 / 255.0).epsilon(1e-12));
  CHECK(logits[1] == doctest::Approx(10.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("forward: deterministic and shape-checked") {
  Model m = cnn_model();
  std::mt19937_64 rng(3);
  Tensor img = random_image({1, 8, 8}, rng);
  const Tensor a = m.forward(img);
  const Tensor b = m.forward(img);
  CHECK((a.data() == b.data()).all());
  CHECK_THROWS_AS(m.forward(Tensor({1, 7, 8})), ShapeError);
}

TEST_CASE("softmax_cross_entropy") {
  SUBCASE("uniform logits") {
    Tensor logits({10});
    CHECK(softmax_cross_entropy(logits, 3) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  }
  SUBCASE("large logits stay finite") {
    const double loss = softmax_cross_entropy(Tensor::from_vector({1000, 0}), 0);
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("direct formula") {
    const double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
    CHECK(softmax_cross_entropy(Tensor::from_vector({1, 2, 3}), 2) ==
          doctest::Approx(-std::log(e3 / (e1 + e2 + e3))).epsilon(1e-12));
  }
  SUBCASE("invalid label") {
    CHECK_THROWS(softmax_cross_entropy(Tensor::from_vector({1, 2}), 2));
  }
}

TEST_CASE("softmax sums to one") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist(0.0, 50.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vec z(8);
    for (int i = 0; i < 8; ++i) z[i] = dist(rng);
    CHECK(softmax(z).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("input_gradient: closed form on the softmax-linear model") {
  Model m = linear_model(5, 3, 21);
  std::mt19937_64 rng(2);
  Tensor img = random_image({5}, rng);

  SUBCASE("loss objective: (1/255) W^T (softmax - onehot)") {
    const Tensor grad = m.input_gradient(img, Objective::loss(1));
    const Eigen::Map<const Mat> W(m.layers()[0].weight.data().data(), 5, 3);
    Vec z = W.transpose() * (img.data() / 255.0).matrix() + m.layers()[0].bias.data().matrix();
    Vec p = softmax(z);
    p[1] -= 1.0;
    Vec expected = W * p / 255.0;
    for (int i = 0; i < 5; ++i) CHECK(grad[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }

  SUBCASE("logit difference: constant row difference") {
    const Tensor grad = m.input_gradient(img, Objective::logit_diff(2, 0));
    const Eigen::Map<const Mat> W(m.layers()[0].weight.data().data(), 5, 3);
    for (int i = 0; i < 5; ++i)
      CHECK(grad[i] == doctest::Approx((W(i, 2) - W(i, 0)) / 255.0).epsilon(1e-12));
    // Constant in x.
    Tensor img2 = random_image({5}, rng);
    const Tensor grad2 = m.input_gradient(img2, Objective::logit_diff(2, 0));
    CHECK((grad.data() == grad2.data()).all());
  }
}

TEST_CASE("input_gradient: central finite differences across architectures and objectives") {
  check_gradient_fd(mlp_model(), Objective::loss(2), 100);
  check_gradient_fd(mlp_model(), Objective::logit_diff(1, 3), 101);
  check_gradient_fd(cnn_model(), Objective::loss(0), 102);
  check_gradient_fd(cnn_model(), Objective::logit_diff(3, 0), 103);
}

TEST_CASE("input_gradient leaves weights untouched") {
  Model m = mlp_model();
  Arr before = m.layers()[1].weight.data();
  std::mt19937_64 rng(5);
  Tensor img = random_image({1, 8, 8}, rng);
  m.input_gradient(img, Objective::loss(0));
  m.forward(img);
  CHECK((m.layers()[1].weight.data() == before).all());
}

TEST_CASE("shape algebra matches runtime shapes") {
  Model m = cnn_model();
  std::vector<int> shape = m.input_shape();
  std::mt19937_64 rng(6);
  Tensor x = random_image(shape, rng);
  Tensor y(x.shape(), x.data() / 255.0);
  for (const Layer& layer : m.layers()) {
    shape = infer_output_shape(layer.spec, shape);
    y = layer_forward(layer, y, nullptr);
    CHECK(y.shape() == shape);
  }
}

namespace {

LabeledDataset blob_dataset(int n_per_class, std::uint64_t seed) {
  // Two linearly separable 1-d blob classes embedded in 4 pixels.
  LabeledDataset ds;
  ds.num_classes = 2;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> jitter(0, 40);
  for (int i = 0; i < n_per_class; ++i) {
    for (int c = 0; c < 2; ++c) {
      Tensor img({4});
      const double base = c == 0 ? 40 : 210;
      for (int p = 0; p < 4; ++p) img[p] = base + jitter(rng);
      ds.images.push_back(std::move(img));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

}  // namespace

TEST_CASE("train: separable blobs reach zero held-out error") {
  LabeledDataset ds = blob_dataset(60, 42);
  Model m("blob", "mlp", {4}, 2, {LayerSpec::make_dense(2)}, 1);
  train(m, ds, {0.5, 0.9, 16, 5, 0, 0.1});
  REQUIRE(m.top1_error().has_value());
  CHECK(*m.top1_error() == 0.0);
}

TEST_CASE("train: zero epochs leave weights bitwise unchanged") {
  LabeledDataset ds = blob_dataset(10, 1);
  Model m("blob", "mlp", {4}, 2, {LayerSpec::make_dense(2)}, 1);
  Arr before = m.layers()[0].weight.data();
  train(m, ds, {0.5, 0.9, 16, 0, 0, 0.1});
  CHECK((m.layers()[0].weight.data() == before).all());
}

TEST_CASE("train: same seed twice gives identical weights") {
  LabeledDataset ds = blob_dataset(40, 3);
  Model a("m", "mlp", {4}, 2, {LayerSpec::make_dense(2)}, 5);
  Model b("m", "mlp", {4}, 2, {LayerSpec::make_dense(2)}, 5);
  const TrainHyper hyper{0.3, 0.9, 8, 4, 17, 0.1};
  train(a, ds, hyper);
  train(b, ds, hyper);
  CHECK((a.layers()[0].weight.data() == b.layers()[0].weight.data()).all());
  CHECK(*a.top1_error() == *b.top1_error());
}

TEST_CASE("train: rejects empty dataset and bad hyperparameters") {
  Model m("m", "mlp", {4}, 2, {LayerSpec::make_dense(2)}, 5);
  CHECK_THROWS(train(m, LabeledDataset{}, {}));
  LabeledDataset ds = blob_dataset(4, 1);
  TrainHyper bad;
  bad.lr = -1;
  CHECK_THROWS(train(m, ds, bad));
}

TEST_CASE("evaluate") {
  LabeledDataset ds;
  ds.num_classes = 10;
  for (int c = 0; c < 10; ++c) {
    Tensor img({4});
    img.data().setConstant(c * 20);
    ds.images.push_back(img);
    ds.labels.push_back(c);
  }
  Model m("m", "mlp", {4}, 10, {LayerSpec::make_dense(10)}, 3);

  SUBCASE("k = num_classes covers everything") { CHECK(evaluate(m, ds, 10) == 0.0); }

  SUBCASE("constant logits: tie-break picks class 0") {
    for (Layer& l : m.layers()) {
      l.weight.data().setZero();
      l.bias.data().setZero();
    }
    CHECK(evaluate(m, ds, 1) == doctest::Approx(0.9));
  }

  SUBCASE("empty dataset rejected") { CHECK_THROWS(evaluate(m, LabeledDataset{}, 1)); }
}

TEST_CASE("evaluate: perfect memorizer on its train set") {
  LabeledDataset ds = blob_dataset(50, 9);
  Model m("m", "mlp", {4}, 2, {LayerSpec::make_dense(8), LayerSpec::make_relu(), LayerSpec::make_dense(2)}, 2);
  train(m, ds, {0.5, 0.9, 16, 10, 0, 0.0});
  CHECK(evaluate(m, ds, 1) == 0.0);
}
