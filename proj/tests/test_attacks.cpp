#include <doctest.h>

#include "advforge/attacks.hpp"

#include <cstdio>
#include <filesystem>
#include <random>

using namespace advforge;

namespace {

Model random_linear(int pixels, int classes, std::uint64_t seed) {
  return Model("lin" + std::to_string(seed), "mlp", {pixels}, classes,
               {LayerSpec::make_dense(classes)}, seed);
}

Tensor random_image(int pixels, std::mt19937_64& rng) {
  Tensor t({pixels});
  std::uniform_int_distribution<int> pix(0, 255);
  for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = pix(rng);
  return t;
}

// Exhaustive scan oracle over all integer steps.
std::optional<long> exhaustive_fgs_alpha(const Model& model, const Tensor& image, int true_label,
                                         const Direction& dir) {
  for (long a = 1; a <= 255; ++a) {
    Tensor adv = quantize_clip(
        Tensor(image.shape(), image.data() + static_cast<double>(a) * dir.vector.data()));
    const Arr z = model.forward(adv).data();
    for (Eigen::Index j = 0; j < z.size(); ++j)
      if (static_cast<int>(j) != true_label && z[j] > z[true_label]) return a;
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("fgs_direction") {
  const Direction d = fgs_direction(Tensor::from_vector({0.3, -0.2, 0.0}));
  CHECK(d.vector[0] == 1.0);
  CHECK(d.vector[1] == -1.0);
  CHECK(d.vector[2] == 0.0);

  CHECK(fgs_direction(Tensor({3})).is_zero());

  // Odd symmetry.
  Tensor g = Tensor::from_vector({1.5, -0.7, 0.01});
  Tensor neg(g.shape(), -g.data());
  CHECK((fgs_direction(g).vector.data() == -fgs_direction(neg).vector.data()).all());
}

TEST_CASE("fgv_direction") {
  const Direction d = fgv_direction(Tensor::from_vector({0.5, -0.25}));
  CHECK(d.vector[0] == 1.0);
  CHECK(d.vector[1] == -0.5);

  // One-hot gradient matches FGS.
  Tensor hot = Tensor::from_vector({0.0, -3.0, 0.0});
  CHECK((fgv_direction(hot).vector.data() == fgs_direction(hot).vector.data()).all());

  // Scale invariance.
  Tensor g = Tensor::from_vector({0.2, -0.9, 0.4});
  Tensor g7(g.shape(), 7.0 * g.data());
  CHECK((fgv_direction(g).vector.data() == fgv_direction(g7).vector.data()).all());

  CHECK(fgv_direction(Tensor({3})).is_zero());
}

TEST_CASE("nonzero directions have L-inf norm exactly 1") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> dist;
  for (int trial = 0; trial < 50; ++trial) {
    Tensor g({16});
    for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = dist(rng);
    CHECK(fgs_direction(g).vector.data().abs().maxCoeff() == 1.0);
    CHECK(fgv_direction(g).vector.data().abs().maxCoeff() == 1.0);
  }
}

TEST_CASE("select_hot_class") {
  CHECK(select_hot_class(Tensor::from_vector({9, 5, 7}), 0) == 2);
  CHECK(select_hot_class(Tensor::from_vector({9, 5, 7}), 2) == 0);
  CHECK(select_hot_class(Tensor::from_vector({3, 3, 1}), 2) == 0);
}

TEST_CASE("hc_direction on a linear model") {
  Model m = random_linear(6, 3, 5);
  std::mt19937_64 rng(6);
  Tensor img = random_image(6, rng);
  const int true_label = m.predict(img);
  const Direction d = hc_direction(m, img, true_label);
  REQUIRE(d.hot_label.has_value());
  const int hot = *d.hot_label;
  CHECK(hot == select_hot_class(m.forward(img), true_label));

  // Direction proportional to the normalized hot-minus-cold weight rows.
  const Eigen::Map<const Mat> W(m.layers()[0].weight.data().data(), 6, 3);
  Vec rows = W.col(hot) - W.col(true_label);
  Vec expected = rows / rows.array().abs().maxCoeff();
  for (int i = 0; i < 6; ++i) CHECK(d.vector[i] == doctest::Approx(expected[i]).epsilon(1e-12));

  // Stepping along the direction strictly increases z_hot - z_cold.
  const Tensor z0 = m.forward(img);
  Tensor stepped(img.shape(), img.data() + 1e-3 * d.vector.data());
  const Tensor z1 = m.forward(stepped);
  CHECK(z1[hot] - z1[true_label] > z0[hot] - z0[true_label]);
}

TEST_CASE("hc_direction: identical weight rows give a zero direction") {
  Model m = random_linear(4, 2, 3);
  Eigen::Map<Mat> W(m.layers()[0].weight.data().data(), 4, 2);
  W.col(1) = W.col(0);
  m.layers()[0].bias.data().setZero();
  std::mt19937_64 rng(4);
  Tensor img = random_image(4, rng);
  CHECK(hc_direction(m, img, 0).is_zero());
}

TEST_CASE("quantize_clip") {
  Tensor t = Tensor::from_vector({127.5, -3.2, 300.0, 64.0, -0.5});
  const Tensor q = quantize_clip(t);
  CHECK(q[0] == 128.0);
  CHECK(q[1] == 0.0);
  CHECK(q[2] == 255.0);
  CHECK(q[3] == 64.0);
  CHECK(q[4] == 0.0);  // half away from zero, then clamped
  CHECK((quantize_clip(q).data() == q.data()).all());
}

TEST_CASE("perturbation_norms") {
  Tensor a = Tensor::from_vector({10, 20, 30});
  CHECK(perturbation_norms(a, a).l2 == 0.0);
  CHECK(perturbation_norms(a, a).linf == 0);

  Tensor b = a;
  b[1] += 5;
  CHECK(perturbation_norms(a, b).l2 == doctest::Approx(5.0));
  CHECK(perturbation_norms(a, b).linf == 5);

  CHECK_THROWS_AS(perturbation_norms(a, Tensor({2})), ShapeError);
}

TEST_CASE("minimal_adversarial FGS alpha equals the exhaustive integer scan") {
  std::mt19937_64 rng(2024);
  int compared = 0;
  for (std::uint64_t seed = 0; compared < 200; ++seed) {
    Model m = random_linear(6, 3, 9000 + seed);
    Tensor img = random_image(6, rng);
    const int label = m.predict(img);
    const Direction dir = fgs_direction(m.input_gradient(img, Objective::loss(label)));
    if (dir.is_zero()) continue;
    const auto oracle = exhaustive_fgs_alpha(m, img, label, dir);
    const AdversarialRecord rec = minimal_adversarial(m, img, label, dir, "x");
    if (oracle) {
      REQUIRE(rec.success);
      CHECK(static_cast<long>(rec.alpha) == *oracle);
      CHECK(rec.linf <= static_cast<int>(rec.alpha));
      // FGS with no clipping active has linf == alpha; clipping can shrink it.
    } else {
      CHECK_FALSE(rec.success);
      CHECK(rec.failure_reason == FailureReason::label_never_flips);
    }
    ++compared;
  }
}

TEST_CASE("minimal_adversarial minimality at the search resolution") {
  std::mt19937_64 rng(31337);
  int successes = 0;
  for (std::uint64_t seed = 0; successes < 60; ++seed) {
    Model m = random_linear(8, 4, 100 + seed);
    Tensor img = random_image(8, rng);
    const int label = m.predict(img);
    for (AttackType attack : {AttackType::FGS, AttackType::FGV, AttackType::HC1}) {
      const Direction dir = attack_direction(m, img, label, attack);
      if (dir.is_zero()) continue;
      const AdversarialRecord rec = minimal_adversarial(m, img, label, dir, "x");
      if (!rec.success) continue;
      ++successes;
      const double resolution = attack == AttackType::FGS ? 1.0 : 0.01;
      Tensor prev = quantize_clip(
          Tensor(img.shape(), img.data() + (rec.alpha - resolution) * dir.vector.data()));
      const Arr z = m.forward(prev).data();
      bool flipped = false;
      for (Eigen::Index j = 0; j < z.size(); ++j)
        if (static_cast<int>(j) != label && z[j] > z[label]) flipped = true;
      CHECK_FALSE(flipped);
      // Replaying the stored perturbation reproduces the adversarial label.
      Tensor adv(img.shape(), img.data() + rec.perturbation.data());
      CHECK(m.predict(adv) == *rec.adversarial_label);
      CHECK((adv.data() == quantize_clip(adv).data()).all());
    }
  }
}

TEST_CASE("minimal_adversarial failure cases") {
  Model m = random_linear(4, 3, 55);
  std::mt19937_64 rng(1);
  Tensor img = random_image(4, rng);
  const int label = m.predict(img);

  SUBCASE("zero direction") {
    Direction zero;
    zero.vector = Tensor({4});
    zero.attack = AttackType::FGS;
    const AdversarialRecord rec = minimal_adversarial(m, img, label, zero, "x");
    CHECK_FALSE(rec.success);
    CHECK(rec.failure_reason == FailureReason::zero_gradient);
    CHECK_FALSE(rec.adversarial_label.has_value());
  }

  SUBCASE("constant-logit model never flips") {
    Model flat("flat", "mlp", {4}, 3, {LayerSpec::make_dense(3)}, 1);
    for (Layer& l : flat.layers()) {
      l.weight.data().setZero();
      l.bias.data().setZero();
    }
    Direction dir;
    dir.vector = Tensor::from_vector({1, -1, 1, -1});
    dir.attack = AttackType::FGS;
    const AdversarialRecord rec = minimal_adversarial(flat, img, 0, dir, "x");
    CHECK_FALSE(rec.success);
    CHECK(rec.failure_reason == FailureReason::label_never_flips);
  }
}

TEST_CASE("success_rate") {
  AdversarialRecord ok;
  ok.success = true;
  AdversarialRecord bad;
  bad.success = false;
  bad.failure_reason = FailureReason::zero_gradient;
  CHECK(success_rate({ok, ok}) == 1.0);
  CHECK(success_rate({ok, ok, ok, bad}) == doctest::Approx(0.75));
  CHECK_THROWS(success_rate({}));
}

TEST_CASE("records CSV round trip") {
  AdversarialRecord ok;
  ok.image_id = "img7";
  ok.source_model_id = "mlp-a";
  ok.attack = AttackType::FGV;
  ok.true_label = 3;
  ok.adversarial_label = 5;
  ok.alpha = 2.37;
  ok.l2 = 12.5;
  ok.linf = 3;
  ok.pass = 0.991234;
  ok.success = true;

  AdversarialRecord bad;
  bad.image_id = "img8";
  bad.source_model_id = "cnn-b";
  bad.attack = AttackType::HC1;
  bad.true_label = 1;
  bad.failure_reason = FailureReason::label_never_flips;

  const auto path = (std::filesystem::temp_directory_path() / "advforge_records.csv").string();
  write_records_csv(path, {ok, bad});
  const auto loaded = read_records_csv(path);
  std::remove(path.c_str());

  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].image_id == "img7");
  CHECK(loaded[0].attack == AttackType::FGV);
  CHECK(loaded[0].alpha == doctest::Approx(2.37));
  CHECK(loaded[0].pass == doctest::Approx(0.991234));
  CHECK(*loaded[0].adversarial_label == 5);
  CHECK_FALSE(loaded[1].success);
  CHECK(loaded[1].failure_reason == FailureReason::label_never_flips);
}
