#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "sgiformer/gradcheck.hpp"
#include "sgiformer/smq.hpp"
#include "test_support.hpp"

using namespace sgiformer;
namespace t = sgiformer::testing;

namespace {

struct Fixture {
  ParamStore store{17};
  Linear projection;
  Linear psi;
};

Fixture make_fixture(std::size_t d_in, std::size_t d, std::size_t q_s) {
  Fixture f;
  f.projection = Linear::create(f.store, "proj", d_in, d);
  f.psi = Linear::create(f.store, "psi", d, q_s);
  return f;
}

}  // namespace

TEST_CASE("selection count is ceil(alpha m) with a floor of one") {
  CHECK(selection_count(10, 0.4) == 4);
  CHECK(selection_count(11, 0.4) == 5);
  CHECK(selection_count(3, 0.01) == 1);
  CHECK(selection_count(7, 1.0) == 7);
  CHECK(selection_count(5, 0.2) == 1);
  CHECK_THROWS_AS(selection_count(5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(selection_count(5, 1.5), std::invalid_argument);
}

TEST_CASE("select_voxels on a hand-set three-voxel fixture") {
  // Columns: class 1, class 2, background.
  const Tensor logits = Tensor::from({3, 3}, {0.0, 0.0, 0.0,            // 1/3
                                              std::log(8.0), 0.0, 0.0,  // 0.8
                                              0.0, 0.0, std::log(8.0)});  // 0.1
  const auto all = select_voxels(logits, 1.0);
  CHECK(all.index == std::vector<std::size_t>{1, 0, 2});
  CHECK(all.scores[0] == doctest::Approx(0.8).epsilon(1e-14));
  CHECK(all.scores[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(all.scores[2] == doctest::Approx(0.1).epsilon(1e-14));

  const auto top = select_voxels(logits, 0.5);
  CHECK(top.index == std::vector<std::size_t>{1, 0});
}

TEST_CASE("select_voxels takes ceil(alpha m) unique indices with sorted scores") {
  std::mt19937_64 rng(1);
  const auto sel = select_voxels(t::random_const({10, 4}, rng, -3, 3), 0.4);
  CHECK(sel.index.size() == 4);
  std::vector<std::size_t> sorted = sel.index;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK(std::is_sorted(sel.scores.rbegin(), sel.scores.rend()));
}

TEST_CASE("select_voxels breaks ties toward the lower index") {
  const auto sel = select_voxels(Tensor::zeros({5, 3}), 0.6);
  CHECK(sel.index == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("select_voxels ignores a constant added to one voxel's logits") {
  std::mt19937_64 rng(2);
  const auto z = t::random_values(8 * 3, rng, -2, 2);
  auto shifted = z;
  for (std::size_t c = 0; c < 3; ++c) shifted[5 * 3 + c] += 7.25;
  const auto a = select_voxels(Tensor::from({8, 3}, z), 0.5);
  const auto b = select_voxels(Tensor::from({8, 3}, shifted), 0.5);
  CHECK(a.index == b.index);
  for (std::size_t i = 0; i < a.scores.size(); ++i) CHECK(a.scores[i] == doctest::Approx(b.scores[i]).epsilon(1e-14));
}

TEST_CASE("init_scene_queries on a hand-set 2 x 3 fixture") {
  auto f = make_fixture(2, 2, 2);
  t::set_identity(f.projection);
  // psi maps f to (f0, 2 f1).
  t::set_values(f.psi.weight, {1, 0, 0, 2});
  t::set_values(f.psi.bias, {0, 0});
  const Tensor features = Tensor::from({4, 2}, {1, 0, 0, 1, 9, 9, 1, 1});
  const Selection sel{{0, 1, 3}, {}};
  const auto out = init_scene_queries(features, sel, f.projection, f.psi);

  // W rows: query 0 sees logits (1, 0, 1), query 1 sees (0, 2, 2) after ReLU.
  const double e = std::exp(1.0), e2 = std::exp(2.0);
  const double w0[3] = {e / (2 * e + 1), 1 / (2 * e + 1), e / (2 * e + 1)};
  const double w1[3] = {1 / (1 + 2 * e2), e2 / (1 + 2 * e2), e2 / (1 + 2 * e2)};
  const double fx[3][2] = {{1, 0}, {0, 1}, {1, 1}};
  for (std::size_t v = 0; v < 3; ++v) {
    CHECK(std::abs(out.weights.at(0, v) - w0[v]) < 1e-12);
    CHECK(std::abs(out.weights.at(1, v) - w1[v]) < 1e-12);
  }
  for (std::size_t c = 0; c < 2; ++c) {
    double q0 = 0, q1 = 0;
    for (std::size_t v = 0; v < 3; ++v) {
      q0 += w0[v] * fx[v][c];
      q1 += w1[v] * fx[v][c];
    }
    CHECK(std::abs(out.queries.at(0, c) - q0) < 1e-12);
    CHECK(std::abs(out.queries.at(1, c) - q1) < 1e-12);
  }
}

TEST_CASE("scene query degenerate cases") {
  auto f = make_fixture(3, 4, 3);
  std::mt19937_64 rng(5);
  const Tensor features = t::random_const({6, 3}, rng);

  SUBCASE("a single selected voxel is copied into every query") {
    const auto out = init_scene_queries(features, {{4}, {}}, f.projection, f.psi);
    const auto f4 = f.projection(gather_rows(features, std::vector<std::size_t>{4}));
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t c = 0; c < 4; ++c) CHECK(out.queries.at(u, c) == doctest::Approx(f4.at(0, c)).epsilon(1e-14));
  }
  SUBCASE("equal psi logits give the mean of the selected rows") {
    t::fill(f.psi.weight, 0.0);
    const std::vector<std::size_t> idx = {0, 2, 5};
    const auto out = init_scene_queries(features, {idx, {}}, f.projection, f.psi);
    const auto proj = f.projection(gather_rows(features, idx));
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t c = 0; c < 4; ++c) {
        const double mean = (proj.at(0, c) + proj.at(1, c) + proj.at(2, c)) / 3.0;
        CHECK(out.queries.at(u, c) == doctest::Approx(mean).epsilon(1e-13));
      }
  }
  CHECK_THROWS_AS(init_scene_queries(features, {{}, {}}, f.projection, f.psi), std::invalid_argument);
  CHECK_THROWS_AS(init_scene_queries(features, {{6}, {}}, f.projection, f.psi), std::out_of_range);
}

TEST_CASE("scene query weights are distributions and queries stay in the convex hull") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto f = make_fixture(3, 2, 4);
    const std::size_t m = 5 + rng() % 10;
    const Tensor features = t::random_const({m, 3}, rng, -2, 2);
    const auto sel = select_voxels(t::random_const({m, 3}, rng), 0.6);
    const auto out = init_scene_queries(features, sel, f.projection, f.psi);
    for (std::size_t u = 0; u < 4; ++u) {
      double total = 0.0;
      for (std::size_t v = 0; v < sel.index.size(); ++v) {
        CHECK(out.weights.at(u, v) >= 0.0);
        total += out.weights.at(u, v);
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
      // Convex hull in 2-D: every supporting line of the hull bounds the query.
      // Checked along 16 directions, which is necessary for membership.
      for (int k = 0; k < 16; ++k) {
        const double dx = std::cos(k * 0.3927), dy = std::sin(k * 0.3927);
        double hi = -1e300;
        for (std::size_t v = 0; v < sel.index.size(); ++v)
          hi = std::max(hi, dx * out.selected.at(v, 0) + dy * out.selected.at(v, 1));
        CHECK(dx * out.queries.at(u, 0) + dy * out.queries.at(u, 1) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("scene queries do not depend on voxel order") {
  auto f = make_fixture(3, 4, 2);
  std::mt19937_64 rng(7);
  const std::size_t m = 9;
  const Tensor features = t::random_const({m, 3}, rng);
  const Tensor logits = t::random_const({m, 3}, rng, -3, 3);
  const auto base = init_scene_queries(features, select_voxels(logits, 0.5), f.projection, f.psi);

  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto permuted = init_scene_queries(gather_rows(features, perm),
                                           select_voxels(gather_rows(logits, perm), 0.5), f.projection, f.psi);
  for (std::size_t i = 0; i < base.queries.numel(); ++i)
    CHECK(permuted.queries.at(i) == doctest::Approx(base.queries.at(i)).epsilon(1e-13));
}

TEST_CASE("scene query gradients reach features, projection and psi") {
  auto f = make_fixture(3, 4, 2);
  std::mt19937_64 rng(8);
  const Tensor features = t::random_param({6, 3}, rng);
  const Selection sel{{1, 4, 5}, {}};
  const Tensor probe = t::random_const({2, 4}, rng);
  std::vector<GradCheckTarget> targets = {{"features", features}};
  for (const auto& p : f.store.params()) targets.push_back({p.name, p.tensor});
  const auto report = check_gradients(
      [&] { return sum(init_scene_queries(features, sel, f.projection, f.psi).queries * probe); }, targets);
  CHECK(report.ok());
}

TEST_CASE("mix_queries concatenates and records provenance") {
  const Tensor s = Tensor::full({2, 3}, 1.0), l = Tensor::full({3, 3}, 2.0);
  const auto both = mix_queries(s, l);
  CHECK(both.queries.shape() == Shape{5, 3});
  CHECK(both.size() == 5);
  CHECK(both.queries.at(1, 0) == 1.0);
  CHECK(both.queries.at(2, 0) == 2.0);
  CHECK(both.provenance ==
        std::vector<QuerySource>{QuerySource::kScene, QuerySource::kScene, QuerySource::kLearnable,
                                 QuerySource::kLearnable, QuerySource::kLearnable});
  const auto only_scene = mix_queries(s, std::nullopt);
  CHECK(only_scene.learnable_count == 0);
  CHECK(only_scene.queries.at(0, 0) == 1.0);
  const auto only_learnable = mix_queries(std::nullopt, l);
  CHECK(only_learnable.scene_count == 0);
  CHECK(only_learnable.size() == 3);
  CHECK_THROWS_AS(mix_queries(s, Tensor::zeros({1, 4})), ShapeError);
  CHECK_THROWS_AS(mix_queries(std::nullopt, std::nullopt), std::invalid_argument);
}

TEST_CASE("published query counts give 400 queries") {
  ModelConfig cfg;
  cfg.scene_queries = 200;
  cfg.learnable_queries = 200;
  CHECK(cfg.num_queries() == 400);
  ParamStore store(1);
  const auto p = SmqParams::create(store, cfg);
  const auto q = mix_queries(Tensor::zeros({200, cfg.width}), p.learnable);
  CHECK(q.size() == 400);
}
