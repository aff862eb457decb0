#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <unistd.h>

#include "mir/attention.hpp"
#include "mir/checkpoint.hpp"
#include "mir/errors.hpp"
#include "mir/rng.hpp"

using namespace mir;

namespace {

Bag make_bag(std::vector<std::vector<double>> rows, double label = 0.0) {
  Bag bag;
  bag.id = "t";
  bag.label = label;
  bag.width = rows[0].size();
  for (const auto& row : rows) bag.values.insert(bag.values.end(), row.begin(), row.end());
  return bag;
}

Bag random_bag(Rng& rng, std::size_t count, std::size_t width) {
  Bag bag;
  bag.id = "r";
  bag.width = width;
  for (std::size_t i = 0; i < count * width; ++i) bag.values.push_back(rng.normal(0.0, 1.0));
  return bag;
}

Bag permuted(const Bag& bag, std::span<const std::size_t> order) {
  Bag out = bag;
  for (std::size_t l = 0; l < order.size(); ++l) {
    auto src = bag.instance(order[l]);
    std::copy(src.begin(), src.end(), out.instance(l).begin());
  }
  return out;
}

}  // namespace

TEST_CASE("embed_instances") {
  SUBCASE("zero weights give zero memory") {
    AttentionConfig cfg{3, 1, 2};
    AttentionModelParams p = init_attention_params(cfg, 1);
    p.embed_w.fill(0.0);
    p.embed_b.fill(0.0);
    Bag bag = make_bag({{0.4, -0.2}, {1.0, 2.0}});
    Tensor memory = embed_instances(p, bag);
    for (double v : memory.values()) CHECK(v == 0.0);
  }
  SUBCASE("duplicate instances give duplicate rows") {
    AttentionConfig cfg{4, 1, 3};
    AttentionModelParams p = init_attention_params(cfg, 2);
    Bag bag = make_bag({{0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}});
    Tensor memory = embed_instances(p, bag);
    for (std::size_t i = 0; i < 4; ++i) CHECK(memory.at(0, i) == memory.at(1, i));
  }
  SUBCASE("scalar case evaluates tanh(W x + b)") {
    AttentionConfig cfg{1, 1, 1};
    AttentionModelParams p = init_attention_params(cfg, 3);
    p.embed_w[0] = 1.0;
    p.embed_b[0] = 0.0;
    Bag bag = make_bag({{0.5}});
    Tensor memory = embed_instances(p, bag);
    CHECK(memory[0] == doctest::Approx(0.46211715726).epsilon(1e-10));
  }
  SUBCASE("feature mismatch is an error") {
    AttentionConfig cfg{2, 1, 3};
    AttentionModelParams p = init_attention_params(cfg, 4);
    Bag bag = make_bag({{1.0, 2.0}});
    CHECK_THROWS_AS(embed_instances(p, bag), ShapeError);
  }
}

TEST_CASE("forward matches a hand-computed scalar transcript (H=1, L=2, T=1)") {
  AttentionConfig cfg{1, 1, 1};
  AttentionModelParams p;
  p.embed_w = Tensor::matrix(1, 1, {0.7});
  p.embed_b = Tensor::vector({0.1});
  // Gate order [input, forget, cell, output]; rows act on [q, r].
  p.lstm_w = Tensor::matrix(4, 2, {0.2, -0.3, 0.5, 0.4, -0.6, 0.2, 0.3, 0.1});
  p.lstm_b = Tensor::vector({0.05, 1.0, -0.1, 0.2});
  p.head_w = Tensor::matrix(1, 2, {0.8, -0.5});
  p.head_b = Tensor::vector({0.15});
  p.out_w = Tensor::matrix(1, 1, {1.2});
  p.out_b = Tensor::vector({-0.3});

  Bag bag = make_bag({{0.3}, {-0.4}});
  AttentionResult result = attention_forward(p, cfg, bag);

  auto sigma = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  double m1 = std::tanh(0.7 * 0.3 + 0.1);
  double m2 = std::tanh(0.7 * -0.4 + 0.1);
  // q*_0 = [0,0], c_0 = 0, so the gates see only their biases.
  double gate_in = sigma(0.05);
  double gate_forget = sigma(1.0);
  double gate_cell = std::tanh(-0.1);
  double gate_out = sigma(0.2);
  double c1 = gate_forget * 0.0 + gate_in * gate_cell;
  double q1 = gate_out * std::tanh(c1);
  double e1 = m1 * q1;
  double e2 = m2 * q1;
  double a1 = std::exp(e1) / (std::exp(e1) + std::exp(e2));
  double a2 = 1.0 - a1;
  double r1 = a1 * m1 + a2 * m2;
  double head = std::tanh(0.8 * q1 - 0.5 * r1 + 0.15);
  double expected = 1.2 * head - 0.3;

  CHECK(result.prediction == doctest::Approx(expected).epsilon(1e-12));
  REQUIRE(result.trace.scores.size() == 1);
  CHECK(result.trace.scores[0][0] == doctest::Approx(e1).epsilon(1e-12));
  CHECK(result.trace.scores[0][1] == doctest::Approx(e2).epsilon(1e-12));
  CHECK(result.trace.coefficients[0][0] == doctest::Approx(a1).epsilon(1e-12));
  CHECK(result.trace.coefficients[0][1] == doctest::Approx(a2).epsilon(1e-12));
}

TEST_CASE("identical instances attract uniform attention at every step") {
  AttentionConfig cfg{5, 3, 2};
  AttentionModelParams p = init_attention_params(cfg, 9);
  Bag bag = make_bag({{0.4, -1.0}, {0.4, -1.0}, {0.4, -1.0}, {0.4, -1.0}});
  AttentionResult result = attention_forward(p, cfg, bag);
  for (const auto& step : result.trace.coefficients) {
    for (double a : step) CHECK(a == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("predictions are invariant to instance permutation") {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t width = 1 + rng.below(6);
    std::size_t count = 2 + rng.below(12);
    AttentionConfig cfg{1 + rng.below(8), 1 + rng.below(3), width};
    AttentionModelParams p = init_attention_params(cfg, rng.bits());
    Bag bag = random_bag(rng, count, width);

    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;
    rng.shuffle(order);
    Bag shuffled = permuted(bag, order);

    AttentionResult base = attention_forward(p, cfg, bag);
    AttentionResult moved = attention_forward(p, cfg, shuffled);
    CHECK(std::abs(base.prediction - moved.prediction) < 1e-10);
    // Trace coefficients follow the same permutation.
    for (std::size_t t = 0; t < cfg.steps; ++t) {
      for (std::size_t l = 0; l < count; ++l) {
        CHECK(std::abs(moved.trace.coefficients[t][l] -
                       base.trace.coefficients[t][order[l]]) < 1e-10);
      }
    }
  }
}

TEST_CASE("attention coefficients stay on the simplex") {
  Rng rng(404);
  for (int trial = 0; trial < 40; ++trial) {
    AttentionConfig cfg{1 + rng.below(10), 1 + rng.below(4), 3};
    AttentionModelParams p = init_attention_params(cfg, rng.bits());
    Bag bag = random_bag(rng, 1 + rng.below(20), 3);
    AttentionResult result = attention_forward(p, cfg, bag);
    for (const auto& step : result.trace.coefficients) {
      double sum = 0.0;
      for (double a : step) {
        CHECK(a >= 0.0);
        sum += a;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("forward is deterministic and rejects bad configs") {
  AttentionConfig cfg{6, 2, 4};
  AttentionModelParams p = init_attention_params(cfg, 5);
  Rng rng(6);
  Bag bag = random_bag(rng, 7, 4);

  double first = attention_forward(p, cfg, bag).prediction;
  double second = attention_forward(p, cfg, bag).prediction;
  CHECK(first == second);

  AttentionConfig no_steps = cfg;
  no_steps.steps = 0;
  CHECK_THROWS_AS(attention_forward(p, no_steps, bag), Error);

  Bag narrow = random_bag(rng, 3, 2);
  CHECK_THROWS_AS(attention_forward(p, cfg, narrow), ShapeError);
}

TEST_CASE("instance count changes trace lengths but never parameter shapes") {
  AttentionConfig cfg{4, 2, 3};
  AttentionModelParams p = init_attention_params(cfg, 12);
  Rng rng(13);
  Bag small = random_bag(rng, 2, 3);
  Bag large = random_bag(rng, 17, 3);

  AttentionResult a = attention_forward(p, cfg, small);
  AttentionResult b = attention_forward(p, cfg, large);
  CHECK(a.trace.coefficients[0].size() == 2);
  CHECK(b.trace.coefficients[0].size() == 17);
  CHECK(p.embed_w.shape() == std::vector<std::size_t>{4, 3});
  CHECK(p.lstm_w.shape() == std::vector<std::size_t>{16, 8});
  CHECK(p.head_w.shape() == std::vector<std::size_t>{4, 8});
  CHECK(p.out_w.shape() == std::vector<std::size_t>{1, 4});
}

TEST_CASE("salience reads the final-step coefficients") {
  AttentionConfig cfg{3, 2, 2};
  AttentionModelParams p = init_attention_params(cfg, 21);

  Bag uniform = make_bag({{0.3, 0.3}, {0.3, 0.3}, {0.3, 0.3}});
  std::vector<double> s = salience(attention_forward(p, cfg, uniform).trace);
  REQUIRE(s.size() == 3);
  for (double v : s) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Bag single = make_bag({{1.0, -1.0}});
  std::vector<double> one = salience(attention_forward(p, cfg, single).trace);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == 1.0);

  CHECK_THROWS_AS(salience(AttentionTrace{}), Error);
}

TEST_CASE("predict_dataset composes per-bag forwards") {
  AttentionConfig cfg{3, 1, 2};
  AttentionModelParams p = init_attention_params(cfg, 31);

  Dataset empty;
  empty.feature_count = 2;
  CHECK(predict_dataset(p, cfg, empty).empty());

  Rng rng(32);
  Dataset ds;
  ds.feature_count = 2;
  for (int i = 0; i < 4; ++i) ds.bags.push_back(random_bag(rng, 3 + i, 2));

  std::vector<double> preds = predict_dataset(p, cfg, ds);
  REQUIRE(preds.size() == 4);
  CHECK(preds[0] == attention_forward(p, cfg, ds.bags[0]).prediction);

  Dataset reversed = ds;
  std::reverse(reversed.bags.begin(), reversed.bags.end());
  std::vector<double> rev = predict_dataset(p, cfg, reversed);
  std::sort(preds.begin(), preds.end());
  std::sort(rev.begin(), rev.end());
  CHECK(preds == rev);
}

TEST_CASE("full forward plus squared error passes the gradient check") {
  AttentionConfig cfg{4, 2, 5};
  AttentionModelParams p = init_attention_params(cfg, 77);
  Rng rng(78);
  Bag bag = random_bag(rng, 3, 5);
  bag.label = 0.4;

  AttentionParamNodes nodes = attention_param_nodes(p, true);
  std::vector<NodePtr> params = nodes.all();
  auto build = [&] {
    AttentionForward fwd = build_attention_graph(nodes, cfg, bag);
    return square(sub(fwd.prediction, constant(Tensor::scalar(bag.label))));
  };
  GradCheckResult result = grad_check(build, params, 1e-5);
  MESSAGE("attention composite max relative error: ", result.max_rel_error, " at ",
          result.worst_param, "[", result.worst_index, "]");
  CHECK(result.max_rel_error < 1e-4);
}

TEST_CASE("trace CSV export") {
  AttentionTrace trace;
  trace.scores = {{0.5, -0.5}};
  trace.coefficients = {{0.75, 0.25}};
  std::ostringstream out;
  write_trace_header(out);
  write_trace_csv(out, "bag7", trace);
  CHECK(out.str() ==
        "bag_id,step,instance_index,score,coefficient\n"
        "bag7,1,0,0.5,0.75\n"
        "bag7,1,1,-0.5,0.25\n");
}

TEST_CASE("checkpoint round-trips attention weights exactly") {
  AttentionConfig cfg{5, 3, 4};
  AttentionModelParams p = init_attention_params(cfg, 91);

  Checkpoint ckpt;
  ckpt.kind = AlgorithmKind::Attention;
  ckpt.attention_config = cfg;
  ckpt.attention = p;
  Preprocessing prep;
  prep.stats.mean = {0.5, -1.25, 3.0, 0.0};
  prep.stats.stddev = {1.0, 2.5, 0.125, 1.0};
  prep.moments.max_order = 2;
  prep.moments.attach = AttachMode::AppendPerInstance;
  ckpt.preprocessing = prep;

  std::filesystem::path path =
      std::filesystem::temp_directory_path() / ("mir-ckpt-" + std::to_string(::getpid()) + ".json");
  save_checkpoint(ckpt, path.string());
  Checkpoint back = load_checkpoint(path.string());
  std::filesystem::remove(path);

  REQUIRE(back.kind == AlgorithmKind::Attention);
  REQUIRE(back.attention.has_value());
  CHECK(back.attention_config->hidden == 5);
  CHECK(back.attention_config->steps == 3);
  CHECK(back.attention_config->input_dim == 4);
  auto same = [](const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  };
  same(back.attention->embed_w, p.embed_w);
  same(back.attention->lstm_w, p.lstm_w);
  same(back.attention->lstm_b, p.lstm_b);
  same(back.attention->head_w, p.head_w);
  same(back.attention->out_w, p.out_w);
  REQUIRE(back.preprocessing.has_value());
  CHECK(back.preprocessing->stats.mean == prep.stats.mean);
  CHECK(back.preprocessing->stats.stddev == prep.stats.stddev);
  CHECK(back.preprocessing->moments.max_order == 2);
}

TEST_CASE("initialization fills the forget-gate bias with ones") {
  AttentionConfig cfg{3, 2, 2};
  AttentionModelParams p = init_attention_params(cfg, 101);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(p.lstm_b[i] == 0.0);           // input gate
    CHECK(p.lstm_b[3 + i] == 1.0);       // forget gate
    CHECK(p.lstm_b[6 + i] == 0.0);       // cell candidate
    CHECK(p.lstm_b[9 + i] == 0.0);       // output gate
  }
  double bound = 1.0 / std::sqrt(2.0);
  for (double v : p.embed_w.values()) CHECK(std::abs(v) <= bound);
}
