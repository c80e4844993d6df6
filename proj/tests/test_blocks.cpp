#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "neurosid/block.hpp"
#include "neurosid/rng.hpp"

using namespace neurosid;

namespace {

Block make_block(BlockKind kind, std::size_t in, std::size_t out,
                 std::size_t hidden, std::size_t layers, ActivationKind act,
                 MapKind map, std::uint64_t seed, ParameterStore& store,
                 const std::string& prefix = "f") {
  BlockConfig cfg;
  cfg.kind = kind;
  cfg.in_dim = in;
  cfg.out_dim = out;
  cfg.hidden = hidden;
  cfg.layers = layers;
  cfg.activation = act;
  cfg.map_kind = map;
  auto rng = make_rng(seed);
  return Block(cfg, store, prefix, rng);
}

}  // namespace

TEST_CASE("activation hand values", "[blocks]") {
  Tensor zero = Tensor::scalar(0.0);
  SECTION("relu") {
    Tensor y = relu(Tensor({2}, {-1.0, 2.0}));
    CHECK(y.value(0) == 0.0);
    CHECK(y.value(1) == 2.0);
  }
  SECTION("gelu vanishes at zero and is identity-like for large x") {
    CHECK(gelu(Tensor({1}, {0.0})).value() == 0.0);
    CHECK_THAT(gelu(Tensor({1}, {10.0})).value(),
               Catch::Matchers::WithinAbs(10.0, 1e-6));
    CHECK_THAT(gelu(Tensor({1}, {-10.0})).value(),
               Catch::Matchers::WithinAbs(0.0, 1e-6));
  }
  SECTION("blu at beta=0 is the identity") {
    CHECK_THAT(blu(zero, Tensor({1}, {3.7})).value(),
               Catch::Matchers::WithinAbs(3.7, 1e-15));
  }
  SECTION("blu beta is clamped to [-1, 1]") {
    double unclamped = blu(Tensor({1}, {1.0}), Tensor({1}, {2.0})).value();
    double clamped = blu(Tensor({1}, {50.0}), Tensor({1}, {2.0})).value();
    CHECK(unclamped == clamped);
  }
  SECTION("soft exponential at alpha=0 is the identity") {
    CHECK(soft_exponential(zero, Tensor({1}, {-1.5})).value() == -1.5);
  }
  SECTION("soft exponential branch values") {
    // alpha > 0: (e^{ax} - 1)/a + a
    double v = soft_exponential(Tensor({1}, {0.5}), Tensor({1}, {2.0})).value();
    CHECK_THAT(v, Catch::Matchers::WithinAbs((std::exp(1.0) - 1.0) / 0.5 + 0.5,
                                             1e-12));
    // alpha < 0: -ln(1 - a(x + a))/a
    double w =
        soft_exponential(Tensor({1}, {-0.5}), Tensor({1}, {2.0})).value();
    CHECK_THAT(w, Catch::Matchers::WithinAbs(std::log(1.0 + 0.5 * 1.5) / 0.5,
                                             1e-12));
  }
}

TEST_CASE("soft exponential gradients across all branches", "[blocks]") {
  for (double a0 : {-0.7, -0.1, 0.0, 0.1, 0.7}) {
    ParameterStore store;
    Tensor alpha = store.create("alpha", {1}, {a0});
    Tensor x = store.create("x", {3}, {-1.2, 0.3, 1.8});
    auto graph = [&] { return sum(square(soft_exponential(alpha, x))); };
    auto value = [&] {
      NoGradGuard ng;
      return graph().value();
    };
    INFO("alpha = " << a0);
    CHECK(testutil::fd_worst_rel_error(store, value, graph) < 1e-4);
  }
}

TEST_CASE("soft exponential alpha gradient at exactly zero", "[blocks]") {
  // Both one-sided limits of d/da give 1 + x^2/2 at a = 0; the primitive
  // must not get stuck with a zero gradient there.
  ParameterStore store;
  Tensor alpha = store.create("alpha", {1}, {0.0});
  Tensor x({1}, {2.0});
  backward(soft_exponential(alpha, x));
  CHECK_THAT(alpha.grad()[0], Catch::Matchers::WithinAbs(3.0, 1e-12));
}

TEST_CASE("interp operator endpoints and symmetry", "[blocks]") {
  SECTION("alpha=0 is exact addition") {
    Tensor y = interp_operator(Tensor({2}, {1.0, 2.0}), Tensor({2}, {3.0, 4.0}),
                               Tensor::scalar(0.0));
    CHECK(y.value(0) == 4.0);
    CHECK(y.value(1) == 6.0);
  }
  SECTION("alpha=1 is multiplication on positive operands") {
    Tensor y = interp_operator(Tensor({1}, {2.0}), Tensor({1}, {3.0}),
                               Tensor::scalar(1.0));
    CHECK_THAT(y.value(), Catch::Matchers::WithinAbs(6.0, 1e-9));
  }
  SECTION("symmetric in its operands") {
    for (double a : {-0.5, 0.0, 0.3, 1.0}) {
      Tensor al = Tensor::scalar(a);
      double xy = interp_operator(Tensor({1}, {0.8}), Tensor({1}, {1.7}), al)
                      .value();
      double yx = interp_operator(Tensor({1}, {1.7}), Tensor({1}, {0.8}), al)
                      .value();
      CHECK_THAT(xy, Catch::Matchers::WithinAbs(yx, 1e-13));
    }
  }
}

TEST_CASE("lm blocks are strictly linear", "[blocks]") {
  ParameterStore store;
  Block lm = make_block(BlockKind::LM, 4, 3, 8, 1, ActivationKind::ReLU,
                        MapKind::Unstructured, 31, store);
  // No bias, no activation parameters: one 3x4 weight matrix only.
  CHECK(store.scalar_count() == 12);
  NoGradGuard ng;
  Tensor x({4}, {0.5, -1.0, 2.0, 0.1});
  Tensor y1 = lm.forward(x);
  Tensor y2 = lm.forward(scale(x, 3.0));
  for (std::size_t i = 0; i < 3; ++i)
    CHECK_THAT(y2.value(i), Catch::Matchers::WithinAbs(3.0 * y1.value(i),
                                                       1e-10));
}

TEST_CASE("mlp with zeroed parameters maps to zero", "[blocks]") {
  ParameterStore store;
  Block mlp = make_block(BlockKind::MLP, 3, 2, 4, 1, ActivationKind::ReLU,
                         MapKind::Unstructured, 8, store);
  store.for_each([](const std::string&, const Tensor& t) {
    auto& v = const_cast<Tensor&>(t).mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  });
  store.bump_version();
  Tensor y = mlp.forward(Tensor({3}, {1.0, -2.0, 3.0}));
  CHECK(y.value(0) == 0.0);
  CHECK(y.value(1) == 0.0);
}

TEST_CASE("rmlp equals mlp plus the skip path through the output map",
          "[blocks]") {
  // Identical seeds produce identical parameters for both kinds; for one
  // layer with in_dim == hidden the difference rmlp(x) - mlp(x) is exactly
  // W_out x (the skip contribution pushed through the output map).
  ParameterStore sm, sr;
  Block mlp = make_block(BlockKind::MLP, 4, 2, 4, 1, ActivationKind::GELU,
                         MapKind::Unstructured, 77, sm);
  Block rmlp = make_block(BlockKind::RMLP, 4, 2, 4, 1, ActivationKind::GELU,
                          MapKind::Unstructured, 77, sr);
  NoGradGuard ng;
  Tensor x({4}, {0.2, -0.4, 1.0, 0.6});
  Tensor skip_term = matmul(sr.get("f.out.W"), x);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK_THAT(rmlp.forward(x).value(i) - mlp.forward(x).value(i),
               Catch::Matchers::WithinAbs(skip_term.value(i), 1e-12));
}

TEST_CASE("rnn structure", "[blocks]") {
  SECTION("empty sequence is a contract error") {
    ParameterStore store;
    Block rnn = make_block(BlockKind::RNN, 2, 2, 3, 1, ActivationKind::ReLU,
                           MapKind::Unstructured, 5, store);
    CHECK_THROWS_AS(rnn.rnn_forward({}), ContractError);
  }
  SECTION("zero recurrent weights: output depends only on the last input") {
    ParameterStore store;
    Block rnn = make_block(BlockKind::RNN, 2, 2, 3, 1, ActivationKind::GELU,
                           MapKind::Unstructured, 5, store);
    auto& hh = store.get("f.hh0.W").mutable_values();
    std::fill(hh.begin(), hh.end(), 0.0);
    store.bump_version();
    NoGradGuard ng;
    Tensor a({2}, {1.0, 2.0}), b({2}, {-3.0, 0.5}), c({2}, {0.1, 0.1});
    Tensor y1 = rnn.rnn_forward({a, b, c});
    Tensor y2 = rnn.rnn_forward({b, a, c});  // permuted prefix
    for (std::size_t i = 0; i < 2; ++i)
      CHECK(y1.value(i) == y2.value(i));
  }
  SECTION("two-layer rnn matches a manual unrolling oracle") {
    ParameterStore store;
    Block rnn = make_block(BlockKind::RNN, 2, 2, 3, 2, ActivationKind::ReLU,
                           MapKind::Unstructured, 19, store);
    std::vector<std::vector<double>> seq = {
        {0.5, -0.2}, {1.0, 0.3}, {-0.7, 0.9}, {0.2, 0.2}};
    // Plain-double unroll from the raw parameters.
    auto matvec = [&](const std::string& name, const std::vector<double>& v) {
      Tensor w = store.get(name);
      std::vector<double> out(w.rows(), 0.0);
      for (std::size_t i = 0; i < w.rows(); ++i)
        for (std::size_t j = 0; j < w.cols(); ++j)
          out[i] += w.at(i, j) * v[j];
      return out;
    };
    std::vector<std::vector<double>> inputs = seq;
    for (int layer = 0; layer < 2; ++layer) {
      std::string l = std::to_string(layer);
      std::vector<double> h(3, 0.0);
      std::vector<std::vector<double>> states;
      for (const auto& xt : inputs) {
        auto ih = matvec("f.ih" + l + ".W", xt);
        auto hh = matvec("f.hh" + l + ".W", h);
        const auto& bias = store.get("f.b" + l).values();
        for (std::size_t i = 0; i < 3; ++i)
          h[i] = std::max(ih[i] + hh[i] + bias[i], 0.0);
        states.push_back(h);
      }
      inputs = states;
    }
    auto out = matvec("f.out.W", inputs.back());
    const auto& bout = store.get("f.bout").values();
    NoGradGuard ng;
    std::vector<Tensor> ts;
    for (const auto& v : seq) ts.push_back(Tensor({2}, v));
    Tensor y = rnn.rnn_forward(ts);
    for (std::size_t i = 0; i < 2; ++i)
      CHECK_THAT(y.value(i),
                 Catch::Matchers::WithinAbs(out[i] + bout[i], 1e-12));
  }
}

TEST_CASE("block gradients pass finite differences", "[blocks]") {
  for (BlockKind kind :
       {BlockKind::LM, BlockKind::MLP, BlockKind::RMLP, BlockKind::RNN}) {
    ParameterStore store;
    Block blk = make_block(kind, 3, 2, 4, 2, ActivationKind::SoftExp,
                           MapKind::SoftSVD, 23, store);
    std::vector<double> x = {0.4, -0.8, 1.2};
    auto graph = [&] {
      return add(sum(square(blk.forward(Tensor({3}, x)))),
                 blk.regularization_loss());
    };
    auto value = [&] {
      NoGradGuard ng;
      return graph().value();
    };
    INFO("block kind " << to_string(kind));
    CHECK(testutil::fd_worst_rel_error(store, value, graph) < 1e-4);
  }
}
