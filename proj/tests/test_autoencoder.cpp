#include "doctest.h"
#include "oracles.hpp"

#include "stagg/autoencoder.hpp"
#include "stagg/error.hpp"

#include <random>

using namespace stagg;
using ad::Matrix;
using ad::Tape;
using ad::Tensor;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

// Random two-class instance: `n1` + `n2` nodes, features in [0,1].
struct Instance {
  PeriodFeatures data;
  RenormalizedLaplacian<double> lap;
};

Instance random_instance(std::mt19937_64& rng, Eigen::Index n1, Eigen::Index d1, Eigen::Index n2, Eigen::Index d2,
                         int periods) {
  Instance inst;
  auto& l = inst.data.layout;
  l.classes = {"power", "gas"};
  l.class_nodes = {n1, n2};
  l.class_dims = {d1, d2};
  l.periods = periods;
  for (int t = 0; t < periods; ++t) {
    PeriodFeatureMatrix p;
    p.t = t;
    p.blocks = {random_matrix(n1, d1, rng, 0.0, 1.0), random_matrix(n2, d2, rng, 0.0, 1.0)};
    inst.data.periods.push_back(p);
  }
  const Eigen::Index n = n1 + n2;
  Matrix A = random_matrix(n, n, rng, 0.0, 1.0);
  A = (A + A.transpose()).eval() / 2.0;
  A.diagonal().setZero();
  inst.lap = renormalized_laplacian(A);
  return inst;
}

ArchitectureConfig small_arch(int groups, std::uint64_t seed) {
  ArchitectureConfig a;
  a.groups = groups;
  a.latent = 2;
  a.pool_widths = {5};
  a.seed = seed;
  return a;
}

}  // namespace

TEST_CASE("gcn layer, pool and unpool identities") {
  std::mt19937_64 rng(1);
  Tape tape;
  const Matrix H = random_matrix(4, 3, rng);
  const Tensor h = tape.constant(H);
  const Tensor I4 = tape.constant(Matrix::Identity(4, 4));
  CHECK(gcn_layer(h, I4, tape.constant(Matrix::Identity(3, 3)), ad::Activation::identity).value() == H);
  const Matrix W = random_matrix(3, 2, rng);
  CHECK(gcn_layer(h, I4, tape.constant(W), ad::Activation::tanh).value().isApprox((H * W).array().tanh().matrix()));

  Matrix S = Matrix::Zero(4, 2);
  S(0, 0) = S(1, 1) = S(2, 0) = S(3, 1) = 1.0;
  const Tensor s = tape.constant(S);
  const Matrix Z = pool(h, s).value();
  CHECK(Z.row(0).isApprox(H.row(0) + H.row(2)));
  CHECK(Z.row(1).isApprox(H.row(1) + H.row(3)));
  CHECK(pool(h, I4).value() == H);
  const Matrix U = pool(h, tape.constant(Matrix::Constant(4, 2, 0.5))).value();
  CHECK(U.row(0).isApprox(H.colwise().sum() / 2.0));
  CHECK(U.row(1).isApprox(U.row(0)));

  const Tensor z = tape.constant(Z);
  const Matrix un = unpool(s, z).value();
  CHECK(un.row(2) == Z.row(0));
  CHECK(un.row(3) == Z.row(1));
  CHECK(unpool(I4, h).value() == H);
  CHECK(unpool(I4, pool(h, I4)).value() == H);
  CHECK_THROWS_AS(unpool(s, h), DimensionError);
  CHECK_THROWS_AS(gcn_layer(h, tape.constant(Matrix::Identity(3, 3)), I4, ad::Activation::identity), DimensionError);
}

TEST_CASE("gcn layer gradient on a 4-node graph") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    Matrix A = random_matrix(4, 4, rng, 0.0, 1.0);
    A = (A + A.transpose()).eval() / 2.0;
    A.diagonal().setZero();
    const Matrix L = renormalized_laplacian(A).L;
    const Matrix H = random_matrix(4, 3, rng);
    const Matrix W = random_matrix(3, 2, rng);
    auto f = [&](Tape& t, const Tensor& w) {
      return ad::sum(ad::square(gcn_layer(t.constant(H), t.constant(L), w, ad::Activation::tanh)));
    };
    Tape tape;
    const Tensor w = tape.variable(W);
    const Matrix g = tape.backward(f(tape, w))[w];
    const Matrix num = oracle::central_difference([&](const Matrix& v) { Tape t; return f(t, t.variable(v)).item(); }, W);
    CHECK(oracle::gradient_mismatch(g, num) <= 0.0);
  }
}

TEST_CASE("cut loss hand values") {
  Tape tape;
  Matrix A(2, 2);
  A << 0, 1, 1, 0;
  const auto lap = renormalized_laplacian(A);
  const Tensor S = tape.constant(Matrix::Identity(2, 2));
  CHECK(cut_loss(S, tape.constant(lap.A_tilde), tape.constant(lap.degree_matrix())).item() == doctest::Approx(-0.5));

  // two disconnected pairs, each pair in its own group: Tr(S^T A~ S) = Tr(S^T D~ S) = 8
  Matrix A4 = Matrix::Zero(4, 4);
  A4(0, 1) = A4(1, 0) = A4(2, 3) = A4(3, 2) = 1.0;
  const auto lap4 = renormalized_laplacian(A4);
  Matrix S4 = Matrix::Zero(4, 2);
  S4(0, 0) = S4(1, 0) = S4(2, 1) = S4(3, 1) = 1.0;
  CHECK(cut_loss(tape.constant(S4), tape.constant(lap4.A_tilde), tape.constant(lap4.degree_matrix())).item() ==
        doctest::Approx(-1.0));
  CHECK(cut_loss_value(S4, lap4.A_tilde, lap4.degree) == doctest::Approx(-1.0));
}

TEST_CASE("orthogonality loss hand values") {
  Tape tape;
  CHECK(orthogonality_loss(tape.constant(Matrix::Identity(3, 3))).item() == doctest::Approx(0.0).epsilon(1e-15));
  Matrix S = Matrix::Zero(4, 2);
  S(0, 0) = S(1, 0) = S(2, 1) = S(3, 1) = 1.0;
  CHECK(orthogonality_loss(tape.constant(S)).item() == 0.0);
  CHECK(orthogonality_loss_value(S) == 0.0);
  const double uniform = orthogonality_loss(tape.constant(Matrix::Constant(4, 2, 0.5))).item();
  // S^T S = J (all ones) so S^T S/||.|| = J/2; ||J/2 - I/sqrt2||_F^2 = 2(1/2-1/sqrt2)^2 + 2/4
  CHECK(uniform == doctest::Approx(std::sqrt(2.0 * std::pow(0.5 - 1.0 / std::sqrt(2.0), 2) + 0.5)));
  CHECK(uniform > 0.0);
}

TEST_CASE("entropy loss hand values") {
  CHECK(entropy_loss_value(Eigen::Vector2d(1, 1)) == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(entropy_loss_value(Eigen::Vector2d(1.25, 1.25)) < entropy_loss_value(Eigen::Vector2d(2, 0.5)));
  Tape tape;
  const Matrix H0 = Matrix::Ones(4, 1);
  Matrix S = Matrix::Zero(4, 2);
  S(0, 0) = S(1, 0) = S(2, 1) = S(3, 1) = 1.0;
  const double v = entropy_loss(tape.constant(S), tape.constant(H0)).item();
  CHECK(v == doctest::Approx(2.0 * 2.0 * std::log(2.0 + kEntropyEpsilon)));
  const double scaled = entropy_loss(tape.constant(S), tape.constant(3.0 * H0)).item();
  CHECK(scaled == doctest::Approx(2.0 * 6.0 * std::log(6.0 + kEntropyEpsilon)));
}

TEST_CASE("reconstruction and total loss") {
  Tape tape;
  Matrix X(1, 2), Xh(1, 2);
  X << 3, 4;
  Xh << 0, 0;
  const std::vector<std::vector<Tensor>> x{{tape.constant(X)}}, xh{{tape.constant(Xh)}}, same{{tape.constant(X)}};
  CHECK(reconstruction_loss(x, same, {1.0}, 1.0).item() == 0.0);
  CHECK(reconstruction_loss(x, xh, {1.0}, 1.0).item() == 25.0);
  CHECK(reconstruction_loss(x, xh, {2.0}, 1.0).item() == 50.0);

  const LossTerms terms{2.0, -0.5, 0.25, 3.0, 0.0};
  CHECK(total_loss(terms, LossWeights::preset("PL")) == doctest::Approx(-0.25));
  CHECK(total_loss(terms, LossWeights::preset("PRL")) == doctest::Approx(1.75));
  CHECK(total_loss(terms, LossWeights::preset("PHL")) == doctest::Approx(2.75));
  CHECK(total_loss(terms, LossWeights::preset("PRHL")) == doctest::Approx(4.75));
  CHECK_THROWS_AS(total_loss(terms, LossWeights{0, 0, 0, {}}), ParameterError);
  CHECK_THROWS_AS(LossWeights::preset("XYZ"), ConfigError);
}

TEST_CASE("loss bounds over random row-stochastic assignments") {
  std::mt19937_64 rng(42);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index n = 2 + trial % 9, k = 1 + trial % std::max<Eigen::Index>(1, n - 1);
    Matrix A = random_matrix(n, n, rng, 0.0, 1.0);
    A = (A + A.transpose()).eval() / 2.0;
    A.diagonal().setZero();
    const auto lap = renormalized_laplacian(A);
    const Matrix S = oracle::random_row_stochastic(n, k, rng);
    const double lc = cut_loss_value(S, lap.A_tilde, lap.degree);
    const double lo = orthogonality_loss_value(S);
    // k = 1 sits exactly on the -1 boundary, where the two traces differ by rounding only
    constexpr double round_off = 1e-12;
    if (lc < -1.0 - round_off || lc > 0.0 || lo < 0.0 || lo > 2.0) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("entropy loss: equal allocation is minimal for a fixed total") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + trial % 7;
    Eigen::VectorXd v(k);
    for (int i = 0; i < k; ++i) v(i) = u(rng);
    const Eigen::VectorXd eq = Eigen::VectorXd::Constant(k, v.sum() / k);
    if (entropy_loss_value(v) < entropy_loss_value(eq) - 1e-12) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("every loss term matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed + 100);
    const Eigen::Index n = 6, k = 3;
    Matrix A = random_matrix(n, n, rng, 0.0, 1.0);
    A = (A + A.transpose()).eval() / 2.0;
    A.diagonal().setZero();
    const auto lap = renormalized_laplacian(A);
    const Matrix logits = random_matrix(n, k, rng);
    const Matrix H0 = random_matrix(n, 4, rng, 0.0, 1.0);
    const Matrix X = random_matrix(n, 4, rng);

    using Build = std::function<Tensor(Tape&, const Tensor&)>;
    const std::vector<Build> builds = {
        [&](Tape& t, const Tensor& w) {
          return cut_loss(softmax_rows(w), t.constant(lap.A_tilde), t.constant(lap.degree_matrix()));
        },
        [&](Tape&, const Tensor& w) { return orthogonality_loss(softmax_rows(w)); },
        [&](Tape& t, const Tensor& w) { return entropy_loss(softmax_rows(w), t.constant(H0)); },
        [&](Tape& t, const Tensor& w) {
          const Tensor S = softmax_rows(w);
          const Tensor Xh = unpool(S, pool(t.constant(X), S));
          return reconstruction_loss({{t.constant(X)}}, {{Xh}}, {0.7}, 2.0);
        },
    };
    for (const auto& b : builds) {
      Tape tape;
      const Tensor w = tape.variable(logits);
      const Matrix g = tape.backward(b(tape, w))[w];
      const Matrix num =
          oracle::central_difference([&](const Matrix& v) { Tape t; return b(t, t.variable(v)).item(); }, logits);
      CHECK(oracle::gradient_mismatch(g, num) <= 0.0);
    }
  }
}

TEST_CASE("full training loss gradient matches finite differences per weight") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed + 200);
    Instance inst = random_instance(rng, 4, 3, 2, 2, 3);
    const GraphAutoencoder model(small_arch(3, seed), inst.data.layout, inst.lap);
    const LossWeights w = LossWeights::preset("PRHL");

    Tape tape;
    std::vector<Tensor> leaves;
    LossTerms terms;
    const Tensor loss = model.objective(tape, inst.data, w, leaves, terms);
    const ad::Gradients grads = tape.backward(loss);
    const auto params = model.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Matrix num = oracle::central_difference(
          [&](const Matrix& v) {
            GraphAutoencoder copy = model;
            *copy.parameters()[p] = v;
            return copy.evaluate(inst.data, w).total;
          },
          *params[p]);
      CHECK(oracle::gradient_mismatch(grads[leaves[p]], num) <= 0.0);
    }
  }
}

TEST_CASE("identity autoencoder reconstructs exactly") {
  std::mt19937_64 rng(7);
  Instance inst = random_instance(rng, 3, 2, 2, 1, 4);
  const Eigen::Index n = 5, d = 3;
  inst.lap = renormalized_laplacian(Matrix::Zero(n, n));
  ArchitectureConfig arch;
  arch.groups = static_cast<int>(n);
  arch.latent = static_cast<int>(d);
  arch.pool_widths = {};
  arch.activation = ad::Activation::identity;
  arch.epochs = 0;
  GraphAutoencoder model(arch, inst.data.layout, inst.lap);
  // softmax of 1e4 * one-hot is exactly the identity assignment
  Matrix pool_w = Matrix::Zero(d + n, n);
  pool_w.bottomRows(n) = 1e4 * Matrix::Identity(n, n);
  model.pool_layers()[0].weight = pool_w;
  Matrix enc = Matrix::Zero(d + n, d);
  enc.topRows(d) = Matrix::Identity(d, d);
  model.feature_layers()[0].weight = enc;
  model.decoder_layers()[0].weight = Matrix::Identity(d, d);
  const TrainedAutoencoder t = train(inst.data, model, LossWeights::preset("PRHL"));
  CHECK(t.final_terms.reconstruction == 0.0);
  CHECK(t.outputs[0].S == Matrix::Identity(n, n));
}

TEST_CASE("training is deterministic and encode is consistent") {
  std::mt19937_64 rng(8);
  Instance inst = random_instance(rng, 4, 3, 2, 2, 5);
  ArchitectureConfig arch = small_arch(3, 11);
  arch.epochs = 20;
  const TrainedAutoencoder a = train(inst.data, inst.lap, arch, LossWeights::preset("PRHL"));
  const TrainedAutoencoder b = train(inst.data, inst.lap, arch, LossWeights::preset("PRHL"));
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK(a.loss_csv() == b.loss_csv());
  CHECK(a.history.size() == 20);

  for (std::size_t t = 0; t < inst.data.periods.size(); ++t) {
    const EncodedPeriod e = a.model.encode(inst.data.periods[t]);
    const EncodedPeriod e2 = a.model.encode(inst.data.periods[t]);
    CHECK(e.S == e2.S);
    CHECK(e.S == a.outputs[t].S);
    for (Eigen::Index r = 0; r < e.S.rows(); ++r) CHECK(std::abs(e.S.row(r).sum() - 1.0) <= 1e-12);
  }

  // Z = S^T H_latent with H_latent recomputed outside the model
  const auto& period = inst.data.periods[0];
  const StackedInput in = assemble_stacked(period, inst.data.layout, arch.one_hot);
  const Matrix H = (inst.lap.L * in.X * a.model.feature_layers()[0].weight).array().tanh().matrix();
  CHECK(a.outputs[0].Z.isApprox(a.outputs[0].S.transpose() * H, 1e-12));

  PeriodFeatureMatrix wrong = period;
  wrong.blocks[0] = Matrix::Zero(3, 3);
  CHECK_THROWS_AS(a.model.encode(wrong), InputError);

  const TrainedAutoencoder back = TrainedAutoencoder::from_json(a.to_json());
  CHECK(back.model.encode(period).S == a.outputs[0].S);
}

TEST_CASE("loss trajectory is non-increasing with a small learning rate") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed + 300);
    Instance inst = random_instance(rng, 4, 3, 2, 2, 4);
    ArchitectureConfig arch = small_arch(2, seed);
    arch.epochs = 60;
    arch.learning_rate = 1e-4;
    const TrainedAutoencoder t = train(inst.data, inst.lap, arch, LossWeights::preset("PRHL"));
    int rises = 0;
    for (std::size_t e = 1; e < t.history.size(); ++e) {
      if (t.history[e].terms.total > t.history[e - 1].terms.total + 1e-6) ++rises;
    }
    CHECK(rises == 0);
  }
}

TEST_CASE("configuration validation") {
  std::mt19937_64 rng(9);
  Instance inst = random_instance(rng, 2, 2, 1, 1, 1);
  ArchitectureConfig arch = small_arch(4, 0);
  CHECK_THROWS_AS(GraphAutoencoder(arch, inst.data.layout, inst.lap), ParameterError);
  PeriodFeatures empty;
  empty.layout = inst.data.layout;
  CHECK_THROWS_AS(train(empty, inst.lap, small_arch(2, 0), LossWeights::preset("PL")), InputError);
}
