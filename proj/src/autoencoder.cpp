#include "stagg/autoencoder.hpp"

#include "stagg/csv.hpp"
#include "stagg/error.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace stagg {

using ad::Tensor;

BlockKind parse_block_kind(const std::string& s) {
  if (s == "graph-conv" || s == "graph_conv") return BlockKind::graph_conv;
  if (s == "dense") return BlockKind::dense;
  throw ConfigError("unknown block kind '" + s + "'");
}

std::string to_string(BlockKind k) { return k == BlockKind::dense ? "dense" : "graph-conv"; }

ad::Activation parse_activation(const std::string& s) {
  if (s == "identity" || s == "linear") return ad::Activation::identity;
  if (s == "relu") return ad::Activation::relu;
  if (s == "tanh") return ad::Activation::tanh;
  if (s == "softmax-rows" || s == "softmax") return ad::Activation::softmax_rows;
  throw ConfigError("unknown activation '" + s + "'");
}

std::string to_string(ad::Activation a) {
  switch (a) {
    case ad::Activation::identity: return "identity";
    case ad::Activation::relu: return "relu";
    case ad::Activation::tanh: return "tanh";
    case ad::Activation::softmax_rows: return "softmax-rows";
  }
  return "identity";
}

LossWeights LossWeights::preset(const std::string& name) {
  if (name == "PL") return {0.0, 1.0, 0.0, {}};
  if (name == "PRL") return {1.0, 1.0, 0.0, {}};
  if (name == "PHL") return {0.0, 1.0, 1.0, {}};
  if (name == "PRHL") return {1.0, 1.0, 1.0, {}};
  throw ConfigError("unknown loss preset '" + name + "' (expected PL, PRL, PHL or PRHL)");
}

void LossWeights::validate() const {
  const double all[] = {reconstruction, pooling, entropy};
  for (double a : all) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ParameterError("loss weights must be nonnegative");
  }
  for (double a : class_weights) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ParameterError("class weights must be nonnegative");
  }
  if (reconstruction == 0.0 && pooling == 0.0 && entropy == 0.0) {
    throw ParameterError("loss weights: at least one of alpha_R, alpha_P, alpha_H must be positive");
  }
}

double LossWeights::class_weight(std::size_t s) const {
  return s < class_weights.size() ? class_weights[s] : 1.0;
}

Tensor gcn_layer(const Tensor& H, const Tensor& L, const Tensor& theta, ad::Activation act) {
  if (L.rows() != L.cols() || L.cols() != H.rows()) {
    throw DimensionError("gcn_layer: Laplacian does not match node count");
  }
  return ad::activation(act, ad::matmul(ad::matmul(L, H), theta));
}

Tensor pool(const Tensor& H, const Tensor& S) {
  if (S.rows() != H.rows()) throw DimensionError("pool: S and H disagree on node count");
  return ad::matmul(ad::transpose(S), H);
}

Tensor unpool(const Tensor& S, const Tensor& Z) {
  if (S.cols() != Z.rows()) throw DimensionError("unpool: S columns differ from Z rows");
  return ad::matmul(S, Z);
}

Tensor cut_loss(const Tensor& S, const Tensor& A_tilde, const Tensor& D_tilde) {
  const Tensor St = ad::transpose(S);
  const Tensor num = ad::trace(ad::matmul(St, ad::matmul(A_tilde, S)));
  const Tensor den = ad::trace(ad::matmul(St, ad::matmul(D_tilde, S)));
  if (!(den.item() > 0.0)) throw DomainError("cut_loss: Tr(S^T D S) must be positive");
  return ad::scale(ad::divide(num, den), -1.0);
}

Tensor orthogonality_loss(const Tensor& S) {
  ad::Tape& tape = *S.tape();
  const Tensor StS = ad::matmul(ad::transpose(S), S);
  const auto k = S.cols();
  // I / sqrt(k), normalised the same way as StS so a scaled identity cancels exactly
  const Tensor mean_diag = ad::matmul(tape.constant(Eigen::VectorXd::Ones(k)),
                                      ad::scale(ad::trace(StS), 1.0 / static_cast<double>(k)));
  const Tensor target = ad::mul(ad::matmul(ad::divide(mean_diag, ad::frobenius_norm(mean_diag)),
                                           tape.constant(Eigen::RowVectorXd::Ones(k))),
                                tape.constant(Eigen::MatrixXd::Identity(k, k)));
  return ad::frobenius_norm(ad::sub(ad::divide(StS, ad::frobenius_norm(StS)), target));
}

Tensor entropy_loss(const Tensor& S, const Tensor& H0) {
  ad::Tape& tape = *S.tape();
  const Tensor ones = tape.constant(Eigen::VectorXd::Ones(H0.cols()));
  const Tensor v = ad::matmul(ad::transpose(S), ad::matmul(H0, ones));
  if ((v.value().array() < 0.0).any()) throw DomainError("entropy_loss: negative group sum");
  return ad::sum(ad::mul(v, ad::log(ad::shift(v, kEntropyEpsilon))));
}

Tensor reconstruction_loss(const std::vector<std::vector<Tensor>>& X,
                           const std::vector<std::vector<Tensor>>& X_hat,
                           const std::vector<double>& alpha, double num_periods) {
  if (X.size() != X_hat.size()) throw DimensionError("reconstruction_loss: period count mismatch");
  if (!(num_periods > 0.0)) throw ParameterError("reconstruction_loss: |D| must be positive");
  Tensor total;
  for (std::size_t t = 0; t < X.size(); ++t) {
    if (X[t].size() != X_hat[t].size() || X[t].size() > alpha.size()) {
      throw DimensionError("reconstruction_loss: class count mismatch");
    }
    for (std::size_t s = 0; s < X[t].size(); ++s) {
      if (X[t][s].value().size() == 0) continue;
      const Tensor term =
          ad::scale(ad::sum(ad::square(ad::sub(X[t][s], X_hat[t][s]))), alpha[s] / num_periods);
      total = total.valid() ? ad::add(total, term) : term;
    }
  }
  if (!total.valid()) {
    if (X.empty() || X.front().empty()) throw UsageError("reconstruction_loss: no blocks");
    return ad::scale(ad::sum(X.front().front()), 0.0);
  }
  return total;
}

double total_loss(const LossTerms& terms, const LossWeights& weights) {
  weights.validate();
  return weights.reconstruction * terms.reconstruction + weights.pooling * terms.pooling() +
         weights.entropy * terms.entropy;
}

double cut_loss_value(const Eigen::MatrixXd& S, const Eigen::MatrixXd& A_tilde,
                      const Eigen::VectorXd& degree) {
  const double num = (S.transpose() * A_tilde * S).trace();
  const double den = (S.transpose() * degree.asDiagonal() * S).trace();
  return -num / den;
}

double orthogonality_loss_value(const Eigen::MatrixXd& S) {
  const Eigen::MatrixXd StS = S.transpose() * S;
  const auto k = S.cols();
  const Eigen::VectorXd mean_diag = Eigen::VectorXd::Constant(k, StS.trace() / static_cast<double>(k));
  const Eigen::MatrixXd target = (mean_diag / mean_diag.norm()).asDiagonal();
  return (StS / StS.norm() - target).norm();
}

double entropy_loss_value(const Eigen::VectorXd& v) {
  return (v.array() * (v.array() + kEntropyEpsilon).log()).sum();
}

// ---------------------------------------------------------------------------

GraphAutoencoder::GraphAutoencoder(ArchitectureConfig arch, FeatureLayout layout,
                                   RenormalizedLaplacian<double> laplacian)
    : arch_(std::move(arch)), layout_(std::move(layout)), laplacian_(std::move(laplacian)) {
  const Eigen::Index n = layout_.total_nodes();
  if (laplacian_.L.rows() != n) throw DimensionError("autoencoder: Laplacian size differs from node count");
  if (arch_.groups < 1 || arch_.latent < 1) throw ParameterError("autoencoder: groups and latent must be positive");
  if (arch_.groups > n) throw ParameterError("autoencoder: group count exceeds node count");
  if (layout_.total_dims() == 0) throw ParameterError("autoencoder: no input features");

  std::mt19937_64 rng(arch_.seed);
  auto make = [&rng](BlockKind kind, ad::Activation act, Eigen::Index in, Eigen::Index out) {
    Layer l{kind, act, Eigen::MatrixXd(in, out)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index j = 0; j < out; ++j) {
      for (Eigen::Index i = 0; i < in; ++i) l.weight(i, j) = dist(rng);
    }
    return l;
  };

  Eigen::Index width = input_width();
  for (int w : arch_.pool_widths) {
    pool_.push_back(make(BlockKind::graph_conv, arch_.activation, width, w));
    width = w;
  }
  pool_.push_back(make(BlockKind::dense, ad::Activation::softmax_rows, width, arch_.groups));

  width = input_width();
  for (int w : arch_.feature_widths) {
    feature_.push_back(make(arch_.feature_block, arch_.activation, width, w));
    width = w;
  }
  feature_.push_back(make(arch_.feature_block, arch_.activation, width, arch_.latent));

  width = arch_.latent;
  for (int w : arch_.decoder_widths) {
    decoder_.push_back(make(arch_.decoder_block, arch_.activation, width, w));
    width = w;
  }
  decoder_.push_back(make(arch_.decoder_block, ad::Activation::identity, width, layout_.total_dims()));
}

Eigen::Index GraphAutoencoder::input_width() const {
  return layout_.total_dims() + (arch_.one_hot ? layout_.total_nodes() : 0);
}

std::vector<Eigen::MatrixXd*> GraphAutoencoder::parameters() {
  std::vector<Eigen::MatrixXd*> out;
  for (auto* block : {&pool_, &feature_, &decoder_}) {
    for (auto& l : *block) out.push_back(&l.weight);
  }
  return out;
}

std::vector<const Eigen::MatrixXd*> GraphAutoencoder::parameters() const {
  std::vector<const Eigen::MatrixXd*> out;
  for (const auto* block : {&pool_, &feature_, &decoder_}) {
    for (const auto& l : *block) out.push_back(&l.weight);
  }
  return out;
}

void GraphAutoencoder::check_period(const PeriodFeatureMatrix& period) const {
  if (period.blocks.size() != layout_.classes.size()) {
    throw InputError("autoencoder: period has " + std::to_string(period.blocks.size()) +
                     " class blocks, model expects " + std::to_string(layout_.classes.size()));
  }
  for (std::size_t s = 0; s < period.blocks.size(); ++s) {
    if (period.blocks[s].rows() != layout_.class_nodes[s] || period.blocks[s].cols() != layout_.class_dims[s]) {
      throw InputError("autoencoder: class '" + layout_.classes[s] + "' block shape differs from training");
    }
  }
}

GraphAutoencoder::Forward GraphAutoencoder::forward(ad::Tape& tape, const Tensor& X, const Tensor& L,
                                                    const std::vector<Tensor>& params) const {
  (void)tape;
  std::size_t p = 0;
  auto apply = [&](const Layer& layer, const Tensor& H) {
    const Tensor& W = params[p++];
    if (layer.kind == BlockKind::graph_conv) return gcn_layer(H, L, W, layer.activation);
    return ad::activation(layer.activation, ad::matmul(H, W));
  };
  Forward f;
  Tensor H = X;
  for (const auto& l : pool_) H = apply(l, H);
  f.S = H;
  H = X;
  for (const auto& l : feature_) H = apply(l, H);
  f.H_latent = H;
  f.Z = pool(f.H_latent, f.S);
  H = unpool(f.S, f.Z);
  for (const auto& l : decoder_) H = apply(l, H);
  f.X_hat = H;
  return f;
}

Tensor GraphAutoencoder::objective(ad::Tape& tape, const PeriodFeatures& data, const LossWeights& weights,
                                   std::vector<Tensor>& params, LossTerms& terms) const {
  weights.validate();
  if (data.periods.empty()) throw InputError("autoencoder: empty dataset");
  params.clear();
  for (const auto* w : parameters()) params.push_back(tape.variable(*w));
  const Tensor L = tape.constant(laplacian_.L);
  const Tensor A_tilde = tape.constant(laplacian_.A_tilde);
  const Tensor D_tilde = tape.constant(laplacian_.degree_matrix());
  const double periods = static_cast<double>(data.periods.size());

  std::vector<double> alpha;
  for (std::size_t s = 0; s < layout_.classes.size(); ++s) alpha.push_back(weights.class_weight(s));

  std::vector<std::vector<Tensor>> X_blocks, X_hat_blocks;
  Tensor cut_sum, orth_sum, ent_sum;
  auto accumulate = [](Tensor& acc, const Tensor& t) { acc = acc.valid() ? ad::add(acc, t) : t; };

  for (const auto& period : data.periods) {
    check_period(period);
    const StackedInput in = assemble_stacked(period, layout_, arch_.one_hot);
    const Tensor X = tape.constant(in.X);
    const Forward f = forward(tape, X, L, params);

    std::vector<Tensor> xb, xh;
    Eigen::Index row = 0;
    for (std::size_t s = 0; s < layout_.classes.size(); ++s) {
      const Eigen::Index ns = layout_.class_nodes[s], ds = layout_.class_dims[s];
      xb.push_back(tape.constant(period.blocks[s]));
      xh.push_back(ad::block(f.X_hat, row, in.band_start[s], ns, ds));
      row += ns;
    }
    X_blocks.push_back(std::move(xb));
    X_hat_blocks.push_back(std::move(xh));

    accumulate(cut_sum, cut_loss(f.S, A_tilde, D_tilde));
    accumulate(orth_sum, orthogonality_loss(f.S));
    const Tensor H0 = tape.constant(in.X.leftCols(layout_.total_dims()));
    accumulate(ent_sum, entropy_loss(f.S, H0));
  }

  const Tensor L_R = reconstruction_loss(X_blocks, X_hat_blocks, alpha, periods);
  const Tensor L_C = ad::scale(cut_sum, 1.0 / periods);
  const Tensor L_O = ad::scale(orth_sum, 1.0 / periods);
  const Tensor L_H = ad::scale(ent_sum, 1.0 / periods);

  terms.reconstruction = L_R.item();
  terms.cut = L_C.item();
  terms.orthogonality = L_O.item();
  terms.entropy = L_H.item();

  Tensor total = ad::add(ad::scale(L_R, weights.reconstruction),
                         ad::scale(ad::add(L_C, L_O), weights.pooling));
  total = ad::add(total, ad::scale(L_H, weights.entropy));
  terms.total = total.item();
  return total;
}

LossTerms GraphAutoencoder::evaluate(const PeriodFeatures& data, const LossWeights& weights) const {
  ad::Tape tape;
  std::vector<Tensor> params;
  LossTerms terms;
  objective(tape, data, weights, params, terms);
  return terms;
}

EncodedPeriod GraphAutoencoder::encode(const PeriodFeatureMatrix& period) const {
  check_period(period);
  ad::Tape tape;
  std::vector<Tensor> params;
  for (const auto* w : parameters()) params.push_back(tape.constant(*w));
  const StackedInput in = assemble_stacked(period, layout_, arch_.one_hot);
  const Forward f = forward(tape, tape.constant(in.X), tape.constant(laplacian_.L), params);
  return {f.S.value(), f.Z.value()};
}

Eigen::MatrixXd GraphAutoencoder::reconstruct(const PeriodFeatureMatrix& period) const {
  check_period(period);
  ad::Tape tape;
  std::vector<Tensor> params;
  for (const auto* w : parameters()) params.push_back(tape.constant(*w));
  const StackedInput in = assemble_stacked(period, layout_, arch_.one_hot);
  return forward(tape, tape.constant(in.X), tape.constant(laplacian_.L), params).X_hat.value();
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& data = j.at("data");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data.at(r).at(c).get<double>();
  }
  return m;
}

nlohmann::json layers_to_json(const std::vector<Layer>& layers) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& l : layers) {
    out.push_back({{"kind", to_string(l.kind)}, {"activation", to_string(l.activation)},
                   {"weight", matrix_to_json(l.weight)}});
  }
  return out;
}

std::vector<Layer> layers_from_json(const nlohmann::json& j) {
  std::vector<Layer> out;
  for (const auto& l : j) {
    out.push_back(Layer{parse_block_kind(l.at("kind")), parse_activation(l.at("activation")),
                        matrix_from_json(l.at("weight"))});
  }
  return out;
}

nlohmann::json terms_to_json(const LossTerms& t) {
  return {{"reconstruction", t.reconstruction}, {"cut", t.cut}, {"orthogonality", t.orthogonality},
          {"entropy", t.entropy}, {"total", t.total}};
}

LossTerms terms_from_json(const nlohmann::json& j) {
  return {j.at("reconstruction"), j.at("cut"), j.at("orthogonality"), j.at("entropy"), j.at("total")};
}

}  // namespace

nlohmann::json GraphAutoencoder::to_json() const {
  nlohmann::json arch = {
      {"groups", arch_.groups},
      {"latent", arch_.latent},
      {"pool_widths", arch_.pool_widths},
      {"feature_widths", arch_.feature_widths},
      {"decoder_widths", arch_.decoder_widths},
      {"feature_block", to_string(arch_.feature_block)},
      {"decoder_block", to_string(arch_.decoder_block)},
      {"activation", to_string(arch_.activation)},
      {"one_hot", arch_.one_hot},
      {"epochs", arch_.epochs},
      {"learning_rate", arch_.learning_rate},
      {"patience", arch_.patience},
      {"plateau_tol", arch_.plateau_tol},
      {"seed", arch_.seed},
  };
  nlohmann::json layout = {
      {"aggregation_resolution", layout_.aggregation_resolution},
      {"periods", layout_.periods},
      {"classes", layout_.classes},
      {"class_nodes", layout_.class_nodes},
      {"class_dims", layout_.class_dims},
  };
  return {{"format", "stagg-autoencoder"},
          {"version", 1},
          {"architecture", arch},
          {"layout", layout},
          {"laplacian",
           {{"L", matrix_to_json(laplacian_.L)},
            {"A_tilde", matrix_to_json(laplacian_.A_tilde)},
            {"degree", matrix_to_json(laplacian_.degree)}}},
          {"pool", layers_to_json(pool_)},
          {"feature", layers_to_json(feature_)},
          {"decoder", layers_to_json(decoder_)}};
}

GraphAutoencoder GraphAutoencoder::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "stagg-autoencoder") throw InputError("not an autoencoder file");
  if (j.value("version", 0) != 1) throw InputError("unsupported autoencoder file version");
  GraphAutoencoder m;
  const auto& a = j.at("architecture");
  m.arch_.groups = a.at("groups");
  m.arch_.latent = a.at("latent");
  m.arch_.pool_widths = a.at("pool_widths").get<std::vector<int>>();
  m.arch_.feature_widths = a.at("feature_widths").get<std::vector<int>>();
  m.arch_.decoder_widths = a.at("decoder_widths").get<std::vector<int>>();
  m.arch_.feature_block = parse_block_kind(a.at("feature_block"));
  m.arch_.decoder_block = parse_block_kind(a.at("decoder_block"));
  m.arch_.activation = parse_activation(a.at("activation"));
  m.arch_.one_hot = a.at("one_hot");
  m.arch_.epochs = a.at("epochs");
  m.arch_.learning_rate = a.at("learning_rate");
  m.arch_.patience = a.at("patience");
  m.arch_.plateau_tol = a.at("plateau_tol");
  m.arch_.seed = a.at("seed");
  const auto& l = j.at("layout");
  m.layout_.aggregation_resolution = l.at("aggregation_resolution");
  m.layout_.periods = l.at("periods");
  m.layout_.classes = l.at("classes").get<std::vector<std::string>>();
  m.layout_.class_nodes = l.at("class_nodes").get<std::vector<Eigen::Index>>();
  m.layout_.class_dims = l.at("class_dims").get<std::vector<Eigen::Index>>();
  const auto& lap = j.at("laplacian");
  m.laplacian_.L = matrix_from_json(lap.at("L"));
  m.laplacian_.A_tilde = matrix_from_json(lap.at("A_tilde"));
  m.laplacian_.degree = matrix_from_json(lap.at("degree"));
  m.pool_ = layers_from_json(j.at("pool"));
  m.feature_ = layers_from_json(j.at("feature"));
  m.decoder_ = layers_from_json(j.at("decoder"));
  return m;
}

nlohmann::json TrainedAutoencoder::to_json(bool include_outputs) const {
  nlohmann::json j = {
      {"model", model.to_json()},
      {"loss_weights",
       {{"reconstruction", weights.reconstruction},
        {"pooling", weights.pooling},
        {"entropy", weights.entropy},
        {"class_weights", weights.class_weights}}},
      {"final_losses", terms_to_json(final_terms)},
      {"epochs_run", history.empty() ? 0 : history.back().epoch},
  };
  if (include_outputs) {
    nlohmann::json outs = nlohmann::json::array();
    for (const auto& o : outputs) outs.push_back({{"S", matrix_to_json(o.S)}, {"Z", matrix_to_json(o.Z)}});
    j["outputs"] = std::move(outs);
  }
  return j;
}

TrainedAutoencoder TrainedAutoencoder::from_json(const nlohmann::json& j) {
  TrainedAutoencoder t;
  t.model = GraphAutoencoder::from_json(j.at("model"));
  const auto& w = j.at("loss_weights");
  t.weights.reconstruction = w.at("reconstruction");
  t.weights.pooling = w.at("pooling");
  t.weights.entropy = w.at("entropy");
  t.weights.class_weights = w.at("class_weights").get<std::vector<double>>();
  t.final_terms = terms_from_json(j.at("final_losses"));
  if (j.contains("outputs")) {
    for (const auto& o : j.at("outputs")) {
      t.outputs.push_back({matrix_from_json(o.at("S")), matrix_from_json(o.at("Z"))});
    }
  }
  return t;
}

std::string TrainedAutoencoder::loss_csv() const {
  CsvTable table;
  table.header = {"epoch", "total", "reconstruction", "cut", "orthogonality", "entropy"};
  for (const auto& r : history) {
    table.rows.push_back({std::to_string(r.epoch), format_number(r.terms.total),
                          format_number(r.terms.reconstruction), format_number(r.terms.cut),
                          format_number(r.terms.orthogonality), format_number(r.terms.entropy)});
  }
  return to_csv(table);
}

// ---------------------------------------------------------------------------
// Training

namespace {

void check_finite(const LossTerms& t, int epoch) {
  const std::pair<const char*, double> terms[] = {{"reconstruction", t.reconstruction},
                                                  {"cut", t.cut},
                                                  {"orthogonality", t.orthogonality},
                                                  {"entropy", t.entropy},
                                                  {"total", t.total}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " + name +
                          " loss is not finite");
    }
  }
}

}  // namespace

TrainedAutoencoder train(const PeriodFeatures& data, const RenormalizedLaplacian<double>& laplacian,
                         const ArchitectureConfig& arch, const LossWeights& weights) {
  return train(data, GraphAutoencoder(arch, data.layout, laplacian), weights);
}

TrainedAutoencoder train(const PeriodFeatures& data, GraphAutoencoder model, const LossWeights& weights) {
  weights.validate();
  if (data.periods.empty()) throw InputError("train: empty dataset");
  const ArchitectureConfig& arch = model.architecture();
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  std::vector<Eigen::MatrixXd*> params = model.parameters();
  std::vector<Eigen::MatrixXd> m1, m2;
  for (const auto* p : params) {
    m1.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
    m2.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
  }

  TrainedAutoencoder out;
  out.weights = weights;
  for (int epoch = 1; epoch <= arch.epochs; ++epoch) {
    ad::Tape tape;
    std::vector<Tensor> leaves;
    LossTerms terms;
    const Tensor loss = model.objective(tape, data, weights, leaves, terms);
    check_finite(terms, epoch);
    out.history.push_back({epoch, terms});

    const ad::Gradients grads = tape.backward(loss);
    const double c1 = 1.0 - std::pow(beta1, epoch);
    const double c2 = 1.0 - std::pow(beta2, epoch);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Eigen::MatrixXd& g = grads[leaves[i]];
      if (!g.allFinite()) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": non-finite gradient");
      }
      m1[i] = beta1 * m1[i] + (1.0 - beta1) * g;
      m2[i] = beta2 * m2[i] + (1.0 - beta2) * g.cwiseProduct(g);
      *params[i] -= (arch.learning_rate * (m1[i] / c1).array() /
                     ((m2[i] / c2).array().sqrt() + eps)).matrix();
    }

    const auto n = out.history.size();
    const auto window = static_cast<std::size_t>(std::max(arch.patience, 1));
    if (arch.patience > 0 && n > window) {
      const double then = out.history[n - 1 - window].terms.total;
      const double rel = std::abs(terms.total - then) / std::max(std::abs(then), 1e-12);
      if (rel < arch.plateau_tol) break;
    }
  }

  out.final_terms = model.evaluate(data, weights);
  check_finite(out.final_terms, static_cast<int>(out.history.size()));
  out.outputs.reserve(data.periods.size());
  for (const auto& p : data.periods) out.outputs.push_back(model.encode(p));
  out.model = std::move(model);
  return out;
}

}  // namespace stagg
