#pragma once

// Graph-convolutional autoencoder with MinCut pooling.
//
// Encoder: a pooling block (graph convolutions, then a dense softmax layer)
// produces the soft assignment S; a feature block produces node embeddings H_l.
// The pooled latent is Z = S^T H_l. The decoder unpools with S Z and maps back
// to the input feature width with graph convolutions (or dense layers).

#include "stagg/autodiff.hpp"
#include "stagg/features.hpp"
#include "stagg/graph.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace stagg {

enum class BlockKind { graph_conv, dense };

BlockKind parse_block_kind(const std::string& s);
std::string to_string(BlockKind k);
ad::Activation parse_activation(const std::string& s);
std::string to_string(ad::Activation a);

struct ArchitectureConfig {
  int groups = 6;                    // |N'|
  int latent = 4;                    // d'
  std::vector<int> pool_widths{16};  // hidden graph-conv widths of the pooling block
  std::vector<int> feature_widths;   // hidden widths of the feature block before the latent layer
  std::vector<int> decoder_widths;   // hidden widths of the decoder before the output layer
  BlockKind feature_block = BlockKind::graph_conv;
  BlockKind decoder_block = BlockKind::graph_conv;
  ad::Activation activation = ad::Activation::tanh;
  bool one_hot = true;
  int epochs = 500;
  double learning_rate = 1e-3;
  int patience = 50;            // plateau window for early stopping
  double plateau_tol = 1e-6;    // relative change over the window
  std::uint64_t seed = 0;
};

struct LossWeights {
  double reconstruction = 1.0;  // alpha_R
  double pooling = 1.0;         // alpha_P
  double entropy = 1.0;         // alpha_H
  std::vector<double> class_weights;  // alpha_s; empty means 1 for every class

  /// PL, PRL, PHL or PRHL.
  static LossWeights preset(const std::string& name);
  void validate() const;
  double class_weight(std::size_t s) const;
};

/// Entropy-loss guard added inside the logarithm.
inline constexpr double kEntropyEpsilon = 1e-9;

/// sigma(L H Theta).
ad::Tensor gcn_layer(const ad::Tensor& H, const ad::Tensor& L, const ad::Tensor& theta,
                     ad::Activation act);
/// Z = S^T H.
ad::Tensor pool(const ad::Tensor& H, const ad::Tensor& S);
/// S Z.
ad::Tensor unpool(const ad::Tensor& S, const ad::Tensor& Z);
/// -Tr(S^T A~ S) / Tr(S^T D~ S).
ad::Tensor cut_loss(const ad::Tensor& S, const ad::Tensor& A_tilde, const ad::Tensor& D_tilde);
/// || S^T S / ||S^T S||_F - I / sqrt(k) ||_F.
ad::Tensor orthogonality_loss(const ad::Tensor& S);
/// v^T log(v + eps) with v = S^T H0 1.
ad::Tensor entropy_loss(const ad::Tensor& S, const ad::Tensor& H0);
/// sum_t sum_s alpha_s / |D| ||X_s - Xhat_s||_F^2 over the given class blocks.
ad::Tensor reconstruction_loss(const std::vector<std::vector<ad::Tensor>>& X,
                               const std::vector<std::vector<ad::Tensor>>& X_hat,
                               const std::vector<double>& alpha, double num_periods);

struct LossTerms {
  double reconstruction = 0.0;
  double cut = 0.0;
  double orthogonality = 0.0;
  double entropy = 0.0;
  double total = 0.0;

  double pooling() const { return cut + orthogonality; }
};

/// alpha_R L_R + alpha_P (L_C + L_O) + alpha_H L_H; rejects all-zero weights.
double total_loss(const LossTerms& terms, const LossWeights& weights);

struct Layer {
  BlockKind kind = BlockKind::graph_conv;
  ad::Activation activation = ad::Activation::tanh;
  Eigen::MatrixXd weight;
};

struct EncodedPeriod {
  Eigen::MatrixXd S;  // |N| x |N'|
  Eigen::MatrixXd Z;  // |N'| x d'
};

class GraphAutoencoder {
 public:
  GraphAutoencoder() = default;
  /// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
  GraphAutoencoder(ArchitectureConfig arch, FeatureLayout layout, RenormalizedLaplacian<double> laplacian);

  const ArchitectureConfig& architecture() const { return arch_; }
  const FeatureLayout& layout() const { return layout_; }
  const RenormalizedLaplacian<double>& laplacian() const { return laplacian_; }
  Eigen::Index input_width() const;

  std::vector<Layer>& pool_layers() { return pool_; }
  std::vector<Layer>& feature_layers() { return feature_; }
  std::vector<Layer>& decoder_layers() { return decoder_; }
  const std::vector<Layer>& pool_layers() const { return pool_; }
  const std::vector<Layer>& feature_layers() const { return feature_; }
  const std::vector<Layer>& decoder_layers() const { return decoder_; }

  /// Flat list of all trainable weights.
  std::vector<Eigen::MatrixXd*> parameters();
  std::vector<const Eigen::MatrixXd*> parameters() const;

  /// Per-term losses averaged as in the training objective, over the given periods.
  LossTerms evaluate(const PeriodFeatures& data, const LossWeights& weights) const;

  /// Builds the full objective on `tape`; `params` receives the leaf handles of parameters().
  ad::Tensor objective(ad::Tape& tape, const PeriodFeatures& data, const LossWeights& weights,
                       std::vector<ad::Tensor>& params, LossTerms& terms) const;

  EncodedPeriod encode(const PeriodFeatureMatrix& period) const;
  Eigen::MatrixXd reconstruct(const PeriodFeatureMatrix& period) const;

  nlohmann::json to_json() const;
  static GraphAutoencoder from_json(const nlohmann::json& j);

 private:
  struct Forward {
    ad::Tensor S, H_latent, Z, X_hat;
  };
  Forward forward(ad::Tape& tape, const ad::Tensor& X, const ad::Tensor& L,
                  const std::vector<ad::Tensor>& params) const;
  void check_period(const PeriodFeatureMatrix& period) const;

  ArchitectureConfig arch_;
  FeatureLayout layout_;
  RenormalizedLaplacian<double> laplacian_;
  std::vector<Layer> pool_, feature_, decoder_;
};

struct EpochRecord {
  int epoch = 0;
  LossTerms terms;
};

struct TrainedAutoencoder {
  GraphAutoencoder model;
  LossWeights weights;
  LossTerms final_terms;
  std::vector<EpochRecord> history;
  std::vector<EncodedPeriod> outputs;  // S^(t), Z^(t) for every period

  nlohmann::json to_json(bool include_outputs = true) const;
  static TrainedAutoencoder from_json(const nlohmann::json& j);
  std::string loss_csv() const;
};

/// Full-batch Adam training; deterministic given arch.seed.
TrainedAutoencoder train(const PeriodFeatures& data, const RenormalizedLaplacian<double>& laplacian,
                         const ArchitectureConfig& arch, const LossWeights& weights);

/// Same, starting from an existing model (0 epochs leaves it untouched).
TrainedAutoencoder train(const PeriodFeatures& data, GraphAutoencoder model, const LossWeights& weights);

// Plain-value evaluations used by property checks.
double cut_loss_value(const Eigen::MatrixXd& S, const Eigen::MatrixXd& A_tilde,
                      const Eigen::VectorXd& degree);
double orthogonality_loss_value(const Eigen::MatrixXd& S);
double entropy_loss_value(const Eigen::VectorXd& group_sums);

}  // namespace stagg
