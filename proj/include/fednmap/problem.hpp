#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fednmap/rng.hpp"
#include "fednmap/types.hpp"

namespace fednmap {

struct Dataset {
  Mat features;   // N x d, rows finite
  IntVec labels;  // N (class ids for classification)
  int num_classes = 0;

  int size() const { return static_cast<int>(features.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
};

struct ClientShard {
  int owner = 0;
  std::vector<int> sample_indices;  // indices into the dataset
};

enum class NoiseKind { Minibatch, AdditiveGaussian };

struct NoiseModel {
  NoiseKind kind = NoiseKind::AdditiveGaussian;
  int batch_size = 1;   // minibatch mode
  double sigma = 0.0;   // gaussian mode: E||g - grad f||^2 = sigma^2

  static NoiseModel minibatch(int batch_size);
  static NoiseModel gaussian(double sigma);
};

/// Smooth part of the composite objective: per-client losses f_i with exact
/// gradients plus a lane-seeded stochastic gradient oracle. Instances are
/// immutable after construction and safe to share across worker threads.
class Problem {
 public:
  virtual ~Problem() = default;

  int num_clients() const { return n_; }
  int dim() const { return p_; }
  /// Smoothness constant estimate; exact for quadratics, a documented
  /// heuristic for the data-driven kinds.
  double l_bound() const { return l_bound_; }
  const NoiseModel& noise() const { return noise_; }
  void set_noise(const NoiseModel& nm) { noise_ = nm; }

  virtual std::string kind_name() const = 0;
  virtual double loss(int client, const Vec& x) const = 0;
  virtual Vec full_gradient(int client, const Vec& x) const = 0;

  /// Gradient averaged over the given sample rows of a client's shard.
  /// Only meaningful for data-backed problems; the quadratic kind throws.
  virtual Vec batch_gradient(int client, const Vec& x,
                             const std::vector<int>& rows) const;
  virtual int shard_size(int /*client*/) const { return 0; }

  /// One unbiased stochastic gradient draw. Minibatch mode samples
  /// batch_size shard rows uniformly with replacement; gaussian mode adds
  /// N(0, sigma^2/p I) to the exact gradient.
  Vec stochastic_gradient(int client, const Vec& x, RngStream& rng) const;

  double average_loss(const Vec& x) const;
  Vec average_gradient(const Vec& x) const;

  /// Classification accuracy on an evaluation set; nullopt for non-classifiers.
  virtual std::optional<double> accuracy(const Dataset& eval,
                                         const Vec& x) const {
    (void)eval;
    (void)x;
    return std::nullopt;
  }

  /// Empirical estimate of the stochastic-gradient variance E||g - grad f||^2
  /// at the point x (mean over clients, `draws` samples each). In gaussian
  /// mode the exact sigma^2 is known; this is mainly for minibatch mode where
  /// no closed form exists.
  double estimate_sigma_sq(const Vec& x, int draws, std::uint64_t seed) const;

 protected:
  Problem(int n, int p) : n_(n), p_(p) {}
  void check_dim(const Vec& x) const;
  void check_client(int client) const;

  int n_ = 0;
  int p_ = 0;
  double l_bound_ = 0.0;
  NoiseModel noise_;
};

/// f_i(x) = 1/2 x'A_i x - b_i'x with symmetric PSD A_i.
class CompositeQuadratic final : public Problem {
 public:
  CompositeQuadratic(std::vector<Mat> a, std::vector<Vec> b);

  std::string kind_name() const override { return "quadratic"; }
  double loss(int client, const Vec& x) const override;
  Vec full_gradient(int client, const Vec& x) const override;

  const Mat& a_matrix(int client) const { return a_[client]; }
  const Vec& b_vector(int client) const { return b_[client]; }

 private:
  std::vector<Mat> a_;
  std::vector<Vec> b_;
};

/// A_i = D + hetero * S_i with a fixed positive diagonal D and a random PSD
/// perturbation S_i; L_bound = max_i lambda_max(A_i) via power iteration.
std::unique_ptr<CompositeQuadratic> make_composite_quadratic(
    int n, int p, double hetero, std::uint64_t seed);

/// Softmax cross-entropy over the client shard; parameters are
/// [W row-major (k x d), bias (k)], p = k*(d+1).
class LogisticRegression final : public Problem {
 public:
  LogisticRegression(std::shared_ptr<const Dataset> data,
                     std::vector<ClientShard> shards);

  std::string kind_name() const override { return "logistic"; }
  double loss(int client, const Vec& x) const override;
  Vec full_gradient(int client, const Vec& x) const override;
  Vec batch_gradient(int client, const Vec& x,
                     const std::vector<int>& rows) const override;
  int shard_size(int client) const override;
  std::optional<double> accuracy(const Dataset& eval,
                                 const Vec& x) const override;

 private:
  std::shared_ptr<const Dataset> data_;
  std::vector<ClientShard> shards_;
  int classes_ = 0;
  int d_ = 0;
};

/// One sigmoid hidden layer, softmax cross-entropy output. Parameter layout
/// is [W1 row-major (h x d), b1 (h), W2 row-major (k x h), b2 (k)], fixed so
/// ModelVector layouts are portable.
class MlpOneHidden final : public Problem {
 public:
  /// l_probe_pairs local Lipschitz probes (x2 safety) estimate L_bound;
  /// sigmoid MLPs have no usable closed form.
  MlpOneHidden(std::shared_ptr<const Dataset> data,
               std::vector<ClientShard> shards, int hidden,
               std::uint64_t seed, int l_probe_pairs = 1000);

  std::string kind_name() const override { return "mlp"; }
  double loss(int client, const Vec& x) const override;
  Vec full_gradient(int client, const Vec& x) const override;
  Vec batch_gradient(int client, const Vec& x,
                     const std::vector<int>& rows) const override;
  int shard_size(int client) const override;
  std::optional<double> accuracy(const Dataset& eval,
                                 const Vec& x) const override;

  int hidden() const { return hidden_; }

 private:
  double loss_rows(const Vec& x, const std::vector<int>& rows) const;
  Vec grad_rows(const Vec& x, const std::vector<int>& rows) const;

  std::shared_ptr<const Dataset> data_;
  std::vector<ClientShard> shards_;
  int hidden_ = 0;
  int classes_ = 0;
  int d_ = 0;
};

/// Stable sort by (label, original index), contiguous slices of size N/n
/// with the remainder going to the last client.
std::vector<ClientShard> partition_sorted_by_label(const Dataset& ds, int n);

/// Per class, split the class's indices across clients by proportions drawn
/// from Dirichlet(alpha * 1_n), rounded largest-remainder. Empty shards are
/// permitted.
std::vector<ClientShard> partition_dirichlet(const Dataset& ds, int n,
                                             double alpha, RngStream& rng);

/// Number of empty shards (Dirichlet splits can starve clients).
int count_empty_shards(const std::vector<ClientShard>& shards);

/// Throws std::invalid_argument unless the shards are disjoint and cover the
/// dataset exactly.
void check_disjoint_cover(const Dataset& ds,
                          const std::vector<ClientShard>& shards);

/// Deterministic multi-class blob images for desk-scale classification runs:
/// each class has a random template in [0,1]^(side*side); samples are the
/// template plus pixel noise, quantized to u8 levels like an IDX file.
Dataset make_synthetic_image_dataset(int samples, int side, int classes,
                                     std::uint64_t seed);

/// lambda_max of a symmetric PSD matrix by power iteration.
double power_iteration_lmax(const Mat& a, int max_iter = 20000,
                            double rel_tol = 1e-13);

}  // namespace fednmap
