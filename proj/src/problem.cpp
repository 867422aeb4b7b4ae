#include "fednmap/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace fednmap {

NoiseModel NoiseModel::minibatch(int batch_size) {
  if (batch_size < 1)
    throw std::invalid_argument("batch_size must be >= 1");
  NoiseModel nm;
  nm.kind = NoiseKind::Minibatch;
  nm.batch_size = batch_size;
  return nm;
}

NoiseModel NoiseModel::gaussian(double sigma) {
  if (sigma < 0) throw std::invalid_argument("sigma must be nonnegative");
  NoiseModel nm;
  nm.kind = NoiseKind::AdditiveGaussian;
  nm.sigma = sigma;
  return nm;
}

void Problem::check_dim(const Vec& x) const {
  if (x.size() != p_)
    throw std::invalid_argument("model vector has dimension " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(p_));
}

void Problem::check_client(int client) const {
  if (client < 0 || client >= n_)
    throw std::invalid_argument("client index out of range");
}

Vec Problem::batch_gradient(int, const Vec&, const std::vector<int>&) const {
  throw std::logic_error(kind_name() + " has no per-sample structure");
}

Vec Problem::stochastic_gradient(int client, const Vec& x,
                                 RngStream& rng) const {
  check_client(client);
  check_dim(x);
  if (noise_.kind == NoiseKind::AdditiveGaussian) {
    Vec g = full_gradient(client, x);
    if (noise_.sigma > 0) {
      // Per-coordinate std sigma/sqrt(p) so E||noise||^2 = sigma^2.
      double s = noise_.sigma / std::sqrt(static_cast<double>(p_));
      for (int j = 0; j < p_; ++j) g[j] += s * rng.next_gaussian();
    }
    return g;
  }
  int m = shard_size(client);
  if (m == 0) throw std::runtime_error("stochastic_gradient: empty shard");
  std::vector<int> rows(noise_.batch_size);
  for (int b = 0; b < noise_.batch_size; ++b)
    rows[b] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(m)));
  return batch_gradient(client, x, rows);
}

double Problem::average_loss(const Vec& x) const {
  double s = 0.0;
  for (int i = 0; i < n_; ++i) s += loss(i, x);
  return s / n_;
}

Vec Problem::average_gradient(const Vec& x) const {
  Vec g = Vec::Zero(p_);
  for (int i = 0; i < n_; ++i) g += full_gradient(i, x);
  return g / n_;
}

double Problem::estimate_sigma_sq(const Vec& x, int draws,
                                  std::uint64_t seed) const {
  double acc = 0.0;
  for (int i = 0; i < n_; ++i) {
    Vec mean = full_gradient(i, x);
    for (int k = 0; k < draws; ++k) {
      RngStream rng(seed, static_cast<std::uint64_t>(i), 0,
                    static_cast<std::uint64_t>(k));
      acc += (stochastic_gradient(i, x, rng) - mean).squaredNorm();
    }
  }
  return acc / (static_cast<double>(n_) * draws);
}

// ---------------------------------------------------------------------------
// CompositeQuadratic

CompositeQuadratic::CompositeQuadratic(std::vector<Mat> a, std::vector<Vec> b)
    : Problem(static_cast<int>(a.size()),
              a.empty() ? 0 : static_cast<int>(a.front().rows())),
      a_(std::move(a)),
      b_(std::move(b)) {
  if (a_.empty() || a_.size() != b_.size())
    throw std::invalid_argument("quadratic needs matching A_i, b_i lists");
  for (std::size_t i = 0; i < a_.size(); ++i) {
    if (a_[i].rows() != p_ || a_[i].cols() != p_ || b_[i].size() != p_)
      throw std::invalid_argument("quadratic blocks disagree on dimension");
  }
  double lmax = 0.0;
  for (const Mat& m : a_) lmax = std::max(lmax, power_iteration_lmax(m));
  l_bound_ = lmax;
}

double CompositeQuadratic::loss(int client, const Vec& x) const {
  check_client(client);
  check_dim(x);
  return 0.5 * x.dot(a_[client] * x) - b_[client].dot(x);
}

Vec CompositeQuadratic::full_gradient(int client, const Vec& x) const {
  check_client(client);
  check_dim(x);
  return a_[client] * x - b_[client];
}

std::unique_ptr<CompositeQuadratic> make_composite_quadratic(
    int n, int p, double hetero, std::uint64_t seed) {
  if (n < 1 || p < 1)
    throw std::invalid_argument("make_composite_quadratic: n, p must be >= 1");
  // Fixed diagonal D with entries spread over [0.5, 1.5].
  Vec diag(p);
  for (int j = 0; j < p; ++j)
    diag[j] = 0.5 + (p == 1 ? 0.5 : static_cast<double>(j) / (p - 1));
  std::vector<Mat> a(n);
  std::vector<Vec> b(n);
  for (int i = 0; i < n; ++i) {
    Mat ai = diag.asDiagonal();
    if (hetero != 0.0) {
      RngStream rng(seed, static_cast<std::uint64_t>(i), 1);
      Mat g(p, p);
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) g(r, c) = rng.next_gaussian();
      Mat s = (g * g.transpose()) / static_cast<double>(p);
      s = 0.5 * (s + s.transpose());  // exact symmetry
      ai += hetero * s;
    }
    RngStream rng_b(seed, static_cast<std::uint64_t>(i), 2);
    Vec bi(p);
    for (int j = 0; j < p; ++j) bi[j] = rng_b.next_gaussian();
    a[i] = std::move(ai);
    b[i] = std::move(bi);
  }
  return std::make_unique<CompositeQuadratic>(std::move(a), std::move(b));
}

double power_iteration_lmax(const Mat& a, int max_iter, double rel_tol) {
  const int p = static_cast<int>(a.rows());
  if (p == 0) return 0.0;
  // Deterministic start with energy in every eigendirection.
  Vec v(p);
  RngStream rng(0x9d5f00dULL, static_cast<std::uint64_t>(p));
  for (int j = 0; j < p; ++j) v[j] = 1.0 + 0.01 * rng.next_double();
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vec av = a * v;
    double nrm = av.norm();
    if (nrm == 0.0) return 0.0;
    v = av / nrm;
    double next = v.dot(a * v);
    if (std::abs(next - lambda) <= rel_tol * std::max(1.0, std::abs(next))) {
      return next;
    }
    lambda = next;
  }
  return lambda;
}

// ---------------------------------------------------------------------------
// Shared softmax helpers

namespace {

// Numerically stable softmax of logits, in place.
void softmax_inplace(Vec& o) {
  double mx = o.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index k = 0; k < o.size(); ++k) {
    o[k] = std::exp(o[k] - mx);
    sum += o[k];
  }
  o /= sum;
}

int shard_count(const std::vector<ClientShard>& shards, int client) {
  return static_cast<int>(shards[client].sample_indices.size());
}

std::vector<int> all_rows(const std::vector<ClientShard>& shards, int client) {
  std::vector<int> rows(shards[client].sample_indices.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// LogisticRegression

LogisticRegression::LogisticRegression(std::shared_ptr<const Dataset> data,
                                       std::vector<ClientShard> shards)
    : Problem(static_cast<int>(shards.size()),
              data->num_classes * (data->feature_dim() + 1)),
      data_(std::move(data)),
      shards_(std::move(shards)),
      classes_(data_->num_classes),
      d_(data_->feature_dim()) {
  if (classes_ < 2) throw std::invalid_argument("need at least two classes");
  // Standard smoothness heuristic: lambda_max(X'X)/(4 N_i) on the
  // bias-augmented design, max over clients. Softmax curvature can exceed
  // the binary 1/4 factor; the smoothness check reports violations.
  double lmax = 0.0;
  for (int i = 0; i < n_; ++i) {
    const auto& idx = shards_[i].sample_indices;
    if (idx.empty()) continue;
    Mat xtx = Mat::Zero(d_ + 1, d_ + 1);
    Vec row(d_ + 1);
    for (int r : idx) {
      row.head(d_) = data_->features.row(r).transpose();
      row[d_] = 1.0;
      xtx += row * row.transpose();
    }
    lmax = std::max(lmax, power_iteration_lmax(xtx) /
                              (4.0 * static_cast<double>(idx.size())));
  }
  l_bound_ = lmax;
}

int LogisticRegression::shard_size(int client) const {
  check_client(client);
  return shard_count(shards_, client);
}

double LogisticRegression::loss(int client, const Vec& x) const {
  check_client(client);
  check_dim(x);
  const auto& idx = shards_[client].sample_indices;
  if (idx.empty()) return 0.0;
  Eigen::Map<const Mat> w(x.data(), d_, classes_);  // column-major view of W'
  Eigen::Map<const Vec> bias(x.data() + classes_ * d_, classes_);
  double total = 0.0;
  for (int r : idx) {
    Vec o = w.transpose() * data_->features.row(r).transpose() + bias;
    double mx = o.maxCoeff();
    double lse = 0.0;
    for (int k = 0; k < classes_; ++k) lse += std::exp(o[k] - mx);
    total += mx + std::log(lse) - o[data_->labels[r]];
  }
  return total / static_cast<double>(idx.size());
}

Vec LogisticRegression::batch_gradient(int client, const Vec& x,
                                       const std::vector<int>& rows) const {
  check_client(client);
  check_dim(x);
  const auto& idx = shards_[client].sample_indices;
  Eigen::Map<const Mat> w(x.data(), d_, classes_);
  Eigen::Map<const Vec> bias(x.data() + classes_ * d_, classes_);
  Vec grad = Vec::Zero(p_);
  Eigen::Map<Mat> gw(grad.data(), d_, classes_);
  Eigen::Map<Vec> gb(grad.data() + classes_ * d_, classes_);
  for (int rr : rows) {
    int r = idx[rr];
    Vec feat = data_->features.row(r).transpose();
    Vec o = w.transpose() * feat + bias;
    softmax_inplace(o);
    o[data_->labels[r]] -= 1.0;  // dL/dlogits
    gw += feat * o.transpose();
    gb += o;
  }
  return grad / static_cast<double>(rows.size());
}

Vec LogisticRegression::full_gradient(int client, const Vec& x) const {
  check_client(client);
  const auto& idx = shards_[client].sample_indices;
  if (idx.empty()) {
    check_dim(x);
    return Vec::Zero(p_);
  }
  return batch_gradient(client, x, all_rows(shards_, client));
}

std::optional<double> LogisticRegression::accuracy(const Dataset& eval,
                                                   const Vec& x) const {
  check_dim(x);
  Eigen::Map<const Mat> w(x.data(), d_, classes_);
  Eigen::Map<const Vec> bias(x.data() + classes_ * d_, classes_);
  int hits = 0;
  for (int r = 0; r < eval.size(); ++r) {
    Vec o = w.transpose() * eval.features.row(r).transpose() + bias;
    Eigen::Index best;
    o.maxCoeff(&best);
    if (static_cast<int>(best) == eval.labels[r]) ++hits;
  }
  return eval.size() ? static_cast<double>(hits) / eval.size()
                     : std::optional<double>{};
}

// The column-major d x k map above views row k0 of the row-major (k x d) W
// as its column k0, hence the w.transpose() in the logit computation.

// ---------------------------------------------------------------------------
// MlpOneHidden

namespace {

struct MlpDims {
  int d, h, k;
  int w1_off() const { return 0; }
  int b1_off() const { return h * d; }
  int w2_off() const { return h * d + h; }
  int b2_off() const { return h * d + h + k * h; }
  int total() const { return h * d + h + k * h + k; }
};

// Row-major (rows x cols) view over a slice of the packed vector.
using RowMajorMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace

MlpOneHidden::MlpOneHidden(std::shared_ptr<const Dataset> data,
                           std::vector<ClientShard> shards, int hidden,
                           std::uint64_t seed, int l_probe_pairs)
    : Problem(static_cast<int>(shards.size()),
              MlpDims{data->feature_dim(), hidden, data->num_classes}.total()),
      data_(std::move(data)),
      shards_(std::move(shards)),
      hidden_(hidden),
      classes_(data_->num_classes),
      d_(data_->feature_dim()) {
  if (hidden_ < 1) throw std::invalid_argument("hidden width must be >= 1");
  if (classes_ < 2) throw std::invalid_argument("need at least two classes");

  // Empirical L estimate: max local Lipschitz ratio of the averaged gradient
  // over probe pairs, x2 safety. Probes run on a fixed subsample so problem
  // construction stays cheap on larger datasets.
  const int probe_rows = std::min(data_->size(), 200);
  std::vector<int> rows(probe_rows);
  std::iota(rows.begin(), rows.end(), 0);
  RngStream rng(seed, 0xabcdULL);
  double ratio = 0.0;
  Vec x(p_), dx(p_);
  for (int k = 0; k < l_probe_pairs; ++k) {
    for (int j = 0; j < p_; ++j) x[j] = 0.5 * rng.next_gaussian();
    for (int j = 0; j < p_; ++j) dx[j] = rng.next_gaussian();
    dx *= 1e-3 / dx.norm();
    Vec g0 = grad_rows(x, rows);
    Vec g1 = grad_rows(x + dx, rows);
    ratio = std::max(ratio, (g1 - g0).norm() / dx.norm());
  }
  l_bound_ = 2.0 * ratio;
}

int MlpOneHidden::shard_size(int client) const {
  check_client(client);
  return shard_count(shards_, client);
}

double MlpOneHidden::loss_rows(const Vec& x, const std::vector<int>& rows) const {
  MlpDims dm{d_, hidden_, classes_};
  RowMajorMap w1(x.data() + dm.w1_off(), hidden_, d_);
  Eigen::Map<const Vec> b1(x.data() + dm.b1_off(), hidden_);
  RowMajorMap w2(x.data() + dm.w2_off(), classes_, hidden_);
  Eigen::Map<const Vec> b2(x.data() + dm.b2_off(), classes_);
  double total = 0.0;
  for (int r : rows) {
    Vec u = w1 * data_->features.row(r).transpose() + b1;
    Vec a = (1.0 + (-u.array()).exp()).inverse().matrix();
    Vec o = w2 * a + b2;
    double mx = o.maxCoeff();
    double lse = 0.0;
    for (int k = 0; k < classes_; ++k) lse += std::exp(o[k] - mx);
    total += mx + std::log(lse) - o[data_->labels[r]];
  }
  return total / static_cast<double>(rows.size());
}

Vec MlpOneHidden::grad_rows(const Vec& x, const std::vector<int>& rows) const {
  MlpDims dm{d_, hidden_, classes_};
  RowMajorMap w1(x.data() + dm.w1_off(), hidden_, d_);
  Eigen::Map<const Vec> b1(x.data() + dm.b1_off(), hidden_);
  RowMajorMap w2(x.data() + dm.w2_off(), classes_, hidden_);
  Eigen::Map<const Vec> b2(x.data() + dm.b2_off(), classes_);

  Vec grad = Vec::Zero(p_);
  RowMajorMutMap gw1(grad.data() + dm.w1_off(), hidden_, d_);
  Eigen::Map<Vec> gb1(grad.data() + dm.b1_off(), hidden_);
  RowMajorMutMap gw2(grad.data() + dm.w2_off(), classes_, hidden_);
  Eigen::Map<Vec> gb2(grad.data() + dm.b2_off(), classes_);

  for (int r : rows) {
    Vec feat = data_->features.row(r).transpose();
    Vec u = w1 * feat + b1;
    Vec a = (1.0 + (-u.array()).exp()).inverse().matrix();
    Vec o = w2 * a + b2;
    softmax_inplace(o);
    o[data_->labels[r]] -= 1.0;                       // dL/dlogits
    Vec da = w2.transpose() * o;
    Vec du = (da.array() * a.array() * (1.0 - a.array())).matrix();
    gw2 += o * a.transpose();
    gb2 += o;
    gw1 += du * feat.transpose();
    gb1 += du;
  }
  return grad / static_cast<double>(rows.size());
}

double MlpOneHidden::loss(int client, const Vec& x) const {
  check_client(client);
  check_dim(x);
  const auto& idx = shards_[client].sample_indices;
  if (idx.empty()) return 0.0;
  return loss_rows(x, idx);
}

Vec MlpOneHidden::full_gradient(int client, const Vec& x) const {
  check_client(client);
  check_dim(x);
  const auto& idx = shards_[client].sample_indices;
  if (idx.empty()) return Vec::Zero(p_);
  return grad_rows(x, idx);
}

Vec MlpOneHidden::batch_gradient(int client, const Vec& x,
                                 const std::vector<int>& rows) const {
  check_client(client);
  check_dim(x);
  const auto& idx = shards_[client].sample_indices;
  std::vector<int> abs_rows(rows.size());
  for (std::size_t b = 0; b < rows.size(); ++b) abs_rows[b] = idx[rows[b]];
  return grad_rows(x, abs_rows);
}

std::optional<double> MlpOneHidden::accuracy(const Dataset& eval,
                                             const Vec& x) const {
  check_dim(x);
  MlpDims dm{d_, hidden_, classes_};
  RowMajorMap w1(x.data() + dm.w1_off(), hidden_, d_);
  Eigen::Map<const Vec> b1(x.data() + dm.b1_off(), hidden_);
  RowMajorMap w2(x.data() + dm.w2_off(), classes_, hidden_);
  Eigen::Map<const Vec> b2(x.data() + dm.b2_off(), classes_);
  int hits = 0;
  for (int r = 0; r < eval.size(); ++r) {
    Vec u = w1 * eval.features.row(r).transpose() + b1;
    Vec a = (1.0 + (-u.array()).exp()).inverse().matrix();
    Vec o = w2 * a + b2;
    Eigen::Index best;
    o.maxCoeff(&best);
    if (static_cast<int>(best) == eval.labels[r]) ++hits;
  }
  return eval.size() ? static_cast<double>(hits) / eval.size()
                     : std::optional<double>{};
}

// ---------------------------------------------------------------------------
// Partitioners

std::vector<ClientShard> partition_sorted_by_label(const Dataset& ds, int n) {
  const int total = ds.size();
  if (n < 1 || n > total)
    throw std::invalid_argument("partition needs 1 <= n <= N");
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return ds.labels[a] < ds.labels[b];
  });
  std::vector<ClientShard> shards(n);
  int base = total / n;
  int pos = 0;
  for (int i = 0; i < n; ++i) {
    int take = (i == n - 1) ? total - pos : base;
    shards[i].owner = i;
    shards[i].sample_indices.assign(order.begin() + pos,
                                    order.begin() + pos + take);
    pos += take;
  }
  return shards;
}

namespace {

// Marsaglia-Tsang; alpha < 1 boosted via G(alpha+1) * U^(1/alpha).
double gamma_draw(RngStream& rng, double alpha) {
  if (alpha < 1.0) {
    double u = 1.0 - rng.next_double();  // (0,1]
    return gamma_draw(rng, alpha + 1.0) * std::pow(u, 1.0 / alpha);
  }
  double d = alpha - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double z = rng.next_gaussian();
    double v = 1.0 + c * z;
    if (v <= 0) continue;
    v = v * v * v;
    double u = 1.0 - rng.next_double();
    if (std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) return d * v;
  }
}

}  // namespace

std::vector<ClientShard> partition_dirichlet(const Dataset& ds, int n,
                                             double alpha, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("need n >= 1");
  if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
  std::vector<ClientShard> shards(n);
  for (int i = 0; i < n; ++i) shards[i].owner = i;

  int num_classes = 0;
  for (int r = 0; r < ds.size(); ++r)
    num_classes = std::max(num_classes, ds.labels[r] + 1);

  for (int c = 0; c < num_classes; ++c) {
    std::vector<int> members;
    for (int r = 0; r < ds.size(); ++r)
      if (ds.labels[r] == c) members.push_back(r);
    if (members.empty()) continue;
    const int m = static_cast<int>(members.size());

    std::vector<double> w(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      w[i] = gamma_draw(rng, alpha);
      sum += w[i];
    }
    // Largest-remainder rounding of the proportional quotas.
    std::vector<int> take(n);
    std::vector<std::pair<double, int>> rem(n);
    int assigned = 0;
    for (int i = 0; i < n; ++i) {
      double quota = m * w[i] / sum;
      take[i] = static_cast<int>(std::floor(quota));
      rem[i] = {quota - take[i], i};
      assigned += take[i];
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;  // deterministic tie-break
    });
    for (int k = 0; k < m - assigned; ++k) take[rem[k].second]++;

    int pos = 0;
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < take[i]; ++t)
        shards[i].sample_indices.push_back(members[pos++]);
    }
  }
  return shards;
}

int count_empty_shards(const std::vector<ClientShard>& shards) {
  int k = 0;
  for (const auto& s : shards)
    if (s.sample_indices.empty()) ++k;
  return k;
}

void check_disjoint_cover(const Dataset& ds,
                          const std::vector<ClientShard>& shards) {
  std::set<int> seen;
  std::size_t total = 0;
  for (const auto& s : shards) {
    for (int r : s.sample_indices) {
      if (r < 0 || r >= ds.size())
        throw std::invalid_argument("shard index out of range");
      if (!seen.insert(r).second)
        throw std::invalid_argument("shards overlap at sample " +
                                    std::to_string(r));
      ++total;
    }
  }
  if (total != static_cast<std::size_t>(ds.size()))
    throw std::invalid_argument("shards do not cover the dataset");
}

Dataset make_synthetic_image_dataset(int samples, int side, int classes,
                                     std::uint64_t seed) {
  if (samples < 1 || side < 1 || classes < 2)
    throw std::invalid_argument("bad synthetic dataset shape");
  const int d = side * side;
  Dataset ds;
  ds.num_classes = classes;
  ds.features.resize(samples, d);
  ds.labels.resize(samples);
  Mat templates(classes, d);
  RngStream trng(seed, 0xfeedULL);
  for (int c = 0; c < classes; ++c)
    for (int j = 0; j < d; ++j) templates(c, j) = trng.next_double();
  for (int r = 0; r < samples; ++r) {
    int c = r % classes;  // balanced labels
    ds.labels[r] = c;
    RngStream rng(seed, 1, static_cast<std::uint64_t>(r));
    for (int j = 0; j < d; ++j) {
      double v = templates(c, j) + 0.25 * rng.next_gaussian();
      v = std::clamp(v, 0.0, 1.0);
      // Quantize to u8 levels so round-tripping through IDX files is exact.
      ds.features(r, j) = std::round(v * 255.0) / 255.0;
    }
  }
  return ds;
}

}  // namespace fednmap
