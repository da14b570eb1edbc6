#pragma once

// Frozen mini point classifier (shared per-point MLP, max pooling, linear
// classifier), its pre-training, and the sampler training / evaluation loops
// that keep it fixed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lightn/checkpoint.hpp"
#include "lightn/dataset.hpp"
#include "lightn/errors.hpp"
#include "lightn/losses.hpp"
#include "lightn/model.hpp"
#include "lightn/ops.hpp"
#include "lightn/projection.hpp"
#include "lightn/rng.hpp"
#include "lightn/samplers.hpp"
#include "lightn/tape.hpp"

namespace lightn {

struct TaskParams {
  std::vector<std::size_t> widths{3, 32, 64, 128};  // per-point shared layers
  std::size_t num_classes = 4;
  std::vector<DenseLayer> mlp;
  DenseLayer classifier;

  std::vector<std::pair<std::string, Matrix*>> tensors() {
    std::vector<std::pair<std::string, Matrix*>> out;
    for (std::size_t l = 0; l < mlp.size(); ++l) {
      out.emplace_back("mlp" + std::to_string(l) + ".w", &mlp[l].w);
      out.emplace_back("mlp" + std::to_string(l) + ".b", &mlp[l].b);
    }
    out.emplace_back("cls.w", &classifier.w);
    out.emplace_back("cls.b", &classifier.b);
    return out;
  }

  std::vector<std::pair<std::string, const Matrix*>> tensors() const {
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (auto& [n, m] : const_cast<TaskParams*>(this)->tensors()) out.emplace_back(n, m);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, m] : tensors()) n += m->size();
    return n;
  }

  friend bool operator==(const TaskParams& a, const TaskParams& b) {
    if (a.widths != b.widths || a.num_classes != b.num_classes) return false;
    auto ta = a.tensors();
    auto tb = b.tensors();
    for (std::size_t i = 0; i < ta.size(); ++i)
      if (!(*ta[i].second == *tb[i].second)) return false;
    return true;
  }
};

inline TaskParams init_task_params(std::uint64_t seed, std::size_t num_classes,
                                   std::vector<std::size_t> widths = {3, 32, 64, 128}) {
  if (widths.size() < 2 || widths.front() != 3) throw ConfigError("task head: widths must start at 3");
  if (num_classes < 1) throw ConfigError("task head: need at least one class");
  Rng rng(seed);
  TaskParams p;
  p.widths = std::move(widths);
  p.num_classes = num_classes;
  for (std::size_t l = 0; l + 1 < p.widths.size(); ++l) {
    p.mlp.push_back({detail::uniform_matrix(rng, p.widths[l], p.widths[l + 1]), Matrix(1, p.widths[l + 1])});
  }
  p.classifier = {detail::uniform_matrix(rng, p.widths.back(), num_classes), Matrix(1, num_classes)};
  return p;
}

struct TaskVars {
  std::vector<std::pair<Var, Var>> mlp;
  std::pair<Var, Var> classifier;

  std::vector<Var> leaves() const {
    std::vector<Var> out;
    for (const auto& [w, b] : mlp) out.insert(out.end(), {w, b});
    out.insert(out.end(), {classifier.first, classifier.second});
    return out;
  }
};

inline TaskVars bind(Tape& tape, const TaskParams& p, bool requires_grad) {
  TaskVars v;
  for (const DenseLayer& l : p.mlp) v.mlp.emplace_back(tape.leaf(l.w, requires_grad), tape.leaf(l.b, requires_grad));
  v.classifier = {tape.leaf(p.classifier.w, requires_grad), tape.leaf(p.classifier.b, requires_grad)};
  return v;
}

// N x 3 points -> 1 x classes logits.
inline Var task_forward(const Var& points, const TaskVars& v) {
  Var h = points;
  for (const auto& [w, b] : v.mlp) h = relu(linear(h, w, b));
  return linear(max_over_rows(h), v.classifier.first, v.classifier.second);
}

inline Matrix task_logits(const PointCloud& p, const TaskParams& params) {
  p.validate();
  Tape tape;
  return task_forward(tape.constant(p.to_matrix()), bind(tape, params, false)).value();
}

inline std::size_t argmax(const Matrix& row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

inline std::size_t predict(const PointCloud& p, const TaskParams& params) { return argmax(task_logits(p, params)); }

// ---------------------------------------------------------------------------
// Optimization

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  }
};

class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  explicit Adam(const TrainConfig& c) : Adam(c.learning_rate, c.beta1, c.beta2, c.eps) {}

  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
    if (params.size() != grads.size()) throw ContractError("Adam: parameter/gradient count mismatch");
    if (m_.empty()) {
      for (const Matrix* p : params) {
        m_.emplace_back(p->rows(), p->cols());
        v_.emplace_back(p->rows(), p->cols());
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Matrix& p = *params[k];
      const Matrix& g = grads[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        m_[k][i] = b1_ * m_[k][i] + (1.0 - b1_) * g[i];
        v_[k][i] = b2_ * v_[k][i] + (1.0 - b2_) * g[i] * g[i];
        p[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
      }
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::vector<Matrix> m_, v_;
  std::uint64_t t_ = 0;
};

namespace detail {
inline std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.below(i))]);
  return idx;
}

inline std::vector<Matrix> collect_grads(const std::vector<Var>& leaves) {
  std::vector<Matrix> g;
  g.reserve(leaves.size());
  for (const Var& v : leaves) g.push_back(v.has_grad() ? v.grad() : Matrix(v.rows(), v.cols()));
  return g;
}

inline void check_finite(double v, const std::string& what, std::size_t epoch) {
  if (!std::isfinite(v)) {
    throw TrainingError(what + " diverged (non-finite loss) at epoch " + std::to_string(epoch));
  }
}
}  // namespace detail

inline double accuracy(const Dataset& ds, const TaskParams& params) {
  if (ds.empty()) return 0.0;
  std::size_t ok = 0;
  for (const LabeledCloud& c : ds) ok += predict(c.cloud, params) == c.label;
  return static_cast<double>(ok) / static_cast<double>(ds.size());
}

struct TaskEpochLog {
  std::size_t epoch;
  double loss;
  double train_accuracy;
};

struct TaskTrainResult {
  TaskParams params;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<TaskEpochLog> log;
};

// Cross-entropy training of the classifier on full-resolution clouds.
inline TaskTrainResult pretrain_task(const Dataset& train, const Dataset& test, std::size_t num_classes,
                                     const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw DomainError("pretrain_task: empty training set");
  TaskTrainResult r;
  r.params = init_task_params(cfg.seed, num_classes);
  Adam opt(cfg);
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Matrix*> targets;
  for (auto& [n, m] : r.params.tensors()) targets.push_back(m);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = detail::shuffled(train.size(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Tape tape;
      const TaskVars v = bind(tape, r.params, true);
      std::vector<Var> losses;
      for (std::size_t i = start; i < end; ++i) {
        const LabeledCloud& s = train[order[i]];
        const Var logits = task_forward(tape.constant(s.cloud.to_matrix()), v);
        correct += argmax(logits.value()) == s.label;
        losses.push_back(softmax_cross_entropy(logits, s.label));
      }
      Var batch = losses.front();
      for (std::size_t i = 1; i < losses.size(); ++i) batch = add(batch, losses[i]);
      batch = scale(batch, 1.0 / static_cast<double>(losses.size()));
      detail::check_finite(batch.value().item(), "task pre-training", epoch);
      loss_sum += batch.value().item() * static_cast<double>(losses.size());
      tape.backward(batch);
      opt.step(targets, detail::collect_grads(v.leaves()));
    }
    r.log.push_back({epoch, loss_sum / static_cast<double>(train.size()),
                     static_cast<double>(correct) / static_cast<double>(train.size())});
  }
  r.train_accuracy = accuracy(train, r.params);
  r.test_accuracy = accuracy(test, r.params);
  return r;
}

inline Checkpoint to_checkpoint(const TaskParams& p) {
  Checkpoint ck;
  ck.set_meta("kind", "task");
  std::string w;
  for (std::size_t x : p.widths) w += (w.empty() ? "" : ",") + std::to_string(x);
  ck.set_meta("widths", w);
  ck.set_meta("num_classes", std::to_string(p.num_classes));
  for (const auto& [name, m] : p.tensors()) ck.tensors.emplace_back(name, *m);
  return ck;
}

inline TaskParams task_from_checkpoint(const Checkpoint& ck) {
  if (ck.get_meta("kind") != "task") throw FormatError("checkpoint is not a task-head checkpoint");
  std::vector<std::size_t> widths;
  std::stringstream ws(ck.get_meta("widths"));
  for (std::string tok; std::getline(ws, tok, ',');)
    if (!tok.empty()) widths.push_back(std::stoul(tok));
  TaskParams p = init_task_params(0, std::stoul(ck.get_meta("num_classes")), widths);
  for (auto& [name, m] : p.tensors()) {
    const Matrix& src = ck.tensor(name);
    if (!src.same_shape(*m)) throw FormatError("checkpoint: tensor '" + name + "' has the wrong shape");
    *m = src;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Sampler training against the frozen head

struct SamplerEpochLog {
  std::size_t epoch;
  double total;
  double chamfer;
  double repulsion;
  double projection;
  double task;
  double temperature;
  double train_accuracy;  // soft mode, during the epoch
};

struct SamplerTrainResult {
  SamplerParams params;
  std::vector<SamplerEpochLog> log;
};

inline std::string to_csv(const std::vector<SamplerEpochLog>& log) {
  std::ostringstream os;
  os << "epoch,total,chamfer,repulsion,projection,task,temperature,train_accuracy\n";
  for (const SamplerEpochLog& e : log) {
    os << e.epoch << ',' << format_double(e.total) << ',' << format_double(e.chamfer) << ','
       << format_double(e.repulsion) << ',' << format_double(e.projection) << ',' << format_double(e.task) << ','
       << format_double(e.temperature) << ',' << format_double(e.train_accuracy) << '\n';
  }
  return os.str();
}

inline std::string to_csv(const std::vector<TaskEpochLog>& log) {
  std::ostringstream os;
  os << "epoch,loss,train_accuracy\n";
  for (const TaskEpochLog& e : log) {
    os << e.epoch << ',' << format_double(e.loss) << ',' << format_double(e.train_accuracy) << '\n';
  }
  return os.str();
}

// Minimizes sampling + delta * task over the dataset through
// forward -> soft_project -> task_forward. The task head is bound as tape
// constants and never updated.
inline SamplerTrainResult train_sampler(const Dataset& train, const TaskParams& frozen, const SamplerConfig& scfg,
                                        const TrainConfig& cfg, const LossConfig& loss_cfg,
                                        const ProjectionConfig& proj_cfg = {}) {
  cfg.validate();
  loss_cfg.validate();
  if (train.empty()) throw DomainError("train_sampler: empty training set");
  SamplerTrainResult r;
  r.params = init_params(cfg.seed, scfg);
  Adam opt(cfg);
  Rng rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::vector<Matrix*> targets;
  for (auto& [n, m] : r.params.tensors()) targets.push_back(m);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = detail::shuffled(train.size(), rng);
    SamplerEpochLog e{epoch, 0, 0, 0, 0, 0, 0, 0};
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      Tape tape;
      const SamplerVars sv = bind(tape, r.params, true);
      const TaskVars tv = bind(tape, frozen, false);
      Var batch;
      for (std::size_t i = start; i < end; ++i) {
        const LabeledCloud& s = train[order[i]];
        const Var input = tape.constant(s.cloud.to_matrix());
        const Var generated = forward(input, sv);
        const Var projected = soft_project(generated, input, s.cloud, proj_cfg, sv.temperature);
        const SamplingLoss sl = sampling_loss(projected, input, sv.temperature, loss_cfg);
        const Var logits = task_forward(projected, tv);
        const Var task = softmax_cross_entropy(logits, s.label);
        const Var total = total_loss(sl.total, task, loss_cfg);
        correct += argmax(logits.value()) == s.label;
        e.total += total.value().item();
        e.chamfer += sl.chamfer.value().item();
        e.repulsion += sl.repulsion.value().item();
        e.projection += sl.projection.value().item();
        e.task += task.value().item();
        const Var scaled = scale(total, inv_b);
        batch = batch.valid() ? add(batch, scaled) : scaled;
      }
      detail::check_finite(batch.value().item(), "sampler training", epoch);
      tape.backward(batch);
      for (const Var& fv : tv.leaves()) {
        if (fv.has_grad()) throw ContractError("train_sampler: gradient allocated for the frozen task head");
      }
      opt.step(targets, detail::collect_grads(sv.leaves()));
      r.params.clamp_temperature();
    }
    const double n = static_cast<double>(train.size());
    e.total /= n;
    e.chamfer /= n;
    e.repulsion /= n;
    e.projection /= n;
    e.task /= n;
    e.temperature = r.params.t();
    e.train_accuracy = static_cast<double>(correct) / n;
    r.log.push_back(e);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation

enum class EvalMode { soft, matched };

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  bool subset_property = true;  // every evaluated point is an input point
};

namespace detail {
inline bool is_subset(const PointCloud& q, const PointCloud& p) {
  for (const Point& a : q.points)
    if (std::find(p.points.begin(), p.points.end(), a) == p.points.end()) return false;
  return true;
}
}  // namespace detail

// Points fed to the task network for one input cloud.
inline PointCloud lightn_sample(const PointCloud& p, const SamplerParams& sampler, EvalMode mode,
                                const ProjectionConfig& proj_cfg = {}) {
  const PointCloud generated = generate(p, sampler);
  if (mode == EvalMode::soft) return soft_project(generated, p, proj_cfg, sampler.t());
  const std::size_t m = std::min(sampler.config.num_samples, p.size());
  return p.subset(dedup_and_complete(nn_match(generated, p), p, m));
}

inline EvalResult evaluate(const Dataset& ds, const SamplerParams& sampler, const TaskParams& task, EvalMode mode,
                           const ProjectionConfig& proj_cfg = {}) {
  EvalResult r;
  for (const LabeledCloud& c : ds) {
    const PointCloud q = lightn_sample(c.cloud, sampler, mode, proj_cfg);
    if (mode == EvalMode::matched && !detail::is_subset(q, c.cloud)) r.subset_property = false;
    r.correct += predict(q, task) == c.label;
    ++r.total;
  }
  r.accuracy = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  return r;
}

// Index-based samplers (FPS, random, voxel) produce true subsets directly, so
// both evaluation modes coincide. `pick` receives the cloud and its position.
using IndexSampler = std::function<SampleIndices(const PointCloud&, std::size_t)>;

inline EvalResult evaluate(const Dataset& ds, const IndexSampler& pick, const TaskParams& task) {
  EvalResult r;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const PointCloud q = ds[i].cloud.subset(pick(ds[i].cloud, i));
    r.correct += predict(q, task) == ds[i].label;
    ++r.total;
  }
  r.accuracy = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  return r;
}

}  // namespace lightn
