#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "motifgpl/error.hpp"
#include "motifgpl/graph.hpp"
#include "motifgpl/projection.hpp"
#include "motifgpl/proto_model.hpp"
#include "motifgpl/rng.hpp"

namespace motifgpl {

struct DataSplit {
  std::vector<NodeId> train, val, test;
};

/// Shuffled train/val/test split; per class when `stratified`.
inline DataSplit split_nodes(std::span<const int> labels, double train_frac, double val_frac, bool stratified, Rng& rng) {
  DataSplit s;
  auto cut = [&](std::vector<NodeId> ids) {
    rng.shuffle(ids);
    const auto n = static_cast<double>(ids.size());
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * n));
    const auto n_val = std::min(ids.size() - n_train, static_cast<std::size_t>(std::llround(val_frac * n)));
    s.train.insert(s.train.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.insert(s.val.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                 ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.insert(s.test.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  };
  if (stratified) {
    const int classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    for (int c = 0; c < classes; ++c) {
      std::vector<NodeId> ids;
      for (NodeId i = 0; i < labels.size(); ++i)
        if (labels[i] == c) ids.push_back(i);
      cut(std::move(ids));
    }
  } else {
    std::vector<NodeId> ids(labels.size());
    for (NodeId i = 0; i < labels.size(); ++i) ids[i] = i;
    cut(std::move(ids));
  }
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

inline ClassificationMetrics evaluate(std::span<const int> predicted, std::span<const int> labels,
                                      std::span<const NodeId> nodes, int classes) {
  ClassificationMetrics m;
  if (nodes.empty()) return m;
  std::vector<double> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  std::size_t correct = 0;
  for (NodeId i : nodes) {
    const int y = labels[i], p = predicted[i];
    if (y == p) {
      ++correct;
      tp[y] += 1;
    } else {
      fp[p] += 1;
      fn[y] += 1;
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(nodes.size());
  double f1_sum = 0.0;
  for (int c = 0; c < classes; ++c) {
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    f1_sum += denom > 0 ? 2 * tp[c] / denom : 0.0;
  }
  m.macro_f1 = f1_sum / classes;
  return m;
}

/// Plain SGD or Adam over every tensor of a PrototypeModel.
class Optimizer {
 public:
  Optimizer(std::string kind, double lr) : kind_(std::move(kind)), lr_(lr) {}

  void step(PrototypeModel& m, const PrototypeModel& g) {
    auto params = m.tensors();
    const auto grads = g.tensors();
    if (kind_ == "sgd") {
      for (std::size_t i = 0; i < params.size(); ++i) *params[i].second -= lr_ * *grads[i].second;
      return;
    }
    if (m1_.empty()) {
      for (const auto& [name, t] : params) {
        m1_.push_back(Mat::Zero(t->rows(), t->cols()));
        m2_.push_back(Mat::Zero(t->rows(), t->cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Mat& gr = *grads[i].second;
      m1_[i] = kBeta1 * m1_[i] + (1.0 - kBeta1) * gr;
      m2_[i] = kBeta2 * m2_[i] + (1.0 - kBeta2) * gr.cwiseProduct(gr);
      *params[i].second -= (lr_ * (m1_[i] / c1).array() / ((m2_[i] / c2).array().sqrt() + kEps)).matrix();
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  std::string kind_;
  double lr_;
  std::vector<Mat> m1_, m2_;
  long t_ = 0;
};

/// Sets every prototype to the initial embedding of a random training node of its class.
inline void init_prototypes_from_embeddings(PrototypeModel& m, const Mat& latent, std::span<const NodeId> train,
                                            std::span<const int> labels, Rng& rng) {
  for (auto& view : m.views) {
    for (std::size_t j = 0; j < view.protos.size(); ++j) {
      std::vector<NodeId> pool;
      for (NodeId i : train)
        if (labels[i] == view.protos.class_of[j]) pool.push_back(i);
      if (pool.empty())
        throw UndefinedError("class " + std::to_string(view.protos.class_of[j]) + " has no training nodes");
      view.protos.p.row(static_cast<Eigen::Index>(j)) = latent.row(pool[rng.below(pool.size())]);
    }
  }
}

/// Per class: projection winners first, then random candidates up to `per_class`.
inline CandidateSet select_candidates(const ViewProjection& proj, std::span<const int> labels, int classes,
                                      std::size_t per_class, Rng& rng) {
  CandidateSet cs;
  for (int c = 0; c < classes; ++c) {
    std::vector<std::size_t> chosen;
    for (const auto& pp : proj.prototypes) {
      if (pp.class_id != c) continue;
      const auto idx = static_cast<std::size_t>(
          std::find(proj.candidate_nodes.begin(), proj.candidate_nodes.end(), pp.root) - proj.candidate_nodes.begin());
      if (std::find(chosen.begin(), chosen.end(), idx) == chosen.end()) chosen.push_back(idx);
    }
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < proj.candidate_nodes.size(); ++i)
      if (labels[proj.candidate_nodes[i]] == c && std::find(chosen.begin(), chosen.end(), i) == chosen.end())
        rest.push_back(i);
    rng.shuffle(rest);
    for (std::size_t i = 0; i < rest.size() && chosen.size() < per_class; ++i) chosen.push_back(rest[i]);
    for (std::size_t idx : chosen) {
      cs.bundles.push_back(proj.candidate_bundles[idx]);
      cs.class_of.push_back(c);
    }
  }
  return cs;
}

struct EpochLog {
  int epoch = 0;
  LossTerms loss;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  PrototypeModel initial;
  PrototypeModel model;
  std::vector<EpochLog> log;
  DataSplit split;
  ClassificationMetrics val;
  ClassificationMetrics test;
  int projections = 0;
};

/// Everything a training run reads: the dual graph, node features and labels.
struct TrainData {
  const UrbanGraph& graph;
  const Mat& features;
  std::span<const int> labels;
};

inline int class_count_of(std::span<const int> labels) {
  if (labels.empty()) throw ValidationError("no labels");
  return std::max(2, *std::max_element(labels.begin(), labels.end()) + 1);
}

/// Full-batch gradient training with periodic prototype projection.
/// `on_epoch`, when set, is called after every epoch.
inline TrainResult train(const TrainData& data, const TrainConfig& cfg,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  const auto n = data.graph.node_count();
  if (static_cast<std::size_t>(data.features.rows()) != n || data.labels.size() != n)
    throw ValidationError("features, labels and graph disagree on node count");
  const int classes = class_count_of(data.labels);

  TrainResult res;
  Rng split_rng(cfg.seed, 2);
  res.split = split_nodes(data.labels, cfg.train_frac, cfg.val_frac, cfg.stratified, split_rng);
  if (res.split.train.empty()) throw ValidationError("training split is empty");

  const GraphInputs inputs = GraphInputs::build(data.graph, data.features);
  Rng init_rng(cfg.seed, 1);
  PrototypeModel model = init_model(data.features.cols(), classes, cfg, init_rng);
  {
    Rng proto_rng(cfg.seed, 3);
    init_prototypes_from_embeddings(model, encode(inputs, model.encoder), res.split.train, data.labels, proto_rng);
  }
  res.initial = model;

  const WalkSettings ws{static_cast<std::size_t>(cfg.walks), static_cast<std::size_t>(cfg.walk_length)};
  std::array<CandidateSet, 2> candidates;
  auto refresh = [&](const std::array<ViewProjection, 2>& proj, std::uint64_t round) {
    Rng pick(cfg.seed, 4000 + round);
    for (std::size_t k = 0; k < 2; ++k)
      candidates[k] = select_candidates(proj[k], data.labels, classes, static_cast<std::size_t>(cfg.enc_candidates), pick);
  };
  {
    // Candidates for the first interval come from a projection dry run on a copy.
    PrototypeModel scratch = model;
    refresh(project_prototypes(scratch, data.graph, data.features, res.split.train, data.labels, ws, Rng(cfg.seed, 5)),
            0);
  }

  const LossWeights lw = LossWeights::from(cfg);
  Optimizer opt(cfg.optimizer, cfg.lr);
  PrototypeModel grad;
  ForwardResult fwd;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (epoch > 0 && epoch % cfg.projection_interval == 0) {
      ++res.projections;
      const auto round = static_cast<std::uint64_t>(res.projections);
      refresh(project_prototypes(model, data.graph, data.features, res.split.train, data.labels, ws,
                                 Rng(cfg.seed, 5 + round)),
              round);
    }
    LossBatch batch{res.split.train, data.labels, {&candidates[0], &candidates[1]}};
    const LossTerms terms = loss_and_grad(model, inputs, batch, lw, &grad, &fwd);
    if (!std::isfinite(terms.total))
      throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + " (ce=" + std::to_string(terms.ce) +
                            " clst=" + std::to_string(terms.clst) + " sprt=" + std::to_string(terms.sprt) +
                            " enc=" + std::to_string(terms.enc) + ")");
    const auto pred = fwd.predictions();
    EpochLog entry{epoch, terms, evaluate(pred, data.labels, res.split.train, classes).accuracy,
                   evaluate(pred, data.labels, res.split.val, classes).accuracy};
    opt.step(model, grad);
    if (cfg.nonneg_classifier)
      for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t j = 0; j < model.prototypes_per_view(); ++j) {
          const auto row = static_cast<Eigen::Index>(k * model.prototypes_per_view() + j);
          double& w = model.classifier(row, model.views[k].protos.class_of[j]);
          w = std::max(w, 0.0);
        }
    res.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }

  const auto final_pred = forward(model, inputs, cfg.epsilon).predictions();
  res.val = evaluate(final_pred, data.labels, res.split.val, classes);
  res.test = evaluate(final_pred, data.labels, res.split.test, classes);
  res.model = std::move(model);
  return res;
}

}  // namespace motifgpl
