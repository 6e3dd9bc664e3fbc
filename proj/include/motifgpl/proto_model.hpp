#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "motifgpl/config.hpp"
#include "motifgpl/error.hpp"
#include "motifgpl/graph.hpp"
#include "motifgpl/local_encoder.hpp"
#include "motifgpl/rng.hpp"
#include "motifgpl/walks.hpp"

namespace motifgpl {

inline constexpr std::array<View, 2> kViews = {View::spatial, View::od};
inline std::size_t view_index(View v) { return v == View::spatial ? 0 : 1; }

struct TrainConfig {
  double lr = 0.001;
  int max_epochs = 3000;
  int projection_interval = 50;
  double lambda1 = 0.4;
  double lambda2 = 0.2;
  double lambda3 = 2.0;
  double epsilon = 1e-4;
  int latent_dim = 128;
  int hidden_dim = 64;
  int gcn_layers = 2;
  int n_proto = 5;
  int walks = 8;
  int walk_length = 8;
  int rnn_hidden = 32;
  /// Candidate local structures per class and view kept for the encoding loss
  /// between projection rounds.
  int enc_candidates = 16;
  std::string optimizer = "adam";
  double train_frac = 0.6;
  double val_frac = 0.2;
  bool stratified = true;
  bool nonneg_classifier = false;
  /// Sigmoid on node embeddings and walk codes.
  bool bounded_latent = true;
  std::uint64_t seed = 0;

  void apply(const KeyValues& kv) {
    ConfigReader r(kv);
    r.get("lr", lr);
    r.get("max_epochs", max_epochs);
    r.get("projection_interval", projection_interval);
    r.get("lambda1", lambda1);
    r.get("lambda2", lambda2);
    r.get("lambda3", lambda3);
    r.get("epsilon", epsilon);
    r.get("latent_dim", latent_dim);
    r.get("hidden_dim", hidden_dim);
    r.get("gcn_layers", gcn_layers);
    r.get("n_proto", n_proto);
    r.get("walks", walks);
    r.get("walk_length", walk_length);
    r.get("rnn_hidden", rnn_hidden);
    r.get("enc_candidates", enc_candidates);
    r.get("optimizer", optimizer);
    r.get("train_frac", train_frac);
    r.get("val_frac", val_frac);
    r.get("stratified", stratified);
    r.get("nonneg_classifier", nonneg_classifier);
    r.get("bounded_latent", bounded_latent);
    r.get("seed", seed);
    r.reject_unknown();
    validate();
  }

  void validate() const {
    auto positive = [](const char* k, double v) {
      if (!(v > 0)) throw ValidationError(std::string("config ") + k + " must be positive");
    };
    positive("lr", lr);
    if (max_epochs < 0) throw ValidationError("config max_epochs must be >= 0");
    positive("projection_interval", projection_interval);
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw ValidationError("config lambdas must be >= 0");
    positive("epsilon", epsilon);
    positive("latent_dim", latent_dim);
    positive("hidden_dim", hidden_dim);
    positive("gcn_layers", gcn_layers);
    positive("n_proto", n_proto);
    positive("walks", walks);
    positive("walk_length", walk_length);
    positive("rnn_hidden", rnn_hidden);
    positive("enc_candidates", enc_candidates);
    if (optimizer != "adam" && optimizer != "sgd") throw ValidationError("config optimizer must be adam|sgd");
    if (!(train_frac > 0 && val_frac >= 0 && train_frac + val_frac < 1))
      throw ValidationError("config split fractions must satisfy 0 < train, 0 <= val, train + val < 1");
  }

  std::string to_text() const {
    std::ostringstream o;
    o << "lr=" << fmt_double(lr) << "\nmax_epochs=" << max_epochs << "\nprojection_interval=" << projection_interval
      << "\nlambda1=" << fmt_double(lambda1) << "\nlambda2=" << fmt_double(lambda2)
      << "\nlambda3=" << fmt_double(lambda3) << "\nepsilon=" << fmt_double(epsilon)
      << "\nlatent_dim=" << latent_dim << "\nhidden_dim=" << hidden_dim << "\ngcn_layers=" << gcn_layers
      << "\nn_proto=" << n_proto << "\nwalks=" << walks << "\nwalk_length=" << walk_length
      << "\nrnn_hidden=" << rnn_hidden << "\nenc_candidates=" << enc_candidates << "\noptimizer=" << optimizer
      << "\ntrain_frac=" << fmt_double(train_frac) << "\nval_frac=" << fmt_double(val_frac)
      << "\nstratified=" << (stratified ? "true" : "false")
      << "\nnonneg_classifier=" << (nonneg_classifier ? "true" : "false")
      << "\nbounded_latent=" << (bounded_latent ? "true" : "false") << "\nseed=" << seed << "\n";
    return o.str();
  }
};

/// Constant per-dataset inputs of the encoder: normalized adjacencies, raw
/// features, and the first-layer propagation A_hat X for each view.
struct GraphInputs {
  std::array<SparseMatrix, 2> adj;
  Mat x;
  std::array<Mat, 2> ax;

  static GraphInputs build(const UrbanGraph& g, const Mat& x) {
    if (static_cast<std::size_t>(x.rows()) != g.node_count())
      throw ValidationError("feature rows differ from node count");
    GraphInputs in;
    in.x = x;
    for (View v : kViews) {
      const auto k = view_index(v);
      in.adj[k] = normalized_adjacency(g, v);
      in.ax[k] = in.adj[k] * x;
    }
    return in;
  }
  std::size_t node_count() const { return static_cast<std::size_t>(x.rows()); }
};

/// Two GCN stacks (spatial, OD) whose per-layer outputs are concatenated and
/// mapped linearly to the latent space.
struct EncoderWeights {
  std::array<std::vector<Mat>, 2> gcn;
  Mat fuse;       // (2 * layers * hidden) x latent
  Mat fuse_bias;  // 1 x latent
  /// Sigmoid on the fused output, keeping embeddings (and so prototype distances) bounded.
  bool bounded = true;

  std::size_t layers() const { return gcn[0].size(); }
};

struct PrototypeSet {
  Mat p;  // q x latent
  std::vector<int> class_of;
  /// Root node whose local structure each prototype was last projected onto; -1 before any projection.
  std::vector<std::int64_t> roots;
  std::vector<WalkBundle> bundles;

  std::size_t size() const { return static_cast<std::size_t>(p.rows()); }
};

struct PrototypeView {
  PrototypeSet protos;
  LocalEncoderWeights local;
};

struct PrototypeModel {
  EncoderWeights encoder;
  std::array<PrototypeView, 2> views;
  Mat classifier;  // (2q) x classes
  int class_count = 2;

  std::size_t prototypes_per_view() const { return views[0].protos.size(); }

  template <typename Self>
  static auto tensors_of(Self& s) {
    using P = decltype(&s.classifier);
    std::vector<std::pair<std::string, P>> out;
    for (View v : kViews) {
      const auto k = view_index(v);
      for (std::size_t l = 0; l < s.encoder.gcn[k].size(); ++l)
        out.emplace_back("gcn." + std::string(to_string(v)) + "." + std::to_string(l), &s.encoder.gcn[k][l]);
    }
    out.emplace_back("fuse", &s.encoder.fuse);
    out.emplace_back("fuse_bias", &s.encoder.fuse_bias);
    for (View v : kViews) {
      auto& view = s.views[view_index(v)];
      const std::string prefix = "view." + std::string(to_string(v)) + ".";
      out.emplace_back(prefix + "prototypes", &view.protos.p);
      for (auto [name, t] : view.local.tensors()) out.emplace_back(prefix + "local." + name, t);
    }
    out.emplace_back("classifier", &s.classifier);
    return out;
  }
  auto tensors() { return tensors_of(*this); }
  auto tensors() const { return tensors_of(*this); }

  /// Same shapes, all zeros (gradient accumulator).
  static PrototypeModel zeros_like(const PrototypeModel& m) {
    PrototypeModel z = m;
    for (auto& [name, t] : z.tensors()) t->setZero();
    return z;
  }
};

/// Randomly initialised model; prototypes are left at zero until
/// init_prototypes_from_embeddings runs.
inline PrototypeModel init_model(Eigen::Index d_in, int class_count, const TrainConfig& cfg, Rng& rng) {
  if (class_count < 2) throw ValidationError("need at least two classes");
  PrototypeModel m;
  m.class_count = class_count;
  for (auto& stack : m.encoder.gcn) {
    Eigen::Index in = d_in;
    for (int l = 0; l < cfg.gcn_layers; ++l) {
      stack.push_back(glorot(in, cfg.hidden_dim, rng));
      in = cfg.hidden_dim;
    }
  }
  const Eigen::Index concat = 2 * cfg.gcn_layers * cfg.hidden_dim;
  m.encoder.fuse = glorot(concat, cfg.latent_dim, rng);
  m.encoder.fuse_bias = Mat::Zero(1, cfg.latent_dim);
  m.encoder.bounded = cfg.bounded_latent;
  const auto q = static_cast<Eigen::Index>(cfg.n_proto * class_count);
  for (auto& view : m.views) {
    view.protos.p = Mat::Zero(q, cfg.latent_dim);
    view.protos.class_of.resize(static_cast<std::size_t>(q));
    for (Eigen::Index j = 0; j < q; ++j) view.protos.class_of[static_cast<std::size_t>(j)] = static_cast<int>(j / cfg.n_proto);
    view.protos.roots.assign(static_cast<std::size_t>(q), -1);
    view.protos.bundles.assign(static_cast<std::size_t>(q), WalkBundle{});
    view.local = LocalEncoderWeights::init(d_in, cfg.rnn_hidden, cfg.latent_dim, rng);
    view.local.bounded = cfg.bounded_latent;
  }
  m.classifier = glorot(2 * q, class_count, rng);
  return m;
}

struct EncoderCache {
  std::array<std::vector<Mat>, 2> z;   // pre-activations per layer
  std::array<std::vector<Mat>, 2> h;   // post-ReLU outputs per layer
  std::array<std::vector<Mat>, 2> ah;  // A_hat H^(l-1) for layers >= 2 (index l-1)
  Mat concat;
};

inline Mat encode(const GraphInputs& in, const EncoderWeights& w, EncoderCache* cache = nullptr) {
  const Eigen::Index n = in.x.rows();
  const std::size_t layers = w.layers();
  if (layers == 0) throw ValidationError("encoder needs at least one layer");
  Eigen::Index concat_cols = 0;
  for (const auto& stack : w.gcn) {
    if (stack.size() != layers) throw ValidationError("encoders must have equal layer counts");
    for (const auto& wl : stack) concat_cols += wl.cols();
  }
  if (w.gcn[0][0].rows() != in.x.cols() || w.gcn[1][0].rows() != in.x.cols())
    throw ValidationError("first GCN layer expects " + std::to_string(w.gcn[0][0].rows()) + " input features, got " +
                          std::to_string(in.x.cols()));
  if (w.fuse.rows() != concat_cols) throw ValidationError("fusion map does not match concatenated width");

  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  c.concat.resize(n, concat_cols);
  Eigen::Index col = 0;
  for (std::size_t k = 0; k < 2; ++k) {
    c.z[k].clear();
    c.h[k].clear();
    c.ah[k].clear();
    for (std::size_t l = 0; l < layers; ++l) {
      const Mat& wl = w.gcn[k][l];
      if (l > 0) {
        if (wl.rows() != c.h[k].back().cols()) throw ValidationError("GCN layer dimensions do not chain");
        c.ah[k].push_back(in.adj[k] * c.h[k].back());
        c.z[k].push_back(c.ah[k].back() * wl);
      } else {
        c.z[k].push_back(in.ax[k] * wl);
      }
      c.h[k].push_back(c.z[k].back().cwiseMax(0.0));
      c.concat.middleCols(col, wl.cols()) = c.h[k].back();
      col += wl.cols();
    }
  }
  Mat latent = c.concat * w.fuse;
  latent.rowwise() += w.fuse_bias.row(0);
  if (w.bounded) latent = latent.unaryExpr([](double v) { return detail::sigmoid(v); });
  return latent;
}

/// Prototype similarity log((d + 1) / (d + eps)) for squared distance d.
inline double similarity_from_sqdist(double d, double eps) { return std::log((d + 1.0) / (d + eps)); }

inline double similarity(const RowVec& h, const RowVec& p, double eps) {
  if (h.size() != p.size()) throw ValidationError("similarity: dimension mismatch");
  return similarity_from_sqdist((h - p).squaredNorm(), eps);
}

/// n x q matrix of squared distances.
inline Mat squared_distances(const Mat& h, const Mat& p) {
  Mat d(h.rows(), p.rows());
  for (Eigen::Index j = 0; j < p.rows(); ++j)
    for (Eigen::Index i = 0; i < h.rows(); ++i) d(i, j) = (h.row(i) - p.row(j)).squaredNorm();
  return d;
}

inline Mat softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) sum += (out(i, j) = std::exp(logits(i, j) - mx));
    out.row(i) /= sum;
  }
  return out;
}

struct ForwardResult {
  Mat latent;
  std::array<Mat, 2> dist;
  Mat sims;  // n x 2q, spatial prototypes first
  Mat logits;
  Mat probs;
  EncoderCache cache;

  std::vector<int> predictions() const {
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      Eigen::Index best = 0;
      logits.row(i).maxCoeff(&best);
      out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
  }
};

inline ForwardResult forward(const PrototypeModel& m, const GraphInputs& in, double eps) {
  ForwardResult f;
  f.latent = encode(in, m.encoder, &f.cache);
  const auto q = static_cast<Eigen::Index>(m.prototypes_per_view());
  f.sims.resize(f.latent.rows(), 2 * q);
  for (std::size_t k = 0; k < 2; ++k) {
    f.dist[k] = squared_distances(f.latent, m.views[k].protos.p);
    f.sims.middleCols(static_cast<Eigen::Index>(k) * q, q) =
        f.dist[k].unaryExpr([eps](double d) { return similarity_from_sqdist(d, eps); });
  }
  f.logits = f.sims * m.classifier;
  f.probs = softmax_rows(f.logits);
  return f;
}

/// Candidate local structures for the encoding loss of one view.
struct CandidateSet {
  std::vector<WalkBundle> bundles;
  std::vector<int> class_of;
};

struct LossBatch {
  std::span<const NodeId> nodes;   // labelled nodes the loss averages over
  std::span<const int> labels;     // labels of all nodes
  std::array<const CandidateSet*, 2> candidates{nullptr, nullptr};
};

struct LossWeights {
  double lambda1 = 0.4;
  double lambda2 = 0.2;
  double lambda3 = 2.0;
  double epsilon = 1e-4;

  static LossWeights from(const TrainConfig& c) { return {c.lambda1, c.lambda2, c.lambda3, c.epsilon}; }
};

struct LossTerms {
  double ce = 0.0;
  double clst = 0.0;
  double sprt = 0.0;
  double enc = 0.0;
  double total = 0.0;
};

/// Cross-entropy, cluster, separation and encoding losses, and their weighted
/// sum. When `grad` is non-null it receives d(total)/d(parameter) for every
/// tensor of the model (overwritten, not accumulated). `fwd_out`, when given,
/// receives the forward pass the losses were computed from.
inline LossTerms loss_and_grad(const PrototypeModel& m, const GraphInputs& in, const LossBatch& batch,
                               const LossWeights& lw, PrototypeModel* grad = nullptr,
                               ForwardResult* fwd_out = nullptr) {
  ForwardResult local_fwd;
  ForwardResult& f = fwd_out ? *fwd_out : local_fwd;
  f = forward(m, in, lw.epsilon);
  const Eigen::Index n = f.latent.rows();
  const auto q = static_cast<Eigen::Index>(m.prototypes_per_view());
  const std::size_t nb = batch.nodes.size();
  if (nb == 0) throw ValidationError("loss batch is empty");
  if (batch.labels.size() != static_cast<std::size_t>(n)) throw ValidationError("label count differs from node count");
  const double inv_b = 1.0 / static_cast<double>(nb);
  constexpr double inv_views = 0.5;

  LossTerms t;
  if (grad) *grad = PrototypeModel::zeros_like(m);
  Mat dlogits;
  if (grad) dlogits = Mat::Zero(n, m.class_count);

  for (NodeId i : batch.nodes) {
    const int y = batch.labels[i];
    if (y < 0 || y >= m.class_count) throw ValidationError("label out of range at node " + std::to_string(i));
    t.ce -= std::log(std::max(f.probs(i, y), std::numeric_limits<double>::min())) * inv_b;
    if (grad) {
      dlogits.row(i) = f.probs.row(i) * inv_b;
      dlogits(i, y) -= inv_b;
    }
  }

  std::array<Mat, 2> ddist;
  Mat dsims;
  if (grad) {
    grad->classifier = f.sims.transpose() * dlogits;
    dsims = dlogits * m.classifier.transpose();
  }
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& protos = m.views[k].protos;
    const Mat& d = f.dist[k];
    if (grad) {
      ddist[k] = dsims.middleCols(static_cast<Eigen::Index>(k) * q, q);
      for (Eigen::Index j = 0; j < q; ++j)
        for (Eigen::Index i = 0; i < n; ++i) {
          const double dij = d(i, j);
          ddist[k](i, j) *= 1.0 / (dij + 1.0) - 1.0 / (dij + lw.epsilon);
        }
    }
    for (NodeId i : batch.nodes) {
      const int y = batch.labels[i];
      Eigen::Index same = -1, other = -1;
      for (Eigen::Index j = 0; j < q; ++j) {
        const bool own = protos.class_of[static_cast<std::size_t>(j)] == y;
        Eigen::Index& best = own ? same : other;
        if (best < 0 || d(i, j) < d(i, best)) best = j;
      }
      if (same >= 0) {
        t.clst += d(i, same) * inv_b * inv_views;
        if (grad) ddist[k](i, same) += lw.lambda1 * inv_b * inv_views;
      }
      if (other >= 0) {
        t.sprt -= d(i, other) * inv_b * inv_views;
        if (grad) ddist[k](i, other) -= lw.lambda2 * inv_b * inv_views;
      }
    }
  }

  // Encoding loss: every prototype against its nearest same-class candidate.
  std::array<LocalEncoderInputs, 2> enc_inputs;
  std::array<std::vector<RowVec>, 2> enc_out;
  std::array<std::vector<RowVec>, 2> enc_dout;
  for (std::size_t k = 0; k < 2; ++k) {
    const CandidateSet* cs = batch.candidates[k];
    if (!cs || cs->bundles.empty()) continue;
    const auto& view = m.views[k];
    enc_inputs[k] = LocalEncoderInputs::compute(view.local, in.x);
    for (const auto& b : cs->bundles) enc_out[k].push_back(encode_local(b, view.local, enc_inputs[k]));
    if (grad) enc_dout[k].assign(cs->bundles.size(), RowVec::Zero(view.local.latent()));
    const double scale = inv_views / static_cast<double>(q);
    for (Eigen::Index j = 0; j < q; ++j) {
      const int cls = view.protos.class_of[static_cast<std::size_t>(j)];
      std::int64_t best = -1;
      double best_d = 0.0;
      for (std::size_t c = 0; c < cs->bundles.size(); ++c) {
        if (cs->class_of[c] != cls) continue;
        const double dd = (enc_out[k][c] - view.protos.p.row(j)).squaredNorm();
        if (best < 0 || dd < best_d) best = static_cast<std::int64_t>(c), best_d = dd;
      }
      if (best < 0) continue;
      t.enc += best_d * scale;
      if (grad) {
        const RowVec diff = enc_out[k][static_cast<std::size_t>(best)] - view.protos.p.row(j);
        enc_dout[k][static_cast<std::size_t>(best)] += 2.0 * lw.lambda3 * scale * diff;
        grad->views[k].protos.p.row(j) -= 2.0 * lw.lambda3 * scale * diff;
      }
    }
  }

  t.total = t.ce + lw.lambda1 * t.clst + lw.lambda2 * t.sprt + lw.lambda3 * t.enc;
  if (!grad) return t;

  // Distances -> latent and prototypes.
  Mat dlatent = Mat::Zero(n, f.latent.cols());
  for (std::size_t k = 0; k < 2; ++k) {
    const Mat& p = m.views[k].protos.p;
    const Eigen::VectorXd row_sum = ddist[k].rowwise().sum();
    const Eigen::VectorXd col_sum = ddist[k].colwise().sum().transpose();
    dlatent += 2.0 * (row_sum.asDiagonal() * f.latent - ddist[k] * p);
    grad->views[k].protos.p += 2.0 * (col_sum.asDiagonal() * p - ddist[k].transpose() * f.latent);
  }

  // Fusion map and GCN stacks.
  const EncoderCache& c = f.cache;
  if (m.encoder.bounded) dlatent = dlatent.cwiseProduct(f.latent.cwiseProduct(Mat::Ones(n, f.latent.cols()) - f.latent));
  grad->encoder.fuse = c.concat.transpose() * dlatent;
  grad->encoder.fuse_bias = dlatent.colwise().sum();
  const Mat dconcat = dlatent * m.encoder.fuse.transpose();
  Eigen::Index col = 0;
  const std::size_t layers = m.encoder.layers();
  std::array<Eigen::Index, 2> offset{};
  for (std::size_t k = 0; k < 2; ++k) {
    offset[k] = col;
    for (const auto& wl : m.encoder.gcn[k]) col += wl.cols();
  }
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<Eigen::Index> starts(layers);
    Eigen::Index cc = offset[k];
    for (std::size_t l = 0; l < layers; ++l) {
      starts[l] = cc;
      cc += m.encoder.gcn[k][l].cols();
    }
    Mat dh = dconcat.middleCols(starts[layers - 1], m.encoder.gcn[k][layers - 1].cols());
    for (std::size_t l = layers; l-- > 0;) {
      const Mat dz = dh.cwiseProduct((c.z[k][l].array() > 0.0).cast<double>().matrix());
      if (l == 0) {
        grad->encoder.gcn[k][0] = in.ax[k].transpose() * dz;
      } else {
        grad->encoder.gcn[k][l] = c.ah[k][l - 1].transpose() * dz;
        const Mat dah = dz * m.encoder.gcn[k][l].transpose();
        // A_hat is symmetric.
        dh = in.adj[k] * dah + dconcat.middleCols(starts[l - 1], m.encoder.gcn[k][l - 1].cols());
      }
    }
  }

  // Walk encoders.
  for (std::size_t k = 0; k < 2; ++k) {
    const CandidateSet* cs = batch.candidates[k];
    if (!cs || cs->bundles.empty()) continue;
    const auto& view = m.views[k];
    auto& g = grad->views[k].local;
    const Eigen::Index hd = view.local.hidden();
    LocalEncoderInputGrads di{Mat::Zero(n, hd), Mat::Zero(n, hd), Mat::Zero(n, hd)};
    bool any = false;
    for (std::size_t cidx = 0; cidx < cs->bundles.size(); ++cidx) {
      if (enc_dout[k][cidx].isZero(0.0)) continue;
      any = true;
      encode_local_backward(cs->bundles[cidx], view.local, enc_inputs[k], enc_dout[k][cidx], g, di);
    }
    if (any) {
      g.wz = in.x.transpose() * di.dz;
      g.wr = in.x.transpose() * di.dr;
      g.wn = in.x.transpose() * di.dn;
    }
  }
  return t;
}

inline LossTerms losses(const PrototypeModel& m, const GraphInputs& in, const LossBatch& batch, const LossWeights& lw) {
  return loss_and_grad(m, in, batch, lw, nullptr);
}

}  // namespace motifgpl
