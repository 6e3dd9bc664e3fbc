#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "motifgpl/rng.hpp"
#include "motifgpl/walks.hpp"

namespace motifgpl {

using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

/// Glorot-uniform initialised matrix.
inline Mat glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

namespace detail {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace detail

/// Gated recurrent walk encoder: each walk is read step by step over the
/// feature rows of its nodes, final hidden states are mean-pooled over walks,
/// and a linear map (followed by a sigmoid when `bounded`) takes the pooled
/// state to the prototype space.
///
///   z = sig(x Wz + h Uz + bz)      r = sig(x Wr + h Ur + br)
///   n = tanh(x Wn + bn + r * (h Un + bu))
///   h' = (1 - z) * n + z * h
struct LocalEncoderWeights {
  Mat wz, wr, wn;  // d_in x hidden
  Mat uz, ur, un;  // hidden x hidden
  Mat bz, br, bn, bu;  // 1 x hidden
  Mat out;       // hidden x latent
  Mat out_bias;  // 1 x latent
  bool bounded = true;

  Eigen::Index hidden() const { return uz.rows(); }
  Eigen::Index latent() const { return out.cols(); }

  static LocalEncoderWeights init(Eigen::Index d_in, Eigen::Index hidden, Eigen::Index latent, Rng& rng) {
    LocalEncoderWeights w;
    w.wz = glorot(d_in, hidden, rng);
    w.wr = glorot(d_in, hidden, rng);
    w.wn = glorot(d_in, hidden, rng);
    w.uz = glorot(hidden, hidden, rng);
    w.ur = glorot(hidden, hidden, rng);
    w.un = glorot(hidden, hidden, rng);
    w.bz = Mat::Zero(1, hidden);
    w.br = Mat::Zero(1, hidden);
    w.bn = Mat::Zero(1, hidden);
    w.bu = Mat::Zero(1, hidden);
    w.out = glorot(hidden, latent, rng);
    w.out_bias = Mat::Zero(1, latent);
    return w;
  }

  static LocalEncoderWeights zeros_like(const LocalEncoderWeights& o) {
    LocalEncoderWeights w;
    w.bounded = o.bounded;
    for (auto [dst, src] : w.pairs_with(o)) *dst = Mat::Zero(src->rows(), src->cols());
    return w;
  }

  template <typename Self>
  static auto tensors_of(Self& s) {
    using P = decltype(&s.wz);
    return std::vector<std::pair<const char*, P>>{
        {"wz", &s.wz}, {"wr", &s.wr}, {"wn", &s.wn}, {"uz", &s.uz}, {"ur", &s.ur}, {"un", &s.un},
        {"bz", &s.bz}, {"br", &s.br}, {"bn", &s.bn}, {"bu", &s.bu}, {"out", &s.out}, {"out_bias", &s.out_bias}};
  }
  auto tensors() { return tensors_of(*this); }
  auto tensors() const { return tensors_of(*this); }

 private:
  std::vector<std::pair<Mat*, const Mat*>> pairs_with(const LocalEncoderWeights& o) {
    auto mine = tensors();
    auto theirs = o.tensors();
    std::vector<std::pair<Mat*, const Mat*>> out;
    for (std::size_t i = 0; i < mine.size(); ++i) out.emplace_back(mine[i].second, theirs[i].second);
    return out;
  }
};

/// Input-side projections x W for every node, reused across all bundles of one pass.
struct LocalEncoderInputs {
  Mat xz, xr, xn;  // n x hidden

  static LocalEncoderInputs compute(const LocalEncoderWeights& w, const Mat& x) {
    return {x * w.wz, x * w.wr, x * w.wn};
  }
};

inline RowVec encode_local(const WalkBundle& bundle, const LocalEncoderWeights& w, const LocalEncoderInputs& in) {
  const Eigen::Index hd = w.hidden();
  RowVec pooled = RowVec::Zero(hd);
  RowVec h(hd), z(hd), r(hd), nn(hd);
  for (const auto& walk : bundle.walks) {
    h.setZero();
    for (NodeId node : walk) {
      const RowVec az = in.xz.row(node) + h * w.uz + w.bz;
      const RowVec ar = in.xr.row(node) + h * w.ur + w.br;
      for (Eigen::Index j = 0; j < hd; ++j) {
        z(j) = detail::sigmoid(az(j));
        r(j) = detail::sigmoid(ar(j));
      }
      const RowVec u = h * w.un + w.bu;
      const RowVec an = in.xn.row(node) + w.bn + r.cwiseProduct(u);
      for (Eigen::Index j = 0; j < hd; ++j) nn(j) = std::tanh(an(j));
      h = (RowVec::Ones(hd) - z).cwiseProduct(nn) + z.cwiseProduct(h);
    }
    pooled += h;
  }
  if (!bundle.walks.empty()) pooled /= static_cast<double>(bundle.walks.size());
  RowVec code = pooled * w.out + w.out_bias;
  if (w.bounded) code = code.unaryExpr([](double v) { return detail::sigmoid(v); });
  return code;
}

inline RowVec encode_local(const WalkBundle& bundle, const LocalEncoderWeights& w, const Mat& x) {
  return encode_local(bundle, w, LocalEncoderInputs::compute(w, x));
}

/// Back-propagates d(loss)/d(output) through encode_local. Gradients for the
/// input projections are accumulated per node into `dx{z,r,n}` (n x hidden);
/// the caller folds them into wz/wr/wn with X^T.
struct LocalEncoderInputGrads {
  Mat dz, dr, dn;
};

inline void encode_local_backward(const WalkBundle& bundle, const LocalEncoderWeights& w,
                                  const LocalEncoderInputs& in, const RowVec& d_out,
                                  LocalEncoderWeights& grad, LocalEncoderInputGrads& dinput) {
  const Eigen::Index hd = w.hidden();
  const std::size_t t = bundle.length();
  struct Step {
    RowVec h_prev, z, r, n, u;
  };
  std::vector<Step> steps(t);
  RowVec pooled = RowVec::Zero(hd);
  std::vector<std::vector<Step>> all;
  all.reserve(bundle.walks.size());
  for (const auto& walk : bundle.walks) {
    RowVec h = RowVec::Zero(hd);
    for (std::size_t s = 0; s < t; ++s) {
      const NodeId node = walk[s];
      Step& st = steps[s];
      st.h_prev = h;
      const RowVec az = in.xz.row(node) + h * w.uz + w.bz;
      const RowVec ar = in.xr.row(node) + h * w.ur + w.br;
      st.z.resize(hd);
      st.r.resize(hd);
      st.n.resize(hd);
      for (Eigen::Index j = 0; j < hd; ++j) {
        st.z(j) = detail::sigmoid(az(j));
        st.r(j) = detail::sigmoid(ar(j));
      }
      st.u = h * w.un + w.bu;
      const RowVec an = in.xn.row(node) + w.bn + st.r.cwiseProduct(st.u);
      for (Eigen::Index j = 0; j < hd; ++j) st.n(j) = std::tanh(an(j));
      h = (RowVec::Ones(hd) - st.z).cwiseProduct(st.n) + st.z.cwiseProduct(h);
    }
    pooled += h;
    all.push_back(steps);
  }
  const double inv_r = bundle.walks.empty() ? 0.0 : 1.0 / static_cast<double>(bundle.walks.size());
  pooled *= inv_r;

  RowVec d_pre = d_out;
  if (w.bounded) {
    const RowVec code = pooled * w.out + w.out_bias;
    for (Eigen::Index j = 0; j < d_pre.size(); ++j) {
      const double sg = detail::sigmoid(code(j));
      d_pre(j) *= sg * (1.0 - sg);
    }
  }
  grad.out.noalias() += pooled.transpose() * d_pre;
  grad.out_bias += d_pre;
  const RowVec d_pooled = d_pre * w.out.transpose() * inv_r;

  for (std::size_t k = 0; k < bundle.walks.size(); ++k) {
    const auto& walk = bundle.walks[k];
    const auto& st_list = all[k];
    RowVec dh = d_pooled;
    for (std::size_t s = t; s-- > 0;) {
      const Step& st = st_list[s];
      const NodeId node = walk[s];
      const RowVec dz = dh.cwiseProduct(st.h_prev - st.n);
      const RowVec dn = dh.cwiseProduct(RowVec::Ones(hd) - st.z);
      RowVec dh_prev = dh.cwiseProduct(st.z);
      const RowVec dan = dn.cwiseProduct(RowVec::Ones(hd) - st.n.cwiseProduct(st.n));
      dinput.dn.row(node) += dan;
      grad.bn += dan;
      const RowVec dr = dan.cwiseProduct(st.u);
      const RowVec du = dan.cwiseProduct(st.r);
      grad.un.noalias() += st.h_prev.transpose() * du;
      grad.bu += du;
      dh_prev.noalias() += du * w.un.transpose();
      const RowVec dar = dr.cwiseProduct(st.r.cwiseProduct(RowVec::Ones(hd) - st.r));
      dinput.dr.row(node) += dar;
      grad.br += dar;
      grad.ur.noalias() += st.h_prev.transpose() * dar;
      dh_prev.noalias() += dar * w.ur.transpose();
      const RowVec daz = dz.cwiseProduct(st.z.cwiseProduct(RowVec::Ones(hd) - st.z));
      dinput.dz.row(node) += daz;
      grad.bz += daz;
      grad.uz.noalias() += st.h_prev.transpose() * daz;
      dh_prev.noalias() += daz * w.uz.transpose();
      dh = dh_prev;
    }
  }
}

}  // namespace motifgpl
