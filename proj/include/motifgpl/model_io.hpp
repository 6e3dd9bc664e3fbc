#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "motifgpl/error.hpp"
#include "motifgpl/proto_model.hpp"

namespace motifgpl {

inline constexpr int kModelFormatVersion = 1;

/// A trained model plus what is needed to reuse it: the training config and
/// the training nodes (the projection candidates).
struct SavedModel {
  TrainConfig config;
  PrototypeModel model;
  std::vector<NodeId> train_nodes;
};

inline nlohmann::json mat_to_json(const Mat& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Mat mat_from_json(const nlohmann::json& j, const std::string& name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ValidationError("model tensor " + name + ": data length does not match shape");
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  return m;
}

inline nlohmann::json model_to_json(const SavedModel& s) {
  nlohmann::json j;
  j["format"] = "motifgpl-model";
  j["version"] = kModelFormatVersion;
  j["config"] = s.config.to_text();
  j["class_count"] = s.model.class_count;
  j["d_in"] = s.model.encoder.gcn[0].front().rows();
  j["train_nodes"] = s.train_nodes;
  for (View v : kViews) {
    const auto& p = s.model.views[view_index(v)].protos;
    j["prototypes"][to_string(v)] = {{"class_of", p.class_of}, {"roots", p.roots}};
  }
  for (const auto& [name, t] : s.model.tensors()) j["tensors"][name] = mat_to_json(*t);
  return j;
}

inline SavedModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "motifgpl-model") throw ValidationError("not a model file");
  if (j.value("version", 0) != kModelFormatVersion)
    throw ValidationError("unsupported model version " + std::to_string(j.value("version", 0)));
  SavedModel s;
  std::istringstream cfg_text(j.at("config").get<std::string>());
  s.config.apply(parse_key_values(cfg_text, "model config"));
  Rng unused(0, 0);
  s.model = init_model(j.at("d_in").get<Eigen::Index>(), j.at("class_count").get<int>(), s.config, unused);
  const auto& tensors = j.at("tensors");
  for (auto& [name, t] : s.model.tensors()) {
    if (!tensors.contains(name)) throw ValidationError("model file lacks tensor " + name);
    Mat m = mat_from_json(tensors.at(name), name);
    if (m.rows() != t->rows() || m.cols() != t->cols()) throw ValidationError("model tensor " + name + ": shape mismatch");
    *t = std::move(m);
  }
  for (View v : kViews) {
    auto& p = s.model.views[view_index(v)].protos;
    const auto& jp = j.at("prototypes").at(to_string(v));
    p.class_of = jp.at("class_of").get<std::vector<int>>();
    p.roots = jp.at("roots").get<std::vector<std::int64_t>>();
    if (p.class_of.size() != p.size() || p.roots.size() != p.size())
      throw ValidationError("model prototypes do not match tensor shape");
  }
  s.train_nodes = j.at("train_nodes").get<std::vector<NodeId>>();
  return s;
}

inline void save_model(const std::string& path, const SavedModel& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << model_to_json(s).dump() << '\n';
}

inline SavedModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace motifgpl
