#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "gmmssl/error.hpp"
#include "gmmssl/harness.hpp"
#include "gmmssl/mixture.hpp"
#include "gmmssl/optimizer.hpp"
#include "gmmssl/subspace.hpp"

// JSON schema. Matrices are arrays of rows; a mixture's "means" holds one
// row per component:
//   SharedGMM  {"weights": [K], "means": [[d] x K], "covariance": [[d] x d]}
//   ClipGMM    {"weights": [K], "vision": {"means", "covariance"}, "text": {...}}
// Doubles are written in shortest round-trip form, so parsing restores every
// value bit for bit.
namespace gmmssl::json {

using Json = nlohmann::json;

inline Json matrix_to_json(const MatrixXd& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline MatrixXd matrix_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw InvalidArgument(std::string(what) + ": expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) throw InvalidArgument(std::string(what) + ": rows must be non-empty arrays");
  MatrixXd m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) throw InvalidArgument(std::string(what) + ": ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw InvalidArgument(std::string(what) + ": non-numeric entry");
      m(static_cast<Index>(i), static_cast<Index>(c)) = j[i][c].get<double>();
    }
  }
  return m;
}

inline Json vector_to_json(const VectorXd& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline VectorXd vector_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw InvalidArgument(std::string(what) + ": expected a non-empty array");
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidArgument(std::string(what) + ": non-numeric entry");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw InvalidArgument(std::string("missing field '") + key + "'");
  return j.at(key);
}

inline Json to_json(const SharedGMM& m) {
  return Json{{"weights", vector_to_json(m.weights())},
              {"means", matrix_to_json(m.means().transpose())},
              {"covariance", matrix_to_json(m.covariance())}};
}

inline SharedGMM shared_gmm_from_json(const Json& j) {
  return SharedGMM(vector_from_json(field(j, "weights"), "weights"),
                   matrix_from_json(field(j, "means"), "means").transpose(),
                   matrix_from_json(field(j, "covariance"), "covariance"));
}

inline Json to_json(const ClipGMM& m) {
  auto side = [](const SharedGMM& s) {
    return Json{{"means", matrix_to_json(s.means().transpose())}, {"covariance", matrix_to_json(s.covariance())}};
  };
  return Json{{"weights", vector_to_json(m.weights())}, {"vision", side(m.vision())}, {"text", side(m.text())}};
}

inline ClipGMM clip_gmm_from_json(const Json& j) {
  const Json& v = field(j, "vision");
  const Json& t = field(j, "text");
  return ClipGMM(vector_from_json(field(j, "weights"), "weights"),
                 matrix_from_json(field(v, "means"), "vision.means").transpose(),
                 matrix_from_json(field(v, "covariance"), "vision.covariance"),
                 matrix_from_json(field(t, "means"), "text.means").transpose(),
                 matrix_from_json(field(t, "covariance"), "text.covariance"));
}

inline Json to_json(const Subspace& s) { return Json{{"basis", matrix_to_json(s.basis())}}; }

inline Subspace subspace_from_json(const Json& j) { return Subspace(matrix_from_json(field(j, "basis"), "basis")); }

inline Json to_json(const ProjectionMap& a) { return Json{{"matrix", matrix_to_json(a.matrix())}}; }

inline ProjectionMap projection_from_json(const Json& j) {
  return ProjectionMap(matrix_from_json(field(j, "matrix"), "matrix"));
}

inline Json to_json(const SubspaceReport& r) {
  return Json{{"principal_angles", r.principal_angles},
              {"contained", r.contained},
              {"equal", r.equal},
              {"collapse", r.collapse},
              {"rank_tolerance", r.rank_tolerance},
              {"learned_rank", r.learned_rank},
              {"reference_dim", r.reference_dim}};
}

namespace detail {

inline void reject_unknown(const Json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw InvalidArgument(std::string(what) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw InvalidArgument(std::string("unknown ") + what + " field '" + it.key() + "'");
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline TrainConfig train_config_from_json(const Json& j, TrainConfig c = {}) {
  detail::reject_unknown(j,
                         {"steps", "lr", "lr_decay", "plateau_patience", "smoothing", "min_lr", "retry_lr_factor",
                          "divergence_factor", "batch_n", "batch_m", "seed", "spectral_projection", "tol_grad", "init_scale",
                          "checkpoint_every"},
                         "train config");
  detail::read(j, "steps", c.steps);
  detail::read(j, "lr", c.lr);
  detail::read(j, "lr_decay", c.lr_decay);
  detail::read(j, "plateau_patience", c.plateau_patience);
  detail::read(j, "smoothing", c.smoothing);
  detail::read(j, "min_lr", c.min_lr);
  detail::read(j, "retry_lr_factor", c.retry_lr_factor);
  detail::read(j, "divergence_factor", c.divergence_factor);
  detail::read(j, "batch_n", c.batch_n);
  detail::read(j, "batch_m", c.batch_m);
  detail::read(j, "seed", c.seed);
  detail::read(j, "tol_grad", c.tol_grad);
  detail::read(j, "init_scale", c.init_scale);
  detail::read(j, "checkpoint_every", c.checkpoint_every);
  if (j.contains("spectral_projection")) {
    if (j.at("spectral_projection").is_null()) c.spectral_projection.reset();
    else c.spectral_projection = j.at("spectral_projection").get<double>();
  }
  c.validate();
  return c;
}

inline Json to_json(const TrainConfig& c) {
  Json j{{"steps", c.steps},
         {"lr", c.lr},
         {"lr_decay", c.lr_decay},
         {"plateau_patience", c.plateau_patience},
         {"smoothing", c.smoothing},
         {"min_lr", c.min_lr},
         {"retry_lr_factor", c.retry_lr_factor},
         {"divergence_factor", c.divergence_factor},
         {"batch_n", c.batch_n},
         {"batch_m", c.batch_m},
         {"seed", c.seed},
         {"tol_grad", c.tol_grad},
         {"init_scale", c.init_scale},
         {"checkpoint_every", c.checkpoint_every}};
  j["spectral_projection"] = c.spectral_projection ? Json(*c.spectral_projection) : Json(nullptr);
  return j;
}

/// ScenarioConfig from JSON. Field names follow the struct (K for k);
/// unknown fields are rejected so typos do not silently fall back to
/// defaults.
inline ScenarioConfig scenario_from_json(const Json& j) {
  detail::reject_unknown(j,
                         {"experiment", "K", "d", "r", "delta", "kappa", "n_train", "n_eval", "seeds", "methods",
                          "orthonormalize", "online", "xi", "d_text", "aligned", "grid", "kmeans_restarts",
                          "kmeans_max_iter", "record_wallclock", "train"},
                         "scenario");
  ScenarioConfig c;
  if (j.contains("experiment")) c.experiment = parse_experiment(j.at("experiment").get<std::string>());
  detail::read(j, "K", c.k);
  detail::read(j, "d", c.d);
  detail::read(j, "r", c.r);
  detail::read(j, "delta", c.delta);
  detail::read(j, "kappa", c.kappa);
  detail::read(j, "n_train", c.n_train);
  detail::read(j, "n_eval", c.n_eval);
  detail::read(j, "seeds", c.seeds);
  if (j.contains("methods")) {
    std::vector<std::string> names;
    detail::read(j, "methods", names);
    c.methods.clear();
    for (const std::string& n : names) c.methods.push_back(parse_method(n));
  }
  detail::read(j, "orthonormalize", c.orthonormalize);
  detail::read(j, "online", c.online);
  if (j.contains("xi") && !j.at("xi").is_null()) c.xi = j.at("xi").get<double>();
  detail::read(j, "d_text", c.d_text);
  detail::read(j, "aligned", c.aligned);
  detail::read(j, "grid", c.grid);
  detail::read(j, "kmeans_restarts", c.kmeans_restarts);
  detail::read(j, "kmeans_max_iter", c.kmeans_max_iter);
  detail::read(j, "record_wallclock", c.record_wallclock);
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  c.validate();
  return c;
}

inline Json to_json(const ScenarioConfig& c) {
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.emplace_back(to_string(m));
  Json j{{"experiment", to_string(c.experiment)},
         {"K", c.k},
         {"d", c.d},
         {"r", c.r},
         {"delta", c.delta},
         {"kappa", c.kappa},
         {"n_train", c.n_train},
         {"n_eval", c.n_eval},
         {"seeds", c.seeds},
         {"methods", methods},
         {"orthonormalize", c.orthonormalize},
         {"online", c.online},
         {"d_text", c.d_text},
         {"aligned", c.aligned},
         {"grid", c.grid},
         {"kmeans_restarts", c.kmeans_restarts},
         {"kmeans_max_iter", c.kmeans_max_iter},
         {"record_wallclock", c.record_wallclock},
         {"train", to_json(c.train)}};
  j["xi"] = c.xi ? Json(*c.xi) : Json(nullptr);
  return j;
}

}  // namespace gmmssl::json
