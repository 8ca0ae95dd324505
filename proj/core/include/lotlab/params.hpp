#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lotlab {

struct Layer {
  std::string id;
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out

  std::size_t size() const {
    return static_cast<std::size_t>(weights.size() + bias.size());
  }
};

/// Ordered per-layer weights and biases. Also used for anything shaped like
/// the parameters: gradients, Adam moments, HVP directions.
///
/// Flattened order is layer by layer, weights (column-major) then bias.
struct ParamSet {
  std::vector<Layer> layers;

  std::size_t size() const;
  std::size_t layer_index(std::string_view id) const;  // throws ConfigError
  std::optional<std::size_t> find_layer(std::string_view id) const;

  /// Same shapes and ids, all entries zero.
  ParamSet zeros_like() const;
  bool same_shape(const ParamSet& other) const;

  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);

  double squared_norm() const;
  double norm() const;
  double dot(const ParamSet& other) const;
  bool all_finite() const;

  ParamSet& axpy(double a, const ParamSet& x);  // this += a * x
  ParamSet& operator+=(const ParamSet& x) { return axpy(1.0, x); }
  ParamSet& operator-=(const ParamSet& x) { return axpy(-1.0, x); }
  ParamSet& operator*=(double s);
};

ParamSet operator+(ParamSet a, const ParamSet& b);
ParamSet operator-(ParamSet a, const ParamSet& b);
ParamSet operator*(double s, ParamSet a);

/// Throws ConfigError unless a and b have identical layer ids and shapes.
void require_same_shape(const ParamSet& a, const ParamSet& b,
                        std::string_view what);

/// Restricts a reduction to one layer or spans all of them.
struct Scope {
  std::optional<std::string> layer_id;

  static Scope global() { return {}; }
  static Scope layer(std::string id) { return {std::move(id)}; }
  bool is_global() const { return !layer_id.has_value(); }
};

/// Indices of the layers covered by `scope`. Throws ConfigError for an
/// unknown layer id.
std::vector<std::size_t> scoped_layers(const ParamSet& p, const Scope& scope);

}  // namespace lotlab
