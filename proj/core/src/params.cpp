#include "lotlab/params.hpp"

#include <cmath>

#include "lotlab/errors.hpp"

namespace lotlab {

std::size_t ParamSet::size() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.size();
  return n;
}

std::optional<std::size_t> ParamSet::find_layer(std::string_view id) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].id == id) return i;
  return std::nullopt;
}

std::size_t ParamSet::layer_index(std::string_view id) const {
  if (auto i = find_layer(id)) return *i;
  throw ConfigError("unknown layer id '" + std::string(id) + "'");
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z;
  z.layers.reserve(layers.size());
  for (const auto& l : layers) {
    z.layers.push_back({l.id,
                        Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  }
  return z;
}

bool ParamSet::same_shape(const ParamSet& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.id != b.id || a.weights.rows() != b.weights.rows() ||
        a.weights.cols() != b.weights.cols() || a.bias.size() != b.bias.size())
      return false;
  }
  return true;
}

Eigen::VectorXd ParamSet::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(size()));
  Eigen::Index pos = 0;
  for (const auto& l : layers) {
    flat.segment(pos, l.weights.size()) = l.weights.reshaped();
    pos += l.weights.size();
    flat.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }
  return flat;
}

void ParamSet::assign(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != size())
    throw ConfigError("flat vector length does not match parameter count");
  Eigen::Index pos = 0;
  for (auto& l : layers) {
    l.weights.reshaped() = flat.segment(pos, l.weights.size());
    pos += l.weights.size();
    l.bias = flat.segment(pos, l.bias.size());
    pos += l.bias.size();
  }
}

double ParamSet::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers)
    s += l.weights.squaredNorm() + l.bias.squaredNorm();
  return s;
}

double ParamSet::norm() const { return std::sqrt(squared_norm()); }

double ParamSet::dot(const ParamSet& other) const {
  require_same_shape(*this, other, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    s += layers[i].weights.cwiseProduct(other.layers[i].weights).sum();
    s += layers[i].bias.dot(other.layers[i].bias);
  }
  return s;
}

bool ParamSet::all_finite() const {
  for (const auto& l : layers)
    if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

ParamSet& ParamSet::axpy(double a, const ParamSet& x) {
  require_same_shape(*this, x, "axpy");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weights += a * x.layers[i].weights;
    layers[i].bias += a * x.layers[i].bias;
  }
  return *this;
}

ParamSet& ParamSet::operator*=(double s) {
  for (auto& l : layers) {
    l.weights *= s;
    l.bias *= s;
  }
  return *this;
}

ParamSet operator+(ParamSet a, const ParamSet& b) { return a += b; }
ParamSet operator-(ParamSet a, const ParamSet& b) { return a -= b; }
ParamSet operator*(double s, ParamSet a) { return a *= s; }

void require_same_shape(const ParamSet& a, const ParamSet& b,
                        std::string_view what) {
  if (!a.same_shape(b))
    throw ConfigError(std::string(what) + ": parameter shapes differ");
}

std::vector<std::size_t> scoped_layers(const ParamSet& p, const Scope& scope) {
  std::vector<std::size_t> idx;
  if (scope.is_global()) {
    for (std::size_t i = 0; i < p.layers.size(); ++i) idx.push_back(i);
  } else {
    idx.push_back(p.layer_index(*scope.layer_id));
  }
  return idx;
}

}  // namespace lotlab
