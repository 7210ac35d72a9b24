#pragma once

// Per-node scalar fields over a mesh. The scalar is either double or
// std::complex<double>; every public operation returning a field checks
// that the values stay finite.

#include <complex>
#include <stdexcept>

#include <Eigen/Dense>

#include "tscm/mesh.hpp"

namespace tscm {

using Complex = std::complex<double>;

template <typename Scalar>
struct NodalField {
  const Mesh* mesh = nullptr;
  Eigen::Vector<Scalar, Eigen::Dynamic> v;

  NodalField() = default;
  NodalField(const Mesh& m, Eigen::Vector<Scalar, Eigen::Dynamic> values)
      : mesh(&m), v(std::move(values)) {
    check_size();
  }

  static NodalField zeros(const Mesh& m) {
    return NodalField(m, Eigen::Vector<Scalar, Eigen::Dynamic>::Zero(m.n_nodes()));
  }
  static NodalField constant(const Mesh& m, Scalar value) {
    return NodalField(
        m, Eigen::Vector<Scalar, Eigen::Dynamic>::Constant(m.n_nodes(), value));
  }

  int size() const { return static_cast<int>(v.size()); }
  Scalar& operator[](int i) { return v[i]; }
  const Scalar& operator[](int i) const { return v[i]; }

  void check_size() const {
    if (!mesh || v.size() != mesh->n_nodes()) {
      throw std::invalid_argument("nodal field size != mesh node count");
    }
  }
  void check_finite(const char* what) const {
    if (!v.allFinite()) {
      throw std::runtime_error(std::string("non-finite nodal field: ") + what);
    }
  }
};

using RealField = NodalField<double>;
using ComplexField = NodalField<Complex>;

}  // namespace tscm
