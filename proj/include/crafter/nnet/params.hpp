#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/QR>

#include "crafter/nnet/tensor.hpp"
#include "crafter/rng.hpp"

namespace crafter::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Named trainable tensors in creation order.
template <class T>
class ParamSet {
 public:
  Tensor<T>& add(const std::string& name, Shape shape) {
    for (const auto& [n, _] : items_)
      if (n == name) throw ShapeError("duplicate parameter '" + name + "'");
    items_.emplace_back(name, Tensor<T>::zeros(std::move(shape), true));
    return items_.back().second;
  }

  Tensor<T>& get(const std::string& name) {
    for (auto& [n, t] : items_)
      if (n == name) return t;
    throw ShapeError("no parameter '" + name + "'");
  }
  const Tensor<T>& get(const std::string& name) const { return const_cast<ParamSet*>(this)->get(name); }
  bool contains(const std::string& name) const {
    for (const auto& [n, _] : items_)
      if (n == name) return true;
    return false;
  }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  std::size_t size() const { return items_.size(); }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
  }

  double grad_norm() const {
    double s = 0;
    for (const auto& [_, t] : items_)
      if (t.has_grad())
        for (T g : t.node().grad) s += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(s);
  }

  // Rescales all gradients so their global norm is at most max_norm.
  // Returns the norm before clipping.
  double clip_grad_norm(double max_norm) {
    const double norm = grad_norm();
    if (norm > max_norm && norm > 0) {
      const T f = static_cast<T>(max_norm / (norm + 1e-12));
      for (auto& [_, t] : items_)
        if (t.has_grad())
          for (T& g : t.node().grad) g *= f;
    }
    return norm;
  }

  // Copies values from another set with identical names and shapes.
  template <class U>
  void copy_from(const ParamSet<U>& other) {
    if (other.size() != size()) throw ShapeError("parameter sets differ in size");
    auto it = other.begin();
    for (auto& [n, t] : items_) {
      if (it->first != n || it->second.shape() != t.shape()) throw ShapeError("parameter '" + n + "' mismatch");
      for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(it->second.data()[i]);
      ++it;
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

// Above this many multiply-adds the QR is skipped and a scaled Gaussian is
// used; for tall random matrices its columns are already near-orthogonal.
inline constexpr double kOrthogonalQrBudget = 4e9;

// Orthogonal init on the [dim0, rest] matricization, scaled by gain.
template <class T>
void orthogonal_init(Tensor<T>& t, double gain, Rng& rng) {
  const int rows = t.dim(0);
  const int cols = static_cast<int>(t.size() / static_cast<std::size_t>(rows));
  const int big = std::max(rows, cols), small = std::min(rows, cols);
  Eigen::MatrixXd a(big, small);
  for (int c = 0; c < small; ++c)
    for (int r = 0; r < big; ++r) a(r, c) = rng.normal();
  if (static_cast<double>(big) * small * small <= kOrthogonalQrBudget) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    const Eigen::VectorXd diag = qr.matrixQR().diagonal();
    for (int c = 0; c < small; ++c)
      if (diag(c) < 0) q.col(c) *= -1.0;
    a = std::move(q);
  } else {
    a /= std::sqrt(static_cast<double>(big));
  }
  auto data = t.data();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)] =
          static_cast<T>(gain * (rows >= cols ? a(r, c) : a(c, r)));
}

template <class T>
void gaussian_init(Tensor<T>& t, double stddev, Rng& rng) {
  for (T& v : t.data()) v = static_cast<T>(stddev * rng.normal());
}

template <class T>
void fill(Tensor<T>& t, T value) {
  std::fill(t.data().begin(), t.data().end(), value);
}

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-5;
};

template <class T>
class Adam {
 public:
  Adam(ParamSet<T>& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {
    for (const auto& [_, t] : params) {
      m_.emplace_back(t.size(), 0.0);
      v_.emplace_back(t.size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::size_t k = 0;
    for (auto& [_, p] : *params_) {
      if (!p.has_grad()) {
        ++k;
        continue;
      }
      auto& m = m_[k];
      auto& v = v_[k];
      auto data = p.data();
      const auto& g = p.node().grad;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        data[i] -= static_cast<T>(cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps));
      }
      ++k;
    }
  }

  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  std::int64_t steps() const { return t_; }

 private:
  ParamSet<T>* params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

// Binary checkpoint: magic, version, config digest, then named tensors
// (name, rank, dims, float32 values), little-endian.
inline constexpr char kCheckpointMagic[8] = {'C', 'R', 'F', 'T', 'N', 'N', 'v', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {
template <class V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class V>
V take(std::istream& is) {
  V v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("checkpoint truncated");
  return v;
}
}  // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path& path, const ParamSet<T>& params, std::uint64_t config_digest) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put(os, kCheckpointVersion);
  detail::put(os, config_digest);
  detail::put(os, static_cast<std::uint32_t>(params.size()));
  std::vector<float> buf;
  for (const auto& [name, t] : params) {
    detail::put(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put(os, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) detail::put(os, static_cast<std::int32_t>(d));
    buf.assign(t.data().begin(), t.data().end());
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) throw CheckpointError("write failed for '" + path.string() + "'");
}

inline std::uint64_t checkpoint_digest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CheckpointError("'" + path.string() + "' is not a checkpoint");
  if (detail::take<std::uint32_t>(is) != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
  return detail::take<std::uint64_t>(is);
}

// Loads values into an existing set; refuses on digest or layout mismatch.
template <class T>
void load_checkpoint(const std::filesystem::path& path, ParamSet<T>& params, std::uint64_t config_digest) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw CheckpointError("'" + path.string() + "' is not a checkpoint");
  if (detail::take<std::uint32_t>(is) != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
  if (detail::take<std::uint64_t>(is) != config_digest)
    throw CheckpointError("checkpoint config digest does not match the agent config");
  const auto count = detail::take<std::uint32_t>(is);
  if (count != params.size()) throw CheckpointError("checkpoint has " + std::to_string(count) + " tensors");
  std::vector<float> buf;
  for (auto& [name, t] : params) {
    const auto len = detail::take<std::uint32_t>(is);
    std::string n(len, '\0');
    is.read(n.data(), len);
    if (n != name) throw CheckpointError("checkpoint tensor '" + n + "' where '" + name + "' expected");
    Shape shape(detail::take<std::uint32_t>(is));
    for (int& d : shape) d = detail::take<std::int32_t>(is);
    if (shape != t.shape()) throw CheckpointError("checkpoint tensor '" + name + "' has shape " + to_string(shape));
    buf.resize(t.size());
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float))))
      throw CheckpointError("checkpoint truncated");
    for (std::size_t i = 0; i < buf.size(); ++i) t.data()[i] = static_cast<T>(buf[i]);
  }
}

}  // namespace crafter::nn
