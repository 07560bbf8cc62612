#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "monet/core/errors.hpp"
#include "monet/core/matrix.hpp"
#include "monet/core/rng.hpp"

namespace monet {

/// A task order: `at(i)` is the (0-based) task processed at step i.
class Permutation {
public:
  Permutation() = default;

  explicit Permutation(std::vector<int> map) : map_(std::move(map)) {
    std::vector<bool> seen(map_.size(), false);
    for (int v : map_) {
      if (v < 0 || static_cast<std::size_t>(v) >= map_.size() || seen[static_cast<std::size_t>(v)]) {
        throw DomainError("permutation: not a bijection on [0, " + std::to_string(map_.size()) + ")");
      }
      seen[static_cast<std::size_t>(v)] = true;
    }
  }

  static Permutation identity(int size) {
    std::vector<int> m(static_cast<std::size_t>(size));
    std::iota(m.begin(), m.end(), 0);
    return Permutation(std::move(m));
  }

  /// Builds from the 1-based notation used in reports, e.g. {2, 1}.
  static Permutation from_one_based(std::span<const int> one_based) {
    std::vector<int> m;
    m.reserve(one_based.size());
    for (int v : one_based) {
      m.push_back(v - 1);
    }
    return Permutation(std::move(m));
  }

  std::vector<int> one_based() const {
    std::vector<int> out(map_);
    for (int& v : out) {
      ++v;
    }
    return out;
  }

  int size() const { return static_cast<int>(map_.size()); }
  int at(int step) const { return map_[static_cast<std::size_t>(step)]; }
  int operator[](int step) const { return at(step); }
  const std::vector<int>& map() const { return map_; }

  Permutation inverse() const {
    std::vector<int> inv(map_.size());
    for (std::size_t i = 0; i < map_.size(); ++i) {
      inv[static_cast<std::size_t>(map_[i])] = static_cast<int>(i);
    }
    return Permutation(std::move(inv));
  }

  bool is_identity() const {
    for (std::size_t i = 0; i < map_.size(); ++i) {
      if (map_[i] != static_cast<int>(i)) {
        return false;
      }
    }
    return true;
  }

  int moved_points() const {
    int c = 0;
    for (std::size_t i = 0; i < map_.size(); ++i) {
      c += map_[i] != static_cast<int>(i) ? 1 : 0;
    }
    return c;
  }

  std::string str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < map_.size(); ++i) {
      s += (i ? "," : "") + std::to_string(map_[i] + 1);
    }
    return s + "]";
  }

  friend bool operator==(const Permutation&, const Permutation&) = default;
  friend auto operator<=>(const Permutation&, const Permutation&) = default;

private:
  std::vector<int> map_;
};

/// A T x T doubly stochastic matrix; rows index steps, columns index tasks.
struct SoftOrder {
  Matrix omega;

  int size() const { return static_cast<int>(omega.rows()); }
};

inline bool is_doubly_stochastic(const Matrix& omega, double tol = 1e-9) {
  if (omega.rows() != omega.cols()) {
    return false;
  }
  if ((omega.array() < -tol).any()) {
    return false;
  }
  const bool rows_ok = ((omega.rowwise().sum().array() - 1.0).abs() <= tol).all();
  const bool cols_ok = ((omega.colwise().sum().array() - 1.0).abs() <= tol).all();
  return rows_ok && cols_ok;
}

inline bool is_doubly_stochastic(const SoftOrder& s, double tol = 1e-9) { return is_doubly_stochastic(s.omega, tol); }

inline SoftOrder perm_matrix(const Permutation& p) {
  const int t = p.size();
  SoftOrder s{Matrix::Zero(t, t)};
  for (int i = 0; i < t; ++i) {
    s.omega(i, p[i]) = 1.0;
  }
  return s;
}

inline Permutation inverse(const Permutation& p) { return p.inverse(); }

inline double frobenius_sq(const SoftOrder& a, const SoftOrder& b) {
  require_same_shape(a.omega, b.omega, "frobenius_sq");
  return (a.omega - b.omega).squaredNorm();
}

/// T!, saturating at the largest representable value.
inline std::uint64_t factorial(int t) {
  std::uint64_t f = 1;
  for (int i = 2; i <= t; ++i) {
    if (f > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(i)) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    f *= static_cast<std::uint64_t>(i);
  }
  return f;
}

/// Every permutation of T elements in lexicographic order (identity first).
inline std::vector<Permutation> all_permutations(int t) {
  std::vector<int> m(static_cast<std::size_t>(t));
  std::iota(m.begin(), m.end(), 0);
  std::vector<Permutation> out;
  do {
    out.emplace_back(m);
  } while (std::next_permutation(m.begin(), m.end()));
  return out;
}

/// Uniform random permutation by Fisher-Yates.
inline Permutation random_permutation(int t, RngStream& rng) {
  std::vector<int> m(static_cast<std::size_t>(t));
  std::iota(m.begin(), m.end(), 0);
  rng.shuffle(m);
  return Permutation(std::move(m));
}

/// A pool of distinct candidate orders.
struct OrderPool {
  int tasks = 0;
  std::vector<Permutation> orders;

  std::size_t size() const { return orders.size(); }
  const Permutation& operator[](std::size_t m) const { return orders[m]; }

  /// Index of the identity order in the pool, or -1.
  int identity_index() const {
    for (std::size_t m = 0; m < orders.size(); ++m) {
      if (orders[m].is_identity()) {
        return static_cast<int>(m);
      }
    }
    return -1;
  }
};

inline OrderPool make_pool(std::vector<Permutation> orders) {
  if (orders.empty()) {
    throw ArityError("order pool: empty");
  }
  OrderPool pool{orders.front().size(), std::move(orders)};
  std::set<Permutation> distinct;
  for (const Permutation& p : pool.orders) {
    if (p.size() != pool.tasks) {
      throw ShapeError("order pool: permutations of different sizes");
    }
    if (!distinct.insert(p).second) {
      throw DomainError("order pool: duplicate permutation " + p.str());
    }
  }
  return pool;
}

/// M distinct orders; every permutation, in shuffled order, when M == T!.
/// Shuffling keeps argmax ties from favouring the identity.
inline OrderPool sample_pool(int t, std::size_t m, RngStream& rng) {
  if (t < 1 || m < 1) {
    throw ArityError("sample_pool: need T >= 1 and M >= 1");
  }
  const std::uint64_t cap = factorial(t);
  if (m > cap) {
    throw CapacityError("sample_pool: M = " + std::to_string(m) + " exceeds T! = " + std::to_string(cap));
  }
  if (m == cap) {
    OrderPool pool{t, all_permutations(t)};
    rng.shuffle(pool.orders);
    return pool;
  }
  std::set<Permutation> seen;
  OrderPool pool{t, {}};
  while (pool.orders.size() < m) {
    Permutation p = random_permutation(t, rng);
    if (seen.insert(p).second) {
      pool.orders.push_back(std::move(p));
    }
  }
  return pool;
}

inline void require_weights(std::span<const double> pi, std::size_t m, double tol = 1e-9) {
  if (pi.size() != m) {
    throw WeightError("weights: expected " + std::to_string(m) + " entries, got " + std::to_string(pi.size()));
  }
  double sum = 0.0;
  for (double w : pi) {
    if (!(w >= 0.0)) {
      throw WeightError("weights: negative or NaN entry");
    }
    sum += w;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw WeightError("weights: sum " + std::to_string(sum) + " is not 1");
  }
}

/// Convex combination sum_m pi_m M_{sigma_m}.
inline SoftOrder combine(const OrderPool& pool, std::span<const double> pi) {
  require_weights(pi, pool.size());
  SoftOrder s{Matrix::Zero(pool.tasks, pool.tasks)};
  for (std::size_t m = 0; m < pool.size(); ++m) {
    if (pi[m] == 0.0) {
      continue;
    }
    for (int i = 0; i < pool.tasks; ++i) {
      s.omega(i, pool[m][i]) += pi[m];
    }
  }
  return s;
}

/// argmax of pi, lowest index on ties.
inline std::size_t selected_index(std::span<const double> pi) {
  if (pi.empty()) {
    throw ArityError("selected_index: empty weights");
  }
  return static_cast<std::size_t>(std::max_element(pi.begin(), pi.end()) - pi.begin());
}

inline const Permutation& selected_order(const OrderPool& pool, std::span<const double> pi) {
  require_weights(pi, pool.size());
  return pool[selected_index(pi)];
}

inline double distance_to_identity(const Permutation& p) {
  return frobenius_sq(perm_matrix(p), perm_matrix(Permutation::identity(p.size())));
}

inline void to_json(nlohmann::json& j, const SoftOrder& s) {
  j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.omega.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < s.omega.cols(); ++c) {
      row.push_back(s.omega(i, c));
    }
    j.push_back(std::move(row));
  }
}

inline void from_json(const nlohmann::json& j, SoftOrder& s) {
  const auto n = static_cast<Eigen::Index>(j.size());
  s.omega = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(j.at(i).size()) != n) {
      throw ShapeError("soft order json: row " + std::to_string(i) + " has wrong length");
    }
    for (Eigen::Index c = 0; c < n; ++c) {
      s.omega(i, c) = j.at(i).at(c).get<double>();
    }
  }
}

}  // namespace monet
