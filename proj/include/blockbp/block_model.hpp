#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace blockbp {

/// Sorted set of group indices, a candidate support at group granularity.
struct block_support {
  std::vector<std::uint32_t> groups;

  bool contains(std::uint32_t g) const {
    return std::binary_search(groups.begin(), groups.end(), g);
  }
  std::size_t size() const { return groups.size(); }
};

// Non-overlapping block structure: M disjoint groups of equal size g whose
// union is exactly [0, p). Weights default to 1 and must stay positive.
class group_model {
 public:
  group_model(std::size_t p, std::vector<std::vector<std::uint32_t>> groups,
              std::vector<double> weights = {})
      : p_(p), groups_(std::move(groups)), weights_(std::move(weights)) {
    if (groups_.empty()) throw std::invalid_argument("group_model: no groups");
    if (weights_.empty()) weights_.assign(groups_.size(), 1.0);
    if (weights_.size() != groups_.size())
      throw std::invalid_argument("group_model: weights/groups size mismatch");
    for (double w : weights_)
      if (!(w > 0.0))
        throw std::invalid_argument("group_model: non-positive weight");
    group_size_ = groups_.front().size();
    std::vector<std::uint8_t> seen(p_, 0);
    for (std::size_t i = 0; i < groups_.size(); ++i) {
      if (groups_[i].size() != group_size_)
        throw std::invalid_argument(
            "group_model: group " + std::to_string(i) + " has size " +
            std::to_string(groups_[i].size()) + ", expected " +
            std::to_string(group_size_));
      for (std::uint32_t idx : groups_[i]) {
        if (idx >= p_)
          throw std::invalid_argument("group_model: index " +
                                      std::to_string(idx) + " out of range");
        if (seen[idx]++)
          throw std::invalid_argument("group_model: index " +
                                      std::to_string(idx) +
                                      " appears in more than one group");
      }
    }
    if (group_size_ * groups_.size() != p_)
      throw std::invalid_argument("group_model: groups do not cover [0, p)");
  }

  /// M consecutive blocks of size g covering [0, p).
  static group_model consecutive(std::size_t p, std::size_t g) {
    if (g == 0 || p % g != 0)
      throw std::invalid_argument("group_model: p must be a multiple of g");
    std::vector<std::vector<std::uint32_t>> groups(p / g);
    for (std::size_t i = 0; i < groups.size(); ++i) {
      groups[i].resize(g);
      std::iota(groups[i].begin(), groups[i].end(),
                static_cast<std::uint32_t>(i * g));
    }
    return group_model(p, std::move(groups));
  }

  std::size_t dim() const { return p_; }
  std::size_t num_groups() const { return groups_.size(); }
  std::size_t group_size() const { return group_size_; }
  const std::vector<std::uint32_t>& group(std::size_t i) const {
    return groups_[i];
  }
  double weight(std::size_t i) const { return weights_[i]; }
  bool unit_weights() const {
    return std::all_of(weights_.begin(), weights_.end(),
                       [](double w) { return w == 1.0; });
  }

  nlohmann::json to_json() const {
    return {{"p", p_},
            {"g", group_size_},
            {"M", groups_.size()},
            {"groups", groups_},
            {"weights", weights_}};
  }

  static group_model from_json(const nlohmann::json& j) {
    group_model m(j.at("p").get<std::size_t>(),
                  j.at("groups").get<std::vector<std::vector<std::uint32_t>>>(),
                  j.value("weights", std::vector<double>{}));
    if (j.contains("g") && j["g"].get<std::size_t>() != m.group_size())
      throw std::invalid_argument("group_model: stored g is inconsistent");
    if (j.contains("M") && j["M"].get<std::size_t>() != m.num_groups())
      throw std::invalid_argument("group_model: stored M is inconsistent");
    return m;
  }

 private:
  std::size_t p_;
  std::vector<std::vector<std::uint32_t>> groups_;
  std::vector<double> weights_;
  std::size_t group_size_ = 0;
};

namespace detail {
inline void check_length(const group_model& m, std::span<const double> beta) {
  if (beta.size() != m.dim())
    throw std::invalid_argument("vector length " + std::to_string(beta.size()) +
                                " does not match model dimension " +
                                std::to_string(m.dim()));
}
}  // namespace detail

/// Euclidean norms of the per-group restrictions (unweighted).
inline std::vector<double> group_norms(const group_model& m,
                                       std::span<const double> beta) {
  detail::check_length(m, beta);
  std::vector<double> norms(m.num_groups());
  for (std::size_t i = 0; i < m.num_groups(); ++i) {
    double s = 0.0;
    for (std::uint32_t idx : m.group(i)) s += beta[idx] * beta[idx];
    norms[i] = std::sqrt(s);
  }
  return norms;
}

/// Weighted sum of group Euclidean norms.
inline double l21_norm(const group_model& m, std::span<const double> beta) {
  detail::check_length(m, beta);
  double total = 0.0;
  for (std::size_t i = 0; i < m.num_groups(); ++i) {
    double s = 0.0;
    for (std::uint32_t idx : m.group(i)) s += beta[idx] * beta[idx];
    total += m.weight(i) * std::sqrt(s);
  }
  return total;
}

/// The k groups of largest weighted group norm. Because groups are disjoint,
/// this support minimizes the weighted group-norm sum of the residual over
/// all k-group supports. Ties break toward the lower group index.
inline block_support best_k_block_support(const group_model& m,
                                          std::span<const double> beta,
                                          std::size_t k) {
  detail::check_length(m, beta);
  if (k > m.num_groups())
    throw std::invalid_argument("best_k_block_support: k exceeds group count");
  std::vector<double> scored = group_norms(m, beta);
  for (std::size_t i = 0; i < scored.size(); ++i) scored[i] *= m.weight(i);
  std::vector<std::uint32_t> order(m.num_groups());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     return scored[a] > scored[b];
                   });
  block_support s;
  s.groups.assign(order.begin(), order.begin() + k);
  std::sort(s.groups.begin(), s.groups.end());
  return s;
}

/// Zero outside the selected groups, identical inside.
inline std::vector<double> restrict_to(const group_model& m,
                                       std::span<const double> beta,
                                       const block_support& s) {
  detail::check_length(m, beta);
  std::vector<double> out(beta.size(), 0.0);
  for (std::uint32_t gi : s.groups) {
    if (gi >= m.num_groups())
      throw std::invalid_argument("restrict_to: group index out of range");
    for (std::uint32_t idx : m.group(gi)) out[idx] = beta[idx];
  }
  return out;
}

/// Proximal operator of tau * weighted group-norm sum, in place.
/// Each group shrinks by max(0, 1 - tau*w/||beta_G||); a group at or below
/// the threshold is set to zero without dividing.
inline void group_soft_threshold_inplace(const group_model& m,
                                         std::span<double> beta, double tau) {
  detail::check_length(m, std::span<const double>(beta.data(), beta.size()));
  if (tau < 0.0)
    throw std::invalid_argument("group_soft_threshold: negative tau");
  if (tau == 0.0) return;
  for (std::size_t i = 0; i < m.num_groups(); ++i) {
    double s = 0.0;
    for (std::uint32_t idx : m.group(i)) s += beta[idx] * beta[idx];
    const double norm = std::sqrt(s);
    const double threshold = tau * m.weight(i);
    if (norm <= threshold) {
      for (std::uint32_t idx : m.group(i)) beta[idx] = 0.0;
    } else {
      const double scale = 1.0 - threshold / norm;
      for (std::uint32_t idx : m.group(i)) beta[idx] *= scale;
    }
  }
}

inline std::vector<double> group_soft_threshold(const group_model& m,
                                                std::span<const double> beta,
                                                double tau) {
  std::vector<double> out(beta.begin(), beta.end());
  group_soft_threshold_inplace(m, out, tau);
  return out;
}

/// True iff at most k groups contain a nonzero entry.
inline bool is_k_block_sparse(const group_model& m,
                              std::span<const double> beta, std::size_t k) {
  detail::check_length(m, beta);
  if (k > m.num_groups())
    throw std::invalid_argument("is_k_block_sparse: k exceeds group count");
  std::size_t active = 0;
  for (std::size_t i = 0; i < m.num_groups(); ++i) {
    for (std::uint32_t idx : m.group(i)) {
      if (beta[idx] != 0.0) {
        if (++active > k) return false;
        break;
      }
    }
  }
  return true;
}

}  // namespace blockbp
