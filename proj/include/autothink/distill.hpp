#pragma once

// Universal logit distillation (ULD) between teacher logits and student
// logits, including multi-token-prediction (MTP) heads.
//
// Per position the loss is the L1 distance between the two probability
// vectors after each is sorted in descending order and the shorter one is
// zero-padded. Sorting makes the loss independent of vocabulary order, so
// teacher and student may use different vocabularies. Values lie in [0, 2].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace autothink::distill {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// positions x vocabulary, finite, at least 1 x 2.
class LogitMatrix {
 public:
  LogitMatrix() = default;
  explicit LogitMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 2) throw std::invalid_argument("LogitMatrix needs P >= 1 and V >= 2");
    if (!values_.allFinite()) throw std::invalid_argument("LogitMatrix entries must be finite");
  }

  Eigen::Index positions() const { return values_.rows(); }
  Eigen::Index vocab() const { return values_.cols(); }
  const Matrix& values() const { return values_; }

  // Rows [first, first + count).
  LogitMatrix slice(Eigen::Index first, Eigen::Index count) const {
    return LogitMatrix(Matrix(values_.middleRows(first, count)));
  }

 private:
  Matrix values_;
};

struct MTPConfig {
  int num_heads = 1;
  double head_weight = 0.3;  // lambda_mtp
};

struct UldResult {
  double loss = 0.0;
  std::vector<double> per_position;
  Matrix grad_student;  // d loss / d student logits
};

// Pairwise summation; the result does not depend on how rows were
// scheduled.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline std::vector<double> softmax_row(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& x : p) x /= z;
  return p;
}

namespace detail {

inline std::vector<std::size_t> descending_order(std::span<const double> p) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  return idx;
}

inline std::vector<double> sorted_desc(std::span<const double> p) {
  std::vector<double> s(p.begin(), p.end());
  std::stable_sort(s.begin(), s.end(), std::greater<>());
  return s;
}

inline double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

inline std::span<const double> row_span(const Matrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace detail

inline double uld_position_loss(std::span<const double> p_teacher, std::span<const double> p_student) {
  const auto t = detail::sorted_desc(p_teacher);
  const auto s = detail::sorted_desc(p_student);
  const std::size_t m = std::max(t.size(), s.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double a = i < t.size() ? t[i] : 0.0;
    const double b = i < s.size() ? s[i] : 0.0;
    acc += std::fabs(a - b);
  }
  return acc;
}

/// Mean ULD loss over positions with its gradient in the student logits.
/// The gradient fixes the student's sort permutation at the evaluation
/// point (a subgradient where probabilities tie) and chains through the
/// softmax Jacobian: dL/dz_j = s_j * (g_j - sum_k s_k g_k).
inline UldResult uld_loss(const LogitMatrix& teacher, const LogitMatrix& student) {
  if (teacher.positions() != student.positions())
    throw ShapeMismatch("uld_loss: teacher has " + std::to_string(teacher.positions()) + " positions, student " +
                        std::to_string(student.positions()));
  const Eigen::Index P = student.positions(), Vs = student.vocab();
  UldResult out;
  out.per_position.resize(static_cast<std::size_t>(P));
  out.grad_student = Matrix::Zero(P, Vs);
  const double inv_p = 1.0 / static_cast<double>(P);

  for (Eigen::Index r = 0; r < P; ++r) {
    const auto pt = softmax_row(detail::row_span(teacher.values(), r));
    const auto ps = softmax_row(detail::row_span(student.values(), r));
    out.per_position[static_cast<std::size_t>(r)] = uld_position_loss(pt, ps);

    const auto t_sorted = detail::sorted_desc(pt);
    const auto order = detail::descending_order(ps);
    std::vector<double> g(ps.size(), 0.0);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      const double t_val = rank < t_sorted.size() ? t_sorted[rank] : 0.0;
      g[order[rank]] = detail::sign(ps[order[rank]] - t_val);
    }
    double sg = 0.0;
    for (std::size_t k = 0; k < ps.size(); ++k) sg += ps[k] * g[k];
    for (std::size_t j = 0; j < ps.size(); ++j)
      out.grad_student(r, static_cast<Eigen::Index>(j)) = inv_p * ps[j] * (g[j] - sg);
  }
  out.loss = pairwise_sum(out.per_position) * inv_p;
  return out;
}

/// Teacher rows that serve as targets for the MTP heads at position t:
/// head j reads row t + j, truncated at the end of the sequence. The main
/// pathway consumes row t itself.
inline std::vector<Eigen::Index> align_mtp_targets(const LogitMatrix& teacher, const MTPConfig& cfg, Eigen::Index t) {
  if (t < 0 || t >= teacher.positions()) throw std::out_of_range("align_mtp_targets: position out of range");
  std::vector<Eigen::Index> rows;
  for (int j = 1; j <= cfg.num_heads && t + j < teacher.positions(); ++j) rows.push_back(t + j);
  return rows;
}

/// L = ULD(teacher, main) + lambda * mean_j ULD(teacher[j:], head_j[:P-j]).
/// A head with no valid position (j >= P) is left out of the mean.
inline double mtp_distill_loss(const LogitMatrix& teacher, const LogitMatrix& student_main,
                               std::span<const LogitMatrix> student_heads, const MTPConfig& cfg) {
  if (cfg.num_heads < 1) throw std::invalid_argument("MTPConfig.num_heads must be >= 1");
  if (cfg.head_weight < 0) throw std::invalid_argument("MTPConfig.head_weight must be >= 0");
  if (student_heads.size() != static_cast<std::size_t>(cfg.num_heads))
    throw ShapeMismatch("mtp_distill_loss: expected " + std::to_string(cfg.num_heads) + " heads, got " +
                        std::to_string(student_heads.size()));
  const Eigen::Index P = teacher.positions();
  if (student_main.positions() != P) throw ShapeMismatch("mtp_distill_loss: main head position count differs");
  for (const auto& h : student_heads) {
    if (h.positions() != P || h.vocab() != student_main.vocab())
      throw ShapeMismatch("mtp_distill_loss: head shape differs from main head");
  }

  const double main = uld_loss(teacher, student_main).loss;
  std::vector<double> head_losses;
  for (int j = 1; j <= cfg.num_heads; ++j) {
    const Eigen::Index valid = P - j;
    if (valid <= 0) continue;
    head_losses.push_back(
        uld_loss(teacher.slice(j, valid), student_heads[static_cast<std::size_t>(j - 1)].slice(0, valid)).loss);
  }
  if (head_losses.empty()) return main;
  return main + cfg.head_weight * pairwise_sum(head_losses) / static_cast<double>(head_losses.size());
}

/// Largest relative disagreement between the analytic gradient of
/// uld_loss and central differences, |a - n| / max(|a|, |n|, 1e-6).
inline double max_gradient_check_error(const LogitMatrix& teacher, const LogitMatrix& student, double h = 1e-5) {
  const auto analytic = uld_loss(teacher, student).grad_student;
  Matrix z = student.values();
  double worst = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      const double saved = z(r, c);
      z(r, c) = saved + h;
      const double up = uld_loss(teacher, LogitMatrix(z)).loss;
      z(r, c) = saved - h;
      const double down = uld_loss(teacher, LogitMatrix(z)).loss;
      z(r, c) = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic(r, c);
      worst = std::max(worst, std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-6}));
    }
  }
  return worst;
}

}  // namespace autothink::distill
