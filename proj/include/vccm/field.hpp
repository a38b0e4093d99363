// Copyright 2026 The vccm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

/**
 * @file field.hpp
 * @brief Vector- and matrix-valued expression fields over named variable
 * groups.
 *
 * A VariableEnv is an ordered list of groups such as chi:R^n, x:R^n, mu:R^m,
 * w:R^p. Group members follow the flat naming convention "x1, x2, ...";
 * scalar groups like time use the bare group name. Fields are immutable and
 * compile their entries once, so repeated numeric evaluation is cheap.
 */

#include <Eigen/Dense>
#include <functional>
#include <initializer_list>

#include "vccm/expr.hpp"

namespace vccm {

struct VarGroup {
  std::string group;               // e.g. "x"
  std::vector<std::string> names;  // e.g. {"x1","x2"}
};

/// Ordered variable groups; defines the flat slot layout used for evaluation.
class VariableEnv {
 public:
  VariableEnv() = default;

  /// Groups given as (name, dimension); dimension 1 with `indexed=false`
  /// produces a bare name (used for time "t").
  static VariableEnv make(
      std::initializer_list<std::pair<std::string, int>> groups) {
    VariableEnv env;
    for (const auto& [g, dim] : groups) env.add_group(g, dim);
    return env;
  }

  void add_group(const std::string& group, int dim, bool indexed = true) {
    VarGroup vg;
    vg.group = group;
    for (int i = 0; i < dim; ++i) {
      vg.names.push_back(indexed ? group + std::to_string(i + 1) : group);
    }
    groups_.push_back(std::move(vg));
    rebuild();
  }

  int group_dim(const std::string& group) const {
    return static_cast<int>(find(group).names.size());
  }
  bool has_group(const std::string& group) const {
    for (const auto& g : groups_)
      if (g.group == group) return true;
    return false;
  }
  const VarGroup& find(const std::string& group) const {
    for (const auto& g : groups_)
      if (g.group == group) return g;
    throw ExprError("unknown variable group '" + group + "'");
  }
  const std::vector<VarGroup>& groups() const { return groups_; }

  const std::vector<std::string>& flat_names() const { return flat_; }
  const std::set<std::string>& name_set() const { return name_set_; }
  int size() const { return static_cast<int>(flat_.size()); }

  int offset_of(const std::string& group) const {
    int off = 0;
    for (const auto& g : groups_) {
      if (g.group == group) return off;
      off += static_cast<int>(g.names.size());
    }
    throw ExprError("unknown variable group '" + group + "'");
  }

 private:
  void rebuild() {
    flat_.clear();
    name_set_.clear();
    for (const auto& g : groups_)
      for (const auto& n : g.names) {
        flat_.push_back(n);
        name_set_.insert(n);
      }
  }

  std::vector<VarGroup> groups_;
  std::vector<std::string> flat_;
  std::set<std::string> name_set_;
};

/// Packs per-group value vectors into the flat slot layout of `env`.
class SlotPacker {
 public:
  explicit SlotPacker(const VariableEnv& env) : env_(env) {}

  SlotPacker& set(const std::string& group, const Eigen::VectorXd& v) {
    const int off = env_.offset_of(group);
    const int dim = env_.group_dim(group);
    if (v.size() != dim)
      throw ExprError("group '" + group + "' expects dimension " +
                      std::to_string(dim) + ", got " + std::to_string(v.size()));
    if (slots_.size() != static_cast<std::size_t>(env_.size()))
      slots_.assign(env_.size(), 0.0);
    for (int i = 0; i < dim; ++i) slots_[off + i] = v(i);
    return *this;
  }
  SlotPacker& set(const std::string& group, double v) {
    return set(group, Eigen::VectorXd::Constant(1, v));
  }

  const std::vector<double>& slots() const {
    if (slots_.size() != static_cast<std::size_t>(env_.size()))
      const_cast<SlotPacker*>(this)->slots_.assign(env_.size(), 0.0);
    return slots_;
  }

 private:
  const VariableEnv& env_;
  std::vector<double> slots_;
};

/// Vector of expressions over a shared environment; entries are compiled at
/// construction for fast repeated evaluation.
class VectorField {
 public:
  VectorField() = default;

  VectorField(VariableEnv env, std::vector<Expr> entries)
      : env_(std::move(env)), entries_(std::move(entries)) {
    validate();
    compile();
  }

  /// Parses each entry text against the environment's names.
  static VectorField from_text(VariableEnv env,
                               const std::vector<std::string>& entry_texts) {
    std::vector<Expr> entries;
    entries.reserve(entry_texts.size());
    for (const auto& t : entry_texts)
      entries.push_back(parse(t, env.name_set()));
    return VectorField(std::move(env), std::move(entries));
  }

  const VariableEnv& env() const { return env_; }
  int dim() const { return static_cast<int>(entries_.size()); }
  const Expr& entry(int i) const { return entries_.at(i); }
  const std::vector<Expr>& entries() const { return entries_; }

  Eigen::VectorXd eval_slots(const std::vector<double>& slots) const {
    Eigen::VectorXd out(dim());
    for (int i = 0; i < dim(); ++i) out(i) = compiled_[i].eval(slots.data());
    return out;
  }

  /// Evaluate with per-group values, e.g. eval({{"x", xvec}, {"u", uvec}}).
  Eigen::VectorXd eval(
      const std::vector<std::pair<std::string, Eigen::VectorXd>>& groups) const {
    SlotPacker p(env_);
    for (const auto& [g, v] : groups) p.set(g, v);
    return eval_slots(p.slots());
  }

 private:
  void validate() const {
    for (const auto& e : entries_) {
      std::set<std::string> vars;
      collect_variables(e, &vars);
      for (const auto& v : vars)
        if (env_.name_set().count(v) == 0)
          throw ExprError("entry references undeclared variable '" + v + "'");
    }
  }
  void compile() {
    compiled_.clear();
    compiled_.reserve(entries_.size());
    for (const auto& e : entries_)
      compiled_.emplace_back(e, env_.flat_names());
  }

  VariableEnv env_;
  std::vector<Expr> entries_;
  std::vector<CompiledExpr> compiled_;
};

/// Matrix of expressions over a shared environment. Matrices here are arrays
/// of scalar Expr; there is no matrix-valued expression node.
class MatrixField {
 public:
  MatrixField() = default;
  MatrixField(VariableEnv env, int rows, int cols)
      : env_(std::move(env)), rows_(rows), cols_(cols),
        entries_(rows * cols, Expr::constant(0.0)) {
    compile();
  }
  MatrixField(VariableEnv env, int rows, int cols, std::vector<Expr> entries)
      : env_(std::move(env)), rows_(rows), cols_(cols),
        entries_(std::move(entries)) {
    if (entries_.size() != static_cast<std::size_t>(rows * cols))
      throw ExprError("matrix entry count mismatch");
    compile();
  }

  const VariableEnv& env() const { return env_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const Expr& at(int i, int j) const { return entries_.at(i * cols_ + j); }

  MatrixField with_entry(int i, int j, const Expr& e) const {
    MatrixField m = *this;
    m.entries_.at(i * cols_ + j) = e;
    m.compile();
    return m;
  }

  Eigen::MatrixXd eval_slots(const std::vector<double>& slots) const {
    Eigen::MatrixXd out(rows_, cols_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j)
        out(i, j) = compiled_[i * cols_ + j].eval(slots.data());
    return out;
  }

  Eigen::MatrixXd eval(
      const std::vector<std::pair<std::string, Eigen::VectorXd>>& groups) const {
    SlotPacker p(env_);
    for (const auto& [g, v] : groups) p.set(g, v);
    return eval_slots(p.slots());
  }

  bool is_zero() const {
    for (const auto& e : entries_)
      if (!e.is_constant(0.0)) return false;
    return true;
  }

  /// Entrywise substitution; the result is re-hosted on `new_env`.
  MatrixField substituted(const std::map<std::string, Expr>& repl,
                          VariableEnv new_env) const {
    std::vector<Expr> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(substitute(e, repl));
    return MatrixField(std::move(new_env), rows_, cols_, std::move(out));
  }

 private:
  void compile() {
    compiled_.clear();
    compiled_.reserve(entries_.size());
    for (const auto& e : entries_)
      compiled_.emplace_back(e, env_.flat_names());
  }

  VariableEnv env_;
  int rows_ = 0, cols_ = 0;
  std::vector<Expr> entries_;
  std::vector<CompiledExpr> compiled_;
};

/// Matrix field with constant numeric entries.
inline MatrixField matrix_of_constants(VariableEnv env,
                                       const Eigen::MatrixXd& M) {
  std::vector<Expr> entries;
  entries.reserve(M.size());
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j)
      entries.push_back(Expr::constant(M(i, j)));
  return MatrixField(std::move(env), static_cast<int>(M.rows()),
                     static_cast<int>(M.cols()), std::move(entries));
}

/// Jacobian of F with respect to one of its variable groups:
/// entry (i, j) = d F_i / d group_j.
inline MatrixField jacobian(const VectorField& F, const std::string& group) {
  const VarGroup& g = F.env().find(group);
  std::vector<Expr> entries;
  entries.reserve(F.dim() * g.names.size());
  for (int i = 0; i < F.dim(); ++i)
    for (const auto& var : g.names) entries.push_back(diff(F.entry(i), var));
  return MatrixField(F.env(), F.dim(), static_cast<int>(g.names.size()),
                     std::move(entries));
}

/// Symbolic matrix product of expression matrices (shared env).
inline MatrixField matmul(const MatrixField& A, const MatrixField& B) {
  if (A.cols() != B.rows()) throw ExprError("matmul dimension mismatch");
  std::vector<Expr> entries;
  entries.reserve(A.rows() * B.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < B.cols(); ++j) {
      Expr acc = Expr::constant(0.0);
      for (int k = 0; k < A.cols(); ++k)
        acc = Expr::add(acc, Expr::mul(A.at(i, k), B.at(k, j)));
      entries.push_back(acc);
    }
  return MatrixField(A.env(), A.rows(), B.cols(), std::move(entries));
}

inline MatrixField matsub(const MatrixField& A, const MatrixField& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw ExprError("matsub dimension mismatch");
  std::vector<Expr> entries;
  entries.reserve(A.rows() * A.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j)
      entries.push_back(Expr::sub(A.at(i, j), B.at(i, j)));
  return MatrixField(A.env(), A.rows(), A.cols(), std::move(entries));
}

}  // namespace vccm
