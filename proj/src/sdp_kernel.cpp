#include "pvdelay/sdp_kernel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <sstream>

#include "pvdelay/error.hpp"

namespace pvdelay::sdp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kInvSqrt2 = 0.70710678118654752440;

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::InvalidParam, msg); }

}  // namespace

int SdpFeasibility::add_block(int size) {
  if (size <= 0) invalid("block size must be positive");
  block_sizes.push_back(size);
  f0.push_back(MatrixXd::Zero(size, size));
  return static_cast<int>(block_sizes.size()) - 1;
}

int SdpFeasibility::add_variable(MatrixVariable v) {
  if (v.dim <= 0) invalid("variable dimension must be positive");
  variables.push_back(v);
  return static_cast<int>(variables.size()) - 1;
}

void SdpFeasibility::add_term(Term t) { terms.push_back(std::move(t)); }

int SdpFeasibility::add_scalar_variable(const std::vector<MatrixXd>& coefficient) {
  if (coefficient.size() > block_sizes.size()) invalid("coefficient has more blocks than the problem");
  const int var = add_variable({1, true});
  for (std::size_t b = 0; b < coefficient.size(); ++b) {
    const MatrixXd& fb = coefficient[b];
    if (fb.size() == 0) continue;
    if (fb.rows() != block_sizes[b] || fb.cols() != block_sizes[b]) {
      throw Error(ErrorKind::DimensionMismatch, "coefficient block has the wrong size");
    }
    const MatrixXd sym = 0.5 * (fb + fb.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      const double lambda = es.eigenvalues()(i);
      if (std::abs(lambda) <= 1e-15 * scale) continue;
      Term t;
      t.block = static_cast<int>(b);
      t.row = 0;
      t.col = 0;
      t.left = es.eigenvectors().col(i);
      t.variable = var;
      t.right = 0.5 * lambda * es.eigenvectors().col(i).transpose();
      terms.push_back(std::move(t));
    }
  }
  return var;
}

int SdpFeasibility::variable_count() const {
  int n = 0;
  for (const auto& v : variables) n += v.packed_size();
  return n;
}

int SdpFeasibility::variable_offset(int var) const {
  int n = 0;
  for (int i = 0; i < var; ++i) n += variables[i].packed_size();
  return n;
}

int SdpFeasibility::total_dimension() const {
  int n = 0;
  for (int s : block_sizes) n += s;
  return n;
}

void SdpFeasibility::validate() const {
  if (block_sizes.empty()) invalid("problem has no blocks");
  if (f0.size() != block_sizes.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one constant matrix per block is required");
  }
  for (std::size_t b = 0; b < block_sizes.size(); ++b) {
    if (f0[b].rows() != block_sizes[b] || f0[b].cols() != block_sizes[b]) {
      throw Error(ErrorKind::DimensionMismatch, "constant block has the wrong size");
    }
    if (!f0[b].allFinite()) invalid("constant block is not finite");
  }
  if (!(target_slack >= 0.0) || !std::isfinite(target_slack)) invalid("target slack must be >= 0");
  for (const auto& t : terms) {
    if (t.block < 0 || t.block >= static_cast<int>(block_sizes.size())) invalid("term block out of range");
    if (t.variable < 0 || t.variable >= static_cast<int>(variables.size())) {
      invalid("term variable out of range");
    }
    const int d = variables[t.variable].dim;
    const int n = block_sizes[t.block];
    if (t.left.cols() != d || t.right.rows() != d) {
      throw Error(ErrorKind::DimensionMismatch, "term factors do not match the variable dimension");
    }
    if (t.row < 0 || t.col < 0 || t.row + t.left.rows() > n || t.col + t.right.cols() > n) {
      throw Error(ErrorKind::DimensionMismatch, "term does not fit inside its block");
    }
    if (!t.left.allFinite() || !t.right.allFinite()) invalid("term factors are not finite");
  }
}

MatrixXd SdpFeasibility::unpack(const VectorXd& x, int var) const {
  const MatrixVariable& v = variables.at(var);
  const int off = variable_offset(var);
  MatrixXd m(v.dim, v.dim);
  if (v.symmetric) {
    int p = off;
    for (int a = 0; a < v.dim; ++a) {
      for (int b = a; b < v.dim; ++b, ++p) {
        const double val = (a == b) ? x(p) : x(p) * kInvSqrt2;
        m(a, b) = val;
        m(b, a) = val;
      }
    }
  } else {
    for (int a = 0; a < v.dim; ++a) {
      for (int b = 0; b < v.dim; ++b) m(a, b) = x(off + a * v.dim + b);
    }
  }
  return m;
}

void SdpFeasibility::pack(const MatrixXd& value, int var, VectorXd& x) const {
  const MatrixVariable& v = variables.at(var);
  if (value.rows() != v.dim || value.cols() != v.dim) {
    throw Error(ErrorKind::DimensionMismatch, "packed value has the wrong size");
  }
  const int off = variable_offset(var);
  if (v.symmetric) {
    int p = off;
    for (int a = 0; a < v.dim; ++a) {
      for (int b = a; b < v.dim; ++b, ++p) {
        x(p) = (a == b) ? value(a, a) : (value(a, b) + value(b, a)) * kInvSqrt2;
      }
    }
  } else {
    for (int a = 0; a < v.dim; ++a) {
      for (int b = 0; b < v.dim; ++b) x(off + a * v.dim + b) = value(a, b);
    }
  }
}

namespace {

// F(x) - F0: the linear part only.
std::vector<MatrixXd> linear_part(const SdpFeasibility& p, const VectorXd& x) {
  std::vector<MatrixXd> out;
  out.reserve(p.block_sizes.size());
  for (int n : p.block_sizes) out.push_back(MatrixXd::Zero(n, n));
  std::vector<MatrixXd> values;
  values.reserve(p.variables.size());
  for (std::size_t v = 0; v < p.variables.size(); ++v) values.push_back(p.unpack(x, static_cast<int>(v)));
  for (const auto& t : p.terms) {
    const MatrixXd piece = t.left * values[t.variable] * t.right;
    out[t.block].block(t.row, t.col, piece.rows(), piece.cols()) += piece;
    out[t.block].block(t.col, t.row, piece.cols(), piece.rows()) += piece.transpose();
  }
  return out;
}

}  // namespace

std::vector<MatrixXd> SdpFeasibility::evaluate(const VectorXd& x) const {
  if (x.size() != variable_count()) throw Error(ErrorKind::DimensionMismatch, "x has the wrong length");
  std::vector<MatrixXd> out = linear_part(*this, x);
  for (std::size_t b = 0; b < out.size(); ++b) out[b] += f0[b];
  return out;
}

std::vector<MatrixXd> SdpFeasibility::coefficient(int k) const {
  VectorXd e = VectorXd::Zero(variable_count());
  e(k) = 1.0;
  return linear_part(*this, e);
}

double max_eigenvalue(const SdpFeasibility& problem, const VectorXd& x) {
  double best = -std::numeric_limits<double>::infinity();
  for (const MatrixXd& fb : problem.evaluate(x)) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(fb, Eigen::EigenvaluesOnly);
    best = std::max(best, es.eigenvalues().maxCoeff());
  }
  return best;
}

std::string to_string(KernelStatus s) {
  switch (s) {
    case KernelStatus::StrictlyFeasible:
      return "StrictlyFeasible";
    case KernelStatus::NotCertified:
      return "NotCertified";
    case KernelStatus::NumericalFailure:
      return "NumericalFailure";
  }
  return "Unknown";
}

namespace {

// Maps an entry (a, b) of a variable to its packed index and weight.
struct PackMap {
  std::vector<int> index;    // dim*dim, row-major over (a, b)
  std::vector<double> weight;
};

PackMap make_pack_map(const MatrixVariable& v) {
  PackMap m;
  const int d = v.dim;
  m.index.resize(static_cast<std::size_t>(d) * d);
  m.weight.resize(static_cast<std::size_t>(d) * d);
  if (v.symmetric) {
    int p = 0;
    for (int a = 0; a < d; ++a) {
      for (int b = a; b < d; ++b, ++p) {
        const double w = (a == b) ? 1.0 : kInvSqrt2;
        m.index[a * d + b] = p;
        m.weight[a * d + b] = w;
        m.index[b * d + a] = p;
        m.weight[b * d + a] = w;
      }
    }
  } else {
    for (int i = 0; i < d * d; ++i) {
      m.index[i] = i;
      m.weight[i] = 1.0;
    }
  }
  return m;
}

class Kernel {
 public:
  Kernel(const SdpFeasibility& p, const KernelOptions& o) : p_(p), o_(o) {
    n_ = p.variable_count();
    nblocks_ = static_cast<int>(p.block_sizes.size());
    nvars_ = static_cast<int>(p.variables.size());
    nu_ = static_cast<double>(p.total_dimension()) + 1.0;
    for (const auto& v : p.variables) maps_.push_back(make_pack_map(v));
    offsets_.resize(nvars_);
    for (int v = 0; v < nvars_; ++v) offsets_[v] = p.variable_offset(v);
    terms_by_block_.resize(nblocks_);
    for (int k = 0; k < static_cast<int>(p.terms.size()); ++k) {
      terms_by_block_[p.terms[k].block].push_back(k);
    }
  }

  KernelResult run();

 private:
  // Phase-1 slack matrices S_b = t*I - F_b(x); returns false outside the domain.
  bool factor(const std::vector<MatrixXd>& f, double t, std::vector<MatrixXd>& g, double& logdet) const;
  double merit(double weight, double t, const VectorXd& x, const std::vector<MatrixXd>& f, bool& ok) const;
  bool strictly_feasible(const std::vector<MatrixXd>& f) const;
  void derivatives(double weight, double t, const VectorXd& x, const std::vector<MatrixXd>& g, VectorXd& grad,
                   MatrixXd& hess) const;

  const SdpFeasibility& p_;
  const KernelOptions& o_;
  int n_ = 0;
  int nblocks_ = 0;
  int nvars_ = 0;
  double nu_ = 0.0;
  std::vector<PackMap> maps_;
  std::vector<int> offsets_;
  std::vector<std::vector<int>> terms_by_block_;
};

bool Kernel::factor(const std::vector<MatrixXd>& f, double t, std::vector<MatrixXd>& g, double& logdet) const {
  g.resize(nblocks_);
  logdet = 0.0;
  for (int b = 0; b < nblocks_; ++b) {
    const int nb = p_.block_sizes[b];
    MatrixXd s = t * MatrixXd::Identity(nb, nb) - f[b];
    Eigen::LLT<MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) return false;
    const MatrixXd& l = llt.matrixLLT();
    for (int i = 0; i < nb; ++i) {
      const double di = l(i, i);
      if (!(di > 0.0) || !std::isfinite(di)) return false;
      logdet += 2.0 * std::log(di);
    }
    g[b] = llt.solve(MatrixXd::Identity(nb, nb));
    g[b] = 0.5 * (g[b] + g[b].transpose());
  }
  return true;
}

double Kernel::merit(double weight, double t, const VectorXd& x, const std::vector<MatrixXd>& f, bool& ok) const {
  ok = false;
  const double ball = o_.radius * o_.radius - x.squaredNorm();
  if (!(ball > 0.0)) return 0.0;
  double logdet = 0.0;
  for (int b = 0; b < nblocks_; ++b) {
    const int nb = p_.block_sizes[b];
    Eigen::LLT<MatrixXd> llt(t * MatrixXd::Identity(nb, nb) - f[b]);
    if (llt.info() != Eigen::Success) return 0.0;
    const MatrixXd& l = llt.matrixLLT();
    for (int i = 0; i < nb; ++i) {
      if (!(l(i, i) > 0.0)) return 0.0;
      logdet += 2.0 * std::log(l(i, i));
    }
  }
  ok = std::isfinite(logdet);
  return weight * t - logdet - std::log(ball);
}

bool Kernel::strictly_feasible(const std::vector<MatrixXd>& f) const {
  for (int b = 0; b < nblocks_; ++b) {
    const int nb = p_.block_sizes[b];
    Eigen::LLT<MatrixXd> llt(-f[b] - p_.target_slack * MatrixXd::Identity(nb, nb));
    if (llt.info() != Eigen::Success) return false;
    const MatrixXd& l = llt.matrixLLT();
    for (int i = 0; i < nb; ++i) {
      if (!(l(i, i) > 0.0)) return false;
    }
  }
  return true;
}

// Gradient and Hessian of weight*t - sum_b logdet(t I - F_b(x)) - log(R^2 - |x|^2)
// with respect to (x, t); the t coordinate is last.
void Kernel::derivatives(double weight, double t, const VectorXd& x, const std::vector<MatrixXd>& g,
                         VectorXd& grad, MatrixXd& hess) const {
  (void)t;
  grad = VectorXd::Zero(n_ + 1);
  hess = MatrixXd::Zero(n_ + 1, n_ + 1);

  // Full (unpacked) accumulators per variable and variable pair.
  std::vector<MatrixXd> gfull(nvars_);
  std::vector<MatrixXd> htfull(nvars_);
  for (int v = 0; v < nvars_; ++v) {
    const int d = p_.variables[v].dim;
    gfull[v] = MatrixXd::Zero(d, d);
    htfull[v] = MatrixXd::Zero(d, d);
  }
  std::vector<RowMatrix> hfull(static_cast<std::size_t>(nvars_) * nvars_);
  for (int v = 0; v < nvars_; ++v) {
    for (int w = v; w < nvars_; ++w) {
      const int dv = p_.variables[v].dim;
      const int dw = p_.variables[w].dim;
      hfull[v * nvars_ + w] = RowMatrix::Zero(dv * dv, dw * dw);
    }
  }

  double tr_g = 0.0;
  double tr_gg = 0.0;
  for (int b = 0; b < nblocks_; ++b) {
    const MatrixXd& gb = g[b];
    tr_g += gb.trace();
    tr_gg += gb.squaredNorm();
    const auto& ks = terms_by_block_[b];
    const int nt = static_cast<int>(ks.size());
    // G * Lhat and G * Rhat for every term in this block.
    std::vector<MatrixXd> gl(nt), gr(nt);
    for (int i = 0; i < nt; ++i) {
      const Term& tm = p_.terms[ks[i]];
      gl[i] = gb.middleCols(tm.row, tm.left.rows()) * tm.left;
      gr[i] = gb.middleCols(tm.col, tm.right.cols()) * tm.right.transpose();
    }
    for (int i = 0; i < nt; ++i) {
      const Term& ti = p_.terms[ks[i]];
      const int vi = ti.variable;
      const int di = p_.variables[vi].dim;
      // d/dX[a,b] of -logdet(S) = tr(G F_e) = 2 (Rhat^T G Lhat)[b,a].
      const MatrixXd x1ii = ti.right * gl[i].middleRows(ti.col, ti.right.cols());
      gfull[vi] += 2.0 * x1ii.transpose();
      // Mixed (x, t): -tr(G^2 F_e) = -2 (Rhat^T G^2 Lhat)[b,a].
      const MatrixXd gg = gr[i].transpose() * gl[i];
      htfull[vi] -= 2.0 * gg.transpose();

      for (int j = i; j < nt; ++j) {
        const Term& tj = p_.terms[ks[j]];
        const int vj = tj.variable;
        const int dj = p_.variables[vj].dim;
        const MatrixXd x1 = ti.right * gl[j].middleRows(ti.col, ti.right.cols());   // [b, c]
        const MatrixXd x2 = tj.right * gl[i].middleRows(tj.col, tj.right.cols());   // [d, a]
        const MatrixXd x3t = (ti.right * gr[j].middleRows(ti.col, ti.right.cols())).transpose();  // [d, b]
        const MatrixXd x4 = ti.left.transpose() * gl[j].middleRows(ti.row, ti.left.rows());  // [a, c]
        RowMatrix blockh(di * di, dj * dj);
        for (int a = 0; a < di; ++a) {
          const double* x2a = x2.col(a).data();
          for (int bb = 0; bb < di; ++bb) {
            const double* x3b = x3t.col(bb).data();
            double* out = blockh.row(a * di + bb).data();
            for (int c = 0; c < dj; ++c) {
              const double s1 = 2.0 * x1(bb, c);
              const double s2 = 2.0 * x4(a, c);
              double* o = out + c * dj;
              for (int dd = 0; dd < dj; ++dd) o[dd] = s1 * x2a[dd] + s2 * x3b[dd];
            }
          }
        }
        if (i == j) {
          hfull[vi * nvars_ + vi] += blockh;
        } else if (vi < vj) {
          hfull[vi * nvars_ + vj] += blockh;
        } else if (vi > vj) {
          hfull[vj * nvars_ + vi] += blockh.transpose();
        } else {
          hfull[vi * nvars_ + vi] += blockh + blockh.transpose();
        }
      }
    }
  }

  // Pack gradient and Hessian.
  for (int v = 0; v < nvars_; ++v) {
    const int d = p_.variables[v].dim;
    const PackMap& m = maps_[v];
    for (int e = 0; e < d * d; ++e) {
      const int a = e / d;
      const int bb = e % d;
      const int pi = offsets_[v] + m.index[e];
      grad(pi) += m.weight[e] * gfull[v](a, bb);
      hess(pi, n_) += m.weight[e] * htfull[v](a, bb);
    }
  }
  for (int v = 0; v < nvars_; ++v) {
    for (int w = v; w < nvars_; ++w) {
      const RowMatrix& hv = hfull[v * nvars_ + w];
      const PackMap& mv = maps_[v];
      const PackMap& mw = maps_[w];
      const int dv2 = static_cast<int>(mv.index.size());
      const int dw2 = static_cast<int>(mw.index.size());
      for (int r = 0; r < dv2; ++r) {
        const int pr = offsets_[v] + mv.index[r];
        const double wr = mv.weight[r];
        for (int c = 0; c < dw2; ++c) {
          const int pc = offsets_[w] + mw.index[c];
          const double val = wr * mw.weight[c] * hv(r, c);
          hess(pr, pc) += val;
          if (v != w) hess(pc, pr) += val;
        }
      }
    }
  }
  for (int i = 0; i < n_; ++i) hess(n_, i) = hess(i, n_);
  hess.topLeftCorner(n_, n_) = 0.5 * (hess.topLeftCorner(n_, n_) + hess.topLeftCorner(n_, n_).transpose());

  grad(n_) = weight - tr_g;
  hess(n_, n_) = tr_gg;

  // Ball barrier -log(R^2 - |x|^2).
  const double ball = o_.radius * o_.radius - x.squaredNorm();
  grad.head(n_) += (2.0 / ball) * x;
  hess.topLeftCorner(n_, n_).diagonal().array() += 2.0 / ball;
  hess.topLeftCorner(n_, n_) += (4.0 / (ball * ball)) * x * x.transpose();
}

KernelResult Kernel::run() {
  KernelResult res;
  VectorXd x = VectorXd::Zero(n_);
  std::vector<MatrixXd> f = p_.evaluate(x);

  auto finish = [&](KernelStatus status, const std::string& msg) {
    res.status = status;
    res.x = x;
    res.slack = max_eigenvalue(p_, x);
    res.message = msg;
    return res;
  };

  if (strictly_feasible(f)) {
    res.lower_bound = -std::numeric_limits<double>::infinity();
    return finish(KernelStatus::StrictlyFeasible, "feasible at the starting point");
  }

  double lam0 = -std::numeric_limits<double>::infinity();
  for (const auto& fb : f) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(fb, Eigen::EigenvaluesOnly);
    lam0 = std::max(lam0, es.eigenvalues().maxCoeff());
  }
  double t = lam0 + std::max(1.0, 0.1 * std::abs(lam0));

  std::vector<MatrixXd> g;
  double logdet = 0.0;
  if (!factor(f, t, g, logdet)) return finish(KernelStatus::NumericalFailure, "could not start inside the domain");
  double weight = 0.0;
  for (const auto& gb : g) weight += gb.trace();

  VectorXd grad;
  MatrixXd hess;
  int steps = 0;
  while (true) {
    // Centering at the current weight.
    double decrement = std::numeric_limits<double>::infinity();
    while (true) {
      if (steps >= o_.max_newton_steps) {
        res.iterations = steps;
        return finish(KernelStatus::NumericalFailure, "Newton step limit reached");
      }
      if (!factor(f, t, g, logdet)) {
        res.iterations = steps;
        return finish(KernelStatus::NumericalFailure, "iterate left the barrier domain");
      }
      derivatives(weight, t, x, g, grad, hess);
      Eigen::LLT<MatrixXd> llt(hess);
      VectorXd dir;
      if (llt.info() == Eigen::Success) {
        dir = -llt.solve(grad);
      } else {
        Eigen::LDLT<MatrixXd> ldlt(hess);
        if (ldlt.info() != Eigen::Success) {
          res.iterations = steps;
          return finish(KernelStatus::NumericalFailure, "singular Newton system");
        }
        dir = -ldlt.solve(grad);
      }
      if (!dir.allFinite()) {
        res.iterations = steps;
        return finish(KernelStatus::NumericalFailure, "singular Newton system");
      }
      const double slope = grad.dot(dir);
      decrement = std::sqrt(std::max(0.0, -slope));
      if (0.5 * decrement * decrement <= o_.centering_tol) break;

      bool ok = false;
      const double f_now = merit(weight, t, x, f, ok);
      if (!ok) {
        res.iterations = steps;
        return finish(KernelStatus::NumericalFailure, "merit undefined at the iterate");
      }
      const VectorXd dx = dir.head(n_);
      const double dt = dir(n_);
      std::vector<MatrixXd> df = linear_part(p_, dx);
      double alpha = 1.0;
      bool accepted = false;
      std::vector<MatrixXd> f_try(nblocks_);
      for (int ls = 0; ls < 60; ++ls) {
        for (int b = 0; b < nblocks_; ++b) f_try[b] = f[b] + alpha * df[b];
        const VectorXd x_try = x + alpha * dx;
        const double t_try = t + alpha * dt;
        bool ok_try = false;
        const double f_new = merit(weight, t_try, x_try, f_try, ok_try);
        if (ok_try && f_new <= f_now + o_.armijo * alpha * slope) {
          x = x_try;
          t = t_try;
          f = f_try;
          accepted = true;
          break;
        }
        alpha *= o_.backtrack;
      }
      ++steps;
      if (!accepted) {
        res.iterations = steps;
        return finish(KernelStatus::NumericalFailure, "line search failed");
      }
      if (strictly_feasible(f)) {
        res.iterations = steps;
        res.trace.push_back({weight, t, -std::numeric_limits<double>::infinity(), steps});
        return finish(KernelStatus::StrictlyFeasible, "certified");
      }
    }

    const double gap = (nu_ / weight) * (1.0 + 2.0 * decrement);
    const double lower = t - gap;
    res.lower_bound = std::max(res.lower_bound, lower);
    res.trace.push_back({weight, t, lower, steps});
    if (lower > -p_.target_slack) {
      res.iterations = steps;
      std::ostringstream os;
      os << "optimal slack is at least " << lower;
      return finish(KernelStatus::NotCertified, os.str());
    }
    if (nu_ / weight < o_.gap_tol * std::max(1.0, std::abs(t))) {
      res.iterations = steps;
      return finish(t > -p_.target_slack ? KernelStatus::NotCertified : KernelStatus::NumericalFailure,
                    "duality gap closed without a strict certificate");
    }
    weight *= o_.weight_growth;
  }
}

}  // namespace

KernelResult solve(const SdpFeasibility& problem, const KernelOptions& opts) {
  problem.validate();
  if (!(opts.radius > 0.0) || !(opts.weight_growth > 1.0) || opts.max_newton_steps <= 0 ||
      !(opts.backtrack > 0.0 && opts.backtrack < 1.0) || !(opts.armijo > 0.0 && opts.armijo < 0.5)) {
    throw Error(ErrorKind::InvalidParam, "invalid kernel options");
  }
  Kernel k(problem, opts);
  return k.run();
}

}  // namespace pvdelay::sdp
