#include "pvdelay/margin.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <thread>

#include "pvdelay/error.hpp"

namespace pvdelay::margin {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Conditioning condition(const MatrixXd& a, const MatrixXd& a_d, bool enabled) {
  const int m = static_cast<int>(a.rows());
  Conditioning c;
  c.scale = VectorXd::Ones(m);
  c.a = a;
  c.a_d = a_d;
  if (!enabled) return c;

  MatrixXd b = a.cwiseAbs() + a_d.cwiseAbs();
  for (int sweep = 0; sweep < 200; ++sweep) {
    bool changed = false;
    for (int i = 0; i < m; ++i) {
      const double col = b.col(i).sum() - b(i, i);
      const double row = b.row(i).sum() - b(i, i);
      if (col == 0.0 || row == 0.0) continue;
      const int k = static_cast<int>(std::lround(0.5 * std::log2(row / col)));
      if (k == 0) continue;
      const double f = std::ldexp(1.0, k);
      if (col * f + row / f >= 0.95 * (col + row)) continue;
      b.col(i) *= f;
      b.row(i) /= f;
      c.scale(i) *= f;
      changed = true;
    }
    if (!changed) break;
  }
  const VectorXd inv = c.scale.cwiseInverse();
  c.a = inv.asDiagonal() * a * c.scale.asDiagonal();
  c.a_d = inv.asDiagonal() * a_d * c.scale.asDiagonal();
  const double k = (c.a + c.a_d).norm();
  if (k > 0.0 && std::isfinite(k)) {
    c.time_scale = k;
    c.a /= k;
    c.a_d /= k;
  }
  return c;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Certified:
      return "Certified";
    case Verdict::NotCertified:
      return "NotCertified";
    case Verdict::Unknown:
      return "Unknown";
  }
  return "Unknown";
}

namespace {

void check_square(const MatrixXd& a, const MatrixXd& a_d) {
  if (a.rows() != a.cols() || a_d.rows() != a_d.cols() || a.rows() != a_d.rows() || a.rows() == 0) {
    throw Error(ErrorKind::DimensionMismatch, "A and A_d must be square and of equal size");
  }
}

double spectral_abscissa(const MatrixXd& m) {
  Eigen::EigenSolver<MatrixXd> es(m, false);
  return es.eigenvalues().real().maxCoeff();
}

}  // namespace

MarginResult certified_margin(const MatrixXd& a, const MatrixXd& a_d, const MarginOptions& opts) {
  check_square(a, a_d);
  if (!(opts.tol > 0.0) || !(opts.tau_max > 0.0) || !(opts.epsilon > 0.0)) {
    throw Error(ErrorKind::InvalidParam, "tau_max, tol and epsilon must be positive");
  }
  MarginResult r;
  r.bisection_tol = opts.tol;
  r.tau_max = opts.tau_max;
  r.conditioning = condition(a, a_d, opts.condition);
  const Conditioning& c = r.conditioning;
  const double abscissa = spectral_abscissa(c.a + c.a_d);
  if (!(abscissa < 0.0)) {
    std::ostringstream os;
    os << "A + A_d has an eigenvalue with real part " << abscissa * c.time_scale;
    throw Error(ErrorKind::DelayFreeUnstable, os.str());
  }
  r.epsilon_abs = opts.epsilon * (c.a + c.a_d).norm();

  auto probe = [&](double tau) -> std::optional<lmicert::Certificate> {
    const auto problem = lmicert::build_lmi(c.a, c.a_d, c.time_scale * tau, r.epsilon_abs);
    TraceEntry e;
    e.tau = tau;
    std::optional<lmicert::Certificate> cert;
    try {
      const auto rep = lmicert::check_feasible(problem, opts.kernel);
      e.verdict = rep.feasible ? Verdict::Certified : Verdict::NotCertified;
      e.slack = rep.best_slack;
      e.iterations = rep.iterations;
      cert = rep.certificate;
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::SolverFailure) throw;
      e.verdict = Verdict::Unknown;
    }
    r.trace.push_back(e);
    return cert;
  };

  auto cert = probe(0.0);
  if (!cert) {
    throw Error(ErrorKind::NotCertifiedAtZero, "the delay-dependent LMI is not feasible even at tau = 0");
  }
  if (auto top = probe(opts.tau_max)) {
    r.tau_certified = opts.tau_max;
    r.certificate = std::move(top);
    return r;
  }
  double lo = 0.0;
  double hi = opts.tau_max;
  while (hi - lo > opts.tol) {
    const double mid = 0.5 * (lo + hi);
    if (auto got = probe(mid)) {
      lo = mid;
      cert = std::move(got);
    } else {
      hi = mid;
    }
  }
  r.tau_certified = lo;
  r.certificate = std::move(cert);
  return r;
}

MarginResult certified_margin(const closedloop::DelayedLti& model, const MarginOptions& opts) {
  return certified_margin(model.a, model.a_d, opts);
}

std::vector<TraceEntry> bisection_violations(const MarginResult& r) {
  std::vector<TraceEntry> out;
  for (const auto& e : r.trace) {
    if (e.verdict == Verdict::Certified && e.tau > r.tau_certified + r.bisection_tol) out.push_back(e);
    if (e.verdict == Verdict::NotCertified && e.tau < r.tau_certified - r.bisection_tol) out.push_back(e);
  }
  return out;
}

lmicert::LmiProblem conditioned_problem(const MarginResult& r) {
  return lmicert::build_lmi(r.conditioning.a, r.conditioning.a_d, r.conditioning.time_scale * r.tau_certified,
                            r.epsilon_abs);
}

namespace {

// Eigenvalues mu of (jw I - A)^{-1} A_d; each finite root z of
// det(jw I - A - z A_d) = 0 is z = 1 / mu, and mu = 0 are the roots at infinity.
Eigen::VectorXcd inverse_roots(const MatrixXd& a, const MatrixXd& a_d, double omega) {
  const int m = static_cast<int>(a.rows());
  const Eigen::MatrixXcd lhs = std::complex<double>(0.0, omega) * Eigen::MatrixXcd::Identity(m, m) -
                               a.cast<std::complex<double>>();
  const Eigen::MatrixXcd mmat = lhs.partialPivLu().solve(a_d.cast<std::complex<double>>());
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(mmat, false);
  return es.eigenvalues();
}

// |z| < 1  <=>  |mu| > 1.
int count_inside(const Eigen::VectorXcd& mu) {
  int n = 0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (std::abs(mu(i)) > 1.0) ++n;
  }
  return n;
}

}  // namespace

int roots_inside_unit_disc(const MatrixXd& a, const MatrixXd& a_d, double omega) {
  return count_inside(inverse_roots(a, a_d, omega));
}

ExactMargin exact_margin(const MatrixXd& a, const MatrixXd& a_d, const ExactOptions& opts) {
  check_square(a, a_d);
  if (!(opts.omega_max > 0.0) || opts.grid < 2 || !(opts.omega_min_ratio > 0.0 && opts.omega_min_ratio < 1.0)) {
    throw Error(ErrorKind::InvalidParam, "invalid frequency sweep options");
  }
  if (!(spectral_abscissa(a + a_d) < 0.0)) {
    throw Error(ErrorKind::DelayFreeUnstable, "A + A_d is not Hurwitz");
  }
  ExactMargin out;
  const double log_lo = std::log(opts.omega_max * opts.omega_min_ratio);
  const double log_hi = std::log(opts.omega_max);
  auto omega_at = [&](int i) { return std::exp(log_lo + (log_hi - log_lo) * i / (opts.grid - 1)); };

  double best = std::numeric_limits<double>::infinity();
  double best_omega = 0.0;
  double best_res = 0.0;
  int prev = roots_inside_unit_disc(a, a_d, omega_at(0));
  double prev_omega = omega_at(0);
  for (int i = 1; i < opts.grid; ++i) {
    const double w = omega_at(i);
    const int cur = roots_inside_unit_disc(a, a_d, w);
    if (cur != prev) {
      if (std::abs(cur - prev) > 1) {
        std::ostringstream os;
        os << "SweepTooCoarse: " << std::abs(cur - prev) << " roots cross |z| = 1 between w = " << prev_omega
           << " and " << w;
        out.advisories.push_back(os.str());
      }
      // Refine the crossing frequency by bisection on the root count.
      double lo = prev_omega;
      double hi = w;
      for (int it = 0; it < 80 && hi - lo > 1e-14 * hi; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (roots_inside_unit_disc(a, a_d, mid) == prev) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      const double wc = std::sqrt(lo * hi);
      const Eigen::VectorXcd mu = inverse_roots(a, a_d, wc);
      for (Eigen::Index k = 0; k < mu.size(); ++k) {
        const double mag = std::abs(mu(k));
        if (mag == 0.0 || std::abs(mag - 1.0) > 1e-4) continue;
        const std::complex<double> z = 1.0 / mu(k);
        double phase = std::fmod(-std::arg(z), 2.0 * std::numbers::pi);
        if (phase < 0.0) phase += 2.0 * std::numbers::pi;
        const double tau = phase / wc;
        ++out.crossings;
        if (tau < best) {
          best = tau;
          best_omega = wc;
          best_res = tau * (hi - lo) / wc + 1e-12;
        }
      }
    }
    prev = cur;
    prev_omega = w;
  }
  if (std::isfinite(best)) {
    out.bounded = true;
    out.tau = best;
    out.omega = best_omega;
    out.resolution = best_res;
  }
  return out;
}

ExactMargin exact_margin(const closedloop::DelayedLti& model, const ExactOptions& opts) {
  return exact_margin(model.a, model.a_d, opts);
}

std::string SweepTable::to_csv() const {
  std::ostringstream os;
  char buf[64];
  os << "K_P4\\K_I4";
  for (double k : ki4) {
    std::snprintf(buf, sizeof buf, ",%g", k);
    os << buf;
  }
  os << '\n';
  for (std::size_t r = 0; r < kp4.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%g", kp4[r]);
    os << buf;
    for (std::size_t c = 0; c < ki4.size(); ++c) {
      const SweepCell& cell = at(r, c);
      if (cell.tau) {
        std::snprintf(buf, sizeof buf, ",%.3f", *cell.tau);
        os << buf;
      } else {
        os << ',' << cell.error;
      }
    }
    os << '\n';
  }
  return os.str();
}

SweepTable sweep_gains(const ModelFactory& factory, const std::vector<double>& kp4_list,
                       const std::vector<double>& ki4_list, const MarginOptions& opts, int workers) {
  if (kp4_list.empty() || ki4_list.empty()) throw Error(ErrorKind::InvalidParam, "sweep grids must be non-empty");
  SweepTable t;
  t.kp4 = kp4_list;
  t.ki4 = ki4_list;
  const std::size_t n = kp4_list.size() * ki4_list.size();
  t.cells.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.cells[i].kp4 = kp4_list[i / ki4_list.size()];
    t.cells[i].ki4 = ki4_list[i % ki4_list.size()];
  }
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      SweepCell& cell = t.cells[i];
      try {
        const auto model = factory(cell.kp4, cell.ki4);
        cell.tau = certified_margin(model, opts).tau_certified;
      } catch (const Error& e) {
        cell.error = std::string(to_string(e.kind()));
      } catch (const std::exception& e) {
        cell.error = "Error";
      }
    }
  };
  const int nthreads = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int i = 1; i < nthreads; ++i) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  return t;
}

bool follows_gain_trend(const SweepTable& t, double slack) {
  // Grids may be listed in any order; compare cells by gain value.
  const std::size_t rows = t.kp4.size();
  const std::size_t cols = t.ki4.size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& x = t.at(r, c);
      if (!x.tau) return false;
      for (std::size_t c2 = 0; c2 < cols; ++c2) {
        const auto& y = t.at(r, c2);
        if (!y.tau) return false;
        if (t.ki4[c2] > t.ki4[c] && *y.tau > *x.tau + slack) return false;
      }
      for (std::size_t r2 = 0; r2 < rows; ++r2) {
        const auto& y = t.at(r2, c);
        if (!y.tau) return false;
        if (t.kp4[r2] > t.kp4[r] && *y.tau > *x.tau + slack) return false;
      }
    }
  }
  return true;
}

}  // namespace pvdelay::margin
