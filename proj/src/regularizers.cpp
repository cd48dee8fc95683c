#include "lowrex/regularizers.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace lowrex {

Regularizer Regularizer::l1() {
  Regularizer j;
  j.kind = Kind::l1;
  return j;
}

Regularizer Regularizer::group(std::vector<std::vector<int>> blocks) {
  Regularizer j;
  j.kind = Kind::group_l1l2;
  j.blocks = std::move(blocks);
  return j;
}

Regularizer Regularizer::linf() {
  Regularizer j;
  j.kind = Kind::linf;
  return j;
}

Regularizer Regularizer::nuclear(int n0) {
  require(n0 >= 1, "nuclear: n0 must be positive");
  Regularizer j;
  j.kind = Kind::nuclear;
  j.n0 = n0;
  return j;
}

Regularizer Regularizer::analysis_l1(Matrix d) {
  require(d.rows() >= 1 && d.cols() >= 1, "analysis_l1: empty operator");
  Regularizer j;
  j.kind = Kind::analysis_l1;
  j.D = std::move(d);
  return j;
}

Regularizer Regularizer::analysis_tv1d(int n) {
  require(n >= 2, "analysis_tv1d: need n >= 2");
  Matrix d = Matrix::Zero(n, n - 1);
  for (int c = 0; c < n - 1; ++c) {
    d(c, c) = -1.0;
    d(c + 1, c) = 1.0;
  }
  return analysis_l1(std::move(d));
}

std::string Regularizer::kind_name() const {
  switch (kind) {
    case Kind::l1: return "l1";
    case Kind::group_l1l2: return "group_l1l2";
    case Kind::linf: return "linf";
    case Kind::nuclear: return "nuclear";
    case Kind::analysis_l1: return "analysis_l1";
  }
  return "?";
}

std::string ManifoldTag::to_string() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::support: os << "supp:"; break;
    case Kind::blocks: os << "blk:"; break;
    case Kind::saturation: os << "sat:"; break;
    case Kind::rank: return "rank:" + std::to_string(rank);
    case Kind::cosupport: os << "cosupp:"; break;
  }
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (i) os << ",";
    if (kind == Kind::saturation) os << (sign[i] >= 0 ? '+' : '-');
    os << index[i];
  }
  return os.str();
}

std::uint64_t ManifoldTag::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : to_string()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

void check_blocks(const Regularizer& j, int n) {
  require(!j.blocks.empty(), "group_l1l2: no blocks");
  std::vector<char> seen(n, 0);
  for (const auto& b : j.blocks) {
    require(!b.empty(), "group_l1l2: empty block");
    for (int i : b) {
      require(0 <= i && i < n && !seen[i], "group_l1l2: blocks must partition {0..n-1}");
      seen[i] = 1;
    }
  }
  for (char c : seen) require(c == 1, "group_l1l2: blocks must cover {0..n-1}");
}

int matrix_side(const Regularizer& j, const Vector& x) {
  require(j.n0 * j.n0 == x.size(), "nuclear: length must be n0^2");
  return j.n0;
}

Eigen::Map<const Matrix> as_matrix(const Vector& x, int n0) {
  return Eigen::Map<const Matrix>(x.data(), n0, n0);
}

Vector flatten(const Matrix& m) {
  return Eigen::Map<const Vector>(m.data(), m.size());
}

double sgn(double v) { return v >= 0.0 ? 1.0 : -1.0; }

/* Threshold tau such that sum_i max(u_i - tau, 0) = r for sorted-descending
 * magnitudes; shared by l1-ball and simplex projections. */
double water_level(std::vector<double> u, double r) {
  std::sort(u.begin(), u.end(), std::greater<double>());
  double cum = 0.0, tau = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cum += u[k];
    const double cand = (cum - r) / static_cast<double>(k + 1);
    if (u[k] - cand > 0.0) tau = cand;
  }
  return tau;
}

Vector project_simplex(const Vector& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  const double tau = water_level(std::move(u), 1.0);
  Vector out(v.size());
  for (int i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - tau, 0.0);
  return out;
}

/* Saturation set and sign pattern of the max-magnitude entries. */
struct Saturation {
  std::vector<int> idx;
  std::vector<int> sign;
  double peak = 0.0;
};

Saturation saturation_set(const Vector& x, double band) {
  Saturation s;
  s.peak = x.lpNorm<Eigen::Infinity>();
  if (s.peak <= 0.0) return s;
  for (int i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) >= s.peak * (1.0 - band)) {
      s.idx.push_back(i);
      s.sign.push_back(x[i] >= 0.0 ? 1 : -1);
    }
  return s;
}

struct NuclearParts {
  Matrix ufull, vfull;
  Vector sv;
  int r = 0;
};

NuclearParts nuclear_parts(const Vector& x, int n0, double tol_rank) {
  Eigen::JacobiSVD<Matrix> svd(as_matrix(x, n0), Eigen::ComputeFullU | Eigen::ComputeFullV);
  NuclearParts p{svd.matrixU(), svd.matrixV(), svd.singularValues(), 0};
  const double smax = p.sv.size() ? p.sv[0] : 0.0;
  for (int i = 0; i < p.sv.size(); ++i)
    if (p.sv[i] > tol_rank * smax && smax > 0.0) ++p.r;
  return p;
}

std::vector<int> active_entries(const Vector& x, double tol) {
  std::vector<int> idx;
  for (int i = 0; i < x.size(); ++i)
    if (std::abs(x[i]) > tol) idx.push_back(i);
  return idx;
}

}  // namespace

double eval(const Regularizer& j, const Vector& x) {
  switch (j.kind) {
    case Regularizer::Kind::l1: return x.lpNorm<1>();
    case Regularizer::Kind::group_l1l2: {
      check_blocks(j, static_cast<int>(x.size()));
      double v = 0.0;
      for (const auto& b : j.blocks) {
        double s = 0.0;
        for (int i : b) s += x[i] * x[i];
        v += std::sqrt(s);
      }
      return v;
    }
    case Regularizer::Kind::linf: return x.lpNorm<Eigen::Infinity>();
    case Regularizer::Kind::nuclear: {
      const int n0 = matrix_side(j, x);
      Eigen::JacobiSVD<Matrix> svd(as_matrix(x, n0));
      return svd.singularValues().sum();
    }
    case Regularizer::Kind::analysis_l1:
      require(j.D.rows() == x.size(), "analysis_l1: operator row count must match x");
      return (j.D.transpose() * x).lpNorm<1>();
  }
  throw InvalidArgument("eval: unknown kind");
}

Vector project_l1_ball(const Vector& v, double r) {
  require(r >= 0.0, "project_l1_ball: negative radius");
  if (v.lpNorm<1>() <= r) return v;
  std::vector<double> u(v.size());
  for (int i = 0; i < v.size(); ++i) u[i] = std::abs(v[i]);
  const double tau = water_level(std::move(u), r);
  Vector out(v.size());
  for (int i = 0; i < v.size(); ++i) out[i] = sgn(v[i]) * std::max(std::abs(v[i]) - tau, 0.0);
  return out;
}

Vector prox(const Regularizer& j, double gamma, const Vector& x) {
  require(gamma > 0.0, "prox: gamma must be positive");
  switch (j.kind) {
    case Regularizer::Kind::l1: {
      Vector u(x.size());
      for (int i = 0; i < x.size(); ++i)
        u[i] = sgn(x[i]) * std::max(std::abs(x[i]) - gamma, 0.0);
      return u;
    }
    case Regularizer::Kind::group_l1l2: {
      check_blocks(j, static_cast<int>(x.size()));
      Vector u = Vector::Zero(x.size());
      for (const auto& b : j.blocks) {
        double s = 0.0;
        for (int i : b) s += x[i] * x[i];
        const double nb = std::sqrt(s);
        if (nb > gamma) {
          const double scale = 1.0 - gamma / nb;
          for (int i : b) u[i] = scale * x[i];
        }
      }
      return u;
    }
    case Regularizer::Kind::linf:
      // Moreau: prox of the max-norm is the residual of the l1-ball projection.
      return x - project_l1_ball(x, gamma);
    case Regularizer::Kind::nuclear: {
      const int n0 = matrix_side(j, x);
      Eigen::JacobiSVD<Matrix> svd(as_matrix(x, n0), Eigen::ComputeThinU | Eigen::ComputeThinV);
      Vector s = svd.singularValues();
      for (int i = 0; i < s.size(); ++i) s[i] = std::max(s[i] - gamma, 0.0);
      return flatten(svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose());
    }
    case Regularizer::Kind::analysis_l1:
      throw Unsupported("prox: analysis_l1 has no simple proximal map, solve through the primal-dual scheme");
  }
  throw InvalidArgument("prox: unknown kind");
}

ModelDescriptor model_tangent(const Regularizer& j, const Vector& x, double tol_active) {
  const int n = static_cast<int>(x.size());
  ModelDescriptor d;
  switch (j.kind) {
    case Regularizer::Kind::l1: {
      const auto idx = active_entries(x, tol_active);
      d.basis = Matrix::Zero(n, static_cast<int>(idx.size()));
      d.e = Vector::Zero(n);
      for (std::size_t c = 0; c < idx.size(); ++c) {
        d.basis(idx[c], static_cast<int>(c)) = 1.0;
        d.e[idx[c]] = sgn(x[idx[c]]);
      }
      d.tag = {ManifoldTag::Kind::support, idx, {}, 0};
      return d;
    }
    case Regularizer::Kind::group_l1l2: {
      check_blocks(j, n);
      std::vector<int> active;
      std::vector<int> coords;
      d.e = Vector::Zero(n);
      for (int b = 0; b < static_cast<int>(j.blocks.size()); ++b) {
        double s = 0.0;
        for (int i : j.blocks[b]) s += x[i] * x[i];
        const double nb = std::sqrt(s);
        if (nb > tol_active) {
          active.push_back(b);
          for (int i : j.blocks[b]) {
            coords.push_back(i);
            d.e[i] = x[i] / nb;
          }
        }
      }
      d.basis = Matrix::Zero(n, static_cast<int>(coords.size()));
      for (std::size_t c = 0; c < coords.size(); ++c) d.basis(coords[c], static_cast<int>(c)) = 1.0;
      d.tag = {ManifoldTag::Kind::blocks, active, {}, 0};
      return d;
    }
    case Regularizer::Kind::linf: {
      const auto sat = saturation_set(x, tol_active);
      if (sat.idx.empty()) {  // x = 0: the subdifferential is full-dimensional
        d.basis = Matrix::Zero(n, 0);
        d.e = Vector::Zero(n);
        d.tag = {ManifoldTag::Kind::saturation, {}, {}, 0};
        return d;
      }
      const int m = static_cast<int>(sat.idx.size());
      d.basis = Matrix::Zero(n, n - m + 1);
      Vector sat_dir = Vector::Zero(n);
      for (int i : sat.idx) sat_dir[i] = x[i];
      d.basis.col(0) = sat_dir / sat_dir.norm();
      int c = 1;
      std::vector<char> saturated(n, 0);
      for (int i : sat.idx) saturated[i] = 1;
      for (int i = 0; i < n; ++i)
        if (!saturated[i]) d.basis(i, c++) = 1.0;
      d.e = Vector::Zero(n);
      for (int t = 0; t < m; ++t) d.e[sat.idx[t]] = static_cast<double>(sat.sign[t]) / m;
      d.tag = {ManifoldTag::Kind::saturation, sat.idx, sat.sign, 0};
      return d;
    }
    case Regularizer::Kind::nuclear: {
      const int n0 = matrix_side(j, x);
      const auto p = nuclear_parts(x, n0, tol_active);
      d.basis = Matrix(n, p.r * (2 * n0 - p.r));
      int c = 0;
      for (int jj = 0; jj < n0; ++jj)
        for (int ii = 0; ii < n0; ++ii)
          if (ii < p.r || jj < p.r)
            d.basis.col(c++) = flatten(p.ufull.col(ii) * p.vfull.col(jj).transpose());
      d.e = p.r > 0 ? flatten(p.ufull.leftCols(p.r) * p.vfull.leftCols(p.r).transpose())
                    : Vector(Vector::Zero(n));
      d.tag = {ManifoldTag::Kind::rank, {}, {}, p.r};
      return d;
    }
    case Regularizer::Kind::analysis_l1: {
      require(j.D.rows() == n, "analysis_l1: operator row count must match x");
      const Vector z = j.D.transpose() * x;
      std::vector<int> cosupport;
      Vector dsign = Vector::Zero(n);  // D_S sign(z_S)
      for (int q = 0; q < z.size(); ++q) {
        if (std::abs(z[q]) > tol_active)
          dsign += sgn(z[q]) * j.D.col(q);
        else
          cosupport.push_back(q);
      }
      if (cosupport.empty()) {
        d.basis = Matrix::Identity(n, n);
        d.transversal = true;
      } else {
        Matrix dl(n, static_cast<int>(cosupport.size()));
        for (std::size_t c = 0; c < cosupport.size(); ++c) dl.col(static_cast<int>(c)) = j.D.col(cosupport[c]);
        Eigen::JacobiSVD<Matrix> svd(dl.transpose(), Eigen::ComputeFullV);
        const double smax = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
        int rank = 0;
        for (int i = 0; i < svd.singularValues().size(); ++i)
          if (smax > 0.0 && svd.singularValues()[i] > kSvdCutoff * smax) ++rank;
        d.basis = svd.matrixV().rightCols(n - rank);
        d.transversal = (rank == static_cast<int>(cosupport.size()));
      }
      d.e = d.basis * (d.basis.transpose() * dsign);
      d.tag = {ManifoldTag::Kind::cosupport, cosupport, {}, 0};
      return d;
    }
  }
  throw InvalidArgument("model_tangent: unknown kind");
}

Vector generalized_sign(const Regularizer& j, const Vector& x) {
  return model_tangent(j, x).e;
}

namespace {

SubdiffPosition classify(double eq_violation, double slack, double tol_ri) {
  SubdiffPosition p;
  if (eq_violation > tol_ri) {
    p.value = SubdiffPosition::Value::outside;
    p.margin = -eq_violation;
    return p;
  }
  p.margin = slack;
  if (slack > tol_ri)
    p.value = SubdiffPosition::Value::interior;
  else if (slack < -tol_ri)
    p.value = SubdiffPosition::Value::outside;
  else
    p.value = SubdiffPosition::Value::boundary;
  return p;
}

}  // namespace

SubdiffPosition subdiff_position(const Regularizer& j, const Vector& x, const Vector& eta,
                                 double tol_ri) {
  require(eta.size() == x.size(), "subdiff_position: eta has wrong length");
  const int n = static_cast<int>(x.size());
  switch (j.kind) {
    case Regularizer::Kind::l1: {
      double eqv = 0.0, worst = 0.0;
      for (int i = 0; i < n; ++i) {
        if (std::abs(x[i]) > kTolActive)
          eqv = std::max(eqv, std::abs(eta[i] - sgn(x[i])));
        else
          worst = std::max(worst, std::abs(eta[i]));
      }
      const bool has_inactive = static_cast<int>(active_entries(x, kTolActive).size()) < n;
      return classify(eqv, has_inactive ? 1.0 - worst : 1.0, tol_ri);
    }
    case Regularizer::Kind::group_l1l2: {
      check_blocks(j, n);
      double eqv = 0.0, worst = -1.0;
      for (const auto& b : j.blocks) {
        double sx = 0.0, diff = 0.0, se = 0.0;
        for (int i : b) sx += x[i] * x[i];
        const double nb = std::sqrt(sx);
        if (nb > kTolActive) {
          for (int i : b) {
            const double d = eta[i] - x[i] / nb;
            diff += d * d;
          }
          eqv = std::max(eqv, std::sqrt(diff));
        } else {
          for (int i : b) se += eta[i] * eta[i];
          worst = std::max(worst, std::sqrt(se));
        }
      }
      return classify(eqv, worst < 0.0 ? 1.0 : 1.0 - worst, tol_ri);
    }
    case Regularizer::Kind::linf: {
      const auto sat = saturation_set(x, kTolActive);
      if (sat.idx.empty()) return classify(0.0, 1.0 - eta.lpNorm<1>(), tol_ri);
      std::vector<char> saturated(n, 0);
      for (int i : sat.idx) saturated[i] = 1;
      double eqv = 0.0, mass = 0.0, min_theta = 2.0;
      for (int i = 0; i < n; ++i)
        if (!saturated[i]) eqv = std::max(eqv, std::abs(eta[i]));
      for (std::size_t t = 0; t < sat.idx.size(); ++t) {
        const double theta = eta[sat.idx[t]] * sat.sign[t];
        mass += theta;
        min_theta = std::min(min_theta, theta);
      }
      eqv = std::max(eqv, std::abs(mass - 1.0));
      return classify(eqv, min_theta, tol_ri);
    }
    case Regularizer::Kind::nuclear: {
      const int n0 = matrix_side(j, x);
      const auto p = nuclear_parts(x, n0, kTolActive);
      const Matrix m = as_matrix(eta, n0);
      if (p.r == 0) {
        Eigen::JacobiSVD<Matrix> svd(m);
        return classify(0.0, 1.0 - svd.singularValues()[0], tol_ri);
      }
      const Matrix uo = p.ufull.rightCols(n0 - p.r);
      const Matrix vo = p.vfull.rightCols(n0 - p.r);
      const Matrix w = uo.transpose() * m * vo;  // off-model block, rotated
      const Matrix tm = m - uo * w * vo.transpose();
      const Matrix ev = tm - p.ufull.leftCols(p.r) * p.vfull.leftCols(p.r).transpose();
      double slack = 1.0;
      if (w.size() > 0) {
        Eigen::JacobiSVD<Matrix> svd(w);
        slack = 1.0 - svd.singularValues()[0];
      }
      return classify(ev.norm(), slack, tol_ri);
    }
    case Regularizer::Kind::analysis_l1: {
      require(j.D.rows() == n, "analysis_l1: operator row count must match x");
      const Vector z = j.D.transpose() * x;
      std::vector<int> cosupport;
      Vector fixed = Vector::Zero(n);
      for (int q = 0; q < z.size(); ++q) {
        if (std::abs(z[q]) > kTolActive)
          fixed += sgn(z[q]) * j.D.col(q);
        else
          cosupport.push_back(q);
      }
      const Vector rhs = eta - fixed;
      if (cosupport.empty()) return classify(rhs.norm(), 1.0, tol_ri);
      Matrix dl(n, static_cast<int>(cosupport.size()));
      for (std::size_t c = 0; c < cosupport.size(); ++c) dl.col(static_cast<int>(c)) = j.D.col(cosupport[c]);
      const Vector v = dl.completeOrthogonalDecomposition().solve(rhs);
      const double resid = (rhs - dl * v).norm();
      return classify(resid, 1.0 - v.lpNorm<Eigen::Infinity>(), tol_ri);
    }
  }
  throw InvalidArgument("subdiff_position: unknown kind");
}

Matrix hessian_on_tangent(const Regularizer& j, const Vector& x, const ModelDescriptor& desc) {
  const int d = desc.dim();
  switch (j.kind) {
    case Regularizer::Kind::l1:
    case Regularizer::Kind::linf:
      return Matrix::Zero(d, d);  // polyhedral: locally affine on the model
    case Regularizer::Kind::group_l1l2: {
      check_blocks(j, static_cast<int>(x.size()));
      Matrix q = Matrix::Zero(d, d);
      int off = 0;
      for (int b : desc.tag.index) {
        const auto& blk = j.blocks[b];
        const int m = static_cast<int>(blk.size());
        Vector xb(m);
        for (int i = 0; i < m; ++i) xb[i] = x[blk[i]];
        const double nb = xb.norm();
        const Vector eb = xb / nb;
        q.block(off, off, m, m) = (Matrix::Identity(m, m) - eb * eb.transpose()) / nb;
        off += m;
      }
      return q;
    }
    case Regularizer::Kind::nuclear:
      throw Unsupported("hessian_on_tangent: nuclear curvature not provided, use the Monte-Carlo path");
    case Regularizer::Kind::analysis_l1:
      throw Unsupported("hessian_on_tangent: analysis_l1 not provided");
  }
  throw InvalidArgument("hessian_on_tangent: unknown kind");
}

Matrix hessian_on_tangent(const Regularizer& j, const Vector& x) {
  return hessian_on_tangent(j, x, model_tangent(j, x));
}

double dir_deriv(const Regularizer& j, const Vector& x, const Vector& d) {
  require(d.size() == x.size(), "dir_deriv: d has wrong length");
  const int n = static_cast<int>(x.size());
  switch (j.kind) {
    case Regularizer::Kind::l1: {
      double v = 0.0;
      for (int i = 0; i < n; ++i)
        v += std::abs(x[i]) > kTolActive ? sgn(x[i]) * d[i] : std::abs(d[i]);
      return v;
    }
    case Regularizer::Kind::group_l1l2: {
      check_blocks(j, n);
      double v = 0.0;
      for (const auto& b : j.blocks) {
        double sx = 0.0, dot = 0.0, sd = 0.0;
        for (int i : b) sx += x[i] * x[i];
        const double nb = std::sqrt(sx);
        if (nb > kTolActive) {
          for (int i : b) dot += x[i] * d[i];
          v += dot / nb;
        } else {
          for (int i : b) sd += d[i] * d[i];
          v += std::sqrt(sd);
        }
      }
      return v;
    }
    case Regularizer::Kind::linf: {
      const auto sat = saturation_set(x, kTolActive);
      if (sat.idx.empty()) return d.lpNorm<Eigen::Infinity>();
      double v = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < sat.idx.size(); ++t)
        v = std::max(v, sat.sign[t] * d[sat.idx[t]]);
      return v;
    }
    case Regularizer::Kind::nuclear: {
      const int n0 = matrix_side(j, x);
      const auto p = nuclear_parts(x, n0, kTolActive);
      const Matrix m = as_matrix(d, n0);
      if (p.r == 0) {
        Eigen::JacobiSVD<Matrix> svd(m);
        return svd.singularValues().sum();
      }
      double v = (p.ufull.leftCols(p.r) * p.vfull.leftCols(p.r).transpose())
                     .cwiseProduct(m)
                     .sum();
      if (p.r < n0) {
        const Matrix w = p.ufull.rightCols(n0 - p.r).transpose() * m * p.vfull.rightCols(n0 - p.r);
        Eigen::JacobiSVD<Matrix> svd(w);
        v += svd.singularValues().sum();
      }
      return v;
    }
    case Regularizer::Kind::analysis_l1: {
      require(j.D.rows() == n, "analysis_l1: operator row count must match x");
      const Vector z = j.D.transpose() * x;
      const Vector zd = j.D.transpose() * d;
      double v = 0.0;
      for (int q = 0; q < z.size(); ++q)
        v += std::abs(z[q]) > kTolActive ? sgn(z[q]) * zd[q] : std::abs(zd[q]);
      return v;
    }
  }
  throw InvalidArgument("dir_deriv: unknown kind");
}

Vector project_subdifferential(const Regularizer& j, const Vector& x, const Vector& eta) {
  require(eta.size() == x.size(), "project_subdifferential: eta has wrong length");
  const int n = static_cast<int>(x.size());
  switch (j.kind) {
    case Regularizer::Kind::l1: {
      Vector out(n);
      for (int i = 0; i < n; ++i)
        out[i] = std::abs(x[i]) > kTolActive ? sgn(x[i]) : std::clamp(eta[i], -1.0, 1.0);
      return out;
    }
    case Regularizer::Kind::group_l1l2: {
      check_blocks(j, n);
      Vector out(n);
      for (const auto& b : j.blocks) {
        double sx = 0.0, se = 0.0;
        for (int i : b) sx += x[i] * x[i];
        const double nb = std::sqrt(sx);
        if (nb > kTolActive) {
          for (int i : b) out[i] = x[i] / nb;
        } else {
          for (int i : b) se += eta[i] * eta[i];
          const double ne = std::sqrt(se);
          const double scale = ne > 1.0 ? 1.0 / ne : 1.0;
          for (int i : b) out[i] = scale * eta[i];
        }
      }
      return out;
    }
    case Regularizer::Kind::linf: {
      const auto sat = saturation_set(x, kTolActive);
      if (sat.idx.empty()) return project_l1_ball(eta, 1.0);
      // Simplex projection of the signed masses on the saturation set.
      const int m = static_cast<int>(sat.idx.size());
      Vector theta(m);
      for (int t = 0; t < m; ++t) theta[t] = eta[sat.idx[t]] * sat.sign[t];
      theta = project_simplex(theta);
      Vector out = Vector::Zero(n);
      for (int t = 0; t < m; ++t) out[sat.idx[t]] = theta[t] * sat.sign[t];
      return out;
    }
    case Regularizer::Kind::nuclear: {
      const int n0 = matrix_side(j, x);
      const auto p = nuclear_parts(x, n0, kTolActive);
      const Matrix m = as_matrix(eta, n0);
      if (p.r == 0) {
        // Spectral-norm unit ball: clip singular values at one.
        Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
        Vector s = svd.singularValues();
        for (int i = 0; i < s.size(); ++i) s[i] = std::min(s[i], 1.0);
        return flatten(svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose());
      }
      Matrix out = p.ufull.leftCols(p.r) * p.vfull.leftCols(p.r).transpose();
      if (p.r < n0) {
        const Matrix uo = p.ufull.rightCols(n0 - p.r);
        const Matrix vo = p.vfull.rightCols(n0 - p.r);
        Eigen::JacobiSVD<Matrix> svd(Matrix(uo.transpose() * m * vo),
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
        Vector s = svd.singularValues();
        for (int i = 0; i < s.size(); ++i) s[i] = std::min(s[i], 1.0);
        out += uo * svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose() * vo.transpose();
      }
      return flatten(out);
    }
    case Regularizer::Kind::analysis_l1:
      throw Unsupported("project_subdifferential: analysis_l1 feasible set is an operator image, use the lifted scheme");
  }
  throw InvalidArgument("project_subdifferential: unknown kind");
}

}  // namespace lowrex
