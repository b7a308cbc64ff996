#pragma once

#include "core.hpp"
#include "problem.hpp"

namespace delaymp {

/// G = l + <p, b> + sum_j <q^j, sigma^j> at one evaluation point.  The
/// martingale weight q is an n x d matrix whose columns pair with the
/// diffusion columns; an empty matrix means q = 0 and skips the diffusion
/// evaluation entirely.
inline double eval_G(const ProblemSpec& spec, double t, const Vec& x, const Vec& y, const Vec& z,
                     const Vec& p, const Mat& q, const Vec& u, const Vec& mu) {
    require(p.size() == spec.n, ErrorKind::dimension, "costate dimension mismatch");
    CoeffPoint pt;
    pt.t = t;
    pt.x = x;
    pt.y = y;
    pt.z = z;
    pt.u = u;
    pt.mu = mu;
    double g = spec.coeffs.running_cost(pt) + p.dot(spec.coeffs.drift(pt));
    if (q.size() > 0) {
        const Mat sig = spec.coeffs.diffusion(pt);
        require(q.rows() == sig.rows() && q.cols() == sig.cols(), ErrorKind::dimension,
                "martingale weight must be n x d");
        g += (q.array() * sig.array()).sum();
    }
    return g;
}

/// Frozen data of one Hamiltonian evaluation site: candidate state triple,
/// first-order costate pair, curvature weight, and the candidate controls
/// that anchor the diffusion difference.
struct HamiltonianInputs {
    double t = 0.0;
    Vec x, y, z;
    Vec p;
    Mat q;          // n x d, empty => zero
    Mat curly;      // n x n curvature weight at t
    Vec u_star, mu_star;
};

/// H(u, mu) = G(u, mu) + sum_j (sigma^j(u, mu) - sigma^j(u*, mu*))^T P
/// (sigma^j(u, mu) - sigma^j(u*, mu*)).  The quadratic penalty carries no
/// 1/2 and vanishes at the candidate controls.
inline double eval_hamiltonian(const ProblemSpec& spec, const HamiltonianInputs& in, const Vec& u,
                               const Vec& mu) {
    double h = eval_G(spec, in.t, in.x, in.y, in.z, in.p, in.q, u, mu);
    CoeffPoint at, ref;
    at.t = ref.t = in.t;
    at.x = ref.x = in.x;
    at.y = ref.y = in.y;
    at.z = ref.z = in.z;
    at.u = u;
    at.mu = mu;
    ref.u = in.u_star;
    ref.mu = in.mu_star;
    const Mat ds = spec.coeffs.diffusion(at) - spec.coeffs.diffusion(ref);
    require(in.curly.rows() == spec.n && in.curly.cols() == spec.n, ErrorKind::dimension,
            "curvature weight must be n x n");
    for (int j = 0; j < ds.cols(); ++j) h += ds.col(j).dot(in.curly * ds.col(j));
    return h;
}

}  // namespace delaymp
