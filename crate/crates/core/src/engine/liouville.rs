//! Liouville-space assembly, the weak-drive hierarchy and the finite-drive steady state.
//!
//! Density matrices are column-stacked, so `vec(A rho B) = (B^T kron A) vec(rho)`.
//! With `L = L0 + A L1` and `rho_0 = |g><g|`, the order-`n` coefficients solve
//! `(P_g - L0) rho_n = L1 rho_{n-1}`, where `P_g Y = |g><g| tr Y` removes the zero mode.

use nalgebra::linalg::LU;
use nalgebra::Dyn;

use super::operators::{CMat, CVec};
use crate::{Error, Result, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

#[cfg(test)]
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn mat_of(v: &CVec, d: usize) -> CMat {
    CMat::from_column_slice(d, d, v.as_slice())
}

/// `-i [H, .]`
pub fn commutator(h: &CMat) -> CMat {
    let d = h.nrows();
    let id = CMat::identity(d, d);
    (id.kronecker(h) - h.transpose().kronecker(&id)) * (-I)
}

/// `c . c^dag - {c^dag c, .} / 2`
pub fn dissipator(op: &CMat) -> CMat {
    let d = op.nrows();
    let id = CMat::identity(d, d);
    let n = op.adjoint() * op;
    op.conjugate().kronecker(op) - (id.kronecker(&n) + n.transpose().kronecker(&id)) * c(0.5)
}

/// `tr(A rho)` for a column-stacked `rho`.
pub fn expect(a: &CMat, rho: &CVec) -> C64 {
    let d = a.nrows();
    let mut s = C64::new(0.0, 0.0);
    for j in 0..d {
        for i in 0..d {
            s += a[(j, i)] * rho[i + j * d];
        }
    }
    s
}

/// Adds `P_g` (ground-state projector times trace) to a superoperator in place.
pub fn add_ground_projector(m: &mut CMat, d: usize) {
    for i in 0..d {
        m[(0, i * (d + 1))] += c(1.0);
    }
}

fn checked_lu(m: CMat, what: &str) -> Result<LU<C64, Dyn, Dyn>> {
    let lu = m.lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].norm()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-13 * max) {
        return Err(Error::DegenerateSteadyState(format!(
            "{what}: pivot ratio {:e}, the stationary manifold is not one-dimensional",
            min / max
        )));
    }
    Ok(lu)
}

fn solve(lu: &LU<C64, Dyn, Dyn>, rhs: &CVec) -> Result<CVec> {
    let x = lu.solve(rhs).ok_or_else(|| Error::numeric("singular Liouville system"))?;
    if x.iter().any(|z| !z.is_finite()) {
        return Err(Error::numeric("non-finite Liouville solution"));
    }
    Ok(x)
}

/// Superoperators of one driven problem in the reduced space.
#[derive(Clone, Debug)]
pub struct Superoperators {
    pub dim: usize,
    /// Undriven Liouvillian in the frame rotating at the drive frequency.
    pub l0: CMat,
    /// Drive part per unit amplitude.
    pub l1: CMat,
}

impl Superoperators {
    pub fn new(h: &CMat, drive: &CMat, jumps: &[CMat]) -> Self {
        let dim = h.nrows();
        let mut l0 = commutator(h);
        for j in jumps {
            l0 += dissipator(j);
        }
        Superoperators { dim, l0, l1: commutator(drive) }
    }

    pub fn ground(&self) -> CVec {
        let mut g = CVec::zeros(self.dim * self.dim);
        g[0] = c(1.0);
        g
    }

    /// Weak-drive coefficients `rho_0 .. rho_order`.
    pub fn expansion(&self, order: usize) -> Result<WeakDriveExpansion> {
        let mut m = -self.l0.clone();
        add_ground_projector(&mut m, self.dim);
        let lu = checked_lu(m, "weak-drive hierarchy")?;
        let mut rho = vec![self.ground()];
        for n in 1..=order {
            let rhs = &self.l1 * &rho[n - 1];
            rho.push(solve(&lu, &rhs)?);
        }
        Ok(WeakDriveExpansion { dim: self.dim, rho })
    }

    /// Steady state at finite drive amplitude `a`. The solution is split into the fourth-order
    /// expansion plus a remainder solved exactly, which keeps the small populations accurate.
    pub fn steady_state(&self, a: f64) -> Result<CVec> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::invalid("drive amplitude must be finite and >= 0"));
        }
        let exp = self.expansion(4)?;
        let mut approx = CVec::zeros(self.dim * self.dim);
        let mut p = 1.0;
        for r in &exp.rho {
            approx += r * c(p);
            p *= a;
        }
        if a == 0.0 {
            return Ok(approx);
        }
        let mut m = -(&self.l0 + &self.l1 * c(a));
        add_ground_projector(&mut m, self.dim);
        let lu = checked_lu(m, "finite-drive steady state")?;
        let rhs = (&self.l1 * &exp.rho[4]) * c(a.powi(5));
        let rem = solve(&lu, &rhs)?;
        Ok(approx + rem)
    }
}

/// Drive-amplitude expansion coefficients of the steady state.
#[derive(Clone, Debug)]
pub struct WeakDriveExpansion {
    pub dim: usize,
    pub rho: Vec<CVec>,
}

impl WeakDriveExpansion {
    pub fn order(&self) -> usize {
        self.rho.len() - 1
    }

    /// Coefficient of `A^n` in `<op>`.
    pub fn expect(&self, op: &CMat, n: usize) -> C64 {
        expect(op, &self.rho[n])
    }
}

/// Fourth-order coefficient of the regression resolvent `tr(c (z - L)^-1 dX)` with
/// `dX = rho c^dag - rho <c^dag>` and `z = -i nu`, for many `z` at once.
///
/// `P_g - L0` is reduced to Schur form once, so each frequency costs a few triangular
/// solves instead of a dense factorisation.
pub struct RegressionResolvent {
    n: usize,
    schur: CMat,
    /// `Q^dag L1 Q`
    drive: CMat,
    /// Sources `Q^dag dX_n` for orders `0..=4`.
    sources: Vec<CVec>,
    /// Row vector of `tr(c .)` in the Schur basis.
    readout: CVec,
}

impl RegressionResolvent {
    pub fn new(ops: &Superoperators, exp: &WeakDriveExpansion, c_op: &CMat) -> Result<Self> {
        if exp.order() < 4 {
            return Err(Error::invalid("regression resolvent needs the fourth-order expansion"));
        }
        let d = ops.dim;
        let n = d * d;
        let cd = c_op.adjoint();
        let id = CMat::identity(d, d);
        // vec(rho c^dag) = (c^dag^T kron 1) vec(rho)
        let right = cd.transpose().kronecker(&id);
        let cdag_mean: Vec<C64> = (0..=4).map(|k| exp.expect(&cd, k)).collect();
        let mut m = -ops.l0.clone();
        add_ground_projector(&mut m, d);
        let (q, t) = m
            .try_schur(1e-14, 10_000)
            .ok_or_else(|| Error::numeric("Schur reduction of the Liouvillian did not converge"))?
            .unpack();
        let qa = q.adjoint();
        let sources = (0..=4)
            .map(|k| {
                let mut w = &right * &exp.rho[k];
                for a in 0..=k {
                    w -= &exp.rho[a] * cdag_mean[k - a];
                }
                &qa * w
            })
            .collect();
        // tr(c Y) = sum_ij c_ji Y_ij, a linear functional on vec(Y).
        let mut read = CVec::zeros(n);
        for j in 0..d {
            for i in 0..d {
                read[i + j * d] = c_op[(j, i)];
            }
        }
        let readout = q.transpose() * read;
        Ok(RegressionResolvent { n, schur: t, drive: &qa * &ops.l1 * &q, sources, readout })
    }

    fn shifted_solve(&self, z: C64, rhs: &mut CVec) -> Result<()> {
        let t = &self.schur;
        for i in (0..self.n).rev() {
            let mut acc = rhs[i];
            for j in (i + 1)..self.n {
                acc -= t[(i, j)] * rhs[j];
            }
            let diag = t[(i, i)] + z;
            if diag.norm() < 1e-300 {
                return Err(Error::numeric("singular spectral resolvent"));
            }
            rhs[i] = acc / diag;
        }
        Ok(())
    }

    pub fn evaluate(&self, z: C64) -> Result<C64> {
        let mut y = CVec::zeros(self.n);
        for src in &self.sources {
            let mut rhs = src + &self.drive * &y;
            self.shifted_solve(z, &mut rhs)?;
            y = rhs;
        }
        Ok(self.readout.dot(&y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectorisation_convention() {
        let a = CMat::from_fn(2, 2, |i, j| C64::new(i as f64 + 1.0, j as f64 - 0.5));
        let b = CMat::from_fn(2, 2, |i, j| C64::new(j as f64 * 0.3, 1.0 + i as f64));
        let r = CMat::from_fn(2, 2, |i, j| C64::new(0.1 * (i + 2 * j) as f64, 0.2));
        let lhs = vec_of(&(&a * &r * &b));
        let rhs = b.transpose().kronecker(&a) * vec_of(&r);
        assert!((lhs - rhs).camax() < 1e-14);
        assert!((expect(&a, &vec_of(&r)) - (&a * &r).trace()).norm() < 1e-14);
    }

    #[test]
    fn decay_of_a_single_emitter() {
        // d/dt rho_ee = -gamma rho_ee
        let mut s = CMat::zeros(2, 2);
        s[(0, 1)] = c(1.0);
        let l = dissipator(&(s * c(2f64.sqrt())));
        let mut rho = CMat::zeros(2, 2);
        rho[(1, 1)] = c(1.0);
        let drho = mat_of(&(l * vec_of(&rho)), 2);
        assert!((drho[(1, 1)] + 2.0).norm() < 1e-15 && (drho[(0, 0)] - 2.0).norm() < 1e-15);
    }
}
