//! Emitter operators on the product space and their restriction to the subspace reachable
//! from the ground state.

use nalgebra::{DMatrix, DVector};

use crate::model::{Emitter, EmitterChain, Incidence};
use crate::{Error, Result, C64};

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

const I: C64 = C64 { re: 0.0, im: 1.0 };

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn embed(dims: &[usize], site: usize, local: &CMat) -> CMat {
    let mut out = CMat::from_element(1, 1, c(1.0));
    for (j, &d) in dims.iter().enumerate() {
        let factor = if j == site { local.clone() } else { CMat::identity(d, d) };
        out = out.kronecker(&factor);
    }
    out
}

fn unit(d: usize, row: usize, col: usize) -> CMat {
    let mut m = CMat::zeros(d, d);
    m[(row, col)] = c(1.0);
    m
}

/// Operators of a chain on the full product space, lab frame.
#[derive(Clone, Debug)]
pub struct ChainOperators {
    pub dim: usize,
    pub excitations: Vec<usize>,
    pub hamiltonian: CMat,
    pub sigma: Vec<CMat>,
    /// Right-moving output mode, `sum_i sqrt(Gamma_i/2) e^{-i phi_i} sigma_i`.
    pub c_right: CMat,
    /// Left-moving output mode, `sum_i sqrt(Gamma_i/2) e^{+i phi_i} sigma_i`.
    pub c_left: CMat,
    /// Non-guided decay channels.
    pub losses: Vec<CMat>,
    pub exchange: DMatrix<f64>,
    pub collective_decay: DMatrix<f64>,
    pub loss_rates: Vec<f64>,
}

impl ChainOperators {
    pub fn new(chain: &EmitterChain) -> Result<Self> {
        let em = chain.emitters();
        let n = em.len();
        let dims: Vec<usize> = em.iter().map(Emitter::local_dim).collect();
        let dim: usize = dims.iter().product();

        let mut excitations = vec![0usize; dim];
        for (idx, slot) in excitations.iter_mut().enumerate() {
            let mut rem = idx;
            for &d in dims.iter().rev() {
                if rem % d != 0 {
                    *slot += 1;
                }
                rem /= d;
            }
        }

        let mut h = CMat::zeros(dim, dim);
        let mut sigma = Vec::with_capacity(n);
        let mut losses = Vec::new();
        let mut loss_rates = Vec::with_capacity(n);
        for (i, e) in em.iter().enumerate() {
            match e {
                Emitter::TwoLevel(t) => {
                    h += embed(&dims, i, &(unit(2, 1, 1) * c(t.frequency)));
                    let s = embed(&dims, i, &unit(2, 0, 1));
                    if t.loss > 0.0 {
                        losses.push(&s * c(t.loss.sqrt()));
                    }
                    loss_rates.push(t.loss);
                    sigma.push(s);
                }
                Emitter::Lambda(l) => {
                    let mut loc = unit(3, 1, 1) * c(l.excited) + unit(3, 2, 2) * c(l.metastable);
                    loc += (unit(3, 1, 2) + unit(3, 2, 1)) * c(0.5 * l.rabi);
                    h += embed(&dims, i, &loc);
                    let s = embed(&dims, i, &unit(3, 0, 1));
                    if l.loss_excited > 0.0 {
                        losses.push(&s * c(l.loss_excited.sqrt()));
                    }
                    if l.loss_metastable > 0.0 {
                        losses.push(embed(&dims, i, &unit(3, 0, 2)) * c(l.loss_metastable.sqrt()));
                    }
                    loss_rates.push(l.loss_excited);
                    sigma.push(s);
                }
            }
        }

        let mut exchange = DMatrix::zeros(n, n);
        let mut collective = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let g = (em[i].gamma() * em[j].gamma()).sqrt();
                let dphi = (em[i].phase() - em[j].phase()).abs();
                collective[(i, j)] = g * dphi.cos();
                if i != j {
                    exchange[(i, j)] = 0.5 * g * dphi.sin();
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let hop = sigma[i].adjoint() * &sigma[j];
                h += (&hop + hop.adjoint()) * c(exchange[(i, j)]);
            }
        }

        let psd = nalgebra::SymmetricEigen::new(collective.clone());
        let scale = collective.amax().max(1.0);
        if psd.eigenvalues.iter().any(|&v| v < -1e-12 * scale) {
            return Err(Error::Model("collective decay matrix is not positive semidefinite".into()));
        }

        let mut c_right = CMat::zeros(dim, dim);
        let mut c_left = CMat::zeros(dim, dim);
        for (i, e) in em.iter().enumerate() {
            let a = (0.5 * e.gamma()).sqrt();
            c_right += &sigma[i] * (a * (-I * e.phase()).exp());
            c_left += &sigma[i] * (a * (I * e.phase()).exp());
        }

        Ok(ChainOperators {
            dim,
            excitations,
            hamiltonian: h,
            sigma,
            c_right,
            c_left,
            losses,
            exchange,
            collective_decay: collective,
            loss_rates,
        })
    }

    /// Mode driven by (and transmitting) a photon with the given incidence.
    pub fn forward_mode(&self, inc: Incidence) -> &CMat {
        match inc {
            Incidence::Left => &self.c_right,
            Incidence::Right => &self.c_left,
        }
    }

    pub fn backward_mode(&self, inc: Incidence) -> &CMat {
        self.forward_mode(inc.reversed())
    }
}

/// Orthonormal basis of the smallest subspace containing the ground state and closed under
/// the Hamiltonian, the drive's raising operator, both output modes and all loss channels.
/// Each basis vector carries a definite excitation number.
#[derive(Clone, Debug)]
pub struct ReachableSpace {
    pub basis: CMat,
    pub excitations: Vec<usize>,
}

impl ReachableSpace {
    pub fn new(ops: &ChainOperators, inc: Incidence) -> Self {
        let raise = ops.forward_mode(inc).adjoint();
        let mut gens: Vec<(&CMat, i64)> = vec![(&ops.hamiltonian, 0), (&raise, 1)];
        gens.push((&ops.c_right, -1));
        gens.push((&ops.c_left, -1));
        for l in &ops.losses {
            gens.push((l, -1));
        }
        let hnorm = ops.hamiltonian.camax().max(1.0);

        let mut vecs: Vec<CVec> = Vec::new();
        let mut labels: Vec<usize> = Vec::new();
        let mut g = CVec::zeros(ops.dim);
        g[0] = c(1.0);
        vecs.push(g);
        labels.push(0);
        let mut next = 0;
        while next < vecs.len() {
            let v = vecs[next].clone();
            let lv = labels[next] as i64;
            next += 1;
            for &(op, shift) in &gens {
                let label = lv + shift;
                if label < 0 {
                    continue;
                }
                let mut w = op * &v;
                let scale = if shift == 0 { hnorm } else { 1.0 };
                // Two Gram-Schmidt passes for orthogonality at round-off level.
                for _ in 0..2 {
                    for b in &vecs {
                        let p = b.dotc(&w);
                        w -= b * p;
                    }
                }
                let nrm = w.norm();
                if nrm > 1e-9 * scale {
                    vecs.push(w / c(nrm));
                    labels.push(label as usize);
                }
            }
        }
        let basis = CMat::from_columns(&vecs);
        ReachableSpace { basis, excitations: labels }
    }

    pub fn dim(&self) -> usize {
        self.excitations.len()
    }

    pub fn restrict(&self, op: &CMat) -> CMat {
        self.basis.adjoint() * op * &self.basis
    }
}
