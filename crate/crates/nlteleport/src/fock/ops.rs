//! Operators and gates on the truncated Fock space.
//!
//! Quadratures are `x = (a + a^dag)/sqrt(2)`, `p = (a - a^dag)/(i sqrt(2))`,
//! matching the vacuum variance 1/2 used by the Gaussian layer. Gates are
//! built so that their Heisenberg action on quadratures reproduces the
//! symplectic matrices of the Gaussian layer exactly; the unit tests pin each
//! convention through first and second moments.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub fn annihilation(dim: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = (n as f64).sqrt();
    }
    a
}

pub fn x_op(dim: usize) -> DMatrix<f64> {
    let a = annihilation(dim);
    (&a + a.transpose()) / 2f64.sqrt()
}

/// `p` is purely imaginary in the Fock basis; returned as a complex matrix.
pub fn p_op(dim: usize) -> DMatrix<C64> {
    let a = annihilation(dim);
    let mut p = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            // (a - a^dag) / (i sqrt(2))
            let v = (a[(i, j)] - a[(j, i)]) / 2f64.sqrt();
            p[(i, j)] = C64::new(0.0, -v);
        }
    }
    p
}

/// Hermite functions `psi_n(m)` for `n = 0..dim`: the position-space wave
/// functions of the Fock states at vacuum variance 1/2.
pub fn hermite_functions(m: f64, dim: usize) -> Vec<f64> {
    let mut psi = vec![0.0; dim];
    if dim == 0 {
        return psi;
    }
    let norm = std::f64::consts::PI.powf(-0.25);
    psi[0] = norm * (-0.5 * m * m).exp();
    if dim > 1 {
        psi[1] = 2f64.sqrt() * m * psi[0];
    }
    for n in 2..dim {
        let nf = n as f64;
        psi[n] = (2.0 / nf).sqrt() * m * psi[n - 1] - ((nf - 1.0) / nf).sqrt() * psi[n - 2];
    }
    psi
}

/// Largest `|m|` a homodyne projector can resolve before the Fock cutoff
/// starves the classically allowed region.
pub fn quadrature_reach(dim: usize) -> f64 {
    (2.0 * dim as f64 + 1.0).sqrt()
}

/// Overlаps `<m, theta | n>` of the eigenbra of `cos(theta) x + sin(theta) p`
/// with eigenvalue `m` against the Fock basis. `theta = 0` is an x eigenbra,
/// `theta = pi/2` a p eigenbra.
pub fn quadrature_bra(m: f64, theta: f64, dim: usize) -> Result<Vec<C64>> {
    let reach = quadrature_reach(dim);
    if m.abs() > reach {
        return Err(Error::QuadratureRange {
            m,
            max: reach,
            cutoff: dim,
        });
    }
    let psi = hermite_functions(m, dim);
    Ok((0..dim)
        .map(|n| C64::from_polar(1.0, -(n as f64) * theta) * psi[n])
        .collect())
}

/// Matrix exponential by Pade order-13 scaling and squaring.
pub fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
    const THETA13: f64 = 5.371_920_351_148_152;
    #[rustfmt::skip]
    const B: [f64; 14] = [
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ];
    let n = a.nrows();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let a = a / C64::from(2f64.powi(s as i32));
    let eye = DMatrix::<C64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * C64::from(B[13]) + &a4 * C64::from(B[11]) + &a2 * C64::from(B[9]);
    let u = &a
        * (&a6 * u_inner
            + &a6 * C64::from(B[7])
            + &a4 * C64::from(B[5])
            + &a2 * C64::from(B[3])
            + &eye * C64::from(B[1]));
    let v_inner = &a6 * C64::from(B[12]) + &a4 * C64::from(B[10]) + &a2 * C64::from(B[8]);
    let v = &a6 * v_inner
        + &a6 * C64::from(B[6])
        + &a4 * C64::from(B[4])
        + &a2 * C64::from(B[2])
        + &eye * C64::from(B[0]);
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut f = lhs
        .lu()
        .solve(&rhs)
        .expect("Pade denominator is invertible");
    for _ in 0..s {
        f = &f * &f;
    }
    f
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(C64::from)
}

/// Single-mode squeezer `exp(s (a^2 - a^dag^2) / 2)`; Heisenberg action
/// `x -> exp(-s) x`, `p -> exp(s) p`.
pub fn squeeze_gate(s: f64, dim: usize) -> DMatrix<C64> {
    let a = annihilation(dim);
    let gen = (&a * &a - a.transpose() * a.transpose()) * (s / 2.0);
    expm(&to_complex(&gen))
}

/// Squeezed vacuum amplitudes in closed form; same convention as
/// [`squeeze_gate`] applied to the vacuum.
pub fn squeezed_vacuum(s: f64, dim: usize) -> DVector<C64> {
    let t = s.tanh();
    let mut v = DVector::zeros(dim);
    let mut amp = 1.0 / s.cosh().sqrt();
    let mut m = 0usize;
    loop {
        let n = 2 * m;
        if n >= dim {
            break;
        }
        v[n] = C64::from(amp);
        // ratio c_{2m+2} / c_{2m} = -tanh(s) sqrt((2m+1)(2m+2)) / (2m+2) ... in
        // the sqrt((2m)!)/(2^m m!) normalization
        let nf = n as f64;
        amp *= -t * ((nf + 1.0) * (nf + 2.0)).sqrt() / (nf + 2.0);
        m += 1;
    }
    v
}

/// Phase rotation `exp(-i phi n_hat)`; Heisenberg action
/// `x -> cos(phi) x + sin(phi) p`, matching the symplectic rotation blocks.
pub fn rotation_phases(phi: f64, dim: usize) -> Vec<C64> {
    (0..dim)
        .map(|n| C64::from_polar(1.0, -(n as f64) * phi))
        .collect()
}

/// Displacement by `dx` in x and `dp` in p.
pub fn displacement_gate(dx: f64, dp: f64, dim: usize) -> DMatrix<C64> {
    let beta = C64::new(dx, dp) / C64::from(2f64.sqrt());
    let a = to_complex(&annihilation(dim));
    let gen = a.adjoint() * beta - &a * beta.conj();
    expm(&gen)
}

/// Cubic phase gate `exp(-i chi x^3 / 3)`, exponentiated through the spectral
/// decomposition of the (real symmetric) truncated `x` operator.
pub fn cubic_gate(chi: f64, dim: usize) -> DMatrix<C64> {
    let x = x_op(dim);
    let eig = nalgebra::SymmetricEigen::new(x);
    let mut u = DMatrix::<C64>::zeros(dim, dim);
    for k in 0..dim {
        let lam = eig.eigenvalues[k];
        let phase = C64::from_polar(1.0, -chi * lam * lam * lam / 3.0);
        let col = eig.eigenvectors.column(k);
        for i in 0..dim {
            for j in 0..dim {
                u[(i, j)] += phase * col[i] * col[j];
            }
        }
    }
    u
}

/// Occupation-probability weights of a thermal state carrying `n` units of
/// added vacuum noise (mean photon number `n/2`), truncated once the residual
/// mass falls below `tol`.
pub fn thermal_weights(n: f64, tol: f64) -> Vec<f64> {
    let nbar = n / 2.0;
    if nbar <= 0.0 {
        return vec![1.0];
    }
    let q = nbar / (1.0 + nbar);
    let mut w = Vec::new();
    let mut wk = 1.0 / (1.0 + nbar);
    let mut acc = 0.0;
    while 1.0 - acc > tol && w.len() < 256 {
        w.push(wk);
        acc += wk;
        wk *= q;
    }
    w
}

/// Exact beam-splitter rotations within each total-photon-number sector.
/// `sector(m)` rotates the basis `|k, M-k>` (k photons in the first mode of
/// the pair) by `exp(theta (a_0^dag a_1 - a_0 a_1^dag))`, so
/// `x_0 -> cos(theta) x_0 + sin(theta) x_1`.
pub struct BeamSplitterSectors {
    sectors: Vec<DMatrix<f64>>,
}

impl BeamSplitterSectors {
    pub fn new(theta: f64, m_max: usize) -> Self {
        use rayon::prelude::*;
        // the sector generator is antisymmetric tridiagonal; conjugating by
        // diag(i^k) turns it into i T with T real symmetric tridiagonal, so
        // one real eigendecomposition per sector replaces the Pade series
        let sectors: Vec<DMatrix<f64>> = (0..=m_max)
            .into_par_iter()
            .map(|m| {
                let dim = m + 1;
                let mut t = DMatrix::<f64>::zeros(dim, dim);
                for k in 0..m {
                    let c = theta * ((k + 1) as f64 * (m - k) as f64).sqrt();
                    t[(k + 1, k)] = c;
                    t[(k, k + 1)] = c;
                }
                let eig = nalgebra::SymmetricEigen::new(t);
                let phases: Vec<C64> = eig
                    .eigenvalues
                    .iter()
                    .map(|&l| C64::from_polar(1.0, l))
                    .collect();
                let v = &eig.eigenvectors;
                let mut o = DMatrix::<f64>::zeros(dim, dim);
                for a in 0..dim {
                    for b in 0..dim {
                        let mut acc = C64::default();
                        for j in 0..dim {
                            acc += phases[j] * v[(a, j)] * v[(b, j)];
                        }
                        // i^(b - a) restores the original basis phases
                        let q = (4 + (b as i64 - a as i64).rem_euclid(4)) % 4;
                        let rot = match q {
                            0 => acc,
                            1 => C64::new(-acc.im, acc.re),
                            2 => -acc,
                            _ => C64::new(acc.im, -acc.re),
                        };
                        o[(a, b)] = rot.re;
                    }
                }
                o
            })
            .collect();
        BeamSplitterSectors { sectors }
    }

    /// Process-wide cache: the same transmissivity and size are requested
    /// over and over by grids, sweeps and tests.
    pub fn cached(theta: f64, m_max: usize) -> std::sync::Arc<Self> {
        use std::collections::HashMap;
        use std::sync::{Arc, Mutex, OnceLock};
        type Cache = Mutex<HashMap<(u64, usize), Arc<BeamSplitterSectors>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (theta.to_bits(), m_max);
        if let Some(hit) = cache.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let built = Arc::new(BeamSplitterSectors::new(theta, m_max));
        cache.lock().unwrap().insert(key, built.clone());
        built
    }

    pub fn sector(&self, m: usize) -> &DMatrix<f64> {
        &self.sectors[m]
    }

    pub fn m_max(&self) -> usize {
        self.sectors.len() - 1
    }
}

/// Applies the sector beam splitter to the leading two modes of a tensor with
/// dimensions `(d0, d1, d_rest)` stored row-major (last index fastest). The
/// output pair grows to `d0 + d1 - 1` per mode, which keeps the rotation
/// exact; callers truncate afterwards if they need to.
pub fn bs_apply_pair(
    data: &[C64],
    d0: usize,
    d1: usize,
    d_rest: usize,
    bs: &BeamSplitterSectors,
) -> (Vec<C64>, usize) {
    let m_max = d0 + d1 - 2;
    assert!(bs.m_max() >= m_max, "sector table too small");
    let d_out = d0 + d1 - 1;
    let mut out = vec![C64::default(); d_out * d_out * d_rest];
    let mut gathered = vec![C64::default(); m_max + 1];
    for m in 0..=m_max {
        let o = bs.sector(m);
        for rest in 0..d_rest {
            let kmin = m.saturating_sub(d1 - 1);
            let kmax = m.min(d0 - 1);
            for slot in gathered.iter_mut().take(m + 1) {
                *slot = C64::default();
            }
            for k in kmin..=kmax {
                gathered[k] = data[(k * d1 + (m - k)) * d_rest + rest];
            }
            for knew in 0..=m {
                let mut acc = C64::default();
                for k in kmin..=kmax {
                    acc += C64::from(o[(knew, k)]) * gathered[k];
                }
                out[(knew * d_out + (m - knew)) * d_rest + rest] = acc;
            }
        }
    }
    (out, d_out)
}

/// Applies a (possibly rectangular) single-mode operator to mode `mode` of a
/// tensor with dimensions `dims`.
pub fn apply_single_mode(
    data: &[C64],
    dims: &[usize],
    mode: usize,
    op: &DMatrix<C64>,
) -> (Vec<C64>, Vec<usize>) {
    let d_old = dims[mode];
    let d_new = op.nrows();
    assert_eq!(op.ncols(), d_old);
    let stride: usize = dims[mode + 1..].iter().product();
    let outer: usize = dims[..mode].iter().product();
    let mut new_dims = dims.to_vec();
    new_dims[mode] = d_new;
    let mut out = vec![C64::default(); outer * d_new * stride];
    for o in 0..outer {
        for s in 0..stride {
            for i in 0..d_new {
                let mut acc = C64::default();
                for j in 0..d_old {
                    acc += op[(i, j)] * data[(o * d_old + j) * stride + s];
                }
                out[(o * d_new + i) * stride + s] = acc;
            }
        }
    }
    (out, new_dims)
}

/// Multiplies mode `mode` elementwise by per-level phases (diagonal gate).
pub fn apply_phases(data: &mut [C64], dims: &[usize], mode: usize, phases: &[C64]) {
    let d = dims[mode];
    assert_eq!(phases.len(), d);
    let stride: usize = dims[mode + 1..].iter().product();
    let outer: usize = dims[..mode].iter().product();
    for o in 0..outer {
        for k in 0..d {
            for s in 0..stride {
                data[(o * d + k) * stride + s] *= phases[k];
            }
        }
    }
}
