//! Exact probabilistic backend: the cluster modes (A, B) and the auxiliary
//! mode Q in one truncated Fock space, homodyne conditioning on a grid of
//! measurement outcomes, feedforward displacements, loss, and post-selected
//! aggregation.
//!
//! Mixed inputs (thermal clusters, lossy ancillas) are carried as weighted
//! ensembles of pure components, so the three-mode object never materializes
//! a density matrix. The measurement beam splitter is applied exactly within
//! each total-photon sector and the pair dimensions grow to hold the result;
//! truncation happens only where a tail check bounds the discarded mass.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::ops::{self, BeamSplitterSectors};
use super::state::{FockDensity, FockRepr};
use crate::ancilla::AncillaMoments;
use crate::error::{Error, Result};
use crate::gaussian::{build_cluster, ClusterParams};
use crate::metrics;
use crate::moments::{Scheme, SchemeConfig};

/// Weighted pure components over a common mode layout (row-major,
/// last mode fastest).
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub dims: Vec<usize>,
    pub comps: Vec<(f64, Vec<C64>)>,
}

impl Ensemble {
    pub fn total_weight(&self) -> f64 {
        self.comps
            .iter()
            .map(|(w, v)| w * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    fn map_mode(&self, mode: usize, op: &DMatrix<C64>) -> Ensemble {
        let mut dims = self.dims.clone();
        let comps = self
            .comps
            .iter()
            .map(|(w, v)| {
                let (out, nd) = ops::apply_single_mode(v, &self.dims, mode, op);
                dims = nd;
                (*w, out)
            })
            .collect();
        Ensemble {
            dims: dims.clone(),
            comps,
        }
    }

    fn phase_mode(&mut self, mode: usize, phases: &[C64]) {
        for (_, v) in &mut self.comps {
            ops::apply_phases(v, &self.dims, mode, phases);
        }
    }

    /// Keeps the leading `new_dim` levels of `mode`, returning the discarded
    /// mass (weighted, relative to the total weight).
    fn truncate_mode(&mut self, mode: usize, new_dim: usize) -> f64 {
        let d = self.dims[mode];
        if new_dim >= d {
            return 0.0;
        }
        let total = self.total_weight();
        let stride: usize = self.dims[mode + 1..].iter().product();
        let outer: usize = self.dims[..mode].iter().product();
        let mut discarded = 0.0;
        for (w, v) in &mut self.comps {
            let mut out = vec![C64::default(); outer * new_dim * stride];
            for o in 0..outer {
                for k in 0..d {
                    for s in 0..stride {
                        let val = v[(o * d + k) * stride + s];
                        if k < new_dim {
                            out[(o * new_dim + k) * stride + s] = val;
                        } else {
                            discarded += *w * val.norm_sqr();
                        }
                    }
                }
            }
            *v = out;
        }
        self.dims[mode] = new_dim;
        discarded / total
    }

    /// Weyl-symmetric first and second quadrature moments of a two-mode
    /// ensemble, as a covariance matrix and mean in `(x_0, p_0, x_1, p_1)`.
    pub fn two_mode_gaussian_moments(&self) -> (Matrix4<f64>, Vector4<f64>) {
        assert_eq!(self.dims.len(), 2);
        let (d0, d1) = (self.dims[0], self.dims[1]);
        let x0 = ops::x_op(d0).map(C64::from);
        let p0 = ops::p_op(d0);
        let x1 = ops::x_op(d1).map(C64::from);
        let p1 = ops::p_op(d1);
        let ops_list: [(usize, &DMatrix<C64>); 4] = [(0, &x0), (0, &p0), (1, &x1), (1, &p1)];
        let weight = self.total_weight();
        let mut firsts = [0.0f64; 4];
        let mut seconds = [[0.0f64; 4]; 4];
        for (w, v) in &self.comps {
            let applied: Vec<Vec<C64>> = ops_list
                .iter()
                .map(|(mode, op)| ops::apply_single_mode(v, &self.dims, *mode, op).0)
                .collect();
            for i in 0..4 {
                let mut acc = C64::default();
                for (a, b) in v.iter().zip(&applied[i]) {
                    acc += a.conj() * b;
                }
                firsts[i] += w * acc.re;
                for j in i..4 {
                    let mut acc = C64::default();
                    for (a, b) in applied[i].iter().zip(&applied[j]) {
                        acc += a.conj() * b;
                    }
                    seconds[i][j] += w * acc.re;
                }
            }
        }
        let mut mean = Vector4::zeros();
        for i in 0..4 {
            mean[i] = firsts[i] / weight;
        }
        let mut gamma = Matrix4::zeros();
        for i in 0..4 {
            for j in i..4 {
                let sym = seconds[i][j] / weight - mean[i] * mean[j];
                gamma[(i, j)] = sym;
                gamma[(j, i)] = sym;
            }
        }
        (gamma, mean)
    }
}

/// Fock levels needed for a squeezed thermal mode with variance factor
/// `exp(|r|)` to hold its tail below `tol`.
pub fn required_cutoff(r: f64, n: f64, tol: f64) -> usize {
    let lam = (r.abs() / 2.0).tanh();
    let base = if lam < 1e-9 {
        6
    } else {
        (tol.ln() / (2.0 * lam.ln())).ceil() as usize * 2 + 6
    };
    let thermal = ops::thermal_weights(n, tol).len();
    base + thermal + 4
}

const CLUSTER_TAIL_TOL: f64 = 1e-6;

/// Applies the cluster-generation circuit in Fock space to the thermal input
/// components: squeezers, mode-A rotation, beam splitter, output rotations
/// and x displacements. Modes are `(A, B)`.
pub fn cluster_fock_ensemble(
    params: &ClusterParams,
    s_max_db: f64,
    cutoff: usize,
) -> Result<Ensemble> {
    params.validate(s_max_db)?;
    let w_th = ops::thermal_weights(params.n, 1e-12);
    let d_work =
        required_cutoff(params.r1.abs().max(params.r2.abs()), params.n, 1e-10).max(cutoff + 6);

    let sq_a = ops::squeeze_gate(params.r1 / 2.0, d_work);
    let sq_b = ops::squeeze_gate(-params.r2 / 2.0, d_work);
    let rot_phi = ops::rotation_phases(params.phi, d_work);

    // per-mode single-mode stages applied to each thermal component
    let mut mode_a: Vec<DVector<C64>> = Vec::new();
    let mut mode_b: Vec<DVector<C64>> = Vec::new();
    for j in 0..w_th.len() {
        let mut e = DVector::<C64>::zeros(d_work);
        e[j] = C64::from(1.0);
        let mut va = &sq_a * &e;
        for n in 0..d_work {
            va[n] *= rot_phi[n];
        }
        mode_a.push(va);
        mode_b.push(&sq_b * &e);
    }

    let theta_c = params.t_c.clamp(0.0, 1.0).acos();
    let bs = BeamSplitterSectors::cached(theta_c, 2 * d_work - 2);
    let mut comps = Vec::new();
    let mut dims_out = vec![0usize, 0];
    for (j, wj) in w_th.iter().enumerate() {
        for (k, wk) in w_th.iter().enumerate() {
            let w = wj * wk;
            if w < 1e-12 {
                continue;
            }
            let mut joint = vec![C64::default(); d_work * d_work];
            for a in 0..d_work {
                if mode_a[j][a].norm_sqr() < 1e-32 {
                    continue;
                }
                for b in 0..d_work {
                    joint[a * d_work + b] = mode_a[j][a] * mode_b[k][b];
                }
            }
            let (mixed, d_out) = ops::bs_apply_pair(&joint, d_work, d_work, 1, &bs);
            comps.push((w, mixed));
            dims_out = vec![d_out, d_out];
        }
    }
    let mut ens = Ensemble {
        dims: dims_out,
        comps,
    };
    ens.phase_mode(0, &ops::rotation_phases(params.phi1, ens.dims[0]));
    ens.phase_mode(1, &ops::rotation_phases(params.phi2, ens.dims[1]));
    for (mode, alpha) in [(0usize, params.alpha1), (1usize, params.alpha2)] {
        if alpha != 0.0 {
            let pad = (alpha.abs() * alpha.abs() * 0.5 + 6.0 * alpha.abs()).ceil() as usize + 4;
            let d = ens.dims[mode] + pad;
            let mut embed = DMatrix::<C64>::zeros(d, ens.dims[mode]);
            for i in 0..ens.dims[mode] {
                embed[(i, i)] = C64::from(1.0);
            }
            ens = ens.map_mode(mode, &embed);
            let disp = ops::displacement_gate(alpha, 0.0, d);
            ens = ens.map_mode(mode, &disp);
        }
    }
    let mut tail = 0.0;
    tail += ens.truncate_mode(0, cutoff);
    tail += ens.truncate_mode(1, cutoff);
    if tail > CLUSTER_TAIL_TOL {
        return Err(Error::TruncationTail {
            tail,
            tol: CLUSTER_TAIL_TOL,
            cutoff,
        });
    }
    Ok(ens)
}

/// Fock representation of the cluster state, checked against the Gaussian
/// covariance it must reproduce.
pub fn gaussian_to_fock(
    params: &ClusterParams,
    s_max_db: f64,
    cutoff: usize,
) -> Result<FockDensity> {
    let ens = cluster_fock_ensemble(params, s_max_db, cutoff)?;
    let want = build_cluster(params, s_max_db)?;
    let (gamma, mean) = ens.two_mode_gaussian_moments();
    let gamma_err = (gamma - want.gamma).abs().max();
    let mean_err = (mean - want.mean).abs().max();
    if gamma_err > 1e-6 || mean_err > 1e-6 {
        return Err(Error::Invalid(format!(
            "Fock cluster moments deviate from the Gaussian target: \
             max covariance error {gamma_err:.2e}, mean error {mean_err:.2e}"
        )));
    }
    if ens.comps.len() == 1 {
        let v = DVector::from_vec(ens.comps[0].1.clone());
        Ok(FockDensity::pure(ens.dims.clone(), v))
    } else {
        let d: usize = ens.dims.iter().product();
        let mut rho = DMatrix::<C64>::zeros(d, d);
        for (w, v) in &ens.comps {
            let dv = DVector::from_vec(v.clone());
            rho += (&dv * dv.adjoint()) * C64::from(*w);
        }
        Ok(FockDensity::mixed(ens.dims.clone(), rho))
    }
}

/// Standard bosonic pure-loss channel with transmission `eta` on a
/// single-mode state.
pub fn loss_channel(state: &FockDensity, eta: f64) -> Result<FockDensity> {
    if state.n_modes() != 1 {
        return Err(Error::Invalid("loss channel acts on a single mode".into()));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::OutOfRange {
            name: "eta",
            value: eta,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let d = state.dims[0];
    let rho_in = match &state.repr {
        FockRepr::Pure(v) => v * v.adjoint(),
        FockRepr::Mixed(r) => r.clone(),
    };
    let mut rho = DMatrix::<C64>::zeros(d, d);
    // K_k[m, n] = sqrt(C(n, k) eta^(n-k) (1-eta)^k) delta_{m, n-k}
    for k in 0..d {
        let mut kraus = DMatrix::<C64>::zeros(d, d);
        let mut any = false;
        for n in k..d {
            let mut log_c = 0.0;
            for j in 0..k {
                log_c += ((n - j) as f64).ln() - ((j + 1) as f64).ln();
            }
            let amp2 = log_c.exp() * eta.powi((n - k) as i32) * (1.0 - eta).powi(k as i32);
            if amp2 > 0.0 {
                kraus[(n - k, n)] = C64::from(amp2.sqrt());
                any = true;
            }
        }
        if any {
            rho += &kraus * &rho_in * kraus.adjoint();
        }
    }
    Ok(FockDensity::mixed(vec![d], rho))
}

fn ancilla_ensemble(state: &FockDensity) -> Result<Ensemble> {
    if state.n_modes() != 1 {
        return Err(Error::Invalid("auxiliary state must be single-mode".into()));
    }
    let comps = match &state.repr {
        FockRepr::Pure(v) => vec![(1.0, v.iter().cloned().collect::<Vec<C64>>())],
        FockRepr::Mixed(r) => {
            let eig = nalgebra::SymmetricEigen::new(r.clone());
            let mut comps = Vec::new();
            for k in 0..eig.eigenvalues.len() {
                let lam = eig.eigenvalues[k];
                if lam > 1e-12 {
                    let col: Vec<C64> = eig.eigenvectors.column(k).iter().cloned().collect();
                    comps.push((lam, col));
                }
            }
            comps
        }
    };
    Ok(Ensemble {
        dims: vec![state.dims[0]],
        comps,
    })
}

/// The joint state of modes `(Q, A, B)` after the measurement beam splitter,
/// ready for homodyne conditioning.
pub struct JointState {
    pub cfg: SchemeConfig,
    dims: [usize; 3],
    comps: Vec<(f64, Vec<C64>)>,
}

impl JointState {
    /// Combines cluster and auxiliary ensembles and applies the measurement
    /// beam splitter between Q and A exactly (sector by sector; the pair
    /// dimensions grow to `d_q + d_a - 1`).
    pub fn build(cluster: &Ensemble, ancilla: &FockDensity, cfg: &SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.scheme == Scheme::IdealCubic {
            return Err(Error::Invalid(
                "the Fock pipeline implements the teleportation schemes".into(),
            ));
        }
        let anc = ancilla_ensemble(ancilla)?;
        let (dq, da, db) = (anc.dims[0], cluster.dims[0], cluster.dims[1]);
        // x_Q -> t x_Q - r x_A and x_A -> t x_A + r x_Q
        let theta = -cfg.t.clamp(0.0, 1.0).acos();
        let bs = BeamSplitterSectors::cached(theta, dq + da - 2);
        let mut comps = Vec::new();
        let mut d_pair = 0;
        for (wq, vq) in &anc.comps {
            for (wc, vc) in &cluster.comps {
                let mut joint = vec![C64::default(); dq * da * db];
                for q in 0..dq {
                    if vq[q].norm_sqr() < 1e-30 {
                        continue;
                    }
                    for ab in 0..da * db {
                        joint[q * da * db + ab] = vq[q] * vc[ab];
                    }
                }
                let (mixed, d_out) = ops::bs_apply_pair(&joint, dq, da, db, &bs);
                d_pair = d_out;
                comps.push((wq * wc, mixed));
            }
        }
        Ok(JointState {
            cfg: *cfg,
            dims: [d_pair, d_pair, db],
            comps,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.dims[2]
    }

    pub fn n_components(&self) -> usize {
        self.comps.len()
    }

    /// Measurement-dependent rotation angle of the p homodyne basis.
    pub fn rotation_angle(&self, m_x: f64) -> f64 {
        -(2f64.sqrt() * self.cfg.chi * m_x).atan()
    }

    /// Contracts mode Q with the x eigenbra at `m_x`; the result is a
    /// two-mode (A, B) ensemble reused across the p grid.
    fn contract_q(&self, m_x: f64) -> Result<Vec<(f64, Vec<C64>)>> {
        let [dq, da, db] = self.dims;
        let bra = ops::quadrature_bra(m_x, 0.0, dq)?;
        Ok(self
            .comps
            .iter()
            .map(|(w, v)| {
                let mut out = vec![C64::default(); da * db];
                for (q, &bq) in bra.iter().enumerate().take(dq) {
                    if bq.norm_sqr() < 1e-60 {
                        continue;
                    }
                    let base = q * da * db;
                    for ab in 0..da * db {
                        out[ab] += bq * v[base + ab];
                    }
                }
                (*w, out)
            })
            .collect())
    }

    fn contract_a(
        &self,
        slices: &[(f64, Vec<C64>)],
        m_x: f64,
        m_p: f64,
    ) -> Result<Vec<(f64, Vec<C64>)>> {
        let [_, da, db] = self.dims;
        let angle = std::f64::consts::FRAC_PI_2 + self.rotation_angle(m_x);
        let bra = ops::quadrature_bra(m_p, angle, da)?;
        Ok(slices
            .iter()
            .map(|(w, t)| {
                let mut out = vec![C64::default(); db];
                for a in 0..da {
                    let ba = bra[a];
                    for b in 0..db {
                        out[b] += ba * t[a * db + b];
                    }
                }
                (*w, out)
            })
            .collect())
    }
}

/// Unnormalized conditional state of mode B for one outcome cell, together
/// with the feedforward displacement that completes the protocol.
pub struct ConditionalState {
    pub m_x: f64,
    pub m_p: f64,
    /// Probability density of the outcome pair.
    pub density: f64,
    pub dx: f64,
    pub dp: f64,
    comps: Vec<(f64, Vec<C64>)>,
    dim: usize,
}

impl ConditionalState {
    /// Weyl-symmetric moments of the conditional state after feedforward.
    /// The displacement is applied as an exact polynomial shift.
    pub fn moments(&self, mops: &MomentOps) -> Result<AncillaMoments> {
        if self.density <= 0.0 {
            return Err(Error::Invalid("zero-probability cell".into()));
        }
        let raw = mops.accumulate(&self.comps, self.density);
        Ok(raw.displaced(self.dx, self.dp))
    }

    /// Normalized density matrix after feedforward, materialized on a padded
    /// space so the displacement operator stays faithful.
    pub fn density_matrix(&self) -> Result<FockDensity> {
        if self.density <= 0.0 {
            return Err(Error::Invalid("zero-probability cell".into()));
        }
        let shift = (self.dx.abs() + self.dp.abs()) * 0.5;
        let pad = (shift * shift + 6.0 * shift).ceil() as usize + 6;
        let d = self.dim + pad;
        let disp = ops::displacement_gate(self.dx, self.dp, d);
        let mut rho = DMatrix::<C64>::zeros(d, d);
        for (w, v) in &self.comps {
            let mut padded = DVector::<C64>::zeros(d);
            for i in 0..self.dim {
                padded[i] = v[i];
            }
            let moved = &disp * padded;
            rho += (&moved * moved.adjoint()) * C64::from(*w);
        }
        rho /= C64::from(self.density);
        Ok(FockDensity::mixed(vec![d], rho))
    }
}

/// Precomputed single-mode operators for cell moment evaluation.
pub struct MomentOps {
    dim: usize,
    x: DMatrix<C64>,
    p: DMatrix<C64>,
    x2: DMatrix<C64>,
    p2: DMatrix<C64>,
    x3: DMatrix<C64>,
    x4: DMatrix<C64>,
    sym_xp: DMatrix<C64>,
    sym_x2p: DMatrix<C64>,
}

impl MomentOps {
    pub fn new(dim: usize) -> Self {
        let dop = dim + 4;
        let x = ops::x_op(dop).map(C64::from);
        let p = ops::p_op(dop);
        let x2 = &x * &x;
        let p2 = &p * &p;
        let x3 = &x2 * &x;
        let x4 = &x2 * &x2;
        let sym_xp = (&x * &p + &p * &x) * C64::from(0.5);
        let sym_x2p = (&x2 * &p + &p * &x2) * C64::from(0.5);
        MomentOps {
            dim,
            x,
            p,
            x2,
            p2,
            x3,
            x4,
            sym_xp,
            sym_x2p,
        }
    }

    fn accumulate(&self, comps: &[(f64, Vec<C64>)], density: f64) -> AncillaMoments {
        let mut e = [0.0f64; 8];
        let ops_list = [
            &self.x,
            &self.p,
            &self.x2,
            &self.p2,
            &self.x3,
            &self.x4,
            &self.sym_xp,
            &self.sym_x2p,
        ];
        for (w, v) in comps {
            for (slot, op) in e.iter_mut().zip(ops_list) {
                let mut acc = C64::default();
                for i in 0..self.dim {
                    let mut row = C64::default();
                    for j in 0..self.dim {
                        row += op[(i, j)] * v[j];
                    }
                    acc += v[i].conj() * row;
                }
                *slot += w * acc.re;
            }
        }
        for slot in &mut e {
            *slot /= density;
        }
        let [ex, ep, ex2, ep2, ex3, ex4, exp_sym, ex2p_sym] = e;
        AncillaMoments {
            mean_x: ex,
            mean_p: ep,
            var_x: ex2 - ex * ex,
            var_p: ep2 - ep * ep,
            cov_xp: exp_sym - ex * ep,
            ex2,
            var_x2: ex4 - ex2 * ex2,
            cov_x2_p: ex2p_sym - ex2 * ep,
            cov_x_x2: ex3 - ex * ex2,
        }
    }
}

/// Conditions the joint state on one outcome pair: Born probability density
/// and the conditional state of B after feedforward.
pub fn condition(joint: &JointState, m_x: f64, m_p: f64) -> Result<ConditionalState> {
    let slices = joint.contract_q(m_x)?;
    let vecs = joint.contract_a(&slices, m_x, m_p)?;
    let density: f64 = vecs
        .iter()
        .map(|(w, v)| w * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum();
    Ok(ConditionalState {
        m_x,
        m_p,
        density,
        dx: joint.cfg.d_f * m_x,
        dp: joint.cfg.g_f * m_p,
        comps: vecs,
        dim: joint.output_dim(),
    })
}

/// One cell of the measurement grid.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub m_x: f64,
    pub m_p: f64,
    /// Probability mass of the cell (density times cell area).
    pub probability: f64,
    /// Moments of the conditional output state, feedforward included.
    pub moments: AncillaMoments,
}

#[derive(Debug, Clone)]
pub struct MeasurementGrid {
    pub dx: f64,
    pub dp: f64,
    pub range_x: f64,
    pub range_p: f64,
    pub cells: Vec<GridCell>,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub target_mass: f64,
    /// Half-width of each axis in units of the marginal standard deviation.
    pub sigmas: f64,
    /// Grid step in units of the marginal standard deviation.
    pub step_frac: f64,
    pub max_refine: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            target_mass: 0.999,
            sigmas: 6.0,
            step_frac: 0.125,
            max_refine: 4,
        }
    }
}

/// Standard deviations and means of the two homodyne outcome distributions,
/// from single-mode moments of the post-beam-splitter modes. The p port is
/// measured in a rotated basis, so its spread is bounded by the largest
/// quadrature variance of that mode.
pub fn marginal_scales(joint: &JointState) -> (f64, f64, f64, f64) {
    let [dq, da, _] = joint.dims;
    let xq = ops::x_op(dq).map(C64::from);
    let xa = ops::x_op(da).map(C64::from);
    let pa = ops::p_op(da);
    let weight: f64 = joint
        .comps
        .iter()
        .map(|(w, v)| w * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum();
    let (mut ex, mut ex2) = (0.0, 0.0);
    let (mut ea_x, mut ea_p, mut ea_x2, mut ea_p2, mut ea_xp) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (w, v) in &joint.comps {
        let (vx, _) = ops::apply_single_mode(v, &joint.dims, 0, &xq);
        let (va_x, _) = ops::apply_single_mode(v, &joint.dims, 1, &xa);
        let (va_p, _) = ops::apply_single_mode(v, &joint.dims, 1, &pa);
        let dot =
            |a: &[C64], b: &[C64]| -> C64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
        ex += w * dot(v, &vx).re;
        ex2 += w * dot(&vx, &vx).re;
        ea_x += w * dot(v, &va_x).re;
        ea_p += w * dot(v, &va_p).re;
        ea_x2 += w * dot(&va_x, &va_x).re;
        ea_p2 += w * dot(&va_p, &va_p).re;
        ea_xp += w * dot(&va_x, &va_p).re;
    }
    for v in [
        &mut ex, &mut ex2, &mut ea_x, &mut ea_p, &mut ea_x2, &mut ea_p2, &mut ea_xp,
    ] {
        *v /= weight;
    }
    let sigma_x = (ex2 - ex * ex).max(1e-6).sqrt();
    let var_x1 = ea_x2 - ea_x * ea_x;
    let var_p1 = ea_p2 - ea_p * ea_p;
    let cov1 = ea_xp - ea_x * ea_p;
    let half = 0.5 * (var_x1 + var_p1);
    let lam_max = half + (0.25 * (var_x1 - var_p1).powi(2) + cov1 * cov1).sqrt();
    // rotated means stay within |(ea_x, ea_p)|
    let sigma_p = lam_max.max(1e-6).sqrt();
    let cp_reach = (ea_x * ea_x + ea_p * ea_p).sqrt();
    let cp = if cp_reach < 1e-12 { 0.0 } else { ea_p };
    (ex, sigma_x, cp, sigma_p)
}

/// Conditions the joint state on every cell of an adaptive grid. The grid
/// expands until the collected probability mass reaches the target.
pub fn build_grid(joint: &JointState, spec: &GridSpec) -> Result<MeasurementGrid> {
    let (cx, mut sx, cp, mut sp) = marginal_scales(joint);
    let mops = MomentOps::new(joint.output_dim());
    // the homodyne projectors are only faithful inside the classically
    // allowed region of the cutoff; the density there is negligible whenever
    // the cutoff fits the state, and the mass check below validates that
    let reach_x = ops::quadrature_reach(joint.dims[0]) - 0.25;
    let reach_p = ops::quadrature_reach(joint.dims[1]) - 0.25;
    let mut attempt = 0;
    loop {
        let dx = sx * spec.step_frac;
        let dp = sp * spec.step_frac;
        let half_x = (spec.sigmas * sx).min(reach_x - cx.abs());
        let half_p = (spec.sigmas * sp).min(reach_p - cp.abs());
        if half_x <= 0.0 || half_p <= 0.0 {
            return Err(Error::GridMass {
                mass: 0.0,
                target: spec.target_mass,
                attempts: attempt,
            });
        }
        let nx = (2.0 * half_x / dx).ceil() as usize;
        let np = (2.0 * half_p / dp).ceil() as usize;
        let xs: Vec<f64> = (0..nx)
            .map(|i| cx + ((i as f64 + 0.5) - nx as f64 / 2.0) * dx)
            .collect();
        let ps: Vec<f64> = (0..np)
            .map(|i| cp + ((i as f64 + 0.5) - np as f64 / 2.0) * dp)
            .collect();
        let columns: Result<Vec<Vec<GridCell>>> = xs
            .par_iter()
            .map(|&m_x| {
                let slices = joint.contract_q(m_x)?;
                let mut col = Vec::with_capacity(np);
                for &m_p in &ps {
                    let vecs = joint.contract_a(&slices, m_x, m_p)?;
                    let density: f64 = vecs
                        .iter()
                        .map(|(w, v)| w * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
                        .sum();
                    let probability = density * dx * dp;
                    if probability <= 0.0 {
                        continue;
                    }
                    let raw = mops.accumulate(&vecs, density);
                    let moments = raw.displaced(joint.cfg.d_f * m_x, joint.cfg.g_f * m_p);
                    col.push(GridCell {
                        m_x,
                        m_p,
                        probability,
                        moments,
                    });
                }
                Ok(col)
            })
            .collect();
        let cells: Vec<GridCell> = columns?.into_iter().flatten().collect();
        let mass: f64 = cells.iter().map(|c| c.probability).sum();
        if mass >= spec.target_mass {
            return Ok(MeasurementGrid {
                dx,
                dp,
                range_x: half_x,
                range_p: half_p,
                cells,
                mass,
            });
        }
        attempt += 1;
        if attempt > spec.max_refine {
            return Err(Error::GridMass {
                mass,
                target: spec.target_mass,
                attempts: attempt,
            });
        }
        sx *= 1.35;
        sp *= 1.35;
    }
}

/// How post-selected cells combine into the figure of merit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    /// Mix the conditional states, then evaluate the mixture's xi.
    States,
    /// Average the per-cell xi values.
    Xi,
}

impl AggregationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AggregationMode::States => "aggregate-states",
            AggregationMode::Xi => "aggregate-xi",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PostSelection {
    pub mode: AggregationMode,
    /// The cubicity at which every cell (and the aggregate) is evaluated.
    pub z_query: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub probability: f64,
    pub xi: f64,
}

/// Post-selection curve: cells sorted by their xi ascending, aggregated over
/// every prefix. The averaged-xi mode is non-decreasing by construction; the
/// mixed-state mode is monotone only up to small decrements caused by cells
/// whose means recentre the mixture, so the largest observed decrement is
/// reported for the caller's tolerance check.
pub struct SelectionCurve {
    pub points: Vec<CurvePoint>,
    /// Largest xi decrement between consecutive prefixes (0 when monotone).
    pub max_decrement: f64,
}

impl SelectionCurve {
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.max_decrement <= tol
    }
}

impl SelectionCurve {
    /// xi of the smallest prefix whose mass reaches `p` (cells are included
    /// whole, matching the cell-wise acceptance region).
    pub fn at_probability(&self, p: f64) -> CurvePoint {
        for pt in &self.points {
            if pt.probability >= p {
                return *pt;
            }
        }
        *self.points.last().expect("curve is never empty")
    }

    pub fn full_acceptance(&self) -> CurvePoint {
        *self.points.last().expect("curve is never empty")
    }

    /// Largest probability at which the curve is still below `threshold`
    /// (linear interpolation between prefix points); None when it never is.
    pub fn crossing(&self, threshold: f64) -> Option<f64> {
        let mut prev: Option<CurvePoint> = None;
        for pt in &self.points {
            if pt.xi >= threshold {
                return match prev {
                    Some(q) if pt.xi > q.xi => {
                        let t = (threshold - q.xi) / (pt.xi - q.xi);
                        Some(q.probability + t * (pt.probability - q.probability))
                    }
                    _ => Some(pt.probability),
                };
            }
            prev = Some(*pt);
        }
        None
    }
}

pub fn postselect(grid: &MeasurementGrid, sel: &PostSelection) -> Result<SelectionCurve> {
    let z = sel.z_query;
    let mut order: Vec<(f64, &GridCell)> = grid
        .cells
        .iter()
        .map(|c| {
            let xi = metrics::xi_from_moments(&c.moments, z)?.xi;
            Ok((xi, c))
        })
        .collect::<Result<Vec<_>>>()?;
    order.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.m_x.partial_cmp(&b.1.m_x).unwrap())
            .then(a.1.m_p.partial_cmp(&b.1.m_p).unwrap())
    });

    let mut points = Vec::with_capacity(order.len());
    let mut mass = 0.0;
    match sel.mode {
        AggregationMode::Xi => {
            let mut acc = 0.0;
            for (xi, c) in &order {
                mass += c.probability;
                acc += c.probability * xi;
                points.push(CurvePoint {
                    probability: mass,
                    xi: acc / mass,
                });
            }
        }
        AggregationMode::States => {
            // raw operator moments average linearly over the mixture
            let (mut ep, mut ep2, mut ex2, mut ex4, mut ex2p) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (_, c) in &order {
                let m = &c.moments;
                let w = c.probability;
                mass += w;
                ep += w * m.mean_p;
                ep2 += w * (m.var_p + m.mean_p * m.mean_p);
                ex2 += w * m.ex2;
                ex4 += w * (m.var_x2 + m.ex2 * m.ex2);
                ex2p += w * (m.cov_x2_p + m.ex2 * m.mean_p);
                let (aep, aep2, aex2, aex4, aex2p) =
                    (ep / mass, ep2 / mass, ex2 / mass, ex4 / mass, ex2p / mass);
                let var_p = aep2 - aep * aep;
                let var_x2 = aex4 - aex2 * aex2;
                let cov = aex2p - aex2 * aep;
                let num = var_p + 2.0 * z * cov + z * z * var_x2;
                points.push(CurvePoint {
                    probability: mass,
                    xi: num / metrics::gaussian_min_variance(z),
                });
            }
        }
    }
    let max_decrement = points
        .windows(2)
        .map(|w| (w[0].xi - w[1].xi).max(0.0))
        .fold(0.0, f64::max);
    Ok(SelectionCurve {
        points,
        max_decrement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ancilla::{ancilla_moments, build_fock, AncillaSpec};
    use crate::metrics::ScanOpts;
    use crate::moments::{numerator_poly, MomentShape, Quad};

    fn tmsv_ensemble(db: f64, cutoff: usize) -> Ensemble {
        cluster_fock_ensemble(&ClusterParams::two_mode_squeezed(db), db, cutoff).unwrap()
    }

    #[test]
    fn vacuum_cluster_is_the_double_vacuum() {
        let st = gaussian_to_fock(&ClusterParams::default(), 0.0, 6).unwrap();
        match &st.repr {
            FockRepr::Pure(v) => {
                assert!((v[0].norm() - 1.0).abs() < 1e-12);
                assert!(v.iter().skip(1).all(|z| z.norm() < 1e-12));
            }
            _ => panic!("vacuum input must stay pure"),
        }
    }

    #[test]
    fn tmsv_schmidt_coefficients_follow_the_tanh_law() {
        let db = 6.0;
        let st = gaussian_to_fock(&ClusterParams::two_mode_squeezed(db), db, 24).unwrap();
        let lam = (crate::gaussian::db_to_r(db) / 2.0).tanh();
        let norm = (1.0 - lam * lam).sqrt();
        match &st.repr {
            FockRepr::Pure(v) => {
                for n in 0..10 {
                    let diag = v[n * 24 + n].norm();
                    assert!(
                        (diag - norm * lam.powi(n as i32)).abs() < 1e-9,
                        "n = {n}: {diag} vs {}",
                        norm * lam.powi(n as i32)
                    );
                }
                // off-diagonal amplitudes vanish for the two-mode squeezer
                for i in 0..10 {
                    for j in 0..10 {
                        if i != j {
                            assert!(v[i * 24 + j].norm() < 1e-10);
                        }
                    }
                }
            }
            _ => panic!("pure input must stay pure"),
        }
    }

    #[test]
    fn thermal_input_returns_a_mixed_cluster() {
        let params = ClusterParams {
            n: 0.1,
            ..ClusterParams::two_mode_squeezed(3.0)
        };
        let st = gaussian_to_fock(&params, 3.0, 16).unwrap();
        let p = st.purity();
        assert!(p < 0.9, "purity {p} should be visibly below 1");
        assert!(st.is_physical(1e-9));
    }

    #[test]
    fn fock_cluster_matches_fourth_order_reductions() {
        let params = ClusterParams {
            r1: 0.8,
            r2: 0.5,
            phi: 0.3,
            phi1: -0.4,
            phi2: 0.7,
            t_c: 0.72,
            alpha1: 0.6,
            alpha2: -0.3,
            n: 0.0,
        };
        let ens = cluster_fock_ensemble(&params, 6.0, 26).unwrap();
        let want = build_cluster(&params, 6.0).unwrap();
        let (gamma, mean) = ens.two_mode_gaussian_moments();
        assert!((gamma - want.gamma).abs().max() < 1e-6);
        assert!((mean - want.mean).abs().max() < 1e-6);

        // fourth-order Weyl moments against the Stein reductions
        let (d0, d1) = (ens.dims[0], ens.dims[1]);
        let x0 = ops::x_op(d0).map(C64::from);
        let x1 = ops::x_op(d1).map(C64::from);
        let weight = ens.total_weight();
        let (mut e20, mut e02, mut e22, mut e40, mut e04) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (w, v) in &ens.comps {
            let (va, _) = ops::apply_single_mode(v, &ens.dims, 0, &x0);
            let (vaa, _) = ops::apply_single_mode(&va, &ens.dims, 0, &x0);
            let (vb, _) = ops::apply_single_mode(v, &ens.dims, 1, &x1);
            let (vbb, _) = ops::apply_single_mode(&vb, &ens.dims, 1, &x1);
            let dot = |a: &[C64], b: &[C64]| -> f64 {
                a.iter().zip(b).map(|(x, y)| (x.conj() * y).re).sum()
            };
            e20 += w * dot(v, &vaa);
            e02 += w * dot(v, &vbb);
            e22 += w * dot(&vaa, &vbb);
            e40 += w * dot(&vaa, &vaa);
            e04 += w * dot(&vbb, &vbb);
        }
        for e in [&mut e20, &mut e02, &mut e22, &mut e40, &mut e04] {
            *e /= weight;
        }
        let red = |s: MomentShape| crate::moments::stein_reduce(s, &want).unwrap();
        let var_xa2 = e40 - e20 * e20;
        let var_xb2 = e04 - e02 * e02;
        let cov_x2 = e22 - e20 * e02;
        assert!((var_xa2 - red(MomentShape::VarXsq { x: Quad::XA })).abs() < 1e-5);
        assert!((var_xb2 - red(MomentShape::VarXsq { x: Quad::XB })).abs() < 1e-5);
        assert!((cov_x2 - red(MomentShape::CovXsqXsq)).abs() < 1e-5);
    }

    #[test]
    fn loss_channel_limits_and_binomial_law() {
        let one = {
            let mut v = DVector::<C64>::zeros(6);
            v[1] = C64::from(1.0);
            FockDensity::pure(vec![6], v)
        };
        let id = loss_channel(&one, 1.0).unwrap();
        assert!(
            id.fidelity_pure(&DVector::from_fn(6, |i, _| if i == 1 {
                C64::from(1.0)
            } else {
                C64::default()
            })) > 1.0 - 1e-12
        );
        let dark = loss_channel(&one, 0.0).unwrap();
        assert!(
            dark.fidelity_pure(&DVector::from_fn(6, |i, _| if i == 0 {
                C64::from(1.0)
            } else {
                C64::default()
            })) > 1.0 - 1e-12
        );
        let part = loss_channel(&one, 0.75).unwrap();
        match &part.repr {
            FockRepr::Mixed(r) => {
                assert!((r[(0, 0)].re - 0.25).abs() < 1e-12);
                assert!((r[(1, 1)].re - 0.75).abs() < 1e-12);
                assert!((part.trace() - 1.0).abs() < 1e-10);
            }
            _ => panic!("loss output is mixed"),
        }
    }

    #[test]
    fn zero_chi_canonical_and_nonlinear_paths_are_bitwise_identical() {
        let cluster = tmsv_ensemble(5.0, 18);
        let anc = build_fock(&AncillaSpec::TwoComponent { u: 0.7 }, 4).unwrap();
        let can = JointState::build(
            &cluster,
            &anc,
            &SchemeConfig::unity_gain(Scheme::Canonical, 0.0),
        )
        .unwrap();
        let nl = JointState::build(
            &cluster,
            &anc,
            &SchemeConfig::unity_gain(Scheme::Nonlinear, 0.0),
        )
        .unwrap();
        for (m_x, m_p) in [(0.0, 0.0), (0.9, -1.3), (-2.1, 0.4)] {
            let a = condition(&can, m_x, m_p).unwrap();
            let b = condition(&nl, m_x, m_p).unwrap();
            assert_eq!(a.density, b.density);
            let mops = MomentOps::new(can.output_dim());
            let ma = a.moments(&mops).unwrap();
            let mb = b.moments(&mops).unwrap();
            assert_eq!(ma.var_p, mb.var_p);
            assert_eq!(ma.cov_x2_p, mb.cov_x2_p);
        }
    }

    #[test]
    fn strong_squeezing_teleports_the_ancilla_identically() {
        // identity-channel limit: conditional state at the origin outcome
        // approaches the input, with infidelity scaling like 1/g^2
        let anc_spec = AncillaSpec::TwoComponent { u: 0.79 };
        let anc = build_fock(&anc_spec, 6).unwrap();
        let psi = match &anc.repr {
            FockRepr::Pure(v) => v.clone(),
            _ => unreachable!(),
        };
        let mut infidelities = Vec::new();
        for (db, cutoff) in [(8.0, 30), (11.0, 55)] {
            let cluster = tmsv_ensemble(db, cutoff);
            let cfg = SchemeConfig::unity_gain(Scheme::Canonical, 0.0);
            let joint = JointState::build(&cluster, &anc, &cfg).unwrap();
            let cond = condition(&joint, 0.0, 0.0).unwrap();
            let rho = cond.density_matrix().unwrap();
            assert!(rho.is_physical(1e-9));
            assert!((rho.trace() - 1.0).abs() < 1e-9);
            let f = rho.fidelity_pure(&psi);
            infidelities.push((10f64.powf(db / 10.0), 1.0 - f));
        }
        let (g2_a, infid_a) = infidelities[0];
        let (g2_b, infid_b) = infidelities[1];
        assert!(infid_b < 0.06, "11 dB infidelity {infid_b}");
        let scaled = (infid_a * g2_a) / (infid_b * g2_b);
        assert!(
            (0.5..2.0).contains(&scaled),
            "infidelity should scale like 1/g^2: {infidelities:?}"
        );
    }

    #[test]
    fn grid_mass_and_conditional_states_are_physical() {
        let cluster = tmsv_ensemble(6.0, 26);
        let anc = build_fock(&AncillaSpec::TwoComponent { u: 0.79 }, 4).unwrap();
        let cfg = SchemeConfig::unity_gain(Scheme::Nonlinear, -0.219);
        let joint = JointState::build(&cluster, &anc, &cfg).unwrap();
        let grid = build_grid(&joint, &GridSpec::default()).unwrap();
        assert!(grid.mass >= 0.999);
        assert!(grid.mass <= 1.0 + 1e-6);
        // sample a spread of cells: normalized density matrices stay physical
        let step = grid.cells.len() / 17;
        for cell in grid.cells.iter().step_by(step.max(1)) {
            if cell.probability < 1e-12 {
                continue;
            }
            let cond = condition(&joint, cell.m_x, cell.m_p).unwrap();
            let rho = cond.density_matrix().unwrap();
            assert!((rho.trace() - 1.0).abs() < 1e-8);
            assert!(rho.is_physical(1e-8), "cell ({}, {})", cell.m_x, cell.m_p);
        }
    }

    #[test]
    fn full_acceptance_matches_the_analytic_engine_at_zero_chi() {
        let db = 6.0;
        let cluster = tmsv_ensemble(db, 30);
        let anc_spec = AncillaSpec::TwoComponent { u: 0.79 };
        let anc = build_fock(&anc_spec, 4).unwrap();
        let m = ancilla_moments(&anc_spec).unwrap();
        let z_n = crate::metrics::native_cubicity_of_moments(&m, ScanOpts::default())
            .unwrap()
            .z_best();
        let cfg = SchemeConfig::unity_gain(Scheme::Canonical, 0.0);
        let joint = JointState::build(&cluster, &anc, &cfg).unwrap();
        let grid = build_grid(&joint, &GridSpec::default()).unwrap();
        let curve = postselect(
            &grid,
            &PostSelection {
                mode: AggregationMode::States,
                z_query: z_n,
            },
        )
        .unwrap();
        let cl = build_cluster(&ClusterParams::two_mode_squeezed(db), db).unwrap();
        let poly = numerator_poly(&cl, &m, &cfg).unwrap();
        let engine = (poly[0] + poly[1] * z_n + poly[2] * z_n * z_n)
            / crate::metrics::gaussian_min_variance(z_n);
        let fock = curve.full_acceptance().xi;
        assert!(
            ((fock - engine) / engine).abs() < 1e-3,
            "fock {fock} vs engine {engine}"
        );
    }

    #[test]
    fn selection_curves_are_monotone_within_tolerance() {
        let cluster = tmsv_ensemble(6.0, 26);
        let anc_spec = AncillaSpec::TwoComponent { u: 0.79 };
        let anc = build_fock(&anc_spec, 4).unwrap();
        let m = ancilla_moments(&anc_spec).unwrap();
        let z_n = crate::metrics::native_cubicity_of_moments(&m, ScanOpts::default())
            .unwrap()
            .z_best();
        for chi in [0.0, -0.219] {
            let scheme = if chi == 0.0 {
                Scheme::Canonical
            } else {
                Scheme::Nonlinear
            };
            let joint =
                JointState::build(&cluster, &anc, &SchemeConfig::unity_gain(scheme, chi)).unwrap();
            let grid = build_grid(&joint, &GridSpec::default()).unwrap();
            let xi_curve = postselect(
                &grid,
                &PostSelection {
                    mode: AggregationMode::Xi,
                    z_query: z_n,
                },
            )
            .unwrap();
            // prefix mean of a sorted sequence: exactly monotone
            assert!(
                xi_curve.is_monotone(1e-12),
                "decrement {}",
                xi_curve.max_decrement
            );
            let st_curve = postselect(
                &grid,
                &PostSelection {
                    mode: AggregationMode::States,
                    z_query: z_n,
                },
            )
            .unwrap();
            // mixture mode: monotone up to mean-recentring decrements
            assert!(
                st_curve.is_monotone(1e-3),
                "decrement {}",
                st_curve.max_decrement
            );
        }
    }
}
