//! Gaussian laws of 2-jets of rescaled Kostlan sections.
//!
//! Jet coordinates are laid out as
//! `[F_1..F_r | S_(1,1)..S_(1,n), .., S_(r,n) | T_(1,p_1)..T_(1,p_N), .., T_(r,p_N)]`
//! where the pairs p = (j, k), 1 <= j <= k <= n, run lexicographically and
//! N = n(n+1)/2. All blocks are tensored with the identity over components.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kostlan::{Convention, Dims, Jet2, JetScale};
use crate::linalg::{hermitian_eigen, CMat, CVec};
use crate::rng::{complex_normal_vec, stream};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovLabel {
    BargmannFock,
    KostlanExact(u32),
}

/// Index pairs (j, k) with j <= k in the fixed lexicographic order.
pub fn sym_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|j| (j..n).map(move |k| (j, k))).collect()
}

/// Coordinate offsets of the three blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JetLayout {
    pub n: usize,
    pub r: usize,
}

impl JetLayout {
    pub fn npairs(&self) -> usize {
        self.n * (self.n + 1) / 2
    }
    pub fn dim_f(&self) -> usize {
        self.r
    }
    pub fn dim_s(&self) -> usize {
        self.r * self.n
    }
    pub fn dim_t(&self) -> usize {
        self.r * self.npairs()
    }
    pub fn len(&self) -> usize {
        self.dim_f() + self.dim_s() + self.dim_t()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn f(&self, i: usize) -> usize {
        i
    }
    pub fn s(&self, i: usize, j: usize) -> usize {
        self.r + i * self.n + j
    }
    /// Coordinate of T_i at the pair index `p` of [`sym_pairs`].
    pub fn t(&self, i: usize, p: usize) -> usize {
        self.r + self.r * self.n + i * self.npairs() + p
    }

    /// Packs a jet into a coordinate vector.
    pub fn pack(&self, jet: &Jet2) -> CVec {
        let mut v = CVec::zeros(self.len());
        let pairs = sym_pairs(self.n);
        for i in 0..self.r {
            v[self.f(i)] = jet.f[i];
            for j in 0..self.n {
                v[self.s(i, j)] = jet.s[(i, j)];
            }
            for (p, &(j, k)) in pairs.iter().enumerate() {
                v[self.t(i, p)] = jet.t[i][(j, k)];
            }
        }
        v
    }

    /// Unpacks coordinates into a jet.
    pub fn unpack(&self, v: &CVec, scale: JetScale) -> Jet2 {
        let pairs = sym_pairs(self.n);
        let f = CVec::from_fn(self.r, |i, _| v[self.f(i)]);
        let s = CMat::from_fn(self.r, self.n, |i, j| v[self.s(i, j)]);
        let t = (0..self.r)
            .map(|i| {
                let mut m = CMat::zeros(self.n, self.n);
                for (p, &(j, k)) in pairs.iter().enumerate() {
                    m[(j, k)] = v[self.t(i, p)];
                    m[(k, j)] = v[self.t(i, p)];
                }
                m
            })
            .collect();
        Jet2 { f, s, t, scale }
    }
}

/// The matrix with entries d_ik d_jl + d_il d_jk over pairs i <= j, k <= l.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaGoe {
    pub n: usize,
    pub matrix: CMat,
}

impl SigmaGoe {
    pub fn new(n: usize) -> Self {
        let pairs = sym_pairs(n);
        let delta = |a: usize, b: usize| (a == b) as u8 as f64;
        let matrix = CMat::from_fn(pairs.len(), pairs.len(), |p, q| {
            let (i, j) = pairs[p];
            let (k, l) = pairs[q];
            C64::from(delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k))
        });
        SigmaGoe { n, matrix }
    }
}

/// Joint law of the jet coordinates of a centred complex Gaussian section.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub dims: Dims,
    pub matrix: CMat,
    pub label: CovLabel,
}

impl CovarianceModel {
    pub fn layout(&self) -> JetLayout {
        JetLayout { n: self.dims.n, r: self.dims.r }
    }

    fn block(&self, start: usize, len: usize) -> CMat {
        self.matrix.view((start, start), (len, len)).into_owned()
    }

    pub fn f_block(&self) -> CMat {
        let l = self.layout();
        self.block(0, l.dim_f())
    }

    pub fn s_block(&self) -> CMat {
        let l = self.layout();
        self.block(l.dim_f(), l.dim_s())
    }

    pub fn t_block(&self) -> CMat {
        let l = self.layout();
        self.block(l.dim_f() + l.dim_s(), l.dim_t())
    }

    /// The law of `sqrt(E|a|^2) * s` for the given coefficient convention;
    /// models are built for E|a|^2 = 1.
    pub fn with_convention(&self, convention: Convention) -> Self {
        CovarianceModel {
            dims: self.dims,
            matrix: &self.matrix * C64::from(convention.variance()),
            label: self.label,
        }
    }

    /// The same law with the T-block (and its cross terms) removed.
    pub fn without_second_derivative(&self) -> Self {
        let mut out = self.clone();
        let l = self.layout();
        let start = l.dim_f() + l.dim_s();
        for a in 0..l.len() {
            for b in start..l.len() {
                out.matrix[(a, b)] = C64::from(0.0);
                out.matrix[(b, a)] = C64::from(0.0);
            }
        }
        out
    }

    /// Largest entrywise distance to another model of the same shape.
    pub fn max_entry_distance(&self, other: &CovarianceModel) -> f64 {
        crate::linalg::max_abs_diff(&self.matrix, &other.matrix)
    }

    pub fn check_valid(&self) -> Result<()> {
        let herm = crate::linalg::max_abs_diff(&self.matrix, &self.matrix.adjoint());
        if herm > 1e-12 * self.matrix.norm().max(1.0) {
            return Err(Error::Numerical(format!("covariance not Hermitian ({herm:e})")));
        }
        let (vals, _) = hermitian_eigen(&self.matrix);
        let scale = vals.last().copied().unwrap_or(0.0).abs().max(1.0);
        if vals[0] < -1e-10 * scale {
            return Err(Error::NotPsd { min_eigenvalue: vals[0] });
        }
        Ok(())
    }
}

/// exp(-(pi/2)(|z|^2 + |w|^2 - 2<z, w>)) with <z, w> = sum z_j conj(w_j).
pub fn bargmann_fock_kernel(z: &[C64], w: &[C64]) -> C64 {
    let nz: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    let nw: f64 = w.iter().map(|c| c.norm_sqr()).sum();
    let zw: C64 = z.iter().zip(w).map(|(a, b)| a * b.conj()).sum();
    (-(PI / 2.0) * (C64::from(nz + nw) - zw * 2.0)).exp()
}

/// Limit law: F-block 1, S-block pi, T-block pi^2 Sigma_GOE.
pub fn cov_bf(dims: Dims) -> CovarianceModel {
    let layout = JetLayout { n: dims.n, r: dims.r };
    let goe = SigmaGoe::new(dims.n);
    let np = layout.npairs();
    let mut m = CMat::zeros(layout.len(), layout.len());
    for i in 0..dims.r {
        m[(layout.f(i), layout.f(i))] = C64::from(1.0);
        for j in 0..dims.n {
            m[(layout.s(i, j), layout.s(i, j))] = C64::from(PI);
        }
        for p in 0..np {
            for q in 0..np {
                m[(layout.t(i, p), layout.t(i, q))] = goe.matrix[(p, q)] * (PI * PI);
            }
        }
    }
    CovarianceModel { dims, matrix: m, label: CovLabel::BargmannFock }
}

/// d (d-1) ... (d-k+1).
fn falling(d: u32, k: u32) -> f64 {
    (0..k).map(|j| d as f64 - j as f64).product()
}

/// d_z^alpha d_wbar^beta of the normalised projective kernel
/// (1 + <z, w>)^d (1 + |z|^2)^{-d/2} (1 + |w|^2)^{-d/2} at z = w = 0.
///
/// Only monomials z^a wbar^b with no zbar or w survive holomorphic
/// differentiation in z and antiholomorphic differentiation in w at the
/// origin; the two normalising factors expand in |z|^2 and |w|^2 and
/// contribute their constant term only. In the binomial expansion
/// (1 + sum z_j wbar_j)^d = sum_gamma d! / ((d - |gamma|)! gamma!) z^gamma wbar^gamma
/// the coefficient is diagonal, so the derivative is
/// delta_{alpha beta} alpha! d! / (d - |alpha|)!.
pub fn kernel_mixed_derivative(d: u32, alpha: &[u32], beta: &[u32]) -> f64 {
    if alpha != beta {
        return 0.0;
    }
    let order: u32 = alpha.iter().sum();
    if order > d {
        return 0.0;
    }
    let alpha_fact: f64 = alpha.iter().map(|&a| (1..=a).map(f64::from).product::<f64>()).product();
    alpha_fact * falling(d, order)
}

/// Exact law of the rescaled 2-jet of a degree-d Kostlan section (E|a|^2 = 1).
pub fn kostlan_jet_covariance(dims: Dims, d: u32) -> Result<CovarianceModel> {
    if d < 2 {
        return Err(Error::InvalidDims(format!("exact jet law needs d >= 2, got {d}")));
    }
    let layout = JetLayout { n: dims.n, r: dims.r };
    let n = dims.n;
    let pairs = sym_pairs(n);
    // derivative multi-index and order of every coordinate of one component
    let mut coords: Vec<(usize, Vec<u32>)> = Vec::new();
    coords.push((layout.f(0), vec![0; n]));
    for j in 0..n {
        let mut a = vec![0; n];
        a[j] = 1;
        coords.push((layout.s(0, j), a));
    }
    for (p, &(j, k)) in pairs.iter().enumerate() {
        let mut a = vec![0; n];
        a[j] += 1;
        a[k] += 1;
        coords.push((layout.t(0, p), a));
    }
    let fs2 = PI; // frame_scale^2
    let mut m = CMat::zeros(layout.len(), layout.len());
    for i in 0..dims.r {
        let shift = |c: usize| -> usize {
            if c < layout.dim_f() {
                layout.f(i)
            } else if c < layout.dim_f() + layout.dim_s() {
                c + i * n
            } else {
                c + i * layout.npairs()
            }
        };
        for (ca, alpha) in &coords {
            for (cb, beta) in &coords {
                let k = kernel_mixed_derivative(d, alpha, beta);
                if k == 0.0 {
                    continue;
                }
                let oa: u32 = alpha.iter().sum();
                let ob: u32 = beta.iter().sum();
                let frame = fs2.powf((oa + ob) as f64 / 2.0);
                let rescale = (d as f64).powf((oa + ob) as f64 / 2.0);
                m[(shift(*ca), shift(*cb))] = C64::from(k * frame / rescale);
            }
        }
    }
    let dims = dims.with_degree(d)?;
    Ok(CovarianceModel { dims, matrix: m, label: CovLabel::KostlanExact(d) })
}

/// Log-density of a centred complex Gaussian with covariance `cov` at `x`.
pub fn gaussian_log_density(cov: &CMat, x: &CVec) -> Result<f64> {
    let k = cov.nrows();
    let chol = cov.clone().cholesky().ok_or_else(|| Error::Singular("covariance".into()))?;
    let y = chol.l().solve_lower_triangular(x).ok_or_else(|| Error::Singular("covariance".into()))?;
    let ln_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.re.ln()).sum();
    Ok(-(k as f64) * PI.ln() - ln_det - y.norm_squared())
}

/// Gaussian density of F at 0: 1 / (pi^r det Cov(F)).
pub fn density_at_zero(cov: &CovarianceModel) -> Result<f64> {
    let fb = cov.f_block();
    let det = crate::linalg::hermitian_det(&fb);
    if !(det > 1e-300) {
        return Err(Error::Singular("F-block of the jet covariance".into()));
    }
    Ok(1.0 / (PI.powi(fb.nrows() as i32) * det))
}

/// Square-root factor L with L L^* = C for a PSD matrix: Cholesky when it
/// succeeds, otherwise a spectral square root.
fn psd_factor(c: &CMat) -> Result<CMat> {
    if c.nrows() == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    if let Some(chol) = c.clone().cholesky() {
        let l = chol.l();
        if l.diagonal().iter().all(|z| z.re > 0.0 && z.im.abs() <= 1e-12 * z.re) {
            return Ok(l);
        }
    }
    let (vals, vecs) = hermitian_eigen(c);
    let scale = vals.last().copied().unwrap_or(0.0).abs().max(1.0);
    if vals[0] < -1e-10 * scale {
        return Err(Error::NotPsd { min_eigenvalue: vals[0] });
    }
    let mut f = vecs;
    for (j, &l) in vals.iter().enumerate() {
        let s = C64::from(l.max(0.0).sqrt());
        for i in 0..f.nrows() {
            f[(i, j)] *= s;
        }
    }
    Ok(f)
}

/// Reusable sampler for one jet law.
#[derive(Debug, Clone)]
pub struct JetSampler {
    layout: JetLayout,
    scale: JetScale,
    conditioned: bool,
    /// Factor of the full law, or of the (S, T) law given F = 0.
    factor: CMat,
}

impl JetSampler {
    pub fn new(cov: &CovarianceModel, condition_f_zero: bool) -> Result<Self> {
        let layout = cov.layout();
        let scale = match cov.label {
            CovLabel::BargmannFock | CovLabel::KostlanExact(_) => JetScale::Rescaled,
        };
        let c = &cov.matrix;
        let factor = if condition_f_zero {
            let nf = layout.dim_f();
            let rest = layout.len() - nf;
            let cff = c.view((0, 0), (nf, nf)).into_owned();
            let crf = c.view((nf, 0), (rest, nf)).into_owned();
            let crr = c.view((nf, nf), (rest, rest)).into_owned();
            let schur = if crf.iter().all(|z| *z == C64::from(0.0)) {
                crr
            } else {
                let inv = cff
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::Singular("F-block".into()))?
                    .inverse();
                &crr - &crf * inv * crf.adjoint()
            };
            psd_factor(&schur)?
        } else {
            psd_factor(c)?
        };
        Ok(JetSampler { layout, scale, conditioned: condition_f_zero, factor })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Jet2 {
        let z = complex_normal_vec(rng, self.factor.ncols());
        let x = &self.factor * z;
        let full = if self.conditioned {
            let mut v = CVec::zeros(self.layout.len());
            v.rows_mut(self.layout.dim_f(), x.len()).copy_from(&x);
            v
        } else {
            x
        };
        self.layout.unpack(&full, self.scale)
    }
}

/// One draw from `cov`, optionally conditioned on F = 0.
pub fn sample_jet(cov: &CovarianceModel, seed: u64, condition_f_zero: bool) -> Result<Jet2> {
    Ok(JetSampler::new(cov, condition_f_zero)?.sample(&mut stream(seed, 0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn dims(n: usize, r: usize) -> Dims {
        Dims::new(n, r, 2).unwrap()
    }

    #[test]
    fn bf_kernel_examples() {
        let z0 = [C64::from(0.0); 3];
        assert!((bargmann_fock_kernel(&z0, &z0) - C64::from(1.0)).norm() < 1e-15);
        let z = [C64::new(0.3, -1.2), C64::new(2.0, 0.5)];
        assert!((bargmann_fock_kernel(&z, &z) - C64::from(1.0)).norm() < 1e-14);
        let e = [C64::from(1.0), C64::from(0.0)];
        let v = bargmann_fock_kernel(&e, &[C64::from(0.0); 2]);
        assert!((v.re - (-PI / 2.0).exp()).abs() < 1e-15 && v.im.abs() < 1e-15);
        assert!((v.re - 0.207879576).abs() < 1e-9);
    }

    #[test]
    fn sigma_goe_entries() {
        for n in 1..5 {
            let g = SigmaGoe::new(n);
            let pairs = sym_pairs(n);
            for (p, &(i, j)) in pairs.iter().enumerate() {
                for q in 0..pairs.len() {
                    let want = if p == q { if i == j { 2.0 } else { 1.0 } } else { 0.0 };
                    assert_eq!(g.matrix[(p, q)], C64::from(want));
                }
            }
            assert_eq!(g.matrix, g.matrix.transpose());
        }
    }

    #[test]
    fn cov_bf_entries() {
        let cov = cov_bf(dims(3, 2));
        let l = cov.layout();
        assert_eq!(cov.matrix[(l.s(0, 0), l.s(0, 0))], C64::from(PI));
        let p11 = 0;
        let p12 = 1;
        assert!((cov.matrix[(l.t(0, p11), l.t(0, p11))].re - 2.0 * PI * PI).abs() < 1e-12);
        assert!((cov.matrix[(l.t(0, p12), l.t(0, p12))].re - PI * PI).abs() < 1e-12);
        assert_eq!(cov.matrix[(l.f(0), l.t(0, p11))], C64::from(0.0));
        assert_eq!(cov.matrix[(l.t(0, p11), l.t(1, p11))], C64::from(0.0));
        cov.check_valid().unwrap();
    }

    #[test]
    fn kostlan_covariance_closed_form() {
        for &(n, r) in &[(2, 1), (3, 1), (3, 2), (4, 2)] {
            for d in [2u32, 3, 4, 7, 50] {
                let cov = kostlan_jet_covariance(dims(n, r), d).unwrap();
                let bf = cov_bf(dims(n, r));
                let mut expected = bf.matrix.clone();
                let l = cov.layout();
                let t0 = l.dim_f() + l.dim_s();
                for a in t0..l.len() {
                    for b in t0..l.len() {
                        expected[(a, b)] *= 1.0 - 1.0 / d as f64;
                    }
                }
                assert!(max_abs_diff(&cov.matrix, &expected) < 1e-10, "n={n} r={r} d={d}");
                cov.check_valid().unwrap();
            }
        }
        let cov = kostlan_jet_covariance(dims(2, 1), 4).unwrap();
        let l = cov.layout();
        assert!((cov.matrix[(l.t(0, 1), l.t(0, 1))].re - 0.75 * PI * PI).abs() < 1e-12);
        assert!(kostlan_jet_covariance(dims(2, 1), 1).is_err());
    }

    #[test]
    fn t_block_monotone_towards_bf() {
        let bf = cov_bf(dims(3, 1));
        let mut prev = f64::INFINITY;
        for d in 2..40 {
            let dist = kostlan_jet_covariance(dims(3, 1), d).unwrap().max_entry_distance(&bf);
            assert!(dist < prev);
            prev = dist;
        }
    }

    #[test]
    fn density_at_zero_conventions() {
        let bf = cov_bf(dims(3, 1));
        let one = density_at_zero(&bf).unwrap();
        assert!((one - 1.0 / PI).abs() < 1e-14);
        let two = density_at_zero(&bf.with_convention(Convention::VarTwo)).unwrap();
        assert!((two - 1.0 / (2.0 * PI)).abs() < 1e-14);
        let r2 = density_at_zero(&cov_bf(dims(3, 2)).with_convention(Convention::VarTwo)).unwrap();
        assert!((r2 - 1.0 / (4.0 * PI * PI)).abs() < 1e-14);
        let mut sing = bf.clone();
        sing.matrix[(0, 0)] = C64::from(0.0);
        assert!(density_at_zero(&sing).is_err());
    }

    #[test]
    fn goe_density_matches_trace_form() {
        // covariance 2 Sigma_GOE, r = 1: density
        // exp(-tr(T T^*) / 4) / ((2 pi)^{n(n+1)/2} 2^n)
        let n = 3;
        let goe = SigmaGoe::new(n).matrix * C64::from(2.0);
        let np = n * (n + 1) / 2;
        let mut rng = stream(4, 0);
        let mut prev: Option<(f64, f64)> = None;
        for _ in 0..20 {
            let coords = complex_normal_vec(&mut rng, np);
            let layout = JetLayout { n, r: 1 };
            let mut full = CVec::zeros(layout.len());
            full.rows_mut(1 + n, np).copy_from(&coords);
            let t = &layout.unpack(&full, JetScale::Physical).t[0];
            let tr = (t * t.adjoint()).trace().re;
            let ld = gaussian_log_density(&goe, &coords).unwrap();
            let want = -(np as f64) * (2.0 * PI).ln() - n as f64 * 2f64.ln() - tr / 4.0;
            assert!((ld - want).abs() < 1e-10);
            if let Some((pld, ptr)) = prev {
                assert!(((pld - ld) - (tr - ptr) / 4.0).abs() < 1e-10);
            }
            prev = Some((ld, tr));
        }
    }

    #[test]
    fn zero_covariance_gives_zero_jet() {
        let mut cov = cov_bf(dims(2, 1));
        cov.matrix.fill(C64::from(0.0));
        let jet = sample_jet(&cov, 3, false).unwrap();
        assert!(jet.f.norm() == 0.0 && jet.s.norm() == 0.0 && jet.t[0].norm() == 0.0);
    }

    #[test]
    fn non_psd_rejected() {
        let mut cov = cov_bf(dims(2, 1));
        cov.matrix[(0, 0)] = C64::from(-1.0);
        assert!(matches!(JetSampler::new(&cov, false), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn sampling_deterministic_and_conditioned() {
        let cov = kostlan_jet_covariance(dims(3, 2), 5).unwrap();
        assert_eq!(sample_jet(&cov, 9, true).unwrap(), sample_jet(&cov, 9, true).unwrap());
        let j = sample_jet(&cov, 9, true).unwrap();
        assert!(j.f.norm() == 0.0);
        assert_eq!(j.scale, JetScale::Rescaled);
        assert_eq!(j.t[0], j.t[0].transpose());
    }

    #[test]
    fn conditioning_with_cross_terms_uses_schur_complement() {
        // F and S_11 correlated: Var F = 1, Var S = 2, Cov = 1 -> Var(S | F = 0) = 1
        let mut cov = cov_bf(dims(2, 1));
        cov.matrix.fill(C64::from(0.0));
        let l = cov.layout();
        cov.matrix[(l.f(0), l.f(0))] = C64::from(1.0);
        cov.matrix[(l.s(0, 0), l.s(0, 0))] = C64::from(2.0);
        cov.matrix[(l.f(0), l.s(0, 0))] = C64::from(1.0);
        cov.matrix[(l.s(0, 0), l.f(0))] = C64::from(1.0);
        let sampler = JetSampler::new(&cov, true).unwrap();
        let mut rng = stream(1, 0);
        let n = 40_000;
        let v: f64 = (0..n).map(|_| sampler.sample(&mut rng).s[(0, 0)].norm_sqr()).sum::<f64>() / n as f64;
        assert!((v - 1.0).abs() < 0.03, "{v}");
    }

    #[test]
    fn pack_unpack_round_trip() {
        let cov = cov_bf(dims(3, 2));
        let j = sample_jet(&cov, 5, false).unwrap();
        let l = cov.layout();
        assert_eq!(l.unpack(&l.pack(&j), j.scale), j);
    }
}
