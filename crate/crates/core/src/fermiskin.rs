//! Many-fermion densities built from skin-deformed single-particle states.
//!
//! Sites are numbered `x = 1..L` inside this module. Vectors are stored with
//! `vectors[n][x - 1]`, so the 0-indexed lattice elsewhere maps onto it by a
//! shift of one and nothing else.
//!
//! Overlap matrices of strongly deformed bases are graded over many orders
//! of magnitude. Their eigenpairs come from a one-sided-accurate cyclic Jacobi
//! iteration generic over [`Precise`], and the density switches to the
//! double-double [`Quad`] type when the overlap matrix is too ill-conditioned
//! for `f64`.

use std::fmt::Debug;
use std::ops::Neg;

use nalgebra::DMatrix;
use num_complex::Complex;
use num_traits::Num;
use qd::Quad;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this condition number of `B` the density is accumulated in `Quad`.
pub const EXTENDED_THRESHOLD: f64 = 1e6;
/// Largest lattice for the determinant enumeration.
pub const SLATER_CAP: usize = 12;
/// Upper bound on the fitted inverse temperature.
pub const BETA_CAP: f64 = 200.0;

/// Scalar arithmetic needed by the overlap eigen-solver.
pub trait Precise: Copy + PartialOrd + Num + Neg<Output = Self> + Debug + Send + Sync {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn epsilon() -> Self;
}

impl Precise for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn epsilon() -> Self {
        f64::EPSILON
    }
}

impl Precise for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    fn abs(self) -> Self {
        f32::abs(self)
    }
    fn epsilon() -> Self {
        f32::EPSILON
    }
}

impl Precise for Quad {
    fn from_f64(v: f64) -> Self {
        Quad::from_f64(v)
    }
    fn to_f64(self) -> f64 {
        self.0 + self.1
    }
    fn sqrt(self) -> Self {
        Quad::sqrt(self)
    }
    fn abs(self) -> Self {
        Quad::abs(self)
    }
    fn epsilon() -> Self {
        Quad::EPSILON
    }
}

type Cx<S> = Complex<S>;

fn lift<S: Precise>(z: Complex<f64>) -> Cx<S> {
    Cx::new(S::from_f64(z.re), S::from_f64(z.im))
}

fn modulus<S: Precise>(z: Cx<S>) -> S {
    (z.re * z.re + z.im * z.im).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleParticleBasis {
    pub l: usize,
    /// `vectors[n][x - 1] = φ_{n+1}(x)`.
    pub vectors: Vec<Vec<Complex<f64>>>,
    /// Total deformation applied so far.
    pub kappa: f64,
}

impl SingleParticleBasis {
    pub fn from_vectors(l: usize, vectors: Vec<Vec<Complex<f64>>>) -> Result<Self> {
        if l == 0 || vectors.len() > l {
            return Err(Error::Argument(format!("{} vectors on {l} sites", vectors.len())));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != l) {
            return Err(Error::Dimension { expected: l, found: v.len() });
        }
        Ok(Self { l, vectors, kappa: 0.0 })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// `φ_n(x)` with 1-based `n` and `x`.
    pub fn value(&self, n: usize, x: usize) -> Complex<f64> {
        self.vectors[n - 1][x - 1]
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.len() {
            return Err(Error::Argument(format!("N = {n} with {} basis vectors", self.len())));
        }
        Ok(())
    }
}

/// Open-chain standing waves `√(2/(L+1)) sin(π n x/(L+1))`, `n = 1..=count`.
pub fn hn_basis(l: usize, count: usize) -> Result<SingleParticleBasis> {
    if l == 0 || count > l {
        return Err(Error::Argument(format!("hn_basis needs 1 ≤ N ≤ L, got N={count}, L={l}")));
    }
    let norm = (2.0 / (l as f64 + 1.0)).sqrt();
    let vectors = (1..=count)
        .map(|n| {
            (1..=l)
                .map(|x| Complex::new(norm * (std::f64::consts::PI * (n * x) as f64 / (l as f64 + 1.0)).sin(), 0.0))
                .collect()
        })
        .collect();
    SingleParticleBasis::from_vectors(l, vectors)
}

/// Entrywise `e^{−κx}`.
pub fn skin_deform(basis: &SingleParticleBasis, kappa: f64) -> SingleParticleBasis {
    let w: Vec<f64> = (1..=basis.l).map(|x| (-kappa * x as f64).exp()).collect();
    SingleParticleBasis {
        l: basis.l,
        vectors: basis.vectors.iter().map(|v| v.iter().zip(&w).map(|(z, &f)| z * f).collect()).collect(),
        kappa: basis.kappa + kappa,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapMatrix {
    pub b: DMatrix<Complex<f64>>,
    pub kappa: f64,
}

/// `B_mn = Σ_x φ_m(x)^* φ_n(x)` over the first `n` vectors.
pub fn overlap_matrix(basis: &SingleParticleBasis, n: usize) -> Result<OverlapMatrix> {
    basis.check_n(n)?;
    let b = gram::<f64>(basis, n);
    Ok(OverlapMatrix { b: DMatrix::from_fn(n, n, |i, j| b[i][j]), kappa: basis.kappa })
}

/// Closed-form overlap of the deformed standing waves.
pub fn overlap_matrix_hn_analytic(l: usize, kappa: f64, n: usize) -> Result<OverlapMatrix> {
    if n == 0 || n > l {
        return Err(Error::Argument(format!("N = {n} on {l} sites")));
    }
    if kappa == 0.0 {
        return Ok(OverlapMatrix { b: DMatrix::identity(n, n), kappa });
    }
    let lp = l as f64 + 1.0;
    let pi = std::f64::consts::PI;
    let (s2, c2) = ((2.0 * kappa).sinh(), (2.0 * kappa).cosh());
    let b = DMatrix::from_fn(n, n, |i, j| {
        let (m, k) = ((i + 1) as f64, (j + 1) as f64);
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        let num = (1.0 - sign * (-2.0 * kappa * lp).exp()) * s2 * (m * pi / lp).sin() * (k * pi / lp).sin();
        let den = lp * (c2 - (pi * (m + k) / lp).cos()) * (c2 - (pi * (m - k) / lp).cos());
        Complex::new(num / den, 0.0)
    });
    Ok(OverlapMatrix { b, kappa })
}

fn gram<S: Precise>(basis: &SingleParticleBasis, n: usize) -> Vec<Vec<Cx<S>>> {
    let v: Vec<Vec<Cx<S>>> = basis.vectors[..n].iter().map(|c| c.iter().map(|&z| lift(z)).collect()).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| v[i].iter().zip(&v[j]).fold(Cx::new(S::zero(), S::zero()), |s, (a, b)| s + a.conj() * *b))
                .collect()
        })
        .collect()
}

/// Cyclic Jacobi for a Hermitian matrix. Eigenvalues come back in descending
/// order with the eigenvectors as the columns of `V` (`v[row][col]`).
pub fn hermitian_eigen<S: Precise>(mut a: Vec<Vec<Cx<S>>>) -> (Vec<S>, Vec<Vec<Cx<S>>>) {
    let n = a.len();
    let zero = Cx::new(S::zero(), S::zero());
    let mut v: Vec<Vec<Cx<S>>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { Cx::new(S::one(), S::zero()) } else { zero }).collect()).collect();
    let two = S::from_f64(2.0);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                let g = modulus(apq);
                let (app, aqq) = (a[p][p].re, a[q][q].re);
                if g == S::zero() || g <= S::epsilon() * (app * aqq).abs().sqrt() {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (two * g);
                let t = {
                    let r = S::one() / (theta.abs() + (theta * theta + S::one()).sqrt());
                    if theta < S::zero() {
                        -r
                    } else {
                        r
                    }
                };
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                // G = [[c, s], [−ē s, ē c]] on (p, q), ē the conjugate phase of a_pq.
                let e = Cx::new(apq.re / g, -apq.im / g);
                let (gpp, gpq) = (Cx::new(c, S::zero()), Cx::new(s, S::zero()));
                let (gqp, gqq) = (e * Cx::new(-s, S::zero()), e * Cx::new(c, S::zero()));
                for row in a.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = x * gpp + y * gqp;
                    row[q] = x * gpq + y * gqq;
                }
                for k in 0..n {
                    let (x, y) = (a[p][k], a[q][k]);
                    a[p][k] = gpp.conj() * x + gqp.conj() * y;
                    a[q][k] = gpq.conj() * x + gqq.conj() * y;
                }
                a[p][q] = zero;
                a[q][p] = zero;
                a[p][p].im = S::zero();
                a[q][q].im = S::zero();
                for row in v.iter_mut() {
                    let (x, y) = (row[p], row[q]);
                    row[p] = x * gpp + y * gqp;
                    row[q] = x * gpq + y * gqq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].re.partial_cmp(&a[i][i].re).unwrap_or(std::cmp::Ordering::Equal));
    let eig = order.iter().map(|&i| a[i][i].re).collect();
    let vecs = (0..n).map(|r| order.iter().map(|&i| v[r][i]).collect()).collect();
    (eig, vecs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinDecomposition {
    /// Eigenvalues `b_ν` of the overlap matrix, descending.
    pub b: Vec<f64>,
    /// `mode_densities[ν][x - 1] = n_ν(x)`.
    pub mode_densities: Vec<Vec<f64>>,
    /// `total[x - 1] = n_x`.
    pub total: Vec<f64>,
    pub condition: f64,
    pub extended: bool,
}

fn decompose_in<S: Precise>(basis: &SingleParticleBasis, n: usize) -> Result<SkinDecomposition> {
    let (b, v) = hermitian_eigen(gram::<S>(basis, n));
    let bmax = b[0];
    let bmin = b[n - 1];
    let condition = if bmin > S::zero() { (bmax / bmin).to_f64() } else { f64::INFINITY };
    if !(bmin > S::zero()) || condition * S::epsilon().to_f64() > 1e-3 {
        return Err(Error::Singular { cond: condition });
    }
    let phi: Vec<Vec<Cx<S>>> = basis.vectors[..n].iter().map(|c| c.iter().map(|&z| lift(z)).collect()).collect();
    let mut modes = vec![vec![0.0; basis.l]; n];
    let mut total = vec![0.0; basis.l];
    for (nu, mode) in modes.iter_mut().enumerate() {
        for x in 0..basis.l {
            let amp = (0..n).fold(Cx::new(S::zero(), S::zero()), |s, m| s + phi[m][x] * v[m][nu]);
            let val = ((amp.re * amp.re + amp.im * amp.im) / b[nu]).to_f64();
            mode[x] = val;
            total[x] += val;
        }
    }
    Ok(SkinDecomposition {
        b: b.iter().map(|x| x.to_f64()).collect(),
        mode_densities: modes,
        total,
        condition,
        extended: false,
    })
}

/// Overlap eigenmode decomposition in the scalar type `S`.
pub fn mode_decomposition_in<S: Precise>(basis: &SingleParticleBasis, n: usize) -> Result<SkinDecomposition> {
    basis.check_n(n)?;
    decompose_in::<S>(basis, n)
}

/// `n_ν(x) = b_ν^{-1} |Σ_m φ_m(x) (φ_ν)_m|²` for the eigenpairs of `B`, with
/// the precision chosen as in [`density_from_overlap`].
pub fn mode_decomposition(basis: &SingleParticleBasis, n: usize) -> Result<SkinDecomposition> {
    basis.check_n(n)?;
    let (b, _) = hermitian_eigen(gram::<f64>(basis, n));
    let cond = if b[n - 1] > 0.0 { b[0] / b[n - 1] } else { f64::INFINITY };
    if cond > EXTENDED_THRESHOLD {
        let mut d = decompose_in::<Quad>(basis, n)?;
        d.extended = true;
        Ok(d)
    } else {
        decompose_in::<f64>(basis, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityResult {
    /// `n_x[x - 1]`.
    pub n_x: Vec<f64>,
    pub condition: f64,
    pub extended: bool,
    pub threshold: f64,
}

/// `n_x = Σ_mn φ_m(x) [B^{-1}]_mn φ_n(x)^*` via the eigen-decomposition of
/// `B`. Switches to `Quad` when `cond(B) > EXTENDED_THRESHOLD`.
pub fn density_from_overlap(basis: &SingleParticleBasis, n: usize) -> Result<DensityResult> {
    let d = mode_decomposition(basis, n)?;
    Ok(DensityResult { n_x: d.total, condition: d.condition, extended: d.extended, threshold: EXTENDED_THRESHOLD })
}

fn det_gepp(mut m: Vec<Vec<Cx<Quad>>>) -> Cx<Quad> {
    let n = m.len();
    let mut det = Cx::new(Quad::ONE, Quad::ZERO);
    for k in 0..n {
        let piv = (k..n).max_by(|&i, &j| m[i][k].norm_sqr().partial_cmp(m[j][k].norm_sqr()).unwrap()).unwrap();
        if m[piv][k].norm_sqr() == Quad::ZERO {
            return Cx::new(Quad::ZERO, Quad::ZERO);
        }
        if piv != k {
            m.swap(piv, k);
            det = -det;
        }
        let d = m[k][k];
        det = det * d;
        for i in k + 1..n {
            let f = m[i][k] / d;
            for j in k..n {
                let t = m[k][j];
                m[i][j] = m[i][j] - f * t;
            }
        }
    }
    det
}

/// Density of the Slater determinant of the first `n` vectors by explicit
/// enumeration of all `C(L, n)` occupations, in `Quad`.
pub fn slater_density_bruteforce(basis: &SingleParticleBasis, n: usize) -> Result<Vec<f64>> {
    basis.check_n(n)?;
    if basis.l > SLATER_CAP {
        return Err(Error::DenseCap { sites: basis.l, cap: SLATER_CAP });
    }
    let l = basis.l;
    let phi: Vec<Vec<Cx<Quad>>> = basis.vectors[..n].iter().map(|c| c.iter().map(|&z| lift(z)).collect()).collect();
    let mut acc = vec![Quad::ZERO; l];
    let mut norm = Quad::ZERO;
    for conf in 0usize..1 << l {
        if conf.count_ones() as usize != n {
            continue;
        }
        let sites: Vec<usize> = (0..l).filter(|&x| (conf >> x) & 1 == 1).collect();
        let m = sites.iter().map(|&x| (0..n).map(|k| phi[k][x]).collect()).collect();
        let w = det_gepp(m).norm_sqr();
        norm = norm + w;
        for &x in &sites {
            acc[x] = acc[x] + w;
        }
    }
    if norm == Quad::ZERO {
        return Err(Error::ZeroNorm);
    }
    Ok(acc.into_iter().map(|a| (a / norm).to_f64()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FermiDiracFit {
    pub beta: f64,
    pub mu: f64,
    /// Root-mean-square residual over the profile.
    pub residual: f64,
    /// `beta` sits on [`BETA_CAP`].
    pub capped: bool,
}

fn fd(beta: f64, mu: f64, x: f64) -> f64 {
    let z = (beta * (x - mu)).clamp(-700.0, 700.0);
    1.0 / (1.0 + z.exp())
}

fn sse(y: &[f64], beta: f64, mu: f64) -> f64 {
    y.iter().enumerate().map(|(i, &v)| (fd(beta, mu, (i + 1) as f64) - v).powi(2)).sum()
}

/// Levenberg-Marquardt on `(β, μ)`, or on `β` alone when `fix_mu`.
fn lm(y: &[f64], mut beta: f64, mut mu: f64, fix_mu: bool) -> (f64, f64, f64) {
    let mut cost = sse(y, beta, mu);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (i, &v) in y.iter().enumerate() {
            let x = (i + 1) as f64;
            let f = fd(beta, mu, x);
            let d = f * (1.0 - f);
            let g = [-d * (x - mu), if fix_mu { 0.0 } else { d * beta }];
            let r = f - v;
            for a in 0..2 {
                jtr[a] += g[a] * r;
                for b in 0..2 {
                    jtj[a][b] += g[a] * g[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let a =
                [[jtj[0][0] * (1.0 + lambda) + 1e-300, jtj[0][1]], [jtj[1][0], jtj[1][1] * (1.0 + lambda) + 1e-300]];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let (db, dm) = if fix_mu || det.abs() < 1e-300 {
                (-jtr[0] / a[0][0], 0.0)
            } else {
                ((-jtr[0] * a[1][1] + jtr[1] * a[0][1]) / det, (-jtr[1] * a[0][0] + jtr[0] * a[1][0]) / det)
            };
            let nb = (beta + db).clamp(1e-6, BETA_CAP);
            let nm = mu + dm;
            let nc = sse(y, nb, nm);
            if nc < cost {
                let step = (nb - beta).abs() + (nm - mu).abs();
                beta = nb;
                mu = nm;
                let drop = cost - nc;
                cost = nc;
                lambda = (lambda * 0.3).max(1e-12);
                improved = step > 1e-14 && drop > 1e-30;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (beta, mu, cost)
}

fn fit(n_x: &[f64], fixed_mu: Option<f64>) -> Result<FermiDiracFit> {
    let l = n_x.len();
    if l < 4 {
        return Err(Error::Argument(format!("profile of length {l}; need at least 4")));
    }
    let betas: Vec<f64> = (0..12).map(|k| 0.1 * (200.0f64).powf(k as f64 / 11.0)).collect();
    let mus: Vec<f64> = match fixed_mu {
        Some(m) => vec![m],
        None => (0..9).map(|k| l as f64 * k as f64 / 8.0).collect(),
    };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &b0 in &betas {
        for &m0 in &mus {
            let (b, m, c) = lm(n_x, b0, m0, fixed_mu.is_some());
            if c < best.0 {
                best = (c, b, m);
            }
        }
    }
    let (mut c, mut beta, mu) = best;
    // A sharper step keeps lowering the residual: report the cap.
    let at_cap = sse(n_x, BETA_CAP, mu);
    if at_cap <= c {
        c = at_cap;
        beta = BETA_CAP;
    }
    Ok(FermiDiracFit { beta, mu, residual: (c / l as f64).sqrt(), capped: beta >= BETA_CAP * (1.0 - 1e-9) })
}

/// Least-squares `1/(1 + e^{β(x−μ)})` over `x = 1..L`, multi-started from a
/// fixed grid so the answer is deterministic.
pub fn fit_fermi_dirac(n_x: &[f64]) -> Result<FermiDiracFit> {
    fit(n_x, None)
}

/// As [`fit_fermi_dirac`] with `μ` held fixed.
pub fn fit_fermi_dirac_fixed_mu(n_x: &[f64], mu: f64) -> Result<FermiDiracFit> {
    fit(n_x, Some(mu))
}
