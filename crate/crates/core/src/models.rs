//! Spin-chain Hamiltonians, bond propagators and Trotter plans.
//!
//! `X⁺ = |↑⟩⟨↓|`. Hatano-Nelson:
//! `H = −Σ_j [(J+γ) X⁺_j X⁻_{j+1} + (J−γ) X⁻_j X⁺_{j+1}]`, so the stronger hop
//! moves a fermion towards site 0. The nH-SSH chain uses that form on the
//! intracell bonds `(2j, 2j+1)` and `−(J/2)(XX+YY)` on the intercell bonds.

use nalgebra::{ComplexField, DVector};
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::dilation::{dilate, DilatedUnitary};
use crate::error::{Error, Result};
use crate::scalar::{cr, CMatrix, Real, C};
use crate::statevector::{Bitstring, StateVector};

/// Largest chain handled by the dense builders.
pub const DENSE_CAP: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Hn,
    Nhssh,
    HnInt,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hn" => Ok(Self::Hn),
            "nhssh" | "nh-ssh" => Ok(Self::Nhssh),
            "hn-int" | "hn_int" | "hnint" => Ok(Self::HnInt),
            _ => Err(Error::Model(format!("unknown model {s:?}"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Hn => "hn",
            Self::Nhssh => "nhssh",
            Self::HnInt => "hn-int",
        })
    }
}

/// Open chain of `l` sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec<T> {
    pub kind: ModelKind,
    pub l: usize,
    pub j: T,
    pub gamma: T,
    pub u_int: T,
}

impl<T: Real> ModelSpec<T> {
    pub fn hn(l: usize, j: T, gamma: T) -> Self {
        Self { kind: ModelKind::Hn, l, j, gamma, u_int: T::zero() }
    }

    pub fn nhssh(l: usize, j: T, gamma: T) -> Self {
        Self { kind: ModelKind::Nhssh, l, j, gamma, u_int: T::zero() }
    }

    pub fn hn_int(l: usize, j: T, gamma: T, u: T) -> Self {
        Self { kind: ModelKind::HnInt, l, j, gamma, u_int: u }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 2 {
            return Err(Error::Model(format!("need at least 2 sites, got {}", self.l)));
        }
        if self.kind == ModelKind::Nhssh && self.l % 2 != 0 {
            return Err(Error::Model(format!("nH-SSH needs an even chain, got {}", self.l)));
        }
        if !(self.gamma.abs() < self.j) {
            return Err(Error::Model("require |gamma| < J".into()));
        }
        Ok(())
    }

    fn u_eff(&self) -> T {
        if self.kind == ModelKind::HnInt {
            self.u_int
        } else {
            T::zero()
        }
    }

    /// Local 4×4 Hamiltonian of bond `(b, b+1)`; bit 0 of the local index is site `b`.
    fn bond_hamiltonian(&self, b: usize) -> CMatrix<T> {
        let mut h = CMatrix::zeros(4, 4);
        if self.kind == ModelKind::Nhssh && b % 2 == 1 {
            h[(1, 2)] = cr(-self.j);
            h[(2, 1)] = cr(-self.j);
        } else {
            h[(1, 2)] = cr(-(self.j + self.gamma));
            h[(2, 1)] = cr(-(self.j - self.gamma));
            h[(3, 3)] = cr(self.u_eff());
        }
        h
    }
}

/// `κ = ½ ln((J+γ)/(J−γ))`.
pub fn kappa<T: Real>(j: T, gamma: T) -> Result<T> {
    if !(gamma.abs() < j) {
        return Err(Error::Model("kappa requires |gamma| < J".into()));
    }
    Ok(((j + gamma) / (j - gamma)).ln() / T::lit(2.0))
}

/// Dense operator of `op` on `targets` inside an `n`-qubit register.
pub fn embed<T: Real>(op: &CMatrix<T>, targets: &[usize], n: usize) -> Result<CMatrix<T>> {
    let d = 1usize << n;
    let mut out = CMatrix::zeros(d, d);
    for col in 0..d {
        let mut s = StateVector::init_basis(&Bitstring::from_index(col, n));
        s.apply(op, targets)?;
        out.set_column(col, &DVector::from_column_slice(s.amplitudes()));
    }
    Ok(out)
}

pub fn hamiltonian_dense<T: Real>(spec: &ModelSpec<T>) -> Result<CMatrix<T>> {
    spec.validate()?;
    if spec.l > DENSE_CAP {
        return Err(Error::DenseCap { sites: spec.l, cap: DENSE_CAP });
    }
    let n = spec.l;
    let d = 1usize << n;
    let mut h = CMatrix::zeros(d, d);
    for b in 0..n - 1 {
        let hb = spec.bond_hamiltonian(b);
        for i in 0..d {
            let li = ((i >> b) & 1) | (((i >> (b + 1)) & 1) << 1);
            let rest = i & !(3 << b);
            for lo in 0..4 {
                let z = hb[(lo, li)];
                if z != C::zero() {
                    let o = rest | ((lo & 1) << b) | ((lo >> 1) << (b + 1));
                    h[(o, i)] += z;
                }
            }
        }
    }
    Ok(h)
}

/// Matrix exponential by scaling and squaring with the degree-13 Padé approximant.
pub fn expm<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().fold(T::zero(), |s, z| s + z.modulus()))
        .fold(T::zero(), |m, v| m.max(v))
        .f64();
    let s = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = T::lit(2f64.powi(-s));
    let a = a.map(|z| z.scale(scale));
    let b = |k: usize| cr::<T>(T::lit(B[k]));
    let id = CMatrix::<T>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b(13) + &a4 * b(11) + &a2 * b(9));
    let u = &a * (inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &id * b(1));
    let v = &a6 * (&a6 * b(12) + &a4 * b(10) + &a2 * b(8)) + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &id * b(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).unwrap_or_else(|| id.clone());
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn bond_from_generator<T: Real>(g: CMatrix<T>, dt: T) -> CMatrix<T> {
    expm(&g.map(|z| z * C::new(T::zero(), dt)))
}

/// `exp(+iδt[(J−γ) X⁺_{j+1}X⁻_j + (J+γ) X⁻_{j+1}X⁺_j])` on `(j, j+1)`.
pub fn bond_hn<T: Real>(j: T, gamma: T, dt: T) -> CMatrix<T> {
    bond_hn_int(j, gamma, T::zero(), dt)
}

/// [`bond_hn`] with `−U n_j n_{j+1}` added to the exponent.
pub fn bond_hn_int<T: Real>(j: T, gamma: T, u: T, dt: T) -> CMatrix<T> {
    let mut g = CMatrix::zeros(4, 4);
    g[(1, 2)] = cr(j + gamma);
    g[(2, 1)] = cr(j - gamma);
    g[(3, 3)] = cr(-u);
    bond_from_generator(g, dt)
}

/// `exp(+iδt (J/2)(XX+YY))`, the propagator of the intercell nH-SSH bond.
pub fn bond_xy<T: Real>(j: T, dt: T) -> CMatrix<T> {
    let mut g = CMatrix::zeros(4, 4);
    g[(1, 2)] = cr(j);
    g[(2, 1)] = cr(j);
    bond_from_generator(g, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// One ancilla per non-unitary bond.
    Local,
    /// One ancilla for the whole register.
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerOp<T: Real> {
    Unitary(CMatrix<T>),
    /// Applied on `targets ++ [ancilla]`, then the ancilla is projected on ↑.
    Dilated {
        ancilla: usize,
        dilation: DilatedUnitary<T>,
        register: CMatrix<T>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T: Real> {
    pub targets: Vec<usize>,
    pub op: LayerOp<T>,
}

impl<T: Real> Layer<T> {
    pub fn is_nonunitary(&self) -> bool {
        matches!(self.op, LayerOp::Dilated { .. })
    }

    fn dilated(targets: Vec<usize>, r: &CMatrix<T>, ancilla: usize) -> Result<Self> {
        let dilation = dilate(r)?;
        let register = dilation.register_matrix();
        Ok(Self { targets, op: LayerOp::Dilated { ancilla, dilation, register } })
    }
}

/// One Trotter step; ancillas sit above the physical qubits and start in ↑.
#[derive(Debug, Clone, PartialEq)]
pub struct TrotterPlan<T: Real> {
    pub scheme: Scheme,
    pub dt: T,
    pub num_physical: usize,
    pub ancilla_count: usize,
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> TrotterPlan<T> {
    pub fn num_qubits(&self) -> usize {
        self.num_physical + self.ancilla_count
    }

    pub fn ancillas(&self) -> Vec<usize> {
        (self.num_physical..self.num_qubits()).collect()
    }

    pub fn dilation_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_nonunitary()).count()
    }

    /// Each ancilla may be bound at most once per step, so the ancillas of one
    /// step can be measured together at its end.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.ancilla_count];
        for layer in &self.layers {
            for &t in &layer.targets {
                if t >= self.num_physical {
                    return Err(Error::Plan(format!("layer targets ancilla qubit {t}")));
                }
            }
            if let LayerOp::Dilated { ancilla, .. } = layer.op {
                let k = ancilla
                    .checked_sub(self.num_physical)
                    .filter(|&k| k < self.ancilla_count)
                    .ok_or_else(|| Error::Plan(format!("ancilla {ancilla} out of range")))?;
                if seen[k] {
                    return Err(Error::Plan(format!("ancilla {ancilla} reused within a step")));
                }
                seen[k] = true;
            }
        }
        Ok(())
    }

    /// Product of all layer blocks `uR` (and unitaries) on the physical register.
    pub fn step_operator(&self) -> Result<CMatrix<T>> {
        let n = self.num_physical;
        let mut m = CMatrix::identity(1 << n, 1 << n);
        for layer in &self.layers {
            let op = match &layer.op {
                LayerOp::Unitary(u) => u.clone(),
                LayerOp::Dilated { dilation, .. } => dilation.block(),
            };
            m = embed(&op, &layer.targets, n)? * m;
        }
        Ok(m)
    }
}

fn bond_propagator<T: Real>(spec: &ModelSpec<T>, b: usize, dt: T) -> CMatrix<T> {
    if spec.kind == ModelKind::Nhssh && b % 2 == 1 {
        bond_xy(spec.j, dt)
    } else {
        bond_hn_int(spec.j, spec.gamma, spec.u_eff(), dt)
    }
}

/// Full-register `R = (Π_even bonds)(Π_odd bonds)` without any rescaling.
pub fn global_step_operator<T: Real>(spec: &ModelSpec<T>, dt: T) -> Result<CMatrix<T>> {
    let n = spec.l;
    let mut r = CMatrix::identity(1 << n, 1 << n);
    for parity in [1, 0] {
        for b in (parity..n - 1).step_by(2) {
            r = embed(&bond_propagator(spec, b, dt), &[b, b + 1], n)? * r;
        }
    }
    Ok(r)
}

pub fn trotter_plan<T: Real>(spec: &ModelSpec<T>, dt: T, scheme: Scheme) -> Result<TrotterPlan<T>> {
    spec.validate()?;
    let n = spec.l;
    match (spec.kind, scheme) {
        (ModelKind::Hn | ModelKind::HnInt, Scheme::Global) => {
            if n > DENSE_CAP {
                return Err(Error::DenseCap { sites: n, cap: DENSE_CAP });
            }
            let r = global_step_operator(spec, dt)?;
            let layer = Layer::dilated((0..n).collect(), &r, n)?;
            Ok(TrotterPlan { scheme, dt, num_physical: n, ancilla_count: 1, layers: vec![layer] })
        }
        (ModelKind::Nhssh, Scheme::Local) => {
            let mut layers = Vec::new();
            let bond = bond_hn(spec.j, spec.gamma, dt);
            for (k, b) in (0..n - 1).step_by(2).enumerate() {
                layers.push(Layer::dilated(vec![b, b + 1], &bond, n + k)?);
            }
            let xy = bond_xy(spec.j, dt);
            for b in (1..n - 1).step_by(2) {
                layers.push(Layer { targets: vec![b, b + 1], op: LayerOp::Unitary(xy.clone()) });
            }
            Ok(TrotterPlan { scheme, dt, num_physical: n, ancilla_count: n / 2, layers })
        }
        (kind, scheme) => Err(Error::Plan(format!("scheme {scheme:?} is not offered for model {kind}"))),
    }
}

/// Per-bond variant of the GLOBAL plan for the Hatano-Nelson models: every bond
/// is dilated with its own ancilla, odd bonds first.
pub fn trotter_plan_per_bond<T: Real>(spec: &ModelSpec<T>, dt: T) -> Result<TrotterPlan<T>> {
    spec.validate()?;
    if spec.kind == ModelKind::Nhssh {
        return Err(Error::Plan("per-bond plan is for the Hatano-Nelson models".into()));
    }
    let n = spec.l;
    let mut layers = Vec::new();
    for parity in [1, 0] {
        for b in (parity..n - 1).step_by(2) {
            let k = layers.len();
            layers.push(Layer::dilated(vec![b, b + 1], &bond_propagator(spec, b, dt), n + k)?);
        }
    }
    Ok(TrotterPlan { scheme: Scheme::Local, dt, num_physical: n, ancilla_count: n - 1, layers })
}

/// `Σ_i Z_i` as a dense diagonal.
pub fn total_z<T: Real>(n: usize) -> CMatrix<T> {
    let d = DVector::from_iterator(
        1 << n,
        (0..1usize << n).map(|i| {
            let up = i.count_ones() as f64;
            cr(T::lit(2.0 * up - n as f64))
        }),
    );
    CMatrix::from_diagonal(&d)
}
