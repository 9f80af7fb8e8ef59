//! Small discrete instances of the critic objective, solved exactly.
//!
//! Atoms carry embedding coordinates and `d` is the squared Euclidean
//! distance between them. The critic is one value per atom.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from, tag};

/// Denominator used when a generated atom coincides with both anchors.
pub const DENOM_EPS: f64 = 1e-9;
const MASS_TOL: f64 = 1e-12;
const BOUND_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteInstance {
    pub atoms: Vec<Vec<f64>>,
    /// Real distribution.
    pub p: Vec<f64>,
    /// Generated distribution.
    pub q: Vec<f64>,
    pub anchors: [usize; 2],
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCritic {
    pub values: Vec<f64>,
}

impl DiscreteCritic {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("critic value".into()));
        }
        Ok(Self { values })
    }

    pub fn constant(m: usize, c: f64) -> Self {
        Self { values: vec![c; m] }
    }
}

fn check_distribution(name: &str, v: &[f64], m: usize) -> Result<()> {
    if v.len() != m {
        return Err(Error::ShapeMismatch(format!("{name} has {} entries for {m} atoms", v.len())));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument(format!("{name} has a negative or non-finite entry")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidArgument(format!("{name} sums to {s}")));
    }
    Ok(())
}

impl DiscreteInstance {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.atoms.len();
        if m < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 atoms, got {m}")));
        }
        let dim = self.atoms[0].len();
        if dim == 0 || self.atoms.iter().any(|a| a.len() != dim || a.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidArgument("atom embeddings must share a positive dimension".into()));
        }
        check_distribution("p", &self.p, m)?;
        check_distribution("q", &self.q, m)?;
        for &a in &self.anchors {
            if a >= m {
                return Err(Error::OutOfBounds(format!("anchor {a} with {m} atoms")));
            }
            if self.p[a] <= 0.0 {
                return Err(Error::InvalidArgument(format!("anchor {a} has no real mass")));
            }
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }

    /// Squared Euclidean distance between two atoms.
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.atoms[i].iter().zip(&self.atoms[j]).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// `d(I₀, x_g) + d(I₁, x_g)` without regularization.
    pub fn raw_weight(&self, g: usize) -> f64 {
        self.dist(self.anchors[0], g) + self.dist(self.anchors[1], g)
    }

    pub fn weight(&self, g: usize) -> f64 {
        let w = self.raw_weight(g);
        if w > 0.0 {
            w
        } else {
            DENOM_EPS
        }
    }

    pub fn total_variation(&self) -> f64 {
        0.5 * self.p.iter().zip(&self.q).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// `p − q`, the linear part of the objective.
    fn linear(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.p.iter().zip(&self.q).map(|(a, b)| a - b))
    }

    /// Graph Laplacian of the quadratic penalty, so the objective reads
    /// `bᵀD − DᵀLD`.
    fn laplacian(&self) -> DMatrix<f64> {
        let m = self.len();
        let w: Vec<f64> = (0..m).map(|g| self.weight(g)).collect();
        let mut l = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in (i + 1)..m {
                let a = self.lambda * (self.p[i] * self.q[j] / w[j] + self.p[j] * self.q[i] / w[i]);
                l[(i, j)] -= a;
                l[(j, i)] -= a;
                l[(i, i)] += a;
                l[(j, j)] += a;
            }
        }
        l
    }
}

/// Exact double sum over real/generated atom pairs.
pub fn objective(inst: &DiscreteInstance, critic: &DiscreteCritic) -> Result<f64> {
    inst.validate()?;
    let m = inst.len();
    if critic.values.len() != m {
        return Err(Error::ShapeMismatch(format!("critic has {} values for {m} atoms", critic.values.len())));
    }
    let d = &critic.values;
    let mut total = 0.0;
    for r in 0..m {
        for g in 0..m {
            let mass = inst.p[r] * inst.q[g];
            if mass == 0.0 {
                continue;
            }
            let delta = d[r] - d[g];
            total += mass * (delta - inst.lambda * delta * delta / inst.weight(g));
        }
    }
    Ok(total)
}

fn gradient(b: &DVector<f64>, l: &DMatrix<f64>, d: &DVector<f64>) -> DVector<f64> {
    b - 2.0 * (l * d)
}

/// Ascent along conjugate directions from zero, restricted to mean-zero
/// critics. Stops once the gradient norm falls below `tol`.
pub fn maximize_iterative(inst: &DiscreteInstance, tol: f64, max_iter: usize) -> Result<(DiscreteCritic, f64)> {
    inst.validate()?;
    let (b, l) = (inst.linear(), inst.laplacian());
    let m = inst.len();
    let mut d = DVector::zeros(m);
    let mut r = gradient(&b, &l, &d);
    let mut dir = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol {
            let critic = DiscreteCritic::new(d.iter().copied().collect())?;
            let v = objective(inst, &critic)?;
            return Ok((critic, v));
        }
        let ad = 2.0 * (&l * &dir);
        let curv = dir.dot(&ad);
        if curv <= 0.0 {
            break;
        }
        let step = rr / curv;
        d += step * &dir;
        // Recompute rather than update, so rounding does not accumulate.
        r = gradient(&b, &l, &d);
        let mean = r.mean();
        r.add_scalar_mut(-mean);
        let next = r.dot(&r);
        dir = &r + (next / rr) * &dir;
        rr = next;
    }
    if rr.sqrt() <= tol {
        let critic = DiscreteCritic::new(d.iter().copied().collect())?;
        let v = objective(inst, &critic)?;
        return Ok((critic, v));
    }
    Err(Error::NoConvergence(format!("gradient norm {} after {max_iter} iterations", rr.sqrt())))
}

/// Maximizes the concave quadratic objective by solving `2LD = b`.
pub fn maximize(inst: &DiscreteInstance) -> Result<(DiscreteCritic, f64)> {
    inst.validate()?;
    let (b, l) = (inst.linear(), inst.laplacian());
    let scale = l.amax().max(f64::MIN_POSITIVE);
    let solved = (2.0 * &l)
        .pseudo_inverse(scale * 1e-13)
        .ok()
        .map(|pinv| pinv * &b)
        .filter(|d| gradient(&b, &l, d).norm() <= 1e-10 * (1.0 + b.norm()));
    match solved {
        Some(d) => {
            let critic = DiscreteCritic::new(d.iter().copied().collect())?;
            let v = objective(inst, &critic)?;
            Ok((critic, v))
        }
        None => maximize_iterative(inst, 1e-10, 100 * inst.len()),
    }
}

/// `D₀ = t·sign(p − q)` with `t` chosen to maximize the objective along
/// that direction. Returns the scaled critic and its value.
pub fn sign_construction(inst: &DiscreteInstance) -> Result<(DiscreteCritic, f64)> {
    inst.validate()?;
    let m = inst.len();
    let s: Vec<f64> = (0..m)
        .map(|i| {
            let d = inst.p[i] - inst.q[i];
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    let unit = DiscreteCritic { values: s.clone() };
    let lin: f64 = (0..m).map(|i| (inst.p[i] - inst.q[i]) * s[i]).sum();
    // Objective along the ray is lin·t − quad·t².
    let quad = lin - objective(inst, &unit)?;
    let t = if quad > 0.0 { lin / (2.0 * quad) } else { 0.0 };
    let critic = DiscreteCritic { values: s.iter().map(|v| v * t).collect() };
    let v = objective(inst, &critic)?;
    Ok((critic, v))
}

/// Largest absolute gap between the two sides of the optimum relation over
/// pairs where either ordering carries mass.
pub fn check_optimum_relation(inst: &DiscreteInstance, critic: &DiscreteCritic) -> Result<f64> {
    inst.validate()?;
    let m = inst.len();
    if critic.values.len() != m {
        return Err(Error::ShapeMismatch(format!("critic has {} values for {m} atoms", critic.values.len())));
    }
    let d = &critic.values;
    let mut worst = 0.0f64;
    for r in 0..m {
        for g in 0..m {
            if r == g {
                continue;
            }
            let cross = inst.p[r] * inst.q[g] + inst.p[g] * inst.q[r];
            if cross == 0.0 {
                continue;
            }
            let w = inst.raw_weight(g);
            if w == 0.0 {
                return Err(Error::ZeroDenominator(format!("anchor distance sum at atom {g}")));
            }
            let lhs = 2.0 * inst.lambda * (d[r] - d[g]) / w;
            let rhs = (inst.p[r] * inst.q[g] - inst.p[g] * inst.q[r]) / cross;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCheck {
    /// `|D(x_r) − D(x_g)| ≤ (d(I₀,x_g) + d(I₁,x_g)) / 2λ` for every anchor `x_r`.
    pub holds: bool,
    /// Largest `|D(x_r) − D(x_g)|` over its bound.
    pub worst_ratio: f64,
    /// `|D(x_r) − D(x_g)| ≤ d(x_r, x_g) / λ`.
    pub weak_holds: bool,
    pub weak_worst_ratio: f64,
}

/// Pairs an anchor with every atom in the generated support.
pub fn check_lipschitz(inst: &DiscreteInstance, critic: &DiscreteCritic) -> Result<LipschitzCheck> {
    inst.validate()?;
    let m = inst.len();
    if critic.values.len() != m {
        return Err(Error::ShapeMismatch(format!("critic has {} values for {m} atoms", critic.values.len())));
    }
    let d = &critic.values;
    let mut out = LipschitzCheck { holds: true, worst_ratio: 0.0, weak_holds: true, weak_worst_ratio: 0.0 };
    for &r in &inst.anchors {
        for g in (0..m).filter(|&g| g != r && inst.q[g] > 0.0) {
            let gap = (d[r] - d[g]).abs();
            let bound = inst.weight(g) / (2.0 * inst.lambda);
            out.holds &= gap <= bound + BOUND_TOL;
            out.worst_ratio = out.worst_ratio.max(gap / bound);
            let weak = inst.dist(r, g) / inst.lambda;
            out.weak_holds &= gap <= weak + BOUND_TOL;
            if weak > 0.0 {
                out.weak_worst_ratio = out.weak_worst_ratio.max(gap / weak);
            } else if gap > 0.0 {
                out.weak_worst_ratio = f64::INFINITY;
            }
        }
    }
    Ok(out)
}

/// Shape of a randomly drawn instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    /// `p = q`.
    Equal,
    /// Two atoms, each an anchor.
    TwoAtom,
    General,
}

fn random_simplex<R: Rng + ?Sized>(rng: &mut R, m: usize, keep: &[usize]) -> Vec<f64> {
    let mut v: Vec<f64> = (0..m)
        .map(|i| {
            // Occasionally drop an atom from the support.
            if !keep.contains(&i) && rng.random::<f64>() < 0.2 {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    if v.iter().all(|x| *x == 0.0) {
        v[0] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Random valid instance with `m` atoms in the unit square and
/// `λ ∈ [0.05, 1]`.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, m: usize, kind: InstanceKind) -> DiscreteInstance {
    let m = if kind == InstanceKind::TwoAtom { 2 } else { m.max(2) };
    let atoms: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let a0 = rng.random_range(0..m);
    let a1 = (a0 + rng.random_range(1..m)) % m;
    let p = random_simplex(rng, m, &[a0, a1]);
    let q = match kind {
        InstanceKind::Equal => p.clone(),
        InstanceKind::TwoAtom => random_simplex(rng, m, &[0, 1]),
        InstanceKind::General => random_simplex(rng, m, &[]),
    };
    DiscreteInstance { atoms, p, q, anchors: [a0, a1], lambda: rng.random_range(0.05..=1.0) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub kind: InstanceKind,
    pub atoms: usize,
    pub lambda: f64,
    pub total_variation: f64,
    pub max_value: f64,
    pub iterative_value: f64,
    pub sign_value: f64,
    pub relation_residual: f64,
    pub lipschitz: LipschitzCheck,
    /// Max value is at least −1e-9.
    pub nonnegative: bool,
    /// `|max| ≤ 1e-8` when `p = q`, `max > 1e-10` when the total variation is
    /// at least 0.01, vacuous otherwise.
    pub identity: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivlabReport {
    pub count: usize,
    pub seed: u64,
    pub nonnegative: bool,
    pub identity: bool,
    /// Anchor bound over every instance.
    pub lipschitz: bool,
    /// Anchor bound over two-atom instances only.
    pub lipschitz_two_atom: bool,
    /// Largest relation residual over two-atom instances.
    pub two_atom_residual: f64,
    /// Largest gap between the direct and iterative optimum values.
    pub solver_gap: f64,
    pub sign_dominated: bool,
    pub worst_lipschitz_ratio: f64,
    pub worst_weak_ratio: f64,
    pub instances: Vec<InstanceReport>,
}

impl DivlabReport {
    /// Nonnegativity and identity over every instance.
    pub fn axioms_hold(&self) -> bool {
        self.nonnegative && self.identity
    }
}

pub fn analyze(inst: &DiscreteInstance, kind: InstanceKind) -> Result<InstanceReport> {
    let (critic, max_value) = maximize(inst)?;
    let (_, iterative_value) = maximize_iterative(inst, 1e-10, 100 * inst.len())?;
    let (_, sign_value) = sign_construction(inst)?;
    let tv = inst.total_variation();
    let identity = if inst.p == inst.q {
        max_value.abs() <= 1e-8
    } else if tv >= 0.01 {
        max_value > 1e-10
    } else {
        true
    };
    Ok(InstanceReport {
        kind,
        atoms: inst.len(),
        lambda: inst.lambda,
        total_variation: tv,
        max_value,
        iterative_value,
        sign_value,
        relation_residual: check_optimum_relation(inst, &critic)?,
        lipschitz: check_lipschitz(inst, &critic)?,
        nonnegative: max_value >= -1e-9,
        identity,
    })
}

/// Draws `count` instances (cycling equal, two-atom and general kinds with
/// 2 to 8 atoms) and checks each.
pub fn run_suite(count: usize, seed: u64) -> Result<DivlabReport> {
    if count == 0 {
        return Err(Error::InvalidArgument("instance count must be at least 1".into()));
    }
    let mut rng = rng_from(seed, &[tag::DIVLAB]);
    let mut instances = Vec::with_capacity(count);
    for i in 0..count {
        let kind = match i % 4 {
            0 => InstanceKind::Equal,
            1 => InstanceKind::TwoAtom,
            _ => InstanceKind::General,
        };
        let m = rng.random_range(2..=8);
        let inst = random_instance(&mut rng, m, kind);
        instances.push(analyze(&inst, kind)?);
    }
    let fold = |f: &dyn Fn(&InstanceReport) -> f64| instances.iter().map(f).fold(0.0f64, f64::max);
    Ok(DivlabReport {
        count,
        seed,
        nonnegative: instances.iter().all(|r| r.nonnegative),
        identity: instances.iter().all(|r| r.identity),
        lipschitz: instances.iter().all(|r| r.lipschitz.holds),
        lipschitz_two_atom: instances.iter().filter(|r| r.kind == InstanceKind::TwoAtom).all(|r| r.lipschitz.holds),
        two_atom_residual: fold(&|r| if r.kind == InstanceKind::TwoAtom { r.relation_residual } else { 0.0 }),
        solver_gap: fold(&|r| (r.max_value - r.iterative_value).abs()),
        sign_dominated: instances.iter().all(|r| r.max_value >= r.sign_value - 1e-12),
        worst_lipschitz_ratio: fold(&|r| r.lipschitz.worst_ratio),
        worst_weak_ratio: fold(&|r| r.lipschitz.weak_worst_ratio),
        instances,
    })
}
