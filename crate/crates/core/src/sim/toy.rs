//! Finite observed-data laws, the compatible counterfactual construction,
//! and an exact pathwise-derivative check of the efficient influence function.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pseudo_outcome, BiomarkerKind, Component, Dataset, Observation, TargetSpec};
use crate::tmle::eif::eif_component;

/// Cells carry probability mass only if they respect the observation
/// pattern: treated subjects have `S^c` at code 0, untreated subjects have
/// `S` at code 0, and untreated cases have `S^c` at code 0.
fn admissible(a: bool, s: usize, y: bool, sc: usize) -> bool {
    if a {
        sc == 0
    } else {
        s == 0 && (!y || sc == 0)
    }
}

/// Joint law of `(W, A, S, Y, S^c)` on finite supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteToy {
    pub w_values: Vec<f64>,
    pub s_values: Vec<f64>,
    /// Row-major over `(w, a, s, y, s^c)` with shape `(|W|, 2, |S|, 2, |S|)`.
    pub prob: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub w: usize,
    pub a: bool,
    pub s: usize,
    pub y: bool,
    pub sc: usize,
}

impl DiscreteToy {
    pub fn new(w_values: Vec<f64>, s_values: Vec<f64>, prob: Vec<f64>) -> Result<Self> {
        let (nw, ns) = (w_values.len(), s_values.len());
        if nw == 0 || ns == 0 {
            return Err(Error::MalformedTable("supports must be nonempty".into()));
        }
        if prob.len() != nw * 4 * ns * ns {
            return Err(Error::MalformedTable(format!(
                "expected {} probabilities, got {}",
                nw * 4 * ns * ns,
                prob.len()
            )));
        }
        let toy = Self { w_values, s_values, prob };
        let mut total = 0.0;
        for c in toy.cells() {
            let p = toy.p(c);
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::MalformedTable(format!("invalid probability {p} at {c:?}")));
            }
            if p > 0.0 && !admissible(c.a, c.s, c.y, c.sc) {
                return Err(Error::MalformedTable(format!("mass on structurally impossible cell {c:?}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::MalformedTable(format!("probabilities sum to {total}")));
        }
        Ok(toy)
    }

    pub fn nw(&self) -> usize {
        self.w_values.len()
    }

    pub fn ns(&self) -> usize {
        self.s_values.len()
    }

    pub fn index(&self, c: Cell) -> usize {
        let ns = self.ns();
        (((c.w * 2 + c.a as usize) * ns + c.s) * 2 + c.y as usize) * ns + c.sc
    }

    pub fn p(&self, c: Cell) -> f64 {
        self.prob[self.index(c)]
    }

    /// Every cell in index order.
    pub fn cells(&self) -> Vec<Cell> {
        let (nw, ns) = (self.nw(), self.ns());
        let mut out = Vec::with_capacity(self.prob.len());
        for w in 0..nw {
            for a in [false, true] {
                for s in 0..ns {
                    for y in [false, true] {
                        for sc in 0..ns {
                            out.push(Cell { w, a, s, y, sc });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn p_w(&self, w: usize) -> f64 {
        self.p_aw(true, w) + self.p_aw(false, w)
    }

    /// `p(a, w)`.
    pub fn p_aw(&self, a: bool, w: usize) -> f64 {
        let ns = self.ns();
        let start = self.index(Cell { w, a, s: 0, y: false, sc: 0 });
        self.prob[start..start + 2 * ns * ns].iter().sum()
    }

    fn conditional(&self, a: bool, w: usize, mass: f64) -> f64 {
        let d = self.p_aw(a, w);
        if d > 0.0 {
            mass / d
        } else {
            0.0
        }
    }

    pub fn treatment_prob(&self, a: bool, w: usize) -> f64 {
        let pw = self.p_w(w);
        if pw > 0.0 {
            self.p_aw(a, w) / pw
        } else {
            0.0
        }
    }

    /// `P(S = s | A = 1, w)`.
    pub fn marker(&self, w: usize, s: usize) -> f64 {
        let m = self.p(Cell { w, a: true, s, y: false, sc: 0 }) + self.p(Cell { w, a: true, s, y: true, sc: 0 });
        self.conditional(true, w, m)
    }

    /// `P(S = s, Y = 1 | A = 1, w)`.
    pub fn marker_case(&self, w: usize, s: usize) -> f64 {
        self.conditional(true, w, self.p(Cell { w, a: true, s, y: true, sc: 0 }))
    }

    /// `P(Y = y | A = 1, S = s, w)`; a point mass at `y = 0` when `P(S = s | A = 1, w) = 0`.
    pub fn treated_outcome(&self, w: usize, s: usize, y: bool) -> f64 {
        let m = self.marker(w, s);
        if m > 0.0 {
            let case = self.marker_case(w, s) / m;
            if y {
                case
            } else {
                1.0 - case
            }
        } else if y {
            0.0
        } else {
            1.0
        }
    }

    /// `P(S^c = s, Y = 0 | A = 0, w)`.
    pub fn crossover(&self, w: usize, s: usize) -> f64 {
        self.conditional(false, w, self.p(Cell { w, a: false, s: 0, y: false, sc: s }))
    }

    /// `P(Y = 0 | A = 0, w)`.
    pub fn untreated_non_case(&self, w: usize) -> f64 {
        (0..self.ns()).map(|s| self.crossover(w, s)).sum()
    }

    /// `P(S^c = s | Y = 0, A = 0, w)`; a point mass at code 0 when undefined.
    pub fn crossover_given_non_case(&self, w: usize, s: usize) -> f64 {
        let nc = self.untreated_non_case(w);
        if nc > 0.0 {
            self.crossover(w, s) / nc
        } else if s == 0 {
            1.0
        } else {
            0.0
        }
    }

    /// `(Ψ₁, Ψ₂, Ψ₃)` at biomarker code `j`.
    pub fn psi(&self, j: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for w in 0..self.nw() {
            let pw = self.p_w(w);
            out[0] += pw * self.marker(w, j);
            out[1] += pw * self.marker_case(w, j);
            out[2] += pw * self.crossover(w, j);
        }
        out
    }

    /// `Ψ₄ = Σ_w p(w) Σ_s (P(S^c=s,Y=0|A=0,w) − P(S=s|A=1,w))⁺ P(S=s|A=1,w)`.
    pub fn psi4(&self) -> f64 {
        (0..self.nw())
            .map(|w| {
                let inner: f64 = (0..self.ns())
                    .map(|s| {
                        let m = self.marker(w, s);
                        (self.crossover(w, s) - m).max(0.0) * m
                    })
                    .sum();
                self.p_w(w) * inner
            })
            .sum()
    }

    pub fn observation(&self, c: Cell) -> Observation<f64> {
        Observation::new(
            vec![self.w_values[c.w]],
            c.a,
            Some(self.s_values[c.s]),
            c.y,
            Some(self.s_values[c.sc]),
        )
    }

    /// Efficient influence function at cell `c` for target code `j`, built
    /// from the library's pseudo-outcomes and EIF components.
    pub fn eif(&self, j: usize, c: Cell) -> [f64; 3] {
        let spec = TargetSpec::discrete(self.s_values[j]);
        let o = self.observation(c);
        let psi = self.psi(j);
        let means = [self.marker(c.w, j), self.marker_case(c.w, j), self.crossover(c.w, j)];
        let mut out = [0.0; 3];
        for k in Component::ALL {
            let f = pseudo_outcome(&o, k, &spec, BiomarkerKind::Discrete).expect("phase-two cell");
            let g = self.treatment_prob(k.arm(), c.w);
            out[k.index()] = eif_component(k, c.a, g, f, means[k.index()], psi[k.index()]);
        }
        out
    }

    /// `dP_ε = (1 + ε h) dP`.
    pub fn tilt(&self, h: &[f64], eps: f64) -> Self {
        Self {
            w_values: self.w_values.clone(),
            s_values: self.s_values.clone(),
            prob: self.prob.iter().zip(h).map(|(p, hi)| p * (1.0 + eps * hi)).collect(),
        }
    }
}

/// Weighted empirical law of a discrete-biomarker dataset. Phase-two
/// subjects carry weight `1/π`; covariate vectors are coded by their
/// distinct values in sorted order.
pub fn empirical_toy(d: &Dataset<f64>, max_covariate_cells: usize) -> Result<DiscreteToy> {
    if d.biomarker_kind != BiomarkerKind::Discrete {
        return Err(Error::UnsupportedMode("empirical laws need a discrete biomarker".into()));
    }
    let mut w_rows: Vec<&[f64]> = d.iter().map(|o| o.w.as_slice()).collect();
    w_rows.sort_by(|a, b| a.partial_cmp(b).expect("finite covariates"));
    w_rows.dedup();
    if w_rows.len() > max_covariate_cells {
        return Err(Error::UnsupportedMode(format!(
            "{} distinct covariate values exceed the limit of {max_covariate_cells}",
            w_rows.len()
        )));
    }
    let mut support: Vec<f64> = Vec::new();
    for o in d.iter().filter(|o| o.delta) {
        let v = if o.a { o.s } else if !o.y { o.s_c } else { None };
        if let Some(v) = v {
            support.push(v);
        }
    }
    support.sort_by(|a, b| a.partial_cmp(b).expect("finite biomarker"));
    support.dedup();
    if support.is_empty() {
        return Err(Error::EmptyStratum("no measured biomarker values".into()));
    }
    let code = |v: Option<f64>| -> Result<usize> {
        let v = v.ok_or_else(|| Error::InvalidArgument("missing biomarker".into()))?;
        Ok(support.iter().position(|&x| x == v).expect("value in support"))
    };
    let mut toy = DiscreteToy {
        w_values: (0..w_rows.len()).map(|i| i as f64).collect(),
        s_values: support.clone(),
        prob: vec![0.0; w_rows.len() * 4 * support.len() * support.len()],
    };
    let mut total = 0.0;
    for o in d.iter().filter(|o| o.delta) {
        let w = w_rows
            .binary_search_by(|k| (*k).partial_cmp(o.w.as_slice()).expect("finite covariates"))
            .expect("covariate value in table");
        let cell = if o.a {
            Cell { w, a: true, s: code(o.s)?, y: o.y, sc: 0 }
        } else if o.y {
            Cell { w, a: false, s: 0, y: true, sc: 0 }
        } else {
            Cell { w, a: false, s: 0, y: false, sc: code(o.s_c)? }
        };
        let i = toy.index(cell);
        toy.prob[i] += 1.0 / o.pi;
        total += 1.0 / o.pi;
    }
    for p in &mut toy.prob {
        *p /= total;
    }
    DiscreteToy::new(toy.w_values, toy.s_values, toy.prob)
}

/// Full-data law of `(W, A, S₁, Y₀, S₀^c, Y₁)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualToy {
    pub w_values: Vec<f64>,
    pub s_values: Vec<f64>,
    /// Row-major over `(w, a, s₁, y₀, s₀^c, y₁)`.
    pub prob: Vec<f64>,
}

impl CounterfactualToy {
    fn ns(&self) -> usize {
        self.s_values.len()
    }

    pub fn index(&self, w: usize, a: bool, s1: usize, y0: bool, s0c: usize, y1: bool) -> usize {
        let ns = self.ns();
        ((((w * 2 + a as usize) * ns + s1) * 2 + y0 as usize) * ns + s0c) * 2 + y1 as usize
    }

    fn for_each(&self, mut f: impl FnMut(usize, bool, usize, bool, usize, bool, f64)) {
        let ns = self.ns();
        for w in 0..self.w_values.len() {
            for a in [false, true] {
                for s1 in 0..ns {
                    for y0 in [false, true] {
                        for s0c in 0..ns {
                            for y1 in [false, true] {
                                f(w, a, s1, y0, s0c, y1, self.prob[self.index(w, a, s1, y0, s0c, y1)]);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Observed law `(W, A, 1{A=1}S₁, Y_A, 1{A=0}S₀^c)`, with the crossover
    /// biomarker of untreated cases recorded at code 0.
    pub fn observed(&self) -> Result<DiscreteToy> {
        let ns = self.ns();
        let nw = self.w_values.len();
        let mut prob = vec![0.0; nw * 4 * ns * ns];
        let shell = DiscreteToy {
            w_values: self.w_values.clone(),
            s_values: self.s_values.clone(),
            prob: Vec::new(),
        };
        self.for_each(|w, a, s1, y0, s0c, y1, p| {
            let c = if a {
                Cell { w, a, s: s1, y: y1, sc: 0 }
            } else {
                Cell {
                    w,
                    a,
                    s: 0,
                    y: y0,
                    sc: if y0 { 0 } else { s0c },
                }
            };
            prob[shell.index(c)] += p;
        });
        DiscreteToy::new(self.w_values.clone(), self.s_values.clone(), prob)
    }

    /// `max_w,s |P(S₁=s, Y₀=0 | w) − P(S₀^c=s, Y₀=0 | w)|`.
    pub fn crossover_discrepancy(&self) -> f64 {
        let ns = self.ns();
        let nw = self.w_values.len();
        let mut lhs = vec![0.0; nw * ns];
        let mut rhs = vec![0.0; nw * ns];
        let mut pw = vec![0.0; nw];
        self.for_each(|w, _, s1, y0, s0c, _, p| {
            pw[w] += p;
            if !y0 {
                lhs[w * ns + s1] += p;
                rhs[w * ns + s0c] += p;
            }
        });
        let mut worst: f64 = 0.0;
        for w in 0..nw {
            if pw[w] > 0.0 {
                for s in 0..ns {
                    worst = worst.max((lhs[w * ns + s] - rhs[w * ns + s]).abs() / pw[w]);
                }
            }
        }
        worst
    }

    /// `max |p(s₁, y₀, s₀^c, y₁ | A=1, w) − p(s₁, y₀, s₀^c, y₁ | A=0, w)|`.
    pub fn ignorability_discrepancy(&self) -> f64 {
        let ns = self.ns();
        let block = 2 * ns * 2 * ns;
        let mut worst: f64 = 0.0;
        for w in 0..self.w_values.len() {
            let b0 = &self.prob[self.index(w, false, 0, false, 0, false)..][..block];
            let b1 = &self.prob[self.index(w, true, 0, false, 0, false)..][..block];
            let (t0, t1): (f64, f64) = (b0.iter().sum(), b1.iter().sum());
            if t0 > 0.0 && t1 > 0.0 {
                for (x, y) in b0.iter().zip(b1) {
                    worst = worst.max((x / t0 - y / t1).abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionChecks {
    pub min_density: f64,
    pub max_normalization_error: f64,
    /// Induced observed law versus the input law.
    pub max_margin_error: f64,
    pub max_ignorability_error: f64,
    pub max_crossover_error: f64,
}

impl ConstructionChecks {
    pub fn passes(&self, tol: f64) -> bool {
        self.min_density >= -tol
            && self.max_normalization_error <= tol
            && self.max_margin_error <= tol
            && self.max_ignorability_error <= tol
            && self.max_crossover_error <= tol
    }
}

/// Covariate and biomarker codes where `P(S^c=s,Y=0|A=0,w) > P(S=s|A=1,w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityCertificate {
    /// `(w, s, excess)` for every violating cell.
    pub violations: Vec<(usize, usize, f64)>,
    /// The cell with the largest excess.
    pub witness: (usize, usize),
    pub psi4: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Construction {
    Compatible {
        counterfactual: CounterfactualToy,
        checks: ConstructionChecks,
    },
    Infeasible(InfeasibilityCertificate),
}

const FEASIBILITY_TOL: f64 = 1e-12;

/// Build a full-data law that reproduces `obs`, satisfies ignorability and
/// the crossover assumption, or certify that no such law exists.
pub fn construct_compatible_counterfactual(obs: &DiscreteToy) -> Result<Construction> {
    let (nw, ns) = (obs.nw(), obs.ns());
    let mut violations = Vec::new();
    for w in 0..nw {
        if obs.p_w(w) <= 0.0 {
            continue;
        }
        for s in 0..ns {
            let excess = obs.crossover(w, s) - obs.marker(w, s);
            if excess > FEASIBILITY_TOL {
                violations.push((w, s, excess));
            }
        }
    }
    if !violations.is_empty() {
        let &(w, s, _) = violations
            .iter()
            .max_by(|a, b| a.2.partial_cmp(&b.2).expect("finite excess"))
            .expect("nonempty");
        return Ok(Construction::Infeasible(InfeasibilityCertificate {
            violations,
            witness: (w, s),
            psi4: obs.psi4(),
        }));
    }

    let joint_sy = |w: usize, s1: usize, y0: bool| {
        if y0 {
            obs.marker(w, s1) - obs.crossover(w, s1)
        } else {
            obs.crossover(w, s1)
        }
    };
    let mut prob = vec![0.0; nw * 2 * ns * 2 * ns * 2];
    let mut cf = CounterfactualToy {
        w_values: obs.w_values.clone(),
        s_values: obs.s_values.clone(),
        prob: Vec::new(),
    };
    let mut min_density = f64::INFINITY;
    let mut norm_err: f64 = 0.0;
    for w in 0..nw {
        let sc_sum: f64 = (0..ns).map(|s| obs.crossover_given_non_case(w, s)).sum();
        norm_err = norm_err.max((sc_sum - 1.0).abs());
        for s1 in 0..ns {
            let y_sum = obs.treated_outcome(w, s1, false) + obs.treated_outcome(w, s1, true);
            norm_err = norm_err.max((y_sum - 1.0).abs());
        }
        for a in [false, true] {
            let paw = obs.p_aw(a, w);
            min_density = min_density.min(paw);
            let mut sy_sum = 0.0;
            for s1 in 0..ns {
                for y0 in [false, true] {
                    let psy = joint_sy(w, s1, y0);
                    min_density = min_density.min(psy);
                    sy_sum += psy;
                    for s0c in 0..ns {
                        let psc = obs.crossover_given_non_case(w, s0c);
                        min_density = min_density.min(psc);
                        for y1 in [false, true] {
                            let py1 = obs.treated_outcome(w, s1, y1);
                            min_density = min_density.min(py1);
                            prob[cf.index(w, a, s1, y0, s0c, y1)] = paw * psy * psc * py1;
                        }
                    }
                }
            }
            if obs.p_w(w) > 0.0 {
                norm_err = norm_err.max((sy_sum - 1.0).abs());
            }
        }
    }
    let total: f64 = prob.iter().sum();
    norm_err = norm_err.max((total - 1.0).abs());
    cf.prob = prob;

    let induced = cf.observed();
    let max_margin_error = match &induced {
        Ok(t) => t
            .prob
            .iter()
            .zip(&obs.prob)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    let checks = ConstructionChecks {
        min_density,
        max_normalization_error: norm_err,
        max_margin_error,
        max_ignorability_error: cf.ignorability_discrepancy(),
        max_crossover_error: cf.crossover_discrepancy(),
    };
    Ok(Construction::Compatible {
        counterfactual: cf,
        checks,
    })
}

fn uniform_simplex(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let t: f64 = v.iter().sum();
    v.into_iter().map(|x| x / t).collect()
}

/// A random full-data law with `S₀^c = S₁` and randomized treatment.
pub fn random_counterfactual(rng: &mut impl Rng, nw: usize, ns: usize) -> CounterfactualToy {
    let mut cf = CounterfactualToy {
        w_values: (0..nw).map(|i| i as f64).collect(),
        s_values: (0..ns).map(|i| i as f64).collect(),
        prob: vec![0.0; nw * 2 * ns * 2 * ns * 2],
    };
    let pw = uniform_simplex(rng, nw);
    for (w, &pw_w) in pw.iter().enumerate() {
        let g = rng.random_range(0.2..0.8);
        let ps = uniform_simplex(rng, ns);
        for (s1, &ps_s) in ps.iter().enumerate() {
            let r1 = rng.random_range(0.05..0.6);
            let r0 = rng.random_range(0.05..0.6);
            for a in [false, true] {
                let pa = if a { g } else { 1.0 - g };
                for y0 in [false, true] {
                    for y1 in [false, true] {
                        let p = pw_w
                            * pa
                            * ps_s
                            * if y0 { r0 } else { 1.0 - r0 }
                            * if y1 { r1 } else { 1.0 - r1 };
                        let idx = cf.index(w, a, s1, y0, s1, y1);
                        cf.prob[idx] = p;
                    }
                }
            }
        }
    }
    cf
}

/// A random observed law for which the crossover assumption is compatible.
pub fn random_feasible_toy(rng: &mut impl Rng, nw: usize, ns: usize) -> DiscreteToy {
    random_counterfactual(rng, nw, ns).observed().expect("valid by construction")
}

/// A random observed law with exactly one cell `(w, s)` where
/// `P(S^c=s,Y=0|A=0,w) > P(S=s|A=1,w)`; returns the law and that cell.
pub fn random_infeasible_toy(rng: &mut impl Rng, nw: usize, ns: usize) -> (DiscreteToy, (usize, usize)) {
    let base = random_feasible_toy(rng, nw, ns);
    let w_star = rng.random_range(0..nw);
    let s_star = rng.random_range(0..ns);
    // Marker law at w* with little mass on s*, and a crossover law that puts
    // more than that mass on s* while staying below the marker elsewhere.
    let mut m = uniform_simplex(rng, ns);
    let small = rng.random_range(0.01..0.1);
    let rest: f64 = (0..ns).filter(|&s| s != s_star).map(|s| m[s]).sum();
    for s in 0..ns {
        m[s] = if s == s_star { small } else { m[s] / rest * (1.0 - small) };
    }
    let c: Vec<f64> = (0..ns)
        .map(|s| {
            if s == s_star {
                small + rng.random_range(0.05..0.3)
            } else {
                m[s] * rng.random_range(0.1..0.5)
            }
        })
        .collect();
    let non_case: f64 = c.iter().sum();
    let mut prob = base.prob.clone();
    let shell = &base;
    let (p1, p0) = (base.p_aw(true, w_star), base.p_aw(false, w_star));
    for s in 0..ns {
        let case = base.treated_outcome(w_star, s, true).clamp(0.05, 0.95);
        prob[shell.index(Cell { w: w_star, a: true, s, y: true, sc: 0 })] = p1 * m[s] * case;
        prob[shell.index(Cell { w: w_star, a: true, s, y: false, sc: 0 })] = p1 * m[s] * (1.0 - case);
        prob[shell.index(Cell { w: w_star, a: false, s: 0, y: false, sc: s })] = p0 * c[s];
    }
    prob[shell.index(Cell { w: w_star, a: false, s: 0, y: true, sc: 0 })] = p0 * (1.0 - non_case);
    let toy = DiscreteToy::new(base.w_values.clone(), base.s_values.clone(), prob).expect("valid by construction");
    (toy, (w_star, s_star))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwiseReport {
    pub eps: Vec<f64>,
    /// `max_k |Ψ_k(P_ε) − Ψ_k(P) − ε E[D_k h]| / ε²` per ε.
    pub ratios: Vec<f64>,
    /// `E_P[D h]`.
    pub derivative: [f64; 3],
    /// `max_k |Ψ_k(P_ε) − Ψ_k(P)|` per ε.
    pub changes: Vec<f64>,
}

impl PathwiseReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }

    /// Largest over smallest ratio across the grid.
    pub fn ratio_spread(&self) -> f64 {
        let lo = self.ratios.iter().copied().fold(f64::INFINITY, f64::min);
        self.max_ratio() / lo
    }
}

/// Compare `Ψ(P_ε) − Ψ(P)` with `ε E[D h]` along `dP_ε = (1 + εh) dP`.
pub fn pathwise_derivative_check(obs: &DiscreteToy, j: usize, h: &[f64], eps_grid: &[f64]) -> Result<PathwiseReport> {
    if j >= obs.ns() {
        return Err(Error::InvalidArgument(format!("biomarker code {j} is out of range")));
    }
    if h.len() != obs.prob.len() {
        return Err(Error::InvalidArgument("direction must have one entry per cell".into()));
    }
    let cells = obs.cells();
    let mean: f64 = obs.prob.iter().zip(h).map(|(p, v)| p * v).sum();
    if mean.abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("direction has mean {mean}, expected zero")));
    }
    let sup = obs
        .prob
        .iter()
        .zip(h)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    let eps_max = eps_grid.iter().copied().map(f64::abs).fold(0.0, f64::max);
    if sup * eps_max >= 1.0 {
        return Err(Error::InvalidArgument("direction is too large for the ε grid".into()));
    }
    let mut derivative = [0.0; 3];
    for (c, (&p, &hv)) in cells.iter().zip(obs.prob.iter().zip(h)) {
        if p > 0.0 {
            let d = obs.eif(j, *c);
            for k in 0..3 {
                derivative[k] += p * d[k] * hv;
            }
        }
    }
    let base = obs.psi(j);
    let mut ratios = Vec::with_capacity(eps_grid.len());
    let mut changes = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let moved = obs.tilt(h, eps).psi(j);
        let mut worst: f64 = 0.0;
        let mut change: f64 = 0.0;
        for k in 0..3 {
            worst = worst.max((moved[k] - base[k] - eps * derivative[k]).abs());
            change = change.max((moved[k] - base[k]).abs());
        }
        ratios.push(worst / (eps * eps));
        changes.push(change);
    }
    Ok(PathwiseReport {
        eps: eps_grid.to_vec(),
        ratios,
        derivative,
        changes,
    })
}

/// Centered uniform direction `u − E_P[u]` on the support of `obs`.
pub fn random_direction(obs: &DiscreteToy, rng: &mut impl Rng) -> Vec<f64> {
    let u: Vec<f64> = obs
        .prob
        .iter()
        .map(|&p| if p > 0.0 { rng.random_range(-1.0..1.0) } else { 0.0 })
        .collect();
    let m: f64 = obs.prob.iter().zip(&u).map(|(p, v)| p * v).sum();
    obs.prob.iter().zip(u).map(|(&p, v)| if p > 0.0 { v - m } else { 0.0 }).collect()
}

/// A score of the treatment mechanism: `(a − P(A=1|w)) c(w)`.
pub fn treatment_score_direction(obs: &DiscreteToy, rng: &mut impl Rng) -> Vec<f64> {
    let c: Vec<f64> = (0..obs.nw()).map(|_| rng.random_range(-1.0..1.0)).collect();
    obs.cells()
        .iter()
        .map(|cell| {
            let a = if cell.a { 1.0 } else { 0.0 };
            (a - obs.treatment_prob(true, cell.w)) * c[cell.w]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn compatible_law_passes_every_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = random_feasible_toy(&mut rng, 2, 3);
        assert!(obs.psi4().abs() < 1e-15);
        match construct_compatible_counterfactual(&obs).unwrap() {
            Construction::Compatible { checks, counterfactual } => {
                assert!(checks.passes(1e-12), "{checks:?}");
                // The constructed marker-outcome density sums to one per (a, w).
                for w in 0..2 {
                    for a in [false, true] {
                        let paw = obs.p_aw(a, w);
                        let mut t = 0.0;
                        for s1 in 0..3 {
                            for y0 in [false, true] {
                                for s0c in 0..3 {
                                    for y1 in [false, true] {
                                        t += counterfactual.prob[counterfactual.index(w, a, s1, y0, s0c, y1)];
                                    }
                                }
                            }
                        }
                        assert!((t - paw).abs() < 1e-12);
                    }
                }
            }
            Construction::Infeasible(c) => panic!("unexpected certificate {c:?}"),
        }
    }

    #[test]
    fn hand_built_violation_names_its_cell() {
        // W two-valued, S two-valued. At w=1, s=0: crossover 0.4 > marker 0.3.
        let w_values = vec![0.0, 1.0];
        let s_values = vec![0.0, 1.0];
        let shell = DiscreteToy {
            w_values: w_values.clone(),
            s_values: s_values.clone(),
            prob: Vec::new(),
        };
        let mut prob = vec![0.0; 2 * 4 * 2 * 2];
        let mut put = |w, a, s, y, sc, p| prob[shell.index(Cell { w, a, s, y, sc })] = p;
        for w in 0..2 {
            let m0 = if w == 1 { 0.3 } else { 0.5 };
            put(w, true, 0, false, 0, 0.25 * m0 * 0.8);
            put(w, true, 0, true, 0, 0.25 * m0 * 0.2);
            put(w, true, 1, false, 0, 0.25 * (1.0 - m0) * 0.8);
            put(w, true, 1, true, 0, 0.25 * (1.0 - m0) * 0.2);
            let c0 = if w == 1 { 0.4 } else { 0.2 };
            put(w, false, 0, false, 0, 0.25 * c0);
            put(w, false, 0, false, 1, 0.25 * 0.3);
            put(w, false, 0, true, 0, 0.25 * (1.0 - c0 - 0.3));
        }
        let toy = DiscreteToy::new(w_values, s_values, prob).unwrap();
        assert!(toy.psi4() > 0.0);
        match construct_compatible_counterfactual(&toy).unwrap() {
            Construction::Infeasible(cert) => {
                assert_eq!(cert.witness, (1, 0));
                assert_eq!(cert.violations.len(), 1);
            }
            other => panic!("expected a certificate, got {other:?}"),
        }
    }

    #[test]
    fn engineered_violation_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (toy, cell) = random_infeasible_toy(&mut rng, 3, 3);
        match construct_compatible_counterfactual(&toy).unwrap() {
            Construction::Infeasible(cert) => assert_eq!(cert.witness, cell),
            _ => panic!("expected a certificate"),
        }
    }

    #[test]
    fn zero_direction_has_zero_defect() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let toy = random_feasible_toy(&mut rng, 2, 2);
        let h = vec![0.0; toy.prob.len()];
        let r = pathwise_derivative_check(&toy, 1, &h, &[0.1, 0.01]).unwrap();
        assert!(r.ratios.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn defect_is_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let toy = random_feasible_toy(&mut rng, 2, 2);
        let h = random_direction(&toy, &mut rng);
        let r = pathwise_derivative_check(&toy, 1, &h, &[1e-1, 1e-2, 1e-3]).unwrap();
        assert!(r.ratio_spread() < 3.0, "{r:?}");
        for w in r.ratios.windows(2) {
            // defect(ε) / defect(ε/10) = 100 · ratio(ε) / ratio(ε/10)
            let decay = 100.0 * w[0] / w[1];
            assert!((50.0..=200.0).contains(&decay), "{decay}");
        }
    }

    #[test]
    fn treatment_scores_leave_psi_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let toy = random_feasible_toy(&mut rng, 3, 2);
        let h = treatment_score_direction(&toy, &mut rng);
        let r = pathwise_derivative_check(&toy, 0, &h, &[1e-1, 1e-2]).unwrap();
        assert!(r.changes.iter().all(|&c| c < 1e-14));
        assert!(r.derivative.iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn empirical_law_of_saturated_data() {
        let d = crate::testutil::saturated();
        let toy = empirical_toy(&d, 16).unwrap();
        assert_eq!(toy.nw(), 2);
        let psi = toy.psi(1);
        let n = d.len() as f64;
        let p1 = d.iter().filter(|o| o.a && o.s == Some(1.0)).count() as f64 / n;
        let pa = d.count_arm(true) as f64 / n;
        // With one covariate cell per value, Ψ₁ is a stratified average; check
        // the total treated mass on s = 1 instead.
        let mass: f64 = (0..2).map(|w| toy.p(Cell { w, a: true, s: 1, y: false, sc: 0 }) + toy.p(Cell { w, a: true, s: 1, y: true, sc: 0 })).sum();
        assert!((mass - p1).abs() < 1e-12);
        assert!(psi[0] > 0.0 && pa > 0.0);
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(DiscreteToy::new(vec![0.0], vec![0.0], vec![1.0]).is_err());
        let mut prob = vec![0.0; 4];
        prob[1] = 1.0; // (w=0, a=0, s=0, y=0, sc=0) has index 0; index 1 is y=1 for a=0 which is fine
        assert!(DiscreteToy::new(vec![0.0], vec![0.0], prob).is_ok());
        let bad = vec![0.5, 0.5, 0.5, 0.0];
        assert!(DiscreteToy::new(vec![0.0], vec![0.0], bad).is_err());
    }
}
