//! Spectrum×response calibration from a radiograph of known composition.
//!
//! Minimizes `J(x_gt; q)` over `q` by projected gradient descent. The inner
//! gain and scatter fit is a least-squares problem, so at its optimum
//! `dJ/dq_e = -2 alpha sum_r res[r] exp(-sum_n mu_n[e] l_n[r])`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{fit_columns, normalized_coord, scatter_terms, Assignment, Radiograph};
use crate::geometry::PathLengthSet;
use crate::materials::{MaterialTable, SpectrumResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumCalibrationOptions {
    /// Scatter polynomial order of the inner fit.
    pub order: usize,
    /// Initial and maximum per-bin step, before projection.
    pub step: f64,
    pub iterations: usize,
    /// Consecutive rejected trial steps before giving up.
    pub patience: usize,
}

impl Default for SpectrumCalibrationOptions {
    fn default() -> Self {
        Self { order: 2, step: 0.05, iterations: 500, patience: 40 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCalibration {
    pub weights: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    /// `J` after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub warning: Option<String>,
    pub options: SpectrumCalibrationOptions,
}

/// `J(x; q)` as a function of unnormalized weights `q`.
pub struct SpectrumObjective {
    order: usize,
    t: Vec<f64>,
    basis: Vec<Vec<f64>>,
    /// per fitted pixel, index into `profiles`
    profile_of: Vec<usize>,
    /// `exp(-sum_n mu_n[e] l_n)` per distinct path signature
    profiles: Vec<Vec<f64>>,
    n_energies: usize,
}

impl SpectrumObjective {
    pub fn new(
        t: &Radiograph,
        paths: &PathLengthSet,
        table: &MaterialTable,
        x: &Assignment,
        order: usize,
    ) -> Result<Self> {
        if paths.dim() != t.dim() {
            return Err(Error::Shape { expected: t.dim(), found: paths.dim() });
        }
        if x.len() != paths.len() {
            return Err(Error::invalid(format!("assignment has {} entries for {} objects", x.len(), paths.len())));
        }
        let mats = x.materials().ok_or_else(|| Error::invalid(format!("assignment {x} is not full")))?;
        if let Some(&bad) = mats.iter().find(|&&m| m >= table.len()) {
            return Err(Error::UnknownMaterial(format!("index {bad}")));
        }
        let (rows, cols) = t.dim();
        let terms = scatter_terms(order);
        let ne = table.grid().len();
        let mut tv = Vec::new();
        let mut basis = vec![Vec::new(); terms.len()];
        let mut profile_of = Vec::new();
        let mut profiles = Vec::new();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        for v in 0..rows {
            for u in 0..cols {
                if !t.valid()[[v, u]] {
                    continue;
                }
                tv.push(t.values()[[v, u]]);
                let (un, vn) = (normalized_coord(u, cols), normalized_coord(v, rows));
                for (col, &(m, n)) in basis.iter_mut().zip(&terms) {
                    col.push(un.powi(m as i32) * vn.powi(n as i32));
                }
                let ls: Vec<f64> = (0..paths.len()).map(|n| paths.get(n)[[v, u]].max(0.0)).collect();
                let key: Vec<u64> = ls.iter().map(|l| l.to_bits()).collect();
                let next = profiles.len();
                let p = *index.entry(key).or_insert_with(|| {
                    profiles.push(
                        (0..ne)
                            .map(|e| {
                                let depth: f64 = mats.iter().zip(&ls).map(|(&m, l)| table.mu(m)[e] * l).sum();
                                (-depth).exp()
                            })
                            .collect(),
                    );
                    next
                });
                profile_of.push(p);
            }
        }
        Ok(Self { order, t: tv, basis, profile_of, profiles, n_energies: ne })
    }

    fn check(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.n_energies {
            return Err(Error::invalid(format!("{} weights for {} energies", q.len(), self.n_energies)));
        }
        Ok(())
    }

    fn direct(&self, q: &[f64]) -> Vec<f64> {
        let per_profile: Vec<f64> = self.profiles.iter().map(|p| p.iter().zip(q).map(|(a, b)| a * b).sum()).collect();
        self.profile_of.iter().map(|&p| per_profile[p]).collect()
    }

    pub fn value(&self, q: &[f64]) -> Result<f64> {
        self.check(q)?;
        Ok(fit_columns(&self.t, &self.direct(q), &self.basis, self.order)?.sse)
    }

    /// `J` and its gradient with respect to `q`.
    pub fn value_and_gradient(&self, q: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(q)?;
        let d = self.direct(q);
        let fit = fit_columns(&self.t, &d, &self.basis, self.order)?;
        let mut per_profile = vec![0.0; self.profiles.len()];
        for (i, (&t, &dv)) in self.t.iter().zip(&d).enumerate() {
            let s: f64 = self.basis.iter().zip(&fit.theta).map(|(b, c)| b[i] * c).sum();
            per_profile[self.profile_of[i]] += t - fit.alpha * dv - s;
        }
        let mut grad = vec![0.0; self.n_energies];
        for (p, &res) in self.profiles.iter().zip(&per_profile) {
            for (g, &x) in grad.iter_mut().zip(p) {
                *g += res * x;
            }
        }
        for g in &mut grad {
            *g *= -2.0 * fit.alpha;
        }
        Ok((fit.sse, grad))
    }
}

/// Clip negatives and rescale to unit sum; `None` if nothing positive remains.
fn project(q: &[f64]) -> Option<Vec<f64>> {
    let clipped: Vec<f64> = q.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = clipped.iter().sum();
    (s > 0.0 && s.is_finite()).then(|| clipped.iter().map(|v| v / s).collect())
}

/// Projected gradient descent on `J(x_gt)` starting from `q0`.
///
/// Trial steps that increase `J` are rejected and the step is halved; after
/// `patience` consecutive rejections the best iterate is returned with a
/// warning.
pub fn calibrate_spectrum(
    t: &Radiograph,
    paths: &PathLengthSet,
    table: &MaterialTable,
    x_gt: &Assignment,
    q0: &SpectrumResponse,
    opts: &SpectrumCalibrationOptions,
) -> Result<(SpectrumResponse, SpectrumCalibration)> {
    if !table.grid().matches(q0.grid()) {
        return Err(Error::invalid("spectrum and material table use different energy grids"));
    }
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(Error::invalid(format!("step {} must be > 0", opts.step)));
    }
    let objective = SpectrumObjective::new(t, paths, table, x_gt, opts.order)?;
    let mut q = q0.weights().to_vec();
    let (mut j, mut g) = objective.value_and_gradient(&q)?;
    let initial_loss = j;
    let mut history = vec![j];
    let mut eta = opts.step;
    let mut rejected = 0;
    let mut warning = None;
    let mut iterations = 0;
    while iterations < opts.iterations {
        iterations += 1;
        let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if gmax == 0.0 || eta < 1e-15 {
            break;
        }
        let trial: Vec<f64> = q.iter().zip(&g).map(|(qv, gv)| qv - eta * gv / gmax).collect();
        let accepted = match project(&trial) {
            Some(cand) => match objective.value_and_gradient(&cand) {
                Ok((jc, gc)) if jc <= j => Some((cand, jc, gc)),
                _ => None,
            },
            None => None,
        };
        match accepted {
            Some((cand, jc, gc)) => {
                q = cand;
                j = jc;
                g = gc;
                history.push(j);
                rejected = 0;
                eta = (eta * 2.0).min(opts.step);
            }
            None => {
                rejected += 1;
                eta *= 0.5;
                if rejected >= opts.patience {
                    warning = Some(format!(
                        "no decrease in {rejected} consecutive trial steps; returning best iterate"
                    ));
                    break;
                }
            }
        }
    }
    let (q_out, _) = SpectrumResponse::normalized(q0.grid().clone(), q.clone())?;
    let report = SpectrumCalibration {
        weights: q,
        initial_loss,
        final_loss: j,
        iterations,
        history,
        warning,
        options: opts.clone(),
    };
    Ok((q_out, report))
}
