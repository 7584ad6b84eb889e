//! Polyenergetic direct signal, polynomial scatter fields, and the jointly
//! fitted loss
//!
//! ```text
//! J(x) = min_{alpha, theta} || t - (alpha * d(x) + s(theta)) ||^2
//! d(x)[r] = sum_e q[e] * exp(-sum_n mu_{x[n]}[e] * l_n[r])
//! s(theta)[r] = sum_{m+n <= P} theta_{m,n} * u(r)^m * v(r)^n
//! ```
//!
//! The polynomial uses pixel coordinates rescaled affinely to `[-1, 1]`
//! (`u` rightward, `v` downward, origin at the upper-left before rescaling).

use std::fmt;
use std::path::Path;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PathLengthSet;
use crate::lstsq::{min_norm_solve, OrthoBasis, DROP_RTOL};
use crate::materials::{MaterialTable, SpectrumResponse};
use crate::pfm;

/// Normalized transmission image plus a mask of usable pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Radiograph {
    values: Array2<f64>,
    valid: Array2<bool>,
}

impl Radiograph {
    pub fn new(values: Array2<f64>, valid: Array2<bool>) -> Result<Self> {
        if values.dim() != valid.dim() {
            return Err(Error::Shape { expected: values.dim(), found: valid.dim() });
        }
        if Zip::from(&values).and(&valid).any(|v, &ok| ok && !v.is_finite()) {
            return Err(Error::invalid("radiograph has non-finite values at valid pixels"));
        }
        if !valid.iter().any(|&v| v) {
            return Err(Error::invalid("radiograph has no valid pixels"));
        }
        Ok(Self { values, valid })
    }

    /// All finite pixels are valid.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        let valid = values.mapv(f64::is_finite);
        Self::new(values, valid)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn valid(&self) -> &Array2<bool> {
        &self.valid
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Restrict the valid set to `mask`.
    pub fn cropped(&self, mask: &Array2<bool>) -> Result<Self> {
        if mask.dim() != self.dim() {
            return Err(Error::Shape { expected: self.dim(), found: mask.dim() });
        }
        let valid = Zip::from(&self.valid).and(mask).map_collect(|&a, &b| a && b);
        Self::new(self.values.clone(), valid)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.mapv(|v| v * c), valid: self.valid.clone() }
    }

    /// Read a PFM; NaN pixels become invalid.
    pub fn load_pfm(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_values(pfm::read(path)?)
    }

    pub fn save_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        pfm::write_masked(path, &self.values, &self.valid)
    }
}

/// Rectangular crop as a mask: rows `row..row+height`, cols `col..col+width`.
pub fn rect_mask(dim: (usize, usize), row: usize, col: usize, height: usize, width: usize) -> Array2<bool> {
    Array2::from_shape_fn(dim, |(r, c)| r >= row && r < row + height && c >= col && c < col + width)
}

/// Material per object, by index into a [`MaterialTable`]; `None` is unassigned.
///
/// Ordering is lexicographic over material indices with unassigned first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(Vec<Option<usize>>);

impl Assignment {
    pub fn unassigned(k: usize) -> Self {
        Self(vec![None; k])
    }

    pub fn full(materials: Vec<usize>) -> Self {
        Self(materials.into_iter().map(Some).collect())
    }

    pub fn from_entries(entries: Vec<Option<usize>>) -> Self {
        Self(entries)
    }

    pub fn from_names<S: AsRef<str>>(names: &[S], table: &MaterialTable) -> Result<Self> {
        Ok(Self::full(table.indices_of(names)?))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[Option<usize>] {
        &self.0
    }

    pub fn get(&self, n: usize) -> Option<usize> {
        self.0[n]
    }

    pub fn set(&mut self, n: usize, m: Option<usize>) {
        self.0[n] = m;
    }

    pub fn is_full(&self) -> bool {
        self.0.iter().all(Option::is_some)
    }

    pub fn n_unassigned(&self) -> usize {
        self.0.iter().filter(|e| e.is_none()).count()
    }

    pub fn first_unassigned(&self) -> Option<usize> {
        self.0.iter().position(Option::is_none)
    }

    /// Material indices of a full assignment.
    pub fn materials(&self) -> Option<Vec<usize>> {
        self.0.iter().copied().collect()
    }

    /// Replace every unassigned entry with `filler`.
    pub fn filled_with(&self, filler: usize) -> Assignment {
        Self(self.0.iter().map(|e| Some(e.unwrap_or(filler))).collect())
    }

    pub fn names(&self, table: &MaterialTable) -> Vec<String> {
        self.0
            .iter()
            .map(|e| e.map_or_else(|| "∅".to_string(), |m| table.name(m).to_string()))
            .collect()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match e {
                Some(m) => write!(f, "{m}")?,
                None => write!(f, "∅")?,
            }
        }
        write!(f, "]")
    }
}

/// Exponent pairs `(m, n)` of the order-`P` basis, ordered by total degree
/// and, within a degree, by decreasing power of `u`: `1, u, v, u², uv, v², ...`.
pub fn scatter_terms(order: usize) -> Vec<(usize, usize)> {
    let mut terms = Vec::with_capacity(n_scatter_terms(order));
    for degree in 0..=order {
        for m in (0..=degree).rev() {
            terms.push((m, degree - m));
        }
    }
    terms
}

pub fn n_scatter_terms(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// Pixel coordinate rescaled to `[-1, 1]`; a single-pixel axis maps to 0.
pub(crate) fn normalized_coord(i: usize, len: usize) -> f64 {
    if len <= 1 {
        0.0
    } else {
        2.0 * i as f64 / (len - 1) as f64 - 1.0
    }
}

/// Basis images `u^m v^n`, `m + n <= order`, in [`scatter_terms`] order.
pub fn scatter_basis(order: usize, dim: (usize, usize)) -> Vec<Array2<f64>> {
    let (rows, cols) = dim;
    scatter_terms(order)
        .into_iter()
        .map(|(m, n)| {
            Array2::from_shape_fn(dim, |(v, u)| {
                normalized_coord(u, cols).powi(m as i32) * normalized_coord(v, rows).powi(n as i32)
            })
        })
        .collect()
}

/// Evaluate `s(theta)` on a grid.
pub fn scatter_field(order: usize, theta: &[f64], dim: (usize, usize)) -> Array2<f64> {
    let mut field = Array2::zeros(dim);
    for (basis, &c) in scatter_basis(order, dim).iter().zip(theta) {
        field.scaled_add(c, basis);
    }
    field
}

/// Outcome of the inner gain + scatter fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub alpha: f64,
    /// Scatter coefficients in [`scatter_terms`] order.
    pub theta: Vec<f64>,
    pub order: usize,
    pub sse: f64,
    pub rmse: f64,
    pub n_pixels: usize,
    /// The design was rank deficient or had no residual degrees of freedom;
    /// `alpha`/`theta` are then the minimum-norm solution.
    pub degenerate: bool,
}

impl FitResult {
    pub fn theta_terms(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        scatter_terms(self.order).into_iter().zip(self.theta.iter().copied())
    }

    /// Modeled scatter image.
    pub fn scatter_image(&self, dim: (usize, usize)) -> Array2<f64> {
        scatter_field(self.order, &self.theta, dim)
    }
}

/// Least-squares fit of `t ~ alpha * d + B theta` over `n` samples.
pub(crate) fn fit_columns(t: &[f64], d: &[f64], basis: &[Vec<f64>], order: usize) -> Result<FitResult> {
    let n = t.len();
    let n_unknowns = basis.len() + 1;
    if n < n_unknowns {
        return Err(Error::RankDeficient(format!(
            "{n} fitted pixels for {n_unknowns} unknowns (order {order})"
        )));
    }
    let ob = OrthoBasis::new(n, basis);
    let r_t = ob.residual(t);
    let r_d = ob.residual(d);
    let d_norm_sq: f64 = d.iter().map(|v| v * v).sum();
    let rd_sq: f64 = r_d.iter().map(|v| v * v).sum();
    let d_in_span = d_norm_sq == 0.0 || rd_sq <= DROP_RTOL * DROP_RTOL * d_norm_sq;
    let alpha = if d_in_span {
        0.0
    } else {
        r_d.iter().zip(&r_t).map(|(a, b)| a * b).sum::<f64>() / rd_sq
    };
    let sse: f64 = r_t.iter().zip(&r_d).map(|(rt, rd)| (rt - alpha * rd).powi(2)).sum();
    let degenerate = d_in_span || !ob.is_full_rank() || n == n_unknowns;
    let (alpha, theta) = if d_in_span || !ob.is_full_rank() {
        let mut cols = Vec::with_capacity(n_unknowns);
        cols.push(d.to_vec());
        cols.extend(basis.iter().cloned());
        let x = min_norm_solve(n, &cols, t);
        (x[0], x[1..].to_vec())
    } else {
        let shifted: Vec<f64> = t.iter().zip(d).map(|(tv, dv)| tv - alpha * dv).collect();
        (alpha, ob.solve_r(&ob.coeffs(&shifted)))
    };
    Ok(FitResult {
        alpha,
        theta,
        order,
        sse,
        rmse: (sse / n as f64).sqrt(),
        n_pixels: n,
        degenerate,
    })
}

/// Fit gain and an order-`order` polynomial scatter field to `t` given a
/// direct image `d`, over valid pixels (intersected with `extra_mask`).
pub fn fit_gain_scatter(
    t: &Radiograph,
    d: &Array2<f64>,
    order: usize,
    extra_mask: Option<&Array2<bool>>,
) -> Result<FitResult> {
    let dim = t.dim();
    if d.dim() != dim {
        return Err(Error::Shape { expected: dim, found: d.dim() });
    }
    if let Some(m) = extra_mask {
        if m.dim() != dim {
            return Err(Error::Shape { expected: dim, found: m.dim() });
        }
    }
    let (rows, cols) = dim;
    let terms = scatter_terms(order);
    let mut tv = Vec::new();
    let mut dv = Vec::new();
    let mut basis: Vec<Vec<f64>> = vec![Vec::new(); terms.len()];
    for v in 0..rows {
        for u in 0..cols {
            let keep = t.valid[[v, u]] && extra_mask.is_none_or(|m| m[[v, u]]);
            if !keep {
                continue;
            }
            tv.push(t.values[[v, u]]);
            dv.push(d[[v, u]]);
            let (un, vn) = (normalized_coord(u, cols), normalized_coord(v, rows));
            for (col, &(m, n)) in basis.iter_mut().zip(&terms) {
                col.push(un.powi(m as i32) * vn.powi(n as i32));
            }
        }
    }
    if tv.is_empty() {
        return Err(Error::invalid("no pixels to fit"));
    }
    if dv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("direct image has non-finite values".into()));
    }
    fit_columns(&tv, &dv, &basis, order)
}

/// Direct signal at one pixel given the attenuation vectors and path lengths
/// of the objects present there.
#[inline]
pub(crate) fn direct_pixel(q: &[f64], present: &[(&[f64], f64)]) -> f64 {
    let mut acc = 0.0;
    for (e, &w) in q.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let depth: f64 = present.iter().map(|(mu, l)| mu[e] * l).sum();
        acc += w * (-depth).exp();
    }
    acc
}

fn check_inputs(x: &Assignment, paths: &PathLengthSet, table: &MaterialTable, q: &SpectrumResponse) -> Result<Vec<usize>> {
    if x.len() != paths.len() {
        return Err(Error::invalid(format!(
            "assignment has {} entries for {} objects",
            x.len(),
            paths.len()
        )));
    }
    if !table.grid().matches(q.grid()) {
        return Err(Error::invalid("spectrum and material table use different energy grids"));
    }
    let mats = x
        .materials()
        .ok_or_else(|| Error::invalid(format!("assignment {x} is not full")))?;
    if let Some(&bad) = mats.iter().find(|&&m| m >= table.len()) {
        return Err(Error::UnknownMaterial(format!("index {bad}")));
    }
    Ok(mats)
}

/// Polyenergetic Beer–Lambert direct image for a full assignment.
pub fn direct(x: &Assignment, paths: &PathLengthSet, table: &MaterialTable, q: &SpectrumResponse) -> Result<Array2<f64>> {
    let mats = check_inputs(x, paths, table, q)?;
    let mus: Vec<&[f64]> = mats.iter().map(|&m| table.mu(m)).collect();
    let w = q.weights();
    let dim = paths.dim();
    let mut present = Vec::with_capacity(paths.len());
    Ok(Array2::from_shape_fn(dim, |ix| {
        present.clear();
        for (n, mu) in mus.iter().enumerate() {
            let l = paths.get(n)[ix];
            if l > 0.0 {
                present.push((*mu, l));
            }
        }
        direct_pixel(w, &present)
    }))
}

/// `J(x)` and the optimal gain/scatter for a full assignment.
pub fn loss(
    x: &Assignment,
    t: &Radiograph,
    paths: &PathLengthSet,
    table: &MaterialTable,
    q: &SpectrumResponse,
    order: usize,
) -> Result<FitResult> {
    if paths.dim() != t.dim() {
        return Err(Error::Shape { expected: t.dim(), found: paths.dim() });
    }
    let d = direct(x, paths, table, q)?;
    fit_gain_scatter(t, &d, order, None)
}
