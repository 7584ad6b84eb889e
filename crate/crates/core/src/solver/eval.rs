//! Fast evaluation of `J` and masked bounds for many assignments against
//! one radiograph.
//!
//! For a pixel subset `S` (the fitted pixels whose present objects are all
//! assigned), the scatter basis restricted to `S` is factored once as
//! `B = Q R`. Writing `d' = d - 1` (zero wherever no object is present, and
//! the constant term is always in the basis), the fitted residual is
//!
//! ```text
//! sse = |r_t|^2 - <d', r_t>^2 / |r_d'|^2,   r_y = y - Q Q^T y
//! ```
//!
//! Pixels with identical object/path-length signatures share one value of
//! `d`, so `Q^T d'`, `<d', t>` and `|d'|^2` reduce to sums over signature
//! groups with per-group precomputed `sum Q_r` and `sum t_r`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::forward::{direct_pixel, n_scatter_terms, normalized_coord, scatter_terms, Assignment, Radiograph};
use crate::geometry::PathLengthSet;
use crate::lstsq::{OrthoBasis, DROP_RTOL};
use crate::materials::{MaterialTable, SpectrumResponse};

/// Objects present in a set of pixels with identical path lengths.
#[derive(Debug, Clone)]
struct Group {
    objects: Vec<(usize, f64)>,
}

#[derive(Debug)]
struct GroupStats {
    group: usize,
    count: f64,
    t_sum: f64,
    /// sum of `Q_r` over the group's pixels
    q_sum: Vec<f64>,
}

#[derive(Debug)]
struct MaskStats {
    n_pixels: usize,
    /// fewer pixels than unknowns: the fit is exact, bound is vacuous
    underdetermined: bool,
    qt: Vec<f64>,
    rt_sq: f64,
    groups: Vec<GroupStats>,
}

pub(crate) struct Evaluator<'a> {
    table: &'a MaterialTable,
    q: &'a SpectrumResponse,
    k: usize,
    t: Vec<f64>,
    basis: Vec<Vec<f64>>,
    /// group index per fitted pixel, `None` for object-free pixels
    pixel_group: Vec<Option<usize>>,
    groups: Vec<Group>,
    t_energy: f64,
    masks: Mutex<HashMap<Vec<bool>, Arc<MaskStats>>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        t: &Radiograph,
        paths: &PathLengthSet,
        table: &'a MaterialTable,
        q: &'a SpectrumResponse,
        order: usize,
    ) -> Result<Self> {
        if paths.dim() != t.dim() {
            return Err(Error::Shape { expected: t.dim(), found: paths.dim() });
        }
        if !table.grid().matches(q.grid()) {
            return Err(Error::invalid("spectrum and material table use different energy grids"));
        }
        let (rows, cols) = t.dim();
        let terms = scatter_terms(order);
        let k = paths.len();
        let mut tv = Vec::new();
        let mut basis = vec![Vec::new(); terms.len()];
        let mut pixel_group = Vec::new();
        let mut groups = Vec::new();
        let mut index: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
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
                let sig: Vec<(usize, u64)> = (0..k)
                    .filter_map(|n| {
                        let l = paths.get(n)[[v, u]];
                        (l > 0.0).then_some((n, l.to_bits()))
                    })
                    .collect();
                if sig.is_empty() {
                    pixel_group.push(None);
                    continue;
                }
                let next = groups.len();
                let g = *index.entry(sig.clone()).or_insert_with(|| {
                    groups.push(Group {
                        objects: sig.iter().map(|&(n, bits)| (n, f64::from_bits(bits))).collect(),
                    });
                    next
                });
                pixel_group.push(Some(g));
            }
        }
        let n_unknowns = n_scatter_terms(order) + 1;
        if tv.len() < n_unknowns {
            return Err(Error::RankDeficient(format!(
                "{} fitted pixels for {n_unknowns} unknowns (order {order})",
                tv.len()
            )));
        }
        let t_energy = tv.iter().map(|v| v * v).sum();
        Ok(Self {
            table,
            q,
            k,
            t: tv,
            basis,
            pixel_group,
            groups,
            t_energy,
            masks: Mutex::new(HashMap::new()),
        })
    }

    pub fn n_objects(&self) -> usize {
        self.k
    }

    /// `sum t^2` over fitted pixels; scale for floating-point slack.
    pub fn t_energy(&self) -> f64 {
        self.t_energy
    }

    fn group_in_mask(&self, g: usize, assigned: &[bool]) -> bool {
        self.groups[g].objects.iter().all(|&(n, _)| assigned[n])
    }

    fn mask_stats(&self, assigned: &[bool]) -> Arc<MaskStats> {
        if let Some(s) = self.masks.lock().expect("mask cache poisoned").get(assigned) {
            return Arc::clone(s);
        }
        let stats = Arc::new(self.build_mask_stats(assigned));
        self.masks
            .lock()
            .expect("mask cache poisoned")
            .entry(assigned.to_vec())
            .or_insert(stats)
            .clone()
    }

    fn build_mask_stats(&self, assigned: &[bool]) -> MaskStats {
        let idx: Vec<usize> = (0..self.t.len())
            .filter(|&i| self.pixel_group[i].is_none_or(|g| self.group_in_mask(g, assigned)))
            .collect();
        let n = idx.len();
        let n_unknowns = self.basis.len() + 1;
        if n < n_unknowns {
            return MaskStats { n_pixels: n, underdetermined: true, qt: vec![], rt_sq: 0.0, groups: vec![] };
        }
        let t: Vec<f64> = idx.iter().map(|&i| self.t[i]).collect();
        let cols: Vec<Vec<f64>> = self.basis.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect();
        let ob = OrthoBasis::new(n, &cols);
        let qt = ob.coeffs(&t);
        let rt_sq = ob.residual(&t).iter().map(|v| v * v).sum();
        let rank = ob.rank();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut groups: Vec<GroupStats> = Vec::new();
        for (row, &i) in idx.iter().enumerate() {
            let Some(g) = self.pixel_group[i] else { continue };
            let s = *slot.entry(g).or_insert_with(|| {
                groups.push(GroupStats { group: g, count: 0.0, t_sum: 0.0, q_sum: vec![0.0; rank] });
                groups.len() - 1
            });
            let gs = &mut groups[s];
            gs.count += 1.0;
            gs.t_sum += t[row];
            for (j, acc) in gs.q_sum.iter_mut().enumerate() {
                *acc += ob.q_col(j)[row];
            }
        }
        MaskStats { n_pixels: n, underdetermined: false, qt, rt_sq, groups }
    }

    /// Minimal masked residual for the objects marked `assigned`, with the
    /// materials of `filled` (unassigned entries already replaced by a filler).
    fn masked_sse(&self, filled: &[usize], assigned: &[bool]) -> f64 {
        let stats = self.mask_stats(assigned);
        if stats.underdetermined || stats.n_pixels == 0 {
            return 0.0;
        }
        let w = self.q.weights();
        let rank = stats.qt.len();
        let mut dd = 0.0;
        let mut dt = 0.0;
        let mut qd = vec![0.0; rank];
        let mut present: Vec<(&[f64], f64)> = Vec::with_capacity(self.k);
        for gs in &stats.groups {
            present.clear();
            for &(n, l) in &self.groups[gs.group].objects {
                present.push((self.table.mu(filled[n]), l));
            }
            let dev = direct_pixel(w, &present) - 1.0;
            if dev == 0.0 {
                continue;
            }
            dd += gs.count * dev * dev;
            dt += dev * gs.t_sum;
            for (acc, qs) in qd.iter_mut().zip(&gs.q_sum) {
                *acc += dev * qs;
            }
        }
        let qd_sq: f64 = qd.iter().map(|v| v * v).sum();
        let rd_sq = dd - qd_sq;
        if dd == 0.0 || rd_sq <= DROP_RTOL * DROP_RTOL * dd {
            return stats.rt_sq;
        }
        let c = dt - qd.iter().zip(&stats.qt).map(|(a, b)| a * b).sum::<f64>();
        (stats.rt_sq - c * c / rd_sq).max(0.0)
    }

    /// `J(x)` for a full assignment.
    pub fn loss(&self, x: &Assignment) -> f64 {
        let filled: Vec<usize> = x.entries().iter().map(|e| e.expect("full assignment")).collect();
        self.masked_sse(&filled, &vec![true; self.k])
    }

    /// Masked lower bound for a partial assignment, unassigned entries filled
    /// with `filler`.
    pub fn bound(&self, x: &Assignment, filler: usize) -> f64 {
        let assigned: Vec<bool> = x.entries().iter().map(Option::is_some).collect();
        let filled: Vec<usize> = x.entries().iter().map(|e| e.unwrap_or(filler)).collect();
        self.masked_sse(&filled, &assigned)
    }
}
