//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use matid::forward::{Assignment, Radiograph};
use matid::geometry::{ConstantSlab, DetectorGrid, PathLengthSet, PixelRegion, Scene, SceneObject, SphericalShell};
use matid::materials::{synthetic, EnergyGrid, MaterialTable, SpectrumResponse};
use matid::solver::Problem;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub t: Radiograph,
    pub paths: PathLengthSet,
    pub table: MaterialTable,
    pub q: SpectrumResponse,
    pub truth: Assignment,
}

impl Instance {
    pub fn problem(&self) -> Problem<'_> {
        Problem { radiograph: &self.t, paths: &self.paths, table: &self.table, q: &self.q }
    }
}

/// `[-1, 1]` coordinate of pixel `i` on an axis of `len` pixels.
pub fn coord(i: usize, len: usize) -> f64 {
    if len == 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (len - 1) as f64
    }
}

/// Monomials `u^a v^b` with `a + b <= order`, by degree then decreasing `a`.
pub fn monomials(order: usize) -> Vec<(i32, i32)> {
    let mut out = Vec::new();
    for deg in 0..=order as i32 {
        for b in 0..=deg {
            out.push((deg - b, b));
        }
    }
    out
}

/// Residual sum of squares of `t ~ alpha d + sum theta_k u^a v^b` over the
/// masked pixels, by SVD of the dense design.
pub fn dense_fit(t: &Array2<f64>, mask: &Array2<bool>, d: &Array2<f64>, order: usize) -> (f64, DVector<f64>) {
    let (rows, cols) = t.dim();
    let terms = monomials(order);
    let pix: Vec<(usize, usize)> = (0..rows).flat_map(|v| (0..cols).map(move |u| (v, u))).filter(|&p| mask[p]).collect();
    let a = DMatrix::from_fn(pix.len(), terms.len() + 1, |r, c| {
        let (v, u) = pix[r];
        if c == 0 {
            d[(v, u)]
        } else {
            let (pa, pb) = terms[c - 1];
            coord(u, cols).powi(pa) * coord(v, rows).powi(pb)
        }
    });
    let b = DVector::from_iterator(pix.len(), pix.iter().map(|&p| t[p]));
    let x = a.clone().svd(true, true).solve(&b, 1e-13).expect("svd solve");
    let r = &b - &a * &x;
    (r.norm_squared(), x)
}

/// Direct signal by straightforward summation over energies.
pub fn direct_oracle(x: &Assignment, paths: &PathLengthSet, table: &MaterialTable, q: &SpectrumResponse) -> Array2<f64> {
    let (rows, cols) = paths.dim();
    let mats = x.materials().expect("full assignment");
    Array2::from_shape_fn((rows, cols), |p| {
        (0..q.len())
            .map(|e| {
                let tau: f64 = mats.iter().enumerate().map(|(n, &m)| table.mu(m)[e] * paths.get(n)[p]).sum();
                q.weights()[e] * (-tau).exp()
            })
            .sum()
    })
}

fn inside(c: [f64; 3], ri: f64, ro: f64, p: [f64; 3]) -> bool {
    let r2: f64 = (0..3).map(|i| (p[i] - c[i]).powi(2)).sum();
    r2 >= ri * ri && r2 <= ro * ro
}

/// Length of the segment `a -> b` inside a shell, by fine sampling with
/// bisection at every boundary crossing.
pub fn march_chord(c: [f64; 3], ri: f64, ro: f64, a: [f64; 3], b: [f64; 3]) -> f64 {
    let len = (0..3).map(|i| (b[i] - a[i]).powi(2)).sum::<f64>().sqrt();
    let at = |s: f64| [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]), a[2] + s * (b[2] - a[2])];
    let steps = 20_000;
    let mut total = 0.0;
    let mut prev = 0.0;
    let mut prev_in = inside(c, ri, ro, at(0.0));
    let mut entered = if prev_in { Some(0.0) } else { None };
    for k in 1..=steps {
        let s = k as f64 / steps as f64;
        let now_in = inside(c, ri, ro, at(s));
        if now_in != prev_in {
            let (mut lo, mut hi) = (prev, s);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if inside(c, ri, ro, at(mid)) == prev_in {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let cross = 0.5 * (lo + hi);
            match entered.take() {
                Some(s0) => total += cross - s0,
                None => entered = Some(cross),
            }
            prev_in = now_in;
        }
        prev = s;
    }
    if let Some(s0) = entered {
        total += 1.0 - s0;
    }
    total * len
}

/// Random overlapping slabs and shells, a random subset of `m` materials on a
/// short random spectrum, order-2 scatter, gain and a little noise.
pub fn random_instance(seed: u64, k: usize, m: usize, size: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pitch = 0.2;
    let grid = DetectorGrid::new(size, size, pitch);
    let half = size as f64 * pitch / 2.0;
    let objects = (0..k)
        .map(|_| {
            if rng.random_bool(0.5) {
                let h = rng.random_range(size / 4..=size * 3 / 4);
                let w = rng.random_range(size / 4..=size * 3 / 4);
                SceneObject::Slab(ConstantSlab {
                    region: PixelRegion::Rect {
                        row_px: rng.random_range(0..=size - h),
                        col_px: rng.random_range(0..=size - w),
                        height_px: h,
                        width_px: w,
                    },
                    thickness_cm: rng.random_range(0.3..3.0),
                })
            } else {
                let ro = rng.random_range(0.25..0.6) * half;
                let ri = ro * rng.random_range(0.0..0.8);
                let cx = rng.random_range(-0.3..0.3) * half;
                let cy = rng.random_range(-0.3..0.3) * half;
                SceneObject::Shell(SphericalShell { center_cm: [cx, cy, 80.0], inner_radius_cm: ri, outer_radius_cm: ro })
            }
        })
        .collect();
    // shells are imaged at 1.25x; the grid covers them
    let scene = Scene { grid, source_to_detector_cm: 100.0, beam: Default::default(), objects };
    let paths = scene.trace().expect("valid random scene");

    let bins = rng.random_range(1..=4);
    let energies: Vec<f64> = (0..bins).map(|i| 0.5 + 1.5 * i as f64 + rng.random_range(0.0..1.0)).collect();
    let egrid = EnergyGrid::new(energies).unwrap();
    let full = synthetic::table(&egrid);
    let mut names: Vec<String> = full.names().to_vec();
    for i in (1..names.len()).rev() {
        names.swap(i, rng.random_range(0..=i));
    }
    let table = full.subset(&names[..m]).unwrap();
    let weights: Vec<f64> = (0..bins).map(|_| rng.random_range(0.1..1.0)).collect();
    let (q, _) = SpectrumResponse::normalized(egrid, weights).unwrap();

    let truth = Assignment::full((0..k).map(|_| rng.random_range(0..m)).collect());
    let d = direct_oracle(&truth, &paths, &table, &q);
    let alpha = rng.random_range(0.7..1.3);
    let th: Vec<f64> = (0..6).map(|_| rng.random_range(-0.03..0.03)).collect();
    let t = Array2::from_shape_fn((size, size), |(v, u)| {
        let (x, y) = (coord(u, size), coord(v, size));
        let s = 0.05 + th[0] + th[1] * x + th[2] * y + th[3] * x * x + th[4] * x * y + th[5] * y * y;
        alpha * d[(v, u)] + s + rng.random_range(-0.01..0.01)
    });
    Instance { t: Radiograph::from_values(t).unwrap(), paths, table, q, truth }
}

/// Every full assignment over `m` materials for `k` objects, odometer order.
pub fn all_assignments(k: usize, m: usize) -> Vec<Assignment> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; k];
    loop {
        out.push(Assignment::full(idx.clone()));
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < m {
                break;
            }
            idx[i] = 0;
        }
    }
}
