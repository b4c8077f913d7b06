//! Nodal line extraction by marching squares on the (θ, φ) chart, and the
//! length functionals Z and Z^φ.

use crate::error::{Error, Result};
use crate::field::{GridField, GridSpec};
use crate::linstat::{dot, TestFunction, Vec3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodalSegment {
    pub a: Vec3,
    pub b: Vec3,
    /// Great-circle distance between the endpoints.
    pub length: f64,
}

fn arc_length(a: &Vec3, b: &Vec3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let chord = dot(&d, &d).sqrt();
    2.0 * (0.5 * chord).min(1.0).asin()
}

impl NodalSegment {
    pub fn new(a: Vec3, b: Vec3) -> Self {
        NodalSegment { a, b, length: arc_length(&a, &b) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalLineSet {
    pub segments: Vec<NodalSegment>,
    pub total_length: f64,
    pub grid: GridSpec,
    pub points_per_wavelength: f64,
    /// Lattice values that were exactly zero and treated as positive.
    pub zero_nodes: usize,
    /// Cells with four crossings, resolved by the sign of the corner mean.
    pub saddle_cells: usize,
}

/// Minimum resolution accepted by [`extract_nodal`].
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 8.0;

pub fn extract_nodal(field: &GridField) -> Result<NodalLineSet> {
    let ppw = field.grid.points_per_wavelength(field.n);
    if ppw < MIN_POINTS_PER_WAVELENGTH {
        return Err(Error::Resolution(format!("{ppw:.2} points per wavelength, need ≥ {MIN_POINTS_PER_WAVELENGTH}")));
    }
    Ok(extract_unchecked(field))
}

/// Marching squares without the resolution check (used by convergence studies).
pub fn extract_unchecked(field: &GridField) -> NodalLineSet {
    let grid = field.grid;
    let (rows, cols) = (grid.rows, grid.cols);
    let zero_nodes = field.values.iter().filter(|v| **v == 0.0).count();
    // precomputed node positions
    let trig: Vec<(f64, f64)> = (0..rows).map(|i| grid.sin_cos_theta(i)).collect();
    let chart = Chart {
        grid,
        trig: &trig,
        h_theta: std::f64::consts::PI / (rows - 1) as f64,
        h_phi: 2.0 * std::f64::consts::PI / cols as f64,
    };
    let per_row: Vec<(Vec<NodalSegment>, usize)> = (0..rows - 1)
        .into_par_iter()
        .map(|i| {
            let mut segs = Vec::new();
            let mut saddles = 0;
            for j in 0..cols {
                saddles += cell_segments(field, i, j, &chart, &mut segs);
            }
            (segs, saddles)
        })
        .collect();
    let mut segments = Vec::new();
    let mut saddle_cells = 0;
    for (s, k) in per_row {
        segments.extend(s);
        saddle_cells += k;
    }
    let total_length = segments.iter().map(|s| s.length).sum();
    NodalLineSet {
        segments,
        total_length,
        grid,
        points_per_wavelength: grid.points_per_wavelength(field.n),
        zero_nodes,
        saddle_cells,
    }
}

/// Lattice value at row i (possibly one step past a pole) and column j (any integer).
/// Rows past a pole continue on the opposite meridian.
fn node_value(field: &GridField, i: isize, j: isize) -> f64 {
    let grid = field.grid;
    let last = grid.rows as isize - 1;
    let cols = grid.cols as isize;
    let (mut i, mut j) = (i, j);
    if i < 0 || i > last {
        i = if i < 0 { -i } else { 2 * last - i };
        j += cols / 2;
    }
    field.value(i as usize, j.rem_euclid(cols) as usize)
}

/// Cubic Lagrange weights on the nodes -1, 0, 1, 2.
fn lagrange4(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Root in [0, 1] of f, given f(0) and f(1) of opposite sign (Illinois iteration).
fn bracketed_root<F: Fn(f64) -> f64>(f: F, f0: f64, f1: f64) -> f64 {
    if f0 == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi, mut flo, mut fhi) = (0.0, 1.0, f0, f1);
    let mut side = 0;
    let mut t = f64::NAN;
    for _ in 0..60 {
        let prev = t;
        t = (lo * fhi - hi * flo) / (fhi - flo);
        let ft = f(t);
        if ft == 0.0 || (t - prev).abs() < 1e-13 {
            break;
        }
        if (ft > 0.0) == (flo > 0.0) {
            lo = t;
            flo = ft;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = t;
            fhi = ft;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    t
}

/// 4×4 neighbourhood of the cell with corners (i, j) and (i+1, j+1), in local
/// coordinates u (rows) and v (columns), both in [0, 1] on the cell.
struct Cell {
    i: usize,
    j: usize,
    /// values[a][b] at row i-1+a, column j-1+b
    values: [[f64; 4]; 4],
}

impl Cell {
    fn new(field: &GridField, i: usize, j: usize) -> Self {
        let mut values = [[0.0; 4]; 4];
        for (a, row) in values.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = node_value(field, i as isize - 1 + a as isize, j as isize - 1 + b as isize);
            }
        }
        Cell { i, j, values }
    }

    fn corner(&self, k: usize) -> f64 {
        let (a, b) = CORNERS[k];
        self.values[1 + a][1 + b]
    }

    /// Bicubic interpolant; on an edge it reduces to the cubic along that grid line.
    fn eval(&self, u: f64, v: f64) -> f64 {
        let (wu, wv) = (lagrange4(u), lagrange4(v));
        let mut s = 0.0;
        for a in 0..4 {
            s += wu[a] * (0..4).map(|b| wv[b] * self.values[a][b]).sum::<f64>();
        }
        s
    }

    /// Zero of the interpolant on edge k (from corner k to corner k+1), found on
    /// the cubic through the four nodes of that grid line.
    fn crossing(&self, k: usize) -> (f64, f64) {
        let (p, q) = (CORNERS[k], CORNERS[(k + 1) % 4]);
        let line: [f64; 4] = if p.0 == q.0 {
            let r = &self.values[1 + p.0];
            if q.1 > p.1 { [r[0], r[1], r[2], r[3]] } else { [r[3], r[2], r[1], r[0]] }
        } else {
            let c = 1 + p.1;
            let col = [self.values[0][c], self.values[1][c], self.values[2][c], self.values[3][c]];
            if q.0 > p.0 { col } else { [col[3], col[2], col[1], col[0]] }
        };
        let cubic = |t: f64| {
            let w = lagrange4(t);
            w[0] * line[0] + w[1] * line[1] + w[2] * line[2] + w[3] * line[3]
        };
        let t = bracketed_root(cubic, line[1], line[2]);
        let (p, q) = ((p.0 as f64, p.1 as f64), (q.0 as f64, q.1 as f64));
        (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
    }
}

/// Corner offsets (row, column) in cyclic order 00, 01, 11, 10.
const CORNERS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 1), (1, 0)];

struct Chart<'a> {
    grid: GridSpec,
    trig: &'a [(f64, f64)],
    h_theta: f64,
    h_phi: f64,
}

impl Chart<'_> {
    fn theta_phi(&self, cell: &Cell, (u, v): (f64, f64)) -> (f64, f64) {
        (self.grid.theta(cell.i) + u * self.h_theta, self.grid.phi(cell.j) + v * self.h_phi)
    }

    fn point(&self, cell: &Cell, uv: (f64, f64)) -> Vec3 {
        let (th, ph) = self.theta_phi(cell, uv);
        let (st, ct) = if uv.0 == 0.0 {
            self.trig[cell.i]
        } else if uv.0 == 1.0 {
            self.trig[cell.i + 1]
        } else {
            th.sin_cos()
        };
        let (sp, cp) = ph.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Segment between two edge crossings, bent once through the zero of the
    /// interpolant on the perpendicular bisector of the chord (when it lies in
    /// the cell).
    fn push(&self, cell: &Cell, e1: (f64, f64), e2: (f64, f64), out: &mut Vec<NodalSegment>) {
        let (a, b) = (self.point(cell, e1), self.point(cell, e2));
        if let Some(mid) = self.bend(cell, e1, e2) {
            let m = self.point(cell, mid);
            out.push(NodalSegment::new(a, m));
            out.push(NodalSegment::new(m, b));
        } else {
            out.push(NodalSegment::new(a, b));
        }
    }

    fn bend(&self, cell: &Cell, e1: (f64, f64), e2: (f64, f64)) -> Option<(f64, f64)> {
        let mid = (0.5 * (e1.0 + e2.0), 0.5 * (e1.1 + e2.1));
        // metric scale of a column step at the chord midpoint
        let s = self.theta_phi(cell, mid).0.sin().max(1e-3);
        let (dx, dy) = ((e2.0 - e1.0) * self.h_theta, (e2.1 - e1.1) * self.h_phi * s);
        if dx == 0.0 && dy == 0.0 {
            return None;
        }
        // perpendicular of the same physical length as the chord, in local units
        let perp = (-dy / self.h_theta, dx / (self.h_phi * s));
        let at = |tau: f64| (mid.0 + tau * perp.0, mid.1 + tau * perp.1);
        let inside = |(u, v): (f64, f64)| (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v);
        let f = |tau: f64| {
            let (u, v) = at(tau);
            cell.eval(u, v)
        };
        let f0 = f(0.0);
        if f0 == 0.0 {
            return Some(mid);
        }
        // nearest sign change in steps of 1/8 of the chord on either side
        for dir in [1.0, -1.0] {
            let mut prev = (0.0, f0);
            for k in 1..=4 {
                let t1 = dir * k as f64 / 8.0;
                let g1 = f(t1);
                if (prev.1 > 0.0) != (g1 > 0.0) {
                    let (t0, g0) = prev;
                    let r = bracketed_root(|x| f(t0 + x * (t1 - t0)), g0, g1);
                    let p = at(t0 + r * (t1 - t0));
                    return inside(p).then_some(p);
                }
                prev = (t1, g1);
            }
        }
        None
    }
}

fn cell_segments(field: &GridField, i: usize, j: usize, chart: &Chart, out: &mut Vec<NodalSegment>) -> usize {
    let j1 = (j + 1) % field.grid.cols;
    let v = [field.value(i, j), field.value(i, j1), field.value(i + 1, j1), field.value(i + 1, j)];
    let pos = v.map(|x| x >= 0.0);
    if pos.iter().all(|&p| p == pos[0]) {
        return 0;
    }
    let cell = Cell::new(field, i, j);
    // edge k joins corner k and corner k+1
    let crosses: Vec<usize> = (0..4).filter(|&k| pos[k] != pos[(k + 1) % 4]).collect();
    match crosses.len() {
        2 => {
            chart.push(&cell, cell.crossing(crosses[0]), cell.crossing(crosses[1]), out);
            0
        }
        4 => {
            let center = 0.25 * v.iter().sum::<f64>();
            // if the centre sides with corners 0 and 2, corners 1 and 3 are cut off
            let iso = if (center >= 0.0) == pos[0] { [1, 3] } else { [0, 2] };
            for c in iso {
                // corner c touches edges c-1 and c; no bending inside a saddle cell
                let (p, q) = (cell.crossing((c + 3) % 4), cell.crossing(c));
                out.push(NodalSegment::new(chart.point(&cell, p), chart.point(&cell, q)));
            }
            1
        }
        _ => 0,
    }
}

pub fn total_length(lines: &NodalLineSet) -> f64 {
    lines.total_length
}

/// Parameters σ ∈ (0, L) where the arc a→b crosses ⟨x, c⟩ = cos r.
fn cap_crossings(a: &Vec3, tangent: &Vec3, len: f64, c: &Vec3, r: f64, out: &mut Vec<f64>) {
    let (p, q) = (dot(a, c), dot(tangent, c));
    let rr = (p * p + q * q).sqrt();
    let target = r.cos();
    if rr == 0.0 || target.abs() > rr {
        return;
    }
    let delta = q.atan2(p);
    let w = (target / rr).acos();
    for s in [delta + w, delta - w] {
        for k in -1..=1 {
            let sig = s + 2.0 * std::f64::consts::PI * k as f64;
            if sig > 0.0 && sig < len {
                out.push(sig);
            }
        }
    }
}

fn arc_point(a: &Vec3, t: &Vec3, s: f64) -> Vec3 {
    let (ss, cs) = s.sin_cos();
    [cs * a[0] + ss * t[0], cs * a[1] + ss * t[1], cs * a[2] + ss * t[2]]
}

/// Σ length·φ(midpoint); segments are first split where they cross the boundary
/// of any cap the function jumps across.
pub fn weighted_length(lines: &NodalLineSet, phi: &TestFunction) -> f64 {
    let caps = phi.kind.boundary_caps();
    let mut acc = 0.0;
    for seg in &lines.segments {
        if seg.length == 0.0 {
            continue;
        }
        // unit tangent at a pointing to b
        let (a, b) = (seg.a, seg.b);
        let ab = dot(&a, &b);
        let mut t = [b[0] - ab * a[0], b[1] - ab * a[1], b[2] - ab * a[2]];
        let tn = dot(&t, &t).sqrt();
        if tn == 0.0 {
            continue;
        }
        t.iter_mut().for_each(|v| *v /= tn);
        let len = seg.length;
        let mut cuts = vec![0.0, len];
        for (c, r) in &caps {
            cap_crossings(&a, &t, len, c, *r, &mut cuts);
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for w in cuts.windows(2) {
            let piece = w[1] - w[0];
            if piece > 0.0 {
                let m = arc_point(&a, &t, 0.5 * (w[0] + w[1]));
                acc += piece * phi.value(&m);
            }
        }
    }
    acc
}

/// One CSV row per segment: x1,y1,z1,x2,y2,z2,length.
pub fn write_polyline_csv<W: Write>(lines: &NodalLineSet, mut w: W) -> std::io::Result<()> {
    writeln!(w, "x1,y1,z1,x2,y2,z2,length")?;
    for s in &lines.segments {
        writeln!(w, "{},{},{},{},{},{},{}", s.a[0], s.a[1], s.a[2], s.b[0], s.b[1], s.b[2], s.length)?;
    }
    Ok(())
}
