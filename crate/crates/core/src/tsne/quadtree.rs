//! Barnes-Hut quadtree over a 2D layout.
//!
//! Each cell stores its point count and center of mass. A cell is summarized
//! as a single body when `side / distance < theta`; with `theta = 0` only
//! leaves are used, which reproduces the exact repulsive sum.

use rayon::prelude::*;

use super::affinity::SparseAffinities;
use super::Point;

const MAX_DEPTH: usize = 48;

#[derive(Debug, Clone)]
struct Cell {
    center: Point,
    half: f64,
    count: usize,
    com: Point,
    children: Option<[u32; 4]>,
    /// Points stored at a leaf. More than one only when coincident or at
    /// `MAX_DEPTH`.
    points: Vec<u32>,
}

impl Cell {
    fn new(center: Point, half: f64) -> Self {
        Cell {
            center,
            half,
            count: 0,
            com: [0.0; 2],
            children: None,
            points: Vec::new(),
        }
    }

    fn quadrant(&self, p: &Point) -> usize {
        usize::from(p[0] > self.center[0]) | (usize::from(p[1] > self.center[1]) << 1)
    }
}

#[derive(Debug, Clone)]
pub struct QuadTree<'a> {
    cells: Vec<Cell>,
    points: &'a [Point],
}

impl<'a> QuadTree<'a> {
    pub fn build(points: &'a [Point]) -> Self {
        let (mut min, mut max) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for d in 0..2 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        let center = [(min[0] + max[0]) / 2.0, (min[1] + max[1]) / 2.0];
        let half = ((max[0] - min[0]).max(max[1] - min[1]) / 2.0).max(1e-12) * (1.0 + 1e-9);
        let mut tree = QuadTree {
            cells: vec![Cell::new(center, half)],
            points,
        };
        for i in 0..points.len() {
            tree.insert(i as u32);
        }
        tree
    }

    fn insert(&mut self, idx: u32) {
        let p = self.points[idx as usize];
        let mut cell = 0usize;
        let mut depth = 0;
        loop {
            {
                let c = &mut self.cells[cell];
                c.count += 1;
                let w = 1.0 / c.count as f64;
                c.com[0] += (p[0] - c.com[0]) * w;
                c.com[1] += (p[1] - c.com[1]) * w;
            }
            if let Some(children) = self.cells[cell].children {
                let q = self.cells[cell].quadrant(&p);
                cell = children[q] as usize;
                depth += 1;
                continue;
            }
            let c = &self.cells[cell];
            let coincident = c.points.iter().all(|&j| self.points[j as usize] == p);
            if c.points.is_empty() || coincident || depth >= MAX_DEPTH {
                self.cells[cell].points.push(idx);
                return;
            }
            self.subdivide(cell);
            let q = self.cells[cell].quadrant(&p);
            cell = self.cells[cell].children.unwrap()[q] as usize;
            depth += 1;
        }
    }

    /// Splits a leaf, pushing its stored points one level down.
    fn subdivide(&mut self, cell: usize) {
        let Cell { center, half, .. } = self.cells[cell];
        let h = half / 2.0;
        let base = self.cells.len() as u32;
        for q in 0..4 {
            let cx = if q & 1 == 1 { center[0] + h } else { center[0] - h };
            let cy = if q & 2 == 2 { center[1] + h } else { center[1] - h };
            self.cells.push(Cell::new([cx, cy], h));
        }
        self.cells[cell].children = Some([base, base + 1, base + 2, base + 3]);
        let moved = std::mem::take(&mut self.cells[cell].points);
        for idx in moved {
            let p = self.points[idx as usize];
            let child = base as usize + self.cells[cell].quadrant(&p);
            let c = &mut self.cells[child];
            c.count += 1;
            let w = 1.0 / c.count as f64;
            c.com[0] += (p[0] - c.com[0]) * w;
            c.com[1] += (p[1] - c.com[1]) * w;
            c.points.push(idx);
        }
    }

    /// Repulsive terms for point `i`: returns `(sum_j w_ij^2 (y_i - y_j), sum_j w_ij)`
    /// with `w = (1 + d^2)^-1`, approximated under `theta`.
    pub fn repulsion(&self, i: usize, theta: f64) -> (Point, f64) {
        let yi = self.points[i];
        let mut force = [0.0; 2];
        let mut z = 0.0;
        let mut stack = vec![0usize];
        while let Some(ci) = stack.pop() {
            let c = &self.cells[ci];
            if c.count == 0 {
                continue;
            }
            match c.children {
                None => {
                    for &j in &c.points {
                        if j as usize == i {
                            continue;
                        }
                        let yj = self.points[j as usize];
                        let (dx, dy) = (yi[0] - yj[0], yi[1] - yj[1]);
                        let w = 1.0 / (1.0 + dx * dx + dy * dy);
                        z += w;
                        force[0] += w * w * dx;
                        force[1] += w * w * dy;
                    }
                }
                Some(children) => {
                    let (dx, dy) = (yi[0] - c.com[0], yi[1] - c.com[1]);
                    let d2 = dx * dx + dy * dy;
                    let side = 2.0 * c.half;
                    if theta > 0.0 && side * side < theta * theta * d2 {
                        let w = 1.0 / (1.0 + d2);
                        let m = c.count as f64;
                        z += m * w;
                        force[0] += m * w * w * dx;
                        force[1] += m * w * w * dy;
                    } else {
                        stack.extend(children.iter().map(|&k| k as usize));
                    }
                }
            }
        }
        (force, z)
    }
}

/// Barnes-Hut gradient: exact attraction over the sparse `p`, tree-based
/// repulsion. Also returns the normalization `Z = sum_{i != j} w_ij`.
pub fn bh_gradient(p: &SparseAffinities, y: &[Point], theta: f64) -> (Vec<Point>, f64) {
    exaggerated_bh_gradient(p, y, theta, 1.0)
}

pub(crate) fn exaggerated_bh_gradient(
    p: &SparseAffinities,
    y: &[Point],
    theta: f64,
    exaggeration: f64,
) -> (Vec<Point>, f64) {
    let tree = QuadTree::build(y);
    let rep: Vec<(Point, f64)> = (0..y.len())
        .into_par_iter()
        .map(|i| tree.repulsion(i, theta))
        .collect();
    let z: f64 = rep.iter().map(|r| r.1).sum();
    let grad = (0..y.len())
        .into_par_iter()
        .map(|i| {
            let mut attr = [0.0; 2];
            for (j, pij) in p.row(i) {
                let (dx, dy) = (y[i][0] - y[j][0], y[i][1] - y[j][1]);
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                attr[0] += pij * w * dx;
                attr[1] += pij * w * dy;
            }
            let f = rep[i].0;
            [
                4.0 * (exaggeration * attr[0] - f[0] / z),
                4.0 * (exaggeration * attr[1] - f[1] / z),
            ]
        })
        .collect();
    (grad, z)
}

/// KL cost over the sparse `p` given the normalization `z` from [`bh_gradient`].
pub fn bh_cost(p: &SparseAffinities, y: &[Point], z: f64) -> f64 {
    (0..p.n)
        .map(|i| {
            p.row(i)
                .filter(|&(_, pij)| pij > 0.0)
                .map(|(j, pij)| {
                    let (dx, dy) = (y[i][0] - y[j][0], y[i][1] - y[j][1]);
                    let q = (1.0 / (1.0 + dx * dx + dy * dy) / z).max(super::gradient::Q_FLOOR);
                    pij * (pij / q).ln()
                })
                .sum::<f64>()
        })
        .sum()
}
