//! Uniform-grid spatial index for closed-ball queries over a flat point array.

use std::collections::HashMap;

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 8;

pub(crate) type CellKey = [i64; MAX_DIM];

pub(crate) fn cell_key(p: &[f64], cell: f64) -> CellKey {
    let mut key = [0i64; MAX_DIM];
    for (k, &x) in key.iter_mut().zip(p) {
        *k = (x / cell).floor() as i64;
    }
    key
}

/// Points bucketed by grid cell. Buckets store point indices in increasing order,
/// so every visit order is deterministic.
#[derive(Debug)]
pub struct GridIndex {
    dim: usize,
    cell: f64,
    order: Vec<u32>,
    buckets: HashMap<CellKey, (u32, u32)>,
}

impl GridIndex {
    pub fn build(points: &[f64], dim: usize, cell: f64) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "unsupported dimension {dim}");
        assert!(cell > 0.0 && cell.is_finite(), "cell side must be positive");
        let n = points.len() / dim;
        let mut keyed: Vec<(CellKey, u32)> = (0..n)
            .map(|i| (cell_key(&points[i * dim..(i + 1) * dim], cell), i as u32))
            .collect();
        keyed.sort_unstable();
        let mut buckets = HashMap::new();
        let mut order = Vec::with_capacity(n);
        let mut start = 0usize;
        while start < keyed.len() {
            let key = keyed[start].0;
            let mut end = start;
            while end < keyed.len() && keyed[end].0 == key {
                order.push(keyed[end].1);
                end += 1;
            }
            buckets.insert(key, (start as u32, end as u32));
            start = end;
        }
        GridIndex {
            dim,
            cell,
            order,
            buckets,
        }
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    /// Calls `f(i)` for every point `i` with `|p_i - x| <= r`.
    pub fn for_each_within(&self, points: &[f64], x: &[f64], r: f64, mut f: impl FnMut(usize)) {
        self.scan(points, x, r, |i| {
            f(i);
            true
        });
    }

    /// True when at least one point lies in the closed ball.
    pub fn any_within(&self, points: &[f64], x: &[f64], r: f64) -> bool {
        let mut found = false;
        self.scan(points, x, r, |_| {
            found = true;
            false
        });
        found
    }

    // `f` returns false to stop the scan.
    fn scan(&self, points: &[f64], x: &[f64], r: f64, mut f: impl FnMut(usize) -> bool) {
        if r < 0.0 || r.is_nan() {
            return;
        }
        let d = self.dim;
        let r2 = r * r;
        let mut lo = [0i64; MAX_DIM];
        let mut hi = [0i64; MAX_DIM];
        for k in 0..d {
            lo[k] = ((x[k] - r) / self.cell).floor() as i64;
            hi[k] = ((x[k] + r) / self.cell).floor() as i64;
        }
        let mut cur = lo;
        loop {
            if let Some(&(s, e)) = self.buckets.get(&cur) {
                for &idx in &self.order[s as usize..e as usize] {
                    let i = idx as usize;
                    let p = &points[i * d..(i + 1) * d];
                    let mut d2 = 0.0;
                    for k in 0..d {
                        let t = p[k] - x[k];
                        d2 += t * t;
                    }
                    if d2 <= r2 && !f(i) {
                        return;
                    }
                }
            }
            // odometer over the cell box, last axis fastest
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if cur[k] < hi[k] {
                    cur[k] += 1;
                    break;
                }
                cur[k] = lo[k];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_brute_force() {
        let pts: Vec<f64> = (0..400)
            .flat_map(|i| {
                let t = i as f64 * 0.618_033_988_75;
                [t.fract(), (t * 7.3).fract()]
            })
            .collect();
        let idx = GridIndex::build(&pts, 2, 0.125);
        for &(x, y, r) in &[(0.5, 0.5, 0.1), (0.0, 0.0, 0.3), (0.9, 0.2, 0.05), (0.3, 0.7, 0.9)] {
            let mut got = Vec::new();
            idx.for_each_within(&pts, &[x, y], r, |i| got.push(i));
            got.sort_unstable();
            let want: Vec<usize> = (0..400)
                .filter(|&i| {
                    let dx = pts[2 * i] - x;
                    let dy = pts[2 * i + 1] - y;
                    dx * dx + dy * dy <= r * r
                })
                .collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn closed_ball_includes_ties() {
        let pts = [0.0, 0.0, 1.0, 0.0];
        let idx = GridIndex::build(&pts, 2, 0.5);
        let mut n = 0;
        idx.for_each_within(&pts, &[0.0, 0.0], 1.0, |_| n += 1);
        assert_eq!(n, 2);
        assert!(idx.any_within(&pts, &[2.0, 0.0], 1.0));
        assert!(!idx.any_within(&pts, &[2.5, 0.0], 1.0));
    }
}
