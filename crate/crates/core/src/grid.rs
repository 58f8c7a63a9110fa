//! Time grids split at the LT trade dates and vector-valued curves that are
//! smooth on each `[t_k, t_{k+1})` with stored left limits at every `t_k`.

use std::sync::Arc;

/// A grid over `[0, T]` made of one segment per inter-trade interval. Every
/// trade date is the last node of one segment and the first node of the
/// next, so each `t_k` appears twice: once as a left limit, once as a value.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    breaks: Vec<f64>,
    segments: Vec<Vec<f64>>,
}

impl TimeGrid {
    /// `trade_times` must be strictly increasing inside `(0, horizon)`.
    pub fn new(horizon: f64, trade_times: &[f64], steps_per_unit_time: usize) -> Self {
        let mut breaks = Vec::with_capacity(trade_times.len() + 2);
        breaks.push(0.0);
        breaks.extend_from_slice(trade_times);
        breaks.push(horizon);
        let segments = breaks
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let steps = (((b - a) * steps_per_unit_time as f64) - 1e-9).ceil().max(1.0) as usize;
                let mut nodes: Vec<f64> = (0..=steps)
                    .map(|j| a + (b - a) * j as f64 / steps as f64)
                    .collect();
                nodes[0] = a;
                nodes[steps] = b;
                nodes
            })
            .collect();
        TimeGrid { breaks, segments }
    }

    pub fn shared(horizon: f64, trade_times: &[f64], steps_per_unit_time: usize) -> Arc<Self> {
        Arc::new(Self::new(horizon, trade_times, steps_per_unit_time))
    }

    pub fn horizon(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    /// `0, t_1, ..., t_K, T`.
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn trade_times(&self) -> &[f64] {
        &self.breaks[1..self.breaks.len() - 1]
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segment(&self, s: usize) -> &[f64] {
        &self.segments[s]
    }

    pub fn segments(&self) -> impl Iterator<Item = &[f64]> {
        self.segments.iter().map(Vec::as_slice)
    }

    /// Total node count, counting each trade date twice.
    pub fn node_count(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }

    /// Segment holding `t`; at a trade date, `left` selects the segment that
    /// ends there instead of the one that starts there.
    pub fn segment_index(&self, t: f64, left: bool) -> usize {
        let interior = &self.breaks[1..self.breaks.len() - 1];
        let idx = if left {
            interior.partition_point(|&b| b < t)
        } else {
            interior.partition_point(|&b| b <= t)
        };
        idx.min(self.segments.len() - 1)
    }

    /// Largest step size on the grid.
    pub fn max_step(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| s.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }
}

/// Vector-valued function of time stored at grid nodes with slopes, evaluated
/// by cubic Hermite interpolation inside each segment.
#[derive(Debug, Clone)]
pub struct PiecewiseCurve {
    grid: Arc<TimeGrid>,
    dim: usize,
    values: Vec<Vec<f64>>,
    slopes: Vec<Vec<f64>>,
}

impl PiecewiseCurve {
    /// Builds a curve from per-node values and slopes, `f(segment, node, t,
    /// value_out, slope_out)`.
    pub fn from_nodes<F>(grid: Arc<TimeGrid>, dim: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize, f64, &mut [f64], &mut [f64]),
    {
        let mut values = Vec::with_capacity(grid.n_segments());
        let mut slopes = Vec::with_capacity(grid.n_segments());
        for (s, nodes) in grid.segments().enumerate() {
            let mut vs = vec![0.0; nodes.len() * dim];
            let mut ds = vec![0.0; nodes.len() * dim];
            for (j, &t) in nodes.iter().enumerate() {
                f(
                    s,
                    j,
                    t,
                    &mut vs[j * dim..(j + 1) * dim],
                    &mut ds[j * dim..(j + 1) * dim],
                );
            }
            values.push(vs);
            slopes.push(ds);
        }
        PiecewiseCurve {
            grid,
            dim,
            values,
            slopes,
        }
    }

    /// Curve that is constant in time.
    pub fn constant(grid: Arc<TimeGrid>, value: &[f64]) -> Self {
        let dim = value.len();
        Self::from_nodes(grid, dim, |_, _, _, v, d| {
            v.copy_from_slice(value);
            d.fill(0.0);
        })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, s: usize, j: usize) -> &[f64] {
        &self.values[s][j * self.dim..(j + 1) * self.dim]
    }

    pub fn node_slope(&self, s: usize, j: usize) -> &[f64] {
        &self.slopes[s][j * self.dim..(j + 1) * self.dim]
    }

    pub fn node_mut(&mut self, s: usize, j: usize) -> (&mut [f64], &mut [f64]) {
        let d = self.dim;
        (
            &mut self.values[s][j * d..(j + 1) * d],
            &mut self.slopes[s][j * d..(j + 1) * d],
        )
    }

    /// Value at `t` inside segment `s` (clamped to the segment).
    pub fn eval_in_segment(&self, s: usize, t: f64, out: &mut [f64]) {
        let nodes = self.grid.segment(s);
        let t = t.clamp(nodes[0], nodes[nodes.len() - 1]);
        let j = nodes.partition_point(|&x| x <= t).clamp(1, nodes.len() - 1) - 1;
        let (t0, t1) = (nodes[j], nodes[j + 1]);
        let h = t1 - t0;
        let u = (t - t0) / h;
        if u == 0.0 {
            out.copy_from_slice(self.node(s, j));
            return;
        }
        if u == 1.0 {
            out.copy_from_slice(self.node(s, j + 1));
            return;
        }
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        let (y0, y1) = (self.node(s, j), self.node(s, j + 1));
        let (m0, m1) = (self.node_slope(s, j), self.node_slope(s, j + 1));
        for i in 0..self.dim {
            out[i] = h00 * y0[i] + h10 * h * m0[i] + h01 * y1[i] + h11 * h * m1[i];
        }
    }

    /// Right-continuous evaluation.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_in_segment(self.grid.segment_index(t, false), t, &mut out);
        out
    }

    /// Left limit at `t`.
    pub fn eval_left(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_in_segment(self.grid.segment_index(t, true), t, &mut out);
        out
    }

    /// Value just before the `k`-th trade (1-based).
    pub fn left_limit_at_trade(&self, k: usize) -> &[f64] {
        let s = k - 1;
        self.node(s, self.grid.segment(s).len() - 1)
    }

    /// Value at the `k`-th trade (1-based), after the jump.
    pub fn value_at_trade(&self, k: usize) -> &[f64] {
        self.node(k, 0)
    }

    pub fn initial(&self) -> &[f64] {
        self.node(0, 0)
    }

    pub fn terminal(&self) -> &[f64] {
        let s = self.grid.n_segments() - 1;
        self.node(s, self.grid.segment(s).len() - 1)
    }

    /// Iterates `(segment, node index, time, value)` over all nodes.
    pub fn iter_nodes(&self) -> impl Iterator<Item = (usize, usize, f64, &[f64])> + '_ {
        self.grid.segments().enumerate().flat_map(move |(s, nodes)| {
            nodes
                .iter()
                .enumerate()
                .map(move |(j, &t)| (s, j, t, self.node(s, j)))
        })
    }

    /// Scalar component `i` as its own curve.
    pub fn component(&self, i: usize) -> PiecewiseCurve {
        assert!(i < self.dim);
        PiecewiseCurve::from_nodes(self.grid.clone(), 1, |s, j, _, v, d| {
            v[0] = self.node(s, j)[i];
            d[0] = self.node_slope(s, j)[i];
        })
    }

    /// `sum_m weights[m] * curves[m]`, node by node (slopes included).
    pub fn linear_combination(curves: &[&PiecewiseCurve], weights: &[f64]) -> PiecewiseCurve {
        assert_eq!(curves.len(), weights.len());
        assert!(!curves.is_empty());
        let grid = curves[0].grid.clone();
        let dim = curves[0].dim;
        PiecewiseCurve::from_nodes(grid, dim, |s, j, _, v, d| {
            v.fill(0.0);
            d.fill(0.0);
            for (c, &w) in curves.iter().zip(weights) {
                for i in 0..dim {
                    v[i] += w * c.node(s, j)[i];
                    d[i] += w * c.node_slope(s, j)[i];
                }
            }
        })
    }

    /// Largest absolute node-wise difference against a curve on the same grid.
    pub fn sup_distance(&self, other: &PiecewiseCurve) -> f64 {
        assert_eq!(self.dim, other.dim);
        assert_eq!(self.grid.node_count(), other.grid.node_count());
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trade_dates_are_exact_double_nodes() {
        let times: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        let grid = TimeGrid::new(1.0, &times, 10_000);
        assert_eq!(grid.n_segments(), 10);
        for (k, &t) in times.iter().enumerate() {
            assert_eq!(*grid.segment(k).last().unwrap(), t);
            assert_eq!(grid.segment(k + 1)[0], t);
            assert_eq!(grid.segment(k).len(), 1001);
        }
        assert_eq!(grid.node_count(), 10 * 1001);
        assert!((grid.max_step() - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn uneven_segments_get_enough_steps() {
        let grid = TimeGrid::new(2.0, &[0.013, 1.5], 100);
        assert_eq!(grid.segment(0).len(), 3);
        assert!(grid.max_step() <= 0.01 + 1e-12);
        let empty = TimeGrid::new(1.0, &[], 100);
        assert_eq!(empty.n_segments(), 1);
        assert!(empty.trade_times().is_empty());
    }

    #[test]
    fn segment_lookup_respects_sides() {
        let grid = TimeGrid::new(1.0, &[0.25, 0.5], 100);
        assert_eq!(grid.segment_index(0.25, false), 1);
        assert_eq!(grid.segment_index(0.25, true), 0);
        assert_eq!(grid.segment_index(0.0, true), 0);
        assert_eq!(grid.segment_index(1.0, false), 2);
        assert_eq!(grid.segment_index(0.7, true), 2);
    }

    #[test]
    fn hermite_reproduces_cubics_and_jumps() {
        let grid = TimeGrid::shared(1.0, &[0.5], 100);
        let curve = PiecewiseCurve::from_nodes(grid, 1, |s, _, t, v, d| {
            let shift = if s == 1 { 3.0 } else { 0.0 };
            v[0] = t * t * t - t + shift;
            d[0] = 3.0 * t * t - 1.0;
        });
        for &t in &[0.123, 0.377, 0.731] {
            let exact = t * t * t - t + if t > 0.5 { 3.0 } else { 0.0 };
            assert!((curve.eval(t)[0] - exact).abs() < 1e-14);
        }
        assert!((curve.eval(0.5)[0] - (0.125 - 0.5 + 3.0)).abs() < 1e-15);
        assert!((curve.eval_left(0.5)[0] - (0.125 - 0.5)).abs() < 1e-15);
        assert_eq!(curve.left_limit_at_trade(1)[0], 0.125 - 0.5);
        assert_eq!(curve.value_at_trade(1)[0], 0.125 - 0.5 + 3.0);
    }

    #[test]
    fn combinations_are_nodewise() {
        let grid = TimeGrid::shared(1.0, &[0.5], 100);
        let a = PiecewiseCurve::constant(grid.clone(), &[1.0, 2.0]);
        let b = PiecewiseCurve::from_nodes(grid, 2, |_, _, t, v, d| {
            v[0] = t;
            v[1] = -t;
            d[0] = 1.0;
            d[1] = -1.0;
        });
        let c = PiecewiseCurve::linear_combination(&[&a, &b], &[2.0, 0.5]);
        assert_eq!(c.eval(0.3), vec![2.0 + 0.15, 4.0 - 0.15]);
        assert_eq!(c.component(1).eval(1.0), vec![3.5]);
        assert_eq!(a.sup_distance(&a), 0.0);
    }
}
