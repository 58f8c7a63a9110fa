//! Finite population of HFTs following the mean-field feedback law.
//!
//! Agents are independent given the mean field, so each agent's whole path
//! is simulated in one pass. The state carried is the deviation
//! `D = X - E_Y` from the current state mean, which obeys the linear ODE
//! `dD/dt = (h2_Y/eta) D - (p_Q E)_Y` between switches and jumps by
//! `E_old - E_new` when `Y` switches. Empirical quantities are accumulated
//! from deviations, so a deterministic single-state population reproduces
//! the mean field exactly.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::chain::build_p_q;
use crate::equilibrium::Equilibrium;
use crate::error::SolveError;
use crate::ode::{Integrator, Workspace};

use super::rng::stream;

/// Agents per accumulation chunk; chunk sums are combined in chunk order.
pub const CHUNK: usize = 512;
/// Largest trajectory dump, in rows.
pub const DUMP_ROW_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimSettings {
    pub agents: usize,
    pub seed: u64,
    pub replication: u64,
    pub dump_agents: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceMetrics {
    /// `sup_t ||theta(t) - p(t)||^2`.
    pub theta_dev: f64,
    /// `sup_t ||Z(t) - nu(t)||^2`.
    pub z_dev: f64,
    /// `int_0^T |vbar(t) - mu(t)|^2 dt`.
    pub vbar_l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpRow {
    pub agent: usize,
    pub time: f64,
    pub state: usize,
    pub inventory: f64,
}

/// Per-node sums over a set of agents: state counts and `sum 1[Y=i] D`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSums {
    n: usize,
    pub counts: Vec<u64>,
    pub deviation: Vec<f64>,
}

impl NodeSums {
    fn new(nodes: usize, n: usize) -> Self {
        NodeSums {
            n,
            counts: vec![0; nodes * n],
            deviation: vec![0.0; nodes * n],
        }
    }

    fn add(&mut self, other: &NodeSums) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.deviation.iter_mut().zip(&other.deviation) {
            *a += b;
        }
    }

    pub fn counts_at(&self, node: usize) -> &[u64] {
        &self.counts[node * self.n..(node + 1) * self.n]
    }

    pub fn deviation_at(&self, node: usize) -> &[f64] {
        &self.deviation[node * self.n..(node + 1) * self.n]
    }
}

/// One simulated population.
#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub settings: SimSettings,
    /// Flattened node times (each trade date twice).
    pub times: Vec<f64>,
    /// Sums over agents `1..M` (everyone but the deviator, agent 0).
    pub others: NodeSums,
    /// Agent 0 alone.
    pub deviator: NodeSums,
    pub deviator_initial: (f64, usize),
    /// Empirical `theta_i`, `Z_i`, `vbar`, `Xbar` at every node.
    pub theta: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub vbar: Vec<f64>,
    pub xbar: Vec<f64>,
    /// Average speed of agents `1..M` at every node (`mu` when `M = 1`).
    pub others_speed: Vec<f64>,
    pub metrics: ConvergenceMetrics,
    pub max_abs_inventory: f64,
    pub inventory_bound: f64,
    pub dump: Option<Vec<DumpRow>>,
}

/// Precomputed coefficients of the deviation dynamics on the grid.
struct Dynamics<'a> {
    eq: &'a Equilibrium,
    n: usize,
    integrator: Integrator,
    /// Start index of each segment in the flattened node list.
    offsets: Vec<usize>,
    /// Per cell and state: `D(t+h) = a D(t) + b`.
    maps: Vec<(f64, f64)>,
    /// Per node and state.
    gain: Vec<f64>,
    e_nodes: Vec<f64>,
    mu_nodes: Vec<f64>,
    q: Vec<Vec<f64>>,
    e_half_width: f64,
}

impl<'a> Dynamics<'a> {
    fn new(eq: &'a Equilibrium) -> Self {
        let n = eq.cfg.n_states();
        let grid = eq.mean_field.grid().clone();
        let integrator = eq.cfg.solver.integrator;
        let mut offsets = Vec::with_capacity(grid.n_segments());
        let mut maps = Vec::new();
        let mut gain = Vec::new();
        let mut e_nodes = Vec::new();
        let mut mu_nodes = Vec::new();
        let mut total = 0;
        let mut work = Workspace::default();
        for (s, nodes) in grid.segments().enumerate() {
            offsets.push(total);
            total += nodes.len();
            for j in 0..nodes.len() {
                let h = eq.propagator.h2.node(s, j);
                gain.extend(h.iter().map(|v| v / eq.cfg.market.eta));
                e_nodes.extend_from_slice(eq.mean_field.e_by_state.node(s, j));
                mu_nodes.extend_from_slice(eq.mean_field.mu_by_state.node(s, j));
            }
            for w in nodes.windows(2) {
                for i in 0..n {
                    let dyn_ = |d0: f64, work: &mut Workspace| {
                        let mut y = [d0];
                        integrator.step(w[0], w[1] - w[0], &mut y, work, |t, y, dy| {
                            let (k, src) = Self::coefficients_at(eq, s, t, i);
                            dy[0] = k * y[0] - src;
                        });
                        y[0]
                    };
                    let b = dyn_(0.0, &mut work);
                    let a = dyn_(1.0, &mut work) - b;
                    maps.push((a, b));
                }
            }
        }
        let max_e0 = eq.cfg.population.e0.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
        Dynamics {
            eq,
            n,
            integrator,
            offsets,
            maps,
            gain,
            e_nodes,
            mu_nodes,
            q: eq.cfg.aversion.q.clone(),
            e_half_width: (eq.cfg.population.inventory_bound - max_e0).max(0.0),
        }
    }

    /// `(h2_i/eta, (p_Q E)_i)` at time `t` inside segment `s`.
    fn coefficients_at(eq: &Equilibrium, s: usize, t: f64, i: usize) -> (f64, f64) {
        let n = eq.cfg.n_states();
        let mut h = vec![0.0; n];
        eq.propagator.h2.eval_in_segment(s, t, &mut h);
        if n == 1 {
            return (h[0] / eq.cfg.market.eta, 0.0);
        }
        let mut p = vec![0.0; n];
        let mut e = vec![0.0; n];
        eq.propagator.chain.p.eval_in_segment(s, t, &mut p);
        eq.mean_field.e_by_state.eval_in_segment(s, t, &mut e);
        let pq = build_p_q(&p, eq.propagator.chain.q());
        let src: f64 = (0..n).map(|j| pq[(i, j)] * e[j]).sum();
        (h[i] / eq.cfg.market.eta, src)
    }

    fn partial_step(&self, s: usize, i: usize, t0: f64, t1: f64, d: f64, work: &mut Workspace) -> f64 {
        let mut y = [d];
        self.integrator.step(t0, t1 - t0, &mut y, work, |t, y, dy| {
            let (k, src) = Self::coefficients_at(self.eq, s, t, i);
            dy[0] = k * y[0] - src;
        });
        y[0]
    }

    fn node_count(&self) -> usize {
        self.gain.len() / self.n
    }

    fn rate(&self, i: usize) -> f64 {
        -self.q[i][i]
    }

    fn next_switch<R: Rng>(&self, rng: &mut R, t: f64, i: usize) -> f64 {
        let rate = self.rate(i);
        if rate > 0.0 {
            t + Exp::new(rate).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        }
    }

    fn switch_target<R: Rng>(&self, rng: &mut R, i: usize) -> usize {
        let u: f64 = rng.random::<f64>() * self.rate(i);
        let mut acc = 0.0;
        let mut last = i;
        for j in 0..self.n {
            if j == i || self.q[i][j] <= 0.0 {
                continue;
            }
            acc += self.q[i][j];
            last = j;
            if u < acc {
                return j;
            }
        }
        last
    }

    /// Simulates one agent, adding it to `sums`; returns `max |X|`.
    fn run_agent(
        &self,
        settings: &SimSettings,
        agent: usize,
        sums: &mut NodeSums,
        dump: Option<&mut Vec<DumpRow>>,
        initial: &mut (f64, usize),
    ) -> f64 {
        let n = self.n;
        let grid = self.eq.mean_field.grid();
        let mut rng = stream(settings.seed, settings.replication, agent as u64);
        let p0 = &self.eq.cfg.aversion.p0;
        let u: f64 = rng.random();
        let mut y = 0;
        let mut acc = 0.0;
        for (i, &p) in p0.iter().enumerate() {
            acc += p;
            y = i;
            if u < acc && p > 0.0 {
                break;
            }
        }
        let mut d = self.e_half_width * (2.0 * rng.random::<f64>() - 1.0);
        *initial = (self.eq.cfg.population.e0[y] + d, y);
        let mut next = self.next_switch(&mut rng, 0.0, y);
        let mut work = Workspace::default();
        let mut max_abs = 0.0_f64;
        let mut dump = dump;
        let mut cell = 0;
        let mut e_buf = vec![0.0; n];

        let mut record = |node: usize, y: usize, d: f64, sums: &mut NodeSums| {
            sums.counts[node * n + y] += 1;
            sums.deviation[node * n + y] += d;
            let x = d + self.e_nodes[node * n + y];
            max_abs = max_abs.max(x.abs());
            if let Some(rows) = dump.as_deref_mut() {
                rows.push(DumpRow {
                    agent,
                    time: 0.0,
                    state: y,
                    inventory: x,
                });
            }
        };

        for (s, nodes) in grid.segments().enumerate() {
            let base = self.offsets[s];
            record(base, y, d, sums);
            for j in 0..nodes.len() - 1 {
                let (t0, t1) = (nodes[j], nodes[j + 1]);
                if next >= t1 {
                    let (a, b) = self.maps[cell * n + y];
                    d = a * d + b;
                } else {
                    let mut t = t0;
                    while next < t1 {
                        d = self.partial_step(s, y, t, next, d, &mut work);
                        t = next;
                        let target = self.switch_target(&mut rng, y);
                        self.eq.mean_field.e_by_state.eval_in_segment(s, t, &mut e_buf);
                        d += e_buf[y] - e_buf[target];
                        y = target;
                        next = self.next_switch(&mut rng, t, y);
                    }
                    d = self.partial_step(s, y, t, t1, d, &mut work);
                }
                cell += 1;
                record(base + j + 1, y, d, sums);
            }
        }
        max_abs
    }
}

/// Simulates `settings.agents` HFTs under the equilibrium feedback law.
/// Results depend only on `(equilibrium, settings)`, never on the number of
/// worker threads.
pub fn simulate_population(eq: &Equilibrium, settings: &SimSettings) -> Result<SimOutcome, SolveError> {
    let m = settings.agents.max(1);
    let dynamics = Dynamics::new(eq);
    let n = dynamics.n;
    let nodes = dynamics.node_count();
    if settings.dump_agents && m * nodes > DUMP_ROW_LIMIT {
        return Err(SolveError::DumpTooLarge {
            rows: m * nodes,
            limit: DUMP_ROW_LIMIT,
        });
    }
    let times: Vec<f64> = eq.mean_field.grid().segments().flat_map(|s| s.iter().cloned()).collect();

    let mut deviator = NodeSums::new(nodes, n);
    let mut deviator_initial = (0.0, 0);
    let mut dump0 = settings.dump_agents.then(Vec::new);
    let mut max_abs = dynamics.run_agent(settings, 0, &mut deviator, dump0.as_mut(), &mut deviator_initial);

    let chunks: Vec<(NodeSums, f64, Option<Vec<DumpRow>>)> = (1..m)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|agents| {
            let mut sums = NodeSums::new(nodes, n);
            let mut rows = settings.dump_agents.then(Vec::new);
            let mut max_abs = 0.0_f64;
            let mut init = (0.0, 0);
            for &a in agents {
                max_abs = max_abs.max(dynamics.run_agent(settings, a, &mut sums, rows.as_mut(), &mut init));
            }
            (sums, max_abs, rows)
        })
        .collect();
    let mut others = NodeSums::new(nodes, n);
    let mut dump = dump0;
    for (sums, mx, rows) in &chunks {
        others.add(sums);
        max_abs = max_abs.max(*mx);
        if let (Some(all), Some(rows)) = (dump.as_mut(), rows) {
            all.extend_from_slice(rows);
        }
    }
    if let Some(rows) = dump.as_mut() {
        for (idx, row) in rows.iter_mut().enumerate() {
            row.time = times[idx % nodes];
        }
    }

    // Empirical quantities against the mean field.
    let mf = &eq.mean_field;
    let mut total = others.clone();
    total.add(&deviator);
    let mf_f = m as f64;
    let p_nodes: Vec<f64> = eq
        .propagator
        .chain
        .p
        .iter_nodes()
        .flat_map(|(_, _, _, v)| v.to_vec())
        .collect();
    let mu_agg: Vec<f64> = mf.mu_agg.iter_nodes().map(|(_, _, _, v)| v[0]).collect();
    let speed = |counts: &[u64], dev: &[f64], node: usize, count: f64| -> f64 {
        (0..n)
            .map(|i| {
                counts[i] as f64 * dynamics.mu_nodes[node * n + i] + dynamics.gain[node * n + i] * dev[i]
            })
            .sum::<f64>()
            / count
    };

    let mut theta = Vec::with_capacity(nodes);
    let mut z = Vec::with_capacity(nodes);
    let mut vbar = Vec::with_capacity(nodes);
    let mut xbar = Vec::with_capacity(nodes);
    let mut others_speed = Vec::with_capacity(nodes);
    let mut theta_dev = 0.0_f64;
    let mut z_dev = 0.0_f64;
    let mut vbar_dev = Vec::with_capacity(nodes);
    for node in 0..nodes {
        let (c, dv) = (total.counts_at(node), total.deviation_at(node));
        let mut th = vec![0.0; n];
        let mut zz = vec![0.0; n];
        let (mut td, mut zd, mut speed_dev, mut xb) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let idx = node * n + i;
            th[i] = c[i] as f64 / mf_f;
            let dtheta = th[i] - p_nodes[idx];
            let e = dynamics.e_nodes[idx];
            zz[i] = th[i] * e + dv[i] / mf_f;
            let dz = dtheta * e + dv[i] / mf_f;
            td += dtheta * dtheta;
            zd += dz * dz;
            speed_dev += dtheta * dynamics.mu_nodes[idx] + dynamics.gain[idx] * dv[i] / mf_f;
            xb += zz[i];
        }
        theta_dev = theta_dev.max(td);
        z_dev = z_dev.max(zd);
        vbar.push(mu_agg[node] + speed_dev);
        vbar_dev.push(speed_dev);
        xbar.push(xb);
        theta.push(th);
        z.push(zz);
        others_speed.push(if m > 1 {
            speed(others.counts_at(node), others.deviation_at(node), node, (m - 1) as f64)
        } else {
            mu_agg[node]
        });
    }
    let mut vbar_l2 = 0.0;
    for s in 0..dynamics.offsets.len() {
        let seg = eq.mean_field.grid().segment(s);
        let base = dynamics.offsets[s];
        for j in 0..seg.len() - 1 {
            let (a, b) = (vbar_dev[base + j], vbar_dev[base + j + 1]);
            vbar_l2 += 0.5 * (seg[j + 1] - seg[j]) * (a * a + b * b);
        }
    }

    let horizon = eq.cfg.schedule.horizon;
    let c2 = (0..nodes * n)
        .map(|idx| {
            let beta = dynamics.gain[idx];
            let alpha = dynamics.mu_nodes[idx] - beta * dynamics.e_nodes[idx];
            alpha.abs().max(beta.abs())
        })
        .fold(0.0, f64::max);
    let inventory_bound = (eq.cfg.population.inventory_bound + c2 * horizon) * (c2 * horizon).exp();
    if max_abs > inventory_bound {
        return Err(SolveError::InventoryBound {
            value: max_abs,
            bound: inventory_bound,
        });
    }

    Ok(SimOutcome {
        settings: *settings,
        times,
        others,
        deviator,
        deviator_initial,
        theta,
        z,
        vbar,
        xbar,
        others_speed,
        metrics: ConvergenceMetrics {
            theta_dev,
            z_dev,
            vbar_l2,
        },
        max_abs_inventory: max_abs,
        inventory_bound,
        dump,
    })
}
