//! Fixed-step explicit integrators shared by every solver in the crate.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

impl Integrator {
    pub fn order(self) -> u32 {
        match self {
            Integrator::Euler => 1,
            Integrator::Rk4 => 4,
        }
    }

    /// Advances `y` from `t` to `t + h` (`h` may be negative) for
    /// `y' = f(t, y)`.
    pub fn step<F>(self, t: f64, h: f64, y: &mut [f64], work: &mut Workspace, mut f: F)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        work.resize(y.len());
        match self {
            Integrator::Euler => {
                f(t, y, &mut work.k1);
                for (yi, k) in y.iter_mut().zip(&work.k1) {
                    *yi += h * k;
                }
            }
            Integrator::Rk4 => {
                let Workspace { k1, k2, k3, k4, tmp } = work;
                f(t, y, k1);
                for i in 0..y.len() {
                    tmp[i] = y[i] + 0.5 * h * k1[i];
                }
                f(t + 0.5 * h, tmp, k2);
                for i in 0..y.len() {
                    tmp[i] = y[i] + 0.5 * h * k2[i];
                }
                f(t + 0.5 * h, tmp, k3);
                for i in 0..y.len() {
                    tmp[i] = y[i] + h * k3[i];
                }
                f(t + h, tmp, k4);
                for i in 0..y.len() {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
    }
}

impl std::str::FromStr for Integrator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            other => Err(format!("unknown integrator `{other}` (expected euler|rk4)")),
        }
    }
}

/// Scratch buffers reused across steps.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    fn resize(&mut self, n: usize) {
        if self.k1.len() != n {
            for v in [
                &mut self.k1,
                &mut self.k2,
                &mut self.k3,
                &mut self.k4,
                &mut self.tmp,
            ] {
                v.resize(n, 0.0);
            }
        }
    }
}
