//! Independent finite-difference oracle for GCN gradients.
//!
//! The forward pass is re-implemented with plain loops in double-double
//! arithmetic, so that `f(θ+h) − f(θ−h)` carries no double-precision
//! rounding noise and the only remaining error is the O(h²) truncation of
//! the central difference.

#![allow(dead_code)]

use mpnas_core::predictor::{GcnParams, Parameters};
use mpnas_core::search_space::EncodedGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn quick(s: f64, e: f64) -> Dd {
        let hi = s + e;
        Dd {
            hi,
            lo: e - (hi - s),
        }
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = self.hi + o.hi;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (o.hi - bb);
        Dd::quick(s, err + self.lo + o.lo)
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + self.hi * o.lo + self.lo * o.hi;
        Dd::quick(p, e)
    }

    pub fn is_zero(self) -> bool {
        self.hi == 0.0 && self.lo == 0.0
    }

    pub fn relu(self) -> Dd {
        if self.hi > 0.0 || (self.hi == 0.0 && self.lo > 0.0) {
            self
        } else {
            Dd::ZERO
        }
    }
}

/// Batch MSE evaluated in double-double, reading weights from `theta` through
/// the parameter layout of `shape`.
pub fn mse_dd(shape: &GcnParams, theta: &[Dd], batch: &[&EncodedGraph], targets: &[f64]) -> Dd {
    let layout = shape.layout();
    let width = layout.config.width;
    let mut total = Dd::ZERO;
    for (enc, &t) in batch.iter().zip(targets) {
        let n = enc.features.nrows();
        let mut h: Vec<Vec<Dd>> = (0..n)
            .map(|i| enc.features.row(i).iter().map(|&x| Dd::from(x)).collect())
            .collect();
        for l in 0..layout.num_layers() {
            let fan_in = layout.fan_in(l);
            let w = &theta[layout.weight_range(l)];
            let b = &theta[layout.bias_range(l)];
            let mut hw = vec![vec![Dd::ZERO; width]; n];
            for i in 0..n {
                for k in 0..fan_in {
                    let x = h[i][k];
                    if x.is_zero() {
                        continue;
                    }
                    for j in 0..width {
                        hw[i][j] = hw[i][j].add(x.mul(w[k * width + j]));
                    }
                }
            }
            let mut next = vec![vec![Dd::ZERO; width]; n];
            for i in 0..n {
                for m in 0..n {
                    let a = enc.norm_adjacency[[i, m]];
                    if a == 0.0 {
                        continue;
                    }
                    let a = Dd::from(a);
                    for j in 0..width {
                        next[i][j] = next[i][j].add(a.mul(hw[m][j]));
                    }
                }
                for j in 0..width {
                    next[i][j] = next[i][j].add(b[j]).relu();
                }
            }
            h = next;
        }
        let hw = &theta[layout.head_weight_range()];
        let mut pred = theta[layout.head_bias_index()];
        for j in 0..width {
            pred = pred.add(h[n - 1][j].mul(hw[j]));
        }
        let r = pred.sub(Dd::from(t));
        total = total.add(r.mul(r));
    }
    total.mul(Dd::from(1.0 / batch.len() as f64))
}

/// Central-difference gradient of the batch MSE at every parameter.
pub fn central_differences(
    params: &GcnParams,
    batch: &[&EncodedGraph],
    targets: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut theta: Vec<Dd> = params.values().iter().map(|&v| Dd::from(v)).collect();
    let two_h = Dd::from(2.0 * h);
    (0..theta.len())
        .map(|i| {
            let orig = theta[i];
            theta[i] = orig.add(Dd::from(h));
            let up = mse_dd(params, &theta, batch, targets);
            theta[i] = orig.sub(Dd::from(h));
            let down = mse_dd(params, &theta, batch, targets);
            theta[i] = orig;
            let diff = up.sub(down).to_f64();
            diff / two_h.to_f64()
        })
        .collect()
}

/// `max_i |g_i − fd_i| / max(|fd_i|, 1e-8)`.
pub fn max_relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(fd)
        .map(|(g, f)| (g - f).abs() / f.abs().max(1e-8))
        .fold(0.0, f64::max)
}
