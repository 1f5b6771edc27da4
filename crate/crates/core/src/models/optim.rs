use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain full-batch gradient descent.
    Gd,
    Adam,
}

/// Per-parameter optimizer state.
pub(crate) enum Optimizer {
    Gd {
        lr: f64,
    },
    Adam {
        lr: f64,
        step: i32,
        m: Vec<Array2<f64>>,
        v: Vec<Array2<f64>>,
    },
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, shapes: &[&Array2<f64>]) -> Self {
        match kind {
            OptimizerKind::Gd => Optimizer::Gd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                step: 0,
                m: shapes.iter().map(|p| Array2::zeros(p.raw_dim())).collect(),
                v: shapes.iter().map(|p| Array2::zeros(p.raw_dim())).collect(),
            },
        }
    }

    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[Array2<f64>]) {
        match self {
            Optimizer::Gd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.scaled_add(-*lr, g);
                }
            }
            Optimizer::Adam { lr, step, m, v } => {
                *step += 1;
                let bc1 = 1.0 - BETA1.powi(*step);
                let bc2 = 1.0 - BETA2.powi(*step);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(m).zip(v) {
                    ndarray::Zip::from(&mut **p)
                        .and(g)
                        .and(m)
                        .and(v)
                        .for_each(|p, &g, m, v| {
                            *m = BETA1 * *m + (1.0 - BETA1) * g;
                            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                            let m_hat = *m / bc1;
                            let v_hat = *v / bc2;
                            *p -= *lr * m_hat / (v_hat.sqrt() + EPS);
                        });
                }
            }
        }
    }
}
