use super::OptimizerKind;
use crate::error::{Error, Result};

pub const ADAGRAD_EPSILON: f64 = 1e-8;
pub const ADADELTA_RHO: f64 = 0.95;
pub const ADADELTA_EPSILON: f64 = 1e-6;
pub const ADAMAX_BETA1: f64 = 0.9;
pub const ADAMAX_BETA2: f64 = 0.999;
pub const ADAMAX_EPSILON: f64 = 1e-8;

/// Accumulators for one optimizer over a fixed list of parameter tensors.
///
/// Slot usage by kind:
/// - SGD: none.
/// - Adagrad: `first` = running sum of squared gradients.
/// - Adadelta: `first` = E[g²], `second` = E[Δθ²].
/// - Adamax: `first` = first moment, `second` = exponentially weighted ∞-norm.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, shapes: &[usize]) -> Self {
        let slots = |used: bool| -> Vec<Vec<f64>> {
            shapes
                .iter()
                .map(|&n| if used { vec![0.0; n] } else { Vec::new() })
                .collect()
        };
        let (a, b) = match kind {
            OptimizerKind::Sgd => (false, false),
            OptimizerKind::Adagrad => (true, false),
            OptimizerKind::Adadelta | OptimizerKind::Adamax => (true, true),
        };
        Self {
            kind,
            first: slots(a),
            second: slots(b),
            step: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every tensor in `params` using `grads`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::DimensionMismatch {
                op: "optimizer_step (tensor count)",
                left: (self.first.len(), 1),
                right: (params.len(), grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let expected = match self.kind {
                OptimizerKind::Sgd => p.len(),
                _ => self.first[i].len(),
            };
            if p.len() != g.len() || p.len() != expected {
                return Err(Error::DimensionMismatch {
                    op: "optimizer_step",
                    left: (i, expected),
                    right: (p.len(), g.len()),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            match self.kind {
                OptimizerKind::Sgd => {
                    for (pj, gj) in p.iter_mut().zip(g.iter()) {
                        *pj -= lr * gj;
                    }
                }
                OptimizerKind::Adagrad => {
                    let acc = &mut self.first[i];
                    for ((pj, gj), aj) in p.iter_mut().zip(g.iter()).zip(acc.iter_mut()) {
                        *aj += gj * gj;
                        *pj -= lr * gj / (aj.sqrt() + ADAGRAD_EPSILON);
                    }
                }
                OptimizerKind::Adadelta => {
                    let (eg, edx) = (&mut self.first[i], &mut self.second[i]);
                    for (j, (pj, gj)) in p.iter_mut().zip(g.iter()).enumerate() {
                        eg[j] = ADADELTA_RHO * eg[j] + (1.0 - ADADELTA_RHO) * gj * gj;
                        let dx = -((edx[j] + ADADELTA_EPSILON).sqrt()
                            / (eg[j] + ADADELTA_EPSILON).sqrt())
                            * gj;
                        edx[j] = ADADELTA_RHO * edx[j] + (1.0 - ADADELTA_RHO) * dx * dx;
                        *pj += lr * dx;
                    }
                }
                OptimizerKind::Adamax => {
                    let step_size = lr / (1.0 - ADAMAX_BETA1.powi(t));
                    let (m, u) = (&mut self.first[i], &mut self.second[i]);
                    for (j, (pj, gj)) in p.iter_mut().zip(g.iter()).enumerate() {
                        m[j] = ADAMAX_BETA1 * m[j] + (1.0 - ADAMAX_BETA1) * gj;
                        u[j] = (ADAMAX_BETA2 * u[j]).max(gj.abs());
                        *pj -= step_size * m[j] / (u[j] + ADAMAX_EPSILON);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_step(kind: OptimizerKind, p: f64, g: f64, lr: f64) -> f64 {
        let mut state = OptimizerState::new(kind, &[1]);
        let mut param = [p];
        state.step(&mut [&mut param], &[&[g]], lr).unwrap();
        param[0]
    }

    #[test]
    fn sgd_is_exact() {
        assert_eq!(one_step(OptimizerKind::Sgd, 1.0, 0.5, 0.1), 1.0 - 0.1 * 0.5);
    }

    #[test]
    fn adagrad_first_step() {
        let (p, g, lr): (f64, f64, f64) = (0.3, -2.0, 0.01);
        let expect = p - lr * g / ((g * g).sqrt() + ADAGRAD_EPSILON);
        assert_eq!(one_step(OptimizerKind::Adagrad, p, g, lr), expect);
    }

    #[test]
    fn adamax_first_step() {
        // t = 1: m = (1−β1)g, u = |g|, step = lr/(1−β1) ⇒ Δ = lr·g/(|g|+ε)
        let (p, g, lr): (f64, f64, f64) = (0.3, 0.25, 0.002);
        let expect = p - lr * g / (g.abs() + ADAMAX_EPSILON);
        let got = one_step(OptimizerKind::Adamax, p, g, lr);
        assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
    }

    #[test]
    fn adadelta_first_step() {
        // E[g²] = (1−ρ)g²; Δ = −√ε/√(E[g²]+ε)·g
        let (p, g, lr) = (0.0, 1.5, 1.0);
        let eg = (1.0 - ADADELTA_RHO) * g * g;
        let expect = p - (ADADELTA_EPSILON.sqrt() / (eg + ADADELTA_EPSILON).sqrt()) * g;
        assert!((one_step(OptimizerKind::Adadelta, p, g, lr) - expect).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut state = OptimizerState::new(OptimizerKind::Adamax, &[2]);
        let mut p = [0.0; 3];
        assert!(state.step(&mut [&mut p], &[&[0.0; 3]], 0.1).is_err());
        let mut p = [0.0; 2];
        assert!(state.step(&mut [&mut p], &[&[0.0; 1]], 0.1).is_err());
        assert_eq!(state.steps(), 0);
    }
}
