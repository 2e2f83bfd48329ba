//! Discretized PDE residual operators R_h and residual diagnostics.

mod bound;
mod burgers;
mod darcy;
mod floor;
mod kolmogorov;
mod stream;

pub use bound::burgers_error_bound;
pub use burgers::{residual_burgers, BurgersStencil};
pub use darcy::{darcy_apply, residual_darcy, DarcyStencil};
pub use floor::{estimate_residual_floor, suggest_floor_step, ResidualFloorEstimate};
pub use kolmogorov::{kolmogorov_forcing, residual_kolmogorov, KolmogorovStencil};
pub use stream::{stream_function, velocity_from_vorticity};

use std::rc::Rc;
use std::sync::Arc;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::field::Field;

/// Residual values on the state grid; entries outside `valid` are zero and
/// ignored by [`residual_norm`].
#[derive(Clone, Debug)]
pub struct ResidualField {
    pub values: Field,
    pub valid: Vec<bool>,
}

impl ResidualField {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .values()
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold(0.0, |m, (v, _)| m.max(v.abs()))
    }
}

/// Root-mean-square over valid nodes.
pub fn residual_norm(r: &ResidualField) -> f64 {
    let n = r.valid_count();
    if n == 0 {
        return 0.0;
    }
    let ss: f64 = r
        .values
        .values()
        .iter()
        .zip(&r.valid)
        .filter(|(_, &ok)| ok)
        .map(|(v, _)| v * v)
        .sum();
    (ss / n as f64).sqrt()
}

/// A residual map `x ↦ R_h(x)` together with its vector–Jacobian product.
///
/// Implementations never fail on shape-correct input so they can sit inside
/// training losses; validation happens in the public `residual_*` functions.
pub trait ResidualOperator: Send + Sync {
    /// State dims the operator acts on.
    fn dims(&self) -> &[usize];

    /// Residual on the full state grid (zeros outside the valid set).
    fn apply(&self, x: &[f64]) -> Vec<f64>;

    /// Nodes where the stencil is defined.
    fn valid(&self) -> &[bool];

    /// `J(x)ᵀ g` for the Jacobian of [`ResidualOperator::apply`] at `x`.
    fn vjp(&self, x: &[f64], g: &[f64]) -> Vec<f64>;

    fn residual(&self, x: &Field) -> Result<ResidualField> {
        if x.dims() != self.dims() {
            return Err(Error::ShapeMismatch {
                expected: self.dims().to_vec(),
                got: x.dims().to_vec(),
            });
        }
        let values = self.apply(x.values());
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite residual".into()));
        }
        Ok(ResidualField {
            values: Field::new(x.dims().to_vec(), values)?,
            valid: self.valid().to_vec(),
        })
    }

    fn norm(&self, x: &Field) -> Result<f64> {
        Ok(residual_norm(&self.residual(x)?))
    }
}

impl Graph {
    /// Residual node: full-grid residual of `x` under `op`.
    pub fn residual(&mut self, x: Var, op: Arc<dyn ResidualOperator>) -> Var {
        let tx = self.value(x);
        let value = Tensor::new(tx.shape.clone(), op.apply(&tx.data));
        self.op(&[x], value, move |c| vec![Some(op.vjp(&c.inputs[0].data, c.grad))])
    }

    /// `residual_norm(R(x))` as a graph scalar.
    pub fn residual_rms(&mut self, x: Var, op: Arc<dyn ResidualOperator>) -> Var {
        let valid = op.valid().to_vec();
        let n = valid.iter().filter(|&&v| v).count().max(1) as f64;
        let weights = Rc::new(valid.iter().map(|&v| if v { 1.0 / n } else { 0.0 }).collect());
        let r = self.residual(x, op);
        let ms = self.weighted_sum_sq(r, weights);
        self.sqrt(ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rf(values: Vec<f64>, valid: Vec<bool>) -> ResidualField {
        let n = values.len();
        ResidualField {
            values: Field::new(vec![n], values).unwrap(),
            valid,
        }
    }

    #[test]
    fn rms_of_zero() {
        assert_eq!(residual_norm(&rf(vec![0.0; 4], vec![true; 4])), 0.0);
    }

    #[test]
    fn rms_of_constant() {
        assert_eq!(residual_norm(&rf(vec![2.0; 4], vec![true; 4])), 2.0);
    }

    #[test]
    fn rms_hand_value_ignores_invalid() {
        let r = rf(vec![3.0, 4.0, 100.0], vec![true, true, false]);
        assert!((residual_norm(&r) - 12.5f64.sqrt()).abs() < 1e-15);
    }
}
