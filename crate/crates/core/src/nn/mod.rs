//! Small dense-network toolkit with hand-written backward passes.

mod gradcheck;
mod layers;
mod matrix;
mod optim;

pub use gradcheck::{grad_check, numeric_gradient, relative_error, FD_STEP};
pub use layers::{dropout, dropout_backward, sigmoid, Activation, Linear, LinearParams};
pub use matrix::{dot, Matrix};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};

/// Mutable view of one parameter tensor and its accumulated gradient.
pub struct ParamMut<'a> {
    pub name: String,
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

/// Anything with trainable parameters. Visiting order must be stable.
pub trait Module {
    fn visit_params(&mut self, f: &mut dyn FnMut(ParamMut<'_>));

    fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.grad.iter_mut().for_each(|g| *g = 0.0));
    }

    fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }
}

/// Visits `child`'s parameters with `prefix.` prepended to their names.
pub fn visit_child(prefix: &str, child: &mut dyn Module, f: &mut dyn FnMut(ParamMut<'_>)) {
    child.visit_params(&mut |p: ParamMut<'_>| {
        f(ParamMut {
            name: format!("{prefix}.{}", p.name),
            value: p.value,
            grad: p.grad,
        })
    });
}
