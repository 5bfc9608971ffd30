use super::layer::{register_stack, stack_on_tape, GraphContext};
use super::params::HgtStack;
use crate::error::Result;
use crate::tensor::{finite_difference_check, FdReport, Matrix, Tape, Var};

/// Compares analytic gradients of `loss_fn(stack(h0))` with central finite
/// differences for every weight matrix and prior of every layer.
///
/// `loss_fn` maps the final `N × d` states to a `1 × 1` loss on the tape.
pub fn grad_check<F>(
    ctx: &GraphContext,
    h0: &Matrix,
    stack: &HgtStack,
    loss_fn: F,
    eps: f64,
) -> Result<FdReport>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let layers = register_stack(&mut tape, stack, true);
    let h = tape.constant(h0.clone());
    let out = stack_on_tape(&mut tape, ctx, h, &layers, stack.heads)?;
    let loss = loss_fn(&mut tape, out)?;
    let leaves: Vec<Var> = layers.iter().flat_map(|l| l.all()).collect();
    finite_difference_check(&mut tape, &leaves, loss, eps)
}
