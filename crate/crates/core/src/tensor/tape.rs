use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

type BackwardStep = Box<dyn FnOnce()>;

/// Define-by-run record of differentiable ops. Every op executed through a
/// recording tape pushes a closure holding exactly the tensors its backward
/// rule needs; [`Tape::backward`] drains them in reverse execution order.
///
/// A tape and the parameters it touches belong to one worker at a time;
/// nothing here is `Send`.
pub struct Tape<E: Element = f32> {
    steps: RefCell<Vec<BackwardStep>>,
    recording: bool,
    _marker: std::marker::PhantomData<E>,
}

impl<E: Element> Tape<E> {
    /// Tape that records backward steps.
    pub fn new() -> Self {
        Tape {
            steps: RefCell::new(Vec::new()),
            recording: true,
            _marker: std::marker::PhantomData,
        }
    }

    /// Forward-only execution: ops run but record nothing and outputs never
    /// require gradients.
    pub fn inference() -> Self {
        Tape {
            steps: RefCell::new(Vec::new()),
            recording: false,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.steps.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.borrow().is_empty()
    }

    /// Whether an op over these inputs must be recorded.
    pub(crate) fn tracks(&self, inputs: &[&Tensor<E>]) -> bool {
        self.recording && inputs.iter().any(|t| t.requires_grad())
    }

    pub(crate) fn record(&self, step: impl FnOnce() + 'static) {
        self.steps.borrow_mut().push(Box::new(step));
    }

    /// Seed `d loss / d loss = 1` and replay the tape in reverse, adding each
    /// op's contribution into its inputs' gradients. Consumes the tape;
    /// gradients accumulate across tapes until explicitly zeroed.
    pub fn backward(self, loss: &Tensor<E>) -> Result<()> {
        if !loss.is_scalar() {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        loss.accumulate_grad(&[E::one()]);
        let steps = self.steps.into_inner();
        for step in steps.into_iter().rev() {
            step();
        }
        Ok(())
    }
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Tape::new()
    }
}
