//! Dense tensors with reverse-mode differentiation.
//!
//! A [`Tensor`] is an immutable row-major buffer plus a gradient slot. Ops
//! live on [`Tape`]: executing one computes the forward value and, when the
//! tape is recording, pushes a backward closure. [`Tape::backward`] replays
//! the closures in reverse and accumulates gradients into every tensor that
//! requires them. Trainable tensors are wrapped in [`Parameter`], which adds
//! a stable name and Adam state.

mod adam;
mod element;
pub mod gradcheck;
mod init;
mod ops;
mod param;
mod schedule;
mod tape;

pub use adam::{adam_step, AdamConfig};
pub use element::Element;
pub use init::{param_seed, seeded_init, InitScheme};
pub use ops::{ConvPadding, LossKind};
pub use param::{check_unique_names, Parameter};
pub use schedule::{noam_lr, LrSchedule};
pub use tape::Tape;

use std::cell::{Ref, RefCell, RefMut};
use std::rc::Rc;

use crate::error::{Error, Result};

struct Inner<E: Element> {
    shape: Vec<usize>,
    data: Vec<E>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<E>>>,
}

/// Dense N-dimensional array of floats, immutable once created. Cloning is
/// cheap (shared buffer); the gradient slot is the only interior state.
pub struct Tensor<E: Element = f32> {
    inner: Rc<Inner<E>>,
}

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<E: Element> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(shape={:?}, requires_grad={})",
            self.inner.shape, self.inner.requires_grad
        )
    }
}

impl<E: Element> Tensor<E> {
    fn build(data: Vec<E>, shape: Vec<usize>, requires_grad: bool) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape(format!(
                "dimensions must all be >= 1, got {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} wants {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            inner: Rc::new(Inner {
                shape,
                data,
                requires_grad,
                grad: RefCell::new(None),
            }),
        })
    }

    pub fn from_vec(data: Vec<E>, shape: &[usize]) -> Result<Self> {
        Self::build(data, shape.to_vec(), false)
    }

    /// Leaf tensor that participates in differentiation.
    pub fn variable(data: Vec<E>, shape: &[usize]) -> Result<Self> {
        Self::build(data, shape.to_vec(), true)
    }

    pub(crate) fn output(data: Vec<E>, shape: Vec<usize>, requires_grad: bool) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "op produced a non-finite value"
        );
        Tensor {
            inner: Rc::new(Inner {
                shape,
                data,
                requires_grad,
                grad: RefCell::new(None),
            }),
        }
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let numel = shape.iter().product();
        Self::build(vec![E::zero(); numel], shape.to_vec(), false)
    }

    pub fn scalar(value: E) -> Self {
        Tensor::output(vec![value], vec![1], false)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> E {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape());
        self.inner.data[0]
    }

    pub fn dims1(&self) -> Result<usize> {
        match self.shape() {
            [n] => Ok(*n),
            s => Err(Error::Shape(format!("expected rank 1, got {s:?}"))),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Shape(format!("expected rank 2, got {s:?}"))),
        }
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape() {
            [a, b, c] => Ok((*a, *b, *c)),
            s => Err(Error::Shape(format!("expected rank 3, got {s:?}"))),
        }
    }

    /// Snapshot of the gradient, if one has been accumulated.
    pub fn grad(&self) -> Option<Vec<E>> {
        self.inner.grad.borrow().clone()
    }

    pub(crate) fn grad_ref(&self) -> Ref<'_, Option<Vec<E>>> {
        self.inner.grad.borrow()
    }

    /// Mutable access to the gradient buffer, allocating zeros on first use.
    pub(crate) fn grad_mut(&self) -> RefMut<'_, Vec<E>> {
        RefMut::map(self.inner.grad.borrow_mut(), |g| {
            g.get_or_insert_with(|| vec![E::zero(); self.inner.data.len()])
        })
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Element-wise `grad += delta`, allocating on first use.
    pub fn accumulate_grad(&self, delta: &[E]) {
        assert_eq!(delta.len(), self.numel());
        let mut g = self.grad_mut();
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi = *gi + *di;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    /// Same buffer identity (not value equality).
    pub fn same_tensor(&self, other: &Tensor<E>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Convert between element precisions (used by the 64-bit check mode).
    pub fn cast<F: Element>(&self) -> Tensor<F> {
        let data = self.data().iter().map(|&v| F::from_f64(v.to_f64())).collect();
        Tensor::output(data, self.shape().to_vec(), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f32>::from_vec(vec![1.0, 2.0], &[3]).is_err());
        assert!(Tensor::<f32>::from_vec(vec![1.0, 2.0], &[2, 0]).is_err());
        assert!(Tensor::<f32>::from_vec(vec![], &[]).is_err());
        let t = Tensor::<f32>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        assert_eq!(t.numel(), 4);
    }

    #[test]
    fn grad_accumulates_and_clears() {
        let t = Tensor::<f32>::variable(vec![1.0, 2.0], &[2]).unwrap();
        assert!(t.grad().is_none());
        t.accumulate_grad(&[1.0, 1.0]);
        t.accumulate_grad(&[0.5, -1.0]);
        assert_eq!(t.grad().unwrap(), vec![1.5, 0.0]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }
}
