use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

struct ParamInner<E: Element> {
    name: String,
    value: Tensor<E>,
    adam_m: Vec<E>,
    adam_v: Vec<E>,
    step_count: u64,
}

/// Named trainable tensor with Adam state. Handles are cheap to clone and
/// share the underlying state; models hand out their parameters as a flat,
/// deterministically ordered list.
pub struct Parameter<E: Element = f32> {
    inner: Rc<RefCell<ParamInner<E>>>,
}

impl<E: Element> Clone for Parameter<E> {
    fn clone(&self) -> Self {
        Parameter {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<E: Element> Parameter<E> {
    pub fn new(name: impl Into<String>, value: Tensor<E>) -> Self {
        let value = if value.requires_grad() {
            value
        } else {
            // Leaf parameters always track gradients.
            Tensor::variable(value.data().to_vec(), value.shape()).expect("valid tensor")
        };
        let n = value.numel();
        Parameter {
            inner: Rc::new(RefCell::new(ParamInner {
                name: name.into(),
                value,
                adam_m: vec![E::zero(); n],
                adam_v: vec![E::zero(); n],
                step_count: 0,
            })),
        }
    }

    pub fn name(&self) -> String {
        self.inner.borrow().name.clone()
    }

    /// Current value handle (shares storage with the live tensor).
    pub fn value(&self) -> Tensor<E> {
        self.inner.borrow().value.clone()
    }

    /// Replace the value, e.g. after an optimizer step or checkpoint load.
    /// A gradient-tracking tensor is adopted as-is (its gradient slot stays
    /// live); anything else is copied into a fresh variable. Shape changes
    /// are errors.
    pub fn set_value(&self, value: Tensor<E>) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if value.shape() != inner.value.shape() {
            return Err(Error::Shape(format!(
                "parameter '{}' has shape {:?}, refusing {:?}",
                inner.name,
                inner.value.shape(),
                value.shape()
            )));
        }
        inner.value = if value.requires_grad() {
            value
        } else {
            Tensor::variable(value.data().to_vec(), value.shape())?
        };
        Ok(())
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().value.shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().value.numel()
    }

    pub fn grad(&self) -> Option<Vec<E>> {
        self.inner.borrow().value.grad()
    }

    /// Gradient as a dense vector, zeros when no path reached this parameter.
    pub fn grad_or_zeros(&self) -> Vec<E> {
        let inner = self.inner.borrow();
        inner
            .value
            .grad()
            .unwrap_or_else(|| vec![E::zero(); inner.value.numel()])
    }

    pub fn zero_grad(&self) {
        self.inner.borrow().value.zero_grad();
    }

    pub fn step_count(&self) -> u64 {
        self.inner.borrow().step_count
    }

    pub fn adam_state(&self) -> (Vec<E>, Vec<E>, u64) {
        let inner = self.inner.borrow();
        (inner.adam_m.clone(), inner.adam_v.clone(), inner.step_count)
    }

    pub fn set_adam_state(&self, m: Vec<E>, v: Vec<E>, step_count: u64) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if m.len() != inner.adam_m.len() || v.len() != inner.adam_v.len() {
            return Err(Error::Shape(format!(
                "adam state size mismatch for '{}'",
                inner.name
            )));
        }
        inner.adam_m = m;
        inner.adam_v = v;
        inner.step_count = step_count;
        Ok(())
    }

    /// Whether the accumulated gradient (or its absence, meaning zeros) is
    /// entirely finite.
    pub fn grad_all_finite(&self) -> bool {
        let value = self.inner.borrow().value.clone();
        let gref = value.grad_ref();
        match gref.as_ref() {
            Some(g) => g.iter().all(|v| v.is_finite()),
            None => true,
        }
    }

    /// One Adam update for this parameter, reading its own gradient (absent
    /// means zeros). Assumes the gradient was already validated as finite.
    pub(crate) fn apply_adam(&self, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        let mut inner = self.inner.borrow_mut();
        inner.step_count += 1;
        let t = inner.step_count as i32;
        let b1 = E::from_f64(beta1);
        let b2 = E::from_f64(beta2);
        let one = E::one();
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let lr = E::from_f64(lr);
        let eps = E::from_f64(eps);
        let value = inner.value.clone();
        let grad = value.grad();
        let old = value.data();
        let n = old.len();
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let g = grad.as_ref().map(|g| g[i]).unwrap_or_else(E::zero);
            let m = b1 * inner.adam_m[i] + (one - b1) * g;
            let v = b2 * inner.adam_v[i] + (one - b2) * g * g;
            inner.adam_m[i] = m;
            inner.adam_v[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            data.push(old[i] - lr * m_hat / (v_hat.sqrt() + eps));
        }
        let shape = inner.value.shape().to_vec();
        inner.value = Tensor::variable(data, &shape).expect("same shape");
    }
}

impl<E: Element> std::fmt::Debug for Parameter<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        write!(
            f,
            "Parameter('{}', shape={:?}, step={})",
            inner.name,
            inner.value.shape(),
            inner.step_count
        )
    }
}

/// Parameter names must be unique within a model.
pub fn check_unique_names<E: Element>(params: &[Parameter<E>]) -> Result<()> {
    let mut seen = HashSet::new();
    for p in params {
        let name = p.name();
        if !seen.insert(name.clone()) {
            return Err(Error::Contract(format!("duplicate parameter name '{name}'")));
        }
    }
    Ok(())
}
