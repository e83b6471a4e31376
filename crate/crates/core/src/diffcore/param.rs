use std::cell::{Ref, RefCell, RefMut};
use std::rc::Rc;

use rand::Rng;

use super::Tensor;

/// A learnable tensor with its accumulated gradient and Adam moment buffers.
#[derive(Clone, Debug)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub step_count: u64,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Param {
            value,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            step_count: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Clears the Adam state. The value and gradient are left alone.
    pub fn reset_moments(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.step_count = 0;
    }
}

/// Shared handle to a [`Param`].
///
/// Layers hold these handles; two handles are "the same parameter" iff they
/// point at the same allocation (see [`ParamRef::same`]).
#[derive(Clone, Debug)]
pub struct ParamRef(Rc<RefCell<Param>>);

impl ParamRef {
    pub fn new(value: Tensor) -> Self {
        ParamRef(Rc::new(RefCell::new(Param::new(value))))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        ParamRef::new(Tensor::zeros(shape))
    }

    /// Glorot-uniform initialisation for a `rows × cols` weight matrix.
    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        ParamRef::new(Tensor::matrix(rows, cols, data).expect("consistent shape"))
    }

    pub fn borrow(&self) -> Ref<'_, Param> {
        self.0.borrow()
    }

    pub fn borrow_mut(&self) -> RefMut<'_, Param> {
        self.0.borrow_mut()
    }

    pub fn same(&self, other: &ParamRef) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    /// Identity key, stable for the lifetime of the parameter.
    pub fn addr(&self) -> usize {
        Rc::as_ptr(&self.0) as *const () as usize
    }

    pub fn value(&self) -> Tensor {
        self.0.borrow().value.clone()
    }

    pub fn grad(&self) -> Tensor {
        self.0.borrow().grad.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.borrow().value.shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.0.borrow().value.len()
    }

    pub fn set_value(&self, value: Tensor) -> crate::Result<()> {
        let mut p = self.0.borrow_mut();
        if p.value.shape() != value.shape() {
            return Err(crate::Error::dim("set_value", p.value.shape(), value.shape()));
        }
        p.value = value;
        Ok(())
    }

    pub fn zero_grad(&self) {
        self.0.borrow_mut().zero_grad();
    }
}

pub fn zero_grads(params: &[ParamRef]) {
    params.iter().for_each(ParamRef::zero_grad);
}
