//! Uniform access to a model's weight blocks.
//!
//! Training, gradient checking and serialization all walk a model as an
//! ordered list of named matrices. Gradient types implement the same trait
//! with blocks in the same order and shapes as the model they differentiate.

use alloc::vec::Vec;

use crate::linalg::Matrix;

pub trait Parameters {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)>;

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)>;

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, m)| m.rows() * m.cols()).sum()
    }

    fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, m)| m.is_finite())
    }
}

/// Sum of squares over every entry of every block.
pub fn squared_norm<P: Parameters + ?Sized>(p: &P) -> f64 {
    p.blocks()
        .iter()
        .flat_map(|(_, m)| m.as_slice())
        .map(|x| x * x)
        .sum()
}

pub fn scale<P: Parameters + ?Sized>(p: &mut P, k: f64) {
    for (_, m) in p.blocks_mut() {
        m.as_mut_slice().iter_mut().for_each(|x| *x *= k);
    }
}

/// `model -= eta * grads`, block by block. Shapes must match.
pub fn descend<M, G>(model: &mut M, grads: &G, eta: f64)
where
    M: Parameters + ?Sized,
    G: Parameters + ?Sized,
{
    for ((_, w), (_, g)) in model.blocks_mut().into_iter().zip(grads.blocks()) {
        debug_assert_eq!(w.shape(), g.shape());
        for (w, g) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *w -= eta * g;
        }
    }
}

pub fn zero<P: Parameters + ?Sized>(p: &mut P) {
    for (_, m) in p.blocks_mut() {
        m.fill(0.0);
    }
}
