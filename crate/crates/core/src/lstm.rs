//! Single-layer LSTM and bidirectional LSTM regressors.
//!
//! Conventional cell without peepholes; gate pre-activations are packed in
//! one `4H` row in the order input, forget, candidate, output:
//!
//! ```text
//! z   = x_t W_x + h_{t-1} W_h + b
//! i   = σ(z_i)   f = σ(z_f)   g = tanh(z_g)   o = σ(z_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```
//!
//! The output unit reads the forward cell's state after the last step; a
//! bidirectional model also reads the backward cell's state after it has
//! consumed the sequence in reverse (i.e. at `t = 1`).

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{check_len, matvec_into, outer_acc, sigmoid, vecmat_acc, Matrix, Vector};
use crate::model::OutputActivation;
use crate::params::Parameters;
use crate::train::{fit, TrainConfig, Trained};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Bidirectional,
}

/// Weights of one recurrent cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// `d_in × 4H`.
    pub w_x: Matrix,
    /// `H × 4H`.
    pub w_h: Matrix,
    /// `1 × 4H`.
    pub bias: Matrix,
}

/// All trainable weights. Also the gradient type.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub forward: LstmCell,
    pub backward: Option<LstmCell>,
    /// `(H · directions) × 1`.
    pub w_out: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub params: LstmParams,
    pub output: OutputActivation,
}

impl LstmCell {
    pub fn zeros(d_in: usize, hidden: usize) -> Self {
        LstmCell {
            w_x: Matrix::zeros(d_in, 4 * hidden),
            w_h: Matrix::zeros(hidden, 4 * hidden),
            bias: Matrix::zeros(1, 4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.rows()
    }

    fn validate(&self) -> Result<()> {
        let h = self.hidden();
        check_len("lstm w_x cols", 4 * h, self.w_x.cols())?;
        check_len("lstm w_h cols", 4 * h, self.w_h.cols())?;
        check_len("lstm bias rows", 1, self.bias.rows())?;
        check_len("lstm bias cols", 4 * h, self.bias.cols())
    }

    fn random(d_in: usize, hidden: usize, cfg: &TrainConfig, rng: &mut crate::Rng) -> Self {
        let w_x = Matrix::random_uniform(d_in, 4 * hidden, cfg.init_range_for(d_in), rng);
        let w_h = Matrix::random_uniform(hidden, 4 * hidden, cfg.init_range_for(hidden), rng);
        let mut bias = Matrix::zeros(1, 4 * hidden);
        // forget gate starts open
        for k in hidden..2 * hidden {
            bias.set(0, k, 1.0);
        }
        LstmCell { w_x, w_h, bias }
    }
}

impl LstmParams {
    pub fn zeros(d_in: usize, hidden: usize, direction: Direction) -> Self {
        let dirs = match direction {
            Direction::Forward => 1,
            Direction::Bidirectional => 2,
        };
        LstmParams {
            forward: LstmCell::zeros(d_in, hidden),
            backward: (dirs == 2).then(|| LstmCell::zeros(d_in, hidden)),
            w_out: Matrix::zeros(dirs * hidden, 1),
        }
    }
}

/// Per-step activations of one cell, flattened `T × width`.
#[derive(Default)]
struct CellTrace {
    gates: Vec<f64>,
    cs: Vec<f64>,
    hs: Vec<f64>,
}

impl CellTrace {
    fn last_h(&self, h: usize) -> &[f64] {
        &self.hs[self.hs.len() - h..]
    }
}

fn cell_forward(cell: &LstmCell, inputs: &[&[f64]], tr: &mut CellTrace) {
    let h = cell.hidden();
    let t_len = inputs.len();
    tr.gates.clear();
    tr.gates.resize(t_len * 4 * h, 0.0);
    tr.cs.clear();
    tr.cs.resize(t_len * h, 0.0);
    tr.hs.clear();
    tr.hs.resize(t_len * h, 0.0);
    for (t, x) in inputs.iter().enumerate() {
        let z = &mut tr.gates[t * 4 * h..(t + 1) * 4 * h];
        z.copy_from_slice(cell.bias.as_slice());
        vecmat_acc(x, &cell.w_x, z);
        if t > 0 {
            vecmat_acc(&tr.hs[(t - 1) * h..t * h], &cell.w_h, z);
        }
        for k in 0..h {
            let i = sigmoid(z[k], 1.0);
            let f = sigmoid(z[h + k], 1.0);
            let g = libm::tanh(z[2 * h + k]);
            let o = sigmoid(z[3 * h + k], 1.0);
            z[k] = i;
            z[h + k] = f;
            z[2 * h + k] = g;
            z[3 * h + k] = o;
            let c_prev = if t > 0 { tr.cs[(t - 1) * h + k] } else { 0.0 };
            let c = f * c_prev + i * g;
            tr.cs[t * h + k] = c;
            tr.hs[t * h + k] = o * libm::tanh(c);
        }
    }
}

#[derive(Default)]
struct CellScratch {
    dh: Vec<f64>,
    dc: Vec<f64>,
    dz: Vec<f64>,
}

/// Accumulates into `grads` the gradient reaching the cell through `dh_last`
/// (the loss gradient with respect to the final hidden state).
fn cell_backward(
    cell: &LstmCell,
    inputs: &[&[f64]],
    tr: &CellTrace,
    dh_last: &[f64],
    grads: &mut LstmCell,
    s: &mut CellScratch,
) {
    let h = cell.hidden();
    s.dh.clear();
    s.dh.extend_from_slice(dh_last);
    s.dc.clear();
    s.dc.resize(h, 0.0);
    s.dz.clear();
    s.dz.resize(4 * h, 0.0);
    for t in (0..inputs.len()).rev() {
        let gates = &tr.gates[t * 4 * h..(t + 1) * 4 * h];
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let tc = libm::tanh(tr.cs[t * h + k]);
            let c_prev = if t > 0 { tr.cs[(t - 1) * h + k] } else { 0.0 };
            let dh = s.dh[k];
            let dc = s.dc[k] + dh * o * (1.0 - tc * tc);
            s.dz[k] = dc * g * i * (1.0 - i);
            s.dz[h + k] = dc * c_prev * f * (1.0 - f);
            s.dz[2 * h + k] = dc * i * (1.0 - g * g);
            s.dz[3 * h + k] = dh * tc * o * (1.0 - o);
            s.dc[k] = dc * f;
        }
        outer_acc(&mut grads.w_x, inputs[t], &s.dz);
        for (b, d) in grads.bias.as_mut_slice().iter_mut().zip(&s.dz) {
            *b += d;
        }
        if t > 0 {
            outer_acc(&mut grads.w_h, &tr.hs[(t - 1) * h..t * h], &s.dz);
            matvec_into(&cell.w_h, &s.dz, &mut s.dh);
        }
    }
}

impl LstmModel {
    pub fn new(params: LstmParams, output: OutputActivation) -> Result<Self> {
        params.forward.validate()?;
        let h = params.forward.hidden();
        let dirs = if let Some(b) = &params.backward {
            b.validate()?;
            check_len("backward cell hidden size", h, b.hidden())?;
            check_len("backward cell input size", params.forward.w_x.rows(), b.w_x.rows())?;
            2
        } else {
            1
        };
        check_len("w_out rows", dirs * h, params.w_out.rows())?;
        check_len("w_out cols", 1, params.w_out.cols())?;
        Ok(LstmModel { params, output })
    }

    pub fn zeros(d_in: usize, hidden: usize, direction: Direction, output: OutputActivation) -> Result<Self> {
        if d_in == 0 || hidden == 0 {
            return Err(invalid("network dimensions must be positive"));
        }
        Self::new(LstmParams::zeros(d_in, hidden, direction), output)
    }

    /// Random weights, forget-gate biases at 1, all other biases at 0.
    pub fn init(d_in: usize, direction: Direction, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if d_in == 0 {
            return Err(invalid("input dimension must be positive"));
        }
        let h = cfg.hidden;
        let mut rng = cfg.init_rng();
        let forward = LstmCell::random(d_in, h, cfg, &mut rng);
        let backward = match direction {
            Direction::Forward => None,
            Direction::Bidirectional => Some(LstmCell::random(d_in, h, cfg, &mut rng)),
        };
        let width = if backward.is_some() { 2 * h } else { h };
        let w_out = Matrix::random_uniform(width, 1, cfg.init_range_for(width), &mut rng);
        Self::new(
            LstmParams {
                forward,
                backward,
                w_out,
            },
            cfg.output,
        )
    }

    pub fn d_in(&self) -> usize {
        self.params.forward.w_x.rows()
    }

    pub fn hidden(&self) -> usize {
        self.params.forward.hidden()
    }

    pub fn is_bidirectional(&self) -> bool {
        self.params.backward.is_some()
    }

    pub fn direction(&self) -> Direction {
        if self.is_bidirectional() {
            Direction::Bidirectional
        } else {
            Direction::Forward
        }
    }

    fn check_seq<V: AsRef<[f64]>>(&self, seq: &[V]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::Empty("input sequence"));
        }
        for g in seq {
            check_len("lstm input", self.d_in(), g.as_ref().len())?;
        }
        Ok(())
    }

    /// Hidden summaries fed to the output unit: the forward cell's last
    /// state, then (bidirectional only) the backward cell's last state.
    pub fn summaries<V: AsRef<[f64]>>(&self, seq: &[V]) -> Result<(Vector, Option<Vector>)> {
        self.check_seq(seq)?;
        let mut s = Scratch::default();
        self.run_forward(seq, &mut s);
        let h = self.hidden();
        let fwd = Vector::from_slice(s.fwd.last_h(h))?;
        let bwd = match self.params.backward {
            Some(_) => Some(Vector::from_slice(s.bwd.last_h(h))?),
            None => None,
        };
        Ok((fwd, bwd))
    }

    pub fn predict<V: AsRef<[f64]>>(&self, seq: &[V]) -> Result<f64> {
        self.check_seq(seq)?;
        Ok(self.run_forward(seq, &mut Scratch::default()))
    }

    fn run_forward<V: AsRef<[f64]>>(&self, seq: &[V], s: &mut Scratch) -> f64 {
        let h = self.hidden();
        let inputs: Vec<&[f64]> = seq.iter().map(|g| g.as_ref()).collect();
        cell_forward(&self.params.forward, &inputs, &mut s.fwd);
        let w = self.params.w_out.as_slice();
        let mut z: f64 = s.fwd.last_h(h).iter().zip(&w[..h]).map(|(a, b)| a * b).sum();
        if let Some(cell) = &self.params.backward {
            let rev: Vec<&[f64]> = inputs.iter().rev().copied().collect();
            cell_forward(cell, &rev, &mut s.bwd);
            z += s.bwd.last_h(h).iter().zip(&w[h..]).map(|(a, b)| a * b).sum::<f64>();
        }
        self.output.apply(z, 1.0)
    }

    /// Exact gradient of `(o - target)²`, shaped like [`LstmParams`].
    pub fn gradient<V: AsRef<[f64]>>(&self, seq: &[V], target: f64) -> Result<LstmParams> {
        self.check_seq(seq)?;
        if !target.is_finite() {
            return Err(Error::NonFinite("target".into()));
        }
        let mut grads = LstmParams::zeros(self.d_in(), self.hidden(), self.direction());
        self.loss_and_grad(seq, target, &mut Scratch::default(), &mut grads);
        Ok(grads)
    }

    fn loss_and_grad<V: AsRef<[f64]>>(
        &self,
        seq: &[V],
        target: f64,
        s: &mut Scratch,
        grads: &mut LstmParams,
    ) -> f64 {
        crate::params::zero(grads);
        let h = self.hidden();
        let o = self.run_forward(seq, s);
        let dz = 2.0 * (o - target) * self.output.derivative_from_output(o, 1.0);
        let w = self.params.w_out.as_slice();
        let g_out = grads.w_out.as_mut_slice();
        for (g, x) in g_out[..h].iter_mut().zip(s.fwd.last_h(h)) {
            *g = dz * x;
        }
        let inputs: Vec<&[f64]> = seq.iter().map(|g| g.as_ref()).collect();
        let dh: Vec<f64> = w[..h].iter().map(|x| dz * x).collect();
        cell_backward(&self.params.forward, &inputs, &s.fwd, &dh, &mut grads.forward, &mut s.cell);
        if let (Some(cell), Some(gb)) = (&self.params.backward, grads.backward.as_mut()) {
            for (g, x) in g_out[h..].iter_mut().zip(s.bwd.last_h(h)) {
                *g = dz * x;
            }
            let rev: Vec<&[f64]> = inputs.iter().rev().copied().collect();
            let dh: Vec<f64> = w[h..].iter().map(|x| dz * x).collect();
            cell_backward(cell, &rev, &s.bwd, &dh, gb, &mut s.cell);
        }
        crate::ffnn::loss(o, target)
    }
}

#[derive(Default)]
struct Scratch {
    fwd: CellTrace,
    bwd: CellTrace,
    cell: CellScratch,
}

fn push_cell<'a>(out: &mut Vec<(&'static str, &'a Matrix)>, prefix: [&'static str; 3], c: &'a LstmCell) {
    out.push((prefix[0], &c.w_x));
    out.push((prefix[1], &c.w_h));
    out.push((prefix[2], &c.bias));
}

const FWD: [&str; 3] = ["fwd.w_x", "fwd.w_h", "fwd.bias"];
const BWD: [&str; 3] = ["bwd.w_x", "bwd.w_h", "bwd.bias"];

impl Parameters for LstmParams {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out = Vec::with_capacity(7);
        push_cell(&mut out, FWD, &self.forward);
        if let Some(b) = &self.backward {
            push_cell(&mut out, BWD, b);
        }
        out.push(("w_out", &self.w_out));
        out
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut out: Vec<(&'static str, &mut Matrix)> = Vec::with_capacity(7);
        let f = &mut self.forward;
        out.push((FWD[0], &mut f.w_x));
        out.push((FWD[1], &mut f.w_h));
        out.push((FWD[2], &mut f.bias));
        if let Some(b) = &mut self.backward {
            out.push((BWD[0], &mut b.w_x));
            out.push((BWD[1], &mut b.w_h));
            out.push((BWD[2], &mut b.bias));
        }
        out.push(("w_out", &mut self.w_out));
        out
    }
}

impl Parameters for LstmModel {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        self.params.blocks()
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        self.params.blocks_mut()
    }
}

pub fn train(
    data: &[(Vec<Vector>, f64)],
    direction: Direction,
    cfg: &TrainConfig,
) -> Result<LstmModel> {
    train_with_history(data, direction, cfg).map(|t| t.model)
}

pub fn train_with_history(
    data: &[(Vec<Vector>, f64)],
    direction: Direction,
    cfg: &TrainConfig,
) -> Result<Trained<LstmModel>> {
    cfg.validate()?;
    let d = crate::rnn::check_sequences(data)?;
    let model = LstmModel::init(d, direction, cfg)?;
    let grads = LstmParams::zeros(d, cfg.hidden, direction);
    let mut scratch = Scratch::default();
    fit(model, grads, data, cfg, |m, (seq, t), grads| {
        m.loss_and_grad(seq, *t, &mut scratch, grads)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;

    fn random_seq(t: usize, d: usize, rng: &mut Rng) -> Vec<Vector> {
        (0..t)
            .map(|_| Vector::new((0..d).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect()).unwrap())
            .collect()
    }

    #[test]
    fn saturated_gates_ignore_inputs() {
        let cfg = TrainConfig {
            hidden: 3,
            seed: 1,
            init_range: Some(0.5),
            ..TrainConfig::default()
        };
        let mut m = LstmModel::init(4, Direction::Forward, &cfg).unwrap();
        let h = 3;
        for k in 0..h {
            m.params.forward.bias.set(0, k, -1e3);
            m.params.forward.bias.set(0, h + k, 1e3);
        }
        let mut rng = Rng::new(2);
        let a = m.predict(&random_seq(5, 4, &mut rng)).unwrap();
        let b = m.predict(&random_seq(7, 4, &mut rng)).unwrap();
        assert_eq!(a, 0.0);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn palindrome_with_mirrored_cells() {
        let cfg = TrainConfig {
            hidden: 4,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut m = LstmModel::init(3, Direction::Bidirectional, &cfg).unwrap();
        m.params.backward = Some(m.params.forward.clone());
        let mut rng = Rng::new(4);
        let half = random_seq(3, 3, &mut rng);
        let seq: Vec<Vector> = half
            .iter()
            .chain(half.iter().rev().skip(1))
            .cloned()
            .collect();
        let (fwd, bwd) = m.summaries(&seq).unwrap();
        assert_eq!(Some(fwd), bwd);
    }

    #[test]
    fn zero_error_zero_gradient() {
        let cfg = TrainConfig {
            hidden: 3,
            ..TrainConfig::default()
        };
        let m = LstmModel::init(2, Direction::Bidirectional, &cfg).unwrap();
        let mut rng = Rng::new(5);
        let seq = random_seq(4, 2, &mut rng);
        let o = m.predict(&seq).unwrap();
        let g = m.gradient(&seq, o).unwrap();
        assert!(g.blocks().iter().all(|(_, b)| b.as_slice().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn shape_validation() {
        let mut p = LstmParams::zeros(3, 2, Direction::Forward);
        p.w_out = Matrix::zeros(4, 1);
        assert!(LstmModel::new(p, OutputActivation::Linear).is_err());
        let m = LstmModel::zeros(3, 2, Direction::Forward, OutputActivation::Linear).unwrap();
        assert!(m.predict(&[Vector::zeros(2)]).is_err());
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let mut rng = Rng::new(6);
        let data: Vec<_> = (0..12)
            .map(|i| (random_seq(4 + i % 3, 3, &mut rng), (i % 5) as f64 * 0.5))
            .collect();
        for dir in [Direction::Forward, Direction::Bidirectional] {
            let cfg = TrainConfig {
                hidden: 4,
                epochs: 60,
                seed: 2,
                ..TrainConfig::default()
            };
            let a = train_with_history(&data, dir, &cfg).unwrap();
            let b = train(&data, dir, &cfg).unwrap();
            assert_eq!(a.model, b);
            assert!(a.epoch_losses.last().unwrap() < &a.epoch_losses[0]);
        }
    }
}
