//! Dense layers, the GRU recurrence, and the FCGRU cell.
//!
//! The FCGRU cell runs the raw observation of each time stamp through two
//! tanh dense layers before handing it to a standard GRU. The same two
//! layers are applied at every time stamp.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{ParamRef, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Identity => x,
        }
    }
}

/// `activation(W x + b)`
#[derive(Clone, Debug)]
pub struct DenseLayer {
    pub weight: ParamRef,
    pub bias: ParamRef,
    pub activation: Activation,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        DenseLayer {
            weight: ParamRef::glorot(output, input, rng),
            bias: ParamRef::zeros(&[output]),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        let wx = tape.matvec(w, x)?;
        let pre = tape.add_bias(wx, b)?;
        Ok(self.activation.apply(tape, pre))
    }

    pub fn params(&self) -> Vec<ParamRef> {
        vec![self.weight.clone(), self.bias.clone()]
    }

    pub(crate) fn named_params(&self, prefix: &str) -> Vec<(String, ParamRef)> {
        vec![
            (format!("{prefix}.weight"), self.weight.clone()),
            (format!("{prefix}.bias"), self.bias.clone()),
        ]
    }
}

/// Gate weights of a GRU with `h = (1 - z) ⊙ h_prev + z ⊙ h̃`.
#[derive(Clone, Debug)]
pub struct GruWeights {
    pub w_z: ParamRef,
    pub w_r: ParamRef,
    pub w_h: ParamRef,
    pub u_z: ParamRef,
    pub u_r: ParamRef,
    pub u_h: ParamRef,
    pub b_z: ParamRef,
    pub b_r: ParamRef,
    pub b_h: ParamRef,
}

impl GruWeights {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        GruWeights {
            w_z: ParamRef::glorot(hidden, input, rng),
            w_r: ParamRef::glorot(hidden, input, rng),
            w_h: ParamRef::glorot(hidden, input, rng),
            u_z: ParamRef::glorot(hidden, hidden, rng),
            u_r: ParamRef::glorot(hidden, hidden, rng),
            u_h: ParamRef::glorot(hidden, hidden, rng),
            b_z: ParamRef::zeros(&[hidden]),
            b_r: ParamRef::zeros(&[hidden]),
            b_h: ParamRef::zeros(&[hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.shape()[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.shape()[0]
    }

    fn gate(&self, tape: &mut Tape, w: &ParamRef, u: &ParamRef, b: &ParamRef, x: Var, h: Var) -> Result<Var> {
        let (w, u, b) = (tape.param(w), tape.param(u), tape.param(b));
        let wx = tape.matvec(w, x)?;
        let uh = tape.matvec(u, h)?;
        let s = tape.add(wx, uh)?;
        tape.add_bias(s, b)
    }

    /// One recurrence step. `x` and `h_prev` are rank-1, or rank-2 with one
    /// row per sample.
    pub fn step(&self, tape: &mut Tape, x: Var, h_prev: Var) -> Result<Var> {
        let zp = self.gate(tape, &self.w_z, &self.u_z, &self.b_z, x, h_prev)?;
        let z = tape.sigmoid(zp);
        let rp = self.gate(tape, &self.w_r, &self.u_r, &self.b_r, x, h_prev)?;
        let r = tape.sigmoid(rp);
        let rh = tape.hadamard(r, h_prev)?;
        let cp = self.gate(tape, &self.w_h, &self.u_h, &self.b_h, x, rh)?;
        let candidate = tape.tanh(cp);
        // h_prev + z ⊙ (h̃ - h_prev)
        let diff = tape.sub(candidate, h_prev)?;
        let moved = tape.hadamard(z, diff)?;
        tape.add(h_prev, moved)
    }

    pub fn params(&self) -> Vec<ParamRef> {
        self.named_params("").into_iter().map(|(_, p)| p).collect()
    }

    pub(crate) fn named_params(&self, prefix: &str) -> Vec<(String, ParamRef)> {
        [
            ("w_z", &self.w_z),
            ("w_r", &self.w_r),
            ("w_h", &self.w_h),
            ("u_z", &self.u_z),
            ("u_r", &self.u_r),
            ("u_h", &self.u_h),
            ("b_z", &self.b_z),
            ("b_r", &self.b_r),
            ("b_h", &self.b_h),
        ]
        .into_iter()
        .map(|(n, p)| (format!("{prefix}.{n}"), p.clone()))
        .collect()
    }
}

/// Two tanh dense layers feeding a GRU. With `enrich` set to `None` the GRU
/// consumes the raw input.
#[derive(Clone, Debug)]
pub struct FcGruCell {
    pub enrich: Option<(DenseLayer, DenseLayer)>,
    pub gru: GruWeights,
}

impl FcGruCell {
    /// `enrich_widths` holds the widths of the two enrichment layers, or
    /// `None` to bypass them.
    pub fn new<R: Rng + ?Sized>(
        raw_input: usize,
        enrich_widths: Option<(usize, usize)>,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        match enrich_widths {
            Some((w1, w2)) => {
                let fc1 = DenseLayer::new(raw_input, w1, Activation::Tanh, rng);
                let fc2 = DenseLayer::new(w1, w2, Activation::Tanh, rng);
                let gru = GruWeights::new(w2, hidden, rng);
                FcGruCell {
                    enrich: Some((fc1, fc2)),
                    gru,
                }
            }
            None => FcGruCell {
                enrich: None,
                gru: GruWeights::new(raw_input, hidden, rng),
            },
        }
    }

    pub fn enrich_enabled(&self) -> bool {
        self.enrich.is_some()
    }

    pub fn raw_input_dim(&self) -> usize {
        match &self.enrich {
            Some((fc1, _)) => fc1.input_dim(),
            None => self.gru.input_dim(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru.hidden_dim()
    }

    pub fn step(&self, tape: &mut Tape, x_raw: Var, h_prev: Var) -> Result<Var> {
        let width = *tape.value(x_raw).shape().last().unwrap();
        if width != self.raw_input_dim() {
            return Err(Error::dim(
                "fcgru_step",
                tape.value(x_raw).shape(),
                &[self.raw_input_dim()],
            ));
        }
        let x = match &self.enrich {
            Some((fc1, fc2)) => {
                let x1 = fc1.forward(tape, x_raw)?;
                fc2.forward(tape, x1)?
            }
            None => x_raw,
        };
        self.gru.step(tape, x, h_prev)
    }

    /// Runs the cell over already-recorded inputs starting from a zero state.
    /// Inputs are rank-1 `[D]` or rank-2 `[B×D]`; every hidden state is
    /// returned.
    pub fn run_steps(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Vec<Var>> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::usage("run_sequence needs at least one time stamp"))?;
        let h = self.hidden_dim();
        let zero = if tape.value(*first).rank() == 1 {
            Tensor::zeros(&[h])
        } else {
            Tensor::zeros(&[tape.value(*first).rows(), h])
        };
        let mut state = tape.constant(zero);
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            state = self.step(tape, x, state)?;
            out.push(state);
        }
        Ok(out)
    }

    /// Runs the cell over a `T × D` series, one row per time stamp.
    pub fn run_sequence(&self, tape: &mut Tape, series: &Tensor) -> Result<Vec<Var>> {
        if series.rank() != 2 {
            return Err(Error::dim("run_sequence", series.shape(), &[0, self.raw_input_dim()]));
        }
        let inputs: Vec<Var> = (0..series.rows())
            .map(|t| tape.constant(Tensor::vector(series.row(t).to_vec())))
            .collect();
        self.run_steps(tape, &inputs)
    }

    pub fn params(&self) -> Vec<ParamRef> {
        self.named_params("").into_iter().map(|(_, p)| p).collect()
    }

    pub(crate) fn named_params(&self, prefix: &str) -> Vec<(String, ParamRef)> {
        let mut out = Vec::new();
        if let Some((fc1, fc2)) = &self.enrich {
            out.extend(fc1.named_params(&format!("{prefix}.fc1")));
            out.extend(fc2.named_params(&format!("{prefix}.fc2")));
        }
        out.extend(self.gru.named_params(&format!("{prefix}.gru")));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set_all(params: &[ParamRef], value: f64) {
        for p in params {
            p.borrow_mut().value.fill(value);
        }
    }

    fn vec_var(t: &mut Tape, d: &[f64]) -> Var {
        t.constant(Tensor::vector(d.to_vec()))
    }

    #[test]
    fn dense_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut t = Tape::new();

        let layer = DenseLayer::new(3, 2, Activation::Tanh, &mut rng);
        set_all(&layer.params(), 0.0);
        let x = vec_var(&mut t, &[1., 2., 3.]);
        let y = layer.forward(&mut t, x).unwrap();
        assert_eq!(t.value(y).data(), &[0., 0.]);

        let layer = DenseLayer::new(2, 2, Activation::Identity, &mut rng);
        layer.weight.set_value(Tensor::matrix(2, 2, vec![1., 0., 0., 1.]).unwrap()).unwrap();
        let x = vec_var(&mut t, &[1., -1.]);
        let y = layer.forward(&mut t, x).unwrap();
        assert_eq!(t.value(y).data(), &[1., -1.]);

        let layer = DenseLayer::new(1, 1, Activation::Tanh, &mut rng);
        layer.weight.set_value(Tensor::matrix(1, 1, vec![1.]).unwrap()).unwrap();
        let x = vec_var(&mut t, &[0.5]);
        let y = layer.forward(&mut t, x).unwrap();
        assert!((t.value(y).data()[0] - 0.462_117_157_260_009_8).abs() < 1e-15);

        let bad = vec_var(&mut t, &[0.5, 1.0]);
        assert!(matches!(layer.forward(&mut t, bad), Err(Error::Dimension { .. })));
    }

    #[test]
    fn gru_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gru = GruWeights::new(3, 4, &mut rng);
        set_all(&gru.params(), 0.0);
        let mut t = Tape::new();
        let x = vec_var(&mut t, &[1., 2., 3.]);
        let h0 = vec_var(&mut t, &[0.; 4]);
        let h = gru.step(&mut t, x, h0).unwrap();
        assert_eq!(t.value(h).data(), &[0.; 4]);

        let v = [0.4, -0.8, 0.2, 1.0];
        let hp = vec_var(&mut t, &v);
        let h = gru.step(&mut t, x, hp).unwrap();
        let want: Vec<f64> = v.iter().map(|x| 0.5 * x).collect();
        assert_eq!(t.value(h).data(), want.as_slice());
    }

    #[test]
    fn gru_update_gate_saturation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gru = GruWeights::new(3, 4, &mut rng);
        let mut t = Tape::new();
        let x = vec_var(&mut t, &[0.3, -0.1, 0.7]);
        let hp = vec_var(&mut t, &[0.2, -0.5, 0.9, 0.0]);

        gru.b_z.borrow_mut().value.fill(50.0);
        let h = gru.step(&mut t, x, hp).unwrap();
        // with z ≈ 1 the new state is the candidate tanh(W_h x + U_h (r ⊙ h_prev) + b_h)
        let r = {
            let wr = t.param(&gru.w_r);
            let ur = t.param(&gru.u_r);
            let a = t.matvec(wr, x).unwrap();
            let b = t.matvec(ur, hp).unwrap();
            let s = t.add(a, b).unwrap();
            t.sigmoid(s)
        };
        let rh = t.hadamard(r, hp).unwrap();
        let wh = t.param(&gru.w_h);
        let uh = t.param(&gru.u_h);
        let a = t.matvec(wh, x).unwrap();
        let b = t.matvec(uh, rh).unwrap();
        let s = t.add(a, b).unwrap();
        let cand = t.tanh(s);
        for (got, want) in t.value(h).data().iter().zip(t.value(cand).data()) {
            assert!((got - want).abs() < 1e-12);
        }

        gru.b_z.borrow_mut().value.fill(-50.0);
        let mut t = Tape::new();
        let x = vec_var(&mut t, &[0.3, -0.1, 0.7]);
        let prev = [0.2, -0.5, 0.9, 0.0];
        let hp = vec_var(&mut t, &prev);
        let h = gru.step(&mut t, x, hp).unwrap();
        for (got, want) in t.value(h).data().iter().zip(&prev) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn disabled_enrichment_is_plain_gru() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = FcGruCell::new(2, None, 5, &mut rng);
        assert!(!cell.enrich_enabled());
        assert_eq!(cell.gru.input_dim(), 2);
        let mut t = Tape::new();
        let x = vec_var(&mut t, &[0.1, 0.9]);
        let h0 = vec_var(&mut t, &[0.0; 5]);
        let a = cell.step(&mut t, x, h0).unwrap();
        let b = cell.gru.step(&mut t, x, h0).unwrap();
        assert_eq!(t.value(a), t.value(b));
    }

    #[test]
    fn zero_weight_cell_stays_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cell = FcGruCell::new(2, Some((6, 7)), 5, &mut rng);
        set_all(&cell.params(), 0.0);
        let series = Tensor::from_rows(&[vec![3., -1.], vec![0.5, 8.], vec![1., 1.]]).unwrap();
        let mut t = Tape::new();
        let hs = cell.run_sequence(&mut t, &series).unwrap();
        assert_eq!(hs.len(), 3);
        for h in hs {
            assert!(t.value(h).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn run_sequence_single_step_and_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cell = FcGruCell::new(2, Some((6, 7)), 5, &mut rng);
        let mut t = Tape::new();

        let one = Tensor::from_rows(&[vec![0.2, 0.7]]).unwrap();
        let hs = cell.run_sequence(&mut t, &one).unwrap();
        let x = vec_var(&mut t, &[0.2, 0.7]);
        let h0 = vec_var(&mut t, &[0.0; 5]);
        let h1 = cell.step(&mut t, x, h0).unwrap();
        assert_eq!(t.value(hs[0]), t.value(h1));

        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.3, 1.0 - i as f64 * 0.2]).collect();
        let fwd = Tensor::from_rows(&rows).unwrap();
        let rev: Vec<Vec<f64>> = rows.iter().rev().cloned().collect();
        let rev = Tensor::from_rows(&rev).unwrap();
        let a = *cell.run_sequence(&mut t, &fwd).unwrap().last().unwrap();
        let b = *cell.run_sequence(&mut t, &rev).unwrap().last().unwrap();
        assert_ne!(t.value(a), t.value(b));
    }

    #[test]
    fn empty_series_and_bad_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cell = FcGruCell::new(2, Some((3, 3)), 4, &mut rng);
        let mut t = Tape::new();
        assert!(matches!(cell.run_steps(&mut t, &[]), Err(Error::Usage(_))));
        let wrong = Tensor::from_rows(&[vec![1., 2., 3.]]).unwrap();
        assert!(matches!(cell.run_sequence(&mut t, &wrong), Err(Error::Dimension { .. })));
    }
}
