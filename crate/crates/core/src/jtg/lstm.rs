use rand::Rng;

use crate::error::Result;
use crate::nn::{Bound, ParamStore};
use crate::numcore::{Tape, Tensor, Var};

/// Adds `prefix.w_ih`, `prefix.w_hh` (`d_in×4h`, `h×4h`) and `prefix.bias`
/// (`1×4h`); gate blocks are ordered input, forget, cell, output.
pub fn init_lstm<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, d_in: usize, hidden: usize, rng: &mut R) {
    let bound = 1.0 / (hidden as f64).sqrt();
    store.insert(format!("{prefix}.w_ih"), Tensor::uniform(&[d_in, 4 * hidden], bound, rng));
    store.insert(format!("{prefix}.w_hh"), Tensor::uniform(&[hidden, 4 * hidden], bound, rng));
    store.insert(format!("{prefix}.bias"), Tensor::uniform(&[1, 4 * hidden], bound, rng));
}

/// One LSTM step given the precomputed input projection `x·W_ih` (`1×4h`).
pub fn lstm_cell(
    tape: &mut Tape,
    params: &Bound,
    prefix: &str,
    x_proj: Var,
    h: Var,
    c: Var,
) -> Result<(Var, Var)> {
    let w_hh = params.var(&format!("{prefix}.w_hh"))?;
    let bias = params.var(&format!("{prefix}.bias"))?;
    let hidden = tape.value(h).last_dim();
    let rec = tape.matmul(h, w_hh)?;
    let gates = tape.add(x_proj, rec)?;
    let gates = tape.add(gates, bias)?;
    let i = tape.slice_last(gates, 0, hidden)?;
    let f = tape.slice_last(gates, hidden, hidden)?;
    let g = tape.slice_last(gates, 2 * hidden, hidden)?;
    let o = tape.slice_last(gates, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i)?;
    let f = tape.sigmoid(f)?;
    let g = tape.tanh(g)?;
    let o = tape.sigmoid(o)?;
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next)?;
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Hidden states of a single-layer LSTM over `seq` (`T×d`), zero initial state.
pub fn temporal_encode(tape: &mut Tape, params: &Bound, prefix: &str, seq: Var) -> Result<Var> {
    let w_ih = params.var(&format!("{prefix}.w_ih"))?;
    let hidden = tape.value(w_ih).last_dim() / 4;
    let steps = tape.value(seq).shape()[0];
    let x_proj = tape.matmul(seq, w_ih)?;
    let mut h = tape.leaf(Tensor::zeros(&[1, hidden]));
    let mut c = tape.leaf(Tensor::zeros(&[1, hidden]));
    let mut outputs = Vec::with_capacity(steps);
    for t in 0..steps {
        let xt = tape.gather_rows(x_proj, &[t])?;
        (h, c) = lstm_cell(tape, params, prefix, xt, h, c)?;
        outputs.push(h);
    }
    tape.concat_rows(&outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_store(d: usize) -> ParamStore {
        let mut store = ParamStore::new();
        store.insert("l.w_ih", Tensor::zeros(&[d, 4 * d]));
        store.insert("l.w_hh", Tensor::zeros(&[d, 4 * d]));
        store.insert("l.bias", Tensor::zeros(&[1, 4 * d]));
        store
    }

    #[test]
    fn zero_params_zero_input_stay_zero() {
        let store = zero_store(3);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.leaf(Tensor::zeros(&[4, 3]));
        let h = temporal_encode(&mut tape, &p, "l", x).unwrap();
        assert!(tape.value(h).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        init_lstm(&mut store, "l", 2, 2, &mut rng);
        let x = Tensor::row(vec![0.4, -0.7]);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let h = temporal_encode(&mut tape, &p, "l", xv).unwrap();

        let w = store.get("l.w_ih").unwrap();
        let b = store.get("l.bias").unwrap();
        let gate = |k: usize| -> f64 {
            b.data()[k] + x.data()[0] * w.data()[k] + x.data()[1] * w.data()[8 + k]
        };
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        for j in 0..2 {
            let (i, g, o) = (sig(gate(j)), gate(4 + j).tanh(), sig(gate(6 + j)));
            let expected = o * (i * g).tanh();
            assert!((tape.value(h).data()[j] - expected).abs() < 1e-14);
        }
    }
}
