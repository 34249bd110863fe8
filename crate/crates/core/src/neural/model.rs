use super::{Mark, NeuralError, Result};
use crate::nn::{softplus_inv, Eval, Graph, ParamSet, Tape, Tensor};
use crate::rng::SimRng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::rc::Rc;

const W_INPUT: usize = 0;
const W_HIDDEN: usize = 1;
const B_GATES: usize = 2;
const W_OUT: usize = 3;
const B_OUT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub num_types: usize,
    pub hidden: usize,
    pub num_states: usize,
}

impl Architecture {
    pub fn input_width(&self) -> usize {
        self.num_types + self.num_states
    }
}

/// `m` CT-LSTM units of width `D`, one per event type. All per-unit tensors
/// are stored as `m x D` blocks with row `i` belonging to unit `i`.
///
/// Parameter blocks, in order:
/// `w_input` (`m (m+S) x 5D`), `w_hidden` (`m D x 5D`), `b_gates` (`m x 5D`),
/// `w_out` (`m x D`), `b_out` (`m x 1`). Gate columns are ordered
/// input, forget, candidate, decay, output.
#[derive(Debug, Clone, PartialEq)]
pub struct CtLstm {
    arch: Architecture,
    params: ParamSet,
}

/// State after the most recent event: the cell decays from `c_start`
/// towards `target` at rate `decay`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralState {
    pub c_start: Tensor,
    pub target: Tensor,
    pub decay: Tensor,
    pub out_gate: Tensor,
    pub last: f64,
}

pub(crate) struct GraphState<V> {
    c_start: V,
    target: V,
    decay: V,
    out_gate: V,
    last: f64,
}

impl<V: Clone> Clone for GraphState<V> {
    fn clone(&self) -> Self {
        Self {
            c_start: self.c_start.clone(),
            target: self.target.clone(),
            decay: self.decay.clone(),
            out_gate: self.out_gate.clone(),
            last: self.last,
        }
    }
}

/// Parameters bound to a graph.
pub(crate) struct Bound<V>(Vec<V>);

/// Totals from scoring a stream with carried state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamEval {
    pub log_intensity: f64,
    pub compensator: f64,
    pub predicted: usize,
    pub correct: usize,
}

impl StreamEval {
    pub fn nll(&self) -> f64 {
        self.compensator - self.log_intensity
    }

    pub fn nll_per_event(&self) -> f64 {
        self.nll() / self.predicted.max(1) as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.predicted.max(1) as f64
    }
}

fn glorot(rng: &mut SimRng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Tensor::from_vec(rows, cols, data).expect("shape")
}

impl CtLstm {
    /// Random initialisation. `base_rates`, when given, sets each read-out
    /// bias so that the untrained intensity is near that rate.
    pub fn new(arch: Architecture, rng: &mut SimRng, base_rates: Option<&[f64]>) -> Result<Self> {
        let (m, d, s) = (arch.num_types, arch.hidden, arch.num_states);
        if m == 0 || d == 0 || s == 0 {
            return Err(NeuralError::Config("empty architecture".into()));
        }
        let fan_in = m + s + d;
        let mut params = ParamSet::new();
        params.add("w_input", glorot(rng, m * (m + s), 5 * d, fan_in, d));
        params.add("w_hidden", glorot(rng, m * d, 5 * d, fan_in, d));
        let mut b = Tensor::zeros(m, 5 * d);
        for i in 0..m {
            for k in d..2 * d {
                b.set(i, k, 1.0);
            }
        }
        params.add("b_gates", b);
        params.add("w_out", glorot(rng, m, d, d, 1));
        let b_out = match base_rates {
            Some(r) if r.len() == m => r.iter().map(|&x| softplus_inv(x.max(1e-8))).collect(),
            Some(r) => return Err(NeuralError::Config(format!("{} base rates for {m} types", r.len()))),
            None => vec![0.0; m],
        };
        params.add("b_out", Tensor::column(b_out));
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: Architecture, params: ParamSet) -> Result<Self> {
        let (m, d, s) = (arch.num_types, arch.hidden, arch.num_states);
        let expected = [
            ("w_input", (m * (m + s), 5 * d)),
            ("w_hidden", (m * d, 5 * d)),
            ("b_gates", (m, 5 * d)),
            ("w_out", (m, d)),
            ("b_out", (m, 1)),
        ];
        if params.len() != expected.len() {
            return Err(NeuralError::Config(format!("expected {} parameter blocks", expected.len())));
        }
        for (k, (name, shape)) in expected.iter().enumerate() {
            let id = crate::nn::ParamId(k);
            if params.name(id) != *name || params.get(id).shape() != *shape {
                return Err(NeuralError::Config(format!("block {k} should be {name} {shape:?}")));
            }
            if !params.get(id).is_finite() {
                return Err(NeuralError::Config(format!("block {name} is not finite")));
            }
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub(crate) fn bind<G: Graph>(&self, g: &mut G) -> Bound<G::V> {
        Bound(self.params.bind(g))
    }

    pub(crate) fn initial_graph_state<G: Graph>(&self, g: &mut G, t0: f64) -> GraphState<G::V> {
        let (m, d) = (self.arch.num_types, self.arch.hidden);
        GraphState {
            c_start: g.constant(Tensor::zeros(m, d)),
            target: g.constant(Tensor::zeros(m, d)),
            decay: g.constant(Tensor::filled(m, d, 1.0)),
            out_gate: g.constant(Tensor::zeros(m, d)),
            last: t0,
        }
    }

    /// Cell and hidden state `dt` after the last event.
    pub(crate) fn decayed<G: Graph>(&self, g: &mut G, st: &GraphState<G::V>, dt: f64) -> Result<(G::V, G::V)> {
        let rate = g.scale(&st.decay, -dt);
        let e = g.exp(&rate);
        let gap = g.sub(&st.c_start, &st.target)?;
        let moved = g.mul(&gap, &e)?;
        let c = g.add(&st.target, &moved)?;
        let tc = g.tanh(&c);
        let h = g.mul(&st.out_gate, &tc)?;
        Ok((c, h))
    }

    /// Per-type intensities (`m x 1`) from hidden states.
    pub(crate) fn readout<G: Graph>(&self, g: &mut G, p: &Bound<G::V>, h: &G::V) -> Result<G::V> {
        let wh = g.mul(h, &p.0[W_OUT])?;
        let z = g.sum_cols(&wh);
        let z = g.add(&z, &p.0[B_OUT])?;
        Ok(g.softplus(&z))
    }

    fn input_rows(&self, kind: usize, state: usize) -> Tensor {
        let (m, w) = (self.arch.num_types, self.arch.input_width());
        let mut x = Tensor::zeros(m, w);
        for i in 0..m {
            x.set(i, kind, 1.0);
            x.set(i, self.arch.num_types + state, 1.0);
        }
        x
    }

    /// Feed an event at `t`, given the decayed cell and hidden state there.
    pub(crate) fn update<G: Graph>(
        &self,
        g: &mut G,
        p: &Bound<G::V>,
        c: &G::V,
        h: &G::V,
        mark: &Mark,
    ) -> Result<GraphState<G::V>> {
        let d = self.arch.hidden;
        let x = g.constant(self.input_rows(mark.kind, mark.state));
        let zx = g.row_matmul(&x, &p.0[W_INPUT])?;
        let zh = g.row_matmul(h, &p.0[W_HIDDEN])?;
        let z = g.add(&zx, &zh)?;
        let z = g.add(&z, &p.0[B_GATES])?;
        let gate = |g: &mut G, k: usize| g.slice_cols(&z, k * d, d);
        let (zi, zf, zg, zd, zo) = (gate(g, 0)?, gate(g, 1)?, gate(g, 2)?, gate(g, 3)?, gate(g, 4)?);
        let i = g.sigmoid(&zi);
        let f = g.sigmoid(&zf);
        let cand = g.tanh(&zg);
        let decay = g.exp(&zd);
        let o = g.sigmoid(&zo);
        let keep = g.mul(&f, c)?;
        let add = g.mul(&i, &cand)?;
        let target = g.add(&keep, &add)?;
        Ok(GraphState { c_start: c.clone(), target, decay, out_gate: o, last: mark.time })
    }

    fn check_mark(&self, index: usize, mark: &Mark, prev: f64) -> Result<()> {
        let reason = if mark.kind >= self.arch.num_types {
            format!("type {} out of range", mark.kind)
        } else if mark.state >= self.arch.num_states {
            format!("market state {} out of range", mark.state)
        } else if !(mark.time >= prev) || !mark.time.is_finite() {
            format!("time {} precedes {prev}", mark.time)
        } else {
            return Ok(());
        };
        Err(NeuralError::BadEvent { index, reason })
    }

    /// Negative log-likelihood of `marks[1..]` given `marks[0]`, with the
    /// compensator over each interval estimated from `mc` uniform draws.
    /// Returns the loss and the number of scored events.
    pub(crate) fn window_loss<G: Graph>(
        &self,
        g: &mut G,
        p: &Bound<G::V>,
        marks: &[Mark],
        mc: usize,
        rng: &mut SimRng,
    ) -> Result<(G::V, usize)> {
        if marks.len() < 2 {
            return Err(NeuralError::BadEvent { index: 0, reason: "window needs at least 2 events".into() });
        }
        self.check_mark(0, &marks[0], f64::NEG_INFINITY)?;
        let st0 = self.initial_graph_state(g, marks[0].time);
        let (c, h) = self.decayed(g, &st0, 0.0)?;
        let mut st = self.update(g, p, &c, &h, &marks[0])?;
        let mut terms: Option<G::V> = None;
        for (j, mark) in marks.iter().enumerate().skip(1) {
            self.check_mark(j, mark, st.last)?;
            let dt = mark.time - st.last;
            let (c, h) = self.decayed(g, &st, dt)?;
            let lam = self.readout(g, p, &h)?;
            let lk = g.slice_rows(&lam, mark.kind, 1)?;
            let log_l = g.log(&lk);
            let mut term = g.neg(&log_l);
            if dt > 0.0 {
                for _ in 0..mc {
                    let s = rng.random::<f64>() * dt;
                    let (_, hs) = self.decayed(g, &st, s)?;
                    let ls = self.readout(g, p, &hs)?;
                    let tot = g.sum(&ls);
                    let part = g.scale(&tot, dt / mc as f64);
                    term = g.add(&term, &part)?;
                }
            }
            terms = Some(match terms {
                Some(acc) => g.add(&acc, &term)?,
                None => term,
            });
            st = self.update(g, p, &c, &h, mark)?;
        }
        Ok((terms.expect("at least one term"), marks.len() - 1))
    }

    /// Window NLL evaluated without recording gradients.
    pub fn nll(&self, marks: &[Mark], mc: usize, rng: &mut SimRng) -> Result<f64> {
        let mut g = Eval;
        let p = self.bind(&mut g);
        let (l, _) = self.window_loss(&mut g, &p, marks, mc, rng)?;
        Ok(l.item())
    }

    /// Window NLL and its gradient with respect to every parameter block.
    pub fn nll_gradient(&self, marks: &[Mark], mc: usize, rng: &mut SimRng) -> Result<(f64, usize, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let (l, n) = self.window_loss(&mut tape, &p, marks, mc, rng)?;
        let loss = tape.value(&l).item();
        let vars = p.0.clone();
        let grads = tape.backward(l)?;
        Ok((loss, n, vars.iter().map(|v| grads.wrt(*v)).collect()))
    }

    /// State before any event, anchored at `t0`.
    pub fn initial_state(&self, t0: f64) -> NeuralState {
        let mut g = Eval;
        to_plain(self.initial_graph_state(&mut g, t0))
    }

    /// Feed one event; `mark.time` must not precede the last event.
    pub fn step(&self, state: &NeuralState, mark: &Mark) -> Result<NeuralState> {
        self.check_mark(0, mark, state.last)?;
        let mut g = Eval;
        let p = self.bind(&mut g);
        let st = from_plain(state);
        let (c, h) = self.decayed(&mut g, &st, mark.time - state.last)?;
        let next = to_plain(self.update(&mut g, &p, &c, &h, mark)?);
        for t in [&next.c_start, &next.target, &next.decay, &next.out_gate] {
            if let Some(k) = t.data().iter().position(|v| !v.is_finite()) {
                return Err(NeuralError::NonFiniteState { unit: k / t.cols() });
            }
        }
        Ok(next)
    }

    /// Hidden states `dt` after the last event (`m x D`).
    pub fn hidden(&self, state: &NeuralState, dt: f64) -> Tensor {
        let mut g = Eval;
        let (_, h) = self.decayed(&mut g, &from_plain(state), dt).expect("consistent shapes");
        Rc::unwrap_or_clone(h)
    }

    /// Intensities `dt >= 0` after the last event.
    pub fn intensities(&self, state: &NeuralState, dt: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.arch.num_types];
        self.intensities_into(state, dt, &mut out);
        out
    }

    /// Allocation-light version of [`CtLstm::intensities`].
    pub fn intensities_into(&self, state: &NeuralState, dt: f64, out: &mut [f64]) {
        let d = self.arch.hidden;
        let w = self.params.get(crate::nn::ParamId(W_OUT)).data();
        let b = self.params.get(crate::nn::ParamId(B_OUT)).data();
        for (i, o) in out.iter_mut().enumerate() {
            let mut z = b[i];
            for k in i * d..(i + 1) * d {
                let (cs, tg) = (state.c_start.data()[k], state.target.data()[k]);
                let c = tg + (cs - tg) * (-state.decay.data()[k] * dt).exp();
                z += w[k] * state.out_gate.data()[k] * c.tanh();
            }
            *o = crate::nn::softplus(z);
        }
    }

    /// Score a whole stream with state carried across events: NLL terms for
    /// `marks[1..]` and next-type accuracy (argmax intensity, lowest index on ties).
    pub fn evaluate_stream(&self, marks: &[Mark], mc: usize, rng: &mut SimRng) -> Result<StreamEval> {
        let mut out = StreamEval::default();
        let Some(first) = marks.first() else { return Ok(out) };
        let mut st = self.step(&self.initial_state(first.time), first)?;
        let mut lam = vec![0.0; self.arch.num_types];
        for (j, mark) in marks.iter().enumerate().skip(1) {
            self.check_mark(j, mark, st.last)?;
            let dt = mark.time - st.last;
            self.intensities_into(&st, dt, &mut lam);
            out.log_intensity += lam[mark.kind].ln();
            if argmax(&lam) == mark.kind {
                out.correct += 1;
            }
            if dt > 0.0 {
                let mut acc = 0.0;
                for _ in 0..mc {
                    self.intensities_into(&st, rng.random::<f64>() * dt, &mut lam);
                    acc += lam.iter().sum::<f64>();
                }
                out.compensator += acc * dt / mc as f64;
            }
            out.predicted += 1;
            st = self.step(&st, mark).map_err(|e| match e {
                NeuralError::BadEvent { reason, .. } => NeuralError::BadEvent { index: j, reason },
                other => other,
            })?;
        }
        if !out.nll().is_finite() {
            return Err(NeuralError::NonFiniteState { unit: 0 });
        }
        Ok(out)
    }

    /// Fraction of `marks[1..]` whose type has the largest predicted intensity.
    pub fn accuracy(&self, marks: &[Mark]) -> Result<f64> {
        let mut rng = crate::rng::seeded(0);
        Ok(self.evaluate_stream(marks, 1, &mut rng)?.accuracy())
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn to_plain(s: GraphState<Rc<Tensor>>) -> NeuralState {
    NeuralState {
        c_start: Rc::unwrap_or_clone(s.c_start),
        target: Rc::unwrap_or_clone(s.target),
        decay: Rc::unwrap_or_clone(s.decay),
        out_gate: Rc::unwrap_or_clone(s.out_gate),
        last: s.last,
    }
}

fn from_plain(s: &NeuralState) -> GraphState<Rc<Tensor>> {
    GraphState {
        c_start: Rc::new(s.c_start.clone()),
        target: Rc::new(s.target.clone()),
        decay: Rc::new(s.decay.clone()),
        out_gate: Rc::new(s.out_gate.clone()),
        last: s.last,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{softplus, ParamId};
    use crate::rng::seeded;
    use approx::assert_relative_eq;

    fn small(m: usize, d: usize) -> CtLstm {
        CtLstm::new(Architecture { num_types: m, hidden: d, num_states: 3 }, &mut seeded(1), None).unwrap()
    }

    fn constant_rates(model: &mut CtLstm, rate: f64) {
        let p = model.params_mut();
        p.get_mut(ParamId(W_OUT)).data_mut().iter_mut().for_each(|x| *x = 0.0);
        p.get_mut(ParamId(B_OUT)).data_mut().iter_mut().for_each(|x| *x = softplus_inv(rate));
    }

    fn state_with(c: f64, g: f64, delta: f64) -> NeuralState {
        NeuralState {
            c_start: Tensor::filled(1, 1, c),
            target: Tensor::filled(1, 1, g),
            decay: Tensor::filled(1, 1, delta),
            out_gate: Tensor::filled(1, 1, 1.0),
            last: 0.0,
        }
    }

    #[test]
    fn decayed_cell_matches_closed_form() {
        let model = small(1, 1);
        let st = state_with(0.0, 1.0, 1.0);
        let h = model.hidden(&st, 2f64.ln());
        assert_relative_eq!(h.item(), 0.5f64.tanh(), epsilon = 1e-15);
        let st = state_with(0.3, 1.0, 1.0);
        assert_relative_eq!(model.hidden(&st, 0.0).item(), 0.3f64.tanh(), epsilon = 1e-15);
        assert!((model.hidden(&st, 1e6).item() - 1f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn zero_readout_gives_ln2() {
        let mut model = small(3, 2);
        let p = model.params_mut();
        p.get_mut(ParamId(W_OUT)).data_mut().iter_mut().for_each(|x| *x = 0.0);
        p.get_mut(ParamId(B_OUT)).data_mut().copy_from_slice(&[0.0, -10.0, 0.5]);
        let l = model.intensities(&model.initial_state(0.0), 1.0);
        assert_relative_eq!(l[0], 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(l[1], 4.54e-5, max_relative = 1e-3);
        assert!(l[2] > l[0]);
    }

    #[test]
    fn constant_intensity_window_loss() {
        let mut model = small(12, 4);
        constant_rates(&mut model, 1.0);
        let marks: Vec<Mark> = [0.0, 0.4, 1.1, 2.0, 3.5].iter().enumerate().map(|(k, &t)| Mark::new(t, k, 1)).collect();
        let l = model.nll(&marks, 1, &mut seeded(2)).unwrap();
        assert_relative_eq!(l, 12.0 * 3.5, epsilon = 1e-9);
    }

    #[test]
    fn fast_intensities_agree_with_graph_readout() {
        let model = small(4, 3);
        let mut st = model.initial_state(0.0);
        for (k, t) in [0.1, 0.5, 0.55, 1.3].iter().enumerate() {
            st = model.step(&st, &Mark::new(*t, k, k % 3)).unwrap();
        }
        let mut g = Eval;
        let p = model.bind(&mut g);
        let (_, h) = model.decayed(&mut g, &from_plain(&st), 0.7).unwrap();
        let slow = model.readout(&mut g, &p, &h).unwrap();
        let fast = model.intensities(&st, 0.7);
        for (a, b) in slow.data().iter().zip(&fast) {
            assert_relative_eq!(*a, *b, epsilon = 1e-14);
        }
    }

    #[test]
    fn tie_break_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.5, 2.0, 2.0]), 1);
        let mut model = small(3, 2);
        constant_rates(&mut model, 0.7);
        let marks: Vec<Mark> = (0..30).map(|k| Mark::new(k as f64, k % 3, 1)).collect();
        assert_relative_eq!(model.accuracy(&marks).unwrap(), 9.0 / 29.0);
    }

    #[test]
    fn rejects_out_of_order_events() {
        let model = small(2, 2);
        let st = model.step(&model.initial_state(0.0), &Mark::new(1.0, 0, 1)).unwrap();
        assert!(model.step(&st, &Mark::new(0.5, 0, 1)).is_err());
        assert!(model.step(&st, &Mark::new(2.0, 5, 1)).is_err());
    }

    #[test]
    fn base_rates_set_initial_intensity() {
        let model = CtLstm::new(
            Architecture { num_types: 2, hidden: 3, num_states: 3 },
            &mut seeded(4),
            Some(&[0.2, 5.0]),
        )
        .unwrap();
        let l = model.intensities(&model.initial_state(0.0), 0.0);
        assert_relative_eq!(l[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(l[1], 5.0, epsilon = 1e-12);
        assert_relative_eq!(softplus(softplus_inv(5.0)), 5.0, epsilon = 1e-12);
    }
}
