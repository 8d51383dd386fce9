//! Reverse-mode automatic differentiation over 1-d `f64` arrays.
//!
//! A [`Tape`] records one forward pass as a Wengert list. Every intermediate
//! value is an `Array1<f64>`; scalars are length-1 arrays. Parameters live
//! outside the tape in a [`ParamStore`](super::ParamStore) and receive their
//! gradients through [`Tape::backward`].

use ndarray::Array1;

use super::{GradStore, ParamId, ParamStore};

/// Handle to one value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    /// y = W x
    MatVec { w: ParamId, x: Var },
    /// y = x + b
    AddBias { b: ParamId, x: Var },
    /// y = E[row]
    Embed { table: ParamId, row: usize },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    /// y = a ⊙ c with constant c
    MulConst { a: Var, c: Array1<f64> },
    Scale { a: Var, k: f64 },
    Sigmoid { a: Var },
    Tanh { a: Var },
    Exp { a: Var },
    Concat { parts: Vec<(Var, usize)> },
    Slice { a: Var, start: usize },
    /// y = Σ_i a_i (scalar)
    Sum { a: Var },
    /// y = −log softmax(logits)[target]; softmax cached for the backward pass
    NllLoss { logits: Var, softmax: Array1<f64>, target: usize },
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    vals: Vec<Array1<f64>>,
    ops: Vec<Op>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { params, vals: Vec::new(), ops: Vec::new() }
    }

    pub fn params(&self) -> &ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &Array1<f64> {
        &self.vals[v.0]
    }

    /// Value of a length-1 variable.
    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.vals[v.0].len(), 1);
        self.vals[v.0][0]
    }

    fn record(&mut self, val: Array1<f64>, op: Op) -> Var {
        self.vals.push(val);
        self.ops.push(op);
        Var(self.vals.len() - 1)
    }

    pub fn constant(&mut self, val: Array1<f64>) -> Var {
        self.record(val, Op::Leaf)
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.constant(Array1::zeros(len))
    }

    pub fn scalar_const(&mut self, x: f64) -> Var {
        self.constant(Array1::from_elem(1, x))
    }

    pub fn matvec(&mut self, w: ParamId, x: Var) -> Var {
        let val = self.params.mat(w).dot(&self.vals[x.0]);
        self.record(val, Op::MatVec { w, x })
    }

    pub fn add_bias(&mut self, b: ParamId, x: Var) -> Var {
        let val = &self.vals[x.0] + self.params.vec(b);
        self.record(val, Op::AddBias { b, x })
    }

    pub fn embed(&mut self, table: ParamId, row: usize) -> Var {
        let val = self.params.mat(table).row(row).to_owned();
        self.record(val, Op::Embed { table, row })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let val = &self.vals[a.0] + &self.vals[b.0];
        self.record(val, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let val = &self.vals[a.0] - &self.vals[b.0];
        self.record(val, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let val = &self.vals[a.0] * &self.vals[b.0];
        self.record(val, Op::Mul { a, b })
    }

    pub fn mul_const(&mut self, a: Var, c: Array1<f64>) -> Var {
        let val = &self.vals[a.0] * &c;
        self.record(val, Op::MulConst { a, c })
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let val = self.vals[a.0].mapv(|x| x * k);
        self.record(val, Op::Scale { a, k })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let val = self.vals[a.0].mapv(sigmoid);
        self.record(val, Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let val = self.vals[a.0].mapv(f64::tanh);
        self.record(val, Op::Tanh { a })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let val = self.vals[a.0].mapv(f64::exp);
        self.record(val, Op::Exp { a })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let total: usize = parts.iter().map(|p| self.vals[p.0].len()).sum();
        let mut val = Array1::zeros(total);
        let mut meta = Vec::with_capacity(parts.len());
        let mut off = 0;
        for &p in parts {
            let v = &self.vals[p.0];
            val.slice_mut(ndarray::s![off..off + v.len()]).assign(v);
            meta.push((p, v.len()));
            off += v.len();
        }
        self.record(val, Op::Concat { parts: meta })
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let val = self.vals[a.0].slice(ndarray::s![start..start + len]).to_owned();
        self.record(val, Op::Slice { a, start })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let val = Array1::from_elem(1, self.vals[a.0].sum());
        self.record(val, Op::Sum { a })
    }

    /// Negative log-likelihood of `target` under `softmax(logits)`.
    pub fn nll_loss(&mut self, logits: Var, target: usize) -> Var {
        let sm = stable_softmax(&self.vals[logits.0]);
        let loss = -(sm[target].max(f64::MIN_POSITIVE)).ln();
        self.record(Array1::from_elem(1, loss), Op::NllLoss { logits, softmax: sm, target })
    }

    /// Softmax with no gradient tracking (generation-side sampling).
    pub fn softmax_value(&self, logits: Var) -> Array1<f64> {
        stable_softmax(&self.vals[logits.0])
    }

    /// Accumulate d`root`/dθ into `grads`. `root` must be a scalar.
    pub fn backward(&self, root: Var, grads: &mut GradStore) {
        self.backward_returning(root, grads, &[]);
    }

    /// As [`Tape::backward`], additionally returning d`root`/d`wanted[i]`
    /// for each requested tape variable.
    pub fn backward_returning(
        &self,
        root: Var,
        grads: &mut GradStore,
        wanted: &[Var],
    ) -> Vec<Array1<f64>> {
        assert_eq!(self.vals[root.0].len(), 1, "backward root must be scalar");
        let mut adj: Vec<Option<Array1<f64>>> = vec![None; self.vals.len()];
        adj[root.0] = Some(Array1::from_elem(1, 1.0));
        let keep: std::collections::HashSet<usize> = wanted.iter().map(|v| v.0).collect();

        for i in (0..self.ops.len()).rev() {
            let g = match if keep.contains(&i) { adj[i].clone() } else { adj[i].take() } {
                Some(g) => g,
                None => continue,
            };
            match &self.ops[i] {
                Op::Leaf => {}
                Op::MatVec { w, x } => {
                    let xv = &self.vals[x.0];
                    let gw = grads.mat_mut(*w);
                    for (r, gr) in g.iter().enumerate() {
                        if *gr != 0.0 {
                            let mut row = gw.row_mut(r);
                            row.scaled_add(*gr, xv);
                        }
                    }
                    let gx = self.params.mat(*w).t().dot(&g);
                    accumulate(&mut adj[x.0], gx);
                }
                Op::AddBias { b, x } => {
                    grads.vec_mut(*b).scaled_add(1.0, &g);
                    accumulate(&mut adj[x.0], g);
                }
                Op::Embed { table, row } => {
                    grads.mat_mut(*table).row_mut(*row).scaled_add(1.0, &g);
                }
                Op::Add { a, b } => {
                    accumulate(&mut adj[a.0], g.clone());
                    accumulate(&mut adj[b.0], g);
                }
                Op::Sub { a, b } => {
                    accumulate(&mut adj[a.0], g.clone());
                    accumulate(&mut adj[b.0], -g);
                }
                Op::Mul { a, b } => {
                    let ga = &g * &self.vals[b.0];
                    let gb = &g * &self.vals[a.0];
                    accumulate(&mut adj[a.0], ga);
                    accumulate(&mut adj[b.0], gb);
                }
                Op::MulConst { a, c } => {
                    accumulate(&mut adj[a.0], &g * c);
                }
                Op::Scale { a, k } => {
                    accumulate(&mut adj[a.0], g.mapv(|x| x * k));
                }
                Op::Sigmoid { a } => {
                    let s = &self.vals[i];
                    let ga = &g * &(s * &s.mapv(|x| 1.0 - x));
                    accumulate(&mut adj[a.0], ga);
                }
                Op::Tanh { a } => {
                    let t = &self.vals[i];
                    let ga = &g * &t.mapv(|x| 1.0 - x * x);
                    accumulate(&mut adj[a.0], ga);
                }
                Op::Exp { a } => {
                    accumulate(&mut adj[a.0], &g * &self.vals[i]);
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    for (p, len) in parts {
                        let gp = g.slice(ndarray::s![off..off + len]).to_owned();
                        accumulate(&mut adj[p.0], gp);
                        off += len;
                    }
                }
                Op::Slice { a, start } => {
                    let mut ga = Array1::zeros(self.vals[a.0].len());
                    ga.slice_mut(ndarray::s![*start..*start + g.len()]).assign(&g);
                    accumulate(&mut adj[a.0], ga);
                }
                Op::Sum { a } => {
                    accumulate(&mut adj[a.0], Array1::from_elem(self.vals[a.0].len(), g[0]));
                }
                Op::NllLoss { logits, softmax, target } => {
                    let mut gl = softmax * g[0];
                    gl[*target] -= g[0];
                    accumulate(&mut adj[logits.0], gl);
                }
            }
        }
        wanted
            .iter()
            .map(|v| adj[v.0].clone().unwrap_or_else(|| Array1::zeros(self.vals[v.0].len())))
            .collect()
    }
}

fn accumulate(slot: &mut Option<Array1<f64>>, g: Array1<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn stable_softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exps = logits.mapv(|x| (x - max).exp());
    let z = exps.sum();
    exps / z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Finite-difference check of d(loss)/dθ for a composite expression that
    // exercises every op kind.
    #[test]
    fn ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ps = ParamStore::new();
        let w = ps.add_matrix("w", 3, 4, Init::Uniform(0.6), &mut rng);
        let b = ps.add_vector("b", 3, Init::Uniform(0.6), &mut rng);
        let e = ps.add_matrix("e", 5, 2, Init::Uniform(0.6), &mut rng);

        let loss = |ps: &ParamStore| -> f64 {
            let mut t = Tape::new(ps);
            let x = t.constant(Array1::from(vec![0.3, -0.2, 0.5, 0.1]));
            let h = t.matvec(w, x);
            let h = t.add_bias(b, h);
            let s = t.sigmoid(h);
            let th = t.tanh(h);
            let prod = t.mul(s, th);
            let emb = t.embed(e, 2);
            let cat = t.concat(&[prod, emb]);
            let sl = t.slice(cat, 1, 3);
            let ex = t.exp(sl);
            let sc = t.scale(ex, 0.7);
            let c = t.mul_const(sc, Array1::from(vec![0.5, -1.2, 0.9]));
            let d = t.sub(c, sl);
            let part = t.sum(d);
            let nll = t.nll_loss(h, 1);
            let total = t.add(part, nll);
            t.scalar(total)
        };

        let mut grads = GradStore::zeros_like(&ps);
        {
            let mut t = Tape::new(&ps);
            let x = t.constant(Array1::from(vec![0.3, -0.2, 0.5, 0.1]));
            let h = t.matvec(w, x);
            let h = t.add_bias(b, h);
            let s = t.sigmoid(h);
            let th = t.tanh(h);
            let prod = t.mul(s, th);
            let emb = t.embed(e, 2);
            let cat = t.concat(&[prod, emb]);
            let sl = t.slice(cat, 1, 3);
            let ex = t.exp(sl);
            let sc = t.scale(ex, 0.7);
            let c = t.mul_const(sc, Array1::from(vec![0.5, -1.2, 0.9]));
            let d = t.sub(c, sl);
            let part = t.sum(d);
            let nll = t.nll_loss(h, 1);
            let total = t.add(part, nll);
            t.backward(total, &mut grads);
        }

        let h = 1e-6;
        let mut ps2 = ps.clone();
        for k in 0..ps.scalar_count() {
            let orig = ps2.get_flat(k);
            ps2.set_flat(k, orig + h);
            let up = loss(&ps2);
            ps2.set_flat(k, orig - h);
            let dn = loss(&ps2);
            ps2.set_flat(k, orig);
            let fd = (up - dn) / (2.0 * h);
            let an = grads.get_flat(k);
            assert!(
                (fd - an).abs() <= 1e-6 * (1.0 + fd.abs().max(an.abs())),
                "param {k}: fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn nll_matches_direct_log_softmax() {
        let ps = ParamStore::new();
        let mut t = Tape::new(&ps);
        let logits = t.constant(Array1::from(vec![1.0, 2.0, -0.5]));
        let nll = t.nll_loss(logits, 0);
        let z: f64 = [1.0f64, 2.0, -0.5].iter().map(|x| x.exp()).sum();
        let expect = -(1.0f64.exp() / z).ln();
        assert!((t.scalar(nll) - expect).abs() < 1e-12);
    }

    #[test]
    fn shared_subexpression_accumulates_both_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamStore::new();
        let b = ps.add_vector("b", 2, Init::Uniform(0.4), &mut rng);
        let mut grads = GradStore::zeros_like(&ps);
        let mut t = Tape::new(&ps);
        let x = t.zeros(2);
        let v = t.add_bias(b, x);
        // loss = Σ (v ⊙ v) → d/db = 2 b
        let sq = t.mul(v, v);
        let loss = t.sum(sq);
        t.backward(loss, &mut grads);
        let bv = ps.vec(b);
        for i in 0..2 {
            assert!((grads.vec_mut(b)[i] - 2.0 * bv[i]).abs() < 1e-12);
        }
    }
}
