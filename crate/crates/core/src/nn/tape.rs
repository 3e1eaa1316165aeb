//! Reverse-mode automatic differentiation over dense matrices.
//!
//! The backward pass is itself recorded on the tape, so a gradient can be
//! differentiated again (gradient-of-gradient). Every value is a 2-D
//! matrix; scalars are 1×1.

use ndarray::{Array2, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Exp(Var),
    Log(Var),
    Recip(Var),
    Relu(Var),
    Clamp(Var, f64, f64),
    SumAll(Var),
    /// n×m → n×1
    SumCols(Var),
    /// n×m → 1×m
    SumRows(Var),
    /// n×1 → n×m
    BroadcastCol(Var),
    /// 1×m → n×m
    BroadcastRow(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.dim(), (1, 1), "not a scalar");
        val[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable input.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant; gradients never flow into it.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Mul(a, b), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        let rg = self.rg(a);
        self.push(v, Op::Neg(a), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, c), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::MatMul(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        let rg = self.rg(a);
        self.push(v, Op::Transpose(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        let rg = self.rg(a);
        self.push(v, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::ln);
        let rg = self.rg(a);
        self.push(v, Op::Log(a), rg)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::recip);
        let rg = self.rg(a);
        self.push(v, Op::Recip(a), rg)
    }

    /// max(x, 0); the derivative at exactly 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg)
    }

    /// Elementwise clamp to [lo, hi]; zero derivative outside the open interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        let rg = self.rg(a);
        self.push(v, Op::Clamp(a, lo, hi), rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(v, Op::SumAll(a), rg)
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(v, Op::SumCols(a), rg)
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        let rg = self.rg(a);
        self.push(v, Op::SumRows(a), rg)
    }

    pub fn broadcast_col(&mut self, a: Var, m: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.ncols(), 1, "broadcast_col needs an n×1 input");
        let v = src
            .broadcast((src.nrows(), m))
            .expect("column broadcast")
            .to_owned();
        let rg = self.rg(a);
        self.push(v, Op::BroadcastCol(a), rg)
    }

    pub fn broadcast_row(&mut self, a: Var, n: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), 1, "broadcast_row needs a 1×m input");
        let v = src
            .broadcast((n, src.ncols()))
            .expect("row broadcast")
            .to_owned();
        let rg = self.rg(a);
        self.push(v, Op::BroadcastRow(a), rg)
    }

    /// Row-wise softmax. The row maximum is subtracted as a constant, which
    /// leaves both the value and its derivatives unchanged.
    pub fn softmax_rows(&mut self, z: Var) -> Var {
        let zv = self.value(z);
        let m = zv.ncols();
        let maxes = zv
            .map_axis(Axis(1), |r| r.fold(f64::NEG_INFINITY, |a, &b| a.max(b)))
            .insert_axis(Axis(1));
        let shift = self.constant(maxes);
        let shift = self.broadcast_col(shift, m);
        let shifted = self.sub(z, shift);
        let e = self.exp(shifted);
        let s = self.sum_cols(e);
        let inv = self.recip(s);
        let inv = self.broadcast_col(inv, m);
        self.mul(e, inv)
    }

    fn accumulate(&mut self, grads: &mut [Option<Var>], target: Var, g: Var) {
        if !self.rg(target) {
            return;
        }
        grads[target.0] = Some(match grads[target.0] {
            Some(prev) => self.add(prev, g),
            None => g,
        });
    }

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    ///
    /// The returned gradients are tape variables and can be differentiated
    /// again. Inputs that `output` does not depend on get a zero constant.
    pub fn backward(&mut self, output: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(self.value(output).dim(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Var>> = vec![None; output.0 + 1];
        let seed = self.constant(Array2::ones((1, 1)));
        grads[output.0] = Some(seed);

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i] else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let node = Var(i);
            match self.nodes[i].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, a, g);
                    self.accumulate(&mut grads, b, g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, a, g);
                    if self.rg(b) {
                        let ng = self.neg(g);
                        self.accumulate(&mut grads, b, ng);
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(a) {
                        let ga = self.mul(g, b);
                        self.accumulate(&mut grads, a, ga);
                    }
                    if self.rg(b) {
                        let gb = self.mul(g, a);
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::Neg(a) => {
                    let ga = self.neg(g);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Scale(a, c) => {
                    let ga = self.scale(g, c);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::MatMul(a, b) => {
                    if self.rg(a) {
                        let bt = self.transpose(b);
                        let ga = self.matmul(g, bt);
                        self.accumulate(&mut grads, a, ga);
                    }
                    if self.rg(b) {
                        let at = self.transpose(a);
                        let gb = self.matmul(at, g);
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::Transpose(a) => {
                    let ga = self.transpose(g);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Exp(a) => {
                    let ga = self.mul(g, node);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Log(a) => {
                    let inv = self.recip(a);
                    let ga = self.mul(g, inv);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Recip(a) => {
                    let sq = self.mul(node, node);
                    let t = self.mul(g, sq);
                    let ga = self.neg(t);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Relu(a) => {
                    let mask = self.value(a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    let mask = self.constant(mask);
                    let ga = self.mul(g, mask);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let mask = self
                        .value(a)
                        .mapv(|x| if x > lo && x < hi { 1.0 } else { 0.0 });
                    let mask = self.constant(mask);
                    let ga = self.mul(g, mask);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::SumAll(a) => {
                    let (n, m) = self.value(a).dim();
                    let row = self.broadcast_col(g, m);
                    let ga = self.broadcast_row(row, n);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::SumCols(a) => {
                    let m = self.value(a).ncols();
                    let ga = self.broadcast_col(g, m);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::SumRows(a) => {
                    let n = self.value(a).nrows();
                    let ga = self.broadcast_row(g, n);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::BroadcastCol(a) => {
                    let ga = self.sum_cols(g);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::BroadcastRow(a) => {
                    let ga = self.sum_rows(g);
                    self.accumulate(&mut grads, a, ga);
                }
            }
        }

        wrt.iter()
            .map(|&w| match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let zeros = Array2::zeros(self.value(w).dim());
                    self.constant(zeros)
                }
            })
            .collect()
    }
}
