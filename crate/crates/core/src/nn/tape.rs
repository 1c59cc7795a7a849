//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are read
//! in place from a [`ParamStore`]; [`Tape::backward`] returns their gradients.

use ndarray::{s, Array2, Axis, Zip};

pub type Mat = Array2<f64>;

/// Named learnable tensors (all stored as 2-D matrices).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub values: Vec<Mat>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn zeros_like(&self) -> Vec<Mat> {
        self.values.iter().map(|v| Mat::zeros(v.raw_dim())).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Mat, inv_std: Vec<f64> },
    Softmax(Var),
    Dropout { x: Var, mask: Mat },
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    GatherRows { table: Var, idx: Vec<usize> },
    MeanRows(Var),
    SoftCrossEntropy { logits: Var, targets: Vec<(usize, usize, f64)>, probs: Mat, weight: f64 },
    Sum(Vec<Var>),
}

struct Node {
    value: Option<Mat>,
    op: Op,
}

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { params, nodes: Vec::with_capacity(512) }
    }

    pub fn value(&self, v: Var) -> &Mat {
        match &self.nodes[v.0] {
            Node { op: Op::Param(pid), .. } => &self.params.values[*pid],
            Node { value: Some(m), .. } => m,
            _ => unreachable!("non-param node without value"),
        }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, m: Mat) -> Var {
        self.push(m, Op::Input)
    }

    pub fn param(&mut self, pid: usize) -> Var {
        self.nodes.push(Node { value: None, op: Op::Param(pid) });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulBT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    /// tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()));
        self.push(v, Op::Gelu(a))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| v * is);
            inv_std.push(is);
        }
        let out = &xhat * self.value(gamma) + self.value(beta);
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        self.push(v, Op::Softmax(a))
    }

    /// Multiplies by a fixed mask (already scaled by `1/(1-p)`).
    pub fn dropout(&mut self, a: Var, mask: Mat) -> Var {
        let v = self.value(a) * &mask;
        self.push(v, Op::Dropout { x: a, mask })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols { x: a, start })
    }

    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Var {
        let t = self.value(table);
        let mut v = Mat::zeros((idx.len(), t.ncols()));
        for (i, &r) in idx.iter().enumerate() {
            v.row_mut(i).assign(&t.row(r));
        }
        self.push(v, Op::GatherRows { table, idx: idx.to_vec() })
    }

    /// `1×n` mean over rows.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).mean_axis(Axis(0)).expect("nonempty").insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a))
    }

    /// `weight · Σ −t·log softmax(logits)` with softmax taken over consecutive
    /// column groups of width `group`. Targets are sparse `(row, col, t)`
    /// entries; the entries of each group must sum to one.
    pub fn soft_cross_entropy(&mut self, logits: Var, targets: Vec<(usize, usize, f64)>, group: usize, weight: f64) -> Var {
        let l = self.value(logits);
        assert_eq!(l.ncols() % group, 0);
        let groups = l.ncols() / group;
        let mut lse = Vec::with_capacity(l.nrows() * groups);
        let mut probs = l.clone();
        for mut row in probs.rows_mut() {
            let slice = row.as_slice_mut().expect("contiguous rows");
            for chunk in slice.chunks_mut(group) {
                let m = chunk.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let mut z = 0.0;
                for x in chunk.iter_mut() {
                    *x = (*x - m).exp();
                    z += *x;
                }
                let inv = 1.0 / z;
                for x in chunk.iter_mut() {
                    *x *= inv;
                }
                lse.push(m + z.ln());
            }
        }
        let mut loss = 0.0;
        for &(r, c, t) in &targets {
            loss -= t * (l[[r, c]] - lse[r * groups + c / group]);
        }
        let v = Mat::from_elem((1, 1), weight * loss);
        self.push(v, Op::SoftCrossEntropy { logits, targets, probs, weight })
    }

    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let mut acc = Mat::zeros(self.value(parts[0]).raw_dim());
        for &p in parts {
            acc += self.value(p);
        }
        self.push(acc, Op::Sum(parts.to_vec()))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    /// Gradients of the scalar `root` with respect to every parameter; entries
    /// for parameters the graph never touched are `None`.
    pub fn backward(&self, root: Var) -> Vec<Option<Mat>> {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::ones((1, 1)));
        let mut pgrads: Vec<Option<Mat>> = vec![None; self.params.len()];

        fn acc(slot: &mut Option<Mat>, g: Mat) {
            match slot {
                Some(s) => *s += &g,
                None => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(pid) => acc(&mut pgrads[*pid], g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads[a.0], ga);
                    acc(&mut grads[b.0], gb);
                }
                Op::MatMulBT(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut grads[a.0], ga);
                    acc(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads[b.0], g.clone());
                    acc(&mut grads[a.0], g);
                }
                Op::AddRow(a, row) => {
                    acc(&mut grads[row.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads[a.0], g);
                }
                Op::Scale(a, c) => acc(&mut grads[a.0], g * *c),
                Op::Gelu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|gv, &x| {
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let t = u.tanh();
                        let d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        *gv *= d;
                    });
                    acc(&mut grads[a.0], ga);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gam = self.value(*gamma);
                    acc(&mut grads[gamma.0], (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads[beta.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let gxhat = &g * gam;
                    let n = xhat.ncols() as f64;
                    let mut gx = Mat::zeros(xhat.raw_dim());
                    for r in 0..xhat.nrows() {
                        let gh = gxhat.row(r);
                        let xh = xhat.row(r);
                        let s1 = gh.sum();
                        let s2 = gh.dot(&xh);
                        let is = inv_std[r];
                        let mut out = gx.row_mut(r);
                        for k in 0..xhat.ncols() {
                            out[k] = is / n * (n * gh[k] - s1 - xh[k] * s2);
                        }
                    }
                    acc(&mut grads[x.0], gx);
                }
                Op::Softmax(a) => {
                    let y = self.nodes[i].value.as_ref().expect("value");
                    let mut ga = g;
                    for (mut gr, yr) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot = gr.dot(&yr);
                        Zip::from(&mut gr).and(&yr).for_each(|gv, &yv| *gv = yv * (*gv - dot));
                    }
                    acc(&mut grads[a.0], ga);
                }
                Op::Dropout { x, mask } => acc(&mut grads[x.0], g * mask),
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut grads[p.0], g.slice(s![.., off..off + w]).to_owned());
                        off += w;
                    }
                }
                Op::SliceCols { x, start } => {
                    let src = self.value(*x);
                    let mut gx = Mat::zeros(src.raw_dim());
                    gx.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads[x.0], gx);
                }
                Op::GatherRows { table, idx } => {
                    let mut gt = Mat::zeros(self.value(*table).raw_dim());
                    for (r, &t) in idx.iter().enumerate() {
                        let mut row = gt.row_mut(t);
                        row += &g.row(r);
                    }
                    acc(&mut grads[table.0], gt);
                }
                Op::MeanRows(a) => {
                    let m = self.value(*a).nrows();
                    let row = g.row(0).to_owned() / m as f64;
                    let ga = Mat::from_shape_fn((m, row.len()), |(_, c)| row[c]);
                    acc(&mut grads[a.0], ga);
                }
                Op::SoftCrossEntropy { logits, targets, probs, weight } => {
                    let scale = g[[0, 0]] * weight;
                    let mut gl = probs * scale;
                    for &(r, c, t) in targets {
                        gl[[r, c]] -= scale * t;
                    }
                    acc(&mut grads[logits.0], gl);
                }
                Op::Sum(parts) => {
                    for p in parts {
                        acc(&mut grads[p.0], g.clone());
                    }
                }
            }
        }
        pgrads
    }
}
