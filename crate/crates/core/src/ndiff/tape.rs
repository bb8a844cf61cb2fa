//! Reverse-mode differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so insertion order is a
//! topological order. `backward` walks the tape strictly in reverse, which
//! fixes the order in which adjoint contributions are accumulated.

use crate::error::{Error, Result};
use crate::ndiff::tensor::{gemm, Tensor};
use crate::scalar::{exact_mean, exact_sum, Scalar};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias { a: Var, bias: Var },
    Scale { a: Var, factor: T },
    Sin(Var),
    Relu(Var),
    MeanRows(Var),
    SumAll(Var),
    Slice { a: Var, offset: usize },
    Reshape(Var),
    Concat(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    adjoints: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.adjoints.get(v.0).and_then(|g| g.as_ref())
    }

    /// Adjoint of `v`, or zeros shaped like `like` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor<T>) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape().to_vec()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.adjoints.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    /// Leaf whose adjoint is reported by `backward`.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that receives no adjoint.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// `a x b` or, with `trans_b`, `a x b^T`. A vector operand on the left is
    /// treated as a single row.
    pub fn matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let out = gemm(self.value(a), false, self.value(b), trans_b)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(out, Op::MatMul { a, b, trans_b }, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), tracked))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), tracked))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), tracked))
    }

    /// Adds a length-`c` bias to every row of an `r x c` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.value(a).dims2()?;
        let b = self.value(bias);
        if b.len() != cols {
            return Err(Error::Dimension(format!(
                "bias of length {} for {cols} columns",
                b.len()
            )));
        }
        let mut out = self.value(a).clone();
        let bias_data = b.data().to_vec();
        for r in 0..rows {
            for (o, &bv) in out.data_mut()[r * cols..(r + 1) * cols]
                .iter_mut()
                .zip(&bias_data)
            {
                *o = *o + bv;
            }
        }
        let tracked = self.tracked(&[a, bias]);
        Ok(self.push(out, Op::AddBias { a, bias }, tracked))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let out = self.value(a).map(|x| x * factor);
        let tracked = self.tracked(&[a]);
        self.push(out, Op::Scale { a, factor }, tracked)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.sin());
        let tracked = self.tracked(&[a]);
        self.push(out, Op::Sin(a), tracked)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        let tracked = self.tracked(&[a]);
        self.push(out, Op::Relu(a), tracked)
    }

    /// Column means of an `I x c` matrix, accumulated exactly in `f64`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let out = mean_rows(self.value(a))?;
        let tracked = self.tracked(&[a]);
        Ok(self.push(out, Op::MeanRows(a), tracked))
    }

    /// Sum of every entry as a rank-0 tensor, accumulated exactly in `f64`.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = exact_sum(self.value(a).data().iter().map(|v| v.as_f64()));
        let tracked = self.tracked(&[a]);
        self.push(Tensor::scalar(T::from_f64_lossy(s)), Op::SumAll(a), tracked)
    }

    /// Contiguous window `[offset, offset + prod(shape))` of the flattened
    /// input, viewed with `shape`.
    pub fn slice(&mut self, a: Var, offset: usize, shape: Vec<usize>) -> Result<Var> {
        let len: usize = shape.iter().product();
        let src = self.value(a);
        if offset + len > src.len() {
            return Err(Error::Dimension(format!(
                "slice [{offset}, {}) out of bounds for {} elements",
                offset + len,
                src.len()
            )));
        }
        let out = Tensor::new(shape, src.data()[offset..offset + len].to_vec())?;
        let tracked = self.tracked(&[a]);
        Ok(self.push(out, Op::Slice { a, offset }, tracked))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        let tracked = self.tracked(&[a]);
        Ok(self.push(out, Op::Reshape(a), tracked))
    }

    /// Flat concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let data: Vec<T> = parts
            .iter()
            .flat_map(|&p| self.value(p).data().iter().copied())
            .collect();
        let tracked = self.tracked(parts);
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), tracked)
    }

    /// Propagates adjoints from a scalar `root` back through the tape.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        if self.value(root).len() != 1 {
            return Err(Error::Dimension(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut adj: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        adj[root.0] = Some(Tensor::new(
            self.value(root).shape().to_vec(),
            vec![T::one()],
        )?);

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul { a, b, trans_b } => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    if self.nodes[a.0].tracked {
                        let ga = gemm(&g, false, bv, !*trans_b)?.reshaped(av.shape().to_vec())?;
                        accumulate(&mut adj, *a, ga);
                    }
                    if self.nodes[b.0].tracked {
                        let a2 = av.clone().reshaped(vec![g.dims2()?.0, av.len() / g.dims2()?.0])?;
                        let gb = if *trans_b {
                            gemm(&g, true, &a2, false)?
                        } else {
                            gemm(&a2, true, &g, false)?
                        };
                        accumulate(&mut adj, *b, gb.reshaped(bv.shape().to_vec())?);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y)?;
                    let gb = g.zip_map(self.value(*a), |x, y| x * y)?;
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::AddBias { a, bias } => {
                    let (rows, cols) = g.dims2()?;
                    let mut gb = vec![T::zero(); cols];
                    for r in 0..rows {
                        for (acc, &v) in gb.iter_mut().zip(g.row(r)) {
                            *acc = *acc + v;
                        }
                    }
                    let gb = Tensor::new(self.value(*bias).shape().to_vec(), gb)?;
                    accumulate(&mut adj, *bias, gb);
                    accumulate(&mut adj, *a, g);
                }
                Op::Scale { a, factor } => {
                    let f = *factor;
                    accumulate(&mut adj, *a, g.map(|x| x * f));
                }
                Op::Sin(a) => {
                    let ga = g.zip_map(self.value(*a), |x, u| x * u.cos())?;
                    accumulate(&mut adj, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |x, u| if u > T::zero() { x } else { T::zero() })?;
                    accumulate(&mut adj, *a, ga);
                }
                Op::MeanRows(a) => {
                    let (rows, cols) = self.value(*a).dims2()?;
                    let inv = T::from_f64_lossy(1.0 / rows as f64);
                    let scaled: Vec<T> = g.data().iter().map(|&x| x * inv).collect();
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        data.extend_from_slice(&scaled);
                    }
                    accumulate(&mut adj, *a, Tensor::new(vec![rows, cols], data)?);
                }
                Op::SumAll(a) => {
                    let gv = g.data()[0];
                    let shape = self.value(*a).shape().to_vec();
                    let n = self.value(*a).len();
                    accumulate(&mut adj, *a, Tensor::new(shape, vec![gv; n])?);
                }
                Op::Slice { a, offset } => {
                    let src = self.value(*a);
                    let mut full = Tensor::zeros(src.shape().to_vec());
                    full.data_mut()[*offset..*offset + g.len()].copy_from_slice(g.data());
                    accumulate(&mut adj, *a, full);
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    accumulate(&mut adj, *a, g.reshaped(shape)?);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let piece = Tensor::new(
                            pv.shape().to_vec(),
                            g.data()[off..off + pv.len()].to_vec(),
                        )?;
                        off += pv.len();
                        accumulate(&mut adj, p, piece);
                    }
                }
            }
        }

        // Only leaves keep their adjoints; intermediate ones were consumed.
        for (i, node) in self.nodes.iter().enumerate() {
            if !(matches!(node.op, Op::Leaf) && node.tracked) {
                adj[i] = None;
            }
        }
        Ok(Gradients { adjoints: adj })
    }
}

fn accumulate<T: Scalar>(adj: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Column means of a matrix with exact `f64` accumulation.
pub fn mean_rows<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, cols) = match a.shape() {
        [r, c] => (*r, *c),
        other => {
            return Err(Error::Dimension(format!(
                "mean_rows expects a matrix, got {other:?}"
            )))
        }
    };
    if rows == 0 {
        return Err(Error::EmptySet("mean over zero rows".into()));
    }
    let data = a.data();
    let mut column = Vec::with_capacity(rows);
    let out = (0..cols)
        .map(|c| {
            column.clear();
            column.extend((0..rows).map(|r| data[r * cols + c].as_f64()));
            exact_mean(&column)
        })
        .collect();
    Ok(Tensor::vector(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(rows, cols, v).unwrap()
    }

    #[test]
    fn product_rule() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let y = tape.param(Tensor::scalar(3.0));
        let z = tape.mul(x, y).unwrap();
        let g = tape.backward(z).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[3.0]);
        assert_eq!(g.get(y).unwrap().data(), &[2.0]);
    }

    #[test]
    fn sin_of_scaled_input_at_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(0.0));
        let s = tape.scale(x, 30.0);
        let y = tape.sin(s);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[30.0]);
    }

    #[test]
    fn matmul_values() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(t(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.constant(t(2, 1, &[1.0, 1.0]));
        let c = tape.matmul(a, b, false).unwrap();
        assert_eq!(tape.value(c).data(), &[3.0, 7.0]);

        let eye = tape.constant(t(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let v = tape.constant(t(2, 1, &[5.0, -2.0]));
        let iv = tape.matmul(eye, v, false).unwrap();
        assert_eq!(tape.value(iv).data(), &[5.0, -2.0]);

        let bad = tape.constant(t(3, 1, &[1.0, 1.0, 1.0]));
        assert!(matches!(tape.matmul(a, bad, false), Err(Error::Dimension(_))));
    }

    #[test]
    fn elementwise_basics() {
        let mut tape = Tape::<f32>::new();
        let z = tape.constant(Tensor::zeros(vec![3]));
        let s = tape.sin(z);
        assert_eq!(tape.value(s).data(), &[0.0; 3]);
        let x = tape.constant(Tensor::vector(vec![-1.0, 2.0]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 2.0]);
        let y = tape.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(tape.add(x, y).is_err());
    }

    #[test]
    fn scaled_sine_matches_scalar_loop() {
        let xs = [0.0f32, 0.013, -0.2, 0.5, 0.77];
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::vector(xs.to_vec()));
        let s = tape.scale(x, 30.0);
        let y = tape.sin(s);
        for (got, &xv) in tape.value(y).data().iter().zip(&xs) {
            assert_eq!(*got, (xv * 30.0).sin());
        }
    }

    #[test]
    fn mean_rows_examples() {
        let mut tape = Tape::<f64>::new();
        let one = tape.constant(t(1, 3, &[1.0, 2.0, 3.0]));
        let m1 = tape.mean_rows(one).unwrap();
        assert_eq!(tape.value(m1).data(), &[1.0, 2.0, 3.0]);
        let a = tape.constant(t(2, 2, &[1.0, 3.0, 3.0, 5.0]));
        let m = tape.mean_rows(a).unwrap();
        assert_eq!(tape.value(m).data(), &[2.0, 4.0]);
        let empty = tape.constant(Tensor::zeros(vec![0, 2]));
        assert!(matches!(tape.mean_rows(empty), Err(Error::EmptySet(_))));
    }

    #[test]
    fn mean_rows_gradient_spreads_evenly() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(t(4, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]));
        let m = tape.mean_rows(a).unwrap();
        let s = tape.sum_all(m);
        let g = tape.backward(s).unwrap();
        assert!(g.get(a).unwrap().data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn constants_get_no_adjoint() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(Tensor::scalar(2.0));
        let c = tape.constant(Tensor::scalar(5.0));
        let p = tape.mul(a, c).unwrap();
        let g = tape.backward(p).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(a).unwrap().data(), &[5.0]);
    }
}
