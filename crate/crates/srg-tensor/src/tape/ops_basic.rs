//! Elementwise, matrix, reduction, and wiring operations.

use super::{Tape, Var};
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Reduction kind for row/column reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Mean,
    Max,
}

impl Tape {
    fn check_same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TensorError::InvalidArgument {
                op,
                detail: format!("operand shapes differ: {sa:?} vs {sb:?}"),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("add", a, b)?;
        let out = Tensor::from_fn(self.value(a).shape(), |i| {
            self.value(a).data()[i] + self.value(b).data()[i]
        });
        let (na, nb) = (self.needs_grad(a), self.needs_grad(b));
        Ok(self.push_op(
            out,
            na || nb,
            Box::new(move |_, g| {
                let mut grads = Vec::new();
                if na {
                    grads.push((a, g.clone()));
                }
                if nb {
                    grads.push((b, g.clone()));
                }
                grads
            }),
        ))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same_shape("mul", a, b)?;
        let out = Tensor::from_fn(self.value(a).shape(), |i| {
            self.value(a).data()[i] * self.value(b).data()[i]
        });
        let (na, nb) = (self.needs_grad(a), self.needs_grad(b));
        Ok(self.push_op(
            out,
            na || nb,
            Box::new(move |tape, g| {
                let mut grads = Vec::new();
                if na {
                    let other = tape.value(b);
                    grads.push((
                        a,
                        Tensor::from_fn(g.shape(), |i| g.data()[i] * other.data()[i]),
                    ));
                }
                if nb {
                    let other = tape.value(a);
                    grads.push((
                        b,
                        Tensor::from_fn(g.shape(), |i| g.data()[i] * other.data()[i]),
                    ));
                }
                grads
            }),
        ))
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Var {
        let out = Tensor::from_fn(self.value(a).shape(), |i| self.value(a).data()[i] * c);
        let na = self.needs_grad(a);
        self.push_op(
            out,
            na,
            Box::new(move |_, g| vec![(a, Tensor::from_fn(g.shape(), |i| g.data()[i] * c))]),
        )
    }

    pub fn add_scalar(&mut self, a: Var, c: f32) -> Var {
        let out = Tensor::from_fn(self.value(a).shape(), |i| self.value(a).data()[i] + c);
        let na = self.needs_grad(a);
        self.push_op(out, na, Box::new(move |_, g| vec![(a, g.clone())]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = Tensor::from_fn(self.value(a).shape(), |i| self.value(a).data()[i].max(0.0));
        let na = self.needs_grad(a);
        self.push_op(
            out,
            na,
            Box::new(move |tape, g| {
                let x = tape.value(a);
                vec![(
                    a,
                    Tensor::from_fn(g.shape(), |i| {
                        if x.data()[i] > 0.0 {
                            g.data()[i]
                        } else {
                            0.0
                        }
                    }),
                )]
            }),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = Tensor::from_fn(self.value(a).shape(), |i| {
            let x = self.value(a).data()[i];
            1.0 / (1.0 + (-x).exp())
        });
        let na = self.needs_grad(a);
        let id = self.push_op(
            out,
            na,
            Box::new(move |_, _| unreachable!("patched below")),
        );
        // Backward needs the op's own output; capture the node id.
        if na {
            let rule: super::BackwardFn = Box::new(move |tape, g| {
                let s = tape.value(id);
                vec![(
                    a,
                    Tensor::from_fn(g.shape(), |i| {
                        let si = s.data()[i];
                        g.data()[i] * si * (1.0 - si)
                    }),
                )]
            });
            self.nodes[id.0].backward = Some(rule);
        }
        id
    }

    /// Matrix product `[M,K] x [K,N] -> [M,N]` with f64 accumulation.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = self.value(a).dims2("matmul")?;
        let (kb, n) = self.value(b).dims2("matmul")?;
        if ka != kb {
            return Err(TensorError::DimMismatch {
                op: "matmul",
                axis: "inner",
                expected: ka,
                got: kb,
            });
        }
        let out = matmul_raw(self.value(a), self.value(b), m, ka, n);
        let (na, nb) = (self.needs_grad(a), self.needs_grad(b));
        Ok(self.push_op(
            out,
            na || nb,
            Box::new(move |tape, g| {
                let mut grads = Vec::new();
                if na {
                    // dA = G · Bᵀ
                    let bt = transpose_raw(tape.value(b));
                    grads.push((a, matmul_raw(g, &bt, m, n, ka)));
                }
                if nb {
                    // dB = Aᵀ · G
                    let at = transpose_raw(tape.value(a));
                    grads.push((b, matmul_raw(&at, g, ka, m, n)));
                }
                grads
            }),
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.value(a).dims2("transpose")?;
        let out = transpose_raw(self.value(a));
        let na = self.needs_grad(a);
        Ok(self.push_op(
            out,
            na,
            Box::new(move |_, g| vec![(a, transpose_raw(g))]),
        ))
    }

    /// Affine map of a vector: `w [M,N] · x [N] (+ bias [M]) -> [M]`.
    pub fn linear(&mut self, w: Var, x: Var, bias: Option<Var>) -> Result<Var> {
        let (m, n) = self.value(w).dims2("linear")?;
        let xn = self.value(x).numel();
        if self.value(x).shape().len() != 1 || xn != n {
            return Err(TensorError::DimMismatch {
                op: "linear",
                axis: "input features",
                expected: n,
                got: xn,
            });
        }
        if let Some(b) = bias {
            if self.value(b).shape() != [m] {
                return Err(TensorError::DimMismatch {
                    op: "linear",
                    axis: "bias",
                    expected: m,
                    got: self.value(b).numel(),
                });
            }
        }
        let mut out = vec![0.0f32; m];
        for r in 0..m {
            let mut acc = 0.0f64;
            for c in 0..n {
                acc += self.value(w).data()[r * n + c] as f64 * self.value(x).data()[c] as f64;
            }
            if let Some(b) = bias {
                acc += self.value(b).data()[r] as f64;
            }
            out[r] = acc as f32;
        }
        let nw = self.needs_grad(w);
        let nx = self.needs_grad(x);
        let nb = bias.map(|b| self.needs_grad(b)).unwrap_or(false);
        Ok(self.push_op(
            Tensor::new(vec![m], out).expect("shape"),
            nw || nx || nb,
            Box::new(move |tape, g| {
                let mut grads = Vec::new();
                if nw {
                    let x_val = tape.value(x);
                    grads.push((
                        w,
                        Tensor::from_fn(&[m, n], |i| g.data()[i / n] * x_val.data()[i % n]),
                    ));
                }
                if nx {
                    let w_val = tape.value(w);
                    let mut dx = vec![0.0f32; n];
                    for c in 0..n {
                        let mut acc = 0.0f64;
                        for r in 0..m {
                            acc += w_val.data()[r * n + c] as f64 * g.data()[r] as f64;
                        }
                        dx[c] = acc as f32;
                    }
                    grads.push((x, Tensor::new(vec![n], dx).expect("shape")));
                }
                if nb {
                    grads.push((bias.unwrap(), g.clone()));
                }
                grads
            }),
        ))
    }

    /// Add a per-row bias: `x [C,T] + b [C]` broadcast over time.
    pub fn add_rows(&mut self, x: Var, b: Var) -> Result<Var> {
        let (c, t) = self.value(x).dims2("add_rows")?;
        if self.value(b).shape() != [c] {
            return Err(TensorError::DimMismatch {
                op: "add_rows",
                axis: "rows",
                expected: c,
                got: self.value(b).numel(),
            });
        }
        let out = Tensor::from_fn(&[c, t], |i| {
            self.value(x).data()[i] + self.value(b).data()[i / t]
        });
        let (nx, nb) = (self.needs_grad(x), self.needs_grad(b));
        Ok(self.push_op(
            out,
            nx || nb,
            Box::new(move |_, g| {
                let mut grads = Vec::new();
                if nx {
                    grads.push((x, g.clone()));
                }
                if nb {
                    let mut db = vec![0.0f32; c];
                    for (r, slot) in db.iter_mut().enumerate() {
                        let mut acc = 0.0f64;
                        for j in 0..t {
                            acc += g.data()[r * t + j] as f64;
                        }
                        *slot = acc as f32;
                    }
                    grads.push((b, Tensor::new(vec![c], db).expect("shape")));
                }
                grads
            }),
        ))
    }

    /// Scale each row of `x [C,T]` by `s [C]`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (c, t) = self.value(x).dims2("scale_rows")?;
        if self.value(s).shape() != [c] {
            return Err(TensorError::DimMismatch {
                op: "scale_rows",
                axis: "rows",
                expected: c,
                got: self.value(s).numel(),
            });
        }
        let out = Tensor::from_fn(&[c, t], |i| {
            self.value(x).data()[i] * self.value(s).data()[i / t]
        });
        let (nx, ns) = (self.needs_grad(x), self.needs_grad(s));
        Ok(self.push_op(
            out,
            nx || ns,
            Box::new(move |tape, g| {
                let mut grads = Vec::new();
                if nx {
                    let sv = tape.value(s);
                    grads.push((
                        x,
                        Tensor::from_fn(g.shape(), |i| g.data()[i] * sv.data()[i / t]),
                    ));
                }
                if ns {
                    let xv = tape.value(x);
                    let mut ds = vec![0.0f32; c];
                    for (r, slot) in ds.iter_mut().enumerate() {
                        let mut acc = 0.0f64;
                        for j in 0..t {
                            acc += g.data()[r * t + j] as f64 * xv.data()[r * t + j] as f64;
                        }
                        *slot = acc as f32;
                    }
                    grads.push((s, Tensor::new(vec![c], ds).expect("shape")));
                }
                grads
            }),
        ))
    }

    /// Scale each column of `x [C,T]` by `s [T]`.
    pub fn scale_cols(&mut self, x: Var, s: Var) -> Result<Var> {
        let (c, t) = self.value(x).dims2("scale_cols")?;
        if self.value(s).shape() != [t] {
            return Err(TensorError::DimMismatch {
                op: "scale_cols",
                axis: "columns",
                expected: t,
                got: self.value(s).numel(),
            });
        }
        let out = Tensor::from_fn(&[c, t], |i| {
            self.value(x).data()[i] * self.value(s).data()[i % t]
        });
        let (nx, ns) = (self.needs_grad(x), self.needs_grad(s));
        Ok(self.push_op(
            out,
            nx || ns,
            Box::new(move |tape, g| {
                let mut grads = Vec::new();
                if nx {
                    let sv = tape.value(s);
                    grads.push((
                        x,
                        Tensor::from_fn(g.shape(), |i| g.data()[i] * sv.data()[i % t]),
                    ));
                }
                if ns {
                    let xv = tape.value(x);
                    let mut ds = vec![0.0f32; t];
                    for (j, slot) in ds.iter_mut().enumerate() {
                        let mut acc = 0.0f64;
                        for r in 0..c {
                            acc += g.data()[r * t + j] as f64 * xv.data()[r * t + j] as f64;
                        }
                        *slot = acc as f32;
                    }
                    grads.push((s, Tensor::new(vec![t], ds).expect("shape")));
                }
                grads
            }),
        ))
    }

    /// Reduce `x [C,T]` over time, producing `[C]`.
    pub fn reduce_rows(&mut self, x: Var, kind: Reduce) -> Result<Var> {
        let (c, t) = self.value(x).dims2("reduce_rows")?;
        let data = self.value(x).data();
        let mut out = vec![0.0f32; c];
        let mut arg = vec![0usize; c];
        for r in 0..c {
            match kind {
                Reduce::Mean => {
                    let mut acc = 0.0f64;
                    for j in 0..t {
                        acc += data[r * t + j] as f64;
                    }
                    out[r] = (acc / t as f64) as f32;
                }
                Reduce::Max => {
                    let (mut best, mut best_j) = (f32::NEG_INFINITY, 0);
                    for j in 0..t {
                        let v = data[r * t + j];
                        if v > best {
                            best = v;
                            best_j = j;
                        }
                    }
                    out[r] = best;
                    arg[r] = best_j;
                }
            }
        }
        let nx = self.needs_grad(x);
        Ok(self.push_op(
            Tensor::new(vec![c], out).expect("shape"),
            nx,
            Box::new(move |_, g| {
                let mut dx = Tensor::zeros(&[c, t]);
                match kind {
                    Reduce::Mean => {
                        for r in 0..c {
                            let share = g.data()[r] / t as f32;
                            for j in 0..t {
                                dx.data_mut()[r * t + j] = share;
                            }
                        }
                    }
                    Reduce::Max => {
                        for r in 0..c {
                            dx.data_mut()[r * t + arg[r]] = g.data()[r];
                        }
                    }
                }
                vec![(x, dx)]
            }),
        ))
    }

    /// Reduce `x [C,T]` over channels, producing `[T]`.
    pub fn reduce_cols(&mut self, x: Var, kind: Reduce) -> Result<Var> {
        let (c, t) = self.value(x).dims2("reduce_cols")?;
        let data = self.value(x).data();
        let mut out = vec![0.0f32; t];
        let mut arg = vec![0usize; t];
        for j in 0..t {
            match kind {
                Reduce::Mean => {
                    let mut acc = 0.0f64;
                    for r in 0..c {
                        acc += data[r * t + j] as f64;
                    }
                    out[j] = (acc / c as f64) as f32;
                }
                Reduce::Max => {
                    let (mut best, mut best_r) = (f32::NEG_INFINITY, 0);
                    for r in 0..c {
                        let v = data[r * t + j];
                        if v > best {
                            best = v;
                            best_r = r;
                        }
                    }
                    out[j] = best;
                    arg[j] = best_r;
                }
            }
        }
        let nx = self.needs_grad(x);
        Ok(self.push_op(
            Tensor::new(vec![t], out).expect("shape"),
            nx,
            Box::new(move |_, g| {
                let mut dx = Tensor::zeros(&[c, t]);
                match kind {
                    Reduce::Mean => {
                        for j in 0..t {
                            let share = g.data()[j] / c as f32;
                            for r in 0..c {
                                dx.data_mut()[r * t + j] = share;
                            }
                        }
                    }
                    Reduce::Max => {
                        for j in 0..t {
                            dx.data_mut()[arg[j] * t + j] = g.data()[j];
                        }
                    }
                }
                vec![(x, dx)]
            }),
        ))
    }

    /// Row-wise softmax of `x [N,W]`; every output row sums to 1.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (n, w) = self.value(x).dims2("softmax_rows")?;
        let data = self.value(x).data();
        let mut out = vec![0.0f32; n * w];
        for r in 0..n {
            let row = &data[r * w..(r + 1) * w];
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0f64;
            for j in 0..w {
                let e = (row[j] - max).exp();
                out[r * w + j] = e;
                sum += e as f64;
            }
            for j in 0..w {
                out[r * w + j] = (out[r * w + j] as f64 / sum) as f32;
            }
        }
        let nx = self.needs_grad(x);
        let id = self.push_op(
            Tensor::new(vec![n, w], out).expect("shape"),
            nx,
            Box::new(move |_, _| unreachable!("patched below")),
        );
        if nx {
            let rule: super::BackwardFn = Box::new(move |tape, g| {
                let s = tape.value(id);
                let mut dx = vec![0.0f32; n * w];
                for r in 0..n {
                    let mut dot = 0.0f64;
                    for j in 0..w {
                        dot += g.data()[r * w + j] as f64 * s.data()[r * w + j] as f64;
                    }
                    for j in 0..w {
                        let sj = s.data()[r * w + j] as f64;
                        dx[r * w + j] = (sj * (g.data()[r * w + j] as f64 - dot)) as f32;
                    }
                }
                vec![(x, Tensor::new(vec![n, w], dx).expect("shape"))]
            });
            self.nodes[id.0].backward = Some(rule);
        }
        Ok(id)
    }

    /// Concatenate rank-2 tensors along the channel (row) axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::InvalidArgument {
                op: "concat_rows",
                detail: "no inputs".into(),
            });
        }
        let (_, t0) = self.value(parts[0]).dims2("concat_rows")?;
        let mut rows = Vec::with_capacity(parts.len());
        let mut total = 0usize;
        for &p in parts {
            let (c, t) = self.value(p).dims2("concat_rows")?;
            if t != t0 {
                return Err(TensorError::DimMismatch {
                    op: "concat_rows",
                    axis: "time",
                    expected: t0,
                    got: t,
                });
            }
            rows.push(c);
            total += c;
        }
        let mut data = Vec::with_capacity(total * t0);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let needs: Vec<bool> = parts.iter().map(|&p| self.needs_grad(p)).collect();
        let any = needs.iter().any(|&b| b);
        let parts: Vec<Var> = parts.to_vec();
        Ok(self.push_op(
            Tensor::new(vec![total, t0], data).expect("shape"),
            any,
            Box::new(move |_, g| {
                let mut grads = Vec::new();
                let mut offset = 0usize;
                for (idx, &p) in parts.iter().enumerate() {
                    let c = rows[idx];
                    if needs[idx] {
                        let slice = &g.data()[offset * t0..(offset + c) * t0];
                        grads.push((p, Tensor::new(vec![c, t0], slice.to_vec()).expect("shape")));
                    }
                    offset += c;
                }
                grads
            }),
        ))
    }

    /// Stack rank-1 tensors of equal width into a `[N,W]` matrix.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::InvalidArgument {
                op: "stack_rows",
                detail: "no inputs".into(),
            });
        }
        let w = self.value(parts[0]).numel();
        let mut data = Vec::with_capacity(parts.len() * w);
        for &p in parts {
            let v = self.value(p);
            if v.shape().len() != 1 || v.numel() != w {
                return Err(TensorError::DimMismatch {
                    op: "stack_rows",
                    axis: "width",
                    expected: w,
                    got: v.numel(),
                });
            }
            data.extend_from_slice(v.data());
        }
        let needs: Vec<bool> = parts.iter().map(|&p| self.needs_grad(p)).collect();
        let any = needs.iter().any(|&b| b);
        let n = parts.len();
        let parts: Vec<Var> = parts.to_vec();
        Ok(self.push_op(
            Tensor::new(vec![n, w], data).expect("shape"),
            any,
            Box::new(move |_, g| {
                let mut grads = Vec::new();
                for (idx, &p) in parts.iter().enumerate() {
                    if needs[idx] {
                        let slice = &g.data()[idx * w..(idx + 1) * w];
                        grads.push((p, Tensor::new(vec![w], slice.to_vec()).expect("shape")));
                    }
                }
                grads
            }),
        ))
    }

    /// Extract column `j` of `x [N,W]` as a rank-1 `[N]` tensor.
    pub fn select_col(&mut self, x: Var, col: usize) -> Result<Var> {
        let (n, w) = self.value(x).dims2("select_col")?;
        if col >= w {
            return Err(TensorError::InvalidArgument {
                op: "select_col",
                detail: format!("column {col} out of range for width {w}"),
            });
        }
        let out = Tensor::from_fn(&[n], |r| self.value(x).data()[r * w + col]);
        let nx = self.needs_grad(x);
        Ok(self.push_op(
            out,
            nx,
            Box::new(move |_, g| {
                let mut dx = Tensor::zeros(&[n, w]);
                for r in 0..n {
                    dx.data_mut()[r * w + col] = g.data()[r];
                }
                vec![(x, dx)]
            }),
        ))
    }

    /// Gather columns of `x [C,T]` at the given time indices (repeats allowed).
    pub fn gather_cols(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let (c, t) = self.value(x).dims2("gather_cols")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= t) {
            return Err(TensorError::InvalidArgument {
                op: "gather_cols",
                detail: format!("index {bad} out of range for length {t}"),
            });
        }
        if indices.is_empty() {
            return Err(TensorError::InvalidArgument {
                op: "gather_cols",
                detail: "empty index list".into(),
            });
        }
        let m = indices.len();
        let out = Tensor::from_fn(&[c, m], |i| {
            let (r, j) = (i / m, i % m);
            self.value(x).data()[r * t + indices[j]]
        });
        let nx = self.needs_grad(x);
        let indices = indices.to_vec();
        Ok(self.push_op(
            out,
            nx,
            Box::new(move |_, g| {
                let mut dx = Tensor::zeros(&[c, t]);
                for r in 0..c {
                    for (j, &src) in indices.iter().enumerate() {
                        dx.data_mut()[r * t + src] += g.data()[r * m + j];
                    }
                }
                vec![(x, dx)]
            }),
        ))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let acc: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        let shape = self.value(x).shape().to_vec();
        let nx = self.needs_grad(x);
        self.push_op(
            Tensor::scalar(acc as f32),
            nx,
            Box::new(move |_, g| vec![(x, Tensor::filled(&shape, g.item()))]),
        )
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let acc: f64 = self.value(x).data().iter().map(|&v| v as f64).sum();
        let shape = self.value(x).shape().to_vec();
        let nx = self.needs_grad(x);
        self.push_op(
            Tensor::scalar((acc / n as f64) as f32),
            nx,
            Box::new(move |_, g| vec![(x, Tensor::filled(&shape, g.item() / n as f32))]),
        )
    }
}

pub(crate) fn matmul_raw(a: &Tensor, b: &Tensor, m: usize, k: usize, n: usize) -> Tensor {
    let mut acc = vec![0.0f64; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        for p in 0..k {
            let aip = ad[i * k + p] as f64;
            if aip == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            let crow = &mut acc[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j] as f64;
            }
        }
    }
    Tensor::new(vec![m, n], acc.into_iter().map(|v| v as f32).collect()).expect("shape")
}

pub(crate) fn transpose_raw(a: &Tensor) -> Tensor {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    Tensor::from_fn(&[n, m], |i| a.data()[(i % m) * n + i / m])
}
