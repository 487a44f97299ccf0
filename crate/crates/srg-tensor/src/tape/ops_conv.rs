//! Temporal convolution, pooling, and linear resampling.

use super::{Tape, Var};
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Output length of a 1-D convolution.
pub fn conv_out_len(t: usize, k: usize, stride: usize, padding: usize) -> usize {
    (t + 2 * padding - k) / stride + 1
}

/// Output length of a 1-D pooling window sweep.
pub fn pool_out_len(t: usize, k: usize, stride: usize) -> usize {
    (t - k) / stride + 1
}

impl Tape {
    /// 1-D convolution: `input [C_in,T]`, `kernels [C_out,C_in,K]`, zero
    /// padding. Output is `[C_out, (T + 2·padding − K)/stride + 1]`.
    pub fn conv1d(
        &mut self,
        input: Var,
        kernels: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (c_in, t) = self.value(input).dims2("conv1d")?;
        let (c_out, kc, k) = self.value(kernels).dims3("conv1d")?;
        if kc != c_in {
            return Err(TensorError::DimMismatch {
                op: "conv1d",
                axis: "input channels",
                expected: c_in,
                got: kc,
            });
        }
        if stride == 0 {
            return Err(TensorError::InvalidArgument {
                op: "conv1d",
                detail: "stride must be >= 1".into(),
            });
        }
        if k > t + 2 * padding {
            return Err(TensorError::DimMismatch {
                op: "conv1d",
                axis: "kernel width vs padded time",
                expected: t + 2 * padding,
                got: k,
            });
        }
        let t_out = conv_out_len(t, k, stride, padding);
        let mut out = vec![0.0f32; c_out * t_out];
        {
            let x = self.value(input).data();
            let w = self.value(kernels).data();
            let mut acc = vec![0.0f64; t_out];
            for o in 0..c_out {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for c in 0..c_in {
                    let row = &x[c * t..(c + 1) * t];
                    let ker = &w[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                    for (kk, &kw) in ker.iter().enumerate() {
                        let kw = kw as f64;
                        if kw == 0.0 {
                            continue;
                        }
                        // src = to*stride + kk - padding must land in [0, t)
                        for (to, slot) in acc.iter_mut().enumerate() {
                            let src = to * stride + kk;
                            if src >= padding && src - padding < t {
                                *slot += kw * row[src - padding] as f64;
                            }
                        }
                    }
                }
                for (to, &a) in acc.iter().enumerate() {
                    out[o * t_out + to] = a as f32;
                }
            }
        }
        let (ni, nk) = (self.needs_grad(input), self.needs_grad(kernels));
        Ok(self.push_op(
            Tensor::new(vec![c_out, t_out], out).expect("shape"),
            ni || nk,
            Box::new(move |tape, g| {
                let mut grads = Vec::new();
                if ni {
                    let w = tape.value(kernels).data();
                    let mut dx = vec![0.0f64; c_in * t];
                    for o in 0..c_out {
                        let grow = &g.data()[o * t_out..(o + 1) * t_out];
                        for c in 0..c_in {
                            let ker = &w[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                            let drow = &mut dx[c * t..(c + 1) * t];
                            for (kk, &kw) in ker.iter().enumerate() {
                                let kw = kw as f64;
                                if kw == 0.0 {
                                    continue;
                                }
                                for (to, &gv) in grow.iter().enumerate() {
                                    let src = to * stride + kk;
                                    if src >= padding && src - padding < t {
                                        drow[src - padding] += kw * gv as f64;
                                    }
                                }
                            }
                        }
                    }
                    grads.push((
                        input,
                        Tensor::new(vec![c_in, t], dx.into_iter().map(|v| v as f32).collect())
                            .expect("shape"),
                    ));
                }
                if nk {
                    let x = tape.value(input).data();
                    let mut dw = vec![0.0f32; c_out * c_in * k];
                    for o in 0..c_out {
                        let grow = &g.data()[o * t_out..(o + 1) * t_out];
                        for c in 0..c_in {
                            let row = &x[c * t..(c + 1) * t];
                            for kk in 0..k {
                                let mut acc = 0.0f64;
                                for (to, &gv) in grow.iter().enumerate() {
                                    let src = to * stride + kk;
                                    if src >= padding && src - padding < t {
                                        acc += gv as f64 * row[src - padding] as f64;
                                    }
                                }
                                dw[(o * c_in + c) * k + kk] = acc as f32;
                            }
                        }
                    }
                    grads.push((
                        kernels,
                        Tensor::new(vec![c_out, c_in, k], dw).expect("shape"),
                    ));
                }
                grads
            }),
        ))
    }

    /// Average pooling over time: `[C,T] -> [C, (T−K)/S + 1]`.
    pub fn avg_pool1d(&mut self, x: Var, k: usize, stride: usize) -> Result<Var> {
        let (c, t) = self.pool_check("avg_pool1d", x, k, stride)?;
        let t_out = pool_out_len(t, k, stride);
        let data = self.value(x).data();
        let mut out = vec![0.0f32; c * t_out];
        for r in 0..c {
            for to in 0..t_out {
                let mut acc = 0.0f64;
                for j in 0..k {
                    acc += data[r * t + to * stride + j] as f64;
                }
                out[r * t_out + to] = (acc / k as f64) as f32;
            }
        }
        let nx = self.needs_grad(x);
        Ok(self.push_op(
            Tensor::new(vec![c, t_out], out).expect("shape"),
            nx,
            Box::new(move |_, g| {
                let mut dx = Tensor::zeros(&[c, t]);
                for r in 0..c {
                    for to in 0..t_out {
                        let share = g.data()[r * t_out + to] / k as f32;
                        for j in 0..k {
                            dx.data_mut()[r * t + to * stride + j] += share;
                        }
                    }
                }
                vec![(x, dx)]
            }),
        ))
    }

    /// Max pooling over time; ties resolve to the first (lowest) index.
    pub fn max_pool1d(&mut self, x: Var, k: usize, stride: usize) -> Result<Var> {
        let (c, t) = self.pool_check("max_pool1d", x, k, stride)?;
        let t_out = pool_out_len(t, k, stride);
        let data = self.value(x).data();
        let mut out = vec![0.0f32; c * t_out];
        let mut arg = vec![0usize; c * t_out];
        for r in 0..c {
            for to in 0..t_out {
                let (mut best, mut best_j) = (f32::NEG_INFINITY, 0);
                for j in 0..k {
                    let v = data[r * t + to * stride + j];
                    if v > best {
                        best = v;
                        best_j = to * stride + j;
                    }
                }
                out[r * t_out + to] = best;
                arg[r * t_out + to] = best_j;
            }
        }
        let nx = self.needs_grad(x);
        Ok(self.push_op(
            Tensor::new(vec![c, t_out], out).expect("shape"),
            nx,
            Box::new(move |_, g| {
                let mut dx = Tensor::zeros(&[c, t]);
                for r in 0..c {
                    for to in 0..t_out {
                        dx.data_mut()[r * t + arg[r * t_out + to]] += g.data()[r * t_out + to];
                    }
                }
                vec![(x, dx)]
            }),
        ))
    }

    fn pool_check(
        &self,
        op: &'static str,
        x: Var,
        k: usize,
        stride: usize,
    ) -> Result<(usize, usize)> {
        let (c, t) = self.value(x).dims2(op)?;
        if k == 0 || stride == 0 {
            return Err(TensorError::InvalidArgument {
                op,
                detail: "kernel and stride must be >= 1".into(),
            });
        }
        if k > t {
            return Err(TensorError::DimMismatch {
                op,
                axis: "kernel width vs time",
                expected: t,
                got: k,
            });
        }
        Ok((c, t))
    }

    /// Linear resampling along time with endpoint alignment. The identity when
    /// `target_len == T`; constant extension when `T == 1`.
    pub fn resample_linear(&mut self, x: Var, target_len: usize) -> Result<Var> {
        let (c, t) = self.value(x).dims2("resample_linear")?;
        if target_len < 1 {
            return Err(TensorError::InvalidArgument {
                op: "resample_linear",
                detail: "target length must be >= 1".into(),
            });
        }
        // (source index, blend weight toward index+1) per output position
        let taps: Vec<(usize, f64)> = (0..target_len)
            .map(|to| {
                if t == 1 || target_len == 1 {
                    return (0, 0.0);
                }
                let pos = to as f64 * (t - 1) as f64 / (target_len - 1) as f64;
                let i0 = (pos.floor() as usize).min(t - 2);
                (i0, pos - i0 as f64)
            })
            .collect();
        let data = self.value(x).data();
        let mut out = vec![0.0f32; c * target_len];
        for r in 0..c {
            for (to, &(i0, w)) in taps.iter().enumerate() {
                let a = data[r * t + i0] as f64;
                let b = data[r * t + (i0 + 1).min(t - 1)] as f64;
                out[r * target_len + to] = ((1.0 - w) * a + w * b) as f32;
            }
        }
        let nx = self.needs_grad(x);
        Ok(self.push_op(
            Tensor::new(vec![c, target_len], out).expect("shape"),
            nx,
            Box::new(move |_, g| {
                let mut dx = vec![0.0f64; c * t];
                for r in 0..c {
                    for (to, &(i0, w)) in taps.iter().enumerate() {
                        let gv = g.data()[r * target_len + to] as f64;
                        dx[r * t + i0] += (1.0 - w) * gv;
                        dx[r * t + (i0 + 1).min(t - 1)] += w * gv;
                    }
                }
                vec![(
                    x,
                    Tensor::new(vec![c, t], dx.into_iter().map(|v| v as f32).collect())
                        .expect("shape"),
                )]
            }),
        ))
    }
}
