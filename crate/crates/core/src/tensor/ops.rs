//! Differentiable ops. Each method computes the forward value and, when the
//! tape records, pushes a closure implementing the backward rule. Gradients
//! always accumulate with `+=`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tape, Tensor};

/// Padding mode for 1-D convolutions along the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvPadding {
    /// Zero padding of (k-1)/2 on both ends; output sees a symmetric window.
    Same,
    /// Zero padding of k-1 on the left; output at t sees inputs <= t only.
    Causal,
}

/// Reduction kind for [`Tape::loss`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mae,
    Mse,
}

fn same_shape<E: Element>(a: &Tensor<E>, b: &Tensor<E>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// (outer, len, inner) decomposition of `shape` around `axis`.
fn lanes(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Shape(format!(
            "axis {axis} out of range for shape {shape:?}"
        )));
    }
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    Ok((outer, len, inner))
}

impl<E: Element> Tape<E> {
    fn out(&self, data: Vec<E>, shape: Vec<usize>, inputs: &[&Tensor<E>]) -> Tensor<E> {
        Tensor::output(data, shape, self.tracks(inputs))
    }

    // ---- elementwise -------------------------------------------------

    pub fn add(&self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        same_shape(a, b, "add")?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
        let out = self.out(data, a.shape().to_vec(), &[a, b]);
        if out.requires_grad() {
            let (a, b, out) = (a.clone(), b.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    if a.requires_grad() {
                        a.accumulate_grad(g);
                    }
                    if b.requires_grad() {
                        b.accumulate_grad(g);
                    }
                }
            });
        }
        Ok(out)
    }

    pub fn mul(&self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        same_shape(a, b, "mul")?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        let out = self.out(data, a.shape().to_vec(), &[a, b]);
        if out.requires_grad() {
            let (a, b, out) = (a.clone(), b.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    if a.requires_grad() {
                        let mut ga = a.grad_mut();
                        for ((gi, &go), &bv) in ga.iter_mut().zip(g).zip(b.data()) {
                            *gi = *gi + go * bv;
                        }
                    }
                    if b.requires_grad() {
                        let mut gb = b.grad_mut();
                        for ((gi, &go), &av) in gb.iter_mut().zip(g).zip(a.data()) {
                            *gi = *gi + go * av;
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    /// Multiply by a compile-time constant (not differentiated through).
    pub fn scale(&self, x: &Tensor<E>, c: f64) -> Tensor<E> {
        let c = E::from_f64(c);
        let data = x.data().iter().map(|&v| v * c).collect();
        let out = self.out(data, x.shape().to_vec(), &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let mut gx = x.grad_mut();
                    for (gi, &go) in gx.iter_mut().zip(g) {
                        *gi = *gi + go * c;
                    }
                }
            });
        }
        out
    }

    pub fn exp(&self, x: &Tensor<E>) -> Tensor<E> {
        let data: Vec<E> = x.data().iter().map(|&v| v.exp()).collect();
        let out = self.out(data, x.shape().to_vec(), &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let mut gx = x.grad_mut();
                    for ((gi, &go), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *gi = *gi + go * y;
                    }
                }
            });
        }
        out
    }

    pub fn relu(&self, x: &Tensor<E>) -> Tensor<E> {
        let zero = E::zero();
        let data = x.data().iter().map(|&v| if v > zero { v } else { zero }).collect();
        let out = self.out(data, x.shape().to_vec(), &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let mut gx = x.grad_mut();
                    for ((gi, &go), &xv) in gx.iter_mut().zip(g).zip(x.data()) {
                        if xv > E::zero() {
                            *gi = *gi + go;
                        }
                    }
                }
            });
        }
        out
    }

    /// Broadcast a scalar tensor over `x`; both sides are differentiable.
    pub fn mul_scalar_t(&self, x: &Tensor<E>, s: &Tensor<E>) -> Result<Tensor<E>> {
        if !s.is_scalar() {
            return Err(Error::Shape(format!(
                "mul_scalar_t: scale must be scalar, got {:?}",
                s.shape()
            )));
        }
        let sv = s.item();
        let data = x.data().iter().map(|&v| v * sv).collect();
        let out = self.out(data, x.shape().to_vec(), &[x, s]);
        if out.requires_grad() {
            let (x, s, out) = (x.clone(), s.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    if x.requires_grad() {
                        let mut gx = x.grad_mut();
                        for (gi, &go) in gx.iter_mut().zip(g) {
                            *gi = *gi + go * sv;
                        }
                    }
                    if s.requires_grad() {
                        let ds: E = g.iter().zip(x.data()).map(|(&go, &xv)| go * xv).sum();
                        s.accumulate_grad(&[ds]);
                    }
                }
            });
        }
        Ok(out)
    }

    // ---- linear algebra ------------------------------------------------

    /// `a[m,k] . b[k,n]`.
    pub fn matmul(&self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        let (m, k) = a.dims2()?;
        let (k2, n) = b.dims2()?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul: inner dims differ, {:?} . {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let mut data = vec![E::zero(); m * n];
        E::gemm(m, k, n, E::one(), a.data(), false, b.data(), false, E::zero(), &mut data);
        let out = self.out(data, vec![m, n], &[a, b]);
        if out.requires_grad() {
            let (a, b, out) = (a.clone(), b.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    if a.requires_grad() {
                        // dA += g . B^T
                        let mut ga = a.grad_mut();
                        E::gemm(m, n, k, E::one(), g, false, b.data(), true, E::one(), &mut ga);
                    }
                    if b.requires_grad() {
                        // dB += A^T . g
                        let mut gb = b.grad_mut();
                        E::gemm(k, m, n, E::one(), a.data(), true, g, false, E::one(), &mut gb);
                    }
                }
            });
        }
        Ok(out)
    }

    /// `a[m,k] . b[n,k]^T` without materializing the transpose.
    pub fn matmul_tb(&self, a: &Tensor<E>, b: &Tensor<E>) -> Result<Tensor<E>> {
        let (m, k) = a.dims2()?;
        let (n, k2) = b.dims2()?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul_tb: inner dims differ, {:?} . {:?}^T",
                a.shape(),
                b.shape()
            )));
        }
        let mut data = vec![E::zero(); m * n];
        E::gemm(m, k, n, E::one(), a.data(), false, b.data(), true, E::zero(), &mut data);
        let out = self.out(data, vec![m, n], &[a, b]);
        if out.requires_grad() {
            let (a, b, out) = (a.clone(), b.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    if a.requires_grad() {
                        // dA += g . B
                        let mut ga = a.grad_mut();
                        E::gemm(m, n, k, E::one(), g, false, b.data(), false, E::one(), &mut ga);
                    }
                    if b.requires_grad() {
                        // dB += g^T . A
                        let mut gb = b.grad_mut();
                        E::gemm(n, m, k, E::one(), g, true, a.data(), false, E::one(), &mut gb);
                    }
                }
            });
        }
        Ok(out)
    }

    pub fn transpose(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let (r, c) = x.dims2()?;
        let xd = x.data();
        let mut data = vec![E::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = xd[i * c + j];
            }
        }
        let out = self.out(data, vec![c, r], &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let mut gx = x.grad_mut();
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * c + j] = gx[i * c + j] + g[j * r + i];
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    /// Add a bias row to every row of `x[T,C]`.
    pub fn add_bias(&self, x: &Tensor<E>, bias: &Tensor<E>) -> Result<Tensor<E>> {
        let (t, c) = x.dims2()?;
        let cb = bias.dims1()?;
        if c != cb {
            return Err(Error::Shape(format!(
                "add_bias: {:?} with bias of {cb}",
                x.shape()
            )));
        }
        let bd = bias.data();
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(c) {
            for (v, &b) in row.iter_mut().zip(bd) {
                *v = *v + b;
            }
        }
        let out = self.out(data, vec![t, c], &[x, bias]);
        if out.requires_grad() {
            let (x, bias, out) = (x.clone(), bias.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    if x.requires_grad() {
                        x.accumulate_grad(g);
                    }
                    if bias.requires_grad() {
                        let mut gb = bias.grad_mut();
                        for row in g.chunks(c) {
                            for (gi, &go) in gb.iter_mut().zip(row) {
                                *gi = *gi + go;
                            }
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    /// Same data, new shape (element count preserved).
    pub fn reshape(&self, x: &Tensor<E>, shape: &[usize]) -> Result<Tensor<E>> {
        let numel: usize = shape.iter().product();
        if numel != x.numel() || shape.is_empty() || shape.contains(&0) {
            return Err(Error::Shape(format!(
                "reshape: {:?} -> {shape:?}",
                x.shape()
            )));
        }
        let out = self.out(x.data().to_vec(), shape.to_vec(), &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    x.accumulate_grad(g);
                }
            });
        }
        Ok(out)
    }

    // ---- convolution ---------------------------------------------------

    /// 1-D convolution along time, channels last: `x[T,Cin] * w[k,Cin,Cout]
    /// + bias[Cout] -> [T,Cout]`. Out-of-range positions read as zero, so
    /// the output length always equals the input length.
    pub fn conv1d(
        &self,
        x: &Tensor<E>,
        weight: &Tensor<E>,
        bias: &Tensor<E>,
        padding: ConvPadding,
    ) -> Result<Tensor<E>> {
        let (t, _) = x.dims2()?;
        self.conv1d_within(x, weight, bias, padding, &[(0, t)])
    }

    /// [`Tape::conv1d`] over several independent segments stacked in one
    /// matrix: windows never cross a segment boundary, so convolving the
    /// stack equals convolving each segment on its own (one gemm instead of
    /// one per segment). Segments must tile the rows exactly.
    pub fn conv1d_within(
        &self,
        x: &Tensor<E>,
        weight: &Tensor<E>,
        bias: &Tensor<E>,
        padding: ConvPadding,
        bounds: &[(usize, usize)],
    ) -> Result<Tensor<E>> {
        let (t, cin) = x.dims2()?;
        let (k, wcin, cout) = weight.dims3()?;
        if k % 2 == 0 {
            return Err(Error::InvalidKernel(k));
        }
        if wcin != cin || bias.dims1()? != cout {
            return Err(Error::Shape(format!(
                "conv1d: x {:?}, w {:?}, bias {:?}",
                x.shape(),
                weight.shape(),
                bias.shape()
            )));
        }
        let mut expect = 0;
        for &(start, len) in bounds {
            if start != expect || len == 0 {
                return Err(Error::Shape(format!(
                    "conv segments must tile the rows: got {bounds:?} for {t} rows"
                )));
            }
            expect += len;
        }
        if expect != t {
            return Err(Error::Shape(format!(
                "conv segments cover {expect} of {t} rows"
            )));
        }
        let offset = match padding {
            ConvPadding::Same => (k - 1) / 2,
            ConvPadding::Causal => k - 1,
        } as isize;

        // im2col: row t holds the k taps of the window ending/centred at t,
        // zero-filled outside the row's own segment.
        let xd = x.data();
        let mut col = vec![E::zero(); t * k * cin];
        for &(start, len) in bounds {
            for local in 0..len {
                let ti = start + local;
                for d in 0..k {
                    let src = local as isize + d as isize - offset;
                    if src >= 0 && (src as usize) < len {
                        let src = start + src as usize;
                        let dst = ti * k * cin + d * cin;
                        col[dst..dst + cin].copy_from_slice(&xd[src * cin..(src + 1) * cin]);
                    }
                }
            }
        }
        let mut data = vec![E::zero(); t * cout];
        E::gemm(t, k * cin, cout, E::one(), &col, false, weight.data(), false, E::zero(), &mut data);
        let bd = bias.data();
        for row in data.chunks_mut(cout) {
            for (v, &b) in row.iter_mut().zip(bd) {
                *v = *v + b;
            }
        }
        let out = self.out(data, vec![t, cout], &[x, weight, bias]);
        if out.requires_grad() {
            let (x, weight, bias, out) = (x.clone(), weight.clone(), bias.clone(), out.clone());
            let bounds = bounds.to_vec();
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    if bias.requires_grad() {
                        let mut gb = bias.grad_mut();
                        for row in g.chunks(cout) {
                            for (gi, &go) in gb.iter_mut().zip(row) {
                                *gi = *gi + go;
                            }
                        }
                    }
                    if weight.requires_grad() {
                        // dW += col^T . g
                        let mut gw = weight.grad_mut();
                        E::gemm(k * cin, t, cout, E::one(), &col, true, g, false, E::one(), &mut gw);
                    }
                    if x.requires_grad() {
                        // d(col) = g . W^T, then scatter back along the taps.
                        let mut gcol = vec![E::zero(); t * k * cin];
                        E::gemm(t, cout, k * cin, E::one(), g, false, weight.data(), true, E::zero(), &mut gcol);
                        let mut gx = x.grad_mut();
                        for &(start, len) in &bounds {
                            for local in 0..len {
                                let ti = start + local;
                                for d in 0..k {
                                    let src = local as isize + d as isize - offset;
                                    if src >= 0 && (src as usize) < len {
                                        let src = start + src as usize;
                                        let from = ti * k * cin + d * cin;
                                        for c in 0..cin {
                                            gx[src * cin + c] = gx[src * cin + c] + gcol[from + c];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    // ---- normalization and activation over lanes ------------------------

    /// Numerically safe softmax along `axis` (row max subtracted first).
    pub fn softmax(&self, x: &Tensor<E>, axis: usize) -> Result<Tensor<E>> {
        let (outer, len, inner) = lanes(x.shape(), axis)?;
        let xd = x.data();
        let mut data = vec![E::zero(); xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut mx = xd[base];
                for j in 1..len {
                    let v = xd[base + j * inner];
                    if v > mx {
                        mx = v;
                    }
                }
                let mut sum = E::zero();
                for j in 0..len {
                    let e = (xd[base + j * inner] - mx).exp();
                    data[base + j * inner] = e;
                    sum = sum + e;
                }
                for j in 0..len {
                    data[base + j * inner] = data[base + j * inner] / sum;
                }
            }
        }
        let out = self.out(data, x.shape().to_vec(), &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let y = out.data();
                    let mut gx = x.grad_mut();
                    for o in 0..outer {
                        for i in 0..inner {
                            let base = o * len * inner + i;
                            let mut dot = E::zero();
                            for j in 0..len {
                                let idx = base + j * inner;
                                dot = dot + g[idx] * y[idx];
                            }
                            for j in 0..len {
                                let idx = base + j * inner;
                                gx[idx] = gx[idx] + y[idx] * (g[idx] - dot);
                            }
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    /// Per-position normalization over the last dim, then affine gamma/beta.
    pub fn layer_norm(
        &self,
        x: &Tensor<E>,
        gamma: &Tensor<E>,
        beta: &Tensor<E>,
        eps: f64,
    ) -> Result<Tensor<E>> {
        let shape = x.shape().to_vec();
        let c = *shape.last().unwrap();
        if gamma.dims1()? != c || beta.dims1()? != c {
            return Err(Error::Shape(format!(
                "layer_norm: x {:?} with gamma {:?} / beta {:?}",
                shape,
                gamma.shape(),
                beta.shape()
            )));
        }
        let rows = x.numel() / c;
        let eps = E::from_f64(eps);
        let inv_c = E::one() / E::from_f64(c as f64);
        let xd = x.data();
        let gd = gamma.data();
        let bd = beta.data();
        let mut data = vec![E::zero(); xd.len()];
        let mut x_hat = vec![E::zero(); xd.len()];
        let mut inv_std = vec![E::zero(); rows];
        for r in 0..rows {
            let row = &xd[r * c..(r + 1) * c];
            let mean = row.iter().copied().sum::<E>() * inv_c;
            let var = row
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<E>()
                * inv_c;
            let istd = E::one() / (var + eps).sqrt();
            inv_std[r] = istd;
            for j in 0..c {
                let xh = (row[j] - mean) * istd;
                x_hat[r * c + j] = xh;
                data[r * c + j] = xh * gd[j] + bd[j];
            }
        }
        let out = self.out(data, shape, &[x, gamma, beta]);
        if out.requires_grad() {
            let (x, gamma, beta, out) = (x.clone(), gamma.clone(), beta.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let gd = gamma.data();
                    if beta.requires_grad() {
                        let mut gb = beta.grad_mut();
                        for row in g.chunks(c) {
                            for (gi, &go) in gb.iter_mut().zip(row) {
                                *gi = *gi + go;
                            }
                        }
                    }
                    if gamma.requires_grad() {
                        let mut gg = gamma.grad_mut();
                        for r in 0..rows {
                            for j in 0..c {
                                let idx = r * c + j;
                                gg[j] = gg[j] + g[idx] * x_hat[idx];
                            }
                        }
                    }
                    if x.requires_grad() {
                        let mut gx = x.grad_mut();
                        for r in 0..rows {
                            let mut sum_dxh = E::zero();
                            let mut sum_dxh_xh = E::zero();
                            for j in 0..c {
                                let idx = r * c + j;
                                let dxh = g[idx] * gd[j];
                                sum_dxh = sum_dxh + dxh;
                                sum_dxh_xh = sum_dxh_xh + dxh * x_hat[idx];
                            }
                            let mean_dxh = sum_dxh * inv_c;
                            let mean_dxh_xh = sum_dxh_xh * inv_c;
                            for j in 0..c {
                                let idx = r * c + j;
                                let dxh = g[idx] * gd[j];
                                gx[idx] = gx[idx]
                                    + inv_std[r] * (dxh - mean_dxh - x_hat[idx] * mean_dxh_xh);
                            }
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    /// Inverted dropout: zero with probability `p` and scale survivors by
    /// `1/(1-p)` while training; identity at inference.
    pub fn dropout(&self, x: &Tensor<E>, p: f64, training: bool, seed: u64) -> Result<Tensor<E>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidRate(p));
        }
        if !training || p == 0.0 {
            // Identity, but still routed so gradients flow unchanged.
            let out = self.out(x.data().to_vec(), x.shape().to_vec(), &[x]);
            if out.requires_grad() {
                let (x, out) = (x.clone(), out.clone());
                self.record(move || {
                    if let Some(g) = out.grad_ref().as_ref() {
                        x.accumulate_grad(g);
                    }
                });
            }
            return Ok(out);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep_scale = E::from_f64(1.0 / (1.0 - p));
        let mask: Vec<bool> = (0..x.numel()).map(|_| rng.gen::<f64>() >= p).collect();
        let data = x
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &keep)| if keep { v * keep_scale } else { E::zero() })
            .collect();
        let out = self.out(data, x.shape().to_vec(), &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let mut gx = x.grad_mut();
                    for ((gi, &go), &keep) in gx.iter_mut().zip(g).zip(&mask) {
                        if keep {
                            *gi = *gi + go * keep_scale;
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    // ---- gather / scatter ---------------------------------------------

    /// Row gather from `table[V,C]`; backward scatter-adds into the table.
    pub fn embedding(&self, table: &Tensor<E>, ids: &[usize]) -> Result<Tensor<E>> {
        let (v, c) = table.dims2()?;
        if ids.is_empty() {
            return Err(Error::Shape("embedding: empty id list".into()));
        }
        for &id in ids {
            if id >= v {
                return Err(Error::Index { index: id, size: v });
            }
        }
        let td = table.data();
        let mut data = vec![E::zero(); ids.len() * c];
        for (row, &id) in ids.iter().enumerate() {
            data[row * c..(row + 1) * c].copy_from_slice(&td[id * c..(id + 1) * c]);
        }
        let out = self.out(data, vec![ids.len(), c], &[table]);
        if out.requires_grad() {
            let (table, out) = (table.clone(), out.clone());
            let ids = ids.to_vec();
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let mut gt = table.grad_mut();
                    for (row, &id) in ids.iter().enumerate() {
                        for j in 0..c {
                            gt[id * c + j] = gt[id * c + j] + g[row * c + j];
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    /// Mean over the rows of `x[T,C]` where `mask` is true. Masked rows
    /// contribute nothing to the value or the gradient.
    pub fn masked_mean_pool(&self, x: &Tensor<E>, mask: &[bool]) -> Result<Tensor<E>> {
        let (t, c) = x.dims2()?;
        if mask.len() != t {
            return Err(Error::Shape(format!(
                "masked_mean_pool: {t} rows with {} mask entries",
                mask.len()
            )));
        }
        let n = mask.iter().filter(|&&m| m).count();
        if n == 0 {
            return Err(Error::EmptyPool);
        }
        let inv_n = E::one() / E::from_f64(n as f64);
        let xd = x.data();
        let mut data = vec![E::zero(); c];
        for (row, &keep) in mask.iter().enumerate() {
            if keep {
                for j in 0..c {
                    data[j] = data[j] + xd[row * c + j];
                }
            }
        }
        for v in data.iter_mut() {
            *v = *v * inv_n;
        }
        let out = self.out(data, vec![c], &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            let mask = mask.to_vec();
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let mut gx = x.grad_mut();
                    for (row, &keep) in mask.iter().enumerate() {
                        if keep {
                            for j in 0..c {
                                gx[row * c + j] = gx[row * c + j] + g[j] * inv_n;
                            }
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    /// Scale a vector to unit L2 norm.
    pub fn l2_normalize(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let _ = x.dims1()?;
        let norm_sq: E = x.data().iter().map(|&v| v * v).sum();
        let norm = norm_sq.sqrt().max(E::from_f64(1e-12));
        let inv = E::one() / norm;
        let data: Vec<E> = x.data().iter().map(|&v| v * inv).collect();
        let out = self.out(data, x.shape().to_vec(), &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let y = out.data();
                    let dot: E = g.iter().zip(y).map(|(&go, &yv)| go * yv).sum();
                    let mut gx = x.grad_mut();
                    for ((gi, &go), &yv) in gx.iter_mut().zip(g).zip(y) {
                        *gi = *gi + (go - yv * dot) * inv;
                    }
                }
            });
        }
        Ok(out)
    }

    /// Length regulation: repeat row `i` of `x[N,C]` `durations[i]` times.
    /// Gradient of every emitted row flows back to its source row.
    pub fn repeat_rows(&self, x: &Tensor<E>, durations: &[usize]) -> Result<Tensor<E>> {
        let (n, c) = x.dims2()?;
        if durations.len() != n {
            return Err(Error::Shape(format!(
                "repeat_rows: {n} rows with {} durations",
                durations.len()
            )));
        }
        let total: usize = durations.iter().sum();
        if total == 0 {
            return Err(Error::EmptyExpansion);
        }
        let xd = x.data();
        let mut data = vec![E::zero(); total * c];
        let mut at = 0;
        for (row, &d) in durations.iter().enumerate() {
            for _ in 0..d {
                data[at * c..(at + 1) * c].copy_from_slice(&xd[row * c..(row + 1) * c]);
                at += 1;
            }
        }
        let out = self.out(data, vec![total, c], &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            let durations = durations.to_vec();
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let mut gx = x.grad_mut();
                    let mut at = 0;
                    for (row, &d) in durations.iter().enumerate() {
                        for _ in 0..d {
                            for j in 0..c {
                                gx[row * c + j] = gx[row * c + j] + g[at * c + j];
                            }
                            at += 1;
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    // ---- reshuffling ------------------------------------------------------

    /// Rows `[start, start+len)` along the first axis (any rank).
    pub fn slice_rows(&self, x: &Tensor<E>, start: usize, len: usize) -> Result<Tensor<E>> {
        let rows = x.shape()[0];
        let width: usize = x.shape()[1..].iter().product();
        if len == 0 || start + len > rows {
            return Err(Error::Shape(format!(
                "slice_rows: [{start}, {}) of {rows} rows",
                start + len
            )));
        }
        let mut shape = x.shape().to_vec();
        shape[0] = len;
        let data = x.data()[start * width..(start + len) * width].to_vec();
        let out = self.out(data, shape, &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let mut gx = x.grad_mut();
                    for (gi, &go) in gx[start * width..(start + len) * width].iter_mut().zip(g) {
                        *gi = *gi + go;
                    }
                }
            });
        }
        Ok(out)
    }

    /// Concatenate along the first axis; trailing dims must agree.
    pub fn concat_rows(&self, parts: &[&Tensor<E>]) -> Result<Tensor<E>> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_rows: no inputs".into()));
        }
        let tail = &parts[0].shape()[1..];
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            if &p.shape()[1..] != tail {
                return Err(Error::Shape(format!(
                    "concat_rows: trailing dims differ, {:?} vs {:?}",
                    &p.shape()[1..],
                    tail
                )));
            }
            rows += p.shape()[0];
            data.extend_from_slice(p.data());
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(tail);
        let out = self.out(data, shape, parts);
        if out.requires_grad() {
            let parts: Vec<Tensor<E>> = parts.iter().map(|&p| p.clone()).collect();
            let out = out.clone();
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let mut at = 0;
                    for p in &parts {
                        let n = p.numel();
                        if p.requires_grad() {
                            p.accumulate_grad(&g[at..at + n]);
                        }
                        at += n;
                    }
                }
            });
        }
        Ok(out)
    }

    /// Columns `[start, start+len)` of `x[T,C]`.
    pub fn slice_cols(&self, x: &Tensor<E>, start: usize, len: usize) -> Result<Tensor<E>> {
        let (t, c) = x.dims2()?;
        if start + len > c || len == 0 {
            return Err(Error::Shape(format!(
                "slice_cols: [{start}, {}) of {c} columns",
                start + len
            )));
        }
        let xd = x.data();
        let mut data = vec![E::zero(); t * len];
        for row in 0..t {
            data[row * len..(row + 1) * len]
                .copy_from_slice(&xd[row * c + start..row * c + start + len]);
        }
        let out = self.out(data, vec![t, len], &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let mut gx = x.grad_mut();
                    for row in 0..t {
                        for j in 0..len {
                            gx[row * c + start + j] = gx[row * c + start + j] + g[row * len + j];
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    /// Concatenate same-height matrices along columns.
    pub fn concat_cols(&self, parts: &[&Tensor<E>]) -> Result<Tensor<E>> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_cols: no inputs".into()));
        }
        let (t, _) = parts[0].dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0;
        for p in parts {
            let (tp, cp) = p.dims2()?;
            if tp != t {
                return Err(Error::Shape(format!(
                    "concat_cols: row counts differ ({t} vs {tp})"
                )));
            }
            widths.push(cp);
            total += cp;
        }
        let mut data = vec![E::zero(); t * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let pd = p.data();
            for row in 0..t {
                data[row * total + offset..row * total + offset + w]
                    .copy_from_slice(&pd[row * w..(row + 1) * w]);
            }
            offset += w;
        }
        let out = self.out(data, vec![t, total], parts);
        if out.requires_grad() {
            let parts: Vec<Tensor<E>> = parts.iter().map(|&p| p.clone()).collect();
            let out = out.clone();
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let mut offset = 0;
                    for (p, &w) in parts.iter().zip(&widths) {
                        if p.requires_grad() {
                            let mut gp = p.grad_mut();
                            for row in 0..t {
                                for j in 0..w {
                                    gp[row * w + j] = gp[row * w + j] + g[row * total + offset + j];
                                }
                            }
                        }
                        offset += w;
                    }
                }
            });
        }
        Ok(out)
    }

    /// Stack equal-length vectors into a matrix, one per row.
    pub fn stack_rows(&self, rows: &[&Tensor<E>]) -> Result<Tensor<E>> {
        if rows.is_empty() {
            return Err(Error::Shape("stack_rows: no inputs".into()));
        }
        let c = rows[0].dims1()?;
        let mut data = Vec::with_capacity(rows.len() * c);
        for r in rows {
            if r.dims1()? != c {
                return Err(Error::Shape("stack_rows: lengths differ".into()));
            }
            data.extend_from_slice(r.data());
        }
        let out = self.out(data, vec![rows.len(), c], rows);
        if out.requires_grad() {
            let rows: Vec<Tensor<E>> = rows.iter().map(|&r| r.clone()).collect();
            let out = out.clone();
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    for (i, r) in rows.iter().enumerate() {
                        if r.requires_grad() {
                            r.accumulate_grad(&g[i * c..(i + 1) * c]);
                        }
                    }
                }
            });
        }
        Ok(out)
    }

    // ---- reductions and losses ------------------------------------------

    pub fn sum_all(&self, x: &Tensor<E>) -> Tensor<E> {
        let s: E = x.data().iter().copied().sum();
        let out = self.out(vec![s], vec![1], &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let go = g[0];
                    let mut gx = x.grad_mut();
                    for gi in gx.iter_mut() {
                        *gi = *gi + go;
                    }
                }
            });
        }
        out
    }

    pub fn mean_all(&self, x: &Tensor<E>) -> Tensor<E> {
        let inv_n = E::one() / E::from_f64(x.numel() as f64);
        let s: E = x.data().iter().copied().sum::<E>() * inv_n;
        let out = self.out(vec![s], vec![1], &[x]);
        if out.requires_grad() {
            let (x, out) = (x.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let go = g[0] * inv_n;
                    let mut gx = x.grad_mut();
                    for gi in gx.iter_mut() {
                        *gi = *gi + go;
                    }
                }
            });
        }
        out
    }

    /// Mean absolute / squared error over all elements. The MAE subgradient
    /// at `pred == target` is defined as 0.
    pub fn loss(&self, pred: &Tensor<E>, target: &Tensor<E>, kind: LossKind) -> Result<Tensor<E>> {
        same_shape(pred, target, "loss")?;
        let inv_n = E::one() / E::from_f64(pred.numel() as f64);
        let value: E = pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| {
                let d = p - t;
                match kind {
                    LossKind::Mae => d.abs(),
                    LossKind::Mse => d * d,
                }
            })
            .sum::<E>()
            * inv_n;
        let out = self.out(vec![value], vec![1], &[pred, target]);
        if out.requires_grad() {
            let (pred, target, out) = (pred.clone(), target.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let go = g[0] * inv_n;
                    let two = E::from_f64(2.0);
                    let apply = |gbuf: &mut [E], sign: E| {
                        for ((gi, &p), &t) in gbuf.iter_mut().zip(pred.data()).zip(target.data()) {
                            let d = p - t;
                            let dd = match kind {
                                LossKind::Mae => {
                                    if d > E::zero() {
                                        E::one()
                                    } else if d < E::zero() {
                                        -E::one()
                                    } else {
                                        E::zero()
                                    }
                                }
                                LossKind::Mse => two * d,
                            };
                            *gi = *gi + sign * go * dd;
                        }
                    };
                    if pred.requires_grad() {
                        apply(&mut pred.grad_mut(), E::one());
                    }
                    if target.requires_grad() {
                        apply(&mut target.grad_mut(), -E::one());
                    }
                }
            });
        }
        Ok(out)
    }

    /// Mean cross-entropy of each row of `logits[B,B]` against the diagonal
    /// class: `-(1/B) sum_i log softmax(row_i)[i]`.
    pub fn cross_entropy_diag(&self, logits: &Tensor<E>) -> Result<Tensor<E>> {
        let (b, b2) = logits.dims2()?;
        if b != b2 {
            return Err(Error::Shape(format!(
                "cross_entropy_diag: square matrix required, got {:?}",
                logits.shape()
            )));
        }
        let xd = logits.data();
        let inv_b = E::one() / E::from_f64(b as f64);
        let mut probs = vec![E::zero(); b * b];
        let mut total = E::zero();
        for i in 0..b {
            let row = &xd[i * b..(i + 1) * b];
            let mx = row.iter().copied().fold(row[0], E::max);
            let mut sum = E::zero();
            for j in 0..b {
                let e = (row[j] - mx).exp();
                probs[i * b + j] = e;
                sum = sum + e;
            }
            for j in 0..b {
                probs[i * b + j] = probs[i * b + j] / sum;
            }
            total = total - (row[i] - mx - sum.ln());
        }
        let out = self.out(vec![total * inv_b], vec![1], &[logits]);
        if out.requires_grad() {
            let (logits, out) = (logits.clone(), out.clone());
            self.record(move || {
                if let Some(g) = out.grad_ref().as_ref() {
                    let go = g[0] * inv_b;
                    let mut gx = logits.grad_mut();
                    for i in 0..b {
                        for j in 0..b {
                            let idx = i * b + j;
                            let target = if i == j { E::one() } else { E::zero() };
                            gx[idx] = gx[idx] + go * (probs[idx] - target);
                        }
                    }
                }
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn t32(data: &[f32], shape: &[usize]) -> Tensor<f32> {
        Tensor::from_vec(data.to_vec(), shape).unwrap()
    }

    fn v32(data: &[f32], shape: &[usize]) -> Tensor<f32> {
        Tensor::variable(data.to_vec(), shape).unwrap()
    }

    #[test]
    fn matmul_identity_and_known_product() {
        let tape = Tape::<f32>::inference();
        let a = t32(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let eye = t32(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
        let ai = tape.matmul(&a, &eye).unwrap();
        assert_eq!(ai.data(), a.data());

        let b = t32(&[5.0, 6.0, 7.0, 8.0], &[2, 2]);
        let ab = tape.matmul(&a, &b).unwrap();
        assert_eq!(ab.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_rejects_dim_mismatch() {
        let tape = Tape::<f32>::inference();
        let a = t32(&[1.0, 2.0], &[1, 2]);
        let b = t32(&[1.0, 2.0, 3.0], &[3, 1]);
        assert!(matches!(tape.matmul(&a, &b), Err(Error::Shape(_))));
    }

    // Brute-force oracle: judge matmul against three explicit loops.
    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let (m, k, n) = (3, 4, 5);
        let a_data: Vec<f32> = (0..m * k).map(|i| (i as f32 * 0.37).sin()).collect();
        let b_data: Vec<f32> = (0..k * n).map(|i| (i as f32 * 0.73).cos()).collect();
        let mut want = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    want[i * n + j] += a_data[i * k + l] * b_data[l * n + j];
                }
            }
        }
        let tape = Tape::<f32>::inference();
        let got = tape
            .matmul(&t32(&a_data, &[m, k]), &t32(&b_data, &[k, n]))
            .unwrap();
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-5, "{g} vs {w}");
        }
    }

    #[test]
    fn conv1d_kernel_one_identity() {
        // k=1 with an identity channel map must reproduce the input.
        let (t, c) = (4, 3);
        let x: Vec<f32> = (0..t * c).map(|i| i as f32 - 5.0).collect();
        let mut w = vec![0.0f32; c * c];
        for i in 0..c {
            w[i * c + i] = 1.0;
        }
        let tape = Tape::<f32>::inference();
        let y = tape
            .conv1d(
                &t32(&x, &[t, c]),
                &t32(&w, &[1, c, c]),
                &t32(&[0.0; 3], &[3]),
                ConvPadding::Same,
            )
            .unwrap();
        assert_eq!(y.data(), &x[..]);
    }

    #[test]
    fn conv1d_shapes_and_even_kernel_error() {
        let tape = Tape::<f32>::inference();
        let x = Tensor::<f32>::zeros(&[5, 256]).unwrap();
        let w = Tensor::<f32>::zeros(&[9, 256, 1024]).unwrap();
        let b = Tensor::<f32>::zeros(&[1024]).unwrap();
        let y = tape.conv1d(&x, &w, &b, ConvPadding::Same).unwrap();
        assert_eq!(y.shape(), &[5, 1024]);

        let w_even = Tensor::<f32>::zeros(&[4, 256, 8]).unwrap();
        let b8 = Tensor::<f32>::zeros(&[8]).unwrap();
        assert!(matches!(
            tape.conv1d(&x, &w_even, &b8, ConvPadding::Same),
            Err(Error::InvalidKernel(4))
        ));
    }

    // Brute-force oracle: sliding window with explicit zero padding.
    #[test]
    fn conv1d_matches_sliding_window_oracle() {
        let (t, cin, cout, k) = (6, 2, 3, 3);
        let x: Vec<f32> = (0..t * cin).map(|i| ((i * 7 % 5) as f32) - 2.0).collect();
        let w: Vec<f32> = (0..k * cin * cout)
            .map(|i| ((i * 3 % 11) as f32) * 0.1 - 0.5)
            .collect();
        let bias = [0.25f32, -0.5, 1.0];
        let off = (k - 1) / 2;
        let mut want = vec![0.0f32; t * cout];
        for ti in 0..t {
            for o in 0..cout {
                let mut acc = bias[o];
                for d in 0..k {
                    let src = ti as isize + d as isize - off as isize;
                    if src >= 0 && (src as usize) < t {
                        for c in 0..cin {
                            acc += x[src as usize * cin + c] * w[(d * cin + c) * cout + o];
                        }
                    }
                }
                want[ti * cout + o] = acc;
            }
        }
        let tape = Tape::<f32>::inference();
        let got = tape
            .conv1d(
                &t32(&x, &[t, cin]),
                &t32(&w, &[k, cin, cout]),
                &t32(&bias, &[cout]),
                ConvPadding::Same,
            )
            .unwrap();
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-6);
        }
    }

    #[test]
    fn causal_conv_ignores_future() {
        let (t, c, k) = (8, 2, 3);
        let x: Vec<f32> = (0..t * c).map(|i| (i as f32 * 0.31).sin()).collect();
        let w: Vec<f32> = (0..k * c * c).map(|i| (i as f32 * 0.17).cos()).collect();
        let tape = Tape::<f32>::inference();
        let bias = t32(&[0.0, 0.0], &[c]);
        let base = tape
            .conv1d(&t32(&x, &[t, c]), &t32(&w, &[k, c, c]), &bias, ConvPadding::Causal)
            .unwrap();
        let mut x2 = x.clone();
        x2[(t - 1) * c] += 100.0;
        let bumped = tape
            .conv1d(&t32(&x2, &[t, c]), &t32(&w, &[k, c, c]), &bias, ConvPadding::Causal)
            .unwrap();
        assert_eq!(
            &base.data()[..(t - 1) * c],
            &bumped.data()[..(t - 1) * c],
            "causal conv must not see future rows"
        );
        assert_ne!(&base.data()[(t - 1) * c..], &bumped.data()[(t - 1) * c..]);
    }

    #[test]
    fn softmax_uniform_overflow_and_known_values() {
        let tape = Tape::<f32>::inference();
        let u = tape.softmax(&t32(&[3.5, 3.5, 3.5], &[3]), 0).unwrap();
        for &v in u.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-6);
        }

        let big = tape.softmax(&t32(&[1000.0, 1000.1], &[2]), 0).unwrap();
        assert!(big.all_finite());

        let known = tape.softmax(&t32(&[0.0, 1.0, 2.0], &[3]), 0).unwrap();
        let want = [0.09003057, 0.24472847, 0.66524096];
        for (g, w) in known.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-5);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_any_axis() {
        let tape = Tape::<f32>::inference();
        let x: Vec<f32> = (0..24).map(|i| (i as f32 * 1.7).sin() * 3.0).collect();
        for axis in 0..3 {
            let y = tape
                .softmax(&t32(&x, &[2, 3, 4]), axis)
                .unwrap();
            let (outer, len, inner) = super::lanes(&[2, 3, 4], axis).unwrap();
            for o in 0..outer {
                for i in 0..inner {
                    let mut s = 0.0;
                    for j in 0..len {
                        s += y.data()[o * len * inner + j * inner + i];
                    }
                    assert!((s - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let tape = Tape::<f32>::inference();
        let x = t32(&[2.5; 8], &[2, 4]);
        let gamma = t32(&[1.0; 4], &[4]);
        let beta = t32(&[0.0; 4], &[4]);
        let y = tape.layer_norm(&x, &gamma, &beta, 1e-5).unwrap();
        for &v in y.data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn layer_norm_centres_and_scales() {
        let tape = Tape::<f32>::inference();
        let x: Vec<f32> = (0..32).map(|i| (i as f32 * 0.9).sin() * 4.0 + 1.0).collect();
        let gamma = t32(&[1.0; 8], &[8]);
        let beta = t32(&[0.0; 8], &[8]);
        let y = tape.layer_norm(&t32(&x, &[4, 8]), &gamma, &beta, 1e-5).unwrap();
        for row in y.data().chunks(8) {
            let mean: f32 = row.iter().sum::<f32>() / 8.0;
            let var: f32 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 8.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn dropout_identity_paths() {
        let tape = Tape::<f32>::inference();
        let x: Vec<f32> = (0..64).map(|i| i as f32).collect();
        let xt = t32(&x, &[64]);
        let eval = tape.dropout(&xt, 0.5, false, 9).unwrap();
        assert_eq!(eval.data(), &x[..]);
        let p0 = tape.dropout(&xt, 0.0, true, 9).unwrap();
        assert_eq!(p0.data(), &x[..]);
        assert!(matches!(
            tape.dropout(&xt, 1.0, true, 9),
            Err(Error::InvalidRate(_))
        ));
    }

    // Statistical oracle: keep-rate and mean preservation at p = 0.5.
    #[test]
    fn dropout_statistics() {
        let n = 10_000;
        let x = t32(&vec![1.0f32; n], &[n]);
        let tape = Tape::<f32>::inference();
        let y = tape.dropout(&x, 0.5, true, 1234).unwrap();
        let kept = y.data().iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
        assert!((kept - 0.5).abs() < 0.03, "kept fraction {kept}");
        let mean = y.data().iter().sum::<f32>() as f64 / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn embedding_lookup_and_scatter_backward() {
        let table = v32(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], &[4, 2]);
        let tape = Tape::<f32>::new();
        let first = tape.embedding(&table, &[0]).unwrap();
        assert_eq!(first.data(), &[0.0, 1.0]);

        let rep = tape.embedding(&table, &[3, 3]).unwrap();
        assert_eq!(rep.data(), &[6.0, 7.0, 6.0, 7.0]);
        let s = tape.sum_all(&rep);
        tape.backward(&s).unwrap();
        // Both rows scatter-add into table row 3.
        let g = table.grad().unwrap();
        assert_eq!(&g[6..8], &[2.0, 2.0]);
        assert_eq!(&g[..6], &[0.0; 6]);

        let t2 = Tape::<f32>::new();
        assert!(matches!(
            t2.embedding(&table, &[4]),
            Err(Error::Index { index: 4, size: 4 })
        ));
    }

    #[test]
    fn masked_pool_ignores_padded_rows() {
        let tape = Tape::<f32>::new();
        let x = v32(&[1.0, 2.0, 3.0, 4.0, 99.0, -99.0], &[3, 2]);
        let pooled = tape.masked_mean_pool(&x, &[true, true, false]).unwrap();
        assert_eq!(pooled.data(), &[2.0, 3.0]);
        let s = tape.sum_all(&pooled);
        tape.backward(&s).unwrap();
        let g = x.grad().unwrap();
        assert_eq!(&g[4..6], &[0.0, 0.0], "masked rows get exactly zero grad");
        assert_eq!(&g[..4], &[0.5, 0.5, 0.5, 0.5]);

        let t2 = Tape::<f32>::new();
        assert!(matches!(
            t2.masked_mean_pool(&x, &[false, false, false]),
            Err(Error::EmptyPool)
        ));
    }

    #[test]
    fn repeat_rows_expansion() {
        let tape = Tape::<f32>::inference();
        let x = t32(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2]);
        let y = tape.repeat_rows(&x, &[2, 0, 1]).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        assert_eq!(y.data(), &[1.0, 2.0, 1.0, 2.0, 5.0, 6.0]);

        let id = tape.repeat_rows(&x, &[1, 1, 1]).unwrap();
        assert_eq!(id.data(), x.data());

        assert!(matches!(
            tape.repeat_rows(&x, &[0, 0, 0]),
            Err(Error::EmptyExpansion)
        ));
    }

    #[test]
    fn loss_values_and_subgradient_at_zero() {
        let tape = Tape::<f32>::inference();
        let p = t32(&[0.0, 2.0], &[2]);
        let t = t32(&[1.0, 0.0], &[2]);
        let mae = tape.loss(&p, &t, LossKind::Mae).unwrap();
        let mse = tape.loss(&p, &t, LossKind::Mse).unwrap();
        assert_eq!(mae.item(), 1.5);
        assert_eq!(mse.item(), 2.5);

        let same = tape.loss(&p, &p, LossKind::Mae).unwrap();
        assert_eq!(same.item(), 0.0);

        // MAE subgradient where pred == target is exactly zero.
        let tape = Tape::<f32>::new();
        let pv = v32(&[1.0, 2.0], &[2]);
        let tv = t32(&[1.0, 0.0], &[2]);
        let l = tape.loss(&pv, &tv, LossKind::Mae).unwrap();
        tape.backward(&l).unwrap();
        let g = pv.grad().unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 0.5);
    }

    #[test]
    fn backward_analytic_square_sum() {
        let tape = Tape::<f32>::new();
        let x = v32(&[1.0, -2.0], &[2]);
        let sq = tape.mul(&x, &x).unwrap();
        let s = tape.sum_all(&sq);
        tape.backward(&s).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, -4.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let tape = Tape::<f32>::new();
        let x = v32(&[1.0, 2.0], &[2]);
        let y = tape.scale(&x, 2.0);
        assert!(matches!(tape.backward(&y), Err(Error::Shape(_))));
    }

    #[test]
    fn unused_parameter_keeps_zero_grad() {
        let tape = Tape::<f32>::new();
        let used = v32(&[1.0], &[1]);
        let unused = v32(&[5.0], &[1]);
        let y = tape.scale(&used, 3.0);
        tape.backward(&y).unwrap();
        assert_eq!(used.grad().unwrap(), vec![3.0]);
        assert!(unused.grad().is_none(), "no gradient path means zeros");
    }

    #[test]
    fn independent_tapes_accumulate_linearly() {
        let x = v32(&[2.0], &[1]);
        for _ in 0..2 {
            let tape = Tape::<f32>::new();
            let y = tape.scale(&x, 5.0);
            tape.backward(&y).unwrap();
        }
        assert_eq!(x.grad().unwrap(), vec![10.0]);
    }

    #[test]
    fn slice_concat_stack_round_trip() {
        let tape = Tape::<f32>::inference();
        let x = t32(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let left = tape.slice_cols(&x, 0, 1).unwrap();
        let right = tape.slice_cols(&x, 1, 2).unwrap();
        let back = tape.concat_cols(&[&left, &right]).unwrap();
        assert_eq!(back.data(), x.data());

        let a = t32(&[1.0, 2.0], &[2]);
        let b = t32(&[3.0, 4.0], &[2]);
        let stacked = tape.stack_rows(&[&a, &b]).unwrap();
        assert_eq!(stacked.shape(), &[2, 2]);
        assert_eq!(stacked.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn cross_entropy_diag_prefers_diagonal() {
        let tape = Tape::<f32>::inference();
        let ident = t32(&[10.0, 0.0, 0.0, 10.0], &[2, 2]);
        let low = tape.cross_entropy_diag(&ident).unwrap();
        let uniform = t32(&[1.0, 1.0, 1.0, 1.0], &[2, 2]);
        let high = tape.cross_entropy_diag(&uniform).unwrap();
        assert!(low.item() < high.item());
        // Uniform logits: loss is exactly ln(B).
        assert!((high.item() - (2.0f32).ln()).abs() < 1e-6);
    }
}
