//! Forward and backward kernels. Tensors are flat `c × h × w` buffers, row-major.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Zero-padded ("same" for odd kernels) 2-D convolution geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(input: Shape, out_c: usize, k: usize, stride: usize) -> Option<Self> {
        let pad = k / 2;
        if k == 0 || stride == 0 || input.h + 2 * pad < k || input.w + 2 * pad < k {
            return None;
        }
        Some(Self {
            in_c: input.c,
            out_c,
            k,
            stride,
            pad,
            in_h: input.h,
            in_w: input.w,
            out_h: (input.h + 2 * pad - k) / stride + 1,
            out_w: (input.w + 2 * pad - k) / stride + 1,
        })
    }

    pub fn out_shape(&self) -> Shape {
        Shape { c: self.out_c, h: self.out_h, w: self.out_w }
    }

    pub fn n_weights(&self) -> usize {
        self.out_c * self.in_c * self.k * self.k
    }

    pub fn n_params(&self) -> usize {
        self.n_weights() + self.out_c
    }

    /// Output positions `lo..hi` whose tap at kernel offset `kk` lands inside the input.
    #[inline]
    fn valid(&self, kk: usize, in_len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if self.pad > kk { (self.pad - kk).div_ceil(s) } else { 0 };
        let hi = if in_len + self.pad > kk { ((in_len - 1 + self.pad - kk) / s + 1).min(out_len) } else { 0 };
        (lo, hi.max(lo))
    }

    /// `params` holds weights `[out_c][in_c][k][k]` followed by `out_c` biases.
    pub fn forward(&self, params: &[f64], input: &[f64], out: &mut [f64]) {
        let (w, b) = params.split_at(self.n_weights());
        let (ihw, ohw, k, s) = (self.in_h * self.in_w, self.out_h * self.out_w, self.k, self.stride);
        for oc in 0..self.out_c {
            let o = &mut out[oc * ohw..(oc + 1) * ohw];
            o.fill(b[oc]);
            for ic in 0..self.in_c {
                let inp = &input[ic * ihw..(ic + 1) * ihw];
                for ky in 0..k {
                    let (y0, y1) = self.valid(ky, self.in_h, self.out_h);
                    for kx in 0..k {
                        let (x0, x1) = self.valid(kx, self.in_w, self.out_w);
                        let wv = w[((oc * self.in_c + ic) * k + ky) * k + kx];
                        for oy in y0..y1 {
                            let iy = oy * s + ky - self.pad;
                            let row = &inp[iy * self.in_w..(iy + 1) * self.in_w];
                            let orow = &mut o[oy * self.out_w + x0..oy * self.out_w + x1];
                            if s == 1 {
                                let src = &row[x0 + kx - self.pad..x1 + kx - self.pad];
                                for (o, &v) in orow.iter_mut().zip(src) {
                                    *o += wv * v;
                                }
                            } else {
                                for (j, o) in orow.iter_mut().enumerate() {
                                    *o += wv * row[(x0 + j) * s + kx - self.pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Accumulates parameter gradients into `gparams` (when given) and the
    /// input gradient into `gin` (when given).
    pub fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        gout: &[f64],
        mut gparams: Option<&mut [f64]>,
        mut gin: Option<&mut [f64]>,
    ) {
        let w = &params[..self.n_weights()];
        let (ihw, ohw, k, s) = (self.in_h * self.in_w, self.out_h * self.out_w, self.k, self.stride);
        let nw = self.n_weights();
        for oc in 0..self.out_c {
            let g = &gout[oc * ohw..(oc + 1) * ohw];
            if let Some(gp) = gparams.as_deref_mut() {
                gp[nw + oc] += g.iter().sum::<f64>();
            }
            for ic in 0..self.in_c {
                let inp = &input[ic * ihw..(ic + 1) * ihw];
                for ky in 0..k {
                    let (y0, y1) = self.valid(ky, self.in_h, self.out_h);
                    for kx in 0..k {
                        let (x0, x1) = self.valid(kx, self.in_w, self.out_w);
                        let widx = ((oc * self.in_c + ic) * k + ky) * k + kx;
                        let wv = w[widx];
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = oy * s + ky - self.pad;
                            let grow = &g[oy * self.out_w + x0..oy * self.out_w + x1];
                            let row_start = iy * self.in_w;
                            if s == 1 {
                                let lo = row_start + x0 + kx - self.pad;
                                let src = &inp[lo..lo + grow.len()];
                                acc += grow.iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                                if let Some(gi) = gin.as_deref_mut() {
                                    let dst = &mut gi[ic * ihw + lo..ic * ihw + lo + grow.len()];
                                    for (d, &gv) in dst.iter_mut().zip(grow) {
                                        *d += wv * gv;
                                    }
                                }
                            } else {
                                for (j, &gv) in grow.iter().enumerate() {
                                    let ix = row_start + (x0 + j) * s + kx - self.pad;
                                    acc += gv * inp[ix];
                                    if let Some(gi) = gin.as_deref_mut() {
                                        gi[ic * ihw + ix] += wv * gv;
                                    }
                                }
                            }
                        }
                        if let Some(gp) = gparams.as_deref_mut() {
                            gp[widx] += acc;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn relu_forward(input: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(input) {
        *o = v.max(0.0);
    }
}

/// Derivative taken as 0 at exactly 0.
pub(crate) fn relu_backward(input: &[f64], gout: &[f64], gin: &mut [f64]) {
    for ((g, &x), &go) in gin.iter_mut().zip(input).zip(gout) {
        *g = if x > 0.0 { go } else { 0.0 };
    }
}

pub(crate) fn gap_forward(shape: Shape, input: &[f64], out: &mut [f64]) {
    let hw = shape.h * shape.w;
    for c in 0..shape.c {
        out[c] = input[c * hw..(c + 1) * hw].iter().sum::<f64>() / hw as f64;
    }
}

pub(crate) fn gap_backward(shape: Shape, gout: &[f64], gin: &mut [f64]) {
    let hw = shape.h * shape.w;
    for c in 0..shape.c {
        gin[c * hw..(c + 1) * hw].fill(gout[c] / hw as f64);
    }
}

/// `params` holds weights `[out][in]` followed by `out` biases.
pub(crate) fn dense_forward(n_in: usize, n_out: usize, params: &[f64], input: &[f64], out: &mut [f64]) {
    let (w, b) = params.split_at(n_in * n_out);
    for o in 0..n_out {
        out[o] = b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
    }
}

pub(crate) fn dense_backward(
    n_in: usize,
    n_out: usize,
    params: &[f64],
    input: &[f64],
    gout: &[f64],
    gparams: Option<&mut [f64]>,
    gin: &mut [f64],
) {
    let w = &params[..n_in * n_out];
    gin.fill(0.0);
    for o in 0..n_out {
        for (g, &wv) in gin.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
            *g += wv * gout[o];
        }
    }
    if let Some(gp) = gparams {
        let (gw, gb) = gp.split_at_mut(n_in * n_out);
        for o in 0..n_out {
            for (g, &x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                *g += gout[o] * x;
            }
            gb[o] += gout[o];
        }
    }
}
