//! Numeric kernels for the built-in networks. Activations are laid out as
//! `[channel][depth][height][width]`; 1D and 2D inputs use unit leading
//! spatial extents.

pub(crate) type Dims = [usize; 3];

pub(crate) fn volume(d: Dims) -> usize {
    d[0] * d[1] * d[2]
}

/// Valid output range along one axis for kernel offset `k` with padding `p`:
/// output `o` reads input `o + k − p`.
#[inline]
fn valid(n: usize, k: usize, p: usize) -> (usize, usize) {
    let start = p.saturating_sub(k);
    let end = (n + p).saturating_sub(k).min(n);
    (start, end.max(start))
}

pub(crate) struct ConvGeom {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: Dims,
    pub dims: Dims,
}

impl ConvGeom {
    fn pad(&self) -> Dims {
        [self.kernel[0] / 2, self.kernel[1] / 2, self.kernel[2] / 2]
    }

    /// Visits every (output row, input row, weight index) triple that a
    /// stride-1 "same" convolution touches; `x_out`/`x_in` are the valid
    /// column ranges of the pair.
    #[inline]
    fn for_each_row(
        &self,
        mut f: impl FnMut(usize, usize, usize, std::ops::Range<usize>, std::ops::Range<usize>),
    ) {
        let [d, h, w] = self.dims;
        let [kd, kh, kw] = self.kernel;
        let p = self.pad();
        let vol = volume(self.dims);
        for o in 0..self.out_ch {
            for i in 0..self.in_ch {
                for dz in 0..kd {
                    let (z0, z1) = valid(d, dz, p[0]);
                    for dy in 0..kh {
                        let (y0, y1) = valid(h, dy, p[1]);
                        for dx in 0..kw {
                            let (x0, x1) = valid(w, dx, p[2]);
                            let widx = (((o * self.in_ch + i) * kd + dz) * kh + dy) * kw + dx;
                            for z in z0..z1 {
                                let zi = z + dz - p[0];
                                for y in y0..y1 {
                                    let yi = y + dy - p[1];
                                    let out_row = o * vol + (z * h + y) * w;
                                    let in_row = i * vol + (zi * h + yi) * w;
                                    f(
                                        widx,
                                        out_row,
                                        in_row,
                                        x0..x1,
                                        (x0 + dx - p[2])..(x1 + dx - p[2]),
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
        let vol = volume(self.dims);
        let mut out = vec![0.0; self.out_ch * vol];
        for (o, plane) in out.chunks_mut(vol).enumerate() {
            plane.iter_mut().for_each(|v| *v = bias[o]);
        }
        self.for_each_row(|widx, orow, irow, xo, xi| {
            let wv = weights[widx];
            let dst = &mut out[orow + xo.start..orow + xo.end];
            let src = &input[irow + xi.start..irow + xi.end];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wv * s;
            }
        });
        out
    }

    pub fn backward_input(&self, dout: &[f64], weights: &[f64]) -> Vec<f64> {
        let mut din = vec![0.0; self.in_ch * volume(self.dims)];
        self.for_each_row(|widx, orow, irow, xo, xi| {
            let wv = weights[widx];
            let src = &dout[orow + xo.start..orow + xo.end];
            let dst = &mut din[irow + xi.start..irow + xi.end];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wv * s;
            }
        });
        din
    }

    /// Accumulates weight and bias gradients.
    pub fn backward_params(&self, input: &[f64], dout: &[f64], dw: &mut [f64], db: &mut [f64]) {
        let vol = volume(self.dims);
        for (o, plane) in dout.chunks(vol).enumerate() {
            db[o] += plane.iter().sum::<f64>();
        }
        self.for_each_row(|widx, orow, irow, xo, xi| {
            let a = &dout[orow + xo.start..orow + xo.end];
            let b = &input[irow + xi.start..irow + xi.end];
            dw[widx] += a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        });
    }
}

/// Non-overlapping max pooling with window `factor` per axis. Returns the
/// pooled values and, per output, the flat input index of the (first) max.
pub(crate) fn max_pool(input: &[f64], channels: usize, dims: Dims, factor: Dims) -> (Vec<f64>, Vec<usize>) {
    let out_dims = [dims[0] / factor[0], dims[1] / factor[1], dims[2] / factor[2]];
    let (vin, vout) = (volume(dims), volume(out_dims));
    let mut out = Vec::with_capacity(channels * vout);
    let mut arg = Vec::with_capacity(channels * vout);
    for c in 0..channels {
        for z in 0..out_dims[0] {
            for y in 0..out_dims[1] {
                for x in 0..out_dims[2] {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for dz in 0..factor[0] {
                        for dy in 0..factor[1] {
                            for dx in 0..factor[2] {
                                let (zi, yi, xi) = (z * factor[0] + dz, y * factor[1] + dy, x * factor[2] + dx);
                                let idx = c * vin + (zi * dims[1] + yi) * dims[2] + xi;
                                if input[idx] > best {
                                    best = input[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_idx);
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn max_pool_backward(dout: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
    let mut din = vec![0.0; input_len];
    for (&g, &i) in dout.iter().zip(argmax) {
        din[i] += g;
    }
    din
}

pub(crate) fn dense_forward(input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = input.len();
    bias.iter()
        .zip(weights.chunks(n))
        .map(|(b, row)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
        .collect()
}

pub(crate) fn dense_backward_input(dout: &[f64], weights: &[f64], inputs: usize) -> Vec<f64> {
    let mut din = vec![0.0; inputs];
    for (g, row) in dout.iter().zip(weights.chunks(inputs)) {
        if *g == 0.0 {
            continue;
        }
        for (d, w) in din.iter_mut().zip(row) {
            *d += g * w;
        }
    }
    din
}

pub(crate) fn dense_backward_params(input: &[f64], dout: &[f64], dw: &mut [f64], db: &mut [f64]) {
    let n = input.len();
    for ((g, row), b) in dout.iter().zip(dw.chunks_mut(n)).zip(db.iter_mut()) {
        *b += g;
        for (d, x) in row.iter_mut().zip(input) {
            *d += g * x;
        }
    }
}
