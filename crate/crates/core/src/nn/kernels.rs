//! Batched f32 kernels. Activations are `[batch, ...]` row-major.

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvDims {
    /// Input coordinate for output `oy` and kernel offset `ky`, if inside.
    #[inline]
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }
}

pub(crate) fn dense_forward(
    x: &[f32],
    w: &[f32],
    b: &[f32],
    batch: usize,
    n_in: usize,
    n_out: usize,
) -> Vec<f32> {
    let mut out = vec![0.0f32; batch * n_out];
    for (xb, ob) in x
        .chunks_exact(n_in)
        .zip(out.chunks_exact_mut(n_out))
        .take(batch)
    {
        for ((o, wr), &bias) in ob.iter_mut().zip(w.chunks_exact(n_in)).zip(b) {
            *o = bias + dot(wr, xb);
        }
    }
    out
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    // 8 independent accumulators let the compiler vectorise without
    // changing the result between runs
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        for l in 0..8 {
            acc[l] += a[c * 8 + l] * b[c * 8 + l];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[inline]
fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Returns `(dW, db, dx)`; `dx` is skipped when `need_dx` is false.
pub(crate) fn dense_backward(
    x: &[f32],
    w: &[f32],
    grad_out: &[f32],
    batch: usize,
    n_in: usize,
    n_out: usize,
    need_dx: bool,
) -> (Vec<f32>, Vec<f32>, Option<Vec<f32>>) {
    let mut dw = vec![0.0f32; n_out * n_in];
    let mut db = vec![0.0f32; n_out];
    let mut dx = need_dx.then(|| vec![0.0f32; batch * n_in]);
    for bi in 0..batch {
        let xb = &x[bi * n_in..(bi + 1) * n_in];
        let gb = &grad_out[bi * n_out..(bi + 1) * n_out];
        for (o, &g) in gb.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            axpy(g, xb, &mut dw[o * n_in..(o + 1) * n_in]);
            if let Some(dx) = dx.as_mut() {
                axpy(
                    g,
                    &w[o * n_in..(o + 1) * n_in],
                    &mut dx[bi * n_in..(bi + 1) * n_in],
                );
            }
        }
    }
    (dw, db, dx)
}

pub(crate) fn conv_forward(x: &[f32], w: &[f32], b: &[f32], d: ConvDims) -> Vec<f32> {
    let k = d.kernel;
    let mut out = vec![0.0f32; d.batch * d.out_c * d.out_h * d.out_w];
    for bi in 0..d.batch {
        for o in 0..d.out_c {
            let plane = &mut out[((bi * d.out_c + o) * d.out_h) * d.out_w..][..d.out_h * d.out_w];
            plane.iter_mut().for_each(|v| *v = b[o]);
            for c in 0..d.in_c {
                let src = &x[((bi * d.in_c + c) * d.in_h) * d.in_w..][..d.in_h * d.in_w];
                let kern = &w[((o * d.in_c + c) * k) * k..][..k * k];
                for oy in 0..d.out_h {
                    for ky in 0..k {
                        let Some(iy) = d.src(oy, ky, d.in_h) else {
                            continue;
                        };
                        for ox in 0..d.out_w {
                            let mut acc = 0.0f32;
                            for kx in 0..k {
                                if let Some(ix) = d.src(ox, kx, d.in_w) {
                                    acc += kern[ky * k + kx] * src[iy * d.in_w + ix];
                                }
                            }
                            plane[oy * d.out_w + ox] += acc;
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv_backward(
    x: &[f32],
    w: &[f32],
    grad_out: &[f32],
    d: ConvDims,
    need_dx: bool,
) -> (Vec<f32>, Vec<f32>, Option<Vec<f32>>) {
    let k = d.kernel;
    let mut dw = vec![0.0f32; w.len()];
    let mut db = vec![0.0f32; d.out_c];
    let mut dx = need_dx.then(|| vec![0.0f32; x.len()]);
    for bi in 0..d.batch {
        for o in 0..d.out_c {
            let g = &grad_out[((bi * d.out_c + o) * d.out_h) * d.out_w..][..d.out_h * d.out_w];
            db[o] += g.iter().sum::<f32>();
            for c in 0..d.in_c {
                let src_off = ((bi * d.in_c + c) * d.in_h) * d.in_w;
                let w_off = ((o * d.in_c + c) * k) * k;
                for oy in 0..d.out_h {
                    for ox in 0..d.out_w {
                        let gv = g[oy * d.out_w + ox];
                        if gv == 0.0 {
                            continue;
                        }
                        for ky in 0..k {
                            let Some(iy) = d.src(oy, ky, d.in_h) else {
                                continue;
                            };
                            for kx in 0..k {
                                let Some(ix) = d.src(ox, kx, d.in_w) else {
                                    continue;
                                };
                                let xi = src_off + iy * d.in_w + ix;
                                dw[w_off + ky * k + kx] += gv * x[xi];
                                if let Some(dx) = dx.as_mut() {
                                    dx[xi] += gv * w[w_off + ky * k + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dw, db, dx)
}

/// Non-overlapping max pooling over `[batch·C, H, W]` planes. Returns the
/// pooled values and, per output, the flat input index of the maximum
/// (first one on ties).
pub(crate) fn maxpool_forward(
    x: &[f32],
    planes: usize,
    h: usize,
    w: usize,
    size: usize,
) -> (Vec<f32>, Vec<u32>) {
    let (oh, ow) = (h / size, w / size);
    let mut out = Vec::with_capacity(planes * oh * ow);
    let mut arg = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * size * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = base + (oy * size + dy) * w + ox * size + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward(grad_out: &[f32], argmax: &[u32], input_len: usize) -> Vec<f32> {
    let mut dx = vec![0.0f32; input_len];
    for (&g, &i) in grad_out.iter().zip(argmax) {
        dx[i as usize] += g;
    }
    dx
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
pub(crate) fn softmax_cross_entropy(
    logits: &[f32],
    labels: &[usize],
    classes: usize,
) -> (f32, Vec<f32>) {
    let batch = labels.len();
    let mut grad = vec![0.0f32; logits.len()];
    let mut loss = 0.0f64;
    for (bi, &y) in labels.iter().enumerate() {
        let z = &logits[bi * classes..(bi + 1) * classes];
        let m = z.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f32> = z.iter().map(|&v| (v - m).exp()).collect();
        let sum: f32 = exps.iter().sum();
        loss += (sum.ln() - (z[y] - m)) as f64;
        let g = &mut grad[bi * classes..(bi + 1) * classes];
        for (c, gc) in g.iter_mut().enumerate() {
            let prob = exps[c] / sum;
            *gc = (prob - if c == y { 1.0 } else { 0.0 }) / batch as f32;
        }
    }
    ((loss / batch as f64) as f32, grad)
}
