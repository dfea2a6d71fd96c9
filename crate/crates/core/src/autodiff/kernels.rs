//! Row-major numeric loops shared by the forward and backward passes.

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// `out[m×n] = a[m×k] · b[k×n]`
pub(crate) fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
}

/// `acc[m×k] += g[m×n] · b[k×n]ᵀ`
pub(crate) fn matmul_nt_acc(g: &[f64], b: &[f64], acc: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let dot: f64 = grow.iter().zip(&b[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum();
            acc[i * k + p] += dot;
        }
    }
}

/// `acc[k×n] += a[m×k]ᵀ · g[m×n]`
pub(crate) fn matmul_tn_acc(a: &[f64], g: &[f64], acc: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (s, &gv) in acc[p * n..(p + 1) * n].iter_mut().zip(grow) {
                *s += av * gv;
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvDims {
    pub n: usize,
    pub c: usize,
    pub i: usize,
    pub k: usize,
    pub o: usize,
}

impl ConvDims {
    /// Input position feeding output position `p` through kernel tap `j`.
    fn source(&self, p: usize, j: usize, len: usize) -> Option<usize> {
        let q = (p + j).checked_sub(self.k / 2)?;
        (q < len).then_some(q)
    }
}

pub(crate) fn conv1d_forward(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    lens: &[usize],
    d: ConvDims,
) -> Vec<f64> {
    let mut out = vec![0.0; d.n * d.c * d.o];
    for s in 0..d.n {
        for p in 0..lens[s] {
            let at = (s * d.c + p) * d.o;
            let row = &mut out[at..at + d.o];
            row.copy_from_slice(&b[..d.o]);
            for j in 0..d.k {
                let Some(q) = d.source(p, j, lens[s]) else {
                    continue;
                };
                let xrow = &x[(s * d.c + q) * d.i..(s * d.c + q + 1) * d.i];
                for (ch, &xv) in xrow.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let wrow = &w[(j * d.i + ch) * d.o..(j * d.i + ch + 1) * d.o];
                    for (o, &wv) in row.iter_mut().zip(wrow) {
                        *o += xv * wv;
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv1d_backward_input(
    g: &[f64],
    w: &[f64],
    lens: &[usize],
    d: ConvDims,
    acc: &mut [f64],
) {
    for s in 0..d.n {
        for p in 0..lens[s] {
            let grow = &g[(s * d.c + p) * d.o..(s * d.c + p + 1) * d.o];
            for j in 0..d.k {
                let Some(q) = d.source(p, j, lens[s]) else {
                    continue;
                };
                let base = (s * d.c + q) * d.i;
                for ch in 0..d.i {
                    let wrow = &w[(j * d.i + ch) * d.o..(j * d.i + ch + 1) * d.o];
                    acc[base + ch] += wrow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }
}

pub(crate) fn conv1d_backward_weight(
    g: &[f64],
    x: &[f64],
    lens: &[usize],
    d: ConvDims,
    acc: &mut [f64],
) {
    for s in 0..d.n {
        for p in 0..lens[s] {
            let grow = &g[(s * d.c + p) * d.o..(s * d.c + p + 1) * d.o];
            for j in 0..d.k {
                let Some(q) = d.source(p, j, lens[s]) else {
                    continue;
                };
                let xrow = &x[(s * d.c + q) * d.i..(s * d.c + q + 1) * d.i];
                for (ch, &xv) in xrow.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let arow = &mut acc[(j * d.i + ch) * d.o..(j * d.i + ch + 1) * d.o];
                    for (a, &gv) in arow.iter_mut().zip(grow) {
                        *a += xv * gv;
                    }
                }
            }
        }
    }
}
