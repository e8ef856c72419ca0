//! Raw numeric kernels shared by the convolution ops.

/// Strided matrix layout: (row stride, column stride).
#[derive(Clone, Copy)]
pub(crate) struct Layout(pub isize, pub isize);

impl Layout {
    pub fn row_major(cols: usize) -> Self {
        Layout(cols as isize, 1)
    }
    /// Transposed view of a row-major `rows x cols` buffer.
    pub fn transposed(cols: usize) -> Self {
        Layout(1, cols as isize)
    }
}

/// `c = alpha * a(m x k) * b(k x n) + beta * c`, with `c` row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    la: Layout,
    b: &[f64],
    lb: Layout,
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    assert!(a.len() >= m * k && b.len() >= k * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the asserts above bound every index the strides can reach for
    // the contiguous layouts produced by `Layout`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            la.0,
            la.1,
            b.as_ptr(),
            lb.0,
            lb.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Geom2d {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Geom2d {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }
    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

pub(crate) fn conv_out(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub(crate) fn im2col(x: &[f64], g: &Geom2d, col: &mut [f64]) {
    let cols = g.cols();
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for kh in 0..g.kernel {
            for kw in 0..g.kernel {
                let row = (c * g.kernel + kh) * g.kernel + kw;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oh in 0..g.out_h {
                    let ih = (oh * g.stride + kh) as isize - g.pad as isize;
                    let line = &mut dst[oh * g.out_w..(oh + 1) * g.out_w];
                    if ih < 0 || ih as usize >= g.height {
                        line.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[ih as usize * g.width..(ih as usize + 1) * g.width];
                    for (ow, v) in line.iter_mut().enumerate() {
                        let iw = (ow * g.stride + kw) as isize - g.pad as isize;
                        *v = if iw < 0 || iw as usize >= g.width {
                            0.0
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add of `im2col`'s output back onto the image.
pub(crate) fn col2im(col: &[f64], g: &Geom2d, x: &mut [f64]) {
    let cols = g.cols();
    for c in 0..g.channels {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for kh in 0..g.kernel {
            for kw in 0..g.kernel {
                let row = (c * g.kernel + kh) * g.kernel + kw;
                let src = &col[row * cols..(row + 1) * cols];
                for oh in 0..g.out_h {
                    let ih = (oh * g.stride + kh) as isize - g.pad as isize;
                    if ih < 0 || ih as usize >= g.height {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.width..(ih as usize + 1) * g.width];
                    for ow in 0..g.out_w {
                        let iw = (ow * g.stride + kw) as isize - g.pad as isize;
                        if iw >= 0 && (iw as usize) < g.width {
                            dst[iw as usize] += src[oh * g.out_w + ow];
                        }
                    }
                }
            }
        }
    }
}

/// Causal 1-d unfold: `col[(c, k), t] = x[c, t - dilation * (kernel - 1 - k)]`.
pub(crate) fn causal_im2col(
    x: &[f64],
    channels: usize,
    len: usize,
    kernel: usize,
    dilation: usize,
    col: &mut [f64],
) {
    for c in 0..channels {
        let src = &x[c * len..(c + 1) * len];
        for k in 0..kernel {
            let shift = dilation * (kernel - 1 - k);
            let row = c * kernel + k;
            let dst = &mut col[row * len..(row + 1) * len];
            let lead = shift.min(len);
            dst[..lead].iter_mut().for_each(|v| *v = 0.0);
            dst[lead..].copy_from_slice(&src[..len - lead]);
        }
    }
}

pub(crate) fn causal_col2im(
    col: &[f64],
    channels: usize,
    len: usize,
    kernel: usize,
    dilation: usize,
    x: &mut [f64],
) {
    for c in 0..channels {
        let dst = &mut x[c * len..(c + 1) * len];
        for k in 0..kernel {
            let shift = dilation * (kernel - 1 - k);
            let row = c * kernel + k;
            let src = &col[row * len..(row + 1) * len];
            let lead = shift.min(len);
            for (d, s) in dst[..len - lead].iter_mut().zip(&src[lead..]) {
                *d += s;
            }
        }
    }
}
