//! Raw tensor kernels behind the graph operators.
//!
//! Layouts are channel-major `[C, H, W]`. Convolutions are stride 1 with
//! zero padding `k / 2`, so an odd kernel preserves the spatial size.

use crate::Scalar;

/// Shape bookkeeping for a single-sample 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
}

impl ConvShape {
    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn col_rows(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Reference convolution by direct loops.
pub fn conv2d_direct<T: Scalar>(
    s: ConvShape,
    input: &[T],
    weight: &[T],
    bias: Option<&[T]>,
) -> Vec<T> {
    let (h, w, k, p) = (s.height as isize, s.width as isize, s.kernel, s.pad() as isize);
    let mut out = vec![T::zero(); s.c_out * s.pixels()];
    for co in 0..s.c_out {
        let b = bias.map_or(T::zero(), |b| b[co]);
        for y in 0..h {
            for x in 0..w {
                let mut acc = b;
                for ci in 0..s.c_in {
                    for ky in 0..k {
                        let sy = y + ky as isize - p;
                        if sy < 0 || sy >= h {
                            continue;
                        }
                        for kx in 0..k {
                            let sx = x + kx as isize - p;
                            if sx < 0 || sx >= w {
                                continue;
                            }
                            let wv = weight[((co * s.c_in + ci) * k + ky) * k + kx];
                            let iv = input[(ci * s.height + sy as usize) * s.width + sx as usize];
                            acc = acc + wv * iv;
                        }
                    }
                }
                out[(co * s.height + y as usize) * s.width + x as usize] = acc;
            }
        }
    }
    out
}

/// Unfolds `[C, H, W]` into a `[C·k·k, H·W]` patch matrix.
pub fn im2col<T: Scalar>(s: ConvShape, input: &[T]) -> Vec<T> {
    let (h, w, k, p) = (s.height, s.width, s.kernel, s.pad());
    let mut col = vec![T::zero(); s.col_rows() * s.pixels()];
    for ci in 0..s.c_in {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * h * w..(row + 1) * h * w];
                for y in 0..h {
                    let sy = y as isize + ky as isize - p as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let drow = &mut dst[y * w..(y + 1) * w];
                    // valid x range: 0 <= x + kx - p < w
                    let x_lo = p.saturating_sub(kx);
                    let x_hi = (w + p).saturating_sub(kx).min(w);
                    for x in x_lo..x_hi {
                        drow[x] = src[x + kx - p];
                    }
                }
            }
        }
    }
    col
}

/// Folds a patch matrix back, summing overlapping contributions.
pub fn col2im<T: Scalar>(s: ConvShape, col: &[T]) -> Vec<T> {
    let (h, w, k, p) = (s.height, s.width, s.kernel, s.pad());
    let mut out = vec![T::zero(); s.c_in * h * w];
    for ci in 0..s.c_in {
        let plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * h * w..(row + 1) * h * w];
                for y in 0..h {
                    let sy = y as isize + ky as isize - p as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let srow = &src[y * w..(y + 1) * w];
                    let x_lo = p.saturating_sub(kx);
                    let x_hi = (w + p).saturating_sub(kx).min(w);
                    for x in x_lo..x_hi {
                        let d = &mut dst[x + kx - p];
                        *d = *d + srow[x];
                    }
                }
            }
        }
    }
    out
}

/// Convolution through an explicit patch matrix and one GEMM.
///
/// Returns the output together with the patch matrix, which the backward
/// pass reuses.
pub fn conv2d_im2col<T: Scalar>(
    s: ConvShape,
    input: &[T],
    weight: &[T],
    bias: Option<&[T]>,
) -> (Vec<T>, Vec<T>) {
    let col = im2col(s, input);
    let n = s.pixels();
    let mut out = vec![T::zero(); s.c_out * n];
    if let Some(b) = bias {
        for (co, chunk) in out.chunks_mut(n).enumerate() {
            chunk.fill(b[co]);
        }
    }
    let beta = if bias.is_some() { T::one() } else { T::zero() };
    T::gemm(s.c_out, s.col_rows(), n, weight, false, &col, false, beta, &mut out);
    (out, col)
}

/// `out[c, r·h+dy, r·w+dx] = in[c·r² + r·dy + dx, h, w]`.
pub fn pixel_shuffle<T: Scalar>(c_in: usize, h: usize, w: usize, r: usize, input: &[T]) -> Vec<T> {
    let c_out = c_in / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![T::zero(); input.len()];
    for c in 0..c_out {
        for dy in 0..r {
            for dx in 0..r {
                let ci = c * r * r + r * dy + dx;
                for y in 0..h {
                    for x in 0..w {
                        out[(c * oh + r * y + dy) * ow + r * x + dx] = input[(ci * h + y) * w + x];
                    }
                }
            }
        }
    }
    out
}

/// Inverse of [`pixel_shuffle`]: `[C, r·H, r·W] -> [C·r², H, W]`.
pub fn space_to_depth<T: Scalar>(c_in: usize, h: usize, w: usize, r: usize, input: &[T]) -> Vec<T> {
    let (oh, ow) = (h / r, w / r);
    let mut out = vec![T::zero(); input.len()];
    for c in 0..c_in {
        for dy in 0..r {
            for dx in 0..r {
                let co = c * r * r + r * dy + dx;
                for y in 0..oh {
                    for x in 0..ow {
                        out[(co * oh + y) * ow + x] = input[(c * h + r * y + dy) * w + r * x + dx];
                    }
                }
            }
        }
    }
    out
}
