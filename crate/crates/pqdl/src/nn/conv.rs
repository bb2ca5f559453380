//! Convolution lowered to matrix multiplication via im2col.
//!
//! Images are stored row-major as `(y, x, channel)` per example. SAME zero
//! padding: the output spatial size is `ceil(in / stride)` and the padding is
//! split evenly with the extra row/column at the bottom/right.

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy)]
pub struct ConvGeom {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    pub fn same_padding(
        in_h: usize,
        in_w: usize,
        in_c: usize,
        kernel: usize,
        stride: usize,
        out_c: usize,
    ) -> ConvGeom {
        let out_h = in_h.div_ceil(stride);
        let out_w = in_w.div_ceil(stride);
        let pad_h = ((out_h - 1) * stride + kernel).saturating_sub(in_h);
        let pad_w = ((out_w - 1) * stride + kernel).saturating_sub(in_w);
        ConvGeom {
            in_h,
            in_w,
            in_c,
            kernel,
            stride,
            out_h,
            out_w,
            out_c,
            pad_top: pad_h / 2,
            pad_left: pad_w / 2,
        }
    }

    pub fn patch_dim(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    pub fn out_positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Expands `input` (batch x in_h*in_w*in_c) into patch rows
    /// (batch*out_h*out_w x kernel*kernel*in_c); out-of-bounds pixels are 0.
    pub fn im2col(&self, input: &Matrix) -> Matrix {
        let batch = input.rows();
        let mut patches = Matrix::zeros(batch * self.out_positions(), self.patch_dim());
        for b in 0..batch {
            let img = input.row(b);
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let row_idx = (b * self.out_h + oy) * self.out_w + ox;
                    let patch = patches.row_mut(row_idx);
                    let mut col = 0;
                    for ky in 0..self.kernel {
                        let y = (oy * self.stride + ky) as isize - self.pad_top as isize;
                        for kx in 0..self.kernel {
                            let x = (ox * self.stride + kx) as isize - self.pad_left as isize;
                            if y >= 0 && (y as usize) < self.in_h && x >= 0 && (x as usize) < self.in_w
                            {
                                let base = ((y as usize) * self.in_w + x as usize) * self.in_c;
                                patch[col..col + self.in_c]
                                    .copy_from_slice(&img[base..base + self.in_c]);
                            }
                            col += self.in_c;
                        }
                    }
                }
            }
        }
        patches
    }

    /// Adjoint of [`ConvGeom::im2col`]: scatter-adds patch-row gradients back
    /// into image gradients (batch x in_h*in_w*in_c).
    pub fn col2im(&self, d_patches: &Matrix, batch: usize) -> Matrix {
        let mut d_input = Matrix::zeros(batch, self.in_h * self.in_w * self.in_c);
        for b in 0..batch {
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let row_idx = (b * self.out_h + oy) * self.out_w + ox;
                    let patch = d_patches.row(row_idx);
                    let img = d_input.row_mut(b);
                    let mut col = 0;
                    for ky in 0..self.kernel {
                        let y = (oy * self.stride + ky) as isize - self.pad_top as isize;
                        for kx in 0..self.kernel {
                            let x = (ox * self.stride + kx) as isize - self.pad_left as isize;
                            if y >= 0 && (y as usize) < self.in_h && x >= 0 && (x as usize) < self.in_w
                            {
                                let base = ((y as usize) * self.in_w + x as usize) * self.in_c;
                                for c in 0..self.in_c {
                                    img[base + c] += patch[col + c];
                                }
                            }
                            col += self.in_c;
                        }
                    }
                }
            }
        }
        d_input
    }

    /// Reorders conv output from patch-row layout (batch*out_h*out_w x out_c)
    /// to example-row layout (batch x out_h*out_w*out_c).
    pub fn rows_to_images(&self, z: &Matrix, batch: usize) -> Matrix {
        let mut out = Matrix::zeros(batch, self.out_positions() * self.out_c);
        for b in 0..batch {
            for pos in 0..self.out_positions() {
                let src = z.row(b * self.out_positions() + pos);
                let dst = out.row_mut(b);
                dst[pos * self.out_c..(pos + 1) * self.out_c].copy_from_slice(src);
            }
        }
        out
    }

    /// Inverse of [`ConvGeom::rows_to_images`].
    pub fn images_to_rows(&self, imgs: &Matrix) -> Matrix {
        let batch = imgs.rows();
        let mut out = Matrix::zeros(batch * self.out_positions(), self.out_c);
        for b in 0..batch {
            let src = imgs.row(b);
            for pos in 0..self.out_positions() {
                out.row_mut(b * self.out_positions() + pos)
                    .copy_from_slice(&src[pos * self.out_c..(pos + 1) * self.out_c]);
            }
        }
        out
    }
}
